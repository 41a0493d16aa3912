//! Support-function machinery for expanding Gauss curvature flows on convex
//! bodies and the associated Minkowski-type inverse problem.

pub mod body;
pub mod config;
pub mod diag;
pub mod error;
pub mod flow;
pub mod grid;
pub mod init;
pub mod mesh;
pub mod phi;
pub mod run;
pub mod sht;
pub mod solver;

pub use body::SupportField;
pub use error::{Error, Result};
pub use grid::Grid;
