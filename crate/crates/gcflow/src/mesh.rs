//! Wavefront OBJ export of the embedded boundary surface on the structured
//! latitude-longitude grid: quad-split triangles between rings, triangle-fan
//! caps at the (node-free) poles, seam closed in longitude. Vertex count is
//! exactly the node count.

use std::io::Write as _;
use std::path::Path;

use crate::body::{self, SupportField};
use crate::error::{Error, Result};

/// Triangle indices (into the grid node order) covering the closed surface.
pub fn triangles(nlat: usize, nlon: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(2 * nlat * nlon);
    let id = |i: usize, j: usize| i * nlon + j % nlon;
    // North cap: fan over the first ring.
    for j in 1..nlon - 1 {
        tris.push([id(0, 0), id(0, j), id(0, j + 1)]);
    }
    for i in 0..nlat - 1 {
        for j in 0..nlon {
            tris.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
            tris.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    // South cap.
    for j in 1..nlon - 1 {
        tris.push([id(nlat - 1, 0), id(nlat - 1, j + 1), id(nlat - 1, j)]);
    }
    tris
}

/// Signed volume of the triangulated embedded surface (divergence theorem);
/// an oracle for the support-function volume, independent of curvature.
pub fn mesh_volume(points: &[[f64; 3]], tris: &[[usize; 3]]) -> f64 {
    let mut six_v = 0.0;
    for t in tris {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        six_v += a[0] * (b[1] * c[2] - b[2] * c[1])
            + a[1] * (b[2] * c[0] - b[0] * c[2])
            + a[2] * (b[0] * c[1] - b[1] * c[0]);
    }
    six_v / 6.0
}

pub fn export_mesh(h: &SupportField, path: &Path) -> Result<()> {
    if h.grid.dim != 2 {
        return Err(Error::MeshDimension);
    }
    let nlat = h.grid.resolution;
    let nlon = 2 * nlat;
    let pts = body::embed(h)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# closed convex surface, {} vertices", pts.len())?;
    for p in &pts {
        writeln!(out, "v {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    for t in triangles(nlat, nlon) {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::sync::Arc;

    #[test]
    fn obj_unit_ball_vertices() {
        let g = Arc::new(Grid::build(2, 32).unwrap());
        let h = SupportField::constant(g.clone(), 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ball.obj");
        export_mesh(&h, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut nv = 0;
        for line in text.lines().filter(|l| l.starts_with("v ")) {
            let xyz: Vec<f64> = line[2..]
                .split_whitespace()
                .map(|s| s.parse().unwrap())
                .collect();
            let r = (xyz[0] * xyz[0] + xyz[1] * xyz[1] + xyz[2] * xyz[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-10);
            nv += 1;
        }
        assert_eq!(nv, 32 * 64);
        assert!(text.lines().filter(|l| l.starts_with("f ")).count() > 0);
    }

    #[test]
    fn obj_ellipsoid_vertices_on_surface() {
        let g = Arc::new(Grid::build(2, 32).unwrap());
        let (a, b, c) = (1.4, 1.0, 0.8);
        let vals: Vec<f64> = g
            .nodes()
            .iter()
            .map(|u| (a * a * u[0] * u[0] + b * b * u[1] * u[1] + c * c * u[2] * u[2]).sqrt())
            .collect();
        let h = SupportField::new(g.clone(), vals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.obj");
        export_mesh(&h, &path).unwrap();
        for line in std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("v "))
        {
            let xyz: Vec<f64> = line[2..]
                .split_whitespace()
                .map(|s| s.parse().unwrap())
                .collect();
            let f = (xyz[0] / a).powi(2) + (xyz[1] / b).powi(2) + (xyz[2] / c).powi(2);
            assert!((f - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn mesh_rejects_circle_grid() {
        let g = Arc::new(Grid::build(1, 64).unwrap());
        let h = SupportField::constant(g.clone(), 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_mesh(&h, &dir.path().join("c.obj")),
            Err(Error::MeshDimension)
        ));
    }

    #[test]
    fn triangulation_closes_the_surface() {
        // Each undirected edge must be shared by exactly two triangles.
        let (nlat, nlon) = (8, 16);
        let tris = triangles(nlat, nlon);
        let mut edges = std::collections::HashMap::new();
        for t in &tris {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (e, count) in &edges {
            assert_eq!(*count, 2, "edge {e:?} shared by {count} triangles");
        }
        // Euler characteristic of the sphere: V - E + F = 2.
        let v = (nlat * nlon) as i64;
        assert_eq!(v - edges.len() as i64 + tris.len() as i64, 2);
    }

    #[test]
    fn divergence_theorem_volume_oracle() {
        // The faceted mesh under-estimates a convex volume at O(spacing^2),
        // so the 1e-4 match needs a fine grid.
        let res = 256;
        let g = Arc::new(Grid::build(2, res).unwrap());
        let (a, b, c) = (1.4, 1.0, 0.8);
        let vals: Vec<f64> = g
            .nodes()
            .iter()
            .map(|u| (a * a * u[0] * u[0] + b * b * u[1] * u[1] + c * c * u[2] * u[2]).sqrt())
            .collect();
        let h = SupportField::new(g.clone(), vals).unwrap();
        let pts = body::embed(&h).unwrap();
        let vm = mesh_volume(&pts, &triangles(res, 2 * res));
        let vs = body::volume(&h).unwrap();
        assert!((vm - vs).abs() < 1e-4 * vs, "{vm} vs {vs}");
    }
}
