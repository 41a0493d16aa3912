//! Named initial-body constructors: ball:r, ellipsoid:a,b[,c],
//! perturbed_ball:r,amplitude,degree,seed and translate:<inner>,vx,vy[,vz].

use std::sync::Arc;

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

use crate::body::{self, SupportField};
use crate::error::{Error, Result};
use crate::grid::Grid;

fn unconstructible(spec: &str, reason: impl Into<String>) -> Error {
    Error::Unconstructible {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

fn parse_floats(spec: &str, text: &str, want: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| unconstructible(spec, format!("bad number: {e}")))?;
    if vals.len() != want {
        return Err(unconstructible(
            spec,
            format!("expected {want} parameters, got {}", vals.len()),
        ));
    }
    Ok(vals)
}

/// Random even harmonic perturbation of a ball; the amplitude halves until
/// the convexity guard accepts the body, down to a floor of 1e-6 r.
fn perturbed_ball(
    spec: &str,
    grid: &Arc<Grid>,
    r: f64,
    amplitude: f64,
    degree: usize,
    seed: u64,
) -> Result<SupportField> {
    if degree % 2 != 0 || degree == 0 {
        return Err(unconstructible(
            spec,
            "perturbation degree must be even and positive (odd harmonics break origin symmetry)",
        ));
    }
    if degree > grid.design_degree() {
        return Err(unconstructible(
            spec,
            format!("degree {degree} exceeds grid design degree {}", grid.design_degree()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bump = vec![0.0; grid.len()];
    let orders: Vec<i64> = match grid.dim {
        1 => vec![degree as i64],
        _ => (-(degree as i64)..=degree as i64).collect(),
    };
    for m in orders {
        let c: f64 = rng.gen_range(-1.0..1.0);
        let harm = grid.harmonic(degree, m);
        for (b, y) in bump.iter_mut().zip(&harm) {
            *b += c * y;
        }
    }
    let sup = bump.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sup == 0.0 {
        return Err(unconstructible(spec, "degenerate random perturbation"));
    }
    let mut amp = amplitude;
    while amp >= 1e-6 * r {
        let vals: Vec<f64> = bump.iter().map(|b| r + amp * b / sup).collect();
        if let Ok(h) = SupportField::new(grid.clone(), vals) {
            if body::curvature(&h).is_ok() {
                return Ok(h);
            }
        }
        amp *= 0.5;
    }
    Err(unconstructible(spec, "amplitude floor reached without passing the convexity guard"))
}

pub fn make_initial(spec: &str, grid: &Arc<Grid>) -> Result<SupportField> {
    let (name, args) = spec
        .split_once(':')
        .ok_or_else(|| unconstructible(spec, "expected name:parameters"))?;
    match name.trim() {
        "ball" => {
            let v = parse_floats(spec, args, 1)?;
            if !(v[0] > 0.0) {
                return Err(unconstructible(spec, "radius must be positive"));
            }
            SupportField::constant(grid.clone(), v[0])
        }
        "ellipsoid" => {
            let naxes = grid.dim + 1;
            let ax = parse_floats(spec, args, naxes)?;
            if ax.iter().any(|a| *a <= 0.0) {
                return Err(unconstructible(spec, "semi-axes must be positive"));
            }
            let vals = grid
                .nodes()
                .iter()
                .map(|u| {
                    (0..naxes)
                        .map(|i| (ax[i] * u[i]) * (ax[i] * u[i]))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            SupportField::new(grid.clone(), vals)
        }
        "perturbed_ball" => {
            let v = parse_floats(spec, args, 4)?;
            if !(v[0] > 0.0 && v[1] >= 0.0) {
                return Err(unconstructible(spec, "need r > 0 and amplitude >= 0"));
            }
            if v[2].fract() != 0.0 || v[3].fract() != 0.0 || v[2] < 0.0 || v[3] < 0.0 {
                return Err(unconstructible(spec, "degree and seed must be non-negative integers"));
            }
            perturbed_ball(spec, grid, v[0], v[1], v[2] as usize, v[3] as u64)
        }
        "translate" => {
            // The inner spec contains commas; the trailing dim+1 fields are
            // the translation vector.
            let ncomp = grid.dim + 1;
            let parts: Vec<&str> = args.rsplitn(ncomp + 1, ',').collect();
            if parts.len() != ncomp + 1 {
                return Err(unconstructible(spec, "expected translate:<inner>,v..."));
            }
            let inner = make_initial(parts[ncomp], grid)?;
            let mut v = [0.0; 3];
            for i in 0..ncomp {
                v[i] = parts[ncomp - 1 - i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| unconstructible(spec, format!("bad vector component: {e}")))?;
            }
            let h = inner.translate(v)?;
            body::curvature(&h)?; // origin must stay interior and body convex
            Ok(h)
        }
        other => Err(unconstructible(spec, format!("unknown constructor '{other}'"))),
    }
}
