//! Convex-body geometry from the support function: curvature function,
//! volume, boundary embedding, polar body, the duality pairing and
//! L_p-barycenter recentering.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sht::FieldJet;

/// Support function h > 0 sampled on a grid; the origin is interior and the
/// body is convex (radii-of-curvature matrix positive definite).
#[derive(Clone)]
pub struct SupportField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl SupportField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<SupportField> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(k));
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveSupport { node: k, value: v });
            }
        }
        Ok(SupportField { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, r: f64) -> Result<SupportField> {
        SupportField::new(grid.clone(), vec![r; grid.len()])
    }

    pub fn scale(&self, lambda: f64) -> Result<SupportField> {
        SupportField::new(
            self.grid.clone(),
            self.values.iter().map(|h| lambda * h).collect(),
        )
    }

    /// Support function of the translate K + v.
    pub fn translate(&self, v: [f64; 3]) -> Result<SupportField> {
        let vals = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(u, h)| h + v[0] * u[0] + v[1] * u[1] + v[2] * u[2])
            .collect();
        SupportField::new(self.grid.clone(), vals)
    }

    /// Max deviation from origin symmetry, max_u |h(u) - h(-u)|.
    pub fn even_defect(&self) -> f64 {
        (0..self.values.len())
            .map(|k| (self.values[k] - self.values[self.grid.antipode_index(k)]).abs())
            .fold(0.0, f64::max)
    }

    /// Even part (h(u) + h(-u))/2; exact because the antipodal map is a grid
    /// permutation.
    pub fn symmetrize(&self) -> Result<SupportField> {
        let vals = (0..self.values.len())
            .map(|k| 0.5 * (self.values[k] + self.values[self.grid.antipode_index(k)]))
            .collect();
        SupportField::new(self.grid.clone(), vals)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Curvature data of a support field. `r_matrix` holds the radii-of-curvature
/// matrix per node in the orthonormal chart frame as [A, B, C] (for n = 1 only
/// slot 0 is used); `principal_radii` are its eigenvalues (the reciprocals of
/// the principal curvatures), with only the first n slots meaningful.
pub struct CurvatureData {
    pub r_matrix: Vec<[f64; 3]>,
    pub sn: Vec<f64>,
    pub gauss: Vec<f64>,
    pub principal_radii: Vec<[f64; 2]>,
}

impl CurvatureData {
    /// trace(𝔯⁻¹ ḡ)-like curvature bound max_i κ_i summed, used by step-size
    /// control: sum of reciprocals of the principal radii.
    pub fn curvature_trace(&self, dim: usize, k: usize) -> f64 {
        let pr = &self.principal_radii[k];
        match dim {
            1 => 1.0 / pr[0],
            _ => 1.0 / pr[0] + 1.0 / pr[1],
        }
    }
}

/// Curvature from an already-computed chart jet of h. Shared by the flow
/// right-hand side so each evaluation does a single spectral transform.
pub fn curvature_from_jet(grid: &Grid, values: &[f64], jet: &FieldJet) -> Result<CurvatureData> {
    let hess = grid.covariant_hessian_from_jet(jet)?;
    let npts = values.len();
    let mut r_matrix = vec![[0.0; 3]; npts];
    let mut sn = vec![0.0; npts];
    let mut principal = vec![[0.0; 2]; npts];
    match grid.dim {
        1 => {
            for k in 0..npts {
                let r = hess[k][0] + values[k];
                r_matrix[k][0] = r;
                sn[k] = r;
                principal[k] = [r, r];
                if !(r.is_finite() && r > 1e-8 * r.abs().max(values[k])) {
                    return Err(Error::ConvexityLoss {
                        node: k,
                        eigenvalue: r,
                        trace: r,
                    });
                }
            }
        }
        _ => {
            let (st, ct, _, _) = grid.trig();
            for k in 0..npts {
                let s = st[k];
                let cot = ct[k] / s;
                // Orthonormal-frame radii-of-curvature matrix.
                let a = jet.ftt[k] + values[k];
                let b = (jet.ftp[k] - cot * jet.fp[k]) / s;
                let c = jet.fpp[k] / (s * s) + cot * jet.ft[k] + values[k];
                let mean = 0.5 * (a + c);
                let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                let (lmin, lmax) = (mean - disc, mean + disc);
                let trace = a + c;
                if !(lmin.is_finite() && lmin > 1e-8 * trace) {
                    return Err(Error::ConvexityLoss {
                        node: k,
                        eigenvalue: lmin,
                        trace,
                    });
                }
                r_matrix[k] = [a, b, c];
                sn[k] = a * c - b * b;
                principal[k] = [lmin, lmax];
            }
        }
    }
    let gauss = sn.iter().map(|s| 1.0 / s).collect();
    Ok(CurvatureData {
        r_matrix,
        sn,
        gauss,
        principal_radii: principal,
    })
}

pub fn curvature(h: &SupportField) -> Result<CurvatureData> {
    let jet = h.grid.jet(&h.values)?;
    curvature_from_jet(&h.grid, &h.values, &jet)
}

/// Volume of the unit ball B in R^{n+1}.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI / 3.0,
    }
}

/// V(K) = (1/(n+1)) \int h S_n dsigma.
pub fn volume(h: &SupportField) -> Result<f64> {
    let cur = curvature(h)?;
    volume_from_curvature(h, &cur)
}

pub fn volume_from_curvature(h: &SupportField, cur: &CurvatureData) -> Result<f64> {
    let integrand: Vec<f64> = h.values.iter().zip(&cur.sn).map(|(hi, si)| hi * si).collect();
    Ok(h.grid.integrate(&integrand)? / (h.grid.dim + 1) as f64)
}

/// Rescale so volume equals the unit-ball volume.
pub fn normalize_to_unit_volume(h: &SupportField) -> Result<SupportField> {
    let v = volume(h)?;
    let lambda = (unit_ball_volume(h.grid.dim) / v).powf(1.0 / (h.grid.dim + 1) as f64);
    h.scale(lambda)
}

/// Boundary embedding x(u) = h(u) u + tangential gradient of h; the inverse
/// Gauss map. Satisfies u . x(u) = h(u).
pub fn embed(h: &SupportField) -> Result<Vec<[f64; 3]>> {
    let jet = h.grid.jet(&h.values)?;
    embed_from_jet(&h.grid, &h.values, &jet)
}

pub fn embed_from_jet(grid: &Grid, values: &[f64], jet: &FieldJet) -> Result<Vec<[f64; 3]>> {
    let nodes = grid.nodes();
    let mut out = vec![[0.0; 3]; values.len()];
    match grid.dim {
        1 => {
            for k in 0..values.len() {
                let u = nodes[k];
                let t = [-u[1], u[0], 0.0];
                out[k] = [
                    values[k] * u[0] + jet.ft[k] * t[0],
                    values[k] * u[1] + jet.ft[k] * t[1],
                    0.0,
                ];
            }
        }
        _ => {
            let (st, ct, sp, cp) = grid.trig();
            for k in 0..values.len() {
                let u = nodes[k];
                let et = [ct[k] * cp[k], ct[k] * sp[k], -st[k]];
                let ep = [-sp[k], cp[k], 0.0];
                let gt = jet.ft[k];
                let gp = jet.fp[k] / st[k];
                for i in 0..3 {
                    out[k][i] = values[k] * u[i] + gt * et[i] + gp * ep[i];
                }
            }
        }
    }
    Ok(out)
}

/// Support function h* of the polar body, on the same grid.
#[derive(Clone)]
pub struct PolarField {
    pub values: Vec<f64>,
}

impl PolarField {
    pub fn to_support(&self, grid: Arc<Grid>) -> Result<SupportField> {
        SupportField::new(grid, self.values.clone())
    }
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Polar body support function. The boundary of K* is the radial image
/// v -> v/h(v), so h*(u) = max_v (u . v)/h(v). The discrete node maximum is
/// refined by a compass search over v on the sphere, evaluating h off-grid
/// from its spectral coefficients; the refinement keeps h* smooth enough for
/// spectral differentiation of the polar body.
pub fn polar(h: &SupportField) -> Result<PolarField> {
    let grid = &h.grid;
    let coeffs = grid.coeffs(&h.values)?;
    let nodes = grid.nodes();
    let score = |u: [f64; 3], v: [f64; 3]| -> f64 {
        let (th, ph) = grid.direction_angles(v);
        let hv = grid.eval_point(&coeffs, th, ph);
        if hv <= 0.0 {
            return f64::NEG_INFINITY;
        }
        dot3(u, v) / hv
    };
    let mut out = vec![0.0; grid.len()];
    for (ku, &u) in nodes.iter().enumerate() {
        // Discrete seed.
        let mut best = f64::NEG_INFINITY;
        let mut v = u;
        for (kv, &w) in nodes.iter().enumerate() {
            let s = dot3(u, w) / h.values[kv];
            if s > best {
                best = s;
                v = w;
            }
        }
        if best <= 0.0 {
            return Err(Error::PolarBlowup(ku));
        }
        // Compass search in the tangent plane of v; h* error is second order
        // in the position tolerance because the gradient vanishes at the max.
        let dirs: Vec<[f64; 3]> = match grid.dim {
            1 => vec![[0.0, 0.0, 1.0]],
            _ => Vec::new(),
        };
        let mut step = grid.min_spacing();
        let mut fv = score(u, v);
        while step > 1e-7 {
            let tang: [[f64; 3]; 2] = if grid.dim == 1 {
                let t = cross3(dirs[0], v);
                [normalize3(t), [0.0, 0.0, 0.0]]
            } else {
                let seed = if v[2].abs() < 0.9 {
                    [0.0, 0.0, 1.0]
                } else {
                    [1.0, 0.0, 0.0]
                };
                let e1 = normalize3(cross3(seed, v));
                [e1, normalize3(cross3(v, e1))]
            };
            let ndir = if grid.dim == 1 { 1 } else { 2 };
            let (c, s) = (step.cos(), step.sin());
            let mut moved = false;
            for d in tang.iter().take(ndir) {
                for sgn in [1.0, -1.0] {
                    let cand = normalize3([
                        c * v[0] + sgn * s * d[0],
                        c * v[1] + sgn * s * d[1],
                        c * v[2] + sgn * s * d[2],
                    ]);
                    let fc = score(u, cand);
                    if fc > fv {
                        fv = fc;
                        v = cand;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if !(fv.is_finite() && fv > 0.0) {
            return Err(Error::PolarBlowup(ku));
        }
        out[ku] = fv;
    }
    Ok(PolarField { values: out })
}

/// Max over nodes u of |(S_n h^{n+2})(u) (S_n* h*^{n+2})(u*) - 1| with
/// u* = x(u)/|x(u)|; the starred factor is interpolated bilinearly in the
/// polar chart.
pub fn duality_residual(h: &SupportField) -> Result<f64> {
    let grid = &h.grid;
    let n = grid.dim as i32;
    let cur = curvature(h)?;
    let points = embed(h)?;
    let hstar = polar(h)?.to_support(grid.clone())?;
    let curstar = curvature(&hstar)?;
    let gstar: Vec<f64> = hstar
        .values
        .iter()
        .zip(&curstar.sn)
        .map(|(hs, ss)| ss * hs.powi(n + 2))
        .collect();
    let mut res: f64 = 0.0;
    for k in 0..grid.len() {
        let g = cur.sn[k] * h.values[k].powi(n + 2);
        let ustar = normalize3(points[k]);
        let (th, ph) = grid.direction_angles(ustar);
        let gs = grid.interp_bilinear(&gstar, th, ph);
        res = res.max((g * gs - 1.0).abs());
    }
    Ok(res)
}

/// The vector \int u / (phi h^{1-p}) dsigma.
pub fn lp_barycenter(h: &SupportField, phi: &[f64], p: f64) -> Result<[f64; 3]> {
    let grid = &h.grid;
    if phi.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: phi.len(),
        });
    }
    let dens: Vec<f64> = h
        .values
        .iter()
        .zip(phi)
        .map(|(hi, fi)| hi.powf(p - 1.0) / fi)
        .collect();
    let mut out = [0.0; 3];
    for i in 0..3 {
        let comp: Vec<f64> = grid.nodes().iter().zip(&dens).map(|(u, d)| u[i] * d).collect();
        out[i] = grid.integrate(&comp)?;
    }
    Ok(out)
}

fn solve_linear3(a: [[f64; 3]; 3], b: [f64; 3], dim: usize) -> Option<[f64; 3]> {
    // Gaussian elimination with partial pivoting on the leading (dim+1) block.
    let m = dim + 1;
    let mut aug = [[0.0; 4]; 3];
    for i in 0..m {
        for j in 0..m {
            aug[i][j] = a[i][j];
        }
        aug[i][3] = b[i];
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[piv][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, piv);
        for row in col + 1..m {
            let f = aug[row][col] / aug[col][col];
            for j in col..=3 {
                aug[row][j] -= f * aug[col][j];
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..m).rev() {
        let mut s = aug[row][3];
        for j in row + 1..m {
            s -= aug[row][j] * x[j];
        }
        x[row] = s / aug[row][row];
    }
    Some(x)
}

fn norm3(v: [f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

/// Translation vector v with |lp_barycenter(h translated by v)| < tol, by
/// damped Newton with a finite-difference Jacobian (step 1e-5 x diameter).
pub fn recenter(h: &SupportField, phi: &[f64], p: f64, tol: f64) -> Result<[f64; 3]> {
    let grid = &h.grid;
    let m = grid.dim + 1;
    let diam = (0..grid.len())
        .map(|k| h.values[k] + h.values[grid.antipode_index(k)])
        .fold(0.0, f64::max);
    let fd = 1e-5 * diam;
    let bary = |v: [f64; 3]| -> Result<[f64; 3]> {
        lp_barycenter(&h.translate(v)?, phi, p)
    };
    let mut v = [0.0; 3];
    let mut f = bary(v)?;
    for _ in 0..60 {
        if norm3(f) < tol {
            return Ok(v);
        }
        let mut jac = [[0.0; 3]; 3];
        for j in 0..m {
            let mut vp = v;
            vp[j] += fd;
            let fp = bary(vp)?;
            for i in 0..m {
                jac[i][j] = (fp[i] - f[i]) / fd;
            }
        }
        let Some(dv) = solve_linear3(jac, f, grid.dim) else {
            return Err(Error::NoAdmissibleTranslation(v[0], v[1], v[2]));
        };
        // Damping: halve the step until the residual decreases and the
        // translated body keeps the origin interior.
        let mut alpha = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let cand = [v[0] - alpha * dv[0], v[1] - alpha * dv[1], v[2] - alpha * dv[2]];
            if let Ok(fc) = bary(cand) {
                if norm3(fc) < norm3(f) {
                    v = cand;
                    f = fc;
                    advanced = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            return Err(Error::NoAdmissibleTranslation(v[0], v[1], v[2]));
        }
    }
    if norm3(f) < tol {
        Ok(v)
    } else {
        Err(Error::NoAdmissibleTranslation(v[0], v[1], v[2]))
    }
}
