//! Discretization of the unit sphere S^n (n = 1, 2): nodes, quadrature and
//! covariant derivatives of the round metric.
//!
//! For n = 2 the chart is Gauss-Legendre latitudes (pole-free) times uniform
//! longitudes; longitude derivatives are trigonometric, latitude derivatives
//! come from the normalized associated Legendre tables. For n = 1 the grid is
//! uniform angles with Fourier differentiation. Both grids are exactly closed
//! under the antipodal map and all reductions run in a fixed order.

use crate::error::{Error, Result};
use crate::sht::{CircleCoeffs, CircleTransform, FieldJet, PointJet, SphCoeffs, SphericalTransform};

pub enum Transform {
    Circle(CircleTransform),
    Sphere(SphericalTransform),
}

/// Spectral coefficients of a grid field, used for smoothing projections and
/// off-grid evaluation.
pub enum FieldCoeffs {
    Circle(CircleCoeffs),
    Sphere(SphCoeffs),
}

pub struct Grid {
    pub dim: usize,
    pub resolution: usize,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
    antipode: Vec<usize>,
    transform: Transform,
    // Cached chart trig per node (n = 2); empty for n = 1.
    sin_t: Vec<f64>,
    cos_t: Vec<f64>,
    sin_p: Vec<f64>,
    cos_p: Vec<f64>,
}

impl Grid {
    /// Build a grid on S^n. For n = 2, `resolution` L yields L latitudes and
    /// 2L longitudes; for n = 1 it is the number of uniform angles.
    pub fn build(dim: usize, resolution: usize) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if resolution < 8 || resolution % 2 != 0 {
            return Err(Error::BadResolution(resolution));
        }
        match dim {
            1 => {
                let n = resolution;
                let half = n / 2;
                let mut cos_a = vec![0.0; n];
                let mut sin_a = vec![0.0; n];
                for k in 0..half {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    cos_a[k] = a.cos();
                    sin_a[k] = a.sin();
                    // Exact antipodal closure.
                    cos_a[k + half] = -cos_a[k];
                    sin_a[k + half] = -sin_a[k];
                }
                let nodes: Vec<[f64; 3]> =
                    (0..n).map(|k| [cos_a[k], sin_a[k], 0.0]).collect();
                let w = 2.0 * std::f64::consts::PI / n as f64;
                let antipode = (0..n).map(|k| (k + half) % n).collect();
                Ok(Grid {
                    dim,
                    resolution,
                    nodes,
                    weights: vec![w; n],
                    antipode,
                    transform: Transform::Circle(CircleTransform::new(n)),
                    sin_t: Vec::new(),
                    cos_t: Vec::new(),
                    sin_p: Vec::new(),
                    cos_p: Vec::new(),
                })
            }
            _ => {
                let nlat = resolution;
                let nlon = 2 * nlat;
                let sht = SphericalTransform::new(nlat);
                let mut cos_p = vec![0.0; nlon];
                let mut sin_p = vec![0.0; nlon];
                for j in 0..nlat {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / nlon as f64;
                    cos_p[j] = phi.cos();
                    sin_p[j] = phi.sin();
                    cos_p[j + nlat] = -cos_p[j];
                    sin_p[j + nlat] = -sin_p[j];
                }
                let mut nodes = Vec::with_capacity(nlat * nlon);
                let mut weights = Vec::with_capacity(nlat * nlon);
                let mut sin_t = Vec::with_capacity(nlat * nlon);
                let mut cos_t = Vec::with_capacity(nlat * nlon);
                let mut sp = Vec::with_capacity(nlat * nlon);
                let mut cp = Vec::with_capacity(nlat * nlon);
                let wphi = 2.0 * std::f64::consts::PI / nlon as f64;
                for i in 0..nlat {
                    let st = sht.sin_t[i];
                    let ct = sht.x[i];
                    for j in 0..nlon {
                        nodes.push([st * cos_p[j], st * sin_p[j], ct]);
                        weights.push(sht.glw[i] * wphi);
                        sin_t.push(st);
                        cos_t.push(ct);
                        sp.push(sin_p[j]);
                        cp.push(cos_p[j]);
                    }
                }
                let antipode = (0..nlat * nlon)
                    .map(|k| {
                        let (i, j) = (k / nlon, k % nlon);
                        (nlat - 1 - i) * nlon + (j + nlat) % nlon
                    })
                    .collect();
                Ok(Grid {
                    dim,
                    resolution,
                    nodes,
                    weights,
                    antipode,
                    transform: Transform::Sphere(sht),
                    sin_t,
                    cos_t,
                    sin_p: sp,
                    cos_p: cp,
                })
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn antipode_index(&self, k: usize) -> usize {
        self.antipode[k]
    }

    /// Highest spherical-harmonic degree differentiated exactly.
    pub fn design_degree(&self) -> usize {
        match &self.transform {
            Transform::Circle(_) => self.resolution / 2 - 1,
            Transform::Sphere(t) => t.lmax,
        }
    }

    /// Latitudinal node spacing; the chart's coarsest direction.
    pub fn min_spacing(&self) -> f64 {
        match self.dim {
            1 => 2.0 * std::f64::consts::PI / self.resolution as f64,
            _ => std::f64::consts::PI / (self.resolution as f64 + 0.5),
        }
    }

    /// Largest eigenvalue of -Laplacian resolvable on this grid, l(l+1) on S^2
    /// and m^2 on S^1. Used by the step-size stability cap.
    pub fn laplacian_bound(&self) -> f64 {
        let l = self.design_degree() as f64;
        match self.dim {
            1 => l * l,
            _ => l * (l + 1.0),
        }
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Quadrature of a scalar field; fixed-order Kahan summation.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (fi, wi) in f.iter().zip(&self.weights) {
            let term = fi * wi - comp;
            let t = sum + term;
            comp = (t - sum) - term;
            sum = t;
        }
        Ok(sum)
    }

    pub fn coeffs(&self, f: &[f64]) -> Result<FieldCoeffs> {
        self.check_len(f)?;
        Ok(match &self.transform {
            Transform::Circle(t) => FieldCoeffs::Circle(t.analyze(f)),
            Transform::Sphere(t) => FieldCoeffs::Sphere(t.analyze(f)),
        })
    }

    /// Projection onto the resolved harmonic space (degree <= design degree).
    /// Applied to nonlinear right-hand sides to keep explicit stepping stable
    /// on the latitude-longitude chart.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        let c = self.coeffs(f)?;
        Ok(self.synthesize(&c, self.design_degree()))
    }

    pub fn synthesize(&self, coeffs: &FieldCoeffs, ltrunc: usize) -> Vec<f64> {
        match (&self.transform, coeffs) {
            (Transform::Circle(t), FieldCoeffs::Circle(c)) => t.synthesize(c, ltrunc),
            (Transform::Sphere(t), FieldCoeffs::Sphere(c)) => t.synthesize(c, ltrunc),
            _ => unreachable!("coeffs built on a different grid kind"),
        }
    }

    /// All coordinate partials of a field, via the spectral representation.
    pub fn jet(&self, f: &[f64]) -> Result<FieldJet> {
        let c = self.coeffs(f)?;
        Ok(self.jet_from_coeffs(&c))
    }

    pub fn jet_from_coeffs(&self, coeffs: &FieldCoeffs) -> FieldJet {
        match (&self.transform, coeffs) {
            (Transform::Circle(t), FieldCoeffs::Circle(c)) => t.jet(c),
            (Transform::Sphere(t), FieldCoeffs::Sphere(c)) => t.jet(c),
            _ => unreachable!("coeffs built on a different grid kind"),
        }
    }

    /// Covariant Hessian of the round metric, entries [tt, tp, pp] per node in
    /// the chart basis. For n = 1 the single entry is f'' (stored in slot 0).
    pub fn covariant_hessian(&self, f: &[f64]) -> Result<Vec<[f64; 3]>> {
        let jet = self.jet(f)?;
        self.covariant_hessian_from_jet(&jet)
    }

    pub fn covariant_hessian_from_jet(&self, jet: &FieldJet) -> Result<Vec<[f64; 3]>> {
        let n = self.len();
        let mut out = vec![[0.0; 3]; n];
        match self.dim {
            1 => {
                for k in 0..n {
                    out[k][0] = jet.ftt[k];
                }
            }
            _ => {
                for k in 0..n {
                    let st = self.sin_t[k];
                    let ct = self.cos_t[k];
                    // Christoffel terms of the round metric:
                    // Gamma^phi_{theta phi} = cot(theta), Gamma^theta_{phi phi} = -sin cos.
                    out[k][0] = jet.ftt[k];
                    out[k][1] = jet.ftp[k] - (ct / st) * jet.fp[k];
                    out[k][2] = jet.fpp[k] + st * ct * jet.ft[k];
                }
            }
        }
        for (k, h) in out.iter().enumerate() {
            if !(h[0].is_finite() && h[1].is_finite() && h[2].is_finite()) {
                return Err(Error::NonFinite(k));
            }
        }
        Ok(out)
    }

    /// Chart coordinates of node k: (theta, phi) on S^2, (alpha, 0) on S^1.
    pub fn node_angles(&self, k: usize) -> (f64, f64) {
        match &self.transform {
            Transform::Circle(_) => {
                let a = 2.0 * std::f64::consts::PI * k as f64 / self.resolution as f64;
                (a, 0.0)
            }
            Transform::Sphere(t) => {
                let nlon = t.nlon;
                let phi = 2.0 * std::f64::consts::PI * (k % nlon) as f64 / nlon as f64;
                (t.theta[k / nlon], phi)
            }
        }
    }

    /// Chart coordinates of an arbitrary unit vector.
    pub fn direction_angles(&self, u: [f64; 3]) -> (f64, f64) {
        match self.dim {
            1 => (u[1].atan2(u[0]).rem_euclid(2.0 * std::f64::consts::PI), 0.0),
            _ => {
                let theta = u[2].clamp(-1.0, 1.0).acos();
                let phi = u[1].atan2(u[0]).rem_euclid(2.0 * std::f64::consts::PI);
                (theta, phi)
            }
        }
    }

    /// Unit vector of chart coordinates.
    pub fn angles_direction(&self, theta: f64, phi: f64) -> [f64; 3] {
        match self.dim {
            1 => [theta.cos(), theta.sin(), 0.0],
            _ => [
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ],
        }
    }

    /// Evaluate coefficients at an arbitrary chart point, with partials.
    pub fn eval_jet_point(&self, coeffs: &FieldCoeffs, theta: f64, phi: f64) -> PointJet {
        match (&self.transform, coeffs) {
            (Transform::Circle(t), FieldCoeffs::Circle(c)) => t.eval_jet_point(c, theta),
            (Transform::Sphere(t), FieldCoeffs::Sphere(c)) => t.eval_jet_point(c, theta, phi),
            _ => unreachable!("coeffs built on a different grid kind"),
        }
    }

    pub fn eval_point(&self, coeffs: &FieldCoeffs, theta: f64, phi: f64) -> f64 {
        self.eval_jet_point(coeffs, theta, phi).f
    }

    /// Real spherical harmonic of degree l, order m sampled on the grid
    /// (cos(m phi) branch for m >= 0, sin for m < 0). On S^1 this is
    /// cos(l alpha) / sin(l alpha).
    pub fn harmonic(&self, l: usize, m: i64) -> Vec<f64> {
        match &self.transform {
            Transform::Circle(_) => (0..self.resolution)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / self.resolution as f64;
                    if m >= 0 {
                        (l as f64 * a).cos()
                    } else {
                        (l as f64 * a).sin()
                    }
                })
                .collect(),
            Transform::Sphere(t) => t.harmonic(l, m),
        }
    }

    /// Bilinear interpolation of a grid field in the chart (linear in theta
    /// between latitude rings with end extrapolation, periodic linear in phi).
    /// On S^1 it is periodic linear interpolation.
    pub fn interp_bilinear(&self, f: &[f64], theta: f64, phi: f64) -> f64 {
        match &self.transform {
            Transform::Circle(_) => {
                let n = self.resolution as f64;
                let s = theta.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * n;
                let k0 = s.floor() as usize % self.resolution;
                let k1 = (k0 + 1) % self.resolution;
                let frac = s - s.floor();
                f[k0] * (1.0 - frac) + f[k1] * frac
            }
            Transform::Sphere(t) => {
                let nlon = t.nlon;
                // Latitude bracket (theta array ascending).
                let nlat = t.nlat;
                let i1 = match t.theta.binary_search_by(|v| v.partial_cmp(&theta).unwrap()) {
                    Ok(i) => i.clamp(1, nlat - 1),
                    Err(i) => i.clamp(1, nlat - 1),
                };
                let i0 = i1 - 1;
                let tt = (theta - t.theta[i0]) / (t.theta[i1] - t.theta[i0]);
                let s = phi.rem_euclid(2.0 * std::f64::consts::PI)
                    / (2.0 * std::f64::consts::PI)
                    * nlon as f64;
                let j0 = s.floor() as usize % nlon;
                let j1 = (j0 + 1) % nlon;
                let fp = s - s.floor();
                let row = |i: usize| f[i * nlon + j0] * (1.0 - fp) + f[i * nlon + j1] * fp;
                row(i0) * (1.0 - tt) + row(i1) * tt
            }
        }
    }

    /// Chart trig caches, used by the geometry layer. Empty for n = 1.
    pub(crate) fn trig(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.sin_t, &self.cos_t, &self.sin_p, &self.cos_p)
    }
}
