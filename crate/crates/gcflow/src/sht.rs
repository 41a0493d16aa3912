//! Spectral machinery behind the sphere grid: Gauss-Legendre nodes, normalized
//! associated Legendre tables, and scalar spherical-harmonic transforms on the
//! Gauss-Legendre x uniform-longitude grid. Everything here works in the
//! pole-free (theta, phi) chart; the Legendre recurrences are the standard
//! fully-normalized ones, so analysis/synthesis is exact (to round-off) for
//! fields band-limited at degree `lmax`.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Gauss-Legendre nodes (descending in x) and weights on [-1, 1].
/// Node symmetry x[i] = -x[n-1-i] is enforced exactly so the antipodal map
/// is an exact index permutation.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut xi = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, xi);
            let dx = p / dp;
            xi -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, xi);
        x[i] = xi;
        w[i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
        x[n - 1 - i] = -xi;
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
        let (_, dp) = legendre_pair(n, 0.0);
        w[n / 2] = 2.0 / (dp * dp);
    }
    (x, w)
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Coefficients of a scalar field in fully-normalized spherical harmonics,
/// complex Fourier convention in phi, modes m = 0..=lmax only (real fields).
#[derive(Clone, Debug)]
pub struct SphCoeffs {
    pub lmax: usize,
    offsets: Vec<usize>,
    pub c: Vec<Complex64>,
}

impl SphCoeffs {
    fn zeros(lmax: usize) -> Self {
        let mut offsets = Vec::with_capacity(lmax + 2);
        let mut acc = 0usize;
        for m in 0..=lmax {
            offsets.push(acc);
            acc += lmax + 1 - m;
        }
        offsets.push(acc);
        SphCoeffs {
            lmax,
            offsets,
            c: vec![Complex64::new(0.0, 0.0); acc],
        }
    }

    #[inline]
    pub fn idx(&self, l: usize, m: usize) -> usize {
        self.offsets[m] + (l - m)
    }

    #[inline]
    pub fn get(&self, l: usize, m: usize) -> Complex64 {
        self.c[self.idx(l, m)]
    }
}

/// Coordinate partial derivatives of a scalar field at a single point of the
/// (theta, phi) chart.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointJet {
    pub f: f64,
    pub ft: f64,
    pub fp: f64,
    pub ftt: f64,
    pub ftp: f64,
    pub fpp: f64,
}

/// Per-node coordinate partials of a field on the full grid.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub f: Vec<f64>,
    pub ft: Vec<f64>,
    pub fp: Vec<f64>,
    pub ftt: Vec<f64>,
    pub ftp: Vec<f64>,
    pub fpp: Vec<f64>,
}

/// Scalar spherical-harmonic transform on an L x 2L Gauss-Legendre/Fourier grid.
pub struct SphericalTransform {
    pub nlat: usize,
    pub nlon: usize,
    pub lmax: usize,
    pub x: Vec<f64>,     // cos(theta), descending (theta ascending)
    pub theta: Vec<f64>,
    pub sin_t: Vec<f64>,
    pub glw: Vec<f64>,   // Gauss-Legendre weights, sum = 2
    // Per m: tables of size (lmax+1-m) * nlat, layout [(l-m)*nlat + i].
    plm: Vec<Vec<f64>>,
    dplm: Vec<Vec<f64>>,
    d2plm: Vec<Vec<f64>>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl SphericalTransform {
    pub fn new(nlat: usize) -> Self {
        let nlon = 2 * nlat;
        let lmax = nlat - 1;
        let (x, glw) = gauss_legendre(nlat);
        let theta: Vec<f64> = x.iter().map(|&xi| xi.acos()).collect();
        let sin_t: Vec<f64> = x.iter().map(|&xi| (1.0 - xi * xi).sqrt()).collect();

        let mut plm = Vec::with_capacity(lmax + 1);
        let mut dplm = Vec::with_capacity(lmax + 1);
        let mut d2plm = Vec::with_capacity(lmax + 1);
        for m in 0..=lmax {
            let rows = lmax + 1 - m;
            let mut p = vec![0.0; rows * nlat];
            let mut dp = vec![0.0; rows * nlat];
            let mut d2p = vec![0.0; rows * nlat];
            for i in 0..nlat {
                let xi = x[i];
                let si = sin_t[i];
                let ci = xi;
                // Sectoral seed.
                let mut pmm = std::f64::consts::FRAC_1_SQRT_2;
                for k in 1..=m {
                    pmm *= si * ((2 * k + 1) as f64 / (2 * k) as f64).sqrt();
                }
                let mut prev2 = 0.0;
                let mut prev1 = pmm;
                for l in m..=lmax {
                    let row = l - m;
                    let pl = if l == m {
                        pmm
                    } else if l == m + 1 {
                        xi * ((2 * m + 3) as f64).sqrt() * pmm
                    } else {
                        let lf = l as f64;
                        let mf = m as f64;
                        let alpha = (((2.0 * lf - 1.0) * (2.0 * lf + 1.0))
                            / ((lf - mf) * (lf + mf)))
                            .sqrt();
                        let beta = (((2.0 * lf + 1.0) * (lf - 1.0 + mf) * (lf - 1.0 - mf))
                            / ((2.0 * lf - 3.0) * (lf - mf) * (lf + mf)))
                            .sqrt();
                        alpha * xi * prev1 - beta * prev2
                    };
                    if l > m {
                        prev2 = prev1;
                        prev1 = pl;
                    }
                    let lf = l as f64;
                    let mf = m as f64;
                    let gamma = if l == m {
                        0.0
                    } else {
                        ((lf * lf - mf * mf) * (2.0 * lf + 1.0) / (2.0 * lf - 1.0)).sqrt()
                    };
                    let pl_prev = if l == m { 0.0 } else { prev2 };
                    let dpl = (lf * xi * pl - gamma * pl_prev) / si;
                    let d2pl = -(ci / si) * dpl - (lf * (lf + 1.0) - mf * mf / (si * si)) * pl;
                    p[row * nlat + i] = pl;
                    dp[row * nlat + i] = dpl;
                    d2p[row * nlat + i] = d2pl;
                }
            }
            plm.push(p);
            dplm.push(dp);
            d2plm.push(d2p);
        }

        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(nlon);
        let fft_inv = planner.plan_fft_inverse(nlon);

        SphericalTransform {
            nlat,
            nlon,
            lmax,
            x,
            theta,
            sin_t,
            glw,
            plm,
            dplm,
            d2plm,
            fft_fwd,
            fft_inv,
        }
    }

    /// Fourier modes m = 0..=lmax per latitude, normalized (f_m = DFT/nlon).
    fn fourier_modes(&self, f: &[f64]) -> Vec<Complex64> {
        let (nlat, nlon, lmax) = (self.nlat, self.nlon, self.lmax);
        let mut fm = vec![Complex64::new(0.0, 0.0); nlat * (lmax + 1)];
        let mut row = vec![Complex64::new(0.0, 0.0); nlon];
        let scale = 1.0 / nlon as f64;
        for i in 0..nlat {
            for j in 0..nlon {
                row[j] = Complex64::new(f[i * nlon + j], 0.0);
            }
            self.fft_fwd.process(&mut row);
            for m in 0..=lmax {
                fm[i * (lmax + 1) + m] = row[m] * scale;
            }
        }
        fm
    }

    pub fn analyze(&self, f: &[f64]) -> SphCoeffs {
        let (nlat, lmax) = (self.nlat, self.lmax);
        let fm = self.fourier_modes(f);
        let mut coeffs = SphCoeffs::zeros(lmax);
        for m in 0..=lmax {
            let table = &self.plm[m];
            for l in m..=lmax {
                let row = &table[(l - m) * nlat..(l - m + 1) * nlat];
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..nlat {
                    acc += fm[i * (lmax + 1) + m] * (self.glw[i] * row[i]);
                }
                let idx = coeffs.idx(l, m);
                coeffs.c[idx] = acc;
            }
        }
        coeffs
    }

    /// Inverse transform of per-latitude mode rows into a real grid field.
    fn inverse_rows(&self, gm: &[Complex64], out: &mut [f64]) {
        let (nlat, nlon, lmax) = (self.nlat, self.nlon, self.lmax);
        let mut row = vec![Complex64::new(0.0, 0.0); nlon];
        for i in 0..nlat {
            for v in row.iter_mut() {
                *v = Complex64::new(0.0, 0.0);
            }
            row[0] = gm[i * (lmax + 1)];
            for m in 1..=lmax {
                let g = gm[i * (lmax + 1) + m];
                row[m] = g;
                row[nlon - m] = g.conj();
            }
            self.fft_inv.process(&mut row);
            for j in 0..nlon {
                out[i * nlon + j] = row[j].re;
            }
        }
    }

    /// Synthesize grid values from coefficients, keeping only degrees l <= ltrunc.
    pub fn synthesize(&self, coeffs: &SphCoeffs, ltrunc: usize) -> Vec<f64> {
        let (nlat, lmax) = (self.nlat, self.lmax);
        let lcut = ltrunc.min(lmax);
        let mut gm = vec![Complex64::new(0.0, 0.0); nlat * (lmax + 1)];
        for m in 0..=lcut {
            let table = &self.plm[m];
            for l in m..=lcut {
                let cl = coeffs.get(l, m);
                let row = &table[(l - m) * nlat..(l - m + 1) * nlat];
                for i in 0..nlat {
                    gm[i * (lmax + 1) + m] += cl * row[i];
                }
            }
        }
        let mut out = vec![0.0; nlat * self.nlon];
        self.inverse_rows(&gm, &mut out);
        out
    }

    /// All first and second coordinate partials on the grid in one pass.
    pub fn jet(&self, coeffs: &SphCoeffs) -> FieldJet {
        let (nlat, nlon, lmax) = (self.nlat, self.nlon, self.lmax);
        let nm = nlat * (lmax + 1);
        // Latitude sums against the three Legendre tables.
        let mut a = vec![Complex64::new(0.0, 0.0); nm]; // value
        let mut b = vec![Complex64::new(0.0, 0.0); nm]; // d/dtheta
        let mut d = vec![Complex64::new(0.0, 0.0); nm]; // d2/dtheta2
        for m in 0..=lmax {
            let tp = &self.plm[m];
            let td = &self.dplm[m];
            let t2 = &self.d2plm[m];
            for l in m..=lmax {
                let cl = coeffs.get(l, m);
                let off = (l - m) * nlat;
                for i in 0..nlat {
                    let k = i * (lmax + 1) + m;
                    a[k] += cl * tp[off + i];
                    b[k] += cl * td[off + i];
                    d[k] += cl * t2[off + i];
                }
            }
        }
        let mut jet = FieldJet {
            f: vec![0.0; nlat * nlon],
            ft: vec![0.0; nlat * nlon],
            fp: vec![0.0; nlat * nlon],
            ftt: vec![0.0; nlat * nlon],
            ftp: vec![0.0; nlat * nlon],
            fpp: vec![0.0; nlat * nlon],
        };
        let mut tmp = vec![Complex64::new(0.0, 0.0); nm];
        self.inverse_rows(&a, &mut jet.f);
        self.inverse_rows(&b, &mut jet.ft);
        self.inverse_rows(&d, &mut jet.ftt);
        for m in 0..=lmax {
            let im = Complex64::new(0.0, m as f64);
            for i in 0..nlat {
                tmp[i * (lmax + 1) + m] = a[i * (lmax + 1) + m] * im;
            }
        }
        self.inverse_rows(&tmp, &mut jet.fp);
        for m in 0..=lmax {
            let im = Complex64::new(0.0, m as f64);
            for i in 0..nlat {
                tmp[i * (lmax + 1) + m] = b[i * (lmax + 1) + m] * im;
            }
        }
        self.inverse_rows(&tmp, &mut jet.ftp);
        for m in 0..=lmax {
            let m2 = -((m * m) as f64);
            for i in 0..nlat {
                tmp[i * (lmax + 1) + m] = a[i * (lmax + 1) + m] * m2;
            }
        }
        self.inverse_rows(&tmp, &mut jet.fpp);
        jet
    }

    /// Evaluate the synthesized field at an arbitrary chart point.
    pub fn eval_point(&self, coeffs: &SphCoeffs, theta: f64, phi: f64) -> f64 {
        self.eval_jet_point(coeffs, theta, phi).f
    }

    /// Value and coordinate partials at an arbitrary chart point (theta away
    /// from the exact poles).
    pub fn eval_jet_point(&self, coeffs: &SphCoeffs, theta: f64, phi: f64) -> PointJet {
        let lmax = self.lmax;
        let x = theta.cos();
        let s = theta.sin();
        let c = x;
        let mut jet = PointJet::default();
        for m in 0..=lmax {
            let mut av = Complex64::new(0.0, 0.0);
            let mut bv = Complex64::new(0.0, 0.0);
            let mut dv = Complex64::new(0.0, 0.0);
            let mut pmm = std::f64::consts::FRAC_1_SQRT_2;
            for k in 1..=m {
                pmm *= s * ((2 * k + 1) as f64 / (2 * k) as f64).sqrt();
            }
            let mut prev2 = 0.0;
            let mut prev1 = pmm;
            for l in m..=lmax {
                let pl = if l == m {
                    pmm
                } else if l == m + 1 {
                    x * ((2 * m + 3) as f64).sqrt() * pmm
                } else {
                    let lf = l as f64;
                    let mf = m as f64;
                    let alpha =
                        (((2.0 * lf - 1.0) * (2.0 * lf + 1.0)) / ((lf - mf) * (lf + mf))).sqrt();
                    let beta = (((2.0 * lf + 1.0) * (lf - 1.0 + mf) * (lf - 1.0 - mf))
                        / ((2.0 * lf - 3.0) * (lf - mf) * (lf + mf)))
                        .sqrt();
                    alpha * x * prev1 - beta * prev2
                };
                let pl_prev = if l == m { 0.0 } else { prev1 };
                if l > m {
                    prev2 = prev1;
                    prev1 = pl;
                }
                let lf = l as f64;
                let mf = m as f64;
                let gamma = if l == m {
                    0.0
                } else {
                    ((lf * lf - mf * mf) * (2.0 * lf + 1.0) / (2.0 * lf - 1.0)).sqrt()
                };
                let dpl = (lf * x * pl - gamma * pl_prev) / s;
                let d2pl = -(c / s) * dpl - (lf * (lf + 1.0) - mf * mf / (s * s)) * pl;
                let cl = coeffs.get(l, m);
                av += cl * pl;
                bv += cl * dpl;
                dv += cl * d2pl;
            }
            let e = Complex64::new(0.0, m as f64 * phi).exp();
            let mult = if m == 0 { 1.0 } else { 2.0 };
            let mf = m as f64;
            jet.f += mult * (av * e).re;
            jet.ft += mult * (bv * e).re;
            jet.ftt += mult * (dv * e).re;
            jet.fp += mult * (av * e * Complex64::new(0.0, mf)).re;
            jet.ftp += mult * (bv * e * Complex64::new(0.0, mf)).re;
            jet.fpp += mult * (av * e).re * (-mf * mf);
        }
        jet
    }

    /// Real spherical harmonic sampled on the grid: cos branch for m >= 0,
    /// sin branch for m < 0.
    pub fn harmonic(&self, l: usize, m: i64) -> Vec<f64> {
        let ma = m.unsigned_abs() as usize;
        assert!(l <= self.lmax && ma <= l);
        let table = &self.plm[ma];
        let row = &table[(l - ma) * self.nlat..(l - ma + 1) * self.nlat];
        let mut out = vec![0.0; self.nlat * self.nlon];
        for i in 0..self.nlat {
            for j in 0..self.nlon {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / self.nlon as f64;
                let az = if m >= 0 {
                    (ma as f64 * phi).cos()
                } else {
                    (ma as f64 * phi).sin()
                };
                out[i * self.nlon + j] = row[i] * az;
            }
        }
        out
    }
}

/// Fourier transform helper for the circle grid (n = 1).
pub struct CircleTransform {
    pub n: usize,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

/// Normalized Fourier coefficients of a field on the uniform circle grid.
#[derive(Clone, Debug)]
pub struct CircleCoeffs {
    pub n: usize,
    pub c: Vec<Complex64>,
}

impl CircleTransform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        CircleTransform {
            n,
            fft_fwd: planner.plan_fft_forward(n),
            fft_inv: planner.plan_fft_inverse(n),
        }
    }

    /// Signed wavenumber of bin k; the Nyquist bin is treated as dead.
    #[inline]
    fn wavenumber(&self, k: usize) -> f64 {
        let n = self.n;
        if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    }

    pub fn analyze(&self, f: &[f64]) -> CircleCoeffs {
        let n = self.n;
        let mut row: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_fwd.process(&mut row);
        let scale = 1.0 / n as f64;
        for v in row.iter_mut() {
            *v *= scale;
        }
        CircleCoeffs { n, c: row }
    }

    pub fn synthesize(&self, coeffs: &CircleCoeffs, mtrunc: usize) -> Vec<f64> {
        let n = self.n;
        let mut row = coeffs.c.clone();
        for k in 0..n {
            if self.wavenumber(k).abs() as usize > mtrunc {
                row[k] = Complex64::new(0.0, 0.0);
            }
        }
        self.fft_inv.process(&mut row);
        row.iter().map(|v| v.re).collect()
    }

    /// Value, first and second derivative fields (Nyquist mode dropped).
    pub fn jet(&self, coeffs: &CircleCoeffs) -> FieldJet {
        let n = self.n;
        let mut v0 = coeffs.c.clone();
        let mut v1 = coeffs.c.clone();
        let mut v2 = coeffs.c.clone();
        for k in 0..n {
            let m = self.wavenumber(k);
            if 2 * (m.abs() as usize) >= n {
                v0[k] = Complex64::new(0.0, 0.0);
                v1[k] = Complex64::new(0.0, 0.0);
                v2[k] = Complex64::new(0.0, 0.0);
            } else {
                v1[k] *= Complex64::new(0.0, m);
                v2[k] *= -m * m;
            }
        }
        self.fft_inv.process(&mut v0);
        self.fft_inv.process(&mut v1);
        self.fft_inv.process(&mut v2);
        let z = vec![0.0; n];
        FieldJet {
            f: v0.iter().map(|v| v.re).collect(),
            ft: v1.iter().map(|v| v.re).collect(),
            ftt: v2.iter().map(|v| v.re).collect(),
            fp: z.clone(),
            ftp: z.clone(),
            fpp: z,
        }
    }

    pub fn eval_jet_point(&self, coeffs: &CircleCoeffs, alpha: f64) -> PointJet {
        let n = self.n;
        let mut jet = PointJet::default();
        for k in 0..n {
            let m = self.wavenumber(k);
            if 2 * (m.abs() as usize) >= n {
                continue;
            }
            let e = Complex64::new(0.0, m * alpha).exp();
            let v = coeffs.c[k] * e;
            jet.f += v.re;
            jet.ft += (v * Complex64::new(0.0, m)).re;
            jet.ftt += (v * (-m * m)).re;
        }
        jet
    }
}
