//! Bivariate K-distribution and K-copula: densities, distribution
//! functions, quantiles, binned copula density grids and the one-parameter
//! fit against an empirical grid.
//!
//! Everything is computed through the gamma-mixture representation: with
//! z ~ Gamma(N/2, 1) and s = sqrt(2 z / N), the K-distributed return vector
//! is conditionally Gaussian with covariance s^2 Sigma. This form is valid
//! for any real N > 0 and reduces every cdf to a one-dimensional quadrature
//! over z against standard normal cdfs.

pub mod bessel;
pub mod bvn;
pub mod quad;

use crate::error::{Error, Result};
use crate::grid::{CopulaGrid, GridKind};
use bvn::{bvn_cdf, norm_cdf, norm_quantile};
use nalgebra::DMatrix;
use quad::GammaMixture;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KCopulaParams {
    /// Average correlation coefficient, |c| < 1.
    pub c: f64,
    /// Wishart fluctuation parameter, N > 0 (not required to be integer).
    pub n: f64,
}

impl KCopulaParams {
    pub fn new(c: f64, n: f64) -> Result<Self> {
        if !(c.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|c| must be < 1, got {c}")));
        }
        if !(n > 0.0) {
            return Err(Error::InvalidParameter(format!("N must be > 0, got {n}")));
        }
        Ok(KCopulaParams { c, n })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Absolute tolerance for 1-D (marginal) cdf values.
    pub tol_1d: f64,
    /// Absolute tolerance for 2-D cdf values.
    pub tol_2d: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            tol_1d: 1e-8,
            tol_2d: 1e-6,
        }
    }
}

/// Evaluator for one (c, N) parameter pair. Quadrature node counts are
/// frozen at construction by probing convergence, so repeated evaluations
/// are deterministic and cheap.
pub struct KCopula {
    params: KCopulaParams,
    quad: QuadratureSpec,
    mix: GammaMixture,
    slot_1d: usize,
    slot_2d: usize,
}

impl KCopula {
    pub fn new(params: KCopulaParams) -> Self {
        Self::with_quadrature(params, QuadratureSpec::default())
    }

    pub fn with_quadrature(params: KCopulaParams, quad: QuadratureSpec) -> Self {
        let mix = GammaMixture::new(params.n / 2.0);
        let n = params.n;
        let scale = move |z: f64| (2.0 * z / n).sqrt();
        let slot_1d = [0.5, 2.0, 8.0]
            .iter()
            .map(|&x| mix.converged_slot(|z| norm_cdf(x / scale(z)), quad.tol_1d * 0.1))
            .max()
            .unwrap();
        let slot_2d = [(0.5, 0.5), (1.0, -1.0), (2.0, 2.0)]
            .iter()
            .map(|&(a, b)| {
                mix.converged_slot(
                    |z| bvn_cdf(a / scale(z), b / scale(z), params.c),
                    quad.tol_2d * 0.01,
                )
            })
            .max()
            .unwrap()
            .max(slot_1d);
        KCopula {
            params,
            quad,
            mix,
            slot_1d,
            slot_2d,
        }
    }

    pub fn params(&self) -> KCopulaParams {
        self.params
    }

    /// Bivariate K-distribution density (closed Bessel form). Diverges at
    /// the origin for N <= 2; that case returns positive infinity.
    pub fn pdf(&self, r1: f64, r2: f64) -> f64 {
        let KCopulaParams { c, n } = self.params;
        let one_m_c2 = 1.0 - c * c;
        let q = (r1 * r1 - 2.0 * c * r1 * r2 + r2 * r2) / one_m_c2;
        if q <= 0.0 {
            return if n > 2.0 {
                n / (2.0 * std::f64::consts::PI * (n - 2.0) * one_m_c2.sqrt())
            } else {
                f64::INFINITY
            };
        }
        let u = (n * q).sqrt();
        let nu = (2.0 - n) / 2.0;
        let ln_f = (2.0 - n) / 2.0 * std::f64::consts::LN_2 + n.ln()
            - ln_gamma(n / 2.0)
            - LN_2PI
            - 0.5 * one_m_c2.ln()
            + bessel::ln_bessel_k(nu, u)
            - nu * u.ln();
        ln_f.exp()
    }

    /// Marginal cdf F1(x) = E_z[ Phi(x / s) ], s = sqrt(2z/N).
    pub fn marginal_cdf(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.5;
        }
        let n = self.params.n;
        self.mix
            .expect_with(self.slot_1d, |z| norm_cdf(x / (2.0 * z / n).sqrt()))
    }

    /// Marginal quantile, solved by bisection to |F1(x) - u| <= 1e-10.
    /// Odd symmetry q(1-u) = -q(u) holds exactly.
    pub fn marginal_quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile argument must be in (0,1), got {u}"
            )));
        }
        if u == 0.5 {
            return Ok(0.0);
        }
        let p = u.max(1.0 - u);
        let sign = if u >= 0.5 { 1.0 } else { -1.0 };
        let mut hi = 1.0;
        while self.marginal_cdf(hi) < p {
            hi *= 2.0;
            if hi > 1e9 {
                break;
            }
        }
        let mut lo = 0.0;
        let mut x = 0.5 * hi;
        for _ in 0..200 {
            let f = self.marginal_cdf(x);
            if (f - p).abs() <= 1e-10 {
                break;
            }
            if f < p {
                lo = x;
            } else {
                hi = x;
            }
            x = 0.5 * (lo + hi);
        }
        Ok(sign * x)
    }

    /// Bivariate cdf F_{c,N}(r1, r2) = E_z[ Phi2(r1/s, r2/s; c) ].
    pub fn bivariate_cdf(&self, r1: f64, r2: f64) -> f64 {
        let KCopulaParams { c, n } = self.params;
        self.mix
            .expect_with(self.slot_2d, |z| {
                let s = (2.0 * z / n).sqrt();
                bvn_cdf(r1 / s, r2 / s, c)
            })
            .clamp(0.0, 1.0)
    }

    /// K-copula cdf Cop(u, v) = F(q(u), q(v)).
    pub fn copula_cdf(&self, u: f64, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "copula arguments must be in [0,1], got ({u}, {v})"
            )));
        }
        if u == 0.0 || v == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(v);
        }
        if v == 1.0 {
            return Ok(u);
        }
        let x = self.marginal_quantile(u)?;
        let y = self.marginal_quantile(v)?;
        Ok(self.bivariate_cdf(x, y))
    }

    /// Binned K-copula density: per-bin mass by four-corner differencing of
    /// the copula cdf, divided by the bin area. Boundary values of the cdf
    /// are handled analytically, so the mass telescopes to exactly one up
    /// to quadrature error.
    pub fn density_grid(&self, bins: usize) -> Result<CopulaGrid> {
        if bins < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 bins".into()));
        }
        let b = bins;
        // Quantiles at interior edges, mirrored for exact odd symmetry.
        let mut q = vec![0.0; b + 1];
        for i in 1..b {
            if 2 * i < b {
                q[i] = self.marginal_quantile(i as f64 / b as f64)?;
            } else if 2 * i == b {
                q[i] = 0.0;
            } else {
                q[i] = -q[b - i];
            }
        }
        // cdf at interior edge crossings; exchange symmetry halves the work.
        let pairs: Vec<(usize, usize)> = (1..b)
            .flat_map(|i| (1..=i).map(move |j| (i, j)))
            .collect();
        let vals: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| self.bivariate_cdf(q[i], q[j]))
            .collect();
        let mut cdf = vec![0.0; (b + 1) * (b + 1)];
        for (&(i, j), &v) in pairs.iter().zip(&vals) {
            cdf[i * (b + 1) + j] = v;
            cdf[j * (b + 1) + i] = v;
        }
        for i in 0..=b {
            cdf[i * (b + 1)] = 0.0;
            cdf[i] = 0.0;
            cdf[i * (b + 1) + b] = i as f64 / b as f64;
            cdf[b * (b + 1) + i] = i as f64 / b as f64;
        }
        let mut density = vec![0.0; b * b];
        let scale = (b * b) as f64;
        for a in 0..b {
            for c in 0..b {
                let mass = cdf[(a + 1) * (b + 1) + c + 1] - cdf[a * (b + 1) + c + 1]
                    - cdf[(a + 1) * (b + 1) + c]
                    + cdf[a * (b + 1) + c];
                density[a * b + c] = (mass * scale).max(0.0);
            }
        }
        CopulaGrid::new(b, density, GridKind::Analytic)
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        self.quad
    }
}

/// Gaussian-copula density grid with correlation c, for limit comparisons.
pub fn gaussian_copula_density_grid(c: f64, bins: usize) -> Result<CopulaGrid> {
    if !(c.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|c| must be < 1, got {c}")));
    }
    let b = bins;
    let q: Vec<f64> = (0..=b)
        .map(|i| match i {
            0 => f64::NEG_INFINITY,
            i if i == b => f64::INFINITY,
            _ => norm_quantile(i as f64 / b as f64),
        })
        .collect();
    let cdf = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 {
            0.0
        } else if i == b {
            j as f64 / b as f64
        } else if j == b {
            i as f64 / b as f64
        } else {
            bvn_cdf(q[i], q[j], c)
        }
    };
    let mut density = vec![0.0; b * b];
    let scale = (b * b) as f64;
    for a in 0..b {
        for cc in 0..b {
            let mass = cdf(a + 1, cc + 1) - cdf(a, cc + 1) - cdf(a + 1, cc) + cdf(a, cc);
            density[a * b + cc] = (mass * scale).max(0.0);
        }
    }
    CopulaGrid::new(b, density, GridKind::Analytic)
}

/// Mean squared difference of two density grids over all bins.
pub fn grid_msd(a: &CopulaGrid, b: &CopulaGrid) -> Result<f64> {
    if a.bins != b.bins {
        return Err(Error::DimensionMismatch(format!(
            "grid bins differ: {} vs {}",
            a.bins, b.bins
        )));
    }
    let sum: f64 = a
        .density
        .iter()
        .zip(&b.density)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / (a.bins * a.bins) as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitResult {
    pub n: f64,
    pub msd: f64,
    /// True when the optimum landed on a search bound.
    pub at_boundary: bool,
}

pub const FIT_BOUNDS: (f64, f64) = (1.0, 500.0);

/// Fit the fluctuation parameter N by minimizing the mean squared density
/// difference against `empirical` at fixed average correlation `c_bar`.
/// Coarse log-spaced scan over `bounds`, then golden-section refinement to
/// relative bracket width 1e-3.
pub fn fit_n(empirical: &CopulaGrid, c_bar: f64, bounds: (f64, f64)) -> Result<FitResult> {
    if !(c_bar.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "|c_bar| must be < 1, got {c_bar}"
        )));
    }
    if empirical.density.iter().any(|d| !d.is_finite()) {
        return Err(Error::Precondition("empirical grid has non-finite entries".into()));
    }
    let bins = empirical.bins;
    let objective = |n: f64| -> Result<f64> {
        let cop = KCopula::new(KCopulaParams::new(c_bar, n)?);
        grid_msd(empirical, &cop.density_grid(bins)?)
    };
    let (lo, hi) = bounds;
    let scan = 48usize;
    let candidates: Vec<f64> = (0..=scan)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / scan as f64).exp())
        .collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|&n| objective(n))
        .collect::<Result<Vec<f64>>>()?;
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    // Golden-section on the log axis inside the bracketing neighbors.
    let mut a = candidates[best.saturating_sub(1)].ln();
    let mut d = candidates[(best + 1).min(scan)].ln();
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut b = d - phi * (d - a);
    let mut c = a + phi * (d - a);
    let mut fb = objective(b.exp())?;
    let mut fc = objective(c.exp())?;
    while (d - a).abs() > 1e-3 {
        if fb <= fc {
            d = c;
            c = b;
            fc = fb;
            b = d - phi * (d - a);
            fb = objective(b.exp())?;
        } else {
            a = b;
            b = c;
            fb = fc;
            c = a + phi * (d - a);
            fc = objective(c.exp())?;
        }
    }
    let (n_star, msd) = if fb <= fc { (b.exp(), fb) } else { (c.exp(), fc) };
    let at_boundary = n_star <= lo * 1.001 || n_star >= hi * 0.999;
    Ok(FitResult {
        n: n_star,
        msd,
        at_boundary,
    })
}

/// Variance of a Wishart ensemble entry around its mean covariance:
/// (Sigma_kl^2 + Sigma_kk Sigma_ll) / N.
pub fn wishart_ensemble_variance(sigma_kl: f64, sigma_kk: f64, sigma_ll: f64, n: f64) -> f64 {
    (sigma_kl * sigma_kl + sigma_kk * sigma_ll) / n
}

/// K-variate K-distribution density (closed Bessel form), used as the
/// simulator's density oracle.
pub fn k_pdf_multivariate(r: &[f64], sigma: &DMatrix<f64>, n: f64) -> Result<f64> {
    let k = r.len();
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "sigma is {}x{}, return vector has length {k}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !(n > 0.0) {
        return Err(Error::InvalidParameter(format!("N must be > 0, got {n}")));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let ln_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let rv = nalgebra::DVector::from_column_slice(r);
    let solved = chol.solve(&rv);
    let q = rv.dot(&solved);
    let kf = k as f64;
    if q <= 0.0 {
        return Ok(if n > kf {
            let ln_f0 = -kf / 2.0 * std::f64::consts::LN_2 + kf / 2.0 * n.ln()
                + ln_gamma((n - kf) / 2.0)
                - ln_gamma(n / 2.0)
                - 0.5 * (kf * LN_2PI + ln_det);
            ln_f0.exp()
        } else {
            f64::INFINITY
        });
    }
    let u = (n * q).sqrt();
    let nu = (kf - n) / 2.0;
    let ln_f = (2.0 - n) / 2.0 * std::f64::consts::LN_2 + kf / 2.0 * n.ln()
        - ln_gamma(n / 2.0)
        - 0.5 * (kf * LN_2PI + ln_det)
        + bessel::ln_bessel_k(nu, u)
        - nu * u.ln();
    Ok(ln_f.exp())
}
