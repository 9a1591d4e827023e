//! Synthetic market generation from the gamma-mixture (Wishart) return
//! model, with known per-regime parameters for ground-truth testing.

use crate::error::{Error, Result};
use crate::timeseries::PriceMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeSegment {
    /// Length in days.
    pub days: usize,
    /// Equicorrelation level, |c| < 1.
    pub c: f64,
    /// Fluctuation parameter, N > 0.
    pub n: f64,
    /// Per-stock volatility scale; a single entry is broadcast to all
    /// stocks.
    pub vols: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeSchedule {
    pub segments: Vec<RegimeSegment>,
    pub num_stocks: usize,
    pub seed: u64,
}

impl RegimeSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.num_stocks == 0 {
            return Err(Error::InvalidParameter("need at least one stock".into()));
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("schedule has no segments".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.days == 0 {
                return Err(Error::InvalidParameter(format!("segment {i} has zero days")));
            }
            if !(seg.c.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: |c| must be < 1, got {}",
                    seg.c
                )));
            }
            if !(seg.n > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: N must be > 0, got {}",
                    seg.n
                )));
            }
            if seg.vols.is_empty() || seg.vols.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: volatilities must be positive"
                )));
            }
            if seg.vols.len() != 1 && seg.vols.len() != self.num_stocks {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: {} volatilities for {} stocks",
                    seg.vols.len(),
                    self.num_stocks
                )));
            }
        }
        Ok(())
    }

    pub fn total_days(&self) -> usize {
        self.segments.iter().map(|s| s.days).sum()
    }
}

/// Equicorrelated covariance with the given correlation and per-stock
/// volatilities.
pub fn equicorrelation_sigma(k: usize, c: f64, vols: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| {
        let vi = vols[i.min(vols.len() - 1)];
        let vj = vols[j.min(vols.len() - 1)];
        if i == j {
            vi * vi
        } else {
            c * vi * vj
        }
    })
}

/// T independent draws of the K-distributed return vector: per day,
/// z ~ Gamma(N/2, 1) and the return vector is centered Gaussian with
/// covariance (2z/N) Sigma.
pub fn sample_k_returns(
    sigma: &DMatrix<f64>,
    n: f64,
    days: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    if !(n > 0.0) {
        return Err(Error::InvalidParameter(format!("N must be > 0, got {n}")));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let k = sigma.nrows();
    let gamma = Gamma::new(n / 2.0, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma shape: {e}")))?;
    let mut out = vec![vec![0.0; days]; k];
    for t in 0..days {
        let z: f64 = gamma.sample(rng);
        let s = (2.0 * z / n).sqrt();
        let g = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let r = &l * g;
        for i in 0..k {
            out[i][t] = s * r[i];
        }
    }
    Ok(out)
}

/// K x N Wishart model matrix: columns i.i.d. centered Gaussian with
/// covariance Sigma/N, so E[A A^T] = Sigma. Integer N only.
pub fn sample_wishart_model_matrix(
    sigma: &DMatrix<f64>,
    n: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let k = sigma.nrows();
    let scale = 1.0 / (n as f64).sqrt();
    let mut a = DMatrix::zeros(k, n);
    for col in 0..n {
        let g = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let v = &l * g * scale;
        a.set_column(col, &v);
    }
    Ok(a)
}

#[derive(Debug, Clone)]
pub struct SimulatedMarket {
    pub prices: PriceMatrix,
    /// Ground-truth regime id (1-based segment index) per return day.
    pub day_labels: Vec<usize>,
    /// Number of resampled return vectors (|r| >= 1 rejection rule).
    pub resampled: usize,
}

fn synthetic_dates(count: usize) -> Vec<String> {
    let start = chrono::NaiveDate::from_ymd_opt(1992, 1, 1).unwrap();
    (0..count)
        .map(|i| {
            (start + chrono::Days::new(i as u64))
                .format("%Y-%m-%d")
                .to_string()
        })
        .collect()
}

/// Concatenated per-segment draws converted to prices via simple-return
/// compounding from 100. Any day whose return vector contains |r| >= 1 is
/// resampled so prices stay positive; resamples are counted and the run
/// aborts if they exceed 0.1% of the draws.
pub fn simulate_market(schedule: &RegimeSchedule) -> Result<SimulatedMarket> {
    schedule.validate()?;
    let k = schedule.num_stocks;
    let total = schedule.total_days();
    let mut returns = vec![Vec::with_capacity(total); k];
    let mut day_labels = Vec::with_capacity(total);
    let mut resampled = 0usize;

    for (seg_idx, seg) in schedule.segments.iter().enumerate() {
        // independent stream per segment, derived from the master seed
        let mut rng = ChaCha12Rng::seed_from_u64(schedule.seed);
        rng.set_stream(seg_idx as u64 + 1);
        let sigma = equicorrelation_sigma(k, seg.c, &seg.vols);
        let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let gamma = Gamma::new(seg.n / 2.0, 1.0)
            .map_err(|e| Error::InvalidParameter(format!("gamma shape: {e}")))?;
        for _ in 0..seg.days {
            let day = loop {
                let z: f64 = gamma.sample(&mut rng);
                let s = (2.0 * z / seg.n).sqrt();
                let g = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let r = &l * g * s;
                if r.iter().all(|x| x.abs() < 1.0) {
                    break r;
                }
                resampled += 1;
                if resampled * 1000 > total.max(1000) {
                    return Err(Error::ResampleBudget {
                        resampled,
                        total,
                    });
                }
            };
            for i in 0..k {
                returns[i].push(day[i]);
            }
            day_labels.push(seg_idx + 1);
        }
    }

    let mut values = vec![vec![100.0; total + 1]; k];
    for i in 0..k {
        for t in 0..total {
            values[i][t + 1] = values[i][t] * (1.0 + returns[i][t]);
        }
    }
    let prices = PriceMatrix::new(
        (0..k).map(|i| format!("SYN{i:03}")).collect(),
        synthetic_dates(total + 1),
        values,
    )?;
    Ok(SimulatedMarket {
        prices,
        day_labels,
        resampled,
    })
}
