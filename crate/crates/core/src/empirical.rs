//! Empirical pairwise copula estimation and tail-dependence statistics.

use crate::error::{Error, Result};
use crate::grid::{CopulaGrid, GridKind};
use crate::timeseries::ReturnMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rank-transformed series with values in (0, 1).
#[derive(Debug, Clone)]
pub struct RankSeries {
    pub values: Vec<f64>,
}

/// u(t) = (1/T) #{tau : r(tau) <= r(t)} - 1/(2T). Ties all receive the
/// maximal indicator count.
pub fn rank_transform(series: &[f64]) -> RankSeries {
    let t = series.len();
    assert!(t >= 1, "rank transform needs at least one point");
    let mut sorted: Vec<f64> = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tf = t as f64;
    let values = series
        .iter()
        .map(|&x| {
            // number of entries <= x; the single division keeps the sorted
            // outputs exactly on the lattice {(j - 1/2)/T}
            let count = sorted.partition_point(|&s| s <= x);
            (count as f64 - 0.5) / tf
        })
        .collect();
    RankSeries { values }
}

/// Two-dimensional histogram of a rank pair, stored as density. Bins are
/// half-open with the last bin closed; rank values never touch 0 or 1, so
/// binning is unambiguous.
pub fn pair_copula_histogram(u: &RankSeries, v: &RankSeries, bins: usize) -> Result<CopulaGrid> {
    if u.values.len() != v.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "rank series lengths differ: {} vs {}",
            u.values.len(),
            v.values.len()
        )));
    }
    let t = u.values.len();
    if t == 0 {
        return Err(Error::Precondition("empty rank series".into()));
    }
    let b = bins;
    let mut counts = vec![0u64; b * b];
    for (&x, &y) in u.values.iter().zip(&v.values) {
        let a = ((x * b as f64) as usize).min(b - 1);
        let c = ((y * b as f64) as usize).min(b - 1);
        counts[a * b + c] += 1;
    }
    let delta2 = 1.0 / (b * b) as f64;
    let density = counts
        .iter()
        .map(|&n| n as f64 / (t as f64 * delta2))
        .collect();
    CopulaGrid::new(b, density, GridKind::Empirical)
}

/// Rank series per stock, aligned to the time axis; excluded points are
/// None and are ranked only among a stock's own valid points.
fn rank_rows(returns: &ReturnMatrix) -> Vec<Vec<Option<f64>>> {
    (0..returns.num_stocks())
        .map(|k| {
            let t = returns.num_days();
            let valid_idx: Vec<usize> = (0..t).filter(|&s| returns.is_valid(k, s)).collect();
            let vals: Vec<f64> = valid_idx.iter().map(|&s| returns.values[k][s]).collect();
            let mut out = vec![None; t];
            if !vals.is_empty() {
                let ranks = rank_transform(&vals);
                for (&s, &r) in valid_idx.iter().zip(&ranks.values) {
                    out[s] = Some(r);
                }
            }
            out
        })
        .collect()
}

fn pair_grid_from_rows(
    ranks: &[Vec<Option<f64>>],
    k: usize,
    l: usize,
    bins: usize,
) -> Result<CopulaGrid> {
    let mut u = Vec::new();
    let mut v = Vec::new();
    for (a, b) in ranks[k].iter().zip(&ranks[l]) {
        if let (Some(x), Some(y)) = (a, b) {
            u.push(*x);
            v.push(*y);
        }
    }
    pair_copula_histogram(&RankSeries { values: u }, &RankSeries { values: v }, bins)
}

/// Mean of the K(K-1)/2 pairwise copula grids for one state's return
/// series.
pub fn state_average_copula(returns: &ReturnMatrix, bins: usize) -> Result<CopulaGrid> {
    let k = returns.num_stocks();
    if k < 2 {
        return Err(Error::Precondition("need at least two stocks".into()));
    }
    let ranks = rank_rows(returns);
    let pairs = crate::timeseries::all_pairs(k);
    let grids: Vec<CopulaGrid> = pairs
        .par_iter()
        .map(|&(a, b)| pair_grid_from_rows(&ranks, a, b, bins))
        .collect::<Result<Vec<_>>>()?;
    CopulaGrid::average(&grids)
}

/// Corner masses of the four 0.2 x 0.2 tail squares and their asymmetries
/// alpha = UU - LL, beta = LU - UL.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailStats {
    pub ll: f64,
    pub ul: f64,
    pub uu: f64,
    pub lu: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Tail masses from a copula grid. The bin count must be divisible by 5 so
/// the 0.2 corner boundary lands on bin edges.
pub fn tail_corner_masses(grid: &CopulaGrid) -> Result<TailStats> {
    if grid.bins % 5 != 0 {
        return Err(Error::InvalidParameter(format!(
            "tail corners need bins divisible by 5 (so 0.2 aligns with bin edges); got {}",
            grid.bins
        )));
    }
    let b = grid.bins;
    let m = b / 5;
    let d2 = grid.bin_width() * grid.bin_width();
    let block = |a0: usize, c0: usize| -> f64 {
        let mut mass = 0.0;
        for a in a0..a0 + m {
            for c in c0..c0 + m {
                mass += grid.at(a, c) * d2;
            }
        }
        mass
    };
    let ll = block(0, 0);
    let uu = block(b - m, b - m);
    let ul = block(b - m, 0);
    let lu = block(0, b - m);
    Ok(TailStats {
        ll,
        ul,
        uu,
        lu,
        alpha: uu - ll,
        beta: lu - ul,
    })
}

/// Per-pair tail statistics for one state plus their means and both
/// population and sample standard deviations over pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateAsymmetry {
    /// (stock k, stock l, tail stats of that pair's own histogram)
    pub per_pair: Vec<(usize, usize, TailStats)>,
    pub alpha_mean: f64,
    pub beta_mean: f64,
    pub alpha_std_pop: f64,
    pub alpha_std_sample: f64,
    pub beta_std_pop: f64,
    pub beta_std_sample: f64,
}

fn spread(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    let pop = (ss / n).sqrt();
    let sample = if values.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, pop, sample)
}

pub fn state_asymmetry(returns: &ReturnMatrix, bins: usize) -> Result<StateAsymmetry> {
    let k = returns.num_stocks();
    if k < 2 {
        return Err(Error::Precondition("need at least two stocks".into()));
    }
    let ranks = rank_rows(returns);
    let pairs = crate::timeseries::all_pairs(k);
    let per_pair: Vec<(usize, usize, TailStats)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let grid = pair_grid_from_rows(&ranks, a, b, bins)?;
            Ok((a, b, tail_corner_masses(&grid)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let alphas: Vec<f64> = per_pair.iter().map(|p| p.2.alpha).collect();
    let betas: Vec<f64> = per_pair.iter().map(|p| p.2.beta).collect();
    let (alpha_mean, alpha_std_pop, alpha_std_sample) = spread(&alphas);
    let (beta_mean, beta_std_pop, beta_std_sample) = spread(&betas);
    Ok(StateAsymmetry {
        per_pair,
        alpha_mean,
        beta_mean,
        alpha_std_pop,
        alpha_std_sample,
        beta_std_pop,
        beta_std_sample,
    })
}
