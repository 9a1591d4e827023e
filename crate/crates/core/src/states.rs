//! Market-state identification: distances between window correlation
//! matrices, PAM (k-medoids) clustering and gap-statistic model selection.

use crate::error::{Error, Result};
use crate::timeseries::{CorrelationMatrix, ReturnMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const DISTANCE_NAME: &str = "euclidean_upper_triangle";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateModel {
    pub k: usize,
    /// Window indices of the k medoids, in state-id order.
    pub medoids: Vec<usize>,
    /// Per-window state id in 1..=k.
    pub labels: Vec<usize>,
    pub distance_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEntry {
    pub k: usize,
    pub gap: f64,
    pub s_k: f64,
    pub w_k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapCurve {
    pub entries: Vec<GapEntry>,
}

/// Symmetric dissimilarity matrix, stored dense.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_features(features: &[Vec<f64>]) -> Result<DistanceMatrix> {
        let n = features.len();
        let dim = features.first().map_or(0, |f| f.len());
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch(
                "feature vectors have mixed lengths".into(),
            ));
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = features[i]
                    .iter()
                    .zip(&features[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Euclidean distance on the vectorized strict upper triangles of the
/// correlation matrices.
pub fn distance_matrix(correlations: &[CorrelationMatrix]) -> Result<DistanceMatrix> {
    if correlations.is_empty() {
        return Err(Error::Precondition("no correlation matrices".into()));
    }
    let dim = correlations[0].dim();
    if correlations.iter().any(|c| c.dim() != dim) {
        return Err(Error::DimensionMismatch(
            "correlation matrices have mixed dimensions".into(),
        ));
    }
    let features: Vec<Vec<f64>> = correlations.iter().map(|c| c.upper_triangle()).collect();
    DistanceMatrix::from_features(&features)
}

fn total_cost(dist: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..dist.n)
        .map(|i| {
            medoids
                .iter()
                .map(|&m| dist.get(i, m))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn assign(dist: &DistanceMatrix, medoids: &[usize]) -> Vec<usize> {
    (0..dist.n)
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &m) in medoids.iter().enumerate() {
                let d = dist.get(i, m);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// PAM k-medoids: greedy BUILD then best-improvement SWAP until no single
/// medoid/non-medoid exchange lowers the total cost. Ties break toward the
/// lowest index, so runs are reproducible.
pub fn pam_cluster(dist: &DistanceMatrix, k: usize) -> Result<StateModel> {
    let n = dist.n;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    // BUILD: first medoid minimizes total distance, the rest greedily
    // maximize cost reduction.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let first = (0..n)
        .min_by(|&a, &b| {
            let ca: f64 = (0..n).map(|i| dist.get(i, a)).sum();
            let cb: f64 = (0..n).map(|i| dist.get(i, b)).sum();
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        })
        .unwrap();
    medoids.push(first);
    while medoids.len() < k {
        let mut nearest: Vec<f64> = (0..n)
            .map(|i| {
                medoids
                    .iter()
                    .map(|&m| dist.get(i, m))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut best_cand = None;
        let mut best_gain = f64::NEG_INFINITY;
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            let gain: f64 = (0..n)
                .map(|i| (nearest[i] - dist.get(i, cand)).max(0.0))
                .sum();
            if gain > best_gain {
                best_gain = gain;
                best_cand = Some(cand);
            }
        }
        let cand = best_cand.unwrap();
        medoids.push(cand);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist.get(i, cand));
        }
    }

    // SWAP: best-improvement until converged.
    let mut cost = total_cost(dist, &medoids);
    loop {
        let mut best_swap = None;
        let mut best_cost = cost;
        for mi in 0..medoids.len() {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[mi] = cand;
                let c = total_cost(dist, &trial);
                if c < best_cost - 1e-15 {
                    best_cost = c;
                    best_swap = Some((mi, cand));
                }
            }
        }
        match best_swap {
            Some((mi, cand)) => {
                medoids[mi] = cand;
                cost = best_cost;
            }
            None => break,
        }
    }

    // Order states by first window occurrence so state 1 appears earliest.
    let raw = assign(dist, &medoids);
    let mut order: Vec<usize> = Vec::new();
    for &c in &raw {
        if !order.contains(&c) {
            order.push(c);
        }
    }
    for c in 0..medoids.len() {
        if !order.contains(&c) {
            order.push(c);
        }
    }
    let relabel: Vec<usize> = {
        let mut map = vec![0usize; medoids.len()];
        for (new_id, &old) in order.iter().enumerate() {
            map[old] = new_id;
        }
        map
    };
    let labels: Vec<usize> = raw.iter().map(|&c| relabel[c] + 1).collect();
    let mut ordered_medoids = vec![0usize; medoids.len()];
    for (old, &m) in medoids.iter().enumerate() {
        ordered_medoids[relabel[old]] = m;
    }
    Ok(StateModel {
        k,
        medoids: ordered_medoids,
        labels,
        distance_name: DISTANCE_NAME.to_string(),
    })
}

/// Within-cluster dispersion: sum over clusters of the within-cluster
/// pairwise squared distances divided by twice the cluster size, so k = 1
/// matches total scatter.
pub fn within_dispersion(dist: &DistanceMatrix, labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().unwrap_or(0);
    let mut w = 0.0;
    for c in 1..=k {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let d = dist.get(i, j);
                sum += d * d;
            }
        }
        w += sum / members.len() as f64;
    }
    w
}

/// Gap-statistic selection of the cluster count. Reference data sets are
/// drawn uniformly inside the bounding box of the feature vectors; k* is
/// the smallest k with Gap(k) >= Gap(k+1) - s_{k+1}, falling back to k_max.
pub fn gap_select_k(
    features: &[Vec<f64>],
    k_max: usize,
    b_refs: usize,
    seed: u64,
) -> Result<(usize, GapCurve)> {
    let m = features.len();
    if m < 2 {
        return Err(Error::Precondition("need at least 2 windows".into()));
    }
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let k_max = k_max.min(m);
    let dist = DistanceMatrix::from_features(features)?;

    let dim = features[0].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for f in features {
        for (d, &x) in f.iter().enumerate() {
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }

    // Degenerate all-identical input.
    if lo.iter().zip(&hi).all(|(a, b)| a == b) {
        let entries = vec![GapEntry {
            k: 1,
            gap: 0.0,
            s_k: 0.0,
            w_k: 0.0,
        }];
        return Ok((1, GapCurve { entries }));
    }

    let w_obs: Vec<f64> = (1..=k_max)
        .map(|k| {
            let model = pam_cluster(&dist, k)?;
            Ok(within_dispersion(&dist, &model.labels))
        })
        .collect::<Result<Vec<f64>>>()?;

    // B reference clusterings, each from its own derived seed.
    let ref_logs: Vec<Vec<f64>> = (0..b_refs)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64 + 1));
            let ref_features: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    (0..dim)
                        .map(|d| {
                            if lo[d] == hi[d] {
                                lo[d]
                            } else {
                                rng.gen_range(lo[d]..hi[d])
                            }
                        })
                        .collect()
                })
                .collect();
            let ref_dist = DistanceMatrix::from_features(&ref_features)?;
            (1..=k_max)
                .map(|k| {
                    let model = pam_cluster(&ref_dist, k)?;
                    Ok(within_dispersion(&ref_dist, &model.labels).max(f64::MIN_POSITIVE).ln())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut entries = Vec::with_capacity(k_max);
    for (idx, k) in (1..=k_max).enumerate() {
        let logs: Vec<f64> = ref_logs.iter().map(|r| r[idx]).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / logs.len() as f64;
        let s_k = var.sqrt() * (1.0 + 1.0 / b_refs as f64).sqrt();
        let gap = mean - w_obs[idx].max(f64::MIN_POSITIVE).ln();
        entries.push(GapEntry {
            k,
            gap,
            s_k,
            w_k: w_obs[idx],
        });
    }

    let mut k_star = k_max;
    for i in 0..entries.len() - 1 {
        if entries[i].gap >= entries[i + 1].gap - entries[i + 1].s_k {
            k_star = entries[i].k;
            break;
        }
    }
    Ok((k_star, GapCurve { entries }))
}

/// Per-window feature vectors: the vectorized strict upper triangle of
/// each window's correlation matrix, in window order.
pub fn correlation_features(
    returns: &ReturnMatrix,
    windows: &[(usize, Range<usize>)],
) -> Result<Vec<Vec<f64>>> {
    windows
        .iter()
        .map(|(i, r)| {
            Ok(crate::timeseries::correlation_matrix(returns, r.clone(), *i)?.upper_triangle())
        })
        .collect()
}

/// Chronological concatenation of the day ranges of all windows carrying
/// the requested state label.
pub fn assemble_state_series(
    returns: &ReturnMatrix,
    windows: &[(usize, Range<usize>)],
    labels: &[usize],
    state: usize,
) -> Result<ReturnMatrix> {
    if labels.len() != windows.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} windows",
            labels.len(),
            windows.len()
        )));
    }
    let ranges: Vec<Range<usize>> = windows
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == state)
        .map(|((_, r), _)| r.clone())
        .collect();
    if ranges.is_empty() {
        return Err(Error::EmptyState(state));
    }
    Ok(returns.concat_ranges(&ranges))
}
