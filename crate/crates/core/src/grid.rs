//! Binned copula densities on the unit square.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Empirical,
    Analytic,
}

/// B x B copula density histogram with bin width 1/B. Entries are densities,
/// so the total mass is sum(density) / B^2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopulaGrid {
    pub bins: usize,
    /// Row-major: density[a * bins + b] is the bin with u in
    /// [a/B, (a+1)/B) and v in [b/B, (b+1)/B).
    pub density: Vec<f64>,
    pub kind: GridKind,
    pub state: Option<usize>,
    /// Number of stock pairs averaged into this grid (1 for a single pair
    /// or an analytic grid).
    pub pairs_averaged: usize,
}

impl CopulaGrid {
    pub fn new(bins: usize, density: Vec<f64>, kind: GridKind) -> Result<Self> {
        if density.len() != bins * bins {
            return Err(Error::DimensionMismatch(format!(
                "grid expects {} entries, got {}",
                bins * bins,
                density.len()
            )));
        }
        Ok(CopulaGrid {
            bins,
            density,
            kind,
            state: None,
            pairs_averaged: 1,
        })
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.density[a * self.bins + b]
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.bins as f64
    }

    /// Total probability mass: sum over bins of density * (1/B)^2.
    pub fn total_mass(&self) -> f64 {
        let d2 = self.bin_width() * self.bin_width();
        self.density.iter().sum::<f64>() * d2
    }

    /// Elementwise mean of several grids of equal bin count.
    pub fn average(grids: &[CopulaGrid]) -> Result<CopulaGrid> {
        let first = grids
            .first()
            .ok_or_else(|| Error::Precondition("no grids to average".into()))?;
        let bins = first.bins;
        let mut density = vec![0.0; bins * bins];
        for g in grids {
            if g.bins != bins {
                return Err(Error::DimensionMismatch("mixed grid bin counts".into()));
            }
            for (acc, d) in density.iter_mut().zip(&g.density) {
                *acc += d;
            }
        }
        let m = grids.len() as f64;
        density.iter_mut().for_each(|d| *d /= m);
        Ok(CopulaGrid {
            bins,
            density,
            kind: first.kind,
            state: first.state,
            pairs_averaged: grids.iter().map(|g| g.pairs_averaged).sum(),
        })
    }

    pub fn transposed(&self) -> CopulaGrid {
        let b = self.bins;
        let mut density = vec![0.0; b * b];
        for a in 0..b {
            for c in 0..b {
                density[c * b + a] = self.density[a * b + c];
            }
        }
        CopulaGrid {
            bins: b,
            density,
            ..self.clone()
        }
    }
}
