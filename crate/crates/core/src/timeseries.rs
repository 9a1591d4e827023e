//! Prices to returns, local trend/volatility removal, disjoint windowing
//! and per-window correlation matrices.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone)]
pub struct PriceMatrix {
    pub tickers: Vec<String>,
    /// T+1 calendar-ordered day identifiers.
    pub dates: Vec<String>,
    /// K x (T+1), strictly positive.
    pub values: Vec<Vec<f64>>,
}

impl PriceMatrix {
    pub fn new(tickers: Vec<String>, dates: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != tickers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} price rows for {} tickers",
                values.len(),
                tickers.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::DatesNotIncreasing {
                    row: dates.iter().position(|d| *d == w[1]).unwrap_or(0),
                });
            }
        }
        for (row, ticker) in values.iter().zip(&tickers) {
            if row.len() != dates.len() {
                return Err(Error::DimensionMismatch(format!(
                    "ticker {ticker} has {} prices for {} dates",
                    row.len(),
                    dates.len()
                )));
            }
            for (t, &p) in row.iter().enumerate() {
                if !(p > 0.0) {
                    return Err(Error::NonpositivePrice {
                        ticker: ticker.clone(),
                        date: dates[t].clone(),
                        value: p,
                    });
                }
            }
        }
        Ok(PriceMatrix {
            tickers,
            dates,
            values,
        })
    }

    pub fn num_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Original,
    LocallyNormalized,
}

#[derive(Debug, Clone)]
pub struct ReturnMatrix {
    pub tickers: Vec<String>,
    pub dates: Vec<String>,
    /// K x T. Excluded points (zero local variance during normalization)
    /// hold 0.0 and are marked in `valid`.
    pub values: Vec<Vec<f64>>,
    pub kind: ReturnKind,
    /// None means every point is valid.
    pub(crate) valid: Option<Vec<Vec<bool>>>,
}

impl ReturnMatrix {
    /// Build a return matrix directly from values with every point valid.
    pub fn from_values(
        tickers: Vec<String>,
        dates: Vec<String>,
        values: Vec<Vec<f64>>,
        kind: ReturnKind,
    ) -> Result<Self> {
        if values.len() != tickers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} return rows for {} tickers",
                values.len(),
                tickers.len()
            )));
        }
        if values.iter().any(|row| row.len() != dates.len()) {
            return Err(Error::DimensionMismatch(
                "return row lengths disagree with date count".into(),
            ));
        }
        Ok(ReturnMatrix {
            tickers,
            dates,
            values,
            kind,
            valid: None,
        })
    }

    pub fn num_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    pub fn is_valid(&self, stock: usize, t: usize) -> bool {
        self.valid.as_ref().map_or(true, |m| m[stock][t])
    }

    pub fn has_exclusions(&self) -> bool {
        self.valid.is_some()
    }

    /// Chronological slice over the given day ranges, preserving kind and
    /// validity flags.
    pub fn concat_ranges(&self, ranges: &[Range<usize>]) -> ReturnMatrix {
        let pick = |row: &Vec<f64>| -> Vec<f64> {
            ranges.iter().flat_map(|r| row[r.clone()].to_vec()).collect()
        };
        ReturnMatrix {
            tickers: self.tickers.clone(),
            dates: ranges
                .iter()
                .flat_map(|r| self.dates[r.clone()].to_vec())
                .collect(),
            values: self.values.iter().map(pick).collect(),
            kind: self.kind,
            valid: self.valid.as_ref().map(|m| {
                m.iter()
                    .map(|row| ranges.iter().flat_map(|r| row[r.clone()].to_vec()).collect())
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Trading days per window; consecutive disjoint blocks, trailing
    /// remainder dropped.
    pub window_length: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { window_length: 42 }
    }
}

impl WindowSpec {
    pub fn new(window_length: usize) -> Result<Self> {
        if window_length < 2 {
            return Err(Error::InvalidParameter(
                "window_length must be at least 2".into(),
            ));
        }
        Ok(WindowSpec { window_length })
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    /// K x K, symmetric, unit diagonal.
    pub values: Vec<Vec<f64>>,
    pub window_index: usize,
    /// Stocks whose window had zero variance; their off-diagonals are 0.
    pub flagged: Vec<usize>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Strict upper triangle, row-major.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let k = self.dim();
        let mut out = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                out.push(self.values[i][j]);
            }
        }
        out
    }
}

/// Simple returns r(t) = (S(t + dt) - S(t)) / S(t).
pub fn compute_returns(prices: &PriceMatrix, dt: usize) -> Result<ReturnMatrix> {
    if dt == 0 {
        return Err(Error::InvalidParameter("return interval must be >= 1".into()));
    }
    if prices.num_days() <= dt {
        return Err(Error::Precondition(format!(
            "need more than {dt} price days, got {}",
            prices.num_days()
        )));
    }
    let t_out = prices.num_days() - dt;
    let values = prices
        .values
        .iter()
        .map(|row| (0..t_out).map(|t| (row[t + dt] - row[t]) / row[t]).collect())
        .collect();
    Ok(ReturnMatrix {
        tickers: prices.tickers.clone(),
        dates: prices.dates[..t_out].to_vec(),
        values,
        kind: ReturnKind::Original,
        valid: None,
    })
}

/// Subtract the trailing local mean and divide by the trailing local
/// (population) standard deviation over the n most recent points including
/// the current one. The first n-1 points are dropped. Points whose local
/// window has zero variance are excluded rather than emitted; returns the
/// per-stock exclusion counts alongside the normalized matrix.
pub fn local_normalize(returns: &ReturnMatrix, n: usize) -> Result<(ReturnMatrix, Vec<usize>)> {
    if returns.kind != ReturnKind::Original {
        return Err(Error::Precondition(
            "local_normalize expects original returns".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("local window must be >= 1".into()));
    }
    let t_in = returns.num_days();
    if t_in < n {
        return Err(Error::Precondition(format!(
            "need at least n={n} days, got {t_in}"
        )));
    }
    let t_out = t_in - (n - 1);
    let mut values = vec![vec![0.0; t_out]; returns.num_stocks()];
    let mut valid = vec![vec![true; t_out]; returns.num_stocks()];
    let mut excluded = vec![0usize; returns.num_stocks()];
    let mut any_excluded = false;
    for (k, row) in returns.values.iter().enumerate() {
        for t in (n - 1)..t_in {
            let window = &row[t + 1 - n..=t];
            let mean = window.iter().sum::<f64>() / n as f64;
            let var = window.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
            let out = t - (n - 1);
            if var > 0.0 {
                values[k][out] = (row[t] - mean) / var.sqrt();
            } else {
                valid[k][out] = false;
                excluded[k] += 1;
                any_excluded = true;
            }
        }
    }
    Ok((
        ReturnMatrix {
            tickers: returns.tickers.clone(),
            dates: returns.dates[n - 1..].to_vec(),
            values,
            kind: ReturnKind::LocallyNormalized,
            valid: if any_excluded { Some(valid) } else { None },
        },
        excluded,
    ))
}

/// Disjoint consecutive windows of exactly `window_length` days; a trailing
/// remainder is dropped.
pub fn partition_windows(num_days: usize, spec: WindowSpec) -> Result<Vec<(usize, Range<usize>)>> {
    let w = spec.window_length;
    if num_days < w {
        return Err(Error::Precondition(format!(
            "need at least {w} days for one window, got {num_days}"
        )));
    }
    Ok((0..num_days / w).map(|i| (i, i * w..(i + 1) * w)).collect())
}

/// Pearson coefficient of two series over their jointly valid points,
/// population moments. Returns None when either side has zero variance.
fn pearson(
    a: &[f64],
    b: &[f64],
    valid: impl Fn(usize) -> bool,
) -> Option<f64> {
    let mut count = 0usize;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..a.len() {
        if !valid(t) {
            continue;
        }
        count += 1;
        sa += a[t];
        sb += b[t];
        saa += a[t] * a[t];
        sbb += b[t] * b[t];
        sab += a[t] * b[t];
    }
    if count < 2 {
        return None;
    }
    let m = count as f64;
    let cov = sab / m - (sa / m) * (sb / m);
    let va = saa / m - (sa / m) * (sa / m);
    let vb = sbb / m - (sb / m) * (sb / m);
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise Pearson correlation matrix over one window. Stocks with zero
/// variance in the window get zero off-diagonals and are flagged.
pub fn correlation_matrix(
    returns: &ReturnMatrix,
    range: Range<usize>,
    window_index: usize,
) -> Result<CorrelationMatrix> {
    if range.len() < 2 {
        return Err(Error::Precondition("window must span at least 2 days".into()));
    }
    if range.end > returns.num_days() {
        return Err(Error::Precondition(format!(
            "window {:?} exceeds {} days",
            range,
            returns.num_days()
        )));
    }
    let k = returns.num_stocks();
    let rows: Vec<&[f64]> = returns
        .values
        .iter()
        .map(|row| &row[range.clone()])
        .collect();
    let mut values = vec![vec![0.0; k]; k];
    let mut flagged = Vec::new();
    for i in 0..k {
        values[i][i] = 1.0;
        // degenerate single-stock check
        let self_ok = pearson(rows[i], rows[i], |t| returns.is_valid(i, range.start + t));
        if self_ok.is_none() {
            flagged.push(i);
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            let r = pearson(rows[i], rows[j], |t| {
                returns.is_valid(i, range.start + t) && returns.is_valid(j, range.start + t)
            })
            .unwrap_or(0.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        values,
        window_index,
        flagged,
    })
}

/// All distinct stock pairs (k, l) with k < l.
pub fn all_pairs(num_stocks: usize) -> Vec<(usize, usize)> {
    (0..num_stocks)
        .flat_map(|i| (i + 1..num_stocks).map(move |j| (i, j)))
        .collect()
}

/// Mean pairwise Pearson coefficient over the full supplied sample.
pub fn average_correlation(returns: &ReturnMatrix, pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Precondition("need at least one pair".into()));
    }
    let mut total = 0.0;
    for &(i, j) in pairs {
        let r = pearson(&returns.values[i], &returns.values[j], |t| {
            returns.is_valid(i, t) && returns.is_valid(j, t)
        })
        .unwrap_or(0.0);
        total += r;
    }
    Ok(total / pairs.len() as f64)
}
