//! End-to-end orchestration: ingest, returns, local normalization,
//! windowed correlations, state clustering, per-state copulas, parameter
//! fits and tail statistics, with all artifacts written atomically.

use crate::empirical::{state_asymmetry, state_average_copula};
use crate::error::{Error, Result};
use crate::grid::{CopulaGrid, GridKind};
use crate::io::{
    self, read_prices_csv, write_gap_csv, write_grid_csv, write_state_model_json, write_tail_csv,
    MissingPolicy,
};
use crate::kcopula::{fit_n, grid_msd, KCopula, KCopulaParams};
use crate::states::{
    assemble_state_series, correlation_features, gap_select_k, pam_cluster, DistanceMatrix,
    GapCurve, GapEntry, StateModel, DISTANCE_NAME,
};
use crate::timeseries::{
    average_correlation, compute_returns, local_normalize, partition_windows, all_pairs,
    ReturnMatrix, WindowSpec,
};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "defaults::window_length")]
    pub window_length: usize,
    #[serde(default = "defaults::local_n")]
    pub local_n: usize,
    #[serde(default = "defaults::bins")]
    pub bins: usize,
    #[serde(default = "defaults::gap_k_max")]
    pub gap_k_max: usize,
    #[serde(default = "defaults::gap_refs")]
    pub gap_refs: usize,
    #[serde(default = "defaults::fit_n_min")]
    pub fit_n_min: f64,
    #[serde(default = "defaults::fit_n_max")]
    pub fit_n_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

mod defaults {
    pub fn window_length() -> usize {
        42
    }
    pub fn local_n() -> usize {
        13
    }
    pub fn bins() -> usize {
        20
    }
    pub fn gap_k_max() -> usize {
        10
    }
    pub fn gap_refs() -> usize {
        50
    }
    pub fn fit_n_min() -> f64 {
        crate::kcopula::FIT_BOUNDS.0
    }
    pub fn fit_n_max() -> f64 {
        crate::kcopula::FIT_BOUNDS.1
    }
}

impl PipelineConfig {
    pub fn new(input: PathBuf, output_dir: PathBuf) -> Self {
        PipelineConfig {
            input,
            output_dir,
            window_length: defaults::window_length(),
            local_n: defaults::local_n(),
            bins: defaults::bins(),
            gap_k_max: defaults::gap_k_max(),
            gap_refs: defaults::gap_refs(),
            fit_n_min: defaults::fit_n_min(),
            fit_n_max: defaults::fit_n_max(),
            seed: 0,
            missing_policy: MissingPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 {
            return Err(Error::InvalidParameter("window_length must be >= 2".into()));
        }
        if self.local_n < 2 {
            return Err(Error::InvalidParameter("local_n must be >= 2".into()));
        }
        if self.bins < 2 || self.bins % 5 != 0 {
            return Err(Error::InvalidParameter(
                "bins must be >= 2 and divisible by 5".into(),
            ));
        }
        if self.gap_k_max == 0 || self.gap_refs == 0 {
            return Err(Error::InvalidParameter(
                "gap_k_max and gap_refs must be >= 1".into(),
            ));
        }
        if !(self.fit_n_min > 0.0 && self.fit_n_max > self.fit_n_min) {
            return Err(Error::InvalidParameter("bad fit bounds".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidParameter(format!("config serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub state: usize,
    pub window_count: usize,
    pub series_length: usize,
    pub c_bar: f64,
    pub n_star: f64,
    pub msd: f64,
    pub fit_at_boundary: bool,
    pub alpha_mean: f64,
    pub beta_mean: f64,
    pub alpha_std_pop: f64,
    pub alpha_std_sample: f64,
    pub beta_std_pop: f64,
    pub beta_std_sample: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchReport {
    /// "original" or "locally_normalized".
    pub branch: String,
    pub states: Vec<StateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateReport {
    pub seed: u64,
    pub num_stocks: usize,
    pub num_windows: usize,
    pub k: usize,
    pub window_labels: Vec<usize>,
    pub excluded_points_total: usize,
    pub dropped_tickers: Vec<String>,
    pub original: BranchReport,
    pub locally_normalized: BranchReport,
}

fn branch_report(
    name: &str,
    returns: &ReturnMatrix,
    windows: &[(usize, Range<usize>)],
    labels: &[usize],
    k: usize,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<BranchReport> {
    let pairs = all_pairs(returns.num_stocks());
    let mut states = Vec::with_capacity(k);
    for state in 1..=k {
        let series = assemble_state_series(returns, windows, labels, state)?;
        let c_bar = average_correlation(&series, &pairs)?;
        let empirical = state_average_copula(&series, cfg.bins)?;
        let fit = fit_n(&empirical, c_bar, (cfg.fit_n_min, cfg.fit_n_max))?;
        let analytic = KCopula::new(KCopulaParams::new(c_bar, fit.n)?).density_grid(cfg.bins)?;
        let mut diff = CopulaGrid::new(
            cfg.bins,
            empirical
                .density
                .iter()
                .zip(&analytic.density)
                .map(|(e, a)| e - a)
                .collect(),
            GridKind::Empirical,
        )?;
        diff.state = Some(state);
        let asym = state_asymmetry(&series, cfg.bins)?;

        write_grid_csv(&out.join(format!("state_{state}_empirical.csv")), &empirical)?;
        write_grid_csv(&out.join(format!("state_{state}_analytic.csv")), &analytic)?;
        write_grid_csv(&out.join(format!("state_{state}_difference.csv")), &diff)?;
        io::validate_grid_csv(&out.join(format!("state_{state}_empirical.csv")), cfg.bins, 1e-6)?;
        io::validate_grid_csv(&out.join(format!("state_{state}_analytic.csv")), cfg.bins, 1e-5)?;
        write_tail_csv(&out.join(format!("state_{state}_tails.csv")), &asym.per_pair)?;

        states.push(StateRecord {
            state,
            window_count: labels.iter().filter(|&&l| l == state).count(),
            series_length: series.num_days(),
            c_bar,
            n_star: fit.n,
            msd: fit.msd,
            fit_at_boundary: fit.at_boundary,
            alpha_mean: asym.alpha_mean,
            beta_mean: asym.beta_mean,
            alpha_std_pop: asym.alpha_std_pop,
            alpha_std_sample: asym.alpha_std_sample,
            beta_std_pop: asym.beta_std_pop,
            beta_std_sample: asym.beta_std_sample,
        });
    }
    Ok(BranchReport {
        branch: name.to_string(),
        states,
    })
}

/// Run the full pipeline and write every artifact under
/// `config.output_dir`. Outputs are staged in a sibling directory and moved
/// into place only on success, so a failed run leaves no partial output.
pub fn run_pipeline(config: &PipelineConfig) -> Result<StateReport> {
    config.validate()?;
    let staging = config.output_dir.with_extension("staging");
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = run_pipeline_into(config, &staging);
    match result {
        Ok(report) => {
            if config.output_dir.exists() {
                std::fs::remove_dir_all(&config.output_dir)?;
            }
            std::fs::rename(&staging, &config.output_dir)?;
            Ok(report)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn run_pipeline_into(config: &PipelineConfig, out: &Path) -> Result<StateReport> {
    let (prices, ingest) =
        read_prices_csv(&config.input, config.missing_policy).map_err(|e| e.in_stage("ingest"))?;

    let original = compute_returns(&prices, 1).map_err(|e| e.in_stage("returns"))?;
    let (normalized, excluded) =
        local_normalize(&original, config.local_n).map_err(|e| e.in_stage("normalize"))?;

    // Windows are defined on the locally normalized time axis; the original
    // branch addresses the same calendar days via a fixed offset.
    let spec = WindowSpec::new(config.window_length)?;
    let windows =
        partition_windows(normalized.num_days(), spec).map_err(|e| e.in_stage("windows"))?;
    let offset = config.local_n - 1;
    let windows_original: Vec<(usize, Range<usize>)> = windows
        .iter()
        .map(|(i, r)| (*i, r.start + offset..r.end + offset))
        .collect();

    // Clustering runs once, on the normalized branch; both branches share
    // the labels.
    let features = (|| -> Result<Vec<Vec<f64>>> {
        correlation_features(&normalized, &windows)
    })()
    .map_err(|e| e.in_stage("correlations"))?;
    let (k, curve, model) = (|| -> Result<(usize, GapCurve, StateModel)> {
        if windows.len() == 1 {
            // degenerate single-window panel
            let curve = GapCurve {
                entries: vec![GapEntry {
                    k: 1,
                    gap: 0.0,
                    s_k: 0.0,
                    w_k: 0.0,
                }],
            };
            let model = StateModel {
                k: 1,
                medoids: vec![0],
                labels: vec![1],
                distance_name: DISTANCE_NAME.to_string(),
            };
            return Ok((1, curve, model));
        }
        let (k, curve) = gap_select_k(&features, config.gap_k_max, config.gap_refs, config.seed)?;
        let dist = DistanceMatrix::from_features(&features)?;
        let model = pam_cluster(&dist, k)?;
        Ok((k, curve, model))
    })()
    .map_err(|e| e.in_stage("cluster"))?;

    write_gap_csv(&out.join("gap_curve.csv"), &curve).map_err(|e| e.in_stage("emit"))?;
    write_state_model_json(&out.join("state_model.json"), &model, config.seed)
        .map_err(|e| e.in_stage("emit"))?;

    let norm_dir = out.join("locally_normalized");
    let orig_dir = out.join("original");
    std::fs::create_dir_all(&norm_dir)?;
    std::fs::create_dir_all(&orig_dir)?;
    let normalized_report = branch_report(
        "locally_normalized",
        &normalized,
        &windows,
        &model.labels,
        k,
        config,
        &norm_dir,
    )
    .map_err(|e| e.in_stage("copulas"))?;
    let original_report = branch_report(
        "original",
        &original,
        &windows_original,
        &model.labels,
        k,
        config,
        &orig_dir,
    )
    .map_err(|e| e.in_stage("copulas"))?;

    let report = StateReport {
        seed: config.seed,
        num_stocks: prices.num_stocks(),
        num_windows: windows.len(),
        k,
        window_labels: model.labels.clone(),
        excluded_points_total: excluded.iter().sum(),
        dropped_tickers: ingest.dropped.iter().map(|(t, _)| t.clone()).collect(),
        original: original_report,
        locally_normalized: normalized_report,
    };
    io::write_json(&out.join("report.json"), &report).map_err(|e| e.in_stage("emit"))?;
    Ok(report)
}

/// Analytic K-copula density grids for a list of (c, N) parameter pairs,
/// one CSV per pair.
pub fn emit_figure_grids(
    pairs: &[(f64, f64)],
    bins: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for &(c, n) in pairs {
        let grid = KCopula::new(KCopulaParams::new(c, n)?).density_grid(bins)?;
        let path = out_dir.join(format!("kcopula_c{c:+.2}_n{n:.1}.csv"));
        write_grid_csv(&path, &grid)?;
        io::validate_grid_csv(&path, bins, 1e-6)?;
        written.push(path);
    }
    Ok(written)
}

/// Default parameter pairs behind the four-panel density figure.
pub const FIGURE_PAIRS: [(f64, f64); 4] = [(0.0, 5.0), (0.5, 5.0), (0.2, 3.0), (0.2, 30.0)];

/// Mean squared difference between an empirical grid and the Gaussian
/// copula at the same average correlation (the comparison column of the
/// goodness-of-fit table).
pub fn gaussian_msd(empirical: &CopulaGrid, c_bar: f64) -> Result<f64> {
    let g = crate::kcopula::gaussian_copula_density_grid(c_bar, empirical.bins)?;
    grid_msd(empirical, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_prices_csv;
    use crate::simulator::{simulate_market, RegimeSchedule, RegimeSegment};
    use sha2::{Digest, Sha256};

    fn two_regime_config(dir: &Path, seed: u64) -> PipelineConfig {
        // segment lengths chosen so regime switches align with window edges
        // after the 12-day normalization offset
        let schedule = RegimeSchedule {
            segments: vec![
                RegimeSegment {
                    days: 42 * 6 + 13,
                    c: 0.0,
                    n: 50.0,
                    vols: vec![0.01],
                },
                RegimeSegment {
                    days: 42 * 6,
                    c: 0.6,
                    n: 5.0,
                    vols: vec![0.01],
                },
            ],
            num_stocks: 10,
            seed: 2024,
        };
        let sim = simulate_market(&schedule).unwrap();
        let input = dir.join("prices.csv");
        write_prices_csv(&input, &sim.prices).unwrap();
        let mut cfg = PipelineConfig::new(input, dir.join("out"));
        cfg.gap_k_max = 5;
        cfg.gap_refs = 20;
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = PipelineConfig::new("in.csv".into(), "out".into());
        cfg.window_length = 30;
        cfg.seed = 17;
        cfg.fit_n_max = 77.5;
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back.window_length, 30);
        assert_eq!(back.seed, 17);
        assert_eq!(back.fit_n_max, 77.5);
        assert_eq!(back.input, cfg.input);
        // defaults fill in when keys are omitted
        let minimal = PipelineConfig::from_toml(
            "input = \"a.csv\"\noutput_dir = \"o\"\n",
        )
        .unwrap();
        assert_eq!(minimal.window_length, 42);
        assert_eq!(minimal.local_n, 13);
        assert_eq!(minimal.bins, 20);
        // unknown keys are rejected rather than silently ignored
        assert!(PipelineConfig::from_toml("input = \"a\"\noutput_dir = \"o\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = PipelineConfig::new("a".into(), "b".into());
        cfg.bins = 12;
        assert!(cfg.validate().is_err());
        cfg.bins = 20;
        cfg.fit_n_max = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn two_regime_fixture_recovers_states() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = two_regime_config(dir.path(), 5);
        let report = run_pipeline(&cfg).unwrap();
        assert_eq!(report.k, 2);
        assert_eq!(report.num_windows, 12);
        // ground truth: first six windows regime 1, last six regime 2
        let truth: Vec<usize> = (0..12).map(|w| if w < 6 { 1 } else { 2 }).collect();
        let hits = report
            .window_labels
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a == b)
            .count();
        assert!(hits >= 11, "labels {:?}", report.window_labels);
        // window counts partition the total
        for branch in [&report.original, &report.locally_normalized] {
            let total: usize = branch.states.iter().map(|s| s.window_count).sum();
            assert_eq!(total, 12);
        }
        // high-correlation state shows up with clearly larger c_bar
        let st = &report.locally_normalized.states;
        assert!(st[1].c_bar > st[0].c_bar + 0.3, "{st:?}");
        // artifacts exist and validate
        assert!(cfg.output_dir.join("report.json").exists());
        assert!(cfg.output_dir.join("gap_curve.csv").exists());
        assert!(cfg
            .output_dir
            .join("locally_normalized/state_1_empirical.csv")
            .exists());
        assert!(cfg.output_dir.join("original/state_2_tails.csv").exists());
    }

    #[test]
    fn single_window_input_degenerates_to_one_state() {
        let schedule = RegimeSchedule {
            segments: vec![RegimeSegment {
                days: 42 + 13,
                c: 0.2,
                n: 10.0,
                vols: vec![0.01],
            }],
            num_stocks: 5,
            seed: 3,
        };
        let sim = simulate_market(&schedule).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("p.csv");
        write_prices_csv(&input, &sim.prices).unwrap();
        let cfg = PipelineConfig::new(input, dir.path().join("out"));
        let report = run_pipeline(&cfg).unwrap();
        assert_eq!(report.k, 1);
        assert_eq!(report.window_labels, vec![1]);
        assert_eq!(report.locally_normalized.states.len(), 1);
    }

    fn hash_dir(dir: &Path) -> String {
        let mut entries: Vec<PathBuf> = walk(dir);
        entries.sort();
        let mut hasher = Sha256::new();
        for path in entries {
            hasher.update(path.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
            hasher.update(std::fs::read(&path).unwrap());
        }
        format!("{:x}", hasher.finalize())
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
        out
    }

    #[test]
    fn identical_config_and_seed_give_byte_identical_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = two_regime_config(dir.path(), 11);
        cfg.output_dir = dir.path().join("run_a");
        run_pipeline(&cfg).unwrap();
        cfg.output_dir = dir.path().join("run_b");
        run_pipeline(&cfg).unwrap();
        assert_eq!(
            hash_dir(&dir.path().join("run_a")),
            hash_dir(&dir.path().join("run_b"))
        );
    }

    #[test]
    fn failed_run_leaves_no_partial_output() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("bad.csv");
        std::fs::write(&input, "date,A\n2001-01-01,1.0\n2001-01-02,oops\n").unwrap();
        let cfg = PipelineConfig::new(input, dir.path().join("out"));
        let err = run_pipeline(&cfg).unwrap_err().to_string();
        assert!(err.contains("ingest"), "{err}");
        assert!(!cfg.output_dir.exists());
        assert!(!cfg.output_dir.with_extension("staging").exists());
    }

    #[test]
    fn figure_grids_emit_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_figure_grids(&FIGURE_PAIRS, 20, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in &files {
            assert!(f.exists());
        }
    }
}
