use clap::{Args, Parser, Subcommand};
use market_states::empirical::tail_corner_masses;
use market_states::error::Result;
use market_states::io::{
    self, read_prices_csv, write_prices_csv, write_window_labels_csv, MissingPolicy,
};
use market_states::kcopula;
use market_states::pipeline::{
    emit_figure_grids, run_pipeline, PipelineConfig, FIGURE_PAIRS,
};
use market_states::simulator::{simulate_market, RegimeSchedule, RegimeSegment};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mstates",
    about = "Market-state analysis of financial return panels",
    version
)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true, env = "MSTATES_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a price CSV and report its shape and any dropped tickers.
    IngestCheck {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "drop-ticker", env = "MSTATES_MISSING_POLICY")]
        missing_policy: MissingPolicyArg,
    },
    /// Generate a synthetic price panel with known per-regime parameters.
    Simulate(SimulateArgs),
    /// Run the full pipeline and write all artifacts.
    Run(RunArgs),
    /// Emit analytic K-copula density grids for plotting.
    FigureGrids {
        #[arg(long, default_value = "figure_grids", env = "MSTATES_OUT_DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20, env = "MSTATES_BINS")]
        bins: usize,
        /// Extra parameter pairs as c,N (repeatable); the four defaults are
        /// always included.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(f64, f64)>,
    },
    /// Fit the fluctuation parameter N to an empirical grid CSV.
    Fit {
        grid: PathBuf,
        /// Average correlation held fixed during the fit.
        #[arg(long)]
        c_bar: f64,
        #[arg(long, default_value_t = kcopula::FIT_BOUNDS.0)]
        n_min: f64,
        #[arg(long, default_value_t = kcopula::FIT_BOUNDS.1)]
        n_max: f64,
    },
    /// Tail corner masses and asymmetries of a copula grid CSV.
    Asymmetry { grid: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MissingPolicyArg {
    DropTicker,
    HardError,
}

impl From<MissingPolicyArg> for MissingPolicy {
    fn from(a: MissingPolicyArg) -> Self {
        match a {
            MissingPolicyArg::DropTicker => MissingPolicy::DropTicker,
            MissingPolicyArg::HardError => MissingPolicy::HardError,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Master seed (required so runs are reproducible on purpose).
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 20, env = "MSTATES_STOCKS")]
    stocks: usize,
    /// Regime segments as days,c,N[,vol] (repeatable, in order).
    #[arg(long = "segment", value_parser = parse_segment, required = true)]
    segments: Vec<RegimeSegment>,
    #[arg(long, default_value = "prices.csv")]
    out: PathBuf,
    /// Ground-truth per-window regime labels (window length for the
    /// conversion from days).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = 42, env = "MSTATES_WINDOW_LENGTH")]
    window_length: usize,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags below override its values.
    #[arg(long, env = "MSTATES_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "MSTATES_INPUT")]
    input: Option<PathBuf>,
    #[arg(long, env = "MSTATES_OUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, env = "MSTATES_WINDOW_LENGTH")]
    window_length: Option<usize>,
    #[arg(long, env = "MSTATES_LOCAL_N")]
    local_n: Option<usize>,
    #[arg(long, env = "MSTATES_BINS")]
    bins: Option<usize>,
    #[arg(long, env = "MSTATES_GAP_K_MAX")]
    gap_k_max: Option<usize>,
    #[arg(long, env = "MSTATES_GAP_REFS")]
    gap_refs: Option<usize>,
    #[arg(long, env = "MSTATES_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum, env = "MSTATES_MISSING_POLICY")]
    missing_policy: Option<MissingPolicyArg>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected c,N".into());
    }
    let c: f64 = parts[0].trim().parse().map_err(|_| "bad c")?;
    let n: f64 = parts[1].trim().parse().map_err(|_| "bad N")?;
    Ok((c, n))
}

fn parse_segment(s: &str) -> std::result::Result<RegimeSegment, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err("expected days,c,N[,vol]".into());
    }
    let days: usize = parts[0].trim().parse().map_err(|_| "bad days")?;
    let c: f64 = parts[1].trim().parse().map_err(|_| "bad c")?;
    let n: f64 = parts[2].trim().parse().map_err(|_| "bad N")?;
    let vol: f64 = match parts.get(3) {
        Some(v) => v.trim().parse().map_err(|_| "bad vol")?,
        None => 0.01,
    };
    Ok(RegimeSegment {
        days,
        c,
        n,
        vols: vec![vol],
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| {
                market_states::Error::InvalidParameter(format!("thread pool: {e}"))
            })?;
    }
    match cli.command {
        Command::IngestCheck {
            input,
            missing_policy,
        } => {
            let (prices, report) = read_prices_csv(&input, missing_policy.into())?;
            println!(
                "ok: {} tickers x {} days ({} dropped)",
                prices.num_stocks(),
                prices.num_days(),
                report.dropped.len()
            );
            for (ticker, line) in &report.dropped {
                println!("dropped: {ticker} (first missing cell at line {line})");
            }
        }
        Command::Simulate(args) => {
            let schedule = RegimeSchedule {
                segments: args.segments,
                num_stocks: args.stocks,
                seed: args.seed,
            };
            let sim = simulate_market(&schedule)?;
            write_prices_csv(&args.out, &sim.prices)?;
            println!(
                "wrote {} ({} stocks x {} days, {} resampled draws)",
                args.out.display(),
                sim.prices.num_stocks(),
                sim.prices.num_days(),
                sim.resampled
            );
            if let Some(labels_out) = args.labels_out {
                // per-window majority regime over whole windows of return days
                let w = args.window_length;
                let window_labels: Vec<usize> = sim
                    .day_labels
                    .chunks_exact(w)
                    .map(|chunk| {
                        let mut counts = std::collections::BTreeMap::new();
                        for &l in chunk {
                            *counts.entry(l).or_insert(0usize) += 1;
                        }
                        counts.into_iter().max_by_key(|&(_, c)| c).unwrap().0
                    })
                    .collect();
                write_window_labels_csv(&labels_out, &window_labels)?;
                println!("wrote {}", labels_out.display());
            }
        }
        Command::Run(args) => {
            let mut cfg = match &args.config {
                Some(path) => PipelineConfig::from_toml(&std::fs::read_to_string(path)?)?,
                None => {
                    let input = args.input.clone().ok_or_else(|| {
                        market_states::Error::InvalidParameter(
                            "--input required without --config".into(),
                        )
                    })?;
                    let out = args.output_dir.clone().unwrap_or_else(|| "out".into());
                    PipelineConfig::new(input, out)
                }
            };
            if let Some(v) = args.input {
                cfg.input = v;
            }
            if let Some(v) = args.output_dir {
                cfg.output_dir = v;
            }
            if let Some(v) = args.window_length {
                cfg.window_length = v;
            }
            if let Some(v) = args.local_n {
                cfg.local_n = v;
            }
            if let Some(v) = args.bins {
                cfg.bins = v;
            }
            if let Some(v) = args.gap_k_max {
                cfg.gap_k_max = v;
            }
            if let Some(v) = args.gap_refs {
                cfg.gap_refs = v;
            }
            if let Some(v) = args.seed {
                cfg.seed = v;
            }
            if let Some(v) = args.missing_policy {
                cfg.missing_policy = v.into();
            }
            let report = run_pipeline(&cfg)?;
            println!(
                "k* = {} over {} windows ({} stocks); report at {}",
                report.k,
                report.num_windows,
                report.num_stocks,
                cfg.output_dir.join("report.json").display()
            );
            for branch in [&report.locally_normalized, &report.original] {
                println!("[{}]", branch.branch);
                for s in &branch.states {
                    println!(
                        "  state {}: {} windows, {} days, c_bar={:.3} N*={:.2}{} msd={:.3e} alpha={:+.4} beta={:+.4}",
                        s.state,
                        s.window_count,
                        s.series_length,
                        s.c_bar,
                        s.n_star,
                        if s.fit_at_boundary { " (at bound)" } else { "" },
                        s.msd,
                        s.alpha_mean,
                        s.beta_mean
                    );
                }
            }
            let excluded = report.excluded_points_total;
            if excluded > 0 {
                println!("note: {excluded} zero-variance points excluded during normalization");
            }
        }
        Command::FigureGrids {
            out_dir,
            bins,
            pairs,
        } => {
            let mut all: Vec<(f64, f64)> = FIGURE_PAIRS.to_vec();
            all.extend(pairs);
            let files = emit_figure_grids(&all, bins, &out_dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Fit {
            grid,
            c_bar,
            n_min,
            n_max,
        } => {
            let empirical = io::read_grid_csv(&grid, market_states::GridKind::Empirical)?;
            let fit = kcopula::fit_n(&empirical, c_bar, (n_min, n_max))?;
            println!(
                "N* = {:.4}  msd = {:.6e}{}",
                fit.n,
                fit.msd,
                if fit.at_boundary { "  (at search bound)" } else { "" }
            );
        }
        Command::Asymmetry { grid } => {
            let g = io::read_grid_csv(&grid, market_states::GridKind::Empirical)?;
            let s = tail_corner_masses(&g)?;
            println!(
                "LL={:.4} UL={:.4} UU={:.4} LU={:.4} alpha={:+.4} beta={:+.4}",
                s.ll, s.ul, s.uu, s.lu, s.alpha, s.beta
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(1);
    }
}
