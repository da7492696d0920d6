use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tdr_core::harness::benchmark::{self, BenchmarkConfig, Method};
use tdr_core::harness::{cv::CvGrid, report};
use tdr_core::heat_sim::{self, DatasetManifest, MissingPattern, SimConfig};
use tdr_core::prognostics::{self, AssetStream};
use tdr_core::supervised::FitConfig;
use tdr_core::{FamilyKind, SubspaceDims};

/// Supervised tensor dimension reduction for degradation image streams.
#[derive(Parser)]
#[command(name = "tdr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate heat-transfer image streams into a dataset directory.
    Simulate(SimulateArgs),
    /// Fit a model on a dataset and save it.
    Train(TrainArgs),
    /// Predict failure times for a dataset with a saved model.
    Predict(PredictArgs),
    /// Cross-validate subspace dimensions and weight on a dataset.
    Cv(CvArgs),
    /// Compare methods across missing rates and seeds.
    Benchmark(BenchmarkArgs),
    /// Rebuild summary tables and plots from a per-asset error table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    assets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
    #[arg(long, default_value = "image")]
    missing_pattern: MissingPattern,
    /// Multiplier on the sampled diffusivities.
    #[arg(long, default_value_t = 1.0)]
    diffusivity_scale: f64,
}

#[derive(Args, Clone)]
struct FitArgs {
    #[arg(long, default_value = "lognormal")]
    family: FamilyKind,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn config(&self, alpha: f64) -> FitConfig {
        FitConfig {
            alpha,
            family: self.family,
            tol_epsilon: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output model directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 2)]
    p1: usize,
    #[arg(long, default_value_t = 2)]
    p2: usize,
    #[arg(long, default_value_t = 2)]
    p3: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Largest `P_n` tried in every mode.
    #[arg(long, default_value_t = 4)]
    max_p: usize,
    /// Comma-separated weights tried.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

impl GridArgs {
    fn grid(&self) -> CvGrid {
        CvGrid::cube(self.max_p, self.alphas.clone(), self.folds)
    }
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output CSV with one row per grid point.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Output directory for tables and plots.
    #[arg(long)]
    out: PathBuf,
    /// Dataset to split instead of simulating; the first `--train` assets
    /// train, the rest test.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "proposed-cv,mpca-cv,mpca-97")]
    methods: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.5, 0.9])]
    missing_rates: Vec<f64>,
    #[arg(long, default_value = "image")]
    missing_pattern: MissingPattern,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
    seeds: Vec<u64>,
    #[arg(long = "train", default_value_t = 400)]
    n_train: usize,
    #[arg(long = "test", default_value_t = 100)]
    n_test: usize,
    #[arg(long, default_value_t = 1.0)]
    diffusivity_scale: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Per-asset error CSV, or a benchmark directory containing one.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads().and_then(|()| run(cli.command)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("TDR_THREADS") {
        let n: usize = v.parse().with_context(|| format!("TDR_THREADS={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cross_validate(a),
        Command::Benchmark(a) => run_benchmark(a),
        Command::Report(a) => rebuild_report(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.assets == 0 {
        bail!("--assets must be positive");
    }
    let cfg = SimConfig {
        n_assets: a.assets,
        seed: a.seed,
        diffusivity_scale: a.diffusivity_scale,
        ..SimConfig::default()
    };
    let data = heat_sim::generate_dataset(&cfg)?;
    let complete: Vec<AssetStream> = data.assets.into_iter().map(|s| s.stream).collect();
    let streams = benchmark::with_missing(&complete, a.missing_rate, a.missing_pattern, a.seed, 0)?;
    let manifest = DatasetManifest {
        image_dims: [cfg.n_grid, cfg.n_grid],
        n_assets: streams.len(),
        seed: a.seed,
        missing_rate: a.missing_rate,
        missing_pattern: (a.missing_rate > 0.0).then_some(a.missing_pattern),
        config: cfg,
    };
    heat_sim::write_dataset(&a.out, &manifest, &streams)?;
    println!("wrote {} assets to {}", streams.len(), a.out.display());
    Ok(())
}

fn load(dir: &Path) -> Result<Vec<AssetStream>> {
    let (_, streams) = heat_sim::read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    Ok(streams)
}

fn train(a: TrainArgs) -> Result<()> {
    let streams = load(&a.data)?;
    let dims = SubspaceDims::new(a.p1, a.p2, a.p3);
    let trained = prognostics::train(&streams, dims, &a.fit.config(a.alpha))?;
    prognostics::save_model(&a.model, &trained.model)?;
    for w in &trained.fit.warnings {
        log::warn!("{w}");
    }
    println!(
        "trained P={dims} alpha={} in {} iterations, objective {:.6e}",
        a.alpha,
        trained.fit.iterations(),
        trained.fit.objective()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let streams = load(&a.data)?;
    let model = prognostics::load_model(&a.model).with_context(|| format!("reading model {}", a.model.display()))?;
    let preds = prognostics::predict_all(&model, &streams)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["asset_id", "point_estimate", "location", "scale", "family", "true_ttf", "abs_rel_error"])?;
    for (m, (p, s)) in preds.iter().zip(&streams).enumerate() {
        let (truth, err) = match s.ttf {
            Some(t) => (t.to_string(), prognostics::prediction_error(p.point_estimate, t)?.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            m.to_string(),
            p.point_estimate.to_string(),
            p.location.to_string(),
            p.scale.to_string(),
            p.family.to_string(),
            truth,
            err,
        ])?;
    }
    w.flush()?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

fn cross_validate(a: CvArgs) -> Result<()> {
    let streams = load(&a.data)?;
    let grid = a.grid.grid();
    let result = benchmark::select_proposed(&streams, &grid, &a.fit.config(0.5), a.fit.seed)?;
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["p1", "p2", "p3", "alpha", "score", "failed_folds"])?;
        for row in &result.rows {
            let (p, alpha) = row.candidate;
            w.write_record([
                p.p1.to_string(),
                p.p2.to_string(),
                p.p3.to_string(),
                alpha.to_string(),
                row.score.map(|s| s.to_string()).unwrap_or_default(),
                row.failures.len().to_string(),
            ])?;
        }
        w.flush()?;
    }
    let (p, alpha) = result.best;
    println!("selected P={p} alpha={alpha}");
    Ok(())
}

fn run_benchmark(a: BenchmarkArgs) -> Result<()> {
    let methods: Vec<Method> = benchmark::parse_methods(&a.methods)?;
    let cfg = BenchmarkConfig {
        sim: SimConfig {
            diffusivity_scale: a.diffusivity_scale,
            ..SimConfig::default()
        },
        n_train: a.n_train,
        n_test: a.n_test,
        missing_rates: a.missing_rates,
        pattern: a.missing_pattern,
        seeds: a.seeds,
        methods,
        grid: a.grid.grid(),
        fit: a.fit.config(0.5),
    };
    let report_data = match &a.data {
        None => benchmark::run(&cfg)?,
        Some(dir) => {
            cfg.validate()?;
            let mut streams = load(dir)?;
            if streams.len() <= cfg.n_train {
                bail!("dataset has {} assets; --train is {}", streams.len(), cfg.n_train);
            }
            let test = streams.split_off(cfg.n_train);
            let mut r = benchmark::BenchmarkReport::default();
            for &seed in &cfg.seeds {
                benchmark::run_on_split(&cfg, &streams, &test, seed, &mut r)?;
            }
            r
        }
    };
    let written = report::write_report(&a.out, &report_data)?;
    print_summary(&report_data);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_summary(r: &benchmark::BenchmarkReport) {
    println!("{:<12} {:>5} {:>8} {:>10} {:>10} {:>8}  chosen", "method", "seed", "missing", "median", "iqr", "secs");
    for c in &r.cells {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "failed".into());
        println!(
            "{:<12} {:>5} {:>8} {:>10} {:>10} {:>8.1}  {}",
            c.method.name(),
            c.seed,
            c.missing_rate,
            fmt(c.median),
            fmt(c.iqr),
            c.runtime_secs,
            c.chosen.as_deref().or(c.failure.as_deref()).unwrap_or("")
        );
    }
}

fn rebuild_report(a: ReportArgs) -> Result<()> {
    let errors = if a.data.is_dir() {
        a.data.join(report::ERRORS_FILE)
    } else {
        a.data.clone()
    };
    if !errors.is_file() {
        bail!("no error table at {}", errors.display());
    }
    for p in report::report_from_errors(&errors, &a.out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
