//! Method comparison across missing rates and seeds.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::baselines::{self, MPCA_FVE};
use super::cv::{self, CvGrid};
use super::stats;
use crate::error::{Error, Result};
use crate::heat_sim::{self, MissingPattern, SimConfig};
use crate::lls::FamilyKind;
use crate::mpca::DimSelector;
use crate::prognostics::{self, AssetStream};
use crate::supervised::{FitConfig, SubspaceDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Supervised reduction with `(P, α)` chosen by cross-validation.
    ProposedCv,
    /// MPCA with `P` chosen by cross-validation.
    MpcaCv,
    /// MPCA with `P` chosen by the FVE rule.
    Mpca97,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ProposedCv, Method::MpcaCv, Method::Mpca97];

    pub fn name(self) -> &'static str {
        match self {
            Method::ProposedCv => "proposed-cv",
            Method::MpcaCv => "mpca-cv",
            Method::Mpca97 => "mpca-97",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Parses a comma-separated method list; empty lists are rejected.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let methods = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    Ok(methods)
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub sim: SimConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub missing_rates: Vec<f64>,
    pub pattern: MissingPattern,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub grid: CvGrid,
    /// Template for the supervised fits; `alpha` is overridden by the grid.
    pub fit: FitConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            n_train: 400,
            n_test: 100,
            missing_rates: vec![0.0, 0.1, 0.5, 0.9],
            pattern: MissingPattern::Image,
            seeds: vec![0],
            methods: Method::ALL.to_vec(),
            grid: CvGrid::default(),
            fit: FitConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods given".into()));
        }
        if self.seeds.is_empty() || self.missing_rates.is_empty() {
            return Err(Error::InvalidArgument("no seeds or missing rates given".into()));
        }
        if self.n_train < 2 || self.n_test == 0 {
            return Err(Error::InvalidArgument("need at least 2 training and 1 test asset".into()));
        }
        if let Some(r) = self.missing_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidArgument(format!("missing rate {r} outside [0, 1]")));
        }
        self.grid.validate()?;
        self.fit.validate()?;
        self.sim.validate()
    }
}

/// One (method, seed, missing rate) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub seed: u64,
    pub missing_rate: f64,
    /// Absolute relative error per test asset, in test order.
    pub errors: Vec<f64>,
    pub median: Option<f64>,
    pub iqr: Option<f64>,
    pub runtime_secs: f64,
    /// Selected configuration, e.g. `P=(2,2,1) alpha=0.5`.
    pub chosen: Option<String>,
    pub failure: Option<String>,
}

impl CellResult {
    fn new(method: Method, seed: u64, missing_rate: f64) -> Self {
        Self {
            method,
            seed,
            missing_rate,
            errors: Vec::new(),
            median: None,
            iqr: None,
            runtime_secs: 0.0,
            chosen: None,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<CellResult>,
}

impl BenchmarkReport {
    pub fn cell(&self, method: Method, seed: u64, missing_rate: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.seed == seed && c.missing_rate == missing_rate)
    }

    pub fn median(&self, method: Method, seed: u64, missing_rate: f64) -> Option<f64> {
        self.cell(method, seed, missing_rate)?.median
    }
}

/// Simulates `n_train + n_test` complete streams for one seed and splits
/// them in order.
pub fn simulate_split(sim: &SimConfig, n_train: usize, n_test: usize, seed: u64) -> Result<(Vec<AssetStream>, Vec<AssetStream>)> {
    let cfg = SimConfig {
        n_assets: n_train + n_test,
        seed,
        ..sim.clone()
    };
    let mut streams: Vec<AssetStream> = heat_sim::generate_dataset(&cfg)?
        .assets
        .into_iter()
        .map(|a| a.stream)
        .collect();
    let test = streams.split_off(n_train);
    Ok((streams, test))
}

const MISSING_STREAM_OFFSET: u64 = 0x6d69_7373;

/// Applies missingness to every stream. Each asset's removal order depends
/// only on `(seed, index)`, so masks are nested across increasing rates.
pub fn with_missing(streams: &[AssetStream], rate: f64, pattern: MissingPattern, seed: u64, first_index: usize) -> Result<Vec<AssetStream>> {
    streams
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut rng = heat_sim::asset_rng(seed ^ MISSING_STREAM_OFFSET, first_index + k);
            heat_sim::inject_missing(s, rate, pattern, &mut rng)
        })
        .collect()
}

/// Fits `method` on `train` (with its cross-validation where applicable) and
/// scores it on `test`. Failures are recorded in the result, not returned.
pub fn evaluate_method(
    method: Method,
    train: &[AssetStream],
    test: &[AssetStream],
    grid: &CvGrid,
    fit: &FitConfig,
    seed: u64,
    missing_rate: f64,
) -> CellResult {
    let mut cell = CellResult::new(method, seed, missing_rate);
    let start = Instant::now();
    match run_method(method, train, test, grid, fit, seed) {
        Ok((errors, chosen)) => {
            cell.median = stats::median(&errors);
            cell.iqr = stats::iqr(&errors);
            cell.errors = errors;
            cell.chosen = Some(chosen);
        }
        Err(e) => {
            log::warn!("{method} failed at seed {seed}, missing rate {missing_rate}: {e}");
            cell.failure = Some(e.to_string());
        }
    }
    cell.runtime_secs = start.elapsed().as_secs_f64();
    cell
}

fn run_method(
    method: Method,
    train: &[AssetStream],
    test: &[AssetStream],
    grid: &CvGrid,
    fit: &FitConfig,
    seed: u64,
) -> Result<(Vec<f64>, String)> {
    let family = fit.family;
    let (model, chosen) = match method {
        Method::ProposedCv => {
            let (p, alpha) = select_proposed(train, grid, fit, seed)?.best;
            let cfg = FitConfig { alpha, ..*fit };
            let model = prognostics::train(train, p, &cfg)?.model;
            (model, format!("P={p} alpha={alpha}"))
        }
        Method::MpcaCv => {
            let p = select_mpca(train, grid, family, seed)?.best;
            let model = baselines::train_mpca(train, DimSelector::Fixed(p), family)?;
            (model, format!("P={p}"))
        }
        Method::Mpca97 => {
            let model = baselines::train_mpca(train, DimSelector::Fve(MPCA_FVE), family)?;
            let p = model.subspace;
            (model, format!("P={p}"))
        }
    };
    let preds = prognostics::predict_all(&model, test)?;
    Ok((cv::errors(&preds, test)?, chosen))
}

/// Cross-validation of the supervised method over `(P, α)`.
pub fn select_proposed(train: &[AssetStream], grid: &CvGrid, fit: &FitConfig, seed: u64) -> Result<cv::CvResult<(SubspaceDims, f64)>> {
    grid.validate()?;
    cv::cross_validate(
        &grid.points(),
        train,
        grid.folds,
        seed,
        |tr| Ok(tr.to_vec()),
        |tr, &(p, alpha), held_out| {
            let cfg = FitConfig { alpha, ..*fit };
            let model = prognostics::train(tr, p, &cfg)?.model;
            prognostics::predict_all(&model, held_out)
        },
        |&(p, alpha)| (p.product(), alpha),
    )
}

/// Cross-validation of the MPCA baseline over `P`. The Tucker completion
/// runs once per fold.
pub fn select_mpca(train: &[AssetStream], grid: &CvGrid, family: FamilyKind, seed: u64) -> Result<cv::CvResult<SubspaceDims>> {
    grid.validate()?;
    cv::cross_validate(
        &grid.p_candidates,
        train,
        grid.folds,
        seed,
        baselines::complete_training,
        |data, &p, held_out| {
            let model = baselines::fit_mpca_model(data, DimSelector::Fixed(p), family)?;
            prognostics::predict_all(&model, held_out)
        },
        |p| p.product(),
    )
}

/// Full sweep: per seed, simulate once, then for every missing rate apply
/// nested masks and evaluate every method.
pub fn run(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let mut report = BenchmarkReport::default();
    for &seed in &cfg.seeds {
        let (train, test) = simulate_split(&cfg.sim, cfg.n_train, cfg.n_test, seed)?;
        run_on_split(cfg, &train, &test, seed, &mut report)?;
    }
    Ok(report)
}

/// Sweeps missing rates and methods over a fixed split of complete streams.
pub fn run_on_split(
    cfg: &BenchmarkConfig,
    train: &[AssetStream],
    test: &[AssetStream],
    seed: u64,
    report: &mut BenchmarkReport,
) -> Result<()> {
    for &rate in &cfg.missing_rates {
        let tr = with_missing(train, rate, cfg.pattern, seed, 0)?;
        let te = with_missing(test, rate, cfg.pattern, seed, train.len())?;
        for &method in &cfg.methods {
            let fit = FitConfig { seed, ..cfg.fit };
            let cell = evaluate_method(method, &tr, &te, &cfg.grid, &fit, seed, rate);
            log::info!(
                "seed {seed} rate {rate} {method}: median {:?} ({:.1}s)",
                cell.median,
                cell.runtime_secs
            );
            report.cells.push(cell);
        }
    }
    Ok(())
}
