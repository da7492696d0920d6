//! Degradation image streams from a 2-D heat-transfer process.
//!
//! The interior of a square plate starts at the initial value and its
//! boundary is held at the boundary value. Backward Euler with unit time step
//! and the 5-point Laplacian is solved exactly in the sine basis that
//! diagonalizes the Dirichlet Laplacian, so every step is a per-mode scaling.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::prognostics::AssetStream;
use crate::tensor::io::{self, RawTensor};
use crate::tensor::{MaskedTensor4, Tensor4};

/// Redraw budget per asset before giving up on a threshold crossing.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_grid: usize,
    pub n_steps: usize,
    /// Side length of the square domain.
    pub domain: f64,
    pub boundary_value: f64,
    pub initial_value: f64,
    pub diffusivity_range: (f64, f64),
    /// Multiplies every drawn diffusivity; 1.0 keeps the nominal range.
    pub diffusivity_scale: f64,
    pub noise_variance: f64,
    pub threshold: f64,
    pub keep_every: usize,
    pub n_assets: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_grid: 21,
            n_steps: 150,
            domain: 0.2,
            boundary_value: 30.0,
            initial_value: 0.0,
            diffusivity_range: (0.5e-4, 1.0e-4),
            diffusivity_scale: 1.0,
            noise_variance: 0.1,
            threshold: 23.0,
            keep_every: 10,
            n_assets: 500,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("simulation config: {what}")));
        if self.n_grid == 0 || self.n_steps == 0 || self.keep_every == 0 {
            return bad("grid size, step count and keep_every must be positive");
        }
        if !(self.domain > 0.0) {
            return bad("domain must be positive");
        }
        let (lo, hi) = self.diffusivity_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("diffusivity range must be positive and ordered");
        }
        if !(self.diffusivity_scale > 0.0) {
            return bad("diffusivity scale must be positive");
        }
        if !(self.noise_variance >= 0.0) {
            return bad("noise variance must be non-negative");
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        self.domain / (self.n_grid + 1) as f64
    }
}

/// Frames of one simulated run, each `n × n` in column-major pixel order.
#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub noiseless: Tensor4,
    pub noisy: Tensor4,
}

impl SimulatedRun {
    /// Mean pixel intensity of every noiseless frame.
    pub fn mean_series(&self) -> Vec<f64> {
        frame_means(&self.noiseless)
    }
}

pub fn frame_means(t: &Tensor4) -> Vec<f64> {
    let [n1, n2, steps, _] = t.dims();
    let px = n1 * n2;
    (0..steps)
        .map(|k| t.data()[k * px..(k + 1) * px].iter().sum::<f64>() / px as f64)
        .collect()
}

/// Orthonormal sine basis `v_k(j) = sqrt(2/(n+1)) sin(jkπ/(n+1))` (columns)
/// and Laplacian eigenvalues `(4/h²) sin²(kπ/(2(n+1)))`.
fn sine_basis(n: usize, h: f64) -> (DenseMatrix, Vec<f64>) {
    let np1 = (n + 1) as f64;
    let scale = (2.0 / np1).sqrt();
    let v = DenseMatrix::from_fn(n, n, |j, k| scale * (((j + 1) * (k + 1)) as f64 * PI / np1).sin());
    let mu = (1..=n)
        .map(|k| 4.0 / (h * h) * (k as f64 * PI / (2.0 * np1)).sin().powi(2))
        .collect();
    (v, mu)
}

/// Noiseless frames for a given diffusivity (0 allowed: no diffusion).
pub fn solve_heat(diffusivity: f64, cfg: &SimConfig) -> Result<Tensor4> {
    cfg.validate()?;
    if !(diffusivity >= 0.0) || !diffusivity.is_finite() {
        return Err(Error::InvalidArgument(format!("diffusivity {diffusivity} must be non-negative")));
    }
    let n = cfg.n_grid;
    if diffusivity == 0.0 {
        let data = vec![cfg.initial_value; n * n * cfg.n_steps];
        return Tensor4::new([n, n, cfg.n_steps, 1], data);
    }
    let (v, mu) = sine_basis(n, cfg.spacing());
    let offset = cfg.initial_value - cfg.boundary_value;
    let w0 = DenseMatrix::from_element(n, n, offset);
    let mut coef = v.transpose() * &w0 * &v;
    let mut data = Vec::with_capacity(n * n * cfg.n_steps);
    // the first frame is the initial state, written exactly
    data.extend(std::iter::repeat_n(cfg.initial_value, n * n));
    for _ in 1..cfg.n_steps {
        for l in 0..n {
            for k in 0..n {
                coef[(k, l)] /= 1.0 + diffusivity * (mu[k] + mu[l]);
            }
        }
        let frame = &v * &coef * v.transpose();
        data.extend(frame.iter().map(|w| w + cfg.boundary_value));
    }
    Tensor4::new([n, n, cfg.n_steps, 1], data)
}

/// Simulates one asset: noiseless field plus i.i.d. Gaussian pixel noise.
pub fn simulate_stream<R: Rng + ?Sized>(diffusivity: f64, cfg: &SimConfig, rng: &mut R) -> Result<SimulatedRun> {
    if !(diffusivity > 0.0) {
        return Err(Error::InvalidArgument(format!("diffusivity {diffusivity} must be positive")));
    }
    let noiseless = solve_heat(diffusivity, cfg)?;
    let noise = Normal::new(0.0, cfg.noise_variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let data = noiseless.data().iter().map(|&v| v + noise.sample(rng)).collect();
    let noisy = Tensor4::new(noiseless.dims(), data)?;
    Ok(SimulatedRun { noiseless, noisy })
}

/// First 1-based time index whose mean reaches the threshold.
pub fn compute_ttf(means: &[f64], threshold: f64) -> Option<usize> {
    means.iter().position(|&v| v >= threshold).map(|k| k + 1)
}

/// Drops frames after `ttf` (1-based) and keeps frames 1, 1+k, 1+2k, ….
pub fn truncate_subsample(stream: &MaskedTensor4, ttf: usize, keep_every: usize) -> Result<MaskedTensor4> {
    let [n1, n2, len, m] = stream.dims();
    if m != 1 {
        return Err(Error::InvalidArgument("expected a single asset stream".into()));
    }
    if ttf == 0 || ttf > len {
        return Err(Error::InvalidArgument(format!("ttf {ttf} outside 1..={len}")));
    }
    if keep_every == 0 {
        return Err(Error::InvalidArgument("keep_every must be positive".into()));
    }
    let px = n1 * n2;
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut kept = 0;
    for t in (0..ttf).step_by(keep_every) {
        values.extend_from_slice(&stream.values().data()[t * px..(t + 1) * px]);
        mask.extend_from_slice(&stream.mask()[t * px..(t + 1) * px]);
        kept += 1;
    }
    MaskedTensor4::new(Tensor4::new([n1, n2, kept, 1], values)?, mask)
}

/// Missing-data mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPattern {
    /// Individual pixels.
    Entry,
    /// Whole frames.
    Image,
}

impl std::str::FromStr for MissingPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entry" => Ok(Self::Entry),
            "image" => Ok(Self::Image),
            other => Err(Error::InvalidArgument(format!("unknown missing pattern `{other}`"))),
        }
    }
}

/// Removes `round(rate·count)` frames or pixels chosen uniformly without
/// replacement. The removal order is a random permutation drawn from `rng`,
/// so the same generator state yields nested masks for increasing rates.
pub fn inject_missing<R: Rng + ?Sized>(
    stream: &AssetStream,
    rate: f64,
    pattern: MissingPattern,
    rng: &mut R,
) -> Result<AssetStream> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("missing rate {rate} outside [0, 1]")));
    }
    let [n1, n2, len, _] = stream.images.dims();
    let px = n1 * n2;
    let units = match pattern {
        MissingPattern::Image => len,
        MissingPattern::Entry => px * len,
    };
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(rng);
    let remove = (rate * units as f64).round() as usize;
    let mut images = stream.images.clone();
    let positions: Vec<usize> = match pattern {
        MissingPattern::Image => order[..remove].iter().flat_map(|&f| f * px..(f + 1) * px).collect(),
        MissingPattern::Entry => order[..remove].to_vec(),
    };
    images.mask_out(positions);
    Ok(AssetStream {
        images,
        ttf: stream.ttf,
    })
}

#[derive(Debug, Clone)]
pub struct SimulatedAsset {
    pub stream: AssetStream,
    /// Failure time index before subsampling.
    pub true_ttf: usize,
    pub diffusivity: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: SimConfig,
    pub assets: Vec<SimulatedAsset>,
    /// Draws rejected because the mean never reached the threshold.
    pub redraws: usize,
}

/// Per-asset generator: stream `m` of the ChaCha generator seeded by `seed`.
pub fn asset_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

fn generate_asset(cfg: &SimConfig, m: usize) -> Result<(SimulatedAsset, usize)> {
    let mut rng = asset_rng(cfg.seed, m);
    let (lo, hi) = cfg.diffusivity_range;
    for redraw in 0..MAX_REDRAWS {
        let diffusivity = rng.random_range(lo..=hi) * cfg.diffusivity_scale;
        let run = simulate_stream(diffusivity, cfg, &mut rng)?;
        let Some(ttf) = compute_ttf(&run.mean_series(), cfg.threshold) else {
            continue;
        };
        let full = MaskedTensor4::fully_observed(run.noisy);
        let images = truncate_subsample(&full, ttf, cfg.keep_every)?;
        let asset = SimulatedAsset {
            stream: AssetStream::new(images, Some(ttf as f64))?,
            true_ttf: ttf,
            diffusivity,
        };
        return Ok((asset, redraw));
    }
    Err(Error::InvalidArgument(format!(
        "asset {m}: no threshold crossing after {MAX_REDRAWS} draws"
    )))
}

/// Simulates `cfg.n_assets` assets. Deterministic given the seed; asset `m`
/// depends only on its own generator stream.
pub fn generate_dataset(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut assets = Vec::with_capacity(cfg.n_assets);
    let mut redraws = 0;
    for m in 0..cfg.n_assets {
        let (asset, r) = generate_asset(cfg, m)?;
        redraws += r;
        assets.push(asset);
    }
    if redraws > 0 {
        log::warn!("{redraws} diffusivity draws never crossed the threshold and were redrawn");
    }
    Ok(Dataset {
        config: cfg.clone(),
        assets,
        redraws,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SimConfig,
    pub n_assets: usize,
    /// `(I1, I2)` of every frame.
    pub image_dims: [usize; 2],
    pub seed: u64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub missing_pattern: Option<MissingPattern>,
}

/// Writes `manifest.json`, `asset_<m>.tpd1` and `ttf.csv` into `dir`.
pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, streams: &[AssetStream]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
    let mut csv = csv::Writer::from_path(dir.join("ttf.csv"))?;
    csv.write_record(["asset_id", "ttf"])?;
    for (m, s) in streams.iter().enumerate() {
        io::write_file(dir.join(format!("asset_{m}.tpd1")), &RawTensor::from_masked(&s.images, true)?)?;
        let ttf = s.ttf.map(|v| v.to_string()).unwrap_or_default();
        csv.write_record([m.to_string(), ttf])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<AssetStream>)> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut ttf = vec![None; manifest.n_assets];
    let mut rdr = csv::Reader::from_path(dir.join("ttf.csv"))?;
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad asset_id in ttf.csv".into()))?;
        if id >= manifest.n_assets {
            return Err(Error::Format(format!("asset_id {id} out of range")));
        }
        let v = rec.get(1).unwrap_or("");
        if !v.is_empty() {
            ttf[id] = Some(v.parse::<f64>().map_err(|e| Error::Format(format!("ttf of asset {id}: {e}")))?);
        }
    }
    let mut streams = Vec::with_capacity(manifest.n_assets);
    for (m, t) in ttf.into_iter().enumerate() {
        let images = io::read_file(dir.join(format!("asset_{m}.tpd1")))?.into_masked()?;
        streams.push(AssetStream::new(images, t)?);
    }
    Ok((manifest, streams))
}
