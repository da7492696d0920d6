//! Prognostic pipeline: supervised subspace, per-asset feature extraction
//! with fixed factors, and a location-scale regression of failure times on
//! those features.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::lls::{self, FamilyKind, LlsModel, ReparamCoefficients, TtfDistribution};
use crate::supervised::updates::{self, Problem};
use crate::supervised::{self, CoreTensor, FactorSet, FitConfig, FitState, SubspaceDims};
use crate::tensor::io::{self as tio, RawTensor};
use crate::tensor::{MaskedTensor4, Tensor4};

/// One asset's image stream (`I1×I2×D×1`) and, for training assets, its
/// failure time.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetStream {
    pub images: MaskedTensor4,
    pub ttf: Option<f64>,
}

impl AssetStream {
    pub fn new(images: MaskedTensor4, ttf: Option<f64>) -> Result<Self> {
        let d = images.dims();
        if d[3] != 1 {
            return Err(Error::InvalidArgument(format!("asset stream must hold one asset, got {d:?}")));
        }
        if d[2] == 0 {
            return Err(Error::InvalidArgument("asset stream has no frames".into()));
        }
        if let Some(t) = ttf {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("ttf {t} must be positive")));
            }
        }
        Ok(Self { images, ttf })
    }

    pub fn len(&self) -> usize {
        self.images.dims()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_dims(&self) -> [usize; 2] {
        let d = self.images.dims();
        [d[0], d[1]]
    }
}

pub type TtfPrediction = TtfDistribution;

fn check_image_dims(assets: &[AssetStream]) -> Result<[usize; 2]> {
    let first = assets
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty asset list".into()))?
        .image_dims();
    if let Some((m, a)) = assets.iter().enumerate().find(|(_, a)| a.image_dims() != first) {
        return Err(Error::DimensionMismatch(format!(
            "asset {m} has images {:?}, expected {first:?}",
            a.image_dims()
        )));
    }
    Ok(first)
}

/// Stacks streams into an `I1×I2×len×M` tensor, padding short streams with
/// missing frames and truncating long ones.
pub fn stack_to(assets: &[AssetStream], len: usize) -> Result<MaskedTensor4> {
    check_image_dims(assets)?;
    let slices = assets
        .iter()
        .map(|a| a.images.resize_mode3(len))
        .collect::<Result<Vec<_>>>()?;
    MaskedTensor4::stack4(&slices)
}

/// Stacks training streams with `I3 = max D_m` and returns their failure
/// times.
pub fn pad_and_stack(assets: &[AssetStream]) -> Result<(MaskedTensor4, Vec<f64>)> {
    check_image_dims(assets)?;
    let len = assets.iter().map(AssetStream::len).max().expect("non-empty");
    let ttf = assets
        .iter()
        .enumerate()
        .map(|(m, a)| a.ttf.ok_or_else(|| Error::InvalidArgument(format!("asset {m} has no ttf"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((stack_to(assets, len)?, ttf))
}

/// Masked least-squares features of every asset in `x` for fixed factors.
/// Errors if any asset has no observed entries.
pub fn extract_features_batch(x: &MaskedTensor4, factors: &FactorSet) -> Result<CoreTensor> {
    let d = x.dims();
    if factors.tensor_dims() != [d[0], d[1], d[2]] {
        return Err(Error::DimensionMismatch(format!(
            "factors span {:?}, streams are {:?}",
            factors.tensor_dims(),
            d
        )));
    }
    let m = d[3];
    let p = Problem::new(x);
    let zero = ReparamCoefficients {
        beta0: 0.0,
        beta1: DVector::zeros(factors.subspace().product()),
        sigma_tilde: 1.0,
    };
    let y = vec![0.0; m];
    let out = updates::core_rows_mse(&p, &y, &CoreTensor::zeros(factors.subspace(), m), factors, &zero, 1.0)?;
    if !out.skipped_assets.is_empty() {
        return Err(Error::FullyMasked);
    }
    Ok(out.core)
}

/// Features of one stream, padded or truncated to the factors' horizon.
pub fn extract_features(stream: &AssetStream, factors: &FactorSet) -> Result<Tensor4> {
    let horizon = factors.tensor_dims()[2];
    if stream.len() > horizon {
        log::warn!(
            "test stream has {} frames; truncated to the training horizon {horizon}",
            stream.len()
        );
    }
    let x = stream.images.resize_mode3(horizon)?;
    Ok(extract_features_batch(&x, factors)?.into_tensor())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrognosticModel {
    pub factors: FactorSet,
    pub lls: LlsModel,
    pub subspace: SubspaceDims,
    pub alpha_used: f64,
    pub family: FamilyKind,
}

impl PrognosticModel {
    pub fn horizon(&self) -> usize {
        self.factors.tensor_dims()[2]
    }
}

/// A trained model together with the supervised fit that produced it.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: PrognosticModel,
    pub fit: FitState,
    /// Features of the training assets under the final factors.
    pub features: CoreTensor,
}

/// Supervised fit on the stacked training streams, feature re-extraction
/// with the fitted factors, then the location-scale regression.
pub fn train(assets: &[AssetStream], dims: SubspaceDims, cfg: &FitConfig) -> Result<Trained> {
    if assets.len() < 2 {
        return Err(Error::InvalidArgument("at least 2 training assets are required".into()));
    }
    let (x, ttf) = pad_and_stack(assets)?;
    let y = cfg.family.transform(&ttf)?;
    let fit = supervised::fit(&x, &y, dims, cfg)?;
    let features = extract_features_batch(&x, &fit.factors)?;
    let lls_fit = lls::fit_lls(&ttf, &features.s4(), cfg.family)?;
    let model = PrognosticModel {
        factors: fit.factors.clone(),
        lls: lls_fit.model,
        subspace: dims,
        alpha_used: cfg.alpha,
        family: cfg.family,
    };
    Ok(Trained { model, fit, features })
}

pub fn predict(model: &PrognosticModel, stream: &AssetStream) -> Result<TtfPrediction> {
    let feature = extract_features(stream, &model.factors)?;
    lls::predict_distribution(&model.lls, feature.data())
}

/// Predictions for many streams; fails on the first unusable stream.
pub fn predict_all(model: &PrognosticModel, streams: &[AssetStream]) -> Result<Vec<TtfPrediction>> {
    if streams.is_empty() {
        return Ok(Vec::new());
    }
    let x = stack_to(streams, model.horizon())?;
    let features = extract_features_batch(&x, &model.factors)?;
    (0..streams.len())
        .map(|m| lls::predict_distribution(&model.lls, features.row(m)))
        .collect()
}

/// `|estimated − true| / true`.
pub fn prediction_error(estimated: f64, true_ttf: f64) -> Result<f64> {
    if !(true_ttf > 0.0) {
        return Err(Error::InvalidArgument(format!("true ttf {true_ttf} must be positive")));
    }
    Ok((estimated - true_ttf).abs() / true_ttf)
}

const FACTOR_FILES: [&str; 3] = ["U1.tpd1", "U2.tpd1", "U3.tpd1"];

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    subspace: SubspaceDims,
    alpha_used: f64,
    family: FamilyKind,
    lls: LlsModel,
    factors: Vec<String>,
}

/// Writes `model.json` and the factor matrices into `dir`.
pub fn save_model(dir: &Path, model: &PrognosticModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (u, name) in model.factors.u.iter().zip(FACTOR_FILES) {
        tio::write_file(dir.join(name), &RawTensor::from_matrix(u))?;
    }
    let manifest = ModelManifest {
        subspace: model.subspace,
        alpha_used: model.alpha_used,
        family: model.family,
        lls: model.lls.clone(),
        factors: FACTOR_FILES.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<PrognosticModel> {
    let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
    if manifest.factors.len() != 3 {
        return Err(Error::Format(format!("expected 3 factor files, got {}", manifest.factors.len())));
    }
    let mut u: Vec<DenseMatrix> = Vec::with_capacity(3);
    for name in &manifest.factors {
        u.push(tio::read_file(dir.join(name))?.into_matrix()?);
    }
    let factors = FactorSet::new(u[0].clone(), u[1].clone(), u[2].clone())?;
    if factors.subspace() != manifest.subspace {
        return Err(Error::Format(format!(
            "factor shapes {} disagree with subspace {}",
            factors.subspace(),
            manifest.subspace
        )));
    }
    if manifest.lls.gamma1.len() != manifest.subspace.product() {
        return Err(Error::Format("coefficient count does not match the subspace".into()));
    }
    Ok(PrognosticModel {
        factors,
        lls: manifest.lls,
        subspace: manifest.subspace,
        alpha_used: manifest.alpha_used,
        family: manifest.family,
    })
}
