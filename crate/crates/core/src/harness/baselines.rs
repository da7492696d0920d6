//! Unsupervised two-stage baseline: Tucker completion of the training
//! streams, MPCA on the completed tensor, then a location-scale regression on
//! the MPCA features.

use crate::error::Result;
use crate::lls::{self, FamilyKind};
use crate::mpca::{self, CompletionConfig, DimSelector};
use crate::prognostics::{pad_and_stack, AssetStream, PrognosticModel};
use crate::supervised::SubspaceDims;
use crate::tensor::Tensor4;

/// Default FVE target of the MPCA baseline.
pub const MPCA_FVE: f64 = 0.97;

/// Rank of the Tucker completion run before MPCA.
pub const COMPLETION_RANK: SubspaceDims = SubspaceDims { p1: 3, p2: 3, p3: 3 };

/// Completed training tensor and failure times, shared by every MPCA
/// dimension choice on the same training set.
#[derive(Debug, Clone)]
pub struct CompletedTraining {
    pub completed: Tensor4,
    pub ttf: Vec<f64>,
}

pub fn complete_training(assets: &[AssetStream]) -> Result<CompletedTraining> {
    let (x, ttf) = pad_and_stack(assets)?;
    let d = x.dims();
    let completed = if x.observed_count() == x.values().len() {
        x.values().clone()
    } else {
        let rank = COMPLETION_RANK.capped([d[0], d[1], d[2]]);
        mpca::tucker_complete(&x, rank, CompletionConfig::default())?
            .imputed
            .values()
            .clone()
    };
    Ok(CompletedTraining { completed, ttf })
}

/// MPCA on the completed tensor and a regression on its features. Test
/// streams are later featurized by masked least squares onto the MPCA
/// factors, so the model plugs into the usual prediction path.
pub fn fit_mpca_model(data: &CompletedTraining, selector: DimSelector, family: FamilyKind) -> Result<PrognosticModel> {
    let model = mpca::mpca_fit(&data.completed, selector)?;
    let features = mpca::mpca_extract(&model, &data.completed)?;
    let fit = lls::fit_lls(&data.ttf, &features.s4(), family)?;
    Ok(PrognosticModel {
        subspace: model.dims(),
        factors: model.factors,
        lls: fit.model,
        alpha_used: 1.0,
        family,
    })
}

pub fn train_mpca(assets: &[AssetStream], selector: DimSelector, family: FamilyKind) -> Result<PrognosticModel> {
    fit_mpca_model(&complete_training(assets)?, selector, family)
}
