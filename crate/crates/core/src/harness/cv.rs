//! k-fold cross-validation over a candidate grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats;
use crate::error::{Error, Result};
use crate::prognostics::{prediction_error, AssetStream, TtfPrediction};
use crate::supervised::SubspaceDims;

/// Candidate grid for the proposed method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub p_candidates: Vec<SubspaceDims>,
    pub alpha_candidates: Vec<f64>,
    pub folds: usize,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self::cube(4, vec![0.2, 0.5, 0.8], 10)
    }
}

impl CvGrid {
    /// Every `(P1, P2, P3)` with `1 ≤ P_n ≤ max_p`.
    pub fn cube(max_p: usize, alpha_candidates: Vec<f64>, folds: usize) -> Self {
        let mut p_candidates = Vec::new();
        for p1 in 1..=max_p {
            for p2 in 1..=max_p {
                for p3 in 1..=max_p {
                    p_candidates.push(SubspaceDims::new(p1, p2, p3));
                }
            }
        }
        Self {
            p_candidates,
            alpha_candidates,
            folds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_candidates.is_empty() || self.alpha_candidates.is_empty() {
            return Err(Error::InvalidArgument("empty CV grid".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument("at least 2 folds are required".into()));
        }
        if let Some(a) = self.alpha_candidates.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!("alpha {a} outside [0, 1]")));
        }
        Ok(())
    }

    /// `(P, α)` pairs in grid order.
    pub fn points(&self) -> Vec<(SubspaceDims, f64)> {
        self.p_candidates
            .iter()
            .flat_map(|&p| self.alpha_candidates.iter().map(move |&a| (p, a)))
            .collect()
    }
}

/// Fold index of every asset: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("at least 2 folds are required".into()));
    }
    if folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds for {n} assets")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (k, &a) in order.iter().enumerate() {
        fold[a] = k % folds;
    }
    Ok(fold)
}

/// Splits assets into (training, held-out) for one fold.
pub fn split_fold(assets: &[AssetStream], assignment: &[usize], fold: usize) -> (Vec<AssetStream>, Vec<AssetStream>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (a, &f) in assets.iter().zip(assignment) {
        if f == fold {
            test.push(a.clone());
        } else {
            train.push(a.clone());
        }
    }
    (train, test)
}

/// Median absolute relative error of predictions against the assets' ttf.
pub fn median_error(preds: &[TtfPrediction], truth: &[AssetStream]) -> Result<f64> {
    let errs = errors(preds, truth)?;
    stats::median(&errs).ok_or_else(|| Error::InvalidArgument("no held-out assets".into()))
}

pub fn errors(preds: &[TtfPrediction], truth: &[AssetStream]) -> Result<Vec<f64>> {
    preds
        .iter()
        .zip(truth)
        .map(|(p, a)| {
            let t = a.ttf.ok_or_else(|| Error::InvalidArgument("held-out asset without ttf".into()))?;
            prediction_error(p.point_estimate, t)
        })
        .collect()
}

/// One grid point's cross-validation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRow<C> {
    pub candidate: C,
    /// Held-out median error per fold; `None` where the fold failed.
    pub fold_medians: Vec<Option<f64>>,
    /// Mean of the successful fold medians.
    pub score: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult<C> {
    pub rows: Vec<CvRow<C>>,
    pub best: C,
}

/// Cross-validates `candidates`. `prepare` runs once per fold on the
/// training part; `evaluate` predicts the held-out part for one candidate.
/// A candidate failing in any fold keeps its other folds; a candidate that
/// fails everywhere is skipped. The winner minimizes the score, ties broken
/// by `tie_key` ascending, then by grid order.
pub fn cross_validate<C, K, T, P, E>(
    candidates: &[C],
    assets: &[AssetStream],
    folds: usize,
    seed: u64,
    prepare: P,
    evaluate: E,
    tie_key: impl Fn(&C) -> K,
) -> Result<CvResult<C>>
where
    C: Clone + Send + Sync + std::fmt::Debug,
    K: PartialOrd,
    T: Send,
    P: Fn(&[AssetStream]) -> Result<T> + Sync,
    E: Fn(&T, &C, &[AssetStream]) -> Result<Vec<TtfPrediction>> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no CV candidates".into()));
    }
    let assignment = fold_assignment(assets.len(), folds, seed)?;
    // per fold: one entry per candidate
    let per_fold: Vec<Vec<std::result::Result<f64, String>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split_fold(assets, &assignment, f);
            match prepare(&train) {
                Err(e) => vec![Err(e.to_string()); candidates.len()],
                Ok(ctx) => candidates
                    .iter()
                    .map(|c| {
                        evaluate(&ctx, c, &test)
                            .and_then(|p| median_error(&p, &test))
                            .map_err(|e| e.to_string())
                    })
                    .collect(),
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(candidates.len());
    for (k, c) in candidates.iter().enumerate() {
        let mut fold_medians = Vec::with_capacity(folds);
        let mut failures = Vec::new();
        for (f, fold) in per_fold.iter().enumerate() {
            match &fold[k] {
                Ok(v) if v.is_finite() => fold_medians.push(Some(*v)),
                Ok(v) => {
                    fold_medians.push(None);
                    failures.push(format!("fold {f}: non-finite error {v}"));
                }
                Err(e) => {
                    fold_medians.push(None);
                    failures.push(format!("fold {f}: {e}"));
                }
            }
        }
        let ok: Vec<f64> = fold_medians.iter().flatten().copied().collect();
        let score = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        if !failures.is_empty() {
            log::warn!("CV candidate {c:?}: {} failed folds", failures.len());
        }
        rows.push(CvRow {
            candidate: c.clone(),
            fold_medians,
            score,
            failures,
        });
    }
    let best = rows
        .iter()
        .filter(|r| r.score.is_some())
        .min_by(|a, b| {
            let (sa, sb) = (a.score.expect("filtered"), b.score.expect("filtered"));
            sa.total_cmp(&sb).then_with(|| {
                tie_key(&a.candidate)
                    .partial_cmp(&tie_key(&b.candidate))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .map(|r| r.candidate.clone())
        .ok_or_else(|| Error::InvalidArgument("every CV candidate failed".into()))?;
    Ok(CvResult { rows, best })
}
