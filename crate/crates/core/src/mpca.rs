//! Unsupervised baselines: multilinear PCA and masked Tucker completion.

use crate::error::{Error, Result};
use crate::linalg::{sorted_symmetric_eigen, DenseMatrix};
use crate::supervised::updates::{self, Problem};
use crate::supervised::{CoreTensor, FactorSet, SubspaceDims};
use crate::tensor::{MaskPattern, MaskedTensor4, Mode, Tensor4};

/// Default relative tolerance on the projected scatter between sweeps.
pub const MPCA_TOL: f64 = 1e-8;
/// Default sweep cap.
pub const MPCA_MAX_SWEEPS: usize = 50;

/// How MPCA chooses the subspace dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimSelector {
    /// Smallest `P_n` per mode whose eigenvalue mass reaches the target.
    Fve(f64),
    Fixed(SubspaceDims),
}

#[derive(Debug, Clone)]
pub struct MpcaModel {
    pub factors: FactorSet,
    /// Full-projection eigenvalue spectra of the mode-`n` scatter matrices,
    /// descending.
    pub spectra: [Vec<f64>; 3],
    /// Share of the centered total scatter kept by the final projection.
    pub fve_achieved: f64,
    /// Sample-mean tensor, `I1×I2×I3×1`.
    pub mean: Tensor4,
    pub sweeps: usize,
}

impl MpcaModel {
    pub fn dims(&self) -> SubspaceDims {
        self.factors.subspace()
    }
}

fn centered(x: &Tensor4) -> (Tensor4, Tensor4) {
    let [d1, d2, d3, m] = x.dims();
    let slice = d1 * d2 * d3;
    let mut mean = vec![0.0; slice];
    for chunk in x.data().chunks(slice) {
        for (a, &v) in mean.iter_mut().zip(chunk) {
            *a += v;
        }
    }
    let inv = 1.0 / m.max(1) as f64;
    mean.iter_mut().for_each(|v| *v *= inv);
    let mut data = x.data().to_vec();
    for chunk in data.chunks_mut(slice) {
        for (v, &mu) in chunk.iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let dims = x.dims();
    (
        Tensor4::new(dims, data).expect("same dims"),
        Tensor4::new([d1, d2, d3, 1], mean).expect("slice dims"),
    )
}

/// Mode-`n` scatter of `c` after projecting every other mode by its factor.
fn mode_scatter(c: &Tensor4, factors: [Option<&DenseMatrix>; 3], mode: Mode) -> Result<DenseMatrix> {
    let mut mats = factors;
    mats[mode.index()] = None;
    let y = c.multi_mode_product(mats)?.matricize(mode);
    Ok(&y * y.transpose())
}

fn top_rows(vectors: &DenseMatrix, p: usize) -> DenseMatrix {
    vectors.columns(0, p).transpose()
}

fn fve_rank(values: &[f64], target: f64) -> usize {
    if target >= 1.0 {
        return values.len();
    }
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= target * total * (1.0 - 1e-12) {
            return k + 1;
        }
    }
    values.len()
}

/// Fits MPCA on a fully observed tensor (samples along mode 4).
pub fn mpca_fit(x: &Tensor4, selector: DimSelector) -> Result<MpcaModel> {
    mpca_fit_with(x, selector, MPCA_TOL, MPCA_MAX_SWEEPS)
}

pub fn mpca_fit_with(x: &Tensor4, selector: DimSelector, tol: f64, max_sweeps: usize) -> Result<MpcaModel> {
    fit_impl(x, selector, tol, max_sweeps, true)
}

/// Same iteration without centering, i.e. a truncated higher-order SVD
/// refined by alternating eigen-solves. Used to start Tucker fits, where the
/// shared mean structure is part of what the factors must span.
pub fn hosvd_factors(x: &Tensor4, dims: SubspaceDims, max_sweeps: usize) -> Result<FactorSet> {
    Ok(fit_impl(x, DimSelector::Fixed(dims), 1e-6, max_sweeps, false)?.factors)
}

fn fit_impl(x: &Tensor4, selector: DimSelector, tol: f64, max_sweeps: usize, center: bool) -> Result<MpcaModel> {
    let dims = x.dims();
    if let DimSelector::Fve(t) = selector {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidArgument(format!("FVE target {t} outside (0, 1]")));
        }
    }
    if let DimSelector::Fixed(p) = selector {
        p.validate([dims[0], dims[1], dims[2]])?;
    }
    let (c, mean) = if center {
        centered(x)
    } else {
        let [d1, d2, d3, _] = dims;
        (x.clone(), Tensor4::zeros([d1, d2, d3, 1])?)
    };
    let total = c.fnorm_sq();

    // Full-projection initialization: eigenvectors of the plain mode-n scatter.
    let mut spectra: [Vec<f64>; 3] = Default::default();
    let mut init: Vec<DenseMatrix> = Vec::with_capacity(3);
    let mut ranks = [0usize; 3];
    for n in 0..3 {
        let mode = Mode::new(n + 1)?;
        let scatter = mode_scatter(&c, [None, None, None], mode)?;
        let (values, vectors) = sorted_symmetric_eigen(&scatter);
        ranks[n] = match selector {
            DimSelector::Fve(t) => fve_rank(&values, t),
            DimSelector::Fixed(p) => p.as_array()[n],
        };
        init.push(top_rows(&vectors, ranks[n]));
        spectra[n] = values;
    }
    let mut u: [DenseMatrix; 3] = [init[0].clone(), init[1].clone(), init[2].clone()];

    let projected_scatter =
        |u: &[DenseMatrix; 3]| -> Result<f64> { Ok(c.project([&u[0], &u[1], &u[2]])?.fnorm_sq()) };
    let mut prev = projected_scatter(&u)?;
    let mut sweeps = 0;
    let full = ranks.iter().zip(&dims[..3]).all(|(p, i)| p == i);
    while sweeps < max_sweeps && !full {
        sweeps += 1;
        for n in 0..3 {
            let mode = Mode::new(n + 1)?;
            let scatter = mode_scatter(&c, [Some(&u[0]), Some(&u[1]), Some(&u[2])], mode)?;
            let (_, vectors) = sorted_symmetric_eigen(&scatter);
            u[n] = top_rows(&vectors, ranks[n]);
        }
        let cur = projected_scatter(&u)?;
        let change = (cur - prev).abs();
        prev = cur;
        if change <= tol * cur.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let fve_achieved = if total > 0.0 { (prev / total).min(1.0) } else { 1.0 };
    Ok(MpcaModel {
        factors: FactorSet::new(u[0].clone(), u[1].clone(), u[2].clone())?,
        spectra,
        fve_achieved,
        mean,
        sweeps,
    })
}

/// Copy of the values with every missing entry replaced by the mean of the
/// same `(i1, i2, i3)` position over the samples that observe it (0 when no
/// sample does).
pub fn mean_filled(x: &MaskedTensor4) -> Tensor4 {
    let [d1, d2, d3, m] = x.dims();
    let slice = d1 * d2 * d3;
    let mut sum = vec![0.0; slice];
    let mut count = vec![0usize; slice];
    let (vals, mask) = (x.values().data(), x.mask());
    for a in 0..m {
        for k in 0..slice {
            if mask[a * slice + k] {
                sum[k] += vals[a * slice + k];
                count[k] += 1;
            }
        }
    }
    let mut data = vals.to_vec();
    for a in 0..m {
        for k in 0..slice {
            if !mask[a * slice + k] && count[k] > 0 {
                data[a * slice + k] = sum[k] / count[k] as f64;
            }
        }
    }
    Tensor4::new(x.dims(), data).expect("same dims")
}

/// Features `X ×₁U1 ×₂U2 ×₃U3` for every sample of `x`.
pub fn mpca_extract(model: &MpcaModel, x: &Tensor4) -> Result<CoreTensor> {
    let [d1, d2, d3, _] = x.dims();
    let expect = model.factors.tensor_dims();
    if [d1, d2, d3] != expect {
        return Err(Error::DimensionMismatch(format!(
            "asset dims {:?} do not match model dims {expect:?}",
            [d1, d2, d3]
        )));
    }
    CoreTensor::new(x.project(model.factors.refs())?)
}

/// `S ×₁U1ᵀ ×₂U2ᵀ ×₃U3ᵀ`.
pub fn reconstruct(model: &MpcaModel, core: &CoreTensor) -> Result<Tensor4> {
    core.tensor().expand(model.factors.refs())
}

/// Settings for [`tucker_complete`].
#[derive(Debug, Clone, Copy)]
pub struct CompletionConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 100,
        }
    }
}

/// Result of [`tucker_complete`].
#[derive(Debug, Clone)]
pub struct Completion {
    pub imputed: MaskedTensor4,
    pub factors: FactorSet,
    pub core: CoreTensor,
    pub residual_history: Vec<f64>,
}

/// Masked Tucker completion by alternating closed-form least-squares
/// updates. Missing entries are replaced by the reconstruction; observed
/// entries are copied verbatim.
pub fn tucker_complete(x: &MaskedTensor4, dims: SubspaceDims, cfg: CompletionConfig) -> Result<Completion> {
    let [d1, d2, d3, m] = x.dims();
    dims.validate([d1, d2, d3])?;
    if x.observed_count() == 0 {
        return Err(Error::FullyMasked);
    }
    let mut factors = hosvd_factors(&mean_filled(x), dims, 10)?;
    let problem = Problem::new(x);
    let zero = crate::lls::ReparamCoefficients {
        beta0: 0.0,
        beta1: nalgebra::DVector::zeros(dims.product()),
        sigma_tilde: 1.0,
    };
    let y = vec![0.0; m];
    let mut core = initial_core(&problem, &factors, &zero, &y)?;
    let mut history = vec![x.masked_residual_sq(&core.tensor().expand(factors.refs())?)?];
    for _ in 0..cfg.max_iters {
        for n in 0..3 {
            let mode = Mode::new(n + 1)?;
            let upd = match problem.pattern {
                MaskPattern::Complete => updates::factor_complete(&problem, &core, &factors, mode)?,
                MaskPattern::ImageWise if n < 2 => updates::factor_imagewise(&problem, &core, &factors, mode)?,
                _ => updates::factor_entrywise(&problem, &core, &factors, mode)?,
            };
            factors.u[n] = upd.u;
        }
        core = initial_core(&problem, &factors, &zero, &y)?;
        let res = x.masked_residual_sq(&core.tensor().expand(factors.refs())?)?;
        let prev = *history.last().expect("non-empty");
        history.push(res);
        if prev - res <= cfg.tol * history[0].max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let recon = core.tensor().expand(factors.refs())?;
    let mut values = recon.into_data();
    for (k, v) in values.iter_mut().enumerate() {
        if x.mask()[k] {
            *v = x.values().data()[k];
        }
    }
    let imputed = MaskedTensor4::fully_observed(Tensor4::new(x.dims(), values)?);
    Ok(Completion {
        imputed,
        factors,
        core,
        residual_history: history,
    })
}

fn initial_core(
    problem: &Problem,
    factors: &FactorSet,
    reg: &crate::lls::ReparamCoefficients,
    y: &[f64],
) -> Result<CoreTensor> {
    let out = if problem.pattern == MaskPattern::Complete {
        updates::core_complete(problem, y, factors, reg, 1.0)?
    } else {
        let blank = CoreTensor::zeros(factors.subspace(), y.len());
        updates::core_rows_mse(problem, y, &blank, factors, reg, 1.0)?
    };
    Ok(out.core)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fve_rank_uses_cumulative_mass() {
        assert_eq!(fve_rank(&[5.0, 4.0, 1.0], 0.5), 1);
        assert_eq!(fve_rank(&[5.0, 4.0, 1.0], 0.9), 2);
        assert_eq!(fve_rank(&[5.0, 4.0, 1.0], 0.95), 3);
        assert_eq!(fve_rank(&[5.0, 0.0, 0.0], 1.0), 3);
    }

    #[test]
    fn fve_target_outside_unit_interval_is_rejected() {
        let x = Tensor4::zeros([2, 2, 2, 3]).unwrap();
        assert!(mpca_fit(&x, DimSelector::Fve(0.0)).is_err());
        assert!(mpca_fit(&x, DimSelector::Fve(1.5)).is_err());
    }
}
