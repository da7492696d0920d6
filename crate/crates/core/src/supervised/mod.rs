//! Supervised tensor dimension reduction.
//!
//! The criterion balances a masked Tucker completion residual against a
//! location-scale regression of the responses on the core features:
//!
//! ```text
//! Ψ = α‖P_Ω(X − S ×₁U1ᵀ ×₂U2ᵀ ×₃U3ᵀ)‖² + (1 − α)·ℓ(σ̃y − 1β̃0 − S(4)β̃1)
//! ```
//!
//! For the normal family `ℓ` is replaced by the squared error
//! `‖y − 1β̃0 − S(4)β̃1‖²` and every block has a closed form. Other families
//! keep the negative log-likelihood and solve the regression and core blocks
//! by damped Newton.
//!
//! `y` is always on the regression scale: log failure times for the
//! log-location-scale families.

pub mod updates;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::lls::{self, Distribution, FamilyKind, ReparamCoefficients};
use crate::mpca::{self, DimSelector};
use crate::tensor::{MaskPattern, MaskedTensor4, Mode, Tensor4};

pub use updates::{
    update_core_complete, update_core_row_entrywise, update_factor_column_entrywise, update_factor_complete,
    update_factor_entrywise, update_factor_imagewise, update_regression_block, CoreUpdate, FactorUpdate,
    ScaleUpdate, VectorUpdate,
};

use updates::Problem;

/// Subspace dimensions `(P1, P2, P3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct SubspaceDims {
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
}

impl SubspaceDims {
    pub const fn new(p1: usize, p2: usize, p3: usize) -> Self {
        Self { p1, p2, p3 }
    }

    pub fn as_array(self) -> [usize; 3] {
        [self.p1, self.p2, self.p3]
    }

    pub fn product(self) -> usize {
        self.p1 * self.p2 * self.p3
    }

    /// Each `P_n` must lie in `1..=I_n`.
    pub fn validate(self, tensor_dims: [usize; 3]) -> Result<()> {
        for (n, (&p, &i)) in self.as_array().iter().zip(&tensor_dims).enumerate() {
            if p == 0 || p > i {
                return Err(Error::InvalidArgument(format!(
                    "P{} = {p} must be in 1..={i}",
                    n + 1
                )));
            }
        }
        Ok(())
    }

    /// Caps every `P_n` at `I_n`.
    pub fn capped(self, tensor_dims: [usize; 3]) -> Self {
        Self::new(
            self.p1.min(tensor_dims[0]).max(1),
            self.p2.min(tensor_dims[1]).max(1),
            self.p3.min(tensor_dims[2]).max(1),
        )
    }
}

impl std::fmt::Display for SubspaceDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p1, self.p2, self.p3)
    }
}

/// Basis matrices `U_n` (`P_n × I_n`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    pub u: [DenseMatrix; 3],
}

impl FactorSet {
    pub fn new(u1: DenseMatrix, u2: DenseMatrix, u3: DenseMatrix) -> Result<Self> {
        for (n, u) in [&u1, &u2, &u3].iter().enumerate() {
            if u.nrows() == 0 || u.ncols() == 0 {
                return Err(Error::InvalidArgument(format!("factor U{} is empty", n + 1)));
            }
        }
        Ok(Self { u: [u1, u2, u3] })
    }

    pub fn refs(&self) -> [&DenseMatrix; 3] {
        [&self.u[0], &self.u[1], &self.u[2]]
    }

    pub fn subspace(&self) -> SubspaceDims {
        SubspaceDims::new(self.u[0].nrows(), self.u[1].nrows(), self.u[2].nrows())
    }

    /// `(I1, I2, I3)`.
    pub fn tensor_dims(&self) -> [usize; 3] {
        [self.u[0].ncols(), self.u[1].ncols(), self.u[2].ncols()]
    }

    fn check(&self, x_dims: [usize; 4]) -> Result<()> {
        if self.tensor_dims() != [x_dims[0], x_dims[1], x_dims[2]] {
            return Err(Error::DimensionMismatch(format!(
                "factors span {:?}, tensor has {:?}",
                self.tensor_dims(),
                x_dims
            )));
        }
        Ok(())
    }
}

/// Core tensor `S` (`P1×P2×P3×M`). Its mode-4 unfolding `S(4)` has row `m`
/// equal to the contiguous slice of asset `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    s: Tensor4,
}

impl CoreTensor {
    pub fn new(s: Tensor4) -> Result<Self> {
        Ok(Self { s })
    }

    pub fn zeros(dims: SubspaceDims, m: usize) -> Self {
        Self {
            s: Tensor4::zeros([dims.p1, dims.p2, dims.p3, m]).expect("valid dims"),
        }
    }

    pub fn from_s4(rows: &DenseMatrix, dims: [usize; 4]) -> Result<Self> {
        let p = dims[0] * dims[1] * dims[2];
        if rows.nrows() != dims[3] || rows.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "S(4) is {}×{}, expected {}×{p}",
                rows.nrows(),
                rows.ncols(),
                dims[3]
            )));
        }
        let mut data = Vec::with_capacity(rows.len());
        for r in rows.row_iter() {
            data.extend(r.iter());
        }
        Ok(Self {
            s: Tensor4::new(dims, data)?,
        })
    }

    pub fn tensor(&self) -> &Tensor4 {
        &self.s
    }

    pub fn into_tensor(self) -> Tensor4 {
        self.s
    }

    pub fn n_assets(&self) -> usize {
        self.s.dims()[3]
    }

    /// `S(4)`, an `M × P1P2P3` matrix.
    pub fn s4(&self) -> DenseMatrix {
        let d = self.s.dims();
        DenseMatrix::from_row_slice(d[3], d[0] * d[1] * d[2], self.s.data())
    }

    /// Row `m` of `S(4)`.
    pub fn row(&self, m: usize) -> &[f64] {
        let p = self.s.slice_len();
        &self.s.data()[m * p..(m + 1) * p]
    }
}

/// Starting point of the block updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Uncentered MPCA (truncated HOSVD) factors on data whose missing
    /// entries hold the cross-asset mean of the same position, masked
    /// least-squares core, regression fit on that core.
    Heuristic,
    /// Centered MPCA factors on zero-filled data.
    ZeroFilled,
    /// Seeded Gaussian factors, then the same core and regression steps.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub alpha: f64,
    pub family: FamilyKind,
    /// Stop when a full cycle lowers `Ψ` by less than `tol_epsilon·|Ψ0|`.
    pub tol_epsilon: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub init: InitStrategy,
    pub scale_update: ScaleUpdate,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            family: FamilyKind::LOGNORMAL,
            tol_epsilon: 1e-6,
            max_iters: 200,
            seed: 0,
            init: InitStrategy::Heuristic,
            scale_update: ScaleUpdate::Fixed,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.tol_epsilon > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitState {
    pub factors: FactorSet,
    pub core: CoreTensor,
    pub reg: ReparamCoefficients,
    /// `Ψ` after initialization, then after every full cycle.
    pub objective_history: Vec<f64>,
    pub warnings: Vec<String>,
    /// Some block fell back to a ridge-regularized solve.
    pub regularized: bool,
}

impl FitState {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.objective_history.len().saturating_sub(1)
    }

    fn warn(&mut self, msg: String) {
        if !self.warnings.contains(&msg) {
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
    }
}

fn check_inputs(x: &MaskedTensor4, y: &[f64]) -> Result<()> {
    let m = x.dims()[3];
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!("{} responses for {m} assets", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("responses".into()));
    }
    Ok(())
}

/// Completion term `‖P_Ω(X − S ×₁U1ᵀ ×₂U2ᵀ ×₃U3ᵀ)‖²`.
pub fn completion_residual(x: &MaskedTensor4, factors: &FactorSet, core: &CoreTensor) -> Result<f64> {
    factors.check(x.dims())?;
    x.masked_residual_sq(&core.tensor().expand(factors.refs())?)
}

/// Regression term: squared error for the normal family, NLL otherwise.
pub fn regression_loss(y: &[f64], core: &CoreTensor, reg: &ReparamCoefficients, family: FamilyKind) -> Result<f64> {
    let s4 = core.s4();
    if s4.nrows() != y.len() || reg.beta1.len() != s4.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses, S(4) {}×{}, {} coefficients",
            y.len(),
            s4.nrows(),
            s4.ncols(),
            reg.beta1.len()
        )));
    }
    if family.dist == Distribution::Normal {
        let fitted = &s4 * &reg.beta1;
        Ok(y
            .iter()
            .zip(fitted.iter())
            .map(|(&ym, &f)| (ym - reg.beta0 - f).powi(2))
            .sum())
    } else {
        lls::objective(family.dist, y, &s4, reg)
    }
}

/// The supervised criterion `Ψ`.
pub fn objective(x: &MaskedTensor4, y: &[f64], state: &FitState, cfg: &FitConfig) -> Result<f64> {
    check_inputs(x, y)?;
    let alpha = cfg.alpha;
    let mut psi = 0.0;
    if alpha > 0.0 {
        psi += alpha * completion_residual(x, &state.factors, &state.core)?;
    }
    if alpha < 1.0 {
        psi += (1.0 - alpha) * regression_loss(y, &state.core, &state.reg, cfg.family)?;
    }
    Ok(psi)
}

/// Core with α = 1 (pure masked least squares) for fixed factors.
fn completion_core(p: &Problem, factors: &FactorSet, m: usize) -> Result<(CoreTensor, Vec<usize>, bool)> {
    let blank_reg = ReparamCoefficients {
        beta0: 0.0,
        beta1: DVector::zeros(factors.subspace().product()),
        sigma_tilde: 1.0,
    };
    let y = vec![0.0; m];
    let out = if p.pattern == MaskPattern::Complete {
        updates::core_complete(p, &y, factors, &blank_reg, 1.0)?
    } else {
        updates::core_rows_mse(p, &y, &CoreTensor::zeros(factors.subspace(), m), factors, &blank_reg, 1.0)?
    };
    Ok((out.core, out.skipped_assets, out.regularized))
}

fn initial_regression(y: &[f64], core: &CoreTensor, family: FamilyKind) -> Result<(ReparamCoefficients, bool)> {
    if family.dist == Distribution::Normal {
        let start = ReparamCoefficients {
            beta0: 0.0,
            beta1: DVector::zeros(core.tensor().slice_len()),
            sigma_tilde: 1.0,
        };
        update_regression_block(y, core, Distribution::Normal, &start, ScaleUpdate::Joint)
    } else {
        let fit = lls::fit_reparam(family.dist, y, &core.s4())?;
        Ok((fit.coef, fit.regularized))
    }
}

fn state_from_factors(p: &Problem, y: &[f64], factors: FactorSet, family: FamilyKind) -> Result<FitState> {
    let m = y.len();
    let (core, skipped, reg_core) = completion_core(p, &factors, m)?;
    let (reg, reg_beta) = initial_regression(y, &core, family)?;
    let mut state = FitState {
        factors,
        core,
        reg,
        objective_history: Vec::new(),
        warnings: Vec::new(),
        regularized: reg_core || reg_beta,
    };
    for a in skipped {
        state.warn(format!("asset {a} has no observed entries; its core row starts at zero"));
    }
    Ok(state)
}

/// Core and regression coefficients for given starting factors.
pub fn init_from_factors(x: &MaskedTensor4, y: &[f64], factors: FactorSet, family: FamilyKind) -> Result<FitState> {
    check_inputs(x, y)?;
    factors.check(x.dims())?;
    state_from_factors(&Problem::new(x), y, factors, family)
}

/// Heuristic initialization: MPCA on mean-filled data.
pub fn init_heuristic(x: &MaskedTensor4, y: &[f64], dims: SubspaceDims, family: FamilyKind) -> Result<FitState> {
    check_inputs(x, y)?;
    let d = x.dims();
    dims.validate([d[0], d[1], d[2]])?;
    let factors = mpca::hosvd_factors(&mpca::mean_filled(x), dims, 10)?;
    state_from_factors(&Problem::new(x), y, factors, family)
}

/// MPCA initialization on zero-filled data.
pub fn init_zero_filled(x: &MaskedTensor4, y: &[f64], dims: SubspaceDims, family: FamilyKind) -> Result<FitState> {
    check_inputs(x, y)?;
    let d = x.dims();
    dims.validate([d[0], d[1], d[2]])?;
    let model = mpca::mpca_fit_with(x.values(), DimSelector::Fixed(dims), 1e-6, 10)?;
    state_from_factors(&Problem::new(x), y, model.factors, family)
}

/// Random initialization with seeded standard-normal factors.
pub fn init_random(x: &MaskedTensor4, y: &[f64], dims: SubspaceDims, family: FamilyKind, seed: u64) -> Result<FitState> {
    check_inputs(x, y)?;
    let d = x.dims();
    dims.validate([d[0], d[1], d[2]])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r: usize, c: usize| DenseMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let factors = FactorSet::new(draw(dims.p1, d[0]), draw(dims.p2, d[1]), draw(dims.p3, d[2]))?;
    state_from_factors(&Problem::new(x), y, factors, family)
}

/// Block Updating Algorithm: cycles `U1 → U2 → U3 → β → S` until a cycle
/// lowers `Ψ` by less than `tol_epsilon·|Ψ0|` or `max_iters` cycles ran.
pub fn fit(x: &MaskedTensor4, y: &[f64], dims: SubspaceDims, cfg: &FitConfig) -> Result<FitState> {
    cfg.validate()?;
    check_inputs(x, y)?;
    if y.len() < 2 {
        return Err(Error::InvalidArgument("at least 2 assets are required".into()));
    }
    if x.observed_count() == 0 {
        return Err(Error::FullyMasked);
    }
    let state = match cfg.init {
        InitStrategy::Heuristic => init_heuristic(x, y, dims, cfg.family)?,
        InitStrategy::ZeroFilled => init_zero_filled(x, y, dims, cfg.family)?,
        InitStrategy::Random => init_random(x, y, dims, cfg.family, cfg.seed)?,
    };
    fit_from(x, y, state, cfg)
}

/// Runs the block updates from a given state.
pub fn fit_from(x: &MaskedTensor4, y: &[f64], mut state: FitState, cfg: &FitConfig) -> Result<FitState> {
    cfg.validate()?;
    check_inputs(x, y)?;
    state.factors.check(x.dims())?;
    let p = Problem::new(x);
    let dist = cfg.family.dist;
    let psi0 = objective(x, y, &state, cfg)?;
    if !psi0.is_finite() {
        return Err(Error::NonFinite("initial objective".into()));
    }
    state.objective_history.push(psi0);
    let threshold = cfg.tol_epsilon * psi0.abs();
    for _ in 0..cfg.max_iters {
        for n in 0..3 {
            let mode = Mode::new(n + 1)?;
            let upd = match p.pattern {
                MaskPattern::Complete => updates::factor_complete(&p, &state.core, &state.factors, mode)?,
                MaskPattern::ImageWise if n < 2 => updates::factor_imagewise(&p, &state.core, &state.factors, mode)?,
                _ => updates::factor_entrywise(&p, &state.core, &state.factors, mode)?,
            };
            state.regularized |= upd.regularized;
            for i in &upd.skipped_columns {
                state.warn(format!("U{} column {i} has no observed entries; kept", n + 1));
            }
            state.factors.u[n] = upd.u;
        }

        if cfg.alpha < 1.0 {
            let (reg, r) = update_regression_block(y, &state.core, dist, &state.reg, cfg.scale_update)?;
            state.regularized |= r;
            state.reg = reg;
        }

        let upd = if dist == Distribution::Normal {
            if p.pattern == MaskPattern::Complete {
                updates::core_complete(&p, y, &state.factors, &state.reg, cfg.alpha)?
            } else {
                updates::core_rows_mse(&p, y, &state.core, &state.factors, &state.reg, cfg.alpha)?
            }
        } else {
            updates::core_rows_general(&p, y, &state.core, &state.factors, &state.reg, cfg.alpha, dist)?
        };
        state.regularized |= upd.regularized;
        for a in &upd.skipped_assets {
            state.warn(format!("asset {a} has no observed entries; core row kept"));
        }
        state.core = upd.core;

        let psi = objective(x, y, &state, cfg)?;
        if !psi.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at iteration {}",
                state.objective_history.len()
            )));
        }
        let prev = *state.objective_history.last().expect("non-empty");
        state.objective_history.push(psi);
        if prev - psi < threshold || psi == 0.0 {
            break;
        }
    }
    Ok(state)
}

/// Reconstruction `S ×₁U1ᵀ ×₂U2ᵀ ×₃U3ᵀ`.
pub fn reconstruct(state: &FitState) -> Result<Tensor4> {
    state.core.tensor().expand(state.factors.refs())
}
