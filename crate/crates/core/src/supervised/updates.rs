//! Block updates of the supervised criterion.
//!
//! Factor updates drop the regression term (it does not depend on `U_n`) and
//! solve the masked least-squares problem `min ‖P_Ω(X(n) − U_nᵀ Z)‖²` with
//! `Z` the mode-`n` unfolding of the core multiplied by the other two factor
//! transposes. Core updates solve, per asset, the two-term quadratic (or
//! convex, for non-normal families) problem in `s_m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{kronecker, solve_spd, solve_spd_vec, DenseMatrix};
use crate::lls::{self, Distribution, ReparamCoefficients};
use crate::tensor::{FrameStatus, MaskPattern, MaskedTensor4, Mode, Tensor4};

use super::{CoreTensor, FactorSet};

/// Unfoldings and mask metadata of the data tensor, computed once per fit.
#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    pub x: &'a MaskedTensor4,
    pub unfold: [(DenseMatrix, DMatrix<bool>); 3],
    pub pattern: MaskPattern,
    /// Frame status indexed by `i3 + I3·m`.
    pub frames: Vec<FrameStatus>,
}

impl<'a> Problem<'a> {
    pub fn new(x: &'a MaskedTensor4) -> Self {
        let [_, _, d3, dm] = x.dims();
        let mut frames = Vec::with_capacity(d3 * dm);
        for m in 0..dm {
            for i3 in 0..d3 {
                frames.push(x.frame_status(i3, m));
            }
        }
        Self {
            x,
            unfold: [
                x.matricize(Mode::ONE),
                x.matricize(Mode::TWO),
                x.matricize(Mode::THREE),
            ],
            pattern: x.pattern(),
            frames,
        }
    }

    pub fn frame(&self, i3: usize, m: usize) -> FrameStatus {
        self.frames[i3 + self.x.dims()[2] * m]
    }
}

/// Mode-`n` unfolding of the core multiplied by every factor transpose except
/// the `n`-th (`S_{U_n(n)}`).
pub fn projected_core_unfolding(core: &CoreTensor, factors: &FactorSet, mode: Mode) -> Result<DenseMatrix> {
    let n = mode.index();
    if n > 2 {
        return Err(Error::InvalidMode { mode: mode.number(), order: 3 });
    }
    let t: Vec<DenseMatrix> = factors.u.iter().map(|u| u.transpose()).collect();
    let mut mats: [Option<&DenseMatrix>; 3] = [Some(&t[0]), Some(&t[1]), Some(&t[2])];
    mats[n] = None;
    Ok(core.tensor().multi_mode_product(mats)?.matricize(mode))
}

fn check_factor_mode(mode: Mode) -> Result<usize> {
    let n = mode.index();
    if n > 2 {
        Err(Error::InvalidMode { mode: mode.number(), order: 3 })
    } else {
        Ok(n)
    }
}

/// Result of a factor update.
#[derive(Debug, Clone)]
pub struct FactorUpdate {
    pub u: DenseMatrix,
    pub regularized: bool,
    /// Columns left unchanged because their row of the unfolding had no
    /// observed entries.
    pub skipped_columns: Vec<usize>,
}

pub(crate) fn factor_complete(p: &Problem, core: &CoreTensor, factors: &FactorSet, mode: Mode) -> Result<FactorUpdate> {
    check_factor_mode(mode)?;
    let z = projected_core_unfolding(core, factors, mode)?;
    let xn = &p.unfold[mode.index()].0;
    let gram = &z * z.transpose();
    let rhs = &z * xn.transpose();
    let sol = solve_spd(&gram, &rhs);
    Ok(FactorUpdate {
        u: sol.x,
        regularized: sol.regularized,
        skipped_columns: Vec::new(),
    })
}

/// Closed-form factor update for fully observed data:
/// `U_n = (X(n) Zᵀ (Z Zᵀ)⁻¹)ᵀ`.
pub fn update_factor_complete(
    x: &MaskedTensor4,
    core: &CoreTensor,
    factors: &FactorSet,
    mode: Mode,
) -> Result<FactorUpdate> {
    if x.pattern() != MaskPattern::Complete {
        return Err(Error::InvalidArgument(
            "complete-data factor update called on a tensor with missing entries".into(),
        ));
    }
    factor_complete(&Problem::new(x), core, factors, mode)
}

/// Gram matrix and right-hand side of every row of a mode-`n` factor problem,
/// restricted to each row's observed columns.
fn row_normal_equations(
    xn: &DenseMatrix,
    mask: &DMatrix<bool>,
    z: &DenseMatrix,
    rows: &[usize],
) -> Vec<(DenseMatrix, DVector<f64>, usize)> {
    let pn = z.nrows();
    let mut out: Vec<(DenseMatrix, DVector<f64>, usize)> = rows
        .iter()
        .map(|_| (DenseMatrix::zeros(pn, pn), DVector::zeros(pn), 0))
        .collect();
    let mut zz = DenseMatrix::zeros(pn, pn);
    for j in 0..z.ncols() {
        let zj = z.column(j);
        let mut outer_done = false;
        for (slot, &i) in rows.iter().enumerate() {
            if !mask[(i, j)] {
                continue;
            }
            if !outer_done {
                zz.fill(0.0);
                zz.ger(1.0, &zj, &zj, 0.0);
                outer_done = true;
            }
            let (g, r, count) = &mut out[slot];
            *g += &zz;
            r.axpy(xn[(i, j)], &zj, 1.0);
            *count += 1;
        }
    }
    out
}

pub(crate) fn factor_entrywise(p: &Problem, core: &CoreTensor, factors: &FactorSet, mode: Mode) -> Result<FactorUpdate> {
    let n = check_factor_mode(mode)?;
    let z = projected_core_unfolding(core, factors, mode)?;
    let (xn, mask) = &p.unfold[n];
    let rows: Vec<usize> = (0..xn.nrows()).collect();
    let systems = row_normal_equations(xn, mask, &z, &rows);
    let mut u = factors.u[n].clone();
    let mut regularized = false;
    let mut skipped = Vec::new();
    for (i, (g, r, count)) in systems.into_iter().enumerate() {
        if count == 0 {
            skipped.push(i);
            continue;
        }
        let (col, reg) = solve_spd_vec(&g, &r);
        regularized |= reg;
        u.set_column(i, &col);
    }
    Ok(FactorUpdate {
        u,
        regularized,
        skipped_columns: skipped,
    })
}

/// Outcome of a single-column or single-row update.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorUpdate {
    Updated { value: DVector<f64>, regularized: bool },
    /// No observed entries; the caller keeps the previous value.
    Unchanged,
}

/// Column `i` of `U_n` from the observed entries of row `i` of `X(n)`.
pub fn update_factor_column_entrywise(
    x: &MaskedTensor4,
    core: &CoreTensor,
    factors: &FactorSet,
    mode: Mode,
    column: usize,
) -> Result<VectorUpdate> {
    let n = check_factor_mode(mode)?;
    if column >= x.dims()[n] {
        return Err(Error::InvalidArgument(format!(
            "column {column} out of range for mode {}",
            mode.number()
        )));
    }
    let z = projected_core_unfolding(core, factors, mode)?;
    let (xn, mask) = x.matricize(mode);
    let (g, r, count) = row_normal_equations(&xn, &mask, &z, &[column])
        .pop()
        .expect("one row requested");
    if count == 0 {
        return Ok(VectorUpdate::Unchanged);
    }
    let (value, regularized) = solve_spd_vec(&g, &r);
    Ok(VectorUpdate::Updated { value, regularized })
}

/// Column-by-column update of `U_n` for entry-wise missing data.
pub fn update_factor_entrywise(
    x: &MaskedTensor4,
    core: &CoreTensor,
    factors: &FactorSet,
    mode: Mode,
) -> Result<FactorUpdate> {
    factor_entrywise(&Problem::new(x), core, factors, mode)
}

pub(crate) fn factor_imagewise(p: &Problem, core: &CoreTensor, factors: &FactorSet, mode: Mode) -> Result<FactorUpdate> {
    let n = check_factor_mode(mode)?;
    if n > 1 {
        return Err(Error::InvalidArgument(
            "image-wise factor update applies to modes 1 and 2 only".into(),
        ));
    }
    if p.pattern == MaskPattern::EntryWise {
        return Err(Error::NotImageWise);
    }
    let mut z = projected_core_unfolding(core, factors, mode)?;
    let (xn, mask) = &p.unfold[n];
    // Every row shares the same available columns; zero the rest.
    for j in 0..z.ncols() {
        if !mask[(0, j)] {
            z.column_mut(j).fill(0.0);
        }
    }
    let gram = &z * z.transpose();
    let rhs = &z * xn.transpose();
    if gram.iter().all(|&v| v == 0.0) {
        return Ok(FactorUpdate {
            u: factors.u[n].clone(),
            regularized: false,
            skipped_columns: (0..xn.nrows()).collect(),
        });
    }
    let sol = solve_spd(&gram, &rhs);
    Ok(FactorUpdate {
        u: sol.x,
        regularized: sol.regularized,
        skipped_columns: Vec::new(),
    })
}

/// Single-solve update of `U1` or `U2` when whole frames are missing.
pub fn update_factor_imagewise(
    x: &MaskedTensor4,
    core: &CoreTensor,
    factors: &FactorSet,
    mode: Mode,
) -> Result<FactorUpdate> {
    factor_imagewise(&Problem::new(x), core, factors, mode)
}

/// Per-asset data term `b_m = P_Ω(X_m) ×₁U1 ×₂U2 ×₃U3`, i.e. row `m` of
/// `X(4)^{π} (U3⊗U2⊗U1)^{πᵀ}`, as an `M × P` matrix.
pub(crate) fn projected_data(x: &MaskedTensor4, factors: &FactorSet) -> Result<DenseMatrix> {
    let proj = x.values().project(factors.refs())?;
    let [p1, p2, p3, m] = proj.dims();
    Ok(DenseMatrix::from_row_slice(m, p1 * p2 * p3, proj.data()))
}

/// Gram matrices `Σ_{j∈π_m} k_j k_jᵀ` of the Kronecker basis for every asset.
pub(crate) struct AssetGrams {
    pub full: DenseMatrix,
    pub per_asset: Vec<DenseMatrix>,
}

pub(crate) fn asset_grams(p: &Problem, factors: &FactorSet) -> AssetGrams {
    let [u1, u2, u3] = factors.refs();
    let g1 = u1 * u1.transpose();
    let g2 = u2 * u2.transpose();
    let g3 = u3 * u3.transpose();
    let g21 = kronecker(&g2, &g1);
    let full = kronecker(&g3, &g21);
    let [d1, d2, d3, dm] = p.x.dims();
    let (p1, p2, p3) = (u1.nrows(), u2.nrows(), u3.nrows());
    let p12 = p1 * p2;
    let mut per_asset = Vec::with_capacity(dm);
    for m in 0..dm {
        if p.pattern == MaskPattern::Complete {
            per_asset.push(full.clone());
            continue;
        }
        let mut observed = DenseMatrix::zeros(p3, p3);
        let mut partial = DenseMatrix::zeros(p12 * p3, p12 * p3);
        let mut any_partial = false;
        for i3 in 0..d3 {
            let u3c = u3.column(i3);
            match p.frame(i3, m) {
                FrameStatus::Observed => observed.ger(1.0, &u3c, &u3c, 1.0),
                FrameStatus::Missing => {}
                FrameStatus::Partial => {
                    any_partial = true;
                    let mut w = DenseMatrix::zeros(p12, p12);
                    let mut k21 = DVector::zeros(p12);
                    for i2 in 0..d2 {
                        for i1 in 0..d1 {
                            if !p.x.is_observed(i1, i2, i3, m) {
                                continue;
                            }
                            for b in 0..p2 {
                                for a in 0..p1 {
                                    k21[a + p1 * b] = u2[(b, i2)] * u1[(a, i1)];
                                }
                            }
                            w.ger(1.0, &k21, &k21, 1.0);
                        }
                    }
                    let outer3 = u3c * u3c.transpose();
                    partial += kronecker(&outer3, &w);
                }
            }
        }
        let mut g = kronecker(&observed, &g21);
        if any_partial {
            g += partial;
        }
        per_asset.push(g);
    }
    AssetGrams { full, per_asset }
}

/// Asset `m` has no observed entries.
fn asset_empty(p: &Problem, m: usize) -> bool {
    let d3 = p.x.dims()[2];
    (0..d3).all(|i3| p.frame(i3, m) == FrameStatus::Missing)
}

/// Result of a core update.
#[derive(Debug, Clone)]
pub struct CoreUpdate {
    pub core: CoreTensor,
    pub regularized: bool,
    /// Assets whose row was left unchanged (nothing observed, `α = 1`).
    pub skipped_assets: Vec<usize>,
}

pub(crate) fn core_complete(
    p: &Problem,
    y: &[f64],
    factors: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
) -> Result<CoreUpdate> {
    let b = projected_data(p.x, factors)?;
    let grams = asset_grams(p, factors);
    let beta1 = &reg.beta1;
    let mut bracket = grams.full * alpha;
    bracket.ger(1.0 - alpha, beta1, beta1, 1.0);
    let mut numer_t = b.transpose() * alpha;
    for (m, &ym) in y.iter().enumerate() {
        numer_t.column_mut(m).axpy((1.0 - alpha) * (ym - reg.beta0), beta1, 1.0);
    }
    let sol = solve_spd(&bracket, &numer_t);
    let dims = core_dims(factors, y.len());
    Ok(CoreUpdate {
        core: CoreTensor::from_s4(&sol.x.transpose(), dims)?,
        regularized: sol.regularized,
        skipped_assets: Vec::new(),
    })
}

fn core_dims(factors: &FactorSet, m: usize) -> [usize; 4] {
    [factors.u[0].nrows(), factors.u[1].nrows(), factors.u[2].nrows(), m]
}

/// Closed-form core update for fully observed data (normal/MSE form).
pub fn update_core_complete(
    x: &MaskedTensor4,
    y: &[f64],
    factors: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
) -> Result<CoreUpdate> {
    if x.pattern() != MaskPattern::Complete {
        return Err(Error::InvalidArgument(
            "complete-data core update called on a tensor with missing entries".into(),
        ));
    }
    check_y(x, y)?;
    core_complete(&Problem::new(x), y, factors, reg, alpha)
}

fn check_y(x: &MaskedTensor4, y: &[f64]) -> Result<()> {
    if y.len() != x.dims()[3] {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} assets",
            y.len(),
            x.dims()[3]
        )));
    }
    Ok(())
}

fn mse_row(
    b_m: &DVector<f64>,
    gram_m: &DenseMatrix,
    ym: f64,
    reg: &ReparamCoefficients,
    alpha: f64,
) -> (DVector<f64>, bool) {
    let beta1 = &reg.beta1;
    let mut bracket = gram_m * alpha;
    bracket.ger(1.0 - alpha, beta1, beta1, 1.0);
    let numer = b_m * alpha + beta1 * ((1.0 - alpha) * (ym - reg.beta0));
    solve_spd_vec(&bracket, &numer)
}

pub(crate) fn core_rows_mse(
    p: &Problem,
    y: &[f64],
    core: &CoreTensor,
    factors: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
) -> Result<CoreUpdate> {
    let b = projected_data(p.x, factors)?;
    let grams = asset_grams(p, factors);
    let mut s4 = core.s4();
    let mut regularized = false;
    let mut skipped = Vec::new();
    for m in 0..y.len() {
        if alpha >= 1.0 && asset_empty(p, m) {
            skipped.push(m);
            continue;
        }
        let b_m = b.row(m).transpose();
        let (row, reg_used) = mse_row(&b_m, &grams.per_asset[m], y[m], reg, alpha);
        regularized |= reg_used;
        s4.set_row(m, &row.transpose());
    }
    Ok(CoreUpdate {
        core: CoreTensor::from_s4(&s4, core_dims(factors, y.len()))?,
        regularized,
        skipped_assets: skipped,
    })
}

/// Row `m` of `S(4)` from the observed entries of asset `m` (normal/MSE form).
pub fn update_core_row_entrywise(
    x: &MaskedTensor4,
    y: &[f64],
    factors: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
    m: usize,
) -> Result<VectorUpdate> {
    check_y(x, y)?;
    if m >= y.len() {
        return Err(Error::InvalidArgument(format!("asset {m} out of range")));
    }
    let p = Problem::new(x);
    if alpha >= 1.0 && asset_empty(&p, m) {
        return Ok(VectorUpdate::Unchanged);
    }
    let b = projected_data(x, factors)?;
    let grams = asset_grams(&p, factors);
    let b_m = b.row(m).transpose();
    let (value, regularized) = mse_row(&b_m, &grams.per_asset[m], y[m], reg, alpha);
    Ok(VectorUpdate::Updated { value, regularized })
}

/// Row-wise core update for a general location-scale family with `σ̃` fixed:
/// minimizes `α‖P_Ω(X_m − s_m K)‖² + (1 − α)·ρ(σ̃y_m − β̃0 − s_mᵀβ̃1)` for each
/// asset by damped Newton started from the current row.
pub(crate) fn core_rows_general(
    p: &Problem,
    y: &[f64],
    core: &CoreTensor,
    factors: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
    dist: Distribution,
) -> Result<CoreUpdate> {
    let b = projected_data(p.x, factors)?;
    let grams = asset_grams(p, factors);
    let mut s4 = core.s4();
    let mut regularized = false;
    let mut skipped = Vec::new();
    for m in 0..y.len() {
        if alpha >= 1.0 && asset_empty(p, m) {
            skipped.push(m);
            continue;
        }
        let start = s4.row(m).transpose();
        let b_m = b.row(m).transpose();
        let (row, reg_used) = newton_core_row(
            &start,
            &b_m,
            &grams.per_asset[m],
            reg.sigma_tilde * y[m] - reg.beta0,
            &reg.beta1,
            alpha,
            dist,
        );
        regularized |= reg_used;
        s4.set_row(m, &row.transpose());
    }
    Ok(CoreUpdate {
        core: CoreTensor::from_s4(&s4, core_dims(factors, y.len()))?,
        regularized,
        skipped_assets: skipped,
    })
}

/// Per-asset general-family objective without the constant `‖x_m‖²` term.
fn row_objective(s: &DVector<f64>, b: &DVector<f64>, g: &DenseMatrix, shift: f64, beta1: &DVector<f64>, alpha: f64, dist: Distribution) -> f64 {
    let quad = s.dot(&(g * s)) - 2.0 * s.dot(b);
    let w = shift - s.dot(beta1);
    alpha * quad + (1.0 - alpha) * dist.rho(w)
}

fn newton_core_row(
    start: &DVector<f64>,
    b: &DVector<f64>,
    g: &DenseMatrix,
    shift: f64,
    beta1: &DVector<f64>,
    alpha: f64,
    dist: Distribution,
) -> (DVector<f64>, bool) {
    let mut s = start.clone();
    let mut f = row_objective(&s, b, g, shift, beta1, alpha, dist);
    let mut regularized = false;
    let scale = 1.0 + b.norm() + g.norm();
    for _ in 0..100 {
        let w = shift - s.dot(beta1);
        let grad = (g * &s - b) * (2.0 * alpha) - beta1 * ((1.0 - alpha) * dist.rho_d1(w));
        if grad.norm() <= 1e-12 * scale {
            break;
        }
        let mut hess = g * (2.0 * alpha);
        hess.ger((1.0 - alpha) * dist.rho_d2(w), beta1, beta1, 1.0);
        let (step, reg) = solve_spd_vec(&hess, &(-&grad));
        regularized |= reg;
        let slope = grad.dot(&step);
        if slope >= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-14 {
            let cand = &s + &step * t;
            let fc = row_objective(&cand, b, g, shift, beta1, alpha, dist);
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                s = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (s, regularized)
}

/// How `σ̃` is treated by the regression block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleUpdate {
    /// Keep `σ̃` at its current value.
    Fixed,
    /// Optimize `σ̃` jointly with `(β̃0, β̃1)`.
    Joint,
}

/// Regression block.
///
/// Normal family: ordinary least squares of `y` on `[1 | S(4)]`; `σ̃` is set
/// from the MLE residual scale but does not enter the MSE criterion. Other
/// families: convex Newton solve of `ℓ(σ̃y − 1β̃0 − S(4)β̃1)` started at
/// `current`, with `σ̃` fixed or joint per `scale`.
pub fn update_regression_block(
    y: &[f64],
    core: &CoreTensor,
    dist: Distribution,
    current: &ReparamCoefficients,
    scale: ScaleUpdate,
) -> Result<(ReparamCoefficients, bool)> {
    let s4 = core.s4();
    if y.len() < 2 {
        return Err(Error::InvalidArgument("regression block needs at least 2 assets".into()));
    }
    if dist == Distribution::Normal {
        let (b0, b1, regularized) = lls::ordinary_least_squares(y, &s4)?;
        let rss: f64 = y
            .iter()
            .zip((&s4 * &b1).iter())
            .map(|(&ym, &f)| (ym - b0 - f).powi(2))
            .sum();
        let sigma = (rss / y.len() as f64).sqrt();
        let sigma_tilde = if sigma > 0.0 { 1.0 / sigma } else { current.sigma_tilde };
        return Ok((
            ReparamCoefficients {
                beta0: b0,
                beta1: b1,
                sigma_tilde,
            },
            regularized,
        ));
    }
    let fit = match scale {
        ScaleUpdate::Joint => lls::fit_reparam_from(dist, y, &s4, current.clone(), false)?,
        ScaleUpdate::Fixed => lls::fit_reparam_from(dist, y, &s4, current.clone(), true)?,
    };
    Ok((fit.coef, fit.regularized))
}

/// Convenience wrapper: build the core tensor from `S(4)` rows.
pub fn core_from_rows(rows: &DenseMatrix, factors: &FactorSet) -> Result<CoreTensor> {
    CoreTensor::from_s4(rows, core_dims(factors, rows.nrows()))
}

#[allow(dead_code)]
pub(crate) fn full_tensor(core: &CoreTensor, factors: &FactorSet) -> Result<Tensor4> {
    core.tensor().expand(factors.refs())
}
