//! (Log-)location-scale regression families.
//!
//! Each family is written in the reparameterized form
//! `σ̃ = 1/σ, β̃0 = β0/σ, β̃1 = β1/σ`, where the negative log-likelihood
//!
//! ```text
//! ℓ = M·c − M·log σ̃ + Σ_m ρ(ω̃_m),   ω̃_m = σ̃·y_m − β̃0 − s_mᵀ β̃1
//! ```
//!
//! is jointly convex in `(β̃0, β̃1, σ̃)`. Log-time families apply `log` to the
//! failure times first and then use the matching location-scale family.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd_vec, DenseMatrix};

/// Inverse scale beyond which a fit is reported as a perfect fit.
pub const PERFECT_FIT_SIGMA_TILDE: f64 = 1e8;

const NEWTON_GRAD_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 200;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Standardized error distribution of the location-scale model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Normal,
    Logistic,
    Sev,
}

impl Distribution {
    /// Per-observation loss `ρ(ω)` (without the constant term).
    #[inline]
    pub fn rho(self, w: f64) -> f64 {
        match self {
            Distribution::Normal => 0.5 * w * w,
            Distribution::Logistic => -w + 2.0 * softplus(w),
            Distribution::Sev => -w + w.exp(),
        }
    }

    /// `ρ'(ω)`.
    #[inline]
    pub fn rho_d1(self, w: f64) -> f64 {
        match self {
            Distribution::Normal => w,
            Distribution::Logistic => 2.0 * sigmoid(w) - 1.0,
            Distribution::Sev => w.exp() - 1.0,
        }
    }

    /// `ρ''(ω)`.
    #[inline]
    pub fn rho_d2(self, w: f64) -> f64 {
        match self {
            Distribution::Normal => 1.0,
            Distribution::Logistic => {
                let s = sigmoid(w);
                2.0 * s * (1.0 - s)
            }
            Distribution::Sev => w.exp(),
        }
    }

    /// Per-observation constant of the negative log-likelihood.
    fn constant(self) -> f64 {
        match self {
            Distribution::Normal => HALF_LOG_2PI,
            Distribution::Logistic | Distribution::Sev => 0.0,
        }
    }

    /// Median of the standardized distribution.
    pub fn median(self) -> f64 {
        match self {
            Distribution::Normal | Distribution::Logistic => 0.0,
            Distribution::Sev => std::f64::consts::LN_2.ln(),
        }
    }
}

#[inline]
fn softplus(w: f64) -> f64 {
    if w > 0.0 {
        w + (-w).exp().ln_1p()
    } else {
        w.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// A location-scale family, optionally on log time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FamilyKind {
    pub dist: Distribution,
    pub log_time: bool,
}

impl FamilyKind {
    pub const NORMAL: FamilyKind = FamilyKind::new(Distribution::Normal, false);
    pub const LOGNORMAL: FamilyKind = FamilyKind::new(Distribution::Normal, true);
    pub const LOGISTIC: FamilyKind = FamilyKind::new(Distribution::Logistic, false);
    pub const LOGLOGISTIC: FamilyKind = FamilyKind::new(Distribution::Logistic, true);
    pub const SEV: FamilyKind = FamilyKind::new(Distribution::Sev, false);
    pub const WEIBULL: FamilyKind = FamilyKind::new(Distribution::Sev, true);

    pub const ALL: [FamilyKind; 6] = [
        Self::NORMAL,
        Self::LOGNORMAL,
        Self::LOGISTIC,
        Self::LOGLOGISTIC,
        Self::SEV,
        Self::WEIBULL,
    ];

    pub const fn new(dist: Distribution, log_time: bool) -> Self {
        Self { dist, log_time }
    }

    pub fn name(self) -> &'static str {
        match (self.dist, self.log_time) {
            (Distribution::Normal, false) => "normal",
            (Distribution::Normal, true) => "lognormal",
            (Distribution::Logistic, false) => "logistic",
            (Distribution::Logistic, true) => "loglogistic",
            (Distribution::Sev, false) => "sev",
            (Distribution::Sev, true) => "weibull",
        }
    }

    /// Maps failure times to the location-scale response.
    pub fn transform(self, ttf: &[f64]) -> Result<Vec<f64>> {
        if !self.log_time {
            return Ok(ttf.to_vec());
        }
        ttf.iter()
            .map(|&t| {
                if t > 0.0 && t.is_finite() {
                    Ok(t.ln())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "{} family needs positive failure times, got {t}",
                        self.name()
                    )))
                }
            })
            .collect()
    }

    /// Maps a response-scale value back to time.
    pub fn to_time(self, v: f64) -> f64 {
        if self.log_time {
            v.exp()
        } else {
            v
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family {s:?}")))
    }
}

impl TryFrom<String> for FamilyKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FamilyKind> for String {
    fn from(f: FamilyKind) -> String {
        f.name().to_string()
    }
}

/// Coefficients in the convex reparameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ReparamCoefficients {
    pub beta0: f64,
    pub beta1: DVector<f64>,
    pub sigma_tilde: f64,
}

impl ReparamCoefficients {
    pub fn from_natural(beta0: f64, beta1: &DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {sigma}")));
        }
        Ok(Self {
            beta0: beta0 / sigma,
            beta1: beta1 / sigma,
            sigma_tilde: 1.0 / sigma,
        })
    }

    /// `(β0, β1, σ)`.
    pub fn to_natural(&self) -> (f64, DVector<f64>, f64) {
        let s = self.sigma_tilde;
        (self.beta0 / s, &self.beta1 / s, 1.0 / s)
    }

    fn to_vec(&self) -> DVector<f64> {
        let p = self.beta1.len();
        let mut v = DVector::zeros(p + 2);
        v[0] = self.beta0;
        v.rows_mut(1, p).copy_from(&self.beta1);
        v[p + 1] = self.sigma_tilde;
        v
    }

    fn from_vec(v: &DVector<f64>) -> Self {
        let p = v.len() - 2;
        Self {
            beta0: v[0],
            beta1: v.rows(1, p).into_owned(),
            sigma_tilde: v[p + 1],
        }
    }
}

/// `ω̃_m` for every asset.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedResiduals {
    pub omega: Vec<f64>,
}

fn check_design(y: &[f64], features: &DenseMatrix, p: usize) -> Result<()> {
    if features.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses but {} feature rows",
            y.len(),
            features.nrows()
        )));
    }
    if features.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} features but {} coefficients",
            features.ncols(),
            p
        )));
    }
    Ok(())
}

/// `ω̃ = σ̃·y − β̃0 − S·β̃1`.
pub fn standardized_residuals(
    y: &[f64],
    features: &DenseMatrix,
    c: &ReparamCoefficients,
) -> Result<StandardizedResiduals> {
    check_design(y, features, c.beta1.len())?;
    let lin = features * &c.beta1;
    let omega = y
        .iter()
        .zip(lin.iter())
        .map(|(&ym, &l)| c.sigma_tilde * ym - c.beta0 - l)
        .collect();
    Ok(StandardizedResiduals { omega })
}

/// Negative log-likelihood in the reparameterized form.
pub fn nll(dist: Distribution, omega: &StandardizedResiduals, sigma_tilde: f64) -> Result<f64> {
    if !(sigma_tilde > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse scale must be positive, got {sigma_tilde}"
        )));
    }
    let m = omega.omega.len() as f64;
    let sum: f64 = omega.omega.iter().map(|&w| dist.rho(w)).sum();
    Ok(m * dist.constant() - m * sigma_tilde.ln() + sum)
}

/// `nll ∘ standardized_residuals` evaluated at `c`; `+∞` outside the domain.
pub fn objective(dist: Distribution, y: &[f64], features: &DenseMatrix, c: &ReparamCoefficients) -> Result<f64> {
    if !(c.sigma_tilde > 0.0) {
        return Ok(f64::INFINITY);
    }
    let omega = standardized_residuals(y, features, c)?;
    nll(dist, &omega, c.sigma_tilde)
}

/// Gradient over `(β̃0, β̃1, σ̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGradient {
    pub beta0: f64,
    pub beta1: DVector<f64>,
    pub sigma_tilde: f64,
}

impl NllGradient {
    pub fn norm(&self) -> f64 {
        (self.beta0.powi(2) + self.beta1.norm_squared() + self.sigma_tilde.powi(2)).sqrt()
    }
}

/// Analytic gradient of the reparameterized negative log-likelihood.
pub fn nll_gradient(
    dist: Distribution,
    y: &[f64],
    features: &DenseMatrix,
    c: &ReparamCoefficients,
) -> Result<NllGradient> {
    let omega = standardized_residuals(y, features, c)?;
    let d1: DVector<f64> = DVector::from_iterator(y.len(), omega.omega.iter().map(|&w| dist.rho_d1(w)));
    let m = y.len() as f64;
    Ok(NllGradient {
        beta0: -d1.sum(),
        beta1: -(features.transpose() * &d1),
        sigma_tilde: -m / c.sigma_tilde + d1.iter().zip(y).map(|(d, y)| d * y).sum::<f64>(),
    })
}

fn gradient_vec(g: &NllGradient) -> DVector<f64> {
    ReparamCoefficients {
        beta0: g.beta0,
        beta1: g.beta1.clone(),
        sigma_tilde: g.sigma_tilde,
    }
    .to_vec()
}

fn hessian(dist: Distribution, y: &[f64], features: &DenseMatrix, c: &ReparamCoefficients) -> Result<DenseMatrix> {
    let omega = standardized_residuals(y, features, c)?;
    let p = features.ncols();
    let n = p + 2;
    let mut h = DenseMatrix::zeros(n, n);
    let mut a = DVector::zeros(n);
    for (m, &w) in omega.omega.iter().enumerate() {
        let d2 = dist.rho_d2(w);
        a[0] = -1.0;
        for k in 0..p {
            a[1 + k] = -features[(m, k)];
        }
        a[n - 1] = y[m];
        h.ger(d2, &a, &a, 1.0);
    }
    h[(n - 1, n - 1)] += y.len() as f64 / (c.sigma_tilde * c.sigma_tilde);
    Ok(h)
}

/// Ordinary least squares of `y` on `[1 | features]`, returning
/// `(intercept, slopes, regularized)`.
pub fn ordinary_least_squares(y: &[f64], features: &DenseMatrix) -> Result<(f64, DVector<f64>, bool)> {
    if features.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses but {} feature rows",
            y.len(),
            features.nrows()
        )));
    }
    let (m, p) = features.shape();
    let mut gram = DenseMatrix::zeros(p + 1, p + 1);
    let mut rhs = DVector::zeros(p + 1);
    let mut row = DVector::zeros(p + 1);
    for i in 0..m {
        row[0] = 1.0;
        for k in 0..p {
            row[k + 1] = features[(i, k)];
        }
        gram.ger(1.0, &row, &row, 1.0);
        rhs.axpy(y[i], &row, 1.0);
    }
    let (sol, regularized) = solve_spd_vec(&gram, &rhs);
    Ok((sol[0], sol.rows(1, p).into_owned(), regularized))
}

/// Result of a convex location-scale fit.
#[derive(Debug, Clone)]
pub struct ReparamFit {
    pub coef: ReparamCoefficients,
    /// Rank-deficient design solved with the ridge fallback.
    pub regularized: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Minimizes `ℓ(σ̃y − 1β̃0 − Sβ̃1)` over `(β̃0, β̃1, σ̃)` on an already
/// transformed response. Normal fits are closed form (OLS plus the MLE
/// scale `RSS / M`); other families run damped Newton from that start.
pub fn fit_reparam(dist: Distribution, y: &[f64], features: &DenseMatrix) -> Result<ReparamFit> {
    let m = y.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 observations, got {m}")));
    }
    if y.iter().any(|v| !v.is_finite()) || features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input".into()));
    }
    let (b0, b1, regularized) = ordinary_least_squares(y, features)?;
    let fitted = features * &b1;
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(&yy, &f)| (yy - b0 - f).powi(2))
        .sum();
    let sigma = (rss / m as f64).sqrt();
    if !(sigma > 0.0) || 1.0 / sigma > PERFECT_FIT_SIGMA_TILDE {
        return Err(Error::PerfectFit(1.0 / sigma));
    }
    let start = ReparamCoefficients::from_natural(b0, &b1, sigma)?;
    if dist == Distribution::Normal {
        let g = nll_gradient(dist, y, features, &start)?;
        return Ok(ReparamFit {
            coef: start,
            regularized,
            iterations: 0,
            gradient_norm: g.norm(),
        });
    }
    newton(dist, y, features, start, regularized, false)
}

/// Newton fit started from `start`. With `fix_scale` set, `σ̃` stays at its
/// starting value and only `(β̃0, β̃1)` move.
pub fn fit_reparam_from(
    dist: Distribution,
    y: &[f64],
    features: &DenseMatrix,
    start: ReparamCoefficients,
    fix_scale: bool,
) -> Result<ReparamFit> {
    check_design(y, features, start.beta1.len())?;
    if !(start.sigma_tilde > 0.0) {
        return Err(Error::InvalidArgument("starting scale must be positive".into()));
    }
    newton(dist, y, features, start, false, fix_scale)
}

fn newton(
    dist: Distribution,
    y: &[f64],
    features: &DenseMatrix,
    start: ReparamCoefficients,
    mut regularized: bool,
    fix_scale: bool,
) -> Result<ReparamFit> {
    let mut theta = start.to_vec();
    let n = theta.len();
    let mut coef = ReparamCoefficients::from_vec(&theta);
    let mut f = objective(dist, y, features, &coef)?;
    let free = if fix_scale { n - 1 } else { n };
    let restrict = |g: DVector<f64>| -> DVector<f64> {
        let mut g = g;
        if fix_scale {
            g[n - 1] = 0.0;
        }
        g
    };
    let mut grad = restrict(gradient_vec(&nll_gradient(dist, y, features, &coef)?));
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITERS && grad.norm() > NEWTON_GRAD_TOL {
        iterations += 1;
        let h = hessian(dist, y, features, &coef)?;
        let h = h.view((0, 0), (free, free)).into_owned();
        let (sub, reg) = solve_spd_vec(&h, &(-grad.rows(0, free)));
        let mut step = DVector::zeros(n);
        step.rows_mut(0, free).copy_from(&sub);
        regularized |= reg;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-14 {
            let cand = &theta + &step * t;
            if cand[n - 1] > 0.0 {
                let cc = ReparamCoefficients::from_vec(&cand);
                let fc = objective(dist, y, features, &cc)?;
                if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                    accepted = Some((cand, cc, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, cc, fc)) = accepted else {
            // No further decrease representable in floating point.
            break;
        };
        theta = cand;
        coef = cc;
        f = fc;
        if coef.sigma_tilde > PERFECT_FIT_SIGMA_TILDE {
            return Err(Error::PerfectFit(coef.sigma_tilde));
        }
        grad = restrict(gradient_vec(&nll_gradient(dist, y, features, &coef)?));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite("location-scale objective".into()));
    }
    Ok(ReparamFit {
        coef,
        regularized,
        iterations,
        gradient_norm: grad.norm(),
    })
}

/// Fitted location-scale regression in natural parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlsModel {
    pub family: FamilyKind,
    pub gamma0: f64,
    pub gamma1: Vec<f64>,
    pub sigma: f64,
}

/// [`LlsModel`] plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct LlsFit {
    pub model: LlsModel,
    pub regularized: bool,
    pub iterations: usize,
}

/// Maximum-likelihood location-scale regression of failure times on features.
pub fn fit_lls(ttf: &[f64], features: &DenseMatrix, family: FamilyKind) -> Result<LlsFit> {
    let y = family.transform(ttf)?;
    let fit = fit_reparam(family.dist, &y, features)?;
    let (gamma0, gamma1, sigma) = fit.coef.to_natural();
    Ok(LlsFit {
        model: LlsModel {
            family,
            gamma0,
            gamma1: gamma1.iter().copied().collect(),
            sigma,
        },
        regularized: fit.regularized,
        iterations: fit.iterations,
    })
}

/// Predicted failure-time distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtfDistribution {
    pub location: f64,
    pub scale: f64,
    pub family: FamilyKind,
    /// Distribution median on the time scale.
    pub point_estimate: f64,
}

pub fn predict_distribution(model: &LlsModel, feature: &[f64]) -> Result<TtfDistribution> {
    if feature.len() != model.gamma1.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} coefficients, feature has {} entries",
            model.gamma1.len(),
            feature.len()
        )));
    }
    let location = model.gamma0
        + model
            .gamma1
            .iter()
            .zip(feature)
            .map(|(g, f)| g * f)
            .sum::<f64>();
    let median = location + model.sigma * model.family.dist.median();
    Ok(TtfDistribution {
        location,
        scale: model.sigma,
        family: model.family,
        point_estimate: model.family.to_time(median),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn col(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn residuals_with_zero_coefficients_are_y() {
        let c = ReparamCoefficients {
            beta0: 0.0,
            beta1: DVector::from_vec(vec![0.0]),
            sigma_tilde: 1.0,
        };
        let w = standardized_residuals(&[2.0, 3.0], &col(&[5.0, 7.0]), &c).unwrap();
        assert_eq!(w.omega, vec![2.0, 3.0]);
    }

    #[test]
    fn residuals_by_direct_substitution() {
        let c = ReparamCoefficients {
            beta0: 1.0,
            beta1: DVector::from_vec(vec![1.0]),
            sigma_tilde: 2.0,
        };
        let w = standardized_residuals(&[2.0], &col(&[3.0]), &c).unwrap();
        assert_eq!(w.omega, vec![0.0]);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let c = ReparamCoefficients {
            beta0: 0.0,
            beta1: DVector::from_vec(vec![0.0]),
            sigma_tilde: 1.0,
        };
        assert!(standardized_residuals(&[1.0, 2.0, 3.0], &col(&[1.0, 2.0]), &c).is_err());
    }

    #[test]
    fn reparameterization_round_trip() {
        let b1 = DVector::from_vec(vec![0.3, -1.2]);
        let c = ReparamCoefficients::from_natural(2.5, &b1, 0.7).unwrap();
        let (b0, b1n, s) = c.to_natural();
        assert_relative_eq!(b0, 2.5, max_relative = 1e-12);
        assert_relative_eq!(s, 0.7, max_relative = 1e-12);
        assert!((b1n - b1).norm() < 1e-12);

        let y = [1.0, 2.0, 4.0];
        let s_mat = DenseMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let w = standardized_residuals(&y, &s_mat, &c).unwrap();
        for m in 0..3 {
            let natural = (y[m] - 2.5 - (0.3 * s_mat[(m, 0)] - 1.2 * s_mat[(m, 1)])) / 0.7;
            assert!((w.omega[m] - natural).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_reference_values() {
        let z = |v: Vec<f64>| StandardizedResiduals { omega: v };
        assert_relative_eq!(
            nll(Distribution::Normal, &z(vec![0.0, 0.0]), 1.0).unwrap(),
            (2.0 * std::f64::consts::PI).ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(nll(Distribution::Logistic, &z(vec![0.0]), 1.0).unwrap(), 2.0 * 2f64.ln());
        assert_relative_eq!(nll(Distribution::Sev, &z(vec![0.0]), 1.0).unwrap(), 1.0);
        assert_relative_eq!(
            nll(Distribution::Normal, &z(vec![1.0]), 1.0).unwrap(),
            1.418_938_533_204_672_7,
            max_relative = 1e-14
        );
        assert!(nll(Distribution::Normal, &z(vec![1.0]), 0.0).is_err());
        assert!(nll(Distribution::Normal, &z(vec![1.0]), -1.0).is_err());
    }

    #[test]
    fn logistic_loss_is_stable_for_large_residuals() {
        let d = Distribution::Logistic;
        assert_relative_eq!(d.rho(800.0), 800.0, max_relative = 1e-12);
        assert_relative_eq!(d.rho(-800.0), 800.0, max_relative = 1e-12);
        assert!(d.rho_d2(800.0).is_finite());
    }

    #[test]
    fn normal_gradient_closed_form() {
        let c = ReparamCoefficients {
            beta0: 0.2,
            beta1: DVector::from_vec(vec![0.5]),
            sigma_tilde: 1.5,
        };
        let y = [2.0];
        let s = col(&[1.0]);
        let w = 1.5 * 2.0 - 0.2 - 0.5;
        let g = nll_gradient(Distribution::Normal, &y, &s, &c).unwrap();
        assert_relative_eq!(g.sigma_tilde, -1.0 / 1.5 + w * 2.0, max_relative = 1e-14);
        assert_relative_eq!(g.beta0, -w, max_relative = 1e-14);
    }

    #[test]
    fn normal_gradient_vanishes_at_zero_residual() {
        let c = ReparamCoefficients {
            beta0: 3.0,
            beta1: DVector::from_vec(vec![0.0]),
            sigma_tilde: 1.0,
        };
        let g = nll_gradient(Distribution::Normal, &[3.0, 3.0], &col(&[1.0, 2.0]), &c).unwrap();
        assert_eq!(g.beta0, 0.0);
    }

    #[test]
    fn normal_fit_matches_ols_and_mle_scale() {
        let fit = fit_lls(&[0.0, 1.0, 1.0], &col(&[0.0, 1.0, 2.0]), FamilyKind::NORMAL).unwrap();
        assert_relative_eq!(fit.model.gamma0, 1.0 / 6.0, max_relative = 1e-10);
        assert_relative_eq!(fit.model.gamma1[0], 0.5, max_relative = 1e-10);
        assert_relative_eq!(fit.model.sigma, (1.0f64 / 18.0).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn constant_response_is_a_perfect_fit() {
        for family in [FamilyKind::NORMAL, FamilyKind::LOGISTIC, FamilyKind::SEV] {
            let r = fit_lls(&[2.0, 2.0, 2.0], &col(&[0.0, 0.0, 0.0]), family);
            assert!(matches!(r, Err(Error::PerfectFit(_))), "{family}");
        }
    }

    #[test]
    fn rank_deficient_design_is_flagged() {
        let s = DenseMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let fit = fit_lls(&[1.0, 3.0, 2.0, 5.0], &s, FamilyKind::NORMAL).unwrap();
        assert!(fit.regularized);
    }

    #[test]
    fn sev_fit_reaches_gradient_tolerance() {
        let s = col(&[0.1, 0.4, 0.3, 0.9, 0.7, 0.2, 0.5, 0.8]);
        let y = [1.0, 1.9, 1.2, 3.1, 2.0, 1.1, 1.5, 2.9];
        let fit = fit_reparam(Distribution::Sev, &y, &s).unwrap();
        assert!(fit.gradient_norm <= 1e-10, "{}", fit.gradient_norm);
    }

    #[test]
    fn log_families_reject_nonpositive_times() {
        assert!(FamilyKind::WEIBULL.transform(&[1.0, 0.0]).is_err());
        assert!(FamilyKind::SEV.transform(&[1.0, 0.0]).is_ok());
    }

    #[test]
    fn prediction_uses_median() {
        let model = LlsModel {
            family: FamilyKind::NORMAL,
            gamma0: 1.0,
            gamma1: vec![2.0],
            sigma: 0.5,
        };
        let p = predict_distribution(&model, &[3.0]).unwrap();
        assert_eq!((p.location, p.scale, p.point_estimate), (7.0, 0.5, 7.0));
        let p0 = predict_distribution(&model, &[0.0]).unwrap();
        assert_eq!(p0.location, 1.0);

        let lognormal = LlsModel {
            family: FamilyKind::LOGNORMAL,
            ..model.clone()
        };
        let p = predict_distribution(&lognormal, &[3.0]).unwrap();
        assert_relative_eq!(p.point_estimate, 1_096.633_158_428_458_6, max_relative = 1e-12);

        assert!(predict_distribution(&model, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn model_json_shape() {
        let model = LlsModel {
            family: FamilyKind::WEIBULL,
            gamma0: 0.1,
            gamma1: vec![1.5, -2.0],
            sigma: 0.25,
        };
        let json = serde_json::to_value(&model).unwrap();
        assert_eq!(json["family"], "weibull");
        assert_eq!(json["gamma1"][1], -2.0);
        let back: LlsModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn family_names_parse() {
        for f in FamilyKind::ALL {
            assert_eq!(f.name().parse::<FamilyKind>().unwrap(), f);
        }
        assert!("gamma".parse::<FamilyKind>().is_err());
    }
}
