//! Independent oracles shared by the integration tests.
//!
//! Everything here is assembled entry by entry from the scalar model
//! `x[i1,i2,i3,m] = Σ_abc S[a,b,c,m]·U1[a,i1]·U2[b,i2]·U3[c,i3]` and solved with
//! an SVD least-squares solve, never with the library's normal equations.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tdr_core::lls::ReparamCoefficients;
use tdr_core::{CoreTensor, DenseMatrix, FactorSet, MaskedTensor4, Tensor4};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_, _, _, _| StandardNormal.sample(rng)).unwrap()
}

pub fn random_factors(rng: &mut ChaCha8Rng, p: [usize; 3], i: [usize; 3]) -> FactorSet {
    FactorSet::new(gauss(rng, p[0], i[0]), gauss(rng, p[1], i[1]), gauss(rng, p[2], i[2])).unwrap()
}

pub fn random_core(rng: &mut ChaCha8Rng, p: [usize; 3], m: usize) -> CoreTensor {
    CoreTensor::new(random_tensor(rng, [p[0], p[1], p[2], m])).unwrap()
}

pub fn random_reg(rng: &mut ChaCha8Rng, p: usize) -> ReparamCoefficients {
    ReparamCoefficients {
        beta0: StandardNormal.sample(rng),
        beta1: DVector::from_fn(p, |_, _| StandardNormal.sample(rng)),
        sigma_tilde: 0.5 + rng.random::<f64>(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    Complete,
    Entry(f64),
    Image(f64),
}

/// Random mask of the requested kind. Image-wise masks drop whole frames.
pub fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 4], kind: MaskKind) -> Vec<bool> {
    let [d1, d2, d3, m] = dims;
    let len = d1 * d2 * d3 * m;
    match kind {
        MaskKind::Complete => vec![true; len],
        MaskKind::Entry(rate) => (0..len).map(|_| rng.random::<f64>() >= rate).collect(),
        MaskKind::Image(rate) => {
            let frames: Vec<bool> = (0..d3 * m).map(|_| rng.random::<f64>() >= rate).collect();
            (0..len).map(|k| frames[k / (d1 * d2)]).collect()
        }
    }
}

pub fn masked(values: Tensor4, mask: Vec<bool>) -> MaskedTensor4 {
    MaskedTensor4::new(values, mask).unwrap()
}

/// `x[i1,i2,i3,m]` of the Tucker model, by explicit summation.
pub fn model_entry(core: &Tensor4, f: &FactorSet, i: [usize; 4]) -> f64 {
    let [p1, p2, p3, _] = core.dims();
    let mut acc = 0.0;
    for c in 0..p3 {
        for b in 0..p2 {
            for a in 0..p1 {
                acc += core.get(a, b, c, i[3]) * f.u[0][(a, i[0])] * f.u[1][(b, i[1])] * f.u[2][(c, i[2])];
            }
        }
    }
    acc
}

pub fn model_tensor(core: &Tensor4, f: &FactorSet) -> Tensor4 {
    let [i1, i2, i3] = [f.u[0].ncols(), f.u[1].ncols(), f.u[2].ncols()];
    let m = core.dims()[3];
    Tensor4::from_fn([i1, i2, i3, m], |a, b, c, d| model_entry(core, f, [a, b, c, d])).unwrap()
}

/// Minimum-norm least squares via SVD.
pub fn lstsq(a: &DenseMatrix, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13 * svd.singular_values.max()).unwrap()
}

/// Derivative of the model entry with respect to `U_n[p, i_n]`, i.e. the
/// coefficient of that unknown in the entry `i`.
fn factor_coefficient(core: &Tensor4, f: &FactorSet, n: usize, p: usize, i: [usize; 4]) -> f64 {
    let [p1, p2, p3, _] = core.dims();
    let mut acc = 0.0;
    for c in 0..p3 {
        for b in 0..p2 {
            for a in 0..p1 {
                let idx = [a, b, c];
                if idx[n] != p {
                    continue;
                }
                let mut term = core.get(a, b, c, i[3]);
                for k in 0..3 {
                    if k != n {
                        term *= f.u[k][(idx[k], i[k])];
                    }
                }
                acc += term;
            }
        }
    }
    acc
}

/// Column `col` of `U_n` minimizing the masked residual, other blocks fixed.
pub fn oracle_factor_column(x: &MaskedTensor4, core: &CoreTensor, f: &FactorSet, n: usize, col: usize) -> Option<DVector<f64>> {
    let d = x.dims();
    let pn = f.u[n].nrows();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for m in 0..d[3] {
        for i3 in 0..d[2] {
            for i2 in 0..d[1] {
                for i1 in 0..d[0] {
                    let i = [i1, i2, i3, m];
                    if i[n] != col || !x.is_observed(i1, i2, i3, m) {
                        continue;
                    }
                    rows.push((0..pn).map(|p| factor_coefficient(core.tensor(), f, n, p, i)).collect());
                    rhs.push(x.values().get(i1, i2, i3, m));
                }
            }
        }
    }
    if rows.is_empty() {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), pn, |r, c| rows[r][c]);
    Some(lstsq(&a, &DVector::from_vec(rhs)))
}

pub fn oracle_factor(x: &MaskedTensor4, core: &CoreTensor, f: &FactorSet, n: usize) -> DenseMatrix {
    let mut u = f.u[n].clone();
    for col in 0..u.ncols() {
        if let Some(v) = oracle_factor_column(x, core, f, n, col) {
            u.set_column(col, &v);
        }
    }
    u
}

/// Row `m` of `S(4)` minimizing `α·masked residual + (1−α)(y_m − β0 − sᵀβ1)²`.
pub fn oracle_core_row(
    x: &MaskedTensor4,
    y: &[f64],
    f: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
    m: usize,
) -> DVector<f64> {
    let d = x.dims();
    let [p1, p2, p3] = [f.u[0].nrows(), f.u[1].nrows(), f.u[2].nrows()];
    let p = p1 * p2 * p3;
    let wa = alpha.sqrt();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for i3 in 0..d[2] {
        for i2 in 0..d[1] {
            for i1 in 0..d[0] {
                if !x.is_observed(i1, i2, i3, m) {
                    continue;
                }
                let mut row = vec![0.0; p];
                for c in 0..p3 {
                    for b in 0..p2 {
                        for a in 0..p1 {
                            row[a + p1 * (b + p2 * c)] = wa * f.u[0][(a, i1)] * f.u[1][(b, i2)] * f.u[2][(c, i3)];
                        }
                    }
                }
                rows.push(row);
                rhs.push(wa * x.values().get(i1, i2, i3, m));
            }
        }
    }
    let wr = (1.0 - alpha).sqrt();
    rows.push(reg.beta1.iter().map(|b| wr * b).collect());
    rhs.push(wr * (y[m] - reg.beta0));
    let a = DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]);
    lstsq(&a, &DVector::from_vec(rhs))
}

pub fn oracle_core(
    x: &MaskedTensor4,
    y: &[f64],
    f: &FactorSet,
    reg: &ReparamCoefficients,
    alpha: f64,
) -> DenseMatrix {
    let m = x.dims()[3];
    let p = f.subspace().product();
    let mut s = DenseMatrix::zeros(m, p);
    for k in 0..m {
        s.set_row(k, &oracle_core_row(x, y, f, reg, alpha, k).transpose());
    }
    s
}

pub fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
