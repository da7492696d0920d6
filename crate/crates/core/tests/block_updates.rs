mod common;

use common::*;
use nalgebra::DVector;
use tdr_core::supervised::{
    update_core_complete, update_core_row_entrywise, update_factor_column_entrywise, update_factor_complete,
    update_factor_entrywise, update_factor_imagewise, update_regression_block, CoreTensor, FactorSet, ScaleUpdate,
    VectorUpdate,
};
use tdr_core::lls::{Distribution, ReparamCoefficients};
use tdr_core::{DenseMatrix, Error, MaskedTensor4, Mode, Tensor4};

const DIMS: [usize; 4] = [4, 3, 2, 5];
const P: [usize; 3] = [2, 2, 1];

struct Instance {
    x: MaskedTensor4,
    y: Vec<f64>,
    factors: FactorSet,
    core: CoreTensor,
    reg: ReparamCoefficients,
}

fn instance(seed: u64, kind: MaskKind) -> Instance {
    let mut r = rng(seed);
    let values = random_tensor(&mut r, DIMS);
    let mask = random_mask(&mut r, DIMS, kind);
    let factors = random_factors(&mut r, P, [DIMS[0], DIMS[1], DIMS[2]]);
    let core = random_core(&mut r, P, DIMS[3]);
    let reg = random_reg(&mut r, P.iter().product());
    let y = (0..DIMS[3]).map(|k| k as f64 * 0.3 - 0.5).collect();
    Instance {
        x: masked(values, mask),
        y,
        factors,
        core,
        reg,
    }
}

fn mode(n: usize) -> Mode {
    Mode::new(n + 1).unwrap()
}

#[test]
fn complete_factor_updates_match_dense_oracle() {
    for seed in 0..20 {
        let t = instance(seed, MaskKind::Complete);
        for n in 0..3 {
            let got = update_factor_complete(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
            let want = oracle_factor(&t.x, &t.core, &t.factors, n);
            assert!(rel_err(&got, &want) <= 1e-8, "seed {seed} mode {n}: {}", rel_err(&got, &want));
        }
    }
}

#[test]
fn entrywise_factor_updates_match_dense_oracle() {
    for seed in 0..20 {
        let t = instance(100 + seed, MaskKind::Entry(0.3));
        for n in 0..3 {
            let got = update_factor_entrywise(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
            let want = oracle_factor(&t.x, &t.core, &t.factors, n);
            assert!(rel_err(&got, &want) <= 1e-8, "seed {seed} mode {n}");
            for col in 0..DIMS[n] {
                match update_factor_column_entrywise(&t.x, &t.core, &t.factors, mode(n), col).unwrap() {
                    VectorUpdate::Updated { value, .. } => {
                        let w = oracle_factor_column(&t.x, &t.core, &t.factors, n, col).unwrap();
                        assert!(rel_err_vec(&value, &w) <= 1e-8);
                    }
                    VectorUpdate::Unchanged => {
                        assert!(oracle_factor_column(&t.x, &t.core, &t.factors, n, col).is_none())
                    }
                }
            }
        }
    }
}

#[test]
fn imagewise_factor_updates_match_dense_oracle_and_entrywise_path() {
    let mut checked = 0;
    for seed in 0..40 {
        let t = instance(200 + seed, MaskKind::Image(0.3));
        if t.x.observed_count() == 0 {
            continue;
        }
        for n in 0..2 {
            let got = update_factor_imagewise(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
            let want = oracle_factor(&t.x, &t.core, &t.factors, n);
            assert!(rel_err(&got, &want) <= 1e-8, "seed {seed} mode {n}");
            let entry = update_factor_entrywise(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
            assert!(rel_err(&got, &entry) <= 1e-10);
        }
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn imagewise_update_rejects_entrywise_mask() {
    let t = instance(7, MaskKind::Entry(0.3));
    let err = update_factor_imagewise(&t.x, &t.core, &t.factors, Mode::ONE).unwrap_err();
    assert!(matches!(err, Error::NotImageWise));
}

#[test]
fn complete_core_update_matches_joint_least_squares() {
    for seed in 0..20 {
        let t = instance(300 + seed, MaskKind::Complete);
        for alpha in [0.0, 0.3, 1.0] {
            let got = update_core_complete(&t.x, &t.y, &t.factors, &t.reg, alpha).unwrap().core.s4();
            let want = oracle_core(&t.x, &t.y, &t.factors, &t.reg, alpha);
            if alpha == 0.0 {
                // Under-determined: only the regression residual is pinned.
                for m in 0..DIMS[3] {
                    let fit = t.reg.beta0 + got.row(m).dot(&t.reg.beta1.transpose());
                    assert!((fit - t.y[m]).abs() <= 1e-6);
                }
                continue;
            }
            assert!(rel_err(&got, &want) <= 1e-8, "seed {seed} alpha {alpha}");
        }
    }
}

#[test]
fn core_rows_match_masked_oracle() {
    for (k, kind) in [MaskKind::Entry(0.3), MaskKind::Image(0.3)].into_iter().enumerate() {
        for seed in 0..20 {
            let t = instance(400 + 50 * k as u64 + seed, kind);
            for m in 0..DIMS[3] {
                let want = oracle_core_row(&t.x, &t.y, &t.factors, &t.reg, 0.6, m);
                let empty = (0..DIMS[2]).all(|i3| !t.x.is_observed(0, 0, i3, m)) && kind != MaskKind::Entry(0.3);
                match update_core_row_entrywise(&t.x, &t.y, &t.factors, &t.reg, 0.6, m).unwrap() {
                    // Nothing observed: only the regression residual is pinned.
                    VectorUpdate::Updated { value, .. } if empty => {
                        let fit = t.reg.beta0 + value.dot(&t.reg.beta1);
                        assert!((fit - t.y[m]).abs() <= 1e-6);
                    }
                    VectorUpdate::Updated { value, .. } => {
                        assert!(rel_err_vec(&value, &want) <= 1e-8, "seed {seed} asset {m}")
                    }
                    VectorUpdate::Unchanged => panic!("alpha < 1 always updates"),
                }
            }
        }
    }
}

#[test]
fn empty_mask_paths_reproduce_complete_solutions() {
    for seed in 0..20 {
        let t = instance(500 + seed, MaskKind::Complete);
        for n in 0..3 {
            let full = update_factor_complete(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
            let entry = update_factor_entrywise(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
            assert!(rel_err(&entry, &full) <= 1e-12, "seed {seed} mode {n}");
            if n < 2 {
                let image = update_factor_imagewise(&t.x, &t.core, &t.factors, mode(n)).unwrap().u;
                assert!(rel_err(&image, &full) <= 1e-12);
            }
        }
        let full = update_core_complete(&t.x, &t.y, &t.factors, &t.reg, 0.4).unwrap().core.s4();
        for m in 0..DIMS[3] {
            let VectorUpdate::Updated { value, .. } =
                update_core_row_entrywise(&t.x, &t.y, &t.factors, &t.reg, 0.4, m).unwrap()
            else {
                panic!("row must update");
            };
            assert!(rel_err_vec(&value, &full.row(m).transpose()) <= 1e-12);
        }
    }
}

#[test]
fn planted_factor_is_recovered() {
    let mut r = rng(11);
    let dims = [5, 4, 3, 6];
    let f = random_factors(&mut r, P, [5, 4, 3]);
    let core = random_core(&mut r, P, dims[3]);
    let exact = model_tensor(core.tensor(), &f);
    let full = MaskedTensor4::fully_observed(exact.clone());
    let got = update_factor_complete(&full, &core, &f, Mode::ONE).unwrap().u;
    assert!(rel_err(&got, &f.u[0]) <= 1e-8);

    let mask = random_mask(&mut r, dims, MaskKind::Entry(0.2));
    let part = MaskedTensor4::new(exact.clone(), mask).unwrap();
    let got = update_factor_entrywise(&part, &core, &f, Mode::ONE).unwrap().u;
    assert!(rel_err(&got, &f.u[0]) <= 1e-6);

    let mask = random_mask(&mut r, dims, MaskKind::Image(0.3));
    let part = MaskedTensor4::new(exact, mask).unwrap();
    let got = update_factor_imagewise(&part, &core, &f, Mode::ONE).unwrap().u;
    assert!(rel_err(&got, &f.u[0]) <= 1e-6);
}

#[test]
fn square_invertible_projection_gives_identity_factor() {
    // P1 = I1 and X(1) equal to the projected core unfolding.
    let mut r = rng(3);
    let f = FactorSet::new(
        DenseMatrix::identity(3, 3),
        gauss(&mut r, 2, 2),
        gauss(&mut r, 2, 2),
    )
    .unwrap();
    let core = random_core(&mut r, [3, 2, 2], 2);
    let x = MaskedTensor4::fully_observed(model_tensor(core.tensor(), &f));
    let got = update_factor_complete(&x, &core, &f, Mode::ONE).unwrap().u;
    assert!((got - DenseMatrix::identity(3, 3)).amax() <= 1e-10);
}

#[test]
fn orthonormal_factors_make_core_a_projection() {
    let mut r = rng(5);
    let q = |r: &mut rand_chacha::ChaCha8Rng, p: usize, i: usize| {
        let g = gauss(r, i, p);
        g.qr().q().transpose()
    };
    let f = FactorSet::new(q(&mut r, 2, 4), q(&mut r, 2, 3), q(&mut r, 1, 2)).unwrap();
    let x = MaskedTensor4::fully_observed(random_tensor(&mut r, DIMS));
    let reg = random_reg(&mut r, 4);
    let y = vec![0.0; DIMS[3]];
    let got = update_core_complete(&x, &y, &f, &reg, 1.0).unwrap().core;
    let want = x.values().project(f.refs()).unwrap();
    for (a, b) in got.tensor().data().iter().zip(want.data()) {
        assert!((a - b).abs() <= 1e-10);
    }
    for m in 0..DIMS[3] {
        let VectorUpdate::Updated { value, .. } = update_core_row_entrywise(&x, &y, &f, &reg, 1.0, m).unwrap() else {
            panic!()
        };
        let w = DVector::from_column_slice(&want.data()[m * 4..(m + 1) * 4]);
        assert!(rel_err_vec(&value, &w) <= 1e-10);
    }
}

#[test]
fn fully_missing_row_keeps_previous_value() {
    let mut t = instance(9, MaskKind::Complete);
    // Remove every entry with i1 = 0.
    let positions: Vec<usize> = (0..t.x.values().len()).filter(|k| k % DIMS[0] == 0).collect();
    t.x.mask_out(positions);
    let out = update_factor_entrywise(&t.x, &t.core, &t.factors, Mode::ONE).unwrap();
    assert_eq!(out.skipped_columns, vec![0]);
    assert_eq!(out.u.column(0), t.factors.u[0].column(0));
    assert_eq!(
        update_factor_column_entrywise(&t.x, &t.core, &t.factors, Mode::ONE, 0).unwrap(),
        VectorUpdate::Unchanged
    );
}

#[test]
fn regression_block_examples() {
    let s = CoreTensor::from_s4(&DenseMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]), [1, 1, 1, 3]).unwrap();
    let start = ReparamCoefficients {
        beta0: 0.0,
        beta1: DVector::zeros(1),
        sigma_tilde: 1.0,
    };
    let (c, _) = update_regression_block(&[0.0, 1.0, 1.0], &s, Distribution::Normal, &start, ScaleUpdate::Fixed).unwrap();
    assert!((c.beta0 - 1.0 / 6.0).abs() < 1e-12);
    assert!((c.beta1[0] - 0.5).abs() < 1e-12);

    let zero = CoreTensor::new(Tensor4::zeros([1, 1, 1, 4]).unwrap()).unwrap();
    let (c, _) = update_regression_block(&[1.0, 2.0, 4.0, 5.0], &zero, Distribution::Normal, &start, ScaleUpdate::Fixed).unwrap();
    // zero design column takes the ridge path; bias is O(1e-10)
    assert!((c.beta0 - 3.0).abs() < 1e-8);

    let y = [0.1, 0.9, 1.3, 2.2, 2.9, 3.1];
    let s = CoreTensor::from_s4(
        &DenseMatrix::from_column_slice(6, 1, &[0.0, 1.0, 1.5, 2.0, 3.0, 3.5]),
        [1, 1, 1, 6],
    )
    .unwrap();
    let (c, _) = update_regression_block(&y, &s, Distribution::Sev, &start, ScaleUpdate::Joint).unwrap();
    let g = tdr_core::lls::nll_gradient(Distribution::Sev, &y, &s.s4(), &c).unwrap();
    assert!(g.norm() <= 1e-10);
}

