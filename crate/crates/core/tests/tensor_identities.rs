mod common;

use common::*;
use proptest::prelude::*;
use tdr_core::linalg::kronecker;
use tdr_core::{MaskedTensor4, Mode, Tensor4};

fn dims_strategy() -> impl Strategy<Value = [usize; 4]> {
    (1usize..5, 1usize..5, 1usize..4, 1usize..4).prop_map(|(a, b, c, d)| [a, b, c, d])
}

fn tensor_strategy() -> impl Strategy<Value = Tensor4> {
    dims_strategy().prop_flat_map(|d| {
        prop::collection::vec(-1e3f64..1e3, d.iter().product::<usize>()).prop_map(move |v| Tensor4::new(d, v).unwrap())
    })
}

fn masked_strategy() -> impl Strategy<Value = MaskedTensor4> {
    tensor_strategy().prop_flat_map(|t| {
        let n = t.len();
        prop::collection::vec(any::<bool>(), n).prop_map(move |m| MaskedTensor4::new(t.clone(), m).unwrap())
    })
}

fn modes() -> [Mode; 4] {
    [1, 2, 3, 4].map(|n| Mode::new(n).unwrap())
}

fn fro(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn matricize_round_trip_is_bit_exact(t in tensor_strategy()) {
        for mode in modes() {
            let back = Tensor4::dematricize(&t.matricize(mode), mode, t.dims()).unwrap();
            prop_assert_eq!(back.data(), t.data());
        }
    }

    #[test]
    fn masked_round_trip_keeps_mask(t in masked_strategy()) {
        for mode in modes() {
            let (v, m) = t.matricize(mode);
            let back = MaskedTensor4::dematricize(&v, &m, mode, t.dims()).unwrap();
            prop_assert_eq!(back.mask(), t.mask());
            prop_assert_eq!(back.values().data(), t.values().data());
        }
    }

    #[test]
    fn unfolding_preserves_frobenius_norm(t in tensor_strategy()) {
        let n = fro(t.data());
        for mode in modes() {
            let u = t.matricize(mode);
            prop_assert!((u.norm() - n).abs() <= 1e-12 * n.max(1.0));
        }
    }

    #[test]
    fn mode_products_on_distinct_modes_commute(t in tensor_strategy(), seed in 0u64..1000) {
        let mut r = rng(seed);
        let d = t.dims();
        let a = gauss(&mut r, 3, d[0]);
        let b = gauss(&mut r, 2, d[1]);
        let ab = t.mode_product(&a, Mode::ONE).unwrap().mode_product(&b, Mode::new(2).unwrap()).unwrap();
        let ba = t.mode_product(&b, Mode::new(2).unwrap()).unwrap().mode_product(&a, Mode::ONE).unwrap();
        let scale = fro(ab.data()).max(1.0);
        for (x, y) in ab.data().iter().zip(ba.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn identity_mode_product_is_identity(t in tensor_strategy()) {
        for n in 0..3 {
            let mode = Mode::new(n + 1).unwrap();
            let id = tdr_core::DenseMatrix::identity(t.dims()[n], t.dims()[n]);
            prop_assert_eq!(t.mode_product(&id, mode).unwrap(), t.clone());
        }
    }

    #[test]
    fn projection_zeroes_exactly_the_missing_set(t in masked_strategy()) {
        let p = t.project_omega();
        for (k, (&v, &obs)) in p.values().data().iter().zip(p.mask()).enumerate() {
            prop_assert_eq!(v, if obs { t.values().data()[k] } else { 0.0 });
        }
    }
}

#[test]
fn mode4_kronecker_reconstruction_identity() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let (p, i, m) = ([2, 3, 2], [4, 3, 5], 6);
        let f = random_factors(&mut r, p, i);
        let s = random_core(&mut r, p, m);
        let x = s.tensor().expand(f.refs()).unwrap();
        let k = kronecker(&kronecker(&f.u[2], &f.u[1]), &f.u[0]);
        let rhs = s.s4() * k;
        let lhs = x.matricize(Mode::new(4).unwrap());
        let diff = (lhs - &rhs).abs().max();
        assert!(diff <= 1e-12 * rhs.abs().max().max(1.0), "seed {seed}: {diff:e}");
    }
}

#[test]
fn expand_matches_scalar_model() {
    let mut r = rng(3);
    let f = random_factors(&mut r, [2, 2, 1], [4, 3, 2]);
    let s = random_core(&mut r, [2, 2, 1], 5);
    let fast = s.tensor().expand(f.refs()).unwrap();
    let slow = model_tensor(s.tensor(), &f);
    for (a, b) in fast.data().iter().zip(slow.data()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn mode1_unfolding_follows_index_formula() {
    // column index j = i2 + I2·(i3 + I3·m), zero based
    let t = Tensor4::from_fn([2, 3, 2, 2], |a, b, c, d| (a + 10 * b + 100 * c + 1000 * d) as f64).unwrap();
    let u = t.matricize(Mode::ONE);
    for (a, b, c, d) in all_indices() {
        assert_eq!(u[(a, b + 3 * (c + 2 * d))], t.get(a, b, c, d));
    }
}

fn all_indices() -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..2).flat_map(|a| (0..3).flat_map(move |b| (0..2).flat_map(move |c| (0..2).map(move |d| (a, b, c, d)))))
}
