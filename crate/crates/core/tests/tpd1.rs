use proptest::prelude::*;
use tdr_core::tensor::io::{read_file, read_tpd1, write_file, write_tpd1, RawTensor};
use tdr_core::{MaskedTensor4, Tensor4};

#[derive(Debug, Clone, Copy)]
enum Fill {
    Random,
    AllObserved,
    AllMissing,
}

fn masked(dims: [usize; 4], values: Vec<f64>, bits: Vec<bool>, fill: Fill) -> MaskedTensor4 {
    let mask = match fill {
        Fill::Random => bits,
        Fill::AllObserved => vec![true; values.len()],
        Fill::AllMissing => vec![false; values.len()],
    };
    MaskedTensor4::new(Tensor4::new(dims, values).unwrap(), mask).unwrap()
}

fn case() -> impl Strategy<Value = MaskedTensor4> {
    (1usize..6, 1usize..6, 1usize..5, 1usize..4, prop_oneof![Just(Fill::Random), Just(Fill::AllObserved), Just(Fill::AllMissing)])
        .prop_flat_map(|(a, b, c, d, fill)| {
            let n = a * b * c * d;
            (
                prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, n),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(v, m)| masked([a, b, c, d], v, m, fill))
        })
}

fn round_trip(t: &MaskedTensor4, order3: bool) -> MaskedTensor4 {
    let mut buf = Vec::new();
    write_tpd1(&mut buf, &RawTensor::from_masked(t, order3).unwrap()).unwrap();
    read_tpd1(&mut buf.as_slice()).unwrap().into_masked().unwrap()
}

fn assert_bit_exact(a: &MaskedTensor4, b: &MaskedTensor4) {
    assert_eq!(a.dims(), b.dims());
    assert_eq!(a.mask(), b.mask());
    let bits = |t: &MaskedTensor4| t.values().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a), bits(b));
}

proptest! {
    #[test]
    fn write_read_is_bit_exact(t in case()) {
        assert_bit_exact(&round_trip(&t, false), &t);
    }
}

#[test]
fn order3_files_read_back_as_single_asset() {
    let t = masked([3, 2, 4, 1], (0..24).map(|k| k as f64 * 0.1).collect(), (0..24).map(|k| k % 3 != 0).collect(), Fill::Random);
    assert_bit_exact(&round_trip(&t, true), &t);
}

#[test]
fn file_round_trip_with_edge_masks() {
    let dir = tempfile::tempdir().unwrap();
    for (k, fill) in [Fill::AllObserved, Fill::AllMissing, Fill::Random].into_iter().enumerate() {
        let n = 2 * 3 * 2 * 2;
        let t = masked([2, 3, 2, 2], (0..n).map(|v| (v as f64).sin()).collect(), (0..n).map(|v| v % 2 == 0).collect(), fill);
        let path = dir.path().join(format!("t{k}.tpd1"));
        write_file(&path, &RawTensor::from_masked(&t, false).unwrap()).unwrap();
        assert_bit_exact(&read_file(&path).unwrap().into_masked().unwrap(), &t);
    }
}
