use ccnn_core::ccnn::{CcnnConfig, CcnnModel, WeightMode};
use ccnn_core::d4::{symmetrize, D4};
use ccnn_core::data::{Lattice, ParameterPoint, Snapshot, SnapshotSet};
use ccnn_core::interpret::{
    bulk_mask, connected_two_point, fourier_order_parameter, order_parameter_value, sign_decomposition,
    three_point_correlator,
};
use ccnn_core::io::{format_snapshots, parse_snapshots};
use ccnn_core::RealMap;
use proptest::prelude::*;

fn map_strategy(l: usize) -> impl Strategy<Value = RealMap> {
    prop::collection::vec(-1.0f64..1.0, l * l).prop_map(move |v| RealMap::from_vec(l, l, v).unwrap())
}

fn bits_strategy(h: usize, w: usize, n: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..2, h * w), n)
}

fn set_from(l: Lattice, bits: Vec<Vec<u8>>) -> SnapshotSet {
    let snaps = bits.into_iter().map(|b| Snapshot::new(l, b).unwrap()).collect();
    SnapshotSet::new(ParameterPoint::new(0.0, 1.0).unwrap(), snaps).unwrap()
}

fn model(order: usize, mode: WeightMode, seed: u64) -> CcnnModel {
    let config = CcnnConfig {
        lattice: 6,
        order,
        n_filters: 2,
        filter_size: 3,
        weight_mode: mode,
        nonneg_beta: false,
    };
    let mut m = CcnnModel::init(config, seed).unwrap();
    // nontrivial head and running statistics
    for (j, b) in m.head.beta.iter_mut().enumerate() {
        *b = 0.7 - 0.4 * j as f64;
    }
    m.head.bias = 0.2;
    for j in 0..m.batchnorm.running_mean.len() {
        m.batchnorm.running_mean[j] = 0.05 * j as f64 - 0.1;
        m.batchnorm.running_var[j] = 0.5 + 0.3 * j as f64;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pooled_features_are_d4_invariant(x in map_strategy(6), seed in 0u64..1000, order in 2usize..=3, learned: bool) {
        let mode = if learned { WeightMode::Learned } else { WeightMode::Uniform };
        let m = model(order, mode, seed);
        let base = m.pooled_features(&x).unwrap();
        for g in D4::ALL {
            let other = m.pooled_features(&g.act(&x)).unwrap();
            for (a, b) in base.iter().zip(&other) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn fourier_map_reproduces_the_network(x in map_strategy(6), seed in 0u64..1000, extra in 0usize..3) {
        let m = model(2, WeightMode::Uniform, seed);
        let k = m.config().map_size() + extra;
        let op = fourier_order_parameter(&m, k).unwrap();
        let direct = m.predict(std::slice::from_ref(&x)).unwrap()[0];
        let via_k = order_parameter_value(&op, &x).unwrap();
        prop_assert!((direct - via_k).abs() < 1e-10, "{direct} vs {via_k}");
        let w = op.weights.to_map();
        for g in D4::ALL {
            let mut moved = RealMap::zeros(k, k);
            for a in 0..k {
                for b in 0..k {
                    moved[g.apply_k((a, b), k)] = w[(a, b)];
                }
            }
            prop_assert!(moved.max_abs_diff(&w) < 1e-12);
        }
    }

    #[test]
    fn symmetrize_is_a_projection(x in map_strategy(5)) {
        let once = symmetrize(&x);
        prop_assert!(symmetrize(&once).max_abs_diff(&once) < 1e-12);
        prop_assert!((once.sum() - x.sum()).abs() < 1e-12);
    }

    #[test]
    fn sign_classes_recombine(bits in bits_strategy(4, 5, 3), dx in -2i64..3, dy in 1i64..3) {
        let set = set_from(Lattice::new(4, 5).unwrap(), bits);
        let offsets = [(0, 0), (dx, dy), (dx + 1, 2 * dy)];
        let d = sign_decomposition(&set, offsets).unwrap();
        let c = three_point_correlator(&set, offsets).unwrap();
        prop_assert!((d.total - c).abs() < 1e-14);
        prop_assert!((d.recombined() - c).abs() < 1e-12);
        prop_assert!(d.signed[0] >= 0.0 && d.signed[2] >= 0.0);
        prop_assert!(d.signed[1] <= 0.0 && d.signed[3] <= 0.0);
    }

    #[test]
    fn two_point_is_symmetric_in_displacement(bits in bits_strategy(6, 6, 4), dr in -2i64..3, dc in -2i64..3) {
        prop_assume!((dr, dc) != (0, 0));
        let set = set_from(Lattice::square(6).unwrap(), bits);
        let mask = vec![true; 36];
        let a = connected_two_point(&set, (dr, dc), &mask).unwrap();
        let b = connected_two_point(&set, (-dc, dr), &mask).unwrap();
        prop_assert!((a - b).abs() < 1e-14);
        let bulk = bulk_mask(set.lattice());
        let inside = connected_two_point(&set, (dr, dc), &bulk);
        prop_assert_eq!(inside.is_ok(), dr.abs() <= 1 && dc.abs() <= 1);
    }

    #[test]
    fn fluctuations_have_zero_site_mean(bits in bits_strategy(3, 4, 5)) {
        let set = set_from(Lattice::new(3, 4).unwrap(), bits);
        let maps = set.fluctuation_maps();
        for i in 0..12 {
            let s: f64 = maps.iter().map(|m| m.as_slice()[i]).sum();
            prop_assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_text_round_trips(bits in bits_strategy(3, 7, 4)) {
        let l = Lattice::new(3, 7).unwrap();
        let snaps: Vec<Snapshot> = bits.into_iter().map(|b| Snapshot::new(l, b).unwrap()).collect();
        let text = format_snapshots(&snaps);
        let back = parse_snapshots(&text, l, snaps.len(), std::path::Path::new("p.txt")).unwrap();
        prop_assert_eq!(back, snaps);
    }
}

#[test]
fn fourier_map_rejects_unsupported_models() {
    let m = model(3, WeightMode::Uniform, 1);
    assert!(fourier_order_parameter(&m, 16).is_err());
    let m = model(2, WeightMode::Learned, 1);
    assert!(fourier_order_parameter(&m, 16).is_err());
    let m = model(2, WeightMode::Uniform, 1);
    assert!(fourier_order_parameter(&m, 7).is_err());
    assert!(fourier_order_parameter(&m, 8).is_ok());
}
