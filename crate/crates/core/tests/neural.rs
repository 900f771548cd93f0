mod common;

use buglocate::neural::{Activation, LossSpec, Network, TowerConfig};
use proptest::prelude::*;

#[test]
fn gradient_check_on_100_random_networks() {
    let worst = common::worst_gradient_error(100, 2024);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

fn grid() -> impl Iterator<Item = (f64, bool)> {
    (0..5000).flat_map(|i| {
        let p = (i as f64 + 0.5) / 5000.0;
        [(p, false), (p, true)]
    })
}

#[test]
fn focal_gamma_zero_is_half_bce_on_grid() {
    let focal = LossSpec::focal(0.5, 0.0);
    let bce = LossSpec::bce();
    let max = grid()
        .map(|(p, y)| (focal.loss(p, y) - 0.5 * bce.loss(p, y)).abs())
        .fold(0.0, f64::max);
    assert!(max < 1e-12, "{max}");
}

#[test]
fn unit_wbce_is_bce_on_grid() {
    let wbce = LossSpec::wbce(1.0, 1.0);
    let bce = LossSpec::bce();
    let max = grid()
        .map(|(p, y)| (wbce.loss(p, y) - bce.loss(p, y)).abs())
        .fold(0.0, f64::max);
    assert!(max < 1e-12, "{max}");
}

#[test]
fn bce_vanishes_as_prediction_approaches_label() {
    let bce = LossSpec::bce();
    let mut last = f64::INFINITY;
    for k in 1..8 {
        let gap = 10f64.powi(-k);
        let l = bce.loss(1.0 - gap, true);
        assert!(l < last);
        assert!((bce.loss(gap, false) - l).abs() < 1e-12);
        last = l;
    }
    assert!(last < 2e-7);
}

fn loss_spec() -> impl Strategy<Value = LossSpec> {
    prop_oneof![
        Just(LossSpec::bce()),
        (0.01f64..10.0, 0.01f64..10.0).prop_map(|(n, p)| LossSpec::wbce(n, p)),
        (0.01f64..0.99, 0.0f64..5.0).prop_map(|(a, g)| LossSpec::focal(a, g)),
    ]
}

proptest! {
    #[test]
    fn loss_is_nonnegative(spec in loss_spec(), p in 0.0f64..=1.0, y: bool) {
        let l = spec.loss(p, y);
        prop_assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn forward_is_strictly_inside_unit_interval(
        seed in 0u64..1000,
        r in prop::collection::vec(-50.0f64..50.0, 3),
        m in prop::collection::vec(-50.0f64..50.0, 4),
    ) {
        let net = Network::new(
            &TowerConfig::new(vec![3, 5, 2], Activation::Relu).unwrap(),
            &TowerConfig::new(vec![4, 3], Activation::Tanh).unwrap(),
            seed,
        ).unwrap();
        let p = net.forward(&r, &m).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert_eq!(p, net.predict_score(&r, &m).unwrap());
    }
}
