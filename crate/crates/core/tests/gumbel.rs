mod common;

use common::rel_err;
use genexp::explainers::{gumbel_sample, gumbel_sample_rng, gumbel_sample_tape};
use genexp::tensor::{Tape, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sample_gradient_matches_finite_differences(p in 0.05f64..0.95, eps in 0.01f64..0.99, tau in 0.2f64..2.0) {
        let mut tape = Tape::new();
        let v = tape.param(Tensor::vector(vec![p]).unwrap());
        let m = gumbel_sample_tape(&mut tape, v, tau, &[eps]).unwrap();
        let s = tape.sum(m, None).unwrap();
        prop_assert!((tape.value(s).item().unwrap() - gumbel_sample(p, tau, eps)).abs() < 1e-12);
        let g = tape.backward(s).unwrap().wrt(v).data()[0];
        let h = 1e-6;
        let fd = (gumbel_sample(p + h, tau, eps) - gumbel_sample(p - h, tau, eps)) / (2.0 * h);
        prop_assert!(rel_err(g, fd) <= 1e-4, "{g} vs {fd}");
        prop_assert!(g > 0.0);
    }

    #[test]
    fn sample_is_monotone_in_noise(p in 0.05f64..0.95, a in 0.01f64..0.99, b in 0.01f64..0.99, tau in 0.1f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(gumbel_sample(p, tau, lo) <= gumbel_sample(p, tau, hi));
    }
}

#[test]
fn symmetric_point_is_one_half() {
    assert_eq!(gumbel_sample(0.5, 0.05, 0.5), 0.5);
    assert_eq!(gumbel_sample(0.5, 1.0, 0.5), 0.5);
}

#[test]
fn low_temperature_approaches_bernoulli() {
    let mut rng = genexp::rng_from_seed(17);
    for p in [0.2, 0.5, 0.8] {
        let n = 10_000;
        let above = (0..n).filter(|_| gumbel_sample_rng(p, 0.05, &mut rng) > 0.5).count();
        assert!((above as f64 / n as f64 - p).abs() <= 0.02, "p={p}: {above}");
    }
}
