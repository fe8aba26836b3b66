use genexp::constraints::{
    bernoulli_kl, hard_size_select, sparsity_to_size, top_k_indices, variational_loss, variational_value, InfoConstraint,
};
use genexp::tensor::{Tape, Tensor};
use proptest::prelude::*;

/// Composite 5-point Gauss-Legendre rule on `[a, b]`.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * h;
            X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// `KL(p‖q)` as the integral of its derivative in `p` from `q`, where it
/// vanishes.
fn kl_by_quadrature(p: f64, q: f64) -> f64 {
    integrate(|x| logit(x) - logit(q), q, p, 400)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bernoulli_kl_matches_quadrature(p in 0.01f64..0.99, q in 0.01f64..0.99) {
        let closed = bernoulli_kl(p, q);
        let quad = kl_by_quadrature(p, q);
        prop_assert!((closed - quad).abs() <= 1e-9, "p={p} q={q}: {closed} vs {quad}");
        prop_assert!(closed >= 0.0);
    }

    #[test]
    fn kl_vanishes_at_the_prior(q in 0.001f64..0.999) {
        prop_assert_eq!(bernoulli_kl(q, q), 0.0);
    }

    #[test]
    fn tape_kl_matches_plain(probs in prop::collection::vec(0.01f64..0.99, 1..10), prior in 0.05f64..0.95, weight in 0.0f64..2.0) {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(probs.clone()).unwrap());
        let l = variational_loss(&mut tape, p, prior, weight).unwrap();
        let got = tape.value(l).item().unwrap();
        prop_assert!((got - variational_value(&probs, prior, weight)).abs() < 1e-12);
        // gradient is weight · (logit p − logit prior)
        let g = tape.backward(l).unwrap().wrt(p);
        for (gi, &pi) in g.data().iter().zip(&probs) {
            prop_assert!((gi - weight * (logit(pi) - logit(prior))).abs() < 1e-9);
        }
    }

    #[test]
    fn hard_selection_keeps_the_largest(w in prop::collection::vec(0.0f64..1.0, 0..30), k in 0usize..40) {
        let mask = hard_size_select(&w, k);
        let kept = mask.iter().filter(|&&b| b).count();
        prop_assert_eq!(kept, k.min(w.len()));
        let min_kept = w.iter().zip(&mask).filter(|(_, &b)| b).map(|(x, _)| *x).fold(f64::INFINITY, f64::min);
        let max_dropped = w.iter().zip(&mask).filter(|(_, &b)| !b).map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_kept >= max_dropped);
        prop_assert_eq!(top_k_indices(&w, k).len(), kept);
    }

    #[test]
    fn sparsity_budget_is_a_ceiling(edges in 1usize..200, ratio in 0.01f64..0.99) {
        let k = sparsity_to_size(edges, ratio);
        prop_assert!(k >= 1 && k <= edges);
        prop_assert!(k as f64 >= ratio * edges as f64 - 1e-9);
        prop_assert!(((k - 1) as f64) < ratio * edges as f64 || k == 1);
    }
}

#[test]
fn constraint_json_shape() {
    let c: InfoConstraint = serde_json::from_str(r#"{"constraint":"variational","prior":0.3,"weight":0.4}"#).unwrap();
    assert_eq!(c, InfoConstraint::Variational { prior: 0.3, weight: 0.4 });
    let h: InfoConstraint = serde_json::from_str(r#"{"constraint":"hard_size","k":6}"#).unwrap();
    assert_eq!(h.budget(30, 1), 6);
    assert_eq!(InfoConstraint::Sparsity { ratio: 0.1 }.budget(30, 1), 3);
    assert!(InfoConstraint::Variational { prior: 1.0, weight: 1.0 }.validate().is_err());
    assert!(InfoConstraint::HardSize { k: 0 }.validate().is_err());
}
