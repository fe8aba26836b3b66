mod common;

use common::{max_grad_error, max_grad_error_piecewise, tensor, tensor_away_from_zero, GRAD_TOL};
use genexp::gnn::GraphBatch;
use genexp::graphdata::gen_ba2motifs;
use genexp::tensor::{Tape, Tensor, Var};
use genexp::{GnnConfig, GnnModel, LayerKind};
use proptest::prelude::*;

fn cfg() -> ProptestConfig {
    ProptestConfig::with_cases(100)
}

fn check(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> Result<(), TestCaseError> {
    let e = max_grad_error(inputs, f);
    prop_assert!(e <= GRAD_TOL, "relative gradient error {e}");
    Ok(())
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn matmul(seed in any::<u64>(), m in 1usize..5, k in 1usize..5, n in 1usize..5) {
        let a = tensor(&[m, k], seed, -2.0, 2.0);
        let b = tensor(&[k, n], seed ^ 1, -2.0, 2.0);
        check(&[a, b], &|t, v| t.matmul(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn elementwise_binary(seed in any::<u64>(), r in 1usize..4, c in 1usize..4) {
        let a = tensor(&[r, c], seed, -2.0, 2.0);
        let b = tensor(&[r, c], seed ^ 1, -2.0, 2.0);
        let d = tensor_away_from_zero(&[r, c], seed ^ 2, 0.5, 2.0);
        check(&[a.clone(), b.clone()], &|t, v| t.add(v[0], v[1]).unwrap())?;
        check(&[a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1]).unwrap())?;
        check(&[a.clone(), b], &|t, v| t.mul(v[0], v[1]).unwrap())?;
        check(&[a, d], &|t, v| t.div(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn row_broadcasts(seed in any::<u64>(), r in 1usize..5, c in 1usize..5) {
        let a = tensor(&[r, c], seed, -2.0, 2.0);
        let row = tensor(&[c], seed ^ 1, -2.0, 2.0);
        let w = tensor(&[r], seed ^ 2, -2.0, 2.0);
        check(&[a.clone(), row.clone()], &|t, v| t.add_row(v[0], v[1]).unwrap())?;
        check(&[a.clone(), row], &|t, v| t.mul_row(v[0], v[1]).unwrap())?;
        check(&[a, w], &|t, v| t.scale_rows(v[0], v[1]).unwrap())?;
    }

    #[test]
    fn scalar_ops(seed in any::<u64>(), n in 1usize..8, c in -3.0f64..3.0) {
        let a = tensor(&[n], seed, -2.0, 2.0);
        check(std::slice::from_ref(&a), &|t, v| t.add_scalar(v[0], c).unwrap())?;
        check(std::slice::from_ref(&a), &|t, v| t.mul_scalar(v[0], c).unwrap())?;
        check(&[a], &|t, v| t.neg(v[0]).unwrap())?;
    }

    #[test]
    fn smooth_unary(seed in any::<u64>(), n in 1usize..8) {
        let a = tensor(&[n], seed, -3.0, 3.0);
        let pos = tensor(&[n], seed ^ 1, 0.1, 3.0);
        check(std::slice::from_ref(&a), &|t, v| t.sigmoid(v[0]).unwrap())?;
        check(std::slice::from_ref(&a), &|t, v| t.tanh(v[0]).unwrap())?;
        check(&[a], &|t, v| t.exp(v[0]).unwrap())?;
        check(std::slice::from_ref(&pos), &|t, v| t.log(v[0]).unwrap())?;
        check(&[pos], &|t, v| t.sqrt(v[0]).unwrap())?;
    }

    #[test]
    fn powf(seed in any::<u64>(), n in 1usize..8, c in -2.0f64..3.0) {
        let pos = tensor(&[n], seed, 0.2, 3.0);
        check(&[pos], &|t, v| t.powf(v[0], c).unwrap())?;
    }

    #[test]
    fn kinked_unary(seed in any::<u64>(), n in 1usize..8) {
        let a = tensor_away_from_zero(&[n], seed, 1e-3, 2.0);
        check(std::slice::from_ref(&a), &|t, v| t.relu(v[0]).unwrap())?;
        // shift so no entry sits within 1e-3 of either bound
        let b = a.map(|x| if (x - 0.5).abs() < 1e-3 { x + 2e-3 } else { x });
        check(&[b], &|t, v| t.clamp(v[0], -0.5, 0.5).unwrap())?;
    }

    #[test]
    fn reductions(seed in any::<u64>(), r in 1usize..5, c in 1usize..5) {
        let a = tensor(&[r, c], seed, -2.0, 2.0);
        for axis in [None, Some(0), Some(1)] {
            check(std::slice::from_ref(&a), &|t, v| t.sum(v[0], axis).unwrap())?;
            check(std::slice::from_ref(&a), &|t, v| t.mean(v[0], axis).unwrap())?;
            check(std::slice::from_ref(&a), &|t, v| t.max(v[0], axis).unwrap())?;
        }
    }

    #[test]
    fn softmax_family(seed in any::<u64>(), r in 1usize..5, c in 2usize..5) {
        let a = tensor(&[r, c], seed, -3.0, 3.0);
        let targets: Vec<usize> = (0..r).map(|i| (seed as usize).wrapping_add(i) % c).collect();
        check(std::slice::from_ref(&a), &|t, v| t.log_softmax(v[0]).unwrap())?;
        check(&[a], &|t, v| t.cross_entropy(v[0], &targets).unwrap())?;
    }

    #[test]
    fn indexing(seed in any::<u64>(), r in 1usize..6, c in 1usize..4, picks in prop::collection::vec(0usize..100, 1..8)) {
        let a = tensor(&[r, c], seed, -2.0, 2.0);
        let idx: Vec<usize> = picks.iter().map(|p| p % r).collect();
        let out_rows = r.max(2);
        let targets: Vec<usize> = (0..r).map(|i| (i * 3 + seed as usize) % out_rows).collect();
        check(std::slice::from_ref(&a), &|t, v| t.gather(v[0], &idx).unwrap())?;
        check(std::slice::from_ref(&a), &|t, v| t.scatter_add(v[0], &targets, out_rows).unwrap())?;
        // every segment owns at least its first row
        let segs = r.div_ceil(2);
        let seg: Vec<usize> = (0..r).map(|i| i / 2).collect();
        check(std::slice::from_ref(&a), &|t, v| t.segment_max(v[0], &seg, segs).unwrap())?;
        let b = tensor(&[r, 2], seed ^ 1, -2.0, 2.0);
        check(&[a.clone(), b], &|t, v| t.concat_cols(v[0], v[1]).unwrap())?;
        check(&[a], &|t, v| t.reshape(v[0], vec![r * c]).unwrap())?;
    }

    #[test]
    fn composed_gnn_forward(seed in any::<u64>(), layer in prop::sample::select(vec![LayerKind::Gin, LayerKind::Gcn])) {
        let ds = gen_ba2motifs(2, seed).unwrap();
        let graphs: Vec<_> = ds.graphs.iter().collect();
        let batch = GraphBatch::new(&graphs).unwrap();
        let config = GnnConfig { layer_kind: layer, hidden_dim: 4, ..GnnConfig::default() };
        let model = GnnModel::init(config, seed).unwrap();
        let w = tensor(&[batch.num_edges], seed ^ 3, 0.05, 0.95);
        // gradient with respect to the soft edge weights through the frozen
        // network, the path every mask explainer relies on
        let e = max_grad_error_piecewise(&[w], &|t, v| {
            let p = model.bind(t, false);
            model.forward(t, &p, &batch, Some(v[0])).unwrap().logits
        });
        prop_assert!(e <= GRAD_TOL, "relative gradient error {e}");
    }
}
