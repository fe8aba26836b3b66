#![allow(dead_code)]

use genexp::tensor::{Tape, Tensor, Var};

/// Relative gradient error tolerated against central differences.
pub const GRAD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Worst relative error between reverse-mode gradients of `f` and central
/// differences, over every entry of every input.
///
/// `f` builds any output from the bound inputs; it is reduced to a scalar
/// through a fixed random projection so every output entry matters.
pub fn max_grad_error(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    grad_error(inputs, f, false)
}

/// [`max_grad_error`] for piecewise-smooth functions (relu, max). When a kink
/// falls inside the step, the central difference averages two slopes while
/// the reverse-mode gradient is one of them, so each entry may match either
/// one-sided difference instead.
pub fn max_grad_error_piecewise(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    grad_error(inputs, f, true)
}

fn grad_error(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var, one_sided: bool) -> f64 {
    let eval = |xs: &[Tensor]| -> (f64, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&mut tape, &vars);
        let shape = tape.value(out).shape().to_vec();
        let n = tape.value(out).numel();
        let proj: Vec<f64> = (0..n).map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let w = tape.constant(Tensor::new(shape, proj).unwrap());
        let y = tape.mul(out, w).unwrap();
        let loss = tape.sum(y, None).unwrap();
        let value = tape.value(loss).item().unwrap();
        let g = tape.backward(loss).unwrap();
        (value, vars.iter().map(|&v| g.wrt(v)).collect())
    };
    let (f0, grads) = eval(inputs);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        for j in 0..x.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let (fp, fm) = (eval(&plus).0, eval(&minus).0);
            let g = grads[i].data()[j];
            let mut e = rel_err(g, (fp - fm) / (2.0 * h));
            if one_sided {
                e = e.min(rel_err(g, (fp - f0) / h)).min(rel_err(g, (f0 - fm) / h));
            }
            worst = worst.max(e);
        }
    }
    worst
}

/// Deterministic pseudo-random tensor from `seed`, entries in `[lo, hi)`.
pub fn tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    use rand::Rng;
    let mut rng = genexp::rng_from_seed(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Like [`tensor`] but every entry has magnitude at least `gap`.
pub fn tensor_away_from_zero(shape: &[usize], seed: u64, gap: f64, hi: f64) -> Tensor {
    tensor(shape, seed, -hi, hi).map(|x| if x.abs() < gap { x.signum() * gap + x } else { x })
}

/// Small BA-2Motifs dataset with a briefly trained classifier, for tests
/// that need a non-trivial frozen model.
pub fn small_trained() -> &'static (genexp::Dataset, genexp::GnnModel) {
    use genexp::graphdata::{gen_ba2motifs, split, SplitPlan};
    static CELL: std::sync::OnceLock<(genexp::Dataset, genexp::GnnModel)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let ds = split(&gen_ba2motifs(80, 1).unwrap(), SplitPlan::STANDARD, 1).unwrap();
        let config = genexp::GnnConfig {
            hidden_dim: 16,
            max_epochs: 40,
            batch_size: 16,
            ..genexp::GnnConfig::default()
        };
        let model = genexp::gnn::train_base(&ds, &config, 1).unwrap().model;
        (ds, model)
    })
}
