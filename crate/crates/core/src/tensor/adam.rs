use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{dim_err, ParamStore, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Moment buffers are keyed by parameter name
/// and created lazily on the first step that sees a parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Self::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// First and second moment estimates for `name`, if it has been stepped.
    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.state.get(name).map(|s| (s.m.as_slice(), s.v.as_slice()))
    }

    /// Applies one update. Parameters without an entry in `grads` are left
    /// untouched and their moments are not advanced.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, g) in grads {
            match params.get(name) {
                Some(p) if p.shape() == g.shape() => {}
                Some(p) => {
                    return dim_err("adam_step", format!("{name}: param {:?} vs grad {:?}", p.shape(), g.shape()))
                }
                None => return dim_err("adam_step", format!("gradient for unknown parameter {name}")),
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; g.numel()],
                v: vec![0.0; g.numel()],
            });
            for (((w, &gi), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(&mut st.m).zip(&mut st.v) {
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(name: &str, data: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, Tensor::vector(data).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut params = store("x", vec![1.0, -2.0]);
        let mut adam = Adam::with_lr(0.1);
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Tensor::vector(vec![1.0, 1.0]).unwrap());
        adam.step(&mut params, &grads).unwrap();
        let before = params.clone();
        let m_before = adam.moments("x").unwrap().0.to_vec();
        grads.insert("x".to_string(), Tensor::zeros(&[2]).unwrap());
        adam.step(&mut params, &grads).unwrap();
        // The bias-corrected first moment is still nonzero, so params move,
        // but on a fresh optimizer a zero gradient must be a no-op.
        let (m_after, _) = adam.moments("x").unwrap();
        assert!(m_after.iter().zip(&m_before).all(|(a, b)| a.abs() < b.abs()));
        assert_ne!(params, before);

        let mut fresh_params = store("x", vec![1.0, -2.0]);
        let mut fresh = Adam::with_lr(0.1);
        fresh.step(&mut fresh_params, &grads).unwrap();
        assert_eq!(fresh_params.get("x").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn one_step_descends_square() {
        let mut params = store("x", vec![1.0]);
        let mut adam = Adam::with_lr(0.1);
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Tensor::scalar(2.0));
        adam.step(&mut params, &grads).unwrap();
        assert!(params.get("x").unwrap().data()[0] < 1.0);
    }

    #[test]
    fn converges_on_two_dim_quadratic() {
        // f(x, y) = (x - 1.5)^2 + 3 (y + 0.5)^2, minimizer (1.5, -0.5)
        let mut params = store("w", vec![-2.0, 2.0]);
        let mut adam = Adam::with_lr(0.05);
        for _ in 0..500 {
            let w = params.get("w").unwrap().data().to_vec();
            let g = vec![2.0 * (w[0] - 1.5), 6.0 * (w[1] + 0.5)];
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), Tensor::vector(g).unwrap());
            adam.step(&mut params, &grads).unwrap();
        }
        let w = params.get("w").unwrap().data();
        assert!((w[0] - 1.5).abs() < 1e-3, "{w:?}");
        assert!((w[1] + 0.5).abs() < 1e-3, "{w:?}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = store("x", vec![1.0]);
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Tensor::zeros(&[2]).unwrap());
        assert!(Adam::with_lr(0.1).step(&mut params, &grads).is_err());
    }
}
