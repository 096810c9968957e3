use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Apply one update. Gradients are checked for finiteness before any parameter moves.
    pub fn step(&mut self, params: Vec<(&mut Vec<f64>, &mut Vec<f64>)>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self
                .m
                .iter()
                .zip(&params)
                .any(|(m, (p, g))| m.len() != p.len() || g.len() != p.len())
        {
            return Err(Error::Usage(
                "optimizer state does not match the parameter shapes".into(),
            ));
        }
        for (i, (_, g)) in params.iter().enumerate() {
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {} in parameter tensor {i} element {j} at step {}",
                    g[j],
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x0: f64, lr: f64, steps: usize, grad: impl Fn(f64) -> f64) -> f64 {
        let mut opt = Adam::new(AdamConfig {
            lr,
            ..Default::default()
        });
        let mut p = vec![x0];
        for _ in 0..steps {
            let mut g = vec![grad(p[0])];
            opt.step(vec![(&mut p, &mut g)]).unwrap();
        }
        p[0]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        assert_eq!(run(1.5, 0.1, 10, |_| 0.0), 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [-3.0, 1e-3, 250.0] {
            let x = run(0.0, 0.01, 1, |_| g);
            assert!((x + 0.01 * f64::signum(g)).abs() < 1e-6, "{g}: {x}");
        }
    }

    #[test]
    fn quadratic_matches_reference_trajectory() {
        // plain scalar re-derivation of the update rule
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (x - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let got = run(0.0, 0.1, 100, |x| 2.0 * (x - 3.0));
        assert!((got - x).abs() < 1e-12);
        assert!((got - 3.0).abs() < 0.1, "{got}");
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = vec![1.0, 2.0];
        let mut g = vec![0.5, f64::NAN];
        let err = opt.step(vec![(&mut p, &mut g)]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(p, vec![1.0, 2.0]);
    }
}
