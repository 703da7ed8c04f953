use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are laid out to match the
/// parameter slices passed to [`Adam::step`], in the same order every call.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<'p, 'g>(
        &mut self,
        params: impl IntoIterator<Item = &'p mut [f64]>,
        grads: impl IntoIterator<Item = &'g [f64]>,
    ) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (slot, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "parameter/gradient shape mismatch");
            if slot == self.first.len() {
                self.first.push(vec![0.0; p.len()]);
                self.second.push(vec![0.0; p.len()]);
            }
            let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
            assert_eq!(m.len(), p.len(), "parameter layout changed between steps");
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step([p.as_mut_slice()], [[0.0; 3].as_slice()]);
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_closed_form() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        let g = [0.3, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        Adam::new(cfg).step([p.as_mut_slice()], [g.as_slice()]);
        for (pi, gi) in p.iter().zip(g) {
            let want = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((pi - want).abs() < 1e-18, "{pi} vs {want}");
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![3.0];
        let mut adam = Adam::new(AdamConfig {
            lr: 0.05,
            ..Default::default()
        });
        for _ in 0..2000 {
            let g = [2.0 * p[0]];
            adam.step([p.as_mut_slice()], [g.as_slice()]);
        }
        assert!(p[0].abs() < 1e-2, "{}", p[0]);
    }
}
