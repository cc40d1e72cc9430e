use super::{Gradients, Mlp};
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Gradients,
    pub second: Gradients,
}

impl Adam {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
        }
    }

    /// Whether the moment buffers mirror `params`.
    pub fn matches(&self, params: &Mlp) -> bool {
        shaped_like(&self.first, params) && shaped_like(&self.second, params)
    }

    /// Applies one update. Nothing changes if any gradient entry is
    /// non-finite; frozen layers are left untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if !self.matches(params) || !shaped_like(grads, params) {
            return Err(Error::Incompatible(
                "optimizer state, gradients and parameters differ in shape".into(),
            ));
        }
        if let Some(layer) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { layer });
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(t));
        for (i, layer) in params.layers_mut().iter_mut().enumerate() {
            if layer.frozen {
                continue;
            }
            let (gw, gb) = &grads.layers[i];
            let (mw, mb) = &mut self.first.layers[i];
            let (vw, vb) = &mut self.second.layers[i];
            let groups = [(&mut layer.weights, gw, mw, vw), (&mut layer.bias, gb, mb, vb)];
            for (theta, g, m, v) in groups {
                for j in 0..theta.len() {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                    v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    theta[j] -= lr * m_hat / (math::sqrt(v_hat) + eps);
                }
            }
        }
        Ok(())
    }

    /// Zeroes moments and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        for g in [&mut self.first, &mut self.second] {
            g.scale(0.0);
        }
    }
}

fn shaped_like(g: &Gradients, params: &Mlp) -> bool {
    g.layers.len() == params.depth()
        && g.layers
            .iter()
            .zip(params.layers())
            .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.bias.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use alloc::vec;

    fn scalar(theta: f64) -> Mlp {
        Mlp::from_layers(vec![Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![theta],
            bias: vec![0.0],
            activation: Activation::Identity,
            frozen: false,
        }])
        .unwrap()
    }

    fn grad(w: f64, b: f64) -> Gradients {
        Gradients {
            layers: vec![(vec![w], vec![b])],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let mut adam = Adam::new(&p, AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut p, &grad(0.0, 0.0), 1e-3).unwrap();
        }
        assert_eq!(p.layers()[0].weights, vec![0.7]);
        assert_eq!(adam.step, 10);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
        let mut p = scalar(0.0);
        let mut adam = Adam::new(&p, AdamConfig::default());
        adam.step(&mut p, &grad(1.0, 0.0), 1e-3).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.layers()[0].weights[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(&p, AdamConfig::default());
        for _ in 0..100 {
            adam.step(&mut p, &grad(-2.5, 0.0), 1e-2).unwrap();
        }
        assert!(p.layers()[0].weights[0] > 0.5);
    }

    #[test]
    fn non_finite_gradient_reports_layer_and_keeps_params() {
        let mut p = Mlp::from_layers(vec![
            Dense {
                inputs: 1,
                outputs: 1,
                weights: vec![1.0],
                bias: vec![0.0],
                activation: Activation::Relu,
                frozen: false,
            },
            Dense {
                inputs: 1,
                outputs: 1,
                weights: vec![1.0],
                bias: vec![0.0],
                activation: Activation::Identity,
                frozen: false,
            },
        ])
        .unwrap();
        let before = p.clone();
        let mut adam = Adam::new(&p, AdamConfig::default());
        let g = Gradients {
            layers: vec![(vec![1.0], vec![0.0]), (vec![f64::NAN], vec![0.0])],
        };
        assert_eq!(
            adam.step(&mut p, &g, 1e-3),
            Err(Error::NonFiniteGradient { layer: 1 })
        );
        assert_eq!(p, before);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn frozen_layer_untouched() {
        let mut p = scalar(0.3);
        p.layers_mut()[0].frozen = true;
        let mut adam = Adam::new(&p, AdamConfig::default());
        adam.step(&mut p, &grad(1.0, 1.0), 1e-1).unwrap();
        assert_eq!(p.layers()[0].weights, vec![0.3]);
        assert_eq!(p.layers()[0].bias, vec![0.0]);
    }
}
