use ndarray::{Array1, Array2};

use super::mlp::{Dense, Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> AdamHyper {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step over flat slices. `t` is the step number
/// after incrementing (1 on the first call).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hp: &AdamHyper,
) {
    let bc1 = 1.0 - hp.beta1.powf(t as f64);
    let bc2 = 1.0 - hp.beta2.powf(t as f64);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    hyper: AdamHyper,
    t: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Adam {
        Adam::with_hyper(net, AdamHyper::with_lr(lr))
    }

    pub fn with_hyper(net: &Mlp, hyper: AdamHyper) -> Adam {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Adam {
            hyper,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn hyper(&self) -> &AdamHyper {
        &self.hyper
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.hyper.lr = lr;
    }

    /// Zero both moment estimates and the step counter.
    pub fn reset(&mut self) {
        for d in self.m.iter_mut().chain(self.v.iter_mut()) {
            d.weights.fill(0.0);
            d.bias.fill(0.0);
        }
        self.t = 0;
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::Shape {
                expected: net.layers().len(),
                actual: grads.layers.len(),
            });
        }
        self.t += 1;
        let t = self.t;
        let hp = self.hyper;
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if g.weights.dim() != layer.weights.dim() || g.bias.len() != layer.bias.len() {
                return Err(Error::Shape {
                    expected: layer.weights.len(),
                    actual: g.weights.len(),
                });
            }
            adam_update(
                layer.weights.as_slice_mut().expect("standard layout"),
                g.weights.as_slice().expect("standard layout"),
                m.weights.as_slice_mut().expect("standard layout"),
                v.weights.as_slice_mut().expect("standard layout"),
                t,
                &hp,
            );
            adam_update(
                layer.bias.as_slice_mut().expect("standard layout"),
                g.bias.as_slice().expect("standard layout"),
                m.bias.as_slice_mut().expect("standard layout"),
                v.bias.as_slice_mut().expect("standard layout"),
                t,
                &hp,
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_closed_form() {
        let hp = AdamHyper::with_lr(1e-3);
        let (mut p, mut m, mut v) = ([0.0], [0.0], [0.0]);
        adam_update(&mut p, &[0.5], &mut m, &mut v, 1, &hp);
        let expected = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 9.999_999_80e-4).abs() < 1e-12);
    }

    #[test]
    fn second_identical_step_matches_first() {
        let hp = AdamHyper::with_lr(1e-3);
        let (mut p, mut m, mut v) = ([0.0], [0.0], [0.0]);
        adam_update(&mut p, &[0.5], &mut m, &mut v, 1, &hp);
        let first = p[0];
        adam_update(&mut p, &[0.5], &mut m, &mut v, 2, &hp);
        let second = p[0] - first;
        // m_hat = g and v_hat = g^2 exactly after bias correction.
        assert!((second - first).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut net = Mlp::new(&[4, 3, 2], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let before = net.clone();
        let mut adam = Adam::new(&net, 1e-3);
        let zero = Gradients::zeros_like(&net);
        for _ in 0..25 {
            adam.step(&mut net, &zero).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(adam.step_count(), 25);
    }

    #[test]
    fn reset_clears_state() {
        let mut net = Mlp::new(&[2, 2], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut adam = Adam::new(&net, 1e-2);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].bias.fill(1.0);
        adam.step(&mut net, &g).unwrap();
        adam.reset();
        assert_eq!(adam.step_count(), 0);
        assert!(adam.m.iter().all(|d| d.bias.iter().all(|v| *v == 0.0)));
    }
}
