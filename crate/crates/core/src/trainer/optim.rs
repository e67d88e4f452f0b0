use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams, ParameterMask};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam without weight decay. Moment buffers exist only for trainable tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    step: u64,
    moments: Vec<Option<(Vec<f32>, Vec<f32>)>>,
}

impl Adam {
    pub fn new(params: &ModelParams, mask: &ParameterMask, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {learning_rate} must be positive")));
        }
        if mask.trainable.len() != params.tensors.len() {
            return Err(Error::config("mask does not match the parameter store"));
        }
        let moments = params
            .tensors
            .iter()
            .zip(&mask.trainable)
            .map(|(t, &on)| on.then(|| (vec![0.0; t.len()], vec![0.0; t.len()])))
            .collect();
        Ok(Adam {
            learning_rate,
            step: 0,
            moments,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Number of tensors that carry optimizer state.
    pub fn allocated_tensors(&self) -> usize {
        self.moments.iter().filter(|m| m.is_some()).count()
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.learning_rate * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t));
        let (b1, b2, lr_t, eps) = (BETA1 as f32, BETA2 as f32, lr_t as f32, EPSILON as f32);
        for ((tensor, g), state) in params.tensors.iter_mut().zip(&grads.grads).zip(&mut self.moments) {
            let Some((m, v)) = state else { continue };
            for (((w, &g), m), v) in tensor.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr_t * *m / (v.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParameterGroup};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = ModelConfig::desk(5, 4);
        let mut p = ModelParams::init(cfg, 0).unwrap();
        let before = p.clone();
        let mask = ParameterGroup::E.mask(&cfg);
        let mut opt = Adam::new(&p, &mask, 0.01).unwrap();
        assert_eq!(opt.allocated_tensors(), 3);
        let grads = Gradients {
            grads: p.tensors.iter().map(|t| vec![1.0; t.len()]).collect(),
        };
        opt.step(&mut p, &grads);
        for (i, (a, b)) in p.tensors.iter().zip(&before.tensors).enumerate() {
            for (x, y) in a.data.iter().zip(&b.data) {
                if mask.is_trainable(i) {
                    assert!((y - x - 0.01).abs() < 1e-6);
                } else {
                    assert_eq!(x, y);
                }
            }
        }
    }
}
