use std::collections::BTreeMap;

use crate::nn::{Module, Tensor};

/// SGD with heavy-ball momentum and decoupled-from-loss L2 decay:
/// `v = mu v + (g + wd w)`, `w -= lr v`. Decay applies to weights only,
/// never to biases or normalisation parameters.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: BTreeMap<String, Vec<f32>>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32, weight_decay: f32) -> Self {
        Self { lr, momentum, weight_decay, velocity: BTreeMap::new() }
    }

    pub fn step(&mut self, model: &mut dyn Module) {
        let (lr, mu, wd) = (self.lr, self.momentum, self.weight_decay);
        let velocity = &mut self.velocity;
        model.visit("", &mut |name, p| {
            if !p.trainable() {
                return;
            }
            let decay = if p.decays() { wd } else { 0.0 };
            let v = velocity.entry(name.to_string()).or_insert_with(|| vec![0.0; p.value.len()]);
            let w = p.value.data_mut();
            for ((vi, wi), gi) in v.iter_mut().zip(w.iter_mut()).zip(&p.grad) {
                *vi = mu * *vi + gi + decay * *wi;
                *wi -= lr * *vi;
            }
        });
    }

    /// Momentum buffers by parameter name.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        self.velocity.iter().map(|(k, v)| (k.clone(), Tensor::from_vec(&[v.len()], v.clone()))).collect()
    }

    pub fn load_state(&mut self, state: Vec<(String, Tensor)>) {
        self.velocity = state.into_iter().map(|(k, t)| (k, t.into_vec())).collect();
    }
}
