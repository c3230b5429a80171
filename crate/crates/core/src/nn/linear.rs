use rand::Rng;

use super::param::join;
use super::{gemm, Mode, Module, Param, ParamKind, Tensor};

/// Fully connected layer, `y = x W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Linear {
    /// Uniform `±1/sqrt(in)` initialisation for weight and bias.
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f32).sqrt();
        let w = (0..input * output).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = (0..output).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            weight: Param::new(Tensor::from_vec(&[input, output], w), ParamKind::Weight),
            bias: Param::new(Tensor::from_vec(&[output], b), ParamKind::Bias),
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let (input, output) = (self.input_dim(), self.output_dim());
        assert_eq!(x.channels(), input, "linear expects width {input}");
        let rows = x.len() / input;
        let mut out = Vec::with_capacity(rows * output);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(rows, input, output, x.data(), false, self.weight.value.data(), false, &mut out, 1.0);
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = output;
        Tensor::from_vec(&shape, out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache.take().expect("linear backward without train forward");
        let (input, output) = (self.input_dim(), self.output_dim());
        let rows = x.len() / input;
        gemm(input, rows, output, x.data(), true, dy.data(), false, &mut self.weight.grad, 1.0);
        for row in dy.data().chunks_exact(output) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; rows * input];
        gemm(rows, output, input, dy.data(), false, self.weight.value.data(), true, &mut dx, 0.0);
        Tensor::from_vec(x.shape(), dx)
    }
}

impl Module for Linear {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
