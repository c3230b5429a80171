use super::param::join;
use super::{Mode, Module, Param, ParamKind, Tensor};

const EPS: f64 = 1e-5;
const MOMENTUM: f32 = 0.1;

/// Batch normalisation over the trailing channel axis.
///
/// Training uses biased batch statistics and updates the running estimates
/// with the unbiased variance; evaluation uses the running estimates only.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], 1.0), ParamKind::NormScale),
            beta: Param::new(Tensor::zeros(&[channels]), ParamKind::NormShift),
            running_mean: Param::new(Tensor::zeros(&[channels]), ParamKind::RunningStat),
            running_var: Param::new(Tensor::full(&[channels], 1.0), ParamKind::RunningStat),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let c = self.gamma.value.len();
        assert_eq!(x.channels(), c, "batch norm expects {c} channels");
        let m = x.len() / c;
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut out = vec![0.0f32; x.len()];
        match mode {
            Mode::Eval => {
                let mean = self.running_mean.value.data();
                let var = self.running_var.value.data();
                let scale: Vec<f32> = (0..c)
                    .map(|j| (gamma[j] as f64 / (var[j] as f64 + EPS).sqrt()) as f32)
                    .collect();
                for (row_in, row_out) in x.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
                    for j in 0..c {
                        row_out[j] = (row_in[j] - mean[j]) * scale[j] + beta[j];
                    }
                }
            }
            Mode::Train => {
                let mut sum = vec![0.0f64; c];
                for row in x.data().chunks_exact(c) {
                    for j in 0..c {
                        sum[j] += row[j] as f64;
                    }
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / m as f64).collect();
                let mut sq = vec![0.0f64; c];
                for row in x.data().chunks_exact(c) {
                    for j in 0..c {
                        let d = row[j] as f64 - mean[j];
                        sq[j] += d * d;
                    }
                }
                let var: Vec<f64> = sq.iter().map(|s| s / m as f64).collect();
                let inv_std: Vec<f32> = var.iter().map(|v| (1.0 / (v + EPS).sqrt()) as f32).collect();
                let mut xhat = vec![0.0f32; x.len()];
                for ((row_in, row_hat), row_out) in x
                    .data()
                    .chunks_exact(c)
                    .zip(xhat.chunks_exact_mut(c))
                    .zip(out.chunks_exact_mut(c))
                {
                    for j in 0..c {
                        let h = (row_in[j] - mean[j] as f32) * inv_std[j];
                        row_hat[j] = h;
                        row_out[j] = gamma[j] * h + beta[j];
                    }
                }
                let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
                let rm = self.running_mean.value.data_mut();
                for j in 0..c {
                    rm[j] = (1.0 - MOMENTUM) * rm[j] + MOMENTUM * mean[j] as f32;
                }
                let rv = self.running_var.value.data_mut();
                for j in 0..c {
                    rv[j] = (1.0 - MOMENTUM) * rv[j] + MOMENTUM * (var[j] * unbias) as f32;
                }
                self.cache = Some(BnCache { xhat, inv_std });
            }
        }
        Tensor::from_vec(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("batch norm backward without train forward");
        let c = self.gamma.value.len();
        let m = dy.len() / c;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for (g, h) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                dgamma[j] += g[j] as f64 * h[j] as f64;
                dbeta[j] += g[j] as f64;
            }
        }
        for j in 0..c {
            self.gamma.grad[j] += dgamma[j] as f32;
            self.beta.grad[j] += dbeta[j] as f32;
        }
        let gamma = self.gamma.value.data();
        let coef: Vec<f32> = (0..c)
            .map(|j| gamma[j] * cache.inv_std[j] / m as f32)
            .collect();
        let mut dx = vec![0.0f32; dy.len()];
        for ((g, h), d) in dy
            .data()
            .chunks_exact(c)
            .zip(cache.xhat.chunks_exact(c))
            .zip(dx.chunks_exact_mut(c))
        {
            for j in 0..c {
                d[j] = coef[j] * (m as f32 * g[j] - dbeta[j] as f32 - h[j] * dgamma[j] as f32);
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }
}

impl Module for BatchNorm {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{dot, projection, rel_error};

    #[test]
    fn train_output_is_standardised_per_channel() {
        let mut bn = BatchNorm::new(3);
        let x = Tensor::from_vec(&[4, 2, 3], projection(24, 5).iter().map(|v| v * 4.0 + 1.0).collect());
        let y = bn.forward(&x, Mode::Train);
        for j in 0..3 {
            let col: Vec<f64> = y.data().iter().skip(j).step_by(3).map(|&v| v as f64).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut bn = BatchNorm::new(2);
        bn.gamma.value.data_mut().copy_from_slice(&[1.5, -0.7]);
        bn.beta.value.data_mut().copy_from_slice(&[0.2, 0.1]);
        let x = Tensor::from_vec(&[5, 2], projection(10, 11));
        let proj = projection(10, 12);
        bn.forward(&x, Mode::Train);
        let dx = bn.backward(&Tensor::from_vec(&[5, 2], proj.clone()));
        let eps = 1e-3f32;
        let mut fd = Vec::new();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let mut probe = bn.clone();
            let lp = dot(probe.forward(&xp, Mode::Train).data(), &proj);
            let lm = dot(probe.forward(&xm, Mode::Train).data(), &proj);
            fd.push((lp - lm) / (2.0 * eps as f64));
        }
        let an: Vec<f64> = dx.data().iter().map(|&v| v as f64).collect();
        assert!(rel_error(&an, &fd) < 1e-2, "{an:?} vs {fd:?}");
    }
}
