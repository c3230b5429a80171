use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::param::join;
use super::{gemm, Mode, Module, Param, ParamKind, Tensor};

/// Square-kernel 2-D convolution without bias over `[N, H, W, C]` input.
///
/// The weight is stored as a `[k * k * cin, cout]` matrix whose row index is
/// `(ky * k + kx) * cin + ci`, matching the im2col column layout.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    /// im2col matrix, or the raw input when the convolution is pointwise.
    cols: Vec<f32>,
    in_shape: [usize; 4],
    out_hw: (usize, usize),
}

impl Conv2d {
    /// Kaiming-normal initialisation in fan-out mode.
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let std = (2.0 / (cout * kernel * kernel) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..kernel * kernel * cin * cout)
            .map(|_| normal.sample(rng) as f32)
            .collect();
        Self {
            weight: Param::new(
                Tensor::from_vec(&[kernel * kernel * cin, cout], data),
                ParamKind::Weight,
            ),
            cin,
            cout,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, h, w, c] = dims4(x);
        assert_eq!(c, self.cin, "conv expects {} input channels", self.cin);
        let (ho, wo) = self.output_hw(h, w);
        let rows = n * ho * wo;
        let k = self.kernel * self.kernel * self.cin;
        let cols = if self.pointwise() {
            x.data().to_vec()
        } else {
            let mut cols = vec![0.0; rows * k];
            im2col(x.data(), [n, h, w, c], self.kernel, self.stride, self.pad, (ho, wo), &mut cols);
            cols
        };
        let mut out = vec![0.0; rows * self.cout];
        gemm(rows, k, self.cout, &cols, false, self.weight.value.data(), false, &mut out, 0.0);
        if mode == Mode::Train {
            self.cache = Some(ConvCache {
                cols,
                in_shape: [n, h, w, c],
                out_hw: (ho, wo),
            });
        }
        Tensor::from_vec(&[n, ho, wo, self.cout], out)
    }

    /// Accumulates the weight gradient; returns the input gradient when asked.
    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let cache = self.cache.take().expect("conv backward without train forward");
        let [n, h, w, c] = cache.in_shape;
        let (ho, wo) = cache.out_hw;
        let rows = n * ho * wo;
        let k = self.kernel * self.kernel * self.cin;
        assert_eq!(dy.len(), rows * self.cout);
        gemm(k, rows, self.cout, &cache.cols, true, dy.data(), false, &mut self.weight.grad, 1.0);
        if !need_dx {
            return None;
        }
        let mut dcols = vec![0.0; rows * k];
        gemm(rows, self.cout, k, dy.data(), false, self.weight.value.data(), true, &mut dcols, 0.0);
        if self.pointwise() {
            return Some(Tensor::from_vec(&[n, h, w, c], dcols));
        }
        let mut dx = vec![0.0; n * h * w * c];
        col2im(&dcols, [n, h, w, c], self.kernel, self.stride, self.pad, (ho, wo), &mut dx);
        Some(Tensor::from_vec(&[n, h, w, c], dx))
    }
}

impl Module for Conv2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
    }
}

pub(crate) fn dims4(x: &Tensor) -> [usize; 4] {
    let s = x.shape();
    assert_eq!(s.len(), 4, "expected a [N, H, W, C] tensor, got {s:?}");
    [s[0], s[1], s[2], s[3]]
}

fn im2col(
    x: &[f32],
    [n, h, w, c]: [usize; 4],
    k: usize,
    stride: usize,
    pad: usize,
    (ho, wo): (usize, usize),
    cols: &mut [f32],
) {
    let kk = k * k * c;
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * kk;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        let dst = row + (ky * k + kx) * c;
                        if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                            cols[dst..dst + c].fill(0.0);
                        } else {
                            let src = ((b * h + iy as usize) * w + ix as usize) * c;
                            cols[dst..dst + c].copy_from_slice(&x[src..src + c]);
                        }
                    }
                }
            }
        }
    }
}

fn col2im(
    cols: &[f32],
    [n, h, w, c]: [usize; 4],
    k: usize,
    stride: usize,
    pad: usize,
    (ho, wo): (usize, usize),
    dx: &mut [f32],
) {
    let kk = k * k * c;
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * kk;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = row + (ky * k + kx) * c;
                        let dst = ((b * h + iy as usize) * w + ix as usize) * c;
                        for (d, s) in dx[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{dot, projection, rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct convolution straight from the definition.
    fn naive_conv(x: &Tensor, conv: &Conv2d) -> Tensor {
        let [n, h, w, c] = dims4(x);
        let (ho, wo) = conv.output_hw(h, w);
        let k = conv.kernel;
        let wt = conv.weight.value.data();
        let mut out = Tensor::zeros(&[n, ho, wo, conv.cout]);
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for co in 0..conv.cout {
                        let mut acc = 0.0f64;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                for ci in 0..c {
                                    let xv = x.data()[((b * h + iy as usize) * w + ix as usize) * c + ci];
                                    acc += xv as f64 * wt[((ky * k + kx) * c + ci) * conv.cout + co] as f64;
                                }
                            }
                        }
                        out.data_mut()[((b * ho + oy) * wo + ox) * conv.cout + co] = acc as f32;
                    }
                }
            }
        }
        out
    }

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, projection(len, seed))
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (7, 2, 3), (1, 2, 0), (1, 1, 0)] {
            let mut conv = Conv2d::new(3, 4, k, s, p, &mut rng);
            let x = random_input(&[2, 9, 8, 3], 7);
            let got = conv.forward(&x, Mode::Eval);
            let want = naive_conv(&x, &conv);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-4, "k={k} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (1, 2, 0)] {
            let mut conv = Conv2d::new(2, 3, k, s, p, &mut rng);
            let x = random_input(&[2, 5, 6, 2], 3);
            let y = conv.forward(&x, Mode::Train);
            let proj = projection(y.len(), 9);
            let dx = conv.backward(&Tensor::from_vec(y.shape(), proj.clone()), true).unwrap();

            let eps = 1e-2f32;
            let mut fd = Vec::new();
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += eps;
                let mut xm = x.clone();
                xm.data_mut()[i] -= eps;
                let lp = dot(conv.forward(&xp, Mode::Eval).data(), &proj);
                let lm = dot(conv.forward(&xm, Mode::Eval).data(), &proj);
                fd.push((lp - lm) / (2.0 * eps as f64));
            }
            let an: Vec<f64> = dx.data().iter().map(|&v| v as f64).collect();
            assert!(rel_error(&an, &fd) < 1e-3, "dx k={k} s={s}");

            let mut fdw = Vec::new();
            for i in 0..conv.weight.value.len() {
                let orig = conv.weight.value.data()[i];
                conv.weight.value.data_mut()[i] = orig + eps;
                let lp = dot(conv.forward(&x, Mode::Eval).data(), &proj);
                conv.weight.value.data_mut()[i] = orig - eps;
                let lm = dot(conv.forward(&x, Mode::Eval).data(), &proj);
                conv.weight.value.data_mut()[i] = orig;
                fdw.push((lp - lm) / (2.0 * eps as f64));
            }
            let anw: Vec<f64> = conv.weight.grad.iter().map(|&v| v as f64).collect();
            assert!(rel_error(&anw, &fdw) < 1e-3, "dw k={k} s={s}");
        }
    }
}
