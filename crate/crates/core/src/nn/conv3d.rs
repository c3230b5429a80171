use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::param::join;
use super::{gemm, Mode, Module, Param, ParamKind, Tensor};

/// Cubic-kernel, stride-1, "same"-padded 3-D convolution over
/// `[B, T, H, W, C]` input, without bias.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub weight: Param,
    cin: usize,
    cout: usize,
    kernel: usize,
    cache: Option<(Vec<f32>, [usize; 5])>,
}

impl Conv3d {
    pub fn new(cin: usize, cout: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel % 2 == 1, "odd kernel required for same padding");
        let std = (2.0 / (cout * kernel.pow(3)) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..kernel.pow(3) * cin * cout).map(|_| normal.sample(rng) as f32).collect();
        Self {
            weight: Param::new(Tensor::from_vec(&[kernel.pow(3) * cin, cout], data), ParamKind::Weight),
            cin,
            cout,
            kernel,
            cache: None,
        }
    }

    fn for_each_tap(&self, shape: [usize; 5], mut f: impl FnMut(usize, Option<usize>)) {
        let [b, t, h, w, c] = shape;
        let k = self.kernel;
        let p = (k / 2) as isize;
        let mut row = 0;
        for bi in 0..b {
            for ti in 0..t {
                for yi in 0..h {
                    for xi in 0..w {
                        for kt in 0..k {
                            let tt = ti as isize + kt as isize - p;
                            for ky in 0..k {
                                let yy = yi as isize + ky as isize - p;
                                for kx in 0..k {
                                    let xx = xi as isize + kx as isize - p;
                                    let dst = row + ((kt * k + ky) * k + kx) * c;
                                    let inside = tt >= 0
                                        && yy >= 0
                                        && xx >= 0
                                        && tt < t as isize
                                        && yy < h as isize
                                        && xx < w as isize;
                                    let src = inside.then(|| {
                                        (((bi * t + tt as usize) * h + yy as usize) * w + xx as usize) * c
                                    });
                                    f(dst, src);
                                }
                            }
                        }
                        row += k * k * k * c;
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let s = x.shape();
        assert_eq!(s.len(), 5, "conv3d expects [B, T, H, W, C]");
        let shape = [s[0], s[1], s[2], s[3], s[4]];
        assert_eq!(shape[4], self.cin, "conv3d expects {} channels", self.cin);
        let rows = shape[..4].iter().product::<usize>();
        let kk = self.kernel.pow(3) * self.cin;
        let c = self.cin;
        let mut cols = vec![0.0f32; rows * kk];
        let xd = x.data();
        self.for_each_tap(shape, |dst, src| {
            if let Some(src) = src {
                cols[dst..dst + c].copy_from_slice(&xd[src..src + c]);
            }
        });
        let mut out = vec![0.0f32; rows * self.cout];
        gemm(rows, kk, self.cout, &cols, false, self.weight.value.data(), false, &mut out, 0.0);
        if mode == Mode::Train {
            self.cache = Some((cols, shape));
        }
        Tensor::from_vec(&[shape[0], shape[1], shape[2], shape[3], self.cout], out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (cols, shape) = self.cache.take().expect("conv3d backward without train forward");
        let rows = shape[..4].iter().product::<usize>();
        let kk = self.kernel.pow(3) * self.cin;
        gemm(kk, rows, self.cout, &cols, true, dy.data(), false, &mut self.weight.grad, 1.0);
        let mut dcols = vec![0.0f32; rows * kk];
        gemm(rows, self.cout, kk, dy.data(), false, self.weight.value.data(), true, &mut dcols, 0.0);
        let mut dx = vec![0.0f32; shape.iter().product()];
        let c = self.cin;
        self.for_each_tap(shape, |dst, src| {
            if let Some(src) = src {
                for (d, v) in dx[src..src + c].iter_mut().zip(&dcols[dst..dst + c]) {
                    *d += v;
                }
            }
        });
        Tensor::from_vec(&shape, dx)
    }
}

impl Module for Conv3d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
    }
}
