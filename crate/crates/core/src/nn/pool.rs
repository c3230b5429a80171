use super::conv::dims4;
use super::{Mode, Tensor};

/// 3x3, stride 2, padding 1 max pooling (the residual-network stem pool).
#[derive(Debug, Clone, Default)]
pub struct MaxPool2d {
    cache: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2d {
    const K: usize = 3;
    const S: usize = 2;
    const P: usize = 1;

    pub fn output_hw(h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * Self::P - Self::K) / Self::S + 1,
            (w + 2 * Self::P - Self::K) / Self::S + 1,
        )
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, h, w, c] = dims4(x);
        let (ho, wo) = Self::output_hw(h, w);
        let mut out = vec![f32::NEG_INFINITY; n * ho * wo * c];
        let mut arg = vec![0u32; out.len()];
        let xd = x.data();
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let o = ((b * ho + oy) * wo + ox) * c;
                    for ky in 0..Self::K {
                        let iy = (oy * Self::S + ky) as isize - Self::P as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..Self::K {
                            let ix = (ox * Self::S + kx) as isize - Self::P as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = ((b * h + iy as usize) * w + ix as usize) * c;
                            for ch in 0..c {
                                if xd[i + ch] > out[o + ch] {
                                    out[o + ch] = xd[i + ch];
                                    arg[o + ch] = (i + ch) as u32;
                                }
                            }
                        }
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((arg, [n, h, w, c]));
        }
        Tensor::from_vec(&[n, ho, wo, c], out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (arg, shape) = self.cache.take().expect("max pool backward without train forward");
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&i, &g) in arg.iter().zip(dy.data()) {
            d[i as usize] += g;
        }
        dx
    }
}

/// Averages every axis between the first and the last: `[N, .., C] -> [N, C]`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let n = x.dim(0);
    let c = x.channels();
    let per = x.len() / (n * c);
    let mut out = vec![0.0f32; n * c];
    for b in 0..n {
        let mut acc = vec![0.0f64; c];
        for row in x.data()[b * per * c..(b + 1) * per * c].chunks_exact(c) {
            for j in 0..c {
                acc[j] += row[j] as f64;
            }
        }
        for j in 0..c {
            out[b * c + j] = (acc[j] / per as f64) as f32;
        }
    }
    Tensor::from_vec(&[n, c], out)
}

pub fn global_avg_pool_backward(dy: &Tensor, input_shape: &[usize]) -> Tensor {
    let n = input_shape[0];
    let c = *input_shape.last().unwrap();
    let per: usize = input_shape[1..input_shape.len() - 1].iter().product();
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for b in 0..n {
        for p in 0..per {
            for j in 0..c {
                d[(b * per + p) * c + j] = dy.data()[b * c + j] / per as f32;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_picks_window_maximum_and_routes_gradient() {
        let x = Tensor::from_vec(&[1, 4, 4, 1], (0..16).map(|v| v as f32).collect());
        let mut pool = MaxPool2d::default();
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.data(), &[5., 7., 13., 15.]);
        let dx = pool.backward(&Tensor::full(&[1, 2, 2, 1], 1.0));
        let hot: Vec<usize> = dx.data().iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect();
        assert_eq!(hot, vec![5, 7, 13, 15]);
    }

    #[test]
    fn global_pool_round_trip_shapes() {
        let x = Tensor::from_vec(&[2, 2, 2, 3], (0..24).map(|v| v as f32).collect());
        let y = global_avg_pool(&x);
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(&y.data()[..3], &[4.5, 5.5, 6.5]);
        let dx = global_avg_pool_backward(&Tensor::full(&[2, 3], 4.0), x.shape());
        assert!(dx.data().iter().all(|&v| v == 1.0));
    }
}
