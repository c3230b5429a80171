use rand::Rng;

use super::param::join;
use super::{gemm, Mode, Module, Param, ParamKind, Tensor};

/// Single-layer LSTM returning the final hidden state.
///
/// Gate blocks are laid out `[input, forget, cell, output]` along the `4H`
/// axis of both weight matrices and the bias.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: Param,
    pub w_hh: Param,
    pub bias: Param,
    hidden: usize,
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    x: Tensor,
    /// Post-activation gates per step, `[T][B * 4H]`.
    gates: Vec<Vec<f32>>,
    /// Cell states `c_0..c_T` (index 0 is the zero initial state).
    cells: Vec<Vec<f32>>,
    /// Hidden states `h_0..h_T`.
    hiddens: Vec<Vec<f32>>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    /// Uniform `±1/sqrt(H)` initialisation.
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f32).sqrt();
        let mut sample = |len: usize| -> Vec<f32> { (0..len).map(|_| rng.gen_range(-bound..bound)).collect() };
        Self {
            w_ih: Param::new(Tensor::from_vec(&[input, 4 * hidden], sample(input * 4 * hidden)), ParamKind::Weight),
            w_hh: Param::new(Tensor::from_vec(&[hidden, 4 * hidden], sample(hidden * 4 * hidden)), ParamKind::Weight),
            bias: Param::new(Tensor::from_vec(&[4 * hidden], sample(4 * hidden)), ParamKind::Bias),
            hidden,
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.dim(0)
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    /// `x` is `[B, T, D]` with `T >= 1`; returns `h_T` as `[B, H]`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let s = x.shape();
        assert_eq!(s.len(), 3, "lstm expects [B, T, D]");
        let (b, t, d) = (s[0], s[1], s[2]);
        assert!(t >= 1, "lstm needs a non-empty sequence");
        assert_eq!(d, self.input_dim(), "lstm expects feature width {}", self.input_dim());
        let h = self.hidden;
        let g4 = 4 * h;

        let mut xg = vec![0.0f32; b * t * g4];
        gemm(b * t, d, g4, x.data(), false, self.w_ih.value.data(), false, &mut xg, 0.0);

        let mut hprev = vec![0.0f32; b * h];
        let mut cprev = vec![0.0f32; b * h];
        let record = mode == Mode::Train;
        let mut gates_all = Vec::new();
        let mut cells = vec![cprev.clone()];
        let mut hiddens = vec![hprev.clone()];
        let bias = self.bias.value.data();
        for step in 0..t {
            let mut g = vec![0.0f32; b * g4];
            for bi in 0..b {
                let src = &xg[(bi * t + step) * g4..(bi * t + step + 1) * g4];
                let dst = &mut g[bi * g4..(bi + 1) * g4];
                for j in 0..g4 {
                    dst[j] = src[j] + bias[j];
                }
            }
            gemm(b, h, g4, &hprev, false, self.w_hh.value.data(), false, &mut g, 1.0);
            let mut hn = vec![0.0f32; b * h];
            let mut cn = vec![0.0f32; b * h];
            for bi in 0..b {
                let row = &mut g[bi * g4..(bi + 1) * g4];
                for j in 0..h {
                    let i = sigmoid(row[j]);
                    let f = sigmoid(row[h + j]);
                    let gg = row[2 * h + j].tanh();
                    let o = sigmoid(row[3 * h + j]);
                    row[j] = i;
                    row[h + j] = f;
                    row[2 * h + j] = gg;
                    row[3 * h + j] = o;
                    let c = f * cprev[bi * h + j] + i * gg;
                    cn[bi * h + j] = c;
                    hn[bi * h + j] = o * c.tanh();
                }
            }
            if record {
                gates_all.push(g);
                cells.push(cn.clone());
                hiddens.push(hn.clone());
            }
            hprev = hn;
            cprev = cn;
        }
        if record {
            self.cache = Some(LstmCache {
                x: x.clone(),
                gates: gates_all,
                cells,
                hiddens,
            });
        }
        Tensor::from_vec(&[b, h], hprev)
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    pub fn backward(&mut self, dh_final: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("lstm backward without train forward");
        let s = cache.x.shape();
        let (b, t, d) = (s[0], s[1], s[2]);
        let h = self.hidden;
        let g4 = 4 * h;
        let mut dh = dh_final.data().to_vec();
        let mut dc = vec![0.0f32; b * h];
        let mut dxg = vec![0.0f32; b * t * g4];
        let mut dbias = vec![0.0f32; g4];
        for step in (0..t).rev() {
            let gates = &cache.gates[step];
            let c = &cache.cells[step + 1];
            let cprev = &cache.cells[step];
            let mut da = vec![0.0f32; b * g4];
            for bi in 0..b {
                let gr = &gates[bi * g4..(bi + 1) * g4];
                let ar = &mut da[bi * g4..(bi + 1) * g4];
                for j in 0..h {
                    let (i, f, gg, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let k = bi * h + j;
                    let tc = c[k].tanh();
                    let dcell = dc[k] + dh[k] * o * (1.0 - tc * tc);
                    ar[j] = dcell * gg * i * (1.0 - i);
                    ar[h + j] = dcell * cprev[k] * f * (1.0 - f);
                    ar[2 * h + j] = dcell * i * (1.0 - gg * gg);
                    ar[3 * h + j] = dh[k] * tc * o * (1.0 - o);
                    dc[k] = dcell * f;
                }
                dxg[(bi * t + step) * g4..(bi * t + step + 1) * g4].copy_from_slice(ar);
                for (acc, v) in dbias.iter_mut().zip(ar.iter()) {
                    *acc += v;
                }
            }
            let hprev = &cache.hiddens[step];
            gemm(h, b, g4, hprev, true, &da, false, &mut self.w_hh.grad, 1.0);
            let mut dh_prev = vec![0.0f32; b * h];
            gemm(b, g4, h, &da, false, self.w_hh.value.data(), true, &mut dh_prev, 0.0);
            dh = dh_prev;
        }
        for (g, v) in self.bias.grad.iter_mut().zip(&dbias) {
            *g += v;
        }
        gemm(d, b * t, g4, cache.x.data(), true, &dxg, false, &mut self.w_ih.grad, 1.0);
        let mut dx = vec![0.0f32; b * t * d];
        gemm(b * t, g4, d, &dxg, false, self.w_ih.value.data(), true, &mut dx, 0.0);
        Tensor::from_vec(&[b, t, d], dx)
    }
}

impl Module for Lstm {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w_ih"), &mut self.w_ih);
        f(&join(prefix, "w_hh"), &mut self.w_hh);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
