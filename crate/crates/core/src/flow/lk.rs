//! Dense pyramidal Lucas-Kanade.
//!
//! Every pixel gets its own windowed least-squares estimate; window sums
//! come from integral images so a level costs O(pixels) per iteration.
//! Coarse-to-fine warping handles displacements larger than a pixel.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::FlowField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub levels: usize,
    pub window_radius: usize,
    pub iterations: usize,
    /// Added to the structure-tensor diagonal; keeps flat regions at zero.
    pub regularization: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window_radius: 3,
            iterations: 4,
            regularization: 1e-2,
        }
    }
}

pub const ALGORITHM: &str = "pyramidal-lucas-kanade";

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f32>,
}

impl Plane {
    fn grey(img: &RgbImage) -> Self {
        let v = img
            .pixels()
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect();
        Self { w: img.width() as usize, h: img.height() as usize, v }
    }

    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.v[y * self.w + x]
    }

    fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x0 + 1, y0) * fx;
        let bottom = self.at(x0, y0 + 1) * (1.0 - fx) + self.at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// 2x2 box average; odd trailing rows/columns are folded in by clamping.
    fn half(&self) -> Self {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let s = self.at(2 * x, 2 * y)
                    + self.at(2 * x + 1, 2 * y)
                    + self.at(2 * x, 2 * y + 1)
                    + self.at(2 * x + 1, 2 * y + 1);
                v.push(s * 0.25);
            }
        }
        Self { w, h, v }
    }

    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let mut gx = vec![0.0; self.v.len()];
        let mut gy = vec![0.0; self.v.len()];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let i = y as usize * self.w + x as usize;
                gx[i] = 0.5 * (self.at(x + 1, y) - self.at(x - 1, y));
                gy[i] = 0.5 * (self.at(x, y + 1) - self.at(x, y - 1));
            }
        }
        (gx, gy)
    }
}

/// Window sums of `v` (radius `r`, clipped at borders) via an integral image.
fn box_sum(v: &[f32], w: usize, h: usize, r: usize) -> Vec<f32> {
    let mut integral = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0f64;
        for x in 0..w {
            row += v[y * w + x] as f64;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            out[y * w + x] = s as f32;
        }
    }
    out
}

fn refine(i0: &Plane, i1: &Plane, u: &mut [f32], v: &mut [f32], p: &FlowParams) {
    let (w, h) = (i0.w, i0.h);
    let (gx0, gy0) = i0.gradients();
    for _ in 0..p.iterations {
        let mut warped = i1.clone();
        for y in 0..h {
            for x in 0..w {
                let k = y * w + x;
                warped.v[k] = i1.bilinear(x as f32 + u[k], y as f32 + v[k]);
            }
        }
        let (gx1, gy1) = warped.gradients();
        let n = w * h;
        let (mut xx, mut xy, mut yy, mut xt, mut yt) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            let gx = 0.5 * (gx0[k] + gx1[k]);
            let gy = 0.5 * (gy0[k] + gy1[k]);
            let gt = warped.v[k] - i0.v[k];
            xx[k] = gx * gx;
            xy[k] = gx * gy;
            yy[k] = gy * gy;
            xt[k] = gx * gt;
            yt[k] = gy * gt;
        }
        let r = p.window_radius;
        let [sxx, sxy, syy, sxt, syt] = [&xx, &xy, &yy, &xt, &yt].map(|a| box_sum(a, w, h, r));
        for k in 0..n {
            let a = sxx[k] + p.regularization;
            let d = syy[k] + p.regularization;
            let b = sxy[k];
            let det = a * d - b * b;
            if det.abs() < 1e-12 {
                continue;
            }
            u[k] += (-d * sxt[k] + b * syt[k]) / det;
            v[k] += (b * sxt[k] - a * syt[k]) / det;
        }
    }
}

/// Dense flow from `a` to `b`: pixel `(x, y)` of `a` moved to
/// `(x + dx, y + dy)` in `b`.
pub fn compute_dense_flow(a: &RgbImage, b: &RgbImage, params: &FlowParams) -> Result<FlowField> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Contract(format!(
            "flow frames differ in size: {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    if a.width() == 0 || a.height() == 0 {
        return Err(Error::Contract("flow frames are empty".into()));
    }
    let mut pyr0 = vec![Plane::grey(a)];
    let mut pyr1 = vec![Plane::grey(b)];
    for _ in 1..params.levels.max(1) {
        let last = pyr0.last().unwrap();
        if last.w < 8 || last.h < 8 {
            break;
        }
        let next0 = last.half();
        let next1 = pyr1.last().unwrap().half();
        pyr0.push(next0);
        pyr1.push(next1);
    }
    let top = pyr0.last().unwrap();
    let mut u = vec![0.0; top.w * top.h];
    let mut v = vec![0.0; top.w * top.h];
    let mut size = (top.w, top.h);
    for level in (0..pyr0.len()).rev() {
        let (w, h) = (pyr0[level].w, pyr0[level].h);
        if (w, h) != size {
            // upsample the coarser estimate and double it
            let coarse = (Plane { w: size.0, h: size.1, v: u }, Plane { w: size.0, h: size.1, v });
            let mut nu = Vec::with_capacity(w * h);
            let mut nv = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let (cx, cy) = ((x as f32 + 0.5) / 2.0 - 0.5, (y as f32 + 0.5) / 2.0 - 0.5);
                    nu.push(2.0 * coarse.0.bilinear(cx, cy));
                    nv.push(2.0 * coarse.1.bilinear(cx, cy));
                }
            }
            u = nu;
            v = nv;
            size = (w, h);
        }
        refine(&pyr0[level], &pyr1[level], &mut u, &mut v, params);
    }
    let field = FlowField {
        width: a.width(),
        height: a.height(),
        dx: u,
        dy: v,
    };
    if !field.is_finite() {
        return Err(Error::Contract("flow produced non-finite values".into()));
    }
    Ok(field)
}
