//! Procedural subjects drawn from filled ellipses and rectangles.

use image::{Rgb, RgbImage};

use crate::annotation::BoundingBox;
use crate::behaviour::BehaviourLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Paint {
    Fur,
    Skin,
    Eye,
    Branch,
    Limb,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Prim {
    Ellipse { cx: f32, cy: f32, rx: f32, ry: f32, paint: Paint },
    Rect { x0: f32, y0: f32, x1: f32, y1: f32, paint: Paint },
}

impl Prim {
    fn bounds(&self) -> (f32, f32, f32, f32) {
        match *self {
            Prim::Ellipse { cx, cy, rx, ry, .. } => (cx - rx, cy - ry, cx + rx, cy + ry),
            Prim::Rect { x0, y0, x1, y1, .. } => (x0, y0, x1, y1),
        }
    }

    fn contains(&self, x: f32, y: f32) -> bool {
        match *self {
            Prim::Ellipse { cx, cy, rx, ry, .. } => {
                let (u, v) = ((x - cx) / rx, (y - cy) / ry);
                u * u + v * v <= 1.0
            }
            Prim::Rect { x0, y0, x1, y1, .. } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }

    fn paint(&self) -> Paint {
        match *self {
            Prim::Ellipse { paint, .. } | Prim::Rect { paint, .. } => paint,
        }
    }
}

fn ellipse(cx: f32, cy: f32, rx: f32, ry: f32, paint: Paint) -> Prim {
    Prim::Ellipse { cx, cy, rx, ry, paint }
}

fn rect(x0: f32, y0: f32, x1: f32, y1: f32, paint: Paint) -> Prim {
    Prim::Rect { x0, y0, x1, y1, paint }
}

/// Cheap integer hash used for textures.
pub(crate) fn hash(a: i64, b: i64, c: u64) -> u32 {
    let mut h = (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ c.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 32;
    h as u32
}

/// Shape of a subject at `phase` (frames into the current behaviour),
/// centred on the origin, for a subject of unit `scale`.
pub(crate) struct Pose {
    pub behaviour: BehaviourLabel,
    pub phase: u32,
    pub stride_phase: f32,
    pub scale: f32,
    pub facing_left: bool,
    pub jitter: [f32; 2],
}

pub(crate) fn shapes(pose: &Pose) -> Vec<Prim> {
    use BehaviourLabel::*;
    use Paint::*;
    let t = pose.phase as f32;
    let mut p = match pose.behaviour {
        Walking | Running | SittingOnBack => {
            let swing = if pose.behaviour == SittingOnBack { 0.0 } else { 2.5 };
            let mut v = vec![ellipse(0.0, 0.0, 14.0, 7.0, Fur), ellipse(14.0, -5.0, 5.0, 5.0, Fur), ellipse(17.0, -4.0, 2.5, 2.0, Skin)];
            for (k, x) in [-10.0f32, -5.0, 5.0, 10.0].into_iter().enumerate() {
                let dx = swing * (pose.stride_phase + k as f32 * std::f32::consts::PI).sin();
                v.push(rect(x - 1.5 + dx, 4.0, x + 1.5 + dx, 14.0, Fur));
            }
            if pose.behaviour == SittingOnBack {
                v.push(ellipse(-3.0, -11.0, 5.0, 4.5, Skin));
                v.push(ellipse(2.0, -16.0, 3.5, 3.5, Skin));
            }
            v
        }
        ClimbingUp | ClimbingDown => {
            // The limb bar shows on even phases only, stepping through five
            // heights: bottom to top when climbing up, top to bottom when
            // climbing down. Every window holds the same frames and the same
            // appear/vanish flow events in both directions; only their order
            // differs.
            let cycle = pose.phase % 10;
            let mut v = vec![
                rect(-2.0, -22.0, 2.0, 22.0, Branch),
                ellipse(0.0, 1.0, 6.0, 12.0, Fur),
                ellipse(0.0, -15.0, 4.5, 4.5, Fur),
                rect(-8.0, -16.0, -5.5, -2.0, Fur),
                rect(5.5, -16.0, 8.0, -2.0, Fur),
            ];
            if cycle % 2 == 0 {
                let k = (cycle / 2) as f32;
                let bar = if pose.behaviour == ClimbingUp { 13.0 - 6.5 * k } else { -13.0 + 6.5 * k };
                v.push(rect(-10.0, bar - 1.5, 10.0, bar + 1.5, Limb));
            }
            v
        }
        Sitting => vec![
            ellipse(0.0, 5.0, 11.0, 9.0, Fur),
            ellipse(0.0, -8.0, 5.5, 5.5, Fur),
            ellipse(0.0, -7.0, 3.0, 2.5, Skin),
        ],
        Standing => {
            let [j0, j1] = pose.jitter;
            vec![
                ellipse(0.0, -2.0, 6.0, 12.0, Fur),
                ellipse(0.0, -17.0, 4.5, 4.5, Fur),
                ellipse(0.0, -16.0, 2.5, 2.0, Skin),
                rect(-4.5 + j0, 9.0, -1.5 + j0, 21.0, Fur),
                rect(1.5 + j1, 9.0, 4.5 + j1, 21.0, Fur),
                rect(-8.5, -9.0, -6.0, 6.0, Fur),
                rect(6.0, -9.0, 8.5, 6.0, Fur),
            ]
        }
        Hanging => vec![
            rect(-18.0, -23.0, 18.0, -20.0, Branch),
            rect(-7.0, -21.0, -4.5, -6.0, Fur),
            rect(4.5, -21.0, 7.0, -6.0, Fur),
            ellipse(0.0, 3.0, 6.0, 11.0, Fur),
            ellipse(0.0, -9.0, 4.5, 4.5, Fur),
            rect(-3.5, 12.0, -1.0, 20.0, Fur),
            rect(1.0, 12.0, 3.5, 20.0, Fur),
        ],
        CameraInteraction => {
            let r = 16.0 * (1.15 + 0.3 * (t * std::f32::consts::TAU / 40.0).sin());
            vec![
                ellipse(0.0, 0.0, r, r * 1.1, Fur),
                ellipse(0.0, r * 0.4, r * 0.55, r * 0.38, Skin),
                ellipse(-r * 0.38, -r * 0.2, r * 0.13, r * 0.13, Eye),
                ellipse(r * 0.38, -r * 0.2, r * 0.13, r * 0.13, Eye),
            ]
        }
    };
    let flip = if pose.facing_left { -1.0 } else { 1.0 };
    for prim in &mut p {
        match prim {
            Prim::Ellipse { cx, cy, rx, ry, .. } => {
                *cx *= flip * pose.scale;
                *cy *= pose.scale;
                *rx *= pose.scale;
                *ry *= pose.scale;
            }
            Prim::Rect { x0, y0, x1, y1, .. } => {
                let (a, b) = (*x0 * flip * pose.scale, *x1 * flip * pose.scale);
                (*x0, *x1) = (a.min(b), a.max(b));
                *y0 *= pose.scale;
                *y1 *= pose.scale;
            }
        }
    }
    p
}

/// Extent of the shapes relative to the centre: `(left, top, right, bottom)`.
pub(crate) fn extent(prims: &[Prim]) -> (f32, f32, f32, f32) {
    prims.iter().map(Prim::bounds).fold(
        (f32::MAX, f32::MAX, f32::MIN, f32::MIN),
        |(a, b, c, d), (x0, y0, x1, y1)| (a.min(x0), b.min(y0), c.max(x1), d.max(y1)),
    )
}

/// Draws the shapes centred at `(cx, cy)` and returns the box of the drawn
/// pixels, or `None` if nothing landed inside the image.
pub(crate) fn draw(img: &mut RgbImage, prims: &[Prim], cx: i64, cy: i64, tint: u64) -> Option<BoundingBox> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (l, t, r, b) = extent(prims);
    let mut bbox: Option<(i64, i64, i64, i64)> = None;
    for y in (cy + t.floor() as i64).max(0)..=(cy + b.ceil() as i64).min(h - 1) {
        for x in (cx + l.floor() as i64).max(0)..=(cx + r.ceil() as i64).min(w - 1) {
            let (lx, ly) = ((x - cx) as f32, (y - cy) as f32);
            let Some(prim) = prims.iter().rev().find(|p| p.contains(lx, ly)) else {
                continue;
            };
            // texture is fixed to the subject so it moves with it
            let n = (hash(x - cx, y - cy, tint) % 48) as i32 - 24;
            let base: [i32; 3] = match prim.paint() {
                Paint::Fur => [70, 50, 35],
                Paint::Skin => [190, 150, 120],
                Paint::Eye => [10, 10, 10],
                Paint::Branch => [120, 90, 50],
                Paint::Limb => [235, 210, 70],
            };
            let px = base.map(|c| (c + n).clamp(0, 255) as u8);
            img.put_pixel(x as u32, y as u32, Rgb(px));
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
            });
        }
    }
    bbox.map(|(a, b, c, d)| BoundingBox { xmin: a as u32, ymin: b as u32, xmax: c as u32 + 1, ymax: d as u32 + 1 })
}
