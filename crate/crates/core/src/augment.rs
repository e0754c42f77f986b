//! Weak and strong stochastic views.
//!
//! Images: the weak view is a random horizontal flip plus an edge-padded
//! integer shift; the strong view applies `n` operations drawn uniformly
//! from a small pool at a fixed magnitude, then cuts out a gray square.
//! Flat vectors use additive Gaussian noise (weak) and feature dropout with
//! per-feature scale jitter (strong).
//!
//! All randomness comes from the caller's RNG; the trainer hands every
//! `(epoch, sample, view)` its own stream.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Image, Payload};

/// Operations available to the strong policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrongOp {
    Invert,
    Contrast,
    Brightness,
    Rotate,
    Shear,
    Solarize,
    Posterize,
}

impl StrongOp {
    pub const POOL: [StrongOp; 7] = [
        StrongOp::Invert,
        StrongOp::Contrast,
        StrongOp::Brightness,
        StrongOp::Rotate,
        StrongOp::Shear,
        StrongOp::Solarize,
        StrongOp::Posterize,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Probability of a horizontal flip in the weak view.
    pub flip_prob: f64,
    /// Max shift as a fraction of width/height.
    pub shift: f64,
    /// Operations applied per strong view.
    pub strong_ops: usize,
    /// Strength of each strong operation, in `[0, 1]`.
    pub magnitude: f64,
    /// Cutout side as a fraction of the image side.
    pub cutout: f64,
    pub op_pool: Vec<StrongOp>,
    /// Vector data: weak-view noise standard deviation.
    pub noise_std: f64,
    /// Vector data: strong-view drop probability per feature.
    pub dropout: f64,
    /// Vector data: strong-view scale factors are drawn from `1 ± scale_jitter`.
    pub scale_jitter: f64,
    /// Images: apply the weak flip-and-shift before the strong operations.
    pub strong_after_weak: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            shift: 0.125,
            strong_ops: 2,
            magnitude: 0.5,
            cutout: 0.5,
            op_pool: StrongOp::POOL.to_vec(),
            noise_std: 0.05,
            dropout: 0.3,
            scale_jitter: 0.3,
            strong_after_weak: false,
        }
    }
}

pub fn flip_horizontal(img: &Image) -> Image {
    let mut out = img.clone();
    for c in 0..img.channels {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(c, y, x, img.get(c, y, img.width - 1 - x));
            }
        }
    }
    out
}

/// Moves content by `(dx, dy)` pixels, replicating edge pixels into the gap.
pub fn translate(img: &Image, dx: i64, dy: i64) -> Image {
    let mut out = img.clone();
    let (w, h) = (img.width as i64, img.height as i64);
    for c in 0..img.channels {
        for y in 0..h {
            let sy = (y - dy).clamp(0, h - 1) as usize;
            for x in 0..w {
                let sx = (x - dx).clamp(0, w - 1) as usize;
                out.set(c, y as usize, x as usize, img.get(c, sy, sx));
            }
        }
    }
    out
}

/// Fills the `side × side` square at `(top, left)` with `fill`.
pub fn cutout(img: &mut Image, top: usize, left: usize, side: usize, fill: f64) {
    for c in 0..img.channels {
        for y in top..(top + side).min(img.height) {
            for x in left..(left + side).min(img.width) {
                img.set(c, y, x, fill);
            }
        }
    }
}

/// Nearest-neighbor resampling through an inverse map about the center.
fn warp(img: &Image, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let mut out = img.clone();
    let (cx, cy) = ((img.width as f64 - 1.0) / 2.0, (img.height as f64 - 1.0) / 2.0);
    for y in 0..img.height {
        for x in 0..img.width {
            let (sx, sy) = inverse(x as f64 - cx, y as f64 - cy);
            let sx = (sx + cx).round().clamp(0.0, img.width as f64 - 1.0) as usize;
            let sy = (sy + cy).round().clamp(0.0, img.height as f64 - 1.0) as usize;
            for c in 0..img.channels {
                out.set(c, y, x, img.get(c, sy, sx));
            }
        }
    }
    out
}

fn map_values(img: &Image, f: impl Fn(f64) -> f64) -> Image {
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v = f(*v).clamp(0.0, 1.0));
    out
}

fn signed(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Applies one strong operation; magnitude 0 is the identity for every op.
pub fn apply_op(img: &Image, op: StrongOp, magnitude: f64, rng: &mut impl Rng) -> Image {
    let m = magnitude.clamp(0.0, 1.0);
    match op {
        // No strength parameter; any positive magnitude inverts fully.
        StrongOp::Invert if m == 0.0 => img.clone(),
        StrongOp::Invert => map_values(img, |x| 1.0 - x),
        StrongOp::Contrast => {
            let f = 1.0 + signed(rng) * 0.9 * m;
            let mean = img.data.iter().sum::<f64>() / img.data.len().max(1) as f64;
            map_values(img, |x| x * f + mean * (1.0 - f))
        }
        StrongOp::Brightness => {
            let delta = signed(rng) * 0.5 * m;
            map_values(img, |x| x + delta)
        }
        StrongOp::Rotate => {
            let angle = signed(rng) * (30.0 * m).to_radians();
            let (s, c) = angle.sin_cos();
            warp(img, |x, y| (c * x + s * y, -s * x + c * y))
        }
        StrongOp::Shear => {
            let k = signed(rng) * 0.3 * m;
            warp(img, |x, y| (x - k * y, y))
        }
        StrongOp::Solarize => {
            let threshold = 1.0 - m;
            map_values(img, |x| if x > threshold { 1.0 - x } else { x })
        }
        StrongOp::Posterize => {
            let bits = 8 - (m * 6.0).floor() as u32;
            if bits >= 8 {
                return img.clone();
            }
            let levels = (1u32 << bits) as f64;
            map_values(img, |x| (x * (levels - 1.0)).round() / (levels - 1.0))
        }
    }
}

impl AugmentConfig {
    pub fn weak(&self, payload: &Payload, rng: &mut impl Rng) -> Payload {
        match payload {
            Payload::Image(img) => {
                let flipped = rng.gen_bool(self.flip_prob.clamp(0.0, 1.0));
                let max_dx = (self.shift * img.width as f64).round() as i64;
                let max_dy = (self.shift * img.height as f64).round() as i64;
                let dx = rng.gen_range(-max_dx..=max_dx);
                let dy = rng.gen_range(-max_dy..=max_dy);
                let base = if flipped { flip_horizontal(img) } else { img.clone() };
                Payload::Image(translate(&base, dx, dy))
            }
            Payload::Vector(v) => {
                let noise = Normal::new(0.0, self.noise_std.max(0.0)).expect("finite std");
                Payload::Vector(v.iter().map(|x| x + noise.sample(rng)).collect())
            }
        }
    }

    pub fn strong(&self, payload: &Payload, rng: &mut impl Rng) -> Payload {
        match payload {
            Payload::Image(img) => {
                let mut out = if self.strong_after_weak {
                    match self.weak(payload, rng) {
                        Payload::Image(w) => w,
                        Payload::Vector(_) => unreachable!("weak keeps the payload kind"),
                    }
                } else {
                    img.clone()
                };
                if !self.op_pool.is_empty() {
                    for _ in 0..self.strong_ops {
                        let op = self.op_pool[rng.gen_range(0..self.op_pool.len())];
                        out = apply_op(&out, op, self.magnitude, rng);
                    }
                }
                let side = (self.cutout.clamp(0.0, 1.0) * img.width.min(img.height) as f64).floor() as usize;
                if side > 0 {
                    let top = rng.gen_range(0..=img.height - side);
                    let left = rng.gen_range(0..=img.width - side);
                    cutout(&mut out, top, left, side, 0.5);
                }
                Payload::Image(out)
            }
            Payload::Vector(v) => {
                let lo = 1.0 - self.scale_jitter;
                let hi = 1.0 + self.scale_jitter;
                Payload::Vector(
                    v.iter()
                        .map(|&x| {
                            let keep = !rng.gen_bool(self.dropout.clamp(0.0, 1.0));
                            let scale = if hi > lo { rng.gen_range(lo..hi) } else { 1.0 };
                            if keep {
                                x * scale
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_shapes, ShapesSpec};
    use crate::rng::stream;

    fn sample_image() -> Image {
        let ds = gen_shapes(&ShapesSpec { n_per_class: 1, seed: 5, ..Default::default() }).unwrap();
        match &ds.samples[1].payload {
            Payload::Image(img) => img.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn weak_without_flip_or_shift_is_identity() {
        let img = Payload::Image(sample_image());
        let cfg = AugmentConfig { flip_prob: 0.0, shift: 0.0, ..Default::default() };
        assert_eq!(cfg.weak(&img, &mut stream(1, &[1])), img);
    }

    #[test]
    fn flip_is_an_involution_and_keeps_mass() {
        let img = sample_image();
        let f = flip_horizontal(&img);
        assert_eq!(flip_horizontal(&f), img);
        let (a, b): (f64, f64) = (img.data.iter().sum(), f.data.iter().sum());
        assert!((a - b).abs() < 1e-9);
        // reversed displacement undoes an interior shift
        let shifted = translate(&translate(&img, 2, -1), -2, 1);
        let inner = |i: &Image| -> Vec<f64> {
            (0..i.channels)
                .flat_map(|c| (3..i.height - 3).flat_map(move |y| (3..i.width - 3).map(move |x| (c, y, x))))
                .map(|(c, y, x)| i.get(c, y, x))
                .collect()
        };
        assert_eq!(inner(&shifted), inner(&img));
    }

    #[test]
    fn strong_at_zero_magnitude_and_no_cutout_is_identity() {
        let img = Payload::Image(sample_image());
        let cfg = AugmentConfig { magnitude: 0.0, cutout: 0.0, strong_ops: 4, ..Default::default() };
        for seed in 0..20 {
            assert_eq!(cfg.strong(&img, &mut stream(seed, &[2])), img);
        }
        for op in StrongOp::POOL {
            let Payload::Image(i) = &img else { unreachable!() };
            assert_eq!(&apply_op(i, op, 0.0, &mut stream(0, &[3])), i, "{op:?}");
        }
    }

    #[test]
    fn invert_is_full_for_any_positive_magnitude() {
        let img = sample_image();
        let mut rng = stream(2, &[0]);
        for m in [0.1, 0.5, 1.0] {
            let out = apply_op(&img, StrongOp::Invert, m, &mut rng);
            assert!(out.data.iter().zip(&img.data).all(|(o, x)| (o - (1.0 - x)).abs() < 1e-15));
        }
        assert_eq!(apply_op(&img, StrongOp::Invert, 0.0, &mut rng), img);
    }

    #[test]
    fn strong_output_is_clamped() {
        let img = Payload::Image(sample_image());
        let cfg = AugmentConfig { magnitude: 1.0, strong_ops: 3, ..Default::default() };
        for seed in 0..50 {
            let out = cfg.strong(&img, &mut stream(seed, &[4]));
            assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn cutout_square_pixel_count() {
        let ones = Payload::Image(Image::filled(3, 32, 32, 1.0));
        let cfg = AugmentConfig { strong_ops: 0, ..Default::default() };
        for seed in 0..20 {
            let out = cfg.strong(&ones, &mut stream(seed, &[5]));
            let gray = out.values().iter().filter(|&&v| v == 0.5).count();
            assert_eq!(gray, 3 * 16 * 16);
        }
    }

    #[test]
    fn same_stream_same_view() {
        let img = Payload::Image(sample_image());
        let cfg = AugmentConfig::default();
        assert_eq!(cfg.strong(&img, &mut stream(3, &[9, 9])), cfg.strong(&img, &mut stream(3, &[9, 9])));
        assert_eq!(cfg.weak(&img, &mut stream(3, &[9, 8])), cfg.weak(&img, &mut stream(3, &[9, 8])));
    }

    #[test]
    fn weak_is_milder_than_strong() {
        let ds = gen_shapes(&ShapesSpec { n_per_class: 10, seed: 1, ..Default::default() }).unwrap();
        let cfg = AugmentConfig::default();
        let l2 = |a: &Payload, b: &Payload| -> f64 {
            a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let (mut weak, mut strong) = (0.0, 0.0);
        for draw in 0..1000u64 {
            let s = &ds.samples[(draw % ds.len() as u64) as usize];
            weak += l2(&cfg.weak(&s.payload, &mut stream(1, &[draw, 0])), &s.payload);
            strong += l2(&cfg.strong(&s.payload, &mut stream(1, &[draw, 1])), &s.payload);
        }
        assert!(weak < strong, "weak {weak} vs strong {strong}");
    }

    #[test]
    fn vector_views() {
        let v = Payload::Vector(vec![1.0; 200]);
        let cfg = AugmentConfig::default();
        let w = cfg.weak(&v, &mut stream(0, &[1]));
        let dev = w.values().iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() / 200.0;
        assert!(dev.sqrt() > 0.03 && dev.sqrt() < 0.07);
        let s = cfg.strong(&v, &mut stream(0, &[2]));
        let zeros = s.values().iter().filter(|&&x| x == 0.0).count();
        assert!(zeros > 30 && zeros < 90);
        assert!(s.values().iter().all(|&x| x == 0.0 || (0.7..1.3).contains(&x)));
    }
}
