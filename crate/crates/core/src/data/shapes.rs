use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetKind, Image, Payload, Sample};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeVariant {
    /// Random color on the outline only.
    BorderColor,
    /// Shape filled with a random color.
    FillColor,
}

/// How the drawn radius maps to each shape's size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeSizing {
    /// The radius is every shape's circumradius.
    Circumradius,
    /// Polygons are scaled to the area of the circle with that radius, so
    /// area carries no class information.
    EqualArea,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeClass {
    Circle = 0,
    Triangle = 1,
    Pentagon = 2,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Circle, ShapeClass::Triangle, ShapeClass::Pentagon];

    /// Circumradius relative to `r` under a sizing rule.
    pub fn extent(self, sizing: ShapeSizing) -> f64 {
        let n = match (self, sizing) {
            (ShapeClass::Circle, _) | (_, ShapeSizing::Circumradius) => return 1.0,
            (ShapeClass::Triangle, _) => 3.0,
            (ShapeClass::Pentagon, _) => 5.0,
        };
        // Regular n-gon with unit circumradius has area (n/2)·sin(2π/n).
        (PI / (n / 2.0 * (2.0 * PI / n).sin())).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapesSpec {
    pub n_per_class: usize,
    pub size: usize,
    pub variant: ShapeVariant,
    /// 3 for RGB, 1 for luminance only.
    pub channels: usize,
    /// Max center offset from the image middle, as a fraction of the side.
    pub jitter: f64,
    /// Radius range as fractions of the side; see `sizing`.
    pub min_radius: f64,
    pub max_radius: f64,
    /// Max rotation of the polygons, degrees.
    pub max_rotation: f64,
    /// Lower bound of each color channel; colors are uniform in `[min_color, 1)`.
    pub min_color: f64,
    pub sizing: ShapeSizing,
    pub seed: u64,
}

impl Default for ShapesSpec {
    fn default() -> Self {
        ShapesSpec {
            n_per_class: 100,
            size: 32,
            variant: ShapeVariant::FillColor,
            channels: 3,
            jitter: 0.08,
            min_radius: 0.39,
            max_radius: 0.42,
            max_rotation: 10.0,
            min_color: 0.2,
            sizing: ShapeSizing::Circumradius,
            seed: 0,
        }
    }
}

/// Signed distance to a shape boundary (negative inside).
fn signed_distance(class: ShapeClass, px: f64, py: f64, cx: f64, cy: f64, r: f64, rot: f64) -> f64 {
    let (dx, dy) = (px - cx, py - cy);
    let sides = match class {
        ShapeClass::Circle => return (dx * dx + dy * dy).sqrt() - r,
        ShapeClass::Triangle => 3,
        ShapeClass::Pentagon => 5,
    };
    // Regular polygon with a vertex pointing up; the apothem is r·cos(π/n).
    let apothem = r * (PI / sides as f64).cos();
    (0..sides)
        .map(|k| {
            let a = PI / 2.0 + rot + (2.0 * k as f64 + 1.0) * PI / sides as f64;
            // y grows downward, so the outward normal's y is negated.
            dx * a.cos() - dy * a.sin() - apothem
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn render(spec: &ShapesSpec, class: ShapeClass, rng: &mut impl Rng) -> Image {
    let s = spec.size as f64;
    let mid = s / 2.0;
    let cx = mid + rng.gen_range(-spec.jitter..=spec.jitter) * s;
    let cy = mid + rng.gen_range(-spec.jitter..=spec.jitter) * s;
    let r = rng.gen_range(spec.min_radius..=spec.max_radius) * s * class.extent(spec.sizing);
    let rot = rng.gen_range(-spec.max_rotation..=spec.max_rotation).to_radians();
    let lo = spec.min_color;
    let rgb: [f64; 3] = [rng.gen_range(lo..1.0), rng.gen_range(lo..1.0), rng.gen_range(lo..1.0)];
    let color: Vec<f64> = if spec.channels == 3 {
        rgb.to_vec()
    } else {
        vec![0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]]
    };
    let half_stroke = (s / 32.0).max(0.5);
    let mut img = Image::filled(spec.channels, spec.size, spec.size, 0.0);
    for y in 0..spec.size {
        for x in 0..spec.size {
            let d = signed_distance(class, x as f64 + 0.5, y as f64 + 0.5, cx, cy, r, rot);
            let on = match spec.variant {
                ShapeVariant::FillColor => d <= 0.0,
                ShapeVariant::BorderColor => d.abs() <= half_stroke,
            };
            if on {
                for (c, &v) in color.iter().enumerate() {
                    img.set(c, y, x, v);
                }
            }
        }
    }
    img
}

/// Circles, triangles and pentagons at random position, scale and color.
/// Labels: 0 circle, 1 triangle, 2 pentagon. Ids are `0..3·n_per_class`.
pub fn gen_shapes(spec: &ShapesSpec) -> Result<Dataset> {
    if spec.size < 16 {
        return Err(Error::config(format!("shape images need size ≥ 16, got {}", spec.size)));
    }
    if spec.channels != 1 && spec.channels != 3 {
        return Err(Error::config("shape images have 1 or 3 channels"));
    }
    if !(spec.min_color > 0.0 && spec.min_color < 1.0) {
        return Err(Error::config(format!("min_color must be in (0, 1), got {}", spec.min_color)));
    }
    if !(spec.min_radius > 0.0 && spec.min_radius <= spec.max_radius && spec.max_radius * ShapeClass::Triangle.extent(spec.sizing) + spec.jitter <= 0.5 + 1e-9)
    {
        return Err(Error::config("shape radius/jitter must keep shapes inside the image"));
    }
    let mut samples = Vec::with_capacity(3 * spec.n_per_class);
    for _ in 0..spec.n_per_class {
        for class in ShapeClass::ALL {
            let id = samples.len() as u64;
            let mut rng = stream(spec.seed, &[purpose::GENERATE, id]);
            samples.push(Sample {
                id,
                payload: Payload::Image(render(spec, class, &mut rng)),
                label: class as usize,
            });
        }
    }
    Dataset::new(DatasetKind::Shapes, 3, samples)
}
