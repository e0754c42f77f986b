//! Datasets: in-memory samples, generators, IDX ingestion, a binary
//! container format, and labeled/unlabeled/test splitting.

mod blobs;
mod container;
pub mod idx;
mod shapes;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blobs::{gen_blobs, BlobsSpec};
pub use container::{read_container, write_container};
pub use shapes::{gen_shapes, ShapeClass, ShapeSizing, ShapesSpec, ShapeVariant};
pub use split::{split, Split, SplitSpec, UnlabeledTruth};

/// Channel-major (`C × H × W`) image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "image",
                format!("{}×{}×{} needs {} values, got {}", channels, height, width, channels * height * width, data.len()),
            ));
        }
        Ok(Image { channels, height, width, data })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }
}

/// Sample contents: a flat feature vector or a small image.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Vector(Vec<f64>),
    Image(Image),
}

impl Payload {
    /// Flattened values fed to the model.
    pub fn values(&self) -> &[f64] {
        match self {
            Payload::Vector(v) => v,
            Payload::Image(img) => &img.data,
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    pub fn shape_key(&self) -> (u8, usize, usize, usize) {
        match self {
            Payload::Vector(v) => (0, v.len(), 0, 0),
            Payload::Image(i) => (1, i.channels, i.height, i.width),
        }
    }
}

/// A labeled sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub payload: Payload,
    pub label: usize,
}

/// A sample as the trainer sees it when its label is hidden.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSample {
    pub id: u64,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Shapes,
    Blobs,
    IdxImage,
}

impl DatasetKind {
    fn tag(self) -> u8 {
        match self {
            DatasetKind::Shapes => 0,
            DatasetKind::Blobs => 1,
            DatasetKind::IdxImage => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => DatasetKind::Shapes,
            1 => DatasetKind::Blobs,
            2 => DatasetKind::IdxImage,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Checks unique ids, label range and uniform payload shape.
    pub fn new(kind: DatasetKind, classes: usize, samples: Vec<Sample>) -> Result<Self> {
        let mut ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("duplicate sample ids"));
        }
        if let Some(s) = samples.iter().find(|s| s.label >= classes) {
            return Err(Error::contract(format!("sample {} has label {} ≥ {}", s.id, s.label, classes)));
        }
        if let Some(first) = samples.first() {
            let key = first.payload.shape_key();
            if samples.iter().any(|s| s.payload.shape_key() != key) {
                return Err(Error::contract("payload dimensions differ between samples"));
            }
        }
        Ok(Dataset { kind, classes, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.payload.len())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}
