use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetKind, Payload, Sample};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobsSpec {
    pub n_per_class: usize,
    pub classes: usize,
    pub dim: usize,
    /// Minimum pairwise distance between cluster centers.
    pub separation: f64,
    /// Per-coordinate standard deviation within a cluster.
    pub std: f64,
    pub seed: u64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        BlobsSpec {
            n_per_class: 100,
            classes: 3,
            dim: 8,
            separation: 8.0,
            std: 1.0,
            seed: 0,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Rejection-samples centers in a cube, growing it until all pairs are
/// at least `separation` apart.
fn place_centers(spec: &BlobsSpec, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut half = spec.separation * (spec.classes as f64).powf(1.0 / spec.dim as f64);
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
        for _ in 0..1000 {
            let c: Vec<f64> = (0..spec.dim).map(|_| rng.gen_range(-half..=half)).collect();
            if centers.iter().all(|o| dist(o, &c) >= spec.separation) {
                centers.push(c);
                if centers.len() == spec.classes {
                    return centers;
                }
            }
        }
        half *= 1.5;
    }
}

/// Isotropic Gaussian clusters. Ids are `0..classes·n_per_class`.
pub fn gen_blobs(spec: &BlobsSpec) -> Result<Dataset> {
    if !(spec.separation > 0.0) || spec.classes == 0 || spec.dim == 0 || !(spec.std >= 0.0) {
        return Err(Error::config("blobs need separation > 0, classes ≥ 1, dim ≥ 1, std ≥ 0"));
    }
    let mut rng = stream(spec.seed, &[purpose::GENERATE, u64::MAX]);
    let centers = place_centers(spec, &mut rng);
    let mut samples = Vec::with_capacity(spec.classes * spec.n_per_class);
    for _ in 0..spec.n_per_class {
        for (label, center) in centers.iter().enumerate() {
            let id = samples.len() as u64;
            let mut rng = stream(spec.seed, &[purpose::GENERATE, id]);
            let v = center
                .iter()
                .map(|&c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + spec.std * z
                })
                .collect();
            samples.push(Sample {
                id,
                payload: Payload::Vector(v),
                label,
            });
        }
    }
    Dataset::new(DatasetKind::Blobs, spec.classes, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_separated_blobs_are_centroid_separable() {
        let spec = BlobsSpec { n_per_class: 50, classes: 4, dim: 5, separation: 20.0, ..Default::default() };
        let ds = gen_blobs(&spec).unwrap();
        let mut means = vec![vec![0.0; 5]; 4];
        for s in &ds.samples {
            for (m, v) in means[s.label].iter_mut().zip(s.payload.values()) {
                *m += v / 50.0;
            }
        }
        let correct = ds
            .samples
            .iter()
            .filter(|s| {
                let best = (0..4)
                    .min_by(|&a, &b| dist(&means[a], s.payload.values()).total_cmp(&dist(&means[b], s.payload.values())))
                    .unwrap();
                best == s.label
            })
            .count();
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn single_class_and_determinism() {
        let spec = BlobsSpec { classes: 1, n_per_class: 7, ..Default::default() };
        let ds = gen_blobs(&spec).unwrap();
        assert!(ds.samples.iter().all(|s| s.label == 0));
        assert_eq!(ds, gen_blobs(&spec).unwrap());
    }

    #[test]
    fn centers_respect_separation() {
        let spec = BlobsSpec { classes: 6, dim: 2, separation: 5.0, ..Default::default() };
        let mut rng = stream(1, &[0]);
        let c = place_centers(&spec, &mut rng);
        for i in 0..6 {
            for j in i + 1..6 {
                assert!(dist(&c[i], &c[j]) >= 5.0);
            }
        }
        assert!(gen_blobs(&BlobsSpec { separation: 0.0, ..Default::default() }).is_err());
    }
}
