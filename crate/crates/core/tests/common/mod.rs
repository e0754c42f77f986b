//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numeric code; every quantity is recomputed with plain
//! loops so that a bug in the engine cannot hide in its own reference.
#![allow(dead_code)]

use std::collections::BTreeMap;

use semimatch::data::{gen_shapes, split, ShapesSpec, Split, SplitSpec};
use semimatch::{ModelConfig, TrainConfig};

pub const LOG_FLOOR: f64 = 1e-12;

/// Central difference of `f` at `x`, one coordinate at a time.
pub fn finite_difference(x: &[f64], eps: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + eps;
            let up = f(&probe);
            probe[k] = x[k] - eps;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, 1e-6)`, maximized over entries.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Joint of two prediction batches, optionally symmetrized.
pub fn joint(pa: &[Vec<f64>], pb: &[Vec<f64>], symmetrize: bool) -> Vec<Vec<f64>> {
    let c = pa[0].len();
    let n = pa.len() as f64;
    let mut p = vec![vec![0.0; c]; c];
    for (ra, rb) in pa.iter().zip(pb) {
        for i in 0..c {
            for j in 0..c {
                p[i][j] += ra[i] * rb[j];
            }
        }
    }
    let mut out = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in 0..c {
            out[i][j] = if symmetrize { (p[i][j] + p[j][i]) / (2.0 * n) } else { p[i][j] / n };
        }
    }
    out
}

pub fn mi_of_joint(p: &[Vec<f64>]) -> f64 {
    let c = p.len();
    let row: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..c).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..c {
            let ln = |v: f64| v.max(LOG_FLOOR).ln();
            total += p[i][j] * (ln(p[i][j]) - ln(row[i] * col[j]));
        }
    }
    total
}

pub fn mi(pa: &[Vec<f64>], pb: &[Vec<f64>], symmetrize: bool) -> f64 {
    mi_of_joint(&joint(pa, pb, symmetrize))
}

pub fn triplet_loss(pu: &[Vec<f64>], pw: &[Vec<f64>], ps: &[Vec<f64>]) -> f64 {
    -(mi(pu, pw, true) + mi(pu, ps, true) + mi(pw, ps, true)) / 3.0
}

/// `−(1/denom)·Σ ln p[target]` over rows with a target.
pub fn cross_entropy(p: &[Vec<f64>], targets: &[Option<usize>], denom: f64) -> f64 {
    let mut s = 0.0;
    for (row, t) in p.iter().zip(targets) {
        if let Some(c) = t {
            s += row[*c].max(LOG_FLOOR).ln();
        }
    }
    -s / denom
}

/// Brute-force template match: (cosine class, nearest class, best cosine, proxy).
pub fn dtm_match(f: &[f64], centers: &[Vec<f64>], tau: f64) -> (usize, usize, f64, Option<usize>) {
    let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut cos = Vec::new();
    let mut dist = Vec::new();
    for c in centers {
        let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = f.iter().zip(c).map(|(a, b)| a * b).sum();
        cos.push(if fnorm > 0.0 && cnorm > 0.0 { dot / (fnorm * cnorm) } else { -1.0 });
        dist.push(f.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    }
    let mut ci = 0;
    let mut ni = 0;
    for k in 1..centers.len() {
        if cos[k] > cos[ci] {
            ci = k;
        }
        if dist[k] < dist[ni] {
            ni = k;
        }
    }
    let proxy = (ci == ni && cos[ci] >= tau).then_some(ci);
    (ci, ni, cos[ci], proxy)
}

/// Mean of the last `cap` vectors pushed for each class.
pub fn fifo_centers(pushes: &[(usize, Vec<f64>)], classes: usize, cap: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mine: Vec<&Vec<f64>> = pushes.iter().filter(|(k, _)| *k == c).map(|(_, v)| v).collect();
            let kept = &mine[mine.len().saturating_sub(cap)..];
            let d = kept[0].len();
            (0..d).map(|j| kept.iter().map(|v| v[j]).sum::<f64>() / kept.len() as f64).collect()
        })
        .collect()
}

/// Per-class top-K of a full sort: best confidence per (class, id), then
/// confidence descending with ties toward the smaller id.
pub fn bank_top_k(offers: &[(u64, usize, f64)], classes: usize, k: usize) -> Vec<Vec<(u64, f64)>> {
    let mut best: BTreeMap<(usize, u64), f64> = BTreeMap::new();
    for &(id, c, conf) in offers {
        let e = best.entry((c, id)).or_insert(conf);
        if conf > *e {
            *e = conf;
        }
    }
    (0..classes)
        .map(|c| {
            let mut row: Vec<(u64, f64)> = best.iter().filter(|((k, _), _)| *k == c).map(|((_, id), v)| (*id, *v)).collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(k);
            row
        })
        .collect()
}

/// Shapes split for the end-to-end protocol: 3 classes, 32×32 RGB,
/// 4 labels per class, 600 unlabeled, 150 test.
pub fn shapes_split(seed: u64) -> Split {
    let ds = gen_shapes(&ShapesSpec { n_per_class: 250, seed, ..ShapesSpec::default() }).unwrap();
    split(&ds, &SplitSpec { labels_per_class: 4, seed, ..SplitSpec::default() }).unwrap()
}

pub fn shapes_model() -> ModelConfig {
    ModelConfig::new(3 * 32 * 32, 3)
}

/// Default training settings with the end-to-end augmentation overrides.
pub fn shapes_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig { seed, epochs: 50, ..TrainConfig::default() };
    c.augment.shift = 0.0625;
    c.augment.cutout = 0.25;
    c
}
