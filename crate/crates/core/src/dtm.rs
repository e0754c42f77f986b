//! Deformable template matching.
//!
//! Each class keeps a bounded FIFO queue of detached feature vectors from
//! weakly augmented labeled (and harvested) samples. The template center of
//! a class is the mean of its queue. An unlabeled feature receives a proxy
//! label only when the cosine-nearest and the Euclidean-nearest centers
//! agree and the cosine similarity reaches the threshold.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cosine threshold for accepting a match.
pub const DEFAULT_TAU: f64 = 0.85;

/// Queue length per class: five times the labeled samples per class.
pub fn pool_capacity(labels_per_class: usize) -> usize {
    5 * labels_per_class
}

/// Class index, or ignored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProxyLabel(Option<usize>);

impl ProxyLabel {
    pub const IGNORED: ProxyLabel = ProxyLabel(None);

    pub fn class(c: usize) -> Self {
        ProxyLabel(Some(c))
    }

    pub fn get(self) -> Option<usize> {
        self.0
    }

    pub fn is_ignored(self) -> bool {
        self.0.is_none()
    }

    /// Signed encoding: the class index, or −1.
    pub fn value(self) -> i64 {
        self.0.map_or(-1, |c| c as i64)
    }
}

impl fmt::Display for ProxyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Result of matching one feature against the template centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    /// Class with the largest cosine similarity.
    pub cosine_class: usize,
    /// Class with the smallest Euclidean distance.
    pub nearest_class: usize,
    /// Cosine similarity to `cosine_class`.
    pub similarity: f64,
}

impl Match {
    pub fn proxy(&self, tau: f64) -> ProxyLabel {
        if self.cosine_class == self.nearest_class && self.similarity >= tau {
            ProxyLabel::class(self.cosine_class)
        } else {
            ProxyLabel::IGNORED
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Read-only snapshot of the per-class template centers.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateCenters {
    centers: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl TemplateCenters {
    pub fn new(centers: Vec<Vec<f64>>) -> Self {
        let norms = centers.iter().map(|c| norm(c)).collect();
        TemplateCenters { centers, norms }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    pub fn match_feature(&self, f: &[f64]) -> Match {
        let fnorm = norm(f);
        let mut best_cos = (0, f64::NEG_INFINITY);
        let mut best_dist = (0, f64::INFINITY);
        for (i, (c, &cnorm)) in self.centers.iter().zip(&self.norms).enumerate() {
            let mut dot = 0.0;
            let mut dist2 = 0.0;
            for (a, b) in f.iter().zip(c) {
                dot += a * b;
                dist2 += (a - b) * (a - b);
            }
            let sim = if fnorm > 0.0 && cnorm > 0.0 { dot / (fnorm * cnorm) } else { -1.0 };
            if sim > best_cos.1 {
                best_cos = (i, sim);
            }
            if dist2 < best_dist.1 {
                best_dist = (i, dist2);
            }
        }
        Match {
            cosine_class: best_cos.0,
            nearest_class: best_dist.0,
            similarity: best_cos.1,
        }
    }

    pub fn assign_proxy(&self, f: &[f64], tau: f64) -> ProxyLabel {
        self.match_feature(f).proxy(tau)
    }
}

/// Per-class bounded FIFO queues of features with lazily refreshed centers.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePool {
    dim: usize,
    capacity: usize,
    queues: Vec<VecDeque<Vec<f64>>>,
    centers: Vec<Vec<f64>>,
    dirty: Vec<bool>,
}

impl FeaturePool {
    pub fn new(classes: usize, dim: usize, capacity: usize) -> Result<Self> {
        if classes == 0 || dim == 0 || capacity == 0 {
            return Err(Error::config(format!(
                "feature pool needs classes, dim and capacity ≥ 1 (got {classes}, {dim}, {capacity})"
            )));
        }
        Ok(FeaturePool {
            dim,
            capacity,
            queues: vec![VecDeque::with_capacity(capacity); classes],
            centers: vec![vec![0.0; dim]; classes],
            dirty: vec![true; classes],
        })
    }

    pub fn classes(&self) -> usize {
        self.queues.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn queue(&self, class: usize) -> &VecDeque<Vec<f64>> {
        &self.queues[class]
    }

    pub fn is_warm(&self) -> bool {
        self.queues.iter().all(|q| !q.is_empty())
    }

    pub fn push(&mut self, class: usize, feature: &[f64]) -> Result<()> {
        if class >= self.queues.len() {
            return Err(Error::contract(format!("class {class} out of range for {} classes", self.queues.len())));
        }
        if feature.len() != self.dim {
            return Err(Error::contract(format!("feature has {} entries, pool expects {}", feature.len(), self.dim)));
        }
        let q = &mut self.queues[class];
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(feature.to_vec());
        self.dirty[class] = true;
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        for (class, q) in self.queues.iter().enumerate() {
            if !self.dirty[class] {
                continue;
            }
            if q.is_empty() {
                return Err(Error::PoolNotWarmed(class));
            }
            let c = &mut self.centers[class];
            c.iter_mut().for_each(|v| *v = 0.0);
            for f in q {
                for (acc, v) in c.iter_mut().zip(f) {
                    *acc += v;
                }
            }
            let n = q.len() as f64;
            c.iter_mut().for_each(|v| *v /= n);
            self.dirty[class] = false;
        }
        Ok(())
    }

    /// Mean of each class queue. Fails if any queue is empty.
    pub fn centers(&mut self) -> Result<&[Vec<f64>]> {
        self.refresh()?;
        Ok(&self.centers)
    }

    pub fn snapshot(&mut self) -> Result<TemplateCenters> {
        self.refresh()?;
        Ok(TemplateCenters::new(self.centers.clone()))
    }

    pub fn match_feature(&mut self, f: &[f64]) -> Result<Match> {
        Ok(self.snapshot()?.match_feature(f))
    }

    pub fn assign_proxy(&mut self, f: &[f64], tau: f64) -> Result<ProxyLabel> {
        Ok(self.match_feature(f)?.proxy(tau))
    }

    /// Rebuilds a pool from stored queue contents (oldest first).
    pub fn from_queues(dim: usize, capacity: usize, queues: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut pool = FeaturePool::new(queues.len(), dim, capacity)?;
        for (class, q) in queues.into_iter().enumerate() {
            for f in q {
                pool.push(class, &f)?;
            }
        }
        Ok(pool)
    }
}
