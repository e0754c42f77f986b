//! Accuracy, proxy-label quality and cluster-to-class alignment.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::argmax;
use crate::data::Sample;
use crate::dtm::ProxyLabel;
use crate::error::{Error, Result};
use crate::model::EmaState;

/// Quality of a set of proxy labels against the hidden truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProxyStats {
    /// Fraction of samples with a proxy label.
    pub coverage: f64,
    /// Fraction of all samples whose proxy equals the truth.
    pub precision_all: f64,
    /// Fraction of proxied samples whose proxy equals the truth (0 if none).
    pub precision_valid: f64,
}

pub fn proxy_stats(proxies: &[ProxyLabel], truths: &[usize]) -> Result<ProxyStats> {
    if proxies.len() != truths.len() {
        return Err(Error::contract(format!("{} proxies for {} truths", proxies.len(), truths.len())));
    }
    if proxies.is_empty() {
        return Err(Error::contract("proxy statistics of an empty set"));
    }
    let n = proxies.len() as f64;
    let valid = proxies.iter().filter(|p| !p.is_ignored()).count();
    let correct = proxies.iter().zip(truths).filter(|(p, &t)| p.get() == Some(t)).count();
    Ok(ProxyStats {
        coverage: valid as f64 / n,
        precision_all: correct as f64 / n,
        precision_valid: if valid == 0 { 0.0 } else { correct as f64 / valid as f64 },
    })
}

pub fn accuracy(predictions: &[usize], truths: &[usize]) -> f64 {
    let n = predictions.len().min(truths.len());
    if n == 0 {
        return 0.0;
    }
    predictions.iter().zip(truths).filter(|(p, t)| p == t).count() as f64 / n as f64
}

/// Arg-max class of each sample under the EMA shadow, batched.
pub fn predict_classes(ema: &EmaState, samples: &[Sample]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    let classes = ema.shadow().config().classes;
    for chunk in samples.chunks(256) {
        let x: Vec<f64> = chunk.iter().flat_map(|s| s.payload.values().iter().copied()).collect();
        let probs = ema.predict_eval(&x, chunk.len())?;
        out.extend(probs.chunks_exact(classes).map(argmax));
    }
    Ok(out)
}

/// Fraction of test samples whose EMA arg-max equals the label.
pub fn test_accuracy(ema: &EmaState, test: &[Sample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::contract("test accuracy of an empty set"));
    }
    let preds = predict_classes(ema, test)?;
    let truths: Vec<usize> = test.iter().map(|s| s.label).collect();
    Ok(accuracy(&preds, &truths))
}

/// Mapping from cluster index to class index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMap(pub Vec<usize>);

impl ClusterMap {
    pub fn apply(&self, cluster: usize) -> usize {
        self.0[cluster]
    }
}

fn contingency(clusters: &[usize], truths: &[usize], n_clusters: usize, n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if clusters.len() != truths.len() {
        return Err(Error::contract("cluster and truth lists differ in length"));
    }
    let mut counts = vec![vec![0usize; n_classes]; n_clusters];
    for (&c, &t) in clusters.iter().zip(truths) {
        if c >= n_clusters || t >= n_classes {
            return Err(Error::contract(format!("cluster {c} or class {t} out of range")));
        }
        counts[c][t] += 1;
    }
    Ok(counts)
}

/// Maps each cluster to the majority class of its held-out members; a
/// cluster with no members gets the overall majority class.
pub fn align_clusters(clusters: &[usize], truths: &[usize], n_clusters: usize, n_classes: usize) -> Result<ClusterMap> {
    let counts = contingency(clusters, truths, n_clusters, n_classes)?;
    let mut global = vec![0usize; n_classes];
    for &t in truths {
        global[t] += 1;
    }
    let majority = |row: &[usize]| {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    };
    let fallback = majority(&global);
    Ok(ClusterMap(
        counts
            .iter()
            .enumerate()
            .map(|(c, row)| {
                if row.iter().all(|&v| v == 0) {
                    log::warn!("cluster {c} has no held-out members; mapped to majority class {fallback}");
                    fallback
                } else {
                    majority(row)
                }
            })
            .collect(),
    ))
}

/// One-to-one alignment maximizing agreement (Hungarian assignment).
pub fn hungarian_alignment(clusters: &[usize], truths: &[usize], n: usize) -> Result<ClusterMap> {
    let counts = contingency(clusters, truths, n, n)?;
    let weights = Matrix::from_rows(counts.iter().map(|r| r.iter().map(|&v| v as i64).collect::<Vec<_>>()))
        .map_err(|e| Error::contract(format!("assignment matrix: {e:?}")))?;
    let (_, assignment) = kuhn_munkres(&weights);
    Ok(ClusterMap(assignment))
}

pub fn aligned_accuracy(clusters: &[usize], truths: &[usize], map: &ClusterMap) -> f64 {
    let mapped: Vec<usize> = clusters.iter().map(|&c| map.apply(c)).collect();
    accuracy(&mapped, truths)
}
