use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub labels_per_class: usize,
    /// Fraction of every class held out for testing.
    pub test_fraction: f64,
    /// Keep the labeled samples in the unlabeled pool as well.
    pub labeled_in_unlabeled: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            labels_per_class: 4,
            test_fraction: 0.2,
            labeled_in_unlabeled: true,
            seed: 0,
        }
    }
}

/// True labels of unlabeled samples, kept away from the trainer and used
/// only for diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UnlabeledTruth(HashMap<u64, usize>);

impl UnlabeledTruth {
    pub fn get(&self, id: u64) -> Option<usize> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub classes: usize,
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<UnlabeledSample>,
    pub test: Vec<Sample>,
    pub truth: UnlabeledTruth,
}

/// Class-balanced labeled subset, the rest unlabeled, and a per-class
/// test hold-out.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(Error::config(format!("test fraction {} outside [0, 1)", spec.test_fraction)));
    }
    if spec.labels_per_class == 0 {
        return Err(Error::config("labels per class must be ≥ 1"));
    }
    let mut by_class: Vec<Vec<&Sample>> = vec![Vec::new(); ds.classes];
    for s in &ds.samples {
        by_class[s.label].push(s);
    }
    let mut out = Split {
        classes: ds.classes,
        labeled: Vec::new(),
        unlabeled: Vec::new(),
        test: Vec::new(),
        truth: UnlabeledTruth::default(),
    };
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut stream(spec.seed, &[purpose::SPLIT, class as u64]));
        let n_test = (members.len() as f64 * spec.test_fraction).round() as usize;
        if members.len() < n_test + spec.labels_per_class {
            return Err(Error::config(format!(
                "class {class} has {} samples; needs {} test + {} labeled",
                members.len(),
                n_test,
                spec.labels_per_class
            )));
        }
        let (test, rest) = members.split_at(n_test);
        let (labeled, unlabeled) = rest.split_at(spec.labels_per_class);
        out.test.extend(test.iter().map(|&s| s.clone()));
        out.labeled.extend(labeled.iter().map(|&s| s.clone()));
        let pool = if spec.labeled_in_unlabeled { rest } else { unlabeled };
        for &s in pool {
            out.truth.0.insert(s.id, s.label);
            out.unlabeled.push(UnlabeledSample { id: s.id, payload: s.payload.clone() });
        }
    }
    for part in [&mut out.labeled, &mut out.test] {
        part.sort_by_key(|s| s.id);
    }
    out.unlabeled.sort_by_key(|s| s.id);
    Ok(out)
}
