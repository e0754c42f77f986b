//! Per-class top-K confidence records of unlabeled samples.
//!
//! During an epoch every unlabeled prediction is offered to the row of its
//! predicted class. A row keeps at most `K` distinct sample ids, those with
//! the highest confidence (ties broken toward the smaller id). At the epoch
//! boundary the bank is harvested and cleared.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K = ⌊labeled_count / classes⌋ · 2`.
pub fn capacity(labeled_count: usize, classes: usize) -> usize {
    (labeled_count / classes.max(1)) * 2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub sample_id: u64,
    pub confidence: f64,
}

/// A harvested record: a sample with its predicted class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harvested {
    pub sample_id: u64,
    pub class: usize,
    pub confidence: f64,
}

/// Total order used for ranking: higher confidence first, then smaller id.
fn outranks(a: &BankEntry, b: &BankEntry) -> bool {
    match a.confidence.total_cmp(&b.confidence) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.sample_id < b.sample_id,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    k: usize,
    rows: Vec<Vec<BankEntry>>,
}

impl MemoryBank {
    pub fn new(classes: usize, k: usize) -> Self {
        MemoryBank {
            k,
            rows: vec![Vec::with_capacity(k); classes],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, class: usize) -> &[BankEntry] {
        &self.rows[class]
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offer(&mut self, sample_id: u64, class: usize, confidence: f64) -> Result<()> {
        let classes = self.rows.len();
        let row = self
            .rows
            .get_mut(class)
            .ok_or_else(|| Error::contract(format!("class {class} out of range for {classes} classes")))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::contract(format!("confidence {confidence} outside [0, 1]")));
        }
        let entry = BankEntry { sample_id, confidence };
        if let Some(existing) = row.iter_mut().find(|e| e.sample_id == sample_id) {
            if confidence > existing.confidence {
                existing.confidence = confidence;
            }
            return Ok(());
        }
        if row.len() < self.k {
            row.push(entry);
            return Ok(());
        }
        let Some((weakest, _)) = row
            .iter()
            .enumerate()
            .reduce(|lo, cur| if outranks(lo.1, cur.1) { cur } else { lo })
        else {
            return Ok(());
        };
        if outranks(&entry, &row[weakest]) {
            row[weakest] = entry;
        }
        Ok(())
    }

    /// Emits every record, best first within each class, and clears the bank.
    pub fn harvest(&mut self) -> Vec<Harvested> {
        let mut out = Vec::with_capacity(self.len());
        for (class, row) in self.rows.iter_mut().enumerate() {
            row.sort_by(|a, b| if outranks(a, b) { Ordering::Less } else { Ordering::Greater });
            out.extend(row.drain(..).map(|e| Harvested {
                sample_id: e.sample_id,
                class,
                confidence: e.confidence,
            }));
        }
        out
    }
}
