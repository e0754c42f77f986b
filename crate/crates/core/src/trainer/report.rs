use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Guesser;
use crate::error::Result;
use crate::metrics::ClusterMap;
use crate::mi::MiObjective;

/// Per-epoch metrics. Losses are means over the epoch's steps; the proxy
/// statistics cover every unlabeled sample visited in the epoch and are
/// empty when no ground truth was supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_ce_l: f64,
    pub loss_ce_u: f64,
    pub loss_tmi: f64,
    pub loss_total: f64,
    pub test_acc: Option<f64>,
    pub coverage: Option<f64>,
    pub precision_all: Option<f64>,
    pub precision_valid: Option<f64>,
    /// Samples harvested from the memory bank at the end of this epoch.
    pub harvested: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub guesser: Guesser,
    pub records: Vec<EpochRecord>,
    /// EMA test accuracy after the last epoch.
    pub final_accuracy: Option<f64>,
    pub steps: u64,
    /// Hex FNV-1a hash of every batch's sample ids.
    pub batch_hash: String,
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

impl TrainReport {
    /// One header line plus one row per epoch.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        if self.records.is_empty() {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "epoch", "loss_ce_l", "loss_ce_u", "loss_tmi", "loss_total", "test_acc", "coverage",
                "precision_all", "precision_valid", "harvested",
            ])?;
            return Ok(w.into_inner().map_err(|e| e.into_error())?);
        }
        csv_bytes(&self.records)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv()?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedRecord {
    pub epoch: usize,
    pub loss: f64,
    pub aligned_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedReport {
    pub objective: MiObjective,
    pub records: Vec<UnsupervisedRecord>,
    /// Mean training loss of the last epoch.
    pub final_loss: Option<f64>,
    pub aligned_accuracy: Option<f64>,
    pub cluster_map: Option<ClusterMap>,
}

impl UnsupervisedReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        if self.records.is_empty() {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["epoch", "loss", "aligned_acc"])?;
            return Ok(w.into_inner().map_err(|e| e.into_error())?);
        }
        csv_bytes(&self.records)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv()?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}
