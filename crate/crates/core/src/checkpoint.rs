//! Binary checkpoints of a training run.
//!
//! Layout (little-endian): magic `SMCK`, `u32` version, then length-prefixed
//! sections: the run and model configs as JSON text, counters (epoch, step,
//! batch hash), model parameters, EMA decay and shadow parameters, optimizer
//! velocity, feature-pool queues, and the harvested records. A trailing
//! FNV-1a hash of everything before it guards against corruption.
//!
//! Random streams are derived from the seed and step counters, so the seed
//! in the run config plus the counters are the complete RNG state.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::autodiff::Tensor;
use crate::dtm::FeaturePool;
use crate::error::{Error, Result};
use crate::memory_bank::Harvested;
use crate::model::{EmaState, Mlp, ModelConfig};
use crate::trainer::{TrainConfig, TrainData, Trainer, TrainerParts};

pub const MAGIC: &[u8; 4] = b"SMCK";
pub const VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Mlp,
    pub ema: EmaState,
    pub velocity: Vec<Vec<f64>>,
    pub pool: FeaturePool,
    pub harvested: Vec<Harvested>,
    pub epoch: usize,
    pub step: u64,
    pub batch_hash: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.write_u64::<LE>(v.len() as u64).unwrap();
    for &x in v {
        out.write_f64::<LE>(x).unwrap();
    }
}

fn put_tensors<'a>(out: &mut Vec<u8>, ts: impl Iterator<Item = &'a Tensor>) {
    let ts: Vec<&Tensor> = ts.collect();
    out.write_u32::<LE>(ts.len() as u32).unwrap();
    for t in ts {
        out.write_u32::<LE>(t.shape().len() as u32).unwrap();
        for &d in t.shape() {
            out.write_u64::<LE>(d as u64).unwrap();
        }
        put_f64s(out, t.values());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.write_u64::<LE>(s.len() as u64).unwrap();
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> u64 {
        self.cur.get_ref().len() as u64 - self.cur.position()
    }

    fn len(&mut self, unit: u64, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        if n.checked_mul(unit).is_none_or(|b| b > self.remaining()) {
            return Err(bad(format!("{what}: length {n} exceeds the file")));
        }
        Ok(n as usize)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|_| bad(format!("truncated at {what}")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|_| bad(format!("truncated at {what}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|_| bad(format!("truncated at {what}")))
    }

    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.len(8, what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(1, what)?;
        let mut buf = vec![0; n];
        self.cur.read_exact(&mut buf).map_err(|_| bad(format!("truncated at {what}")))?;
        String::from_utf8(buf).map_err(|_| bad(format!("{what} is not UTF-8")))
    }

    fn tensors(&mut self, what: &str) -> Result<Vec<Tensor>> {
        let n = self.u32(what)? as usize;
        let mut out = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let ndim = self.u32(what)? as usize;
            if ndim > 8 {
                return Err(bad(format!("{what}: tensor rank {ndim}")));
            }
            let shape = (0..ndim).map(|_| self.u64(what).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let values = self.f64s(what)?;
            out.push(Tensor::from_vec(shape, values).map_err(|e| bad(format!("{what}: {e}")))?);
        }
        Ok(out)
    }
}

impl Checkpoint {
    pub fn of(trainer: &Trainer) -> Self {
        let p = trainer.parts();
        Checkpoint {
            config: p.config.clone(),
            model: p.model.clone(),
            ema: p.ema.clone(),
            velocity: p.velocity.to_vec(),
            pool: p.pool.clone(),
            harvested: p.harvested.to_vec(),
            epoch: p.epoch,
            step: p.step,
            batch_hash: p.batch_hash,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(VERSION)?;
        put_str(&mut out, &serde_json::to_string(&self.config)?);
        put_str(&mut out, &serde_json::to_string(self.model.config())?);
        out.write_u64::<LE>(self.epoch as u64)?;
        out.write_u64::<LE>(self.step)?;
        out.write_u64::<LE>(self.batch_hash)?;
        put_tensors(&mut out, self.model.params());
        out.write_f64::<LE>(self.ema.decay())?;
        put_tensors(&mut out, self.ema.shadow().params());
        out.write_u32::<LE>(self.velocity.len() as u32)?;
        for v in &self.velocity {
            put_f64s(&mut out, v);
        }
        out.write_u32::<LE>(self.pool.classes() as u32)?;
        out.write_u64::<LE>(self.pool.dim() as u64)?;
        out.write_u64::<LE>(self.pool.capacity() as u64)?;
        for c in 0..self.pool.classes() {
            let q = self.pool.queue(c);
            out.write_u64::<LE>(q.len() as u64)?;
            for f in q {
                for &x in f {
                    out.write_f64::<LE>(x)?;
                }
            }
        }
        out.write_u64::<LE>(self.harvested.len() as u64)?;
        for h in &self.harvested {
            out.write_u64::<LE>(h.sample_id)?;
            out.write_u64::<LE>(h.class as u64)?;
            out.write_f64::<LE>(h.confidence)?;
        }
        let sum = fnv1a(&out);
        out.write_u64::<LE>(sum)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(bad("file too short"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { cur: Cursor::new(body) };
        r.cur.set_position(4);
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let config: TrainConfig = serde_json::from_str(&r.string("run config")?)?;
        let model_config: ModelConfig = serde_json::from_str(&r.string("model config")?)?;
        let epoch = r.u64("epoch")? as usize;
        let step = r.u64("step")?;
        let batch_hash = r.u64("batch hash")?;
        let model = Mlp::from_params(model_config.clone(), r.tensors("model parameters")?)?;
        let decay = r.f64("EMA decay")?;
        let shadow = Mlp::from_params(model_config, r.tensors("EMA parameters")?)?;
        let n = r.u32("velocity")? as usize;
        let velocity = (0..n).map(|_| r.f64s("velocity")).collect::<Result<Vec<_>>>()?;
        let classes = r.u32("pool")? as usize;
        let dim = r.u64("pool")? as usize;
        let capacity = r.u64("pool")? as usize;
        let mut queues = Vec::with_capacity(classes.min(1024));
        for _ in 0..classes {
            let len = r.u64("pool queue")? as usize;
            if len > capacity || (len * dim * 8) as u64 > r.remaining() {
                return Err(bad("pool queue length exceeds capacity or file"));
            }
            let mut q = Vec::with_capacity(len);
            for _ in 0..len {
                q.push((0..dim).map(|_| r.f64("pool feature")).collect::<Result<Vec<_>>>()?);
            }
            queues.push(q);
        }
        let pool = FeaturePool::from_queues(dim, capacity, queues).map_err(|e| bad(format!("pool: {e}")))?;
        let n = r.len(24, "harvest")?;
        let mut harvested = Vec::with_capacity(n);
        for _ in 0..n {
            harvested.push(Harvested {
                sample_id: r.u64("harvest")?,
                class: r.u64("harvest")? as usize,
                confidence: r.f64("harvest")?,
            });
        }
        if r.remaining() != 0 {
            return Err(bad(format!("{} unexpected trailing bytes", r.remaining())));
        }
        Ok(Checkpoint {
            config,
            model,
            ema: EmaState::from_shadow(shadow, decay),
            velocity,
            pool,
            harvested,
            epoch,
            step,
            batch_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Resumes training on the same data.
    pub fn into_trainer(self, data: &TrainData<'_>) -> Result<Trainer> {
        Trainer::from_parts(
            TrainerParts {
                config: self.config,
                model: self.model,
                ema: self.ema,
                velocity: self.velocity,
                pool: self.pool,
                harvested: self.harvested,
                epoch: self.epoch,
                step: self.step,
                batch_hash: self.batch_hash,
            },
            data,
        )
    }
}
