//! Semi-supervised training loop.
//!
//! Each step forwards the labeled weak/strong views and the unlabeled
//! original/weak/strong triple in one batch, refreshes the feature pool
//! with labeled weak-view features, assigns proxy labels to the unlabeled
//! weak views, and minimizes
//! `CE(labeled strong) + CE(unlabeled strong vs proxies) + α·L_tmi`.
//! Top-confidence unlabeled samples are collected in a memory bank and fed
//! to the pool during the following epoch.

mod config;
pub mod losses;
mod report;
mod unsupervised;

use std::collections::HashMap;

use log::{debug, info};
use rand::seq::SliceRandom;

use crate::augment::AugmentConfig;
use crate::autodiff::kernels::argmax;
use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{Payload, Sample, Split, UnlabeledSample, UnlabeledTruth};
use crate::dtm::{pool_capacity, FeaturePool, ProxyLabel};
use crate::error::{Error, Result};
use crate::memory_bank::{self, Harvested, MemoryBank};
use crate::metrics::{proxy_stats, test_accuracy};
use crate::model::{EmaState, Mlp, ModelConfig};
use crate::rng::{purpose, stream};

pub use config::{Guesser, LrSchedule, TrainConfig, UnlabeledNorm, UnsupervisedConfig};
pub use losses::{cross_entropy, loss_terms, LossSettings, LossTerms, ViewProbs};
pub use report::{EpochRecord, TrainReport, UnsupervisedRecord, UnsupervisedReport};
pub use unsupervised::train_unsupervised;

pub(crate) use config::ema_decay_at;

/// View tags mixed into augmentation streams.
pub(crate) mod view {
    pub const LABELED: u64 = 0;
    pub const UNLABELED: u64 = 1;
    pub const HARVEST: u64 = 2;
    pub const WARMUP: u64 = 3;
    pub const WEAK: u64 = 0;
    pub const STRONG: u64 = 1;
}

/// Proxy label from the arg-max of `p` when its probability reaches
/// `threshold`.
pub fn assign_by_confidence(p: &[f64], threshold: f64) -> ProxyLabel {
    let c = argmax(p);
    if p[c] >= threshold {
        ProxyLabel::class(c)
    } else {
        ProxyLabel::IGNORED
    }
}

/// Borrowed inputs of a run. Unlabeled samples carry no label.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub labeled: &'a [Sample],
    pub unlabeled: &'a [UnlabeledSample],
    pub test: &'a [Sample],
}

impl<'a> TrainData<'a> {
    pub fn from_split(split: &'a Split) -> Self {
        TrainData {
            labeled: &split.labeled,
            unlabeled: &split.unlabeled,
            test: &split.test,
        }
    }
}

pub(crate) fn augmented(aug: &AugmentConfig, seed: u64, key: [u64; 4], payload: &Payload, strong: bool) -> Payload {
    let mut rng = stream(seed, &[purpose::AUGMENT, key[0], key[1], key[2], key[3]]);
    if strong {
        aug.strong(payload, &mut rng)
    } else {
        aug.weak(payload, &mut rng)
    }
}

/// Flattened augmented views of one step, row-major per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct StepViews {
    pub width: usize,
    pub labels: Vec<usize>,
    pub labeled_weak: Vec<f64>,
    pub labeled_strong: Vec<f64>,
    pub unlabeled_ids: Vec<u64>,
    pub unlabeled: Vec<f64>,
    pub unlabeled_weak: Vec<f64>,
    pub unlabeled_strong: Vec<f64>,
}

impl StepViews {
    /// Views for global step `step`; each `(step, role, sample, view)` gets
    /// its own random stream.
    pub fn build(
        aug: &AugmentConfig,
        seed: u64,
        step: u64,
        labeled: &[&Sample],
        unlabeled: &[&UnlabeledSample],
    ) -> Result<Self> {
        let width = labeled
            .first()
            .map(|s| s.payload.len())
            .ok_or_else(|| Error::contract("empty labeled batch"))?;
        let mut v = StepViews {
            width,
            labels: Vec::with_capacity(labeled.len()),
            labeled_weak: Vec::with_capacity(labeled.len() * width),
            labeled_strong: Vec::with_capacity(labeled.len() * width),
            unlabeled_ids: Vec::with_capacity(unlabeled.len()),
            unlabeled: Vec::with_capacity(unlabeled.len() * width),
            unlabeled_weak: Vec::with_capacity(unlabeled.len() * width),
            unlabeled_strong: Vec::with_capacity(unlabeled.len() * width),
        };
        let check = |p: &Payload| {
            if p.len() == width {
                Ok(())
            } else {
                Err(Error::contract(format!("payload width {} in a batch of width {}", p.len(), width)))
            }
        };
        for s in labeled {
            check(&s.payload)?;
            v.labels.push(s.label);
            let w = augmented(aug, seed, [step, view::LABELED, s.id, view::WEAK], &s.payload, false);
            let st = augmented(aug, seed, [step, view::LABELED, s.id, view::STRONG], &s.payload, true);
            v.labeled_weak.extend_from_slice(w.values());
            v.labeled_strong.extend_from_slice(st.values());
        }
        for s in unlabeled {
            check(&s.payload)?;
            v.unlabeled_ids.push(s.id);
            v.unlabeled.extend_from_slice(s.payload.values());
            let w = augmented(aug, seed, [step, view::UNLABELED, s.id, view::WEAK], &s.payload, false);
            let st = augmented(aug, seed, [step, view::UNLABELED, s.id, view::STRONG], &s.payload, true);
            v.unlabeled_weak.extend_from_slice(w.values());
            v.unlabeled_strong.extend_from_slice(st.values());
        }
        Ok(v)
    }

    pub fn labeled_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn unlabeled_rows(&self) -> usize {
        self.unlabeled_ids.len()
    }
}

/// Graph nodes produced by forwarding a step's views.
#[derive(Clone, Copy, Debug)]
pub struct ViewNodes {
    /// Features of the labeled weak views; `None` in labeled-only steps.
    pub labeled_weak_features: Option<Var>,
    pub unlabeled_weak_features: Option<Var>,
    pub probs: ViewProbs,
    /// Weak-view unlabeled predictions (already part of `probs`).
    pub unlabeled_weak_probs: Option<Var>,
}

/// Forwards the views in one batch and slices the outputs per view. With
/// `labeled_only` just the labeled strong views are forwarded.
pub fn forward_views(
    g: &mut Graph,
    model: &Mlp,
    bound: &crate::model::BoundParams,
    views: &StepViews,
    labeled_only: bool,
) -> Result<ViewNodes> {
    let b = views.labeled_rows();
    let u = if labeled_only { 0 } else { views.unlabeled_rows() };
    if labeled_only {
        let x = g.constant(Tensor::from_vec(vec![b, views.width], views.labeled_strong.clone())?);
        let out = model.forward(g, bound, x)?;
        return Ok(ViewNodes {
            labeled_weak_features: None,
            unlabeled_weak_features: None,
            probs: ViewProbs {
                labeled_strong: out.probs,
                unlabeled: None,
            },
            unlabeled_weak_probs: None,
        });
    }
    let rows = 2 * b + 3 * u;
    let mut data = Vec::with_capacity(rows * views.width);
    for part in [
        &views.labeled_weak,
        &views.labeled_strong,
        &views.unlabeled,
        &views.unlabeled_weak,
        &views.unlabeled_strong,
    ] {
        data.extend_from_slice(part);
    }
    let x = g.constant(Tensor::from_vec(vec![rows, views.width], data)?);
    let out = model.forward(g, bound, x)?;
    let lw_f = g.slice_rows(out.features, 0, b)?;
    let ls_p = g.slice_rows(out.probs, b, 2 * b)?;
    let unlabeled = if u > 0 {
        let o = 2 * b;
        let pu = g.slice_rows(out.probs, o, o + u)?;
        let pw = g.slice_rows(out.probs, o + u, o + 2 * u)?;
        let ps = g.slice_rows(out.probs, o + 2 * u, o + 3 * u)?;
        let fw = g.slice_rows(out.features, o + u, o + 2 * u)?;
        Some((pu, pw, ps, fw))
    } else {
        None
    };
    Ok(ViewNodes {
        labeled_weak_features: Some(lw_f),
        unlabeled_weak_features: unlabeled.map(|t| t.3),
        probs: ViewProbs {
            labeled_strong: ls_p,
            unlabeled: unlabeled.map(|(pu, pw, ps, _)| (pu, pw, ps)),
        },
        unlabeled_weak_probs: unlabeled.map(|t| t.1),
    })
}

/// Losses and proxy labels of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub step: u64,
    pub ce_labeled: f64,
    pub ce_unlabeled: f64,
    /// Unweighted mutual-information loss; 0 when inactive.
    pub tmi: f64,
    pub total: f64,
    pub proxies: Vec<ProxyLabel>,
}

/// Mutable training state: model, EMA shadow, pool, bank and counters.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    model: Mlp,
    ema: EmaState,
    velocity: Vec<Vec<f64>>,
    pool: FeaturePool,
    bank: MemoryBank,
    harvested: Vec<Harvested>,
    harvest_cursor: usize,
    epoch: usize,
    step: u64,
    total_steps: usize,
    batch_hash: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, v: u64) -> u64 {
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Indices `0..n` shuffled by the stream `(seed, key…)`.
pub(crate) fn shuffled(n: usize, seed: u64, key: &[u64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, key));
    idx
}

impl Trainer {
    /// Fresh state. The model is initialized from `config.seed`, which
    /// overrides `model_config.seed`.
    pub fn new(config: TrainConfig, mut model_config: ModelConfig, data: &TrainData<'_>) -> Result<Self> {
        config.validate()?;
        model_config.seed = config.seed;
        let model = Mlp::new(model_config)?;
        Self::with_model(config, model, data)
    }

    /// State around an existing model.
    pub fn with_model(config: TrainConfig, model: Mlp, data: &TrainData<'_>) -> Result<Self> {
        config.validate()?;
        let classes = model.config().classes;
        if data.labeled.is_empty() {
            return Err(Error::config("no labeled samples"));
        }
        if let Some(s) = data.labeled.iter().chain(data.test).find(|s| s.label >= classes) {
            return Err(Error::config(format!("sample {} has label {} but the model has {} classes", s.id, s.label, classes)));
        }
        let per_class = (data.labeled.len() / classes).max(1);
        let capacity = config.pool_capacity.unwrap_or_else(|| pool_capacity(per_class));
        let k = config.bank_k.unwrap_or_else(|| memory_bank::capacity(data.labeled.len(), classes).max(1));
        let feature_dim = model.config().feature_dim;
        let ema = EmaState::new(&model, config.ema_decay)?;
        let velocity = model.params().map(|p| vec![0.0; p.numel()]).collect();
        let steps = steps_per_epoch(&config, data);
        Ok(Trainer {
            total_steps: steps * config.epochs,
            pool: FeaturePool::new(classes, feature_dim, capacity)?,
            bank: MemoryBank::new(classes, k),
            config,
            model,
            ema,
            velocity,
            harvested: Vec::new(),
            harvest_cursor: 0,
            epoch: 0,
            step: 0,
            batch_hash: FNV_OFFSET,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn ema(&self) -> &EmaState {
        &self.ema
    }

    pub fn pool(&self) -> &FeaturePool {
        &self.pool
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    /// Samples harvested at the end of the previous epoch.
    pub fn harvested(&self) -> &[Harvested] {
        &self.harvested
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// FNV-1a hash over every batch's sample ids so far.
    pub fn batch_hash(&self) -> u64 {
        self.batch_hash
    }

    pub(crate) fn parts(&self) -> TrainerPartsRef<'_> {
        TrainerPartsRef {
            config: &self.config,
            model: &self.model,
            ema: &self.ema,
            velocity: &self.velocity,
            pool: &self.pool,
            harvested: &self.harvested,
            epoch: self.epoch,
            step: self.step,
            batch_hash: self.batch_hash,
        }
    }

    pub(crate) fn from_parts(parts: TrainerParts, data: &TrainData<'_>) -> Result<Self> {
        let mut t = Self::with_model(parts.config, parts.model, data)?;
        if parts.velocity.len() != t.velocity.len()
            || parts.velocity.iter().zip(&t.velocity).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        if parts.pool.classes() != t.pool.classes() || parts.pool.dim() != t.pool.dim() {
            return Err(Error::Checkpoint("feature pool does not match the model".into()));
        }
        t.ema = parts.ema;
        t.velocity = parts.velocity;
        t.pool = parts.pool;
        t.harvested = parts.harvested;
        t.epoch = parts.epoch;
        t.step = parts.step;
        t.batch_hash = parts.batch_hash;
        Ok(t)
    }

    fn uses_pool(&self) -> bool {
        self.config.guesser == Guesser::Dtm && !self.config.labeled_only
    }

    /// Pushes weak-view features of every labeled sample into the pool.
    pub fn warm_pool(&mut self, labeled: &[Sample]) -> Result<()> {
        let aug = &self.config.augment;
        let seed = self.config.seed;
        let width = self.model.config().input_dim;
        for chunk in labeled.chunks(256) {
            let mut x = Vec::with_capacity(chunk.len() * width);
            for s in chunk {
                let w = augmented(aug, seed, [self.epoch as u64, view::WARMUP, s.id, view::WEAK], &s.payload, false);
                x.extend_from_slice(w.values());
            }
            let inf = self.model.infer(&x, chunk.len())?;
            for (i, s) in chunk.iter().enumerate() {
                self.pool.push(s.label, inf.feature_row(i))?;
            }
        }
        Ok(())
    }

    /// Feeds up to `n` harvested samples (weak views under the current
    /// model) into the pool, cycling through the harvest list.
    fn feed_harvest(&mut self, n: usize, by_id: &HashMap<u64, &UnlabeledSample>) -> Result<()> {
        if self.harvested.is_empty() || n == 0 {
            return Ok(());
        }
        let take = n.min(self.harvested.len());
        let width = self.model.config().input_dim;
        let mut x = Vec::with_capacity(take * width);
        let mut classes = Vec::with_capacity(take);
        for _ in 0..take {
            let h = self.harvested[self.harvest_cursor % self.harvested.len()];
            self.harvest_cursor += 1;
            let s = by_id
                .get(&h.sample_id)
                .ok_or_else(|| Error::contract(format!("harvested id {} is not in the unlabeled set", h.sample_id)))?;
            let w = augmented(&self.config.augment, self.config.seed, [self.step, view::HARVEST, s.id, view::WEAK], &s.payload, false);
            x.extend_from_slice(w.values());
            classes.push(h.class);
        }
        let inf = self.model.infer(&x, take)?;
        for (i, &c) in classes.iter().enumerate() {
            self.pool.push(c, inf.feature_row(i))?;
        }
        Ok(())
    }

    /// One optimization step on prepared views.
    pub fn train_step(&mut self, views: &StepViews) -> Result<StepOutput> {
        let cfg = &self.config;
        let classes = self.model.config().classes;
        let mut g = Graph::new();
        let bound = self.model.bind(&mut g);
        let nodes = forward_views(&mut g, &self.model, &bound, views, cfg.labeled_only)?;

        if self.uses_pool() {
            if let Some(f) = nodes.labeled_weak_features {
                let dim = self.pool.dim();
                for (row, &label) in g.values(f).chunks_exact(dim).zip(&views.labels) {
                    self.pool.push(label, row)?;
                }
            }
        }

        let mut proxies = vec![ProxyLabel::IGNORED; if cfg.labeled_only { 0 } else { views.unlabeled_rows() }];
        if let (Some(pw), Some(fw)) = (nodes.unlabeled_weak_probs, nodes.unlabeled_weak_features) {
            match cfg.guesser {
                Guesser::Dtm => {
                    let centers = self.pool.snapshot()?;
                    for (p, f) in proxies.iter_mut().zip(g.values(fw).chunks_exact(self.pool.dim())) {
                        *p = centers.assign_proxy(f, cfg.tau);
                    }
                }
                Guesser::Confidence => {
                    for (p, row) in proxies.iter_mut().zip(g.values(pw).chunks_exact(classes)) {
                        *p = assign_by_confidence(row, cfg.confidence_threshold);
                    }
                }
                Guesser::None => {}
            }
            if cfg.harvest_in_loss && !self.harvested.is_empty() {
                let fixed: HashMap<u64, usize> = self.harvested.iter().map(|h| (h.sample_id, h.class)).collect();
                for (p, id) in proxies.iter_mut().zip(&views.unlabeled_ids) {
                    if p.is_ignored() {
                        if let Some(&c) = fixed.get(id) {
                            *p = ProxyLabel::class(c);
                        }
                    }
                }
            }
        }

        let mi_active = self.epoch >= cfg.tmi_onset;
        let settings = LossSettings {
            alpha: if mi_active { cfg.alpha } else { 0.0 },
            norm: cfg.unlabeled_norm,
            mi: cfg.mi,
        };
        let terms = loss_terms(&mut g, nodes.probs, &views.labels, &proxies, settings)?;
        let (ce_labeled, ce_unlabeled, tmi, total) = terms.values(&g);
        if !total.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        g.backward(terms.total)?;
        self.model.absorb_grads(&g, &bound);

        let lr = cfg.lr_at(self.step as usize, self.total_steps);
        let momentum = cfg.momentum;
        for (p, v) in self.model.params_mut().zip(self.velocity.iter_mut()) {
            let (values, grad) = p.values_and_grad_mut();
            for ((w, gr), vel) in values.iter_mut().zip(grad.iter_mut()).zip(v.iter_mut()) {
                *vel = momentum * *vel + *gr;
                *w -= lr * *vel;
                *gr = 0.0;
            }
        }
        let decay = ema_decay_at(cfg.ema_decay, cfg.ema_warmup, self.step as usize);
        self.ema.update_with_decay(&self.model, decay);

        if self.uses_pool() && cfg.memory_bank {
            if let Some(pw) = nodes.unlabeled_weak_probs {
                for (row, &id) in g.values(pw).chunks_exact(classes).zip(&views.unlabeled_ids) {
                    let c = argmax(row);
                    self.bank.offer(id, c, row[c])?;
                }
            }
        }

        let out = StepOutput {
            step: self.step,
            ce_labeled,
            ce_unlabeled,
            tmi,
            total,
            proxies,
        };
        self.step += 1;
        Ok(out)
    }

    /// One pass over the unlabeled set. `truth` only feeds the proxy
    /// statistics; `on_step` sees every step's output.
    pub fn train_epoch(
        &mut self,
        data: &TrainData<'_>,
        truth: Option<&UnlabeledTruth>,
        on_step: &mut dyn FnMut(&StepOutput),
    ) -> Result<EpochRecord> {
        let cfg = self.config.clone();
        let epoch = self.epoch as u64;
        let b = cfg.batch_size;
        let ub = b * cfg.mu;
        let steps = steps_per_epoch(&cfg, data);
        if self.uses_pool() && !self.pool.is_warm() {
            self.warm_pool(data.labeled)?;
        }

        let mut u_order = Vec::with_capacity(steps * ub);
        let mut u_cycle = 0u64;
        while !data.unlabeled.is_empty() && u_order.len() < steps * ub {
            u_order.extend(shuffled(data.unlabeled.len(), cfg.seed, &[purpose::SHUFFLE_UNLABELED, epoch, u_cycle]));
            u_cycle += 1;
        }
        if cfg.steps_per_epoch.is_none() {
            u_order.truncate(data.unlabeled.len());
        }
        let mut l_order = Vec::with_capacity(steps * b);
        let mut cycle = 0u64;
        while l_order.len() < steps * b {
            l_order.extend(shuffled(data.labeled.len(), cfg.seed, &[purpose::SHUFFLE_LABELED, epoch, cycle]));
            cycle += 1;
        }
        if !self.harvested.is_empty() {
            let order = shuffled(self.harvested.len(), cfg.seed, &[purpose::SHUFFLE_HARVEST, epoch]);
            self.harvested = order.iter().map(|&i| self.harvested[i]).collect();
            self.harvest_cursor = 0;
        }
        let by_id: HashMap<u64, &UnlabeledSample> = if self.harvested.is_empty() {
            HashMap::new()
        } else {
            data.unlabeled.iter().map(|s| (s.id, s)).collect()
        };

        let mut sums = [0.0f64; 4];
        let mut proxies: Vec<(u64, ProxyLabel)> = Vec::with_capacity(data.unlabeled.len());
        for s in 0..steps {
            let lb: Vec<&Sample> = l_order[s * b..(s + 1) * b].iter().map(|&i| &data.labeled[i]).collect();
            let start = (s * ub).min(u_order.len());
            let end = ((s + 1) * ub).min(u_order.len());
            let ubatch: Vec<&UnlabeledSample> = u_order[start..end].iter().map(|&i| &data.unlabeled[i]).collect();
            for x in lb.iter().map(|x| x.id).chain(ubatch.iter().map(|x| x.id)) {
                self.batch_hash = fnv(self.batch_hash, x);
            }
            if self.uses_pool() {
                self.feed_harvest(b, &by_id)?;
            }
            let views = StepViews::build(&cfg.augment, cfg.seed, self.step, &lb, &ubatch)?;
            let out = self.train_step(&views)?;
            sums[0] += out.ce_labeled;
            sums[1] += out.ce_unlabeled;
            sums[2] += out.tmi;
            sums[3] += out.total;
            proxies.extend(views.unlabeled_ids.iter().copied().zip(out.proxies.iter().copied()));
            on_step(&out);
        }

        self.harvested = if self.uses_pool() && cfg.memory_bank {
            self.bank.harvest()
        } else {
            Vec::new()
        };
        let test_acc = if data.test.is_empty() {
            None
        } else {
            Some(test_accuracy(&self.ema, data.test)?)
        };
        let stats = match truth {
            Some(t) if !proxies.is_empty() => {
                let (p, y): (Vec<ProxyLabel>, Vec<usize>) = proxies
                    .iter()
                    .map(|&(id, p)| {
                        t.get(id)
                            .map(|y| (p, y))
                            .ok_or_else(|| Error::contract(format!("no truth for unlabeled id {id}")))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip();
                Some(proxy_stats(&p, &y)?)
            }
            _ => None,
        };
        let n = steps.max(1) as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            loss_ce_l: sums[0] / n,
            loss_ce_u: sums[1] / n,
            loss_tmi: sums[2] / n,
            loss_total: sums[3] / n,
            test_acc,
            coverage: stats.map(|s| s.coverage),
            precision_all: stats.map(|s| s.precision_all),
            precision_valid: stats.map(|s| s.precision_valid),
            harvested: self.harvested.len(),
        };
        info!(
            "epoch {} loss {:.4} (ce_l {:.4} ce_u {:.4} tmi {:.4}) test_acc {:?} coverage {:?} precision {:?}",
            record.epoch, record.loss_total, record.loss_ce_l, record.loss_ce_u, record.loss_tmi, record.test_acc, record.coverage, record.precision_all
        );
        debug!("batch hash after epoch {}: {:016x}", self.epoch, self.batch_hash);
        self.epoch += 1;
        Ok(record)
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn run(
        &mut self,
        data: &TrainData<'_>,
        truth: Option<&UnlabeledTruth>,
        on_epoch: &mut dyn FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<TrainReport> {
        let mut records = Vec::new();
        while self.epoch < self.config.epochs {
            let r = self.train_epoch(data, truth, &mut |_| {})?;
            on_epoch(self, &r)?;
            records.push(r);
        }
        let final_accuracy = records.last().and_then(|r| r.test_acc);
        Ok(TrainReport {
            guesser: self.config.guesser,
            records,
            final_accuracy,
            steps: self.step,
            batch_hash: format!("{:016x}", self.batch_hash),
        })
    }
}

/// Steps per epoch: one pass over the unlabeled set in batches of `μB`,
/// or over the labeled set when there is no unlabeled data.
pub fn steps_per_epoch(config: &TrainConfig, data: &TrainData<'_>) -> usize {
    if let Some(n) = config.steps_per_epoch {
        return n;
    }
    let ub = config.batch_size * config.mu;
    if data.unlabeled.is_empty() {
        data.labeled.len().div_ceil(config.batch_size)
    } else {
        data.unlabeled.len().div_ceil(ub)
    }
}

pub(crate) struct TrainerParts {
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

pub(crate) struct TrainerPartsRef<'a> {
    pub config: &'a TrainConfig,
    pub model: &'a Mlp,
    pub ema: &'a EmaState,
    pub velocity: &'a [Vec<f64>],
    pub pool: &'a FeaturePool,
    pub harvested: &'a [Harvested],
    pub epoch: usize,
    pub step: u64,
    pub batch_hash: u64,
}

/// Trains a fresh model on `data` for `config.epochs` epochs.
pub fn train(
    config: &TrainConfig,
    model_config: &ModelConfig,
    data: &TrainData<'_>,
    truth: Option<&UnlabeledTruth>,
) -> Result<TrainReport> {
    let mut t = Trainer::new(config.clone(), model_config.clone(), data)?;
    t.run(data, truth, &mut |_, _| Ok(()))
}

#[cfg(test)]
mod tests;
