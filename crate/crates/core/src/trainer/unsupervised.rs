//! Label-free training with a mutual-information objective, evaluated by
//! aligning predicted clusters to classes on a held-out labeled set.

use std::collections::HashSet;

use log::info;

use super::config::{ema_decay_at, UnsupervisedConfig};
use super::report::{UnsupervisedRecord, UnsupervisedReport};
use super::{augmented, shuffled, view};
use crate::autodiff::{Graph, Tensor};
use crate::data::{Sample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::metrics::{align_clusters, aligned_accuracy, predict_classes};
use crate::mi::{single_pair_mi_loss, triplet_mi_loss, MiObjective};
use crate::model::{EmaState, Mlp, ModelConfig};
use crate::rng::purpose;

/// Trains on `unlabeled` only. After every epoch the EMA model's clusters
/// are mapped to classes by majority vote over `held_out`, and the aligned
/// accuracy is measured on `test` (or on `held_out` when `test` is empty).
pub fn train_unsupervised(
    config: &UnsupervisedConfig,
    model_config: &ModelConfig,
    unlabeled: &[UnlabeledSample],
    held_out: &[Sample],
    test: &[Sample],
) -> Result<UnsupervisedReport> {
    config.validate()?;
    if unlabeled.len() < 2 {
        return Err(Error::config("unsupervised training needs at least two samples"));
    }
    if held_out.is_empty() {
        return Err(Error::config("cluster alignment needs held-out labeled samples"));
    }
    let train_ids: HashSet<u64> = unlabeled.iter().map(|s| s.id).collect();
    if let Some(s) = held_out.iter().find(|s| train_ids.contains(&s.id)) {
        return Err(Error::contract(format!("held-out sample {} is also a training sample", s.id)));
    }
    let mut mc = model_config.clone();
    mc.seed = config.seed;
    let classes = mc.classes;
    let mut model = Mlp::new(mc)?;
    let mut ema = EmaState::new(&model, config.ema_decay)?;
    let mut velocity: Vec<Vec<f64>> = model.params().map(|p| vec![0.0; p.numel()]).collect();
    let width = model.config().input_dim;
    let eval_set = if test.is_empty() { held_out } else { test };
    let held_truth: Vec<usize> = held_out.iter().map(|s| s.label).collect();
    let eval_truth: Vec<usize> = eval_set.iter().map(|s| s.label).collect();

    let mut records = Vec::with_capacity(config.epochs);
    let mut map = None;
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        let order = shuffled(unlabeled.len(), config.seed, &[purpose::SHUFFLE_UNLABELED, epoch as u64]);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let rows = chunk.len();
            let mut x = Vec::with_capacity(3 * rows * width);
            for &i in chunk {
                x.extend_from_slice(unlabeled[i].payload.values());
            }
            for strong in [false, true] {
                let tag = if strong { view::STRONG } else { view::WEAK };
                for &i in chunk {
                    let s = &unlabeled[i];
                    let v = augmented(&config.augment, config.seed, [step, view::UNLABELED, s.id, tag], &s.payload, strong);
                    x.extend_from_slice(v.values());
                }
            }
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let xv = g.constant(Tensor::from_vec(vec![3 * rows, width], x)?);
            let out = model.forward(&mut g, &bound, xv)?;
            let pu = g.slice_rows(out.probs, 0, rows)?;
            let pw = g.slice_rows(out.probs, rows, 2 * rows)?;
            let ps = g.slice_rows(out.probs, 2 * rows, 3 * rows)?;
            let loss = match config.objective {
                MiObjective::Triplet => triplet_mi_loss(&mut g, pu, pw, ps, config.mi)?,
                MiObjective::SinglePair => single_pair_mi_loss(&mut g, pu, ps, config.mi)?,
            };
            let value = g.item(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite("unsupervised loss"));
            }
            g.backward(loss)?;
            model.absorb_grads(&g, &bound);
            for (p, v) in model.params_mut().zip(velocity.iter_mut()) {
                let (values, grad) = p.values_and_grad_mut();
                for ((w, gr), vel) in values.iter_mut().zip(grad.iter_mut()).zip(v.iter_mut()) {
                    *vel = config.momentum * *vel + *gr;
                    *w -= config.lr * *vel;
                    *gr = 0.0;
                }
            }
            ema.update_with_decay(&model, ema_decay_at(config.ema_decay, config.ema_warmup, step as usize));
            loss_sum += value;
            batches += 1;
            step += 1;
        }
        let clusters = predict_classes(&ema, held_out)?;
        let m = align_clusters(&clusters, &held_truth, classes, classes)?;
        let eval_clusters = predict_classes(&ema, eval_set)?;
        let acc = aligned_accuracy(&eval_clusters, &eval_truth, &m);
        let loss = loss_sum / batches.max(1) as f64;
        info!("{:?} epoch {} loss {:.5} aligned_acc {:.4}", config.objective, epoch, loss, acc);
        records.push(UnsupervisedRecord { epoch, loss, aligned_acc: acc });
        map = Some(m);
    }
    Ok(UnsupervisedReport {
        objective: config.objective,
        final_loss: records.last().map(|r| r.loss),
        aligned_accuracy: records.last().map(|r| r.aligned_acc),
        records,
        cluster_map: map,
    })
}
