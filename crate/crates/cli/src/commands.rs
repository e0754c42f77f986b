use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use semimatch::checkpoint::Checkpoint;
use semimatch::data::{gen_blobs, gen_shapes, write_container, BlobsSpec, ShapesSpec};
use semimatch::metrics::test_accuracy;
use semimatch::mi::MiObjective;
use semimatch::trainer::{train_unsupervised, EpochRecord, TrainData, UnsupervisedReport};
use semimatch::{Dataset, Guesser, Split, TrainConfig, TrainReport, Trainer};

use crate::config::RunConfig;
use crate::{EvalArgs, GenArgs, GenKind, RunArgs, TrainArgs, UsageError};

/// Prints a line to stdout; a closed pipe is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(k) = args.data {
        cfg.data.kind = k;
    }
    if let Some(n) = args.labels_per_class {
        cfg.split.labels_per_class = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(a) = args.alpha {
        cfg.train.alpha = a;
    }
    if let Some(t) = args.tau {
        cfg.train.tau = t;
    }
    if let Some(g) = args.guesser {
        cfg.train.guesser = g.into();
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
        cfg.unsupervised.epochs = e;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn prepare(cfg: &RunConfig) -> Result<(Dataset, Split)> {
    let ds = cfg.dataset()?;
    let sp = cfg.split(&ds)?;
    info!(
        "{} samples, {} classes: {} labeled, {} unlabeled, {} test",
        ds.len(),
        ds.classes,
        sp.labeled.len(),
        sp.unlabeled.len(),
        sp.test.len()
    );
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml()?)?;
    Ok((ds, sp))
}

fn write_report(dir: &Path, report: &TrainReport) -> Result<()> {
    report.write_csv(&dir.join("report.csv"))?;
    report.write_json(&dir.join("report.json"))?;
    Ok(())
}

/// Records of an earlier run in `dir`, for continuing its report on resume.
fn earlier_records(dir: &Path, before_epoch: usize) -> Result<Vec<EpochRecord>> {
    let path = dir.join("report.json");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let report: TrainReport = serde_json::from_slice(&fs::read(&path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(report.records.into_iter().filter(|r| r.epoch < before_epoch).collect())
}

fn run_training(cfg: &RunConfig, train: TrainConfig, dir: &Path, resume: Option<&Path>, checkpoint_every: usize) -> Result<TrainReport> {
    let (ds, sp) = prepare(cfg)?;
    let data = TrainData::from_split(&sp);
    let (mut trainer, mut records) = match resume {
        Some(p) => {
            let mut ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            // only the epoch budget may change; everything else comes from the checkpoint
            if (TrainConfig { epochs: ck.config.epochs, ..train.clone() }) != ck.config {
                warn!("run configuration differs from the checkpoint's; continuing with the checkpoint's");
            }
            ck.config.epochs = train.epochs;
            let t = ck.into_trainer(&data)?;
            info!("resuming at epoch {} (step {})", t.epoch(), t.step());
            let prior = earlier_records(dir, t.epoch())?;
            (t, prior)
        }
        None => (Trainer::new(train, cfg.model_config(&ds), &data)?, Vec::new()),
    };
    let ck_path = dir.join("checkpoint.ckpt");
    let snapshot = |t: &Trainer, records: &[EpochRecord]| -> semimatch::Result<()> {
        Checkpoint::of(t).save(&ck_path)?;
        let partial = TrainReport {
            guesser: t.config().guesser,
            records: records.to_vec(),
            final_accuracy: records.last().and_then(|r| r.test_acc),
            steps: t.step(),
            batch_hash: format!("{:016x}", t.batch_hash()),
        };
        partial.write_csv(&dir.join("report.csv"))?;
        partial.write_json(&dir.join("report.json"))
    };
    let mut seen = records.clone();
    let mut report = trainer.run(&data, Some(&sp.truth), &mut |t, r| {
        seen.push(r.clone());
        if checkpoint_every > 0 && (r.epoch + 1) % checkpoint_every == 0 {
            snapshot(t, &seen)?;
        }
        Ok(())
    })?;
    records.append(&mut report.records);
    report.records = records;
    report.final_accuracy = report.records.last().and_then(|r| r.test_acc);
    Checkpoint::of(&trainer).save(&ck_path)?;
    write_report(dir, &report)?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = resolve(&args.run)?;
    if let Some(k) = args.checkpoint_every {
        cfg.checkpoint_every = k;
    }
    let train = if args.supervised { cfg.train.supervised() } else { cfg.train.clone() };
    train.validate()?;
    cfg.train = train.clone();
    let report = run_training(&cfg, train, &cfg.out_dir, args.resume.as_deref(), cfg.checkpoint_every)?;
    say!("final accuracy: {}", fmt_opt(report.final_accuracy));
    say!("reports written to {}", cfg.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct GuesserRow<'a> {
    epoch: usize,
    guesser: &'a str,
    coverage: Option<f64>,
    precision_all: Option<f64>,
    precision_valid: Option<f64>,
    test_acc: Option<f64>,
}

pub fn compare_guessers(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    cfg.train.validate()?;
    let mut legs = Vec::new();
    for (name, guesser) in [("dtm", Guesser::Dtm), ("confidence", Guesser::Confidence)] {
        let dir = cfg.out_dir.join(name);
        let leg = RunConfig { out_dir: dir.clone(), ..cfg.clone() };
        let train = TrainConfig { guesser, ..cfg.train.clone() };
        info!("running the {name} guesser");
        legs.push((name, run_training(&leg, train, &dir, None, 0)?));
    }
    let (dtm, conf) = (&legs[0].1, &legs[1].1);
    if dtm.batch_hash != conf.batch_hash {
        bail!("paired runs saw different batches ({} vs {})", dtm.batch_hash, conf.batch_hash);
    }
    info!("both guessers consumed batch hash {}", dtm.batch_hash);

    let mut w = csv::Writer::from_path(cfg.out_dir.join("guessers.csv"))?;
    for (name, report) in &legs {
        for r in &report.records {
            w.serialize(GuesserRow {
                epoch: r.epoch,
                guesser: name,
                coverage: r.coverage,
                precision_all: r.precision_all,
                precision_valid: r.precision_valid,
                test_acc: r.test_acc,
            })?;
        }
    }
    w.flush()?;
    let last = |r: &TrainReport| r.records.last().and_then(|x| x.precision_all);
    let summary = json!({
        "batch_hash": dtm.batch_hash,
        "dtm": {"final_accuracy": dtm.final_accuracy, "final_precision_all": last(dtm)},
        "confidence": {"final_accuracy": conf.final_accuracy, "final_precision_all": last(conf)},
    });
    fs::write(cfg.out_dir.join("guessers.json"), serde_json::to_string_pretty(&summary)?)?;
    for (name, report) in &legs {
        say!(
            "{name}: final accuracy {}, final precision_all {}",
            fmt_opt(report.final_accuracy),
            fmt_opt(last(report))
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct MiRow<'a> {
    epoch: usize,
    objective: &'a str,
    loss: f64,
    aligned_acc: f64,
}

pub fn compare_mi(args: &RunArgs) -> Result<()> {
    let mut cfg = resolve(args)?;
    // the labeled part is the alignment set and must stay out of training
    cfg.split.labeled_in_unlabeled = false;
    cfg.unsupervised.validate()?;
    let (ds, sp) = prepare(&cfg)?;
    let model = cfg.model_config(&ds);
    let mut legs: Vec<(&str, UnsupervisedReport)> = Vec::new();
    for (name, objective) in [("triplet", MiObjective::Triplet), ("single-pair", MiObjective::SinglePair)] {
        info!("running the {name} objective");
        let uc = semimatch::trainer::UnsupervisedConfig { objective, ..cfg.unsupervised.clone() };
        let report = train_unsupervised(&uc, &model, &sp.unlabeled, &sp.labeled, &sp.test)?;
        fs::write(cfg.out_dir.join(format!("{name}.csv")), report.to_csv()?)?;
        legs.push((name, report));
    }
    let mut w = csv::Writer::from_path(cfg.out_dir.join("mi.csv"))?;
    for (name, report) in &legs {
        for r in &report.records {
            w.serialize(MiRow { epoch: r.epoch, objective: name, loss: r.loss, aligned_acc: r.aligned_acc })?;
        }
    }
    w.flush()?;
    let summary: serde_json::Map<String, serde_json::Value> = legs
        .iter()
        .map(|(name, r)| {
            (name.to_string(), json!({"final_loss": r.final_loss, "aligned_accuracy": r.aligned_accuracy}))
        })
        .collect();
    fs::write(cfg.out_dir.join("mi.json"), serde_json::to_string_pretty(&summary)?)?;
    for (name, r) in &legs {
        say!("{name}: final loss {}, aligned accuracy {}", fmt_opt(r.final_loss), fmt_opt(r.aligned_accuracy));
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn gen_data(args: &GenArgs) -> Result<()> {
    let ds = match args.kind {
        GenKind::Shapes => {
            let d = ShapesSpec::default();
            gen_shapes(&ShapesSpec {
                n_per_class: args.n_per_class.unwrap_or(d.n_per_class),
                size: args.size.unwrap_or(d.size),
                variant: args.variant.map_or(d.variant, Into::into),
                seed: args.seed,
                ..d
            })?
        }
        GenKind::Blobs => {
            let d = BlobsSpec::default();
            gen_blobs(&BlobsSpec {
                n_per_class: args.n_per_class.unwrap_or(d.n_per_class),
                classes: args.classes.unwrap_or(d.classes),
                dim: args.dim.unwrap_or(d.dim),
                separation: args.separation.unwrap_or(d.separation),
                seed: args.seed,
                ..d
            })?
        }
    };
    let mut bytes = Vec::new();
    write_container(&mut bytes, &ds)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    say!("samples: {}", ds.len());
    say!("classes: {} (counts {:?})", ds.classes, ds.class_counts());
    say!("input dim: {}", ds.input_dim());
    say!("fnv1a: {:016x}", fnv1a(&bytes));
    say!("written to {}", args.out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let config_path: PathBuf = match &args.config {
        Some(p) => p.clone(),
        None => args.checkpoint.parent().unwrap_or(Path::new(".")).join("config.toml"),
    };
    if !config_path.exists() {
        bail!(UsageError(format!("no run configuration at {}", config_path.display())));
    }
    let cfg = RunConfig::load(Some(&config_path))?;
    let ds = cfg.dataset()?;
    let sp = cfg.split(&ds)?;
    let data = TrainData::from_split(&sp);
    let ck = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let trainer = ck.into_trainer(&data)?;
    let acc = test_accuracy(trainer.ema(), &sp.test)?;
    say!("epochs trained: {}", trainer.epoch());
    say!("test accuracy: {acc:.4} ({} samples)", sp.test.len());
    Ok(())
}
