use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{gen_blobs, split, BlobsSpec, SplitSpec};

fn blobs_split(seed: u64) -> Split {
    let ds = gen_blobs(&BlobsSpec {
        n_per_class: 40,
        classes: 3,
        dim: 6,
        separation: 6.0,
        std: 1.0,
        seed,
    })
    .unwrap();
    split(&ds, &SplitSpec { labels_per_class: 4, seed, ..SplitSpec::default() }).unwrap()
}

fn small_model() -> ModelConfig {
    ModelConfig {
        hidden: vec![16],
        feature_dim: 8,
        ..ModelConfig::new(6, 3)
    }
}

fn quick(guesser: Guesser) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        tmi_onset: 1,
        batch_size: 4,
        mu: 3,
        guesser,
        ..TrainConfig::default()
    }
}

#[test]
fn confidence_rule_examples() {
    assert_eq!(assign_by_confidence(&[0.97, 0.01, 0.02], 0.95), ProxyLabel::class(0));
    assert_eq!(assign_by_confidence(&[1.0 / 3.0; 3], 0.34), ProxyLabel::IGNORED);
    assert_eq!(assign_by_confidence(&[0.2, 0.8], 0.8), ProxyLabel::class(1));
}

#[test]
fn confidence_rule_matches_direct_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let c = rng.gen_range(2..7);
        let raw: Vec<f64> = (0..c).map(|_| rng.gen::<f64>().powi(3)).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let thr = rng.gen_range(0.3..1.0);
        let mut best = 0;
        for i in 0..c {
            if p[i] > p[best] {
                best = i;
            }
        }
        let expect = if p[best] >= thr { ProxyLabel::class(best) } else { ProxyLabel::IGNORED };
        assert_eq!(assign_by_confidence(&p, thr), expect);
    }
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let sp = blobs_split(1);
    let data = TrainData::from_split(&sp);
    let cfg = TrainConfig { epochs: 0, ..quick(Guesser::Dtm) };
    let mut t = Trainer::new(cfg, small_model(), &data).unwrap();
    let init = t.model().clone();
    let report = t.run(&data, Some(&sp.truth), &mut |_, _| Ok(())).unwrap();
    assert!(report.records.is_empty());
    assert_eq!(t.model(), &init);
    assert_eq!(report.to_csv().unwrap().iter().filter(|&&b| b == b'\n').count(), 1);
}

#[test]
fn same_seed_gives_identical_reports() {
    let sp = blobs_split(2);
    let data = TrainData::from_split(&sp);
    let a = train(&quick(Guesser::Dtm), &small_model(), &data, Some(&sp.truth)).unwrap();
    let b = train(&quick(Guesser::Dtm), &small_model(), &data, Some(&sp.truth)).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(a.records.len(), 3);
    assert!(a.records.iter().enumerate().all(|(i, r)| r.epoch == i));
    let c = train(&TrainConfig { seed: 9, ..quick(Guesser::Dtm) }, &small_model(), &data, Some(&sp.truth)).unwrap();
    assert_ne!(a.to_csv().unwrap(), c.to_csv().unwrap());
}

#[test]
fn guessers_see_the_same_batches() {
    let sp = blobs_split(3);
    let data = TrainData::from_split(&sp);
    let a = train(&quick(Guesser::Dtm), &small_model(), &data, None).unwrap();
    let b = train(&quick(Guesser::Confidence), &small_model(), &data, None).unwrap();
    let c = train(&quick(Guesser::Dtm).supervised(), &small_model(), &data, None).unwrap();
    assert_eq!(a.batch_hash, b.batch_hash);
    assert_eq!(a.batch_hash, c.batch_hash);
    assert!(a.records[0].coverage.is_none());
}

#[test]
fn degenerate_config_matches_labeled_only_run() {
    let sp = blobs_split(4);
    let data = TrainData::from_split(&sp);
    let degenerate = TrainConfig { alpha: 0.0, guesser: Guesser::None, ..quick(Guesser::None) };
    let mut a = Trainer::new(degenerate.clone(), small_model(), &data).unwrap();
    let mut b = Trainer::new(degenerate.supervised(), small_model(), &data).unwrap();
    let mut la = Vec::new();
    let mut lb = Vec::new();
    for _ in 0..2 {
        a.train_epoch(&data, None, &mut |o| la.push((o.total, o.ce_unlabeled, o.tmi))).unwrap();
        b.train_epoch(&data, None, &mut |o| lb.push((o.total, o.ce_unlabeled, o.tmi))).unwrap();
    }
    assert_eq!(la.len(), lb.len());
    for (x, y) in la.iter().zip(&lb) {
        assert!((x.0 - y.0).abs() <= 1e-12, "{x:?} vs {y:?}");
        assert_eq!((x.1, x.2), (0.0, 0.0));
    }
}

#[test]
fn bank_harvest_reaches_the_pool() {
    let sp = blobs_split(5);
    let data = TrainData::from_split(&sp);
    let mut t = Trainer::new(quick(Guesser::Dtm), small_model(), &data).unwrap();
    let r = t.train_epoch(&data, Some(&sp.truth), &mut |_| {}).unwrap();
    let k = memory_bank::capacity(sp.labeled.len(), 3);
    assert!(r.harvested > 0 && r.harvested <= 3 * k);
    assert_eq!(t.harvested().len(), r.harvested);
    assert!(t.bank().is_empty());
    assert!(t.pool().is_warm());
    let s = r.coverage.unwrap();
    assert!((0.0..=1.0).contains(&s));
}

#[test]
fn config_violations_are_rejected() {
    let sp = blobs_split(6);
    let data = TrainData::from_split(&sp);
    for bad in [
        TrainConfig { alpha: -0.1, ..TrainConfig::default() },
        TrainConfig { tau: 1.0, ..TrainConfig::default() },
        TrainConfig { mu: 0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(Trainer::new(bad, small_model(), &data), Err(Error::Config(_))));
    }
}

#[test]
fn empty_labeled_batch_is_a_contract_violation() {
    let aug = AugmentConfig::default();
    let u = UnlabeledSample { id: 1, payload: Payload::Vector(vec![0.0; 6]) };
    assert!(matches!(StepViews::build(&aug, 0, 0, &[], &[&u]), Err(Error::Contract(_))));
}

#[test]
fn cosine_schedule_decays_from_lr() {
    let c = TrainConfig { lr_schedule: LrSchedule::Cosine, ..TrainConfig::default() };
    assert_eq!(c.lr_at(0, 100), c.lr);
    assert!(c.lr_at(100, 100) < c.lr_at(50, 100));
    assert!((c.lr_at(100, 100) - c.lr * (7.0 * std::f64::consts::PI / 16.0).cos()).abs() < 1e-15);
}
