mod common;

use semimatch::checkpoint::Checkpoint;
use semimatch::data::{gen_blobs, gen_shapes, read_container, split, write_container, BlobsSpec, ShapesSpec, SplitSpec};
use semimatch::metrics::test_accuracy;
use semimatch::trainer::TrainData;
use semimatch::{Guesser, ModelConfig, TrainConfig, Trainer};

fn blobs() -> semimatch::Split {
    let ds = gen_blobs(&BlobsSpec { n_per_class: 60, seed: 4, ..BlobsSpec::default() }).unwrap();
    split(&ds, &SplitSpec { labels_per_class: 4, seed: 4, ..SplitSpec::default() }).unwrap()
}

fn model() -> ModelConfig {
    ModelConfig { hidden: vec![32], feature_dim: 16, ..ModelConfig::new(8, 3) }
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, tmi_onset: 1, ..TrainConfig::default() }
}

#[test]
fn report_csv_has_the_epoch_schema() {
    let sp = blobs();
    let data = TrainData::from_split(&sp);
    let mut t = Trainer::new(config(3), model(), &data).unwrap();
    let r = t.run(&data, Some(&sp.truth), &mut |_, _| Ok(())).unwrap();
    let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss_ce_l,loss_ce_u,loss_tmi,loss_total,test_acc,coverage,precision_all,precision_valid,harvested"
    );
    assert_eq!(lines.count(), 3);
    assert_eq!(r.final_accuracy, Some(test_accuracy(t.ema(), &sp.test).unwrap()));
}

#[test]
fn checkpoint_file_resumes_the_same_run() {
    let sp = blobs();
    let data = TrainData::from_split(&sp);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");

    let mut straight = Trainer::new(config(4), model(), &data).unwrap();
    let full = straight.run(&data, Some(&sp.truth), &mut |_, _| Ok(())).unwrap();

    let mut first = Trainer::new(config(4), model(), &data).unwrap();
    for _ in 0..2 {
        first.train_epoch(&data, Some(&sp.truth), &mut |_| {}).unwrap();
    }
    Checkpoint::of(&first).save(&path).unwrap();
    let mut resumed = Checkpoint::load(&path).unwrap().into_trainer(&data).unwrap();
    let tail = resumed.run(&data, Some(&sp.truth), &mut |_, _| Ok(())).unwrap();

    assert_eq!(tail.records[..], full.records[2..]);
    assert_eq!(resumed.model(), straight.model());
    assert_eq!(tail.batch_hash, full.batch_hash);
}

#[test]
fn container_round_trips_a_generated_dataset() {
    let ds = gen_shapes(&ShapesSpec { n_per_class: 3, size: 16, seed: 2, ..ShapesSpec::default() }).unwrap();
    let mut bytes = Vec::new();
    write_container(&mut bytes, &ds).unwrap();
    assert_eq!(read_container(bytes.as_slice()).unwrap(), ds);
    bytes.truncate(bytes.len() - 3);
    assert!(read_container(bytes.as_slice()).is_err());
}

#[test]
fn supervised_baseline_sees_the_same_batches_on_shapes() {
    let sp = common::shapes_split(9);
    let data = TrainData::from_split(&sp);
    let base = TrainConfig { epochs: 1, ..common::shapes_config(9) };
    let hashes: Vec<String> = [base.clone(), base.supervised(), TrainConfig { guesser: Guesser::Confidence, ..base }]
        .into_iter()
        .map(|cfg| {
            let mut t = Trainer::new(cfg, common::shapes_model(), &data).unwrap();
            t.run(&data, None, &mut |_, _| Ok(())).unwrap().batch_hash
        })
        .collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]), "{hashes:?}");
}
