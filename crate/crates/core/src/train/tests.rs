use super::*;
use crate::annotation::BoundingBox;
use crate::model::{Fusion, Variant};
use crate::sampler::{CropSequence, SequenceSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        sequence_length: 3,
        backbone_width: 2,
        lstm_hidden: 16,
        classifier_hidden: 8,
        crop_size: 32,
        pretrained_backbone: false,
        ..ModelConfig::desk(Variant::Optimised, Fusion::Late)
    }
}

/// Two classes whose crops differ in brightness.
fn tiny_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut samples, mut rgb, mut flow) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let label = if i % 2 == 0 { BehaviourLabel::Sitting } else { BehaviourLabel::Running };
        let base = if i % 2 == 0 { 40 } else { 200 };
        samples.push(SequenceSample {
            video_id: format!("v{}", i % 4),
            ape_id: 0,
            start_frame: i as u32 * 3,
            sequence_length: 3,
            label,
            bboxes: vec![BoundingBox::new(0, 0, 8, 8).unwrap(); 3],
        });
        let px = |c: usize, rng: &mut ChaCha8Rng| (0..3 * 32 * 32 * c).map(|_| base + rng.gen_range(0..40u8)).collect();
        rgb.push(CropSequence { len: 3, size: 32, channels: 3, pixels: px(3, &mut rng) });
        flow.push(CropSequence { len: 3, size: 32, channels: 1, pixels: px(1, &mut rng) });
    }
    Dataset::from_parts(samples, rgb, flow).unwrap()
}

fn two_class_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 4,
        epochs,
        seed: 5,
        classes: vec![BehaviourLabel::Running, BehaviourLabel::Sitting],
        ..TrainConfig::default()
    }
}

fn strip_time(h: &[EpochMetrics]) -> Vec<EpochMetrics> {
    h.iter().map(|m| EpochMetrics { seconds: 0.0, ..m.clone() }).collect()
}

#[test]
fn defaults_match_published_hyperparameters() {
    let c = TrainConfig::default();
    assert_eq!((c.learning_rate, c.momentum, c.weight_decay, c.batch_size), (1e-4, 0.9, 0.01, 9));
    assert_eq!((c.loss, c.focal_alpha, c.focal_gamma), (LossKind::Focal, 1.0, 1.0));
    assert!(c.validate().is_ok());
    assert!(TrainConfig { batch_size: 10, ..c.clone() }.validate().is_err());
    assert!(TrainConfig { learning_rate: 0.0, ..c }.validate().is_err());
}

#[test]
fn same_seed_same_history_and_resume_continues() {
    let data = tiny_data(8, 1);
    let opts = FitOptions::default();
    let a = fit(&tiny_model(), &data, Some(&data), &two_class_cfg(3), &opts).unwrap();
    let b = fit(&tiny_model(), &data, Some(&data), &two_class_cfg(3), &opts).unwrap();
    assert_eq!(strip_time(&a.history), strip_time(&b.history));
    assert_eq!(a.last.tensors, b.last.tensors);

    let first = fit(&tiny_model(), &data, Some(&data), &two_class_cfg(2), &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.safetensors");
    first.last.save(&path).unwrap();
    let resumed_from = Checkpoint::load(&path).unwrap();
    assert_eq!(resumed_from, first.last);
    let resumed = fit(
        &tiny_model(),
        &data,
        Some(&data),
        &two_class_cfg(3),
        &FitOptions { resume: Some(resumed_from), ..FitOptions::default() },
    )
    .unwrap();
    assert_eq!(resumed.history.iter().map(|m| m.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(strip_time(&resumed.history), strip_time(&a.history));
    assert_eq!(resumed.last.tensors, a.last.tensors);
}

#[test]
fn learns_a_separable_toy_problem() {
    let data = tiny_data(16, 2);
    let out = fit(&tiny_model(), &data, None, &two_class_cfg(12), &FitOptions::default()).unwrap();
    assert!(out.history.last().unwrap().train_top1 > 0.9, "{:?}", out.history);
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let data = tiny_data(4, 3);
    let out = fit(&tiny_model(), &data, None, &two_class_cfg(1), &FitOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a/b.safetensors");
    out.last.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    for ((na, ta), (nb, tb)) in out.last.tensors.iter().zip(&back.tensors) {
        assert_eq!(na, nb);
        assert!(ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert!(back.check_compatible(&tiny_model()).is_ok());
    let other = ModelConfig { num_classes: 5, ..tiny_model() };
    let err = back.check_compatible(&other).unwrap_err();
    assert!(err.to_string().contains("config mismatch"), "{err}");
    let mut model = back.restore_model().unwrap();
    assert_eq!(crate::train::checkpoint::model_tensors(&mut model), out.last.tensors);
}

#[test]
fn divergence_returns_the_last_good_checkpoint() {
    let data = tiny_data(8, 4);
    let cfg = TrainConfig { learning_rate: 1e9, ..two_class_cfg(5) };
    match fit(&tiny_model(), &data, None, &cfg, &FitOptions::default()) {
        Err(Error::Diverged { epoch, last_good: Some(ck) }) => {
            assert_eq!(ck.header.epoch, epoch - 1);
            assert!(ck.tensors.iter().all(|(_, t)| t.all_finite()));
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn pretrained_flag_requires_weights() {
    let cfg = ModelConfig { pretrained_backbone: true, ..tiny_model() };
    assert!(matches!(initial_model(&cfg, 0, None), Err(Error::Config(_))));
}

#[test]
fn metric_log_has_one_line_per_epoch() {
    let data = tiny_data(4, 6);
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("metrics.jsonl");
    fit(&tiny_model(), &data, Some(&data), &two_class_cfg(2), &FitOptions { log_path: Some(log.clone()), ..Default::default() })
        .unwrap();
    let text = std::fs::read_to_string(log).unwrap();
    let lines: Vec<EpochMetrics> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].val_top1.is_some());
}
