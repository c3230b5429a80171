//! Checks that the generated data carries the intended signal and that the
//! training machinery responds to it in the expected direction.

use apebehave::behaviour::BehaviourLabel::{self, *};
use apebehave::eval::evaluate_dataset;
use apebehave::flow::{compute_dense_flow, FlowCache, FlowEncodingConfig, FlowParams};
use apebehave::model::{Fusion, ModelConfig, RecognitionModel, Variant};
use apebehave::sampler::{plan_samples, InMemoryFrames, SamplerConfig};
use apebehave::synth::{generate_in_memory, GenConfig, SyntheticVideo};
use apebehave::train::{fit, Dataset, FitOptions, TrainConfig};

fn frames_of(videos: &[SyntheticVideo]) -> InMemoryFrames {
    let mut frames = InMemoryFrames::new();
    for v in videos {
        frames.insert(v.meta.video_id.clone(), v.frames.clone());
    }
    frames
}

#[test]
fn mean_flow_magnitude_separates_still_from_running() {
    let cfg = GenConfig { num_videos: 12, behaviours: vec![Sitting, Running, Standing], ..GenConfig::default() };
    let videos = generate_in_memory(&cfg).unwrap();
    let samples = plan_samples(videos.iter().map(|v| &v.annotation), &SamplerConfig::default()).unwrap();
    let params = FlowParams::default();
    // (video index, is running, mean magnitude inside the boxes)
    let mut points = Vec::new();
    for s in &samples {
        let vi = videos.iter().position(|v| v.meta.video_id == s.video_id).unwrap();
        let frames = &videos[vi].frames;
        let (mut sum, mut n) = (0.0f64, 0usize);
        for (f, b) in s.frames().zip(&s.bboxes) {
            let f = f as usize;
            if f + 1 >= frames.len() {
                continue;
            }
            let field = compute_dense_flow(&frames[f], &frames[f + 1], &params).unwrap();
            let mags: Vec<f32> = field.magnitude().collect();
            for y in b.ymin..b.ymax {
                for x in b.xmin..b.xmax {
                    sum += mags[(y * field.width + x) as usize] as f64;
                    n += 1;
                }
            }
        }
        points.push((vi, s.label == Running, sum / n as f64));
    }
    assert!(points.iter().any(|p| p.1) && points.iter().any(|p| !p.1));
    // nearest class mean on even videos, scored on odd ones
    let (fit_set, held_out): (Vec<&(usize, bool, f64)>, Vec<_>) = points.iter().partition(|p| p.0 % 2 == 0);
    let mean = |running: bool| {
        let v: Vec<f64> = fit_set.iter().filter(|p| p.1 == running).map(|p| p.2).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let threshold = (mean(true) + mean(false)) / 2.0;
    let acc = held_out.iter().filter(|p| (p.2 > threshold) == p.1).count() as f64 / held_out.len() as f64;
    assert!(acc > 0.95, "held-out probe accuracy {acc}");
}

#[test]
fn random_weights_score_near_chance_in_any_sample_order() {
    let cfg = GenConfig { num_videos: 9, ..GenConfig::default() };
    let videos = generate_in_memory(&cfg).unwrap();
    let samples = plan_samples(videos.iter().map(|v| &v.annotation), &SamplerConfig::default()).unwrap();
    let per_class: Vec<usize> =
        BehaviourLabel::ALL.iter().map(|&c| samples.iter().filter(|s| s.label == c).count()).collect();
    assert!(per_class.iter().all(|&n| n == per_class[0]), "unbalanced fixture {per_class:?}");
    let dir = tempfile::tempdir().unwrap();
    let cache = FlowCache::new(dir.path(), FlowParams::default(), FlowEncodingConfig::default()).unwrap();
    let mut mcfg = ModelConfig::desk(Variant::Optimised, Fusion::Late);
    mcfg.pretrained_backbone = false;
    let data = Dataset::build(samples, &frames_of(&videos), &cache, mcfg.crop_size).unwrap();
    let mut model = RecognitionModel::new(mcfg, 0).unwrap();
    let report = evaluate_dataset(&mut model, &data).unwrap();
    assert!((report.top1 - 1.0 / 9.0).abs() <= 0.08, "top1 {}", report.top1);

    let reversed: Vec<usize> = (0..data.len()).rev().collect();
    let again = evaluate_dataset(&mut model, &data.subset(&reversed)).unwrap();
    assert_eq!((again.top1, again.top3, &again.confusion), (report.top1, report.top3, &report.confusion));
    let by_id = |r: &apebehave::eval::EvalReport| {
        let mut v = r.samples.clone();
        v.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        v
    };
    assert_eq!(by_id(&again), by_id(&report));
}

#[test]
fn balanced_sampling_lifts_minority_recall() {
    // eleven walking segments for every sitting and running one
    let mut behaviours = vec![Walking; 11];
    behaviours.extend([Sitting, Running]);
    let cfg = GenConfig { num_videos: 26, behaviours, width: 64, height: 64, ..GenConfig::default() };
    let videos = generate_in_memory(&cfg).unwrap();
    let sampler = SamplerConfig { sequence_length: 8, sampling_stride: 8, crop_size: 16, ..SamplerConfig::default() };
    let samples = plan_samples(videos.iter().map(|v| &v.annotation), &sampler).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = FlowCache::new(dir.path(), FlowParams::default(), FlowEncodingConfig::default()).unwrap();
    let mcfg = ModelConfig {
        sequence_length: 8,
        backbone_width: 4,
        lstm_hidden: 32,
        classifier_hidden: 32,
        crop_size: 16,
        pretrained_backbone: false,
        ..ModelConfig::desk(Variant::Optimised, Fusion::Late)
    };
    let data = Dataset::build(samples, &frames_of(&videos), &cache, mcfg.crop_size).unwrap();
    let ids: Vec<String> = videos.iter().map(|v| v.meta.video_id.clone()).collect();
    // with this script both halves hold two sitting and two running segments
    let train_ids: Vec<String> = ids.iter().step_by(2).cloned().collect();
    let test_ids: Vec<String> = ids.iter().skip(1).step_by(2).cloned().collect();
    let train = data.for_videos(&train_ids);
    let test = data.for_videos(&test_ids);

    let minority_recall = |balanced: bool| {
        let tcfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 2,
            balanced,
            classes: vec![Walking, Sitting, Running],
            ..TrainConfig::default()
        };
        let out = fit(&mcfg, &train, None, &tcfg, &FitOptions::default()).unwrap();
        let mut model = out.last.restore_model().unwrap();
        let report = evaluate_dataset(&mut model, &test).unwrap();
        let recall = |c: BehaviourLabel| {
            let row = &report.confusion[c.index()];
            row[c.index()] as f64 / row.iter().sum::<usize>() as f64
        };
        (recall(Sitting) + recall(Running)) / 2.0
    };
    let plain = minority_recall(false);
    let balanced = minority_recall(true);
    assert!(balanced > plain, "minority recall balanced {balanced} vs unbalanced {plain}");
}
