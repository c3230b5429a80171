//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when
//! any criterion fails. The three training experiments (9 to 11) share one
//! generated corpus; its flow images and the pretrained backbone are cached
//! under the cargo target directory so reruns skip that work.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use apebehave::annotation::{split_corpus, BoundingBox, SplitRatio, Tracklet, TrackletEntry};
use apebehave::behaviour::BehaviourLabel;
use apebehave::eval::{cross_validate, evaluate_dataset, make_folds, EvalReport};
use apebehave::flow::{compute_dense_flow, encode_flow_greyscale, FlowCache, FlowEncodingConfig, FlowParams};
use apebehave::model::{
    resnet18_imagenet_params, vgg16_imagenet_params, Fusion, ModelConfig, RecognitionModel, ResNet18, StreamInput,
    Variant,
};
use apebehave::nn::{trainable_count, Mode, Module, Tensor};
use apebehave::sampler::{plan_samples, BalancedBatches, InMemoryFrames, SamplerConfig};
use apebehave::synth::{generate_in_memory, GenConfig};
use apebehave::train::{
    cross_entropy, fit, focal_loss, focal_loss_with_grad, pretrained_backbone_cached, Dataset, FitOptions,
    PretrainConfig, TrainConfig,
};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

/// Learning rate of the end-to-end runs. The published 1e-4 fine-tunes an
/// ImageNet backbone; the reduced desk model needs a larger step.
const DESK_LR: f64 = 1e-2;
/// Epochs of each end-to-end run (criterion 9 allows up to 30).
const DESK_EPOCHS: usize = 10;
/// The pretraining comparison runs at the published learning rate, the
/// fine-tuning regime the effect was reported in.
const PRETRAIN_LR: f64 = 1e-4;
const PRETRAIN_EPOCH_CAP: usize = 30;

fn main() {
    let started = Instant::now();
    let mut shared: Option<Result<Shared, String>> = None;
    let mut failures = 0;
    for (n, name) in CRITERIA.iter().enumerate() {
        let n = n + 1;
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(n, &mut shared)))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_text(&e))));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.0}s",
        CRITERIA.len() - failures,
        CRITERIA.len(),
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

const CRITERIA: [&str; 12] = [
    "sampler oracle equivalence",
    "run-length arithmetic",
    "balanced batching",
    "focal loss",
    "classifier gradient check",
    "architecture shapes",
    "parameter ratio",
    "flow sanity",
    "end-to-end synthetic reproduction",
    "cross-validation",
    "pretraining effect",
    "wrong-prediction rendering",
];

fn run(n: usize, shared: &mut Option<Result<Shared, String>>) -> Outcome {
    match n {
        1 => sampler_oracle(),
        2 => run_arithmetic(),
        3 => balanced_batching(),
        4 => focal(),
        5 => gradient_check(),
        6 => shapes(),
        7 => parameter_ratio(),
        8 => flow_sanity(),
        9..=11 => {
            let shared = shared.get_or_insert_with(Shared::build).as_mut().map_err(|e| format!("setup failed: {e}"))?;
            match n {
                9 => end_to_end(shared),
                10 => crossval(shared),
                _ => pretraining(shared),
            }
        }
        12 => common::check_wrong_prediction_render().map(|()| "red box and label match the fixture".into()),
        _ => unreachable!(),
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sampler_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut mismatches, mut windows) = (0, 0);
    for _ in 0..500 {
        let tracklet = common::random_tracklet(&mut rng, 600);
        let cfg = common::random_sampler_config(&mut rng);
        let want = common::brute_force_windows(&tracklet, &cfg);
        windows += want.len();
        if common::library_windows(&tracklet, &cfg) != want {
            mismatches += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(mismatches == 0 && secs < 10.0, || format!("{mismatches} mismatching tracklets, {secs:.2}s"))?;
    Ok(format!("500 tracklets, {windows} windows, 0 mismatches in {secs:.2}s"))
}

fn single_run(len: u32) -> Tracklet {
    let entries = (0..len)
        .map(|f| TrackletEntry { frame_index: 100 + f, behaviour: BehaviourLabel::Walking, bbox: BoundingBox::new(0, 0, 8, 8).unwrap() })
        .collect();
    Tracklet { video_id: "v".into(), ape_id: 0, entries }
}

fn run_arithmetic() -> Outcome {
    let cfg = SamplerConfig::default();
    let mut seen = Vec::new();
    for (len, want) in [(72, 3), (80, 4), (71, 0), (20, 0)] {
        let got = common::library_windows(&single_run(len), &cfg).len();
        check(got == want, || format!("{len}-frame run gave {got} samples, want {want}"))?;
        seen.push(format!("{len}->{got}"));
    }
    Ok(seen.join(", "))
}

fn balanced_batching() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut labels = Vec::new();
    for (i, &c) in BehaviourLabel::ALL.iter().enumerate() {
        let count = if i == 0 { 200 } else { rng.gen_range(1..40) };
        labels.extend(std::iter::repeat(c).take(count));
    }
    let batches = BalancedBatches::new(&labels, &BehaviourLabel::ALL, 9, 11).map_err(|e| e.to_string())?;
    let mut total = 0;
    for epoch in 0..100 {
        for batch in batches.epoch(epoch) {
            let mut per_class = [0usize; 9];
            for &i in &batch {
                per_class[labels[i].index()] += 1;
            }
            check(per_class == [1; 9], || format!("epoch {epoch}: batch class counts {per_class:?}"))?;
            total += 1;
        }
    }
    Ok(format!("{total} batches over 100 epochs, one sample per class each"))
}

fn reference_ce(logits: &[f32], target: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let lse = max + logits.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    lse - logits[target] as f64
}

fn focal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=16);
        let logits: Vec<f32> = (0..n * 9).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..9)).collect();
        let t = Tensor::from_vec(&[n, 9], logits.clone());
        let fl = focal_loss(&t, &targets, 1.0, 0.0).map_err(|e| e.to_string())?;
        let ce = cross_entropy(&t, &targets).map_err(|e| e.to_string())?;
        let oracle = targets.iter().enumerate().map(|(i, &y)| reference_ce(&logits[i * 9..(i + 1) * 9], y)).sum::<f64>() / n as f64;
        worst = worst.max((fl - ce).abs()).max((fl - oracle).abs());
    }
    check(worst <= 1e-6, || format!("gamma=0 focal differs from cross-entropy by {worst:e}"))?;
    // true logit ln 8 against eight zeros: p_t = 8 / 16
    let mut one = vec![0.0f32; 9];
    one[2] = 8f32.ln();
    let value = focal_loss(&Tensor::from_vec(&[1, 9], one), &[2], 1.0, 1.0).map_err(|e| e.to_string())?;
    let want = 0.5 * std::f64::consts::LN_2;
    check((value - want).abs() <= 1e-7, || format!("p_t=0.5 gives {value}, want {want}"))?;
    Ok(format!("max |focal - ce| {worst:.1e} over 1000 batches; p_t=0.5 -> {value:.9}"))
}

fn tiny(variant: Variant, fusion: Fusion, seq: usize) -> ModelConfig {
    ModelConfig {
        variant,
        fusion,
        sequence_length: seq,
        backbone_width: 2,
        lstm_hidden: 16,
        classifier_hidden: 12,
        crop_size: 16,
        pretrained_backbone: false,
        ..ModelConfig::default()
    }
}

fn random_input(cfg: &ModelConfig, batch: usize, seed: u64) -> StreamInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [batch, cfg.sequence_length, cfg.crop_size, cfg.crop_size, 3];
    let mut draw = || Tensor::from_vec(&shape, (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    StreamInput { rgb: draw(), flow: draw() }
}

fn gradient_check() -> Outcome {
    let cfg = tiny(Variant::Optimised, Fusion::Late, 5);
    let mut model = RecognitionModel::new(cfg.clone(), 5).map_err(|e| e.to_string())?;
    let input = random_input(&cfg, 3, 6);
    let targets = [1usize, 4, 8];
    let loss_of = |model: &mut RecognitionModel| -> f64 {
        let logits = model.forward(&input, Mode::Train).unwrap();
        focal_loss(&logits, &targets, 1.0, 1.0).unwrap()
    };
    let logits = model.forward(&input, Mode::Train).map_err(|e| e.to_string())?;
    let (_, dlogits) = focal_loss_with_grad(&logits, &targets, 1.0, 1.0).map_err(|e| e.to_string())?;
    apebehave::nn::zero_grad(&mut model);
    model.backward(&dlogits);

    let mut names = Vec::new();
    model.visit("", &mut |name, p| {
        if name.starts_with("classifier") {
            names.push((name.to_string(), p.value.len()));
        }
    });
    let eps = 1e-2f32;
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (name, len) in &names {
        for i in 0..*len {
            let mut grad = 0.0;
            model.visit("", &mut |n, p| {
                if n == name {
                    grad = p.grad[i];
                }
            });
            nudge(&mut model, name, i, eps);
            let up = loss_of(&mut model);
            nudge(&mut model, name, i, -2.0 * eps);
            let down = loss_of(&mut model);
            nudge(&mut model, name, i, eps);
            analytic.push(grad as f64);
            numeric.push((up - down) / (2.0 * eps as f64));
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    let rel = diff / norm.max(1e-12);
    check(rel <= 1e-3, || format!("relative error {rel:.2e} over {} classifier parameters", analytic.len()))?;
    Ok(format!("relative error {rel:.2e} over {} classifier parameters", analytic.len()))
}

fn nudge(model: &mut RecognitionModel, name: &str, i: usize, delta: f32) {
    model.visit("", &mut |n, p| {
        if n == name {
            p.value.data_mut()[i] += delta;
        }
    });
}

fn shapes() -> Outcome {
    let mut runs = 0;
    for seq in [5, 10, 20, 30] {
        for (variant, fusion) in [
            (Variant::Optimised, Fusion::Late),
            (Variant::Baseline, Fusion::Late),
            (Variant::Baseline, Fusion::Convolutional),
        ] {
            let cfg = tiny(variant, fusion, seq);
            let mut model = RecognitionModel::new(cfg.clone(), 0).map_err(|e| format!("{variant:?}/{fusion:?}/{seq}: {e}"))?;
            let out = model.forward(&random_input(&cfg, 2, seq as u64), Mode::Eval).map_err(|e| e.to_string())?;
            check(out.shape() == [2, 9] && out.all_finite(), || format!("{variant:?}/{fusion:?}/{seq}: logits {:?}", out.shape()))?;
            runs += 1;
        }
        check(RecognitionModel::new(tiny(Variant::Optimised, Fusion::Convolutional, seq), 0).is_err(), || {
            "optimised with convolutional fusion was accepted".into()
        })?;
    }
    Ok(format!("{runs} configurations emit [2, 9] logits; optimised+conv rejected"))
}

fn parameter_ratio() -> Outcome {
    // instantiate the real backbone rather than trusting the closed form
    let mut backbone = ResNet18::new(64, &mut ChaCha8Rng::seed_from_u64(0));
    let resnet = trainable_count(&mut backbone) + 512 * 1000 + 1000;
    check(resnet == resnet18_imagenet_params(), || format!("instantiated {resnet} vs closed form {}", resnet18_imagenet_params()))?;
    // widely quoted sizes of the two ImageNet models
    check(resnet == 11_689_512 && vgg16_imagenet_params() == 138_357_544, || {
        format!("counts {resnet} / {} differ from the reference sizes", vgg16_imagenet_params())
    })?;
    let ratio = resnet as f64 / vgg16_imagenet_params() as f64;
    check((0.075..=0.095).contains(&ratio), || format!("ratio {ratio:.4}"))?;
    Ok(format!("ResNet-18 {resnet} / VGG-16 {} = {ratio:.4}", vgg16_imagenet_params()))
}

fn texture(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f32, f32, f32)> =
        (0..6).map(|_| (rng.gen_range(0.05..0.4), rng.gen_range(0.05..0.4), rng.gen_range(0.0..6.28))).collect();
    RgbImage::from_fn(w, h, |x, y| {
        let s: f32 = waves.iter().map(|(a, b, c)| (a * x as f32 + b * y as f32 + c).sin()).sum();
        let v = (128.0 + 20.0 * s).clamp(0.0, 255.0) as u8;
        Rgb([v, v, v])
    })
}

fn flow_sanity() -> Outcome {
    let (w, h) = (96, 72);
    let base = texture(w + 3, h, 8);
    let a = RgbImage::from_fn(w, h, |x, y| *base.get_pixel(x + 3, y));
    let b = RgbImage::from_fn(w, h, |x, y| *base.get_pixel(x, y));
    // content of `a` at x appears in `b` at x + 3
    let params = FlowParams::default();
    let field = compute_dense_flow(&a, &b, &params).map_err(|e| e.to_string())?;
    let mut dx: Vec<f32> = field.dx.clone();
    dx.sort_by(f32::total_cmp);
    let median = dx[dx.len() / 2];
    check((2.5..=3.5).contains(&median), || format!("median dx {median}"))?;
    let still = compute_dense_flow(&a, &a, &params).map_err(|e| e.to_string())?;
    let encoded = encode_flow_greyscale(&still, &FlowEncodingConfig::default());
    let mean = encoded.pixels().map(|p| p.0[0] as f64 / 255.0).sum::<f64>() / (w * h) as f64;
    check(mean < 0.02, || format!("identical frames give mean encoded magnitude {mean}"))?;
    Ok(format!("median dx {median:.3}; identical frames encode to mean {mean:.4}"))
}

/// The generated corpus and its datasets, shared by criteria 9 to 11.
struct Shared {
    data: Dataset,
    video_ids: Vec<String>,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    backbone: Vec<(String, Tensor)>,
    single_split_top1: Option<f64>,
}

impl Shared {
    fn build() -> Result<Self, String> {
        let err = |e: apebehave::error::Error| e.to_string();
        let t = Instant::now();
        let gen = GenConfig::default();
        let videos = generate_in_memory(&gen).map_err(err)?;
        let mut digest = Sha256::new();
        let mut frames = InMemoryFrames::new();
        for v in &videos {
            for f in &v.frames {
                digest.update(f.as_raw());
            }
            frames.insert(v.meta.video_id.clone(), v.frames.clone());
        }
        let fingerprint = hex::encode(&digest.finalize()[..8]);
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let cache = FlowCache::new(root.join(format!("flow-{fingerprint}")), FlowParams::default(), FlowEncodingConfig::default())
            .map_err(err)?;
        let video_ids: Vec<String> = videos.iter().map(|v| v.meta.video_id.clone()).collect();
        let samples = plan_samples(videos.iter().map(|v| &v.annotation), &SamplerConfig::default()).map_err(err)?;
        let cfg = desk(Variant::Optimised, true);
        let data = Dataset::build(samples, &frames, &cache, cfg.crop_size).map_err(err)?;
        let split = split_corpus(&video_ids, SplitRatio::default(), 0).map_err(err)?;
        let backbone = pretrained_backbone_cached(&PretrainConfig::new(cfg.backbone_width, cfg.crop_size), &root.join("pretrain"))
            .map_err(err)?;
        let counts: Vec<usize> =
            BehaviourLabel::ALL.iter().map(|&c| data.labels().iter().filter(|&&l| l == c).count()).collect();
        println!(
            "     corpus: {} videos, {} sequences, per class {counts:?}; split {}/{}/{} videos; setup {:.0}s",
            video_ids.len(),
            data.len(),
            split.train.len(),
            split.val.len(),
            split.test.len(),
            t.elapsed().as_secs_f64()
        );
        Ok(Self {
            train: data.for_videos(&split.train),
            val: data.for_videos(&split.val),
            test: data.for_videos(&split.test),
            data,
            video_ids,
            backbone,
            single_split_top1: None,
        })
    }
}

fn desk(variant: Variant, pretrained: bool) -> ModelConfig {
    ModelConfig { pretrained_backbone: pretrained, ..ModelConfig::desk(variant, Fusion::Late) }
}

fn desk_train() -> TrainConfig {
    TrainConfig { learning_rate: DESK_LR, epochs: DESK_EPOCHS, ..TrainConfig::default() }
}

fn train_and_test(shared: &Shared, variant: Variant) -> Result<(EvalReport, f64), String> {
    let t = Instant::now();
    let opts = FitOptions { pretrained: Some(shared.backbone.clone()), ..FitOptions::default() };
    let out = fit(&desk(variant, true), &shared.train, Some(&shared.val), &desk_train(), &opts).map_err(|e| e.to_string())?;
    let mut model = out.last.restore_model().map_err(|e| e.to_string())?;
    let report = evaluate_dataset(&mut model, &shared.test).map_err(|e| e.to_string())?;
    Ok((report, t.elapsed().as_secs_f64() / 60.0))
}

fn end_to_end(shared: &mut Shared) -> Outcome {
    let (opt, opt_min) = train_and_test(shared, Variant::Optimised)?;
    shared.single_split_top1 = Some(opt.top1);
    let (base, base_min) = train_and_test(shared, Variant::Baseline)?;
    let detail = format!(
        "optimised top1 {:.3} top3 {:.3} ({opt_min:.1} min), baseline top1 {:.3} ({base_min:.1} min), {} test sequences, {DESK_EPOCHS} epochs",
        opt.top1,
        opt.top3,
        base.top1,
        opt.count
    );
    check(opt.top1 >= 0.85 && opt.top3 >= 0.98 && opt.top1 > base.top1 && opt_min < 60.0, || detail.clone())?;
    Ok(detail)
}

fn crossval(shared: &mut Shared) -> Outcome {
    let ids: Vec<String> = (0..500).map(|i| format!("v{i:03}")).collect();
    let folds = make_folds(&ids, 4, 0).map_err(|e| e.to_string())?;
    let mut union: Vec<&String> = folds.iter().flat_map(|f| &f.test).collect();
    union.sort();
    union.dedup();
    check(union.len() == 500 && folds.iter().map(|f| f.test.len()).sum::<usize>() == 500, || "test folds do not partition".into())?;
    for f in &folds {
        check(f.train.len() == 375 && f.test.len() == 125 && f.train.iter().all(|v| !f.test.contains(v)), || {
            format!("fold {}: {}/{}", f.fold, f.train.len(), f.test.len())
        })?;
    }
    let single = match shared.single_split_top1 {
        Some(v) => v,
        None => train_and_test(shared, Variant::Optimised)?.0.top1,
    };
    let opts = FitOptions { pretrained: Some(shared.backbone.clone()), ..FitOptions::default() };
    let report = cross_validate(&shared.data, &shared.video_ids, 4, 0, &desk(Variant::Optimised, true), &desk_train(), &opts)
        .map_err(|e| e.to_string())?;
    let per_fold: Vec<String> = report.folds.iter().map(|f| format!("{:.3}", f.report.top1)).collect();
    let detail = format!(
        "500 videos -> 4 x 375/125; folds top1 [{}], mean {:.3} vs single split {single:.3}",
        per_fold.join(", "),
        report.mean_top1
    );
    check((report.mean_top1 - single).abs() <= 0.1, || detail.clone())?;
    Ok(detail)
}

/// Epochs until the running train accuracy first reaches 0.7, if ever.
fn epochs_to_070(shared: &Shared, pretrained: bool) -> Result<Option<usize>, String> {
    let cfg = TrainConfig { learning_rate: PRETRAIN_LR, epochs: PRETRAIN_EPOCH_CAP, ..TrainConfig::default() };
    let opts = FitOptions {
        pretrained: pretrained.then(|| shared.backbone.clone()),
        stop_at_train_top1: Some(0.7),
        ..FitOptions::default()
    };
    let out = fit(&desk(Variant::Optimised, pretrained), &shared.train, None, &cfg, &opts).map_err(|e| e.to_string())?;
    Ok(out.history.iter().find(|m| m.train_top1 >= 0.7).map(|m| m.epoch))
}

fn pretraining(shared: &mut Shared) -> Outcome {
    let with = epochs_to_070(shared, true)?;
    let without = epochs_to_070(shared, false)?;
    let show = |e: Option<usize>| e.map_or(format!(">{PRETRAIN_EPOCH_CAP}"), |e| e.to_string());
    let detail = format!("epochs to 0.7 train top1 at lr {PRETRAIN_LR}: pretrained {}, random init {}", show(with), show(without));
    let fewer = match (with, without) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    check(fewer, || detail.clone())?;
    Ok(detail)
}
