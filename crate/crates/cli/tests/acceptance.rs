//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs sequentially with its own `main`. Pass criterion numbers to run a subset,
//! e.g. `cargo test --test acceptance -- 3 7`.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use lipforensics::corruptions::{apply_corruption, corrupt_gray_video, psnr, CorruptionKind, CorruptionSpec, SEVERITIES};
use lipforensics::eval::{
    frame_probe, occlusion_map, protocol_plain, protocol_robustness, roc_auc, score_videos, ClipModel, ForgeryModel,
    ProbeConfig,
};
use lipforensics::nn::gradcheck::{check_all, DEFAULT_INSTANCES, TOLERANCE};
use lipforensics::nn::{ExtractorConfig, Head, LipForensicsModel, ModelConfig, Normalization, ParameterStore, Partition, TcnConfig};
use lipforensics::preprocess::{
    estimate_similarity, preprocess_video, smooth_landmarks, Frame, LandmarkTrack, Point, PreprocessConfig, Similarity,
    CROP_SIZE, NUM_LANDMARKS,
};
use lipforensics::synth::{gen_forgery, gen_lipreading, plan_forgery, random_pose, render_video, DiskOptions, SynthConfig};
use lipforensics::tensor::{sigmoid, Rng, Tensor};
use lipforensics::train::{
    clip_logits, configure_finetune, finetune_forgery, prepare_clip, pretrain_lipreading, EpochLog, FinetuneMode,
    ForgerySample, LipreadingSample, TrainConfig,
};

type Check = Result<(bool, String), String>;

fn quiet(_: &EpochLog) -> lipforensics::Result<()> {
    Ok(())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Exhaustive Mann-Whitney pair count with half credit for ties.
fn pair_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                num += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        clip_length: 9,
        input_size: 88,
        extractor: ExtractorConfig { frontend_channels: 4, stage_channels: [4, 6, 8, 12], blocks_per_stage: 1 },
        tcn: TcnConfig { blocks: 2, kernel_sizes: vec![3, 5], branch_width: 4, dropout: 0.2 },
        lipread_classes: 3,
        normalization: Normalization::default(),
    }
}

fn snapshot(store: &ParameterStore, p: Partition) -> Vec<(String, Vec<u32>)> {
    store
        .ids_in(p)
        .map(|id| (store.name(id).to_string(), store.get(id).data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn c1_gradients() -> Check {
    let t = Instant::now();
    let reports = check_all(DEFAULT_INSTANCES, 1).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    let ok = reports.len() == 15
        && reports.iter().all(|r| r.passed && r.instances >= 20 && r.max_relative_error <= TOLERANCE)
        && secs <= 120.0;
    Ok((ok, format!("{} layer kinds, worst relative error {worst:.2e}, {secs:.1}s", reports.len())))
}

fn c2_freeze() -> Check {
    let mc = tiny_config();
    let (model, mut store) = LipForensicsModel::new(mc, 3).map_err(err)?;
    let samples: Vec<ForgerySample> = (0..10)
        .map(|i| ForgerySample {
            video_id: format!("v{i}"),
            source: format!("s{i}"),
            method: if i % 2 == 0 { "none".into() } else { "m".into() },
            label: (i % 2) as u8,
            frames: Rng::new(40 + i as u64).normal_tensor(&[12, 96, 96, 1], 128.0, 40.0),
        })
        .collect();
    let cfg = TrainConfig {
        batch_size: 1,
        learning_rate: 1e-3,
        max_epochs: 10,
        patience_epochs: 100,
        validation_fraction: 0.0,
        seed: 8,
        ..Default::default()
    };
    let g0 = snapshot(&store, Partition::FeatureExtractor);
    let h0 = snapshot(&store, Partition::TemporalNet);
    let mut fresh = store.clone();
    configure_finetune(&model, &mut fresh, FinetuneMode::Frozen, cfg.seed).map_err(err)?;
    let f0 = snapshot(&fresh, Partition::ForgeryHead);
    let outcome = finetune_forgery(&model, &mut store, &samples, FinetuneMode::Frozen, &cfg, &mut quiet).map_err(err)?;
    let changed = |before: &[(String, Vec<u32>)], p| {
        before.iter().zip(snapshot(&store, p)).filter(|(a, b)| a.1 != b.1).count()
    };
    let (dg, dh, df) = (
        changed(&g0, Partition::FeatureExtractor),
        changed(&h0, Partition::TemporalNet),
        changed(&f0, Partition::ForgeryHead),
    );
    let ok = outcome.steps == 100 && dg == 0 && dh > 0 && df > 0;
    Ok((ok, format!("{} steps; changed tensors: extractor {dg}, temporal {dh}, forgery head {df}", outcome.steps)))
}

fn c3_auc_oracle() -> Check {
    let mut rng = Rng::new(33);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = 2 + rng.below(60);
        let levels = 1 + rng.below(12);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let got = roc_auc(&scores, &labels).map_err(err)?.auc;
        worst = worst.max((got - pair_auc(&scores, &labels)).abs());
    }
    let perfect = roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).map_err(err)?.auc;
    let ties = roc_auc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).map_err(err)?.auc;
    let ok = worst <= 1e-12 && perfect == 1.0 && ties == 0.5;
    Ok((ok, format!("200 tied score sets, max |trapezoid - pairs| {worst:.1e}; separated {perfect}, all ties {ties}")))
}

/// Scores each clip by its mean normalized intensity; records clip lengths.
struct MeanIntensity(std::cell::RefCell<Vec<usize>>);

impl ClipModel for MeanIntensity {
    fn probabilities(&self, clips: &[Tensor]) -> lipforensics::Result<Vec<f64>> {
        self.0.borrow_mut().extend(clips.iter().map(|c| c.shape()[0]));
        Ok(clips.iter().map(|c| sigmoid(c.mean()) as f64).collect())
    }
}

fn c4_aggregation() -> Check {
    let mc = ModelConfig::desk(4);
    let video = ForgerySample {
        video_id: "v".into(),
        source: "v".into(),
        method: "m".into(),
        label: 1,
        frames: Rng::new(4).normal_tensor(&[110, 96, 96, 1], 128.0, 40.0),
    };
    let counter = MeanIntensity(Default::default());
    let a = &score_videos(&counter, &mc, std::slice::from_ref(&video)).map_err(err)?[0];
    let (model, store) = LipForensicsModel::new(mc.clone(), 5).map_err(err)?;
    let net = ForgeryModel { model: &model, store: &store, batch_size: 4 };
    let b = &score_videos(&net, &mc, std::slice::from_ref(&video)).map_err(err)?[0];
    let gap = |s: &lipforensics::eval::VideoScore| {
        (s.video_score - s.clip_scores.iter().sum::<f64>() / s.clip_scores.len() as f64).abs()
    };
    let ok = a.clip_scores.len() == 4
        && b.clip_scores.len() == 4
        && *counter.0.borrow() == vec![25; 4]
        && gap(a) <= 1e-7
        && gap(b) <= 1e-7;
    Ok((ok, format!("{} clips of 25 frames, |video - mean(clips)| {:.1e}", b.clip_scores.len(), gap(a).max(gap(b)))))
}

fn probe_video() -> Result<Vec<Frame>, String> {
    let cfg = SynthConfig { num_videos: 2, frames_per_video: 20, seed: 70, ..Default::default() };
    let plan = &plan_forgery(&cfg, "").map_err(err)?[0];
    let opts = DiskOptions { frame_size: 128, ..Default::default() };
    let pose = random_pose(&mut Rng::new(71), 128);
    Ok(render_video(plan, &pose, &opts).map_err(err)?.frames)
}

fn bitwise(a: &[Frame], b: &[Frame]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.data.iter().zip(&y.data).all(|(p, q)| p.to_bits() == q.to_bits()))
}

fn c7_corruptions() -> Check {
    let clean = probe_video()?;
    let gray: Vec<Frame> = clean
        .iter()
        .map(|f| {
            let mut g = f.clone();
            for px in g.data.chunks_mut(3) {
                let v = ((px[0] + px[1] + px[2]) / 3.0).round();
                px.fill(v);
            }
            g
        })
        .collect();
    let flat: Vec<Frame> = (0..4).map(|_| Frame::filled(64, 64, 3, 128.0)).collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for kind in CorruptionKind::ALL {
        let mut curve = Vec::new();
        for severity in SEVERITIES {
            let spec = CorruptionSpec::new(kind, severity, 5).map_err(err)?;
            let a = apply_corruption(&clean, &spec).map_err(err)?;
            let b = apply_corruption(&clean, &spec).map_err(err)?;
            if !bitwise(&a, &b) {
                ok = false;
                notes.push(format!("{kind} s{severity} not deterministic"));
            }
            curve.push(psnr(&clean, &a).map_err(err)?);
            if kind == CorruptionKind::Saturation && !bitwise(&apply_corruption(&gray, &spec).map_err(err)?, &gray) {
                ok = false;
                notes.push(format!("gray not fixed by saturation s{severity}"));
            }
            if kind == CorruptionKind::Contrast && !bitwise(&apply_corruption(&flat, &spec).map_err(err)?, &flat) {
                ok = false;
                notes.push(format!("constant 128 not fixed by contrast s{severity}"));
            }
        }
        if curve.windows(2).any(|w| w[1] > w[0]) {
            ok = false;
            notes.push(format!("{kind} PSNR rises: {curve:.2?}"));
        }
    }
    let detail = if notes.is_empty() {
        "35 settings deterministic, PSNR non-increasing per kind, fixed points hold".to_string()
    } else {
        notes.join("; ")
    };
    Ok((ok, detail))
}

struct Planted {
    calls: std::cell::Cell<usize>,
    at: (usize, usize),
}

impl ClipModel for Planted {
    fn probabilities(&self, clips: &[Tensor]) -> lipforensics::Result<Vec<f64>> {
        self.calls.set(self.calls.get() + clips.len());
        Ok(clips
            .iter()
            .map(|c| {
                let t = c.shape()[0];
                let v: f32 = (0..t).map(|f| c.data()[(f * 88 + self.at.0) * 88 + self.at.1]).sum::<f32>() / t as f32;
                sigmoid(4.0 * (v - 0.5)) as f64
            })
            .collect())
    }
}

fn c9_occlusion() -> Check {
    let model = Planted { calls: Default::default(), at: (30, 57) };
    let clip = Tensor::full(&[3, 88, 88], 2.0);
    let map = occlusion_map(&model, &clip, 40, 0.0, 64).map_err(err)?;
    let (y, x) = map.argmin();
    let reach = y.abs_diff(30).max(x.abs_diff(57));
    let in_range = map.heatmap.iter().all(|v| (0.0..=1.0).contains(v));
    let ok = map.forwards == 2401 && model.calls.get() == 2401 && reach < 40 && in_range;
    Ok((ok, format!("{} forwards, minimum at ({y}, {x}) is {reach} px from the planted pixel", map.forwards)))
}

fn crops(pose: &Similarity, seed: u64) -> Result<Tensor, String> {
    let cfg = SynthConfig { num_videos: 2, frames_per_video: 16, seed, ..Default::default() };
    let plan = &plan_forgery(&cfg, "").map_err(err)?[0];
    let opts = DiskOptions { pixel_noise: false, landmark_noise: 0.0, ..Default::default() };
    let video = render_video(plan, pose, &opts).map_err(err)?;
    preprocess_video(&video.frames, &video.landmarks, &PreprocessConfig::default()).map_err(err)
}

fn interior_mad(a: &Tensor, b: &Tensor) -> f64 {
    let (n, m) = (CROP_SIZE, 4);
    let (mut sum, mut count) = (0.0, 0usize);
    for (pa, pb) in a.data().chunks(n * n).zip(b.data().chunks(n * n)) {
        for y in m..n - m {
            for x in m..n - m {
                sum += (pa[y * n + x] - pb[y * n + x]).abs() as f64;
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn c10_geometry() -> Check {
    let truth = Similarity::from_parts(2.0, 30f64.to_radians(), 17.0, -9.0);
    let src: Vec<Point> = (0..12).map(|i| [(i * 37 % 101) as f64, (i * 53 % 89) as f64]).collect();
    let dst: Vec<Point> = src.iter().map(|&p| truth.apply(p)).collect();
    let est = estimate_similarity(&src, &dst).map_err(err)?;
    let residual = est
        .matrix()
        .iter()
        .flatten()
        .zip(truth.matrix().iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let s = Similarity::from_parts(0.9, 0.0, 0.0, 0.0);
    let [cx, cy] = s.apply([128.0, 140.0]);
    let reference = crops(&Similarity { tx: 128.0 - cx, ty: 128.0 - cy, ..s }, 1)?;
    let mut rng = Rng::new(2);
    let mut worst_mad = 0.0f64;
    for _ in 0..4 {
        worst_mad = worst_mad.max(interior_mad(&reference, &crops(&random_pose(&mut rng, 256), 1)?));
    }

    let frames: Vec<Vec<Point>> =
        (0..25).map(|f| vec![if f == 12 { [1.0, 0.0] } else { [0.0, 0.0] }; NUM_LANDMARKS]).collect();
    let smoothed = smooth_landmarks(&LandmarkTrack::from_nested(frames).map_err(err)?, 12);
    let impulse = smoothed.frame(12)[0][0];

    let ok = residual <= 1e-6 && worst_mad <= 2.0 && (impulse - 1.0 / 12.0).abs() <= 1e-15;
    Ok((
        ok,
        format!("similarity residual {residual:.1e}; crop MAD {worst_mad:.3}/255; impulse response {impulse:.6}"),
    ))
}

fn c11_determinism() -> Check {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let ra = common::desk_pipeline(a.path());
    let rb = common::desk_pipeline(b.path());
    let same = |x: &std::path::Path, y: &std::path::Path| -> Result<bool, String> {
        Ok(fs::read(x).map_err(err)? == fs::read(y).map_err(err)?)
    };
    let checks = [
        ("pretrained checkpoint", same(&ra.pretrained, &rb.pretrained)?),
        ("checkpoint", same(&ra.checkpoint, &rb.checkpoint)?),
        ("report", same(&ra.report, &rb.report)?),
        ("test manifest", same(&ra.test_manifest, &rb.test_manifest)?),
    ];
    let differing: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = if differing.is_empty() {
        "synth, preprocess, pretrain, finetune and eval reproduce byte for byte".to_string()
    } else {
        format!("differs: {}", differing.join(", "))
    };
    Ok((differing.is_empty(), detail))
}

fn c12_shapes() -> Check {
    let mc = ModelConfig::full(500);
    let (model, store) = LipForensicsModel::new(mc, 12).map_err(err)?;
    let mut rng = Rng::new(13);
    let mut ok = true;
    let mut seen = Vec::new();
    for t in [5, 10, 15, 20, 25, 30] {
        let clip = rng.normal_tensor(&[t, 88, 88, 1], 0.0, 1.0);
        let out = model.infer(&store, &[clip], Head::Forgery).map_err(err)?;
        ok &= out.len() == 1 && out[0].len() == 1 && out[0][0].is_finite();
        seen.push(format!("T={t}:{}", out[0].len()));
    }
    Ok((ok, format!("full model, logits per clip {}", seen.join(" "))))
}

/// Toy pretraining plus the jitter forgery corpus shared by the trained-model criteria.
struct Trained {
    model: LipForensicsModel,
    pretrained: ParameterStore,
    pretrain_accuracy: f64,
    pretrain_epochs: usize,
    held_out_words: Vec<LipreadingSample>,
}

const PRETRAIN_EPOCHS: usize = 10;
const FINETUNE_EPOCHS: usize = 10;

fn pretrain() -> Result<Trained, String> {
    let lip = gen_lipreading(&SynthConfig { num_videos: 200, frames_per_video: 25, vocab: 4, seed: 1, ..Default::default() })
        .map_err(err)?;
    let held_out_words =
        gen_lipreading(&SynthConfig { num_videos: 80, frames_per_video: 25, vocab: 4, seed: 101, ..Default::default() })
            .map_err(err)?;
    let (model, mut store) = LipForensicsModel::new(ModelConfig::desk(4), 7).map_err(err)?;
    let cfg = TrainConfig {
        batch_size: 8,
        learning_rate: 1e-3,
        max_epochs: PRETRAIN_EPOCHS,
        validation_fraction: 0.0,
        seed: 11,
        ..Default::default()
    };
    let outcome = pretrain_lipreading(&model, &mut store, &lip, &cfg, &mut quiet).map_err(err)?;
    let pretrain_accuracy = outcome.history.iter().filter_map(|e| e.train_accuracy).fold(0.0, f64::max);
    Ok(Trained { model, pretrained: store, pretrain_accuracy, pretrain_epochs: outcome.history.len(), held_out_words })
}

fn word_accuracy(t: &Trained, shuffle: Option<u64>) -> Result<f64, String> {
    let mc = t.model.config();
    let mut clips = Vec::new();
    for (i, s) in t.held_out_words.iter().enumerate() {
        let clip = prepare_clip(&s.frames, 0, mc, None).map_err(err)?;
        clips.push(match shuffle {
            None => clip,
            Some(seed) => {
                let (n, plane) = (clip.shape()[0], mc.input_size * mc.input_size);
                let mut order: Vec<usize> = (0..n).collect();
                Rng::new(seed).substream(&[i as u64]).shuffle(&mut order);
                let data = order.iter().flat_map(|&f| clip.data()[f * plane..(f + 1) * plane].to_vec()).collect();
                Tensor::new(clip.shape().to_vec(), data).map_err(err)?
            }
        });
    }
    let logits = clip_logits(&t.model, &t.pretrained, &clips, Head::Lipread, 16).map_err(err)?;
    let correct = logits
        .iter()
        .zip(&t.held_out_words)
        .filter(|(l, s)| l.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|m| m.0) == Some(s.label))
        .count();
    Ok(correct as f64 / clips.len() as f64)
}

fn forgery_corpus(strength: f64) -> Result<(Vec<ForgerySample>, Vec<ForgerySample>), String> {
    let train =
        gen_forgery(&SynthConfig { num_videos: 400, frames_per_video: 40, artefact_strength: strength, seed: 2, ..Default::default() })
            .map_err(err)?;
    let test =
        gen_forgery(&SynthConfig { num_videos: 100, frames_per_video: 110, artefact_strength: strength, seed: 3, ..Default::default() })
            .map_err(err)?;
    Ok((train, test))
}

fn finetune(t: &Trained, train: &[ForgerySample]) -> Result<ParameterStore, String> {
    let mut store = t.pretrained.clone();
    let cfg = TrainConfig {
        batch_size: 8,
        learning_rate: 1e-3,
        max_epochs: FINETUNE_EPOCHS,
        seed: 12,
        ..Default::default()
    };
    finetune_forgery(&t.model, &mut store, train, FinetuneMode::Frozen, &cfg, &mut quiet).map_err(err)?;
    Ok(store)
}

fn held_out_auc(t: &Trained, store: &ParameterStore, test: &[ForgerySample]) -> Result<f64, String> {
    let scorer = ForgeryModel { model: &t.model, store, batch_size: 16 };
    protocol_plain(&scorer, t.model.config(), test).map_err(err)?.auc.ok_or_else(|| "single-class test set".to_string())
}

fn truncated(v: &ForgerySample, frames: usize) -> Result<ForgerySample, String> {
    let s = v.frames.shape();
    let n = frames * s[1] * s[2] * s[3];
    let data = v.frames.data()[..n].to_vec();
    Ok(ForgerySample { frames: Tensor::new(vec![frames, s[1], s[2], s[3]], data).map_err(err)?, ..v.clone() })
}

fn c8_robustness(t: &Trained, store: &ParameterStore, test: &[ForgerySample]) -> Check {
    let reals = test.iter().filter(|v| v.label == 0).take(6);
    let fakes = test.iter().filter(|v| v.label == 1).take(6);
    let videos = reals.chain(fakes).map(|v| truncated(v, 25)).collect::<Result<Vec<_>, _>>()?;
    let scorer = ForgeryModel { model: &t.model, store, batch_size: 16 };
    let r = protocol_robustness(&scorer, t.model.config(), &videos, 9, &corrupt_gray_video).map_err(err)?;
    let mut ok = r.cells.len() == 35 && r.kind_means.len() == 7 && r.clean.is_finite();
    for (k, km) in r.kind_means.iter().enumerate() {
        let cells = &r.cells[5 * k..5 * k + 5];
        ok &= cells.iter().all(|c| c.kind == km.kind) && cells.iter().map(|c| c.severity).eq(SEVERITIES);
        ok &= km.auc == cells.iter().map(|c| c.auc).sum::<f64>() / 5.0;
    }
    ok &= r.average == r.kind_means.iter().map(|k| k.auc).sum::<f64>() / 7.0;
    Ok((
        ok,
        format!(
            "clean + {} cells + {} kind means + average; clean {:.3}, average {:.3}",
            r.cells.len(),
            r.kind_means.len(),
            r.clean,
            r.average
        ),
    ))
}

const ALL: [usize; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected: Vec<usize> = if wanted.is_empty() { ALL.to_vec() } else { wanted };
    let on = |n: usize| selected.contains(&n);
    let started = Instant::now();
    let mut results: Vec<(String, Check)> = Vec::new();
    let mut record = |name: String, check: Check| {
        let line = match &check {
            Ok((true, d)) => format!("{name}: PASS {d}"),
            Ok((false, d)) => format!("{name}: FAIL {d}"),
            Err(e) => format!("{name}: FAIL error: {e}"),
        };
        println!("{line}");
        results.push((name, check));
    };

    type Simple = fn() -> Check;
    let simple: [(usize, Simple); 9] = [
        (1, c1_gradients),
        (2, c2_freeze),
        (3, c3_auc_oracle),
        (4, c4_aggregation),
        (7, c7_corruptions),
        (9, c9_occlusion),
        (10, c10_geometry),
        (11, c11_determinism),
        (12, c12_shapes),
    ];
    for (n, f) in simple {
        if on(n) {
            record(format!("criterion {n}"), f());
        }
    }

    if [5, 6, 8].iter().any(|&n| on(n)) {
        match pretrain() {
            Err(e) => {
                for n in [5, 6, 8].into_iter().filter(|&n| on(n)) {
                    record(format!("criterion {n}"), Err(format!("pretraining failed: {e}")));
                }
            }
            Ok(t) => trained_criteria(&t, &on, &mut record),
        }
    }

    let failed = results.iter().filter(|r| !matches!(r.1, Ok((true, _)))).count();
    println!(
        "acceptance: {} of {} checks passed in {:.0}s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn trained_criteria(t: &Trained, on: &dyn Fn(usize) -> bool, record: &mut dyn FnMut(String, Check)) {
    record(
        "pretraining".into(),
        Ok((
            t.pretrain_accuracy >= 0.9,
            format!("best train accuracy {:.3} within {} epochs (4 words, 200 clips)", t.pretrain_accuracy, t.pretrain_epochs),
        )),
    );
    record(
        "frame-order ablation".into(),
        (|| {
            let ordered = word_accuracy(t, None)?;
            let shuffled = word_accuracy(t, Some(77))?;
            let chance = 0.25;
            let ok = (shuffled - chance).abs() < (ordered - chance).abs() && shuffled < ordered;
            Ok((ok, format!("held-out word accuracy {ordered:.3} ordered, {shuffled:.3} shuffled (chance {chance})")))
        })(),
    );

    let jitter = forgery_corpus(1.0).and_then(|(train, test)| Ok((finetune(t, &train)?, train, test)));
    let (store, train, test) = match jitter {
        Ok(v) => v,
        Err(e) => {
            for n in [5, 6, 8].into_iter().filter(|&n| on(n)) {
                record(format!("criterion {n}"), Err(e.clone()));
            }
            return;
        }
    };
    let auc = held_out_auc(t, &store, &test);
    if on(5) {
        let started = Instant::now();
        let check = auc.clone().and_then(|a| {
            let (train0, test0) = forgery_corpus(0.0)?;
            let store0 = finetune(t, &train0)?;
            let a0 = held_out_auc(t, &store0, &test0)?;
            let ok = a >= 0.95 && (0.45..=0.55).contains(&a0);
            Ok((ok, format!("AUC {a:.4} at strength 1, {a0:.4} at strength 0 (null run {:.0}s)", started.elapsed().as_secs_f64())))
        });
        record("criterion 5".into(), check);
    }
    if on(6) {
        let check = auc.clone().and_then(|a| {
            let probe = frame_probe(&train, &test, &ProbeConfig::default()).map_err(err)?;
            let ok = probe.frame_auc <= 0.6 && a >= 0.95 && a - probe.frame_auc >= 0.3;
            Ok((
                ok,
                format!(
                    "frame probe AUC {:.4} (video mean {:.4}), temporal model {a:.4}, gap {:.4}",
                    probe.frame_auc,
                    probe.video_auc,
                    a - probe.frame_auc
                ),
            ))
        });
        record("criterion 6".into(), check);
    }
    if on(8) {
        record("criterion 8".into(), c8_robustness(t, &store, &test));
    }
}
