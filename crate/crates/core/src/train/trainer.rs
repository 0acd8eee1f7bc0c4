use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Head, LipForensicsModel, Mode, ModelConfig, ParameterStore, Partition};
use crate::preprocess::clip_starts;
use crate::tensor::{Rng, Tensor, TensorMap};
use crate::train::adam::Adam;
use crate::train::augment::{crop, flip_horizontal, AugmentConfig};
use crate::train::config::{FinetuneMode, TrainConfig};
use crate::train::early_stop::EarlyStopping;
use crate::train::loss::{bce_loss_f64, ce_loss_slice};
use crate::train::sampling::{oversample_epoch, split_groups, window_start};

/// A real video of a spoken word, as mouth crops `[F, H, W, 1]` in `[0, 255]`.
#[derive(Clone, Debug)]
pub struct LipreadingSample {
    pub frames: Tensor,
    pub label: usize,
}

/// A real (`label` 0) or fake (`label` 1) video as mouth crops `[F, H, W, 1]` in `[0, 255]`.
#[derive(Clone, Debug)]
pub struct ForgerySample {
    pub video_id: String,
    /// Videos sharing a source (a real video and fakes made from it) are never split across train and validation.
    pub source: String,
    pub method: String,
    pub label: u8,
    pub frames: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f32,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    /// 1-based epoch whose parameters were restored into the store.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub steps: u64,
}

/// Receives each epoch's log line as soon as the epoch finishes.
pub type EpochObserver<'a> = &'a mut dyn FnMut(&EpochLog) -> Result<()>;

/// Training-video indices for one epoch, drawn from the epoch substream.
type EpochOrder<'a> = dyn Fn(&[usize], &mut Rng) -> Result<Vec<usize>> + 'a;

/// Normalised network input `[T, S, S]` from frames `[start, start + T)` of a `[F, H, W, 1]` video.
///
/// With `augment`, the crop window is drawn uniformly and the clip flipped with
/// probability 0.5 (as enabled); otherwise the center window is used.
pub fn prepare_clip(
    frames: &Tensor,
    start: usize,
    cfg: &ModelConfig,
    augment: Option<(&mut Rng, &AugmentConfig)>,
) -> Result<Tensor> {
    let (f, h, w) = match frames.shape() {
        &[f, h, w, 1] => (f, h, w),
        s => return Err(Error::Data(format!("video frames must be [F, H, W, 1], got {s:?}"))),
    };
    let (t, s) = (cfg.clip_length, cfg.input_size);
    if start + t > f {
        return Err(Error::Data(format!("clip [{start}, {}) exceeds a {f}-frame video", start + t)));
    }
    if h < s || w < s {
        return Err(Error::Data(format!("frames {h}x{w} are smaller than the {s}x{s} network input")));
    }
    let plane = h * w;
    let window = Tensor::new(vec![t, h, w, 1], frames.data()[start * plane..(start + t) * plane].to_vec())?;
    let mut flip = false;
    let (top, left) = match augment {
        Some((rng, aug)) => {
            let top = if aug.random_crop { rng.below(h - s + 1) } else { (h - s) / 2 };
            let left = if aug.random_crop { rng.below(w - s + 1) } else { (w - s) / 2 };
            flip = aug.horizontal_flip && rng.bernoulli(0.5);
            (top, left)
        }
        None => ((h - s) / 2, (w - s) / 2),
    };
    let mut clip = crop(&window, top, left, s)?;
    if flip {
        clip = flip_horizontal(&clip)?;
    }
    let norm = cfg.normalization;
    clip.data_mut().iter_mut().for_each(|v| *v = norm.apply(*v));
    clip.reshape(vec![t, s, s])
}

fn stack(clips: &[Tensor]) -> Result<Tensor> {
    let mut shape = vec![clips.len()];
    shape.extend_from_slice(clips[0].shape());
    let mut data = Vec::with_capacity(clips.len() * clips[0].numel());
    for c in clips {
        data.extend_from_slice(c.data());
    }
    Tensor::new(shape, data)
}

/// Eval-mode logits for a list of prepared `[T, S, S]` clips, batched.
pub fn clip_logits(
    model: &LipForensicsModel,
    store: &ParameterStore,
    clips: &[Tensor],
    head: Head,
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(clips.len());
    for chunk in clips.chunks(batch_size.max(1)) {
        let mut g = Graph::new(store, Mode::Eval, 0);
        let x = g.input(stack(chunk)?);
        let y = model.forward(&mut g, x, head)?;
        let n = g.shape(y)[1];
        out.extend(g.value(y).data().chunks(n).map(|r| r.to_vec()));
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Targets<'a> {
    Classes(&'a [usize]),
    Binary(&'a [u8]),
}

impl Targets<'_> {
    fn head(&self) -> Head {
        match self {
            Targets::Classes(_) => Head::Lipread,
            Targets::Binary(_) => Head::Forgery,
        }
    }

    fn loss(&self, i: usize, logits: &[f32]) -> Result<f64> {
        match self {
            Targets::Classes(y) => ce_loss_slice(logits, y[i]),
            Targets::Binary(y) => bce_loss_f64(logits[0], y[i] as f32),
        }
    }

    fn correct(&self, i: usize, logits: &[f32]) -> bool {
        match self {
            Targets::Classes(y) => {
                let arg = logits.iter().enumerate().fold(0, |b, (j, &v)| if v > logits[b] { j } else { b });
                arg == y[i]
            }
            Targets::Binary(y) => (logits[0] >= 0.0) == (y[i] == 1),
        }
    }
}

struct Task<'a> {
    name: &'static str,
    videos: Vec<&'a Tensor>,
    groups: Vec<String>,
    targets: Targets<'a>,
}

fn validation_loss(
    model: &LipForensicsModel,
    store: &ParameterStore,
    task: &Task,
    val: &[usize],
    batch_size: usize,
) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let cfg = model.config();
    let mut clips = Vec::new();
    let mut owner = Vec::new();
    for &i in val {
        let frames = task.videos[i].shape()[0];
        for start in clip_starts(frames, cfg.clip_length, cfg.clip_length) {
            clips.push(prepare_clip(task.videos[i], start, cfg, None)?);
            owner.push(i);
        }
    }
    if clips.is_empty() {
        return Err(Error::Data(format!("validation videos are shorter than the clip length {}", cfg.clip_length)));
    }
    let logits = clip_logits(model, store, &clips, task.targets.head(), batch_size)?;
    let mut total = 0.0;
    for (l, &i) in logits.iter().zip(&owner) {
        total += task.targets.loss(i, l)?;
    }
    Ok(Some(total / clips.len() as f64))
}

fn fit(
    model: &LipForensicsModel,
    store: &mut ParameterStore,
    task: &Task,
    cfg: &TrainConfig,
    epoch_order: &EpochOrder<'_>,
    observer: EpochObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mcfg = model.config();
    let root = Rng::new(cfg.seed).substream_named(task.name);
    let (train, val) = split_groups(&task.groups, cfg.validation_fraction, &mut root.substream_named("split"));
    if train.is_empty() {
        return Err(Error::Data("no training videos left after the validation split".into()));
    }
    for &i in &train {
        if task.videos[i].shape()[0] < mcfg.clip_length {
            return Err(Error::Data(format!(
                "training video {i} has {} frames, fewer than the clip length {}",
                task.videos[i].shape()[0],
                mcfg.clip_length
            )));
        }
    }
    let head = task.targets.head();
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience_epochs, cfg.min_delta);
    let mut best: TensorMap = store.to_map();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let order = epoch_order(&train, &mut root.substream(&[1, epoch as u64]))?;
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut clips = Vec::with_capacity(batch.len());
            for (j, &i) in batch.iter().enumerate() {
                let k = b * cfg.batch_size + j;
                let mut rng = root.substream(&[2, epoch as u64, k as u64]);
                let start = window_start(task.videos[i].shape()[0], mcfg.clip_length, &mut rng)?;
                clips.push(prepare_clip(task.videos[i], start, mcfg, Some((&mut rng, &cfg.augmentation)))?);
            }
            let graph_seed = root.substream(&[3, epoch as u64, b as u64]).next_u64();
            let (grads, updates, logits, batch_loss) = {
                let mut g = Graph::new(store, Mode::Train, graph_seed);
                let x = g.input(stack(&clips)?);
                let y = model.forward(&mut g, x, head)?;
                let loss = match task.targets {
                    Targets::Classes(labels) => {
                        let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                        g.cross_entropy(y, &ys)?
                    }
                    Targets::Binary(labels) => {
                        let ys: Vec<f32> = batch.iter().map(|&i| labels[i] as f32).collect();
                        g.bce_with_logits(y, &ys)?
                    }
                };
                let grads = g.backward(loss)?;
                let n = g.shape(y)[1];
                let logits: Vec<Vec<f32>> = g.value(y).data().chunks(n).map(|r| r.to_vec()).collect();
                (grads, g.take_stat_updates(), logits, g.value(loss).item()? as f64)
            };
            adam.step(store, &grads)?;
            for u in &updates {
                u.apply(store);
            }
            loss_sum += batch_loss * batch.len() as f64;
            correct += batch.iter().zip(&logits).filter(|(&i, l)| task.targets.correct(i, l)).count();
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = validation_loss(model, store, task, &val, cfg.batch_size)?;
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            lr: adam.learning_rate(),
            seconds: started.elapsed().as_secs_f64(),
            train_accuracy: Some(correct as f64 / order.len() as f64),
        };
        observer(&entry)?;
        history.push(entry);
        let monitored = val_loss.unwrap_or(train_loss);
        let decision = stopper.observe(if monitored.is_finite() { monitored } else { f64::INFINITY });
        if decision.new_best {
            best = store.to_map();
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    store.load_all(&best)?;
    Ok(TrainOutcome { history, best_epoch: stopper.best_epoch(), stopped_early, steps: adam.steps() })
}

/// Trains extractor, temporal net and word classifier jointly with cross entropy.
pub fn pretrain_lipreading(
    model: &LipForensicsModel,
    store: &mut ParameterStore,
    samples: &[LipreadingSample],
    cfg: &TrainConfig,
    observer: EpochObserver,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Data("lipreading dataset is empty".into()));
    }
    let classes = model.config().lipread_classes;
    if classes < 2 {
        return Err(Error::Config("lipreading needs at least two word classes".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= classes) {
        return Err(Error::Data(format!("word label {} out of range for {classes} classes", s.label)));
    }
    for p in Partition::ALL {
        store.set_trainable(p, true);
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let task = Task {
        name: "pretrain",
        videos: samples.iter().map(|s| &s.frames).collect(),
        groups: (0..samples.len()).map(|i| i.to_string()).collect(),
        targets: Targets::Classes(&labels),
    };
    let shuffle = |train: &[usize], rng: &mut Rng| {
        let mut order = train.to_vec();
        rng.shuffle(&mut order);
        Ok(order)
    };
    fit(model, store, &task, cfg, &shuffle, observer)
}

/// Sets which partitions train in the forgery stage and prepares the binary head.
///
/// `store` holds the pretrained weights; in scratch mode it is replaced by a fresh
/// initialisation. The forgery head is always freshly initialised.
pub fn configure_finetune(
    model: &LipForensicsModel,
    store: &mut ParameterStore,
    mode: FinetuneMode,
    seed: u64,
) -> Result<()> {
    let init = Rng::new(seed).substream_named("finetune-init");
    if mode == FinetuneMode::Scratch {
        *store = model.init_store(init.substream_named("scratch").next_u64())?;
    }
    model.reinitialize(store, Partition::ForgeryHead, init.substream_named("forgery_head").next_u64())?;
    store.set_trainable(Partition::FeatureExtractor, mode != FinetuneMode::Frozen);
    store.set_trainable(Partition::TemporalNet, true);
    store.set_trainable(Partition::LipreadHead, false);
    store.set_trainable(Partition::ForgeryHead, true);
    Ok(())
}

/// Trains the forgery detector with binary cross entropy on class-balanced epochs.
pub fn finetune_forgery(
    model: &LipForensicsModel,
    store: &mut ParameterStore,
    samples: &[ForgerySample],
    mode: FinetuneMode,
    cfg: &TrainConfig,
    observer: EpochObserver,
) -> Result<TrainOutcome> {
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Data("forgery dataset needs both real and fake videos".into()));
    }
    configure_finetune(model, store, mode, cfg.seed)?;
    let task = Task {
        name: "finetune",
        videos: samples.iter().map(|s| &s.frames).collect(),
        groups: samples.iter().map(|s| s.source.clone()).collect(),
        targets: Targets::Binary(&labels),
    };
    let balance = |train: &[usize], rng: &mut Rng| {
        let sub: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        Ok(oversample_epoch(&sub, rng)?.into_iter().map(|j| train[j]).collect())
    };
    fit(model, store, &task, cfg, &balance, observer)
}
