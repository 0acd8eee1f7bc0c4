use crate::error::{Error, Result};
use crate::eval::metrics::VideoScore;
use crate::nn::{Head, LipForensicsModel, ModelConfig, ParameterStore};
use crate::preprocess::clip_starts;
use crate::tensor::{sigmoid, Tensor};
use crate::train::{clip_logits, prepare_clip, ForgerySample};

/// Anything that maps a batch of prepared `[T, S, S]` clips to one probability each.
pub trait ClipModel {
    fn probabilities(&self, clips: &[Tensor]) -> Result<Vec<f64>>;
}

/// Probability that each clip is fake.
pub struct ForgeryModel<'a> {
    pub model: &'a LipForensicsModel,
    pub store: &'a ParameterStore,
    pub batch_size: usize,
}

impl ClipModel for ForgeryModel<'_> {
    fn probabilities(&self, clips: &[Tensor]) -> Result<Vec<f64>> {
        let logits = clip_logits(self.model, self.store, clips, Head::Forgery, self.batch_size)?;
        Ok(logits.iter().map(|l| sigmoid(l[0]) as f64).collect())
    }
}

/// Softmax probability of one word class.
pub struct LipreadModel<'a> {
    pub model: &'a LipForensicsModel,
    pub store: &'a ParameterStore,
    pub batch_size: usize,
    pub class: usize,
}

impl ClipModel for LipreadModel<'_> {
    fn probabilities(&self, clips: &[Tensor]) -> Result<Vec<f64>> {
        let logits = clip_logits(self.model, self.store, clips, Head::Lipread, self.batch_size)?;
        logits
            .iter()
            .map(|l| {
                let z = l.get(self.class).ok_or_else(|| Error::InvalidArgument(format!("class {} out of range", self.class)))?;
                let m = l.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
                let total: f64 = l.iter().map(|&v| (v as f64 - m).exp()).sum();
                Ok((*z as f64 - m).exp() / total)
            })
            .collect()
    }
}

/// Probability of the true binary label: `p` for fakes, `1 - p` for reals.
pub struct CorrectClass<'a, M: ClipModel> {
    pub inner: &'a M,
    pub label: u8,
}

impl<M: ClipModel> ClipModel for CorrectClass<'_, M> {
    fn probabilities(&self, clips: &[Tensor]) -> Result<Vec<f64>> {
        let p = self.inner.probabilities(clips)?;
        Ok(if self.label == 1 { p } else { p.into_iter().map(|v| 1.0 - v).collect() })
    }
}

/// Scores every clip of one video and averages.
pub fn score_video(model: &dyn ClipModel, video_id: &str, clips: &[Tensor], label: u8) -> Result<VideoScore> {
    if clips.is_empty() {
        return Err(Error::Data(format!("video {video_id:?} has no clips")));
    }
    VideoScore::new(video_id, model.probabilities(clips)?, label)
}

/// Center-cropped, normalised clips at non-overlapping windows of `config.clip_length` frames.
pub fn video_clips(frames: &Tensor, config: &ModelConfig) -> Result<Vec<Tensor>> {
    clip_starts(frames.shape()[0], config.clip_length, config.clip_length)
        .into_iter()
        .map(|s| prepare_clip(frames, s, config, None))
        .collect()
}

/// Video-level scores for a test set, in input order. Clips are prepared a few videos at a time.
pub fn score_videos(model: &dyn ClipModel, config: &ModelConfig, videos: &[ForgerySample]) -> Result<Vec<VideoScore>> {
    let mut out = Vec::with_capacity(videos.len());
    for group in videos.chunks(16) {
        let mut clips = Vec::new();
        let mut spans = Vec::with_capacity(group.len());
        for v in group {
            let c = video_clips(&v.frames, config)?;
            if c.is_empty() {
                return Err(Error::Data(format!(
                    "video {:?} has {} frames, fewer than the clip length {}",
                    v.video_id,
                    v.frames.shape()[0],
                    config.clip_length
                )));
            }
            spans.push(clips.len()..clips.len() + c.len());
            clips.extend(c);
        }
        let probs = model.probabilities(&clips)?;
        for (v, r) in group.iter().zip(spans) {
            out.push(VideoScore::new(&v.video_id, probs[r].to_vec(), v.label)?);
        }
    }
    Ok(out)
}
