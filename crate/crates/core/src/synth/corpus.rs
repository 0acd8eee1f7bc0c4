use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::CROP_SIZE;
use crate::synth::render::{mouth_patch, static_patch, Appearance, MouthState, MOUTH_CENTER};
use crate::tensor::{Rng, Tensor};
use crate::train::{ForgerySample, LipreadingSample};

/// Timing-noise standard deviation, in frames, at strength 1.
pub const JITTER_FRAMES: f64 = 1.5;
pub const FLICKER_WIDTH: f64 = 0.12;
pub const FLICKER_HEIGHT: f64 = 0.35;
/// Aperture floor at strength 1. The ceiling drops by the same amount, keeping the mean aperture.
pub const CLOSE_FLOOR: f64 = 0.3;
/// Frequencies are expressed in cycles per this many frames.
const CYCLE_FRAMES: f64 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtefactFamily {
    Jitter,
    ShapeFlicker,
    IncompleteClose,
}

impl ArtefactFamily {
    pub const ALL: [ArtefactFamily; 3] =
        [ArtefactFamily::Jitter, ArtefactFamily::ShapeFlicker, ArtefactFamily::IncompleteClose];

    pub fn tag(self) -> &'static str {
        match self {
            ArtefactFamily::Jitter => "jitter",
            ArtefactFamily::ShapeFlicker => "shape_flicker",
            ArtefactFamily::IncompleteClose => "incomplete_close",
        }
    }
}

impl fmt::Display for ArtefactFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ArtefactFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown artefact family {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub vocab: usize,
    pub artefact_family: ArtefactFamily,
    pub artefact_strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 100,
            frames_per_video: 25,
            vocab: 4,
            artefact_family: ArtefactFamily::Jitter,
            artefact_strength: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 || self.frames_per_video == 0 {
            return Err(Error::Config("numVideos and framesPerVideo must be positive".into()));
        }
        if !(self.artefact_strength.is_finite() && self.artefact_strength >= 0.0) {
            return Err(Error::Config("artefactStrength must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Smooth opening and closing: `a(t) = (1 - cos(2π f t + φ)) / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trajectory {
    pub cycles_per_frame: f64,
    pub phase: f64,
}

impl Trajectory {
    pub fn aperture(&self, t: f64) -> f64 {
        0.5 - 0.5 * (std::f64::consts::TAU * self.cycles_per_frame * t + self.phase).cos()
    }

    pub fn states(&self, frames: usize) -> Vec<MouthState> {
        (0..frames).map(|t| MouthState::open(self.aperture(t as f64))).collect()
    }

    /// Lipreading word `class` of `vocab`: 1 to 5 cycles per 25 frames, evenly spaced, with ±5% speed and random phase.
    pub fn for_word(class: usize, vocab: usize, rng: &mut Rng) -> Self {
        let base = 1.0 + 4.0 * class as f64 / (vocab - 1) as f64;
        let speed = 1.0 + 0.05 * rng.uniform_range(-1.0, 1.0) as f64;
        let phase = rng.uniform_range(0.0, std::f32::consts::TAU) as f64;
        Trajectory { cycles_per_frame: base * speed / CYCLE_FRAMES, phase }
    }

    /// Forgery-corpus speech: 1 to 3 cycles per 25 frames.
    pub fn for_speech(rng: &mut Rng) -> Self {
        let cycles = rng.uniform_range(1.0, 3.0) as f64;
        let phase = rng.uniform_range(0.0, std::f32::consts::TAU) as f64;
        Trajectory { cycles_per_frame: cycles / CYCLE_FRAMES, phase }
    }
}

/// Mouth states of a manipulated video; strength 0 reproduces `trajectory.states` exactly.
pub fn artefact_states(
    trajectory: &Trajectory,
    family: ArtefactFamily,
    strength: f64,
    frames: usize,
    rng: &mut Rng,
) -> Vec<MouthState> {
    (0..frames)
        .map(|t| {
            let t = t as f64;
            match family {
                ArtefactFamily::Jitter => {
                    let shift = strength * JITTER_FRAMES * rng.standard_normal() as f64;
                    MouthState::open(trajectory.aperture(t + shift))
                }
                ArtefactFamily::ShapeFlicker => {
                    let w = strength * FLICKER_WIDTH * rng.standard_normal() as f64;
                    let h = strength * FLICKER_HEIGHT * rng.standard_normal() as f64;
                    MouthState {
                        aperture: trajectory.aperture(t),
                        width: (1.0 + w).max(0.5),
                        height: (1.0 + h).max(0.2),
                    }
                }
                ArtefactFamily::IncompleteClose => {
                    let floor = (strength * CLOSE_FLOOR).min(0.5);
                    MouthState::open(floor + (1.0 - 2.0 * floor) * trajectory.aperture(t))
                }
            }
        })
        .collect()
}

/// Everything needed to render one synthetic video, in memory or as full frames on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoPlan {
    pub video_id: String,
    pub source: String,
    pub method: String,
    pub label: u8,
    pub word: Option<usize>,
    pub appearance: Appearance,
    pub states: Vec<MouthState>,
    /// Frame `f` draws pixel noise from `Rng::new(noise_seed).substream(&[f])`.
    pub noise_seed: u64,
    /// Seed for the head pose and landmark noise of the on-disk rendering.
    pub pose_seed: u64,
}

impl VideoPlan {
    pub fn frame_noise(&self, frame: usize) -> Rng {
        Rng::new(self.noise_seed).substream(&[frame as u64])
    }

    /// `[F, 96, 96, 1]` grayscale mouth crops as the aligned pipeline would see them.
    pub fn render_crops(&self) -> Tensor {
        let half = (CROP_SIZE / 2) as i64;
        let origin = [MOUTH_CENTER[0] as i64 - half, MOUTH_CENTER[1] as i64 - half];
        let base = static_patch(&self.appearance, origin, CROP_SIZE);
        let data: Vec<f32> = self
            .states
            .iter()
            .enumerate()
            .flat_map(|(f, s)| mouth_patch(&base, &self.appearance, s, origin, CROP_SIZE, &mut self.frame_noise(f)))
            .collect();
        Tensor::from_parts(vec![self.states.len(), CROP_SIZE, CROP_SIZE, 1], data)
    }
}

struct Identity {
    appearance: Appearance,
    noise_seed: u64,
    pose_seed: u64,
}

fn identity(rng: &Rng) -> Identity {
    Identity {
        appearance: Appearance::sample(&mut rng.substream_named("appearance")),
        noise_seed: rng.substream_named("noise").next_u64(),
        pose_seed: rng.substream_named("pose").next_u64(),
    }
}

/// Balanced word classes `i mod L`; every video has its own identity and noise.
pub fn plan_lipreading(cfg: &SynthConfig, prefix: &str) -> Result<Vec<VideoPlan>> {
    cfg.validate()?;
    if cfg.vocab < 2 {
        return Err(Error::Config("lipreading needs vocab >= 2".into()));
    }
    let root = Rng::new(cfg.seed).substream_named("lipreading");
    Ok((0..cfg.num_videos)
        .map(|i| {
            let rng = root.substream(&[i as u64]);
            let word = i % cfg.vocab;
            let trajectory = Trajectory::for_word(word, cfg.vocab, &mut rng.substream_named("trajectory"));
            let id = identity(&rng);
            let video_id = format!("{prefix}word{i:05}");
            VideoPlan {
                source: video_id.clone(),
                video_id,
                method: "none".into(),
                label: 0,
                word: Some(word),
                appearance: id.appearance,
                states: trajectory.states(cfg.frames_per_video),
                noise_seed: id.noise_seed,
                pose_seed: id.pose_seed,
            }
        })
        .collect())
}

/// `ceil(n / 2)` sources, each giving a real video and (while the count allows) a fake
/// rendered from the same identity, noise and trajectory with the artefact applied.
pub fn plan_forgery(cfg: &SynthConfig, prefix: &str) -> Result<Vec<VideoPlan>> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed).substream_named("forgery");
    let method = cfg.artefact_family.tag();
    let mut plans = Vec::with_capacity(cfg.num_videos);
    for i in 0..cfg.num_videos.div_ceil(2) {
        let rng = root.substream(&[i as u64]);
        let trajectory = Trajectory::for_speech(&mut rng.substream_named("trajectory"));
        let id = identity(&rng);
        let source = format!("{prefix}src{i:05}");
        let real = VideoPlan {
            video_id: format!("{source}_real"),
            source: source.clone(),
            method: "real".into(),
            label: 0,
            word: None,
            appearance: id.appearance,
            states: trajectory.states(cfg.frames_per_video),
            noise_seed: id.noise_seed,
            pose_seed: id.pose_seed,
        };
        let fake = (plans.len() + 1 < cfg.num_videos).then(|| VideoPlan {
            video_id: format!("{source}_{method}"),
            method: method.into(),
            label: 1,
            states: artefact_states(
                &trajectory,
                cfg.artefact_family,
                cfg.artefact_strength,
                cfg.frames_per_video,
                &mut rng.substream_named("artefact"),
            ),
            ..real.clone()
        });
        plans.push(real);
        plans.extend(fake);
    }
    Ok(plans)
}

pub fn gen_lipreading(cfg: &SynthConfig) -> Result<Vec<LipreadingSample>> {
    let plans = plan_lipreading(cfg, "")?;
    Ok(plans
        .par_iter()
        .map(|p| LipreadingSample { frames: p.render_crops(), label: p.word.expect("word plan") })
        .collect())
}

pub fn gen_forgery(cfg: &SynthConfig) -> Result<Vec<ForgerySample>> {
    let plans = plan_forgery(cfg, "")?;
    Ok(plans
        .par_iter()
        .map(|p| ForgerySample {
            video_id: p.video_id.clone(),
            source: p.source.clone(),
            method: p.method.clone(),
            label: p.label,
            frames: p.render_crops(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(strength: f64) -> SynthConfig {
        SynthConfig { num_videos: 4, frames_per_video: 6, artefact_strength: strength, ..Default::default() }
    }

    #[test]
    fn regeneration_is_bitwise_identical() {
        let a = gen_forgery(&small(1.0)).unwrap();
        let b = gen_forgery(&small(1.0)).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.frames.bitwise_eq(&y.frames) && x.video_id == y.video_id));
        let cfg = SynthConfig { num_videos: 3, frames_per_video: 4, ..Default::default() };
        let a = gen_lipreading(&cfg).unwrap();
        let b = gen_lipreading(&cfg).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.frames.bitwise_eq(&y.frames) && x.label == y.label));
    }

    #[test]
    fn zero_strength_fakes_equal_their_source() {
        for family in ArtefactFamily::ALL {
            let cfg = SynthConfig { artefact_family: family, ..small(0.0) };
            let s = gen_forgery(&cfg).unwrap();
            assert_eq!(s.iter().map(|v| v.label).collect::<Vec<_>>(), [0, 1, 0, 1]);
            assert!(s[0].frames.bitwise_eq(&s[1].frames), "{family}");
            assert_eq!(s[0].source, s[1].source);
        }
    }

    #[test]
    fn artefacts_change_fakes() {
        for family in ArtefactFamily::ALL {
            let cfg = SynthConfig { artefact_family: family, ..small(1.0) };
            let s = gen_forgery(&cfg).unwrap();
            assert!(!s[0].frames.bitwise_eq(&s[1].frames), "{family}");
        }
    }

    #[test]
    fn odd_counts_and_word_balance() {
        let s = plan_forgery(&SynthConfig { num_videos: 5, ..small(1.0) }, "").unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[4].label, 0);
        let cfg = SynthConfig { num_videos: 8, frames_per_video: 2, vocab: 4, ..Default::default() };
        let words: Vec<_> = plan_lipreading(&cfg, "").unwrap().iter().map(|p| p.word.unwrap()).collect();
        assert_eq!(words, [0, 1, 2, 3, 0, 1, 2, 3]);
        assert!(plan_lipreading(&SynthConfig { vocab: 1, ..cfg }, "").is_err());
    }

    #[test]
    fn same_class_samples_differ_in_pixels() {
        let cfg = SynthConfig { num_videos: 4, frames_per_video: 3, vocab: 2, ..Default::default() };
        let s = gen_lipreading(&cfg).unwrap();
        assert_eq!(s[0].label, s[2].label);
        assert!(!s[0].frames.bitwise_eq(&s[2].frames));
    }

    #[test]
    fn incomplete_close_raises_floor() {
        let t = Trajectory { cycles_per_frame: 0.1, phase: 0.0 };
        let st = artefact_states(&t, ArtefactFamily::IncompleteClose, 1.0, 20, &mut Rng::new(0));
        assert!(st.iter().all(|s| (CLOSE_FLOOR - 1e-12..=1.0 - CLOSE_FLOOR + 1e-12).contains(&s.aperture)));
        assert!((st[0].aperture - CLOSE_FLOOR).abs() < 1e-12);
        assert!((st[5].aperture - (1.0 - CLOSE_FLOOR)).abs() < 1e-12);
    }
}
