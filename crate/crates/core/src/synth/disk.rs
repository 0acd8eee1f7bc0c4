use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::preprocess::{
    save_frame_png, save_landmarks, Frame, Label, LandmarkTrack, ManifestEntry, Similarity, Split, CANONICAL_SIZE,
};
use crate::synth::corpus::VideoPlan;
use crate::synth::render::{canonical_landmarks, render_frame};
use crate::tensor::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct DiskOptions {
    pub frame_size: usize,
    pub pixel_noise: bool,
    /// Standard deviation of per-frame landmark detection noise, in pixels.
    pub landmark_noise: f64,
    pub split: Split,
    pub dataset_tag: String,
}

impl Default for DiskOptions {
    fn default() -> Self {
        DiskOptions {
            frame_size: CANONICAL_SIZE,
            pixel_noise: true,
            landmark_noise: 0.25,
            split: Split::Train,
            dataset_tag: "synthetic".into(),
        }
    }
}

/// Head placement in a `frame_size` square: scale 0.8-1.0 of the frame, roll within ±0.2 rad, small offset.
pub fn random_pose(rng: &mut Rng, frame_size: usize) -> Similarity {
    let unit = frame_size as f64 / CANONICAL_SIZE as f64;
    let scale = unit * rng.uniform_range(0.8, 1.0) as f64;
    let angle = rng.uniform_range(-0.2, 0.2) as f64;
    let target = [
        frame_size as f64 / 2.0 + unit * rng.uniform_range(-6.0, 6.0) as f64,
        frame_size as f64 / 2.0 + unit * rng.uniform_range(-6.0, 6.0) as f64,
    ];
    let s = Similarity::from_parts(scale, angle, 0.0, 0.0);
    let c = s.apply([128.0, 140.0]);
    Similarity { tx: target[0] - c[0], ty: target[1] - c[1], ..s }
}

pub struct RenderedVideo {
    pub frames: Vec<Frame>,
    pub landmarks: LandmarkTrack,
}

pub fn render_video(plan: &VideoPlan, pose: &Similarity, opts: &DiskOptions) -> Result<RenderedVideo> {
    let n = opts.frame_size;
    let mut frames = Vec::with_capacity(plan.states.len());
    let mut marks = Vec::with_capacity(plan.states.len());
    for (f, state) in plan.states.iter().enumerate() {
        let mut noise = plan.frame_noise(f);
        let noise = opts.pixel_noise.then_some(&mut noise);
        frames.push(render_frame(&plan.appearance, state, pose, n, n, noise));
        let mut jitter = Rng::new(plan.pose_seed).substream(&[1, f as u64]);
        marks.push(
            canonical_landmarks(&plan.appearance, state)
                .into_iter()
                .map(|p| {
                    let q = pose.apply(p);
                    let dx = opts.landmark_noise * jitter.standard_normal() as f64;
                    let dy = opts.landmark_noise * jitter.standard_normal() as f64;
                    [q[0] + dx, q[1] + dy]
                })
                .collect(),
        );
    }
    Ok(RenderedVideo { frames, landmarks: LandmarkTrack::from_nested(marks)? })
}

/// Renders full frames as `frames/<id>/NNNNN.png` plus `landmarks/<id>.json` under `root`,
/// returning manifest entries with paths relative to `root`.
pub fn write_videos(plans: &[VideoPlan], root: &Path, opts: &DiskOptions) -> Result<Vec<ManifestEntry>> {
    plans
        .par_iter()
        .map(|plan| {
            let pose = random_pose(&mut Rng::new(plan.pose_seed).substream(&[0]), opts.frame_size);
            let video = render_video(plan, &pose, opts)?;
            let frames_rel = PathBuf::from("frames").join(&plan.video_id);
            for (f, frame) in video.frames.iter().enumerate() {
                save_frame_png(root.join(&frames_rel).join(format!("{f:05}.png")), frame)?;
            }
            let landmarks_rel = PathBuf::from("landmarks").join(format!("{}.json", plan.video_id));
            save_landmarks(root.join(&landmarks_rel), &video.landmarks)?;
            Ok(ManifestEntry {
                video_id: plan.video_id.clone(),
                frames_path: frames_rel,
                landmarks_path: landmarks_rel,
                label: if plan.label == 1 { Label::Fake } else { Label::Real },
                method_tag: plan.method.clone(),
                dataset_tag: opts.dataset_tag.clone(),
                split: opts.split,
                source: Some(plan.source.clone()),
                word: plan.word,
            })
        })
        .collect()
}
