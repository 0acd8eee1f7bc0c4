use std::path::Path;

use lipforensics::preprocess::{
    load_frames, load_landmarks, preprocess_video, ClipCache, Label, Manifest, ManifestEntry, PreprocessConfig, Split,
};
use lipforensics::tensor::Tensor;
use lipforensics::train::{ForgerySample, LipreadingSample};
use rayon::prelude::*;

use crate::failure::{CliResult, Failure};

/// Mouth crops `[F, 96, 96, 1]` of one entry: read from a clip cache file, or computed from a
/// directory of full frames plus its landmark track.
pub fn load_crops(entry: &ManifestEntry, pre: &PreprocessConfig) -> CliResult<Tensor> {
    if entry.frames_path.is_dir() {
        let frames = load_frames(&entry.frames_path)?;
        let track = load_landmarks(&entry.landmarks_path)?;
        Ok(preprocess_video(&frames, &track, pre)?)
    } else {
        Ok(ClipCache::load(&entry.frames_path)?.frames)
    }
}

pub fn load_manifest(path: &Path, split: Option<Split>) -> CliResult<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> =
        Manifest::load(path)?.entries.into_iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
    if entries.is_empty() {
        let which = split.map_or(String::new(), |s| format!(" in split {s:?}"));
        return Err(Failure::Data(format!("{}: no videos{which}", path.display())));
    }
    Ok(entries)
}

pub fn forgery_samples(entries: &[ManifestEntry], pre: &PreprocessConfig) -> CliResult<Vec<ForgerySample>> {
    entries
        .par_iter()
        .map(|e| {
            Ok(ForgerySample {
                video_id: e.video_id.clone(),
                source: e.source_id().to_string(),
                method: e.method_tag.clone(),
                label: e.label.as_u8(),
                frames: load_crops(e, pre)?,
            })
        })
        .collect()
}

pub fn lipreading_samples(entries: &[ManifestEntry], pre: &PreprocessConfig) -> CliResult<Vec<LipreadingSample>> {
    entries
        .par_iter()
        .map(|e| {
            let label = e
                .word
                .ok_or_else(|| Failure::Data(format!("video {:?} has no word label for lipreading", e.video_id)))?;
            if e.label != Label::Real {
                return Err(Failure::Data(format!("lipreading video {:?} is labelled fake", e.video_id)));
            }
            Ok(LipreadingSample { frames: load_crops(e, pre)?, label })
        })
        .collect()
}
