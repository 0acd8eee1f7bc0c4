use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::crop::{make_clips, Frame};
use crate::preprocess::landmarks::LandmarkTrack;
use crate::tensor::{load_tensors, save_tensors, Tensor, TensorMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            _ => Err(Error::InvalidArgument(format!("unknown label {s:?} (expected real or fake)"))),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?} (expected train, val or test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    pub frames_path: PathBuf,
    pub landmarks_path: PathBuf,
    pub label: Label,
    pub method_tag: String,
    pub dataset_tag: String,
    pub split: Split,
    /// Identifier of the real video a fake was derived from (or the video itself).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Word class for lipreading videos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<usize>,
}

impl ManifestEntry {
    pub fn source_id(&self) -> &str {
        self.source.as_deref().unwrap_or(&self.video_id)
    }
}

/// JSON-lines list of videos. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry =
                serde_json::from_str(line).map_err(|e| Error::json(format!("manifest line {}", i + 1), e))?;
            entries.push(e);
        }
        let m = Manifest { entries };
        m.check_unique()?;
        Ok(m)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Data(format!("duplicate videoId {:?} in manifest", e.video_id)));
            }
        }
        Ok(())
    }

    /// Reads, resolves paths and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            for p in [&mut e.frames_path, &mut e.landmarks_path] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.exists() {
                    return Err(Error::Data(format!("video {:?}: missing {}", e.video_id, p.display())));
                }
            }
        }
        Ok(m)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("entry serialises") + "\n").collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.check_unique()?;
        write_file(path.as_ref(), self.to_jsonl().as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm" | "pgm" | "pnm")
    )
}

/// Decodes every PNG/PPM frame in `dir`, ordered by file name, as RGB.
pub fn load_frames(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|r| r.map(|d| d.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.retain(|p| is_frame_file(p));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("{}: no frame images", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let img = image::open(p).map_err(|e| Error::Image { path: p.clone(), source: e })?.to_rgb8();
            let (w, h) = img.dimensions();
            Frame::new(w as usize, h as usize, 3, img.into_raw().into_iter().map(f32::from).collect())
        })
        .collect()
}

pub fn quantize(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes a 1- or 3-channel frame as 8-bit PNG.
pub fn save_frame_png(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = frame.data.iter().map(|&v| quantize(v)).collect();
    let (w, h) = (frame.width as u32, frame.height as u32);
    let color = match frame.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(Error::InvalidArgument(format!("cannot write {c}-channel frame"))),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    image::save_buffer_with_format(path, &bytes, w, h, color, image::ImageFormat::Png)
        .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<LandmarkTrack> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LandmarkTrack::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn save_landmarks(path: impl AsRef<Path>, track: &LandmarkTrack) -> Result<()> {
    write_file(path.as_ref(), track.to_json().as_bytes())
}

/// Per-video cache: `frames` holds every `[F, 96, 96, 1]` crop, `clips` the
/// `[n, T, 96, 96, 1]` stack of non-overlapping windows when `n > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipCache {
    pub frames: Tensor,
    pub clips: Option<Tensor>,
}

impl ClipCache {
    pub fn build(frames: Tensor, clip_length: usize) -> Result<Self> {
        let clips = make_clips(&frames, clip_length, clip_length)?;
        let clips = if clips.is_empty() {
            None
        } else {
            let mut shape = vec![clips.len()];
            shape.extend_from_slice(clips[0].shape());
            Some(Tensor::new(shape, clips.into_iter().flat_map(Tensor::into_data).collect())?)
        };
        Ok(ClipCache { frames, clips })
    }

    pub fn num_clips(&self) -> usize {
        self.clips.as_ref().map_or(0, |c| c.shape()[0])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut map = TensorMap::new();
        map.insert("frames".into(), self.frames.clone());
        if let Some(c) = &self.clips {
            map.insert("clips".into(), c.clone());
        }
        save_tensors(path, &map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut map = load_tensors(path)?;
        let frames = map
            .remove("frames")
            .ok_or_else(|| Error::Data(format!("{}: clip cache lacks \"frames\"", path.display())))?;
        if frames.rank() != 4 {
            return Err(Error::Data(format!("{}: frames tensor has shape {:?}", path.display(), frames.shape())));
        }
        Ok(ClipCache { frames, clips: map.remove("clips") })
    }
}
