//! Motion blur synthesis by frame averaging.
//!
//! A blurred image at intensity `L` starting at frame `j` is the per-sample
//! mean of the `L` consecutive sharp frames `j ..= j + L - 1`. Averaging the
//! frames of a high frame-rate sequence approximates the integral over the
//! exposure window that a physical sensor performs, so the virtual exposure
//! time is `L / fps`. `L = 1` reproduces the sharp frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::{ImageRef, Traverse};
use crate::imaging::{FrameSequence, Image};
use crate::{Error, Result};

/// The blur intensities used throughout the benchmark.
pub const DEFAULT_LEVELS: [u32; 9] = [1, 10, 20, 30, 40, 60, 80, 120, 240];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlurSpec {
    pub level: usize,
    pub start: usize,
}

impl BlurSpec {
    pub fn new(level: usize, start: usize) -> Self {
        BlurSpec { level, start }
    }

    pub fn sharp(start: usize) -> Self {
        BlurSpec { level: 1, start }
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.level == 0 {
            return Err(Error::BadArgument("blur level must be >= 1".into()));
        }
        if self.start + self.level > len {
            return Err(Error::WindowOutOfRange {
                start: self.start,
                level: self.level,
                len,
            });
        }
        Ok(())
    }
}

/// Strictly increasing list of blur levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlurSchedule {
    levels: Vec<u32>,
}

impl BlurSchedule {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::BadArgument("blur schedule is empty".into()));
        }
        if levels[0] == 0 {
            return Err(Error::BadArgument("blur levels must be >= 1".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadArgument(format!(
                "blur levels must be strictly increasing: {levels:?}"
            )));
        }
        Ok(BlurSchedule { levels })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max_level(&self) -> u32 {
        *self.levels.last().expect("schedule is non-empty")
    }

    pub fn includes_sharp(&self) -> bool {
        self.levels[0] == 1
    }
}

impl Default for BlurSchedule {
    fn default() -> Self {
        default_schedule()
    }
}

pub fn default_schedule() -> BlurSchedule {
    BlurSchedule {
        levels: DEFAULT_LEVELS.to_vec(),
    }
}

/// Virtual exposure time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExposureTime(pub f64);

impl ExposureTime {
    pub fn seconds(self) -> f64 {
        self.0
    }
}

pub fn exposure_time(level: usize, fps: f64) -> Result<ExposureTime> {
    if level == 0 {
        return Err(Error::BadArgument("blur level must be >= 1".into()));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::BadArgument(format!("fps must be positive, got {fps}")));
    }
    Ok(ExposureTime(level as f64 / fps))
}

/// Averages `spec.level` frames starting at `spec.start`.
///
/// Sums are exact in a 32-bit accumulator (at most `255 * L`), followed by a
/// single round-half-up division: `(sum + L / 2) / L`.
pub fn synthesize_blur(seq: &FrameSequence, spec: BlurSpec) -> Result<Image> {
    spec.check(seq.len())?;
    let window = &seq.frames()[spec.start..spec.start + spec.level];
    let first = &window[0];
    if spec.level == 1 {
        return Ok(first.clone());
    }
    let mut acc = vec![0u32; first.pixels().len()];
    for frame in window {
        for (a, &v) in acc.iter_mut().zip(frame.pixels()) {
            *a += v as u32;
        }
    }
    let l = spec.level as u32;
    let half = l / 2;
    let pixels = acc.into_iter().map(|s| ((s + half) / l) as u8).collect();
    Image::new(first.width(), first.height(), first.channels(), pixels)
}

/// Number of places `synthesize_traverse` emits per level.
pub fn place_count(len: usize, stride: usize, max_level: usize) -> usize {
    if len < max_level || stride == 0 {
        0
    } else {
        (len - max_level) / stride + 1
    }
}

/// Synthesized images keyed by level, index-aligned by place.
pub type LevelImages = BTreeMap<u32, Vec<Image>>;

/// Blurs the sequence at every scheduled level over a shared anchor set.
///
/// Anchors sit at `0, stride, 2*stride, ...` while `anchor + max_level <= n`,
/// so place `k` at every level starts at frame `k * stride`.
pub fn synthesize_traverse(
    seq: &FrameSequence,
    schedule: &BlurSchedule,
    stride: usize,
    max_level: usize,
) -> Result<LevelImages> {
    if stride == 0 {
        return Err(Error::BadArgument("stride must be >= 1".into()));
    }
    if max_level < schedule.max_level() as usize {
        return Err(Error::BadArgument(format!(
            "max level {max_level} is below the schedule maximum {}",
            schedule.max_level()
        )));
    }
    if seq.len() < max_level {
        return Err(Error::SequenceTooShort {
            len: seq.len(),
            max_level,
        });
    }
    let places = place_count(seq.len(), stride, max_level);
    let tasks: Vec<(u32, usize)> = schedule
        .levels()
        .iter()
        .flat_map(|&l| (0..places).map(move |k| (l, k)))
        .collect();
    let images = tasks
        .par_iter()
        .map(|&(l, k)| synthesize_blur(seq, BlurSpec::new(l as usize, k * stride)))
        .collect::<Result<Vec<_>>>()?;

    let mut out = LevelImages::new();
    for ((l, _), img) in tasks.into_iter().zip(images) {
        out.entry(l).or_default().push(img);
    }
    Ok(out)
}

/// Relative location of one synthesized image: `<LLL>/<PPPPPP>.png`.
pub fn image_rel_path(level: u32, place: usize) -> PathBuf {
    PathBuf::from(format!("{level:03}")).join(format!("{place:06}.png"))
}

/// Writes synthesized images under `traverse_dir` and returns the matching
/// traverse description with paths relative to `traverse_dir`.
pub fn write_traverse(
    traverse_dir: &Path,
    name: &str,
    fps: f64,
    images: &LevelImages,
) -> Result<Traverse> {
    let jobs: Vec<(u32, usize, &Image)> = images
        .iter()
        .flat_map(|(&l, imgs)| imgs.iter().enumerate().map(move |(k, img)| (l, k, img)))
        .collect();
    jobs.par_iter()
        .try_for_each(|&(l, k, img)| img.save_png(&traverse_dir.join(image_rel_path(l, k))))?;

    let places = jobs
        .iter()
        .map(|&(level, index, _)| ImageRef {
            index,
            level,
            path: image_rel_path(level, index),
        })
        .collect();
    Traverse::new(
        name.to_string(),
        "custom".to_string(),
        Default::default(),
        fps,
        images.keys().copied().collect(),
        places,
    )
}
