//! Raster images, frame sequences and the pixel primitives shared by the
//! rest of the toolkit.
//!
//! Samples are gamma-encoded 8-bit values and are never linearized. Every
//! quantization back to 8 bits uses [`round_half_up`] semantics, implemented
//! in exact integer arithmetic wherever the inputs are integers.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::{Error, Result};

/// Extensions accepted as raster inputs.
pub const INPUT_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm"];

/// `floor(x + 0.5)` clamped to the 8-bit range.
pub fn round_half_up(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Round-half-up integer division for non-negative operands.
#[inline]
pub(crate) fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// An immutable 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadImage(format!("zero-sized image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::BadImage(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::BadImage(format!(
                "pixel buffer has {} samples, expected {}",
                pixels.len(),
                width * height * channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Image::new(width, height, 1, pixels)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Row-major interleaved samples.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn sample(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Returns a copy with `f` applied to every sample.
    pub fn map_samples(&self, f: impl Fn(u8) -> u8) -> Image {
        Image {
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Loads an 8-bit gray or RGB PNG/PGM/PPM file. Alpha channels are dropped.
    pub fn load(path: &Path) -> Result<Image> {
        let decoded = image::open(path).map_err(|e| Error::Codec {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        match decoded {
            DynamicImage::ImageLuma8(buf) => Image::new(w, h, 1, buf.into_raw()),
            DynamicImage::ImageLumaA8(_) => Image::new(w, h, 1, decoded.into_luma8().into_raw()),
            DynamicImage::ImageRgb8(buf) => Image::new(w, h, 3, buf.into_raw()),
            DynamicImage::ImageRgba8(_) => Image::new(w, h, 3, decoded.into_rgb8().into_raw()),
            other => Err(Error::BadImage(format!(
                "{}: unsupported pixel format {:?}",
                path.display(),
                other.color()
            ))),
        }
    }

    /// Writes the image as PNG, creating parent directories as needed.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let (w, h) = (self.width as u32, self.height as u32);
        let result = if self.channels == 1 {
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, self.pixels.clone())
                .expect("buffer length checked at construction")
                .save_with_format(path, image::ImageFormat::Png)
        } else {
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, self.pixels.clone())
                .expect("buffer length checked at construction")
                .save_with_format(path, image::ImageFormat::Png)
        };
        result.map_err(|e| Error::Codec {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Ordered, equally sized frames annotated with their capture rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Image>,
    fps: f64,
    source: String,
}

impl FrameSequence {
    pub fn new(frames: Vec<Image>, fps: f64, source: impl Into<String>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::BadArgument(format!("fps must be positive, got {fps}")));
        }
        let first = frames.first().ok_or_else(|| Error::NoFrames(PathBuf::new()))?;
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(Error::InconsistentFrames(format!(
                "frame {i} is {}x{}x{}, frame 0 is {}x{}x{}",
                f.width, f.height, f.channels, first.width, first.height, first.channels
            )));
        }
        Ok(FrameSequence {
            frames,
            fps,
            source: source.into(),
        })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn is_input_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| INPUT_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

/// Lists raster files in `dir` ordered by the numeric part of their stems.
///
/// Stems may share a common non-digit prefix (e.g. `frame_000042`); what
/// remains after it must be purely decimal.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_input_file(&path) {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }

    let stems: Vec<String> = files
        .iter()
        .map(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_owned)
                .ok_or_else(|| Error::BadFrameName(p.display().to_string()))
        })
        .collect::<Result<_>>()?;
    let prefix = common_non_digit_prefix(&stems);

    let mut indexed = Vec::with_capacity(files.len());
    for (path, stem) in files.into_iter().zip(&stems) {
        let digits = &stem[prefix.len()..];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::BadFrameName(path.display().to_string()));
        }
        let index: u64 = digits
            .parse()
            .map_err(|_| Error::BadFrameName(path.display().to_string()))?;
        indexed.push((index, path));
    }
    indexed.sort();
    if let Some(w) = indexed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::BadFrameName(format!(
            "duplicate frame index {} ({} and {})",
            w[0].0,
            w[0].1.display(),
            w[1].1.display()
        )));
    }
    Ok(indexed.into_iter().map(|(_, p)| p).collect())
}

fn common_non_digit_prefix(stems: &[String]) -> String {
    let first = &stems[0];
    let mut len = first
        .char_indices()
        .find(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i)
        .unwrap_or(first.len());
    for stem in &stems[1..] {
        len = first[..len]
            .bytes()
            .zip(stem.bytes())
            .take_while(|(a, b)| a == b)
            .count();
    }
    first[..len].to_string()
}

/// Loads every frame in `dir`, ordered by numeric file stem.
pub fn load_frame_sequence(dir: &Path, fps: f64) -> Result<FrameSequence> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::BadArgument(format!("fps must be positive, got {fps}")));
    }
    let files = list_frame_files(dir)?;
    let mut frames = Vec::with_capacity(files.len());
    for path in &files {
        let frame = Image::load(path)?;
        if let Some(first) = frames.first() {
            if !frame.same_shape(first) {
                return Err(Error::InconsistentFrames(format!(
                    "{} is {}x{}x{}, expected {}x{}x{}",
                    path.display(),
                    frame.width,
                    frame.height,
                    frame.channels,
                    first.width,
                    first.height,
                    first.channels
                )));
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(frames, fps, dir.display().to_string())
}

/// BT.601 luma, `round_half_up(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let pixels = img
                .pixels
                .chunks_exact(3)
                .map(|p| {
                    let weighted = 299 * p[0] as u64 + 587 * p[1] as u64 + 114 * p[2] as u64;
                    div_round_half_up(weighted, 1000) as u8
                })
                .collect();
            Image::new(img.width, img.height, 1, pixels)
        }
        c => Err(Error::BadImage(format!("unsupported channel count {c}"))),
    }
}

/// Index of the output cell whose span `[i*len/out, (i+1)*len/out)` holds
/// the center of input pixel `x`.
#[inline]
fn cell_of(x: usize, len: usize, out: usize) -> usize {
    (out * (2 * x + 1)) / (2 * len)
}

/// Area (box) average downsampling.
pub fn downsample_box(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 || out_w > img.width || out_h > img.height {
        return Err(Error::BadResize(format!(
            "cannot resize {}x{} to {out_w}x{out_h}",
            img.width, img.height
        )));
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let c = img.channels;
    let mut sums = vec![0u64; out_w * out_h * c];
    let mut counts = vec![0u64; out_w * out_h];
    for y in 0..img.height {
        let cy = cell_of(y, img.height, out_h);
        for x in 0..img.width {
            let cx = cell_of(x, img.width, out_w);
            let cell = cy * out_w + cx;
            counts[cell] += 1;
            let src = (y * img.width + x) * c;
            for ch in 0..c {
                sums[cell * c + ch] += img.pixels[src + ch] as u64;
            }
        }
    }
    let pixels = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| div_round_half_up(s, counts[i / c]) as u8)
        .collect();
    Image::new(out_w, out_h, c, pixels)
}
