//! Procedural fixtures: a seeded, periodic smoothed-noise texture panned
//! horizontally to emulate a camera sweeping past a scene at high frame rate.

use crate::imaging::{round_half_up, FrameSequence, Image};
use crate::rng::Lcg;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanningConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Horizontal translation per frame, in pixels.
    pub shift_px: usize,
    /// Box-filter radius of each smoothing pass.
    pub radius: usize,
    pub passes: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for PanningConfig {
    fn default() -> Self {
        PanningConfig {
            width: 512,
            height: 128,
            frames: 480,
            shift_px: 2,
            radius: 3,
            passes: 2,
            fps: 240.0,
            seed: 2024,
        }
    }
}

fn box_pass_periodic(src: &[f64], w: usize, h: usize, r: usize, horizontal: bool) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let k = (2 * r + 1) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in 0..=2 * r {
                let (sx, sy) = if horizontal {
                    ((x + w + d - r) % w, y)
                } else {
                    (x, (y + h + d - r) % h)
                };
                acc += src[sy * w + sx];
            }
            out[y * w + x] = acc / k;
        }
    }
    out
}

/// Seeded white noise smoothed by repeated separable box filters with
/// wrap-around edges, stretched to the full 8-bit range.
pub fn smoothed_noise(width: usize, height: usize, radius: usize, passes: usize, seed: u64) -> Image {
    let mut rng = Lcg::new(seed);
    let mut field: Vec<f64> = (0..width * height).map(|_| rng.next_f64()).collect();
    for _ in 0..passes {
        field = box_pass_periodic(&field, width, height, radius, true);
        field = box_pass_periodic(&field, width, height, radius, false);
    }
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::EPSILON);
    let pixels = field
        .iter()
        .map(|v| round_half_up((v - lo) / span * 255.0))
        .collect();
    Image::gray(width, height, pixels).expect("dimensions are consistent")
}

/// Frame `f` shows the texture translated left by `f * shift_px` columns.
pub fn panning_sequence(cfg: &PanningConfig) -> Result<FrameSequence> {
    let texture = smoothed_noise(cfg.width, cfg.height, cfg.radius, cfg.passes, cfg.seed);
    let (w, h) = (cfg.width, cfg.height);
    let src = texture.pixels();
    let frames = (0..cfg.frames)
        .map(|f| {
            let offset = (f * cfg.shift_px) % w;
            let mut px = Vec::with_capacity(w * h);
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                px.extend_from_slice(&row[offset..]);
                px.extend_from_slice(&row[..offset]);
            }
            Image::gray(w, h, px)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, cfg.fps, format!("panning-seed{}", cfg.seed))
}
