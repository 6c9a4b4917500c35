//! Laplacian-variance blur scoring and supervised threshold calibration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::imaging::{to_grayscale, Image};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BlurScore(pub f64);

impl BlurScore {
    pub fn variance(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Sharp,
    Blurred,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Sharp => "sharp",
            Decision::Blurred => "blurred",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sharp_samples: usize,
    pub blurred_samples: usize,
    pub misclassified: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl Threshold {
    pub fn new(cutoff: f64) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff >= 0.0) {
            return Err(Error::BadArgument(format!("cutoff must be >= 0, got {cutoff}")));
        }
        Ok(Threshold {
            cutoff,
            calibration: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: Threshold = read_json(path)?;
        Threshold::new(t.cutoff)?;
        Ok(t)
    }
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(img: &Image) -> Result<BlurScore> {
    let gray = to_grayscale(img)?;
    let (w, h) = (gray.width(), gray.height());
    if w < 3 || h < 3 {
        return Err(Error::TooSmall {
            width: w,
            height: h,
        });
    }
    let px = gray.pixels();
    let at = |y: usize, x: usize| px[y * w + x] as i64;
    // Responses fit in i64 with exact sums; variance = (n*Q - S^2) / n^2.
    let (mut sum, mut sum_sq) = (0i128, 0i128);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let r = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4 * at(y, x);
            sum += r as i128;
            sum_sq += (r * r) as i128;
        }
    }
    let n = ((w - 2) * (h - 2)) as i128;
    let var = (n * sum_sq - sum * sum) as f64 / (n * n) as f64;
    Ok(BlurScore(var.max(0.0)))
}

/// Sharp iff the variance reaches the cutoff.
pub fn classify(score: BlurScore, th: &Threshold) -> Decision {
    if score.0 >= th.cutoff {
        Decision::Sharp
    } else {
        Decision::Blurred
    }
}

fn misclassified(sharp: &[f64], blurred: &[f64], cutoff: f64) -> usize {
    sharp.iter().filter(|&&s| s < cutoff).count() + blurred.iter().filter(|&&b| b >= cutoff).count()
}

/// Chooses the midpoint between adjacent distinct scores that minimizes
/// misclassifications, preferring the lowest cutoff on ties.
///
/// With a single distinct score there is no midpoint and that score itself
/// is the only candidate.
pub fn calibrate_threshold(sharp: &[f64], blurred: &[f64]) -> Result<Threshold> {
    if sharp.is_empty() || blurred.is_empty() {
        return Err(Error::BadCalibration(format!(
            "need both populations, got {} sharp and {} blurred",
            sharp.len(),
            blurred.len()
        )));
    }
    if sharp.iter().chain(blurred).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::BadCalibration("scores must be finite and >= 0".into()));
    }
    let mut merged: Vec<f64> = sharp.iter().chain(blurred).copied().collect();
    merged.sort_by(f64::total_cmp);
    merged.dedup();
    let candidates: Vec<f64> = if merged.len() == 1 {
        merged.clone()
    } else {
        merged.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
    };

    let mut best = (usize::MAX, 0.0);
    for &c in &candidates {
        let err = misclassified(sharp, blurred, c);
        if err < best.0 {
            best = (err, c);
        }
    }
    let (errors, cutoff) = best;
    let warning = (errors > 0).then(|| {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        if mean(sharp) < mean(blurred) {
            format!("populations look inverted: {errors} calibration samples misclassified")
        } else {
            format!("populations overlap: {errors} calibration samples misclassified")
        }
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Threshold {
        cutoff,
        calibration: Some(Calibration {
            sharp_samples: sharp.len(),
            blurred_samples: blurred.len(),
            misclassified: errors,
            warning,
        }),
    })
}
