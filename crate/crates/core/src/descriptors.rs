//! Place descriptors: the native SAD descriptor, similarity metrics, and the
//! binary file format used to ingest descriptors computed by external models.
//!
//! # Descriptor files
//!
//! Little-endian binary:
//!
//! ```text
//! magic   8 bytes   "BBDSC1\0\0"
//! dim     u32
//! count   u32
//! values  count * dim f32, row-major
//! ```
//!
//! Each file has a sidecar `<file>.tsv` with one `index<TAB>level<TAB>source`
//! line per descriptor, in file order, and an optional leading
//! `# method: <label>` comment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::imaging::{downsample_box, to_grayscale, Image};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BBDSC1\0\0";
const HEADER_LEN: usize = 16;
const ZERO_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
    pub index: usize,
    pub level: u32,
    pub source: String,
}

impl Descriptor {
    pub fn new(values: Vec<f32>, index: usize, level: u32) -> Self {
        Descriptor {
            values,
            index,
            level,
            source: String::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// One descriptor per place, ordered by place index.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    method: String,
    dim: usize,
    descriptors: Vec<Descriptor>,
}

impl DescriptorSet {
    /// Sorts by place index and checks uniform dimension, finite values and
    /// contiguous indices from 0.
    pub fn new(method: impl Into<String>, mut descriptors: Vec<Descriptor>) -> Result<Self> {
        let dim = descriptors.first().map(Descriptor::dim).unwrap_or(0);
        if dim == 0 {
            return Err(Error::BadFormat("descriptor set is empty or zero-dimensional".into()));
        }
        if let Some(d) = descriptors.iter().find(|d| d.dim() != dim) {
            return Err(Error::BadDimensions(dim, d.dim()));
        }
        if descriptors.iter().any(|d| d.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::BadFormat("descriptor values must be finite".into()));
        }
        descriptors.sort_by_key(|d| d.index);
        if descriptors.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(Error::BadFormat(
                "descriptor place indices are not contiguous from 0".into(),
            ));
        }
        Ok(DescriptorSet {
            method: method.into(),
            dim,
            descriptors,
        })
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn get(&self, index: usize) -> &Descriptor {
        &self.descriptors[index]
    }
}

/// Downsampled, patch-normalized grayscale descriptor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SadConfig {
    pub down_w: usize,
    pub down_h: usize,
    pub patch: usize,
}

impl Default for SadConfig {
    fn default() -> Self {
        SadConfig {
            down_w: 64,
            down_h: 32,
            patch: 8,
        }
    }
}

impl SadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.down_w == 0 || self.down_h == 0 {
            return Err(Error::BadConfig(format!("zero-sized SAD parameter: {self:?}")));
        }
        if !self.down_w.is_multiple_of(self.patch) || !self.down_h.is_multiple_of(self.patch) {
            return Err(Error::BadConfig(format!(
                "{}x{} is not divisible into {}x{} patches",
                self.down_w, self.down_h, self.patch, self.patch
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.down_w * self.down_h
    }
}

/// Grayscale, box-downsample, then normalize each `patch x patch` tile to
/// zero mean and unit population standard deviation.
///
/// Tile statistics are computed from exact integer sums: with `S` the tile
/// sum and `n` its size, each deviation is `n*x - S` and the variance
/// numerator `sum (n*x - S)^2`, so adding a constant to every sample leaves
/// the result bit-identical.
pub fn extract_sad(img: &Image, cfg: &SadConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let gray = to_grayscale(img)?;
    let small = downsample_box(&gray, cfg.down_w, cfg.down_h)?;
    let px = small.pixels();
    let w = cfg.down_w;
    let n = (cfg.patch * cfg.patch) as i64;
    let mut out = vec![0f32; cfg.dim()];
    let mut tile = Vec::with_capacity(n as usize);

    for ty in (0..cfg.down_h).step_by(cfg.patch) {
        for tx in (0..w).step_by(cfg.patch) {
            tile.clear();
            for y in ty..ty + cfg.patch {
                tile.extend((tx..tx + cfg.patch).map(|x| (y * w + x, px[y * w + x] as i64)));
            }
            let sum: i64 = tile.iter().map(|&(_, v)| v).sum();
            let var_num: i64 = tile.iter().map(|&(_, v)| (n * v - sum).pow(2)).sum();
            // population std = sqrt(var_num) / n^1.5
            let std = (var_num as f64).sqrt() / (n as f64).powf(1.5);
            if std < ZERO_STD {
                continue;
            }
            let scale = (var_num as f64 / n as f64).sqrt();
            for &(pos, v) in &tile {
                out[pos] = ((n * v - sum) as f64 / scale) as f32;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Negated mean absolute difference; 0 for identical vectors.
    NegMad,
    Cosine,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::NegMad => "neg-mad",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-mad" | "neg_mad" => Ok(Metric::NegMad),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::BadArgument(format!("unknown metric '{other}'"))),
        }
    }
}

pub fn similarity(a: &[f32], b: &[f32], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::BadDimensions(a.len(), b.len()));
    }
    Ok(similarity_unchecked(a, b, metric))
}

pub(crate) fn similarity_unchecked(a: &[f32], b: &[f32], metric: Metric) -> f64 {
    match metric {
        Metric::NegMad => {
            let total: f64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (x as f64 - y as f64).abs())
                .sum();
            -total / a.len() as f64
        }
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
            for (&x, &y) in a.iter().zip(b) {
                let (x, y) = (x as f64, y as f64);
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return 0.0;
            }
            (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
        }
    }
}

/// Extracts SAD descriptors for images at `paths` (relative to `base`),
/// one per place in the given order.
pub fn describe_images(
    base: &Path,
    paths: &[&Path],
    level: u32,
    cfg: &SadConfig,
) -> Result<DescriptorSet> {
    use rayon::prelude::*;
    cfg.validate()?;
    let descriptors = paths
        .par_iter()
        .enumerate()
        .map(|(index, rel)| {
            let img = Image::load(&base.join(rel))?;
            Ok(Descriptor {
                values: extract_sad(&img, cfg)?,
                index,
                level,
                source: rel.display().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DescriptorSet::new("sad", descriptors)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tsv");
    PathBuf::from(s)
}

pub fn encode_descriptor_set(set: &DescriptorSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + set.len() * set.dim * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(set.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for d in &set.descriptors {
        for v in &d.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

/// Parses the binary payload into `count` rows of `dim` values.
pub fn decode_descriptor_values(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>)> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated(format!("{} bytes, no magic", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::BadFormat("bad magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} bytes, header incomplete", bytes.len())));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::BadFormat("zero dimension".into()));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::BadFormat("header size overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated(format!(
            "header declares {count}x{dim} values ({expected} bytes), payload has {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::BadFormat(format!(
            "{} trailing bytes after {count}x{dim} values",
            payload.len() - expected
        )));
    }
    let rows = payload
        .chunks_exact(dim * 4)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect();
    Ok((dim, rows))
}

pub fn save_descriptor_set(set: &DescriptorSet, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_descriptor_set(set)).map_err(|e| Error::io(path, e))?;
    let mut sidecar = format!("# method: {}\n", set.method);
    for d in &set.descriptors {
        sidecar.push_str(&format!("{}\t{}\t{}\n", d.index, d.level, d.source));
    }
    let side = sidecar_path(path);
    fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))
}

pub fn load_descriptor_set(path: &Path) -> Result<DescriptorSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, rows) = decode_descriptor_values(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;

    let mut method = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("external")
        .to_string();
    let mut ids = Vec::with_capacity(rows.len());
    for (lineno, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(m) = comment.trim().strip_prefix("method:") {
                method = m.trim().to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let bad = || Error::BadFormat(format!("{}:{}: malformed line", side.display(), lineno + 1));
        let index = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        let level = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        let source = fields.next().unwrap_or("").to_string();
        ids.push((index, level, source));
    }
    if ids.len() != rows.len() {
        return Err(Error::BadFormat(format!(
            "sidecar lists {} descriptors, file holds {}",
            ids.len(),
            rows.len()
        )));
    }
    let descriptors = rows
        .into_iter()
        .zip(ids)
        .map(|(values, (index, level, source))| Descriptor {
            values,
            index,
            level,
            source,
        })
        .collect();
    DescriptorSet::new(method, descriptors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = crate::rng::Lcg::new(seed);
        let px = (0..w * h).map(|_| 20 + (rng.next_u32() % 200) as u8).collect();
        Image::gray(w, h, px).unwrap()
    }

    #[test]
    fn sad_is_deterministic_and_sized() {
        let img = textured(128, 64, 1);
        let cfg = SadConfig::default();
        let a = extract_sad(&img, &cfg).unwrap();
        assert_eq!(a.len(), 64 * 32);
        assert_eq!(a, extract_sad(&img.clone(), &cfg).unwrap());
    }

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let img = Image::filled(128, 64, 3, 77).unwrap();
        let d = extract_sad(&img, &SadConfig::default()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brightness_offset_is_cancelled() {
        let img = textured(128, 64, 9);
        let brighter = img.map_samples(|v| v + 20);
        let cfg = SadConfig::default();
        assert_eq!(extract_sad(&img, &cfg).unwrap(), extract_sad(&brighter, &cfg).unwrap());
    }

    #[test]
    fn tile_normalization_matches_float_definition() {
        let img = textured(16, 16, 3);
        let cfg = SadConfig {
            down_w: 16,
            down_h: 16,
            patch: 4,
        };
        let d = extract_sad(&img, &cfg).unwrap();
        let px = img.pixels();
        for ty in (0..16).step_by(4) {
            for tx in (0..16).step_by(4) {
                let vals: Vec<f64> = (ty..ty + 4)
                    .flat_map(|y| (tx..tx + 4).map(move |x| px[y * 16 + x] as f64))
                    .collect();
                let mean = vals.iter().sum::<f64>() / 16.0;
                let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0).sqrt();
                for y in ty..ty + 4 {
                    for x in tx..tx + 4 {
                        let expect = (px[y * 16 + x] as f64 - mean) / std;
                        assert!((d[y * 16 + x] as f64 - expect).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn sad_rejects_indivisible_config() {
        let cfg = SadConfig {
            down_w: 60,
            down_h: 32,
            patch: 8,
        };
        assert!(matches!(
            extract_sad(&textured(64, 32, 1), &cfg),
            Err(Error::BadConfig(_))
        ));
    }

    #[test]
    fn similarity_examples() {
        let a = [0.3f32, -1.0, 2.0];
        assert_eq!(similarity(&a, &a, Metric::NegMad).unwrap(), 0.0);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0], Metric::Cosine).unwrap(), 0.0);
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let c = similarity(&[1.0, 0.0], &[h, h], Metric::Cosine).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(similarity(&[0.0, 0.0], &[1.0, 1.0], Metric::Cosine).unwrap(), 0.0);
        assert!(matches!(
            similarity(&[1.0], &[1.0, 2.0], Metric::NegMad),
            Err(Error::BadDimensions(1, 2))
        ));
    }

    #[test]
    fn header_errors() {
        let set = DescriptorSet::new(
            "t",
            (0..4).map(|i| Descriptor::new(vec![i as f32; 3], i, 1)).collect(),
        )
        .unwrap();
        let bytes = encode_descriptor_set(&set);
        assert!(decode_descriptor_values(&bytes).is_ok());

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_descriptor_values(&bad_magic), Err(Error::BadFormat(_))));

        let mut five = bytes.clone();
        five[12..16].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(decode_descriptor_values(&five), Err(Error::Truncated(_))));

        let mut three = bytes.clone();
        three[12..16].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(decode_descriptor_values(&three), Err(Error::BadFormat(_))));

        assert!(matches!(decode_descriptor_values(&bytes[..10]), Err(Error::Truncated(_))));
    }

    #[test]
    fn set_validation() {
        let mixed = vec![Descriptor::new(vec![1.0], 0, 1), Descriptor::new(vec![1.0, 2.0], 1, 1)];
        assert!(matches!(DescriptorSet::new("m", mixed), Err(Error::BadDimensions(1, 2))));
        let gap = vec![Descriptor::new(vec![1.0], 0, 1), Descriptor::new(vec![1.0], 2, 1)];
        assert!(matches!(DescriptorSet::new("m", gap), Err(Error::BadFormat(_))));
        let nan = vec![Descriptor::new(vec![f32::NAN], 0, 1)];
        assert!(matches!(DescriptorSet::new("m", nan), Err(Error::BadFormat(_))));
    }
}
