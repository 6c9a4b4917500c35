//! Adaptive deblurring pipelines with time and energy accounting.
//!
//! Three strategies are compared on a mixed-blur query sequence:
//! describe every query as-is, deblur every query first, or deblur only the
//! queries the Laplacian-variance detector flags as blurred. Deblurring is
//! delegated to an external program that processes a directory of images.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::blur_detect::{classify, laplacian_variance, Decision, Threshold};
use crate::dataset::{GroundTruth, MixSequence, Traverse};
use crate::descriptors::{extract_sad, Descriptor, DescriptorSet, Metric, SadConfig};
use crate::evaluation::{evaluate, similarity_matrix, EvalResult};
use crate::imaging::Image;
use crate::{Error, Result};

pub const IN_DIR: &str = "{in_dir}";
pub const OUT_DIR: &str = "{out_dir}";

/// External deblurrer invoked as `argv` with `{in_dir}`/`{out_dir}`
/// substituted. No shell is involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeblurBridge {
    pub argv: Vec<String>,
    pub timeout_s: f64,
    pub batch_size: usize,
}

impl DeblurBridge {
    pub fn new(argv: Vec<String>, timeout_s: f64, batch_size: usize) -> Result<Self> {
        let b = DeblurBridge {
            argv,
            timeout_s,
            batch_size,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.argv.is_empty() {
            return Err(Error::BadConfig("deblur command is empty".into()));
        }
        for placeholder in [IN_DIR, OUT_DIR] {
            if !self.argv.iter().any(|a| a.contains(placeholder)) {
                return Err(Error::BadConfig(format!(
                    "deblur command lacks the {placeholder} placeholder"
                )));
            }
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::BadConfig(format!("timeout must be > 0, got {}", self.timeout_s)));
        }
        if self.batch_size == 0 {
            return Err(Error::BadConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }

    fn command_for(&self, in_dir: &Path, out_dir: &Path) -> Vec<String> {
        let (i, o) = (in_dir.display().to_string(), out_dir.display().to_string());
        self.argv
            .iter()
            .map(|a| a.replace(IN_DIR, &i).replace(OUT_DIR, &o))
            .collect()
    }
}

fn staged_name(k: usize) -> String {
    format!("{k:06}.png")
}

fn run_with_timeout(argv: &[String], log_dir: &Path, timeout: Duration) -> Result<()> {
    let stdout_path = log_dir.join("stdout.log");
    let stderr_path = log_dir.join("stderr.log");
    let stdout = fs::File::create(&stdout_path).map_err(|e| Error::io(&stdout_path, e))?;
    let stderr = fs::File::create(&stderr_path).map_err(|e| Error::io(&stderr_path, e))?;
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::DeblurFailed(format!("cannot start '{}': {e}", argv[0])))?;
    let started = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout(timeout.as_secs_f64()));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(Error::DeblurFailed(e.to_string())),
        }
    };
    if !status.success() {
        let err = fs::read_to_string(&stderr_path).unwrap_or_default();
        let tail: String = err.lines().rev().take(5).collect::<Vec<_>>().join(" | ");
        return Err(Error::DeblurFailed(format!("{status}: {tail}")));
    }
    Ok(())
}

/// Runs the bridge once over `images` and returns the outputs in input order.
pub fn invoke_deblurrer(bridge: &DeblurBridge, images: &[Image]) -> Result<Vec<Image>> {
    bridge.validate()?;
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let stage = tempfile::Builder::new()
        .prefix("blurbench-deblur-")
        .tempdir()
        .map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let in_dir = stage.path().join("in");
    let out_dir = stage.path().join("out");
    for dir in [&in_dir, &out_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (k, img) in images.iter().enumerate() {
        img.save_png(&in_dir.join(staged_name(k)))?;
    }

    let argv = bridge.command_for(&in_dir, &out_dir);
    run_with_timeout(&argv, stage.path(), Duration::from_secs_f64(bridge.timeout_s))?;

    images
        .iter()
        .enumerate()
        .map(|(k, input)| {
            let name = staged_name(k);
            let path = out_dir.join(&name);
            if !path.is_file() {
                return Err(Error::IncompleteOutput(name));
            }
            let out = Image::load(&path)?;
            if out.width() != input.width() || out.height() != input.height() {
                return Err(Error::BadOutput(format!(
                    "{name} is {}x{}, input was {}x{}",
                    out.width(),
                    out.height(),
                    input.width(),
                    input.height()
                )));
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NoDeblur,
    AllDeblur,
    DetectDeblur,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoDeblur => "no-deblur",
            Mode::AllDeblur => "all-deblur",
            Mode::DetectDeblur => "detect-deblur",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub threshold: Option<Threshold>,
    pub bridge: Option<DeblurBridge>,
    pub metric: Metric,
    pub sad: SadConfig,
}

impl PipelineConfig {
    pub fn new(mode: Mode) -> Self {
        PipelineConfig {
            mode,
            threshold: None,
            bridge: None,
            metric: Metric::NegMad,
            sad: SadConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::DetectDeblur && self.threshold.is_none() {
            return Err(Error::BadConfig("detect-deblur mode needs a threshold".into()));
        }
        if self.mode != Mode::NoDeblur {
            self.bridge
                .as_ref()
                .ok_or_else(|| {
                    Error::BadConfig(format!("{} mode needs a deblur command", self.mode.as_str()))
                })?
                .validate()?;
        }
        self.sad.validate()
    }
}

/// One query image on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryImage {
    pub index: usize,
    pub level: u32,
    pub path: PathBuf,
}

/// Resolves a mix against its traverse; paths are joined onto `base`.
pub fn mix_queries(mix: &MixSequence, traverse: &Traverse, base: &Path) -> Result<Vec<QueryImage>> {
    if mix.traverse != traverse.name {
        return Err(Error::BadManifest(format!(
            "mix was drawn from '{}', not '{}'",
            mix.traverse, traverse.name
        )));
    }
    mix.entries
        .iter()
        .map(|e| {
            Ok(QueryImage {
                index: e.index,
                level: e.level,
                path: base.join(traverse.image_path(e.index, e.level)?),
            })
        })
        .collect()
}

/// Timing of one query through the pipeline, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: usize,
    pub load_s: f64,
    pub detect_s: f64,
    pub deblur_s: f64,
    pub describe_s: f64,
    pub detected_blurred: bool,
    pub deblurred: bool,
}

impl QueryRecord {
    pub fn total_s(&self) -> f64 {
        self.load_s + self.detect_s + self.deblur_s + self.describe_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub mode: Mode,
    pub queries: usize,
    pub time_per_query_ms: f64,
    pub total_time_s: f64,
    pub energy_j: Option<f64>,
    pub auc: Option<f64>,
    pub deblur_invocations: usize,
    pub detected_blurred: usize,
    /// Wall time spent inside the external deblurrer, model loading included.
    pub deblur_time_s: f64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

impl PipelineStats {
    /// Merges per-query records; the result does not depend on their order.
    pub fn from_records(mode: Mode, records: &[QueryRecord], total_time_s: f64) -> Self {
        let n = records.len();
        let per_query_s: f64 = records.iter().map(QueryRecord::total_s).sum();
        let mean_ms = if n == 0 { 0.0 } else { per_query_s * 1e3 / n as f64 };
        PipelineStats {
            mode,
            queries: n,
            time_per_query_ms: (mean_ms * 100.0).round() / 100.0,
            total_time_s,
            energy_j: None,
            auc: None,
            deblur_invocations: records.iter().filter(|r| r.deblurred).count(),
            detected_blurred: records.iter().filter(|r| r.detected_blurred).count(),
            deblur_time_s: records.iter().map(|r| r.deblur_s).sum(),
            started_unix_s: 0.0,
            finished_unix_s: 0.0,
        }
    }

    /// Sets `energy_j` from a power log covering the run's wall-clock span.
    pub fn attach_energy(&mut self, log: &[PowerSample]) -> Result<()> {
        self.energy_j = integrate_energy(log, self.started_unix_s, self.finished_unix_s)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

/// Describes every query under `cfg.mode`, evaluates against `reference`, and
/// accounts time per query.
///
/// A failure aborts the run with [`Error::Aborted`], which carries the stats
/// accumulated so far and the id of the failing query.
pub fn run_pipeline(
    queries: &[QueryImage],
    reference: &DescriptorSet,
    gt: &GroundTruth,
    cfg: &PipelineConfig,
) -> Result<(EvalResult, PipelineStats)> {
    cfg.validate()?;
    let started_unix = unix_now();
    let started = Instant::now();
    let batch = cfg.bridge.as_ref().map(|b| b.batch_size).unwrap_or(queries.len().max(1));
    let mut records: Vec<QueryRecord> = Vec::with_capacity(queries.len());
    let mut descriptors = Vec::with_capacity(queries.len());

    let abort = |records: &[QueryRecord], query: usize, e: Error| {
        let mut stats =
            PipelineStats::from_records(cfg.mode, records, started.elapsed().as_secs_f64());
        stats.started_unix_s = started_unix;
        stats.finished_unix_s = unix_now();
        Error::Aborted {
            query,
            stats: Box::new(stats),
            source: Box::new(e),
        }
    };

    for chunk in queries.chunks(batch) {
        let mut chunk_records = Vec::with_capacity(chunk.len());
        let mut images = Vec::with_capacity(chunk.len());
        for q in chunk {
            let mut rec = QueryRecord {
                index: q.index,
                ..Default::default()
            };
            let (img, t) = timed(|| Image::load(&q.path));
            rec.load_s = t;
            let img = img.map_err(|e| abort(&records, q.index, e))?;
            match cfg.mode {
                Mode::NoDeblur => {}
                Mode::AllDeblur => rec.deblurred = true,
                Mode::DetectDeblur => {
                    let th = cfg.threshold.as_ref().expect("validated");
                    let (score, t) = timed(|| laplacian_variance(&img));
                    rec.detect_s = t;
                    let score = score.map_err(|e| abort(&records, q.index, e))?;
                    rec.detected_blurred = classify(score, th) == Decision::Blurred;
                    rec.deblurred = rec.detected_blurred;
                }
            }
            chunk_records.push(rec);
            images.push(img);
        }

        let selected: Vec<usize> = (0..chunk.len()).filter(|&k| chunk_records[k].deblurred).collect();
        if !selected.is_empty() {
            let bridge = cfg.bridge.as_ref().expect("validated");
            let inputs: Vec<Image> = selected.iter().map(|&k| images[k].clone()).collect();
            let (outputs, t) = timed(|| invoke_deblurrer(bridge, &inputs));
            let outputs = outputs.map_err(|e| abort(&records, chunk[selected[0]].index, e))?;
            let share = t / selected.len() as f64;
            for (&k, out) in selected.iter().zip(outputs) {
                images[k] = out;
                chunk_records[k].deblur_s = share;
            }
        }

        for ((q, img), mut rec) in chunk.iter().zip(&images).zip(chunk_records) {
            let (values, t) = timed(|| extract_sad(img, &cfg.sad));
            rec.describe_s = t;
            let values = values.map_err(|e| abort(&records, q.index, e))?;
            descriptors.push(Descriptor {
                values,
                index: q.index,
                level: q.level,
                source: q.path.display().to_string(),
            });
            records.push(rec);
        }
    }

    let total = started.elapsed().as_secs_f64();
    let mut stats = PipelineStats::from_records(cfg.mode, &records, total);
    stats.started_unix_s = started_unix;
    stats.finished_unix_s = unix_now();

    let query_set = DescriptorSet::new("sad", descriptors)?;
    let m = similarity_matrix(&query_set, reference, cfg.metric)?;
    let result = evaluate(&m, gt)?;
    stats.auc = Some(result.auc);
    Ok((result, stats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub t: f64,
    pub watts: f64,
}

/// Parses `timestamp_s,watts` rows; a non-numeric first line is a header.
pub fn parse_power_log(text: &str) -> Result<Vec<PowerSample>> {
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(t), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::BadPowerLog(format!("line {}: expected 2 fields", lineno + 1)));
        };
        match (t.trim().parse::<f64>(), w.trim().parse::<f64>()) {
            (Ok(t), Ok(watts)) if t.is_finite() && watts.is_finite() => {
                samples.push(PowerSample { t, watts })
            }
            _ if lineno == 0 && samples.is_empty() => continue,
            _ => {
                return Err(Error::BadPowerLog(format!("line {}: not numeric", lineno + 1)));
            }
        }
    }
    Ok(samples)
}

pub fn load_power_log(path: &Path) -> Result<Vec<PowerSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_power_log(&text)
}

fn interpolate(a: PowerSample, b: PowerSample, t: f64) -> f64 {
    a.watts + (b.watts - a.watts) * (t - a.t) / (b.t - a.t)
}

/// Trapezoidal energy over `[t0, t1]`, interpolating linearly at the bounds.
///
/// Returns `Ok(None)` when the log is empty or does not cover the interval.
pub fn integrate_energy(log: &[PowerSample], t0: f64, t1: f64) -> Result<Option<f64>> {
    if log.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::BadPowerLog("timestamps must be strictly increasing".into()));
    }
    if !(t0.is_finite() && t1.is_finite()) || t1 < t0 {
        return Err(Error::BadArgument(format!("bad integration interval [{t0}, {t1}]")));
    }
    let (Some(first), Some(last)) = (log.first(), log.last()) else {
        return Ok(None);
    };
    if first.t > t0 || last.t < t1 {
        return Ok(None);
    }
    let at = |t: f64| -> PowerSample {
        let k = log.partition_point(|s| s.t < t);
        let watts = if log[k].t == t {
            log[k].watts
        } else {
            interpolate(log[k - 1], log[k], t)
        };
        PowerSample { t, watts }
    };
    let mut prev = at(t0);
    let mut energy = 0.0;
    for &s in log.iter().filter(|s| s.t > t0 && s.t < t1) {
        energy += (s.t - prev.t) * (s.watts + prev.watts) / 2.0;
        prev = s;
    }
    let end = at(t1);
    energy += (end.t - prev.t) * (end.watts + prev.watts) / 2.0;
    Ok(Some(energy))
}
