//! Similarity matrices, single-best-match precision-recall curves, AUC and
//! the level-by-variant result grids.
//!
//! Each query contributes exactly one retrieval: its highest scoring
//! reference (ties broken by the lowest reference index). Sweeping a
//! threshold over those best scores from high to low traces the PR curve;
//! the AUC is its trapezoidal area with a virtual start point at recall 0.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::blur_synth::BlurSchedule;
use crate::dataset::{GroundTruth, ResolvedPair};
use crate::descriptors::{
    describe_images, load_descriptor_set, similarity_unchecked, DescriptorSet, Metric, SadConfig,
};
use crate::{Error, Result};

/// Row-major `|Q| x |R|` scores, higher meaning more similar.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    metric: String,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, metric: impl Into<String>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(r) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::BadDimensions(n_cols, r.len()));
        }
        let scores: Vec<f64> = rows.into_iter().flatten().collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::BadArgument("similarity scores must be finite".into()));
        }
        Ok(SimilarityMatrix {
            rows: n_rows,
            cols: n_cols,
            scores,
            metric: metric.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.scores[row * self.cols..(row + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SimilarityMatrix {
        SimilarityMatrix {
            scores: self.scores.iter().map(|&s| f(s)).collect(),
            ..self.clone()
        }
    }
}

pub fn similarity_matrix(
    query: &DescriptorSet,
    reference: &DescriptorSet,
    metric: Metric,
) -> Result<SimilarityMatrix> {
    if query.dim() != reference.dim() {
        return Err(Error::BadDimensions(query.dim(), reference.dim()));
    }
    let cols = reference.len();
    let scores: Vec<f64> = query
        .descriptors()
        .par_iter()
        .flat_map_iter(|q| {
            reference
                .descriptors()
                .iter()
                .map(move |r| similarity_unchecked(&q.values, &r.values, metric))
        })
        .collect();
    Ok(SimilarityMatrix {
        rows: query.len(),
        cols,
        scores,
        metric: metric.name().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestMatch {
    pub reference: usize,
    pub score: f64,
    pub correct: bool,
}

/// Per-row argmax, ties resolved to the lowest reference index.
pub fn best_matches(m: &SimilarityMatrix, gt: &GroundTruth) -> Result<Vec<BestMatch>> {
    if gt.query_count() != m.rows {
        return Err(Error::BadGroundTruth(format!(
            "ground truth covers {} queries, matrix has {} rows",
            gt.query_count(),
            m.rows
        )));
    }
    gt.check_bounds(m.rows, m.cols)?;
    if m.cols == 0 {
        return Err(Error::BadArgument("similarity matrix has no reference columns".into()));
    }
    Ok((0..m.rows)
        .map(|q| {
            let row = m.row(q);
            let mut best = 0;
            for (j, &s) in row.iter().enumerate().skip(1) {
                if s > row[best] {
                    best = j;
                }
            }
            BestMatch {
                reference: best,
                score: row[best],
                correct: gt.is_correct(q, best),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Points in descending-threshold order; recall is non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub thresholds: Vec<f64>,
}

/// Builds the curve from per-query best matches; `positives` is the number
/// of queries that have at least one correct reference.
pub fn pr_curve_from_matches(best: &[BestMatch], positives: usize) -> Result<PrCurve> {
    if positives == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut order: Vec<&BestMatch> = best.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    let (mut accepted, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].score;
        while i < order.len() && order[i].score == t {
            accepted += 1;
            tp += order[i].correct as usize;
            i += 1;
        }
        points.push(PrPoint {
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / accepted as f64,
        });
        thresholds.push(t);
    }
    Ok(PrCurve { points, thresholds })
}

pub fn pr_curve(m: &SimilarityMatrix, gt: &GroundTruth) -> Result<PrCurve> {
    let best = best_matches(m, gt)?;
    pr_curve_from_matches(&best, gt.positives())
}

/// Trapezoidal area under the curve, starting from a virtual point at
/// recall 0 with the first point's precision. Clamped to `[0, 1]`.
pub fn auc(curve: &PrCurve) -> Result<f64> {
    let first = curve.points.first().ok_or(Error::EmptyCurve)?;
    let mut prev = PrPoint {
        recall: 0.0,
        precision: first.precision,
    };
    let mut area = 0.0;
    for p in &curve.points {
        area += (p.recall - prev.recall) * (p.precision + prev.precision) / 2.0;
        prev = *p;
    }
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub auc: f64,
    pub curve: PrCurve,
    pub best: Vec<BestMatch>,
}

pub fn evaluate(m: &SimilarityMatrix, gt: &GroundTruth) -> Result<EvalResult> {
    let best = best_matches(m, gt)?;
    let curve = pr_curve_from_matches(&best, gt.positives())?;
    Ok(EvalResult {
        auc: auc(&curve)?,
        curve,
        best,
    })
}

/// Supplies descriptor sets for one (VPR method, deblur variant) column
/// family of a result grid.
pub trait DescriptorSource: Sync {
    fn method(&self) -> &str;
    fn deblur(&self) -> &str;
    fn metric(&self) -> Metric;
    fn query(&self, pair: &ResolvedPair, level: u32) -> Result<DescriptorSet>;
    fn reference(&self, pair: &ResolvedPair) -> Result<DescriptorSet>;
}

/// Computes SAD descriptors directly from the traverse images.
#[derive(Debug, Clone)]
pub struct NativeSad {
    pub config: SadConfig,
    pub metric: Metric,
}

impl Default for NativeSad {
    fn default() -> Self {
        NativeSad {
            config: SadConfig::default(),
            metric: Metric::NegMad,
        }
    }
}

impl DescriptorSource for NativeSad {
    fn method(&self) -> &str {
        "sad"
    }

    fn deblur(&self) -> &str {
        "none"
    }

    fn metric(&self) -> Metric {
        self.metric
    }

    fn query(&self, pair: &ResolvedPair, level: u32) -> Result<DescriptorSet> {
        let paths = pair.pair.query.level_paths(level)?;
        describe_images(&pair.query_dir, &paths, level, &self.config)
    }

    fn reference(&self, pair: &ResolvedPair) -> Result<DescriptorSet> {
        let level = pair.pair.reference_level;
        let paths = pair.pair.reference.level_paths(level)?;
        describe_images(&pair.reference_dir, &paths, level, &self.config)
    }
}

/// Precomputed descriptor files laid out as `<root>/<traverse>/L<LLL>.bbd`.
#[derive(Debug, Clone)]
pub struct DescriptorDir {
    pub method: String,
    pub deblur: String,
    pub root: PathBuf,
    pub metric: Metric,
}

impl DescriptorDir {
    pub fn file_for(&self, traverse: &str, level: u32) -> PathBuf {
        self.root.join(traverse).join(format!("L{level:03}.bbd"))
    }
}

impl DescriptorSource for DescriptorDir {
    fn method(&self) -> &str {
        &self.method
    }

    fn deblur(&self) -> &str {
        &self.deblur
    }

    fn metric(&self) -> Metric {
        self.metric
    }

    fn query(&self, pair: &ResolvedPair, level: u32) -> Result<DescriptorSet> {
        load_descriptor_set(&self.file_for(&pair.pair.query.name, level))
    }

    fn reference(&self, pair: &ResolvedPair) -> Result<DescriptorSet> {
        load_descriptor_set(&self.file_for(&pair.pair.reference.name, pair.pair.reference_level))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub pair: String,
    pub method: String,
    pub deblur: String,
    pub cells: Vec<Option<f64>>,
}

impl GridRow {
    /// Mean and population standard deviation over the present cells.
    pub fn stats(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = self.cells.iter().flatten().copied().collect();
        if vals.is_empty() {
            return None;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub pair: String,
    pub method: String,
    pub deblur: String,
    pub level: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCurve {
    pub pair: String,
    pub method: String,
    pub deblur: String,
    pub level: u32,
    pub auc: f64,
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTable {
    pub levels: Vec<u32>,
    pub rows: Vec<GridRow>,
    pub failures: Vec<CellFailure>,
    pub curves: Vec<CellCurve>,
}

impl GridTable {
    pub fn header(&self) -> String {
        let mut h = String::from("pair,method,deblur");
        for l in &self.levels {
            let _ = write!(h, ",L{l:03}");
        }
        h.push_str(",avg,std");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{},{}", row.pair, row.method, row.deblur);
            for c in &row.cells {
                match c {
                    Some(v) => {
                        let _ = write!(out, ",{v:.4}");
                    }
                    None => out.push(','),
                }
            }
            match row.stats() {
                Some((mean, std)) => {
                    let _ = write!(out, ",{mean:.4},{std:.4}");
                }
                None => out.push_str(",,"),
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn eval_cell(
    pair: &ResolvedPair,
    source: &dyn DescriptorSource,
    reference: &DescriptorSet,
    level: u32,
) -> Result<EvalResult> {
    if !pair.pair.query.has_level(level) {
        return Err(Error::LevelUnavailable(level));
    }
    let query = source.query(pair, level)?;
    let m = similarity_matrix(&query, reference, source.metric())?;
    evaluate(&m, &pair.pair.ground_truth)
}

/// Evaluates every (pair, variant) row across the schedule.
///
/// Cell failures never abort the grid: the cell is left empty, a warning is
/// logged and the failure is listed in [`GridTable::failures`].
pub fn evaluate_grid(
    pairs: &[ResolvedPair],
    levels: &BlurSchedule,
    variants: &[&dyn DescriptorSource],
) -> GridTable {
    let mut table = GridTable {
        levels: levels.levels().to_vec(),
        rows: Vec::new(),
        failures: Vec::new(),
        curves: Vec::new(),
    };
    for pair in pairs {
        for &source in variants {
            let mut row = GridRow {
                pair: pair.name.clone(),
                method: source.method().to_string(),
                deblur: source.deblur().to_string(),
                cells: Vec::with_capacity(levels.len()),
            };
            let reference = source.reference(pair);
            for &level in levels.levels() {
                let result = match &reference {
                    Ok(r) => eval_cell(pair, source, r, level),
                    Err(e) => Err(Error::BadArgument(format!("reference descriptors: {e}"))),
                };
                match result {
                    Ok(res) => {
                        row.cells.push(Some(res.auc));
                        table.curves.push(CellCurve {
                            pair: row.pair.clone(),
                            method: row.method.clone(),
                            deblur: row.deblur.clone(),
                            level,
                            auc: res.auc,
                            points: res.curve.points,
                        });
                    }
                    Err(e) => {
                        log::warn!(
                            "cell {}/{}/{}/L{level:03} left empty: {e}",
                            row.pair,
                            row.method,
                            row.deblur
                        );
                        row.cells.push(None);
                        table.failures.push(CellFailure {
                            pair: row.pair.clone(),
                            method: row.method.clone(),
                            deblur: row.deblur.clone(),
                            level,
                            message: e.to_string(),
                        });
                    }
                }
            }
            table.rows.push(row);
        }
    }
    table
}
