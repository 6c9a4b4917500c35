//! Traverses, query/reference pairs, ground truth and shuffled blur mixes.
//!
//! Everything here is persisted as JSON manifests. Image paths inside a
//! manifest are stored as written and resolved against the manifest's own
//! directory when files are needed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::rng::Lcg;
use crate::{Error, Result};

/// Default ground-truth tolerance in places.
pub const DEFAULT_TOLERANCE: usize = 1;

/// Scene condition tags carried by a traverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Motion blur.
    #[serde(rename = "MB")]
    MotionBlur,
    #[serde(rename = "W")]
    Weather,
    #[serde(rename = "I")]
    Illumination,
    #[serde(rename = "VP")]
    Viewpoint,
}

impl Condition {
    pub fn tag(self) -> &'static str {
        match self {
            Condition::MotionBlur => "MB",
            Condition::Weather => "W",
            Condition::Illumination => "I",
            Condition::Viewpoint => "VP",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MB" => Ok(Condition::MotionBlur),
            "W" => Ok(Condition::Weather),
            "I" => Ok(Condition::Illumination),
            "VP" => Ok(Condition::Viewpoint),
            other => Err(Error::BadArgument(format!("unknown condition tag '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub index: usize,
    pub level: u32,
    pub path: PathBuf,
}

/// One recorded pass along a route, one image per (place, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traverse {
    pub name: String,
    pub route: String,
    pub conditions: BTreeSet<Condition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub fps: f64,
    pub levels: Vec<u32>,
    pub places: Vec<ImageRef>,
}

impl Traverse {
    pub fn new(
        name: String,
        route: String,
        conditions: BTreeSet<Condition>,
        fps: f64,
        levels: Vec<u32>,
        places: Vec<ImageRef>,
    ) -> Result<Self> {
        let t = Traverse {
            name,
            route,
            conditions,
            notes: Vec::new(),
            fps,
            levels,
            places,
        };
        t.validate()?;
        Ok(t)
    }

    /// Checks the structural invariants: known strictly increasing levels, no
    /// duplicate (place, level), contiguous indices and equal counts per level.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::BadManifest("traverse name is empty".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::BadManifest(format!("fps must be positive, got {}", self.fps)));
        }
        if self.levels.is_empty() {
            return Err(Error::BadManifest("traverse lists no levels".into()));
        }
        if self.levels[0] == 0 || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadManifest(format!(
                "levels must be >= 1 and strictly increasing: {:?}",
                self.levels
            )));
        }
        let mut per_level: BTreeMap<u32, BTreeSet<usize>> =
            self.levels.iter().map(|&l| (l, BTreeSet::new())).collect();
        for p in &self.places {
            let set = per_level.get_mut(&p.level).ok_or_else(|| {
                Error::BadManifest(format!("place {} uses undeclared level {}", p.index, p.level))
            })?;
            if !set.insert(p.index) {
                return Err(Error::BadManifest(format!(
                    "duplicate place index {} at level {}",
                    p.index, p.level
                )));
            }
        }
        let mut count = None;
        for (level, set) in &per_level {
            let n = set.len();
            if n == 0 {
                return Err(Error::BadManifest(format!("level {level} has no places")));
            }
            if set.iter().next_back() != Some(&(n - 1)) {
                return Err(Error::BadManifest(format!(
                    "place indices at level {level} are not contiguous from 0"
                )));
            }
            match count {
                None => count = Some(n),
                Some(c) if c != n => {
                    return Err(Error::BadManifest(format!(
                        "level {level} has {n} places, other levels have {c}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn place_count(&self) -> usize {
        let first = self.levels[0];
        self.places.iter().filter(|p| p.level == first).count()
    }

    pub fn has_level(&self, level: u32) -> bool {
        self.levels.contains(&level)
    }

    /// Image paths at `level`, ordered by place index.
    pub fn level_paths(&self, level: u32) -> Result<Vec<&Path>> {
        if !self.has_level(level) {
            return Err(Error::LevelUnavailable(level));
        }
        let mut refs: Vec<&ImageRef> = self.places.iter().filter(|p| p.level == level).collect();
        refs.sort_by_key(|p| p.index);
        Ok(refs.into_iter().map(|p| p.path.as_path()).collect())
    }

    pub fn image_path(&self, index: usize, level: u32) -> Result<&Path> {
        if !self.has_level(level) {
            return Err(Error::LevelUnavailable(level));
        }
        self.places
            .iter()
            .find(|p| p.index == index && p.level == level)
            .map(|p| p.path.as_path())
            .ok_or_else(|| Error::BadArgument(format!("no place {index} at level {level}")))
    }

    /// Confirms every referenced image exists relative to `base`.
    pub fn validate_files(&self, base: &Path) -> Result<()> {
        for p in &self.places {
            let full = base.join(&p.path);
            if !full.is_file() {
                return Err(Error::MissingImage(full));
            }
        }
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::BadManifest(e.to_string()))?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::BadManifest(format!("{}: {e}", path.display())))
}

/// Directory that relative paths inside a manifest resolve against.
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn save_traverse(t: &Traverse, path: &Path) -> Result<()> {
    t.validate()?;
    write_json(t, path)
}

/// Loads and structurally validates a traverse manifest. File existence is
/// checked separately with [`Traverse::validate_files`].
pub fn load_traverse(path: &Path) -> Result<Traverse> {
    let t: Traverse = read_json(path)?;
    t.validate()?;
    Ok(t)
}

/// Per-query sets of correct reference place indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<usize>,
    pub matches: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn new(matches: Vec<Vec<usize>>, tolerance: Option<usize>) -> Self {
        GroundTruth { tolerance, matches }
    }

    pub fn query_count(&self) -> usize {
        self.matches.len()
    }

    pub fn matches_of(&self, query: usize) -> &[usize] {
        &self.matches[query]
    }

    pub fn is_correct(&self, query: usize, reference: usize) -> bool {
        self.matches[query].contains(&reference)
    }

    /// Queries with at least one correct reference.
    pub fn positives(&self) -> usize {
        self.matches.iter().filter(|m| !m.is_empty()).count()
    }

    pub fn check_bounds(&self, n_query: usize, n_reference: usize) -> Result<()> {
        if self.matches.len() != n_query {
            return Err(Error::BadGroundTruth(format!(
                "ground truth covers {} queries, query side has {n_query}",
                self.matches.len()
            )));
        }
        for (q, m) in self.matches.iter().enumerate() {
            if let Some(&r) = m.iter().find(|&&r| r >= n_reference) {
                return Err(Error::BadGroundTruth(format!(
                    "query {q} references place {r}, reference has {n_reference}"
                )));
            }
        }
        Ok(())
    }

    /// Reads `query<TAB>ref_low<TAB>ref_high` lines. Queries not listed get
    /// no correct reference; a query listed twice accumulates both ranges.
    pub fn from_correspondence(path: &Path, n_query: usize, n_reference: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_correspondence(&text, n_query, n_reference)
    }

    pub fn parse_correspondence(text: &str, n_query: usize, n_reference: usize) -> Result<Self> {
        let mut matches: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_query];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parsed: Vec<usize> = fields
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::BadGroundTruth(format!("line {}: {e}", lineno + 1)))?;
            let [q, lo, hi] = parsed[..] else {
                return Err(Error::BadGroundTruth(format!(
                    "line {}: expected 3 tab-separated fields",
                    lineno + 1
                )));
            };
            if q >= n_query || hi >= n_reference || lo > hi {
                return Err(Error::BadGroundTruth(format!(
                    "line {}: {q} -> [{lo}, {hi}] out of bounds ({n_query} queries, {n_reference} references)",
                    lineno + 1
                )));
            }
            matches[q].extend(lo..=hi);
        }
        Ok(GroundTruth {
            tolerance: None,
            matches: matches.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }
}

/// Same-traverse ground truth: query `i` matches references within `tolerance`.
pub fn identity_ground_truth(n_query: usize, tolerance: usize) -> GroundTruth {
    let matches = (0..n_query)
        .map(|i| (i.saturating_sub(tolerance)..=(i + tolerance).min(n_query.saturating_sub(1))).collect())
        .collect();
    GroundTruth {
        tolerance: Some(tolerance),
        matches,
    }
}

/// A query traverse at one blur level matched against a sharp reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub query: Traverse,
    pub query_level: u32,
    pub reference: Traverse,
    pub reference_level: u32,
    pub ground_truth: GroundTruth,
    pub conditions: BTreeSet<Condition>,
}

pub fn build_pair(
    query: Traverse,
    query_level: u32,
    reference: Traverse,
    ground_truth: GroundTruth,
) -> Result<DatasetPair> {
    build_pair_with_reference_level(query, query_level, reference, 1, ground_truth)
}

pub fn build_pair_with_reference_level(
    query: Traverse,
    query_level: u32,
    reference: Traverse,
    reference_level: u32,
    ground_truth: GroundTruth,
) -> Result<DatasetPair> {
    if !query.has_level(query_level) {
        return Err(Error::LevelUnavailable(query_level));
    }
    if !reference.has_level(reference_level) {
        return Err(Error::LevelUnavailable(reference_level));
    }
    ground_truth.check_bounds(query.place_count(), reference.place_count())?;
    let mut conditions: BTreeSet<Condition> = query
        .conditions
        .symmetric_difference(&reference.conditions)
        .copied()
        .collect();
    if query_level > 1 {
        conditions.insert(Condition::MotionBlur);
    }
    Ok(DatasetPair {
        query,
        query_level,
        reference,
        reference_level,
        ground_truth,
        conditions,
    })
}

/// Where a pair manifest gets its ground truth from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthSource {
    /// Same-traverse mapping with the given tolerance.
    Identity(usize),
    Inline(GroundTruth),
    /// Correspondence file, relative to the pair manifest.
    File(PathBuf),
}

/// On-disk form of a [`DatasetPair`]: traverse manifests by path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairManifest {
    pub name: String,
    pub query: PathBuf,
    pub query_level: u32,
    pub reference: PathBuf,
    #[serde(default = "sharp_level")]
    pub reference_level: u32,
    pub ground_truth: GroundTruthSource,
}

fn sharp_level() -> u32 {
    1
}

/// A pair manifest loaded together with its traverses.
#[derive(Debug, Clone)]
pub struct ResolvedPair {
    pub name: String,
    pub pair: DatasetPair,
    /// Base directories for the query and reference image paths.
    pub query_dir: PathBuf,
    pub reference_dir: PathBuf,
}

impl PairManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: PairManifest = read_json(path)?;
        if m.name.is_empty() {
            return Err(Error::BadManifest("pair name is empty".into()));
        }
        Ok(m)
    }

    /// Loads both traverses (relative to `base`) and builds the pair.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedPair> {
        let qpath = base.join(&self.query);
        let rpath = base.join(&self.reference);
        let query = load_traverse(&qpath)?;
        let reference = load_traverse(&rpath)?;
        let (nq, nr) = (query.place_count(), reference.place_count());
        let gt = match &self.ground_truth {
            GroundTruthSource::Identity(w) => {
                if nq != nr {
                    return Err(Error::BadGroundTruth(format!(
                        "identity ground truth needs equal place counts ({nq} vs {nr})"
                    )));
                }
                identity_ground_truth(nq, *w)
            }
            GroundTruthSource::Inline(gt) => gt.clone(),
            GroundTruthSource::File(p) => GroundTruth::from_correspondence(&base.join(p), nq, nr)?,
        };
        let pair = build_pair_with_reference_level(
            query,
            self.query_level,
            reference,
            self.reference_level,
            gt,
        )?;
        Ok(ResolvedPair {
            name: self.name.clone(),
            pair,
            query_dir: manifest_dir(&qpath),
            reference_dir: manifest_dir(&rpath),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixEntry {
    pub index: usize,
    pub level: u32,
}

/// Every place of one traverse exactly once, each at a seeded random level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSequence {
    pub traverse: String,
    pub seed: u64,
    pub proportions: BTreeMap<u32, f64>,
    pub entries: Vec<MixEntry>,
}

impl MixSequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn level_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts: BTreeMap<u32, usize> =
            self.proportions.keys().map(|&l| (l, 0)).collect();
        for e in &self.entries {
            *counts.entry(e.level).or_default() += 1;
        }
        counts
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: MixSequence = read_json(path)?;
        let mut seen = vec![false; m.entries.len()];
        for e in &m.entries {
            if e.index >= seen.len() || std::mem::replace(&mut seen[e.index], true) {
                return Err(Error::BadManifest(format!(
                    "mix entries are not a permutation of places (index {})",
                    e.index
                )));
            }
        }
        Ok(m)
    }
}

/// Largest-remainder apportionment of `total` items over `proportions`.
///
/// Each level first gets `floor(fraction * total)`; the leftover items go to
/// the largest fractional parts, ties to the lower level.
pub fn apportion(proportions: &BTreeMap<u32, f64>, total: usize) -> Result<BTreeMap<u32, usize>> {
    if proportions.is_empty() {
        return Err(Error::BadArgument("no mix proportions given".into()));
    }
    if let Some((l, f)) = proportions.iter().find(|(_, f)| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::BadArgument(format!("invalid fraction {f} for level {l}")));
    }
    let sum: f64 = proportions.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadArgument(format!("mix fractions sum to {sum}, expected 1")));
    }
    let mut counts = BTreeMap::new();
    let mut remainders = Vec::with_capacity(proportions.len());
    let mut assigned = 0usize;
    for (&level, &fraction) in proportions {
        let exact = fraction * total as f64;
        // Absorb representation error such as 0.3 * 10 = 2.9999999999999996.
        let base = (exact + 1e-9).floor() as usize;
        counts.insert(level, base);
        assigned += base;
        remainders.push((exact - base as f64, level));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, level) in remainders.iter().take(total.saturating_sub(assigned)) {
        *counts.get_mut(&level).expect("level present") += 1;
    }
    Ok(counts)
}

/// Assigns every place of `traverse` one level drawn from `proportions`.
///
/// Place indices are shuffled with the seeded LCG (Fisher–Yates); the first
/// `count(L_1)` shuffled places get the lowest level, the next `count(L_2)`
/// the following one, and so on. Entries are returned in place order.
pub fn build_shuffled_mix(
    traverse: &Traverse,
    proportions: &BTreeMap<u32, f64>,
    seed: u64,
) -> Result<MixSequence> {
    if let Some(&l) = proportions.keys().find(|&&l| !traverse.has_level(l)) {
        return Err(Error::LevelUnavailable(l));
    }
    let places = traverse.place_count();
    let counts = apportion(proportions, places)?;
    let mut order: Vec<usize> = (0..places).collect();
    Lcg::new(seed).shuffle(&mut order);

    let mut levels = vec![0u32; places];
    let mut cursor = order.iter();
    for (&level, &count) in &counts {
        for &place in cursor.by_ref().take(count) {
            levels[place] = level;
        }
    }
    Ok(MixSequence {
        traverse: traverse.name.clone(),
        seed,
        proportions: proportions.clone(),
        entries: levels
            .into_iter()
            .enumerate()
            .map(|(index, level)| MixEntry { index, level })
            .collect(),
    })
}
