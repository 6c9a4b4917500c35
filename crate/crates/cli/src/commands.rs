use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use blurbench::adaptive::{
    load_power_log, mix_queries, run_pipeline, DeblurBridge, Mode, PipelineConfig, PipelineStats,
};
use blurbench::blur_detect::{calibrate_threshold, classify, laplacian_variance, Threshold};
use blurbench::blur_synth::{default_schedule, synthesize_traverse, write_traverse, BlurSchedule};
use blurbench::dataset::{
    build_shuffled_mix, identity_ground_truth, load_traverse, manifest_dir, save_traverse,
    Condition, GroundTruth, GroundTruthSource, MixSequence, PairManifest, Traverse,
};
use blurbench::descriptors::{describe_images, save_descriptor_set, Metric, SadConfig};
use blurbench::evaluation::{evaluate_grid, DescriptorDir, DescriptorSource, NativeSad};
use blurbench::imaging::{load_frame_sequence, Image, INPUT_EXTENSIONS};

use crate::{
    AdaptiveArgs, CalibrateArgs, Cli, CliError, Command, DatasetCommand, DescribeArgs, DetectArgs,
    EvaluateArgs, MetricArg, MixArgs, ModeArg, PairArgs, ReportArgs, SadArgs, SynthArgs,
};

type CmdResult = Result<(), CliError>;

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    resolved: &'a Cli,
}

fn write_run_record(cli: &Cli, argv: &[OsString], path: &Path) -> CmdResult {
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        resolved: cli,
    };
    let text = serde_json::to_string_pretty(&record).expect("run record serializes");
    write_text(path, &(text + "\n"))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn metric_of(m: MetricArg) -> Metric {
    match m {
        MetricArg::NegMad => Metric::NegMad,
        MetricArg::Cosine => Metric::Cosine,
    }
}

fn sad_config(a: &SadArgs) -> Result<SadConfig, CliError> {
    let cfg = SadConfig {
        down_w: a.down_w,
        down_h: a.down_h,
        patch: a.patch,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn schedule(levels: &[u32]) -> Result<BlurSchedule, CliError> {
    if levels.is_empty() {
        Ok(default_schedule())
    } else {
        BlurSchedule::new(levels.to_vec()).map_err(|e| usage(e.to_string()))
    }
}

pub(crate) fn dispatch(cli: &Cli, argv: &[OsString]) -> CmdResult {
    match &cli.command {
        Command::Synth(a) => synth(cli, argv, a),
        Command::Dataset(DatasetCommand::Pair(a)) => pair(cli, argv, a),
        Command::Dataset(DatasetCommand::Mix(a)) => mix(cli, argv, a),
        Command::Describe(a) => describe(cli, argv, a),
        Command::Evaluate(a) => evaluate(cli, argv, a),
        Command::Detect(a) => detect(cli, argv, a),
        Command::Calibrate(a) => calibrate(cli, argv, a),
        Command::Adaptive(a) => adaptive(cli, argv, a),
        Command::Report(a) => report(cli, argv, a),
    }
}

fn synth(cli: &Cli, argv: &[OsString], a: &SynthArgs) -> CmdResult {
    let schedule = schedule(&a.levels)?;
    let conditions = a
        .conditions
        .iter()
        .map(|c| c.parse::<Condition>())
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    let max_level = a.max_level.unwrap_or(schedule.max_level() as usize);
    let stride = a.stride.unwrap_or(max_level);
    let name = match &a.name {
        Some(n) => n.clone(),
        None => a
            .frames
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| usage("cannot derive a traverse name; pass --name"))?,
    };

    let seq = load_frame_sequence(&a.frames, a.fps)?;
    let images = synthesize_traverse(&seq, &schedule, stride, max_level)?;
    let dir = a.out.join(&name);
    let mut traverse = write_traverse(&dir, &name, a.fps, &images)?;
    traverse.route = a.route.clone();
    traverse.conditions = conditions;
    save_traverse(&traverse, &dir.join("traverse.json"))?;
    write_run_record(cli, argv, &dir.join("run.json"))?;
    log::info!(
        "wrote {} places x {} levels to {}",
        traverse.place_count(),
        traverse.levels.len(),
        dir.display()
    );
    Ok(())
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
}

fn relative_to(target: &Path, base: &Path) -> Result<PathBuf, CliError> {
    let (t, b) = (absolute(target)?, absolute(base)?);
    Ok(pathdiff::diff_paths(&t, &b).unwrap_or(t))
}

fn pair(cli: &Cli, argv: &[OsString], a: &PairArgs) -> CmdResult {
    let out_dir = manifest_dir(&a.out);
    let ground_truth = match &a.correspondence {
        Some(p) => GroundTruthSource::File(relative_to(p, &out_dir)?),
        None => GroundTruthSource::Identity(a.tolerance),
    };
    let manifest = PairManifest {
        name: a.name.clone(),
        query: relative_to(&a.query, &out_dir)?,
        query_level: a.query_level,
        reference: relative_to(&a.reference, &out_dir)?,
        reference_level: 1,
        ground_truth,
    };
    let resolved = manifest.resolve(&out_dir)?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    manifest.save(&a.out)?;
    write_run_record(cli, argv, &with_suffix(&a.out, ".run.json"))?;
    let tags: Vec<&str> = resolved.pair.conditions.iter().map(|c| c.tag()).collect();
    log::info!("pair '{}' conditions: {}", a.name, tags.join(","));
    Ok(())
}

fn parse_proportions(items: &[String]) -> Result<BTreeMap<u32, f64>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        let (l, f) = item
            .split_once(':')
            .ok_or_else(|| usage(format!("proportion '{item}' is not LEVEL:FRACTION")))?;
        let level: u32 = l.trim().parse().map_err(|_| usage(format!("bad level in '{item}'")))?;
        let frac: f64 = f.trim().parse().map_err(|_| usage(format!("bad fraction in '{item}'")))?;
        if out.insert(level, frac).is_some() {
            return Err(usage(format!("level {level} listed twice")));
        }
    }
    Ok(out)
}

fn mix(cli: &Cli, argv: &[OsString], a: &MixArgs) -> CmdResult {
    let props = parse_proportions(&a.proportions)?;
    let traverse = load_traverse(&a.traverse)?;
    let mix = build_shuffled_mix(&traverse, &props, cli.seed)?;
    mix.save(&a.out)?;
    write_run_record(cli, argv, &with_suffix(&a.out, ".run.json"))
}

fn describe(cli: &Cli, argv: &[OsString], a: &DescribeArgs) -> CmdResult {
    let cfg = sad_config(&a.sad)?;
    let traverse = load_traverse(&a.manifest)?;
    let base = manifest_dir(&a.manifest);
    let levels = if a.levels.is_empty() {
        traverse.levels.clone()
    } else {
        a.levels.clone()
    };
    let dir = a.out_dir.join(&traverse.name);
    for level in levels {
        let paths = traverse.level_paths(level)?;
        let set = describe_images(&base, &paths, level, &cfg)?;
        save_descriptor_set(&set, &dir.join(format!("L{level:03}.bbd")))?;
    }
    write_run_record(cli, argv, &dir.join("run.json"))
}

fn parse_source(spec: &str, a: &EvaluateArgs) -> Result<Box<dyn DescriptorSource>, CliError> {
    if spec == "sad" {
        return Ok(Box::new(NativeSad {
            config: sad_config(&a.sad)?,
            metric: a.metric.map_or(Metric::NegMad, metric_of),
        }));
    }
    let (label, dir) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("source '{spec}' is neither 'sad' nor METHOD[:DEBLUR]=DIR")))?;
    let (method, deblur) = label.split_once(':').unwrap_or((label, "none"));
    if method.is_empty() || deblur.is_empty() || dir.is_empty() {
        return Err(usage(format!("incomplete source '{spec}'")));
    }
    Ok(Box::new(DescriptorDir {
        method: method.to_string(),
        deblur: deblur.to_string(),
        root: PathBuf::from(dir),
        metric: a.metric.map_or(Metric::Cosine, metric_of),
    }))
}

fn evaluate(cli: &Cli, argv: &[OsString], a: &EvaluateArgs) -> CmdResult {
    let levels = schedule(&a.levels)?;
    let specs: Vec<&str> = if a.sources.is_empty() {
        vec!["sad"]
    } else {
        a.sources.iter().map(String::as_str).collect()
    };
    let sources = specs
        .iter()
        .map(|s| parse_source(s, a))
        .collect::<Result<Vec<_>, _>>()?;
    let pairs = a
        .pairs
        .iter()
        .map(|p| PairManifest::load(p)?.resolve(&manifest_dir(p)))
        .collect::<Result<Vec<_>, _>>()?;

    let variants: Vec<&dyn DescriptorSource> = sources.iter().map(|s| s.as_ref()).collect();
    let table = evaluate_grid(&pairs, &levels, &variants);
    write_text(&a.out, &table.to_csv())?;
    if let Some(path) = &a.curves {
        let text = serde_json::to_string_pretty(&table.curves).expect("curves serialize");
        write_text(path, &(text + "\n"))?;
    }
    write_run_record(cli, argv, &with_suffix(&a.out, ".run.json"))?;

    if !table.failures.is_empty() && !a.allow_missing {
        let mut msg = format!("{} cell(s) could not be evaluated:", table.failures.len());
        for f in &table.failures {
            let _ = write!(msg, " [{}/{}/{}/L{:03}: {}]", f.pair, f.method, f.deblur, f.level, f.message);
        }
        return Err(CliError::Runtime(msg));
    }
    Ok(())
}

/// Expands directories into their image files, sorted by name.
fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = std::fs::read_dir(p)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| INPUT_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
                })
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn score_files(paths: &[PathBuf]) -> Result<Vec<f64>, CliError> {
    use rayon::prelude::*;
    paths
        .par_iter()
        .map(|p| Ok(laplacian_variance(&Image::load(p)?)?.variance()))
        .collect::<Result<Vec<_>, blurbench::Error>>()
        .map_err(Into::into)
}

fn level_files(manifest: &Path, level: u32) -> Result<(Vec<PathBuf>, Vec<String>), CliError> {
    let traverse = load_traverse(manifest)?;
    let base = manifest_dir(manifest);
    let rel = traverse.level_paths(level)?;
    Ok((
        rel.iter().map(|r| base.join(r)).collect(),
        rel.iter().map(|r| r.display().to_string()).collect(),
    ))
}

fn detect(cli: &Cli, argv: &[OsString], a: &DetectArgs) -> CmdResult {
    let (files, labels) = match &a.manifest {
        Some(m) => level_files(m, a.level)?,
        None => {
            let files = collect_images(&a.images)?;
            let labels = files.iter().map(|f| f.display().to_string()).collect();
            (files, labels)
        }
    };
    if files.is_empty() {
        return Err(usage("no images given; pass --image or --manifest"));
    }
    let threshold = a.threshold_file.as_deref().map(Threshold::load).transpose()?;
    let scores = score_files(&files)?;

    let mut csv = String::from("image,variance,decision\n");
    for (label, &v) in labels.iter().zip(&scores) {
        let decision = threshold
            .as_ref()
            .map_or("", |t| classify(blurbench::blur_detect::BlurScore(v), t).as_str());
        let _ = writeln!(csv, "{label},{v:.4},{decision}");
    }
    match &a.out {
        Some(path) => {
            write_text(path, &csv)?;
            write_run_record(cli, argv, &with_suffix(path, ".run.json"))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn calibrate(cli: &Cli, argv: &[OsString], a: &CalibrateArgs) -> CmdResult {
    let (sharp, blurred) = match &a.manifest {
        Some(m) => (level_files(m, a.sharp_level)?.0, level_files(m, a.blurred_level)?.0),
        None => (collect_images(&a.sharp)?, collect_images(&a.blurred)?),
    };
    if sharp.is_empty() || blurred.is_empty() {
        return Err(usage("calibration needs sharp and blurred images"));
    }
    let th = calibrate_threshold(&score_files(&sharp)?, &score_files(&blurred)?)?;
    if let Some(w) = th.calibration.as_ref().and_then(|c| c.warning.as_ref()) {
        log::warn!("{w}");
    }
    th.save(&a.out)?;
    write_run_record(cli, argv, &with_suffix(&a.out, ".run.json"))
}

fn adaptive(cli: &Cli, argv: &[OsString], a: &AdaptiveArgs) -> CmdResult {
    let mode = match a.mode {
        ModeArg::NoDeblur => Mode::NoDeblur,
        ModeArg::AllDeblur => Mode::AllDeblur,
        ModeArg::Detect => Mode::DetectDeblur,
    };
    let mut cfg = PipelineConfig::new(mode);
    cfg.metric = metric_of(a.metric);
    cfg.sad = sad_config(&a.sad)?;
    if mode == Mode::DetectDeblur {
        let path = a
            .threshold_file
            .as_deref()
            .ok_or_else(|| usage("--mode detect needs --threshold-file"))?;
        cfg.threshold = Some(Threshold::load(path)?);
    }
    if mode != Mode::NoDeblur {
        let cmd = a
            .deblur_cmd
            .as_deref()
            .ok_or_else(|| usage(format!("--mode {} needs --deblur-cmd", mode.as_str())))?;
        let words = shell_words::split(cmd).map_err(|e| usage(format!("--deblur-cmd: {e}")))?;
        cfg.bridge = Some(DeblurBridge::new(words, a.timeout, a.batch_size).map_err(|e| usage(e.to_string()))?);
    }

    let traverse = load_traverse(&a.traverse)?;
    let base = manifest_dir(&a.traverse);
    let mix = MixSequence::load(&a.mix)?;
    let queries = mix_queries(&mix, &traverse, &base)?;

    let ref_path = a.reference.as_deref().unwrap_or(&a.traverse);
    let reference: Traverse = load_traverse(ref_path)?;
    let ref_base = manifest_dir(ref_path);
    let ref_set = describe_images(&ref_base, &reference.level_paths(1)?, 1, &cfg.sad)?;

    let (nq, nr) = (queries.len(), reference.place_count());
    let gt = match &a.correspondence {
        Some(p) => GroundTruth::from_correspondence(p, nq, nr)?,
        None if nq == nr => identity_ground_truth(nq, a.tolerance),
        None => {
            return Err(CliError::Runtime(format!(
                "query and reference place counts differ ({nq} vs {nr}); pass --correspondence"
            )))
        }
    };

    let mut stats: PipelineStats = match run_pipeline(&queries, &ref_set, &gt, &cfg) {
        Ok((_, stats)) => stats,
        Err(blurbench::Error::Aborted { query, stats, source }) => {
            let partial = with_suffix(&a.out, ".partial.json");
            write_text(&partial, &(stats.to_json() + "\n"))?;
            return Err(CliError::Runtime(format!(
                "pipeline aborted at query {query}: {source} (partial stats in {})",
                partial.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(p) = &a.power_log {
        stats.attach_energy(&load_power_log(p)?)?;
        if stats.energy_j.is_none() {
            log::warn!("power log does not cover the run; energy left empty");
        }
    }
    write_text(&a.out, &(stats.to_json() + "\n"))?;
    write_run_record(cli, argv, &with_suffix(&a.out, ".run.json"))
}

fn report(cli: &Cli, argv: &[OsString], a: &ReportArgs) -> CmdResult {
    let mut csv = String::from("mode,time_per_query_ms,total_time_s,energy_kj,auc,deblur_invocations\n");
    for path in &a.stats {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let s: PipelineStats = serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let energy = s.energy_j.map(|j| format!("{:.3}", j / 1000.0)).unwrap_or_default();
        let auc = s.auc.map(|v| format!("{v:.4}")).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{:.2},{:.3},{energy},{auc},{}",
            s.mode.as_str(),
            s.time_per_query_ms,
            s.total_time_s,
            s.deblur_invocations
        );
    }
    match &a.out {
        Some(path) => {
            write_text(path, &csv)?;
            write_run_record(cli, argv, &with_suffix(path, ".run.json"))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
