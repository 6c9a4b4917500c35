//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use blurbench::adaptive::{
    integrate_energy, mix_queries, run_pipeline, DeblurBridge, Mode, PipelineConfig, PowerSample,
};
use blurbench::blur_detect::{calibrate_threshold, classify, laplacian_variance, BlurScore, Decision};
use blurbench::blur_synth::{
    default_schedule, synthesize_blur, synthesize_traverse, write_traverse, BlurSpec, LevelImages,
};
use blurbench::dataset::{
    build_shuffled_mix, identity_ground_truth, load_traverse, save_traverse, Condition,
    GroundTruth, GroundTruthSource, ImageRef, MixSequence, PairManifest, Traverse,
};
use blurbench::descriptors::{
    describe_images, extract_sad, load_descriptor_set, save_descriptor_set, Descriptor,
    DescriptorSet, Metric, SadConfig,
};
use blurbench::evaluation::{auc, evaluate, pr_curve, similarity_matrix, SimilarityMatrix};
use blurbench::imaging::{FrameSequence, Image};
use blurbench::rng::Lcg;
use blurbench::synthetic::{panning_sequence, PanningConfig};
use blurbench::Error;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn e2s(e: Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn random_sequence(rng: &mut Lcg) -> FrameSequence {
    let w = 1 + rng.below(16);
    let h = 1 + rng.below(16);
    let c = if rng.below(2) == 0 { 1 } else { 3 };
    let n = 1 + rng.below(16);
    let frames = (0..n)
        .map(|_| Image::new(w, h, c, (0..w * h * c).map(|_| rng.below(256) as u8).collect()).unwrap())
        .collect();
    FrameSequence::new(frames, 240.0, "random").unwrap()
}

fn brute_force_blur(seq: &FrameSequence, level: usize, start: usize) -> Vec<u8> {
    let frames = &seq.frames()[start..start + level];
    (0..frames[0].pixels().len())
        .map(|i| {
            let sum: f64 = frames.iter().map(|f| f.pixels()[i] as f64).sum();
            (sum / level as f64 + 0.5).floor() as u8
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = Lcg::new(1);
    let mut matched = 0;
    for case in 0..1000 {
        let seq = random_sequence(&mut rng);
        let n = seq.len();
        let level = 1 + rng.below(n);
        let start = rng.below(n - level + 1);
        let got = synthesize_blur(&seq, BlurSpec::new(level, start)).map_err(e2s)?;
        ensure(got.pixels() == brute_force_blur(&seq, level, start).as_slice(), || {
            format!("case {case} (L={level}, j={start}) differs from the oracle")
        })?;
        matched += 1;
    }
    within(t.elapsed(), 10.0)?;
    Ok(format!("{matched}/1000 bit-exact in {:.2}s", t.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- shared fixture

struct Panning {
    images: LevelImages,
    synth_s: f64,
}

fn panning() -> Panning {
    let t = Instant::now();
    let seq = panning_sequence(&PanningConfig::default()).unwrap();
    let images = synthesize_traverse(&seq, &default_schedule(), 8, 240).unwrap();
    Panning {
        images,
        synth_s: t.elapsed().as_secs_f64(),
    }
}

fn sad_set(images: &[Image], level: u32) -> DescriptorSet {
    use rayon::prelude::*;
    let cfg = SadConfig::default();
    let descriptors = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| Descriptor::new(extract_sad(img, &cfg).unwrap(), i, level))
        .collect();
    DescriptorSet::new("sad", descriptors).unwrap()
}

fn sad_auc(p: &Panning, reference: &DescriptorSet, level: u32) -> Result<f64, String> {
    let query = sad_set(&p.images[&level], level);
    let m = similarity_matrix(&query, reference, Metric::NegMad).map_err(e2s)?;
    let gt = identity_ground_truth(query.len(), 1);
    Ok(evaluate(&m, &gt).map_err(e2s)?.auc)
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let seq = panning_sequence(&PanningConfig {
        frames: 240,
        ..Default::default()
    })
    .map_err(e2s)?;
    let sharp: Vec<Image> = (0..seq.len())
        .step_by(8)
        .map(|j| synthesize_blur(&seq, BlurSpec::sharp(j)).unwrap())
        .collect();
    let set = sad_set(&sharp, 1);
    let m = similarity_matrix(&set, &set, Metric::NegMad).map_err(e2s)?;
    let result = evaluate(&m, &identity_ground_truth(set.len(), 1)).map_err(e2s)?;
    ensure((result.auc - 1.0).abs() <= 1e-9, || format!("AUC {}", result.auc))?;
    within(t.elapsed(), 5.0)?;
    Ok(format!("AUC {:.12} over {} places", result.auc, set.len()))
}

// ---------------------------------------------------------------- 3

fn brute_force_auc(rows: &[Vec<f64>], gt: &[Vec<usize>]) -> f64 {
    let best: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| {
            let mut b = 0;
            for j in 1..r.len() {
                if r[j] > r[b] {
                    b = j;
                }
            }
            (b, r[b])
        })
        .collect();
    let positives = gt.iter().filter(|g| !g.is_empty()).count() as f64;
    let mut cutoffs: Vec<f64> = best.iter().map(|b| b.1).collect();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    cutoffs.dedup();
    let mut pts = Vec::new();
    for t in cutoffs {
        let (mut accepted, mut tp) = (0.0, 0.0);
        for (q, &(r, s)) in best.iter().enumerate() {
            if s >= t {
                accepted += 1.0;
                if gt[q].contains(&r) {
                    tp += 1.0;
                }
            }
        }
        pts.push((tp / positives, tp / accepted));
    }
    let mut area = 0.0;
    let mut prev = (0.0, pts[0].1);
    for p in pts {
        area += (p.0 - prev.0) * (p.1 + prev.1) / 2.0;
        prev = p;
    }
    area.clamp(0.0, 1.0)
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut rng = Lcg::new(3);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        // half of the cases use coarse scores so ties are common
        let coarse = case % 2 == 0;
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                (0..50)
                    .map(|_| if coarse { rng.below(10) as f64 / 10.0 } else { rng.next_f64() })
                    .collect()
            })
            .collect();
        let mut gt: Vec<Vec<usize>> = (0..50)
            .map(|_| {
                let k = rng.below(4);
                let set: BTreeSet<usize> = (0..k).map(|_| rng.below(50)).collect();
                set.into_iter().collect()
            })
            .collect();
        if gt.iter().all(|g| g.is_empty()) {
            gt[0].push(0);
        }
        let m = SimilarityMatrix::from_rows(rows.clone(), "random").map_err(e2s)?;
        let got = auc(&pr_curve(&m, &GroundTruth::new(gt.clone(), None)).map_err(e2s)?).map_err(e2s)?;
        let diff = (got - brute_force_auc(&rows, &gt)).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("case {case}: |diff| = {diff:e}"))?;
    }
    within(t.elapsed(), 30.0)?;
    Ok(format!("200/200 within 1e-9 (max diff {worst:e})"))
}

// ---------------------------------------------------------------- 4

fn criterion_4(p: &Panning) -> Outcome {
    let t = Instant::now();
    let reference = sad_set(&p.images[&1], 1);
    let a1 = sad_auc(p, &reference, 1)?;
    let a240 = sad_auc(p, &reference, 240)?;
    let elapsed = t.elapsed().as_secs_f64() + p.synth_s;
    ensure(a240 <= a1 - 0.1, || format!("AUC(L1)={a1:.4} AUC(L240)={a240:.4}"))?;
    within(Duration::from_secs_f64(elapsed), 60.0)?;
    Ok(format!("AUC(L1)={a1:.4} AUC(L240)={a240:.4} in {elapsed:.2}s"))
}

// ---------------------------------------------------------------- 5

fn variances(images: &[Image]) -> Vec<f64> {
    use rayon::prelude::*;
    images
        .par_iter()
        .map(|img| laplacian_variance(img).unwrap().variance())
        .collect()
}

fn criterion_5(p: &Panning) -> Outcome {
    let t = Instant::now();
    let means: Vec<(u32, f64)> = p
        .images
        .iter()
        .map(|(&l, imgs)| {
            let v = variances(imgs);
            (l, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    for w in means.windows(2) {
        ensure(w[1].1 < w[0].1, || {
            format!("mean variance L{}={:.3} !> L{}={:.3}", w[0].0, w[0].1, w[1].0, w[1].1)
        })?;
    }
    let (first, last) = (means[0].1, means.last().unwrap().1);
    let drop = (first - last) / first;
    ensure(drop >= 0.5, || format!("relative drop {:.1}%", drop * 100.0))?;
    let elapsed = t.elapsed().as_secs_f64() + p.synth_s;
    within(Duration::from_secs_f64(elapsed), 30.0)?;
    Ok(format!(
        "strictly decreasing over {} levels, drop {:.1}% in {elapsed:.2}s",
        means.len(),
        drop * 100.0
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6(p: &Panning) -> Outcome {
    let t = Instant::now();
    let sharp = variances(&p.images[&1]);
    let blurred = variances(&p.images[&240]);
    let even = |v: &[f64]| v.iter().step_by(2).copied().collect::<Vec<_>>();
    let odd = |v: &[f64]| v.iter().skip(1).step_by(2).copied().collect::<Vec<_>>();
    let th = calibrate_threshold(&even(&sharp), &even(&blurred)).map_err(e2s)?;
    let train_errors = th.calibration.as_ref().map_or(usize::MAX, |c| c.misclassified);
    ensure(train_errors == 0, || format!("{train_errors} training errors"))?;

    let (hs, hb) = (odd(&sharp), odd(&blurred));
    let correct = hs.iter().filter(|&&v| classify(BlurScore(v), &th) == Decision::Sharp).count()
        + hb.iter().filter(|&&v| classify(BlurScore(v), &th) == Decision::Blurred).count();
    let total = hs.len() + hb.len();
    let acc = correct as f64 / total as f64;
    ensure(acc >= 0.95, || format!("held-out accuracy {correct}/{total}"))?;
    let elapsed = t.elapsed().as_secs_f64() + p.synth_s;
    within(Duration::from_secs_f64(elapsed), 30.0)?;
    Ok(format!(
        "cutoff {:.4}, 0 training errors, held-out {correct}/{total} in {elapsed:.2}s",
        th.cutoff
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7(p: &Panning) -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = dir.path().join("SYN");
    let subset: LevelImages = [1, 240].iter().map(|l| (*l, p.images[l].clone())).collect();
    let traverse = write_traverse(&base, "SYN", 240.0, &subset).map_err(e2s)?;

    let props: BTreeMap<u32, f64> = [(1, 0.5), (240, 0.5)].into();
    let mix = build_shuffled_mix(&traverse, &props, 7).map_err(e2s)?;
    let queries = mix_queries(&mix, &traverse, &base).map_err(e2s)?;
    let reference = describe_images(
        &base,
        &traverse.level_paths(1).map_err(e2s)?,
        1,
        &SadConfig::default(),
    )
    .map_err(e2s)?;
    let gt = identity_ground_truth(queries.len(), 1);
    let th = calibrate_threshold(&variances(&p.images[&1]), &variances(&p.images[&240])).map_err(e2s)?;
    let bridge = DeblurBridge::new(
        ["sh", "-c", r#"cp "$0"/*.png "$1"/"#, "{in_dir}", "{out_dir}"]
            .map(String::from)
            .to_vec(),
        60.0,
        16,
    )
    .map_err(e2s)?;

    let mut aucs = Vec::new();
    let mut counts = Vec::new();
    for mode in [Mode::NoDeblur, Mode::AllDeblur, Mode::DetectDeblur] {
        let mut cfg = PipelineConfig::new(mode);
        if mode != Mode::NoDeblur {
            cfg.bridge = Some(bridge.clone());
        }
        if mode == Mode::DetectDeblur {
            cfg.threshold = Some(th.clone());
        }
        let (res, stats) = run_pipeline(&queries, &reference, &gt, &cfg).map_err(e2s)?;
        let expected = match mode {
            Mode::NoDeblur => 0,
            Mode::AllDeblur => queries.len(),
            Mode::DetectDeblur => stats.detected_blurred,
        };
        ensure(stats.deblur_invocations == expected, || {
            format!("{}: {} invocations, expected {expected}", mode.as_str(), stats.deblur_invocations)
        })?;
        ensure(stats.deblur_invocations <= queries.len(), || "more invocations than queries".into())?;
        let json: serde_json::Value = serde_json::from_str(&stats.to_json()).map_err(|e| e.to_string())?;
        for key in ["mode", "time_per_query_ms", "total_time_s", "energy_j", "auc", "deblur_invocations"] {
            ensure(json.get(key).is_some(), || format!("stats JSON lacks '{key}'"))?;
        }
        aucs.push(res.auc);
        counts.push(stats.deblur_invocations);
    }
    let spread = aucs.iter().fold(f64::MIN, |a, &b| a.max(b)) - aucs.iter().fold(f64::MAX, |a, &b| a.min(b));
    ensure(spread <= 1e-9, || format!("AUC differs across modes: {aucs:?}"))?;
    let elapsed = t.elapsed().as_secs_f64() + p.synth_s;
    within(Duration::from_secs_f64(elapsed), 60.0)?;
    Ok(format!(
        "|Q|={} invocations none/all/detect = {:?}, AUC {:.4} in {elapsed:.2}s",
        queries.len(),
        counts,
        aucs[0]
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let flat: Vec<PowerSample> = (0..=10).map(|t| PowerSample { t: t as f64, watts: 100.0 }).collect();
    let e = integrate_energy(&flat, 0.0, 10.0).map_err(e2s)?;
    ensure(e == Some(1000.0), || format!("constant log gave {e:?}"))?;

    let mut rng = Lcg::new(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut t = rng.next_f64() * 100.0;
        let log: Vec<PowerSample> = (0..2 + rng.below(50))
            .map(|_| {
                t += 0.001 + rng.next_f64();
                PowerSample {
                    t,
                    watts: rng.next_f64() * 400.0,
                }
            })
            .collect();
        let (lo, hi) = (log[0].t, log.last().unwrap().t);
        let mid = lo + rng.next_f64() * (hi - lo);
        let whole = integrate_energy(&log, lo, hi).map_err(e2s)?.ok_or("uncovered")?;
        let a = integrate_energy(&log, lo, mid).map_err(e2s)?.ok_or("uncovered")?;
        let b = integrate_energy(&log, mid, hi).map_err(e2s)?.ok_or("uncovered")?;
        worst = worst.max((a + b - whole).abs());
    }
    ensure(worst <= 1e-9, || format!("additivity error {worst:e}"))?;
    Ok(format!("1000 J exactly; additivity max error {worst:e} over 100 logs"))
}

// ---------------------------------------------------------------- 9

fn random_set(rng: &mut Lcg) -> DescriptorSet {
    let count = 1 + rng.below(20);
    let dim = 1 + rng.below(64);
    let descriptors = (0..count)
        .map(|i| Descriptor {
            // arbitrary finite bit patterns, including subnormals and -0.0
            values: (0..dim)
                .map(|_| loop {
                    let v = f32::from_bits(rng.next_u32());
                    if v.is_finite() {
                        break v;
                    }
                })
                .collect(),
            index: i,
            level: 1 + rng.below(240) as u32,
            source: format!("{:03}/{i:06}.png", rng.below(1000)),
        })
        .collect();
    DescriptorSet::new(format!("m{}", rng.below(100)), descriptors).unwrap()
}

fn random_traverse(rng: &mut Lcg) -> Traverse {
    let places = 1 + rng.below(30);
    let mut levels: Vec<u32> = (0..1 + rng.below(4)).map(|_| 1 + rng.below(240) as u32).collect();
    levels.sort();
    levels.dedup();
    let refs = levels
        .iter()
        .flat_map(|&level| {
            (0..places).map(move |index| ImageRef {
                index,
                level,
                path: PathBuf::from(format!("{level:03}/{index:06}.png")),
            })
        })
        .collect();
    let conditions = [Condition::MotionBlur, Condition::Weather, Condition::Illumination, Condition::Viewpoint]
        .into_iter()
        .filter(|_| rng.below(2) == 0)
        .collect();
    Traverse::new(
        format!("T{}", rng.below(1000)),
        "custom".into(),
        conditions,
        1.0 + rng.next_f64() * 999.0,
        levels,
        refs,
    )
    .unwrap()
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = Lcg::new(9);
    for case in 0..100 {
        let set = random_set(&mut rng);
        let path = dir.path().join(format!("{case}.bbd"));
        save_descriptor_set(&set, &path).map_err(e2s)?;
        let back = load_descriptor_set(&path).map_err(e2s)?;
        let bits = |s: &DescriptorSet| -> Vec<Vec<u32>> {
            s.descriptors().iter().map(|d| d.values.iter().map(|v| v.to_bits()).collect()).collect()
        };
        ensure(bits(&back) == bits(&set) && back.method() == set.method(), || {
            format!("descriptor case {case} not bit-exact")
        })?;
        for (a, b) in set.descriptors().iter().zip(back.descriptors()) {
            ensure((a.index, a.level, &a.source) == (b.index, b.level, &b.source), || {
                format!("descriptor case {case}: metadata differs")
            })?;
        }

        let t = random_traverse(&mut rng);
        let tpath = dir.path().join(format!("{case}.traverse.json"));
        save_traverse(&t, &tpath).map_err(e2s)?;
        ensure(load_traverse(&tpath).map_err(e2s)? == t, || format!("traverse case {case} differs"))?;

        let pair = PairManifest {
            name: format!("P{case}"),
            query: tpath.file_name().unwrap().into(),
            query_level: t.levels[0],
            reference: tpath.file_name().unwrap().into(),
            reference_level: 1,
            ground_truth: GroundTruthSource::Identity(rng.below(3)),
        };
        let ppath = dir.path().join(format!("{case}.pair.json"));
        pair.save(&ppath).map_err(e2s)?;
        ensure(PairManifest::load(&ppath).map_err(e2s)? == pair, || format!("pair case {case} differs"))?;

        let props: BTreeMap<u32, f64> = [(t.levels[0], 1.0)].into();
        let mix = build_shuffled_mix(&t, &props, rng.next_u64()).map_err(e2s)?;
        let mpath = dir.path().join(format!("{case}.mix.json"));
        mix.save(&mpath).map_err(e2s)?;
        ensure(MixSequence::load(&mpath).map_err(e2s)? == mix, || format!("mix case {case} differs"))?;
    }

    let path = dir.path().join("corrupt.bbd");
    let set = random_set(&mut rng);
    save_descriptor_set(&set, &path).map_err(e2s)?;
    let good = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    std::fs::write(&path, &bad_magic).map_err(|e| e.to_string())?;
    let magic_err = load_descriptor_set(&path);
    ensure(matches!(magic_err, Err(Error::BadFormat(_))), || format!("bad magic gave {magic_err:?}"))?;
    for cut in [4, 12, good.len() - 1] {
        std::fs::write(&path, &good[..cut]).map_err(|e| e.to_string())?;
        let r = load_descriptor_set(&path);
        ensure(matches!(r, Err(Error::Truncated(_))), || format!("truncated at {cut} gave {r:?}"))?;
    }
    Ok("100/100 descriptor, traverse, pair and mix files round-trip; corruption detected".into())
}

// ---------------------------------------------------------------- 10

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_blurbench"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn pipeline_run(frames: &Path, root: &Path) -> Result<(), String> {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let data = s(root.join("data"));
    let traverse = s(root.join("data/SYN/traverse.json"));
    let pair = s(root.join("pair.json"));
    let mix = s(root.join("mix.json"));
    let grid = s(root.join("grid.csv"));
    let curves = s(root.join("curves.json"));
    run_cli(&["--seed", "42", "synth", "--frames", &s(frames.to_path_buf()), "--out", &data, "--name", "SYN",
        "--levels", "1,10,40,120", "--stride", "16", "--conditions", "MB"])?;
    run_cli(&["--seed", "42", "dataset", "pair", "--name", "self", "--query", &traverse, "--reference", &traverse,
        "--out", &pair])?;
    run_cli(&["--seed", "42", "dataset", "mix", "--traverse", &traverse, "--proportions", "1:0.5,40:0.25,120:0.25",
        "--out", &mix])?;
    run_cli(&["--seed", "42", "evaluate", "--pair", &pair, "--levels", "1,10,40,120", "--out", &grid,
        "--curves", &curves])
}

fn tree_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let frames = dir.path().join("frames");
    let seq = panning_sequence(&PanningConfig {
        width: 256,
        height: 32,
        frames: 200,
        ..Default::default()
    })
    .map_err(e2s)?;
    for (i, f) in seq.frames().iter().enumerate() {
        f.save_png(&frames.join(format!("{i:06}.png"))).map_err(e2s)?;
    }
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline_run(&frames, &a)?;
    pipeline_run(&frames, &b)?;

    // run records hold absolute paths, so they legitimately differ
    let files: Vec<PathBuf> = tree_files(&a)
        .into_iter()
        .filter(|p| !p.to_string_lossy().ends_with("run.json"))
        .collect();
    ensure(files == tree_files(&b).into_iter().filter(|p| !p.to_string_lossy().ends_with("run.json")).collect::<Vec<_>>(), || {
        "runs produced different file sets".into()
    })?;
    for f in &files {
        let (x, y) = (std::fs::read(a.join(f)), std::fs::read(b.join(f)));
        ensure(x.is_ok() && x.ok() == y.ok(), || format!("{} differs between runs", f.display()))?;
    }
    let csv = std::fs::read_to_string(a.join("grid.csv")).map_err(|e| e.to_string())?;
    Ok(format!(
        "{} output files byte-identical; grid row: {}",
        files.len(),
        csv.lines().nth(1).unwrap_or("")
    ))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "blur synthesis matches brute-force oracle", criterion_1()));
    results.push((2, "sharp self-pair AUC is 1", criterion_2()));
    results.push((3, "AUC matches exhaustive-threshold oracle", criterion_3()));
    let fixture = panning();
    results.push((4, "AUC degrades from L1 to L240", criterion_4(&fixture)));
    results.push((5, "Laplacian variance decreases with blur", criterion_5(&fixture)));
    results.push((6, "calibrated threshold separates L1 from L240", criterion_6(&fixture)));
    results.push((7, "adaptive modes with identity deblurrer", criterion_7(&fixture)));
    results.push((8, "energy integration", criterion_8()));
    results.push((9, "format round trips and corruption errors", criterion_9()));
    results.push((10, "CLI runs are deterministic", criterion_10()));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  [{n:>2}] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  [{n:>2}] {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s (fixture synthesis {:.2}s)",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64(),
        fixture.synth_s
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
