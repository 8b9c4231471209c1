//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p rearrange --test acceptance`. Each check prints
//! `[PASS]` or `[FAIL]` with its runtime and a short detail. The process
//! fails if any check fails, except those listed in `KNOWN_GAPS`, which are
//! still reported as `[FAIL]`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rearrange::artifacts::{read_plan, PLAN_FILE};
use rearrange::audio::AudioBuffer;
use rearrange::commands::{self, PlanOptions};
use rearrange::pathfinder::solve;
use rearrange::pipeline::analyze_bundle;
use rearrange::recurrence::build_repetition_recurrence;
use rearrange::segmentation::{
    normalized_laplacian, quantize_to_downbeats, segments_from_labels, sorted_eigenpairs,
};
use rearrange::synthetic::{aabb_song, chorus_song, tiled_song, SynthOptions, SyntheticSong};
use rearrange::transitions::{TransitionKind, TransitionSource, COST_FLOOR};
use rearrange::{
    BeatGrid, Error, Execution, FeatureMatrix, PipelineConfig, RecurrenceKind, RecurrenceMatrix,
    SegmentationHierarchy, TransitionPoint,
};

/// Criteria that cannot be met as stated; the README explains why.
const KNOWN_GAPS: &[&str] = &["end-to-end shortening"];

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ctx<T, E: std::fmt::Display>(r: Result<T, E>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

// Quantization precision

fn quantization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = ctx(BeatGrid::uniform(128, 0.5, 4, 22050), "grid")?;
    let downbeat_times: BTreeSet<u64> = grid.downbeats().iter().map(|t| t.to_bits()).collect();
    let mut worst = 0.0f64;
    let mut boundaries = 0;
    for _ in 0..200 {
        let mut levels = BTreeMap::new();
        for k in 2..=12usize {
            let mut labels = Vec::with_capacity(grid.len());
            let mut label = 0;
            for b in 0..grid.len() {
                if b == 0 || rng.random_bool(0.15) {
                    label = rng.random_range(0..k);
                }
                labels.push(label);
            }
            levels.insert(k, segments_from_labels(k, &labels));
        }
        let raw = ctx(
            SegmentationHierarchy::from_levels(levels, grid.len()),
            "hierarchy",
        )?;
        let quantized = quantize_to_downbeats(&raw, &grid);
        for (k, segments) in quantized.levels() {
            let raw_bounds: Vec<f64> = raw.levels()[k][1..]
                .iter()
                .map(|s| grid.beats()[s.start_beat])
                .collect();
            for s in &segments[1..] {
                let t = grid.beats()[s.start_beat];
                ensure(downbeat_times.contains(&t.to_bits()), || {
                    format!("level {k}: boundary {t} s is not a downbeat")
                })?;
                let shift = raw_bounds
                    .iter()
                    .map(|r| (r - t).abs())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(shift);
                boundaries += 1;
            }
        }
    }
    ensure(worst <= 2.0, || format!("boundary moved {worst:.3} s"))?;
    Ok(format!("{boundaries} boundaries, max shift {worst:.3} s"))
}

// Recurrence oracle

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn oracle_recurrence(x: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = |i: usize, j: usize| {
        x[i].iter()
            .zip(&x[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let knn: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| d(i, a).total_cmp(&d(i, b)));
            others.truncate(k);
            others
        })
        .collect();
    let mu = median((0..n).map(|i| d(i, knn[i][k - 1])).collect());
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if knn[i].contains(&j) && knn[j].contains(&i) {
                        (-d(i, j) / mu).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn recurrence_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let dims = rng.random_range(1..16);
        let k = rng.random_range(1..19);
        let x: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                (0..dims)
                    .map(|_| rng.random_range(-1.0f32..1.0) as f64)
                    .collect()
            })
            .collect();
        let values = Array2::from_shape_fn((20, dims), |(i, j)| x[i][j] as f32);
        let m = ctx(FeatureMatrix::beats("x", values), "features")?;
        let r = ctx(build_repetition_recurrence(&m, k), "recurrence")?;
        let expected = oracle_recurrence(&x, k);
        for i in 0..20 {
            for j in 0..20 {
                let err = (r.get(i, j) - expected[i][j]).abs();
                worst = worst.max(err);
                ensure(err <= 1e-9, || {
                    format!(
                        "case {case} ({i},{j}): {} vs {}",
                        r.get(i, j),
                        expected[i][j]
                    )
                })?;
            }
        }
    }
    Ok(format!("100 inputs, max error {worst:.2e}"))
}

// Laplacian spectrum

fn laplacian_spectrum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut lowest = f64::INFINITY;
    let mut highest = f64::NEG_INFINITY;
    let mut min_cos = 1.0f64;
    for case in 0..50 {
        let n = rng.random_range(5..60);
        let density = rng.random_range(0.05..1.0);
        let mut values = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i + 1..n {
                // A chain keeps the graph connected.
                let v = if j == i + 1 || rng.random_bool(density) {
                    rng.random_range(0.01..=1.0)
                } else {
                    0.0
                };
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        let degrees: Vec<f64> = values.rows().into_iter().map(|r| r.sum()).collect();
        let r = ctx(
            RecurrenceMatrix::new(values, RecurrenceKind::Combined, 1.0),
            "matrix",
        )?;
        let (eigenvalues, vectors) = ctx(sorted_eigenpairs(&normalized_laplacian(&r)), "eigen")?;
        lowest = lowest.min(eigenvalues[0]);
        highest = highest.max(eigenvalues[n - 1]);
        ensure(
            eigenvalues[0] >= -1e-8 && eigenvalues[n - 1] <= 2.0 + 1e-8,
            || {
                format!(
                    "case {case}: spectrum [{}, {}]",
                    eigenvalues[0],
                    eigenvalues[n - 1]
                )
            },
        )?;
        let null: Vec<f64> = degrees.iter().map(|d| d.sqrt()).collect();
        let v = vectors.column(0);
        let dot: f64 = null.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let norms = null.iter().map(|a| a * a).sum::<f64>().sqrt()
            * v.iter().map(|b| b * b).sum::<f64>().sqrt();
        let cos = dot.abs() / norms;
        min_cos = min_cos.min(cos);
        ensure(cos > 1.0 - 1e-6, || {
            format!("case {case}: null-vector cosine {cos}")
        })?;
    }
    Ok(format!(
        "50 matrices, spectrum [{lowest:.2e}, {highest:.6}], min cosine {min_cos:.9}"
    ))
}

// Planted-structure segmentation

fn planted_segmentation() -> Outcome {
    let config = PipelineConfig::default();
    let mut offsets = Vec::new();
    for seed in 0..10 {
        let song = ctx(aabb_song(seed), "fixture")?;
        let analysis = ctx(
            analyze_bundle(&song.bundle("audio.wav".into()), &config),
            "analysis",
        )?;
        let level = analysis.hierarchy.level(2).ok_or("no level 2")?;
        let planted = 32usize;
        let nearest = level[1..]
            .iter()
            .map(|s| s.start_beat.abs_diff(planted))
            .min()
            .ok_or_else(|| format!("seed {seed}: level 2 has a single segment"))?;
        ensure(nearest <= 1, || {
            format!("seed {seed}: nearest level-2 boundary {nearest} beats from the edge")
        })?;
        offsets.push(nearest);
    }
    Ok(format!("10/10 seeds, boundary offsets {offsets:?} beats"))
}

// Transition invariants

fn fixture_suite() -> Result<Vec<(String, SyntheticSong)>, String> {
    let mut out = Vec::new();
    for seed in 0..3 {
        out.push((format!("aabb/{seed}"), ctx(aabb_song(seed), "aabb")?));
        out.push((format!("chorus/{seed}"), ctx(chorus_song(seed), "chorus")?));
    }
    let sections = [('A', 16), ('B', 16), ('A', 16), ('C', 16)];
    for seed in 0..2 {
        let opts = SynthOptions {
            seed,
            beats_per_measure: 3,
            loops: vec![('C', 3)],
            ..SynthOptions::default()
        };
        let sections = sections.map(|(l, n)| (l, n / 4 * 3));
        out.push((
            format!("abac-3/4/{seed}"),
            ctx(tiled_song(&sections, &opts), "abac")?,
        ));
    }
    Ok(out)
}

fn check_transition(t: &TransitionPoint, r: &RecurrenceMatrix, g: usize) -> Result<(), String> {
    let forward = t.entry_beat > t.exit_beat;
    match t.kind {
        TransitionKind::BoundaryFallback => {
            ensure(t.cost == 1.0, || format!("{t:?}: fallback cost"))?
        }
        TransitionKind::Segment | TransitionKind::Internal => {
            let value = r.get(t.exit_beat, t.entry_beat);
            ensure(
                (t.entry_beat as i64 - t.exit_beat as i64).rem_euclid(g as i64) == 0,
                || format!("{t:?}: offset breaks the meter"),
            )?;
            ensure(t.diagonal_length >= g, || {
                format!("{t:?}: run shorter than a measure")
            })?;
            let raw = if forward {
                1.0 - value
            } else {
                1.0 - value / 4.0
            };
            let expected = raw.clamp(COST_FLOOR, 1.0);
            ensure(t.cost == expected, || {
                format!("{t:?}: cost {} != {expected}", t.cost)
            })?;
            ensure(forward || (t.cost >= 0.75) == (value <= 1.0), || {
                format!("{t:?}: backward cost")
            })?;
        }
    }
    if let Some(TransitionSource::Pair(a, b)) = t.source {
        ensure(a.level != b.level || a.label != b.label, || {
            format!("{t:?}: joins two segments with one label")
        })?;
    }
    Ok(())
}

fn transition_invariants() -> Outcome {
    let config = PipelineConfig::default();
    let mut counts: BTreeMap<TransitionKind, usize> = BTreeMap::new();
    let fixtures = fixture_suite()?;
    for (name, song) in &fixtures {
        let a = ctx(
            analyze_bundle(&song.bundle("audio.wav".into()), &config),
            name,
        )?;
        let g = a.grid.beats_per_measure();
        for t in &a.transitions {
            check_transition(t, &a.recurrence, g).map_err(|e| format!("{name}: {e}"))?;
            *counts.entry(t.kind).or_default() += 1;
        }
    }
    Ok(format!("{} fixtures, {counts:?}", fixtures.len()))
}

// Path optimality

fn random_instance(rng: &mut ChaCha8Rng) -> Result<(BeatGrid, Vec<TransitionPoint>, f64), String> {
    let n = rng.random_range(4..=30);
    let g = rng.random_range(1..=4usize);
    let period = [0.25, 0.5, 0.75][rng.random_range(0..3)];
    let grid = ctx(BeatGrid::uniform(n, period, g, 8000), "grid")?;
    let mut seen = BTreeSet::new();
    let mut transitions = Vec::new();
    for _ in 0..rng.random_range(0..=8) {
        let exit = rng.random_range(1..=n);
        let entry = rng.random_range(0..n);
        if exit == entry || !seen.insert((exit, entry)) {
            continue;
        }
        let fallback = rng.random_bool(0.3);
        transitions.push(TransitionPoint {
            exit_beat: exit,
            entry_beat: entry,
            cost: if fallback {
                1.0
            } else {
                rng.random_range(1..16) as f64 / 16.0
            },
            kind: if fallback {
                TransitionKind::BoundaryFallback
            } else {
                TransitionKind::Segment
            },
            diagonal_length: if fallback { 0 } else { g },
            source: None,
        });
    }
    // Half-beat offsets keep every candidate duration off the tolerance edge.
    let beats = rng.random_range(2.0..(1.5 * n as f64)).floor() + 0.5;
    Ok((grid, transitions, beats * period))
}

/// Cheapest constraint-satisfying path by depth-first enumeration of every
/// beat sequence that could still land within tolerance.
fn enumerate_best(
    n: usize,
    period: f64,
    tolerance: f64,
    target: f64,
    moves: &[Vec<(usize, f64)>],
) -> Option<(f64, Vec<usize>)> {
    let max_len = ((target + tolerance) / period).floor() as usize;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack = vec![0usize];
    fn walk(
        stack: &mut Vec<usize>,
        cost: f64,
        ctx: (usize, f64, f64, f64, usize),
        moves: &[Vec<(usize, f64)>],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let (n, period, tolerance, target, max_len) = ctx;
        let last = *stack.last().unwrap();
        if last == n - 1 && stack.len() >= 2 {
            let duration = stack.len() as f64 * period;
            let better = best
                .as_ref()
                .is_none_or(|(c, p)| cost < *c || (cost == *c && *stack < *p));
            if (duration - target).abs() <= tolerance && better {
                *best = Some((cost, stack.clone()));
            }
        }
        if stack.len() == max_len {
            return;
        }
        for &(next, step) in &moves[last] {
            stack.push(next);
            walk(stack, cost + step, ctx, moves, best);
            stack.pop();
        }
    }
    walk(
        &mut stack,
        0.0,
        (n, period, tolerance, target, max_len),
        moves,
        &mut best,
    );
    best
}

fn path_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut feasible, mut infeasible, mut jumps) = (0, 0, 0);
    for case in 0..200 {
        let (grid, transitions, target) = random_instance(&mut rng)?;
        let n = grid.len();
        let period = grid.beats()[1];
        let tolerance = grid.beats_per_measure() as f64 * period;
        let mut moves: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|b| {
                if b + 1 < n {
                    vec![(b + 1, 0.0)]
                } else {
                    vec![]
                }
            })
            .collect();
        for t in &transitions {
            let from = t.exit_beat - 1;
            if t.entry_beat != from + 1 {
                moves[from].push((t.entry_beat, t.cost));
            }
        }
        let expected = enumerate_best(n, period, tolerance, target, &moves);
        match (solve(&grid, &transitions, target), expected) {
            (Ok(path), Some((cost, _))) => {
                ensure(path.total_cost == cost, || {
                    format!(
                        "case {case}: solver cost {} but enumeration found {cost}",
                        path.total_cost
                    )
                })?;
                // Independent constraint check on the returned path.
                let b = &path.beats;
                ensure(b[0] == 0 && b[b.len() - 1] == n - 1, || {
                    format!("case {case}: endpoints {b:?}")
                })?;
                let mut walked = 0.0;
                for w in b.windows(2) {
                    let step = moves[w[0]]
                        .iter()
                        .filter(|m| m.0 == w[1])
                        .map(|m| m.1)
                        .fold(f64::INFINITY, f64::min);
                    ensure(step.is_finite(), || {
                        format!("case {case}: illegal step {} -> {}", w[0], w[1])
                    })?;
                    walked += step;
                }
                ensure(walked == cost, || {
                    format!("case {case}: path sums to {walked}")
                })?;
                let duration = b.len() as f64 * period;
                ensure((duration - target).abs() <= tolerance, || {
                    format!("case {case}: duration {duration}")
                })?;
                ensure((path.realized_duration - duration).abs() < 1e-9, || {
                    format!("case {case}: reported duration")
                })?;
                feasible += 1;
                jumps += path.jumps.len();
            }
            (Err(e), None) if matches!(e.root(), Error::Infeasible(_)) => infeasible += 1,
            (Ok(path), None) => {
                return Err(format!(
                    "case {case}: solver found {:?}, enumeration found nothing",
                    path.beats
                ))
            }
            (Err(e), Some((cost, p))) => {
                return Err(format!(
                    "case {case}: solver failed ({e}) but {p:?} costs {cost}"
                ))
            }
            (Err(e), None) => return Err(format!("case {case}: unexpected error {e}")),
        }
    }
    Ok(format!(
        "{feasible} optimal, {infeasible} infeasible, {jumps} jumps taken"
    ))
}

// End-to-end runs through the command layer

struct Run {
    bundle: std::path::PathBuf,
    out: std::path::PathBuf,
    wav: std::path::PathBuf,
}

fn full_run(
    song: &SyntheticSong,
    dir: &Path,
    target: f64,
    execution: Execution,
) -> Result<Run, String> {
    let bundle = dir.join("bundle");
    let out = dir.join("out");
    let wav = dir.join("rendered.wav");
    let manifest = ctx(song.write(&bundle), "bundle")?;
    let config = PipelineConfig {
        execution,
        ..PipelineConfig::default()
    };
    ctx(commands::analyze(&manifest, &out, &config), "analyze")?;
    let options = PlanOptions {
        crossfade_ms: None,
        execution,
    };
    ctx(commands::plan(&out, target, &options), "plan")?;
    ctx(
        commands::render(&out.join(PLAN_FILE), &bundle.join("audio.wav"), &wav, None),
        "render",
    )?;
    Ok(Run { bundle, out, wav })
}

fn end_to_end_shortening() -> Outcome {
    let song = ctx(chorus_song(0), "fixture")?;
    let dir = ctx(tempfile::tempdir(), "tempdir")?;
    let target = song.grid.total_duration() / 2.0;
    let run = full_run(&song, dir.path(), target, Execution::default())?;
    let artifact = ctx(read_plan(&run.out.join(PLAN_FILE)), "plan")?;
    let transitions: Vec<TransitionPoint> = ctx(
        rearrange::artifacts::read_transitions(&run.out.join("transitions.json"), &song.grid),
        "transitions",
    )?
    .transitions;
    let realized = artifact.path.duration_sec;
    let measure = song.grid.mean_measure_duration();

    let kinds: Vec<TransitionKind> = artifact
        .path
        .jumps
        .iter()
        .map(|j| {
            transitions
                .iter()
                .find(|t| t.from_beat() == j.after_beat && t.entry_beat == j.to_beat)
                .map(|t| t.kind)
                .ok_or_else(|| format!("jump {j:?} is not a known transition"))
        })
        .collect::<Result<_, _>>()?;

    let sr = song.audio.sample_rate as f64;
    let frames = |t: f64| (t * sr).round() as i64;
    let fade = (artifact.plan.crossfade_ms * sr / 1000.0).round() as i64;
    let spans: i64 = artifact
        .plan
        .spans
        .iter()
        .map(|s| frames(s.end) - frames(s.start))
        .sum();
    let expected_frames = spans - fade * (artifact.plan.spans.len() as i64 - 1);
    let rendered = ctx(AudioBuffer::read_wav(&run.wav), "rendered wav")?;

    let detail = format!(
        "target {target:.3} s, realized {realized:.3} s, jumps {kinds:?}, {} frames (plan says {expected_frames})",
        rendered.frames()
    );
    ensure((realized - target).abs() <= measure, || {
        format!("outside one measure: {detail}")
    })?;
    ensure(rendered.frames() as i64 == expected_frames, || {
        format!("length mismatch: {detail}")
    })?;
    ensure(kinds.contains(&TransitionKind::Internal), || {
        format!("no internal jump: {detail}")
    })?;
    Ok(detail)
}

fn identity_pass_through() -> Outcome {
    let song = ctx(chorus_song(5), "fixture")?;
    let dir = ctx(tempfile::tempdir(), "tempdir")?;
    let run = full_run(
        &song,
        dir.path(),
        song.grid.total_duration(),
        Execution::default(),
    )?;
    let source = ctx(std::fs::read(run.bundle.join("audio.wav")), "source")?;
    let rendered = ctx(std::fs::read(&run.wav), "rendered")?;
    ensure(source == rendered, || {
        format!("{} vs {} bytes differ", source.len(), rendered.len())
    })?;
    Ok(format!("{} bytes identical", source.len()))
}

fn determinism() -> Outcome {
    let song = ctx(chorus_song(7), "fixture")?;
    let target = 0.7 * song.grid.total_duration();
    let dirs: Vec<_> = (0..3)
        .map(|_| tempfile::tempdir())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let runs = [
        full_run(&song, dirs[0].path(), target, Execution::default())?,
        full_run(&song, dirs[1].path(), target, Execution::default())?,
        full_run(&song, dirs[2].path(), target, Execution::Sequential)?,
    ];
    let files = [
        "hierarchy.json",
        "transitions.json",
        "path.json",
        "plan.json",
    ];
    let mut bytes = 0;
    for other in &runs[1..] {
        for name in files {
            let a = ctx(std::fs::read(runs[0].out.join(name)), name)?;
            let b = ctx(std::fs::read(other.out.join(name)), name)?;
            ensure(a == b, || format!("{name} differs between runs"))?;
            bytes += a.len();
        }
        let a = ctx(std::fs::read(&runs[0].wav), "wav")?;
        ensure(a == ctx(std::fs::read(&other.wav), "wav")?, || {
            "rendered audio differs".into()
        })?;
    }
    Ok(format!(
        "3 runs (2 pooled, 1 sequential), {} artifact bytes compared",
        bytes
    ))
}

fn main() {
    let checks: [(&str, Duration, fn() -> Outcome); 9] = [
        (
            "quantization precision",
            Duration::from_secs(1),
            quantization,
        ),
        (
            "recurrence oracle",
            Duration::from_secs(10),
            recurrence_oracle,
        ),
        (
            "laplacian spectrum",
            Duration::from_secs(10),
            laplacian_spectrum,
        ),
        (
            "planted-structure segmentation",
            Duration::from_secs(30),
            planted_segmentation,
        ),
        (
            "transition invariants",
            Duration::MAX,
            transition_invariants,
        ),
        (
            "path optimality oracle",
            Duration::from_secs(60),
            path_optimality,
        ),
        (
            "end-to-end shortening",
            Duration::from_secs(30),
            end_to_end_shortening,
        ),
        (
            "identity pass-through",
            Duration::MAX,
            identity_pass_through,
        ),
        ("determinism", Duration::MAX, determinism),
    ];
    let mut unexpected = 0;
    for (name, budget, check) in checks {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > budget {
                Err(format!("took {elapsed:.2?}, budget {budget:.0?}; {detail}"))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name} ({elapsed:.2?}): {detail}"),
            Err(why) if KNOWN_GAPS.contains(&name) => {
                println!("[FAIL] {name} ({elapsed:.2?}): {why} [known gap]")
            }
            Err(why) => {
                unexpected += 1;
                println!("[FAIL] {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance check(s) failed");
        std::process::exit(1);
    }
}
