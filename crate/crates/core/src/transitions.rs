//! Transition discovery.
//!
//! A transition `(exit, entry)` replaces source beat `exit` by beat `entry`:
//! playback runs up to beat `exit - 1` and continues at `entry`. It is smooth
//! when `R(exit, entry)` is high, so candidates are read off diagonal stripes
//! of the recurrence matrix. Stripes are searched near segment boundaries
//! (between every pair of non-overlapping segments) and inside segments of
//! the finer levels, where several repetitions are often grouped together.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, Execution};
use crate::features::BeatGrid;
use crate::recurrence::RecurrenceMatrix;
use crate::segmentation::{collect_global_segments, Segment, SegmentationHierarchy};
use crate::{Error, Result};

/// Smallest cost a transition can have, so every jump stays strictly positive.
pub const COST_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Segment,
    Internal,
    BoundaryFallback,
}

impl TransitionKind {
    pub fn is_diagonal(self) -> bool {
        self != TransitionKind::BoundaryFallback
    }

    // Preference when two searches produce the same jump at the same cost.
    fn priority(self) -> u8 {
        match self {
            TransitionKind::Internal => 0,
            TransitionKind::Segment => 1,
            TransitionKind::BoundaryFallback => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionSource {
    Pair(Segment, Segment),
    Within(Segment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub exit_beat: usize,
    pub entry_beat: usize,
    pub cost: f64,
    pub kind: TransitionKind,
    #[serde(rename = "diag_len")]
    pub diagonal_length: usize,
    /// Segments the search ran on. Not persisted.
    #[serde(skip)]
    pub source: Option<TransitionSource>,
}

impl TransitionPoint {
    /// Last beat played before the jump.
    pub fn from_beat(&self) -> usize {
        self.exit_beat - 1
    }

    pub fn is_forward(&self) -> bool {
        self.entry_beat > self.exit_beat
    }

    /// Checks the structural invariants against a grid with `n_beats` beats
    /// and `g` beats per measure.
    pub fn validate(&self, n_beats: usize, g: usize) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidTransition {
                exit: self.exit_beat,
                entry: self.entry_beat,
                reason,
            })
        };
        if self.exit_beat == 0 || self.exit_beat > n_beats {
            return fail(format!("exit must lie in [1, {n_beats}]"));
        }
        if self.entry_beat >= n_beats {
            return fail(format!("entry must lie in [0, {n_beats})"));
        }
        if self.exit_beat == self.entry_beat {
            return fail("exit equals entry".into());
        }
        if !(self.cost > 0.0 && self.cost <= 1.0) {
            return fail(format!("cost {} outside (0, 1]", self.cost));
        }
        if self.kind.is_diagonal() {
            if (self.entry_beat as i64 - self.exit_beat as i64).rem_euclid(g as i64) != 0 {
                return fail(format!("offset is not a multiple of {g}"));
            }
            if self.diagonal_length < g {
                return fail(format!(
                    "diagonal of {} beats is shorter than a measure",
                    self.diagonal_length
                ));
            }
        } else if self.cost != 1.0 {
            return fail("boundary fallback must cost 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionConfig {
    pub radius_measures: usize,
    pub min_run_measures: usize,
    /// Cells strictly above this value belong to a run.
    pub run_threshold: f64,
    pub internal_levels: BTreeSet<usize>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self {
            radius_measures: 4,
            min_run_measures: 1,
            run_threshold: 0.0,
            internal_levels: BTreeSet::from([4, 5, 6]),
            execution: Execution::default(),
        }
    }
}

/// Jump cost: `1 - R` ahead in time, `1 - R/4` back in time, floored at
/// [`COST_FLOOR`].
pub fn assign_cost(exit_beat: usize, entry_beat: usize, r: &RecurrenceMatrix) -> f64 {
    let sim = r.get(exit_beat, entry_beat);
    let cost = if entry_beat > exit_beat {
        1.0 - sim
    } else {
        1.0 - sim / 4.0
    };
    cost.clamp(COST_FLOOR, 1.0)
}

/// A maximal run of above-threshold cells along one diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagonalRun {
    pub start_row: usize,
    pub start_col: usize,
    pub len: usize,
}

impl DiagonalRun {
    /// `(row, col)` of the middle cell; even runs take the earlier one.
    pub fn midpoint(&self) -> (usize, usize) {
        let m = (self.len - 1) / 2;
        (self.start_row + m, self.start_col + m)
    }

    pub fn offset(&self) -> i64 {
        self.start_row as i64 - self.start_col as i64
    }
}

/// Enumerates maximal runs inside the window `rows x cols` on every
/// diagonal whose offset `row - col` is a nonzero multiple of `g`.
pub fn diagonal_runs(
    r: &RecurrenceMatrix,
    rows: Range<usize>,
    cols: Range<usize>,
    g: usize,
    threshold: f64,
) -> Vec<DiagonalRun> {
    let mut runs = Vec::new();
    if rows.is_empty() || cols.is_empty() {
        return runs;
    }
    let lo = rows.start as i64 - (cols.end as i64 - 1);
    let hi = rows.end as i64 - 1 - cols.start as i64;
    for d in lo..=hi {
        if d == 0 || d.rem_euclid(g as i64) != 0 {
            continue;
        }
        let c0 = (cols.start as i64).max(rows.start as i64 - d) as usize;
        let c1 = (cols.end as i64).min(rows.end as i64 - d) as usize;
        let mut current: Option<DiagonalRun> = None;
        for c in c0..c1 {
            let row = (c as i64 + d) as usize;
            if r.get(row, c) > threshold {
                match current.as_mut() {
                    Some(run) => run.len += 1,
                    None => {
                        current = Some(DiagonalRun {
                            start_row: row,
                            start_col: c,
                            len: 1,
                        })
                    }
                }
            } else if let Some(run) = current.take() {
                runs.push(run);
            }
        }
        runs.extend(current);
    }
    runs
}

fn chebyshev((row, col): (usize, usize), (to_row, to_col): (usize, usize)) -> usize {
    row.abs_diff(to_row).max(col.abs_diff(to_col))
}

fn diagonal_point(
    run: DiagonalRun,
    r: &RecurrenceMatrix,
    kind: TransitionKind,
    source: TransitionSource,
) -> TransitionPoint {
    let (entry, exit) = run.midpoint();
    TransitionPoint {
        exit_beat: exit,
        entry_beat: entry,
        cost: assign_cost(exit, entry, r),
        kind,
        diagonal_length: run.len,
        source: Some(source),
    }
}

// Beat 0 has no predecessor, so it cannot be an exit.
fn usable(run: &DiagonalRun, min_len: usize) -> bool {
    run.len >= min_len.max(1) && run.midpoint().1 > 0
}

/// Which segment, and which label, every beat falls in on each level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    levels: BTreeMap<usize, Vec<Option<(usize, usize)>>>,
}

impl LabelMap {
    pub fn new(segments: &[Segment], n_beats: usize) -> Self {
        let mut levels: BTreeMap<usize, Vec<Option<(usize, usize)>>> = BTreeMap::new();
        for (idx, s) in segments.iter().enumerate() {
            let beats = levels.entry(s.level).or_insert_with(|| vec![None; n_beats]);
            let end = s.end_beat.min(n_beats);
            for slot in beats.iter_mut().take(end).skip(s.start_beat) {
                *slot = Some((idx, s.label));
            }
        }
        Self { levels }
    }

    /// True when `a` and `b` sit in two different segments of `level` that
    /// share a label.
    pub fn same_label_apart(&self, level: usize, a: usize, b: usize) -> bool {
        let Some(beats) = self.levels.get(&level) else {
            return false;
        };
        match (
            beats.get(a).copied().flatten(),
            beats.get(b).copied().flatten(),
        ) {
            (Some((sa, la)), Some((sb, lb))) => sa != sb && la == lb,
            _ => false,
        }
    }
}

// Search around the corner (row p, column q) shared by every segment pair
// with these boundaries. Runs whose midpoint fails `admissible(row, col)`
// are skipped.
fn search_corner(
    q: usize,
    p: usize,
    radius: usize,
    r: &RecurrenceMatrix,
    g: usize,
    config: &TransitionConfig,
    admissible: impl Fn(usize, usize) -> bool,
) -> Option<DiagonalRun> {
    let n = r.len();
    let cols = q.saturating_sub(radius)..(q + radius + 1).min(n);
    let rows = p.saturating_sub(radius)..(p + radius + 1).min(n);
    let min_len = config.min_run_measures * g;
    diagonal_runs(r, rows, cols, g, config.run_threshold)
        .into_iter()
        .filter(|run| usable(run, min_len))
        .filter(|run| {
            let (row, col) = run.midpoint();
            admissible(row, col)
        })
        .min_by_key(|run| {
            let (row, col) = run.midpoint();
            (Reverse(run.len), chebyshev((row, col), (p, q)), col, row)
        })
}

fn search_radius(alpha: &Segment, beta: &Segment, g: usize, config: &TransitionConfig) -> usize {
    (config.radius_measures * g)
        .min(alpha.len())
        .min(beta.len())
}

/// Best diagonal transition from the end of `alpha` to the start of `beta`.
pub fn find_segment_transition(
    alpha: &Segment,
    beta: &Segment,
    r: &RecurrenceMatrix,
    grid: &BeatGrid,
    config: &TransitionConfig,
) -> Option<TransitionPoint> {
    let g = grid.beats_per_measure();
    let radius = search_radius(alpha, beta, g, config);
    search_corner(
        alpha.end_beat,
        beta.start_beat,
        radius,
        r,
        g,
        config,
        |_, _| true,
    )
    .map(|run| {
        diagonal_point(
            run,
            r,
            TransitionKind::Segment,
            TransitionSource::Pair(*alpha, *beta),
        )
    })
}

/// Best diagonal inside `seg`, preferring long runs near the segment start.
/// Segments shorter than two measures yield nothing.
pub fn find_internal_transitions(
    seg: &Segment,
    r: &RecurrenceMatrix,
    grid: &BeatGrid,
    config: &TransitionConfig,
) -> Vec<TransitionPoint> {
    let g = grid.beats_per_measure();
    if seg.len() < 2 * g {
        return Vec::new();
    }
    let (p, q) = (seg.start_beat, seg.end_beat);
    let min_len = config.min_run_measures * g;
    diagonal_runs(r, p..q, p..q, g, config.run_threshold)
        .into_iter()
        .filter(|run| usable(run, min_len))
        .min_by_key(|run| {
            let (row, col) = run.midpoint();
            (
                Reverse(run.len),
                chebyshev((row, col), (p, p)),
                row < col,
                col,
                row,
            )
        })
        .map(|run| {
            diagonal_point(
                run,
                r,
                TransitionKind::Internal,
                TransitionSource::Within(*seg),
            )
        })
        .into_iter()
        .collect()
}

/// Jump from the last beat of `alpha` straight to the first beat of `beta`.
/// Adjacent segments produce nothing since that is plain continuation.
pub fn boundary_fallback(alpha: &Segment, beta: &Segment) -> Option<TransitionPoint> {
    (alpha.end_beat != beta.start_beat).then_some(TransitionPoint {
        exit_beat: alpha.end_beat,
        entry_beat: beta.start_beat,
        cost: 1.0,
        kind: TransitionKind::BoundaryFallback,
        diagonal_length: 0,
        source: Some(TransitionSource::Pair(*alpha, *beta)),
    })
}

/// Ordered pairs of non-overlapping segments, leaving out pairs from the
/// same level that share a label.
pub fn candidate_pairs(segments: &[Segment]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (a, alpha) in segments.iter().enumerate() {
        for (b, beta) in segments.iter().enumerate() {
            let same_label = alpha.level == beta.level && alpha.label == beta.label;
            if a != b && !alpha.overlaps(beta) && !same_label {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

// Runs one corner search per distinct (q, p, radius, levels) and returns
// the result for every candidate pair. A run is rejected when the beat it
// leaves and the beat it enters lie in different same-label segments on
// either segment's level.
fn segment_searches(
    segments: &[Segment],
    pairs: &[(usize, usize)],
    r: &RecurrenceMatrix,
    g: usize,
    config: &TransitionConfig,
) -> Vec<Option<DiagonalRun>> {
    let labels = LabelMap::new(segments, r.len());
    let key = |&(a, b): &(usize, usize)| {
        let (alpha, beta) = (&segments[a], &segments[b]);
        let radius = search_radius(alpha, beta, g, config);
        let levels = (alpha.level.min(beta.level), alpha.level.max(beta.level));
        (alpha.end_beat, beta.start_beat, radius, levels)
    };
    let corners: Vec<_> = pairs
        .iter()
        .map(key)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let found = map_indexed(config.execution, corners.len(), |i| {
        let (q, p, radius, (la, lb)) = corners[i];
        search_corner(q, p, radius, r, g, config, |row, col| {
            // The beat played before the jump is the one left behind.
            !labels.same_label_apart(la, col - 1, row) && !labels.same_label_apart(lb, col - 1, row)
        })
    });
    let lookup: BTreeMap<_, _> = corners.into_iter().zip(found).collect();
    pairs.iter().map(|pair| lookup[&key(pair)]).collect()
}

/// Fallbacks for every candidate pair without a diagonal transition.
pub fn boundary_fallback_transitions(
    segments: &[Segment],
    r: &RecurrenceMatrix,
    grid: &BeatGrid,
    config: &TransitionConfig,
) -> Vec<TransitionPoint> {
    let pairs = candidate_pairs(segments);
    let found = segment_searches(segments, &pairs, r, grid.beats_per_measure(), config);
    pairs
        .iter()
        .zip(found)
        .filter(|(_, run)| run.is_none())
        .filter_map(|(&(a, b), _)| boundary_fallback(&segments[a], &segments[b]))
        .collect()
}

/// Keeps one transition per `(exit, entry)`: the cheapest, then the most
/// specific kind. Output is sorted by `(exit, entry)`.
pub fn merge_transitions(all: impl IntoIterator<Item = TransitionPoint>) -> Vec<TransitionPoint> {
    let mut merged: BTreeMap<(usize, usize), TransitionPoint> = BTreeMap::new();
    for t in all {
        let better = |old: &TransitionPoint| {
            t.cost < old.cost || (t.cost == old.cost && t.kind.priority() < old.kind.priority())
        };
        match merged.get(&(t.exit_beat, t.entry_beat)) {
            Some(old) if !better(old) => {}
            _ => {
                merged.insert((t.exit_beat, t.entry_beat), t);
            }
        }
    }
    merged.into_values().collect()
}

/// Segment transitions for every candidate pair across all levels, internal
/// transitions on the configured levels, and boundary fallbacks.
pub fn build_transition_set(
    hierarchy: &SegmentationHierarchy,
    r: &RecurrenceMatrix,
    grid: &BeatGrid,
    config: &TransitionConfig,
) -> Result<Vec<TransitionPoint>> {
    let n = grid.len();
    if r.len() != n || hierarchy.n_beats() != n {
        return Err(Error::DimensionMismatch(format!(
            "grid has {n} beats, recurrence {} and hierarchy {}",
            r.len(),
            hierarchy.n_beats()
        )));
    }
    let g = grid.beats_per_measure();
    let segments = collect_global_segments(hierarchy);
    let pairs = candidate_pairs(&segments);
    let found = segment_searches(&segments, &pairs, r, g, config);

    let mut all = Vec::new();
    for (&(a, b), run) in pairs.iter().zip(found) {
        let (alpha, beta) = (&segments[a], &segments[b]);
        match run {
            Some(run) => all.push(diagonal_point(
                run,
                r,
                TransitionKind::Segment,
                TransitionSource::Pair(*alpha, *beta),
            )),
            None => all.extend(boundary_fallback(alpha, beta)),
        }
    }
    let internal_segments: Vec<&Segment> = segments
        .iter()
        .filter(|s| config.internal_levels.contains(&s.level))
        .collect();
    let internal = map_indexed(config.execution, internal_segments.len(), |i| {
        find_internal_transitions(internal_segments[i], r, grid, config)
    });
    all.extend(internal.into_iter().flatten());
    Ok(merge_transitions(all))
}
