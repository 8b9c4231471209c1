//! Duration-constrained beat paths.
//!
//! A rearrangement is a sequence of `L` source beats that starts on the
//! first beat, ends on the last, and moves either to the next beat (free) or
//! through a transition (its cost). Vertex `(beat, layer)` means "beat played
//! at position `layer`", so every path through the layered graph has a fixed
//! length and backward jumps cannot cycle. For each candidate `L` around the
//! target the cheapest path is found with Dijkstra; the best one meeting the
//! duration tolerance wins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, Execution};
use crate::features::BeatGrid;
use crate::transitions::TransitionPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Index into the path of the beat played before the jump.
    pub position: usize,
    pub transition: TransitionPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeatPath {
    pub beats: Vec<usize>,
    pub total_cost: f64,
    pub realized_duration: f64,
    pub jumps: Vec<Jump>,
}

impl BeatPath {
    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    /// The path that plays every beat once, in order.
    pub fn identity(grid: &BeatGrid) -> Self {
        let beats: Vec<usize> = (0..grid.len()).collect();
        Self {
            realized_duration: grid.path_duration(&beats),
            beats,
            total_cost: 0.0,
            jumps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    to: usize,
    cost: f64,
    // Index into the transition list, `None` for continuation.
    transition: Option<usize>,
}

/// Beat-to-beat moves shared by every layer.
#[derive(Debug, Clone)]
pub struct LayeredGraph {
    n_beats: usize,
    n_layers: usize,
    out_edges: Vec<Vec<Edge>>,
    in_edges: Vec<Vec<(usize, f64)>>,
}

impl LayeredGraph {
    pub fn n_beats(&self) -> usize {
        self.n_beats
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn vertex_count(&self) -> usize {
        self.n_beats * self.n_layers
    }

    /// Edges between consecutive layers.
    pub fn edge_count(&self) -> usize {
        let per_layer: usize = self.out_edges.iter().map(Vec::len).sum();
        per_layer * (self.n_layers - 1)
    }

    /// Beats reachable from `beat` in one step, with their cost.
    pub fn successors(&self, beat: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.out_edges[beat].iter().map(|e| (e.to, e.cost))
    }

    fn edge(&self, from: usize, to: usize) -> Option<&Edge> {
        self.out_edges[from].iter().find(|e| e.to == to)
    }
}

/// Builds the layered graph. Duplicate moves keep the cheaper cost, and a
/// transition that merely restates continuation is ignored.
pub fn build_layered_graph(
    n_beats: usize,
    transitions: &[TransitionPoint],
    n_layers: usize,
) -> Result<LayeredGraph> {
    if n_layers < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 layers, got {n_layers}"
        )));
    }
    if n_beats == 0 {
        return Err(Error::InvalidParameter(
            "graph needs at least one beat".into(),
        ));
    }
    let mut out_edges: Vec<Vec<Edge>> = (0..n_beats)
        .map(|i| {
            if i + 1 < n_beats {
                vec![Edge {
                    to: i + 1,
                    cost: 0.0,
                    transition: None,
                }]
            } else {
                Vec::new()
            }
        })
        .collect();
    for (idx, t) in transitions.iter().enumerate() {
        if t.exit_beat == 0 || t.exit_beat > n_beats || t.entry_beat >= n_beats {
            return Err(Error::InvalidTransition {
                exit: t.exit_beat,
                entry: t.entry_beat,
                reason: format!("outside a {n_beats}-beat grid"),
            });
        }
        if !(t.cost >= 0.0 && t.cost.is_finite()) {
            return Err(Error::InvalidTransition {
                exit: t.exit_beat,
                entry: t.entry_beat,
                reason: format!("cost {} is not a nonnegative number", t.cost),
            });
        }
        let from = t.from_beat();
        let edges = &mut out_edges[from];
        match edges.iter_mut().find(|e| e.to == t.entry_beat) {
            Some(e) if e.transition.is_some() && t.cost < e.cost => {
                e.cost = t.cost;
                e.transition = Some(idx);
            }
            Some(_) => {}
            None => edges.push(Edge {
                to: t.entry_beat,
                cost: t.cost,
                transition: Some(idx),
            }),
        }
    }
    for edges in &mut out_edges {
        edges.sort_by_key(|e| e.to);
    }
    let mut in_edges = vec![Vec::new(); n_beats];
    for (from, edges) in out_edges.iter().enumerate() {
        for e in edges {
            in_edges[e.to].push((from, e.cost));
        }
    }
    Ok(LayeredGraph {
        n_beats,
        n_layers,
        out_edges,
        in_edges,
    })
}

#[derive(PartialEq)]
struct QueueEntry {
    dist: f64,
    layer: usize,
    beat: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.layer.cmp(&self.layer))
            .then_with(|| other.beat.cmp(&self.beat))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest path of exactly `graph.n_layers()` beats from beat 0 to the
/// last beat, or `None` if no such path exists. Among equally cheap paths
/// the lexicographically smallest beat sequence is returned.
pub fn shortest_path(graph: &LayeredGraph) -> Option<(Vec<usize>, f64)> {
    let (n, layers) = (graph.n_beats, graph.n_layers);
    // Cost-to-go from every vertex, by Dijkstra over reversed edges.
    let mut to_go = vec![f64::INFINITY; n * layers];
    let mut done = vec![false; n * layers];
    let id = |beat: usize, layer: usize| layer * n + beat;
    let mut heap = BinaryHeap::new();
    to_go[id(n - 1, layers - 1)] = 0.0;
    heap.push(QueueEntry {
        dist: 0.0,
        layer: layers - 1,
        beat: n - 1,
    });
    while let Some(QueueEntry { dist, layer, beat }) = heap.pop() {
        if done[id(beat, layer)] {
            continue;
        }
        done[id(beat, layer)] = true;
        if layer == 0 {
            continue;
        }
        for &(from, cost) in &graph.in_edges[beat] {
            let v = id(from, layer - 1);
            let candidate = to_go[id(beat, layer)] + cost;
            debug_assert_eq!(to_go[id(beat, layer)], dist);
            if candidate < to_go[v] {
                to_go[v] = candidate;
                heap.push(QueueEntry {
                    dist: candidate,
                    layer: layer - 1,
                    beat: from,
                });
            }
        }
    }
    let best = to_go[id(0, 0)];
    if !best.is_finite() {
        return None;
    }
    // Walk forward taking the smallest beat that stays on an optimal path.
    let mut beats = Vec::with_capacity(layers);
    let mut beat = 0;
    beats.push(beat);
    for layer in 0..layers - 1 {
        let here = to_go[id(beat, layer)];
        beat = graph.out_edges[beat]
            .iter()
            .filter(|e| to_go[id(e.to, layer + 1)] + e.cost == here)
            .map(|e| e.to)
            .min()
            .expect("an optimal successor exists");
        beats.push(beat);
    }
    Some((beats, best))
}

/// Sums step costs along `beats` in path order, or `None` if a step is not
/// an edge of the graph.
fn path_cost(graph: &LayeredGraph, beats: &[usize]) -> Option<f64> {
    beats
        .windows(2)
        .try_fold(0.0, |acc, w| graph.edge(w[0], w[1]).map(|e| acc + e.cost))
}

fn jumps_along(
    graph: &LayeredGraph,
    beats: &[usize],
    transitions: &[TransitionPoint],
) -> Vec<Jump> {
    beats
        .windows(2)
        .enumerate()
        .filter_map(|(position, w)| {
            let edge = graph.edge(w[0], w[1])?;
            edge.transition.map(|idx| Jump {
                position,
                transition: transitions[idx].clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Half-width of the searched path-length window, in measures.
    pub window_measures: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            window_measures: 2,
            execution: Execution::default(),
        }
    }
}

/// Path lengths tried for `target`: `L0 - 2g ..= L0 + 2g`, where
/// `L0 = round(target / median beat)`, restricted to at least 2 beats.
pub fn candidate_lengths(grid: &BeatGrid, target: f64, options: &SolveOptions) -> Vec<usize> {
    let l0 = (target / grid.median_beat_duration()).round() as i64;
    let half = (options.window_measures * grid.beats_per_measure()) as i64;
    ((l0 - half).max(2)..=(l0 + half).max(1))
        .map(|l| l as usize)
        .collect()
}

pub fn solve(grid: &BeatGrid, transitions: &[TransitionPoint], target: f64) -> Result<BeatPath> {
    solve_with(grid, transitions, target, &SolveOptions::default())
}

pub fn solve_with(
    grid: &BeatGrid,
    transitions: &[TransitionPoint],
    target: f64,
    options: &SolveOptions,
) -> Result<BeatPath> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target duration {target} must be positive"
        )));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("need at least two beats".into()));
    }
    let tolerance = grid.mean_measure_duration();
    let lengths = candidate_lengths(grid, target, options);
    let solved = map_indexed(
        options.execution,
        lengths.len(),
        |i| -> Result<Option<BeatPath>> {
            let graph = build_layered_graph(grid.len(), transitions, lengths[i])?;
            let Some((beats, _)) = shortest_path(&graph) else {
                return Ok(None);
            };
            let realized_duration = grid.path_duration(&beats);
            if (realized_duration - target).abs() > tolerance {
                return Ok(None);
            }
            Ok(Some(BeatPath {
                total_cost: path_cost(&graph, &beats).expect("solver path follows graph edges"),
                jumps: jumps_along(&graph, &beats, transitions),
                realized_duration,
                beats,
            }))
        },
    );
    let mut best: Option<BeatPath> = None;
    for candidate in solved {
        let Some(path) = candidate? else { continue };
        let better = best.as_ref().is_none_or(|b| {
            path.total_cost
                .total_cmp(&b.total_cost)
                .then_with(|| path.beats.cmp(&b.beats))
                .is_lt()
        });
        if better {
            best = Some(path);
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no path of {}..={} beats lands within {:.3} s of {:.3} s (source is {:.3} s, {} transitions)",
            lengths.first().copied().unwrap_or(0),
            lengths.last().copied().unwrap_or(0),
            tolerance,
            target,
            grid.total_duration(),
            transitions.len()
        ))
    })
}

/// Outcome of checking a path against the rearrangement constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathReport {
    pub starts_at_first_beat: bool,
    pub ends_at_last_beat: bool,
    pub steps_allowed: bool,
    pub duration_within_tolerance: bool,
    pub cost_matches: bool,
    pub problems: Vec<String>,
}

impl PathReport {
    pub fn passed(&self) -> bool {
        self.starts_at_first_beat
            && self.ends_at_last_beat
            && self.steps_allowed
            && self.duration_within_tolerance
            && self.cost_matches
    }
}

/// Checks a path without relying on the solver's graph.
pub fn validate_path(
    path: &BeatPath,
    grid: &BeatGrid,
    transitions: &[TransitionPoint],
    target: f64,
) -> PathReport {
    let n = grid.len();
    let mut problems = Vec::new();
    let starts_at_first_beat = path.beats.first() == Some(&0);
    if !starts_at_first_beat {
        problems.push(format!(
            "path starts at {:?}, not beat 0",
            path.beats.first()
        ));
    }
    let ends_at_last_beat = n > 0 && path.beats.last() == Some(&(n - 1));
    if !ends_at_last_beat {
        problems.push(format!(
            "path ends at {:?}, not beat {}",
            path.beats.last(),
            n.saturating_sub(1)
        ));
    }

    let mut steps_allowed = path.beats.iter().all(|&b| b < n);
    let mut cost = 0.0;
    for (pos, w) in path.beats.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if b == a + 1 {
            continue;
        }
        let step = transitions
            .iter()
            .filter(|t| t.exit_beat == a + 1 && t.entry_beat == b)
            .map(|t| t.cost)
            .min_by(f64::total_cmp);
        match step {
            Some(c) => cost += c,
            None => {
                steps_allowed = false;
                problems.push(format!(
                    "step {pos}: {a} -> {b} is neither continuation nor a transition"
                ));
            }
        }
    }

    let duration = if steps_allowed {
        grid.path_duration(&path.beats)
    } else {
        f64::NAN
    };
    let duration_within_tolerance = (duration - target).abs() <= grid.mean_measure_duration()
        && (duration - path.realized_duration).abs() <= 1e-9;
    if !duration_within_tolerance {
        problems.push(format!(
            "duration {duration:.6} s (reported {:.6} s) is not within one measure of {target:.6} s",
            path.realized_duration
        ));
    }
    let cost_matches = steps_allowed && (cost - path.total_cost).abs() <= 1e-9;
    if !cost_matches {
        problems.push(format!(
            "reported cost {} but steps sum to {cost}",
            path.total_cost
        ));
    }
    PathReport {
        starts_at_first_beat,
        ends_at_last_beat,
        steps_allowed,
        duration_within_tolerance,
        cost_matches,
        problems,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::TransitionKind;

    fn jump(exit: usize, entry: usize, cost: f64) -> TransitionPoint {
        TransitionPoint {
            exit_beat: exit,
            entry_beat: entry,
            cost,
            kind: TransitionKind::Segment,
            diagonal_length: 2,
            source: None,
        }
    }

    #[test]
    fn chain_graph() {
        let graph = build_layered_graph(5, &[], 5).unwrap();
        assert_eq!(graph.vertex_count(), 25);
        assert_eq!(shortest_path(&graph), Some((vec![0, 1, 2, 3, 4], 0.0)));
        let short = build_layered_graph(5, &[], 4).unwrap();
        assert_eq!(shortest_path(&short), None);
    }

    #[test]
    fn graph_rejects_bad_input() {
        assert!(build_layered_graph(5, &[], 1).is_err());
        assert!(build_layered_graph(5, &[jump(0, 3, 0.5)], 3).is_err());
        assert!(build_layered_graph(5, &[jump(2, 5, 0.5)], 3).is_err());
        assert!(build_layered_graph(5, &[jump(6, 1, 0.5)], 3).is_err());
    }

    #[test]
    fn edge_count_bound() {
        let ts = [jump(2, 4, 0.2), jump(4, 1, 0.3), jump(5, 0, 1.0)];
        let graph = build_layered_graph(6, &ts, 7).unwrap();
        assert!(graph.edge_count() <= 7 * (6 + ts.len()));
        assert_eq!(
            graph.successors(1).collect::<Vec<_>>(),
            vec![(2, 0.0), (4, 0.2)]
        );
    }

    #[test]
    fn skip_example() {
        // Transition replacing beat 4 by beat 7 plays 0 1 2 3 7 8 9.
        let grid = BeatGrid::uniform(10, 0.5, 2, 22050).unwrap();
        let path = solve(&grid, &[jump(4, 7, 0.2)], 3.5).unwrap();
        assert_eq!(path.beats, vec![0, 1, 2, 3, 7, 8, 9]);
        assert_eq!(path.total_cost, 0.2);
        assert_eq!(path.realized_duration, 3.5);
        assert_eq!(path.jumps.len(), 1);
        assert_eq!(path.jumps[0].position, 3);
        assert!(validate_path(&path, &grid, &[jump(4, 7, 0.2)], 3.5).passed());

        let path = solve(&grid, &[jump(3, 7, 0.2)], 3.0).unwrap();
        assert_eq!(path.beats, vec![0, 1, 2, 7, 8, 9]);
        assert_eq!(
            (path.len(), path.total_cost, path.realized_duration),
            (6, 0.2, 3.0)
        );
    }

    #[test]
    fn identity_when_target_is_source_duration() {
        let grid = BeatGrid::uniform(16, 0.5, 4, 22050).unwrap();
        let ts = [jump(8, 12, 0.1), jump(12, 4, 0.8)];
        let path = solve(&grid, &ts, grid.total_duration()).unwrap();
        assert_eq!(path, BeatPath::identity(&grid));
    }

    #[test]
    fn infeasible_without_transitions() {
        let grid = BeatGrid::uniform(8, 0.5, 2, 22050).unwrap();
        assert!(matches!(solve(&grid, &[], 2.0), Err(Error::Infeasible(_))));
        assert!(solve(&grid, &[], -1.0).is_err());
    }

    #[test]
    fn lexicographic_tie_break() {
        // Two equally cheap 2-beat skips; jumping later keeps smaller beats
        // in front.
        let grid = BeatGrid::uniform(12, 0.5, 2, 22050).unwrap();
        let ts = [jump(5, 7, 0.25), jump(3, 5, 0.25)];
        let path = solve(&grid, &ts, 4.0).unwrap();
        assert_eq!(path.beats, vec![0, 1, 2, 3, 4, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn validation_flags_each_constraint() {
        let grid = BeatGrid::uniform(10, 0.5, 2, 22050).unwrap();
        let ts = [jump(4, 7, 0.2)];
        let good = solve(&grid, &ts, 3.5).unwrap();

        let mut late_start = good.clone();
        late_start.beats[0] = 1;
        let report = validate_path(&late_start, &grid, &ts, 3.5);
        assert!(!report.starts_at_first_beat);

        let mut fabricated = good.clone();
        fabricated.beats = vec![0, 1, 6, 7, 8, 9];
        let report = validate_path(&fabricated, &grid, &ts, 3.0);
        assert!(!report.steps_allowed);

        let report = validate_path(&good, &grid, &ts, 1.0);
        assert!(!report.duration_within_tolerance);
        assert!(report.starts_at_first_beat && report.ends_at_last_beat && report.steps_allowed);

        let mut wrong_cost = good;
        wrong_cost.total_cost = 0.0;
        assert!(!validate_path(&wrong_cost, &grid, &ts, 3.5).cost_matches);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let grid = BeatGrid::uniform(24, 0.5, 4, 22050).unwrap();
        let ts = [
            jump(8, 16, 0.3),
            jump(12, 20, 0.1),
            jump(20, 4, 0.9),
            jump(16, 8, 0.75),
        ];
        for target in [6.0, 8.0, 12.0, 16.0] {
            let seq = solve_with(
                &grid,
                &ts,
                target,
                &SolveOptions {
                    execution: Execution::Sequential,
                    ..Default::default()
                },
            );
            let par = solve_with(
                &grid,
                &ts,
                target,
                &SolveOptions {
                    execution: Execution::Parallel,
                    ..Default::default()
                },
            );
            assert_eq!(seq.ok(), par.ok());
        }
    }
}
