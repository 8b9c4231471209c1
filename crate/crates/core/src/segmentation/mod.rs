//! Multi-level segmentation by spectral clustering of the combined
//! recurrence graph.
//!
//! Level `k` clusters the beats with `k`-means on the first `k` eigenvectors
//! of the normalised Laplacian. Cluster change-points become segment
//! boundaries, which are then snapped to the nearest downbeat so no segment
//! starts or ends mid-measure.

mod kmeans;
mod laplacian;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, Execution};
use crate::features::BeatGrid;
use crate::{Error, Result};

pub use laplacian::{normalized_laplacian, sorted_eigenpairs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub level: usize,
    pub label: usize,
    pub start_beat: usize,
    /// Exclusive.
    pub end_beat: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_beat - self.start_beat
    }

    pub fn is_empty(&self) -> bool {
        self.end_beat == self.start_beat
    }

    pub fn overlaps(&self, other: &Segment) -> bool {
        self.start_beat < other.end_beat && other.start_beat < self.end_beat
    }

    pub fn contains(&self, beat: usize) -> bool {
        (self.start_beat..self.end_beat).contains(&beat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Scale each spectral embedding row to unit length before clustering.
    pub normalize_rows: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            k_max: 12,
            seed: 0,
            restarts: 50,
            max_iterations: 300,
            normalize_rows: false,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationHierarchy {
    levels: BTreeMap<usize, Vec<Segment>>,
    eigenvalues: Vec<f64>,
    eigenvectors: Array2<f64>,
    diagnostics: Vec<String>,
}

fn check_partition(level: usize, segments: &[Segment], n_beats: usize) -> Result<()> {
    let bad = |why: String| Err(Error::InvalidParameter(format!("level {level}: {why}")));
    let Some(first) = segments.first() else {
        return bad("no segments".into());
    };
    if first.start_beat != 0 || segments.last().map(|s| s.end_beat) != Some(n_beats) {
        return bad(format!("segments do not cover [0, {n_beats})"));
    }
    for s in segments {
        if s.level != level || s.is_empty() || s.label >= level {
            return bad(format!("invalid segment {s:?}"));
        }
    }
    for w in segments.windows(2) {
        if w[0].end_beat != w[1].start_beat {
            return bad(format!("gap or overlap between {:?} and {:?}", w[0], w[1]));
        }
        if w[0].label == w[1].label {
            return bad(format!("adjacent segments share label {}", w[0].label));
        }
    }
    Ok(())
}

/// Splits per-beat labels into maximal constant runs.
pub fn segments_from_labels(level: usize, labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (beat, &label) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.label == label => s.end_beat = beat + 1,
            _ => out.push(Segment {
                level,
                label,
                start_beat: beat,
                end_beat: beat + 1,
            }),
        }
    }
    out
}

impl SegmentationHierarchy {
    /// Builds a hierarchy from explicit levels, checking that each level
    /// partitions `[0, n_beats)` with alternating labels below `k`.
    pub fn from_levels(levels: BTreeMap<usize, Vec<Segment>>, n_beats: usize) -> Result<Self> {
        for (&k, segments) in &levels {
            check_partition(k, segments, n_beats)?;
        }
        Ok(Self {
            levels,
            eigenvalues: Vec::new(),
            eigenvectors: Array2::zeros((n_beats, 0)),
            diagnostics: Vec::new(),
        })
    }

    pub fn levels(&self) -> &BTreeMap<usize, Vec<Segment>> {
        &self.levels
    }

    pub fn level(&self, k: usize) -> Option<&[Segment]> {
        self.levels.get(&k).map(Vec::as_slice)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// N x k_max matrix of the leading eigenvectors.
    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn n_beats(&self) -> usize {
        self.levels
            .values()
            .next()
            .and_then(|l| l.last())
            .map_or(self.eigenvectors.nrows(), |s| s.end_beat)
    }

    /// Keeps levels up to and including the first one that contains a
    /// segment no longer than `min_seconds`.
    pub fn truncate_at_min_segment(&mut self, grid: &BeatGrid, min_seconds: f64) {
        let stop = self.levels.iter().find_map(|(&k, segs)| {
            segs.iter()
                .any(|s| {
                    grid.time_of_boundary(s.end_beat) - grid.time_of_boundary(s.start_beat)
                        <= min_seconds
                })
                .then_some(k)
        });
        if let Some(stop) = stop {
            self.levels.retain(|&k, _| k <= stop);
        }
    }
}

pub fn segment_levels(
    laplacian: &Array2<f64>,
    grid: &BeatGrid,
    config: &SegmentationConfig,
) -> Result<SegmentationHierarchy> {
    let n = laplacian.nrows();
    if n != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "laplacian has {n} rows, grid has {} beats",
            grid.len()
        )));
    }
    if config.k_max == 0 || config.k_max > n {
        return Err(Error::InvalidParameter(format!(
            "k_max = {} must lie in [1, {n}]",
            config.k_max
        )));
    }
    let (values, vectors) = sorted_eigenpairs(laplacian)?;
    let k_max = config.k_max;
    let eigenvectors = vectors.slice(ndarray::s![.., ..k_max]).to_owned();

    let levels = map_indexed(config.execution, k_max, |idx| {
        let k = idx + 1;
        if k == 1 {
            return (vec![0; n], Vec::new());
        }
        let points: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..k).map(|c| eigenvectors[[i, c]]).collect();
                if config.normalize_rows {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|v| *v /= norm);
                    }
                }
                row
            })
            .collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let c = kmeans::kmeans(&points, k, config.restarts, config.max_iterations, &mut rng);
        log::debug!(
            "level {k}: {} clusters, inertia {:.6}",
            c.k_effective,
            c.inertia
        );
        let diagnostics = c
            .diagnostics
            .into_iter()
            .map(|d| format!("level {k}: {d}"))
            .collect();
        (c.labels, diagnostics)
    });

    let mut hierarchy_levels = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (idx, (labels, diags)) in levels.into_iter().enumerate() {
        hierarchy_levels.insert(idx + 1, segments_from_labels(idx + 1, &labels));
        diagnostics.extend(diags);
    }
    for d in &diagnostics {
        log::warn!("{d}");
    }
    Ok(SegmentationHierarchy {
        levels: hierarchy_levels,
        eigenvalues: values,
        eigenvectors,
        diagnostics,
    })
}

/// Beat index of the downbeat closest in time to `beat` (earlier on ties).
fn nearest_downbeat(grid: &BeatGrid, beat: usize) -> usize {
    let t = grid.beats()[beat];
    let downs = grid.downbeats();
    let idx = downs.partition_point(|&d| d < t);
    let pick = match (idx.checked_sub(1), downs.get(idx)) {
        (Some(prev), Some(&next)) if next - t < t - downs[prev] => idx,
        (Some(prev), _) => prev,
        (None, _) => idx,
    };
    grid.downbeat_beats()[pick]
}

/// Snaps interior boundaries to their closest downbeat. Segments that
/// collapse to zero length disappear, and neighbours left with the same
/// label merge. Grids without downbeats are returned unchanged.
pub fn quantize_to_downbeats(h: &SegmentationHierarchy, grid: &BeatGrid) -> SegmentationHierarchy {
    if grid.downbeats().is_empty() {
        return h.clone();
    }
    let n = grid.len();
    let levels = h
        .levels
        .iter()
        .map(|(&k, segments)| {
            let snap = |b: usize| {
                if b == 0 || b >= n {
                    b
                } else {
                    nearest_downbeat(grid, b)
                }
            };
            let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
            for s in segments {
                let (start, end) = (snap(s.start_beat), snap(s.end_beat));
                if start >= end {
                    continue;
                }
                match out.last_mut() {
                    Some(prev) if prev.label == s.label => prev.end_beat = end,
                    Some(prev) => {
                        prev.end_beat = start;
                        out.push(Segment {
                            start_beat: start,
                            end_beat: end,
                            ..*s
                        });
                    }
                    None => out.push(Segment {
                        start_beat: 0,
                        end_beat: end,
                        ..*s
                    }),
                }
            }
            (k, out)
        })
        .collect();
    SegmentationHierarchy {
        levels,
        eigenvalues: h.eigenvalues.clone(),
        eigenvectors: h.eigenvectors.clone(),
        diagnostics: h.diagnostics.clone(),
    }
}

/// Every segment of every level, in level order, without exact
/// `(start, end, level)` repeats.
pub fn collect_global_segments(h: &SegmentationHierarchy) -> Vec<Segment> {
    let mut seen = BTreeSet::new();
    h.levels
        .values()
        .flatten()
        .filter(|s| seen.insert((s.start_beat, s.end_beat, s.level)))
        .copied()
        .collect()
}
