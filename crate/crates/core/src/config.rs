//! Pipeline settings shared by the analysis, planning and rendering stages.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::recurrence::DEFAULT_WEIGHTS;
use crate::render::{CrossfadeLaw, DEFAULT_CROSSFADE_MS};
use crate::segmentation::SegmentationConfig;
use crate::transitions::TransitionConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_max: usize,
    /// Neighbours per beat in the repetition graphs; `None` picks
    /// `ceil(2 sqrt(N))`.
    pub k_nn: Option<usize>,
    /// Weights of the two repetition graphs and the sequence matrix.
    pub weights: [f64; 3],
    pub radius_measures: usize,
    pub internal_levels: BTreeSet<usize>,
    pub min_run_measures: usize,
    pub run_threshold: f64,
    pub crossfade_ms: f64,
    pub crossfade_law: CrossfadeLaw,
    /// Drop levels finer than the first one containing a segment this short.
    pub min_segment_sec: Option<f64>,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub normalize_rows: bool,
    /// Runtime choice between the rayon pool and plain loops. Results are
    /// identical either way, so it is not recorded in artifacts.
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_max: 12,
            k_nn: None,
            weights: DEFAULT_WEIGHTS,
            radius_measures: 4,
            internal_levels: BTreeSet::from([4, 5, 6]),
            min_run_measures: 1,
            run_threshold: 0.0,
            crossfade_ms: DEFAULT_CROSSFADE_MS,
            crossfade_law: CrossfadeLaw::default(),
            min_segment_sec: None,
            seed: 0,
            kmeans_restarts: 50,
            normalize_rows: false,
            execution: Execution::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0)
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "weights {:?} must be nonnegative and sum to 1",
                self.weights
            ));
        }
        let counts = [
            ("k_max", self.k_max),
            ("radius_measures", self.radius_measures),
            ("min_run_measures", self.min_run_measures),
            ("kmeans_restarts", self.kmeans_restarts),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.k_nn == Some(0) {
            return bad("k_nn must be positive".into());
        }
        if self.internal_levels.contains(&0) {
            return bad("internal levels start at 1".into());
        }
        if !(0.0..=200.0).contains(&self.crossfade_ms) {
            return bad(format!(
                "crossfade of {} ms outside [0, 200]",
                self.crossfade_ms
            ));
        }
        if self.min_segment_sec.is_some_and(|s| s.is_nan() || s <= 0.0) {
            return bad("min_segment_sec must be positive".into());
        }
        if !(self.run_threshold >= 0.0 && self.run_threshold < 1.0) {
            return bad(format!(
                "run threshold {} outside [0, 1)",
                self.run_threshold
            ));
        }
        Ok(())
    }

    pub fn segmentation(&self, n_beats: usize) -> SegmentationConfig {
        SegmentationConfig {
            k_max: self.k_max.min(n_beats),
            seed: self.seed,
            restarts: self.kmeans_restarts,
            normalize_rows: self.normalize_rows,
            execution: self.execution,
            ..SegmentationConfig::default()
        }
    }

    pub fn transitions(&self) -> TransitionConfig {
        TransitionConfig {
            radius_measures: self.radius_measures,
            min_run_measures: self.min_run_measures,
            run_threshold: self.run_threshold,
            internal_levels: self.internal_levels.clone(),
            execution: self.execution,
        }
    }
}
