//! The analysis and planning stages wired together.

use log::{info, warn};

use crate::audio::AudioBuffer;
use crate::features::{
    beat_synchronize, compute_fallback_repetition_feature, BeatGrid, FeatureBundle, FeatureMatrix,
    HOMOGENEITY_EMBEDDING, REPETITION_CQT, REPETITION_EMBEDDING,
};
use crate::pathfinder::{solve_with, validate_path, BeatPath, SolveOptions};
use crate::recurrence::{
    build_repetition_recurrence_with, build_sequence_matrix, combine_weighted, default_k_nn,
    RecurrenceMatrix,
};
use crate::render::{compress_path, SplicePlan};
use crate::segmentation::{
    normalized_laplacian, quantize_to_downbeats, segment_levels, SegmentationHierarchy,
};
use crate::transitions::{build_transition_set, TransitionPoint};
use crate::{Error, PipelineConfig, Result};

/// Beat-synchronous repetition (`x`, `y`) and homogeneity (`z`) features.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatFeatures {
    pub x: FeatureMatrix,
    pub y: FeatureMatrix,
    pub z: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub grid: BeatGrid,
    pub recurrence: RecurrenceMatrix,
    pub hierarchy: SegmentationHierarchy,
    pub transitions: Vec<TransitionPoint>,
}

fn required<'a>(bundle: &'a FeatureBundle, name: &str) -> Result<&'a FeatureMatrix> {
    bundle.feature(name).ok_or_else(|| Error::InvalidFeature {
        name: name.to_string(),
        reason: "not listed in the manifest".into(),
    })
}

/// Beat-synchronises the bundle's features. Without a precomputed CQT the
/// second repetition feature is computed from the bundle's audio.
pub fn beat_features(bundle: &FeatureBundle) -> Result<BeatFeatures> {
    let grid = &bundle.grid;
    let x = beat_synchronize(required(bundle, REPETITION_EMBEDDING)?, grid)?;
    let z = beat_synchronize(required(bundle, HOMOGENEITY_EMBEDDING)?, grid)?;
    let y = match bundle.feature(REPETITION_CQT) {
        Some(m) => beat_synchronize(m, grid)?,
        None => {
            info!(
                "no {REPETITION_CQT} in bundle; computing fallback spectrogram from {}",
                bundle.audio.display()
            );
            let audio = AudioBuffer::read_wav(&bundle.audio)?;
            let frames = compute_fallback_repetition_feature(&audio)?;
            beat_synchronize(&frames, grid)?
        }
    };
    Ok(BeatFeatures { x, y, z })
}

pub fn combined_recurrence(
    features: &BeatFeatures,
    config: &PipelineConfig,
) -> Result<RecurrenceMatrix> {
    let n = features.x.rows();
    let k_nn = match config.k_nn {
        Some(k) if k >= n => {
            warn!("k_nn = {k} needs more than {n} beats; using {}", n - 1);
            n - 1
        }
        Some(k) => k,
        None => default_k_nn(n),
    };
    let exec = config.execution;
    let rx = build_repetition_recurrence_with(&features.x, k_nn, exec)?;
    let ry = build_repetition_recurrence_with(&features.y, k_nn, exec)?;
    let rz = build_sequence_matrix(&features.z)?;
    combine_weighted(&rx, &ry, &rz, config.weights)
}

/// Spectral segmentation snapped to downbeats, optionally cut at the first
/// level with very short segments.
pub fn segment(
    r: &RecurrenceMatrix,
    grid: &BeatGrid,
    config: &PipelineConfig,
) -> Result<SegmentationHierarchy> {
    let laplacian = normalized_laplacian(r);
    let raw = segment_levels(&laplacian, grid, &config.segmentation(grid.len()))?;
    let mut hierarchy = quantize_to_downbeats(&raw, grid);
    if let Some(min) = config.min_segment_sec {
        hierarchy.truncate_at_min_segment(grid, min);
    }
    Ok(hierarchy)
}

pub fn analyze_bundle(bundle: &FeatureBundle, config: &PipelineConfig) -> Result<Analysis> {
    config.validate()?;
    let grid = bundle.grid.clone();
    if grid.len() < 2 {
        return Err(Error::InvalidGrid("need at least two beats".into()));
    }
    let features = beat_features(bundle).map_err(Error::in_stage("features"))?;
    let recurrence =
        combined_recurrence(&features, config).map_err(Error::in_stage("recurrence"))?;
    let hierarchy = segment(&recurrence, &grid, config).map_err(Error::in_stage("segmentation"))?;
    let transitions = build_transition_set(&hierarchy, &recurrence, &grid, &config.transitions())
        .map_err(Error::in_stage("transitions"))?;
    Ok(Analysis {
        grid,
        recurrence,
        hierarchy,
        transitions,
    })
}

/// Solves for `target` seconds, double-checks the path and turns it into
/// a splice plan.
pub fn plan_rearrangement(
    grid: &BeatGrid,
    transitions: &[TransitionPoint],
    target: f64,
    config: &PipelineConfig,
) -> Result<(BeatPath, SplicePlan)> {
    config.validate()?;
    let options = SolveOptions {
        execution: config.execution,
        ..SolveOptions::default()
    };
    let path = solve_with(grid, transitions, target, &options)?;
    let report = validate_path(&path, grid, transitions, target);
    if !report.passed() {
        return Err(Error::InvalidParameter(format!(
            "solver produced an invalid path: {}",
            report.problems.join("; ")
        )));
    }
    let mut plan = compress_path(&path, grid, config.crossfade_ms);
    plan.crossfade_law = config.crossfade_law;
    Ok((path, plan))
}
