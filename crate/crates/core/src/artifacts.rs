//! JSON artifacts passed between the analyze, plan and render commands.
//!
//! Every artifact starts with a header recording the format version and the
//! configuration that produced it. Output is pretty-printed with a fixed key
//! order, so identical runs give identical bytes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::features::BeatGrid;
use crate::pathfinder::BeatPath;
use crate::render::SplicePlan;
use crate::segmentation::{Segment, SegmentationHierarchy};
use crate::transitions::TransitionPoint;
use crate::{Error, PipelineConfig, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const TRANSITIONS_FILE: &str = "transitions.json";
pub const PATH_FILE: &str = "path.json";
pub const PLAN_FILE: &str = "plan.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: PipelineConfig,
}

impl Header {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    fn check(&self, path: &Path) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::MalformedManifest {
                path: path.to_path_buf(),
                reason: format!(
                    "artifact format {} (expected {FORMAT_VERSION})",
                    self.format_version
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub level: usize,
    pub label: usize,
    pub start_beat: usize,
    pub end_beat: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyArtifact {
    pub header: Header,
    pub grid: BeatGrid,
    pub eigenvalues: Vec<f64>,
    pub diagnostics: Vec<String>,
    pub segments: Vec<SegmentRecord>,
}

impl HierarchyArtifact {
    pub fn new(header: Header, grid: &BeatGrid, h: &SegmentationHierarchy) -> Self {
        let segments = h
            .levels()
            .values()
            .flatten()
            .map(|s| SegmentRecord {
                level: s.level,
                label: s.label,
                start_beat: s.start_beat,
                end_beat: s.end_beat,
                start_sec: grid.time_of_boundary(s.start_beat),
                end_sec: grid.time_of_boundary(s.end_beat),
            })
            .collect();
        Self {
            header,
            grid: grid.clone(),
            eigenvalues: h.eigenvalues().to_vec(),
            diagnostics: h.diagnostics().to_vec(),
            segments,
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.segments.iter().map(|r| Segment {
            level: r.level,
            label: r.label,
            start_beat: r.start_beat,
            end_beat: r.end_beat,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionsArtifact {
    pub header: Header,
    pub transitions: Vec<TransitionPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub after_beat: usize,
    pub to_beat: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathArtifact {
    pub beats: Vec<usize>,
    pub cost: f64,
    pub duration_sec: f64,
    pub jumps: Vec<JumpRecord>,
}

impl From<&BeatPath> for PathArtifact {
    fn from(path: &BeatPath) -> Self {
        Self {
            beats: path.beats.clone(),
            cost: path.total_cost,
            duration_sec: path.realized_duration,
            jumps: path
                .jumps
                .iter()
                .map(|j| JumpRecord {
                    after_beat: path.beats[j.position],
                    to_beat: path.beats[j.position + 1],
                    cost: j.transition.cost,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanArtifact {
    pub header: Header,
    pub target_sec: f64,
    pub path: PathArtifact,
    pub plan: SplicePlan,
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn read_hierarchy(path: &Path) -> Result<HierarchyArtifact> {
    let a: HierarchyArtifact = read_json(path)?;
    a.header.check(path)?;
    Ok(a)
}

pub fn read_transitions(path: &Path, grid: &BeatGrid) -> Result<TransitionsArtifact> {
    let a: TransitionsArtifact = read_json(path)?;
    a.header.check(path)?;
    for t in &a.transitions {
        t.validate(grid.len(), grid.beats_per_measure())?;
    }
    Ok(a)
}

pub fn read_plan(path: &Path) -> Result<PlanArtifact> {
    let a: PlanArtifact = read_json(path)?;
    a.header.check(path)?;
    Ok(a)
}
