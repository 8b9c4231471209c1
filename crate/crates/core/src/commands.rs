//! The three command stages behind the CLI, usable directly as a library.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::artifacts::{
    read_hierarchy, read_plan, read_transitions, write_json, Header, HierarchyArtifact,
    PathArtifact, PlanArtifact, TransitionsArtifact, HIERARCHY_FILE, PATH_FILE, PLAN_FILE,
    TRANSITIONS_FILE,
};
use crate::audio::AudioBuffer;
use crate::features::load_feature_bundle;
use crate::pipeline::{analyze_bundle, plan_rearrangement};
use crate::render::render_audio;
use crate::transitions::TransitionKind;
use crate::{Error, Execution, PipelineConfig, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub n_beats: usize,
    /// Segment count per level.
    pub levels: BTreeMap<usize, usize>,
    pub transitions: BTreeMap<TransitionKind, usize>,
    pub hierarchy_path: PathBuf,
    pub transitions_path: PathBuf,
}

impl fmt::Display for AnalyzeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "beats: {}", self.n_beats)?;
        let levels: Vec<String> = self
            .levels
            .iter()
            .map(|(k, n)| format!("{k}:{n}"))
            .collect();
        writeln!(f, "segments per level: {}", levels.join(" "))?;
        let kinds: Vec<String> = self
            .transitions
            .iter()
            .map(|(k, n)| format!("{k:?}={n}"))
            .collect();
        writeln!(f, "transitions: {}", kinds.join(" "))?;
        writeln!(f, "wrote {}", self.hierarchy_path.display())?;
        write!(f, "wrote {}", self.transitions_path.display())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSummary {
    pub cost: f64,
    pub duration: f64,
    pub target: f64,
    pub jumps: usize,
    pub plan_path: PathBuf,
}

impl fmt::Display for PlanSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "target {:.3} s, planned {:.3} s",
            self.target, self.duration
        )?;
        writeln!(f, "cost {:.6} over {} jumps", self.cost, self.jumps)?;
        write!(f, "wrote {}", self.plan_path.display())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub frames: usize,
    pub duration: f64,
    pub output: PathBuf,
}

impl fmt::Display for RenderSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrote {} ({} frames, {:.3} s)",
            self.output.display(),
            self.frames,
            self.duration
        )
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs features, recurrence, segmentation and transition discovery on a
/// bundle and writes `hierarchy.json` and `transitions.json` to `out_dir`.
pub fn analyze(manifest: &Path, out_dir: &Path, config: &PipelineConfig) -> Result<AnalyzeSummary> {
    config.validate()?;
    let bundle = load_feature_bundle(manifest).map_err(Error::in_stage("loading bundle"))?;
    let analysis = analyze_bundle(&bundle, config)?;
    ensure_dir(out_dir)?;

    let header = Header::new(config);
    let hierarchy_path = out_dir.join(HIERARCHY_FILE);
    write_json(
        &hierarchy_path,
        &HierarchyArtifact::new(header.clone(), &analysis.grid, &analysis.hierarchy),
    )?;
    let transitions_path = out_dir.join(TRANSITIONS_FILE);
    write_json(
        &transitions_path,
        &TransitionsArtifact {
            header,
            transitions: analysis.transitions.clone(),
        },
    )?;

    let mut transitions = BTreeMap::new();
    for t in &analysis.transitions {
        *transitions.entry(t.kind).or_insert(0) += 1;
    }
    Ok(AnalyzeSummary {
        n_beats: analysis.grid.len(),
        levels: analysis
            .hierarchy
            .levels()
            .iter()
            .map(|(k, s)| (*k, s.len()))
            .collect(),
        transitions,
        hierarchy_path,
        transitions_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanOptions {
    /// Replaces the crossfade recorded at analysis time.
    pub crossfade_ms: Option<f64>,
    pub execution: Execution,
}

/// Solves for `target` seconds using the artifacts in `out_dir`, writing
/// `path.json` and `plan.json` next to them. The configuration comes from
/// the analysis header.
pub fn plan(out_dir: &Path, target: f64, options: &PlanOptions) -> Result<PlanSummary> {
    let hierarchy = read_hierarchy(&out_dir.join(HIERARCHY_FILE))?;
    let mut config = hierarchy.header.config;
    config.execution = options.execution;
    if let Some(ms) = options.crossfade_ms {
        config.crossfade_ms = ms;
    }
    config.validate()?;
    let grid = hierarchy.grid;
    let transitions = read_transitions(&out_dir.join(TRANSITIONS_FILE), &grid)?.transitions;
    let (path, plan) = plan_rearrangement(&grid, &transitions, target, &config)?;

    let path_artifact = PathArtifact::from(&path);
    write_json(&out_dir.join(PATH_FILE), &path_artifact)?;
    let plan_path = out_dir.join(PLAN_FILE);
    write_json(
        &plan_path,
        &PlanArtifact {
            header: Header::new(&config),
            target_sec: target,
            path: path_artifact,
            plan,
        },
    )?;
    Ok(PlanSummary {
        cost: path.total_cost,
        duration: path.realized_duration,
        target,
        jumps: path.jumps.len(),
        plan_path,
    })
}

/// Renders a plan against the source audio. `crossfade_ms` overrides the
/// crossfade stored in the plan.
pub fn render(
    plan_file: &Path,
    audio: &Path,
    out: &Path,
    crossfade_ms: Option<f64>,
) -> Result<RenderSummary> {
    let mut plan = read_plan(plan_file)?.plan;
    if let Some(ms) = crossfade_ms {
        if !(0.0..=200.0).contains(&ms) {
            return Err(Error::InvalidParameter(format!(
                "crossfade of {ms} ms outside [0, 200]"
            )));
        }
        plan.crossfade_ms = ms;
    }
    let source = AudioBuffer::read_wav(audio)?;
    let rendered = render_audio(&plan, &source)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    rendered.write_wav(out)?;
    Ok(RenderSummary {
        frames: rendered.frames(),
        duration: rendered.duration(),
        output: out.to_path_buf(),
    })
}
