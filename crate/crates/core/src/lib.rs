//! Structure-aware rearrangement of music recordings.
//!
//! The pipeline takes beat-synchronous feature matrices, builds a combined
//! recurrence graph, segments it hierarchically with spectral clustering,
//! discovers transition points anchored to the segment structure, and finds
//! the cheapest beat path that hits a target duration. The path is then
//! rendered into audio by splicing source spans with short crossfades.
//!
//! ```no_run
//! use rearrange::{commands, PipelineConfig};
//!
//! let config = PipelineConfig::default();
//! let analysis = commands::analyze("bundle/manifest.json".as_ref(), "out".as_ref(), &config)?;
//! let plan = commands::plan("out".as_ref(), 30.0, &commands::PlanOptions::default())?;
//! commands::render("out/plan.json".as_ref(), "song.wav".as_ref(), "short.wav".as_ref(), None)?;
//! # let _ = (analysis, plan);
//! # Ok::<(), rearrange::Error>(())
//! ```

pub mod artifacts;
pub mod audio;
pub mod commands;
pub mod config;
mod error;
pub mod exec;
pub mod features;
pub mod pathfinder;
pub mod pipeline;
pub mod recurrence;
pub mod render;
pub mod segmentation;
mod stats;
pub mod synthetic;
pub mod transitions;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use exec::Execution;
pub use features::{BeatGrid, FeatureAxis, FeatureMatrix};
pub use pathfinder::BeatPath;
pub use recurrence::{RecurrenceKind, RecurrenceMatrix};
pub use render::SplicePlan;
pub use segmentation::{Segment, SegmentationHierarchy};
pub use transitions::{TransitionKind, TransitionPoint};
