use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rearrange::commands::{self, PlanOptions};
use rearrange::synthetic::{aabb_song, chorus_song};
use rearrange::{Error, Execution, PipelineConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Rearrange a recording to a target duration along its own structure.
#[derive(Debug, Parser)]
#[command(name = "rearrange", version)]
struct Cli {
    /// Log more detail (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Run every stage in plain loops instead of the thread pool.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment a feature bundle and discover transition points.
    Analyze(AnalyzeArgs),
    /// Solve for a target duration using the analysis artifacts.
    Plan(PlanArgs),
    /// Splice the source audio according to a plan.
    Render(RenderArgs),
    /// Write a synthetic feature bundle with planted structure.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Bundle manifest (JSON) listing the beat grid and feature containers.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for hierarchy.json and transitions.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Finest segmentation level.
    #[arg(long)]
    k_max: Option<usize>,
    /// Neighbours per beat in the repetition graphs.
    #[arg(long)]
    knn: Option<usize>,
    /// Transition search radius in measures.
    #[arg(long)]
    radius: Option<usize>,
    /// Crossfade recorded for later planning, in milliseconds.
    #[arg(long)]
    crossfade_ms: Option<f64>,
    /// Stop at the first level producing a segment shorter than this.
    #[arg(long)]
    min_segment_sec: Option<f64>,
    /// Seed for the clustering restarts.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Directory holding the analysis artifacts; plan.json is written here.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    target_seconds: f64,
    /// Overrides the crossfade recorded at analysis time.
    #[arg(long)]
    crossfade_ms: Option<f64>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Source recording the plan was made for.
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the crossfade stored in the plan.
    #[arg(long)]
    crossfade_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Layout {
    /// Intro, verse, a chorus played four times, outro.
    Chorus,
    /// Two distinct blocks, each played twice.
    Aabb,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "chorus")]
    layout: Layout,
    /// Seed for the synthetic material.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn analyze_config(args: &AnalyzeArgs, execution: Execution) -> PipelineConfig {
    let mut config = PipelineConfig {
        k_nn: args.knn,
        min_segment_sec: args.min_segment_sec,
        execution,
        ..PipelineConfig::default()
    };
    if let Some(k) = args.k_max {
        config.k_max = k;
    }
    if let Some(r) = args.radius {
        config.radius_measures = r;
    }
    if let Some(ms) = args.crossfade_ms {
        config.crossfade_ms = ms;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
}

fn run(cli: Cli) -> rearrange::Result<()> {
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Analyze(args) => {
            let config = analyze_config(&args, execution);
            println!(
                "{}",
                commands::analyze(&args.manifest, &args.out_dir, &config)?
            );
        }
        Command::Plan(args) => {
            let options = PlanOptions {
                crossfade_ms: args.crossfade_ms,
                execution,
            };
            println!(
                "{}",
                commands::plan(&args.out_dir, args.target_seconds, &options)?
            );
        }
        Command::Render(args) => {
            println!(
                "{}",
                commands::render(&args.plan, &args.audio, &args.out, args.crossfade_ms)?
            );
        }
        Command::Synth(args) => {
            let song = match args.layout {
                Layout::Chorus => chorus_song(args.seed)?,
                Layout::Aabb => aabb_song(args.seed)?,
            };
            let manifest = song.write(&args.out_dir)?;
            println!(
                "wrote {} ({} beats, {:.3} s)",
                manifest.display(),
                song.grid.len(),
                song.grid.total_duration()
            );
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
