//! Shortens a synthetic song to half its length and prints the plan.
//!
//! `cargo run --release -p rearrange --example shorten -- [seed]`

use rearrange::pipeline::{analyze_bundle, plan_rearrangement};
use rearrange::synthetic::chorus_song;
use rearrange::PipelineConfig;

fn main() -> rearrange::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let song = chorus_song(seed)?;
    let config = PipelineConfig::default();
    let analysis = analyze_bundle(&song.bundle("audio.wav".into()), &config)?;
    for (k, segments) in analysis.hierarchy.levels().range(1..=6) {
        let parts: Vec<String> = segments
            .iter()
            .map(|s| format!("{}:[{},{})", s.label, s.start_beat, s.end_beat))
            .collect();
        println!("level {k}: {}", parts.join(" "));
    }
    let target = song.grid.total_duration() / 2.0;
    let (path, plan) = plan_rearrangement(&analysis.grid, &analysis.transitions, target, &config)?;
    println!(
        "target {target:.2} s, planned {:.2} s, cost {:.4}",
        path.realized_duration, path.total_cost
    );
    for j in &path.jumps {
        let t = &j.transition;
        println!(
            "  after beat {} jump to {} ({:?}, cost {:.4})",
            t.from_beat(),
            t.entry_beat,
            t.kind,
            t.cost
        );
    }
    for s in &plan.spans {
        println!("  play {:.3}..{:.3} s", s.start, s.end);
    }
    Ok(())
}
