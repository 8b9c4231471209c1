//! Splice plans and audio rendering.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::features::BeatGrid;
use crate::pathfinder::BeatPath;
use crate::{Error, Result};

pub const DEFAULT_CROSSFADE_MS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossfadeLaw {
    /// `cos`/`sin` gains: constant power for uncorrelated material.
    #[default]
    EqualPower,
    /// `cos^2`/`sin^2` gains: constant amplitude for identical material.
    EqualGain,
}

impl CrossfadeLaw {
    /// Fade-out and fade-in gains at sample `t` of an `len`-sample overlap.
    pub fn gains(self, t: usize, len: usize) -> (f64, f64) {
        let phase = FRAC_PI_2 * (t as f64 + 0.5) / len as f64;
        let (c, s) = (phase.cos(), phase.sin());
        match self {
            CrossfadeLaw::EqualPower => (c, s),
            CrossfadeLaw::EqualGain => (c * c, s * s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplicePlan {
    pub spans: Vec<Span>,
    /// Cost of the jump into each span after the first.
    pub jump_costs: Vec<f64>,
    pub crossfade_ms: f64,
    #[serde(default)]
    pub crossfade_law: CrossfadeLaw,
}

impl SplicePlan {
    pub fn duration(&self) -> f64 {
        self.spans.iter().map(Span::duration).sum()
    }

    pub fn jumps(&self) -> usize {
        self.spans.len().saturating_sub(1)
    }

    pub fn crossfade_samples(&self, sample_rate: u32) -> usize {
        (self.crossfade_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// `[start, end)` sample frames of each span.
    pub fn span_frames(&self, sample_rate: u32) -> Vec<(usize, usize)> {
        let to_frame = |t: f64| (t * sample_rate as f64).round().max(0.0) as usize;
        self.spans
            .iter()
            .map(|s| (to_frame(s.start), to_frame(s.end)))
            .collect()
    }

    /// Length of the rendered output in frames.
    pub fn output_frames(&self, sample_rate: u32) -> usize {
        let total: usize = self
            .span_frames(sample_rate)
            .iter()
            .map(|(a, b)| b - a)
            .sum();
        total - self.jumps() * self.crossfade_samples(sample_rate)
    }
}

/// Collapses runs of consecutive beats into source time spans. The run
/// that opens the path includes the lead-in before beat 0 and the run that
/// closes it includes the tail after the last beat.
pub fn compress_path(path: &BeatPath, grid: &BeatGrid, crossfade_ms: f64) -> SplicePlan {
    let n = grid.len();
    let beats = &path.beats;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &b in beats {
        match runs.last_mut() {
            Some((_, last)) if b == *last + 1 => *last = b,
            _ => runs.push((b, b)),
        }
    }
    let count = runs.len();
    let spans = runs
        .iter()
        .enumerate()
        .map(|(k, &(first, last))| {
            let start = if k == 0 && first == 0 {
                0.0
            } else {
                grid.beats()[first]
            };
            let end = if k + 1 == count && last + 1 == n {
                grid.total_duration()
            } else {
                grid.beat_end(last)
            };
            Span { start, end }
        })
        .collect();
    SplicePlan {
        spans,
        jump_costs: path.jumps.iter().map(|j| j.transition.cost).collect(),
        crossfade_ms,
        crossfade_law: CrossfadeLaw::default(),
    }
}

/// Concatenates the plan's spans, overlapping each junction by the
/// crossfade length.
pub fn render_audio(plan: &SplicePlan, audio: &AudioBuffer) -> Result<AudioBuffer> {
    let sr = audio.sample_rate;
    let ch = audio.channels as usize;
    let frames = audio.frames();
    let spans = plan.span_frames(sr);
    for (index, (&(start, end), span)) in spans.iter().zip(&plan.spans).enumerate() {
        if span.end.is_nan() || span.end <= span.start || end > frames || start >= end {
            return Err(Error::SpanOutOfBounds {
                index,
                start: span.start,
                end: span.end,
                duration: audio.duration(),
            });
        }
    }
    let fade = plan.crossfade_samples(sr);
    if spans.len() > 1 {
        for (index, &(start, end)) in spans.iter().enumerate() {
            if 2 * fade > end - start {
                return Err(Error::CrossfadeTooLong {
                    index,
                    crossfade: fade,
                    span: end - start,
                });
            }
        }
    }

    let mut out: Vec<f32> = Vec::with_capacity(plan.output_frames(sr) * ch);
    for (k, &(start, end)) in spans.iter().enumerate() {
        let source = &audio.samples[start * ch..end * ch];
        if k == 0 || fade == 0 {
            out.extend_from_slice(source);
            continue;
        }
        let tail = out.len() - fade * ch;
        for t in 0..fade {
            let (g_out, g_in) = plan.crossfade_law.gains(t, fade);
            for c in 0..ch {
                let i = t * ch + c;
                let mixed = g_out * out[tail + i] as f64 + g_in * source[i] as f64;
                out[tail + i] = mixed as f32;
            }
        }
        out.extend_from_slice(&source[fade * ch..]);
    }
    AudioBuffer::new(out, audio.channels, sr, audio.format)
}
