//! Synthetic songs with planted structure, for tests, benchmarks and demos.
//!
//! A song is a list of sections, each a label and a length in beats.
//! Sections sharing a label repeat the same beat-level pattern, so their
//! beats recur in the repetition features; every label also has its own
//! homogeneity centre. The audio plays one short two-tone note per beat,
//! pitched from the same pattern.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioBuffer, SampleFormat};
use crate::features::{
    write_bundle, BeatGrid, FeatureBundle, FeatureMatrix, HOMOGENEITY_EMBEDDING, REPETITION_CQT,
    REPETITION_EMBEDDING,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub bpm: f64,
    pub beats_per_measure: usize,
    pub sample_rate: u32,
    pub dims: usize,
    /// Standard deviation of per-beat noise added to every feature.
    pub noise: f64,
    pub seed: u64,
    pub format: SampleFormat,
    pub channels: u16,
    /// Labels whose sections loop a short pattern of this many beats
    /// instead of playing one pattern over the whole section.
    pub loops: Vec<(char, usize)>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            bpm: 120.0,
            beats_per_measure: 4,
            sample_rate: 22050,
            dims: 12,
            noise: 0.01,
            seed: 0,
            format: SampleFormat::Int16,
            channels: 1,
            loops: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSong {
    pub grid: BeatGrid,
    pub sections: Vec<(char, usize)>,
    /// Section index of every beat.
    pub section_of_beat: Vec<usize>,
    pub features: Vec<FeatureMatrix>,
    pub audio: AudioBuffer,
}

impl SyntheticSong {
    /// First beat of every section, plus the final boundary.
    pub fn section_starts(&self) -> Vec<usize> {
        let mut starts = vec![0];
        for &(_, len) in &self.sections {
            starts.push(starts.last().unwrap() + len);
        }
        starts
    }

    pub fn bundle(&self, audio: PathBuf) -> FeatureBundle {
        FeatureBundle {
            grid: self.grid.clone(),
            features: self.features.clone(),
            audio,
        }
    }

    /// Writes `audio.wav`, the feature containers and `manifest.json` into
    /// `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.audio.write_wav(&dir.join("audio.wav"))?;
        write_bundle(dir, &self.bundle(PathBuf::from("audio.wav")))
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dims: usize, scale: f64) -> Vec<f64> {
    // Box-Muller from two uniforms keeps the generator stream explicit.
    (0..dims)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let v: f64 = rng.random();
            scale * (-2.0 * u.ln()).sqrt() * (TAU * v).cos()
        })
        .collect()
}

struct LabelModel {
    centres: [Vec<f64>; 3],
    patterns: [Vec<Vec<f64>>; 2],
    pitches: Vec<(f64, f64)>,
}

/// Builds a song from `(label, beats)` sections. Sections with the same
/// label must have the same length.
pub fn tiled_song(sections: &[(char, usize)], opts: &SynthOptions) -> Result<SyntheticSong> {
    let g = opts.beats_per_measure;
    let mut lengths: BTreeMap<char, usize> = BTreeMap::new();
    for &(label, len) in sections {
        if len == 0 {
            return Err(Error::InvalidParameter(format!("section {label} is empty")));
        }
        if *lengths.entry(label).or_insert(len) != len {
            return Err(Error::InvalidParameter(format!(
                "sections labelled {label} differ in length"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let models: BTreeMap<char, LabelModel> = lengths
        .iter()
        .map(|(&label, &len)| {
            let len = match opts.loops.iter().find(|l| l.0 == label) {
                Some(&(_, period)) if period > 0 => period.min(len),
                _ => len,
            };
            let model = LabelModel {
                centres: [0, 1, 2].map(|_| gaussian_vec(&mut rng, opts.dims, 1.0)),
                patterns: [0, 1].map(|_| {
                    (0..len)
                        .map(|_| gaussian_vec(&mut rng, opts.dims, 0.5))
                        .collect()
                }),
                pitches: (0..len)
                    .map(|_| {
                        (
                            rng.random_range(110.0..880.0),
                            rng.random_range(110.0..880.0),
                        )
                    })
                    .collect(),
            };
            (label, model)
        })
        .collect();

    let n: usize = sections.iter().map(|s| s.1).sum();
    let period = 60.0 / opts.bpm;
    let grid = BeatGrid::uniform(n, period, g, opts.sample_rate)?;
    let mut section_of_beat = Vec::with_capacity(n);
    let mut values = [0, 1, 2].map(|_| Array2::<f32>::zeros((n, opts.dims)));
    let mut beat = 0;
    for (s, &(label, len)) in sections.iter().enumerate() {
        let model = &models[&label];
        let period = model.pitches.len();
        for pos in (0..len).map(|p| p % period) {
            let rows = [
                (&model.centres[0], Some(&model.patterns[0][pos])),
                (&model.centres[1], Some(&model.patterns[1][pos])),
                (&model.centres[2], None),
            ];
            for (m, (centre, pattern)) in rows.into_iter().enumerate() {
                let noise = gaussian_vec(&mut rng, opts.dims, opts.noise);
                for d in 0..opts.dims {
                    let v = centre[d] + pattern.map_or(0.0, |p| p[d]) + noise[d];
                    values[m][[beat, d]] = v as f32;
                }
            }
            section_of_beat.push(s);
            beat += 1;
        }
    }
    let [x, y, z] = values;
    let features = vec![
        FeatureMatrix::beats(REPETITION_EMBEDDING, x)?,
        FeatureMatrix::beats(REPETITION_CQT, y)?,
        FeatureMatrix::beats(HOMOGENEITY_EMBEDDING, z)?,
    ];

    // One decaying two-tone note per beat.
    let sr = opts.sample_rate as f64;
    let frames = (grid.total_duration() * sr).round() as usize;
    let ch = opts.channels as usize;
    let mut samples = vec![0f32; frames * ch];
    let mut starts = vec![0];
    for &(_, len) in sections {
        starts.push(starts.last().unwrap() + len);
    }
    for b in 0..n {
        let s = section_of_beat[b];
        let (f1, f2) = {
            let pitches = &models[&sections[s].0].pitches;
            pitches[(b - starts[s]) % pitches.len()]
        };
        let first = (grid.beats()[b] * sr).round() as usize;
        let last = ((grid.beats()[b] + period) * sr).round() as usize;
        for i in first..last.min(frames) {
            let t = (i - first) as f64 / sr;
            let v = 0.3 * (-6.0 * t).exp() * ((TAU * f1 * t).sin() + 0.5 * (TAU * f2 * t).sin());
            for c in 0..ch {
                samples[i * ch + c] = (v * (1.0 - 0.2 * c as f64)) as f32;
            }
        }
    }
    if matches!(opts.format, SampleFormat::Int16 | SampleFormat::Int24) {
        let scale = if opts.format == SampleFormat::Int16 {
            32768.0
        } else {
            8388608.0
        };
        for v in &mut samples {
            *v = (*v * scale).round() / scale;
        }
    }
    let audio = AudioBuffer::new(samples, opts.channels, opts.sample_rate, opts.format)?;
    Ok(SyntheticSong {
        grid,
        sections: sections.to_vec(),
        section_of_beat,
        features,
        audio,
    })
}

/// Two distinct 16-beat blocks laid out as AABB.
pub fn aabb_song(seed: u64) -> Result<SyntheticSong> {
    tiled_song(
        &[('A', 16), ('A', 16), ('B', 16), ('B', 16)],
        &SynthOptions {
            seed,
            ..SynthOptions::default()
        },
    )
}

/// A two-measure intro, a 16-beat verse, a 16-beat chorus played four
/// times, and a two-measure outro.
pub fn chorus_song(seed: u64) -> Result<SyntheticSong> {
    tiled_song(
        &[
            ('I', 8),
            ('V', 16),
            ('C', 16),
            ('C', 16),
            ('C', 16),
            ('C', 16),
            ('O', 8),
        ],
        &SynthOptions {
            seed,
            ..SynthOptions::default()
        },
    )
}
