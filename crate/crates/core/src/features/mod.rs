//! Beat grids, feature matrices, the binary interchange format and
//! beat-synchronisation.

mod bundle;
mod container;
mod spectrogram;
mod sync;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{stats, Error, Result};

pub use bundle::{load_feature_bundle, write_bundle, FeatureBundle, FeatureRef, Manifest};
pub use container::{
    decode_container, encode_container, read_container, write_container, CONTAINER_MAGIC,
};
pub use spectrogram::{
    band_edges, compute_fallback_repetition_feature, FALLBACK_BANDS, FALLBACK_FFT_SIZE,
    FALLBACK_FLOOR_DB, FALLBACK_FMAX, FALLBACK_FMIN, FALLBACK_HOP,
};
pub use sync::beat_synchronize;

/// Tag for the auto-tagging embedding used as repetition feature.
pub const REPETITION_EMBEDDING: &str = "repetition-embedding";
/// Tag for the log-frequency spectrogram used as repetition feature.
pub const REPETITION_CQT: &str = "repetition-cqt";
/// Tag for the sound-event embedding used for local homogeneity.
pub const HOMOGENEITY_EMBEDDING: &str = "homogeneity-embedding";

/// Tolerance for matching a downbeat time to a beat time.
pub const DOWNBEAT_TOLERANCE: f64 = 1e-3;

/// Beat and downbeat positions of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct BeatGrid {
    beats: Vec<f64>,
    downbeats: Vec<f64>,
    beats_per_measure: usize,
    sample_rate: u32,
    total_duration: f64,
    downbeat_beats: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    beats: Vec<f64>,
    downbeats: Vec<f64>,
    beats_per_measure: usize,
    sample_rate: u32,
    total_duration: f64,
}

impl TryFrom<RawGrid> for BeatGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        BeatGrid::new(
            raw.beats,
            raw.downbeats,
            raw.beats_per_measure,
            raw.sample_rate,
            raw.total_duration,
        )
    }
}

impl From<BeatGrid> for RawGrid {
    fn from(grid: BeatGrid) -> Self {
        RawGrid {
            beats: grid.beats,
            downbeats: grid.downbeats,
            beats_per_measure: grid.beats_per_measure,
            sample_rate: grid.sample_rate,
            total_duration: grid.total_duration,
        }
    }
}

fn strictly_ascending(times: &[f64]) -> bool {
    times.windows(2).all(|w| w[0] < w[1])
}

impl BeatGrid {
    pub fn new(
        beats: Vec<f64>,
        downbeats: Vec<f64>,
        beats_per_measure: usize,
        sample_rate: u32,
        total_duration: f64,
    ) -> Result<Self> {
        if beats.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 beats, got {}",
                beats.len()
            )));
        }
        if beats_per_measure == 0 {
            return Err(Error::InvalidGrid(
                "beats_per_measure must be positive".into(),
            ));
        }
        if !total_duration.is_finite() || total_duration <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "invalid total duration {total_duration}"
            )));
        }
        for (what, times) in [("beats", &beats), ("downbeats", &downbeats)] {
            if let Some(t) = times
                .iter()
                .find(|t| !t.is_finite() || **t < 0.0 || **t > total_duration)
            {
                return Err(Error::InvalidGrid(format!(
                    "{what} time {t} outside [0, {total_duration}]"
                )));
            }
            if !strictly_ascending(times) {
                return Err(Error::InvalidGrid(format!(
                    "{what} are not strictly ascending"
                )));
            }
        }
        let mut downbeat_beats = Vec::with_capacity(downbeats.len());
        for &d in &downbeats {
            let idx = beats.partition_point(|&b| b < d);
            let nearest = [idx.checked_sub(1), Some(idx)]
                .into_iter()
                .flatten()
                .filter(|&i| i < beats.len())
                .min_by(|&a, &b| (beats[a] - d).abs().total_cmp(&(beats[b] - d).abs()))
                .filter(|&i| (beats[i] - d).abs() <= DOWNBEAT_TOLERANCE)
                .ok_or(Error::DownbeatNotOnGrid { time: d })?;
            downbeat_beats.push(nearest);
        }
        Ok(Self {
            beats,
            downbeats,
            beats_per_measure,
            sample_rate,
            total_duration,
            downbeat_beats,
        })
    }

    /// A grid with constant beat period starting at zero and a downbeat
    /// every `beats_per_measure` beats. The recording ends one period after
    /// the last beat.
    pub fn uniform(
        n_beats: usize,
        period: f64,
        beats_per_measure: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let beats: Vec<f64> = (0..n_beats).map(|i| i as f64 * period).collect();
        let downbeats = beats
            .iter()
            .copied()
            .step_by(beats_per_measure.max(1))
            .collect();
        Self::new(
            beats,
            downbeats,
            beats_per_measure,
            sample_rate,
            n_beats as f64 * period,
        )
    }

    /// Number of beats (N).
    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    pub fn beats(&self) -> &[f64] {
        &self.beats
    }

    pub fn downbeats(&self) -> &[f64] {
        &self.downbeats
    }

    /// Beat index of every downbeat, in order.
    pub fn downbeat_beats(&self) -> &[usize] {
        &self.downbeat_beats
    }

    pub fn beats_per_measure(&self) -> usize {
        self.beats_per_measure
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    /// Beat index `i`, or `N` for the end of the recording.
    pub fn time_of_boundary(&self, boundary: usize) -> f64 {
        self.beats
            .get(boundary)
            .copied()
            .unwrap_or(self.total_duration)
    }

    pub fn median_beat_duration(&self) -> f64 {
        let periods: Vec<f64> = self.beats.windows(2).map(|w| w[1] - w[0]).collect();
        stats::median(&periods).expect("grid has at least two beats")
    }

    /// Mean downbeat-to-downbeat interval, or `g` mean beat periods when the
    /// grid has fewer than two downbeats.
    pub fn mean_measure_duration(&self) -> f64 {
        match self.downbeats.as_slice() {
            [first, .., last] => (last - first) / (self.downbeats.len() - 1) as f64,
            _ => {
                let n = self.beats.len();
                let mean_beat = (self.beats[n - 1] - self.beats[0]) / (n - 1) as f64;
                mean_beat * self.beats_per_measure as f64
            }
        }
    }

    /// End time of beat `i` when it is followed by something other than the
    /// recording's end: the next beat, or for the final beat one median period
    /// later (clipped to the recording).
    pub fn beat_end(&self, i: usize) -> f64 {
        match self.beats.get(i + 1) {
            Some(&t) => t,
            None => (self.beats[i] + self.median_beat_duration()).min(self.total_duration),
        }
    }

    /// Playback duration of a beat sequence that starts at beat 0 and ends at
    /// beat N-1: the lead-in before the first beat and the tail after the last
    /// beat are played along with the beats themselves.
    pub fn path_duration(&self, path: &[usize]) -> f64 {
        let Some((&last, body)) = path.split_last() else {
            return 0.0;
        };
        let mut total = if path[0] == 0 { self.beats[0] } else { 0.0 };
        for &b in body {
            total += self.beat_end(b) - self.beats[b];
        }
        let end = if last + 1 == self.beats.len() {
            self.total_duration
        } else {
            self.beat_end(last)
        };
        total + end - self.beats[last]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureAxis {
    Frames,
    Beats,
}

/// Real-valued feature matrix with one row per frame or per beat.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    name: String,
    axis: FeatureAxis,
    values: Array2<f32>,
    frame_times: Option<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn frames(
        name: impl Into<String>,
        values: Array2<f32>,
        frame_times: Vec<f64>,
    ) -> Result<Self> {
        Self::new(name.into(), FeatureAxis::Frames, values, Some(frame_times))
    }

    pub fn beats(name: impl Into<String>, values: Array2<f32>) -> Result<Self> {
        Self::new(name.into(), FeatureAxis::Beats, values, None)
    }

    pub fn new(
        name: String,
        axis: FeatureAxis,
        values: Array2<f32>,
        frame_times: Option<Vec<f64>>,
    ) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidFeature {
            name: name.clone(),
            reason,
        };
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(invalid(format!("empty matrix {:?}", values.dim())));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: name,
                row,
                col,
            });
        }
        match (axis, &frame_times) {
            (FeatureAxis::Frames, Some(times)) => {
                if times.len() != values.nrows() {
                    return Err(invalid(format!(
                        "{} frame times for {} rows",
                        times.len(),
                        values.nrows()
                    )));
                }
                if let Some(row) = times.iter().position(|t| !t.is_finite()) {
                    return Err(Error::NonFinite {
                        what: format!("{name} frame times"),
                        row,
                        col: 0,
                    });
                }
                if !times.windows(2).all(|w| w[0] <= w[1]) {
                    return Err(invalid("frame times are not ascending".into()));
                }
            }
            (FeatureAxis::Frames, None) => {
                return Err(invalid("frame axis without frame times".into()))
            }
            (FeatureAxis::Beats, Some(_)) => {
                return Err(invalid("beat axis with frame times".into()))
            }
            (FeatureAxis::Beats, None) => {}
        }
        Ok(Self {
            name,
            axis,
            values,
            frame_times,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn axis(&self) -> FeatureAxis {
        self.axis
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn frame_times(&self) -> Option<&[f64]> {
        self.frame_times.as_deref()
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn grid_rejects_off_grid_downbeat() {
        let err = BeatGrid::new(vec![0.5, 1.0], vec![0.7], 4, 22050, 2.0).unwrap_err();
        assert!(matches!(err, Error::DownbeatNotOnGrid { .. }));
        assert!(err.to_string().contains("downbeat not on beat grid"));
    }

    #[test]
    fn grid_accepts_downbeat_within_tolerance() {
        let grid = BeatGrid::new(vec![0.5, 1.0, 1.5], vec![1.0005], 2, 22050, 2.0).unwrap();
        assert_eq!(grid.downbeat_beats(), &[1]);
    }

    #[test]
    fn grid_invariants() {
        assert!(BeatGrid::new(vec![0.5], vec![], 4, 22050, 2.0).is_err());
        assert!(BeatGrid::new(vec![0.5, 0.5], vec![], 4, 22050, 2.0).is_err());
        assert!(BeatGrid::new(vec![0.5, 1.0], vec![], 0, 22050, 2.0).is_err());
        assert!(BeatGrid::new(vec![0.5, 3.0], vec![], 4, 22050, 2.0).is_err());
        assert!(BeatGrid::new(vec![0.5, 1.0], vec![1.0, 0.5], 4, 22050, 2.0).is_err());
    }

    #[test]
    fn measure_duration_from_downbeats() {
        let grid = BeatGrid::uniform(16, 0.5, 4, 22050).unwrap();
        assert!((grid.mean_measure_duration() - 2.0).abs() < 1e-12);
        let sparse = BeatGrid::new(vec![0.0, 0.5, 1.0], vec![0.0], 3, 22050, 1.5).unwrap();
        assert!((sparse.mean_measure_duration() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn path_duration_includes_lead_in_and_tail() {
        let grid = BeatGrid::new(vec![0.25, 0.75, 1.25, 1.75], vec![0.25], 4, 8000, 2.5).unwrap();
        let identity = [0, 1, 2, 3];
        assert!((grid.path_duration(&identity) - 2.5).abs() < 1e-12);
        // Skip beat 1 and 2: lead-in 0.25 + beat 0 (0.5) + tail from beat 3 (0.75).
        assert!((grid.path_duration(&[0, 3]) - 1.5).abs() < 1e-12);
        // A mid-path final beat lasts one median period.
        assert!(
            (grid.path_duration(&[0, 3, 1, 2, 3]) - (0.25 + 0.5 + 0.5 + 0.5 + 0.5 + 0.75)).abs()
                < 1e-12
        );
    }

    #[test]
    fn feature_matrix_invariants() {
        let m = array![[1.0f32, 2.0], [3.0, 4.0]];
        assert!(FeatureMatrix::frames("x", m.clone(), vec![0.0, 0.1]).is_ok());
        assert!(FeatureMatrix::frames("x", m.clone(), vec![0.1, 0.0]).is_err());
        assert!(FeatureMatrix::frames("x", m.clone(), vec![0.0]).is_err());
        let bad = array![[1.0f32, f32::NAN]];
        assert!(matches!(
            FeatureMatrix::beats("x", bad).unwrap_err(),
            Error::NonFinite { row: 0, col: 1, .. }
        ));
        assert!(FeatureMatrix::beats("x", Array2::zeros((0, 3))).is_err());
    }
}
