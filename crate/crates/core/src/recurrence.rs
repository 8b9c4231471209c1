//! Beat-level recurrence graphs.
//!
//! Two repetition graphs connect beats that are mutual k-nearest neighbours
//! in feature space, weighted by `exp(-d / mu)` where `mu` is the median
//! distance from a beat to its k-th neighbour. A sequence matrix links each
//! beat to its immediate neighbours with weight `exp(-d^2 / sigma^2)`, `sigma`
//! being the median successive-beat distance. The combined graph is their
//! weighted sum.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::exec::{map_indexed, Execution};
use crate::features::{FeatureAxis, FeatureMatrix};
use crate::{stats, Error, Result};

/// Weights of the two repetition graphs and the sequence matrix.
pub const DEFAULT_WEIGHTS: [f64; 3] = [0.25, 0.25, 0.5];

const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrenceKind {
    Repetition,
    Sequence,
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceMatrix {
    values: Array2<f64>,
    kind: RecurrenceKind,
    bandwidth: f64,
    bandwidth_fallback: bool,
}

impl RecurrenceMatrix {
    /// Wraps a matrix after checking it is square, symmetric, within [0, 1],
    /// and structurally valid for its kind.
    pub fn new(values: Array2<f64>, kind: RecurrenceKind, bandwidth: f64) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(format!(
                "recurrence matrix is {rows}x{cols}"
            )));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "entry ({i},{j}) = {v} outside [0, 1]"
                )));
            }
            if (v - values[[j, i]]).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "entry ({i},{j}) breaks symmetry"
                )));
            }
            let structural_zero = match kind {
                RecurrenceKind::Repetition => i == j,
                RecurrenceKind::Sequence => i.abs_diff(j) != 1,
                RecurrenceKind::Combined => false,
            };
            if structural_zero && v != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{kind:?} matrix has nonzero entry at ({i},{j})"
                )));
            }
        }
        Ok(Self {
            values,
            kind,
            bandwidth,
            bandwidth_fallback: false,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> RecurrenceKind {
        self.kind
    }

    /// `mu` for repetition graphs, `sigma` for the sequence matrix, 1 for
    /// combined matrices.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// True when the measured bandwidth was zero and 1 was used instead.
    pub fn bandwidth_fallback(&self) -> bool {
        self.bandwidth_fallback
    }

    /// Number of beats.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Debug export on the beat axis, suitable for the `FEA1` container.
    pub fn to_feature_matrix(&self, name: &str) -> Result<FeatureMatrix> {
        FeatureMatrix::beats(name, self.values.mapv(|v| v as f32))
    }
}

fn beat_rows(feat: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    if feat.axis() != FeatureAxis::Beats {
        return Err(Error::InvalidFeature {
            name: feat.name().to_string(),
            reason: "recurrence needs beat-synchronous features".into(),
        });
    }
    if feat.rows() < 2 {
        return Err(Error::InvalidFeature {
            name: feat.name().to_string(),
            reason: format!("need at least 2 beats, got {}", feat.rows()),
        });
    }
    Ok(feat
        .values()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn bandwidth_or_unit(measured: f64, what: &str, name: &str) -> (f64, bool) {
    if measured > 0.0 && measured.is_finite() {
        (measured, false)
    } else {
        warn!("{what} of `{name}` is {measured}; using 1 instead");
        (1.0, true)
    }
}

/// Default neighbour count `ceil(2 sqrt(N))`, capped at `N - 1`.
pub fn default_k_nn(n_beats: usize) -> usize {
    let k = (2.0 * (n_beats as f64).sqrt()).ceil() as usize;
    k.clamp(1, n_beats.saturating_sub(1).max(1))
}

pub fn build_repetition_recurrence(feat: &FeatureMatrix, k_nn: usize) -> Result<RecurrenceMatrix> {
    build_repetition_recurrence_with(feat, k_nn, Execution::default())
}

pub fn build_repetition_recurrence_with(
    feat: &FeatureMatrix,
    k_nn: usize,
    exec: Execution,
) -> Result<RecurrenceMatrix> {
    let rows = beat_rows(feat)?;
    let n = rows.len();
    if k_nn == 0 || k_nn >= n {
        return Err(Error::InvalidParameter(format!(
            "k_nn = {k_nn} must lie in [1, {n})"
        )));
    }
    let dist: Vec<Vec<f64>> = map_indexed(exec, n, |i| {
        rows.iter().map(|r| euclidean(&rows[i], r)).collect()
    });

    // Neighbour lists ordered by (distance, index).
    let neighbours: Vec<Vec<usize>> = map_indexed(exec, n, |i| {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
        order.truncate(k_nn);
        order
    });
    let kth: Vec<f64> = neighbours
        .iter()
        .enumerate()
        .map(|(i, nb)| dist[i][nb[k_nn - 1]])
        .collect();
    let (mu, fallback) = bandwidth_or_unit(stats::median(&kth).unwrap_or(0.0), "mu", feat.name());

    let mut is_nb = Array2::from_elem((n, n), false);
    for (i, nb) in neighbours.iter().enumerate() {
        for &j in nb {
            is_nb[[i, j]] = true;
        }
    }
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if is_nb[[i, j]] && is_nb[[j, i]] {
                values[[i, j]] = (-dist[i][j] / mu).exp();
            }
        }
    }
    Ok(RecurrenceMatrix {
        values,
        kind: RecurrenceKind::Repetition,
        bandwidth: mu,
        bandwidth_fallback: fallback,
    })
}

pub fn build_sequence_matrix(feat: &FeatureMatrix) -> Result<RecurrenceMatrix> {
    let rows = beat_rows(feat)?;
    let n = rows.len();
    let steps: Vec<f64> = rows.windows(2).map(|w| euclidean(&w[0], &w[1])).collect();
    let (sigma, fallback) =
        bandwidth_or_unit(stats::median(&steps).unwrap_or(0.0), "sigma", feat.name());
    let mut values = Array2::<f64>::zeros((n, n));
    for (i, d) in steps.iter().enumerate() {
        let w = (-(d * d) / (sigma * sigma)).exp();
        values[[i, i + 1]] = w;
        values[[i + 1, i]] = w;
    }
    Ok(RecurrenceMatrix {
        values,
        kind: RecurrenceKind::Sequence,
        bandwidth: sigma,
        bandwidth_fallback: fallback,
    })
}

pub fn combine(
    rep_x: &RecurrenceMatrix,
    rep_y: &RecurrenceMatrix,
    seq_z: &RecurrenceMatrix,
) -> Result<RecurrenceMatrix> {
    combine_weighted(rep_x, rep_y, seq_z, DEFAULT_WEIGHTS)
}

pub fn combine_weighted(
    rep_x: &RecurrenceMatrix,
    rep_y: &RecurrenceMatrix,
    seq_z: &RecurrenceMatrix,
    weights: [f64; 3],
) -> Result<RecurrenceMatrix> {
    let n = rep_x.len();
    if rep_y.len() != n || seq_z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cannot combine {}x{n}, {}x{}, {}x{}",
            n,
            rep_y.len(),
            rep_y.len(),
            seq_z.len(),
            seq_z.len()
        )));
    }
    let kinds = (rep_x.kind, rep_y.kind, seq_z.kind);
    if kinds
        != (
            RecurrenceKind::Repetition,
            RecurrenceKind::Repetition,
            RecurrenceKind::Sequence,
        )
    {
        return Err(Error::InvalidParameter(format!(
            "cannot combine kinds {kinds:?}"
        )));
    }
    if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "weights {weights:?} must be nonnegative and sum to 1"
        )));
    }
    let [wx, wy, wz] = weights;
    let mut values = Array2::<f64>::zeros((n, n));
    ndarray::Zip::from(&mut values)
        .and(&rep_x.values)
        .and(&rep_y.values)
        .and(&seq_z.values)
        .for_each(|r, &x, &y, &z| *r = wx * x + wy * y + wz * z);
    Ok(RecurrenceMatrix {
        values,
        kind: RecurrenceKind::Combined,
        bandwidth: 1.0,
        bandwidth_fallback: false,
    })
}
