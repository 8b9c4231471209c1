use ndarray::Array2;

use super::{BeatGrid, FeatureAxis, FeatureMatrix};
use crate::{Error, Result};

/// Averages frame rows over each beat interval `[b_i, b_{i+1})`; the last
/// interval runs to the end of the recording inclusive. A beat interval that
/// holds no frame copies the frame closest to the interval's midpoint.
///
/// Matrices already on the beat axis pass through when their row count
/// matches the grid.
pub fn beat_synchronize(m: &FeatureMatrix, grid: &BeatGrid) -> Result<FeatureMatrix> {
    let n = grid.len();
    let times = match (m.axis(), m.frame_times()) {
        (FeatureAxis::Frames, Some(t)) => t,
        _ if m.rows() == n => return Ok(m.clone()),
        _ => {
            return Err(Error::DimensionMismatch(format!(
                "`{}` has {} beat rows, grid has {n} beats",
                m.name(),
                m.rows()
            )))
        }
    };
    let beats = grid.beats();
    let cols = m.cols();
    let mut out = Array2::<f32>::zeros((n, cols));
    let mut acc = vec![0.0f64; cols];
    for i in 0..n {
        let start = beats[i];
        let (lo, hi) = if i + 1 < n {
            let end = beats[i + 1];
            (
                times.partition_point(|&t| t < start),
                times.partition_point(|&t| t < end),
            )
        } else {
            let end = grid.total_duration();
            (
                times.partition_point(|&t| t < start),
                times.partition_point(|&t| t <= end),
            )
        };
        if lo < hi {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for row in m.values().rows().into_iter().skip(lo).take(hi - lo) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v as f64;
                }
            }
            let count = (hi - lo) as f64;
            for (o, a) in out.row_mut(i).iter_mut().zip(&acc) {
                *o = (a / count) as f32;
            }
        } else {
            let mid = 0.5 * (start + grid.time_of_boundary(i + 1));
            let nearest = nearest_frame(times, mid);
            out.row_mut(i).assign(&m.values().row(nearest));
        }
    }
    FeatureMatrix::beats(m.name(), out)
}

fn nearest_frame(times: &[f64], t: f64) -> usize {
    let idx = times.partition_point(|&x| x < t);
    match (idx.checked_sub(1), times.get(idx)) {
        (Some(prev), Some(&next)) if (next - t) < (t - times[prev]) => idx,
        (Some(prev), _) => prev,
        (None, _) => idx,
    }
}
