use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::recurrence::RecurrenceMatrix;
use crate::{Error, Result};

/// `I - D^{-1/2} R D^{-1/2}` with `D` the row sums of `R`. A beat with no
/// edges keeps `D_ii = 1`, which leaves its row of the identity intact.
pub fn normalized_laplacian(r: &RecurrenceMatrix) -> Array2<f64> {
    normalized_laplacian_of(r.values())
}

pub(crate) fn normalized_laplacian_of(r: &Array2<f64>) -> Array2<f64> {
    let n = r.nrows();
    let inv_sqrt: Vec<f64> = r
        .rows()
        .into_iter()
        .map(|row| {
            let d = row.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - inv_sqrt[i] * r[[i, j]] * inv_sqrt[j]
    })
}

/// Eigenpairs of a symmetric matrix sorted by ascending eigenvalue. Each
/// eigenvector is flipped so its largest-magnitude entry (first on ties) is
/// positive.
pub fn sorted_eigenpairs(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Eigen(format!("matrix is {}x{}", n, m.ncols())));
    }
    if let Some(((i, j), v)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Eigen(format!("non-finite entry {v} at ({i},{j})")));
    }
    let dense = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::try_new(dense, 1e-14, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    Ok((values, vectors))
}
