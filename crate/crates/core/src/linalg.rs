//! Small dense helpers on top of `faer` matrices.

use faer::Mat;

/// Column `j` of a column-major matrix as a slice.
pub fn col(a: &Mat<f64>, j: usize) -> &[f64] {
    a.col(j).try_as_col_major().expect("owned matrices are column-major").as_slice()
}

/// `A x`.
pub fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (yi, &aij) in y.iter_mut().zip(col(a, j)) {
                *yi += aij * xj;
            }
        }
    }
    y
}

/// `Aᵀ y`.
pub fn matvec_t(a: &Mat<f64>, y: &[f64]) -> Vec<f64> {
    assert_eq!(a.nrows(), y.len());
    (0..a.ncols()).map(|j| dot(col(a, j), y)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
