//! Deterministic symmetric eigendecomposition shared by the Laplacian and
//! covariance code paths.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a real symmetric matrix.
///
/// Eigenvalues ascend; column `j` of `eigenvectors` belongs to eigenvalue
/// `j`. Each column is oriented so its entry of largest magnitude is
/// non-negative (first such entry when magnitudes tie).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let scaled = u * DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &scaled * u.transpose()
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn sym_eig(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }

    // Solve on the exactly symmetrized matrix so both triangles agree bitwise.
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let raw = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal eigenvalues keep the solver's (deterministic) order.
    order.sort_by(|&a, &b| raw.eigenvalues[a].total_cmp(&raw.eigenvalues[b]));

    let eigenvalues = order.iter().map(|&k| raw.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = raw.eigenvectors.column(src).into_owned();
        orient(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Flips `v` so that its largest-magnitude entry is non-negative.
pub(crate) fn orient(v: &mut DVector<f64>) {
    let max_mag = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max_mag == 0.0 {
        return;
    }
    let tie = max_mag * (1.0 - 1e-12);
    if let Some(pivot) = v.iter().find(|x| x.abs() >= tie) {
        if *pivot < 0.0 {
            v.neg_mut();
        }
    }
}
