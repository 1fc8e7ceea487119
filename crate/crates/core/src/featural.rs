//! Covariance-spectrum exchange: the buyer's principal directions, the
//! seller's variances along them, and the diversity/relevance scores.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSet;
use crate::spectral::sym_eig;

const ORTHONORMAL_TOL: f64 = 1e-6;
const DEGENERATE_SCALE: f64 = 1e-12;

/// Buyer covariance eigenpairs, eigenvalues descending and clamped at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedVariances {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturalScores {
    pub diversity: f64,
    pub relevance: f64,
}

/// Vertically stacks every graph's features and subtracts column means.
pub fn stack_and_center(gs: &GraphSet) -> Result<DMatrix<f64>> {
    let r = gs
        .feature_dim()
        .ok_or_else(|| Error::InvalidGraphSet("graph set carries no node features".into()))?;
    let total = gs.total_node_count();
    let mut x = DMatrix::zeros(total, r);
    let mut offset = 0;
    for g in gs.graphs() {
        let f = g
            .features()
            .ok_or_else(|| Error::InvalidGraphSet("graph without features".into()))?;
        if f.ncols() != r {
            return Err(Error::InvalidGraphSet(format!(
                "feature dimension {} differs from {r}",
                f.ncols()
            )));
        }
        x.rows_mut(offset, f.nrows()).copy_from(f);
        offset += f.nrows();
    }
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(x)
}

fn covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("feature matrix has no rows".into()));
    }
    Ok(x.tr_mul(x) / x.nrows() as f64)
}

/// Eigendecomposition of `(1/N) XᵀX`, reordered to descending eigenvalues.
pub fn buyer_spectrum(x: &DMatrix<f64>) -> Result<FeatureSpectrum> {
    let eig = sym_eig(&covariance(x)?)?;
    let r = eig.dim();
    let eigenvalues = eig.eigenvalues.iter().rev().map(|&l| l.max(0.0)).collect();
    let eigenvectors = DMatrix::from_fn(r, r, |i, j| eig.eigenvectors[(i, r - 1 - j)]);
    Ok(FeatureSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// `λ̂_i = ‖(1/N) XᵀX u_i‖` for each column `u_i` of `eigenvectors`.
pub fn seller_projected_variances(
    x: &DMatrix<f64>,
    eigenvectors: &DMatrix<f64>,
) -> Result<ProjectedVariances> {
    let r = x.ncols();
    if eigenvectors.shape() != (r, r) {
        return Err(Error::DimensionMismatch(format!(
            "basis is {:?}, expected {r}x{r}",
            eigenvectors.shape()
        )));
    }
    let deviation = (eigenvectors.tr_mul(eigenvectors) - DMatrix::identity(r, r)).amax();
    if deviation.is_nan() || deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal(deviation));
    }
    let projected = covariance(x)? * eigenvectors;
    Ok(ProjectedVariances {
        values: projected.column_iter().map(|c| c.norm()).collect(),
    })
}

/// Geometric means of `|λ−λ̂|/max` (diversity) and `min/max` (relevance),
/// paired by index. A coordinate where both values are ≤ 1e-12 counts as
/// `d = 0, r = 1`.
pub fn diversity_relevance(lam: &[f64], lam_hat: &[f64]) -> Result<FeaturalScores> {
    if lam.len() != lam_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues vs {} projected variances",
            lam.len(),
            lam_hat.len()
        )));
    }
    if lam.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if lam
        .iter()
        .chain(lam_hat)
        .any(|v| *v < 0.0 || !v.is_finite())
    {
        return Err(Error::InvalidArgument(
            "spectra must be finite and non-negative".into(),
        ));
    }
    let r = lam.len() as f64;
    let mut log_d = 0.0;
    let mut log_r = 0.0;
    let (mut d_zero, mut r_zero) = (false, false);
    for (&a, &b) in lam.iter().zip(lam_hat) {
        let hi = a.max(b);
        let (d, rel) = if hi <= DEGENERATE_SCALE {
            (0.0, 1.0)
        } else {
            ((a - b).abs() / hi, a.min(b) / hi)
        };
        // Sums of logs avoid underflow of the plain product for large r.
        if d == 0.0 {
            d_zero = true;
        } else {
            log_d += d.ln();
        }
        if rel == 0.0 {
            r_zero = true;
        } else {
            log_r += rel.ln();
        }
    }
    let diversity = if d_zero { 0.0 } else { (log_d / r).exp() };
    let relevance = if r_zero { 0.0 } else { (log_r / r).exp() };
    Ok(FeaturalScores {
        diversity: diversity.min(1.0),
        relevance: relevance.min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::path;
    use proptest::prelude::*;

    fn set_of(features: &[&[f64]], r: usize) -> GraphSet {
        let graphs = features
            .iter()
            .map(|rows| {
                let n = rows.len() / r;
                let x = DMatrix::from_row_slice(n, r, rows);
                path(n).with_features(Some(x)).unwrap()
            })
            .collect();
        GraphSet::new(graphs).unwrap()
    }

    #[test]
    fn centering() {
        let x = stack_and_center(&set_of(&[&[1.0, 3.0]], 1)).unwrap();
        assert_eq!(x.as_slice(), &[-1.0, 1.0]);

        let x = stack_and_center(&set_of(&[&[0.0, 0.0], &[2.0, 2.0]], 2)).unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, 1.0]));

        let x = stack_and_center(&set_of(&[&[-2.0, 0.5, 2.0, -0.5]], 2)).unwrap();
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 2.0, -0.5]));

        let bare = GraphSet::new(vec![path(2)]).unwrap();
        assert!(stack_and_center(&bare).is_err());
    }

    #[test]
    fn buyer_spectrum_cases() {
        let s = buyer_spectrum(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0])).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 0.0]);
        assert_eq!(s.eigenvectors.column(0).as_slice(), &[1.0, 0.0]);

        let s = buyer_spectrum(&DMatrix::zeros(4, 3)).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0; 3]);

        // Rows (±√3, 0) and (0, ±1): covariance diag(1.5, 0.5).
        let t = 3f64.sqrt();
        let x = DMatrix::from_row_slice(4, 2, &[t, 0.0, -t, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let s = buyer_spectrum(&x).unwrap();
        assert!((s.eigenvalues[0] - 1.5).abs() < 1e-12 && (s.eigenvalues[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projected_variance_cases() {
        // Covariance diag(2, 3).
        let (a, b) = (2f64.sqrt(), 3f64.sqrt());
        let x = DMatrix::from_row_slice(4, 2, &[a, 0.0, -a, 0.0, 0.0, b, 0.0, -b]) * 2f64.sqrt();
        let v = seller_projected_variances(&x, &DMatrix::identity(2, 2)).unwrap();
        assert!((v.values[0] - 2.0).abs() < 1e-12 && (v.values[1] - 3.0).abs() < 1e-12);

        let v =
            seller_projected_variances(&DMatrix::zeros(5, 2), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(v.values, vec![0.0, 0.0]);

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            seller_projected_variances(&DMatrix::zeros(5, 2), &bad),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn projected_variance_on_own_eigenvectors_equals_eigenvalues() {
        let x = DMatrix::from_fn(30, 3, |i, j| {
            ((i * 31 + j * 17) % 11) as f64 - 5.0 + j as f64
        });
        let xc = {
            let mut x = x.clone();
            for mut c in x.column_iter_mut() {
                let m = c.mean();
                c.add_scalar_mut(-m);
            }
            x
        };
        let spec = buyer_spectrum(&xc).unwrap();
        let v = seller_projected_variances(&xc, &spec.eigenvectors).unwrap();
        for (a, b) in spec.eigenvalues.iter().zip(&v.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dr_examples() {
        let s = diversity_relevance(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((s.diversity, s.relevance), (0.0, 1.0));
        let s = diversity_relevance(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((s.diversity, s.relevance), (1.0, 0.0));
        let s = diversity_relevance(&[4.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(s.diversity, 0.0);
        assert!((s.relevance - 0.5).abs() < 1e-15);
        let s = diversity_relevance(&[0.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(s.diversity, 0.0);
        assert!((s.relevance - 0.5f64.sqrt()).abs() < 1e-15);

        assert!(diversity_relevance(&[1.0], &[1.0, 2.0]).is_err());
        assert!(diversity_relevance(&[-1.0], &[1.0]).is_err());
        assert!(diversity_relevance(&[], &[]).is_err());
    }

    fn spectra() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..10).prop_flat_map(|r| {
            (
                proptest::collection::vec(0.0f64..10.0, r),
                proptest::collection::vec(0.0f64..10.0, r),
            )
        })
    }

    proptest! {
        #[test]
        fn dr_bounded_symmetric_scale_invariant((a, b) in spectra(), c in 1e-3f64..1e3) {
            let s = diversity_relevance(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.diversity));
            prop_assert!((0.0..=1.0).contains(&s.relevance));
            prop_assert!(s.diversity + s.relevance <= 1.0 + 1e-9);
            prop_assert_eq!(s, diversity_relevance(&b, &a).unwrap());
            let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
            let t = diversity_relevance(&sa, &sb).unwrap();
            // Values pushed under the degeneracy floor by scaling are excluded.
            prop_assume!(a.iter().chain(&b).all(|v| *v * c.min(1.0) > 1e-9));
            prop_assert!((t.diversity - s.diversity).abs() < 1e-9);
            prop_assert!((t.relevance - s.relevance).abs() < 1e-9);
        }

        #[test]
        fn spectrum_trace_and_sign(v in proptest::collection::vec(-3.0f64..3.0, 4 * 12)) {
            let x = DMatrix::from_vec(12, 4, v);
            let s = buyer_spectrum(&x).unwrap();
            prop_assert!(s.eigenvalues.iter().all(|&l| l >= 0.0));
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            let trace = (x.tr_mul(&x) / 12.0).trace();
            prop_assert!((s.eigenvalues.iter().sum::<f64>() - trace).abs() < 1e-8);
        }
    }
}
