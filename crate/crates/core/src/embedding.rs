//! Per-node structural encodings: random-walk return probabilities (RWSE)
//! stacked on absolute Laplacian eigenvector entries (LapPE).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{degree_vector, normalized_laplacian, Graph};
use crate::spectral::sym_eig;

pub const DEFAULT_WALK_STEPS: usize = 16;
pub const DEFAULT_EIGENVECTORS: usize = 8;

/// Eigenvalues at or below this are treated as trivial (one per component).
pub const TRIVIAL_EIGENVALUE: f64 = 1e-8;

/// `(k + k') × N` embedding: rows `0..k` are RWSE, rows `k..k+k'` LapPE.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: DMatrix<f64>,
    k: usize,
    k_prime: usize,
}

impl EmbeddingMatrix {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn dim(&self) -> usize {
        self.k + self.k_prime
    }

    pub fn node_count(&self) -> usize {
        self.data.ncols()
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
    }
    Ok(())
}

/// `k × N` matrix whose entry `(j-1, i)` is `(RW^j)_ii` for `RW = A B^{-1}`.
///
/// Powers are accumulated with sparse-times-dense products; an isolated node
/// contributes a zero column to `RW`.
pub fn rwse(g: &Graph, k: usize) -> Result<DMatrix<f64>> {
    check_positive("k", k)?;
    let n = g.node_count();
    let inv_deg: Vec<f64> = degree_vector(g)
        .into_iter()
        .map(|d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
        .collect();

    let mut out = DMatrix::zeros(k, n);
    // `power` holds RW^j; row i of RW·M is Σ_{u ∈ N(i)} M[u, :] / d_u.
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut next = DMatrix::<f64>::zeros(n, n);
    for step in 0..k {
        next.fill(0.0);
        for i in 0..n {
            for &u in g.neighbors(i) {
                let w = inv_deg[u];
                for c in 0..n {
                    next[(i, c)] += w * power[(u, c)];
                }
            }
        }
        std::mem::swap(&mut power, &mut next);
        for i in 0..n {
            out[(step, i)] = power[(i, i)];
        }
    }
    Ok(out)
}

/// `k' × N` matrix of `|U[i, j]|` over the first `k'` non-trivial Laplacian
/// eigenvectors (ascending eigenvalue); missing eigenvectors leave zero rows.
pub fn lap_pe(g: &Graph, k_prime: usize) -> Result<DMatrix<f64>> {
    check_positive("k_prime", k_prime)?;
    let n = g.node_count();
    let eig = sym_eig(&normalized_laplacian(g))?;
    let mut out = DMatrix::zeros(k_prime, n);
    let nontrivial = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > TRIVIAL_EIGENVALUE)
        .map(|(j, _)| j)
        .take(k_prime);
    for (row, j) in nontrivial.enumerate() {
        for i in 0..n {
            out[(row, i)] = eig.eigenvectors[(i, j)].abs();
        }
    }
    Ok(out)
}

pub fn embed(g: &Graph, k: usize, k_prime: usize) -> Result<EmbeddingMatrix> {
    let rw = rwse(g, k)?;
    let lp = lap_pe(g, k_prime)?;
    let n = g.node_count();
    let mut data = DMatrix::zeros(k + k_prime, n);
    data.rows_mut(0, k).copy_from(&rw);
    data.rows_mut(k, k_prime).copy_from(&lp);
    Ok(EmbeddingMatrix { data, k, k_prime })
}
