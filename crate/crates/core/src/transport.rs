//! One-dimensional optimal transport and the graph Wasserstein distance.
//!
//! Every W1 here is between empirical measures on the real line, so the
//! optimal coupling is the monotone one and the distance is the L1 gap
//! between quantile functions. No coupling is ever materialized.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::matching::Permutation;

/// `|G| × |V|` mean-pooled embeddings in the key frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSummary {
    data: DMatrix<f64>,
}

impl PooledSummary {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "pooled summary has no graphs".into(),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "pooled summary has non-finite entries".into(),
            ));
        }
        Ok(PooledSummary { data })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn graph_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn node_cap(&self) -> usize {
        self.data.ncols()
    }

    /// Column `slot` as a sample over graphs; zero beyond `node_cap`.
    pub fn slot_samples(&self, slot: usize) -> Vec<f64> {
        if slot < self.node_cap() {
            self.data.column(slot).iter().copied().collect()
        } else {
            vec![0.0; self.graph_count()]
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidArgument("ragged pooled summary rows".into()));
        }
        PooledSummary::new(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// Structural disparity `S = |α − 1/(1 + gwd)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityScore {
    pub gwd: f64,
    pub s: f64,
    pub alpha: f64,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Exact W1 between the empirical measures of `a` and `b`.
///
/// Integrates `|F_a⁻¹(q) − F_b⁻¹(q)|` over the merged quantile breakpoints
/// `i/|a|` and `j/|b|`; breakpoints are compared in integer units of
/// `1/(|a||b|)` so no rounding enters the segmentation.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("W1 needs non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("W1 samples must be finite".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as u128, b.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let end_a = (i as u128 + 1) * m;
        let end_b = (j as u128 + 1) * n;
        let end = end_a.min(end_b);
        total += (a[i] - b[j]).abs() * (end - pos) as f64;
        pos = end;
        if end_a == end {
            i += 1;
        }
        if end_b == end {
            j += 1;
        }
    }
    Ok(total / (n * m) as f64)
}

/// Transposes an embedding into node rows, pads to `p.len()`, permutes rows
/// into the key frame (`row i ← node p(i)`), and pads again to `node_cap`.
pub fn align_embedding(
    e: &EmbeddingMatrix,
    p: &Permutation,
    node_cap: usize,
) -> Result<DMatrix<f64>> {
    let n = e.node_count();
    if p.len() < n {
        return Err(Error::DimensionMismatch(format!(
            "permutation of size {} for {n} nodes",
            p.len()
        )));
    }
    if node_cap < p.len() {
        return Err(Error::DimensionMismatch(format!(
            "node cap {node_cap} below permutation size {}",
            p.len()
        )));
    }
    let d = e.dim();
    let data = e.data();
    let mut out = DMatrix::zeros(node_cap, d);
    for slot in 0..p.len() {
        let node = p.apply(slot);
        if node < n {
            for c in 0..d {
                out[(slot, c)] = data[(c, node)];
            }
        }
    }
    Ok(out)
}

/// Averages a stack of aligned `node_cap × d` matrices over the embedding
/// axis, giving one row per graph.
pub fn mean_pool(stack: &[DMatrix<f64>]) -> Result<PooledSummary> {
    let first = stack
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean-pool of an empty stack".into()))?;
    let (cap, d) = first.shape();
    if d == 0 {
        return Err(Error::InvalidArgument("embedding dimension is zero".into()));
    }
    let mut out = DMatrix::zeros(stack.len(), cap);
    for (g, m) in stack.iter().enumerate() {
        if m.shape() != (cap, d) {
            return Err(Error::DimensionMismatch(format!(
                "stack entry {g} has shape {:?}, expected {:?}",
                m.shape(),
                (cap, d)
            )));
        }
        for slot in 0..cap {
            out[(g, slot)] = m.row(slot).sum() / d as f64;
        }
    }
    PooledSummary::new(out)
}

/// Sum over node slots of W1 between the slot's values in `z1` and `z2`
/// (aligned `slots × d` matrices); the shorter one is zero-padded.
pub fn gwd_pair(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64> {
    if z1.ncols() != z2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "embedding widths differ: {} vs {}",
            z1.ncols(),
            z2.ncols()
        )));
    }
    let slots = z1.nrows().max(z2.nrows());
    let d = z1.ncols();
    let row = |z: &DMatrix<f64>, i: usize| -> Vec<f64> {
        if i < z.nrows() {
            z.row(i).iter().copied().collect()
        } else {
            vec![0.0; d]
        }
    };
    let mut total = 0.0;
    for i in 0..slots {
        total += w1_1d(&row(z1, i), &row(z2, i))?;
    }
    Ok(total)
}

/// Set-level GWD between two pooled summaries: per-slot W1 between the
/// buyer's `|G^b|` values and the seller's `|G^s|` values, summed over
/// `max(node caps)` slots in ascending order.
pub fn gwd_sets(fb: &PooledSummary, fs: &PooledSummary) -> Result<f64> {
    let slots = fb.node_cap().max(fs.node_cap());
    let per_slot: Vec<f64> = (0..slots)
        .into_par_iter()
        .map(|i| w1_1d(&fb.slot_samples(i), &fs.slot_samples(i)))
        .collect::<Result<_>>()?;
    Ok(per_slot.iter().sum())
}

pub fn structural_disparity(gwd: f64, alpha: f64) -> Result<DisparityScore> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if gwd < 0.0 || !gwd.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "GWD must be finite and non-negative, got {gwd}"
        )));
    }
    Ok(DisparityScore {
        gwd,
        s: (alpha - 1.0 / (1.0 + gwd)).abs(),
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed;
    use crate::graph::fixtures::path;
    use proptest::prelude::*;

    #[test]
    fn w1_examples() {
        assert_eq!(w1_1d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(w1_1d(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(w1_1d(&[0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(w1_1d(&[0.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert!(w1_1d(&[], &[1.0]).is_err());
        assert!(w1_1d(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn align_cases() {
        let e = embed(&path(2), 2, 1).unwrap();
        let id = align_embedding(&e, &Permutation::identity(2), 2).unwrap();
        assert_eq!(id, e.data().transpose());

        let swapped = align_embedding(&e, &Permutation::new(vec![1, 0]).unwrap(), 2).unwrap();
        assert_eq!(swapped.row(0), id.row(1));
        assert_eq!(swapped.row(1), id.row(0));

        let padded = align_embedding(&e, &Permutation::identity(3), 4).unwrap();
        assert_eq!(padded.shape(), (4, 3));
        assert_eq!(padded.rows(2, 2).amax(), 0.0);

        assert!(align_embedding(&e, &Permutation::identity(3), 2).is_err());
        assert!(align_embedding(&e, &Permutation::identity(1), 2).is_err());
    }

    #[test]
    fn mean_pool_cases() {
        let ones = vec![DMatrix::from_element(3, 4, 1.0); 2];
        assert_eq!(
            mean_pool(&ones).unwrap().data(),
            &DMatrix::from_element(2, 3, 1.0)
        );

        let alt = DMatrix::from_fn(2, 2, |_, c| if c == 0 { 1.0 } else { 3.0 });
        assert_eq!(
            mean_pool(&[alt]).unwrap().data(),
            &DMatrix::from_element(1, 2, 2.0)
        );

        let e = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0 / 2f64.sqrt()]);
        let v = mean_pool(&[e]).unwrap().data()[(0, 0)];
        assert!((v - 0.56904).abs() < 1e-5);

        assert!(mean_pool(&[]).is_err());
    }

    #[test]
    fn gwd_pair_cases() {
        let z = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(gwd_pair(&z, &z).unwrap(), 0.0);
        let a = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(gwd_pair(&a, &b).unwrap(), 1.0);
        // Slot distances 0.5 and 0.25.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.25]);
        assert_eq!(gwd_pair(&a, &b).unwrap(), 0.75);
    }

    #[test]
    fn gwd_sets_cases() {
        let s = |rows: &[&[f64]]| {
            PooledSummary::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
        };
        let x = s(&[&[0.1, 0.5], &[0.3, 0.0]]);
        assert_eq!(gwd_sets(&x, &x).unwrap(), 0.0);
        assert_eq!(gwd_sets(&s(&[&[0.0]]), &s(&[&[3.0]])).unwrap(), 3.0);
        assert_eq!(gwd_sets(&s(&[&[0.0]]), &s(&[&[1.0, 1.0]])).unwrap(), 2.0);
    }

    #[test]
    fn disparity_cases() {
        assert_eq!(structural_disparity(0.0, 1.0).unwrap().s, 0.0);
        assert_eq!(structural_disparity(0.0, 0.0).unwrap().s, 1.0);
        assert_eq!(structural_disparity(1.0, 0.5).unwrap().s, 0.0);
        assert_eq!(structural_disparity(3.0, 0.0).unwrap().s, 0.25);
        assert!(structural_disparity(1.0, 1.5).is_err());
        assert!(structural_disparity(-1.0, 0.5).is_err());
        assert!(structural_disparity(f64::NAN, 0.5).is_err());
    }

    fn samples() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 1..12)
    }

    fn summary() -> impl Strategy<Value = PooledSummary> {
        (1usize..5, 1usize..6).prop_flat_map(|(g, cap)| {
            proptest::collection::vec(0.0f64..1.0, g * cap)
                .prop_map(move |v| PooledSummary::new(DMatrix::from_vec(g, cap, v)).unwrap())
        })
    }

    proptest! {
        #[test]
        fn w1_is_a_metric(a in samples(), b in samples(), c in samples()) {
            let ab = w1_1d(&a, &b).unwrap();
            prop_assert_eq!(ab, w1_1d(&b, &a).unwrap());
            prop_assert!(ab <= w1_1d(&a, &c).unwrap() + w1_1d(&c, &b).unwrap() + 1e-9);
            let mut shuffled = a.clone();
            shuffled.reverse();
            prop_assert_eq!(w1_1d(&a, &shuffled).unwrap(), 0.0);
        }

        #[test]
        fn w1_equal_length_is_mean_sorted_gap(
            (a, b) in (1usize..12).prop_flat_map(|n| (
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(-5.0f64..5.0, n),
            ))
        ) {
            let (sa, sb) = (sorted(&a), sorted(&b));
            let direct = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
            prop_assert!((w1_1d(&a, &b).unwrap() - direct).abs() <= 1e-12);
        }

        #[test]
        fn gwd_sets_symmetric_zero_diagonal(x in summary(), y in summary()) {
            prop_assert_eq!(gwd_sets(&x, &x).unwrap(), 0.0);
            prop_assert_eq!(gwd_sets(&x, &y).unwrap(), gwd_sets(&y, &x).unwrap());
        }

        #[test]
        fn disparity_bounds_and_monotonicity(g1 in 0.0f64..50.0, g2 in 0.0f64..50.0, alpha in 0.0f64..=1.0) {
            let s = structural_disparity(g1, alpha).unwrap().s;
            prop_assert!((0.0..=alpha.max(1.0 - alpha) + 1e-15).contains(&s));
            let (lo, hi) = (g1.min(g2), g1.max(g2));
            let at = |g, a| structural_disparity(g, a).unwrap().s;
            prop_assert!(at(lo, 1.0) <= at(hi, 1.0));
            prop_assert!(at(lo, 0.0) >= at(hi, 0.0));
        }
    }
}
