//! Graph matching against a shared key graph.
//!
//! The exact problem `argmin_P ‖L₁ − PᵀL₂P‖_F` is relaxed to a linear
//! assignment over absolute eigenvector profiles, solved with the Hungarian
//! method. Permutations follow one convention throughout: `mapping[i] = j`
//! places node `j` of the matched graph at slot `i` of the reference frame,
//! so the aligned Laplacian is `L'[i, i'] = L[mapping[i], mapping[i']]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{check_bijection, normalized_laplacian, Graph};
use crate::spectral::sym_eig;

/// Bijection on `0..n` (padded node indices).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        check_bijection(&mapping, n)?;
        Ok(Permutation { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            mapping: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &j) in self.mapping.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { mapping: inv }
    }

    /// Extends to `n` slots by fixing the new indices.
    pub fn extended(&self, n: usize) -> Permutation {
        let mut mapping = self.mapping.clone();
        mapping.extend(self.mapping.len()..n.max(self.mapping.len()));
        Permutation { mapping }
    }

    /// `PᵀMP` in index form: `out[i, i'] = m[σ(i), σ(i')]`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of size {n} applied to {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let s = &self.mapping;
        Ok(DMatrix::from_fn(n, n, |i, j| m[(s[i], s[j])]))
    }
}

/// Key-frame permutation of one graph and its Laplacian residual
/// `‖L_key − ΠᵀLΠ‖_F` after padding.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub permutation: Permutation,
    pub residual: f64,
}

pub fn pad_laplacian(l: &DMatrix<f64>, target: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::NotSquare(n, l.ncols()));
    }
    if target < n {
        return Err(Error::DimensionMismatch(format!(
            "cannot pad a {n}x{n} matrix down to {target}"
        )));
    }
    let mut out = DMatrix::zeros(target, target);
    out.view_mut((0, 0), (n, n)).copy_from(l);
    Ok(out)
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Permutation maximizing `Σ_i profit[i, σ(i)]`.
///
/// Hungarian method with row potentials, followed by a pass that selects the
/// lexicographically smallest mapping among the optimal ones (perfect
/// matchings on the tight edges of the optimal duals).
pub fn solve_assignment(profit: &DMatrix<f64>) -> Result<Permutation> {
    let n = profit.nrows();
    if profit.ncols() != n {
        return Err(Error::NotSquare(n, profit.ncols()));
    }
    if profit.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "profit matrix has non-finite entries".into(),
        ));
    }
    if n == 0 {
        return Ok(Permutation::identity(0));
    }
    let scale = profit.amax().max(1.0);
    // Minimize cost = -profit.
    let cost = |i: usize, j: usize| -profit[(i, j)];

    // 1-based arrays; index 0 is the virtual row/column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }

    let tol = 1e-10 * scale;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| cost(i, j) - u[i + 1] - v[j + 1] <= tol)
                .collect()
        })
        .collect();
    lexicographic_refine(&tight, &mut row_to_col);
    Ok(Permutation {
        mapping: row_to_col,
    })
}

/// Rewrites a perfect matching on `tight` into the lexicographically
/// smallest one. Rows are fixed in order; for row `i` the smallest column
/// reachable by an alternating cycle through unfixed rows wins.
fn lexicographic_refine(tight: &[Vec<bool>], row_to_col: &mut [usize]) {
    let n = row_to_col.len();
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    for i in 0..n {
        let current = row_to_col[i];
        for j in 0..current {
            if !tight[i][j] || col_to_row[j] < i {
                continue;
            }
            // Row r loses column j; it must reach the freed column `current`
            // through rows > i.
            let r = col_to_row[j];
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut path = Vec::new();
            if find_path(tight, &col_to_row, i, r, current, &mut visited, &mut path) {
                // path holds (row, new_col) pairs along the alternating chain.
                row_to_col[i] = j;
                col_to_row[j] = i;
                for &(row, col) in &path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                break;
            }
        }
    }
}

fn find_path(
    tight: &[Vec<bool>],
    col_to_row: &[usize],
    fixed_upto: usize,
    row: usize,
    target: usize,
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for c in 0..tight.len() {
        if !tight[row][c] || visited[c] {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = col_to_row[c];
        if next <= fixed_upto {
            continue;
        }
        path.push((row, c));
        if find_path(tight, col_to_row, fixed_upto, next, target, visited, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// `|U|` of a Laplacian padded with `target − N` zero rows/columns.
///
/// The padded block is decomposed as a direct sum: its eigenpairs are
/// `(0, e_j)` for the padded indices, placed before the graph's own
/// eigenpairs. This fixes the otherwise arbitrary basis of the enlarged
/// zero eigenspace.
fn padded_abs_eigenvectors(l: &DMatrix<f64>, target: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if target < n {
        return Err(Error::DimensionMismatch(format!(
            "cannot pad {n} nodes down to {target}"
        )));
    }
    let eig = sym_eig(l)?;
    let extra = target - n;
    let mut out = DMatrix::zeros(target, target);
    for j in 0..extra {
        out[(n + j, j)] = 1.0;
    }
    for j in 0..n {
        for i in 0..n {
            out[(i, extra + j)] = eig.eigenvectors[(i, j)].abs();
        }
    }
    Ok(out)
}

/// Grid on which `|U|` rows are compared when ordering nodes.
const CANONICAL_GRID: f64 = 1e-9;

/// Node order of `g` by its (quantized) `|U|` row, index as last resort.
/// Depends on the graph only up to relabelling, except among nodes whose
/// rows coincide.
fn canonical_order(abs_u: &DMatrix<f64>) -> Vec<usize> {
    let keys: Vec<Vec<i64>> = abs_u
        .row_iter()
        .map(|r| {
            r.iter()
                .map(|x| (x / CANONICAL_GRID).round() as i64)
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..abs_u.nrows()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    order
}

/// Squared residual restricted to the rows and columns of slots `i` and `k`
/// under `mapping` (both matrices symmetric).
fn cross_error(r: &DMatrix<f64>, g: &DMatrix<f64>, mapping: &[usize], i: usize, k: usize) -> f64 {
    let f = |a: usize, b: usize| {
        let d = r[(a, b)] - g[(mapping[a], mapping[b])];
        d * d
    };
    let mut total = 0.0;
    for c in 0..mapping.len() {
        total += 2.0 * (f(i, c) + f(k, c));
    }
    total - f(i, i) - f(k, k) - 2.0 * f(i, k)
}

/// The linear relaxation cannot see eigenvector signs, so several optimal
/// assignments may differ in `‖R − ΠᵀGΠ‖_F`. Among swaps of two slots that
/// keep the assignment profit unchanged, apply those that lower the
/// residual until none does.
fn polish_ties(profit: &DMatrix<f64>, r: &DMatrix<f64>, g: &DMatrix<f64>, mapping: &mut [usize]) {
    let n = mapping.len();
    let tol = 1e-10 * profit.amax().max(1.0);
    let gain_tol = 1e-12 * (1.0 + r.norm_squared());
    loop {
        let mut improved = false;
        for i in 0..n {
            for k in (i + 1)..n {
                let (a, b) = (mapping[i], mapping[k]);
                let kept = profit[(i, a)] + profit[(k, b)];
                let swapped = profit[(i, b)] + profit[(k, a)];
                if (kept - swapped).abs() > tol {
                    continue;
                }
                let before = cross_error(r, g, mapping, i, k);
                mapping.swap(i, k);
                if cross_error(r, g, mapping, i, k) < before - gain_tol {
                    improved = true;
                } else {
                    mapping.swap(i, k);
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Matches `g` into the frame of `reference` (usually the key graph).
///
/// Both Laplacians are padded to `max(N_ref, N_g)`; the profit matrix is
/// `|U_ref| |U_g|ᵀ` and the returned permutation maps reference slots to
/// `g`'s (padded) node indices. Ties between optimal assignments are broken
/// on `g`'s `|U|` rows rather than its labels, so a relabelled copy of `g`
/// lands in the same slots.
pub fn spectral_match(reference: &Graph, g: &Graph) -> Result<MatchResult> {
    let n = reference.node_count().max(g.node_count());
    let l_ref = normalized_laplacian(reference);
    let l_g = normalized_laplacian(g);
    let u_ref = padded_abs_eigenvectors(&l_ref, n)?;
    let u_g = padded_abs_eigenvectors(&l_g, n)?;
    let canon = canonical_order(&u_g);
    let profit = &u_ref * u_g.transpose();
    let ranked = DMatrix::from_fn(n, n, |i, r| profit[(i, canon[r])]);
    let by_rank = solve_assignment(&ranked)?;
    let mut mapping: Vec<usize> = by_rank.mapping().iter().map(|&r| canon[r]).collect();
    let (r, g_pad) = (pad_laplacian(&l_ref, n)?, pad_laplacian(&l_g, n)?);
    polish_ties(&profit, &r, &g_pad, &mut mapping);
    let permutation = Permutation { mapping };
    let aligned = permutation.conjugate(&g_pad)?;
    let residual = frobenius(&(r - aligned));
    Ok(MatchResult {
        permutation,
        residual,
    })
}

/// `‖Π₁ᵀL₁Π₁ − Π₂ᵀL₂Π₂‖_F`, padding both sides to the longer permutation
/// (the shorter one is extended with fixed points).
pub fn conformity_error(g1: &Graph, g2: &Graph, p1: &Permutation, p2: &Permutation) -> Result<f64> {
    for (g, p, name) in [(g1, p1, "first"), (g2, p2, "second")] {
        if p.len() < g.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "{name} permutation has {} slots for {} nodes",
                p.len(),
                g.node_count()
            )));
        }
    }
    let n = p1.len().max(p2.len());
    let a = p1
        .extended(n)
        .conjugate(&pad_laplacian(&normalized_laplacian(g1), n)?)?;
    let b = p2
        .extended(n)
        .conjugate(&pad_laplacian(&normalized_laplacian(g2), n)?)?;
    Ok(frobenius(&(a - b)))
}

/// Upper bound `ε̂` on the conformity error of two graphs matched to the
/// same key.
pub fn transitivity_bound(m1: &MatchResult, m2: &MatchResult) -> f64 {
    m1.residual + m2.residual
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All permutations of 0..n in lexicographic order.
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(cur.clone());
            // next_permutation
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                return out;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
    }

    fn objective(profit: &DMatrix<f64>, mapping: &[usize]) -> f64 {
        mapping
            .iter()
            .enumerate()
            .map(|(i, &j)| profit[(i, j)])
            .sum()
    }

    /// Exhaustive maximizer; strict improvement keeps the lexicographically
    /// first optimum.
    fn brute_force(profit: &DMatrix<f64>) -> (Vec<usize>, f64) {
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        for p in permutations(profit.nrows()) {
            let v = objective(profit, &p);
            if v > best.1 {
                best = (p, v);
            }
        }
        best
    }

    #[test]
    fn pad_cases() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let p = pad_laplacian(&l, 3).unwrap();
        assert_eq!(p.row(2).sum() + p.column(2).sum(), 0.0);
        assert_eq!(pad_laplacian(&l, 2).unwrap(), l);
        assert_eq!(
            pad_laplacian(&DMatrix::zeros(1, 1), 2).unwrap(),
            DMatrix::zeros(2, 2)
        );
        assert!(pad_laplacian(&l, 1).is_err());
    }

    #[test]
    fn assignment_small() {
        let id = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(solve_assignment(&id).unwrap().mapping(), &[0, 1]);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(solve_assignment(&swap).unwrap().mapping(), &[1, 0]);
        assert!(solve_assignment(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn assignment_ties_are_lexicographic() {
        // Every permutation is optimal.
        let ones = DMatrix::from_element(4, 4, 1.0);
        assert_eq!(solve_assignment(&ones).unwrap().mapping(), &[0, 1, 2, 3]);
        // Rows 0 and 1 are interchangeable.
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 5.0, 5.0, 0.0, 5.0, 5.0, 9.0, 0.0, 0.0]);
        assert_eq!(solve_assignment(&m).unwrap().mapping(), &[1, 2, 0]);
    }

    #[test]
    fn assignment_matches_brute_force_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let m = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
            let got = solve_assignment(&m).unwrap();
            let (best, value) = brute_force(&m);
            assert_eq!(objective(&m, got.mapping()), value);
            assert_eq!(got.mapping(), best.as_slice());
        }
    }

    #[test]
    fn assignment_integer_ties_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(1..=6);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(0..3) as f64);
            let (best, _) = brute_force(&m);
            assert_eq!(solve_assignment(&m).unwrap().mapping(), best.as_slice());
        }
    }

    fn min_residual_brute_force(g1: &Graph, g2: &Graph) -> f64 {
        let n = g1.node_count().max(g2.node_count());
        let l1 = pad_laplacian(&normalized_laplacian(g1), n).unwrap();
        let l2 = pad_laplacian(&normalized_laplacian(g2), n).unwrap();
        permutations(n)
            .into_iter()
            .map(|p| {
                let a = Permutation::new(p).unwrap().conjugate(&l2).unwrap();
                frobenius(&(&l1 - a))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn match_identical_and_shuffled_paths() {
        let p3 = path(3);
        assert!(spectral_match(&p3, &p3).unwrap().residual < 1e-12);
        for order in permutations(3) {
            let shuffled = p3.relabel(&order).unwrap();
            let m = spectral_match(&p3, &shuffled).unwrap();
            assert!(m.residual < 1e-12);
            assert_eq!(min_residual_brute_force(&p3, &shuffled), 0.0);
            // The middle node must land on the middle slot.
            assert_eq!(m.permutation.apply(1), order[1]);
        }
    }

    #[test]
    fn match_p2_k3_attains_exhaustive_minimum() {
        let (p2, k3) = (path(2), complete(3));
        let m = spectral_match(&k3, &p2).unwrap();
        let best = min_residual_brute_force(&k3, &p2);
        assert!(
            (m.residual - best).abs() < 1e-12,
            "{} vs {best}",
            m.residual
        );
    }

    #[test]
    fn conformity_cases() {
        let g = cycle(5);
        let id = Permutation::identity(5);
        assert_eq!(conformity_error(&g, &g, &id, &id).unwrap(), 0.0);
        let p = Permutation::new(vec![3, 1, 4, 0, 2]).unwrap();
        assert_eq!(conformity_error(&g, &g, &p, &p).unwrap(), 0.0);

        // ‖pad(L_P2) − L_K3‖_F by hand: diagonal (0,0,1) plus off-diagonals.
        let (p2, k3) = (path(2), complete(3));
        let got = conformity_error(
            &p2,
            &k3,
            &Permutation::identity(3),
            &Permutation::identity(3),
        )
        .unwrap();
        let expected = (1.0f64 + 2.0 * 0.25 + 4.0 * 0.25).sqrt();
        assert!((got - expected).abs() < 1e-15);

        assert!(conformity_error(&k3, &k3, &Permutation::identity(2), &id).is_err());
    }

    #[test]
    fn bound_is_sum() {
        let m = |r| MatchResult {
            permutation: Permutation::identity(1),
            residual: r,
        };
        assert_eq!(transitivity_bound(&m(0.0), &m(0.0)), 0.0);
        assert_eq!(transitivity_bound(&m(1.5), &m(2.5)), 4.0);
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Graph::new(n, edges, None).unwrap()
    }

    #[test]
    fn transitivity_bound_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g1 = {
                let n = rng.random_range(1..10);
                random_graph(&mut rng, n, 0.4)
            };
            let g2 = {
                let n = rng.random_range(1..10);
                random_graph(&mut rng, n, 0.4)
            };
            let key = {
                let n = rng.random_range(2..10);
                random_graph(&mut rng, n, 0.5)
            };
            let m1 = spectral_match(&key, &g1).unwrap();
            let m2 = spectral_match(&key, &g2).unwrap();
            let err = conformity_error(&g1, &g2, &m1.permutation, &m2.permutation).unwrap();
            assert!(err <= transitivity_bound(&m1, &m2) + 1e-9);
        }
    }

    fn matched_profit(reference: &Graph, g: &Graph) -> f64 {
        let n = reference.node_count().max(g.node_count());
        let u_ref = padded_abs_eigenvectors(&normalized_laplacian(reference), n).unwrap();
        let u_g = padded_abs_eigenvectors(&normalized_laplacian(g), n).unwrap();
        let profit = &u_ref * u_g.transpose();
        let p = spectral_match(reference, g).unwrap().permutation;
        (0..n).map(|i| profit[(i, p.apply(i))]).sum()
    }

    // Relabelling permutes the rows of |U_g|, so the optimal objective is
    // unchanged; the chosen permutation may differ when optima tie.
    #[test]
    fn relabel_invariance_of_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 40 {
            let n = rng.random_range(3..9);
            let g1 = random_graph(&mut rng, n, 0.5);
            let g2 = {
                let n = rng.random_range(2..9);
                random_graph(&mut rng, n, 0.5)
            };
            let spec = sym_eig(&normalized_laplacian(&g2)).unwrap().eigenvalues;
            if spec.windows(2).any(|w| w[1] - w[0] < 1e-6) {
                continue;
            }
            let mut order: Vec<usize> = (0..g2.node_count()).collect();
            order.shuffle(&mut rng);
            let a = matched_profit(&g1, &g2);
            let b = matched_profit(&g1, &g2.relabel(&order).unwrap());
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn permutation_inverse_round_trips(v in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle()) {
            let p = Permutation::new(v).unwrap();
            let inv = p.inverse();
            for i in 0..p.len() {
                prop_assert_eq!(inv.apply(p.apply(i)), i);
            }
        }
    }
}
