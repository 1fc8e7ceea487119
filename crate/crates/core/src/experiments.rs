//! Desk-scale studies built on the protocol pieces: pairwise dataset
//! distances and a comparison of proxy-based against direct matching.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{generate_proxy, Graph, GraphSet};
use crate::protocol::{party_structural_summary, SessionConfig};
use crate::transport::{gwd_sets, structural_disparity, PooledSummary};
use crate::valuation::{common_proxy_config, fractional_ranks, Direction};

/// Spearman correlation: Pearson correlation of fractional ranks. Two
/// constant vectors agree perfectly (1); a constant against a varying vector
/// gives 0.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(
            "spearman needs two non-empty vectors of equal length".into(),
        ));
    }
    let ra = fractional_ranks(a, Direction::Low)?;
    let rb = fractional_ranks(b, Direction::Low)?;
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    Ok(match (va == 0.0, vb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (cov / (va * vb).sqrt()).clamp(-1.0, 1.0),
    })
}

fn summarize_all(
    sets: &[&GraphSet],
    key: &Graph,
    config: &SessionConfig,
) -> Result<Vec<PooledSummary>> {
    sets.par_iter()
        .map(|gs| party_structural_summary(gs, key, config.k, config.k_prime).map(|l| l.pooled))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseMatrix {
    pub gwd: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
}

/// Set-level GWD (and `S`) between every pair of datasets, all matched
/// against one common proxy. Symmetric with a zero diagonal.
pub fn pairwise_matrix(sets: &[GraphSet], config: &SessionConfig) -> Result<PairwiseMatrix> {
    config.validate()?;
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no datasets given".into()));
    }
    let refs: Vec<&GraphSet> = sets.iter().collect();
    let config = common_proxy_config(&refs, config);
    let proxy = generate_proxy(
        config.proxy_nodes.expect("pinned above"),
        config.proxy_edge_probability,
        config.proxy_seed,
    )?;
    let summaries = summarize_all(&refs, &proxy, &config)?;
    let m = sets.len();
    let mut gwd = vec![vec![0.0; m]; m];
    let mut s = vec![vec![0.0; m]; m];
    for i in 0..m {
        s[i][i] = structural_disparity(0.0, config.alpha)?.s;
        for j in (i + 1)..m {
            let score =
                structural_disparity(gwd_sets(&summaries[i], &summaries[j])?, config.alpha)?;
            gwd[i][j] = score.gwd;
            gwd[j][i] = score.gwd;
            s[i][j] = score.s;
            s[j][i] = score.s;
        }
    }
    Ok(PairwiseMatrix { gwd, s })
}

/// Outcome of ranking candidates against a baseline twice: once through
/// the random proxy and once matching directly onto the baseline's largest
/// graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankComparison {
    pub proxy_gwd: Vec<f64>,
    pub direct_gwd: Vec<f64>,
    pub proxy_ranks: Vec<f64>,
    pub direct_ranks: Vec<f64>,
    pub spearman: f64,
}

/// GWDs closer than this are the same value for ranking purposes.
const RANK_RESOLUTION: f64 = 1e-9;

fn gwd_ranks(gwd: &[f64]) -> Result<Vec<f64>> {
    let rounded: Vec<f64> = gwd.iter().map(|g| (g / RANK_RESOLUTION).round()).collect();
    fractional_ranks(&rounded, Direction::Low)
}

fn distances_via(
    key: &Graph,
    baseline: &GraphSet,
    candidates: &[GraphSet],
    config: &SessionConfig,
) -> Result<Vec<f64>> {
    let mut sets: Vec<&GraphSet> = vec![baseline];
    sets.extend(candidates);
    let summaries = summarize_all(&sets, key, config)?;
    summaries[1..]
        .iter()
        .map(|c| gwd_sets(&summaries[0], c))
        .collect()
}

pub fn proxy_vs_direct(
    baseline: &GraphSet,
    candidates: &[GraphSet],
    config: &SessionConfig,
) -> Result<RankComparison> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to rank".into()));
    }
    let mut refs: Vec<&GraphSet> = vec![baseline];
    refs.extend(candidates);
    let config = common_proxy_config(&refs, config);
    let proxy = generate_proxy(
        config.proxy_nodes.expect("pinned above"),
        config.proxy_edge_probability,
        config.proxy_seed,
    )?;
    let direct_key = baseline
        .graphs()
        .iter()
        .rev()
        .max_by_key(|g| g.node_count())
        .expect("graph sets are non-empty");

    let proxy_gwd = distances_via(&proxy, baseline, candidates, &config)?;
    let direct_gwd = distances_via(direct_key, baseline, candidates, &config)?;
    let proxy_ranks = gwd_ranks(&proxy_gwd)?;
    let direct_ranks = gwd_ranks(&direct_gwd)?;
    let spearman = spearman(&proxy_ranks, &direct_ranks)?;
    Ok(RankComparison {
        proxy_gwd,
        direct_gwd,
        proxy_ranks,
        direct_ranks,
        spearman,
    })
}

/// How a single graph is cut into a baseline plus candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Disjoint random node subsets, each induced and relabelled.
    Random,
    /// Node-shuffled copies of the whole graph.
    Copies,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitMode::Random),
            "copies" => Ok(SplitMode::Copies),
            other => Err(Error::InvalidArgument(format!(
                "split mode must be random or copies, got {other:?}"
            ))),
        }
    }
}

pub fn shuffle_nodes(g: &Graph, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.shuffle(rng);
    g.relabel(&order)
}

/// Cuts `g` into `parts` single-graph sets. The first is meant as the
/// baseline, the rest as candidates.
pub fn split_graph(g: &Graph, parts: usize, mode: SplitMode, seed: u64) -> Result<Vec<GraphSet>> {
    if parts < 2 {
        return Err(Error::InvalidArgument("need at least two parts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = match mode {
        SplitMode::Copies => (0..parts)
            .map(|_| shuffle_nodes(g, &mut rng))
            .collect::<Result<Vec<_>>>()?,
        SplitMode::Random => {
            let n = g.node_count();
            if n < parts {
                return Err(Error::InvalidArgument(format!(
                    "cannot split {n} nodes into {parts} parts"
                )));
            }
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(&mut rng);
            (0..parts)
                .map(|p| {
                    let chunk = &nodes[p * n / parts..(p + 1) * n / parts];
                    shuffle_nodes(&g.induced_subgraph(chunk)?, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    graphs.into_iter().map(|g| GraphSet::new(vec![g])).collect()
}
