use rayon::prelude::*;

use crate::embedding::embed;
use crate::error::{Error, Result};
use crate::featural::{buyer_spectrum, seller_projected_variances, stack_and_center};
use crate::graph::{Graph, GraphSet};
use crate::matching::{spectral_match, MatchResult};
use crate::transport::{align_embedding, mean_pool, PooledSummary};

use super::message::{
    BasisPayload, EigenvaluesPayload, ProjectedPayload, SizeReport, SummaryPayload,
};

/// A party's structural contribution plus the matches behind it. Only
/// [`LocalSummary::payload`] leaves the party.
#[derive(Debug, Clone)]
pub struct LocalSummary {
    pub pooled: PooledSummary,
    pub matches: Vec<MatchResult>,
}

impl LocalSummary {
    pub fn max_residual(&self) -> f64 {
        self.matches.iter().map(|m| m.residual).fold(0.0, f64::max)
    }

    pub fn payload(&self) -> SummaryPayload {
        SummaryPayload {
            summary: self.pooled.to_rows(),
            max_residual: self.max_residual(),
        }
    }
}

pub fn size_report(gs: &GraphSet) -> SizeReport {
    SizeReport {
        max_nodes: gs.max_node_count(),
        graph_count: gs.len(),
        feature_dim: gs.feature_dim(),
    }
}

/// Matches every graph to the proxy, aligns its embedding into the proxy's
/// frame and mean-pools the stack into a `|G| × max(N_key, max Nᵢ)` summary.
pub fn party_structural_summary(
    gs: &GraphSet,
    proxy: &Graph,
    k: usize,
    k_prime: usize,
) -> Result<LocalSummary> {
    if gs.is_empty() {
        return Err(Error::InvalidGraphSet("empty graph set".into()));
    }
    let node_cap = proxy.node_count().max(gs.max_node_count());
    let per_graph: Vec<_> = gs
        .graphs()
        .par_iter()
        .map(|g| {
            let m = spectral_match(proxy, g)?;
            let e = embed(g, k, k_prime)?;
            let aligned = align_embedding(&e, &m.permutation, node_cap)?;
            Ok((m, aligned))
        })
        .collect::<Result<_>>()?;
    let (matches, stack): (Vec<_>, Vec<_>) = per_graph.into_iter().unzip();
    Ok(LocalSummary {
        pooled: mean_pool(&stack)?,
        matches,
    })
}

/// Buyer's covariance basis (for the seller) and spectrum (for the broker).
pub fn buyer_featural_offer(gs: &GraphSet) -> Result<(BasisPayload, EigenvaluesPayload)> {
    let spectrum = buyer_spectrum(&stack_and_center(gs)?)?;
    Ok((
        BasisPayload::from_matrix(&spectrum.eigenvectors),
        EigenvaluesPayload {
            eigenvalues: spectrum.eigenvalues,
        },
    ))
}

/// Seller's variances along the buyer's basis. `basis_digest` identifies the
/// eigenvector message the response answers.
pub fn seller_featural_response(
    gs: &GraphSet,
    basis: &BasisPayload,
    basis_digest: String,
) -> Result<ProjectedPayload> {
    let projected = seller_projected_variances(&stack_and_center(gs)?, &basis.to_matrix()?)?;
    Ok(ProjectedPayload {
        projected_variances: projected.values,
        basis_digest,
    })
}
