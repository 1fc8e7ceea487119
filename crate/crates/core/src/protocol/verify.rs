use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featural::diversity_relevance;
use crate::graph::generate_proxy;
use crate::transport::{gwd_sets, structural_disparity, PooledSummary};

use super::broker::{featural_skip_reason, proxy_size};
use super::message::{
    BasisPayload, EigenvaluesPayload, Message, MessageKind, Payload, ProjectedPayload,
    ProxyPayload, ReportPayload, Role, SizeReport, SummaryPayload,
};
use super::session::{session_id_for, SessionConfig, ValuationReport};

const TOLERANCE: f64 = 1e-9;

fn fail(msg: impl Into<String>) -> Error {
    Error::Verification(msg.into())
}

/// Hex SHA-256 of a message's wire line.
pub(crate) fn message_digest(msg: &Message) -> String {
    hex::encode(Sha256::digest(msg.to_line().as_bytes()))
}

/// Hex SHA-256 over the wire lines of `messages` followed by the config.
pub fn log_digest(messages: &[Message], config: &SessionConfig) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.to_line().as_bytes());
        h.update(b"\n");
    }
    h.update(config.to_json().as_bytes());
    hex::encode(h.finalize())
}

/// Checks that every message travels an allowed route, has a payload that
/// parses strictly under its kind's schema, and that matrix payloads have
/// the shapes of pooled summaries or an `r × r` basis. Nothing besides
/// `ProxyGraph` can then carry an adjacency structure or an `N × r` feature
/// matrix.
pub fn audit_blindness(messages: &[Message]) -> Result<()> {
    let mut sizes: [Option<SizeReport>; 2] = [None, None];
    let party = |r: Role| usize::from(r == Role::Seller);
    for m in messages {
        if !m.kind.allowed(m.from, m.to) {
            return Err(fail(format!(
                "message {}: {:?} -> {:?} may not carry {}",
                m.seq, m.from, m.to, m.kind
            )));
        }
        let payload = Payload::from_message(m).map_err(|e| fail(e.to_string()))?;
        let bad_shape = |what: &str| fail(format!("message {}: {what}", m.seq));
        match payload {
            Payload::SizeReport(s) => sizes[party(m.from)] = Some(s),
            Payload::StructuralSummary(SummaryPayload { summary, .. }) => {
                let size = sizes[party(m.from)]
                    .as_ref()
                    .ok_or_else(|| bad_shape("summary before size report"))?;
                if summary.len() != size.graph_count {
                    return Err(bad_shape("summary rows differ from the graph count"));
                }
            }
            Payload::BuyerEigenvectors(BasisPayload { eigenvectors }) => {
                let r =
                    feature_dim(&sizes[0]).ok_or_else(|| bad_shape("basis without features"))?;
                if eigenvectors.len() != r || eigenvectors.iter().any(|row| row.len() != r) {
                    return Err(bad_shape("basis is not r x r"));
                }
            }
            Payload::BuyerEigenvalues(EigenvaluesPayload { eigenvalues: v })
            | Payload::SellerProjectedVariances(ProjectedPayload {
                projected_variances: v,
                ..
            }) => {
                if Some(v.len()) != feature_dim(&sizes[0]) {
                    return Err(bad_shape("spectrum length differs from r"));
                }
            }
            Payload::ProxyGraph(_) | Payload::ValuationReport(_) => {}
        }
    }
    Ok(())
}

fn feature_dim(size: &Option<SizeReport>) -> Option<usize> {
    size.as_ref().and_then(|s| s.feature_dim)
}

fn choreography(featural: bool) -> Vec<(Role, Role, MessageKind)> {
    use MessageKind::*;
    use Role::*;
    let mut steps = vec![
        (Buyer, Broker, SizeReport),
        (Seller, Broker, SizeReport),
        (Broker, Buyer, ProxyGraph),
        (Broker, Seller, ProxyGraph),
        (Buyer, Broker, StructuralSummary),
        (Seller, Broker, StructuralSummary),
    ];
    if featural {
        steps.extend([
            (Buyer, Seller, BuyerEigenvectors),
            (Buyer, Broker, BuyerEigenvalues),
            (Seller, Broker, SellerProjectedVariances),
        ]);
    }
    steps.extend([
        (Broker, Buyer, ValuationReport),
        (Broker, Seller, ValuationReport),
    ]);
    steps
}

fn parse<T: serde::de::DeserializeOwned>(m: &Message) -> Result<T> {
    m.parse_payload().map_err(|e| fail(e.to_string()))
}

fn check_close(name: &str, claimed: f64, actual: f64) -> Result<()> {
    if (claimed - actual).abs() <= TOLERANCE {
        Ok(())
    } else {
        Err(fail(format!(
            "{name}: report says {claimed}, log gives {actual}"
        )))
    }
}

fn check_summary(
    who: &str,
    m: &Message,
    size: &SizeReport,
    proxy_nodes: usize,
) -> Result<(PooledSummary, f64)> {
    let p: SummaryPayload = parse(m)?;
    let width = proxy_nodes.max(size.max_nodes);
    if p.summary.len() != size.graph_count || p.summary.iter().any(|r| r.len() != width) {
        return Err(fail(format!(
            "{who} summary must be {}x{width}",
            size.graph_count
        )));
    }
    if p.max_residual.is_nan() || p.max_residual < 0.0 {
        return Err(fail(format!("{who} residual is negative")));
    }
    let pooled = PooledSummary::from_rows(&p.summary).map_err(|e| fail(e.to_string()))?;
    Ok((pooled, p.max_residual))
}

/// Replays a finished trace: checks routing, sequence numbers, the session
/// id, the proxy, payload shapes and digests, and recomputes every score
/// from the logged summaries. Returns the verified report.
pub fn verify_trace(messages: &[Message]) -> Result<ValuationReport> {
    let last = messages.last().ok_or_else(|| fail("empty trace"))?;
    if last.kind != MessageKind::ValuationReport {
        return Err(fail("trace does not end with a valuation report"));
    }
    let claimed: ReportPayload = parse(last)?;
    let config = claimed.config.clone();
    config.validate().map_err(|e| fail(e.to_string()))?;
    let sid = session_id_for(&config);
    for (i, m) in messages.iter().enumerate() {
        if m.seq != i as u64 {
            return Err(fail(format!("message {i} carries seq {}", m.seq)));
        }
        if m.session_id != sid {
            return Err(fail(format!("message {i} has a foreign session id")));
        }
    }
    audit_blindness(messages)?;

    if messages.len() < 2
        || messages[0].kind != MessageKind::SizeReport
        || messages[1].kind != MessageKind::SizeReport
    {
        return Err(fail("trace does not open with two size reports"));
    }
    let b_size: SizeReport = parse(&messages[0])?;
    let s_size: SizeReport = parse(&messages[1])?;
    let skip_reason = featural_skip_reason(&b_size, &s_size);
    let featural = skip_reason.is_none();
    let steps = choreography(featural);
    if messages.len() != steps.len() {
        return Err(fail(format!(
            "expected {} messages, found {}",
            steps.len(),
            messages.len()
        )));
    }
    for (m, (from, to, kind)) in messages.iter().zip(&steps) {
        if (m.from, m.to, m.kind) != (*from, *to, *kind) {
            return Err(fail(format!(
                "message {}: expected {from:?} -> {to:?} {kind}, found {:?} -> {:?} {}",
                m.seq, m.from, m.to, m.kind
            )));
        }
    }

    let n = proxy_size(&config, &b_size, &s_size);
    let proxy = generate_proxy(n, config.proxy_edge_probability, config.proxy_seed)
        .map_err(|e| fail(e.to_string()))?;
    let expected_proxy = ProxyPayload::from_graph(&proxy);
    for m in &messages[2..4] {
        if parse::<ProxyPayload>(m)? != expected_proxy {
            return Err(fail(format!(
                "message {}: proxy does not match the config",
                m.seq
            )));
        }
    }

    let (fb, rb) = check_summary("buyer", &messages[4], &b_size, n)?;
    let (fs, rs) = check_summary("seller", &messages[5], &s_size, n)?;
    let gwd = gwd_sets(&fb, &fs).map_err(|e| fail(e.to_string()))?;
    let score = structural_disparity(gwd, config.alpha).map_err(|e| fail(e.to_string()))?;

    let scores = if featural {
        let projected: ProjectedPayload = parse(&messages[8])?;
        if projected.basis_digest != message_digest(&messages[6]) {
            return Err(fail(
                "seller answered a different basis than the buyer sent",
            ));
        }
        let lam: EigenvaluesPayload = parse(&messages[7])?;
        Some(
            diversity_relevance(&lam.eigenvalues, &projected.projected_variances)
                .map_err(|e| fail(e.to_string()))?,
        )
    } else {
        None
    };

    let reports = &messages[messages.len() - 2..];
    if reports[0].payload != reports[1].payload {
        return Err(fail("buyer and seller received different reports"));
    }
    if claimed.alpha != config.alpha {
        return Err(fail("report alpha differs from its config"));
    }
    check_close("gwd", claimed.gwd, score.gwd)?;
    check_close("S", claimed.s, score.s)?;
    check_close("epsilon_hat_max", claimed.epsilon_hat_max, rb + rs)?;
    match (scores, claimed.d, claimed.r) {
        (Some(f), Some(d), Some(r)) => {
            check_close("D", d, f.diversity)?;
            check_close("R", r, f.relevance)?;
        }
        (None, None, None) => {}
        _ => {
            return Err(fail(
                "featural scores present when they should not be, or vice versa",
            ))
        }
    }
    if claimed.featural_skipped != skip_reason {
        return Err(fail("featural skip note does not match the size reports"));
    }
    let visible: Vec<Message> = messages[..messages.len() - 2]
        .iter()
        .filter(|m| m.from == Role::Broker || m.to == Role::Broker)
        .cloned()
        .collect();
    if claimed.log_digest != log_digest(&visible, &config) {
        return Err(fail(
            "log digest does not match the broker-visible messages",
        ));
    }
    Ok(claimed.into())
}
