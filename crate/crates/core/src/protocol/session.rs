use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{DEFAULT_EIGENVECTORS, DEFAULT_WALK_STEPS};
use crate::error::{Error, Result};
use crate::featural::FeaturalScores;
use crate::graph::GraphSet;
use crate::transport::DisparityScore;

use super::broker::Broker;
use super::message::{Message, MessageKind, Payload, ReportPayload, Role};
use super::party::{
    buyer_featural_offer, party_structural_summary, seller_featural_response, size_report,
};
use super::verify::message_digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub alpha: f64,
    pub k: usize,
    pub k_prime: usize,
    pub proxy_seed: u64,
    pub proxy_edge_probability: f64,
    pub proxy_nodes: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            alpha: 0.5,
            k: DEFAULT_WALK_STEPS,
            k_prime: DEFAULT_EIGENVECTORS,
            proxy_seed: 0,
            proxy_edge_probability: 0.5,
            proxy_nodes: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.k == 0 || self.k_prime == 0 {
            return Err(Error::InvalidArgument(
                "k and k_prime must be positive".into(),
            ));
        }
        let p = self.proxy_edge_probability;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "proxy edge probability must lie in (0, 1), got {p}"
            )));
        }
        if matches!(self.proxy_nodes, Some(n) if n < 2) {
            return Err(Error::InvalidArgument(
                "proxy needs at least 2 nodes".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization is infallible")
    }
}

/// First 16 hex digits of the SHA-256 of the config JSON.
pub fn session_id_for(config: &SessionConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    hex::encode(digest)[..16].to_string()
}

/// Outcome of a session, as computed by the broker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportPayload", from = "ReportPayload")]
pub struct ValuationReport {
    pub structural: DisparityScore,
    pub featural: Option<FeaturalScores>,
    /// Sum of the two parties' worst proxy-matching residuals; bounds the
    /// conformity error of any buyer/seller graph pair.
    pub epsilon_hat_max: f64,
    pub featural_skipped: Option<String>,
    pub config: SessionConfig,
    pub log_digest: String,
}

impl ValuationReport {
    pub fn s(&self) -> f64 {
        self.structural.s
    }

    pub fn gwd(&self) -> f64 {
        self.structural.gwd
    }

    pub fn diversity(&self) -> Option<f64> {
        self.featural.map(|f| f.diversity)
    }

    pub fn relevance(&self) -> Option<f64> {
        self.featural.map(|f| f.relevance)
    }

    pub fn to_payload(&self) -> ReportPayload {
        self.clone().into()
    }
}

impl From<ValuationReport> for ReportPayload {
    fn from(r: ValuationReport) -> Self {
        ReportPayload {
            s: r.structural.s,
            d: r.diversity(),
            r: r.relevance(),
            gwd: r.structural.gwd,
            alpha: r.structural.alpha,
            epsilon_hat_max: r.epsilon_hat_max,
            featural_skipped: r.featural_skipped,
            config: r.config,
            log_digest: r.log_digest,
        }
    }
}

impl From<ReportPayload> for ValuationReport {
    fn from(p: ReportPayload) -> Self {
        let featural = match (p.d, p.r) {
            (Some(diversity), Some(relevance)) => Some(FeaturalScores {
                diversity,
                relevance,
            }),
            _ => None,
        };
        ValuationReport {
            structural: DisparityScore {
                gwd: p.gwd,
                s: p.s,
                alpha: p.alpha,
            },
            featural,
            epsilon_hat_max: p.epsilon_hat_max,
            featural_skipped: p.featural_skipped,
            config: p.config,
            log_digest: p.log_digest,
        }
    }
}

/// Ordered message log of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    session_id: String,
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new(session_id: impl Into<String>) -> Self {
        Transcript {
            session_id: session_id.into(),
            messages: Vec::new(),
        }
    }

    /// Appends a message with the next sequence number and returns a copy.
    pub fn push(&mut self, from: Role, to: Role, payload: &Payload) -> Message {
        let msg = Message {
            session_id: self.session_id.clone(),
            seq: self.messages.len() as u64,
            from,
            to,
            kind: payload.kind(),
            payload: payload.to_value(),
        };
        self.messages.push(msg.clone());
        msg
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn into_messages(self) -> Vec<Message> {
        self.messages
    }

    pub fn to_ndjson(&self) -> String {
        to_ndjson(&self.messages)
    }
}

fn to_ndjson(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&m.to_line());
        out.push('\n');
    }
    out
}

pub fn write_trace(path: impl AsRef<Path>, messages: &[Message]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_ndjson(messages)).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<Message>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Runs the whole choreography in-process and returns the broker's report
/// with the full message log.
pub fn run_session(
    buyer: &GraphSet,
    seller: &GraphSet,
    config: &SessionConfig,
) -> Result<(ValuationReport, Transcript)> {
    config.validate()?;
    let sid = session_id_for(config);
    let mut t = Transcript::new(sid.clone());
    let mut broker = Broker::new(config.clone(), sid)?;

    for (role, gs) in [(Role::Buyer, buyer), (Role::Seller, seller)] {
        let msg = t.push(role, Role::Broker, &Payload::SizeReport(size_report(gs)));
        broker.receive(&msg)?;
    }

    broker.send_proxy(&mut t)?;
    for (role, gs) in [(Role::Buyer, buyer), (Role::Seller, seller)] {
        let proxy = received_proxy(&t, role)?;
        let local = party_structural_summary(gs, &proxy, config.k, config.k_prime)?;
        let msg = t.push(
            role,
            Role::Broker,
            &Payload::StructuralSummary(local.payload()),
        );
        broker.receive(&msg)?;
    }

    if broker.expects_featural() == Some(true) {
        let (basis, eigenvalues) = buyer_featural_offer(buyer)?;
        let basis_msg = t.push(
            Role::Buyer,
            Role::Seller,
            &Payload::BuyerEigenvectors(basis.clone()),
        );
        let msg = t.push(
            Role::Buyer,
            Role::Broker,
            &Payload::BuyerEigenvalues(eigenvalues),
        );
        broker.receive(&msg)?;
        let response = seller_featural_response(seller, &basis, message_digest(&basis_msg))?;
        let msg = t.push(
            Role::Seller,
            Role::Broker,
            &Payload::SellerProjectedVariances(response),
        );
        broker.receive(&msg)?;
    }

    let report = broker.send_report(&mut t)?;
    Ok((report, t))
}

fn received_proxy(t: &Transcript, role: Role) -> Result<crate::graph::Graph> {
    let msg = t
        .messages()
        .iter()
        .find(|m| m.kind == MessageKind::ProxyGraph && m.to == role)
        .ok_or_else(|| Error::Protocol(format!("{role:?} never received the proxy")))?;
    match Payload::from_message(msg)? {
        Payload::ProxyGraph(p) => p.to_graph(),
        _ => unreachable!("kind checked"),
    }
}
