use crate::error::{Error, Result};
use crate::featural::diversity_relevance;
use crate::graph::{generate_proxy, Graph};
use crate::transport::{gwd_sets, structural_disparity, PooledSummary};

use super::message::{
    EigenvaluesPayload, Message, MessageKind, Payload, ProjectedPayload, ProxyPayload, Role,
    SizeReport, SummaryPayload,
};
use super::session::{SessionConfig, Transcript, ValuationReport};
use super::verify::log_digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    ProxySent,
    StructuralCollected,
    FeaturalCollected,
    Done,
}

#[derive(Debug, Default, Clone)]
struct PerParty<T> {
    buyer: Option<T>,
    seller: Option<T>,
}

impl<T> PerParty<T> {
    fn slot(&mut self, role: Role) -> &mut Option<T> {
        match role {
            Role::Buyer => &mut self.buyer,
            _ => &mut self.seller,
        }
    }

    fn get(&self, role: Role) -> Option<&T> {
        match role {
            Role::Buyer => self.buyer.as_ref(),
            _ => self.seller.as_ref(),
        }
    }

    fn both(&self) -> bool {
        self.buyer.is_some() && self.seller.is_some()
    }
}

/// Why the featural exchange cannot run, or `None` when it can.
pub(crate) fn featural_skip_reason(buyer: &SizeReport, seller: &SizeReport) -> Option<String> {
    match (buyer.feature_dim, seller.feature_dim) {
        (None, _) => Some("buyer has no node features".into()),
        (_, None) => Some("seller has no node features".into()),
        (Some(a), Some(b)) if a != b => Some(format!("feature dimensions differ ({a} vs {b})")),
        _ => None,
    }
}

pub(crate) fn proxy_size(config: &SessionConfig, buyer: &SizeReport, seller: &SizeReport) -> usize {
    config
        .proxy_nodes
        .unwrap_or_else(|| buyer.max_nodes.max(seller.max_nodes))
}

/// Broker side of a session. Everything it learns arrives through
/// [`Broker::receive`]; everything it says goes through a [`Transcript`].
#[derive(Debug, Clone)]
pub struct Broker {
    config: SessionConfig,
    session_id: String,
    phase: Phase,
    sizes: PerParty<SizeReport>,
    proxy_nodes: usize,
    summaries: PerParty<(PooledSummary, f64)>,
    eigenvalues: Option<Vec<f64>>,
    projected: Option<Vec<f64>>,
    seen: Vec<Message>,
}

impl Broker {
    pub fn new(config: SessionConfig, session_id: impl Into<String>) -> Result<Self> {
        config.validate()?;
        Ok(Broker {
            config,
            session_id: session_id.into(),
            phase: Phase::Init,
            sizes: PerParty {
                buyer: None,
                seller: None,
            },
            proxy_nodes: 0,
            summaries: PerParty {
                buyer: None,
                seller: None,
            },
            eigenvalues: None,
            projected: None,
            seen: Vec::new(),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    /// Whether both size reports announced the same feature dimension.
    /// `None` until both reports are in.
    pub fn expects_featural(&self) -> Option<bool> {
        match (&self.sizes.buyer, &self.sizes.seller) {
            (Some(b), Some(s)) => Some(featural_skip_reason(b, s).is_none()),
            _ => None,
        }
    }

    fn phase_error(&self, msg: &Message) -> Error {
        Error::Phase {
            phase: self.phase,
            kind: format!("{} from {:?}", msg.kind, msg.from),
        }
    }

    /// Accepts one party message. On any error the broker state is left
    /// untouched.
    pub fn receive(&mut self, msg: &Message) -> Result<()> {
        if msg.session_id != self.session_id {
            return Err(Error::Protocol(format!(
                "session id {:?} does not match {:?}",
                msg.session_id, self.session_id
            )));
        }
        if msg.to != Role::Broker || !msg.kind.allowed(msg.from, msg.to) {
            return Err(Error::Protocol(format!(
                "{:?} -> {:?} may not carry {}",
                msg.from, msg.to, msg.kind
            )));
        }
        let from = msg.from;
        let in_phase = match msg.kind {
            MessageKind::SizeReport => self.phase == Phase::Init && self.sizes.get(from).is_none(),
            MessageKind::StructuralSummary => {
                self.phase == Phase::ProxySent && self.summaries.get(from).is_none()
            }
            MessageKind::BuyerEigenvalues => {
                self.phase == Phase::StructuralCollected && self.eigenvalues.is_none()
            }
            MessageKind::SellerProjectedVariances => {
                self.phase == Phase::StructuralCollected && self.projected.is_none()
            }
            _ => false,
        };
        if !in_phase {
            return Err(self.phase_error(msg));
        }
        match Payload::from_message(msg)? {
            Payload::SizeReport(report) => {
                if report.max_nodes == 0 || report.graph_count == 0 {
                    return Err(Error::Protocol(
                        "size report with an empty graph set".into(),
                    ));
                }
                *self.sizes.slot(from) = Some(report);
            }
            Payload::StructuralSummary(summary) => {
                let pooled = self.check_summary(from, &summary)?;
                *self.summaries.slot(from) = Some((pooled, summary.max_residual));
                if self.summaries.both() {
                    self.phase = if self.expects_featural() == Some(true) {
                        Phase::StructuralCollected
                    } else {
                        Phase::FeaturalCollected
                    };
                }
            }
            Payload::BuyerEigenvalues(EigenvaluesPayload { eigenvalues }) => {
                self.check_spectrum_len(eigenvalues.len())?;
                self.eigenvalues = Some(eigenvalues);
                if self.projected.is_some() {
                    self.phase = Phase::FeaturalCollected;
                }
            }
            Payload::SellerProjectedVariances(ProjectedPayload {
                projected_variances,
                ..
            }) => {
                self.check_spectrum_len(projected_variances.len())?;
                self.projected = Some(projected_variances);
                if self.eigenvalues.is_some() {
                    self.phase = Phase::FeaturalCollected;
                }
            }
            _ => unreachable!("kind checked above"),
        }
        self.seen.push(msg.clone());
        Ok(())
    }

    fn check_summary(&self, from: Role, summary: &SummaryPayload) -> Result<PooledSummary> {
        let size = self
            .sizes
            .get(from)
            .expect("size reports precede the proxy");
        let width = self.proxy_nodes.max(size.max_nodes);
        if summary.summary.len() != size.graph_count
            || summary.summary.iter().any(|row| row.len() != width)
        {
            return Err(Error::Protocol(format!(
                "{from:?} summary must be {}x{width}",
                size.graph_count
            )));
        }
        if summary.max_residual < 0.0 || !summary.max_residual.is_finite() {
            return Err(Error::Protocol(format!(
                "{from:?} residual {} is not a finite non-negative number",
                summary.max_residual
            )));
        }
        PooledSummary::from_rows(&summary.summary)
    }

    fn check_spectrum_len(&self, len: usize) -> Result<()> {
        let dim = self
            .sizes
            .buyer
            .as_ref()
            .and_then(|s| s.feature_dim)
            .expect("featural phase implies a feature dimension");
        if len != dim {
            return Err(Error::Protocol(format!(
                "spectrum of length {len}, expected {dim}"
            )));
        }
        Ok(())
    }

    /// Generates the proxy and sends it to both parties.
    pub fn send_proxy(&mut self, transcript: &mut Transcript) -> Result<Graph> {
        let (Some(b), Some(s)) = (&self.sizes.buyer, &self.sizes.seller) else {
            return Err(Error::Phase {
                phase: self.phase,
                kind: "ProxyGraph before both size reports".into(),
            });
        };
        if self.phase != Phase::Init {
            return Err(Error::Phase {
                phase: self.phase,
                kind: "ProxyGraph".into(),
            });
        }
        let n = proxy_size(&self.config, b, s);
        let proxy = generate_proxy(
            n,
            self.config.proxy_edge_probability,
            self.config.proxy_seed,
        )?;
        let payload = Payload::ProxyGraph(ProxyPayload::from_graph(&proxy));
        for to in [Role::Buyer, Role::Seller] {
            let msg = transcript.push(Role::Broker, to, &payload);
            self.seen.push(msg);
        }
        self.proxy_nodes = n;
        self.phase = Phase::ProxySent;
        Ok(proxy)
    }

    /// Scores the collected summaries and sends the report to both parties.
    pub fn send_report(&mut self, transcript: &mut Transcript) -> Result<ValuationReport> {
        if self.phase != Phase::FeaturalCollected {
            return Err(Error::Phase {
                phase: self.phase,
                kind: "ValuationReport".into(),
            });
        }
        let (fb, rb) = self.summaries.buyer.as_ref().expect("phase");
        let (fs, rs) = self.summaries.seller.as_ref().expect("phase");
        let structural = structural_disparity(gwd_sets(fb, fs)?, self.config.alpha)?;
        let (b, s) = (
            self.sizes.buyer.as_ref().expect("phase"),
            self.sizes.seller.as_ref().expect("phase"),
        );
        let featural_skipped = featural_skip_reason(b, s);
        let featural = match (&self.eigenvalues, &self.projected) {
            (Some(lam), Some(lam_hat)) => Some(diversity_relevance(lam, lam_hat)?),
            _ => None,
        };
        let report = ValuationReport {
            structural,
            featural,
            epsilon_hat_max: rb + rs,
            featural_skipped,
            config: self.config.clone(),
            log_digest: log_digest(&self.seen, &self.config),
        };
        let payload = Payload::ValuationReport(Box::new(report.to_payload()));
        for to in [Role::Buyer, Role::Seller] {
            let msg = transcript.push(Role::Broker, to, &payload);
            self.seen.push(msg);
        }
        self.phase = Phase::Done;
        Ok(report)
    }
}
