use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;

use super::session::SessionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Broker,
    Buyer,
    Seller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    SizeReport,
    ProxyGraph,
    StructuralSummary,
    BuyerEigenvectors,
    BuyerEigenvalues,
    SellerProjectedVariances,
    ValuationReport,
}

impl MessageKind {
    /// Whether `from → to` may carry this kind.
    pub fn allowed(self, from: Role, to: Role) -> bool {
        use MessageKind::*;
        use Role::*;
        match (from, to) {
            (Buyer, Broker) => matches!(self, SizeReport | StructuralSummary | BuyerEigenvalues),
            (Seller, Broker) => {
                matches!(
                    self,
                    SizeReport | StructuralSummary | SellerProjectedVariances
                )
            }
            (Broker, Buyer) | (Broker, Seller) => matches!(self, ProxyGraph | ValuationReport),
            (Buyer, Seller) => self == BuyerEigenvectors,
            _ => false,
        }
    }
}

impl std::fmt::Display for MessageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One line of a session trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub session_id: String,
    pub seq: u64,
    pub from: Role,
    pub to: Role,
    pub kind: MessageKind,
    pub payload: serde_json::Value,
}

impl Message {
    pub fn parse_payload<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.payload.clone()).map_err(|e| {
            Error::Protocol(format!(
                "message {} ({}): bad payload: {e}",
                self.seq, self.kind
            ))
        })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("message serialization is infallible")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeReport {
    pub max_nodes: usize,
    pub graph_count: usize,
    pub feature_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyPayload {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl ProxyPayload {
    pub fn from_graph(g: &Graph) -> Self {
        ProxyPayload {
            n: g.node_count(),
            edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<Graph> {
        let edges: Vec<_> = self.edges.iter().map(|&[u, v]| (u, v)).collect();
        Graph::new(self.n, edges, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryPayload {
    /// Row-major `|G| × |V|` pooled summary.
    pub summary: Vec<Vec<f64>>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisPayload {
    /// Row-major `r × r`; column `i` is the `i`-th principal direction.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl BasisPayload {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        BasisPayload {
            eigenvectors: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    /// The basis as a square matrix; rejects ragged or non-finite input.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let r = self.eigenvectors.len();
        if r == 0 || self.eigenvectors.iter().any(|row| row.len() != r) {
            return Err(Error::Protocol(
                "eigenvector payload is not a square matrix".into(),
            ));
        }
        if self.eigenvectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Protocol("eigenvector payload is not finite".into()));
        }
        Ok(DMatrix::from_fn(r, r, |i, j| self.eigenvectors[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenvaluesPayload {
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectedPayload {
    pub projected_variances: Vec<f64>,
    /// SHA-256 of the `BuyerEigenvectors` line the seller projected onto.
    pub basis_digest: String,
}

/// Broker's final report; also the body written by `graphval value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportPayload {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub gwd: f64,
    pub alpha: f64,
    pub epsilon_hat_max: f64,
    pub featural_skipped: Option<String>,
    pub config: SessionConfig,
    /// SHA-256 over every broker-visible message preceding the report, plus
    /// the config.
    pub log_digest: String,
}

/// Typed body of a message; the variant fixes the [`MessageKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    SizeReport(SizeReport),
    ProxyGraph(ProxyPayload),
    StructuralSummary(SummaryPayload),
    BuyerEigenvectors(BasisPayload),
    BuyerEigenvalues(EigenvaluesPayload),
    SellerProjectedVariances(ProjectedPayload),
    ValuationReport(Box<ReportPayload>),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::SizeReport(_) => MessageKind::SizeReport,
            Payload::ProxyGraph(_) => MessageKind::ProxyGraph,
            Payload::StructuralSummary(_) => MessageKind::StructuralSummary,
            Payload::BuyerEigenvectors(_) => MessageKind::BuyerEigenvectors,
            Payload::BuyerEigenvalues(_) => MessageKind::BuyerEigenvalues,
            Payload::SellerProjectedVariances(_) => MessageKind::SellerProjectedVariances,
            Payload::ValuationReport(_) => MessageKind::ValuationReport,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        let v = match self {
            Payload::SizeReport(p) => serde_json::to_value(p),
            Payload::ProxyGraph(p) => serde_json::to_value(p),
            Payload::StructuralSummary(p) => serde_json::to_value(p),
            Payload::BuyerEigenvectors(p) => serde_json::to_value(p),
            Payload::BuyerEigenvalues(p) => serde_json::to_value(p),
            Payload::SellerProjectedVariances(p) => serde_json::to_value(p),
            Payload::ValuationReport(p) => serde_json::to_value(p),
        };
        v.expect("payload serialization is infallible")
    }

    /// Strictly parses a message body according to its declared kind.
    pub fn from_message(msg: &Message) -> Result<Payload> {
        Ok(match msg.kind {
            MessageKind::SizeReport => Payload::SizeReport(msg.parse_payload()?),
            MessageKind::ProxyGraph => Payload::ProxyGraph(msg.parse_payload()?),
            MessageKind::StructuralSummary => Payload::StructuralSummary(msg.parse_payload()?),
            MessageKind::BuyerEigenvectors => Payload::BuyerEigenvectors(msg.parse_payload()?),
            MessageKind::BuyerEigenvalues => Payload::BuyerEigenvalues(msg.parse_payload()?),
            MessageKind::SellerProjectedVariances => {
                Payload::SellerProjectedVariances(msg.parse_payload()?)
            }
            MessageKind::ValuationReport => Payload::ValuationReport(msg.parse_payload()?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allowed_triples() {
        use MessageKind::*;
        use Role::*;
        assert!(SizeReport.allowed(Buyer, Broker));
        assert!(BuyerEigenvectors.allowed(Buyer, Seller));
        assert!(!BuyerEigenvectors.allowed(Buyer, Broker));
        assert!(!BuyerEigenvalues.allowed(Seller, Broker));
        assert!(!ProxyGraph.allowed(Buyer, Seller));
        assert!(!StructuralSummary.allowed(Seller, Buyer));
        // Nothing flows from seller to buyer.
        for kind in [
            SizeReport,
            ProxyGraph,
            StructuralSummary,
            BuyerEigenvectors,
            BuyerEigenvalues,
            SellerProjectedVariances,
            ValuationReport,
        ] {
            assert!(!kind.allowed(Seller, Buyer));
            assert!(!kind.allowed(Broker, Broker));
        }
    }

    #[test]
    fn wire_shape() {
        let msg = Message {
            session_id: "s".into(),
            seq: 3,
            from: Role::Broker,
            to: Role::Seller,
            kind: MessageKind::ProxyGraph,
            payload: Payload::ProxyGraph(ProxyPayload {
                n: 2,
                edges: vec![[0, 1]],
            })
            .to_value(),
        };
        assert_eq!(
            msg.to_line(),
            r#"{"session_id":"s","seq":3,"from":"broker","to":"seller","kind":"ProxyGraph","payload":{"edges":[[0,1]],"n":2}}"#
        );
        let back: Message = serde_json::from_str(&msg.to_line()).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn strict_payload_schema() {
        let msg = Message {
            session_id: "s".into(),
            seq: 0,
            from: Role::Buyer,
            to: Role::Broker,
            kind: MessageKind::BuyerEigenvalues,
            payload: serde_json::json!({"eigenvalues": [1.0], "edges": [[0, 1]]}),
        };
        assert!(Payload::from_message(&msg).is_err());
    }
}
