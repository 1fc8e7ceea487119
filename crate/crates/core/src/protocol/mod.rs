//! Three-party blind valuation session.
//!
//! The broker generates a random proxy graph; buyer and seller match their
//! own graphs against it and publish only mean-pooled key-frame summaries.
//! For features, the buyer sends its covariance eigenvectors to the seller
//! and its eigenvalues to the broker; the seller returns projected variances
//! to the broker. Raw adjacency or feature matrices never leave a party; the
//! proxy graph is the only adjacency structure on the wire.
//!
//! Every exchange is a [`Message`] appended to a [`Transcript`]. A finished
//! transcript is self-verifying: [`verify_trace`] recomputes the report from
//! the logged summaries alone.

mod broker;
mod message;
mod party;
mod session;
mod verify;

pub use broker::{Broker, Phase};
pub use message::{
    BasisPayload, EigenvaluesPayload, Message, MessageKind, Payload, ProjectedPayload,
    ProxyPayload, ReportPayload, Role, SizeReport, SummaryPayload,
};
pub use party::{
    buyer_featural_offer, party_structural_summary, seller_featural_response, size_report,
    LocalSummary,
};
pub use session::{
    read_trace, run_session, session_id_for, write_trace, SessionConfig, Transcript,
    ValuationReport,
};
pub use verify::{audit_blindness, log_digest, verify_trace};
