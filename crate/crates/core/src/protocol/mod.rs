//! BB84 endpoints, sifting, QBER, CASCADE reconciliation, privacy
//! amplification and the classical-channel message layer.

pub mod bb84;
pub mod cascade;
pub mod message;
pub mod privacy;
pub mod session;
pub mod transport;

pub use bb84::{alice_prepare, bob_choose_basis, qber, sift, PreparedPulse, PulseTable, SiftedKey};
pub use cascade::{bench, cascade_reconcile, BenchTrial, CascadeConfig, ReconciliationResult};
pub use message::{ClassicalMessage, MessageType};
pub use privacy::privacy_amplify;
pub use session::{run_session, SessionReport};
pub use transport::{Transport, TransportKind};
