//! Closed-form key-rate analysis: binary entropy, CASCADE and GLLP net
//! rates, the analytic QBER/sifted-rate model, maximum distance and sweeps.

pub mod analytic;
pub mod formulas;
pub mod sweep;

pub use analytic::{
    analytic_qber, analytic_sifted_rate, fit_misalignment, max_distance, rate_report, DeltaPlane,
    DistanceMethod, DistanceOptions, LinkModel,
};
pub use formulas::{
    binary_entropy, cascade_factor, cascade_net_rate, gllp_factor, gllp_net_rate, multiphoton_fraction,
    AnalysisParams, RateReport,
};
pub use sweep::{sweep, SweepPoint, SweepSpec};
