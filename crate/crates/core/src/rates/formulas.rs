use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    /// Error-correction inefficiency relative to the Shannon limit.
    pub f_p: f64,
    /// QBER above which the session is aborted.
    pub qber_threshold: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self { f_p: 1.16, qber_threshold: 0.11 }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_p >= 1.0 && self.f_p.is_finite()) {
            return Err(Error::InvalidParameter(format!("f_p must be >= 1, got {}", self.f_p)));
        }
        if !(self.qber_threshold > 0.0 && self.qber_threshold < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "qber_threshold must lie in (0, 0.5), got {}",
                self.qber_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub q: f64,
    pub r_sifted_hz: f64,
    pub r_net_cascade_hz: f64,
    pub delta: f64,
    pub r_secure_gllp_hz: f64,
    pub secure: bool,
}

impl RateReport {
    pub fn new(q: f64, r_sifted_hz: f64, delta: f64, params: &AnalysisParams) -> Self {
        let r_secure_gllp_hz = gllp_net_rate(q, r_sifted_hz, delta, params.f_p);
        Self {
            q,
            r_sifted_hz,
            r_net_cascade_hz: cascade_net_rate(q, r_sifted_hz, params.f_p),
            delta,
            r_secure_gllp_hz,
            secure: r_secure_gllp_hz > 0.0 && q < params.qber_threshold,
        }
    }
}

/// `-q log2 q - (1-q) log2 (1-q)` with `0 log 0 = 0`.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("binary entropy argument {q} outside [0, 1]")));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(q) + term(1.0 - q))
}

fn h2(q: f64) -> f64 {
    binary_entropy(q.clamp(0.0, 1.0)).expect("clamped")
}

/// Unclamped `1 - f_p H2(Q)`.
pub fn cascade_factor(q: f64, f_p: f64) -> f64 {
    1.0 - f_p * h2(q)
}

pub fn cascade_net_rate(q: f64, r_sifted_hz: f64, f_p: f64) -> f64 {
    (cascade_factor(q, f_p) * r_sifted_hz).max(0.0)
}

/// Unclamped GLLP secure fraction of sifted bits,
/// `(1-Δ) - f_p H2(Q) - (1-Δ) f_p H2(Q/(1-Δ))`. `None` where the expression is
/// undefined (`Δ >= 1` or `Q/(1-Δ) > 1/2`).
pub fn gllp_factor(q: f64, delta: f64, f_p: f64) -> Option<f64> {
    if delta >= 1.0 {
        return None;
    }
    let single = 1.0 - delta;
    let q1 = q / single;
    if q1 > 0.5 {
        return None;
    }
    Some(single - f_p * h2(q) - single * f_p * h2(q1))
}

pub fn gllp_net_rate(q: f64, r_sifted_hz: f64, delta: f64, f_p: f64) -> f64 {
    gllp_factor(q, delta, f_p).map_or(0.0, |f| (f * r_sifted_hz).max(0.0))
}

/// Fraction of pulses carrying two or more photons, `g2 μ² / 2`.
pub fn multiphoton_fraction(mu: f64, g2: f64) -> f64 {
    g2 * mu * mu / 2.0
}
