use std::str::FromStr;

use super::formulas::{gllp_factor, multiphoton_fraction, RateReport};
use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::optics::gate_accept_fraction;
use crate::scenario::Scenario;

/// Search interval for the distance solvers.
const MAX_SEARCH_KM: f64 = 500.0;

/// Per-pulse expectation model of one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub clock_hz: f64,
    pub mu: f64,
    /// Coupling times the alice + fiber + bob transmittance.
    pub t_total: f64,
    pub efficiency: f64,
    pub gate_accept: f64,
    /// Probability a detected matched-basis signal photon gives the wrong bit.
    pub e_pol: f64,
}

impl LinkModel {
    pub fn new(s: &Scenario) -> Result<Self> {
        s.validate()?;
        Ok(Self {
            clock_hz: s.source.clock_hz,
            mu: s.source.mu(),
            t_total: s.source.coupling_efficiency * s.link.transmittance(),
            efficiency: s.detector.efficiency,
            gate_accept: gate_accept_fraction(&s.time_model(), &s.gate()?)?,
            e_pol: s.link.wrong_port_prob(),
        })
    }

    /// Signal click probability per pulse.
    pub fn p_signal(&self) -> f64 {
        self.mu * self.t_total * self.efficiency * self.gate_accept
    }

    /// In-gate dark click probability per pulse summed over detectors.
    pub fn p_dark(s: &Scenario) -> f64 {
        s.detector.count as f64 * s.detector.dark_rate_hz * s.gate_width_ps * 1e-12
    }
}

fn qber_from(model: &LinkModel, p_dark: f64) -> f64 {
    let p_sig = model.p_signal();
    if p_sig + p_dark == 0.0 {
        return 0.5;
    }
    (model.e_pol * p_sig + 0.5 * p_dark) / (p_sig + p_dark)
}

/// Expected QBER: polarization errors on signal clicks, coin-flip bits on
/// dark clicks. With no clicks at all the bits are pure noise (0.5).
pub fn analytic_qber(s: &Scenario) -> Result<f64> {
    Ok(qber_from(&LinkModel::new(s)?, LinkModel::p_dark(s)))
}

/// Expected sifted bit rate, with the basis-sifting factor of 1/2 applied to
/// signal and dark clicks alike.
pub fn analytic_sifted_rate(s: &Scenario) -> Result<f64> {
    let m = LinkModel::new(s)?;
    Ok(m.clock_hz * (m.p_signal() + LinkModel::p_dark(s)) * 0.5)
}

/// Reference plane for the mean photon number entering `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaPlane {
    /// Collection cone of the source.
    #[default]
    Source,
    /// After coupling and Alice's losses.
    AliceOutput,
}

impl DeltaPlane {
    pub fn mu(self, s: &Scenario) -> f64 {
        match self {
            Self::Source => s.source.mu(),
            Self::AliceOutput => s.source.mu() * s.source.coupling_efficiency * 10f64.powf(-s.link.alice_loss_db / 10.0),
        }
    }

    pub fn delta(self, s: &Scenario) -> f64 {
        multiphoton_fraction(self.mu(s), s.source.g2)
    }
}

impl FromStr for DeltaPlane {
    type Err = Error;

    fn from_str(v: &str) -> Result<Self> {
        match v {
            "source" => Ok(Self::Source),
            "alice" => Ok(Self::AliceOutput),
            other => Err(Error::InvalidParameter(format!("unknown delta plane `{other}` (source | alice)"))),
        }
    }
}

pub fn rate_report(s: &Scenario, plane: DeltaPlane) -> Result<RateReport> {
    let q = analytic_qber(s)?;
    let r = analytic_sifted_rate(s)?;
    Ok(RateReport::new(q, r, plane.delta(s), &s.analysis))
}

/// Misalignment that makes the analytic QBER equal `target_q`. The QBER is
/// affine in the signal error probability, so the fit is closed-form.
pub fn fit_misalignment(s: &Scenario, target_q: f64) -> Result<f64> {
    let mut base = s.clone();
    base.link.misalignment_error_prob = 0.0;
    let m = LinkModel::new(&base)?;
    let (p_sig, p_dark) = (m.p_signal(), LinkModel::p_dark(&base));
    if p_sig == 0.0 {
        return Err(Error::ZeroDenominator("no signal clicks to attribute errors to"));
    }
    let e = (target_q * (p_sig + p_dark) - 0.5 * p_dark) / p_sig;
    let fitted = e - m.e_pol;
    if !(0.0..=0.5).contains(&fitted) {
        return Err(Error::InfeasibleParameters(format!(
            "QBER {target_q} needs misalignment {fitted}, outside [0, 0.5]"
        )));
    }
    Ok(fitted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    /// Fiber length at which the photon flux reaching Bob equals that of a
    /// reference operating point.
    EquivalentFlux,
    /// Fiber length at which the analytic QBER reaches the abort threshold.
    QberThreshold,
    /// Fiber length at which the GLLP secure rate falls to zero.
    GllpZero,
}

impl FromStr for DistanceMethod {
    type Err = Error;

    fn from_str(v: &str) -> Result<Self> {
        match v {
            "equivalent-flux" => Ok(Self::EquivalentFlux),
            "qber-threshold" => Ok(Self::QberThreshold),
            "gllp-zero" => Ok(Self::GllpZero),
            other => Err(Error::InvalidParameter(format!("unknown distance method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DistanceOptions<'a> {
    /// Operating point whose Bob-side flux is to be matched.
    pub reference: Option<&'a Scenario>,
    /// When false the evaluated source is taken as perfectly coupled into
    /// the fiber instead of sharing the reference's coupling efficiency.
    pub coupling_unshared: bool,
    pub plane: DeltaPlane,
}

/// Photons per second arriving at Bob's detectors.
pub fn flux_at_bob(s: &Scenario, coupling: f64) -> f64 {
    s.source.emission_rate_hz * coupling * s.link.transmittance()
}

pub fn max_distance(s: &Scenario, method: DistanceMethod, opts: &DistanceOptions) -> Result<f64> {
    s.validate()?;
    let at = |d: f64| {
        let mut x = s.clone();
        x.link.fiber_length_km = d;
        x
    };
    match method {
        DistanceMethod::EquivalentFlux => {
            let reference = opts
                .reference
                .ok_or_else(|| Error::InvalidParameter("equivalent-flux needs a reference scenario".into()))?;
            reference.validate()?;
            if !(s.link.fiber_atten_db_per_km > 0.0) {
                return Err(Error::InvalidParameter("channel.atten_db_per_km must be > 0".into()));
            }
            let coupling = if opts.coupling_unshared { 1.0 } else { s.source.coupling_efficiency };
            let target = flux_at_bob(reference, reference.source.coupling_efficiency);
            let at_zero = flux_at_bob(&at(0.0), coupling);
            if !(target > 0.0 && at_zero > 0.0) {
                return Err(Error::ZeroDenominator("zero photon flux"));
            }
            let d = 10.0 * (at_zero / target).log10() / s.link.fiber_atten_db_per_km;
            if d < 0.0 {
                return Err(Error::NoRootInBracket {
                    lo: 0.0,
                    hi: f64::INFINITY,
                    reason: "flux at zero length is already below the reference".into(),
                });
            }
            Ok(d)
        }
        DistanceMethod::QberThreshold => {
            let threshold = s.analysis.qber_threshold;
            bisect(|d| analytic_qber(&at(d)).unwrap_or(0.5) - threshold, 0.0, MAX_SEARCH_KM, 1e-9)
        }
        DistanceMethod::GllpZero => bisect(
            |d| {
                let x = at(d);
                let q = analytic_qber(&x).unwrap_or(0.5);
                gllp_factor(q, opts.plane.delta(&x), x.analysis.f_p).unwrap_or(-1.0)
            },
            0.0,
            MAX_SEARCH_KM,
            1e-9,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::GateOffset;

    fn ideal() -> Scenario {
        let mut s = Scenario::bundled("paper-0km-5uW").unwrap();
        s.detector.dark_rate_hz = 0.0;
        s.link.extinction_ratio = f64::INFINITY;
        s.link.misalignment_error_prob = 0.0;
        s
    }

    #[test]
    fn noiseless_link_has_zero_qber() {
        assert_eq!(analytic_qber(&ideal()).unwrap(), 0.0);
    }

    #[test]
    fn dark_only_link_is_random() {
        let mut s = Scenario::bundled("paper-0km-5uW").unwrap();
        s.source.emission_rate_hz = 0.0;
        assert_eq!(analytic_qber(&s).unwrap(), 0.5);
    }

    #[test]
    fn sifted_rate_limits() {
        let mut s = ideal();
        s.source.emission_rate_hz = 0.0;
        assert_eq!(analytic_sifted_rate(&s).unwrap(), 0.0);

        let mut s = ideal();
        s.source.emission_rate_hz = s.source.clock_hz;
        s.source.g2 = 0.0;
        s.source.coupling_efficiency = 1.0;
        s.link.alice_loss_db = 0.0;
        s.link.bob_loss_db = 0.0;
        s.detector.efficiency = 1.0;
        s.detector.jitter_sigma_ps = 0.0;
        s.source.tail_fraction = 0.0;
        s.gate_width_ps = 2e4;
        s.gate_offset = GateOffset::Fixed(0.0);
        let r = analytic_sifted_rate(&s).unwrap();
        assert!((r / (s.source.clock_hz / 2.0) - 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn unmisaligned_base_is_in_expected_band() {
        let mut s = Scenario::bundled("paper-0km-5uW").unwrap();
        s.link.misalignment_error_prob = 0.0;
        let q = analytic_qber(&s).unwrap();
        assert!((0.006..=0.013).contains(&q), "{q}");
    }

    #[test]
    fn fit_reproduces_target() {
        let s = Scenario::bundled("paper-2km-5uW").unwrap();
        let m = fit_misalignment(&s, 0.0621).unwrap();
        let mut f = s.clone();
        f.link.misalignment_error_prob = m;
        assert!((analytic_qber(&f).unwrap() - 0.0621).abs() < 1e-12);
        assert!(fit_misalignment(&s, 0.6).is_err());
    }

    #[test]
    fn equivalent_flux_fixed_point_and_headroom() {
        let reference = Scenario::bundled("paper-2km-1uW").unwrap();
        let opts = DistanceOptions { reference: Some(&reference), ..Default::default() };
        let d = max_distance(&reference, DistanceMethod::EquivalentFlux, &opts).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
        let mut brighter = reference.clone();
        brighter.source.emission_rate_hz *= 10.0;
        brighter.source.clock_hz *= 10.0;
        let d = max_distance(&brighter, DistanceMethod::EquivalentFlux, &opts).unwrap();
        assert!((d - (2.0 + 10.0 / 2.2)).abs() < 1e-9);
        let mut dim = reference.clone();
        dim.source.emission_rate_hz /= 10.0;
        assert!(matches!(
            max_distance(&dim, DistanceMethod::EquivalentFlux, &opts),
            Err(Error::NoRootInBracket { .. })
        ));
        assert!(max_distance(&dim, DistanceMethod::EquivalentFlux, &DistanceOptions::default()).is_err());
    }

    #[test]
    fn threshold_distance_crosses_exactly() {
        let s = Scenario::bundled("paper-2km-5uW").unwrap();
        let d = max_distance(&s, DistanceMethod::QberThreshold, &DistanceOptions::default()).unwrap();
        let at = |x: f64| {
            let mut t = s.clone();
            t.link.fiber_length_km = x;
            analytic_qber(&t).unwrap()
        };
        assert!((at(d) - 0.11).abs() < 1e-6);
        assert!(at(d - 1e-3) < 0.11 && at(d + 1e-3) > 0.11);
        let g = max_distance(&s, DistanceMethod::GllpZero, &DistanceOptions::default()).unwrap();
        assert!(g < d, "GLLP frontier {g} must precede the abort threshold {d}");
    }

    #[test]
    fn qber_grows_with_length_and_falls_with_mu() {
        let mut s = Scenario::bundled("paper-0km-5uW").unwrap();
        let q0 = analytic_qber(&s).unwrap();
        s.link.fiber_length_km = 2.0;
        assert!(analytic_qber(&s).unwrap() > q0);
        let mut last = 1.0;
        for mu in [0.001, 0.005, 0.01, 0.05, 0.1, 0.2] {
            s.set_param("mu", mu).unwrap();
            let q = analytic_qber(&s).unwrap();
            assert!(q <= last);
            last = q;
        }
    }

    #[test]
    fn delta_planes() {
        let s = Scenario::bundled("paper-0km-5uW").unwrap();
        assert!((DeltaPlane::Source.delta(&s) - 4.25e-3).abs() < 1e-15);
        assert!(DeltaPlane::AliceOutput.delta(&s) < 1e-5);
        assert_eq!("alice".parse::<DeltaPlane>().unwrap(), DeltaPlane::AliceOutput);
        assert!("x".parse::<DeltaPlane>().is_err());
    }
}
