use rayon::prelude::*;

use super::analytic::{rate_report, DeltaPlane};
use super::formulas::RateReport;
use crate::error::{Error, Result};
use crate::protocol::{run_session, TransportKind};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Scenario key (or `mu`) to vary.
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// Pulses per grid point for the Monte Carlo QBER column.
    pub mc_pulses: Option<u64>,
    pub plane: DeltaPlane,
}

impl SweepSpec {
    pub fn grid(&self) -> Result<Vec<f64>> {
        match self.steps {
            0 => Err(Error::InvalidParameter("sweep needs at least one step".into())),
            1 => Ok(vec![self.from]),
            n => Ok((0..n).map(|i| self.from + (self.to - self.from) * i as f64 / (n - 1) as f64).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub param_value: f64,
    pub mu: f64,
    pub report: RateReport,
    pub q_mc: Option<f64>,
}

pub fn evaluate_point(base: &Scenario, spec: &SweepSpec, value: f64) -> Result<SweepPoint> {
    let mut s = base.clone();
    s.set_param(&spec.param, value)?;
    let report = rate_report(&s, spec.plane)?;
    let q_mc = match spec.mc_pulses {
        Some(n) => run_session(&s, n, TransportKind::InProcess, s.seed)?.qber,
        None => None,
    };
    Ok(SweepPoint { label: s.label.clone(), param_value: value, mu: s.source.mu(), report, q_mc })
}

/// Evaluates every grid point in parallel; results keep grid order.
pub fn sweep(base: &Scenario, spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    base.clone().set_param(&spec.param, base.get_param(&spec.param)?)?;
    spec.grid()?.into_par_iter().map(|v| evaluate_point(base, spec, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(param: &str, from: f64, to: f64, steps: usize) -> SweepSpec {
        SweepSpec { param: param.into(), from, to, steps, mc_pulses: None, plane: DeltaPlane::Source }
    }

    #[test]
    fn single_point_equals_direct_evaluation() {
        let s = Scenario::bundled("paper-2km-5uW").unwrap();
        let pts = sweep(&s, &spec("channel.length_km", 2.0, 9.0, 1)).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].report, rate_report(&s, DeltaPlane::Source).unwrap());
    }

    #[test]
    fn length_and_rate_trends() {
        let s = Scenario::bundled("paper-0km-5uW").unwrap();
        let pts = sweep(&s, &spec("channel.length_km", 0.0, 2.0, 2)).unwrap();
        assert!(pts[1].report.q > pts[0].report.q);
        let pts = sweep(&s, &spec("source.emission_rate_hz", 2e5, 8e6, 40)).unwrap();
        assert!(pts.windows(2).all(|w| w[1].report.q <= w[0].report.q && w[1].param_value > w[0].param_value));
    }

    #[test]
    fn rejects_bad_specs() {
        let s = Scenario::bundled("paper-0km-5uW").unwrap();
        assert!(matches!(sweep(&s, &spec("colour", 0.0, 1.0, 3)), Err(Error::UnknownParameter(_))));
        assert!(sweep(&s, &spec("channel.length_km", 0.0, 1.0, 0)).is_err());
    }
}
