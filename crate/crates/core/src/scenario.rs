//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! Every parameter of the simulated link lives here; the bundled files in
//! `scenarios/` are compiled into the crate and available through
//! [`Scenario::bundled`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optics::{optimal_gate_offset, DetectorParams, GateParams, LinkBudget};
use crate::rates::AnalysisParams;
use crate::source::{EmissionTimeModel, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOffset {
    /// Placed where the acceptance of the emission-time profile is largest.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub seed: u64,
    pub source: SourceParams,
    pub link: LinkBudget,
    pub detector: DetectorParams,
    pub gate_width_ps: f64,
    pub gate_offset: GateOffset,
    pub analysis: AnalysisParams,
}

/// Every accepted key, in serialization order.
pub const KEYS: [&str; 24] = [
    "label",
    "seed",
    "clock_hz",
    "source.emission_rate_hz",
    "source.g2",
    "source.coupling_efficiency",
    "source.primary_lifetime_ps",
    "source.tail_fraction",
    "source.tail_lifetime_ns",
    "alice.loss_db",
    "alice.extinction_ratio",
    "channel.length_km",
    "channel.atten_db_per_km",
    "bob.loss_db",
    "bob.misalignment_error_prob",
    "detector.efficiency",
    "detector.dark_rate_hz",
    "detector.jitter_ps",
    "detector.dead_time_ns",
    "detector.count",
    "gate.width_ps",
    "gate.offset_ps",
    "analysis.f_p",
    "analysis.qber_threshold",
];

const REQUIRED: [&str; 13] = [
    "label",
    "clock_hz",
    "source.emission_rate_hz",
    "source.g2",
    "source.coupling_efficiency",
    "alice.loss_db",
    "alice.extinction_ratio",
    "channel.length_km",
    "channel.atten_db_per_km",
    "bob.loss_db",
    "detector.efficiency",
    "detector.dark_rate_hz",
    "gate.width_ps",
];

/// Name and text of every bundled operating point.
pub const BUNDLED: [(&str, &str); 7] = [
    ("paper-0km-0.25uW", include_str!("../scenarios/paper-0km-0.25uW.scenario")),
    ("paper-0km-1uW", include_str!("../scenarios/paper-0km-1uW.scenario")),
    ("paper-0km-5uW", include_str!("../scenarios/paper-0km-5uW.scenario")),
    ("paper-2km-1uW", include_str!("../scenarios/paper-2km-1uW.scenario")),
    ("paper-2km-5uW", include_str!("../scenarios/paper-2km-5uW.scenario")),
    ("strauf-82MHz-10.6dB", include_str!("../scenarios/strauf-82MHz-10.6dB.scenario")),
    ("strauf-82MHz-3dB", include_str!("../scenarios/strauf-82MHz-3dB.scenario")),
];

impl Scenario {
    /// Defaults for the optional keys; required keys hold placeholders.
    fn template() -> Self {
        Self {
            label: String::new(),
            seed: 0,
            source: SourceParams {
                clock_hz: 0.0,
                emission_rate_hz: 0.0,
                g2: 0.0,
                coupling_efficiency: 0.0,
                primary_lifetime_ps: 464.0,
                tail_fraction: 0.05,
                tail_lifetime_ns: 300.0,
            },
            link: LinkBudget {
                alice_loss_db: 0.0,
                extinction_ratio: f64::INFINITY,
                fiber_length_km: 0.0,
                fiber_atten_db_per_km: 0.0,
                bob_loss_db: 0.0,
                misalignment_error_prob: 0.0,
            },
            detector: DetectorParams {
                efficiency: 0.0,
                dark_rate_hz: 0.0,
                jitter_sigma_ps: 400.0,
                dead_time_ns: 0.0,
                count: 4,
            },
            gate_width_ps: 0.0,
            gate_offset: GateOffset::Auto,
            analysis: AnalysisParams::default(),
        }
    }

    pub fn bundled(name: &str) -> Option<Scenario> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| text.parse().unwrap_or_else(|e| panic!("bundled scenario {n} is invalid: {e}")))
    }

    pub fn bundled_all() -> Vec<Scenario> {
        BUNDLED.iter().map(|(n, _)| Self::bundled(n).expect("listed")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::InvalidParameter("label must be nonempty".into()));
        }
        self.source.validate()?;
        self.link.validate()?;
        self.detector.validate()?;
        GateParams { width_ps: self.gate_width_ps, offset_ps: 0.0 }.validate()?;
        if let GateOffset::Fixed(o) = self.gate_offset {
            if !o.is_finite() {
                return Err(Error::InvalidParameter(format!("gate.offset_ps must be finite, got {o}")));
            }
        }
        let period_ps = 1e12 / self.source.clock_hz;
        if self.gate_width_ps > period_ps {
            return Err(Error::InvalidParameter(format!(
                "gate.width_ps {} exceeds the clock period of {period_ps} ps",
                self.gate_width_ps
            )));
        }
        if self.detector.dark_rate_hz > self.source.clock_hz {
            return Err(Error::InvalidParameter("detector.dark_rate_hz exceeds clock_hz".into()));
        }
        self.analysis.validate()
    }

    /// Emission-time profile as seen through detector jitter.
    pub fn time_model(&self) -> EmissionTimeModel {
        self.source.time_model(self.detector.jitter_sigma_ps)
    }

    pub fn gate(&self) -> Result<GateParams> {
        let offset_ps = match self.gate_offset {
            GateOffset::Fixed(o) => o,
            GateOffset::Auto => optimal_gate_offset(&self.time_model(), self.gate_width_ps)?,
        };
        Ok(GateParams { width_ps: self.gate_width_ps, offset_ps })
    }

    /// Numeric value of a scenario key (plus the derived `mu`).
    pub fn get_param(&self, key: &str) -> Result<f64> {
        Ok(match key {
            "mu" => self.source.mu(),
            "seed" => self.seed as f64,
            "detector.count" => self.detector.count as f64,
            "gate.offset_ps" => self.gate()?.offset_ps,
            _ => *self.clone().field(key)?,
        })
    }

    /// Overwrites one numeric key. `mu` rescales the emission rate.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "mu" => self.source.emission_rate_hz = value * self.source.clock_hz,
            "gate.offset_ps" => self.gate_offset = GateOffset::Fixed(value),
            "seed" | "detector.count" | "label" => return Err(Error::UnknownParameter(key.to_string())),
            _ => *self.field(key)? = value,
        }
        Ok(())
    }

    fn field(&mut self, key: &str) -> Result<&mut f64> {
        Ok(match key {
            "clock_hz" => &mut self.source.clock_hz,
            "source.emission_rate_hz" => &mut self.source.emission_rate_hz,
            "source.g2" => &mut self.source.g2,
            "source.coupling_efficiency" => &mut self.source.coupling_efficiency,
            "source.primary_lifetime_ps" => &mut self.source.primary_lifetime_ps,
            "source.tail_fraction" => &mut self.source.tail_fraction,
            "source.tail_lifetime_ns" => &mut self.source.tail_lifetime_ns,
            "alice.loss_db" => &mut self.link.alice_loss_db,
            "alice.extinction_ratio" => &mut self.link.extinction_ratio,
            "channel.length_km" => &mut self.link.fiber_length_km,
            "channel.atten_db_per_km" => &mut self.link.fiber_atten_db_per_km,
            "bob.loss_db" => &mut self.link.bob_loss_db,
            "bob.misalignment_error_prob" => &mut self.link.misalignment_error_prob,
            "detector.efficiency" => &mut self.detector.efficiency,
            "detector.dark_rate_hz" => &mut self.detector.dark_rate_hz,
            "detector.jitter_ps" => &mut self.detector.jitter_sigma_ps,
            "detector.dead_time_ns" => &mut self.detector.dead_time_ns,
            "gate.width_ps" => &mut self.gate_width_ps,
            "analysis.f_p" => &mut self.analysis.f_p,
            "analysis.qber_threshold" => &mut self.analysis.qber_threshold,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    fn assign(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let number = || value.parse::<f64>().map_err(|_| format!("`{key}` expects a number, got `{value}`"));
        match key {
            "label" => {
                if value.is_empty() {
                    return Err("label must be nonempty".into());
                }
                self.label = value.to_string();
            }
            "seed" => {
                self.seed = value.parse().map_err(|_| format!("`seed` expects an unsigned 64-bit integer, got `{value}`"))?
            }
            "detector.count" => {
                self.detector.count =
                    value.parse().map_err(|_| format!("`detector.count` expects an integer, got `{value}`"))?
            }
            "gate.offset_ps" => {
                self.gate_offset = if value == "auto" { GateOffset::Auto } else { GateOffset::Fixed(number()?) }
            }
            _ => {
                let v = number()?;
                *self.field(key).map_err(|_| format!("unknown key `{key}`"))? = v;
            }
        }
        Ok(())
    }

    /// Canonical text form; parses back to an identical scenario.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "label" => self.label.clone(),
                "seed" => self.seed.to_string(),
                "detector.count" => self.detector.count.to_string(),
                "gate.offset_ps" => match self.gate_offset {
                    GateOffset::Auto => "auto".to_string(),
                    GateOffset::Fixed(o) => o.to_string(),
                },
                _ => self.clone().field(key).map(|v| v.to_string()).expect("numeric key"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut sc = Scenario::template();
        let mut lines: HashMap<&str, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Scenario { line, message: format!("expected `key = value`, got `{content}`") })?;
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(Error::Scenario { line, message: format!("unknown key `{key}`") });
            };
            if let Some(first) = lines.insert(known, line) {
                return Err(Error::Scenario { line, message: format!("duplicate key `{key}` (first set on line {first})") });
            }
            sc.assign(key, value).map_err(|message| Error::Scenario { line, message })?;
        }
        let missing: Vec<String> = REQUIRED.iter().filter(|k| !lines.contains_key(*k)).map(|k| k.to_string()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        sc.validate().map_err(|e| {
            let message = match &e {
                Error::InvalidParameter(m) | Error::InfeasibleParameters(m) => m.clone(),
                other => other.to_string(),
            };
            // point at the key the violated invariant names
            let mut named: Vec<(&str, usize)> = lines.iter().map(|(k, l)| (*k, *l)).collect();
            named.sort_by_key(|(k, _)| std::cmp::Reverse(k.len()));
            let line = if matches!(e, Error::InfeasibleParameters(_)) {
                lines.get("source.g2").copied()
            } else {
                named
                    .iter()
                    .find(|(k, _)| message.contains(*k))
                    .or_else(|| named.iter().find(|(k, _)| message.contains(k.rsplit('.').next().unwrap_or(k))))
                    .map(|(_, l)| *l)
            }
            .unwrap_or(0);
            Error::Scenario { line, message }
        })?;
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
label = unit
clock_hz = 40e6
source.emission_rate_hz = 4e6
source.g2 = 0.85
source.coupling_efficiency = 0.11
alice.loss_db = 10.6
alice.extinction_ratio = 545
channel.length_km = 2
channel.atten_db_per_km = 2.2
bob.loss_db = 4.76
detector.efficiency = 0.4
detector.dark_rate_hz = 300
gate.width_ps = 300
";

    #[test]
    fn empty_file_lists_required_keys() {
        match "".parse::<Scenario>() {
            Err(Error::MissingKeys(keys)) => assert_eq!(keys.len(), REQUIRED.len()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s: Scenario = MINIMAL.parse().unwrap();
        assert_eq!(s.source.emission_rate_hz, 4e6);
        assert_eq!(s.source.tail_fraction, 0.05);
        assert_eq!(s.detector.count, 4);
        assert_eq!(s.gate_offset, GateOffset::Auto);
        assert_eq!(s.analysis, AnalysisParams::default());
        assert!((s.source.mu() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = format!("{MINIMAL}source.g2 = -1\n");
        let text = text.replacen("source.g2 = 0.85\n", "", 1);
        match text.parse::<Scenario>() {
            Err(Error::Scenario { line, message }) => {
                assert_eq!(line, 13);
                assert!(message.contains("g2") && message.contains(">= 0"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad = format!("# header\n{MINIMAL}colour = blue\n");
        assert!(matches!(bad.parse::<Scenario>(), Err(Error::Scenario { line: 15, .. })));
        let bad = MINIMAL.replace("bob.loss_db = 4.76", "bob.loss_db = lots");
        assert!(matches!(bad.parse::<Scenario>(), Err(Error::Scenario { line: 10, .. })));
        let bad = format!("{MINIMAL}label = again\n");
        assert!(matches!(bad.parse::<Scenario>(), Err(Error::Scenario { line: 14, .. })));
        let bad = MINIMAL.replace("clock_hz = 40e6", "clock_hz 40e6");
        assert!(matches!(bad.parse::<Scenario>(), Err(Error::Scenario { line: 2, .. })));
    }

    #[test]
    fn infeasible_source_is_rejected() {
        let bad = MINIMAL.replace("source.emission_rate_hz = 4e6", "source.emission_rate_hz = 80e6");
        assert!(bad.parse::<Scenario>().is_err());
    }

    #[test]
    fn bundled_scenarios_roundtrip() {
        for (name, _) in BUNDLED {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(s.label, name);
            let again: Scenario = s.serialize().parse().unwrap();
            assert_eq!(again, s, "{name}");
            assert_eq!(again.serialize(), s.serialize());
        }
        let s = Scenario::bundled("paper-2km-5uW").unwrap();
        assert_eq!(s.link.fiber_length_km, 2.0);
        assert_eq!(s.source.g2, 0.85);
        assert_eq!(s.source.emission_rate_hz, 4e6);
        assert!(Scenario::bundled("nope").is_none());
    }

    #[test]
    fn params_by_path() {
        let mut s: Scenario = MINIMAL.parse().unwrap();
        s.set_param("channel.length_km", 5.0).unwrap();
        assert_eq!(s.get_param("channel.length_km").unwrap(), 5.0);
        s.set_param("mu", 0.2).unwrap();
        assert!((s.source.emission_rate_hz - 8e6).abs() < 1e-6);
        assert!(matches!(s.set_param("colour", 1.0), Err(Error::UnknownParameter(_))));
        s.set_param("gate.offset_ps", 12.5).unwrap();
        assert_eq!(s.gate().unwrap().offset_ps, 12.5);
    }
}
