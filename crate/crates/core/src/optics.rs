//! Loss budget, polarization leakage, fiber channel, SPAD detection and
//! software gating: the per-pulse kernel from Alice's modulator to Bob's
//! gated click records.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::numeric;
use crate::rng::StreamRng;
use crate::source::EmissionTimeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::Rectilinear => 0,
            Basis::Diagonal => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }

    pub fn as_bit(self) -> bool {
        self == Basis::Diagonal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    D,
    A,
}

impl Polarization {
    /// (rect, 0) -> H, (rect, 1) -> V, (diag, 0) -> D, (diag, 1) -> A.
    pub fn encode(bit: bool, basis: Basis) -> Self {
        match (basis, bit) {
            (Basis::Rectilinear, false) => Polarization::H,
            (Basis::Rectilinear, true) => Polarization::V,
            (Basis::Diagonal, false) => Polarization::D,
            (Basis::Diagonal, true) => Polarization::A,
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            Polarization::H | Polarization::V => Basis::Rectilinear,
            Polarization::D | Polarization::A => Basis::Diagonal,
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, Polarization::V | Polarization::A)
    }
}

/// Detector ids 0..3 are (rect,0), (rect,1), (diag,0), (diag,1).
pub fn detector_id(basis: Basis, bit: bool) -> u8 {
    (basis.index() * 2 + usize::from(bit)) as u8
}

pub fn detector_port(id: u8) -> (Basis, bool) {
    (Basis::from_bit(id >= 2), id % 2 == 1)
}

/// Optical losses between the fiber-coupled source and Bob's detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub alice_loss_db: f64,
    pub extinction_ratio: f64,
    pub fiber_length_km: f64,
    pub fiber_atten_db_per_km: f64,
    pub bob_loss_db: f64,
    /// Extra probability that a detected signal photon lands in the wrong
    /// port of a matched basis, on top of extinction leakage.
    pub misalignment_error_prob: f64,
}

impl LinkBudget {
    pub fn lossless() -> Self {
        Self {
            alice_loss_db: 0.0,
            extinction_ratio: f64::INFINITY,
            fiber_length_km: 0.0,
            fiber_atten_db_per_km: 0.0,
            bob_loss_db: 0.0,
            misalignment_error_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alice.loss_db", self.alice_loss_db),
            ("channel.length_km", self.fiber_length_km),
            ("channel.atten_db_per_km", self.fiber_atten_db_per_km),
            ("bob.loss_db", self.bob_loss_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.extinction_ratio > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alice.extinction_ratio must be > 1, got {}",
                self.extinction_ratio
            )));
        }
        if !(0.0..=0.5).contains(&self.misalignment_error_prob) {
            return Err(Error::InvalidParameter(format!(
                "bob.misalignment_error_prob must lie in [0, 0.5], got {}",
                self.misalignment_error_prob
            )));
        }
        Ok(())
    }

    pub fn fiber_loss_db(&self) -> f64 {
        self.fiber_length_km * self.fiber_atten_db_per_km
    }

    pub fn total_loss_db(&self) -> f64 {
        self.alice_loss_db + self.fiber_loss_db() + self.bob_loss_db
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.total_loss_db() / 10.0)
    }

    /// Probability a matched-basis photon exits the wrong port.
    pub fn wrong_port_prob(&self) -> f64 {
        let leak = if self.extinction_ratio.is_infinite() { 0.0 } else { 1.0 / (1.0 + self.extinction_ratio) };
        (leak + self.misalignment_error_prob).min(0.5)
    }
}

/// `10^(-loss_db / 10)`.
pub fn transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::InvalidParameter(format!("loss must be >= 0 dB, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Chance that a correctly-based photon leaves through the wrong PBS port.
pub fn polarization_error_prob(extinction_ratio: f64) -> Result<f64> {
    if !(extinction_ratio > 1.0) {
        return Err(Error::InvalidParameter(format!("extinction ratio must be > 1, got {extinction_ratio}")));
    }
    Ok(1.0 / (1.0 + extinction_ratio))
}

/// Photons arriving at each of Bob's four ports, indexed by detector id.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortArrivals {
    pub counts: [u8; 4],
}

impl PortArrivals {
    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&c| u32::from(c)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts == [0; 4]
    }
}

/// Sends `n_photons` through the link. Each photon survives independently
/// with the budget's transmittance, then exits the correct port with
/// probability `1 - wrong_port_prob` when Bob's basis matches, or either
/// port with probability 1/2 when it does not.
pub fn propagate_pulse<R: Rng + ?Sized>(
    n_photons: u8,
    alice_state: Polarization,
    budget: &LinkBudget,
    bob_basis: Basis,
    rng: &mut R,
) -> PortArrivals {
    propagate_with(n_photons, alice_state, budget.transmittance(), budget.wrong_port_prob(), bob_basis, rng)
}

pub(crate) fn propagate_with<R: Rng + ?Sized>(
    n_photons: u8,
    alice_state: Polarization,
    transmittance: f64,
    wrong_port: f64,
    bob_basis: Basis,
    rng: &mut R,
) -> PortArrivals {
    let mut out = PortArrivals::default();
    for _ in 0..n_photons {
        if transmittance < 1.0 && rng.random::<f64>() >= transmittance {
            continue;
        }
        let bit = if bob_basis == alice_state.basis() {
            let flip = wrong_port > 0.0 && rng.random::<f64>() < wrong_port;
            alice_state.bit() ^ flip
        } else {
            rng.random::<bool>()
        };
        out.counts[usize::from(detector_id(bob_basis, bit))] += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_sigma_ps: f64,
    /// 0 disables dead time.
    pub dead_time_ns: f64,
    pub count: usize,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter(format!("detector.efficiency must lie in [0, 1], got {}", self.efficiency)));
        }
        for (name, v) in [
            ("detector.dark_rate_hz", self.dark_rate_hz),
            ("detector.jitter_ps", self.jitter_sigma_ps),
            ("detector.dead_time_ns", self.dead_time_ns),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.count != 4 {
            return Err(Error::InvalidParameter(format!(
                "detector.count must be 4 for passive-basis BB84, got {}",
                self.count
            )));
        }
        Ok(())
    }
}

/// Software acceptance window `[offset_ps, offset_ps + width_ps]` relative
/// to the excitation pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub width_ps: f64,
    pub offset_ps: f64,
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_ps > 0.0) {
            return Err(Error::InvalidParameter(format!("gate.width_ps must be > 0, got {}", self.width_ps)));
        }
        if !self.offset_ps.is_finite() {
            return Err(Error::InvalidParameter("gate.offset_ps must be finite".into()));
        }
        Ok(())
    }

    pub fn contains(&self, t_ps: f64) -> bool {
        t_ps >= self.offset_ps && t_ps <= self.offset_ps + self.width_ps
    }

    pub fn center_ps(&self) -> f64 {
        self.offset_ps + 0.5 * self.width_ps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClickOrigin {
    Signal,
    Dark,
}

/// One detector event. `origin` is simulation truth and never leaves Bob's
/// side of the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickRecord {
    pub clock_index: u64,
    pub detector_id: u8,
    pub time_offset_ps: f64,
    pub in_gate: bool,
    pub origin: ClickOrigin,
}

impl ClickRecord {
    pub fn basis(&self) -> Basis {
        detector_port(self.detector_id).0
    }

    pub fn bit(&self) -> bool {
        detector_port(self.detector_id).1
    }
}

/// Bob's four SPADs with their random streams and dead-time state.
pub struct Detectors {
    params: DetectorParams,
    time_model: EmissionTimeModel,
    gate: GateParams,
    period_ps: f64,
    photon_rngs: Vec<StreamRng>,
    dark_rngs: Vec<StreamRng>,
    dark_gap: Option<Geometric>,
    next_dark: Vec<u64>,
    last_click_ps: Vec<Option<f64>>,
}

impl Detectors {
    /// `photon_rngs[k]` drives efficiency and timing on detector `k`,
    /// `dark_rngs[k]` its dark counts. `time_model` should carry the
    /// detector jitter.
    pub fn new(
        params: DetectorParams,
        time_model: EmissionTimeModel,
        gate: GateParams,
        clock_hz: f64,
        photon_rngs: Vec<StreamRng>,
        mut dark_rngs: Vec<StreamRng>,
    ) -> Result<Self> {
        params.validate()?;
        gate.validate()?;
        time_model.validate()?;
        if photon_rngs.len() != params.count || dark_rngs.len() != params.count {
            return Err(Error::InvalidParameter("one photon and one dark stream per detector".into()));
        }
        let period_ps = 1e12 / clock_hz;
        if gate.width_ps > period_ps {
            return Err(Error::InvalidParameter(format!(
                "gate width {} ps exceeds the clock period {period_ps} ps",
                gate.width_ps
            )));
        }
        let p_dark = params.dark_rate_hz / clock_hz;
        if p_dark > 1.0 {
            return Err(Error::InvalidParameter("dark rate exceeds the clock rate".into()));
        }
        let dark_gap = if p_dark > 0.0 {
            Some(Geometric::new(p_dark).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        } else {
            None
        };
        let next_dark = dark_rngs
            .iter_mut()
            .map(|rng| dark_gap.as_ref().map_or(u64::MAX, |g| g.sample(rng)))
            .collect();
        let count = params.count;
        Ok(Self {
            params,
            time_model,
            gate,
            period_ps,
            photon_rngs,
            dark_rngs,
            dark_gap,
            next_dark,
            last_click_ps: vec![None; count],
        })
    }

    /// Clicks produced in pulse `clock_index`. Must be called with
    /// non-decreasing clock indices; pulses may be skipped when there are
    /// no arrivals and no pending dark count (see [`Self::next_dark_pulse`]).
    pub fn detect(&mut self, arrivals: &PortArrivals, clock_index: u64) -> Vec<ClickRecord> {
        let mut clicks: Vec<ClickRecord> = Vec::new();
        for k in 0..self.params.count {
            let mut first: Option<(f64, ClickOrigin)> = None;
            let rng = &mut self.photon_rngs[k];
            for _ in 0..arrivals.counts[k] {
                if rng.random::<f64>() < self.params.efficiency {
                    let t = self.time_model.sample(rng);
                    if first.is_none_or(|(t0, _)| t < t0) {
                        first = Some((t, ClickOrigin::Signal));
                    }
                }
            }
            while self.next_dark[k] <= clock_index {
                let rng = &mut self.dark_rngs[k];
                let hit = self.next_dark[k] == clock_index;
                let gap = self.dark_gap.as_ref().map_or(u64::MAX, |g| g.sample(rng));
                self.next_dark[k] = self.next_dark[k].saturating_add(1).saturating_add(gap);
                if hit {
                    let t = self.gate.center_ps() + (rng.random::<f64>() - 0.5) * self.period_ps;
                    if first.is_none_or(|(t0, _)| t < t0) {
                        first = Some((t, ClickOrigin::Dark));
                    }
                }
            }
            if let Some((t, origin)) = first {
                if self.params.dead_time_ns > 0.0 {
                    let abs = clock_index as f64 * self.period_ps + t;
                    if let Some(last) = self.last_click_ps[k] {
                        if abs - last < self.params.dead_time_ns * 1e3 {
                            continue;
                        }
                    }
                    self.last_click_ps[k] = Some(abs);
                }
                clicks.push(ClickRecord {
                    clock_index,
                    detector_id: k as u8,
                    time_offset_ps: t,
                    in_gate: self.gate.contains(t),
                    origin,
                });
            }
        }
        clicks
    }

    /// Earliest pulse index holding a pending dark count.
    pub fn next_dark_pulse(&self) -> u64 {
        self.next_dark.iter().copied().min().unwrap_or(u64::MAX)
    }

    pub fn gate(&self) -> GateParams {
        self.gate
    }
}

/// Fraction of the (jitter-convolved) emission-time density inside the gate,
/// by piecewise adaptive quadrature.
pub fn gate_accept_fraction(time_model: &EmissionTimeModel, gate: &GateParams) -> Result<f64> {
    time_model.validate()?;
    if !(gate.width_ps > 0.0) {
        return Err(Error::InvalidParameter(format!("gate.width_ps must be > 0, got {}", gate.width_ps)));
    }
    let sigma = time_model.jitter_sigma_ps;
    let fast = time_model.primary_lifetime_ps;
    let slow = time_model.tail_lifetime_ps();
    let support_lo = if sigma > 0.0 { -40.0 * sigma } else { 0.0 };
    let support_hi = 64.0 * fast.max(if time_model.tail_fraction > 0.0 { slow } else { 0.0 }) + 40.0 * sigma;
    let lo = gate.offset_ps.max(support_lo);
    let hi = (gate.offset_ps + gate.width_ps).min(support_hi);
    if hi <= lo {
        return Ok(0.0);
    }

    let mut cuts = vec![lo, hi, 0.0];
    for k in [1.0, 2.0, 4.0, 8.0, 16.0] {
        cuts.extend([k * sigma, -k * sigma]);
    }
    for j in -3..=6 {
        cuts.push(fast * 2f64.powi(j));
    }
    if time_model.tail_fraction > 0.0 {
        for j in -12..=6 {
            cuts.push(slow * 2f64.powi(j));
        }
    }
    cuts.retain(|&c| c >= lo && c <= hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let density = |t: f64| time_model.density(t);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += numeric::integrate(&density, w[0], w[1], 1e-14)?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Gate start maximising [`gate_accept_fraction`] for a given width.
pub fn optimal_gate_offset(time_model: &EmissionTimeModel, width_ps: f64) -> Result<f64> {
    time_model.validate()?;
    let sigma = time_model.jitter_sigma_ps;
    if sigma == 0.0 {
        // monotone decreasing density: start on the emission peak
        return Ok(0.0);
    }
    let lo = -6.0 * sigma - width_ps;
    let hi = 3.0 * time_model.primary_lifetime_ps + 6.0 * sigma;
    let accept = |offset: f64| gate_accept_fraction(time_model, &GateParams { width_ps, offset_ps: offset }).unwrap_or(0.0);
    Ok(numeric::golden_max(accept, lo, hi, 1e-4))
}
