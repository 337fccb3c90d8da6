//! Parametric model of a sub-Poissonian pulsed photon source.
//!
//! Photon-number support is truncated at two photons per pulse. Under that
//! truncation the multi-photon mass is exactly `g2 * mu^2 / 2`, which is the
//! same quantity the GLLP rate uses as the eavesdropper's share.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use libm::erfc;

use crate::error::{Error, Result};

/// Source operating point. `emission_rate_hz` is measured in the collection
/// cone of the objective; every downstream plane is reached by applying
/// losses to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    pub clock_hz: f64,
    pub emission_rate_hz: f64,
    pub g2: f64,
    pub coupling_efficiency: f64,
    pub primary_lifetime_ps: f64,
    pub tail_fraction: f64,
    pub tail_lifetime_ns: f64,
}

impl SourceParams {
    /// Mean photon number per clock pulse at the collection cone.
    pub fn mu(&self) -> f64 {
        self.emission_rate_hz / self.clock_hz
    }

    pub fn validate(&self) -> Result<()> {
        positive("clock_hz", self.clock_hz)?;
        if !(self.emission_rate_hz >= 0.0 && self.emission_rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "source.emission_rate_hz must be >= 0, got {}",
                self.emission_rate_hz
            )));
        }
        if !(self.g2 >= 0.0 && self.g2.is_finite()) {
            return Err(Error::InvalidParameter(format!("source.g2 must be >= 0, got {}", self.g2)));
        }
        unit_interval("source.coupling_efficiency", self.coupling_efficiency)?;
        self.time_model(0.0).validate()?;
        pn_distribution(self.mu(), self.g2).map(|_| ())
    }

    pub fn photon_numbers(&self) -> Result<PhotonNumberDist> {
        pn_distribution(self.mu(), self.g2)
    }

    /// Emission-time model with the given instrument jitter folded in.
    pub fn time_model(&self, jitter_sigma_ps: f64) -> EmissionTimeModel {
        EmissionTimeModel {
            primary_lifetime_ps: self.primary_lifetime_ps,
            tail_fraction: self.tail_fraction,
            tail_lifetime_ns: self.tail_lifetime_ns,
            jitter_sigma_ps,
        }
    }
}

/// Probabilities of emitting 0, 1 or 2 photons in one pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonNumberDist {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Three-point photon-number distribution with mean `mu` and `g2(0) = g2`.
pub fn pn_distribution(mu: f64, g2: f64) -> Result<PhotonNumberDist> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be >= 0, got {mu}")));
    }
    if !(g2 >= 0.0 && g2.is_finite()) {
        return Err(Error::InvalidParameter(format!("g2 must be >= 0, got {g2}")));
    }
    let p2 = g2 * mu * mu / 2.0;
    let p1 = mu - 2.0 * p2;
    let p0 = 1.0 - p1 - p2;
    if p1 < 0.0 {
        return Err(Error::InfeasibleParameters(format!(
            "p1 = {p1} < 0: requires g2 * mu <= 1 (g2 = {g2}, mu = {mu})"
        )));
    }
    if p0 < 0.0 {
        return Err(Error::InfeasibleParameters(format!(
            "p0 = {p0} < 0: requires mu - g2 * mu^2 / 2 <= 1 (g2 = {g2}, mu = {mu})"
        )));
    }
    Ok(PhotonNumberDist { p0, p1, p2 })
}

impl PhotonNumberDist {
    pub fn mean(&self) -> f64 {
        self.p1 + 2.0 * self.p2
    }

    /// `<n(n-1)> / <n>^2`; `None` for the vacuum.
    pub fn g2(&self) -> Option<f64> {
        let mu = self.mean();
        (mu > 0.0).then(|| 2.0 * self.p2 / (mu * mu))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        let u: f64 = rng.random();
        if u < self.p0 {
            0
        } else if u < self.p0 + self.p1 {
            1
        } else {
            2
        }
    }
}

pub fn sample_photon_number<R: Rng + ?Sized>(dist: &PhotonNumberDist, rng: &mut R) -> u8 {
    dist.sample(rng)
}

/// Anything that can emit a photon number per pulse; lets the HBT simulator
/// run on both the truncated source and reference Poissonian light.
pub trait PhotonNumberSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32;
}

impl PhotonNumberSampler for PhotonNumberDist {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        u32::from(self.sample(rng))
    }
}

/// Poissonian (coherent, `g2 = 1`) light with mean `mu` per pulse.
#[derive(Debug, Clone, Copy)]
pub struct PoissonLight {
    dist: Option<Poisson<f64>>,
}

impl PoissonLight {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {mu}")));
        }
        let dist = if mu == 0.0 {
            None
        } else {
            Some(Poisson::new(mu).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        };
        Ok(Self { dist })
    }
}

impl PhotonNumberSampler for PoissonLight {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.dist.map_or(0, |d| d.sample(rng) as u32)
    }
}

/// Exactly one photon every pulse.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicSinglePhoton;

impl PhotonNumberSampler for DeterministicSinglePhoton {
    fn draw<R: Rng + ?Sized>(&self, _rng: &mut R) -> u32 {
        1
    }
}

/// Two-component exponential decay plus Gaussian instrument jitter. Times
/// are offsets in picoseconds from the excitation pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionTimeModel {
    pub primary_lifetime_ps: f64,
    pub tail_fraction: f64,
    pub tail_lifetime_ns: f64,
    pub jitter_sigma_ps: f64,
}

impl EmissionTimeModel {
    pub fn validate(&self) -> Result<()> {
        positive("source.primary_lifetime_ps", self.primary_lifetime_ps)?;
        positive("source.tail_lifetime_ns", self.tail_lifetime_ns)?;
        unit_interval("source.tail_fraction", self.tail_fraction)?;
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "jitter sigma must be >= 0 ps, got {}",
                self.jitter_sigma_ps
            )));
        }
        Ok(())
    }

    pub fn tail_lifetime_ps(&self) -> f64 {
        self.tail_lifetime_ns * 1e3
    }

    pub fn mean_ps(&self) -> f64 {
        (1.0 - self.tail_fraction) * self.primary_lifetime_ps + self.tail_fraction * self.tail_lifetime_ps()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let tau = if self.tail_fraction > 0.0 && rng.random::<f64>() < self.tail_fraction {
            self.tail_lifetime_ps()
        } else {
            self.primary_lifetime_ps
        };
        let t = Exp::new(1.0 / tau).expect("lifetime validated > 0").sample(rng);
        if self.jitter_sigma_ps > 0.0 {
            let jitter = Normal::new(0.0, self.jitter_sigma_ps).expect("sigma validated >= 0").sample(rng);
            t + jitter
        } else {
            t
        }
    }

    /// Probability density (per ps) of the jitter-convolved arrival time.
    pub fn density(&self, t_ps: f64) -> f64 {
        let fast = exp_gauss_density(t_ps, self.primary_lifetime_ps, self.jitter_sigma_ps);
        if self.tail_fraction == 0.0 {
            return fast;
        }
        let slow = exp_gauss_density(t_ps, self.tail_lifetime_ps(), self.jitter_sigma_ps);
        (1.0 - self.tail_fraction) * fast + self.tail_fraction * slow
    }
}

pub fn sample_emission_time<R: Rng + ?Sized>(model: &EmissionTimeModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

/// Density of `Exp(tau) + N(0, sigma^2)` at `t`.
fn exp_gauss_density(t: f64, tau: f64, sigma: f64) -> f64 {
    let lambda = 1.0 / tau;
    if sigma == 0.0 {
        return if t < 0.0 { 0.0 } else { lambda * (-lambda * t).exp() };
    }
    // lambda/2 * exp(lambda^2 sigma^2 / 2 - lambda t) * erfc(z), rewritten
    // through erfcx(z) = exp(z^2) erfc(z) where that form would overflow.
    let z = (lambda * sigma * sigma - t) / (std::f64::consts::SQRT_2 * sigma);
    if z < 0.0 {
        0.5 * lambda * (0.5 * lambda * lambda * sigma * sigma - lambda * t).exp() * erfc(z)
    } else {
        0.5 * lambda * (-(t * t) / (2.0 * sigma * sigma)).exp() * erfcx(z)
    }
}

/// Scaled complementary error function for `z >= 0`.
fn erfcx(z: f64) -> f64 {
    if z < 25.0 {
        (z * z).exp() * erfc(z)
    } else {
        let inv2 = 1.0 / (z * z);
        (1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2 - 1.875 * inv2 * inv2 * inv2) / (z * std::f64::consts::PI.sqrt())
    }
}

/// Pulsed HBT estimate of `g2(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Estimate {
    pub g2: f64,
    pub std_error: f64,
    /// Coincidences at zero lag.
    pub zero_lag: u64,
    /// Mean coincidences over the side peaks `1 <= |k| <= max_lag`.
    pub side_mean: f64,
}

/// `C(0) / mean(C(k), 1 <= |k| <= max_lag)` where `C(k)` counts pulses `i`
/// with a click in arm A at `i` and in arm B at `i + k`.
pub fn estimate_g2(click_a: &[bool], click_b: &[bool], max_lag: usize) -> Result<G2Estimate> {
    if click_a.is_empty() || click_b.is_empty() {
        return Err(Error::EmptySample("click stream"));
    }
    if click_a.len() != click_b.len() {
        return Err(Error::InvalidParameter(format!(
            "click streams differ in length ({} vs {})",
            click_a.len(),
            click_b.len()
        )));
    }
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be >= 1".into()));
    }
    let idx = |s: &[bool]| s.iter().enumerate().filter_map(|(i, &c)| c.then_some(i as i64)).collect::<Vec<_>>();
    let (a, b) = (idx(click_a), idx(click_b));
    let lag = max_lag as i64;
    let mut zero = 0u64;
    let mut side = 0u64;
    for &i in &a {
        let start = b.partition_point(|&j| j < i - lag);
        for &j in b[start..].iter().take_while(|&&j| j <= i + lag) {
            if j == i {
                zero += 1;
            } else {
                side += 1;
            }
        }
    }
    if side == 0 {
        return Err(Error::ZeroDenominator("no side-peak coincidences"));
    }
    let side_mean = side as f64 / (2 * max_lag) as f64;
    let g2 = zero as f64 / side_mean;
    let std_error = if zero == 0 {
        1.0 / side_mean
    } else {
        g2 * (1.0 / zero as f64 + 1.0 / side as f64).sqrt()
    };
    Ok(G2Estimate { g2, std_error, zero_lag: zero, side_mean })
}

/// Pulsed HBT: every photon takes either arm of a 50/50 splitter and is
/// detected there with `arm_efficiency`. Detectors do not resolve photon
/// number.
pub fn simulate_hbt<S, R>(source: &S, n_pulses: usize, arm_efficiency: f64, rng: &mut R) -> (Vec<bool>, Vec<bool>)
where
    S: PhotonNumberSampler,
    R: Rng + ?Sized,
{
    let mut a = vec![false; n_pulses];
    let mut b = vec![false; n_pulses];
    for i in 0..n_pulses {
        for _ in 0..source.draw(rng) {
            let to_a = rng.random::<bool>();
            if arm_efficiency >= 1.0 || rng.random::<f64>() < arm_efficiency {
                if to_a {
                    a[i] = true;
                } else {
                    b[i] = true;
                }
            }
        }
    }
    (a, b)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}
