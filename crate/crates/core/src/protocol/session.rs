//! End-to-end run: pulse generation through the optical link and detectors,
//! then sifting, reconciliation and privacy amplification between two
//! endpoints that talk only through a [`Transport`].

use rand::Rng;
use sha2::{Digest, Sha256};

use super::bb84::{
    bob_choose_basis, compare_keys, single_click_detections, tally_with_truth, Detection, PulsePreparer, PulseTable,
    SiftedKey,
};
use super::cascade::{alice_reconcile, bob_reconcile, CascadeConfig, DIGEST_BITS};
use super::message::ClassicalMessage;
use super::privacy::privacy_amplify;
use super::transport::{Transport, TransportKind};
use crate::error::{Error, Result};
use crate::optics::{propagate_with, ClickOrigin, ClickRecord, Detectors, PortArrivals};
use crate::rates::{gllp_factor, DeltaPlane};
use crate::rng::{Substreams, ALICE_BASES, ALICE_BITS, BOB_BASES, CASCADE_SHUFFLE, CHANNEL, PRIVACY, SOURCE, VERIFY};
use crate::scenario::Scenario;

/// Bounds applied to the QBER estimate handed to CASCADE.
const Q_EST_RANGE: (f64, f64) = (0.001, 0.24);
/// Shortest sifted key worth reconciling.
const MIN_RECONCILE_BITS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationSummary {
    pub q_est: f64,
    pub passes: usize,
    pub leaked_bits: u64,
    pub alice_leaked_bits: u64,
    pub digest_bits: u64,
    pub corrections: u64,
    pub f_measured: f64,
    pub residual_error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub label: String,
    pub seed: u64,
    pub pulses: u64,
    pub photons_emitted: u64,
    pub photons_coupled: u64,
    pub photons_at_bob: u64,
    pub clicks: u64,
    pub clicks_in_gate: u64,
    pub dark_clicks_in_gate: u64,
    pub multi_click_pulses: u64,
    pub detections: u64,
    pub sifted_bits: u64,
    pub n_correct: u64,
    pub n_incorrect: u64,
    pub n_incorrect_signal: u64,
    pub n_incorrect_dark: u64,
    /// QBER from simulation truth tags.
    pub qber: Option<f64>,
    /// QBER from comparing the two sifted keys.
    pub qber_compared: Option<f64>,
    pub sifted_rate_hz: f64,
    pub delta: f64,
    pub reconciliation: Option<ReconciliationSummary>,
    pub aborted: Option<String>,
    pub alice_sifted: SiftedKey,
    pub bob_sifted: SiftedKey,
    pub bob_corrected: Vec<bool>,
    pub alice_final: Vec<bool>,
    pub bob_final: Vec<bool>,
}

impl SessionReport {
    pub fn final_key_len(&self) -> usize {
        self.alice_final.len()
    }

    pub fn keys_match(&self) -> bool {
        self.alice_final == self.bob_final
    }
}

/// Hex SHA-256 of a bit string packed MSB-first.
pub fn key_digest(bits: &[bool]) -> String {
    let hash = Sha256::digest(super::message::pack_bits(bits));
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parameters both endpoints agree on before the classical exchange.
#[derive(Debug, Clone, Copy)]
struct PublicParams {
    q_est: Option<f64>,
    threshold: f64,
    delta: f64,
    f_p: f64,
}

impl PublicParams {
    fn reconcile_config(&self, n: usize) -> Option<(f64, CascadeConfig)> {
        let q = self.q_est?;
        (n >= MIN_RECONCILE_BITS && q < self.threshold).then(|| {
            let q = q.clamp(Q_EST_RANGE.0, Q_EST_RANGE.1);
            (q, CascadeConfig::for_qber(n, q))
        })
    }

    /// Final key length: the GLLP secure fraction of the sifted key, less the
    /// verification digest, never more than what the disclosures leave.
    fn target_len(&self, n: usize, leaked: u64) -> usize {
        let q = self.q_est.unwrap_or(0.5);
        let fraction = gllp_factor(q, self.delta, self.f_p).unwrap_or(0.0).max(0.0);
        let by_rate = ((fraction * n as f64).floor() as u64).saturating_sub(DIGEST_BITS);
        by_rate.min((n as u64).saturating_sub(leaked + DIGEST_BITS)) as usize
    }
}

struct EndpointOutcome {
    sifted: SiftedKey,
    corrected: Vec<bool>,
    final_key: Vec<bool>,
    leaked: u64,
    recon: Option<super::cascade::ReconciliationResult>,
}

fn alice_endpoint<T: Transport + ?Sized>(
    t: &mut T,
    table: &PulseTable,
    params: PublicParams,
    streams: &Substreams,
) -> Result<EndpointOutcome> {
    let (clocks, diagonal) = t.recv()?.parse_sift_bases()?;
    let mut keep = Vec::with_capacity(clocks.len());
    let mut sifted = SiftedKey::default();
    for (&c, &d) in clocks.iter().zip(&diagonal) {
        let p = table
            .get(c)
            .ok_or_else(|| Error::Protocol(format!("basis announced for unknown clock index {c}")))?;
        let k = p.basis.as_bit() == d;
        keep.push(k);
        if k {
            sifted.bits.push(p.bit);
            sifted.clock_indices.push(c);
        }
    }
    t.send(&ClassicalMessage::sift_keep(&keep))?;
    let mut out =
        EndpointOutcome { corrected: sifted.bits.clone(), sifted, final_key: Vec::new(), leaked: 0, recon: None };
    if let Some((_, config)) = params.reconcile_config(out.sifted.len()) {
        let r = alice_reconcile(t, &out.sifted.bits, config)?;
        out.leaked = r.leaked_bits;
        let target = params.target_len(out.sifted.len(), r.leaked_bits);
        if !r.residual_error && target > 0 {
            let seed: [u8; 16] = streams.stream(PRIVACY).random();
            t.send(&ClassicalMessage::pa_seed(seed))?;
            out.final_key = privacy_amplify(&out.sifted.bits, r.leaked_bits + DIGEST_BITS, target, seed)?;
        }
    }
    t.recv()?.parse_done()?;
    Ok(out)
}

fn bob_endpoint<T: Transport + ?Sized>(
    t: &mut T,
    detections: &[Detection],
    params: PublicParams,
    streams: &Substreams,
) -> Result<EndpointOutcome> {
    let clocks: Vec<u64> = detections.iter().map(|d| d.clock_index).collect();
    let diagonal: Vec<bool> = detections.iter().map(|d| d.basis.as_bit()).collect();
    t.send(&ClassicalMessage::sift_bases(&clocks, &diagonal))?;
    let keep = t.recv()?.parse_sift_keep(detections.len())?;
    let mut sifted = SiftedKey::default();
    for (d, _) in detections.iter().zip(&keep).filter(|(_, &k)| k) {
        sifted.bits.push(d.bit);
        sifted.clock_indices.push(d.clock_index);
    }
    let mut out =
        EndpointOutcome { corrected: sifted.bits.clone(), sifted, final_key: Vec::new(), leaked: 0, recon: None };
    if let Some((q, config)) = params.reconcile_config(out.sifted.len()) {
        let mut shuffle = streams.stream(CASCADE_SHUFFLE);
        let mut verify = streams.stream(VERIFY);
        let r = bob_reconcile(t, &out.sifted.bits, q, config, &mut shuffle, &mut verify)?;
        out.leaked = r.leaked_bits;
        out.corrected = r.corrected_key.clone();
        let target = params.target_len(out.sifted.len(), r.leaked_bits);
        if !r.residual_error && target > 0 {
            let seed = t.recv()?.parse_pa_seed()?;
            out.final_key = privacy_amplify(&out.corrected, r.leaked_bits + DIGEST_BITS, target, seed)?;
        }
        out.recon = Some(r);
    }
    t.send(&ClassicalMessage::done(0))?;
    Ok(out)
}

/// Pulse-level record of one simulated transmission.
pub struct PhysicalRun {
    pub table: PulseTable,
    pub clicks: Vec<ClickRecord>,
    pub photons_emitted: u64,
    pub photons_coupled: u64,
    pub photons_at_bob: u64,
}

/// Drives `n_pulses` through source, channel and detectors. Every subsystem
/// draws from its own named substream of `seed`.
pub fn simulate_link(s: &Scenario, n_pulses: u64, seed: u64) -> Result<PhysicalRun> {
    s.validate()?;
    let streams = Substreams::new(seed);
    let (mut bits, mut bases) = (streams.stream(ALICE_BITS), streams.stream(ALICE_BASES));
    let mut bob = streams.stream(BOB_BASES);
    let mut source = streams.stream(SOURCE);
    let mut channel = streams.stream(CHANNEL);
    let count = s.detector.count;
    let mut detectors = Detectors::new(
        s.detector.clone(),
        s.time_model(),
        s.gate()?,
        s.source.clock_hz,
        (0..count).map(|k| streams.indexed("detector", k)).collect(),
        (0..count).map(|k| streams.indexed("dark", k)).collect(),
    )?;
    let dist = s.source.photon_numbers()?;
    let coupling = s.source.coupling_efficiency;
    let transmittance = s.link.transmittance();
    let wrong_port = s.link.wrong_port_prob();

    let capacity = usize::try_from(n_pulses).map_err(|_| Error::InvalidParameter("too many pulses".into()))?;
    let mut run = PhysicalRun {
        table: PulseTable::with_capacity(capacity),
        clicks: Vec::new(),
        photons_emitted: 0,
        photons_coupled: 0,
        photons_at_bob: 0,
    };
    for pulse in PulsePreparer::new(&mut bits, &mut bases).take(capacity) {
        let i = pulse.clock_index;
        run.table.push(pulse);
        let emitted = dist.sample(&mut source);
        let coupled = (0..emitted).filter(|_| coupling >= 1.0 || source.random::<f64>() < coupling).count() as u8;
        let bob_basis = bob_choose_basis(i, &mut bob);
        let arrivals = if coupled > 0 {
            propagate_with(coupled, pulse.state(), transmittance, wrong_port, bob_basis, &mut channel)
        } else {
            PortArrivals::default()
        };
        run.photons_emitted += u64::from(emitted);
        run.photons_coupled += u64::from(coupled);
        run.photons_at_bob += u64::from(arrivals.total());
        if !arrivals.is_empty() || detectors.next_dark_pulse() <= i {
            run.clicks.extend(detectors.detect(&arrivals, i));
        }
    }
    Ok(run)
}

/// Full session over a fresh transport pair of the given kind.
pub fn run_session(s: &Scenario, n_pulses: u64, transport: TransportKind, seed: u64) -> Result<SessionReport> {
    if n_pulses == 0 {
        return Err(Error::InvalidParameter("n_pulses must be > 0".into()));
    }
    let run = simulate_link(s, n_pulses, seed)?;
    let tally = tally_with_truth(&run.table, &run.clicks);
    let (detections, multi) = single_click_detections(&run.clicks);
    let truth_q = super::bb84::qber(tally.correct, tally.incorrect).ok();
    let delta = DeltaPlane::Source.delta(s);
    let params = PublicParams { q_est: truth_q, threshold: s.analysis.qber_threshold, delta, f_p: s.analysis.f_p };

    let streams = Substreams::new(seed);
    let (mut ta, mut tb) = transport.pair()?;
    let (alice, bob) = std::thread::scope(|scope| {
        let table = &run.table;
        let streams_a = &streams;
        let alice = scope.spawn(move || alice_endpoint(&mut ta, table, params, streams_a));
        let bob = bob_endpoint(&mut tb, &detections, params, &streams);
        drop(tb);
        let alice = alice.join().unwrap_or_else(|_| Err(Error::Channel("alice endpoint panicked".into())));
        (alice, bob)
    });
    let (alice, bob) = match (alice, bob) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(Error::Channel(_)), Err(e)) | (Err(e), _) | (Ok(_), Err(e)) => return Err(e),
    };
    if alice.sifted.clock_indices != bob.sifted.clock_indices {
        return Err(Error::Protocol("sifted keys are misaligned".into()));
    }
    let (_, wrong) = compare_keys(&alice.sifted, &bob.sifted);
    let qber_compared = super::bb84::qber(alice.sifted.len() as u64 - wrong, wrong).ok();

    let aborted = match truth_q {
        None => Some("no sifted bits".to_string()),
        Some(q) if q >= s.analysis.qber_threshold => Some(format!("QBER {q} at or above threshold")),
        Some(_) if alice.sifted.len() < MIN_RECONCILE_BITS => Some("sifted key too short to reconcile".to_string()),
        Some(_) => match &bob.recon {
            Some(r) if r.residual_error => Some("verification digest mismatch after reconciliation".to_string()),
            _ if alice.final_key.is_empty() => Some("no secure key left after privacy amplification".to_string()),
            _ => None,
        },
    };
    let reconciliation = bob.recon.as_ref().map(|r| ReconciliationSummary {
        q_est: params.reconcile_config(alice.sifted.len()).map_or(0.0, |(q, _)| q),
        passes: r.passes,
        leaked_bits: r.leaked_bits,
        alice_leaked_bits: alice.leaked,
        digest_bits: r.digest_bits,
        corrections: r.corrections,
        f_measured: r.f_measured,
        residual_error: r.residual_error,
    });
    let gated: Vec<&ClickRecord> = run.clicks.iter().filter(|c| c.in_gate).collect();
    Ok(SessionReport {
        label: s.label.clone(),
        seed,
        pulses: n_pulses,
        photons_emitted: run.photons_emitted,
        photons_coupled: run.photons_coupled,
        photons_at_bob: run.photons_at_bob,
        clicks: run.clicks.len() as u64,
        clicks_in_gate: gated.len() as u64,
        dark_clicks_in_gate: gated.iter().filter(|c| c.origin == ClickOrigin::Dark).count() as u64,
        multi_click_pulses: multi as u64,
        detections: detections.len() as u64,
        sifted_bits: alice.sifted.len() as u64,
        n_correct: tally.correct,
        n_incorrect: tally.incorrect,
        n_incorrect_signal: tally.incorrect_signal,
        n_incorrect_dark: tally.incorrect_dark,
        qber: truth_q,
        qber_compared,
        sifted_rate_hz: alice.sifted.len() as f64 * s.source.clock_hz / n_pulses as f64,
        delta,
        reconciliation,
        aborted,
        alice_sifted: alice.sifted,
        bob_sifted: bob.sifted,
        bob_corrected: bob.corrected,
        alice_final: alice.final_key,
        bob_final: bob.final_key,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::LinkBudget;

    fn noiseless() -> Scenario {
        let mut s = Scenario::bundled("paper-0km-5uW").unwrap();
        s.link = LinkBudget::lossless();
        s.detector.dark_rate_hz = 0.0;
        s.source.coupling_efficiency = 1.0;
        s.detector.efficiency = 1.0;
        s.detector.jitter_sigma_ps = 0.0;
        s.source.tail_fraction = 0.0;
        s.gate_width_ps = 2e4;
        s.gate_offset = crate::scenario::GateOffset::Fixed(0.0);
        s
    }

    /// Bundled operating point without the transmitter attenuation, so a
    /// few million pulses yield a usable sifted key.
    fn bright(name: &str) -> Scenario {
        let mut s = Scenario::bundled(name).unwrap();
        s.link.alice_loss_db = 0.0;
        s
    }

    #[test]
    fn noiseless_chain_shares_the_key() {
        let r = run_session(&noiseless(), 10_000, TransportKind::InProcess, 3).unwrap();
        assert_eq!(r.qber, Some(0.0));
        assert_eq!(r.qber_compared, Some(0.0));
        assert_eq!(r.alice_sifted.bits, r.bob_sifted.bits);
        assert!(r.sifted_bits > 300);
        let rec = r.reconciliation.as_ref().unwrap();
        assert_eq!(rec.corrections, 0);
        assert!(!rec.residual_error);
        assert!(r.final_key_len() > 0 && r.keys_match());
        assert_eq!(r.aborted, None);
    }

    #[test]
    fn deterministic_across_runs_and_transports() {
        let s = bright("paper-0km-5uW");
        let a = run_session(&s, 400_000, TransportKind::InProcess, 17).unwrap();
        let b = run_session(&s, 400_000, TransportKind::InProcess, 17).unwrap();
        let c = run_session(&s, 400_000, TransportKind::ByteStream, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let d = run_session(&s, 400_000, TransportKind::InProcess, 18).unwrap();
        assert_ne!(a.alice_sifted, d.alice_sifted);
    }

    #[test]
    fn truth_and_comparison_qber_agree() {
        let s = bright("paper-2km-5uW");
        let r = run_session(&s, 4_000_000, TransportKind::InProcess, 5).unwrap();
        assert!(r.sifted_bits > 100);
        assert_eq!(r.qber, r.qber_compared);
        assert_eq!(r.n_correct + r.n_incorrect, r.sifted_bits);
        assert_eq!(r.n_incorrect, r.n_incorrect_signal + r.n_incorrect_dark);
        let rec = r.reconciliation.as_ref().unwrap();
        assert_eq!(rec.leaked_bits, rec.alice_leaked_bits);
        if !rec.residual_error {
            assert_eq!(r.bob_corrected, r.alice_sifted.bits);
            assert!(r.keys_match());
        }
    }

    #[test]
    fn high_qber_aborts_before_reconciliation() {
        let mut s = bright("paper-0km-5uW");
        s.link.misalignment_error_prob = 0.2;
        let r = run_session(&s, 1_000_000, TransportKind::InProcess, 5).unwrap();
        assert!(r.qber.unwrap() > 0.11);
        assert!(r.reconciliation.is_none());
        assert!(r.aborted.is_some());
        assert_eq!(r.final_key_len(), 0);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            key_digest(&[]),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
