//! Monte Carlo sessions against the closed-form QBER and sifted-rate model
//! for every bundled scenario, at a sample size well beyond the minimum.

use spqkd::protocol::session::simulate_link;
use spqkd::protocol::{run_session, sift, TransportKind};
use spqkd::protocol::bb84::tally_with_truth;
use spqkd::rates::{analytic_qber, analytic_sifted_rate, LinkModel};
use spqkd::Scenario;

#[test]
fn monte_carlo_matches_analytic_model() {
    let pulses = 50_000_000u64;
    for s in Scenario::bundled_all() {
        let run = simulate_link(&s, pulses, 41).unwrap();
        let t = tally_with_truth(&run.table, &run.clicks);
        let sifted = t.correct + t.incorrect;
        let m = LinkModel::new(&s).unwrap();
        let p_sift = 0.5 * (m.p_signal() + LinkModel::p_dark(&s));
        let expected = pulses as f64 * p_sift;
        let sd = (pulses as f64 * p_sift * (1.0 - p_sift)).sqrt();
        assert!(
            (sifted as f64 - expected).abs() <= 3.0 * sd,
            "{}: {sifted} sifted vs {expected} +- {sd}",
            s.label
        );
        let rate_mc = sifted as f64 * s.source.clock_hz / pulses as f64;
        let rate = analytic_sifted_rate(&s).unwrap();
        assert!((rate_mc - rate).abs() <= 3.0 * sd * s.source.clock_hz / pulses as f64);

        let q = analytic_qber(&s).unwrap();
        let e_sd = (sifted as f64 * q * (1.0 - q)).sqrt();
        assert!(
            (t.incorrect as f64 - sifted as f64 * q).abs() <= 3.0 * e_sd.max(1.0),
            "{}: {} errors in {sifted} vs Q = {q}",
            s.label,
            t.incorrect
        );
        // the pure sifting function agrees with the truth tally
        let (a, b) = sift(&run.table, &run.clicks);
        assert_eq!(a.len() as u64, sifted);
        assert_eq!(a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count() as u64, t.incorrect);
    }
}

#[test]
fn session_counts_are_self_consistent() {
    let s = Scenario::bundled("strauf-82MHz-3dB").unwrap();
    let r = run_session(&s, 20_000_000, TransportKind::InProcess, 1).unwrap();
    assert_eq!(r.qber, r.qber_compared);
    assert!(r.photons_at_bob <= r.photons_coupled && r.photons_coupled <= r.photons_emitted);
    assert!(r.clicks_in_gate <= r.clicks);
    assert!(r.sifted_bits <= r.detections);
    let rec = r.reconciliation.as_ref().expect("reconciled");
    assert_eq!(rec.leaked_bits, rec.alice_leaked_bits);
    assert!(!rec.residual_error);
    assert_eq!(r.bob_corrected, r.alice_sifted.bits);
    assert!(r.final_key_len() > 0 && r.keys_match());
}

#[test]
fn residual_errors_are_caught_and_abort() {
    // short sifted keys leave CASCADE only a few blocks per pass, so an even
    // number of errors occasionally survives; the digest must flag every one
    let s = Scenario::bundled("strauf-82MHz-3dB").unwrap();
    let mut caught = 0;
    for seed in 0..20 {
        let r = run_session(&s, 20_000_000, TransportKind::InProcess, seed).unwrap();
        let rec = r.reconciliation.as_ref().expect("reconciled");
        if rec.residual_error {
            caught += 1;
            assert_ne!(r.bob_corrected, r.alice_sifted.bits);
            assert!(r.aborted.is_some() && r.final_key_len() == 0 && r.bob_final.is_empty());
        } else {
            assert_eq!(r.bob_corrected, r.alice_sifted.bits);
            assert!(r.keys_match() && r.final_key_len() > 0);
        }
    }
    assert!(caught > 0, "this seed range is known to contain reconciliation failures");
}
