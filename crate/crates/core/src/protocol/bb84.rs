use rand::Rng;

use crate::error::{Error, Result};
use crate::optics::{Basis, ClickOrigin, ClickRecord, Polarization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreparedPulse {
    pub clock_index: u64,
    pub bit: bool,
    pub basis: Basis,
}

impl PreparedPulse {
    pub fn state(&self) -> Polarization {
        Polarization::encode(self.bit, self.basis)
    }
}

/// Alice's transmitter: i.i.d. uniform bits and bases, drawn from separate
/// streams so the two sequences are independent of each other.
pub struct PulsePreparer<'a, R: Rng + ?Sized> {
    bits: &'a mut R,
    bases: &'a mut R,
    next: u64,
}

impl<'a, R: Rng + ?Sized> PulsePreparer<'a, R> {
    pub fn new(bits: &'a mut R, bases: &'a mut R) -> Self {
        Self { bits, bases, next: 0 }
    }
}

impl<R: Rng + ?Sized> Iterator for PulsePreparer<'_, R> {
    type Item = PreparedPulse;

    fn next(&mut self) -> Option<PreparedPulse> {
        let pulse = PreparedPulse {
            clock_index: self.next,
            bit: self.bits.random(),
            basis: Basis::from_bit(self.bases.random()),
        };
        self.next += 1;
        Some(pulse)
    }
}

pub fn alice_prepare<R: Rng + ?Sized>(n_pulses: usize, bits: &mut R, bases: &mut R) -> Result<Vec<PreparedPulse>> {
    if n_pulses == 0 {
        return Err(Error::InvalidParameter("n_pulses must be > 0".into()));
    }
    Ok(PulsePreparer::new(bits, bases).take(n_pulses).collect())
}

/// Passive 50/50 basis choice for one pulse.
pub fn bob_choose_basis<R: Rng + ?Sized>(_clock_index: u64, rng: &mut R) -> Basis {
    Basis::from_bit(rng.random())
}

/// Alice's pulses stored one byte each, indexed by clock.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PulseTable {
    packed: Vec<u8>,
}

impl PulseTable {
    pub fn with_capacity(n: usize) -> Self {
        Self { packed: Vec::with_capacity(n) }
    }

    /// Pulses must be pushed in clock order starting from 0.
    pub fn push(&mut self, pulse: PreparedPulse) {
        debug_assert_eq!(pulse.clock_index, self.packed.len() as u64);
        self.packed.push(u8::from(pulse.bit) | (u8::from(pulse.basis.as_bit()) << 1));
    }

    pub fn len(&self) -> usize {
        self.packed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packed.is_empty()
    }

    pub fn get(&self, clock_index: u64) -> Option<PreparedPulse> {
        let b = *self.packed.get(usize::try_from(clock_index).ok()?)?;
        Some(PreparedPulse { clock_index, bit: b & 1 == 1, basis: Basis::from_bit(b & 2 == 2) })
    }
}

impl FromIterator<PreparedPulse> for PulseTable {
    fn from_iter<I: IntoIterator<Item = PreparedPulse>>(iter: I) -> Self {
        let mut t = PulseTable::default();
        for p in iter {
            t.push(p);
        }
        t
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedKey {
    pub bits: Vec<bool>,
    pub clock_indices: Vec<u64>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Bob's view of a pulse that produced exactly one in-gate click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub clock_index: u64,
    pub basis: Basis,
    pub bit: bool,
}

/// Gated clicks reduced to single-click pulses. Pulses where two or more
/// detectors fired in-gate are dropped; the second value counts them.
pub fn single_click_detections(clicks: &[ClickRecord]) -> (Vec<Detection>, usize) {
    let mut out = Vec::new();
    let mut multi = 0;
    let gated: Vec<&ClickRecord> = clicks.iter().filter(|c| c.in_gate).collect();
    let mut i = 0;
    while i < gated.len() {
        let clock = gated[i].clock_index;
        let mut j = i + 1;
        while j < gated.len() && gated[j].clock_index == clock {
            j += 1;
        }
        if j - i == 1 {
            out.push(Detection { clock_index: clock, basis: gated[i].basis(), bit: gated[i].bit() });
        } else {
            multi += 1;
        }
        i = j;
    }
    (out, multi)
}

/// Sifts gated clicks against Alice's record: keeps pulses with exactly one
/// in-gate click whose basis matches Alice's. Clicks must be sorted by clock
/// index. Returns `(alice_key, bob_key)`.
pub fn sift(alice: &PulseTable, bob_clicks: &[ClickRecord]) -> (SiftedKey, SiftedKey) {
    let (detections, _) = single_click_detections(bob_clicks);
    sift_detections(alice, &detections)
}

pub(crate) fn sift_detections(alice: &PulseTable, detections: &[Detection]) -> (SiftedKey, SiftedKey) {
    let mut a = SiftedKey::default();
    let mut b = SiftedKey::default();
    for d in detections {
        let Some(p) = alice.get(d.clock_index) else { continue };
        if p.basis == d.basis {
            a.bits.push(p.bit);
            a.clock_indices.push(d.clock_index);
            b.bits.push(d.bit);
            b.clock_indices.push(d.clock_index);
        }
    }
    (a, b)
}

/// `N_I / (N_C + N_I)`.
pub fn qber(n_correct: u64, n_incorrect: u64) -> Result<f64> {
    let total = n_correct + n_incorrect;
    if total == 0 {
        return Err(Error::EmptySample("no sifted bits"));
    }
    Ok(n_incorrect as f64 / total as f64)
}

/// Error tally over sifted clicks using simulation truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorTally {
    pub correct: u64,
    pub incorrect: u64,
    pub incorrect_signal: u64,
    pub incorrect_dark: u64,
    pub dark_kept: u64,
}

pub fn tally_with_truth(alice: &PulseTable, bob_clicks: &[ClickRecord]) -> ErrorTally {
    let mut t = ErrorTally::default();
    let gated: Vec<&ClickRecord> = bob_clicks.iter().filter(|c| c.in_gate).collect();
    let mut i = 0;
    while i < gated.len() {
        let clock = gated[i].clock_index;
        let mut j = i + 1;
        while j < gated.len() && gated[j].clock_index == clock {
            j += 1;
        }
        if j - i == 1 {
            let c = gated[i];
            if let Some(p) = alice.get(clock) {
                if p.basis == c.basis() {
                    let dark = c.origin == ClickOrigin::Dark;
                    t.dark_kept += u64::from(dark);
                    if p.bit == c.bit() {
                        t.correct += 1;
                    } else {
                        t.incorrect += 1;
                        if dark {
                            t.incorrect_dark += 1;
                        } else {
                            t.incorrect_signal += 1;
                        }
                    }
                }
            }
        }
        i = j;
    }
    t
}

/// Counts disagreeing positions of two equal-length keys.
pub fn compare_keys(a: &SiftedKey, b: &SiftedKey) -> (u64, u64) {
    let wrong = a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count() as u64;
    (a.len() as u64 - wrong, wrong)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{detector_id, ClickOrigin};
    use crate::rng::{Substreams, ALICE_BASES, ALICE_BITS, BOB_BASES};

    fn click(clock: u64, basis: Basis, bit: bool) -> ClickRecord {
        ClickRecord {
            clock_index: clock,
            detector_id: detector_id(basis, bit),
            time_offset_ps: 100.0,
            in_gate: true,
            origin: ClickOrigin::Signal,
        }
    }

    #[test]
    fn prepare_is_reproducible() {
        let s = Substreams::new(99);
        let run = || {
            let (mut a, mut b) = (s.stream(ALICE_BITS), s.stream(ALICE_BASES));
            alice_prepare(8, &mut a, &mut b).unwrap()
        };
        let first = run();
        assert_eq!(first, run());
        assert_eq!(first.iter().map(|p| p.clock_index).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        let (mut a, mut b) = (s.stream(ALICE_BITS), s.stream(ALICE_BASES));
        assert!(alice_prepare(0, &mut a, &mut b).is_err());
    }

    #[test]
    fn state_mapping() {
        let p = PreparedPulse { clock_index: 0, bit: true, basis: Basis::Diagonal };
        assert_eq!(p.state(), Polarization::A);
    }

    #[test]
    fn basis_frequencies_and_independence() {
        let s = Substreams::new(5);
        let (mut a, mut b) = (s.stream(ALICE_BITS), s.stream(ALICE_BASES));
        let mut bob = s.stream(BOB_BASES);
        let n = 1_000_000u64;
        let pulses = alice_prepare(n as usize, &mut a, &mut b).unwrap();
        let rect = pulses.iter().filter(|p| p.basis == Basis::Rectilinear).count() as f64;
        let three_sigma = 3.0 * (n as f64 * 0.25).sqrt();
        assert!((rect - n as f64 / 2.0).abs() < three_sigma);

        let bob_bases: Vec<Basis> = (0..n).map(|i| bob_choose_basis(i, &mut bob)).collect();
        let bob_rect = bob_bases.iter().filter(|&&b| b == Basis::Rectilinear).count() as f64;
        assert!((bob_rect - n as f64 / 2.0).abs() < three_sigma);
        // agreement of two independent fair coins is Binomial(n, 1/2)
        let agree = pulses.iter().zip(&bob_bases).filter(|(p, b)| p.basis == **b).count() as f64;
        assert!((agree - n as f64 / 2.0).abs() < three_sigma);

        let s2 = Substreams::new(5);
        let mut bob2 = s2.stream(BOB_BASES);
        assert!((0..64).all(|i| bob_choose_basis(i, &mut bob2) == bob_bases[i as usize]));
    }

    #[test]
    fn sift_edge_cases() {
        let table: PulseTable = (0..4)
            .map(|i| PreparedPulse { clock_index: i, bit: i % 2 == 1, basis: Basis::Rectilinear })
            .collect();
        let (a, b) = sift(&table, &[]);
        assert!(a.is_empty() && b.is_empty());

        let clicks: Vec<_> = (0..4).map(|i| click(i, Basis::Rectilinear, i % 2 == 1)).collect();
        let (a, b) = sift(&table, &clicks);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);

        // mismatched basis, a double click and an out-of-gate click are all dropped
        let mut clicks = vec![click(0, Basis::Diagonal, false), click(1, Basis::Rectilinear, true), click(1, Basis::Rectilinear, false)];
        clicks.push(ClickRecord { in_gate: false, ..click(2, Basis::Rectilinear, false) });
        clicks.push(click(3, Basis::Rectilinear, true));
        let (a, b) = sift(&table, &clicks);
        assert_eq!(a.clock_indices, vec![3]);
        assert_eq!(a.clock_indices, b.clock_indices);
        let (_, multi) = single_click_detections(&clicks);
        assert_eq!(multi, 1);
    }

    #[test]
    fn sifting_halves_detections() {
        let s = Substreams::new(6);
        let (mut a, mut b) = (s.stream(ALICE_BITS), s.stream(ALICE_BASES));
        let mut bob = s.stream(BOB_BASES);
        let n = 1_000_000u64;
        let table: PulseTable = PulsePreparer::new(&mut a, &mut b).take(n as usize).collect();
        let clicks: Vec<_> = (0..n).map(|i| click(i, bob_choose_basis(i, &mut bob), false)).collect();
        let (ka, kb) = sift(&table, &clicks);
        assert_eq!(ka.clock_indices, kb.clock_indices);
        let ratio = ka.len() as f64 / n as f64;
        assert!((ratio - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn qber_values() {
        assert_eq!(qber(100, 0).unwrap(), 0.0);
        assert_eq!(qber(50, 50).unwrap(), 0.5);
        assert!((qber(15_797, 1_046).unwrap() - 0.0621).abs() < 5e-5);
        assert!(matches!(qber(0, 0), Err(Error::EmptySample(_))));
    }
}
