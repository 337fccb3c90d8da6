//! CASCADE interactive error correction.
//!
//! Alice holds the reference key and only answers; Bob drives the passes,
//! announces shuffle seeds, locates errors by binary search and flips his
//! bits. Alice is stateless with respect to Bob's progress: every parity she
//! discloses is addressed by a node id that she can resolve on her own.
//!
//! Node ids pack `(pass << 28) | (block << depth_bits) | heap`, where `heap`
//! is the 1-based heap index of a sub-range inside the block (root = 1, left
//! child = 2h, right child = 2h + 1, left half = the first `len / 2` bits).

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::message::{ClassicalMessage, MessageType};
use super::transport::{Transport, TransportKind};
use crate::error::{Error, Result};
use crate::rates::binary_entropy;
use crate::rng::{Substreams, BENCH_KEYS, CASCADE_SHUFFLE, VERIFY};

/// Length of the post-reconciliation verification digest.
pub const DIGEST_BITS: u64 = 64;
pub const DEFAULT_PASSES: usize = 4;
const PASS_SHIFT: u32 = 28;
const MAX_PASSES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadeConfig {
    pub passes: usize,
    pub first_block: usize,
}

impl CascadeConfig {
    /// Pass-1 block `ceil(0.73 / q)`, clamped to `[4, n/2]`, with estimates
    /// below 0.005 treated as 0.005 (block 146).
    pub fn for_qber(n: usize, q_est: f64) -> Self {
        let k = if q_est < 0.005 { 146 } else { (0.73 / q_est - 1e-9).ceil() as usize };
        Self { passes: DEFAULT_PASSES, first_block: k.min(n / 2).max(4) }
    }

    pub fn block_size(&self, pass: usize, n: usize) -> usize {
        self.first_block.saturating_mul(1 << pass.min(40)).min(n).max(1)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.passes == 0 || self.passes > MAX_PASSES || self.first_block == 0 {
            return Err(Error::InvalidParameter(format!("unsupported cascade configuration {self:?}")));
        }
        for p in 0..self.passes {
            let layout_bits = PassLayout::depth_bits(self.block_size(p, n));
            let blocks = n.div_ceil(self.block_size(p, n)) as u64;
            if (blocks << layout_bits) > (1u64 << PASS_SHIFT) {
                return Err(Error::InvalidParameter(format!("key of {n} bits too long for node addressing")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationResult {
    /// Bob's key after correction.
    pub corrected_key: Vec<bool>,
    /// Parity bits disclosed by Alice (block parities and binary-search replies).
    pub leaked_bits: u64,
    /// Parity bits of the verification digest, accounted separately.
    pub digest_bits: u64,
    pub passes: usize,
    pub corrections: u64,
    pub f_measured: f64,
    pub residual_error: bool,
}

/// Alice's side of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliceReconciliation {
    pub leaked_bits: u64,
    pub passes: usize,
    pub residual_error: bool,
}

struct PassLayout {
    block: usize,
    depth_bits: u32,
    /// position within the pass -> key index
    perm: Vec<u32>,
    /// key index -> position within the pass
    inv: Vec<u32>,
}

impl PassLayout {
    fn depth_bits(block: usize) -> u32 {
        // heap indices of a block of length L stay below 2^(ceil(log2 L) + 1)
        block.next_power_of_two().trailing_zeros() + 1
    }

    fn new(n: usize, block: usize, shuffle_seed: Option<u64>) -> Self {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        if let Some(seed) = shuffle_seed {
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let mut inv = vec![0u32; n];
        for (pos, &k) in perm.iter().enumerate() {
            inv[k as usize] = pos as u32;
        }
        Self { block, depth_bits: Self::depth_bits(block), perm, inv }
    }

    fn blocks(&self) -> usize {
        self.perm.len().div_ceil(self.block)
    }

    fn block_range(&self, j: usize) -> (usize, usize) {
        (j * self.block, ((j + 1) * self.block).min(self.perm.len()))
    }

    fn block_of(&self, key_index: usize) -> usize {
        self.inv[key_index] as usize / self.block
    }

    fn parity(&self, key: &[bool], s: usize, e: usize) -> bool {
        self.perm[s..e].iter().fold(false, |acc, &k| acc ^ key[k as usize])
    }

    fn block_parities(&self, key: &[bool]) -> Vec<bool> {
        (0..self.blocks())
            .map(|j| {
                let (s, e) = self.block_range(j);
                self.parity(key, s, e)
            })
            .collect()
    }

    fn node_id(&self, pass: usize, block: usize, heap: u32) -> u32 {
        ((pass as u32) << PASS_SHIFT) | ((block as u32) << self.depth_bits) | heap
    }

    /// Resolves a heap index inside block `j` to its position range.
    fn node_range(&self, j: usize, heap: u32) -> Option<(usize, usize)> {
        if heap == 0 || j >= self.blocks() {
            return None;
        }
        let (mut s, mut e) = self.block_range(j);
        let depth = 31 - heap.leading_zeros();
        for level in (0..depth).rev() {
            if e - s < 2 {
                return None;
            }
            let mid = s + (e - s) / 2;
            if heap >> level & 1 == 0 {
                e = mid;
            } else {
                s = mid;
            }
        }
        Some((s, e))
    }
}

fn split_node_id(id: u32) -> (usize, u32) {
    ((id >> PASS_SHIFT) as usize, id & ((1 << PASS_SHIFT) - 1))
}

/// 64 parities of pseudo-random subsets of `key`: each key bit draws a
/// 64-bit inclusion mask from the seeded generator.
pub fn subset_digest(key: &[bool], seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    key.iter().fold(0u64, |acc, &b| {
        let mask = rng.next_u64();
        if b {
            acc ^ mask
        } else {
            acc
        }
    })
}

/// Alice's endpoint: answers parity requests until Bob's digest arrives.
pub fn alice_reconcile<T: Transport + ?Sized>(t: &mut T, key: &[bool], config: CascadeConfig) -> Result<AliceReconciliation> {
    let n = key.len();
    config.validate(n)?;
    let mut layouts = vec![PassLayout::new(n, config.block_size(0, n), None)];
    let mut leaked = 0u64;
    let first = layouts[0].block_parities(key);
    leaked += first.len() as u64;
    t.send(&ClassicalMessage::parities(&first))?;
    loop {
        let msg = t.recv()?;
        match msg.kind {
            MessageType::ShuffleSeed => {
                let pass = layouts.len();
                if pass >= config.passes {
                    return Err(Error::Protocol(format!("shuffle requested for pass {} of {}", pass + 1, config.passes)));
                }
                let layout = PassLayout::new(n, config.block_size(pass, n), Some(msg.parse_shuffle_seed()?));
                let parities = layout.block_parities(key);
                leaked += parities.len() as u64;
                layouts.push(layout);
                t.send(&ClassicalMessage::parities(&parities))?;
            }
            MessageType::BinsearchParity => {
                let (id, _) = msg.parse_binsearch_parity()?;
                let (pass, node) = split_node_id(id);
                let layout = layouts
                    .get(pass)
                    .ok_or_else(|| Error::Protocol(format!("parity request for unopened pass {pass}")))?;
                let block = (node >> layout.depth_bits) as usize;
                let heap = node & ((1 << layout.depth_bits) - 1);
                let (s, e) = layout
                    .node_range(block, heap)
                    .ok_or_else(|| Error::Protocol(format!("invalid node id 0x{id:08x}")))?;
                leaked += 1;
                t.send(&ClassicalMessage::binsearch_parity(id, layout.parity(key, s, e)))?;
            }
            MessageType::VerifyDigest => {
                let (seed, word) = msg.parse_verify_digest()?;
                let residual_error = word != subset_digest(key, seed);
                t.send(&ClassicalMessage::done(u8::from(residual_error)))?;
                return Ok(AliceReconciliation { leaked_bits: leaked, passes: layouts.len(), residual_error });
            }
            other => return Err(Error::Protocol(format!("unexpected {other:?} during reconciliation"))),
        }
    }
}

struct BobState<'a, T: ?Sized> {
    t: &'a mut T,
    key: Vec<bool>,
    layouts: Vec<PassLayout>,
    mismatched: Vec<BTreeSet<usize>>,
    /// Alice's parities already disclosed or implied, by node id.
    known: HashMap<u32, bool>,
    leaked: u64,
    corrections: u64,
}

impl<T: Transport + ?Sized> BobState<'_, T> {
    fn open_pass(&mut self, layout: PassLayout) -> Result<()> {
        let pass = self.layouts.len();
        let blocks = layout.blocks();
        let alice = self.t.recv()?.parse_parities(blocks)?;
        self.leaked += blocks as u64;
        let mine = layout.block_parities(&self.key);
        let mut set = BTreeSet::new();
        for j in 0..blocks {
            self.known.insert(layout.node_id(pass, j, 1), alice[j]);
            if alice[j] != mine[j] {
                set.insert(j);
            }
        }
        self.layouts.push(layout);
        self.mismatched.push(set);
        Ok(())
    }

    fn alice_parity(&mut self, id: u32) -> Result<bool> {
        if let Some(&p) = self.known.get(&id) {
            return Ok(p);
        }
        self.t.send(&ClassicalMessage::binsearch_parity(id, false))?;
        let (got, parity) = self.t.recv()?.parse_binsearch_parity()?;
        if got != id {
            return Err(Error::Protocol(format!("parity reply for 0x{got:08x}, asked 0x{id:08x}")));
        }
        self.leaked += 1;
        self.known.insert(id, parity);
        Ok(parity)
    }

    /// Binary search inside an odd-parity block; returns the key index of
    /// one erroneous bit.
    fn locate(&mut self, pass: usize, block: usize) -> Result<usize> {
        let (mut s, mut e) = self.layouts[pass].block_range(block);
        let mut heap = 1u32;
        let mut parity = self.known[&self.layouts[pass].node_id(pass, block, 1)];
        while e - s > 1 {
            let mid = s + (e - s) / 2;
            let left_id = self.layouts[pass].node_id(pass, block, 2 * heap);
            let alice_left = self.alice_parity(left_id)?;
            if alice_left != self.layouts[pass].parity(&self.key, s, mid) {
                heap *= 2;
                e = mid;
                parity = alice_left;
            } else {
                heap = 2 * heap + 1;
                s = mid;
                parity ^= alice_left;
                let right_id = self.layouts[pass].node_id(pass, block, heap);
                self.known.insert(right_id, parity);
            }
        }
        let layout = &self.layouts[pass];
        if layout.parity(&self.key, s, e) == parity {
            return Err(Error::Protocol("binary search ended on a matching bit".into()));
        }
        Ok(layout.perm[s] as usize)
    }

    fn correct_all(&mut self) -> Result<()> {
        while let Some((pass, block)) =
            self.mismatched.iter().enumerate().find_map(|(p, set)| set.first().map(|&b| (p, b)))
        {
            let k = self.locate(pass, block)?;
            self.key[k] = !self.key[k];
            self.corrections += 1;
            for (layout, set) in self.layouts.iter().zip(self.mismatched.iter_mut()) {
                let b = layout.block_of(k);
                if !set.remove(&b) {
                    set.insert(b);
                }
            }
        }
        Ok(())
    }
}

/// Bob's endpoint. `shuffle_rng` supplies the per-pass permutation seeds and
/// `verify_rng` the digest subset seed.
pub fn bob_reconcile<T: Transport + ?Sized, R: RngCore + ?Sized>(
    t: &mut T,
    key: &[bool],
    q_est: f64,
    config: CascadeConfig,
    shuffle_rng: &mut R,
    verify_rng: &mut R,
) -> Result<ReconciliationResult> {
    let n = key.len();
    config.validate(n)?;
    let mut st = BobState {
        t,
        key: key.to_vec(),
        layouts: Vec::with_capacity(config.passes),
        mismatched: Vec::with_capacity(config.passes),
        known: HashMap::new(),
        leaked: 0,
        corrections: 0,
    };
    for pass in 0..config.passes {
        let seed = if pass == 0 {
            None
        } else {
            let seed = shuffle_rng.next_u64();
            st.t.send(&ClassicalMessage::shuffle_seed(seed))?;
            Some(seed)
        };
        st.open_pass(PassLayout::new(n, config.block_size(pass, n), seed))?;
        st.correct_all()?;
    }
    let seed = verify_rng.next_u64();
    st.t.send(&ClassicalMessage::verify_digest(seed, subset_digest(&st.key, seed)))?;
    let residual_error = match st.t.recv()?.parse_done()? {
        0 => false,
        1 => true,
        s => return Err(Error::Protocol(format!("unknown verification status {s}"))),
    };
    let shannon = n as f64 * binary_entropy(q_est.clamp(0.0, 1.0))?;
    Ok(ReconciliationResult {
        leaked_bits: st.leaked,
        digest_bits: DIGEST_BITS,
        passes: config.passes,
        corrections: st.corrections,
        f_measured: if shannon > 0.0 { st.leaked as f64 / shannon } else { f64::INFINITY },
        residual_error,
        corrected_key: st.key,
    })
}

/// Runs both endpoints concurrently over the given transports.
pub fn reconcile_over<A: Transport, B: Transport>(
    mut alice_t: A,
    mut bob_t: B,
    key_a: &[bool],
    key_b: &[bool],
    q_est: f64,
    config: CascadeConfig,
    seed: u64,
) -> Result<(ReconciliationResult, AliceReconciliation)> {
    let streams = Substreams::new(seed);
    std::thread::scope(|s| {
        let alice = s.spawn(move || alice_reconcile(&mut alice_t, key_a, config));
        let bob = {
            let mut shuffle = streams.stream(CASCADE_SHUFFLE);
            let mut verify = streams.stream(VERIFY);
            bob_reconcile(&mut bob_t, key_b, q_est, config, &mut shuffle, &mut verify)
        };
        drop(bob_t);
        let alice = alice.join().map_err(|_| Error::Channel("alice endpoint panicked".into()))?;
        // a closed channel on one side is a symptom; report the other side's error
        match (bob, alice) {
            (Ok(b), Ok(a)) => Ok((b, a)),
            (Err(Error::Channel(_)), Err(e)) | (Err(e), _) | (Ok(_), Err(e)) => Err(e),
        }
    })
}

/// Reconciles `key_b` against `key_a` using the standard block policy.
pub fn cascade_reconcile(
    key_a: &[bool],
    key_b: &[bool],
    q_est: f64,
    transport: TransportKind,
    shared_seed: u64,
) -> Result<ReconciliationResult> {
    if key_a.len() != key_b.len() || key_a.len() < 16 {
        return Err(Error::InvalidParameter(format!(
            "cascade needs equal key lengths of at least 16 bits (got {} and {})",
            key_a.len(),
            key_b.len()
        )));
    }
    if !(q_est > 0.0 && q_est < 0.25) {
        return Err(Error::InvalidParameter(format!("q_est {q_est} outside (0, 0.25)")));
    }
    let (a, b) = transport.pair()?;
    let config = CascadeConfig::for_qber(key_a.len(), q_est);
    reconcile_over(a, b, key_a, key_b, q_est, config, shared_seed).map(|(r, _)| r)
}

/// A uniformly random key and a copy with independent bit flips at rate `q`.
pub fn noisy_key_pair<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> (Vec<bool>, Vec<bool>) {
    let a: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let b = a.iter().map(|&x| x ^ (rng.random::<f64>() < q)).collect();
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTrial {
    pub errors: u64,
    pub identical: bool,
    pub result: ReconciliationResult,
}

/// Reconciles `trials` independent noisy key pairs of length `n` at error
/// rate `q`. Trial `t` draws its keys and its shared seed from substreams
/// indexed by `t`, so results do not depend on evaluation order.
pub fn bench(n: usize, q: f64, trials: usize, seed: u64, transport: TransportKind) -> Result<Vec<BenchTrial>> {
    let streams = Substreams::new(seed);
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = streams.indexed(BENCH_KEYS, t);
            let (a, b) = noisy_key_pair(n, q, &mut rng);
            let result = cascade_reconcile(&a, &b, q, transport, rng.next_u64())?;
            Ok(BenchTrial {
                errors: a.iter().zip(&b).filter(|(x, y)| x != y).count() as u64,
                identical: result.corrected_key == a,
                result,
            })
        })
        .collect()
}
