//! Privacy amplification by Toeplitz-matrix hashing.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hashes `key` (length n) to `m` bits with the Toeplitz matrix whose
/// `n + m - 1` diagonals are given, `T[i][j] = diagonals[i - j + n - 1]`.
pub fn toeplitz_hash(key: &[bool], diagonals: &[bool], m: usize) -> Result<Vec<bool>> {
    let n = key.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    if n == 0 || diagonals.len() != n + m - 1 {
        return Err(Error::InvalidParameter(format!(
            "Toeplitz hash of {n} -> {m} bits needs {} diagonal bits, got {}",
            (n + m).saturating_sub(1),
            diagonals.len()
        )));
    }
    // Row i of T read left to right is diagonals[i + n - 1], ..., diagonals[i];
    // reversing the diagonals turns every row into a contiguous window
    // starting at m - 1 - i.
    let total = n + m - 1;
    let rev = pack_words((0..total).map(|t| diagonals[total - 1 - t]), total);
    let key_words = pack_words(key.iter().copied(), n);
    let tail_mask = if n.is_multiple_of(64) { u64::MAX } else { (1u64 << (n % 64)) - 1 };
    Ok((0..m)
        .map(|i| {
            let start = m - 1 - i;
            let (w0, shift) = (start / 64, start % 64);
            let mut acc = 0u64;
            for (w, &k) in key_words.iter().enumerate() {
                let lo = rev[w0 + w] >> shift;
                let hi = if shift == 0 { 0 } else { rev.get(w0 + w + 1).map_or(0, |x| x << (64 - shift)) };
                let mut window = lo | hi;
                if w == key_words.len() - 1 {
                    window &= tail_mask;
                }
                acc ^= window & k;
            }
            acc.count_ones() % 2 == 1
        })
        .collect())
}

fn pack_words(bits: impl Iterator<Item = bool>, n: usize) -> Vec<u64> {
    let mut words = vec![0u64; n.div_ceil(64) + 1];
    for (i, b) in bits.enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// Diagonal bits expanded deterministically from a 16-byte seed.
pub fn toeplitz_diagonals(seed: [u8; 16], count: usize) -> Vec<bool> {
    let mut full = [0u8; 32];
    full[..16].copy_from_slice(&seed);
    let mut rng = ChaCha8Rng::from_seed(full);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = rng.next_u64();
        out.extend((0..64).map(|b| w >> b & 1 == 1).take(count - out.len()));
    }
    out
}

/// Compresses `key` to `target_len` bits with the Toeplitz hash selected by
/// `seed`.
pub fn privacy_amplify(key: &[bool], disclosed_bits: u64, target_len: usize, seed: [u8; 16]) -> Result<Vec<bool>> {
    let available = (key.len() as u64).saturating_sub(disclosed_bits) as usize;
    if target_len > available {
        return Err(Error::TargetTooLong { target: target_len, available });
    }
    if target_len == 0 {
        return Ok(Vec::new());
    }
    toeplitz_hash(key, &toeplitz_diagonals(seed, key.len() + target_len - 1), target_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn naive(key: &[bool], diag: &[bool], m: usize) -> Vec<bool> {
        let n = key.len();
        (0..m)
            .map(|i| (0..n).fold(false, |acc, j| acc ^ (diag[i + n - 1 - j] & key[j])))
            .collect()
    }

    #[test]
    fn matches_matrix_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, m) in [(1, 1), (5, 3), (64, 64), (65, 1), (130, 70), (200, 129)] {
            let key: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let diag: Vec<bool> = (0..n + m - 1).map(|_| rng.random()).collect();
            assert_eq!(toeplitz_hash(&key, &diag, m).unwrap(), naive(&key, &diag, m), "{n}x{m}");
        }
    }

    #[test]
    fn identity_family_keeps_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key: Vec<bool> = (0..300).map(|_| rng.random()).collect();
        let mut diag = vec![false; 599];
        diag[299] = true;
        assert_eq!(toeplitz_hash(&key, &diag, 300).unwrap(), key);
    }

    #[test]
    fn deterministic_and_bounded() {
        let key: Vec<bool> = (0..500).map(|i| i % 3 == 0).collect();
        let a = privacy_amplify(&key, 100, 300, [7; 16]).unwrap();
        assert_eq!(a, privacy_amplify(&key, 100, 300, [7; 16]).unwrap());
        assert_eq!(a.len(), 300);
        assert_ne!(a, privacy_amplify(&key, 100, 300, [8; 16]).unwrap());
        assert!(privacy_amplify(&key, 100, 400, [7; 16]).unwrap().len() == 400);
        assert!(matches!(
            privacy_amplify(&key, 101, 400, [7; 16]),
            Err(Error::TargetTooLong { target: 400, available: 399 })
        ));
        assert!(privacy_amplify(&key, 0, 0, [0; 16]).unwrap().is_empty());
    }

    #[test]
    fn avalanche() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, m, trials) = (512, 256, 1000);
        let mut changed = 0usize;
        for _ in 0..trials {
            let key: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let mut flipped = key.clone();
            let i = rng.random_range(0..n);
            flipped[i] = !flipped[i];
            let seed: [u8; 16] = rng.random();
            let x = privacy_amplify(&key, 0, m, seed).unwrap();
            let y = privacy_amplify(&flipped, 0, m, seed).unwrap();
            changed += x.iter().zip(&y).filter(|(a, b)| a != b).count();
        }
        let frac = changed as f64 / (trials * m) as f64;
        assert!((frac - 0.5).abs() < 0.05, "avalanche fraction {frac}");
    }
}
