//! Classical-channel messages and their length-prefixed wire framing:
//! 4-byte big-endian payload length, 1-byte type, payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Upper bound on a single payload; anything larger is treated as a corrupt
/// frame rather than an allocation request.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    SiftBases = 0x01,
    SiftKeep = 0x02,
    ShuffleSeed = 0x03,
    Parities = 0x04,
    BinsearchParity = 0x05,
    VerifyDigest = 0x06,
    PaSeed = 0x07,
    Done = 0x7F,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0x01 => Self::SiftBases,
            0x02 => Self::SiftKeep,
            0x03 => Self::ShuffleSeed,
            0x04 => Self::Parities,
            0x05 => Self::BinsearchParity,
            0x06 => Self::VerifyDigest,
            0x07 => Self::PaSeed,
            0x7F => Self::Done,
            other => return Err(Error::Protocol(format!("unknown message type 0x{other:02x}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl ClassicalMessage {
    pub fn new(kind: MessageType, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    /// Bob's basis announcement: count, the clock index of every detection,
    /// then the bases bit-packed (1 = diagonal).
    pub fn sift_bases(clock_indices: &[u64], diagonal: &[bool]) -> Self {
        debug_assert_eq!(clock_indices.len(), diagonal.len());
        let mut p = Vec::with_capacity(4 + 8 * clock_indices.len() + diagonal.len().div_ceil(8));
        p.extend_from_slice(&(clock_indices.len() as u32).to_be_bytes());
        for c in clock_indices {
            p.extend_from_slice(&c.to_be_bytes());
        }
        p.extend_from_slice(&pack_bits(diagonal));
        Self::new(MessageType::SiftBases, p)
    }

    pub fn parse_sift_bases(&self) -> Result<(Vec<u64>, Vec<bool>)> {
        self.expect(MessageType::SiftBases)?;
        let p = &self.payload;
        let n = read_u32(p, 0)? as usize;
        let idx_end = n
            .checked_mul(8)
            .and_then(|b| b.checked_add(4))
            .ok_or_else(|| Error::Protocol("SIFT_BASES count overflow".into()))?;
        if p.len() != idx_end + n.div_ceil(8) {
            return Err(Error::Protocol("SIFT_BASES payload length mismatch".into()));
        }
        let clocks = p[4..idx_end].chunks_exact(8).map(|c| u64::from_be_bytes(c.try_into().unwrap())).collect();
        Ok((clocks, unpack_bits(&p[idx_end..], n)?))
    }

    pub fn sift_keep(keep: &[bool]) -> Self {
        Self::new(MessageType::SiftKeep, pack_bits(keep))
    }

    pub fn parse_sift_keep(&self, n: usize) -> Result<Vec<bool>> {
        self.expect(MessageType::SiftKeep)?;
        unpack_bits(&self.payload, n)
    }

    pub fn shuffle_seed(seed: u64) -> Self {
        Self::new(MessageType::ShuffleSeed, seed.to_be_bytes().to_vec())
    }

    pub fn parse_shuffle_seed(&self) -> Result<u64> {
        self.expect(MessageType::ShuffleSeed)?;
        self.exact_len(8)?;
        Ok(u64::from_be_bytes(self.payload[..].try_into().unwrap()))
    }

    pub fn parities(bits: &[bool]) -> Self {
        Self::new(MessageType::Parities, pack_bits(bits))
    }

    pub fn parse_parities(&self, n: usize) -> Result<Vec<bool>> {
        self.expect(MessageType::Parities)?;
        unpack_bits(&self.payload, n)
    }

    pub fn binsearch_parity(block_id: u32, parity: bool) -> Self {
        let mut p = block_id.to_be_bytes().to_vec();
        p.push(u8::from(parity));
        Self::new(MessageType::BinsearchParity, p)
    }

    pub fn parse_binsearch_parity(&self) -> Result<(u32, bool)> {
        self.expect(MessageType::BinsearchParity)?;
        self.exact_len(5)?;
        let id = read_u32(&self.payload, 0)?;
        match self.payload[4] {
            0 => Ok((id, false)),
            1 => Ok((id, true)),
            b => Err(Error::Protocol(format!("BINSEARCH_PARITY padding byte 0x{b:02x}"))),
        }
    }

    pub fn verify_digest(seed: u64, word: u64) -> Self {
        let mut p = seed.to_be_bytes().to_vec();
        p.extend_from_slice(&word.to_be_bytes());
        Self::new(MessageType::VerifyDigest, p)
    }

    pub fn parse_verify_digest(&self) -> Result<(u64, u64)> {
        self.expect(MessageType::VerifyDigest)?;
        self.exact_len(16)?;
        let seed = u64::from_be_bytes(self.payload[..8].try_into().unwrap());
        let word = u64::from_be_bytes(self.payload[8..].try_into().unwrap());
        Ok((seed, word))
    }

    pub fn pa_seed(seed: [u8; 16]) -> Self {
        Self::new(MessageType::PaSeed, seed.to_vec())
    }

    pub fn parse_pa_seed(&self) -> Result<[u8; 16]> {
        self.expect(MessageType::PaSeed)?;
        self.exact_len(16)?;
        Ok(self.payload[..].try_into().unwrap())
    }

    pub fn done(status: u8) -> Self {
        Self::new(MessageType::Done, vec![status])
    }

    pub fn parse_done(&self) -> Result<u8> {
        self.expect(MessageType::Done)?;
        self.exact_len(1)?;
        Ok(self.payload[0])
    }

    fn expect(&self, kind: MessageType) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Protocol(format!("expected {kind:?}, received {:?}", self.kind)));
        }
        Ok(())
    }

    fn exact_len(&self, n: usize) -> Result<()> {
        if self.payload.len() != n {
            return Err(Error::Protocol(format!(
                "{:?} payload is {} bytes, expected {n}",
                self.kind,
                self.payload.len()
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame occupying the whole buffer.
    pub fn decode(frame: &[u8]) -> Result<Self> {
        if frame.len() < 5 {
            return Err(Error::Protocol("frame shorter than header".into()));
        }
        let len = read_u32(frame, 0)? as usize;
        if frame.len() != 5 + len {
            return Err(Error::Protocol(format!("frame declares {len} payload bytes, has {}", frame.len() - 5)));
        }
        Ok(Self::new(MessageType::from_byte(frame[4])?, frame[5..].to_vec()))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.payload.len() as u32).to_be_bytes())?;
        w.write_all(&[self.kind as u8])?;
        w.write_all(&self.payload)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; 5];
        r.read_exact(&mut header)?;
        let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Protocol(format!("frame payload of {len} bytes exceeds limit")));
        }
        let kind = MessageType::from_byte(header[4])?;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Self::new(kind, payload))
    }
}

fn read_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Protocol("truncated payload".into()))
}

/// MSB-first bit packing; the final byte is zero-padded.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Protocol(format!("{} packed bytes cannot hold exactly {n} bits", bytes.len())));
    }
    if !n.is_multiple_of(8) && bytes[n / 8] & (0xFF >> (n % 8)) != 0 {
        return Err(Error::Protocol("nonzero padding bits".into()));
    }
    Ok((0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [MessageType; 8] = [
        MessageType::SiftBases,
        MessageType::SiftKeep,
        MessageType::ShuffleSeed,
        MessageType::Parities,
        MessageType::BinsearchParity,
        MessageType::VerifyDigest,
        MessageType::PaSeed,
        MessageType::Done,
    ];

    #[test]
    fn frame_layout_is_bit_exact() {
        let m = ClassicalMessage::binsearch_parity(0x0102_0304, true);
        assert_eq!(m.encode(), vec![0, 0, 0, 5, 0x05, 1, 2, 3, 4, 1]);
        assert_eq!(ClassicalMessage::done(0).encode(), vec![0, 0, 0, 1, 0x7F, 0]);
        assert_eq!(pack_bits(&[true, false, true, true, false, false, false, false, true]), vec![0xB0, 0x80]);
    }

    #[test]
    fn typed_payloads_roundtrip() {
        let m = ClassicalMessage::sift_bases(&[3, 7, 1 << 40], &[true, false, true]);
        assert_eq!(m.parse_sift_bases().unwrap(), (vec![3, 7, 1 << 40], vec![true, false, true]));
        assert_eq!(ClassicalMessage::shuffle_seed(42).parse_shuffle_seed().unwrap(), 42);
        assert_eq!(ClassicalMessage::verify_digest(1, u64::MAX).parse_verify_digest().unwrap(), (1, u64::MAX));
        assert_eq!(ClassicalMessage::pa_seed([9; 16]).parse_pa_seed().unwrap(), [9; 16]);
        assert!(ClassicalMessage::done(0).parse_shuffle_seed().is_err());
    }

    #[test]
    fn malformed_frames_rejected() {
        assert!(ClassicalMessage::decode(&[0, 0, 0]).is_err());
        assert!(ClassicalMessage::decode(&[0, 0, 0, 2, 0x01, 0]).is_err());
        assert!(ClassicalMessage::decode(&[0, 0, 0, 0, 0x55]).is_err());
        assert!(unpack_bits(&[0x01], 4).is_err());
        let bad = ClassicalMessage::new(MessageType::BinsearchParity, vec![0, 0, 0, 0, 2]);
        assert!(bad.parse_binsearch_parity().is_err());
    }

    proptest! {
        #[test]
        fn frames_roundtrip(kind in 0usize..8, payload in proptest::collection::vec(any::<u8>(), 0..300)) {
            let m = ClassicalMessage::new(KINDS[kind], payload);
            let bytes = m.encode();
            prop_assert_eq!(&ClassicalMessage::decode(&bytes).unwrap(), &m);
            let mut cursor = std::io::Cursor::new(bytes);
            prop_assert_eq!(ClassicalMessage::read_from(&mut cursor).unwrap(), m);
        }

        #[test]
        fn bits_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            prop_assert_eq!(unpack_bits(&pack_bits(&bits), bits.len()).unwrap(), bits);
        }
    }
}
