//! Wire codec for the custom in-payload header.
//!
//! Layout (big-endian, 24 bytes):
//! magic[0..4] version[4] flags[5] stream_id[6..8] seq[8..12]
//! timestamp_us[12..20] ack_seq[20..24]

use serde::{Deserialize, Serialize};

use super::ProtoError;

/// Fixed-value sequence identifying a custom header in a UDP payload.
pub const MAGIC: u32 = 0xABCD_1234;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

pub const FLAG_RELIABLE: u8 = 0b0000_0001;
pub const FLAG_ACK: u8 = 0b0000_0010;
pub const FLAG_FIN: u8 = 0b0000_0100;
/// Bits 3-7 must be zero on the wire.
pub const RESERVED_MASK: u8 = 0b1111_1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomHeader {
    pub version: u8,
    pub flags: u8,
    pub stream_id: u16,
    /// Monotonically increasing per stream and class.
    pub seq: u32,
    /// Sender clock at transmission, microseconds.
    pub timestamp_us: u64,
    /// Cumulative highest contiguously received reliable seq; meaningful
    /// when the ACK flag is set, else 0.
    pub ack_seq: u32,
}

impl CustomHeader {
    pub fn new(flags: u8, stream_id: u16, seq: u32, timestamp_us: u64, ack_seq: u32) -> Self {
        CustomHeader {
            version: VERSION,
            flags,
            stream_id,
            seq,
            timestamp_us,
            ack_seq,
        }
    }

    pub fn is_reliable(&self) -> bool {
        self.flags & FLAG_RELIABLE != 0
    }

    pub fn is_ack(&self) -> bool {
        self.flags & FLAG_ACK != 0
    }

    pub fn is_fin(&self) -> bool {
        self.flags & FLAG_FIN != 0
    }
}

/// Classification of an incoming datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// Magic matched; parsed header plus remaining payload bytes.
    Header {
        header: CustomHeader,
        payload: Vec<u8>,
    },
    /// No magic (or too short): treat as a traditional UDP payload.
    Legacy(Vec<u8>),
}

pub fn encode_header(h: &CustomHeader) -> Result<[u8; HEADER_LEN], ProtoError> {
    if h.flags & RESERVED_MASK != 0 {
        return Err(ProtoError::ReservedBitsSet(format!(
            "flags=0x{:02x}",
            h.flags
        )));
    }
    let mut out = [0u8; HEADER_LEN];
    out[0..4].copy_from_slice(&MAGIC.to_be_bytes());
    out[4] = h.version;
    out[5] = h.flags;
    out[6..8].copy_from_slice(&h.stream_id.to_be_bytes());
    out[8..12].copy_from_slice(&h.seq.to_be_bytes());
    out[12..20].copy_from_slice(&h.timestamp_us.to_be_bytes());
    out[20..24].copy_from_slice(&h.ack_seq.to_be_bytes());
    Ok(out)
}

/// Prepend an encoded header to a payload.
pub fn encode_datagram(h: &CustomHeader, payload: &[u8]) -> Result<Vec<u8>, ProtoError> {
    let hdr = encode_header(h)?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&hdr);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Classify and parse a datagram.
///
/// A missing magic field means legacy traffic, not corruption; a
/// present magic with reserved bits set is an error so corruption is
/// not silently misread as legacy.
pub fn decode_header(bytes: &[u8]) -> Result<Decoded, ProtoError> {
    if bytes.len() < HEADER_LEN || bytes[0..4] != MAGIC.to_be_bytes() {
        return Ok(Decoded::Legacy(bytes.to_vec()));
    }
    let flags = bytes[5];
    if flags & RESERVED_MASK != 0 {
        return Err(ProtoError::ReservedBitsSet(format!("flags=0x{flags:02x}")));
    }
    let header = CustomHeader {
        version: bytes[4],
        flags,
        stream_id: u16::from_be_bytes([bytes[6], bytes[7]]),
        seq: u32::from_be_bytes(bytes[8..12].try_into().unwrap()),
        timestamp_us: u64::from_be_bytes(bytes[12..20].try_into().unwrap()),
        ack_seq: u32::from_be_bytes(bytes[20..24].try_into().unwrap()),
    };
    Ok(Decoded::Header {
        header,
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn magic_leads_the_wire_format() {
        let h = CustomHeader::new(FLAG_RELIABLE, 7, 42, 123_456, 0);
        let bytes = encode_header(&h).unwrap();
        assert_eq!(&bytes[0..4], &[0xAB, 0xCD, 0x12, 0x34]);
        assert_eq!(bytes.len(), HEADER_LEN);
    }

    #[test]
    fn zero_header_encodes_zero_tail() {
        let h = CustomHeader::new(0, 0, 0, 0, 0);
        let bytes = encode_header(&h).unwrap();
        assert!(bytes[5..].iter().all(|&b| b == 0));
        assert_eq!(bytes[4], VERSION);
    }

    #[test]
    fn plain_text_is_legacy() {
        assert_eq!(
            decode_header(b"hello").unwrap(),
            Decoded::Legacy(b"hello".to_vec())
        );
    }

    #[test]
    fn header_with_empty_payload_round_trips() {
        let h = CustomHeader::new(FLAG_ACK, 1, 0, 9, 5);
        let bytes = encode_datagram(&h, &[]).unwrap();
        match decode_header(&bytes).unwrap() {
            Decoded::Header { header, payload } => {
                assert_eq!(header, h);
                assert!(payload.is_empty());
            }
            other => panic!("expected header, got {other:?}"),
        }
    }

    #[test]
    fn reserved_bits_rejected_on_both_paths() {
        let mut h = CustomHeader::new(0, 0, 0, 0, 0);
        h.flags = 0b1000_0000;
        assert!(matches!(
            encode_header(&h),
            Err(ProtoError::ReservedBitsSet(_))
        ));
        let mut bytes = encode_header(&CustomHeader::new(0, 0, 0, 0, 0)).unwrap().to_vec();
        bytes[5] = 0b0010_0001;
        assert!(matches!(
            decode_header(&bytes),
            Err(ProtoError::ReservedBitsSet(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn round_trip_is_identity(
            flags in 0u8..8,
            stream_id: u16,
            seq: u32,
            timestamp_us: u64,
            ack_seq: u32,
            payload in proptest::collection::vec(any::<u8>(), 0..64),
        ) {
            let h = CustomHeader::new(flags, stream_id, seq, timestamp_us, ack_seq);
            let bytes = encode_datagram(&h, &payload).unwrap();
            let decoded = decode_header(&bytes).unwrap();
            prop_assert_eq!(decoded, Decoded::Header { header: h, payload });
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..96)) {
            let _ = decode_header(&bytes);
        }
    }
}
