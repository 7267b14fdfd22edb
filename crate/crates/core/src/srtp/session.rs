use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use aes::cipher::KeyInit;
use aes::Aes128;
use hmac::{Hmac, Mac};
use sha1::Sha1;

use super::keys::{aes_cm_apply, derive_session_keys, split_keying_material, SessionKeys};
use super::replay::ReplayWindow;
use super::SrtpError;
use crate::rtp::{parse_header, parse_rtp, write_rtp, RtpPacket, RTP_HEADER_LEN};

type HmacSha1 = Hmac<Sha1>;

pub const AUTH_TAG_LEN: usize = 10;
pub const SUITE_NAME: &str = "AES_CM_128_HMAC_SHA1_80";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct IndexState {
    roc: u32,
    highest_seq: u16,
}

impl IndexState {
    fn index(&self) -> u64 {
        ((self.roc as u64) << 16) | self.highest_seq as u64
    }

    /// Packet index estimate for `seq` (RFC 3711 section 3.3.1): pick the
    /// rollover counter candidate that puts `seq` closest to the highest
    /// sequence number seen. `None` means the estimate fell before index 0.
    fn estimate(&self, seq: u16) -> Option<(u32, u64)> {
        let (s_l, roc) = (self.highest_seq as i64, self.roc as i64);
        let seq_i = seq as i64;
        let v = if s_l < 32768 {
            if seq_i - s_l > 32768 {
                roc - 1
            } else {
                roc
            }
        } else if s_l - 32768 > seq_i {
            roc + 1
        } else {
            roc
        };
        if !(0..=u32::MAX as i64).contains(&v) {
            return None;
        }
        Some((v as u32, ((v as u64) << 16) | seq as u64))
    }

    fn advance(&mut self, roc: u32, seq: u16, index: u64) {
        if index > self.index() {
            self.roc = roc;
            self.highest_seq = seq;
        }
    }
}

#[derive(Debug, Clone)]
struct RecvState {
    index: IndexState,
    replay: ReplayWindow,
}

/// One direction of SRTP protection for suite AES_CM_128_HMAC_SHA1_80.
///
/// The session keeps independent per-SSRC state for the send path (rollover
/// counter tracking) and the receive path (index estimation and replay
/// protection); a peer normally uses one session per direction.
pub struct SrtpSession {
    keys: SessionKeys,
    cipher: Aes128,
    mac: HmacSha1,
    send: BTreeMap<u32, IndexState>,
    recv: BTreeMap<u32, RecvState>,
}

impl core::fmt::Debug for SrtpSession {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SrtpSession")
            .field("send_ssrcs", &self.send.len())
            .field("recv_ssrcs", &self.recv.len())
            .finish_non_exhaustive()
    }
}

impl SrtpSession {
    pub fn new(master_key: &[u8], master_salt: &[u8]) -> Result<Self, SrtpError> {
        Ok(Self::from_keys(derive_session_keys(
            master_key,
            master_salt,
        )?))
    }

    /// From 30 bytes of SDES keying material (key followed by salt).
    pub fn from_keying_material(material: &[u8]) -> Result<Self, SrtpError> {
        let (key, salt) = split_keying_material(material)?;
        Self::new(key, salt)
    }

    pub fn from_keys(keys: SessionKeys) -> Self {
        let cipher = Aes128::new(&keys.cipher_key.into());
        let mac =
            <HmacSha1 as Mac>::new_from_slice(&keys.auth_key).expect("hmac accepts any key length");
        Self {
            keys,
            cipher,
            mac,
            send: BTreeMap::new(),
            recv: BTreeMap::new(),
        }
    }

    pub fn keys(&self) -> &SessionKeys {
        &self.keys
    }

    /// Current send-path rollover counter for `ssrc`, if it has sent anything.
    pub fn send_roc(&self, ssrc: u32) -> Option<u32> {
        self.send.get(&ssrc).map(|s| s.roc)
    }

    pub fn recv_roc(&self, ssrc: u32) -> Option<u32> {
        self.recv.get(&ssrc).map(|s| s.index.roc)
    }

    fn iv(&self, ssrc: u32, index: u64) -> [u8; 16] {
        let mut iv = [0u8; 16];
        iv[..14].copy_from_slice(&self.keys.session_salt);
        for (b, s) in iv[4..8].iter_mut().zip(ssrc.to_be_bytes()) {
            *b ^= s;
        }
        for (b, s) in iv[8..14].iter_mut().zip(&index.to_be_bytes()[2..]) {
            *b ^= s;
        }
        iv
    }

    fn tag(&self, authenticated: &[u8], roc: u32) -> [u8; AUTH_TAG_LEN] {
        let mut mac = self.mac.clone();
        mac.update(authenticated);
        mac.update(&roc.to_be_bytes());
        let full = mac.finalize().into_bytes();
        let mut tag = [0u8; AUTH_TAG_LEN];
        tag.copy_from_slice(&full[..AUTH_TAG_LEN]);
        tag
    }

    /// Encrypts and authenticates `packet`: header in clear, payload under the
    /// counter-mode keystream, 10-byte tag appended.
    pub fn protect(&mut self, packet: &RtpPacket) -> Result<Vec<u8>, SrtpError> {
        let mut out = Vec::with_capacity(packet.wire_len() + AUTH_TAG_LEN);
        write_rtp(packet, &mut out)?;
        let header_len = packet.header_len();

        let state = self.send.entry(packet.ssrc).or_insert(IndexState {
            roc: 0,
            highest_seq: packet.sequence,
        });
        let (roc, index) = state
            .estimate(packet.sequence)
            .unwrap_or((0, packet.sequence as u64));
        state.advance(roc, packet.sequence, index);

        let iv = self.iv(packet.ssrc, index);
        aes_cm_apply(&self.cipher, iv, &mut out[header_len..]);
        let tag = self.tag(&out, roc);
        out.extend_from_slice(&tag);
        Ok(out)
    }

    /// Verifies, replay-checks, and decrypts one SRTP packet.
    pub fn unprotect(&mut self, bytes: &[u8]) -> Result<RtpPacket, SrtpError> {
        if bytes.len() < RTP_HEADER_LEN + AUTH_TAG_LEN {
            return Err(SrtpError::Truncated);
        }
        let (authenticated, tag) = bytes.split_at(bytes.len() - AUTH_TAG_LEN);
        // Only fixed-offset fields are read before the tag is verified, so any
        // modification of the authenticated portion surfaces as AuthFail.
        let seq = u16::from_be_bytes([bytes[2], bytes[3]]);
        let ssrc = u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);

        let existing = self.recv.get(&ssrc);
        let index_state = existing.map(|s| s.index).unwrap_or(IndexState {
            roc: 0,
            highest_seq: seq,
        });
        let (roc, index) = index_state.estimate(seq).ok_or(SrtpError::ReplayFail(0))?;
        if let Some(s) = existing {
            if !s.replay.check(index) {
                return Err(SrtpError::ReplayFail(index));
            }
        }

        let mut mac = self.mac.clone();
        mac.update(authenticated);
        mac.update(&roc.to_be_bytes());
        mac.verify_truncated_left(tag)
            .map_err(|_| SrtpError::AuthFail)?;

        let header = parse_header(authenticated)?;
        let mut plain = authenticated.to_vec();
        let iv = self.iv(ssrc, index);
        aes_cm_apply(&self.cipher, iv, &mut plain[header.header_len..]);
        let packet = parse_rtp(&plain)?;

        let state = self.recv.entry(ssrc).or_insert(RecvState {
            index: index_state,
            replay: ReplayWindow::new(),
        });
        state.replay.mark(index);
        state.index.advance(roc, seq, index);
        Ok(packet)
    }

    /// Standalone replay test for `index` against the receive window of
    /// `ssrc`; accepted indices are marked.
    pub fn replay_check(&mut self, ssrc: u32, index: u64) -> bool {
        let state = self.recv.entry(ssrc).or_insert(RecvState {
            index: IndexState {
                roc: (index >> 16) as u32,
                highest_seq: index as u16,
            },
            replay: ReplayWindow::new(),
        });
        state.replay.accept(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pair() -> (SrtpSession, SrtpSession) {
        let material: Vec<u8> = (0..30).collect();
        (
            SrtpSession::from_keying_material(&material).unwrap(),
            SrtpSession::from_keying_material(&material).unwrap(),
        )
    }

    fn packet(seq: u16, payload: Vec<u8>) -> RtpPacket {
        let mut p = RtpPacket::new(96, seq, 1234, 0xCAFE_BABE);
        p.payload = payload;
        p
    }

    #[test]
    fn empty_payload_adds_only_tag() {
        let (mut tx, mut rx) = pair();
        let p = packet(1, vec![]);
        let out = tx.protect(&p).unwrap();
        assert_eq!(out.len(), 12 + AUTH_TAG_LEN);
        assert_eq!(rx.unprotect(&out).unwrap(), p);
    }

    #[test]
    fn header_stays_clear_payload_encrypted() {
        let (mut tx, _) = pair();
        let p = packet(7, vec![0u8; 64]);
        let out = tx.protect(&p).unwrap();
        assert_eq!(&out[..12], &crate::rtp::serialize_rtp(&p).unwrap()[..12]);
        assert_ne!(&out[12..76], &[0u8; 64][..]);
    }

    #[test]
    fn tamper_detected() {
        let (mut tx, mut rx) = pair();
        let mut out = tx.protect(&packet(3, vec![9; 40])).unwrap();
        out[20] ^= 1;
        assert_eq!(rx.unprotect(&out), Err(SrtpError::AuthFail));
    }

    #[test]
    fn replayed_packet_rejected() {
        let (mut tx, mut rx) = pair();
        let out = tx.protect(&packet(3, vec![9; 40])).unwrap();
        assert!(rx.unprotect(&out).is_ok());
        assert_eq!(rx.unprotect(&out), Err(SrtpError::ReplayFail(3)));
    }

    #[test]
    fn wrong_keys_fail_auth() {
        let (mut tx, _) = pair();
        let mut rx = SrtpSession::from_keying_material(&[1u8; 30]).unwrap();
        let out = tx.protect(&packet(3, vec![1, 2, 3])).unwrap();
        assert_eq!(rx.unprotect(&out), Err(SrtpError::AuthFail));
    }

    #[test]
    fn truncated_input() {
        let (_, mut rx) = pair();
        assert_eq!(rx.unprotect(&[0x80; 21]), Err(SrtpError::Truncated));
    }

    #[test]
    fn rollover_across_seventy_thousand_packets() {
        let (mut tx, mut rx) = pair();
        let start = 60_000u16;
        for i in 0..70_000u32 {
            let seq = start.wrapping_add(i as u16);
            let p = packet(seq, vec![(i & 0xff) as u8; 4]);
            let wire = tx.protect(&p).unwrap();
            assert_eq!(rx.unprotect(&wire).unwrap(), p, "packet {i}");
        }
        // 60000 + 69999 = 129999: exactly one wrap past 65535.
        assert_eq!(tx.send_roc(0xCAFE_BABE), Some(1));
        assert_eq!(rx.recv_roc(0xCAFE_BABE), Some(1));
    }

    #[test]
    fn reordered_around_wrap_still_authenticates() {
        let (mut tx, mut rx) = pair();
        let seqs = [65533u16, 65534, 65535, 0, 1];
        let wires: Vec<_> = seqs
            .iter()
            .map(|&s| tx.protect(&packet(s, vec![s as u8])).unwrap())
            .collect();
        for i in [0usize, 1, 3, 2, 4] {
            assert_eq!(rx.unprotect(&wires[i]).unwrap().sequence, seqs[i]);
        }
    }

    #[test]
    fn replay_check_examples() {
        let (_, mut rx) = pair();
        assert!((1..=100).all(|i| rx.replay_check(1, i)));
        assert!(!rx.replay_check(1, 50));
        let mut s = pair().1;
        assert!(s.replay_check(2, 100));
        assert!(s.replay_check(2, 50));
        assert!(!s.replay_check(2, 50));
        assert!(!s.replay_check(2, 10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip(seq: u16, ts: u32, ssrc: u32, marker: bool, payload in proptest::collection::vec(any::<u8>(), 0..300)) {
            let (mut tx, mut rx) = pair();
            let mut p = RtpPacket::new(97, seq, ts, ssrc);
            p.marker = marker;
            p.payload = payload;
            let wire = tx.protect(&p).unwrap();
            prop_assert_eq!(rx.unprotect(&wire).unwrap(), p);
        }
    }

    #[test]
    fn any_single_bit_flip_fails_auth() {
        let (mut tx, _) = pair();
        let mut p = packet(500, (0..80).collect());
        p.csrc = vec![11];
        let wire = tx.protect(&p).unwrap();
        // Deterministic spread of 200 positions covering header, payload, tag.
        let bits = wire.len() * 8;
        for k in 0..200usize {
            let bit = (k * 7919) % bits;
            let mut bad = wire.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            let (_, mut rx) = pair();
            assert_eq!(rx.unprotect(&bad), Err(SrtpError::AuthFail), "bit {bit}");
        }
    }
}
