//! Splitting encoded frames across RTP packets and putting them back together.
//!
//! A frame occupies consecutive sequence numbers, every fragment carries the
//! frame's timestamp, and only the last fragment has the marker bit.

use alloc::vec::Vec;

use super::{RtpError, RtpPacket, RTP_HEADER_LEN};

pub fn packetize_frame(
    payload: &[u8],
    payload_type: u8,
    ssrc: u32,
    timestamp: u32,
    start_seq: u16,
    mtu: usize,
) -> Result<Vec<RtpPacket>, RtpError> {
    if mtu <= RTP_HEADER_LEN {
        return Err(RtpError::MtuTooSmall(mtu));
    }
    let max = mtu - RTP_HEADER_LEN;
    // An empty frame still needs one marked packet to exist on the wire.
    let chunks: Vec<&[u8]> = if payload.is_empty() {
        alloc::vec![&payload[..0]]
    } else {
        payload.chunks(max).collect()
    };
    let last = chunks.len() - 1;
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let mut p = RtpPacket::new(
                payload_type,
                start_seq.wrapping_add(i as u16),
                timestamp,
                ssrc,
            );
            p.marker = i == last;
            p.payload = chunk.to_vec();
            p
        })
        .collect())
}

/// Concatenates fragment payloads. Packets must already be in sequence order.
pub fn reassemble_frame<P: core::borrow::Borrow<RtpPacket>>(
    packets: &[P],
) -> Result<Vec<u8>, RtpError> {
    let Some(first) = packets.first().map(|p| p.borrow()) else {
        return Err(RtpError::NoMarker);
    };
    let mut out = Vec::with_capacity(packets.iter().map(|p| p.borrow().payload.len()).sum());
    let mut expected = first.sequence;
    for (i, p) in packets.iter().map(|p| p.borrow()).enumerate() {
        if p.sequence != expected {
            return Err(RtpError::GapDetected {
                expected,
                found: p.sequence,
            });
        }
        if p.ssrc != first.ssrc || p.timestamp != first.timestamp {
            return Err(RtpError::MixedFrame);
        }
        let is_last = i + 1 == packets.len();
        if p.marker && !is_last {
            return Err(RtpError::MixedFrame);
        }
        if is_last && !p.marker {
            return Err(RtpError::NoMarker);
        }
        out.extend_from_slice(&p.payload);
        expected = expected.wrapping_add(1);
    }
    Ok(out)
}

/// Incremental reassembly over an in-order packet stream (jitter buffer
/// output). A loss anywhere inside a frame discards that frame.
#[derive(Debug, Default)]
pub struct FrameAssembler {
    pending: Vec<RtpPacket>,
    damaged: bool,
}

impl FrameAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the next in-order packet; returns `(timestamp, payload)` when a
    /// frame completes.
    pub fn push(&mut self, packet: RtpPacket) -> Option<(u32, Vec<u8>)> {
        if let Some(first) = self.pending.first() {
            if first.timestamp != packet.timestamp {
                // New frame started without the previous one's marker.
                self.pending.clear();
                self.damaged = false;
            }
        }
        let marker = packet.marker;
        let ts = packet.timestamp;
        self.pending.push(packet);
        if !marker {
            return None;
        }
        let frame = if self.damaged {
            None
        } else {
            reassemble_frame(&self.pending).ok()
        };
        self.pending.clear();
        self.damaged = false;
        frame.map(|f| (ts, f))
    }

    /// Records a lost packet: the frame in progress cannot be completed.
    /// Between frames the loss may have been a whole frame or the head of
    /// the next one, which RTP alone cannot tell apart; a headless frame then
    /// comes out short and the payload decoder must reject it by size.
    pub fn mark_loss(&mut self) {
        if !self.pending.is_empty() {
            self.damaged = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn single_packet_frame() {
        let f = vec![7u8; 100];
        let pkts = packetize_frame(&f, 96, 1, 2, 3, 1500).unwrap();
        assert_eq!(pkts.len(), 1);
        assert!(pkts[0].marker);
        assert_eq!(reassemble_frame(&pkts).unwrap(), f);
    }

    #[test]
    fn two_fragments_at_exact_boundary() {
        let f: Vec<u8> = (0..3000).map(|i| i as u8).collect();
        let pkts = packetize_frame(&f, 97, 9, 90_000, 65535, 1512).unwrap();
        assert_eq!(pkts.len(), 2);
        assert_eq!(pkts[0].payload.len(), 1500);
        assert_eq!(pkts[1].payload.len(), 1500);
        assert!(!pkts[0].marker && pkts[1].marker);
        assert_eq!((pkts[0].sequence, pkts[1].sequence), (65535, 0));
        assert!(pkts.iter().all(|p| p.timestamp == 90_000));
        assert_eq!(reassemble_frame(&pkts).unwrap(), f);
    }

    #[test]
    fn mtu_too_small() {
        assert_eq!(
            packetize_frame(&[1], 0, 0, 0, 0, 12),
            Err(RtpError::MtuTooSmall(12))
        );
        assert!(packetize_frame(&[1], 0, 0, 0, 0, 13).is_ok());
    }

    #[test]
    fn gap_and_missing_marker() {
        let f = vec![1u8; 50];
        let mut pkts = packetize_frame(&f, 96, 1, 0, 10, 22).unwrap();
        assert_eq!(pkts.len(), 5);
        let mut gapped = pkts.clone();
        gapped.remove(2);
        assert_eq!(
            reassemble_frame(&gapped),
            Err(RtpError::GapDetected {
                expected: 12,
                found: 13
            })
        );
        pkts.pop();
        assert_eq!(reassemble_frame(&pkts), Err(RtpError::NoMarker));
    }

    #[test]
    fn assembler_drops_damaged_frame() {
        let a = packetize_frame(&[1u8; 30], 96, 1, 100, 0, 22).unwrap();
        let b = packetize_frame(&[2u8; 30], 96, 1, 200, 3, 22).unwrap();
        let mut asm = FrameAssembler::new();
        assert_eq!(asm.push(a[0].clone()), None);
        asm.mark_loss();
        assert_eq!(asm.push(a[2].clone()), None);
        assert_eq!(asm.push(b[0].clone()), None);
        assert_eq!(asm.push(b[1].clone()), None);
        assert_eq!(asm.push(b[2].clone()), Some((200, vec![2u8; 30])));
    }

    #[test]
    fn loss_between_frames_spares_the_next() {
        let b = packetize_frame(&[2u8; 30], 96, 1, 200, 3, 22).unwrap();
        let mut asm = FrameAssembler::new();
        asm.mark_loss();
        asm.push(b[0].clone());
        asm.push(b[1].clone());
        assert_eq!(asm.push(b[2].clone()), Some((200, vec![2u8; 30])));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn packetize_reassemble_identity(len in 1usize..200_000, seed: u8, start: u16, mtu in 13usize..1500) {
            let f: Vec<u8> = (0..len).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let pkts = packetize_frame(&f, 96, 5, 6, start, mtu).unwrap();
            prop_assert!(pkts.iter().all(|p| p.payload.len() <= mtu - 12));
            prop_assert_eq!(pkts.iter().filter(|p| p.marker).count(), 1);
            prop_assert_eq!(reassemble_frame(&pkts).unwrap(), f);
        }
    }
}
