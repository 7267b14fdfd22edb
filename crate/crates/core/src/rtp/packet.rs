use alloc::vec::Vec;

use super::RtpError;

pub const RTP_VERSION: u8 = 2;
pub const RTP_HEADER_LEN: usize = 12;
pub const MAX_CSRC: usize = 15;

/// Opaque RTP header extension: the 16-bit profile id and its data words.
///
/// `data.len()` is always a multiple of four on the wire; the codec rejects
/// anything else on serialize.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeaderExtension {
    pub profile: u16,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RtpPacket {
    pub padding: bool,
    pub marker: bool,
    pub payload_type: u8,
    pub sequence: u16,
    pub timestamp: u32,
    pub ssrc: u32,
    pub csrc: Vec<u32>,
    pub extension: Option<HeaderExtension>,
    pub payload: Vec<u8>,
}

impl RtpPacket {
    pub fn new(payload_type: u8, sequence: u16, timestamp: u32, ssrc: u32) -> Self {
        Self {
            padding: false,
            marker: false,
            payload_type,
            sequence,
            timestamp,
            ssrc,
            csrc: Vec::new(),
            extension: None,
            payload: Vec::new(),
        }
    }

    /// Always 2; kept as a method so the constant lives in one place.
    pub fn version(&self) -> u8 {
        RTP_VERSION
    }

    pub fn header_len(&self) -> usize {
        RTP_HEADER_LEN
            + 4 * self.csrc.len()
            + self.extension.as_ref().map_or(0, |e| 4 + e.data.len())
    }

    pub fn wire_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }
}

/// Fixed-header fields decoded without touching the payload. Used by SRTP,
/// where the payload is ciphertext and padding cannot be interpreted yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderInfo {
    pub padding: bool,
    pub marker: bool,
    pub payload_type: u8,
    pub sequence: u16,
    pub timestamp: u32,
    pub ssrc: u32,
    /// Offset of the first payload byte.
    pub header_len: usize,
}

pub fn parse_header(bytes: &[u8]) -> Result<HeaderInfo, RtpError> {
    if bytes.len() < RTP_HEADER_LEN {
        return Err(RtpError::Truncated);
    }
    let version = bytes[0] >> 6;
    if version != RTP_VERSION {
        return Err(RtpError::UnsupportedVersion(version));
    }
    let padding = bytes[0] & 0x20 != 0;
    let has_ext = bytes[0] & 0x10 != 0;
    let cc = (bytes[0] & 0x0f) as usize;
    let mut header_len = RTP_HEADER_LEN + 4 * cc;
    if bytes.len() < header_len {
        return Err(RtpError::Truncated);
    }
    if has_ext {
        if bytes.len() < header_len + 4 {
            return Err(RtpError::Truncated);
        }
        let words = u16::from_be_bytes([bytes[header_len + 2], bytes[header_len + 3]]) as usize;
        header_len += 4 + 4 * words;
        if bytes.len() < header_len {
            return Err(RtpError::Truncated);
        }
    }
    Ok(HeaderInfo {
        padding,
        marker: bytes[1] & 0x80 != 0,
        payload_type: bytes[1] & 0x7f,
        sequence: u16::from_be_bytes([bytes[2], bytes[3]]),
        timestamp: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        ssrc: u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
        header_len,
    })
}

/// Decodes a full RTP packet. Padding is stripped from the payload and the
/// `padding` flag is cleared, so the result re-serializes to the unpadded form.
pub fn parse_rtp(bytes: &[u8]) -> Result<RtpPacket, RtpError> {
    let info = parse_header(bytes)?;
    let cc = (bytes[0] & 0x0f) as usize;
    let csrc = bytes[RTP_HEADER_LEN..RTP_HEADER_LEN + 4 * cc]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let ext_start = RTP_HEADER_LEN + 4 * cc;
    let extension = (bytes[0] & 0x10 != 0).then(|| HeaderExtension {
        profile: u16::from_be_bytes([bytes[ext_start], bytes[ext_start + 1]]),
        data: bytes[ext_start + 4..info.header_len].to_vec(),
    });

    let mut end = bytes.len();
    if info.padding {
        let pad = bytes[end - 1] as usize;
        if pad == 0 || info.header_len + pad > end {
            return Err(RtpError::Truncated);
        }
        end -= pad;
    }

    Ok(RtpPacket {
        padding: false,
        marker: info.marker,
        payload_type: info.payload_type,
        sequence: info.sequence,
        timestamp: info.timestamp,
        ssrc: info.ssrc,
        csrc,
        extension,
        payload: bytes[info.header_len..end].to_vec(),
    })
}

pub fn serialize_rtp(packet: &RtpPacket) -> Result<Vec<u8>, RtpError> {
    let mut out = Vec::with_capacity(packet.wire_len());
    write_rtp(packet, &mut out)?;
    Ok(out)
}

/// Appends the wire form of `packet` to `out`. Never emits padding.
pub fn write_rtp(packet: &RtpPacket, out: &mut Vec<u8>) -> Result<(), RtpError> {
    if packet.csrc.len() > MAX_CSRC {
        return Err(RtpError::TooManyCsrc(packet.csrc.len()));
    }
    if packet.payload_type > 0x7f {
        return Err(RtpError::PayloadTypeOutOfRange(packet.payload_type));
    }
    if let Some(ext) = &packet.extension {
        if ext.data.len() % 4 != 0 || ext.data.len() / 4 > u16::MAX as usize {
            return Err(RtpError::BadExtensionLength(ext.data.len()));
        }
    }
    let b0 = (RTP_VERSION << 6)
        | if packet.extension.is_some() { 0x10 } else { 0 }
        | packet.csrc.len() as u8;
    let b1 = if packet.marker { 0x80 } else { 0 } | packet.payload_type;
    out.extend_from_slice(&[b0, b1]);
    out.extend_from_slice(&packet.sequence.to_be_bytes());
    out.extend_from_slice(&packet.timestamp.to_be_bytes());
    out.extend_from_slice(&packet.ssrc.to_be_bytes());
    for c in &packet.csrc {
        out.extend_from_slice(&c.to_be_bytes());
    }
    if let Some(ext) = &packet.extension {
        out.extend_from_slice(&ext.profile.to_be_bytes());
        out.extend_from_slice(&((ext.data.len() / 4) as u16).to_be_bytes());
        out.extend_from_slice(&ext.data);
    }
    out.extend_from_slice(&packet.payload);
    Ok(())
}
