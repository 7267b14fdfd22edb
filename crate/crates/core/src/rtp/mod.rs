//! RTP framing (RFC 3550 fixed header), sequence arithmetic, frame
//! fragmentation, and the receive-side jitter buffer.

mod frame;
mod jitter;
mod packet;
mod seq;

pub use frame::{packetize_frame, reassemble_frame, FrameAssembler};
pub use jitter::{
    JitterBuffer, JitterOutput, JitterStats, DEFAULT_CAPACITY, DEFAULT_REORDER_WINDOW,
};
pub use packet::{
    parse_header, parse_rtp, serialize_rtp, write_rtp, HeaderExtension, HeaderInfo, RtpPacket,
    MAX_CSRC, RTP_HEADER_LEN, RTP_VERSION,
};
pub use seq::{seq_distance, seq_precedes};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RtpError {
    #[error("buffer too short for declared RTP header, CSRC, extension or padding")]
    Truncated,
    #[error("unsupported RTP version {0}")]
    UnsupportedVersion(u8),
    #[error("{0} CSRC identifiers exceed the limit of 15")]
    TooManyCsrc(usize),
    #[error("payload type {0} does not fit in 7 bits")]
    PayloadTypeOutOfRange(u8),
    #[error("header extension length {0} is not a whole number of 32-bit words")]
    BadExtensionLength(usize),
    #[error("mtu {0} leaves no room for payload after the 12-byte header")]
    MtuTooSmall(usize),
    #[error("fragment gap: expected sequence {expected}, found {found}")]
    GapDetected { expected: u16, found: u16 },
    #[error("final fragment (marker bit) missing")]
    NoMarker,
    #[error("fragments do not belong to a single frame")]
    MixedFrame,
}
