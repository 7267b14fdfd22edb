//! STUN (RFC 5389) codec and the ICE-lite responder the MCU runs on its
//! media port.
//!
//! Only the attributes the MCU needs are interpreted. Everything else is
//! carried as opaque TLVs, and FINGERPRINT is neither sent nor checked.

mod ice;
mod message;

pub use ice::{handle_binding, verify_message_integrity, IceLiteEndpoint};
pub use message::{
    decode_stun, encode_stun, StunAttribute, StunMessage, ATTR_ERROR_CODE, ATTR_MESSAGE_INTEGRITY,
    ATTR_USERNAME, ATTR_XOR_MAPPED_ADDRESS, BINDING_ERROR, BINDING_REQUEST, BINDING_SUCCESS,
    MAGIC_COOKIE, STUN_HEADER_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StunError {
    #[error("not a STUN message")]
    NotStun,
    #[error("message shorter than its header or declared length")]
    Truncated,
    #[error("attribute length inconsistent with message length")]
    BadAttrLength,
}

/// What a datagram arriving on the shared media port is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatagramKind {
    Stun,
    Rtp,
    Garbage,
}

/// Demultiplexes by first byte (RFC 7983): 0..=3 with the magic cookie is
/// STUN, 128..=191 is RTP or SRTP, anything else is dropped.
pub fn classify_datagram(data: &[u8]) -> DatagramKind {
    match data.first() {
        Some(0..=3)
            if data.len() >= STUN_HEADER_LEN && data[4..8] == MAGIC_COOKIE.to_be_bytes() =>
        {
            DatagramKind::Stun
        }
        Some(128..=191) if data.len() >= crate::rtp::RTP_HEADER_LEN => DatagramKind::Rtp,
        _ => DatagramKind::Garbage,
    }
}
