//! SRTP (RFC 3711) for the single suite AES_CM_128_HMAC_SHA1_80.
//!
//! Key derivation uses key_derivation_rate 0, no MKI is ever emitted or
//! parsed, and the 10-byte authentication tag covers the RTP packet followed
//! by the 32-bit rollover counter.

mod keys;
mod replay;
mod session;

pub use keys::{
    aes_cm_keystream, derive_session_keys, split_keying_material, SessionKeys, AUTH_KEY_LEN,
    KEYING_MATERIAL_LEN, MASTER_KEY_LEN, MASTER_SALT_LEN,
};
pub use replay::{ReplayWindow, REPLAY_WINDOW_SIZE};
pub use session::{SrtpSession, AUTH_TAG_LEN, SUITE_NAME};

use crate::rtp::RtpError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SrtpError {
    #[error("master key or salt has wrong length ({0} bytes)")]
    BadKeyLength(usize),
    #[error("authentication tag mismatch")]
    AuthFail,
    #[error("packet index {0} already received or outside the replay window")]
    ReplayFail(u64),
    #[error("packet shorter than header plus authentication tag")]
    Truncated,
    #[error(transparent)]
    Rtp(#[from] RtpError),
}
