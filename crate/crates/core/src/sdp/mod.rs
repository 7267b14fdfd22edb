//! Session description subset (RFC 4566) with SDES keying (RFC 4568) and
//! ICE credentials, plus the answerer side of offer/answer (RFC 3264).
//!
//! Unrecognized `a=` lines survive a parse/serialize cycle verbatim.
//! Serialization is canonical, so `serialize(parse(x))` normalizes `x` and
//! a second pass is the identity.

mod answer;
mod parse;
mod types;
mod write;

pub use answer::{
    make_answer, reject as rejected_section, AnswerParams, Capabilities, AUDIO_PT, VIDEO_PT,
};
pub use parse::parse_sdp;
pub use types::*;
pub use write::serialize_sdp;

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SdpError {
    #[error("malformed line {line}: {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("mandatory {0}= line missing")]
    MissingMandatory(&'static str),
    #[error("crypto attribute does not carry exactly 30 bytes of inline key material")]
    BadCrypto,
    #[error("rtpmap for payload type {0} not listed on the m= line")]
    UnlistedPayloadType(u8),
    #[error("no offered section shares a codec with the answerer")]
    NoCommonCodec,
    #[error("{keys} answer keys supplied for {sections} offer sections")]
    MissingKeys { sections: usize, keys: usize },
}
