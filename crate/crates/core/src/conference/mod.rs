//! Rooms, participants and the routing and mixing between them, plus the
//! [`Mcu`] that binds rooms to a shared datagram port.
//!
//! Nothing here performs IO or reads a clock. Callers pass virtual time in
//! and collect datagrams and events out.

mod estimator;
mod mcu;
mod participant;
mod room;

pub use estimator::*;
pub use mcu::{Mcu, McuConfig, McuCounters, McuEvent, Transmit};
pub use participant::{NegotiatedKind, OutboundStream, Participant, ParticipantStats, Transport};
pub use room::*;

use alloc::string::String;

use crate::sdp::SdpError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConferenceError {
    #[error("participant {0:?} already present")]
    DuplicateId(String),
    #[error("no participant {0:?}")]
    NoSuchParticipant(String),
    #[error("packet from unknown source {0:?}")]
    UnknownSource(String),
    #[error("no room {0:?}")]
    NoSuchRoom(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("unusable session description: {0}")]
    BadSdp(&'static str),
    #[error("payload type {0} not negotiated for sending")]
    UnknownPayloadType(u8),
    #[error("SSRC {0:#010x} already used by another stream")]
    SsrcCollision(u32),
}
