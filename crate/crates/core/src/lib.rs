//! Protocol, crypto, and media-processing core of a WebRTC-style multipoint
//! control unit.
//!
//! Everything in this crate is sans-IO: callers feed datagrams, signaling
//! descriptions, and a virtual clock in, and drain transmits and events out.
//! The `mcu` crate wraps it with sockets, files, a network simulator and a CLI.
//!
//! Module map:
//!
//! * [`rtp`]: RTP codec, serial arithmetic, fragmentation, jitter buffer.
//! * [`srtp`]: AES-CM / HMAC-SHA1-80 packet protection and key derivation.
//! * [`sdp`]: session description subset, offer/answer.
//! * [`stun`]: STUN codec and the ICE-lite responder.
//! * [`media`]: raw codec, audio mixer, scaler, grid composer, profile ladder.
//! * [`conference`]: rooms, routing matrix, forward/mix modes, adaptation.
//! * [`recording`]: chunked recording container and replay scheduling.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod conference;
pub mod media;
pub mod recording;
pub mod rtp;
pub mod sdp;
pub mod srtp;
pub mod stun;

pub use core::time::Duration;
