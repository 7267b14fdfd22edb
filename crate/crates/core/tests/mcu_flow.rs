use std::net::{Ipv4Addr, SocketAddrV4};
use std::time::Duration;

use mcu_core::conference::{ConferenceConfig, Mcu, McuConfig, McuEvent, Mode};
use mcu_core::media::{MediaType, AUDIO_FRAME_BYTES};
use mcu_core::rtp::{packetize_frame, RtpPacket};
use mcu_core::sdp::*;
use mcu_core::srtp::SrtpSession;
use mcu_core::stun::{decode_stun, encode_stun, StunMessage, BINDING_SUCCESS};

const MCU: SocketAddrV4 = SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 4000);

struct Client {
    addr: SocketAddrV4,
    tx: SrtpSession,
    rx: SrtpSession,
    ufrag: String,
    pwd: String,
    ssrc: u32,
}

fn mcu(mode: Mode) -> Mcu {
    Mcu::new(McuConfig {
        local_addr: MCU,
        seed: 7,
        default_mode: mode,
        conference: ConferenceConfig::default(),
    })
}

fn join(mcu: &mut Mcu, room: &str, n: u8, kinds: &[MediaKind]) -> Client {
    let key = [n; 30];
    let mut offer = SessionDescription::new(Origin::ipv4("-", 1, 1, "10.0.1.1"));
    for kind in kinds {
        let f = match kind {
            MediaKind::Audio => PayloadFormat::new(AUDIO_PT, "L16", 48_000, Some(1)),
            _ => PayloadFormat::new(VIDEO_PT, "RAW", 90_000, None),
        };
        let mut m = MediaSection::new(kind.clone(), 5000).with_format(f);
        m.crypto = Some(Crypto {
            tag: 1,
            suite: "AES_CM_128_HMAC_SHA1_80".into(),
            key_material: key,
        });
        m.ice_ufrag = Some(format!("c{n}"));
        m.ice_pwd = Some("clientpasswordclientpassword".into());
        offer.media.push(m);
    }
    // Exercise the text form the way a remote client would.
    let offer = parse_sdp(&serialize_sdp(&offer)).unwrap();
    let answer = parse_sdp(&serialize_sdp(
        &mcu.join(room, &format!("p{n}"), &offer, 320).unwrap(),
    ))
    .unwrap();
    assert!(answer.ice_lite);
    let m = &answer.media[0];
    assert_eq!(m.candidates[0].port, MCU.port());
    Client {
        addr: SocketAddrV4::new(Ipv4Addr::new(10, 0, 1, n), 5000),
        tx: SrtpSession::from_keying_material(&key).unwrap(),
        rx: SrtpSession::from_keying_material(&m.crypto.as_ref().unwrap().key_material).unwrap(),
        ufrag: m.ice_ufrag.clone().unwrap(),
        pwd: m.ice_pwd.clone().unwrap(),
        ssrc: 0x1000 * u32::from(n),
    }
}

fn connect(mcu: &mut Mcu, c: &Client, now: Duration) {
    let req = StunMessage::binding_request(
        [c.ssrc as u8; 12],
        &format!("{}:client", c.ufrag),
        c.pwd.as_bytes(),
    );
    mcu.handle_datagram(c.addr, &encode_stun(&req), now);
    let out = mcu.drain_transmits();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].dst, c.addr);
    let resp = decode_stun(&out[0].payload).unwrap();
    assert_eq!(resp.msg_type, BINDING_SUCCESS);
    assert_eq!(resp.xor_mapped_address(), Some(c.addr));
    assert!(mcu_core::stun::verify_message_integrity(
        &out[0].payload,
        c.pwd.as_bytes()
    ));
}

fn send_audio(mcu: &mut Mcu, c: &mut Client, frame_no: u16, now: Duration) {
    let payload = vec![frame_no as u8; AUDIO_FRAME_BYTES];
    for p in packetize_frame(
        &payload,
        AUDIO_PT,
        c.ssrc,
        u32::from(frame_no) * 960,
        frame_no * 2,
        1200,
    )
    .unwrap()
    {
        let wire = c.tx.protect(&p).unwrap();
        mcu.handle_datagram(c.addr, &wire, now);
    }
}

fn received(mcu: &mut Mcu, clients: &mut [&mut Client]) -> Vec<(usize, RtpPacket)> {
    let mut out = Vec::new();
    for t in mcu.drain_transmits() {
        let i = clients
            .iter()
            .position(|c| c.addr == t.dst)
            .expect("sent to a client");
        out.push((i, clients[i].rx.unprotect(&t.payload).unwrap()));
    }
    out
}

#[test]
fn forward_three_party() {
    let mut m = mcu(Mode::Forward);
    let kinds = [MediaKind::Audio];
    let (mut a, mut b, mut c) = (
        join(&mut m, "r", 1, &kinds),
        join(&mut m, "r", 2, &kinds),
        join(&mut m, "r", 3, &kinds),
    );
    for cl in [&a, &b, &c] {
        connect(&mut m, cl, Duration::ZERO);
    }
    send_audio(&mut m, &mut a, 0, Duration::from_millis(1));
    let got = received(&mut m, &mut [&mut a, &mut b, &mut c]);
    assert_eq!(got.len(), 4);
    assert!(got.iter().all(|(i, p)| *i != 0 && p.ssrc == 0x1000));
    let stats = m.stats("r").unwrap();
    assert_eq!(stats[0].1.packets_received, 2);
    assert_eq!(stats[1].1.packets_sent, 2);
    assert_eq!(stats[1].1.streams_in, 1);
}

#[test]
fn unauthenticated_and_unknown_traffic_is_dropped() {
    let mut m = mcu(Mode::Forward);
    let mut a = join(&mut m, "r", 1, &[MediaKind::Audio]);
    let b = join(&mut m, "r", 2, &[MediaKind::Audio]);
    // No binding yet: the MCU does not know a's address.
    send_audio(&mut m, &mut a, 0, Duration::ZERO);
    assert_eq!(m.counters().unknown_source, 2);
    connect(&mut m, &a, Duration::ZERO);
    connect(&mut m, &b, Duration::ZERO);
    let mut p = RtpPacket::new(AUDIO_PT, 1, 0, 0x1000);
    p.payload = vec![1; 10];
    let mut wire = a.tx.protect(&p).unwrap();
    wire[14] ^= 0xff;
    m.handle_datagram(a.addr, &wire, Duration::ZERO);
    assert_eq!(m.counters().auth_failures, 1);
    m.handle_datagram(a.addr, &[0x17, 3, 3], Duration::ZERO);
    assert_eq!(m.counters().garbage, 1);
    // Wrong password: 401, no latch.
    let req = StunMessage::binding_request([0; 12], &format!("{}:x", b.ufrag), b"nope");
    m.handle_datagram(
        SocketAddrV4::new(Ipv4Addr::new(6, 6, 6, 6), 1),
        &encode_stun(&req),
        Duration::ZERO,
    );
    let resp = decode_stun(&m.drain_transmits().pop().unwrap().payload).unwrap();
    assert_eq!(resp.error_code(), Some(401));
}

#[test]
fn mix_mode_sends_two_composites() {
    let mut m = mcu(Mode::Mix);
    let kinds = [MediaKind::Audio, MediaKind::Video];
    let (mut a, mut b) = (join(&mut m, "r", 1, &kinds), join(&mut m, "r", 2, &kinds));
    connect(&mut m, &a, Duration::ZERO);
    connect(&mut m, &b, Duration::ZERO);
    m.poll(Duration::from_millis(100));
    let got = received(&mut m, &mut [&mut a, &mut b]);
    for i in 0..2 {
        let ssrcs: std::collections::BTreeSet<u32> = got
            .iter()
            .filter(|(j, _)| *j == i)
            .map(|(_, p)| p.ssrc)
            .collect();
        assert_eq!(ssrcs.len(), 2);
    }
    assert_eq!(m.next_timeout(), Duration::from_millis(120));
}

#[test]
fn loss_events_and_recording() {
    let mut m = mcu(Mode::Forward);
    let mut a = join(&mut m, "r", 1, &[MediaKind::Audio]);
    connect(&mut m, &a, Duration::ZERO);
    m.set_recording("r", true).unwrap();
    send_audio(&mut m, &mut a, 0, Duration::ZERO);
    send_audio(&mut m, &mut a, 2, Duration::from_millis(40));
    m.poll(Duration::from_millis(200));
    let events = m.drain_events();
    let losses: Vec<u16> = events
        .iter()
        .filter_map(|e| match e {
            McuEvent::LossDeclared { loss, .. } => Some(loss.seq),
            _ => None,
        })
        .collect();
    assert_eq!(losses, vec![2, 3]);
    let records: Vec<_> = events
        .iter()
        .filter_map(|e| match e {
            McuEvent::Record { chunk, .. } => Some(chunk),
            _ => None,
        })
        .collect();
    assert_eq!(records.len(), 2);
    assert!(records
        .iter()
        .all(|c| c.kind == MediaType::Audio && c.stream_id == 0x1000));
    assert_eq!(records[1].timestamp_us - records[0].timestamp_us, 40_000);
}
