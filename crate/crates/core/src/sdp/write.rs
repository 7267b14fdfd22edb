use alloc::string::String;
use core::fmt::Write;

use base64::Engine;

use super::types::*;

/// Canonical text form: CRLF endings; within a media section the attribute
/// order is rtpmap, direction, ICE credentials, crypto, candidates, opaque.
pub fn serialize_sdp(sd: &SessionDescription) -> String {
    let mut out = String::new();
    // Writing into a String cannot fail.
    let _ = write_session(&mut out, sd);
    out
}

fn write_session(out: &mut String, sd: &SessionDescription) -> core::fmt::Result {
    let o = &sd.origin;
    write!(out, "v=0\r\n")?;
    write!(
        out,
        "o={} {} {} {} {} {}\r\n",
        o.username, o.session_id, o.session_version, o.net_type, o.address_type, o.address
    )?;
    write!(out, "s={}\r\n", sd.session_name)?;
    if let Some(c) = &sd.connection {
        write!(out, "c={c}\r\n")?;
    }
    for l in &sd.extra_lines {
        write!(out, "{l}\r\n")?;
    }
    write!(out, "t={}\r\n", sd.timing)?;
    if sd.ice_lite {
        write!(out, "a=ice-lite\r\n")?;
    }
    for a in &sd.attributes {
        write!(out, "a={a}\r\n")?;
    }
    for m in &sd.media {
        write_media(out, m)?;
    }
    Ok(())
}

fn write_media(out: &mut String, m: &MediaSection) -> core::fmt::Result {
    write!(out, "m={} {} {}", m.kind, m.port, m.protocol)?;
    for f in &m.formats {
        write!(out, " {f}")?;
    }
    write!(out, "\r\n")?;
    if let Some(c) = &m.connection {
        write!(out, "c={c}\r\n")?;
    }
    for l in &m.extra_lines {
        write!(out, "{l}\r\n")?;
    }
    for f in &m.payload_map {
        write!(
            out,
            "a=rtpmap:{} {}/{}",
            f.payload_type, f.encoding, f.clock_rate
        )?;
        if let Some(ch) = f.channels {
            write!(out, "/{ch}")?;
        }
        write!(out, "\r\n")?;
    }
    write!(out, "a={}\r\n", m.direction.as_str())?;
    if let Some(u) = &m.ice_ufrag {
        write!(out, "a=ice-ufrag:{u}\r\n")?;
    }
    if let Some(p) = &m.ice_pwd {
        write!(out, "a=ice-pwd:{p}\r\n")?;
    }
    if let Some(c) = &m.crypto {
        let key = base64::engine::general_purpose::STANDARD.encode(c.key_material);
        write!(out, "a=crypto:{} {} inline:{key}\r\n", c.tag, c.suite)?;
    }
    for c in &m.candidates {
        write!(
            out,
            "a=candidate:{} {} {} {} {} {} typ {}\r\n",
            c.foundation, c.component, c.transport, c.priority, c.address, c.port, c.kind
        )?;
    }
    for a in &m.attributes {
        write!(out, "a={a}\r\n")?;
    }
    Ok(())
}
