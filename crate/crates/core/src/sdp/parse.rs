use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use base64::Engine;

use super::types::*;
use super::SdpError;

/// Line types RFC 4566 defines that this codec keeps verbatim.
const PASSTHROUGH_TYPES: &[u8] = b"iuepbrzk";

fn malformed(line_no: usize, line: &str) -> SdpError {
    SdpError::MalformedLine {
        line: line_no,
        text: line.to_owned(),
    }
}

pub fn parse_sdp(text: &str) -> Result<SessionDescription, SdpError> {
    let mut version = false;
    let mut origin = None;
    let mut session_name = None;
    let mut timing = None;
    let mut session = SessionDescription::new(Origin::ipv4("-", 0, 0, "0.0.0.0"));
    let mut current: Option<MediaSection> = None;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let bytes = line.as_bytes();
        if bytes.len() < 2 || bytes[1] != b'=' {
            return Err(malformed(line_no, line));
        }
        let kind = bytes[0];
        let value = &line[2..];

        if !version && kind != b'v' {
            return Err(SdpError::MissingMandatory("v"));
        }

        match kind {
            b'v' => {
                if version || value != "0" {
                    return Err(malformed(line_no, line));
                }
                version = true;
            }
            b'o' if current.is_none() => {
                origin = Some(parse_origin(value).ok_or_else(|| malformed(line_no, line))?)
            }
            b's' if current.is_none() => session_name = Some(value.to_owned()),
            b't' if current.is_none() => timing = Some(value.to_owned()),
            b'c' => match current.as_mut() {
                Some(m) => m.connection = Some(value.to_owned()),
                None => session.connection = Some(value.to_owned()),
            },
            b'm' => {
                if let Some(m) = current.take() {
                    session.media.push(m);
                }
                current = Some(parse_media_line(value).ok_or_else(|| malformed(line_no, line))?);
            }
            b'a' => match current.as_mut() {
                Some(m) => parse_media_attribute(m, value, line_no, line)?,
                None if value == "ice-lite" => session.ice_lite = true,
                None => session.attributes.push(value.to_owned()),
            },
            k if PASSTHROUGH_TYPES.contains(&k) => match current.as_mut() {
                Some(m) => m.extra_lines.push(line.to_owned()),
                None => session.extra_lines.push(line.to_owned()),
            },
            _ => return Err(malformed(line_no, line)),
        }
    }
    if let Some(m) = current.take() {
        session.media.push(m);
    }

    if !version {
        return Err(SdpError::MissingMandatory("v"));
    }
    session.origin = origin.ok_or(SdpError::MissingMandatory("o"))?;
    session.session_name = session_name.ok_or(SdpError::MissingMandatory("s"))?;
    session.timing = timing.ok_or(SdpError::MissingMandatory("t"))?;

    for m in &session.media {
        for f in &m.payload_map {
            let pt = alloc::format!("{}", f.payload_type);
            if !m.formats.contains(&pt) {
                return Err(SdpError::UnlistedPayloadType(f.payload_type));
            }
        }
    }
    Ok(session)
}

fn parse_origin(value: &str) -> Option<Origin> {
    let mut it = value.split(' ');
    let origin = Origin {
        username: it.next()?.to_owned(),
        session_id: it.next()?.parse().ok()?,
        session_version: it.next()?.parse().ok()?,
        net_type: it.next()?.to_owned(),
        address_type: it.next()?.to_owned(),
        address: it.next()?.to_owned(),
    };
    it.next().is_none().then_some(origin)
}

fn parse_media_line(value: &str) -> Option<MediaSection> {
    let mut it = value.split(' ');
    let kind = MediaKind::parse(it.next()?);
    let port = it.next()?.parse().ok()?;
    let protocol = it.next()?;
    if protocol.is_empty() {
        return None;
    }
    let mut m = MediaSection::new(kind, port);
    m.protocol = protocol.to_owned();
    m.formats = it.map(ToOwned::to_owned).collect();
    if m.formats.is_empty() || m.formats.iter().any(String::is_empty) {
        return None;
    }
    Some(m)
}

fn parse_media_attribute(
    m: &mut MediaSection,
    value: &str,
    line_no: usize,
    line: &str,
) -> Result<(), SdpError> {
    let (name, arg) = match value.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (value, None),
    };
    match (name, arg) {
        ("rtpmap", Some(arg)) => {
            let f = parse_rtpmap(arg).ok_or_else(|| malformed(line_no, line))?;
            m.payload_map.push(f);
        }
        ("ice-ufrag", Some(arg)) if m.ice_ufrag.is_none() => m.ice_ufrag = Some(arg.to_owned()),
        ("ice-pwd", Some(arg)) if m.ice_pwd.is_none() => m.ice_pwd = Some(arg.to_owned()),
        ("crypto", Some(arg)) if m.crypto.is_none() => m.crypto = Some(parse_crypto(arg)?),
        ("candidate", Some(arg)) => match parse_candidate(arg) {
            Some(c) => m.candidates.push(c),
            None => m.attributes.push(value.to_owned()),
        },
        (d, None) if Direction::parse(d).is_some() => {
            m.direction = Direction::parse(d).expect("checked");
        }
        _ => m.attributes.push(value.to_owned()),
    }
    Ok(())
}

fn parse_rtpmap(arg: &str) -> Option<PayloadFormat> {
    let (pt, rest) = arg.split_once(' ')?;
    let mut parts = rest.split('/');
    let encoding = parts.next()?;
    let clock_rate = parts.next()?.parse().ok()?;
    let channels = match parts.next() {
        Some(c) => Some(c.parse().ok()?),
        None => None,
    };
    if parts.next().is_some() || encoding.is_empty() {
        return None;
    }
    Some(PayloadFormat {
        payload_type: pt.parse().ok().filter(|p| *p < 128)?,
        encoding: encoding.to_owned(),
        clock_rate,
        channels,
    })
}

/// `<tag> <suite> inline:<base64>[|lifetime]`. MKI parameters are refused.
fn parse_crypto(arg: &str) -> Result<Crypto, SdpError> {
    let mut it = arg.split(' ');
    let tag = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or(SdpError::BadCrypto)?;
    let suite = it
        .next()
        .filter(|s| !s.is_empty())
        .ok_or(SdpError::BadCrypto)?;
    let params = it
        .next()
        .and_then(|p| p.strip_prefix("inline:"))
        .ok_or(SdpError::BadCrypto)?;
    let mut parts = params.split('|');
    let b64 = parts.next().unwrap_or_default();
    for extra in parts {
        if extra.contains(':') {
            return Err(SdpError::BadCrypto);
        }
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|_| SdpError::BadCrypto)?;
    let key_material: [u8; 30] = bytes.try_into().map_err(|_| SdpError::BadCrypto)?;
    Ok(Crypto {
        tag,
        suite: suite.to_owned(),
        key_material,
    })
}

fn parse_candidate(arg: &str) -> Option<Candidate> {
    let t: Vec<&str> = arg.split(' ').collect();
    if t.len() != 8 || t[6] != "typ" {
        return None;
    }
    Some(Candidate {
        foundation: t[0].to_owned(),
        component: t[1].parse().ok()?,
        transport: t[2].to_owned(),
        priority: t[3].parse().ok()?,
        address: t[4].to_owned(),
        port: t[5].parse().ok()?,
        kind: t[7].to_owned(),
    })
}
