use alloc::string::String;
use alloc::vec::Vec;
use core::net::{Ipv4Addr, SocketAddrV4};

use hmac::{Hmac, Mac};
use sha1::Sha1;

use super::message::*;
use super::StunError;

const MI_LEN: usize = 20;
const FAMILY_IPV4: u8 = 0x01;

fn integrity_tag(
    msg_type: u16,
    txid: &[u8; 12],
    prefix: &[StunAttribute],
    key: &[u8],
) -> [u8; MI_LEN] {
    // The length field covers everything up to and including the
    // MESSAGE-INTEGRITY attribute itself.
    let body = StunMessage::body_len(prefix) + 4 + MI_LEN;
    let mut buf = Vec::with_capacity(STUN_HEADER_LEN + body);
    write_header(&mut buf, msg_type, body, txid);
    write_attributes(&mut buf, prefix);
    let mut mac = <Hmac<Sha1> as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(&buf);
    mac.finalize().into_bytes().into()
}

impl StunMessage {
    /// Appends MESSAGE-INTEGRITY keyed with a short-term credential.
    pub fn add_message_integrity(&mut self, key: &[u8]) {
        let tag = integrity_tag(self.msg_type, &self.transaction_id, &self.attributes, key);
        self.attributes
            .push(StunAttribute::new(ATTR_MESSAGE_INTEGRITY, tag.to_vec()));
    }

    /// Verifies the first MESSAGE-INTEGRITY attribute as if the message had
    /// been encoded by [`encode_stun`]. Attributes following it are outside
    /// its coverage and ignored. Received datagrams should go through
    /// [`verify_message_integrity`] instead, since senders may pad with
    /// arbitrary bytes.
    pub fn check_message_integrity(&self, key: &[u8]) -> bool {
        verify_message_integrity(&encode_stun(self), key)
    }

    pub fn username(&self) -> Option<&str> {
        core::str::from_utf8(self.attribute(ATTR_USERNAME)?).ok()
    }

    pub fn xor_mapped_address(&self) -> Option<SocketAddrV4> {
        decode_xor_address(self.attribute(ATTR_XOR_MAPPED_ADDRESS)?)
    }

    pub fn error_code(&self) -> Option<u16> {
        let v = self.attribute(ATTR_ERROR_CODE)?;
        (v.len() >= 4).then(|| u16::from(v[2] & 0x07) * 100 + u16::from(v[3]))
    }

    /// A connectivity check as a full ICE agent on the client side sends it.
    pub fn binding_request(transaction_id: [u8; 12], username: &str, key: &[u8]) -> Self {
        let mut m = Self::new(BINDING_REQUEST, transaction_id);
        m.attributes
            .push(StunAttribute::new(ATTR_USERNAME, username.as_bytes()));
        m.add_message_integrity(key);
        m
    }
}

/// Verifies MESSAGE-INTEGRITY over the exact bytes received.
pub fn verify_message_integrity(raw: &[u8], key: &[u8]) -> bool {
    if raw.len() < STUN_HEADER_LEN {
        return false;
    }
    let declared = u16::from_be_bytes([raw[2], raw[3]]) as usize;
    let end = (STUN_HEADER_LEN + declared).min(raw.len());
    let mut off = STUN_HEADER_LEN;
    while off + 4 <= end {
        let attr_type = u16::from_be_bytes([raw[off], raw[off + 1]]);
        let len = u16::from_be_bytes([raw[off + 2], raw[off + 3]]) as usize;
        if attr_type == ATTR_MESSAGE_INTEGRITY {
            if len != MI_LEN || off + 4 + MI_LEN > end {
                return false;
            }
            let mut mac =
                <Hmac<Sha1> as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
            mac.update(&raw[..2]);
            mac.update(&((off + 4 + MI_LEN - STUN_HEADER_LEN) as u16).to_be_bytes());
            mac.update(&raw[4..off]);
            return mac.verify_slice(&raw[off + 4..off + 4 + MI_LEN]).is_ok();
        }
        off += 4 + padded(len);
    }
    false
}

pub(super) fn encode_xor_address(addr: SocketAddrV4) -> Vec<u8> {
    let mut v = Vec::with_capacity(8);
    v.push(0);
    v.push(FAMILY_IPV4);
    v.extend_from_slice(&(addr.port() ^ (MAGIC_COOKIE >> 16) as u16).to_be_bytes());
    v.extend_from_slice(&(u32::from(*addr.ip()) ^ MAGIC_COOKIE).to_be_bytes());
    v
}

pub(super) fn decode_xor_address(v: &[u8]) -> Option<SocketAddrV4> {
    if v.len() != 8 || v[1] != FAMILY_IPV4 {
        return None;
    }
    let port = u16::from_be_bytes([v[2], v[3]]) ^ (MAGIC_COOKIE >> 16) as u16;
    let ip = u32::from_be_bytes([v[4], v[5], v[6], v[7]]) ^ MAGIC_COOKIE;
    Some(SocketAddrV4::new(Ipv4Addr::from(ip), port))
}

fn error_response(request: &StunMessage, code: u16, reason: &str) -> StunMessage {
    let mut value = Vec::with_capacity(4 + reason.len());
    value.extend_from_slice(&[0, 0, (code / 100) as u8, (code % 100) as u8]);
    value.extend_from_slice(reason.as_bytes());
    let mut m = StunMessage::new(BINDING_ERROR, request.transaction_id);
    m.attributes
        .push(StunAttribute::new(ATTR_ERROR_CODE, value));
    m
}

/// Lite-agent state for one media session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IceLiteEndpoint {
    pub local_ufrag: String,
    pub local_pwd: String,
    latched_remote: Option<SocketAddrV4>,
}

impl IceLiteEndpoint {
    pub fn new(local_ufrag: impl Into<String>, local_pwd: impl Into<String>) -> Self {
        Self {
            local_ufrag: local_ufrag.into(),
            local_pwd: local_pwd.into(),
            latched_remote: None,
        }
    }

    pub fn latched_remote(&self) -> Option<SocketAddrV4> {
        self.latched_remote
    }

    pub fn reset(&mut self) {
        self.latched_remote = None;
    }

    fn username_matches(&self, username: &str) -> bool {
        username
            .split_once(':')
            .is_some_and(|(local, remote)| local == self.local_ufrag && !remote.is_empty())
    }
}

/// Answers a connectivity check given the datagram as received. Success
/// responses carry the source as XOR-MAPPED-ADDRESS and are signed with
/// `local_pwd`; the first authenticated request latches its source as the
/// media remote. Only undecodable input is an error.
pub fn handle_binding(
    datagram: &[u8],
    source: SocketAddrV4,
    endpoint: &mut IceLiteEndpoint,
) -> Result<StunMessage, StunError> {
    let request = decode_stun(datagram)?;
    if request.msg_type != BINDING_REQUEST {
        return Ok(error_response(&request, 400, "Bad Request"));
    }
    let authorized = request
        .username()
        .is_some_and(|u| endpoint.username_matches(u))
        && verify_message_integrity(datagram, endpoint.local_pwd.as_bytes());
    if !authorized {
        return Ok(error_response(&request, 401, "Unauthorized"));
    }
    if endpoint.latched_remote.is_none() {
        endpoint.latched_remote = Some(source);
    }
    let mut resp = StunMessage::new(BINDING_SUCCESS, request.transaction_id);
    resp.attributes.push(StunAttribute::new(
        ATTR_XOR_MAPPED_ADDRESS,
        encode_xor_address(source),
    ));
    resp.add_message_integrity(endpoint.local_pwd.as_bytes());
    Ok(resp)
}
