use alloc::vec::Vec;

use super::StunError;

pub const STUN_HEADER_LEN: usize = 20;
pub const MAGIC_COOKIE: u32 = 0x2112_A442;

pub const BINDING_REQUEST: u16 = 0x0001;
pub const BINDING_SUCCESS: u16 = 0x0101;
pub const BINDING_ERROR: u16 = 0x0111;

pub const ATTR_USERNAME: u16 = 0x0006;
pub const ATTR_MESSAGE_INTEGRITY: u16 = 0x0008;
pub const ATTR_ERROR_CODE: u16 = 0x0009;
pub const ATTR_XOR_MAPPED_ADDRESS: u16 = 0x0020;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StunAttribute {
    pub attr_type: u16,
    pub value: Vec<u8>,
}

impl StunAttribute {
    pub fn new(attr_type: u16, value: impl Into<Vec<u8>>) -> Self {
        Self {
            attr_type,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StunMessage {
    /// Method and class, the low 14 bits of the first header word.
    pub msg_type: u16,
    pub transaction_id: [u8; 12],
    pub attributes: Vec<StunAttribute>,
}

impl StunMessage {
    pub fn new(msg_type: u16, transaction_id: [u8; 12]) -> Self {
        Self {
            msg_type,
            transaction_id,
            attributes: Vec::new(),
        }
    }

    pub fn attribute(&self, attr_type: u16) -> Option<&[u8]> {
        self.attributes
            .iter()
            .find(|a| a.attr_type == attr_type)
            .map(|a| a.value.as_slice())
    }

    /// Body length on the wire, padding included.
    pub(super) fn body_len(attrs: &[StunAttribute]) -> usize {
        attrs.iter().map(|a| 4 + padded(a.value.len())).sum()
    }
}

pub(super) fn padded(n: usize) -> usize {
    (n + 3) & !3
}

pub(super) fn write_header(out: &mut Vec<u8>, msg_type: u16, body_len: usize, txid: &[u8; 12]) {
    out.extend_from_slice(&(msg_type & 0x3fff).to_be_bytes());
    out.extend_from_slice(&(body_len as u16).to_be_bytes());
    out.extend_from_slice(&MAGIC_COOKIE.to_be_bytes());
    out.extend_from_slice(txid);
}

pub(super) fn write_attributes(out: &mut Vec<u8>, attrs: &[StunAttribute]) {
    for a in attrs {
        out.extend_from_slice(&a.attr_type.to_be_bytes());
        out.extend_from_slice(&(a.value.len() as u16).to_be_bytes());
        out.extend_from_slice(&a.value);
        out.resize(out.len() + padded(a.value.len()) - a.value.len(), 0);
    }
}

pub fn encode_stun(msg: &StunMessage) -> Vec<u8> {
    let body = StunMessage::body_len(&msg.attributes);
    let mut out = Vec::with_capacity(STUN_HEADER_LEN + body);
    write_header(&mut out, msg.msg_type, body, &msg.transaction_id);
    write_attributes(&mut out, &msg.attributes);
    out
}

pub fn decode_stun(data: &[u8]) -> Result<StunMessage, StunError> {
    if data.first().is_some_and(|b| b & 0xc0 != 0) {
        return Err(StunError::NotStun);
    }
    if data.len() < STUN_HEADER_LEN {
        return Err(StunError::Truncated);
    }
    if data[4..8] != MAGIC_COOKIE.to_be_bytes() {
        return Err(StunError::NotStun);
    }
    let msg_type = u16::from_be_bytes([data[0], data[1]]);
    let body_len = u16::from_be_bytes([data[2], data[3]]) as usize;
    if !body_len.is_multiple_of(4) {
        return Err(StunError::BadAttrLength);
    }
    if data.len() < STUN_HEADER_LEN + body_len {
        return Err(StunError::Truncated);
    }
    let mut transaction_id = [0u8; 12];
    transaction_id.copy_from_slice(&data[8..20]);

    let mut body = &data[STUN_HEADER_LEN..STUN_HEADER_LEN + body_len];
    let mut attributes = Vec::new();
    while !body.is_empty() {
        if body.len() < 4 {
            return Err(StunError::BadAttrLength);
        }
        let attr_type = u16::from_be_bytes([body[0], body[1]]);
        let len = u16::from_be_bytes([body[2], body[3]]) as usize;
        if 4 + padded(len) > body.len() {
            return Err(StunError::BadAttrLength);
        }
        attributes.push(StunAttribute {
            attr_type,
            value: body[4..4 + len].to_vec(),
        });
        body = &body[4 + padded(len)..];
    }
    Ok(StunMessage {
        msg_type,
        transaction_id,
        attributes,
    })
}
