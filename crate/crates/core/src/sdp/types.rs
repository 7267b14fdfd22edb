use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Origin {
    pub username: String,
    pub session_id: u64,
    pub session_version: u64,
    pub net_type: String,
    pub address_type: String,
    pub address: String,
}

impl Origin {
    pub fn ipv4(username: &str, session_id: u64, session_version: u64, address: &str) -> Self {
        Self {
            username: username.into(),
            session_id,
            session_version,
            net_type: "IN".into(),
            address_type: "IP4".into(),
            address: address.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionDescription {
    pub origin: Origin,
    pub session_name: String,
    /// Value of the session-level `c=` line, e.g. `IN IP4 10.0.0.1`.
    pub connection: Option<String>,
    /// Value of the `t=` line.
    pub timing: String,
    pub ice_lite: bool,
    /// Other session-level lines of known RFC 4566 types (`i=`, `b=`, ...),
    /// kept verbatim including the type prefix.
    pub extra_lines: Vec<String>,
    /// Unrecognized session-level `a=` values, re-emitted verbatim.
    pub attributes: Vec<String>,
    pub media: Vec<MediaSection>,
}

impl SessionDescription {
    pub fn new(origin: Origin) -> Self {
        Self {
            origin,
            session_name: "-".into(),
            connection: None,
            timing: "0 0".into(),
            ice_lite: false,
            extra_lines: Vec::new(),
            attributes: Vec::new(),
            media: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MediaKind {
    Audio,
    Video,
    Other(String),
}

impl MediaKind {
    pub fn parse(s: &str) -> Self {
        match s {
            "audio" => Self::Audio,
            "video" => Self::Video,
            other => Self::Other(other.into()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Self::Audio => "audio",
            Self::Video => "video",
            Self::Other(s) => s,
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    SendRecv,
    SendOnly,
    RecvOnly,
    Inactive,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sendrecv" => Self::SendRecv,
            "sendonly" => Self::SendOnly,
            "recvonly" => Self::RecvOnly,
            "inactive" => Self::Inactive,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SendRecv => "sendrecv",
            Self::SendOnly => "sendonly",
            Self::RecvOnly => "recvonly",
            Self::Inactive => "inactive",
        }
    }

    /// The direction an answerer uses for an offered direction.
    pub fn reversed(self) -> Self {
        match self {
            Self::SendOnly => Self::RecvOnly,
            Self::RecvOnly => Self::SendOnly,
            d => d,
        }
    }

    pub fn sends(self) -> bool {
        matches!(self, Self::SendRecv | Self::SendOnly)
    }

    pub fn receives(self) -> bool {
        matches!(self, Self::SendRecv | Self::RecvOnly)
    }
}

/// One `a=rtpmap` entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PayloadFormat {
    pub payload_type: u8,
    pub encoding: String,
    pub clock_rate: u32,
    pub channels: Option<u8>,
}

impl PayloadFormat {
    pub fn new(payload_type: u8, encoding: &str, clock_rate: u32, channels: Option<u8>) -> Self {
        Self {
            payload_type,
            encoding: encoding.into(),
            clock_rate,
            channels,
        }
    }

    /// Same codec irrespective of payload type number.
    pub fn same_codec(&self, other: &PayloadFormat) -> bool {
        self.encoding.eq_ignore_ascii_case(&other.encoding)
            && self.clock_rate == other.clock_rate
            && self.channels.unwrap_or(1) == other.channels.unwrap_or(1)
    }
}

/// SDES keying attribute (RFC 4568) carrying 16 bytes of master key followed
/// by 14 bytes of master salt.
#[derive(Clone, PartialEq, Eq)]
pub struct Crypto {
    pub tag: u32,
    pub suite: String,
    pub key_material: [u8; 30],
}

impl fmt::Debug for Crypto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Crypto")
            .field("tag", &self.tag)
            .field("suite", &self.suite)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub foundation: String,
    pub component: u16,
    pub transport: String,
    pub priority: u32,
    pub address: String,
    pub port: u16,
    pub kind: String,
}

impl Candidate {
    pub fn host(address: &str, port: u16) -> Self {
        Self {
            foundation: "1".into(),
            component: 1,
            transport: "udp".into(),
            priority: 2_130_706_431,
            address: address.into(),
            port,
            kind: "host".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaSection {
    pub kind: MediaKind,
    /// 0 means the section is rejected or disabled.
    pub port: u16,
    pub protocol: String,
    /// Format tokens of the `m=` line in order.
    pub formats: Vec<String>,
    pub payload_map: Vec<PayloadFormat>,
    pub connection: Option<String>,
    pub direction: Direction,
    pub ice_ufrag: Option<String>,
    pub ice_pwd: Option<String>,
    pub crypto: Option<Crypto>,
    pub candidates: Vec<Candidate>,
    pub extra_lines: Vec<String>,
    pub attributes: Vec<String>,
}

pub const SAVPF: &str = "RTP/SAVPF";

impl MediaSection {
    pub fn new(kind: MediaKind, port: u16) -> Self {
        Self {
            kind,
            port,
            protocol: SAVPF.into(),
            formats: Vec::new(),
            payload_map: Vec::new(),
            connection: None,
            direction: Direction::SendRecv,
            ice_ufrag: None,
            ice_pwd: None,
            crypto: None,
            candidates: Vec::new(),
            extra_lines: Vec::new(),
            attributes: Vec::new(),
        }
    }

    /// Adds a format both to the `m=` line and the rtpmap list.
    pub fn with_format(mut self, format: PayloadFormat) -> Self {
        self.formats.push(alloc::format!("{}", format.payload_type));
        self.payload_map.push(format);
        self
    }

    pub fn is_rejected(&self) -> bool {
        self.port == 0
    }
}
