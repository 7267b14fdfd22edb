use alloc::string::String;
use alloc::vec::Vec;

use super::types::*;
use super::SdpError;
use crate::srtp::SUITE_NAME;

pub const AUDIO_PT: u8 = 96;
pub const VIDEO_PT: u8 = 97;

/// Codecs the answerer can handle, per media kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub formats: Vec<(MediaKind, PayloadFormat)>,
}

impl Capabilities {
    /// Raw 16-bit mono audio at 48 kHz and raw planar video.
    pub fn raw_media() -> Self {
        Self {
            formats: alloc::vec![
                (
                    MediaKind::Audio,
                    PayloadFormat::new(AUDIO_PT, "L16", 48_000, Some(1))
                ),
                (
                    MediaKind::Video,
                    PayloadFormat::new(VIDEO_PT, "RAW", 90_000, None)
                ),
            ],
        }
    }

    pub fn audio_only() -> Self {
        let mut c = Self::raw_media();
        c.formats.retain(|(k, _)| *k == MediaKind::Audio);
        c
    }

    fn supports(&self, kind: &MediaKind, f: &PayloadFormat) -> bool {
        self.formats
            .iter()
            .any(|(k, ours)| k == kind && ours.same_codec(f))
    }
}

/// Answerer-side transport and identity parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerParams {
    pub address: String,
    pub port: u16,
    pub ice_ufrag: String,
    pub ice_pwd: String,
    pub session_id: u64,
}

/// Builds an RFC 3264 answer. `keys[i]` is the answerer's keying material for
/// offer section `i`; it is used only if that section is accepted.
pub fn make_answer(
    offer: &SessionDescription,
    caps: &Capabilities,
    params: &AnswerParams,
    keys: &[[u8; 30]],
) -> Result<SessionDescription, SdpError> {
    if keys.len() < offer.media.len() {
        return Err(SdpError::MissingKeys {
            sections: offer.media.len(),
            keys: keys.len(),
        });
    }
    let mut answer =
        SessionDescription::new(Origin::ipv4("mcu", params.session_id, 1, &params.address));
    answer.ice_lite = true;

    let mut accepted = 0usize;
    for (offered, key) in offer.media.iter().zip(keys) {
        let section = match answer_section(offered, caps, params, key) {
            Some(s) => {
                accepted += 1;
                s
            }
            None => reject(offered),
        };
        answer.media.push(section);
    }
    if !offer.media.is_empty() && accepted == 0 {
        return Err(SdpError::NoCommonCodec);
    }
    Ok(answer)
}

fn answer_section(
    offered: &MediaSection,
    caps: &Capabilities,
    params: &AnswerParams,
    key: &[u8; 30],
) -> Option<MediaSection> {
    if offered.is_rejected() || offered.protocol != SAVPF {
        return None;
    }
    let offered_crypto = offered.crypto.as_ref().filter(|c| c.suite == SUITE_NAME)?;
    let chosen = offered
        .formats
        .iter()
        .filter_map(|pt| {
            offered
                .payload_map
                .iter()
                .find(|f| alloc::format!("{}", f.payload_type) == *pt)
        })
        .find(|f| caps.supports(&offered.kind, f))?;

    let mut m = MediaSection::new(offered.kind.clone(), params.port).with_format(chosen.clone());
    m.connection = Some(alloc::format!("IN IP4 {}", params.address));
    m.direction = offered.direction.reversed();
    m.ice_ufrag = Some(params.ice_ufrag.clone());
    m.ice_pwd = Some(params.ice_pwd.clone());
    m.crypto = Some(Crypto {
        tag: offered_crypto.tag,
        suite: SUITE_NAME.into(),
        key_material: *key,
    });
    m.candidates
        .push(Candidate::host(&params.address, params.port));
    Some(m)
}

/// The answer form of a refused offer section.
pub fn reject(offered: &MediaSection) -> MediaSection {
    let mut m = MediaSection::new(offered.kind.clone(), 0);
    m.protocol = offered.protocol.clone();
    m.formats = offered.formats.clone();
    m.direction = Direction::Inactive;
    m
}
