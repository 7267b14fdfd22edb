use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;

use super::SrtpError;

pub const MASTER_KEY_LEN: usize = 16;
pub const MASTER_SALT_LEN: usize = 14;
pub const KEYING_MATERIAL_LEN: usize = MASTER_KEY_LEN + MASTER_SALT_LEN;
pub const AUTH_KEY_LEN: usize = 20;

const LABEL_CIPHER_KEY: u8 = 0x00;
const LABEL_AUTH_KEY: u8 = 0x01;
const LABEL_SALT: u8 = 0x02;

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub cipher_key: [u8; MASTER_KEY_LEN],
    pub auth_key: [u8; AUTH_KEY_LEN],
    pub session_salt: [u8; MASTER_SALT_LEN],
}

impl core::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("SessionKeys(..)")
    }
}

/// XORs the AES counter-mode keystream starting at block `iv` into `buf`.
/// The counter is the full 128-bit block, incremented big-endian.
pub fn aes_cm_apply(cipher: &Aes128, iv: [u8; 16], buf: &mut [u8]) {
    let mut counter = u128::from_be_bytes(iv);
    for chunk in buf.chunks_mut(16) {
        let mut block = counter.to_be_bytes().into();
        cipher.encrypt_block(&mut block);
        for (b, k) in chunk.iter_mut().zip(block.iter()) {
            *b ^= k;
        }
        counter = counter.wrapping_add(1);
    }
}

/// Fills `out` with raw keystream (the transform applied to zeros).
pub fn aes_cm_keystream(key: &[u8; 16], iv: [u8; 16], out: &mut [u8]) {
    out.fill(0);
    aes_cm_apply(&Aes128::new(key.into()), iv, out);
}

/// PRF output for one label with key_derivation_rate = 0: the label sits in
/// byte 7 of the 112-bit key_id and the packet-index part is zero.
fn prf(cipher: &Aes128, master_salt: &[u8; MASTER_SALT_LEN], label: u8, out: &mut [u8]) {
    let mut iv = [0u8; 16];
    iv[..MASTER_SALT_LEN].copy_from_slice(master_salt);
    iv[7] ^= label;
    out.fill(0);
    aes_cm_apply(cipher, iv, out);
}

pub fn derive_session_keys(
    master_key: &[u8],
    master_salt: &[u8],
) -> Result<SessionKeys, SrtpError> {
    let key: &[u8; MASTER_KEY_LEN] = master_key
        .try_into()
        .map_err(|_| SrtpError::BadKeyLength(master_key.len()))?;
    let salt: &[u8; MASTER_SALT_LEN] = master_salt
        .try_into()
        .map_err(|_| SrtpError::BadKeyLength(master_salt.len()))?;
    let cipher = Aes128::new(key.into());
    let mut keys = SessionKeys {
        cipher_key: [0; MASTER_KEY_LEN],
        auth_key: [0; AUTH_KEY_LEN],
        session_salt: [0; MASTER_SALT_LEN],
    };
    prf(&cipher, salt, LABEL_CIPHER_KEY, &mut keys.cipher_key);
    prf(&cipher, salt, LABEL_AUTH_KEY, &mut keys.auth_key);
    prf(&cipher, salt, LABEL_SALT, &mut keys.session_salt);
    Ok(keys)
}

/// Splits 30 bytes of SDES keying material into master key and salt.
pub fn split_keying_material(material: &[u8]) -> Result<(&[u8], &[u8]), SrtpError> {
    if material.len() != KEYING_MATERIAL_LEN {
        return Err(SrtpError::BadKeyLength(material.len()));
    }
    Ok(material.split_at(MASTER_KEY_LEN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctr::cipher::{KeyIvInit, StreamCipher};

    fn h<const N: usize>(s: &str) -> [u8; N] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    // RFC 3711 appendix B.3.
    const MASTER_KEY: &str = "E1F97A0D3E018BE0D64FA32C06DE4139";
    const MASTER_SALT: &str = "0EC675AD498AFEEBB6960B3AABE6";

    #[test]
    fn key_derivation_vectors() {
        let k = derive_session_keys(&h::<16>(MASTER_KEY), &h::<14>(MASTER_SALT)).unwrap();
        assert_eq!(k.cipher_key, h::<16>("C61E7A93744F39EE10734AFE3FF7A087"));
        assert_eq!(k.session_salt, h::<14>("30CBBC08863D8C85D49DB34A9AE1"));
        assert_eq!(
            k.auth_key,
            h::<20>("CEBE321F6FF7716B6FD4AB49AF256A156D38BAA4")
        );
    }

    #[test]
    fn keystream_vectors() {
        // RFC 3711 appendix B.2.
        let key = h::<16>("2B7E151628AED2A6ABF7158809CF4F3C");
        let iv = h::<16>("F0F1F2F3F4F5F6F7F8F9FAFBFCFD0000");
        let mut ks = alloc::vec![0u8; 16 * 0xff02];
        aes_cm_keystream(&key, iv, &mut ks);
        let block = |i: usize| &ks[16 * i..16 * i + 16];
        assert_eq!(block(0), h::<16>("E03EAD0935C95E80E166B16DD92B4EB4"));
        assert_eq!(block(1), h::<16>("D23513162B02D0F72A43A2FE4A5F97AB"));
        assert_eq!(block(2), h::<16>("41E95B3BB0A2E8DD477901E4FCA894C0"));
        assert_eq!(block(0xfeff), h::<16>("EC8CDF7398607CB0F2D21675EA9EA1E4"));
        assert_eq!(block(0xff00), h::<16>("362B7C3C6773516318A077D7FC5073AE"));
        assert_eq!(block(0xff01), h::<16>("6A2CC3787889374FBEB4C81B17BA6C44"));
    }

    /// Key derivation computed with an independent counter-mode implementation.
    fn oracle_kdf(key: &[u8; 16], salt: &[u8; 14], label: u8, n: usize) -> alloc::vec::Vec<u8> {
        let mut iv = [0u8; 16];
        iv[..14].copy_from_slice(salt);
        iv[7] ^= label;
        let mut c = ctr::Ctr128BE::<aes::Aes128>::new(key.into(), &iv.into());
        let mut out = alloc::vec![0u8; n];
        c.apply_keystream(&mut out);
        out
    }

    #[test]
    fn single_bit_master_key_change_changes_every_output() {
        let key = h::<16>(MASTER_KEY);
        let salt = h::<14>(MASTER_SALT);
        for bit in [0usize, 7, 64, 127] {
            let mut flipped = key;
            flipped[bit / 8] ^= 1 << (bit % 8);
            let a = derive_session_keys(&key, &salt).unwrap();
            let b = derive_session_keys(&flipped, &salt).unwrap();
            assert_ne!(a.cipher_key, b.cipher_key);
            assert_ne!(a.auth_key, b.auth_key);
            assert_ne!(a.session_salt, b.session_salt);
            assert_eq!(b.cipher_key[..], oracle_kdf(&flipped, &salt, 0, 16)[..]);
            assert_eq!(b.auth_key[..], oracle_kdf(&flipped, &salt, 1, 20)[..]);
            assert_eq!(b.session_salt[..], oracle_kdf(&flipped, &salt, 2, 14)[..]);
        }
    }

    #[test]
    fn deterministic_and_length_checked() {
        let a = derive_session_keys(&h::<16>(MASTER_KEY), &h::<14>(MASTER_SALT)).unwrap();
        let b = derive_session_keys(&h::<16>(MASTER_KEY), &h::<14>(MASTER_SALT)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            derive_session_keys(&[0; 15], &[0; 14]),
            Err(SrtpError::BadKeyLength(15))
        );
        assert_eq!(
            derive_session_keys(&[0; 16], &[0; 13]),
            Err(SrtpError::BadKeyLength(13))
        );
        assert!(split_keying_material(&[0; 29]).is_err());
    }
}
