//! MiIO wire format.
//!
//! ```text
//! 0      2        4          8           12      16              32
//! | 2131 | length | reserved | device_id | stamp | checksum (16)  | body ...
//! ```
//!
//! All integers are big-endian. The body is AES-128-CBC (PKCS#7) with
//! `key = MD5(token)` and `iv = MD5(key ‖ token)`. The checksum is
//! `MD5(header[0..16] ‖ token ‖ ciphertext)`.

use aes::Aes128;
use cbc::cipher::block_padding::Pkcs7;
use cbc::cipher::{BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use md5::{Digest, Md5};

use super::DeviceError;

pub const MAGIC: u16 = 0x2131;
pub const HEADER_LEN: usize = 32;
pub const MAX_CIPHERTEXT: usize = u16::MAX as usize - HEADER_LEN;

pub type Token = [u8; 16];

/// The discovery packet: magic, length 32, every other byte 0xFF.
pub const HELLO: [u8; 32] = {
    let mut b = [0xFFu8; 32];
    b[0] = 0x21;
    b[1] = 0x31;
    b[2] = 0x00;
    b[3] = 0x20;
    b
};

pub fn token_from_slice(bytes: &[u8]) -> Result<Token, DeviceError> {
    bytes.try_into().map_err(|_| DeviceError::BadToken(bytes.len()))
}

pub fn derive_keys(token: &[u8]) -> Result<([u8; 16], [u8; 16]), DeviceError> {
    let token = token_from_slice(token)?;
    let key: [u8; 16] = Md5::digest(token).into();
    let mut h = Md5::new();
    h.update(key);
    h.update(token);
    Ok((key, h.finalize().into()))
}

pub fn encrypt(token: &Token, plain: &[u8]) -> Vec<u8> {
    let (key, iv) = derive_keys(token).expect("token is 16 bytes");
    cbc::Encryptor::<Aes128>::new(&key.into(), &iv.into()).encrypt_padded_vec_mut::<Pkcs7>(plain)
}

pub fn decrypt(token: &Token, cipher: &[u8]) -> Result<Vec<u8>, DeviceError> {
    let (key, iv) = derive_keys(token).expect("token is 16 bytes");
    cbc::Decryptor::<Aes128>::new(&key.into(), &iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(cipher)
        .map_err(|_| DeviceError::Codec("bad padding".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub length: u16,
    pub reserved: u32,
    pub device_id: u32,
    pub stamp: u32,
    pub checksum: [u8; 16],
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Self, DeviceError> {
        if bytes.len() < HEADER_LEN {
            return Err(DeviceError::Codec(format!("packet of {} bytes is shorter than a header", bytes.len())));
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        if u16_at(0) != MAGIC {
            return Err(DeviceError::Codec(format!("bad magic {:#06x}", u16_at(0))));
        }
        let length = u16_at(2);
        if length as usize != bytes.len() {
            return Err(DeviceError::Codec(format!("length field {length} but {} bytes received", bytes.len())));
        }
        Ok(Self {
            length,
            reserved: u32_at(4),
            device_id: u32_at(8),
            stamp: u32_at(12),
            checksum: bytes[16..32].try_into().expect("16 bytes"),
        })
    }

    pub fn is_hello(&self) -> bool {
        self.length as usize == HEADER_LEN
    }
}

fn header_bytes(length: usize, reserved: u32, device_id: u32, stamp: u32) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[0..2].copy_from_slice(&MAGIC.to_be_bytes());
    h[2..4].copy_from_slice(&(length as u16).to_be_bytes());
    h[4..8].copy_from_slice(&reserved.to_be_bytes());
    h[8..12].copy_from_slice(&device_id.to_be_bytes());
    h[12..16].copy_from_slice(&stamp.to_be_bytes());
    h
}

fn checksum(head: &[u8], token: &Token, cipher: &[u8]) -> [u8; 16] {
    let mut h = Md5::new();
    h.update(head);
    h.update(token);
    h.update(cipher);
    h.finalize().into()
}

/// Encrypt and frame `body` (normally a JSON-RPC object).
pub fn encode_packet(token: &Token, device_id: u32, stamp: u32, body: &[u8]) -> Result<Vec<u8>, DeviceError> {
    let cipher = encrypt(token, body);
    if cipher.len() > MAX_CIPHERTEXT {
        return Err(DeviceError::Oversized(body.len()));
    }
    let head = header_bytes(HEADER_LEN + cipher.len(), 0, device_id, stamp);
    let sum = checksum(&head, token, &cipher);
    let mut out = Vec::with_capacity(HEADER_LEN + cipher.len());
    out.extend_from_slice(&head);
    out.extend_from_slice(&sum);
    out.extend_from_slice(&cipher);
    Ok(out)
}

/// Verify and decrypt; returns the header and plaintext body.
pub fn decode_packet(token: &Token, bytes: &[u8]) -> Result<(Header, Vec<u8>), DeviceError> {
    let header = Header::parse(bytes)?;
    if header.is_hello() {
        return Err(DeviceError::Codec("hello packet carries no body".into()));
    }
    let cipher = &bytes[HEADER_LEN..];
    if checksum(&bytes[..16], token, cipher) != header.checksum {
        return Err(DeviceError::Codec("checksum mismatch".into()));
    }
    Ok((header, decrypt(token, cipher)?))
}

/// Handshake reply: a bare header carrying the device id and uptime stamp.
pub fn hello_reply(device_id: u32, stamp: u32) -> Vec<u8> {
    let mut out = header_bytes(HEADER_LEN, 0, device_id, stamp).to_vec();
    out.extend_from_slice(&[0xFF; 16]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn hello_bytes_match_reference() {
        // python-miio: bytes.fromhex("21310020" + "ff" * 28)
        let reference = hex::decode(format!("21310020{}", "ff".repeat(28))).unwrap();
        assert_eq!(HELLO.to_vec(), reference);
        let h = Header::parse(&HELLO).unwrap();
        assert!(h.is_hello());
        assert_eq!(h.device_id, 0xFFFF_FFFF);
    }

    #[test]
    fn key_derivation() {
        // MD5 of sixteen zero bytes
        let (key, iv) = derive_keys(&[0u8; 16]).unwrap();
        assert_eq!(hex::encode(key), "4ae71336e44bf9bf79d2752e234818a5");
        let mut cat = key.to_vec();
        cat.extend_from_slice(&[0u8; 16]);
        assert_eq!(iv, <[u8; 16]>::from(Md5::digest(&cat)));
        assert_eq!(derive_keys(&[0u8; 16]).unwrap(), (key, iv));
        assert!(matches!(derive_keys(&[0u8; 15]), Err(DeviceError::BadToken(15))));
    }

    #[test]
    fn distinct_tokens_give_distinct_keys() {
        let mut rng = seed::rng(5, "tokens");
        let mut keys = std::collections::HashSet::new();
        for _ in 0..1000 {
            let t: Token = rng.gen();
            keys.insert(derive_keys(&t).unwrap().0);
        }
        assert_eq!(keys.len(), 1000);
    }

    #[test]
    fn layout_and_checksum() {
        let token = [7u8; 16];
        let body = br#"{"id":1,"method":"get_prop","params":["power"]}"#;
        let p = encode_packet(&token, 0x0102_0304, 99, body).unwrap();
        assert_eq!(&p[0..2], &[0x21, 0x31]);
        assert_eq!(u16::from_be_bytes([p[2], p[3]]) as usize, p.len());
        assert_eq!(&p[4..8], &[0, 0, 0, 0]);
        assert_eq!(&p[8..12], &[1, 2, 3, 4]);
        assert_eq!(u32::from_be_bytes(p[12..16].try_into().unwrap()), 99);
        assert_eq!((p.len() - 32) % 16, 0);
        let mut manual = p[..16].to_vec();
        manual.extend_from_slice(&token);
        manual.extend_from_slice(&p[32..]);
        assert_eq!(&p[16..32], Md5::digest(&manual).as_slice());
    }

    #[test]
    fn oversized_body_is_rejected() {
        let body = vec![b'a'; 65_504];
        assert!(matches!(encode_packet(&[1; 16], 1, 1, &body), Err(DeviceError::Oversized(_))));
        // 65487 bytes pad to 65488 = 65503 rounded down to a block
        assert!(encode_packet(&[1; 16], 1, 1, &vec![b'a'; 65_487]).is_ok());
    }

    #[test]
    fn wrong_token_fails() {
        let p = encode_packet(&[1; 16], 1, 1, b"{}").unwrap();
        assert!(decode_packet(&[2; 16], &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn round_trip(token in any::<[u8; 16]>(), id in any::<u32>(), stamp in any::<u32>(), body in prop::collection::vec(any::<u8>(), 0..4096)) {
            let p = encode_packet(&token, id, stamp, &body).unwrap();
            let (h, back) = decode_packet(&token, &p).unwrap();
            prop_assert_eq!(back, body);
            prop_assert_eq!((h.device_id, h.stamp), (id, stamp));
        }
    }
}
