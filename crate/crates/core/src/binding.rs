//! Encrypted binding between a subscriber key and a telephone number.
//!
//! The pair is encrypted under a fresh AES-128-CBC key and IV; that key
//! material is then sealed twice, once to the subscriber's X25519 key and once
//! to the attestator's, so exactly those two parties can open the binding.
//!
//! Note layout (all lengths u16 big endian):
//!
//! ```text
//! "RPOB" | version=1 | suite | len | eb | len | r_ku | len | r_ka
//! ```
//!
//! Suite 1 seals with X25519 + XSalsa20-Poly1305, nonce derived from
//! BLAKE2b(ephemeral_pub ‖ recipient_pub), i.e. the NaCl sealed box.

use std::fmt;

use aes::cipher::{block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyIvInit};
use rand::{CryptoRng, RngCore};

use crate::ledger::MAX_NOTE_BYTES;

pub const MAGIC: &[u8; 4] = b"RPOB";
pub const VERSION: u8 = 1;
pub const SUITE_NACL_SEALED_BOX: u8 = 1;
pub const HEADER_LEN: usize = 6;
/// r_k (16 bytes) followed by iv_k (16 bytes).
pub const KEY_MATERIAL_LEN: usize = 32;
/// Ephemeral public key plus Poly1305 tag around the key material.
pub const SEALED_KEY_LEN: usize = 32 + KEY_MATERIAL_LEN + 16;

type Aes128CbcEnc = cbc::Encryptor<aes::Aes128>;
type Aes128CbcDec = cbc::Decryptor<aes::Aes128>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindingError {
    #[error("invalid telephone number {0:?}")]
    InvalidTel(String),
    #[error("authentication failed")]
    AuthFailure,
    #[error("bad CBC padding")]
    BadPadding,
    #[error("note does not start with RPOB")]
    BadMagic,
    #[error("note truncated")]
    Truncated,
    #[error("unknown version {0}")]
    UnknownVersion(u8),
    #[error("unknown cipher suite {0}")]
    UnknownSuite(u8),
    #[error("malformed binding: {0}")]
    Malformed(&'static str),
}

/// E.164 number: '+' followed by 3 to 16 digits.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tel(String);

impl Tel {
    /// Normalizes common separators and a `00` international prefix, then
    /// validates. Bare digits without a prefix are rejected.
    pub fn parse(raw: &str) -> Result<Tel, BindingError> {
        let mut s: String = raw
            .trim()
            .chars()
            .filter(|c| !matches!(c, ' ' | '-' | '.' | '(' | ')'))
            .collect();
        if let Some(rest) = s.strip_prefix("00") {
            s = format!("+{rest}");
        }
        let digits = s.strip_prefix('+').unwrap_or("");
        let ok = s.starts_with('+')
            && (3..=16).contains(&digits.len())
            && digits.bytes().all(|b| b.is_ascii_digit());
        if ok {
            Ok(Tel(s))
        } else {
            Err(BindingError::InvalidTel(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Tel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tel({})", self.0)
    }
}

impl serde::Serialize for Tel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl std::str::FromStr for Tel {
    type Err = BindingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tel::parse(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BindingPlain {
    pub subscriber_key: [u8; 32],
    pub tel: Tel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Subscriber,
    Attestator,
}

/// X25519 key pair used only for sealing key material.
#[derive(Clone)]
pub struct EncKeypair {
    pub secret: [u8; 32],
    pub public: [u8; 32],
}

impl fmt::Debug for EncKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncKeypair(public={})", hex::encode(self.public))
    }
}

impl EncKeypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let sk = crypto_box::SecretKey::generate(rng);
        Self::from_secret(sk.to_bytes())
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        let sk = crypto_box::SecretKey::from(secret);
        EncKeypair {
            secret,
            public: *sk.public_key().as_bytes(),
        }
    }
}

/// Sealed-box wire form: ephemeral public key then authenticated ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedBox {
    pub ephemeral_pub: [u8; 32],
    pub ciphertext: Vec<u8>,
}

impl SealedBox {
    pub fn seal<R: RngCore + CryptoRng>(
        recipient: &[u8; 32],
        msg: &[u8],
        rng: &mut R,
    ) -> SealedBox {
        let pk = crypto_box::PublicKey::from(*recipient);
        let bytes = pk.seal(rng, msg).expect("sealing a short message cannot fail");
        Self::from_bytes(&bytes).expect("seal output has an ephemeral key")
    }

    pub fn open(&self, secret: &[u8; 32]) -> Result<Vec<u8>, BindingError> {
        let sk = crypto_box::SecretKey::from(*secret);
        sk.unseal(&self.to_bytes())
            .map_err(|_| BindingError::AuthFailure)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.ciphertext.len());
        out.extend_from_slice(&self.ephemeral_pub);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SealedBox, BindingError> {
        if bytes.len() < 32 + 16 {
            return Err(BindingError::AuthFailure);
        }
        Ok(SealedBox {
            ephemeral_pub: bytes[..32].try_into().unwrap(),
            ciphertext: bytes[32..].to_vec(),
        })
    }
}

/// The on-chain triple plus its header fields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BindingBlob {
    pub version: u8,
    pub suite: u8,
    pub eb: Vec<u8>,
    pub r_ku: Vec<u8>,
    pub r_ka: Vec<u8>,
}

pub fn encrypt_binding<R: RngCore + CryptoRng>(
    plain: &BindingPlain,
    subscriber_enc_pub: &[u8; 32],
    attestator_enc_pub: &[u8; 32],
    rng: &mut R,
) -> BindingBlob {
    let mut material = [0u8; KEY_MATERIAL_LEN];
    rng.fill_bytes(&mut material);
    let (key, iv) = material.split_at(16);

    let mut msg = Vec::with_capacity(32 + plain.tel.as_str().len());
    msg.extend_from_slice(&plain.subscriber_key);
    msg.extend_from_slice(plain.tel.as_str().as_bytes());
    let eb = Aes128CbcEnc::new(key.into(), iv.into()).encrypt_padded_vec_mut::<Pkcs7>(&msg);

    let r_ku = SealedBox::seal(subscriber_enc_pub, &material, rng).to_bytes();
    let r_ka = SealedBox::seal(attestator_enc_pub, &material, rng).to_bytes();
    BindingBlob {
        version: VERSION,
        suite: SUITE_NACL_SEALED_BOX,
        eb,
        r_ku,
        r_ka,
    }
}

/// Opens the sealed key material for `role` (r_k ‖ iv_k).
pub fn unwrap_key_material(
    blob: &BindingBlob,
    my_enc_priv: &[u8; 32],
    role: Role,
) -> Result<[u8; KEY_MATERIAL_LEN], BindingError> {
    if blob.suite != SUITE_NACL_SEALED_BOX {
        return Err(BindingError::UnknownSuite(blob.suite));
    }
    let sealed = match role {
        Role::Subscriber => &blob.r_ku,
        Role::Attestator => &blob.r_ka,
    };
    let material = SealedBox::from_bytes(sealed)?.open(my_enc_priv)?;
    material
        .try_into()
        .map_err(|_| BindingError::Malformed("key material is not 32 bytes"))
}

pub fn decrypt_binding(
    blob: &BindingBlob,
    my_enc_priv: &[u8; 32],
    role: Role,
) -> Result<BindingPlain, BindingError> {
    let material = unwrap_key_material(blob, my_enc_priv, role)?;
    let (key, iv) = material.split_at(16);
    if blob.eb.is_empty() || blob.eb.len() % 16 != 0 {
        return Err(BindingError::Malformed("eb is not a positive multiple of 16"));
    }
    let msg = Aes128CbcDec::new(key.into(), iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(&blob.eb)
        .map_err(|_| BindingError::BadPadding)?;
    if msg.len() < 32 {
        return Err(BindingError::Malformed("plaintext shorter than a key"));
    }
    let tel = std::str::from_utf8(&msg[32..])
        .map_err(|_| BindingError::Malformed("tel is not UTF-8"))?;
    Ok(BindingPlain {
        subscriber_key: msg[..32].try_into().unwrap(),
        tel: Tel::parse(tel)?,
    })
}

pub fn encode_note(blob: &BindingBlob) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        HEADER_LEN + 6 + blob.eb.len() + blob.r_ku.len() + blob.r_ka.len(),
    );
    out.extend_from_slice(MAGIC);
    out.push(blob.version);
    out.push(blob.suite);
    for field in [&blob.eb, &blob.r_ku, &blob.r_ka] {
        out.extend_from_slice(&(field.len() as u16).to_be_bytes());
        out.extend_from_slice(field);
    }
    debug_assert!(out.len() <= MAX_NOTE_BYTES);
    out
}

/// Cheap pre-check used by chain scans.
pub fn is_binding_note(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

pub fn decode_note(bytes: &[u8]) -> Result<BindingBlob, BindingError> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            BindingError::Truncated
        } else {
            BindingError::BadMagic
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(BindingError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(BindingError::Truncated);
    }
    if bytes[4] != VERSION {
        return Err(BindingError::UnknownVersion(bytes[4]));
    }
    let suite = bytes[5];
    let mut rest = &bytes[HEADER_LEN..];
    let mut take = || -> Result<Vec<u8>, BindingError> {
        if rest.len() < 2 {
            return Err(BindingError::Truncated);
        }
        let n = u16::from_be_bytes([rest[0], rest[1]]) as usize;
        if rest.len() < 2 + n {
            return Err(BindingError::Truncated);
        }
        let v = rest[2..2 + n].to_vec();
        rest = &rest[2 + n..];
        Ok(v)
    };
    let eb = take()?;
    let r_ku = take()?;
    let r_ka = take()?;
    if !rest.is_empty() {
        return Err(BindingError::Malformed("trailing bytes"));
    }
    Ok(BindingBlob {
        version: VERSION,
        suite,
        eb,
        r_ku,
        r_ka,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (ChaCha20Rng, EncKeypair, EncKeypair, BindingPlain) {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let sub = EncKeypair::generate(&mut rng);
        let att = EncKeypair::generate(&mut rng);
        let plain = BindingPlain {
            subscriber_key: [0x11; 32],
            tel: Tel::parse("+390612345678").unwrap(),
        };
        (rng, sub, att, plain)
    }

    #[test]
    fn tel_normalization() {
        assert_eq!(Tel::parse("+39 06 1234-5678").unwrap().as_str(), "+390612345678");
        assert_eq!(Tel::parse("0039061234").unwrap().as_str(), "+39061234");
        assert_eq!(Tel::parse("+123").unwrap().as_str(), "+123");
        for bad in ["12345", "+12", "+12345678901234567", "+39a123", "", "+"] {
            assert!(matches!(Tel::parse(bad), Err(BindingError::InvalidTel(_))), "{bad}");
        }
    }

    #[test]
    fn both_roles_round_trip() {
        let (mut rng, sub, att, plain) = setup();
        let blob = encrypt_binding(&plain, &sub.public, &att.public, &mut rng);
        assert_eq!(decrypt_binding(&blob, &sub.secret, Role::Subscriber).unwrap(), plain);
        assert_eq!(decrypt_binding(&blob, &att.secret, Role::Attestator).unwrap(), plain);
        assert_eq!(
            unwrap_key_material(&blob, &sub.secret, Role::Subscriber).unwrap(),
            unwrap_key_material(&blob, &att.secret, Role::Attestator).unwrap()
        );
    }

    #[test]
    fn fresh_randomness_changes_eb() {
        let (mut rng, sub, att, plain) = setup();
        let a = encrypt_binding(&plain, &sub.public, &att.public, &mut rng);
        let b = encrypt_binding(&plain, &sub.public, &att.public, &mut rng);
        assert_ne!(a.eb, b.eb);
    }

    #[test]
    fn third_party_cannot_open() {
        let (mut rng, sub, att, plain) = setup();
        let blob = encrypt_binding(&plain, &sub.public, &att.public, &mut rng);
        let eve = EncKeypair::generate(&mut rng);
        assert_eq!(
            decrypt_binding(&blob, &eve.secret, Role::Attestator),
            Err(BindingError::AuthFailure)
        );
        // right key, wrong slot
        assert_eq!(
            decrypt_binding(&blob, &sub.secret, Role::Attestator),
            Err(BindingError::AuthFailure)
        );
    }

    #[test]
    fn minimal_note_length() {
        let (mut rng, sub, att, _) = setup();
        let plain = BindingPlain {
            subscriber_key: [0; 32],
            tel: Tel::parse("+123").unwrap(),
        };
        let blob = encrypt_binding(&plain, &sub.public, &att.public, &mut rng);
        assert_eq!(blob.eb.len(), 48);
        assert_eq!(blob.r_ku.len(), SEALED_KEY_LEN);
        let note = encode_note(&blob);
        // 6 header + 3 length prefixes + 48 + 80 + 80
        assert_eq!(note.len(), 6 + 6 + 48 + 80 + 80);
        assert_eq!(note.len(), 220);
        assert_eq!(decode_note(&note).unwrap(), blob);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode_note(b"XXXXabcdef"), Err(BindingError::BadMagic));
        assert_eq!(decode_note(b"RP"), Err(BindingError::Truncated));
        assert_eq!(decode_note(b"RPOB\x01"), Err(BindingError::Truncated));
        assert_eq!(decode_note(b"RPOB\x02\x01"), Err(BindingError::UnknownVersion(2)));
        assert_eq!(decode_note(b"RPOB\x01\x01\x00\x05ab"), Err(BindingError::Truncated));
    }

    #[test]
    fn unknown_suite_is_reported() {
        let (mut rng, sub, att, plain) = setup();
        let mut blob = encrypt_binding(&plain, &sub.public, &att.public, &mut rng);
        blob.suite = 9;
        let decoded = decode_note(&encode_note(&blob)).unwrap();
        assert_eq!(
            decrypt_binding(&decoded, &att.secret, Role::Attestator),
            Err(BindingError::UnknownSuite(9))
        );
    }
}
