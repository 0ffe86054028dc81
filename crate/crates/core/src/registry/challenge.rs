use std::collections::HashMap;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::RngCore;

use crate::binding::Tel;

use super::RegistryError;

pub const NONCE_LEN: usize = 16;
/// Simulated seconds a nonce stays valid; it expires at exactly this age.
pub const CHALLENGE_TTL: u64 = 600;

pub type Nonce = [u8; NONCE_LEN];

#[derive(Clone, Debug)]
pub struct IssuedChallenge {
    pub tel: Tel,
    pub claimed_key: [u8; 32],
    pub issued_at: u64,
}

/// Outstanding nonces sent over the (simulated) phone channel.
#[derive(Clone, Debug, Default)]
pub struct ChallengeBook {
    open: HashMap<Nonce, IssuedChallenge>,
    ttl: u64,
}

/// Bytes the subscriber signs to answer a challenge.
pub fn challenge_message(tel: &Tel, nonce: &Nonce) -> Vec<u8> {
    let mut m = b"rpob-challenge\0".to_vec();
    m.extend_from_slice(tel.as_str().as_bytes());
    m.push(0);
    m.extend_from_slice(nonce);
    m
}

pub fn answer_challenge(key: &SigningKey, tel: &Tel, nonce: &Nonce) -> [u8; 64] {
    key.sign(&challenge_message(tel, nonce)).to_bytes()
}

impl ChallengeBook {
    pub fn new(ttl: u64) -> Self {
        ChallengeBook {
            open: HashMap::new(),
            ttl,
        }
    }

    pub fn issue<R: RngCore>(
        &mut self,
        rng: &mut R,
        tel: Tel,
        claimed_key: [u8; 32],
        now: u64,
    ) -> Nonce {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        self.open.insert(
            nonce,
            IssuedChallenge {
                tel,
                claimed_key,
                issued_at: now,
            },
        );
        nonce
    }

    /// Re-registers a nonce issued by an earlier process.
    pub fn restore(&mut self, nonce: Nonce, c: IssuedChallenge) {
        self.open.insert(nonce, c);
    }

    /// Consumes the nonce whatever the outcome. `Ok(false)` means the
    /// signature (or the tel) did not match.
    pub fn verify(
        &mut self,
        tel: &Tel,
        nonce: &Nonce,
        signature: &[u8; 64],
        now: u64,
    ) -> Result<bool, RegistryError> {
        let c = self.open.remove(nonce).ok_or(RegistryError::UnknownNonce)?;
        if now >= c.issued_at + self.ttl {
            return Err(RegistryError::Expired);
        }
        if &c.tel != tel {
            return Ok(false);
        }
        let Ok(vk) = VerifyingKey::from_bytes(&c.claimed_key) else {
            return Ok(false);
        };
        let sig = Signature::from_bytes(signature);
        Ok(vk
            .verify_strict(&challenge_message(tel, nonce), &sig)
            .is_ok())
    }

    pub fn claimed_key(&self, nonce: &Nonce) -> Option<[u8; 32]> {
        self.open.get(nonce).map(|c| c.claimed_key)
    }

    pub fn outstanding(&self) -> impl Iterator<Item = (&Nonce, &IssuedChallenge)> + '_ {
        self.open.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (ChaCha20Rng, ChallengeBook, SigningKey, Tel) {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let key = SigningKey::generate(&mut rng);
        (rng, ChallengeBook::new(CHALLENGE_TTL), key, Tel::parse("+39055").unwrap())
    }

    #[test]
    fn correct_key_passes_once() {
        let (mut rng, mut book, key, tel) = setup();
        let n = book.issue(&mut rng, tel.clone(), key.verifying_key().to_bytes(), 0);
        let sig = answer_challenge(&key, &tel, &n);
        assert_eq!(book.verify(&tel, &n, &sig, 10).unwrap(), true);
        assert!(matches!(book.verify(&tel, &n, &sig, 10), Err(RegistryError::UnknownNonce)));
    }

    #[test]
    fn other_key_fails_and_consumes() {
        let (mut rng, mut book, key, tel) = setup();
        let other = SigningKey::generate(&mut rng);
        let n = book.issue(&mut rng, tel.clone(), key.verifying_key().to_bytes(), 0);
        let sig = answer_challenge(&other, &tel, &n);
        assert_eq!(book.verify(&tel, &n, &sig, 0).unwrap(), false);
        assert!(book.claimed_key(&n).is_none());
    }

    #[test]
    fn expiry() {
        let (mut rng, mut book, key, tel) = setup();
        let n = book.issue(&mut rng, tel.clone(), key.verifying_key().to_bytes(), 100);
        let sig = answer_challenge(&key, &tel, &n);
        assert!(matches!(
            book.verify(&tel, &n, &sig, 100 + CHALLENGE_TTL + 1),
            Err(RegistryError::Expired)
        ));
    }

    #[test]
    fn nonce_bound_to_tel() {
        let (mut rng, mut book, key, tel) = setup();
        let n = book.issue(&mut rng, tel.clone(), key.verifying_key().to_bytes(), 0);
        let other = Tel::parse("+39066").unwrap();
        let sig = answer_challenge(&key, &other, &n);
        assert_eq!(book.verify(&other, &n, &sig, 0).unwrap(), false);
    }
}
