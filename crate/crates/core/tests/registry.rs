use std::collections::HashMap;

use ed25519_dalek::{Signer, SigningKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use robinson_core::binding::Tel;
use robinson_core::ledger::{
    group_id, Address, Authorization, CoSignature, LedgerError, MicroAlgo, Sig, Transaction,
    TransactionGroup, MIN_FEE,
};
use robinson_core::registry::{
    answer_challenge, CacheDiff, CacheEntry, Mode, OptionState, Registry, RegistryError,
    SubscriberKeys, SystemConfig,
};

const MODES: [Mode; 2] = [Mode::Direct, Mode::Contract];

fn tel(n: u64) -> Tel {
    Tel::parse(&format!("+39{n:07}")).unwrap()
}

fn system(expected: u64, mode: Mode) -> Registry {
    Registry::init(SystemConfig::for_subscribers(expected, mode).with_seed(7)).unwrap()
}

fn keys(rng: &mut ChaCha20Rng) -> SubscriberKeys {
    SubscriberKeys::generate(rng)
}

#[test]
fn init_distributes_tokens() {
    for mode in MODES {
        let mut cfg = SystemConfig::for_subscribers(5, mode);
        cfg.token_supply = 10;
        let reg = Registry::init(cfg.clone()).unwrap();
        let info = *reg.info();
        let l = reg.ledger();
        let c = l.sealed_account(&info.c_address).unwrap();
        let att = l.sealed_account(&info.attestator).unwrap();
        assert_eq!(c.holding(info.in_asset), 10);
        assert_eq!(c.holding(info.out_asset), 0);
        assert_eq!(att.holding(info.out_asset), 10);
        assert_eq!(att.holding(info.in_asset), 0);
        reg.check_invariants().unwrap();

        // five setup transactions, one flat fee each
        assert_eq!(l.fees_collected(), MIN_FEE * 5);
        let att_spent = cfg.attestator_endowment.0 - att.balance.0;
        let c_genesis = l
            .genesis()
            .accounts
            .iter()
            .find(|a| a.address == info.c_address)
            .unwrap()
            .balance;
        let c_spent = c_genesis.0 - c.balance.0;
        assert_eq!(att_spent, 3 * MIN_FEE.0);
        assert_eq!(att_spent + c_spent, 5 * MIN_FEE.0);
    }
}

#[test]
fn init_rejects_bad_config_and_used_ledger() {
    let mut cfg = SystemConfig::for_subscribers(0, Mode::Direct);
    cfg.token_supply = 0;
    assert!(matches!(Registry::init(cfg), Err(RegistryError::InvalidConfig(_))));
    let mut cfg = SystemConfig::for_subscribers(10, Mode::Direct);
    cfg.token_supply = 19;
    assert!(matches!(Registry::init(cfg), Err(RegistryError::InvalidConfig(_))));

    let reg = system(2, Mode::Direct);
    let used = reg.ledger().fork();
    assert_eq!(
        Registry::init_on(used, SystemConfig::for_subscribers(2, Mode::Direct)).err(),
        Some(RegistryError::LedgerNotEmpty)
    );
}

#[test]
fn enroll_defaults_to_out() {
    for mode in MODES {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut reg = system(4, mode);
        let k = keys(&mut rng);
        let t = tel(1);
        assert_eq!(reg.current_option(&t), OptionState::None);
        let r = reg.enroll(&t, &k).unwrap();
        // options are read from sealed state
        assert_eq!(reg.current_option(&t), OptionState::None);
        reg.seal().unwrap();
        assert_eq!(reg.current_option(&t), OptionState::Out);
        let w = reg.ledger().sealed_account(&r.wallet).unwrap();
        assert_eq!(w.holding(reg.info().out_asset), 1);
        assert_eq!(w.holding(reg.info().in_asset), 0);
        assert_eq!(r.u_t.is_some(), mode == Mode::Contract);
        reg.check_invariants().unwrap();
        assert!(reg.audit_cache().is_clean());

        assert_eq!(reg.enroll(&t, &keys(&mut rng)).err(), Some(RegistryError::DuplicateTel(t)));
    }
}

#[test]
fn direct_subscriber_pays_two_opt_in_fees() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut reg = system(4, Mode::Direct);
    let k = keys(&mut rng);
    let r = reg.enroll(&tel(2), &k).unwrap();
    let cfg = reg.config().clone();
    let received = cfg.funding_per_subscriber + cfg.subscriber_fee_budget;
    let held = reg.ledger().balance(&r.wallet);
    assert_eq!(received.0 - held.0, 2000);
}

#[test]
fn attestator_cost_per_subscriber() {
    for mode in MODES {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut reg = system(4, mode);
        let att = reg.info().attestator;
        let before = reg.ledger().balance(&att);
        reg.enroll(&tel(3), &keys(&mut rng)).unwrap();
        let after = reg.ledger().balance(&att);
        assert_eq!(before.0 - after.0, 300_000 + 1000 + 1000, "{mode}");
    }
}

#[test]
fn switch_is_an_involution() {
    for mode in MODES {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut reg = system(4, mode);
        let k = keys(&mut rng);
        let t = tel(4);
        let r = reg.enroll(&t, &k).unwrap();
        reg.seal().unwrap();
        let pre = reg.ledger().sealed_account(&r.wallet).unwrap().holdings.clone();
        let c = reg.info().c_address;
        let c_pre = reg.ledger().sealed_account(&c).unwrap().holdings.clone();
        let fees_pre = reg.ledger().fees_collected();

        let s = reg.switch_option(&t, &k.sign).unwrap();
        assert_eq!((s.from.as_str(), s.to.as_str()), ("out", "in"));
        assert!(s.refill.is_none() && s.top_up.is_none());
        assert_eq!(reg.ledger().fees_collected().0 - fees_pre.0, 2000);
        reg.seal().unwrap();
        assert_eq!(reg.current_option(&t), OptionState::In);
        let c_mid = reg.ledger().sealed_account(&c).unwrap();
        let (i, o) = (reg.info().in_asset, reg.info().out_asset);
        assert_eq!(c_mid.holding(i) + 1, c_pre[&i]);
        assert_eq!(c_mid.holding(o), c_pre[&o] + 1);

        reg.switch_option(&t, &k.sign).unwrap();
        reg.seal().unwrap();
        assert_eq!(reg.current_option(&t), OptionState::Out);
        assert_eq!(reg.ledger().sealed_account(&r.wallet).unwrap().holdings, pre);
        reg.check_invariants().unwrap();
    }
}

#[test]
fn switch_by_wallet_address() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut reg = system(4, Mode::Contract);
    let k = keys(&mut rng);
    let r = reg.enroll(&tel(5), &k).unwrap();
    reg.switch_wallet(&r.wallet, &k.sign).unwrap();
    reg.seal().unwrap();
    assert_eq!(reg.option_of_wallet(&r.wallet), OptionState::In);
}

#[test]
fn non_owner_cannot_switch() {
    for mode in MODES {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut reg = system(4, mode);
        let k = keys(&mut rng);
        let t = tel(6);
        reg.enroll(&t, &k).unwrap();
        reg.seal().unwrap();
        let root = reg.ledger().state_root();
        let thief = SigningKey::generate(&mut rng);
        let err = reg.switch_option(&t, &thief).unwrap_err();
        let att = reg.attestator().sign.clone();
        let err2 = reg.switch_option(&t, &att).unwrap_err();
        match mode {
            Mode::Direct => {
                assert_eq!(err, RegistryError::WrongSigner);
                assert_eq!(err2, RegistryError::WrongSigner);
            }
            Mode::Contract => {
                assert_eq!(err, RegistryError::GuardRejected(0));
                assert_eq!(err2, RegistryError::GuardRejected(0));
            }
        }
        assert!(reg.ledger().pending_groups().is_empty());
        reg.seal().unwrap();
        assert_eq!(reg.ledger().state_root(), root);
        assert_eq!(reg.current_option(&t), OptionState::Out);
    }
}

#[test]
fn unenrolled_switch_is_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut reg = system(2, Mode::Direct);
    let k = keys(&mut rng);
    assert!(matches!(
        reg.switch_option(&tel(7), &k.sign),
        Err(RegistryError::NotEnrolled(_))
    ));
}

#[test]
fn random_switches_keep_one_token_per_wallet() {
    for mode in MODES {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut reg = system(20, mode);
        let subs: Vec<(Tel, SubscriberKeys)> = (0..20).map(|n| (tel(100 + n), keys(&mut rng))).collect();
        let mut oracle: HashMap<Tel, bool> = HashMap::new();
        for (t, k) in &subs {
            reg.enroll(t, k).unwrap();
            oracle.insert(t.clone(), false);
        }
        reg.seal().unwrap();
        for _ in 0..100 {
            let (t, k) = &subs[rng.gen_range(0..subs.len())];
            reg.switch_option(t, &k.sign).unwrap();
            *oracle.get_mut(t).unwrap() ^= true;
            if rng.gen_bool(0.3) {
                reg.seal().unwrap();
                reg.check_invariants().unwrap();
            }
        }
        reg.seal().unwrap();
        reg.check_invariants().unwrap();
        for (t, _) in &subs {
            let want = if oracle[t] { OptionState::In } else { OptionState::Out };
            assert_eq!(reg.current_option(t), want);
        }
    }
}

#[test]
fn fee_budget_is_topped_up() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut reg = system(2, Mode::Direct);
    let k = keys(&mut rng);
    let t = tel(9);
    reg.enroll(&t, &k).unwrap();
    let mut top_ups = 0;
    for _ in 0..20 {
        top_ups += reg.switch_option(&t, &k.sign).unwrap().top_up.is_some() as u32;
    }
    assert!(top_ups >= 1);
    reg.seal().unwrap();
    reg.check_invariants().unwrap();
}

#[test]
fn c_is_refilled_below_threshold() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut cfg = SystemConfig::for_subscribers(2, Mode::Direct);
    cfg.c_float = MicroAlgo(10 * MIN_FEE.0 + 500);
    let mut reg = Registry::init(cfg).unwrap();
    assert!(!reg.c_needs_refill());
    assert!(reg.maybe_refill_c().unwrap().is_none());
    let k = keys(&mut rng);
    let t = tel(10);
    reg.enroll(&t, &k).unwrap();
    let first = reg.switch_option(&t, &k.sign).unwrap();
    assert!(first.refill.is_none());
    let second = reg.switch_option(&t, &k.sign).unwrap();
    assert!(second.refill.is_some());
    assert!(!reg.c_needs_refill());
}

#[test]
fn draining_c_fails_cleanly() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut cfg = SystemConfig::for_subscribers(2, Mode::Direct);
    cfg.c_float = MicroAlgo(5 * MIN_FEE.0);
    cfg.auto_refill = false;
    let mut reg = Registry::init(cfg).unwrap();
    let k = keys(&mut rng);
    let t = tel(11);
    reg.enroll(&t, &k).unwrap();
    reg.seal().unwrap();
    let mut ok = 0;
    let err = loop {
        let root_before = reg.ledger().fork();
        match reg.switch_option(&t, &k.sign) {
            Ok(_) => ok += 1,
            Err(e) => {
                let w = reg.cache().get(&t).unwrap().wallet();
                assert_eq!(
                    reg.ledger().account(&w).unwrap().holdings,
                    root_before.account(&w).unwrap().holdings
                );
                break e;
            }
        }
        assert!(ok < 100);
    };
    assert_eq!(ok, 5);
    assert!(matches!(
        err,
        RegistryError::Ledger(LedgerError::BelowMinBalance { .. })
    ));
    reg.seal().unwrap();
    reg.check_invariants().unwrap();
}

#[test]
fn challenge_flow() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let mut reg = system(4, Mode::Direct);
    let k = keys(&mut rng);
    let t = tel(12);
    let n = reg.issue_challenge(&t, k.public_key());
    let sig = answer_challenge(&k.sign, &t, &n);
    assert!(reg.verify_challenge(&t, &n, &sig).unwrap());
    assert_eq!(reg.verify_challenge(&t, &n, &sig), Err(RegistryError::UnknownNonce));

    let other = keys(&mut rng);
    let n = reg.issue_challenge(&t, k.public_key());
    let bad = answer_challenge(&other.sign, &t, &n);
    assert_eq!(
        reg.enroll_with_challenge(&t, &k, &n, &bad, None),
        Err(RegistryError::ChallengeFailed)
    );
    assert_eq!(reg.current_option(&t), OptionState::None);

    // a nonce issued for another key cannot enroll this one
    let n = reg.issue_challenge(&t, other.public_key());
    let sig = answer_challenge(&other.sign, &t, &n);
    assert_eq!(
        reg.enroll_with_challenge(&t, &k, &n, &sig, None),
        Err(RegistryError::ChallengeFailed)
    );

    let n = reg.issue_challenge(&t, k.public_key());
    let sig = answer_challenge(&k.sign, &t, &n);
    reg.advance_time(601).unwrap();
    assert_eq!(
        reg.enroll_with_challenge(&t, &k, &n, &sig, None),
        Err(RegistryError::Expired)
    );
}

#[test]
fn contract_mode_template_checked() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let mut reg = system(4, Mode::Contract);
    let k = keys(&mut rng);
    let t = tel(13);
    let wrong = reg.owner_program(&[9; 32]).bytes().to_vec();
    let n = reg.issue_challenge(&t, k.public_key());
    let sig = answer_challenge(&k.sign, &t, &n);
    assert_eq!(
        reg.enroll_with_challenge(&t, &k, &n, &sig, Some(&wrong)),
        Err(RegistryError::TemplateMismatch)
    );
    let right = reg.owner_program(&k.public_key()).bytes().to_vec();
    let n = reg.issue_challenge(&t, k.public_key());
    let sig = answer_challenge(&k.sign, &t, &n);
    let r = reg.enroll_with_challenge(&t, &k, &n, &sig, Some(&right)).unwrap();
    assert_eq!(r.u_t, Some(Address::from_program(&right)));
}

#[test]
fn attestator_cannot_move_tokens_out_of_a_wallet() {
    for mode in MODES {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let mut reg = system(4, mode);
        let k = keys(&mut rng);
        let t = tel(14);
        let r = reg.enroll(&t, &k).unwrap();
        reg.seal().unwrap();
        let root = reg.ledger().state_root();
        let info = *reg.info();
        // pull the OUT token back, authorized with everything the attestator has
        let txns = vec![Transaction::asset_transfer(r.wallet, info.attestator, info.out_asset, 1)];
        let att = reg.attestator().sign.clone();
        let sig = Sig(att.sign(&group_id(&txns).0).to_bytes());
        let auth = match r.u_t {
            Some(u_t) => Authorization::Prog(reg.ledger().account(&u_t).unwrap().program.clone().unwrap()),
            None => Authorization::Sig(sig),
        };
        let g = TransactionGroup {
            auth: vec![auth],
            cosign: Some(CoSignature { key: att.verifying_key().to_bytes(), sig }),
            txns,
        };
        assert!(reg.ledger_mut().submit_group(g).is_err());
        reg.seal().unwrap();
        assert_eq!(reg.ledger().state_root(), root);
    }
}

#[test]
fn audit_detects_cache_drift() {
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let mut reg = system(6, Mode::Contract);
    for n in 0..3 {
        reg.enroll(&tel(200 + n), &keys(&mut rng)).unwrap();
    }
    reg.seal().unwrap();
    let clean = reg.audit_cache();
    assert!(clean.is_clean());
    assert_eq!(clean.notes_scanned, 3);

    let removed = reg.cache_mut().remove(&tel(200)).unwrap().unwrap();
    let report = reg.audit_cache();
    assert_eq!(report.diffs.len(), 1);
    assert!(matches!(&report.diffs[0], CacheDiff::MissingInCache { tel: t, .. } if *t == tel(200)));
    reg.cache_mut().insert(tel(200), removed).unwrap();

    let bogus = CacheEntry {
        address: Address([1; 32]),
        u_t: None,
    };
    reg.cache_mut().insert(tel(999), bogus).unwrap();
    let report = reg.audit_cache();
    assert_eq!(report.diffs.len(), 1);
    assert!(matches!(&report.diffs[0], CacheDiff::MissingOnChain { tel: t, .. } if *t == tel(999)));
}

#[test]
fn persistent_system_reopens() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let k = keys(&mut rng);
    let t = tel(16);
    let root = {
        let mut reg =
            Registry::init_in_dir(&data, SystemConfig::for_subscribers(4, Mode::Contract)).unwrap();
        reg.enroll(&t, &k).unwrap();
        reg.seal().unwrap();
        reg.ledger().state_root()
    };
    let mut reg = Registry::open(&data).unwrap();
    assert_eq!(reg.ledger().state_root(), root);
    assert_eq!(reg.current_option(&t), OptionState::Out);
    reg.switch_option(&t, &k.sign).unwrap();
    reg.seal().unwrap();
    drop(reg);
    let reg = Registry::open(&data).unwrap();
    assert_eq!(reg.current_option(&t), OptionState::In);
    assert!(reg.audit_cache().is_clean());
    reg.check_invariants().unwrap();

    assert!(matches!(
        Registry::init_in_dir(&data, SystemConfig::for_subscribers(4, Mode::Contract)),
        Err(RegistryError::LedgerNotEmpty)
    ));
}

#[test]
fn keyfile_round_trip() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let k = keys(&mut rng);
    let text = k.to_keyfile();
    assert_eq!(text.lines().count(), 2);
    let back = SubscriberKeys::from_keyfile(&text).unwrap();
    assert_eq!(back.public_key(), k.public_key());
    assert_eq!(back.enc.public, k.enc.public);
    assert!(SubscriberKeys::from_keyfile("abcd\n").is_err());
}
