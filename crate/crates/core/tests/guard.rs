use proptest::prelude::*;
use robinson_core::guard::*;
use robinson_core::ledger::{Address, AssetId, Transaction, TxKind};

const IN: AssetId = AssetId(11);
const OUT: AssetId = AssetId(12);
const OWNER: [u8; 32] = [0x0a; 32];
const ADMIN: [u8; 32] = [0xad; 32];

fn swap_guard() -> GuardProgram {
    compile_swap_guard(&SwapGuardParams {
        in_asset: IN,
        out_asset: OUT,
        admin_key: ADMIN,
    })
}

fn owner_guard(c: Address) -> GuardProgram {
    compile_owner_guard(&OwnerGuardParams {
        owner_key: OWNER,
        c_address: c,
        in_asset: IN,
        out_asset: OUT,
    })
}

/// Whether the ledger would accept `guard` for every transaction sent by
/// `account`; groups where it sends nothing do not consult it.
fn approves(guard: &GuardProgram, account: Address, txns: &[Transaction], signer: Option<&[u8; 32]>) -> bool {
    let mine: Vec<usize> = (0..txns.len()).filter(|&i| txns[i].sender == account).collect();
    !mine.is_empty()
        && mine
            .iter()
            .all(|&i| evaluate(guard, &EvalContext::new(txns, i, signer)).unwrap())
}

fn unit_swap_between(t: &[Transaction], a: Address, b: Address) -> bool {
    let [x, y] = t else { return false };
    let parties = |p: &Transaction| (p.sender, p.receiver.unwrap());
    x.kind == TxKind::AssetTransfer
        && y.kind == TxKind::AssetTransfer
        && x.amount == 1
        && y.amount == 1
        && x.asset_id != y.asset_id
        && ((parties(x) == (a, b) && parties(y) == (b, a)) || (parties(x) == (b, a) && parties(y) == (a, b)))
}

fn transfers(accounts: &[Address]) -> Vec<Transaction> {
    let mut out = Vec::new();
    for &s in accounts {
        for &r in accounts {
            for asset in [IN, OUT] {
                for amount in 0..3 {
                    out.push(Transaction::asset_transfer(s, r, asset, amount));
                }
            }
        }
    }
    out
}

#[test]
fn owner_guard_matches_its_oracle_on_every_transfer_pair() {
    let c = swap_guard().address();
    let ut = owner_guard(c).address();
    let other = Address([0x77; 32]);
    let g = owner_guard(c);
    let all = transfers(&[c, ut, other]);
    let mut approved = 0;
    for x in &all {
        for y in &all {
            let pair = [x.clone(), y.clone()];
            for signer in [Some(&OWNER), Some(&ADMIN), None] {
                let got = approves(&g, ut, &pair, signer);
                let want = signer == Some(&OWNER) && unit_swap_between(&pair, ut, c);
                assert_eq!(got, want, "{pair:?} signer {signer:?}");
                approved += got as usize;
            }
        }
    }
    // IN-for-OUT and OUT-for-IN, each in both orders
    assert_eq!(approved, 4);
}

#[test]
fn owner_guard_opt_in_pair() {
    let c = swap_guard().address();
    let g = owner_guard(c);
    let ut = g.address();
    let pair = [Transaction::opt_in(ut, IN), Transaction::opt_in(ut, OUT)];
    assert!(approves(&g, ut, &pair, Some(&OWNER)));
    assert!(!approves(&g, ut, &pair, Some(&ADMIN)));
    let reversed = [Transaction::opt_in(ut, OUT), Transaction::opt_in(ut, IN)];
    assert!(!approves(&g, ut, &reversed, Some(&OWNER)));
    assert!(!approves(&g, ut, &pair[..1], Some(&OWNER)));
}

#[test]
fn swap_guard_never_releases_funds() {
    let g = swap_guard();
    let c = g.address();
    let u = Address([5; 32]);
    let pay = [
        Transaction::payment(c, u, robinson_core::ledger::MicroAlgo(1)),
        Transaction::payment(u, c, robinson_core::ledger::MicroAlgo(1)),
    ];
    for signer in [Some(&ADMIN), None] {
        assert!(!approves(&g, c, &pay, signer));
        assert!(!approves(&g, c, &pay[..1], signer));
    }
}

#[test]
fn template_conformance_is_byte_exact() {
    let c = swap_guard().address();
    let g = owner_guard(c);
    assert!(conforms_to_template(g.bytes(), &OWNER, &c, IN, OUT));
    assert!(!conforms_to_template(g.bytes(), &ADMIN, &c, IN, OUT));
    assert!(!conforms_to_template(g.bytes(), &OWNER, &c, OUT, IN));
    let mut extended = g.bytes().to_vec();
    extended.extend_from_slice(g.bytes());
    assert!(!conforms_to_template(&extended, &OWNER, &c, IN, OUT));
}

#[test]
fn programs_round_trip_through_bytes() {
    for g in [swap_guard(), owner_guard(Address([3; 32]))] {
        let again = GuardProgram::from_bytes(g.bytes()).unwrap();
        assert_eq!(again, g);
        assert_eq!(again.address(), Address::from_program(g.bytes()));
        assert_eq!(again.disassemble().lines().count(), g.instructions().len());
    }
    assert_eq!(GuardProgram::from_bytes(&[]).unwrap_err(), GuardError::Empty);
}

proptest! {
    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(p) = GuardProgram::from_bytes(&bytes) {
            prop_assert_eq!(p.bytes(), &bytes[..]);
            let txns = [Transaction::opt_in(Address([1; 32]), IN)];
            prop_assert!(evaluate(&p, &EvalContext::new(&txns, 0, None)).is_ok());
        }
    }

    #[test]
    fn truncating_a_template_invalidates_it(cut in 1usize..200) {
        let g = swap_guard();
        let cut = cut % g.bytes().len();
        if let Ok(p) = GuardProgram::from_bytes(&g.bytes()[..cut]) {
            // a valid prefix is a different program with a different address
            prop_assert_ne!(p.address(), g.address());
        }
    }
}
