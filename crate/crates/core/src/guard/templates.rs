//! The two protocol programs: the swap contract guarding the token reserve,
//! and the per-number owner template guarding each option wallet.

use crate::ledger::{Address, AssetId, TxKind};

use super::program::{Field, GuardProgram, Instruction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapGuardParams {
    pub in_asset: AssetId,
    pub out_asset: AssetId,
    /// Key allowed to make C opt in to IN and OUT (the attestator).
    pub admin_key: [u8; 32],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OwnerGuardParams {
    pub owner_key: [u8; 32],
    pub c_address: Address,
    pub in_asset: AssetId,
    pub out_asset: AssetId,
}

/// Postfix code fragment that leaves one integer.
type Frag = Vec<Instruction>;

fn field(index: u8, field: Field) -> Instruction {
    Instruction::TxnField { index, field }
}

fn int_eq(index: u8, f: Field, n: u64) -> Frag {
    vec![field(index, f), Instruction::PushInt(n), Instruction::Eq]
}

fn bytes_eq(index: u8, f: Field, b: &[u8; 32]) -> Frag {
    vec![field(index, f), Instruction::PushBytes(b.to_vec()), Instruction::Eq]
}

fn fields_cmp(a: (u8, Field), b: (u8, Field), op: Instruction) -> Frag {
    vec![field(a.0, a.1), field(b.0, b.1), op]
}

fn group_size_is(n: u64) -> Frag {
    vec![Instruction::GroupSize, Instruction::PushInt(n), Instruction::Eq]
}

fn join(parts: Vec<Frag>, op: Instruction) -> Frag {
    let mut out = Frag::new();
    for (i, p) in parts.into_iter().enumerate() {
        out.extend(p);
        if i > 0 {
            out.push(op.clone());
        }
    }
    out
}

fn all(parts: Vec<Frag>) -> Frag {
    join(parts, Instruction::And)
}

fn any(parts: Vec<Frag>) -> Frag {
    join(parts, Instruction::Or)
}

/// Two single-unit transfers of opposite token classes between the same two
/// distinct parties, in opposite directions.
fn swap_shape(in_asset: AssetId, out_asset: AssetId) -> Frag {
    let axfer = TxKind::AssetTransfer.code();
    let one_of_pair = |i: u8| {
        any(vec![
            int_eq(i, Field::AssetId, in_asset.0),
            int_eq(i, Field::AssetId, out_asset.0),
        ])
    };
    all(vec![
        group_size_is(2),
        int_eq(0, Field::Kind, axfer),
        int_eq(1, Field::Kind, axfer),
        int_eq(0, Field::Amount, 1),
        int_eq(1, Field::Amount, 1),
        fields_cmp((0, Field::Sender), (1, Field::Receiver), Instruction::Eq),
        fields_cmp((0, Field::Receiver), (1, Field::Sender), Instruction::Eq),
        fields_cmp((0, Field::Sender), (0, Field::Receiver), Instruction::Neq),
        fields_cmp((0, Field::AssetId), (1, Field::AssetId), Instruction::Neq),
        one_of_pair(0),
        one_of_pair(1),
    ])
}

/// Both opt-ins, IN then OUT, from one sender.
fn opt_in_pair(in_asset: AssetId, out_asset: AssetId) -> Frag {
    let optin = TxKind::AssetOptIn.code();
    all(vec![
        group_size_is(2),
        int_eq(0, Field::Kind, optin),
        int_eq(1, Field::Kind, optin),
        int_eq(0, Field::AssetId, in_asset.0),
        int_eq(1, Field::AssetId, out_asset.0),
        fields_cmp((0, Field::Sender), (1, Field::Sender), Instruction::Eq),
    ])
}

fn signed_by(key: &[u8; 32]) -> Frag {
    vec![
        Instruction::GroupSigner,
        Instruction::PushBytes(key.to_vec()),
        Instruction::Eq,
    ]
}

/// Program for the central contract C.
///
/// The ledger consults it only for transactions sent by C, so requiring the
/// two transfers to mirror each other pins C as the party on both sides.
/// The program cannot embed C's own address: that address is its digest.
/// The only other approved group is C's own opt-in pair, co-signed by the
/// admin key.
pub fn compile_swap_guard(params: &SwapGuardParams) -> GuardProgram {
    assert_ne!(params.in_asset, params.out_asset, "IN and OUT must differ");
    let code = any(vec![
        swap_shape(params.in_asset, params.out_asset),
        all(vec![
            signed_by(&params.admin_key),
            opt_in_pair(params.in_asset, params.out_asset),
        ]),
    ]);
    GuardProgram::from_instructions(code).expect("swap guard template is statically valid")
}

/// Standard template for an option wallet: only groups signed by the owner,
/// and only a swap with C or the wallet's initial IN/OUT opt-in pair.
pub fn compile_owner_guard(params: &OwnerGuardParams) -> GuardProgram {
    let c = params.c_address.as_bytes();
    let swap_with_c = all(vec![
        swap_shape(params.in_asset, params.out_asset),
        any(vec![
            bytes_eq(0, Field::Receiver, c),
            bytes_eq(0, Field::Sender, c),
        ]),
    ]);
    let code = all(vec![
        signed_by(&params.owner_key),
        any(vec![
            swap_with_c,
            opt_in_pair(params.in_asset, params.out_asset),
        ]),
    ]);
    GuardProgram::from_instructions(code).expect("owner guard template is statically valid")
}

/// Byte-identical to the standard template instantiated with these values.
pub fn conforms_to_template(
    program: &[u8],
    expected_owner: &[u8; 32],
    c_address: &Address,
    in_asset: AssetId,
    out_asset: AssetId,
) -> bool {
    let expected = compile_owner_guard(&OwnerGuardParams {
        owner_key: *expected_owner,
        c_address: *c_address,
        in_asset,
        out_asset,
    });
    expected.bytes() == program
}
