use crate::ledger::{Transaction, TransactionGroup};

use super::program::{Field, GuardProgram, Instruction};

/// What a guard program can observe: the whole group, the index being
/// authorized, and the identity that signed the group id (verified by the
/// ledger before evaluation).
#[derive(Clone, Copy, Debug)]
pub struct EvalContext<'a> {
    pub txns: &'a [Transaction],
    pub index: usize,
    pub signer: Option<&'a [u8; 32]>,
}

impl<'a> EvalContext<'a> {
    pub fn new(txns: &'a [Transaction], index: usize, signer: Option<&'a [u8; 32]>) -> Self {
        EvalContext {
            txns,
            index,
            signer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvaluationFault {
    #[error("stack underflow at instruction {0}")]
    StackUnderflow(usize),
    #[error("operand type mismatch at instruction {0}")]
    TypeMismatch(usize),
    #[error("program left {0} values")]
    BadFinalStack(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Value<'a> {
    Int(u64),
    Bytes(&'a [u8]),
}

/// Runs a validated program. Faults cannot happen for programs built through
/// [`GuardProgram`]; they are reported rather than panicking regardless.
pub fn evaluate(program: &GuardProgram, ctx: &EvalContext<'_>) -> Result<bool, EvaluationFault> {
    let mut stack: Vec<Value<'_>> = Vec::with_capacity(16);
    for (at, ins) in program.instructions().iter().enumerate() {
        match ins {
            Instruction::PushInt(n) => stack.push(Value::Int(*n)),
            Instruction::PushBytes(b) => stack.push(Value::Bytes(b)),
            Instruction::TxnField { index, field } => stack.push(txn_field(ctx, *index, *field)),
            Instruction::GroupSize => stack.push(Value::Int(ctx.txns.len() as u64)),
            Instruction::GroupSigner => {
                stack.push(Value::Bytes(ctx.signer.map_or(&[][..], |s| &s[..])))
            }
            Instruction::Eq | Instruction::Neq | Instruction::And | Instruction::Or => {
                let b = stack.pop().ok_or(EvaluationFault::StackUnderflow(at))?;
                let a = stack.pop().ok_or(EvaluationFault::StackUnderflow(at))?;
                let r = match (ins, a, b) {
                    (Instruction::Eq, Value::Int(x), Value::Int(y)) => x == y,
                    (Instruction::Eq, Value::Bytes(x), Value::Bytes(y)) => x == y,
                    (Instruction::Neq, Value::Int(x), Value::Int(y)) => x != y,
                    (Instruction::Neq, Value::Bytes(x), Value::Bytes(y)) => x != y,
                    (Instruction::And, Value::Int(x), Value::Int(y)) => x != 0 && y != 0,
                    (Instruction::Or, Value::Int(x), Value::Int(y)) => x != 0 || y != 0,
                    _ => return Err(EvaluationFault::TypeMismatch(at)),
                };
                stack.push(Value::Int(r as u64));
            }
        }
    }
    match stack.as_slice() {
        [Value::Int(x)] => Ok(*x != 0),
        _ => Err(EvaluationFault::BadFinalStack(stack.len())),
    }
}

/// Evaluates with the group's own signer identity (signatures unchecked).
pub fn evaluate_group(
    program: &GuardProgram,
    group: &TransactionGroup,
    index: usize,
) -> Result<bool, EvaluationFault> {
    let signer = group.signer();
    evaluate(program, &EvalContext::new(&group.txns, index, signer.as_ref()))
}

// Out-of-range indices and absent fields read as the zero value of the field's
// type; kind code 0 is never a real kind.
fn txn_field<'a>(ctx: &EvalContext<'a>, index: u8, field: Field) -> Value<'a> {
    let Some(t) = ctx.txns.get(index as usize) else {
        return match field {
            Field::Sender | Field::Receiver => Value::Bytes(&[]),
            _ => Value::Int(0),
        };
    };
    match field {
        Field::Sender => Value::Bytes(t.sender.as_bytes()),
        Field::Receiver => Value::Bytes(t.receiver.as_ref().map_or(&[][..], |r| r.as_bytes())),
        Field::AssetId => Value::Int(t.asset_id.map_or(0, |a| a.0)),
        Field::Amount => Value::Int(t.amount),
        Field::Kind => Value::Int(t.kind.code()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Address, MicroAlgo};

    fn prog(code: Vec<Instruction>) -> GuardProgram {
        GuardProgram::from_instructions(code).unwrap()
    }

    fn any_groups() -> Vec<Vec<Transaction>> {
        let a = Address([1; 32]);
        let b = Address([2; 32]);
        vec![
            vec![],
            vec![Transaction::payment(a, b, MicroAlgo(3))],
            vec![Transaction::note(a, vec![1]), Transaction::note(b, vec![])],
        ]
    }

    #[test]
    fn constant_programs() {
        let t = prog(vec![Instruction::PushInt(1)]);
        let f = prog(vec![Instruction::PushInt(0)]);
        for g in any_groups() {
            let ctx = EvalContext::new(&g, 0, None);
            assert_eq!(evaluate(&t, &ctx), Ok(true));
            assert_eq!(evaluate(&f, &ctx), Ok(false));
        }
    }

    #[test]
    fn out_of_range_reads_zero() {
        let p = prog(vec![
            Instruction::TxnField {
                index: 5,
                field: Field::Kind,
            },
            Instruction::PushInt(0),
            Instruction::Eq,
        ]);
        let g = any_groups().remove(1);
        assert_eq!(evaluate(&p, &EvalContext::new(&g, 0, None)), Ok(true));
    }

    #[test]
    fn signer_absent_never_matches_a_key() {
        let p = prog(vec![
            Instruction::GroupSigner,
            Instruction::PushBytes(vec![0; 32]),
            Instruction::Eq,
        ]);
        let g = any_groups().remove(1);
        assert_eq!(evaluate(&p, &EvalContext::new(&g, 0, None)), Ok(false));
        let k = [0u8; 32];
        assert_eq!(evaluate(&p, &EvalContext::new(&g, 0, Some(&k))), Ok(true));
    }
}
