use std::fmt;

use crate::ledger::{Address, MAX_GROUP_SIZE};

pub const MAX_PROGRAM_BYTES: usize = 1024;
pub const MAX_PUSH_BYTES: usize = 64;

const OP_PUSH_INT: u8 = 0x01;
const OP_PUSH_BYTES: u8 = 0x02;
const OP_TXN_FIELD: u8 = 0x03;
const OP_GROUP_SIZE: u8 = 0x04;
const OP_GROUP_SIGNER: u8 = 0x05;
const OP_EQ: u8 = 0x10;
const OP_NEQ: u8 = 0x11;
const OP_AND: u8 = 0x12;
const OP_OR: u8 = 0x13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Sender,
    Receiver,
    AssetId,
    Amount,
    Kind,
}

impl Field {
    fn code(self) -> u8 {
        match self {
            Field::Sender => 0,
            Field::Receiver => 1,
            Field::AssetId => 2,
            Field::Amount => 3,
            Field::Kind => 4,
        }
    }

    fn from_code(c: u8) -> Option<Field> {
        Some(match c {
            0 => Field::Sender,
            1 => Field::Receiver,
            2 => Field::AssetId,
            3 => Field::Amount,
            4 => Field::Kind,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Field::Sender => "sender",
            Field::Receiver => "receiver",
            Field::AssetId => "asset_id",
            Field::Amount => "amount",
            Field::Kind => "kind",
        }
    }

    pub(crate) fn value_type(self) -> ValueType {
        match self {
            Field::Sender | Field::Receiver => ValueType::Bytes,
            Field::AssetId | Field::Amount | Field::Kind => ValueType::Int,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ValueType {
    Int,
    Bytes,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    PushInt(u64),
    PushBytes(Vec<u8>),
    TxnField { index: u8, field: Field },
    GroupSize,
    GroupSigner,
    Eq,
    Neq,
    And,
    Or,
}

impl Instruction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Instruction::PushInt(n) => {
                out.push(OP_PUSH_INT);
                out.extend_from_slice(&n.to_be_bytes());
            }
            Instruction::PushBytes(b) => {
                out.push(OP_PUSH_BYTES);
                out.push(b.len() as u8);
                out.extend_from_slice(b);
            }
            Instruction::TxnField { index, field } => {
                out.extend_from_slice(&[OP_TXN_FIELD, *index, field.code()]);
            }
            Instruction::GroupSize => out.push(OP_GROUP_SIZE),
            Instruction::GroupSigner => out.push(OP_GROUP_SIGNER),
            Instruction::Eq => out.push(OP_EQ),
            Instruction::Neq => out.push(OP_NEQ),
            Instruction::And => out.push(OP_AND),
            Instruction::Or => out.push(OP_OR),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::PushInt(n) => write!(f, "PUSH_INT {n}"),
            Instruction::PushBytes(b) => write!(f, "PUSH_BYTES 0x{}", hex::encode(b)),
            Instruction::TxnField { index, field } => {
                write!(f, "TXN_FIELD {index} {}", field.name())
            }
            Instruction::GroupSize => f.write_str("GROUP_SIZE"),
            Instruction::GroupSigner => f.write_str("GROUP_SIGNER"),
            Instruction::Eq => f.write_str("EQ"),
            Instruction::Neq => f.write_str("NEQ"),
            Instruction::And => f.write_str("AND"),
            Instruction::Or => f.write_str("OR"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GuardError {
    #[error("unknown opcode 0x{opcode:02x} at byte {offset}")]
    UnknownOpcode { offset: usize, opcode: u8 },
    #[error("truncated immediate at byte {offset}")]
    Truncated { offset: usize },
    #[error("bad immediate at byte {offset}: {reason}")]
    BadImmediate { offset: usize, reason: &'static str },
    #[error("stack underflow at instruction {at}")]
    StackUnderflow { at: usize },
    #[error("type mismatch at instruction {at}")]
    TypeMismatch { at: usize },
    #[error("program must leave exactly one integer, leaves {depth} value(s)")]
    BadFinalStack { depth: usize },
    #[error("program is {len} bytes, limit is {MAX_PROGRAM_BYTES}")]
    TooLong { len: usize },
    #[error("empty program")]
    Empty,
}

/// A statically validated guard program. Construction is the only way to get
/// one, so every value is stack-safe and ends with one integer on the stack.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GuardProgram {
    bytes: Vec<u8>,
    code: Vec<Instruction>,
}

impl fmt::Debug for GuardProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GuardProgram({} ops, {})", self.code.len(), self.address())
    }
}

impl GuardProgram {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GuardError> {
        if bytes.len() > MAX_PROGRAM_BYTES {
            return Err(GuardError::TooLong { len: bytes.len() });
        }
        let code = decode(bytes)?;
        validate(&code)?;
        Ok(GuardProgram {
            bytes: bytes.to_vec(),
            code,
        })
    }

    pub fn from_instructions(code: Vec<Instruction>) -> Result<Self, GuardError> {
        let mut bytes = Vec::new();
        for (i, ins) in code.iter().enumerate() {
            if let Instruction::PushBytes(b) = ins {
                if b.len() > MAX_PUSH_BYTES {
                    return Err(GuardError::BadImmediate {
                        offset: i,
                        reason: "push exceeds 64 bytes",
                    });
                }
            }
            ins.encode_into(&mut bytes);
        }
        // decode again so hand-built instruction lists get the same checks
        Self::from_bytes(&bytes)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.code
    }

    /// Content address of the program.
    pub fn address(&self) -> Address {
        Address::from_program(&self.bytes)
    }

    /// One instruction per line.
    pub fn disassemble(&self) -> String {
        let mut s = String::new();
        for ins in &self.code {
            s.push_str(&ins.to_string());
            s.push('\n');
        }
        s
    }
}

fn decode(bytes: &[u8]) -> Result<Vec<Instruction>, GuardError> {
    let mut code = Vec::new();
    let mut pc = 0;
    while pc < bytes.len() {
        let op = bytes[pc];
        let need = |n: usize| {
            if pc + 1 + n > bytes.len() {
                Err(GuardError::Truncated { offset: pc })
            } else {
                Ok(&bytes[pc + 1..pc + 1 + n])
            }
        };
        let (ins, width) = match op {
            OP_PUSH_INT => {
                let imm = need(8)?;
                (
                    Instruction::PushInt(u64::from_be_bytes(imm.try_into().unwrap())),
                    9,
                )
            }
            OP_PUSH_BYTES => {
                let len = need(1)?[0] as usize;
                if len > MAX_PUSH_BYTES {
                    return Err(GuardError::BadImmediate {
                        offset: pc,
                        reason: "push exceeds 64 bytes",
                    });
                }
                let imm = need(1 + len)?;
                (Instruction::PushBytes(imm[1..].to_vec()), 2 + len)
            }
            OP_TXN_FIELD => {
                let imm = need(2)?;
                if imm[0] as usize >= MAX_GROUP_SIZE {
                    return Err(GuardError::BadImmediate {
                        offset: pc,
                        reason: "group index out of range",
                    });
                }
                let field = Field::from_code(imm[1]).ok_or(GuardError::BadImmediate {
                    offset: pc,
                    reason: "unknown field",
                })?;
                (
                    Instruction::TxnField {
                        index: imm[0],
                        field,
                    },
                    3,
                )
            }
            OP_GROUP_SIZE => (Instruction::GroupSize, 1),
            OP_GROUP_SIGNER => (Instruction::GroupSigner, 1),
            OP_EQ => (Instruction::Eq, 1),
            OP_NEQ => (Instruction::Neq, 1),
            OP_AND => (Instruction::And, 1),
            OP_OR => (Instruction::Or, 1),
            opcode => return Err(GuardError::UnknownOpcode { offset: pc, opcode }),
        };
        code.push(ins);
        pc += width;
    }
    Ok(code)
}

/// Abstract interpretation over value types. Straight-line code only, so one
/// pass decides stack safety.
fn validate(code: &[Instruction]) -> Result<(), GuardError> {
    if code.is_empty() {
        return Err(GuardError::Empty);
    }
    let mut stack: Vec<ValueType> = Vec::new();
    for (at, ins) in code.iter().enumerate() {
        match ins {
            Instruction::PushInt(_) | Instruction::GroupSize => stack.push(ValueType::Int),
            Instruction::PushBytes(_) | Instruction::GroupSigner => stack.push(ValueType::Bytes),
            Instruction::TxnField { field, .. } => stack.push(field.value_type()),
            Instruction::Eq | Instruction::Neq => {
                let b = stack.pop().ok_or(GuardError::StackUnderflow { at })?;
                let a = stack.pop().ok_or(GuardError::StackUnderflow { at })?;
                if a != b {
                    return Err(GuardError::TypeMismatch { at });
                }
                stack.push(ValueType::Int);
            }
            Instruction::And | Instruction::Or => {
                let b = stack.pop().ok_or(GuardError::StackUnderflow { at })?;
                let a = stack.pop().ok_or(GuardError::StackUnderflow { at })?;
                if a != ValueType::Int || b != ValueType::Int {
                    return Err(GuardError::TypeMismatch { at });
                }
                stack.push(ValueType::Int);
            }
        }
    }
    match stack.as_slice() {
        [ValueType::Int] => Ok(()),
        _ => Err(GuardError::BadFinalStack { depth: stack.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_one_is_valid() {
        let p = GuardProgram::from_instructions(vec![Instruction::PushInt(1)]).unwrap();
        assert_eq!(p.bytes(), &[1, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(p.disassemble(), "PUSH_INT 1\n");
    }

    #[test]
    fn unknown_opcode_rejected() {
        let err = GuardProgram::from_bytes(&[0x04, 0xff]).unwrap_err();
        assert_eq!(err, GuardError::UnknownOpcode { offset: 1, opcode: 0xff });
    }

    #[test]
    fn static_validation_cases() {
        use Instruction::*;
        let cases: Vec<(Vec<Instruction>, bool)> = vec![
            (vec![Eq], false),
            (vec![PushInt(1), PushInt(2)], false),
            (vec![PushInt(1), PushBytes(vec![1]), Eq], false),
            (vec![PushBytes(vec![1]), PushBytes(vec![1]), Eq], true),
            (vec![PushBytes(vec![1])], false),
            (vec![GroupSigner, PushBytes(vec![0; 32]), Neq], true),
            (vec![PushBytes(vec![1]), PushInt(1), And], false),
            (vec![GroupSize, PushInt(2), Eq, PushInt(1), Or], true),
            (vec![], false),
        ];
        for (code, ok) in cases {
            let r = GuardProgram::from_instructions(code.clone());
            assert_eq!(r.is_ok(), ok, "{code:?}: {r:?}");
        }
    }

    #[test]
    fn truncation_and_bad_immediates() {
        assert!(matches!(
            GuardProgram::from_bytes(&[OP_PUSH_INT, 0, 0]),
            Err(GuardError::Truncated { .. })
        ));
        assert!(matches!(
            GuardProgram::from_bytes(&[OP_TXN_FIELD, 16, 0]),
            Err(GuardError::BadImmediate { .. })
        ));
        assert!(matches!(
            GuardProgram::from_bytes(&[OP_TXN_FIELD, 0, 9]),
            Err(GuardError::BadImmediate { .. })
        ));
        assert!(matches!(
            GuardProgram::from_bytes(&vec![OP_GROUP_SIZE; 2000]),
            Err(GuardError::TooLong { .. })
        ));
    }

    #[test]
    fn decode_encode_is_identity() {
        use Instruction::*;
        let code = vec![
            TxnField {
                index: 1,
                field: Field::Receiver,
            },
            PushBytes(vec![7; 32]),
            Eq,
            GroupSize,
            PushInt(u64::MAX),
            Neq,
            And,
        ];
        let p = GuardProgram::from_instructions(code.clone()).unwrap();
        assert_eq!(p.instructions(), code.as_slice());
        assert_eq!(GuardProgram::from_bytes(p.bytes()).unwrap(), p);
    }
}
