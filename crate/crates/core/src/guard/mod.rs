//! Stateless guard programs.
//!
//! A guard is a straight-line stack program over nine instructions. It sees
//! the transaction group being authorized and the identity that signed the
//! group, and leaves a single integer: non-zero approves.

mod eval;
mod program;
mod templates;

pub use eval::{evaluate, evaluate_group, EvalContext, EvaluationFault};
pub use program::{Field, GuardError, GuardProgram, Instruction, MAX_PROGRAM_BYTES};
pub use templates::{
    compile_owner_guard, compile_swap_guard, conforms_to_template, OwnerGuardParams,
    SwapGuardParams,
};
