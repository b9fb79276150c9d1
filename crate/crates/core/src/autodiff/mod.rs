//! Scalar reverse-mode differentiation with a forward tangent channel.

mod adam;
mod dual;
mod tape;

pub use adam::Adam;
pub use dual::Dual;
pub use tape::{dot, AdError, BinaryOp, Tape, UnaryOp, Var, VarRange};
