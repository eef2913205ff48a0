//! Dense complex linear algebra: operators, pure and mixed states, tensor
//! embedding, matrix exponentials, partial traces, expectations and
//! fidelities.
//!
//! All values are immutable after construction and can be shared freely
//! between trajectory workers.

pub mod eigen;
mod expm;
mod operator;
mod state;
mod tensor;

pub use expm::{exp_action, exp_action_dense, matrix_exponential, TaylorScratch};
pub use operator::Operator;
pub use state::{MixedState, PureState};
pub use tensor::{partial_trace, tensor_embed};

use crate::{Error, Result, C64};

/// Largest operator dimension accepted by the dense constructors.
pub const DEFAULT_DIM_CAP: usize = 1024;

/// `<s|O|s> / <s|s>` for Hermitian `O`.
pub fn expectation(s: &PureState, op: &Operator) -> Result<f64> {
    if s.dim() != op.dim() {
        return Err(Error::shape("operator and state dimensions differ"));
    }
    let n2 = s.norm_sqr();
    if !(n2 > 0.0 && n2.is_finite()) {
        return Err(Error::DegenerateState);
    }
    Ok(op.sandwich(s.amplitudes(), s.amplitudes()).re / n2)
}

/// `|<a|b>|^2 / (<a|a><b|b>)`.
pub fn fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape("states have different dimensions"));
    }
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::DegenerateState);
    }
    let ov: C64 = a.inner(b);
    Ok((ov.norm_sqr() / (na * nb)).min(1.0))
}
