use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::quantum::{MixedState, Operator};
use crate::{Error, Result, C64};

/// `1 ⊗ .. ⊗ op ⊗ .. ⊗ 1` with `op` on subsystem `slot` of a register with
/// subsystem dimensions `dims`.
pub fn tensor_embed(op: &Operator, slot: usize, dims: &[usize]) -> Result<Operator> {
    if slot >= dims.len() {
        return Err(Error::shape(format!("slot {slot} out of range for {} subsystems", dims.len())));
    }
    if dims[slot] != op.dim() {
        return Err(Error::shape(format!(
            "operator dimension {} does not match subsystem dimension {}",
            op.dim(),
            dims[slot]
        )));
    }
    let before: usize = dims[..slot].iter().product();
    let after: usize = dims[slot + 1..].iter().product();
    Operator::identity(before).kron(op)?.kron(&Operator::identity(after))
}

/// Mixed-radix digits of `index` for subsystem dimensions `dims` (first
/// subsystem most significant).
fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for (d, o) in dims.iter().zip(out.iter_mut()).rev() {
        *o = index % d;
        index /= d;
    }
}

/// Reduced state on the subsystems listed in `keep`, tracing out the rest.
pub fn partial_trace(rho: &MixedState, keep: &[usize], dims: &[usize]) -> Result<MixedState> {
    let total: usize = dims.iter().product();
    if total != rho.dim() {
        return Err(Error::shape(format!(
            "subsystem dimensions multiply to {total}, state has dimension {}",
            rho.dim()
        )));
    }
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::shape("kept subsystems must be distinct valid slots"));
    }
    let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|s| !kept.contains(s)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let nk: usize = kept_dims.iter().product();
    let nr: usize = traced_dims.iter().product();

    // full_index[k * nr + r]
    let mut full_index = vec![0usize; total];
    let mut dig = vec![0usize; dims.len()];
    for i in 0..total {
        digits(i, dims, &mut dig);
        let mut k = 0;
        for (&s, &d) in kept.iter().zip(&kept_dims) {
            k = k * d + dig[s];
        }
        let mut r = 0;
        for (&s, &d) in traced.iter().zip(&traced_dims) {
            r = r * d + dig[s];
        }
        full_index[k * nr + r] = i;
    }
    let mut out = vec![C64::new(0.0, 0.0); nk * nk];
    for k in 0..nk {
        for kp in 0..nk {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..nr {
                acc += rho.get(full_index[k * nr + r], full_index[kp * nr + r]);
            }
            out[k * nk + kp] = acc;
        }
    }
    Ok(MixedState::from_operator_unchecked(Operator::from_parts_unchecked(nk.max(1), out, true)))
}
