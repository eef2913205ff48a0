use alloc::vec;
use alloc::vec::Vec;

use crate::quantum::Operator;
use crate::{Error, Result, C64};

/// Taylor terms are summed until the newest term drops below this fraction of
/// the running sum.
const TAYLOR_TOL: f64 = 1e-17;
const TAYLOR_MAX_TERMS: usize = 60;
/// Norm of each scaled sub-problem.
const SCALED_NORM: f64 = 0.5;
/// Generators needing more pieces than this are rejected as unusable.
const MAX_PIECES: f64 = 1e6;

/// `exp(scale * op)` by scaling and squaring around a Taylor core.
pub fn matrix_exponential(op: &Operator, scale: C64) -> Result<Operator> {
    if !(scale.re.is_finite() && scale.im.is_finite()) {
        return Err(Error::InvalidOperator);
    }
    if op.entries().iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidOperator);
    }
    let a = op.scale(scale);
    let norm = a.norm_one();
    let squarings = if norm > SCALED_NORM {
        libm::ceil(libm::log2(norm / SCALED_NORM)) as i32
    } else {
        0
    };
    let b = a.scale_real(libm::pow(2.0, -(squarings as f64)));
    let n = op.dim();
    let mut result = Operator::identity(n);
    let mut term = Operator::identity(n);
    for k in 1..=TAYLOR_MAX_TERMS {
        term = term.matmul(&b).scale_real(1.0 / k as f64);
        result.add_scaled(C64::new(1.0, 0.0), &term);
        if term.max_abs() <= TAYLOR_TOL * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    if result.entries().iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidOperator);
    }
    Ok(Operator::from_parts_unchecked(n, result.entries().to_vec(), false))
}

/// Reusable buffers for [`exp_action`].
#[derive(Debug, Clone, Default)]
pub struct TaylorScratch {
    term: Vec<C64>,
    next: Vec<C64>,
}

impl TaylorScratch {
    pub fn new(len: usize) -> Self {
        Self { term: vec![C64::new(0.0, 0.0); len], next: vec![C64::new(0.0, 0.0); len] }
    }

    fn ensure(&mut self, len: usize) {
        if self.term.len() != len {
            self.term.resize(len, C64::new(0.0, 0.0));
            self.next.resize(len, C64::new(0.0, 0.0));
        }
    }
}

/// Overwrite `v` with `exp(G) v`, where `apply(x, y)` writes `y = G x` and
/// `norm_bound` bounds an induced norm of `G`. The interval is cut into
/// pieces of norm at most `1/2` and each piece is summed as a Taylor series.
/// Returns the number of generator applications; a non-finite or huge
/// `norm_bound` is an error.
pub fn exp_action<F>(mut apply: F, norm_bound: f64, v: &mut [C64], scratch: &mut TaylorScratch) -> Result<usize>
where
    F: FnMut(&[C64], &mut [C64]),
{
    if !(norm_bound.is_finite() && norm_bound / SCALED_NORM <= MAX_PIECES) {
        return Err(Error::invalid(alloc::format!("generator norm {norm_bound:e} is too large for one step")));
    }
    scratch.ensure(v.len());
    let pieces = if norm_bound > SCALED_NORM {
        libm::ceil(norm_bound / SCALED_NORM) as usize
    } else {
        1
    };
    let inv_pieces = 1.0 / pieces as f64;
    let mut applications = 0;
    for _ in 0..pieces {
        scratch.term.copy_from_slice(v);
        for k in 1..=TAYLOR_MAX_TERMS {
            apply(&scratch.term, &mut scratch.next);
            applications += 1;
            let c = inv_pieces / k as f64;
            let mut term_max: f64 = 0.0;
            let mut sum_max: f64 = 0.0;
            for (x, acc) in scratch.next.iter_mut().zip(v.iter_mut()) {
                *x *= c;
                *acc += *x;
                term_max = term_max.max(x.re.abs().max(x.im.abs()));
                sum_max = sum_max.max(acc.re.abs().max(acc.im.abs()));
            }
            core::mem::swap(&mut scratch.term, &mut scratch.next);
            if term_max <= TAYLOR_TOL * sum_max {
                break;
            }
        }
    }
    Ok(applications)
}

/// `exp(G) v` for a dense generator.
pub fn exp_action_dense(generator: &Operator, v: &mut [C64], scratch: &mut TaylorScratch) -> Result<()> {
    let bound = generator.norm_one();
    exp_action(|x, y| generator.apply_into(x, y), bound, v, scratch).map(|_| ())
}
