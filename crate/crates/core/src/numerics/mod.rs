//! Dense tensor arithmetic and a minimal reverse-mode differentiation tape.
//!
//! Everything downstream (attention recurrences, interval transformers, the
//! certification DP) is written once against the [`Num`] scalar trait and
//! instantiated twice: with plain `f64` for inference and certification, and
//! with tape-recorded [`Var`] scalars when gradients are needed. That keeps
//! the differentiable path and the fast path literally the same code.

mod num;
mod tape;
mod tensor;

pub use num::Num;
pub use tape::{finite_diff_check, Gradients, ScalarFn, Tape, Var};
pub use tensor::Tensor;

/// Generic matrix(row-major, `rows`×`cols`)–vector product.
pub fn matvec_slice<S: Num>(w: &[S], rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = row[0].mul(&x[0]);
            for c in 1..cols {
                acc = acc.add(&row[c].mul(&x[c]));
            }
            acc
        })
        .collect()
}

/// Generic dot product; panics on empty slices.
pub fn dot_slice<S: Num>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0].mul(&b[0]);
    for i in 1..a.len() {
        acc = acc.add(&a[i].mul(&b[i]));
    }
    acc
}

/// Numerically stable softplus: `max(x, 0) + log1p(e^{-|x|})`.
pub fn softplus<S: Num>(x: &S) -> S {
    x.relu().add(&x.abs().mul_const(-1.0).exp().log1p())
}
