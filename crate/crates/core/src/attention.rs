//! Causal attention, twice: the softmax form and the two-layer recurrence
//! that computes exactly the same state one position at a time.
//!
//! The recurrence carries, per head, a value vector `f` and a scalar `g`
//! holding the running log-denominator of the softmax. One step folds the
//! next position in through a pair of complementary sigmoid gates:
//!
//! ```text
//! f_i = v_i · σ(s_i − g_{i−1}) + f_{i−1} · σ(g_{i−1} − s_i)
//! g_i = logaddexp(g_{i−1}, s_i)          s_i = q_n · k_i
//! ```
//!
//! with base case `f_1 = v_1`, `g_1 = s_1`. After step `i`, `e^{g_i}` equals
//! the partial softmax denominator, which is what makes the final `f_n`
//! equal the full attention output. `g` must be accumulated through the
//! stable `max + log1p(e^{-|diff|})` form; the naive `log(e^a + e^b)`
//! overflows once scores reach a few hundred.
//!
//! The abstract one-step transformer propagates interval boxes through the
//! same step, evaluating the update in two algebraic rewritings and meeting
//! the results, which is strictly tighter than either alone.

use crate::error::{Error, Result};
use crate::interval::{Interval, IvBox};
use crate::numerics::{dot_slice, Num};

/// Stable `log(e^a + e^b)`: `max(a,b) + log1p(e^{-|a-b|})`. Never overflows
/// for inputs below ~1e300.
pub fn logaddexp<S: Num>(a: &S, b: &S) -> S {
    let m = a.max(b);
    let t = a.sub(b).abs().mul_const(-1.0).exp().log1p();
    m.add(&t)
}

/// Attention output at the final position, softmax form, with
/// max-subtraction for stability. `keys` and `values` hold one vector per
/// position, oldest first.
pub fn attend_softmax(q: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>]) -> Result<Vec<f64>> {
    let scores: Vec<f64> = keys.iter().map(|k| dot_slice(q, k)).collect();
    softmax_combine(&scores, values)
}

/// Weighted value sum for precomputed scores (softmax route).
pub fn softmax_combine(scores: &[f64], values: &[Vec<f64>]) -> Result<Vec<f64>> {
    if scores.is_empty() || scores.len() != values.len() {
        return Err(Error::EmptyInput);
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = weights.iter().sum();
    let d = values[0].len();
    let mut out = vec![0.0; d];
    for (w, v) in weights.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x / z;
        }
    }
    Ok(out)
}

/// Attention output at the final position, recurrence form. Exactly equal
/// (up to roundoff) to [`attend_softmax`]; works on any [`Num`] scalar.
pub fn attend_recurrence<S: Num>(q: &[S], keys: &[Vec<S>], values: &[Vec<S>]) -> Result<Vec<S>> {
    let scores: Vec<S> = keys.iter().map(|k| dot_slice(q, k)).collect();
    recurrence_combine(&scores, values)
}

/// Fold the recurrence over precomputed scores and return `f_n`.
pub fn recurrence_combine<S: Num>(scores: &[S], values: &[Vec<S>]) -> Result<Vec<S>> {
    if scores.is_empty() || scores.len() != values.len() {
        return Err(Error::EmptyInput);
    }
    let mut f = values[0].clone();
    let mut g = scores[0].clone();
    for (s, v) in scores.iter().zip(values).skip(1) {
        let gate_new = s.sub(&g).sigmoid();
        let gate_old = g.sub(s).sigmoid();
        for (fd, vd) in f.iter_mut().zip(v) {
            *fd = vd.mul(&gate_new).add(&fd.mul(&gate_old));
        }
        g = logaddexp(&g, s);
    }
    Ok(f)
}

/// Per-step trace of the recurrence: `(f_i, g_i)` for every `i`. Used by
/// tests that check the running log-denominator invariant.
pub fn recurrence_trace(scores: &[f64], values: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, f64)>> {
    if scores.is_empty() || scores.len() != values.len() {
        return Err(Error::EmptyInput);
    }
    let mut out = Vec::with_capacity(scores.len());
    let mut f = values[0].clone();
    let mut g = scores[0];
    out.push((f.clone(), g));
    for (s, v) in scores.iter().zip(values).skip(1) {
        let gate_new = Num::sigmoid(&(s - g));
        let gate_old = Num::sigmoid(&(g - s));
        for (fd, vd) in f.iter_mut().zip(v) {
            *fd = vd * gate_new + *fd * gate_old;
        }
        g = logaddexp(s, &g);
        out.push((f.clone(), g));
    }
    Ok(out)
}

/// Abstract recurrence state of one head: a box over `f` and an interval
/// over the log-denominator `g`. Its size depends only on the head width,
/// never on how many positions have been folded in.
#[derive(Debug, Clone)]
pub struct AbstractHeadState<S = f64> {
    pub f: IvBox<S>,
    pub g: Interval<S>,
}

impl<S: Num> AbstractHeadState<S> {
    /// Base case of the recurrence on the first emitted position:
    /// `f = v`, `g = s`.
    pub fn init(score: Interval<S>, v: IvBox<S>) -> Self {
        AbstractHeadState { f: v, g: score }
    }

    pub fn join(&self, o: &Self) -> Self {
        AbstractHeadState {
            f: self.f.join(&o.f),
            g: self.g.join(&o.g),
        }
    }

    /// Scalar count per state: the structural memory footprint, a function
    /// of the head width only.
    pub fn scalar_count(&self) -> usize {
        2 * self.f.len() + 2
    }
}

/// Width bookkeeping for the dual-rewriting meet.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeetStats {
    /// Abstract steps taken.
    pub steps: u64,
    /// Steps where at least one dimension met strictly below both rewritings.
    pub strict_steps: u64,
    /// Dimension updates observed.
    pub dims: u64,
    /// Dimension updates strictly improved by the meet.
    pub strict_dims: u64,
    /// Worst meet-width excess over min(rewriting widths), normalized by
    /// max(1, width); positive values beyond the slack indicate a bug.
    pub max_excess: f64,
}

impl MeetStats {
    pub fn merge(&mut self, o: &MeetStats) {
        self.steps += o.steps;
        self.strict_steps += o.strict_steps;
        self.dims += o.dims;
        self.strict_dims += o.strict_dims;
        self.max_excess = self.max_excess.max(o.max_excess);
    }

    pub fn strict_step_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.strict_steps as f64 / self.steps as f64
        }
    }
}

/// One abstract recurrence step: fold a position with score interval
/// `score` and value box `v` into `state`.
///
/// `f` is updated through both rewritings of the gate update,
///
/// ```text
/// r1 = (v − f)·σ(s − g) + f
/// r2 = v + (f − v)·σ(g − s)
/// ```
///
/// evaluated left to right exactly as written, then met per dimension.
/// `g` is updated endpointwise through stable logaddexp.
pub fn abstract_step<S: Num>(
    state: &AbstractHeadState<S>,
    score: &Interval<S>,
    v: &IvBox<S>,
    stats: &mut MeetStats,
) -> Result<AbstractHeadState<S>> {
    debug_assert_eq!(state.f.len(), v.len());
    let gate_new = score.sub(&state.g).sigmoid();
    let gate_old = state.g.sub(score).sigmoid();

    let mut dims = Vec::with_capacity(state.f.len());
    let mut strict_any = false;
    for (fd, vd) in state.f.dims.iter().zip(&v.dims) {
        let r1 = vd.sub(fd).mul(&gate_new).add(fd);
        let r2 = vd.add(&fd.sub(vd).mul(&gate_old));
        let met = r1.meet(&r2)?;

        let (w1, w2, wm) = (r1.width(), r2.width(), met.width());
        let best = w1.min(w2);
        stats.dims += 1;
        if wm < best {
            stats.strict_dims += 1;
            strict_any = true;
        }
        let excess = (wm - best) / f64::max(1.0, best);
        if excess > stats.max_excess {
            stats.max_excess = excess;
        }
        dims.push(met);
    }
    stats.steps += 1;
    if strict_any {
        stats.strict_steps += 1;
    }

    Ok(AbstractHeadState {
        f: IvBox::new(dims),
        g: state.g.logaddexp(score),
    })
}
