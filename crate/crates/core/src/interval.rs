//! Closed-interval arithmetic and the monotone abstract transformers used by
//! the certification engine.
//!
//! Intervals are generic over the scalar ([`Num`]), so the same transformer
//! code runs on plain f64 during certification and on tape scalars during
//! certified training. Endpoints use default rounding: 64-bit drift at desk
//! scale sits far below the 1e-9 slack applied at meet and containment, so
//! directed rounding would buy nothing.

use crate::error::{Error, Result};
use crate::numerics::{Num, Tensor};

/// Relative slack for meet rescue and containment tests.
pub const SLACK: f64 = 1e-9;

fn slack_for(x: f64) -> f64 {
    SLACK * f64::max(1.0, x.abs())
}

/// A closed real interval `[lo, hi]`, `lo <= hi`, both finite.
#[derive(Debug, Clone)]
pub struct Interval<S = f64> {
    pub lo: S,
    pub hi: S,
}

impl<S: Num> Interval<S> {
    pub fn new(lo: S, hi: S) -> Self {
        debug_assert!(lo.val() <= hi.val(), "inverted interval");
        Interval { lo, hi }
    }

    pub fn point(x: S) -> Self {
        Interval {
            lo: x.clone(),
            hi: x,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi.val() - self.lo.val()
    }

    pub fn add(&self, o: &Self) -> Self {
        Interval {
            lo: self.lo.add(&o.lo),
            hi: self.hi.add(&o.hi),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Interval {
            lo: self.lo.sub(&o.hi),
            hi: self.hi.sub(&o.lo),
        }
    }

    /// Product as the hull of the four endpoint products.
    pub fn mul(&self, o: &Self) -> Self {
        let p1 = self.lo.mul(&o.lo);
        let p2 = self.lo.mul(&o.hi);
        let p3 = self.hi.mul(&o.lo);
        let p4 = self.hi.mul(&o.hi);
        Interval {
            lo: p1.min(&p2).min(&p3.min(&p4)),
            hi: p1.max(&p2).max(&p3.max(&p4)),
        }
    }

    /// Product with a point scalar.
    pub fn mul_scalar(&self, s: &S) -> Self {
        let a = self.lo.mul(s);
        let b = self.hi.mul(s);
        Interval {
            lo: a.min(&b),
            hi: a.max(&b),
        }
    }

    pub fn mul_const(&self, c: f64) -> Self {
        let a = self.lo.mul_const(c);
        let b = self.hi.mul_const(c);
        if c >= 0.0 {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn neg(&self) -> Self {
        Interval {
            lo: self.hi.mul_const(-1.0),
            hi: self.lo.mul_const(-1.0),
        }
    }

    /// Exact image under a nondecreasing function.
    pub fn sigmoid(&self) -> Self {
        Interval {
            lo: self.lo.sigmoid(),
            hi: self.hi.sigmoid(),
        }
    }

    pub fn relu(&self) -> Self {
        Interval {
            lo: self.lo.relu(),
            hi: self.hi.relu(),
        }
    }

    pub fn exp(&self) -> Self {
        Interval {
            lo: self.lo.exp(),
            hi: self.hi.exp(),
        }
    }

    /// Endpointwise stable log(e^a + e^b); exact because logaddexp is
    /// nondecreasing in both arguments.
    pub fn logaddexp(&self, o: &Self) -> Self {
        Interval {
            lo: crate::attention::logaddexp(&self.lo, &o.lo),
            hi: crate::attention::logaddexp(&self.hi, &o.hi),
        }
    }

    /// Per-dim hull.
    pub fn join(&self, o: &Self) -> Self {
        Interval {
            lo: self.lo.min(&o.lo),
            hi: self.hi.max(&o.hi),
        }
    }

    /// Intersection. The strict intersection is returned whenever it is
    /// non-empty (so meet(a, a) == a and the result never widens); a gap of
    /// at most the relative slack is rescued as the tiny interval covering
    /// it, since the engine only meets intervals that provably overlap up
    /// to floating-point drift. A wider gap is a soundness violation.
    pub fn meet(&self, o: &Self) -> Result<Self> {
        let lo = self.lo.max(&o.lo);
        let hi = self.hi.min(&o.hi);
        let (lv, hv) = (lo.val(), hi.val());
        if lv <= hv {
            return Ok(Interval { lo, hi });
        }
        if !(lv.is_finite() && hv.is_finite()) {
            // overflow upstream, not a soundness gap
            return Err(Error::NonFinite("interval meet".into()));
        }
        let gap = lv - hv;
        if gap <= slack_for(lv) + slack_for(hv) {
            return Ok(Interval { lo: hi, hi: lo });
        }
        Err(Error::EmptyMeet {
            a_lo: self.lo.val(),
            a_hi: self.hi.val(),
            b_lo: o.lo.val(),
            b_hi: o.hi.val(),
        })
    }

    /// Containment with relative slack at both endpoints.
    pub fn contains(&self, x: f64) -> bool {
        let lo = self.lo.val();
        let hi = self.hi.val();
        x >= lo - slack_for(lo) && x <= hi + slack_for(hi)
    }

    /// Is `o` inside `self`, up to slack?
    pub fn encloses(&self, o: &Interval<f64>) -> bool {
        self.contains(o.lo) && self.contains(o.hi)
    }
}

impl Interval<f64> {
    pub fn from_f64(lo: f64, hi: f64) -> Self {
        Interval::new(lo, hi)
    }
}

/// An axis-aligned box: one interval per dimension.
#[derive(Debug, Clone)]
pub struct IvBox<S = f64> {
    pub dims: Vec<Interval<S>>,
}

impl<S: Num> IvBox<S> {
    pub fn new(dims: Vec<Interval<S>>) -> Self {
        IvBox { dims }
    }

    /// Zero-width box at a point.
    pub fn point(xs: &[S]) -> Self {
        IvBox {
            dims: xs.iter().map(|x| Interval::point(x.clone())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn join(&self, o: &Self) -> Self {
        debug_assert_eq!(self.len(), o.len());
        IvBox {
            dims: self
                .dims
                .iter()
                .zip(&o.dims)
                .map(|(a, b)| a.join(b))
                .collect(),
        }
    }

    pub fn meet(&self, o: &Self) -> Result<Self> {
        debug_assert_eq!(self.len(), o.len());
        let dims = self
            .dims
            .iter()
            .zip(&o.dims)
            .map(|(a, b)| a.meet(b))
            .collect::<Result<_>>()?;
        Ok(IvBox { dims })
    }

    /// True iff every coordinate of `x` lies inside (slack rule of
    /// [`Interval::contains`]).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.len() == x.len() && self.dims.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    pub fn max_width(&self) -> f64 {
        self.dims.iter().map(Interval::width).fold(0.0, f64::max)
    }

    /// Exact interval image of the affine map `w·x + b`, row-major
    /// `rows×cols` weights. Endpoint selection happens per term via
    /// min/max, which equals the sign-of-weight rule.
    pub fn affine(&self, w: &[S], bias: Option<&[S]>, rows: usize, cols: usize) -> Result<Self> {
        if self.len() != cols || w.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "affine: {}x{} weights on box of dim {}",
                rows,
                cols,
                self.len()
            )));
        }
        let mut dims = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = self.dims[0].mul_scalar(&row[0]);
            for (dim, w) in self.dims.iter().zip(row).skip(1) {
                acc = acc.add(&dim.mul_scalar(w));
            }
            if let Some(b) = bias {
                acc = acc.add(&Interval::point(b[r].clone()));
            }
            dims.push(acc);
        }
        Ok(IvBox { dims })
    }

    /// Interval dot product of this box with a point vector.
    pub fn dot_point(&self, x: &[S]) -> Interval<S> {
        debug_assert_eq!(self.len(), x.len());
        let mut acc = self.dims[0].mul_scalar(&x[0]);
        for (dim, xi) in self.dims.iter().zip(x).skip(1) {
            acc = acc.add(&dim.mul_scalar(xi));
        }
        acc
    }

    pub fn relu(&self) -> Self {
        IvBox {
            dims: self.dims.iter().map(Interval::relu).collect(),
        }
    }
}

/// Affine image of a box under a `Tensor` weight matrix and bias vector.
pub fn iv_affine(w: &Tensor, b: &Tensor, x: &IvBox<f64>) -> Result<IvBox<f64>> {
    if w.shape().len() != 2 || b.shape().len() != 1 || w.shape()[0] != b.shape()[0] {
        return Err(Error::ShapeMismatch(format!(
            "iv_affine: w {:?}, b {:?}",
            w.shape(),
            b.shape()
        )));
    }
    x.affine(w.data(), Some(b.data()), w.shape()[0], w.shape()[1])
}
