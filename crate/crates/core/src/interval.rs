//! Closed real intervals with outward rounding, plus the forward and
//! backward (projection) operators used by hull-consistency contraction.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

/// Widening used around library transcendental functions, whose results
/// are not correctly rounded.
fn slack(x: f64) -> f64 {
    4.0 * f64::EPSILON * x.abs().max(1.0)
}

impl Interval {
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const EMPTY: Interval = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn width(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn mid(&self) -> f64 {
        if self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY {
            0.0
        } else if self.lo == f64::NEG_INFINITY {
            f64::MIN
        } else if self.hi == f64::INFINITY {
            f64::MAX
        } else {
            let m = self.lo + (self.hi - self.lo) / 2.0;
            m.clamp(self.lo, self.hi)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.max(o.lo), self.hi.min(o.hi))
    }

    pub fn hull(&self, o: &Interval) -> Interval {
        if self.is_empty() {
            return *o;
        }
        if o.is_empty() {
            return *self;
        }
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    pub fn add(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::EMPTY;
        }
        Interval::new(down(self.lo + o.lo), up(self.hi + o.hi))
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::EMPTY;
        }
        let prods = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in prods {
            // 0 * inf is taken as 0: the zero factor is exact
            let p = if p.is_nan() { 0.0 } else { p };
            lo = lo.min(p);
            hi = hi.max(p);
        }
        Interval::new(down(lo), up(hi))
    }

    pub fn sqr(&self) -> Interval {
        if self.is_empty() {
            return Interval::EMPTY;
        }
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.contains_zero() {
            Interval::new(0.0, up(a.max(b)))
        } else {
            Interval::new(down(a.min(b)).max(0.0), up(a.max(b)))
        }
    }

    /// Division; `None` when the divisor straddles zero (no useful bound).
    pub fn div(&self, o: &Interval) -> Option<Interval> {
        if self.is_empty() || o.is_empty() {
            return Some(Interval::EMPTY);
        }
        if o.contains_zero() {
            return None;
        }
        let q = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = q.iter().copied().filter(|x| !x.is_nan()).fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().filter(|x| !x.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        Some(Interval::new(down(lo), up(hi)))
    }

    pub fn sin(&self) -> Interval {
        if self.is_empty() {
            return Interval::EMPTY;
        }
        if !self.lo.is_finite() || !self.hi.is_finite() || self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let mut lo = a.min(b) - slack(1.0);
        let mut hi = a.max(b) + slack(1.0);
        // widen the tested range slightly so extrema at the edges are not missed
        let (l, h) = (self.lo - slack(self.lo), self.hi + slack(self.hi));
        let k_max = ((l - FRAC_PI_2) / TAU).ceil();
        if k_max * TAU + FRAC_PI_2 <= h {
            hi = 1.0;
        }
        let k_min = ((l + FRAC_PI_2) / TAU).ceil();
        if k_min * TAU - FRAC_PI_2 <= h {
            lo = -1.0;
        }
        Interval::new(lo.max(-1.0), hi.min(1.0))
    }

    pub fn atan(&self) -> Interval {
        if self.is_empty() {
            return Interval::EMPTY;
        }
        let lo = self.lo.atan() - slack(1.0);
        let hi = self.hi.atan() + slack(1.0);
        Interval::new(lo.max(-FRAC_PI_2 - slack(1.0)), hi.min(FRAC_PI_2 + slack(1.0)))
    }

    /// Splits at the midpoint.
    pub fn bisect(&self) -> (Interval, Interval) {
        let m = self.mid();
        (Interval::new(self.lo, m), Interval::new(m, self.hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Projection of `z = x * x` onto `x`.
pub fn sqr_rev(z: &Interval, x: &Interval) -> Interval {
    let z = z.intersect(&Interval::new(0.0, f64::INFINITY));
    if z.is_empty() {
        return Interval::EMPTY;
    }
    let s = up(z.hi.sqrt());
    let r = down(z.lo.sqrt()).max(0.0);
    let pos = x.intersect(&Interval::new(r, s));
    let neg = x.intersect(&Interval::new(-s, -r));
    pos.hull(&neg)
}

/// Projection of `z = x * y` onto `x`.
pub fn mul_rev(z: &Interval, y: &Interval, x: &Interval) -> Interval {
    match z.div(y) {
        Some(q) => x.intersect(&q),
        None => {
            // y straddles 0: if z excludes 0, x must avoid a neighbourhood of 0,
            // but the hull rarely shrinks; keep x
            *x
        }
    }
}

/// Projection of `z = sin(x)` onto `x`.
pub fn sin_rev(z: &Interval, x: &Interval) -> Interval {
    let z = z.intersect(&Interval::new(-1.0, 1.0));
    if z.is_empty() || x.is_empty() {
        return Interval::EMPTY;
    }
    if !x.lo.is_finite() || !x.hi.is_finite() || x.width() > 4.0 * TAU {
        return *x;
    }
    let a_lo = z.lo.asin();
    let a_hi = z.hi.asin();
    let mut out = Interval::EMPTY;
    // rising branches [-pi/2 + 2k pi, pi/2 + 2k pi], falling branches shifted by pi
    let k0 = ((x.lo - FRAC_PI_2) / TAU).floor() as i64 - 1;
    let k1 = ((x.hi + FRAC_PI_2) / TAU).ceil() as i64 + 1;
    for k in k0..=k1 {
        let base = k as f64 * TAU;
        let rise = Interval::new(base + a_lo, base + a_hi);
        let fall = Interval::new(base + PI - a_hi, base + PI - a_lo);
        for piece in [rise, fall] {
            let w = Interval::new(piece.lo - slack(piece.lo) * 4.0, piece.hi + slack(piece.hi) * 4.0);
            out = out.hull(&x.intersect(&w));
        }
    }
    out
}

/// Projection of `z = atan(x)` onto `x`.
pub fn atan_rev(z: &Interval, x: &Interval) -> Interval {
    let lim = FRAC_PI_2 - 1e-12;
    let lo = if z.lo <= -lim {
        f64::NEG_INFINITY
    } else {
        let t = z.lo.tan();
        t - slack(1.0 + t * t) * 4.0
    };
    let hi = if z.hi >= lim {
        f64::INFINITY
    } else {
        let t = z.hi.tan();
        t + slack(1.0 + t * t) * 4.0
    };
    x.intersect(&Interval::new(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sin_range_covers_extrema() {
        let s = Interval::new(0.0, 3.0).sin();
        assert_eq!(s.hi, 1.0);
        assert!(s.lo <= 0.0);
        let s = Interval::new(-10.0, 10.0).sin();
        assert_eq!((s.lo, s.hi), (-1.0, 1.0));
        let s = Interval::new(0.1, 0.2).sin();
        assert!(s.lo <= 0.1f64.sin() && s.hi >= 0.2f64.sin() && s.hi < 0.3);
    }

    #[test]
    fn sqr_rev_splits_sign() {
        let x = sqr_rev(&Interval::new(1.0, 4.0), &Interval::new(0.0, 10.0));
        assert!(x.lo <= 1.0 && x.lo > 0.99 && x.hi >= 2.0 && x.hi < 2.01);
        assert!(sqr_rev(&Interval::new(-3.0, -1.0), &Interval::new(0.0, 1.0)).is_empty());
    }

    #[test]
    fn sin_rev_finds_preimage() {
        let x = sin_rev(&Interval::new(0.5, 0.5), &Interval::new(0.0, 1.0));
        let t = 0.5f64.asin();
        assert!(x.contains(t) && x.width() < 1e-9);
        assert!(sin_rev(&Interval::new(2.0, 3.0), &Interval::new(0.0, 1.0)).is_empty());
    }

    fn iv() -> impl Strategy<Value = Interval> {
        (-50.0f64..50.0, 0.0f64..20.0).prop_map(|(a, w)| Interval::new(a, a + w))
    }

    proptest! {
        #[test]
        fn forward_ops_enclose_samples(a in iv(), b in iv(), s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let x = a.lo + s * a.width();
            let y = b.lo + t * b.width();
            prop_assert!(a.add(&b).contains(x + y));
            prop_assert!(a.mul(&b).contains(x * y));
            prop_assert!(a.sqr().contains(x * x));
            prop_assert!(a.neg().contains(-x));
            prop_assert!(a.sin().contains(x.sin()));
            prop_assert!(a.atan().contains(x.atan()));
        }

        #[test]
        fn backward_ops_keep_solutions(a in iv(), s in 0.0f64..=1.0) {
            let x = a.lo + s * a.width();
            prop_assert!(sin_rev(&Interval::point(x.sin()), &a).contains(x));
            prop_assert!(atan_rev(&Interval::point(x.atan()), &a).contains(x));
            prop_assert!(sqr_rev(&Interval::point(x * x), &a).contains(x));
        }
    }
}
