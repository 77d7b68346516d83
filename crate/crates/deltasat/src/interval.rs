//! Closed intervals over f64 with outward rounding.
//!
//! Sums, products and quotients use error-free transformations to decide
//! whether the rounded result needs a one-ulp step outward, so exact
//! results stay points. Transcendentals get a relative slack instead.

use std::f64::consts::{FRAC_PI_2, PI};

const TAU: f64 = 2.0 * PI;
/// Relative slack for libm results and for reasoning about multiples of π.
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
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

fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

fn add_round(a: f64, b: f64, upward: bool) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        if s.is_nan() {
            return if upward { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        return s;
    }
    let e = two_sum_err(a, b, s);
    match (upward, e) {
        (true, e) if e > 0.0 => up(s),
        (false, e) if e < 0.0 => down(s),
        _ => s,
    }
}

fn mul_round(a: f64, b: f64, upward: bool) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    if p.abs() < f64::MIN_POSITIVE * 4.0 {
        // underflow: the error term is unreliable
        return if upward { up(p).max(f64::MIN_POSITIVE) } else { down(p).min(-f64::MIN_POSITIVE) };
    }
    let e = a.mul_add(b, -p);
    match (upward, e) {
        (true, e) if e > 0.0 => up(p),
        (false, e) if e < 0.0 => down(p),
        _ => p,
    }
}

fn div_round(a: f64, b: f64, upward: bool) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let q = a / b;
    if !q.is_finite() || q == 0.0 || q.abs() < f64::MIN_POSITIVE * 4.0 || b.is_infinite() {
        return if upward { up(q) } else { down(q) };
    }
    // a − q·b has the sign of (a/b − q)·b
    let r = (-q).mul_add(b, a);
    let err_sign = r * b.signum();
    match (upward, err_sign) {
        (true, e) if e > 0.0 => up(q),
        (false, e) if e < 0.0 => down(q),
        _ => q,
    }
}

fn slack(x: f64) -> f64 {
    SLACK * (1.0 + x.abs())
}

impl Interval {
    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
    pub const EMPTY: Interval = Interval { lo: f64::INFINITY, hi: f64::NEG_INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    /// A finite point inside the interval.
    pub fn mid(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => {
                let m = 0.5 * self.lo + 0.5 * self.hi;
                m.clamp(self.lo, self.hi)
            }
            (false, false) => 0.0,
            (true, false) => {
                if self.lo >= 0.0 {
                    self.lo * 2.0 + 1.0
                } else {
                    0.0
                }
            }
            (false, true) => {
                if self.hi <= 0.0 {
                    self.hi * 2.0 - 1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        Interval { lo: self.lo.max(o.lo), hi: self.hi.min(o.hi) }
    }

    pub fn hull(&self, o: &Interval) -> Interval {
        if self.is_empty() {
            return *o;
        }
        if o.is_empty() {
            return *self;
        }
        Interval { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn add(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::EMPTY;
        }
        Interval { lo: add_round(self.lo, o.lo, false), hi: add_round(self.hi, o.hi, true) }
    }

    pub fn neg(&self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::EMPTY;
        }
        if self.is_point() && o.is_point() {
            return Interval { lo: mul_round(self.lo, o.lo, false), hi: mul_round(self.lo, o.lo, true) };
        }
        let cands = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in cands {
            lo = lo.min(mul_round(a, b, false));
            hi = hi.max(mul_round(a, b, true));
        }
        Interval { lo, hi }
    }

    pub fn scale(&self, k: f64) -> Interval {
        self.mul(&Interval::point(k))
    }

    /// Division; a divisor containing zero yields the entire line.
    pub fn div(&self, o: &Interval) -> Interval {
        if self.is_empty() || o.is_empty() {
            return Interval::EMPTY;
        }
        if o.contains_zero() {
            return Interval::ENTIRE;
        }
        let cands = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in cands {
            if a.is_infinite() && b.is_infinite() {
                return Interval::ENTIRE;
            }
            lo = lo.min(div_round(a, b, false));
            hi = hi.max(div_round(a, b, true));
        }
        Interval { lo, hi }
    }

    pub fn sqr(&self) -> Interval {
        if self.is_empty() {
            return Interval::EMPTY;
        }
        let a = mul_round(self.lo, self.lo, true);
        let b = mul_round(self.hi, self.hi, true);
        if self.contains_zero() {
            Interval { lo: 0.0, hi: a.max(b) }
        } else {
            let (l, h) = (self.lo.abs().min(self.hi.abs()), self.mag());
            Interval { lo: mul_round(l, l, false), hi: mul_round(h, h, true) }
        }
    }

    pub fn powi(&self, n: u32) -> Interval {
        match n {
            0 => Interval::point(1.0),
            1 => *self,
            2 => self.sqr(),
            _ => {
                let half = self.powi(n / 2).sqr();
                if n % 2 == 0 {
                    // even powers are monotone on |x|
                    half
                } else {
                    half.mul(self)
                }
            }
        }
    }

    pub fn sin(&self) -> Interval {
        if self.is_empty() {
            return Interval::EMPTY;
        }
        Interval { lo: self.lo - FRAC_PI_2, hi: self.hi - FRAC_PI_2 }.widen_abs().cos()
    }

    pub fn cos(&self) -> Interval {
        if self.is_empty() {
            return Interval::EMPTY;
        }
        if !self.lo.is_finite() || !self.hi.is_finite() || self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo, self.hi);
        let mut lo = a.cos().min(b.cos());
        let mut hi = a.cos().max(b.cos());
        // maxima at 2kπ, minima at (2k+1)π
        let contains_multiple = |offset: f64| {
            let k = ((a - offset - slack(a)) / TAU).ceil();
            offset + k * TAU <= b + slack(b)
        };
        if contains_multiple(0.0) {
            hi = 1.0;
        }
        if contains_multiple(PI) {
            lo = -1.0;
        }
        let s = slack(a.max(b));
        Interval { lo: (lo - s).max(-1.0), hi: (hi + s).min(1.0) }
    }

    fn widen_abs(&self) -> Interval {
        Interval { lo: self.lo - slack(self.lo), hi: self.hi + slack(self.hi) }
    }

    /// Largest sub-interval of `x` whose cosine may lie in `y`.
    pub fn cos_rev(y: &Interval, x: &Interval) -> Interval {
        if y.is_empty() || x.is_empty() {
            return Interval::EMPTY;
        }
        let y = y.intersect(&Interval::new(-1.0, 1.0));
        if y.is_empty() {
            return Interval::EMPTY;
        }
        if !x.lo.is_finite() || !x.hi.is_finite() || x.width() > 4.0 * TAU || (y.lo <= -1.0 && y.hi >= 1.0) {
            return *x;
        }
        // within [0, π] cos is decreasing: acos(y.hi) ≤ t ≤ acos(y.lo)
        let t_lo = y.hi.min(1.0).acos();
        let t_hi = y.lo.max(-1.0).acos();
        let pieces = [(t_lo, t_hi), (-t_hi, -t_lo)];
        let k_min = ((x.lo - TAU) / TAU).floor() as i64;
        let k_max = ((x.hi + TAU) / TAU).ceil() as i64;
        let mut out = Interval::EMPTY;
        for k in k_min..=k_max {
            let shift = k as f64 * TAU;
            for (p, q) in pieces {
                let seg = Interval { lo: p + shift, hi: q + shift }.widen_abs();
                out = out.hull(&seg.intersect(x));
            }
        }
        out
    }

    pub fn sin_rev(y: &Interval, x: &Interval) -> Interval {
        // sin(x) = cos(x − π/2)
        let shifted = Interval { lo: x.lo - FRAC_PI_2, hi: x.hi - FRAC_PI_2 }.widen_abs();
        let r = Interval::cos_rev(y, &shifted);
        if r.is_empty() {
            return r;
        }
        Interval { lo: r.lo + FRAC_PI_2, hi: r.hi + FRAC_PI_2 }.widen_abs().intersect(x)
    }

    /// Largest sub-interval of `x` with xⁿ possibly in `y`.
    pub fn powi_rev(y: &Interval, x: &Interval, n: u32) -> Interval {
        if n == 0 || y.is_empty() || x.is_empty() {
            return if n == 0 { *x } else { Interval::EMPTY };
        }
        if n == 1 {
            return y.intersect(x);
        }
        let root = |v: f64| -> f64 {
            if v.is_infinite() {
                v
            } else {
                v.abs().powf(1.0 / n as f64).copysign(v)
            }
        };
        if n % 2 == 1 {
            let r = Interval { lo: root(y.lo), hi: root(y.hi) }.widen_abs();
            return r.intersect(x);
        }
        let y = y.intersect(&Interval::new(0.0, f64::INFINITY));
        if y.is_empty() {
            return Interval::EMPTY;
        }
        let r = Interval { lo: root(y.lo), hi: root(y.hi) }.widen_abs();
        let pos = Interval { lo: r.lo.max(0.0), hi: r.hi }.intersect(x);
        let neg = Interval { lo: -r.hi, hi: -r.lo.max(0.0) }.intersect(x);
        pos.hull(&neg)
    }

    /// Splits at the midpoint (or at a finite point for unbounded sides).
    pub fn bisect(&self) -> (Interval, Interval) {
        let m = self.mid();
        (Interval { lo: self.lo, hi: m }, Interval { lo: m, hi: self.hi })
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_operations_stay_points() {
        let a = Interval::point(0.5).add(&Interval::point(0.25));
        assert_eq!(a, Interval::point(0.75));
        let b = Interval::point(3.0).mul(&Interval::point(-2.0));
        assert_eq!(b, Interval::point(-6.0));
        let c = Interval::point(1.0).div(&Interval::point(4.0));
        assert_eq!(c, Interval::point(0.25));
    }

    #[test]
    fn inexact_operations_enclose() {
        let t = Interval::point(0.1).add(&Interval::point(0.2));
        assert!(t.lo < t.hi);
        assert!(t.contains(0.1 + 0.2));
        let third = Interval::point(1.0).div(&Interval::point(3.0));
        assert!(third.lo < third.hi && third.contains(1.0 / 3.0));
    }

    #[test]
    fn cos_extrema() {
        let c = Interval::new(-0.1, 0.1).cos();
        assert_eq!(c.hi, 1.0);
        assert!(c.lo <= 0.1f64.cos());
        let s = Interval::new(1.0, 2.0).sin();
        assert_eq!(s.hi, 1.0);
        let full = Interval::new(0.0, 7.0).cos();
        assert_eq!(full, Interval::new(-1.0, 1.0));
    }

    #[test]
    fn cos_rev_selects_branches() {
        let x = Interval::new(0.0, PI);
        let r = Interval::cos_rev(&Interval::point(1.0), &x);
        assert!(r.lo == 0.0 && r.hi < 1e-6);
        let r = Interval::cos_rev(&Interval::point(0.0), &Interval::new(0.0, 2.0 * PI));
        assert!((r.lo - FRAC_PI_2).abs() < 1e-9 && (r.hi - 1.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn even_power_reverse() {
        let r = Interval::powi_rev(&Interval::new(4.0, 9.0), &Interval::new(-10.0, 10.0), 2);
        assert!(r.lo <= -3.0 && r.hi >= 3.0);
        let r = Interval::powi_rev(&Interval::new(4.0, 9.0), &Interval::new(0.0, 10.0), 2);
        assert!(r.lo <= 2.0 && r.lo > 1.9 && r.hi >= 3.0 && r.hi < 3.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn arithmetic_encloses_samples(a in -1e3f64..1e3, w1 in 0.0f64..10.0, b in -1e3f64..1e3, w2 in 0.0f64..10.0, t in 0.0f64..1.0, u in 0.0f64..1.0) {
            let x = Interval::new(a, a + w1);
            let y = Interval::new(b, b + w2);
            let (px, py) = (a + t * w1, b + u * w2);
            prop_assert!(x.add(&y).contains(px + py));
            prop_assert!(x.sub(&y).contains(px - py));
            prop_assert!(x.mul(&y).contains(px * py));
            if !y.contains_zero() {
                prop_assert!(x.div(&y).contains(px / py));
            }
            prop_assert!(x.sqr().contains(px * px));
            prop_assert!(x.powi(3).contains(px * px * px));
            prop_assert!(x.cos().contains(px.cos()));
            prop_assert!(x.sin().contains(px.sin()));
        }

        #[test]
        fn reverse_trig_keeps_solutions(a in -10.0f64..10.0, w in 0.0f64..8.0, t in 0.0f64..1.0, dy in 0.0f64..0.3) {
            let x = Interval::new(a, a + w);
            let p = a + t * w;
            let y = Interval::new(p.cos() - dy, p.cos() + dy);
            prop_assert!(Interval::cos_rev(&y, &x).contains(p));
            let y = Interval::new(p.sin() - dy, p.sin() + dy);
            prop_assert!(Interval::sin_rev(&y, &x).contains(p));
            let y = Interval::new(p * p - dy, p * p + dy);
            prop_assert!(Interval::powi_rev(&y, &x, 2).contains(p));
        }
    }
}
