//! Double-double arithmetic for test oracles: an unevaluated sum `hi + lo`
//! carrying about 106 significand bits, and a small numeric trait so an
//! oracle can be written once and run in `f64` or `Dd`.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

const LN2: Dd = Dd(6.931_471_805_599_453e-1, 2.319_046_813_846_299_6e-17);

impl Dd {
    pub fn of(x: f64) -> Self {
        Dd(x, 0.0)
    }

    pub fn value(self) -> f64 {
        self.0 + self.1
    }

    fn scaled(self, factor: f64) -> Dd {
        Dd(self.0 * factor, self.1 * factor)
    }

    pub fn exp(self) -> Dd {
        if self.0 < -700.0 {
            return Dd::of(0.0);
        }
        let k = (self.0 / LN2.0).round();
        // |s| <= ln2 / 2048, so a short Taylor series is exact to working precision
        let s = (self - LN2 * Dd::of(k)).scaled(1.0 / 1024.0);
        let (mut term, mut sum) = (Dd::of(1.0), Dd::of(1.0));
        for n in 1..=12 {
            term = term * s / Dd::of(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scaled(2f64.powi(k as i32))
    }

    pub fn tanh(self) -> Dd {
        let e = (Dd::of(-2.0) * self.abs()).exp();
        let t = (Dd::of(1.0) - e) / (Dd::of(1.0) + e);
        if self.0 < 0.0 {
            -t
        } else {
            t
        }
    }

    pub fn abs(self) -> Dd {
        if self.0 < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.0, o.0);
        let (t, f) = two_sum(self.1, o.1);
        let Dd(s, e) = quick_two_sum(s, e + t);
        quick_two_sum(s, e + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + -o
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        quick_two_sum(p, e)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self - o * Dd::of(q1);
        let q2 = r.0 / o.0;
        let r = r - o * Dd::of(q2);
        let q3 = r.0 / o.0;
        quick_two_sum(q1, q2) + Dd::of(q3)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, o: &Dd) -> Option<Ordering> {
        match self.0.partial_cmp(&o.0)? {
            Ordering::Equal => self.1.partial_cmp(&o.1),
            ord => Some(ord),
        }
    }
}

/// Arithmetic an oracle needs, for `f64` and [`Dd`].
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn of(x: f64) -> Self;
    /// Nearest `f64`.
    fn approx(self) -> f64;
    fn exp_(self) -> Self;
    fn tanh_(self) -> Self;

    fn max0(self) -> Self {
        if self > Self::of(0.0) {
            self
        } else {
            Self::of(0.0)
        }
    }

    fn min_(self, o: Self) -> Self {
        if o < self {
            o
        } else {
            self
        }
    }

    fn clamp_unit(self) -> Self {
        self.max0().min_(Self::of(1.0))
    }
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn approx(self) -> f64 {
        self
    }
    fn exp_(self) -> Self {
        self.exp()
    }
    fn tanh_(self) -> Self {
        self.tanh()
    }
}

impl Real for Dd {
    fn of(x: f64) -> Self {
        Dd::of(x)
    }
    fn approx(self) -> f64 {
        self.value()
    }
    fn exp_(self) -> Self {
        self.exp()
    }
    fn tanh_(self) -> Self {
        self.tanh()
    }
}

#[test]
fn transcendental_functions_agree_with_f64() {
    for &x in &[-30.0, -3.2, -0.5, -1e-4, 0.0, 1e-7, 0.3, 1.0, 2.5, 20.0] {
        let e = Dd::of(x).exp().value();
        assert!(
            (e - f64::exp(x)).abs() <= 4.0 * f64::EPSILON * e,
            "exp({x})"
        );
        let t = Dd::of(x).tanh().value();
        assert!(
            (t - f64::tanh(x)).abs() <= 4.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE),
            "tanh({x})"
        );
    }
    // exp(1) to well beyond f64 precision
    let e = Dd::of(1.0).exp();
    let reference = Dd(2.718_281_828_459_045, 1.445_646_891_729_250_2e-16);
    let err = (e - reference).abs().value();
    assert!(err < 1e-28, "exp(1) off by {err:e}");
}
