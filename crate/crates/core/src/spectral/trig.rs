//! Exact integrals of trigonometric products over [0, pi].

use std::f64::consts::PI;

/// cos(f s) or sin(f s) on s in [0, pi].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trig {
    pub cos: bool,
    pub f: i64,
}

impl Trig {
    pub const ONE: Trig = Trig { cos: true, f: 0 };

    pub fn cos(f: i64) -> Self {
        Trig { cos: true, f }
    }

    pub fn sin(f: i64) -> Self {
        Trig { cos: false, f }
    }

    /// Derivative as (coefficient, function).
    pub fn deriv(self) -> (f64, Trig) {
        if self.cos {
            (-(self.f as f64), Trig::sin(self.f))
        } else {
            (self.f as f64, Trig::cos(self.f))
        }
    }

    pub fn eval(self, s: f64) -> f64 {
        let a = self.f as f64 * s;
        if self.cos {
            a.cos()
        } else {
            a.sin()
        }
    }
}

/// Product of two trig functions as a sum of two.
fn mul(a: Trig, b: Trig) -> [(f64, Trig); 2] {
    let (p, q) = (a.f, b.f);
    match (a.cos, b.cos) {
        (true, true) => [(0.5, Trig::cos(p - q)), (0.5, Trig::cos(p + q))],
        (false, false) => [(0.5, Trig::cos(p - q)), (-0.5, Trig::cos(p + q))],
        (false, true) => [(0.5, Trig::sin(p + q)), (0.5, Trig::sin(p - q))],
        (true, false) => [(0.5, Trig::sin(p + q)), (-0.5, Trig::sin(p - q))],
    }
}

/// Integral over [0, pi].
pub fn integral(t: Trig) -> f64 {
    let q = t.f;
    if t.cos {
        if q == 0 {
            PI
        } else {
            0.0
        }
    } else if q % 2 == 0 {
        0.0
    } else {
        2.0 / q as f64
    }
}

/// Integral of a * b over [0, pi].
pub fn double(a: Trig, b: Trig) -> f64 {
    mul(a, b).iter().map(|&(c, t)| c * integral(t)).sum()
}

/// Integral of a * b * c over [0, pi].
pub fn triple(a: Trig, b: Trig, c: Trig) -> f64 {
    let mut s = 0.0;
    for (ca, t) in mul(a, b) {
        for (cb, u) in mul(t, c) {
            s += ca * cb * integral(u);
        }
    }
    s
}

/// Integral of a' * b * c over [0, pi].
pub fn triple_d1(a: Trig, b: Trig, c: Trig) -> f64 {
    let (k, da) = a.deriv();
    if k == 0.0 {
        0.0
    } else {
        k * triple(da, b, c)
    }
}
