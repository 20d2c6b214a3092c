use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the forward pass is generic over: `f64` for evaluation and
/// [`Dual`] for exact directional derivatives.
pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Forward-mode dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Self { re, eps: 0.0 }
    }

    pub fn variable(re: f64) -> Self {
        Self { re, eps: 1.0 }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            re: self.re + o.re,
            eps: self.eps + o.eps,
        }
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            re: self.re - o.re,
            eps: self.eps - o.eps,
        }
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re,
            eps: self.re * o.eps + self.eps * o.re,
        }
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        Self {
            re: self.re / o.re,
            eps: (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        }
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            re: -self.re,
            eps: -self.eps,
        }
    }
}

impl Real for Dual {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self {
            re: e,
            eps: self.eps * e,
        }
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self {
            re: s,
            eps: self.eps / (2.0 * s),
        }
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Self {
            re: t,
            eps: self.eps * (1.0 - t * t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(f: impl Fn(Dual) -> Dual, g: impl Fn(f64) -> f64, x: f64) {
        let d = f(Dual::variable(x));
        let h = 1e-6;
        let fd = (g(x + h) - g(x - h)) / (2.0 * h);
        assert!((d.re - g(x)).abs() < 1e-14);
        assert!(
            (d.eps - fd).abs() < 1e-7 * (1.0 + fd.abs()),
            "{} vs {fd}",
            d.eps
        );
    }

    #[test]
    fn derivatives_match_central_differences() {
        for x in [0.3, 1.7, -0.4] {
            check(|v| v.exp(), f64::exp, x);
            check(|v| v.tanh(), f64::tanh, x);
            check(
                |v| (v * v + Dual::constant(1.0)).sqrt(),
                |v| (v * v + 1.0).sqrt(),
                x,
            );
            check(
                |v| Dual::constant(2.0) / (v * v + Dual::constant(0.5)),
                |v| 2.0 / (v * v + 0.5),
                x,
            );
            check(|v| -(v - Dual::constant(3.0)) * v, |v| -(v - 3.0) * v, x);
        }
    }
}
