//! Closed-form scalar fields on Minkowski space as small expression trees.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::jet::{compact_bump, smoothstep, Jet, Real};

#[derive(Clone)]
pub enum Expr {
    Const(f64),
    T,
    X(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Exp(Arc<Expr>),
    Ln(Arc<Expr>),
    Sqrt(Arc<Expr>),
    Pow(Arc<Expr>, f64),
    SmoothStep(Arc<Expr>),
    Bump(Arc<Expr>),
    /// Opaque closure, for fields built from other fields' derivatives.
    Native(Arc<dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::T => write!(f, "t"),
            Expr::X(a) => write!(f, "x{}", a + 1),
            Expr::Add(a, b) => write!(f, "({a:?} + {b:?})"),
            Expr::Sub(a, b) => write!(f, "({a:?} - {b:?})"),
            Expr::Mul(a, b) => write!(f, "{a:?}*{b:?}"),
            Expr::Div(a, b) => write!(f, "{a:?}/{b:?}"),
            Expr::Neg(a) => write!(f, "-{a:?}"),
            Expr::Sin(a) => write!(f, "sin({a:?})"),
            Expr::Cos(a) => write!(f, "cos({a:?})"),
            Expr::Exp(a) => write!(f, "exp({a:?})"),
            Expr::Ln(a) => write!(f, "ln({a:?})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a:?})"),
            Expr::Pow(a, p) => write!(f, "{a:?}^{p}"),
            Expr::SmoothStep(a) => write!(f, "step({a:?})"),
            Expr::Bump(a) => write!(f, "bump({a:?})"),
            Expr::Native(_) => write!(f, "native"),
        }
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }
    pub fn t() -> Expr {
        Expr::T
    }
    /// Spatial coordinate x^a, `a` in 1..=3.
    pub fn x(a: usize) -> Expr {
        assert!((1..=3).contains(&a), "spatial index must be 1, 2 or 3");
        Expr::X(a - 1)
    }
    /// |x|².
    pub fn r2() -> Expr {
        Expr::x(1) * Expr::x(1) + Expr::x(2) * Expr::x(2) + Expr::x(3) * Expr::x(3)
    }
    /// |x|, smooth away from the origin only.
    pub fn r() -> Expr {
        Expr::r2().sqrt()
    }
    /// t² − |x|².
    pub fn s2() -> Expr {
        Expr::t() * Expr::t() - Expr::r2()
    }
    pub fn sin(self) -> Expr {
        Expr::Sin(Arc::new(self))
    }
    pub fn cos(self) -> Expr {
        Expr::Cos(Arc::new(self))
    }
    pub fn exp(self) -> Expr {
        Expr::Exp(Arc::new(self))
    }
    pub fn ln(self) -> Expr {
        Expr::Ln(Arc::new(self))
    }
    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Arc::new(self))
    }
    pub fn powf(self, p: f64) -> Expr {
        Expr::Pow(Arc::new(self), p)
    }
    pub fn smoothstep(self) -> Expr {
        Expr::SmoothStep(Arc::new(self))
    }
    pub fn bump(self) -> Expr {
        Expr::Bump(Arc::new(self))
    }

    /// Smooth radial bump of amplitude `amp` supported in |x − center| < radius.
    pub fn radial_bump(amp: f64, center: [f64; 3], radius: f64) -> Expr {
        let mut q = Expr::constant(0.0);
        for (a, c) in center.iter().enumerate() {
            let d = Expr::x(a + 1) - Expr::constant(*c);
            q = q + d.clone() * d;
        }
        Expr::constant(amp) * (q * (1.0 / (radius * radius))).bump()
    }

    /// `amp·exp(−r²/σ²)` cut off smoothly between `5σ` and `6σ`, where the
    /// Gaussian is below `1.5·10⁻¹¹`.
    pub fn truncated_gaussian(amp: f64, sigma: f64) -> Expr {
        let g = (Expr::r2() * (-1.0 / (sigma * sigma))).exp();
        let cut = ((Expr::r() * (-1.0 / sigma)) + 6.0).smoothstep();
        Expr::constant(amp) * g * cut
    }

    pub fn native(f: impl Fn(f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Expr {
        Expr::Native(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn eval<T: Real>(&self, t: T, x: &[T; 3]) -> T {
        match self {
            Expr::Const(c) => T::constant(*c),
            Expr::T => t,
            Expr::X(a) => x[*a],
            Expr::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Expr::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Expr::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Expr::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Sin(a) => a.eval(t, x).sin(),
            Expr::Cos(a) => a.eval(t, x).cos(),
            Expr::Exp(a) => a.eval(t, x).exp(),
            Expr::Ln(a) => a.eval(t, x).ln(),
            Expr::Sqrt(a) => a.eval(t, x).sqrt(),
            Expr::Pow(a, p) => a.eval(t, x).powf(*p),
            Expr::SmoothStep(a) => smoothstep(a.eval(t, x)),
            Expr::Bump(a) => compact_bump(a.eval(t, x)),
            Expr::Native(f) => T::lift(f.as_ref(), t, x),
        }
    }

    pub fn value(&self, t: f64, x: [f64; 3]) -> f64 {
        self.eval(t, &x)
    }

    /// Value on the positive x¹ axis, for spherically symmetric expressions.
    pub fn value_radial(&self, t: f64, r: f64) -> f64 {
        self.eval(t, &[r, 0.0, 0.0])
    }

    pub fn jet(&self, t: f64, x: [f64; 3]) -> Jet {
        let (jt, jx) = Jet::seed(t, x);
        self.eval(jt, &jx)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::Const(c)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $var:ident) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                Expr::$var(Arc::new(self), Arc::new(o))
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, o: f64) -> Expr {
                Expr::$var(Arc::new(self), Arc::new(Expr::Const(o)))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                Expr::$var(Arc::new(Expr::Const(self)), Arc::new(o))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Arc::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s2_jet_is_exact() {
        let e = Expr::s2();
        let j = e.jet(5.0, [3.0, 0.0, 0.0]);
        assert_eq!(j.v, 16.0);
        assert_eq!(j.d, [10.0, -6.0, 0.0, 0.0]);
        assert_eq!(j.h[0][0], 2.0);
        assert_eq!(j.h[1][1], -2.0);
    }

    #[test]
    fn native_jet_matches_expression() {
        let e = (Expr::t() * Expr::x(1)).sin() + Expr::x(2) * Expr::x(3);
        let e2 = e.clone();
        let n = Expr::native(move |t, x| e2.value(t, x));
        let (a, b) = (e.jet(1.2, [0.3, 0.4, -0.5]), n.jet(1.2, [0.3, 0.4, -0.5]));
        assert!((a.v - b.v).abs() < 1e-15);
        for i in 0..4 {
            assert!((a.d[i] - b.d[i]).abs() < 1e-7);
            for k in 0..4 {
                assert!((a.h[i][k] - b.h[i][k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn radial_bump_support() {
        let b = Expr::radial_bump(2.0, [0.0; 3], 1.5);
        assert_eq!(b.value(0.0, [0.0; 3]), 2.0);
        assert_eq!(b.value(0.0, [1.5, 0.0, 0.0]), 0.0);
        assert!(b.value(0.0, [0.0, 1.0, 0.0]) > 0.0);
    }
}
