//! Second-order forward-mode differentiation in the four spacetime variables.
//!
//! Closed-form fields (test fields, sources, metric perturbations, manufactured
//! solutions) are written once against [`Real`] and evaluated either as plain
//! `f64` or as a [`Jet`] carrying the exact gradient and Hessian in
//! `(t, x¹, x², x³)`.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic needed by closed-form field expressions.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn recip(self) -> Self {
        Self::constant(1.0) / self
    }
    /// Applies an opaque `f(t, x)`; jets differentiate it by central differences.
    fn lift(f: &(dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync), t: Self, x: &[Self; 3]) -> Self;
}

impl Real for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn lift(f: &(dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync), t: Self, x: &[Self; 3]) -> Self {
        f(t, *x)
    }
}

/// Value, gradient and Hessian with respect to `(t, x¹, x², x³)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 4],
    pub h: [[f64; 4]; 4],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet { v, d: [0.0; 4], h: [[0.0; 4]; 4] }
    }

    /// The coordinate function with index `k` (0 = t, 1..=3 = x^a) at `v`.
    pub fn variable(k: usize, v: f64) -> Self {
        let mut j = Jet::constant(v);
        j.d[k] = 1.0;
        j
    }

    /// Seeds the four coordinates at a spacetime point.
    pub fn seed(t: f64, x: [f64; 3]) -> (Jet, [Jet; 3]) {
        (
            Jet::variable(0, t),
            [Jet::variable(1, x[0]), Jet::variable(2, x[1]), Jet::variable(3, x[2])],
        )
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    fn chain(self, g: f64, g1: f64, g2: f64) -> Jet {
        let mut out = Jet::constant(g);
        for i in 0..4 {
            out.d[i] = g1 * self.d[i];
            for j in 0..4 {
                out.h[i][j] = g2 * self.d[i] * self.d[j] + g1 * self.h[i][j];
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..4 {
            self.d[i] += o.d[i];
            for j in 0..4 {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.v = -self.v;
        for i in 0..4 {
            self.d[i] = -self.d[i];
            for j in 0..4 {
                self.h[i][j] = -self.h[i][j];
            }
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..4 {
            out.d[i] = self.v * o.d[i] + o.v * self.d[i];
            for j in 0..4 {
                out.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.d[i] * o.d[j]
                    + o.d[i] * self.d[j];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Real for Jet {
    fn constant(c: f64) -> Self {
        Jet::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }
    fn powf(self, p: f64) -> Self {
        let x = self.v;
        self.chain(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }
    fn recip(self) -> Self {
        let x = self.v;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
    fn lift(f: &(dyn Fn(f64, [f64; 3]) -> f64 + Send + Sync), t: Self, x: &[Self; 3]) -> Self {
        let vars = [t, x[0], x[1], x[2]];
        let base = [t.v, x[0].v, x[1].v, x[2].v];
        let eval = |p: [f64; 4]| f(p[0], [p[1], p[2], p[3]]);
        let h = 1e-4 * base.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let shifted = |i: usize, a: f64, k: usize, b: f64| {
            let mut p = base;
            p[i] += a;
            p[k] += b;
            eval(p)
        };
        let f0 = eval(base);
        let mut g = [0.0; 4];
        let mut gg = [[0.0; 4]; 4];
        for i in 0..4 {
            g[i] = (shifted(i, h, i, 0.0) - shifted(i, -h, i, 0.0)) / (2.0 * h);
            gg[i][i] = (shifted(i, h, i, 0.0) - 2.0 * f0 + shifted(i, -h, i, 0.0)) / (h * h);
            for k in 0..i {
                let v = (shifted(i, h, k, h) - shifted(i, h, k, -h) - shifted(i, -h, k, h) + shifted(i, -h, k, -h))
                    / (4.0 * h * h);
                gg[i][k] = v;
                gg[k][i] = v;
            }
        }
        let mut out = Jet::constant(f0);
        for a in 0..4 {
            for i in 0..4 {
                out.d[a] += g[i] * vars[i].d[a];
            }
            for b in 0..4 {
                let mut acc = 0.0;
                for i in 0..4 {
                    acc += g[i] * vars[i].h[a][b];
                    for k in 0..4 {
                        acc += gg[i][k] * vars[i].d[a] * vars[k].d[b];
                    }
                }
                out.h[a][b] = acc;
            }
        }
        out
    }
}

/// C^∞ transition: 0 for z ≤ 0, 1 for z ≥ 1.
pub fn smoothstep<T: Real>(z: T) -> T {
    let zv = z.value();
    if zv <= 0.0 {
        T::constant(0.0)
    } else if zv >= 1.0 {
        T::constant(1.0)
    } else {
        let one = T::constant(1.0);
        let a = (-(z.recip())).exp();
        let b = (-((one - z).recip())).exp();
        a / (a + b)
    }
}

/// C^∞ compactly supported bump in `q` (typically `r²/ρ²`): `exp(1 − 1/(1−q))` for
/// `q < 1`, zero otherwise; equals 1 at `q = 0`.
pub fn compact_bump<T: Real>(q: T) -> T {
    if q.value() >= 1.0 {
        T::constant(0.0)
    } else {
        let one = T::constant(1.0);
        (one - (one - q).recip()).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(t: T, x: [T; 3]) -> T {
        (t * x[0]).sin() + x[1].exp() * x[2] + (t * t + x[0] * x[0]).sqrt() / (x[2] + T::constant(3.0))
    }

    #[test]
    fn jet_matches_finite_differences() {
        let (t0, x0) = (1.3, [0.4, -0.2, 0.7]);
        let (jt, jx) = Jet::seed(t0, x0);
        let j = f(jt, jx);
        let eval = |p: [f64; 4]| f(p[0], [p[1], p[2], p[3]]);
        let base = [t0, x0[0], x0[1], x0[2]];
        assert!((j.v - eval(base)).abs() < 1e-14);
        let h = 1e-4;
        for i in 0..4 {
            let mut pp = base;
            let mut pm = base;
            pp[i] += h;
            pm[i] -= h;
            let fd = (eval(pp) - eval(pm)) / (2.0 * h);
            assert!((fd - j.d[i]).abs() < 1e-7, "d{i}: {fd} vs {}", j.d[i]);
            for k in 0..4 {
                let mut q = [base; 4];
                q[0][i] += h;
                q[0][k] += h;
                q[1][i] += h;
                q[1][k] -= h;
                q[2][i] -= h;
                q[2][k] += h;
                q[3][i] -= h;
                q[3][k] -= h;
                let fd2 = (eval(q[0]) - eval(q[1]) - eval(q[2]) + eval(q[3])) / (4.0 * h * h);
                assert!((fd2 - j.h[i][k]).abs() < 1e-5, "h{i}{k}: {fd2} vs {}", j.h[i][k]);
            }
        }
    }

    #[test]
    fn smoothstep_and_bump_limits() {
        assert_eq!(smoothstep(-0.5), 0.0);
        assert_eq!(smoothstep(1.5), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(compact_bump(0.0), 1.0);
        assert_eq!(compact_bump(1.0), 0.0);
        assert!(compact_bump(0.99) < 1e-40);
    }
}
