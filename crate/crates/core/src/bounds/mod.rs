//! Explicit sup-norm envelopes for the curved Klein-Gordon equation and the
//! sourced wave equation, and margins of computed solutions against them.

mod probe;
mod wave;

pub use probe::{kg_bound_margin, record_kg_run, KgMarginReport, RayProbe, RayTrace, RegimeCounts, SMargin};
pub use wave::{wave_bound_margin, wave_source, DecadeMax, WaveMarginReport, WaveProbe, WaveSample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{hyperbolic_radius, GeometryError, SpacetimePoint};
use crate::solver::{MetricPerturbSpec, SourceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("λ = {lambda} outside the ray range [{lo}, {hi}]")]
    OutOfRange { lambda: f64, lo: f64, hi: f64 },
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("coverage: {0}")]
    Coverage(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which envelope formula applies at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Far,
    Near,
}

/// `r/t` at or above which the near formula is used.
pub fn far_threshold(s0: f64) -> f64 {
    (s0 * s0 - 1.0) / (s0 * s0 + 1.0)
}

/// The ray through `(t, x)` towards the origin: `λ ↦ (λt/s, λx/s)`, on `H_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayCoords {
    pub t: f64,
    pub x: [f64; 3],
    pub s: f64,
}

impl RayCoords {
    pub fn new(t: f64, x: [f64; 3]) -> Result<Self, BoundsError> {
        let s = hyperbolic_radius(&SpacetimePoint::new(t, x))?;
        if s <= 0.0 {
            return Err(BoundsError::Domain(format!("({t}, {x:?}) lies on the light cone")));
        }
        Ok(RayCoords { t, x, s })
    }

    /// Ray of rapidity `ρ` along `x¹`, based at hyperbolic radius `s`.
    pub fn radial(s: f64, rapidity: f64) -> Self {
        RayCoords { t: s * rapidity.cosh(), x: [s * rapidity.sinh(), 0.0, 0.0], s }
    }

    pub fn r(&self) -> f64 {
        crate::geometry::norm3(self.x)
    }

    pub fn point(&self, lambda: f64) -> (f64, [f64; 3]) {
        let k = lambda / self.s;
        (k * self.t, self.x.map(|a| k * a))
    }

    /// Far iff `r/t` is strictly below the threshold; ties (to `1e-12`) go to near.
    pub fn regime(&self, s0: f64) -> Regime {
        if self.r() / self.t < far_threshold(s0) - 1e-12 {
            Regime::Far
        } else {
            Regime::Near
        }
    }

    /// `s0` in the far regime, `S(r/t)` (where the ray leaves the cone) in the near one.
    pub fn lambda_min(&self, s0: f64) -> f64 {
        match self.regime(s0) {
            Regime::Far => s0,
            Regime::Near => ((self.t + self.r()) / (self.t - self.r())).sqrt(),
        }
    }
}

fn default_c() -> f64 {
    10.0
}

/// Constants of the envelope formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Weight `C` in the exponentials.
    #[serde(default = "default_c")]
    pub c_weight: f64,
    /// Klein-Gordon mass.
    pub mass: f64,
    /// Quadrature step `Δλ`.
    pub dl: f64,
    /// Start of the comparison, `s0`.
    pub s0: f64,
    /// Exponents of the wave source condition.
    pub mu: f64,
    pub nu: f64,
    /// Add the ray equation's remainder to `F`.
    pub include_remainder: bool,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams { c_weight: 10.0, mass: 1.0, dl: 0.01, s0: 5.0, mu: 0.5, nu: 0.5, include_remainder: true }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<(), BoundsError> {
        if !(self.c_weight > 0.0 && self.c_weight.is_finite()) {
            return Err(BoundsError::Domain(format!("C must be > 0, got {}", self.c_weight)));
        }
        if !(self.dl > 0.0 && self.dl < 1.0) {
            return Err(BoundsError::Domain(format!("Δλ must lie in (0, 1), got {}", self.dl)));
        }
        if !(self.s0 > 1.0) {
            return Err(BoundsError::Domain(format!("s0 must exceed 1, got {}", self.s0)));
        }
        if !(self.mass > 0.0) {
            return Err(BoundsError::Domain(format!("mass must be > 0, got {}", self.mass)));
        }
        Ok(())
    }
}

/// `h'(λ) = (t/s)∂_t h̄ + (x^a/s)∂_a h̄` at the ray point, from the jet of the
/// closed form (centred differences for native closures).
pub fn h_ray_derivative(h: &MetricPerturbSpec, ray: &RayCoords, lambda: f64) -> Result<f64, BoundsError> {
    if !(lambda > 0.0 && lambda <= ray.s * (1.0 + 1e-12)) {
        return Err(BoundsError::OutOfRange { lambda, lo: 0.0, hi: ray.s });
    }
    if h.is_zero() {
        return Ok(0.0);
    }
    let (t, x) = ray.point(lambda);
    if crate::geometry::norm3(x) > h.support.reach(t) {
        return Ok(0.0);
    }
    let j = h.h00.jet(t, x);
    Ok((ray.t * j.d[0] + (0..3).map(|a| ray.x[a] * j.d[a + 1]).sum::<f64>()) / ray.s)
}

/// A function tabulated on a uniform λ grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayFunction {
    pub lambda: Vec<f64>,
    pub value: Vec<f64>,
}

impl RayFunction {
    pub fn last(&self) -> f64 {
        *self.value.last().expect("nonempty")
    }

    /// Linear interpolation; clamps outside the grid.
    pub fn at(&self, l: f64) -> f64 {
        let n = self.lambda.len();
        if n == 1 || l <= self.lambda[0] {
            return self.value[0];
        }
        if l >= self.lambda[n - 1] {
            return self.value[n - 1];
        }
        let h = self.lambda[1] - self.lambda[0];
        let k = (((l - self.lambda[0]) / h) as usize).min(n - 2);
        let a = (l - self.lambda[k]) / h;
        self.value[k] * (1.0 - a) + self.value[k + 1] * a
    }
}

/// Uniform grid from `lo` to `hi` with spacing at most `dl`.
pub fn ray_grid(lo: f64, hi: f64, dl: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let n = ((hi - lo) / dl).ceil().max(1.0) as usize;
    (0..=n).map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 }).collect()
}

/// Cumulative trapezoid of samples on a uniform grid.
pub fn cumulative(lambda: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..g.len() {
        acc += 0.5 * (lambda[k] - lambda[k - 1]) * (g[k] + g[k - 1]);
        out.push(acc);
    }
    out
}

/// `F(s̄) = ∫_{λ_min}^{s̄} λ^{3/2} |f(ray(λ))| dλ` for `s̄` up to the base point.
pub fn accumulate_f(f: &SourceSpec, ray: &RayCoords, lambda_min: f64, dl: f64) -> RayFunction {
    let lambda = ray_grid(lambda_min, ray.s, dl);
    let g: Vec<f64> = lambda
        .iter()
        .map(|&l| {
            if f.is_zero() {
                return 0.0;
            }
            let (t, x) = ray.point(l);
            l.powf(1.5) * f.value(t, x).abs()
        })
        .collect();
    let value = cumulative(&lambda, &g);
    RayFunction { lambda, value }
}

/// `V` at every node of the grid carried by `f`, given `|h'|` on the same
/// grid and the data norm `‖v0‖ + ‖v1‖` (ignored for near rays).
///
/// The inner exponent `∫_{s̄}^{s}|h'|` is carried multiplicatively so the cost
/// is linear in the number of nodes.
pub fn envelope_profile(regime: Regime, data: f64, f: &RayFunction, h_prime: &[f64], c_weight: f64) -> Vec<f64> {
    let l = &f.lambda;
    let n = l.len();
    assert_eq!(h_prime.len(), n, "h' must be sampled on the F grid");
    let hp: Vec<f64> = h_prime.iter().map(|v| v.abs()).collect();
    // j1 = ∫ |h'| e^{C∫_{s̄}^{s}|h'|}, j2 = ∫ F |h'| e^{C∫_{s̄}^{s}|h'|}
    let (mut j1, mut j2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            let dl = l[k] - l[k - 1];
            let grow = (c_weight * 0.5 * dl * (hp[k] + hp[k - 1])).exp();
            j1 = grow * (j1 + 0.5 * dl * hp[k - 1]) + 0.5 * dl * hp[k];
            j2 = grow * (j2 + 0.5 * dl * f.value[k - 1] * hp[k - 1]) + 0.5 * dl * f.value[k] * hp[k];
        }
        out.push(match regime {
            Regime::Far => data * (1.0 + j1) + f.value[k] + j2,
            Regime::Near => f.value[k] + j2,
        });
    }
    out
}

/// The envelope at the base point of `ray`, with `F` from the closed-form
/// source only. Returns the value and the regime used.
pub fn envelope_v(
    ray: &RayCoords,
    data: f64,
    h: &MetricPerturbSpec,
    f: &SourceSpec,
    params: &BoundParams,
) -> Result<(f64, Regime), BoundsError> {
    params.validate()?;
    let regime = ray.regime(params.s0);
    let lo = ray.lambda_min(params.s0);
    if lo > ray.s {
        return Err(BoundsError::OutOfRange { lambda: ray.s, lo, hi: f64::INFINITY });
    }
    let fun = accumulate_f(f, ray, lo, params.dl);
    let hp = fun.lambda.iter().map(|&l| h_ray_derivative(h, ray, l)).collect::<Result<Vec<_>, _>>()?;
    let v = envelope_profile(regime, data, &fun, &hp, params.c_weight);
    Ok((*v.last().expect("nonempty"), regime))
}

/// The sourced-wave envelope with unit constant.
pub fn wave_bound_value(mu: f64, nu: f64, t: f64, r: f64) -> Result<f64, BoundsError> {
    if !(mu > 0.0 && mu <= 0.5) {
        return Err(BoundsError::Domain(format!("μ must lie in (0, 1/2], got {mu}")));
    }
    if !(nu != 0.0 && nu.abs() <= 0.5) {
        return Err(BoundsError::Domain(format!("ν must satisfy 0 < |ν| ≤ 1/2, got {nu}")));
    }
    if !(t > r && t >= 2.0 && r >= 0.0) {
        return Err(BoundsError::Domain(format!("need t > r ≥ 0 and t ≥ 2, got t={t}, r={r}")));
    }
    Ok(if nu > 0.0 {
        (t - r).powf(-(nu - mu)) / (t * nu * mu)
    } else {
        (t - r).powf(mu) / (t.powf(1.0 + nu) * nu.abs() * mu)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::solver::Support;
    use proptest::prelude::*;

    fn smooth_h() -> MetricPerturbSpec {
        let e = 0.1 * (-(Expr::t() - Expr::r() - 3.0) * (Expr::t() - Expr::r() - 3.0) * 0.25).exp() * (0.3 * Expr::x(1)).sin();
        MetricPerturbSpec::new(e, Support::Everywhere, false)
    }

    #[test]
    fn ray_points_lie_on_hyperboloids() {
        let ray = RayCoords::new(5.0, [3.0, 0.0, 0.0]).unwrap();
        assert_eq!(ray.s, 4.0);
        for l in [1.0, 2.5, 4.0] {
            let (t, x) = ray.point(l);
            assert!((t * t - x[0] * x[0] - l * l).abs() < 1e-12);
        }
        assert!(RayCoords::new(2.0, [3.0, 0.0, 0.0]).is_err());
        assert!((ray.lambda_min(1.5) - 2.0).abs() < 1e-15);
        let (t, x) = ray.point(2.0);
        assert!((t - x[0] - 1.0).abs() < 1e-12, "near rays leave the cone at λ = S");
    }

    #[test]
    fn h_derivative_examples() {
        let ray = RayCoords::new(7.0, [1.0, 2.0, -3.0]).unwrap();
        assert_eq!(h_ray_derivative(&MetricPerturbSpec::zero(), &ray, 2.0).unwrap(), 0.0);
        let s2 = MetricPerturbSpec::new(Expr::s2(), Support::Everywhere, false);
        for l in [1.0, 3.0, ray.s] {
            assert!((h_ray_derivative(&s2, &ray, l).unwrap() - 2.0 * l).abs() < 1e-12);
        }
        assert!(h_ray_derivative(&s2, &ray, ray.s + 1.0).is_err());
        let h = smooth_h();
        let along = |l: f64| {
            let (t, x) = ray.point(l);
            h.value(t, x)
        };
        for l in [1.5, 3.0, 5.5] {
            let e = 1e-4;
            let fd = (along(l + e) - along(l - e)) / (2.0 * e);
            assert!((fd - h_ray_derivative(&h, &ray, l).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn accumulate_examples() {
        let ray = RayCoords::new(10.0, [4.0, 0.0, 0.0]).unwrap();
        let f0 = accumulate_f(&SourceSpec::zero(), &ray, 2.0, 0.1);
        assert!(f0.value.iter().all(|v| *v == 0.0));
        // λ^{3/2}|f| ≡ 1 on every ray
        let unit = SourceSpec::new(Expr::s2().powf(-0.75), Support::Everywhere, false);
        let f1 = accumulate_f(&unit, &ray, 2.0, 0.1);
        for (l, v) in f1.lambda.iter().zip(&f1.value) {
            assert!((v - (l - 2.0)).abs() < 1e-12);
        }
        let smooth = SourceSpec::new((-(Expr::t() - 6.0).powf(2.0)).exp() / Expr::t(), Support::Everywhere, false);
        let a = accumulate_f(&smooth, &ray, 2.0, 0.1).last();
        let b = accumulate_f(&smooth, &ray, 2.0, 0.05).last();
        assert!(((a - b) / b).abs() < 5e-3);
    }

    #[test]
    fn flat_metric_collapse() {
        let p = BoundParams { s0: 3.0, ..Default::default() };
        let far = RayCoords::radial(12.0, 0.3);
        let near = RayCoords::radial(12.0, 1.8);
        assert_eq!(far.regime(p.s0), Regime::Far);
        assert_eq!(near.regime(p.s0), Regime::Near);
        let z = MetricPerturbSpec::zero();
        let (v, _) = envelope_v(&far, 0.7, &z, &SourceSpec::zero(), &p).unwrap();
        assert_eq!(v, 0.7);
        let f = SourceSpec::new(Expr::t().powf(-3.0), Support::Everywhere, true);
        let (v, _) = envelope_v(&near, 0.7, &z, &f, &p).unwrap();
        let direct = accumulate_f(&f, &near, near.lambda_min(p.s0), p.dl).last();
        assert_eq!(v, direct);
        let (v, _) = envelope_v(&far, 0.7, &z, &f, &p).unwrap();
        assert!((v - 0.7 - accumulate_f(&f, &far, 3.0, p.dl).last()).abs() < 1e-14);
    }

    #[test]
    fn threshold_ties_go_near() {
        let s0: f64 = 3.0;
        let rho = s0.ln();
        let ray = RayCoords { t: rho.cosh(), x: [rho.sinh(), 0.0, 0.0], s: 1.0 };
        let y = ray.r() / ray.t;
        let tie = RayCoords { t: 1.0, x: [far_threshold(s0), 0.0, 0.0], s: (1.0 - far_threshold(s0).powi(2)).sqrt() };
        assert!((y - far_threshold(s0)).abs() < 1e-15);
        assert_eq!(tie.regime(s0), Regime::Near);
    }

    #[test]
    fn envelope_quadrature_converges() {
        let p = BoundParams { s0: 3.0, dl: 0.02, ..Default::default() };
        // h' keeps one sign so |h'| is smooth
        let h = MetricPerturbSpec::new(0.1 * (1.0 - (Expr::t() * -0.2).exp()), Support::Everywhere, true);
        let f = SourceSpec::new(Expr::t().powf(-2.5) * (1.0 + 0.5 * Expr::r().sin()), Support::Everywhere, true);
        for rho in [0.4, 1.5] {
            let ray = RayCoords::radial(15.0, rho);
            let (a, _) = envelope_v(&ray, 0.3, &h, &f, &p).unwrap();
            let (b, _) = envelope_v(&ray, 0.3, &h, &f, &BoundParams { dl: 0.01, ..p.clone() }).unwrap();
            let (c, _) = envelope_v(&ray, 0.3, &h, &f, &BoundParams { dl: 0.005, ..p.clone() }).unwrap();
            assert!(((a - b) / b).abs() < 1e-2);
            assert!((a - b).abs() / (b - c).abs().max(1e-300) > 3.5, "second order: {a} {b} {c}");
        }
    }

    #[test]
    fn wave_bound_examples() {
        assert!((wave_bound_value(0.5, 0.5, 10.0, 0.0).unwrap() - 0.4).abs() < 1e-15);
        assert!((wave_bound_value(0.5, -0.5, 10.0, 6.0).unwrap() - 8.0 / 10f64.sqrt()).abs() < 1e-12);
        assert!(wave_bound_value(0.5, 0.0, 10.0, 6.0).is_err());
        assert!(wave_bound_value(0.6, 0.5, 10.0, 6.0).is_err());
        assert!(wave_bound_value(0.5, 0.5, 10.0, 10.0).is_err());
        assert!(wave_bound_value(0.5, 0.5, 1.5, 0.0).is_err());
    }

    #[test]
    fn wave_bound_parameter_sweep() {
        // blows up like 1/(νμ) at the domain edge: νμ·value tends to a finite limit
        for &(nu, limit) in &[(0.25, 15f64.powf(-0.25) / 20.0), (-0.3, 1.0 / 20f64.powf(0.7))] {
            let mut prev = f64::INFINITY;
            for k in 1..7 {
                let mu = 0.5 * 10f64.powi(-k);
                let scaled = wave_bound_value(mu, nu, 20.0, 5.0).unwrap() * mu * nu.abs();
                let gap = (scaled - limit).abs() / limit;
                assert!(gap < prev);
                prev = gap;
            }
            assert!(prev < 1e-5);
        }
        // continuity on each branch
        for nu in [0.5, -0.25] {
            let a = wave_bound_value(0.5, nu, 30.0, 12.0).unwrap();
            let b = wave_bound_value(0.5, nu, 30.0 + 1e-9, 12.0 + 1e-9).unwrap();
            assert!((a - b).abs() < 1e-9 * a);
        }
    }

    proptest! {
        #[test]
        fn regime_partition(s0 in 1.01f64..50.0, y in 0.0f64..0.999) {
            prop_assert!(far_threshold(s0) < 1.0);
            let ray = RayCoords { t: 1.0, x: [y, 0.0, 0.0], s: (1.0 - y * y).sqrt() };
            let far = y < far_threshold(s0) - 1e-12;
            prop_assert_eq!(ray.regime(s0) == Regime::Far, far);
        }

        #[test]
        fn envelope_monotone(d in 0.0f64..2.0, dd in 0.0f64..1.0, bump in 0.0f64..1.0, rho in 0.0f64..2.5) {
            let p = BoundParams { s0: 3.0, dl: 0.05, ..Default::default() };
            let ray = RayCoords::radial(10.0, rho);
            let lo = ray.lambda_min(p.s0);
            prop_assume!(lo < ray.s);
            let h = MetricPerturbSpec::new(0.1 * (Expr::t() * 0.5).sin(), Support::Everywhere, true);
            let f = accumulate_f(&SourceSpec::new(Expr::t().powf(-2.0), Support::Everywhere, true), &ray, lo, p.dl);
            let hp: Vec<f64> = f.lambda.iter().map(|&l| h_ray_derivative(&h, &ray, l).unwrap()).collect();
            let regime = ray.regime(p.s0);
            let v0 = *envelope_profile(regime, d, &f, &hp, 10.0).last().unwrap();
            let v1 = *envelope_profile(regime, d + dd, &f, &hp, 10.0).last().unwrap();
            let bigger = RayFunction { lambda: f.lambda.clone(), value: f.value.iter().map(|v| v + bump).collect() };
            let v2 = *envelope_profile(regime, d, &bigger, &hp, 10.0).last().unwrap();
            prop_assert!(v0 >= 0.0 && v1 >= v0 && v2 >= v0);
        }
    }
}
