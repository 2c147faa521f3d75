//! Coordinate geometry of the interior of the future light cone: hyperboloids
//! `H_s = {t² − |x|² = s²}`, the cone `K = {|x| ≤ t − 1}`, and the discrete
//! semi-hyperboloidal frame calculus on lattice histories.

mod lattice;
mod slice;

pub use lattice::{
    box_cartesian, box_semihyperboloidal, boost_apply, commutator_boost, frame_tangent_apply,
    perp_apply, Derived, FieldHistory, GridPoint, Lattice, Op, Sampler,
};
pub use slice::{interpolate_to_slice, lagrange4, SliceChart, SlicePoint, SliceSample};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point (t={t}, r={r}) is not in the interior of the forward cone t > r")]
    OutsideCone { t: f64, r: f64 },
    #[error("S(r/t) requires 0 <= r < t, got t={t}, r={r}")]
    RatioDomain { t: f64, r: f64 },
    #[error("stencil out of range at step {step}, index {idx:?}")]
    StencilOutOfRange { step: i64, idx: [i64; 3] },
    #[error("slice s={s} not covered: needs t in [{need_lo}, {need_hi}], stored [{have_lo}, {have_hi}]")]
    SliceNotCovered { s: f64, need_lo: f64, need_hi: f64, have_lo: f64, have_hi: f64 },
    #[error("invalid cone window [{s0}, {s1}]: need 1 < s0 < s1")]
    BadWindow { s0: f64, s1: f64 },
}

/// A point `(t, x)` of Minkowski space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: [f64; 3],
}

impl SpacetimePoint {
    pub fn new(t: f64, x: [f64; 3]) -> Self {
        SpacetimePoint { t, x }
    }

    /// The point of `H_s` above the spatial position `x`: `t = sqrt(s² + |x|²)`.
    pub fn on_slice(s: f64, x: [f64; 3]) -> Self {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        SpacetimePoint { t: (s * s + r2).sqrt(), x }
    }

    pub fn r(&self) -> f64 {
        norm3(self.x)
    }

    pub fn hyperbolic_radius(&self) -> Result<f64, GeometryError> {
        hyperbolic_radius(self)
    }

    pub fn in_cone(&self) -> bool {
        in_cone(self)
    }
}

pub(crate) fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// `s = sqrt(t² − r²)`, defined for `t > r`.
pub fn hyperbolic_radius(p: &SpacetimePoint) -> Result<f64, GeometryError> {
    let r = p.r();
    if !(p.t > r) {
        return Err(GeometryError::OutsideCone { t: p.t, r });
    }
    // (t − r)(t + r) loses less precision near the cone than t² − r².
    Ok(((p.t - r) * (p.t + r)).sqrt())
}

/// Membership in `K = {|x| ≤ t − 1}`.
pub fn in_cone(p: &SpacetimePoint) -> bool {
    p.r() <= p.t - 1.0
}

/// `S(r/t) = sqrt((t + r)/(t − r))`, the hyperbolic radius at which the ray
/// through `(t, x)` enters `K`.
pub fn ratio_s(t: f64, r: f64) -> Result<f64, GeometryError> {
    if !(r >= 0.0 && r < t) {
        return Err(GeometryError::RatioDomain { t, r });
    }
    Ok(((t + r) / (t - r)).sqrt())
}

/// The region `K_[s0,s1]` between two hyperboloids inside the cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeWindow {
    pub s0: f64,
    pub s1: f64,
}

impl ConeWindow {
    pub fn new(s0: f64, s1: f64) -> Result<Self, GeometryError> {
        if !(1.0 < s0 && s0 < s1) {
            return Err(GeometryError::BadWindow { s0, s1 });
        }
        Ok(ConeWindow { s0, s1 })
    }

    pub fn contains(&self, p: &SpacetimePoint) -> bool {
        let r = p.r();
        let s2 = (p.t - r) * (p.t + r);
        p.t > 0.0 && r < p.t - 1.0 && self.s0 * self.s0 <= s2 && s2 <= self.s1 * self.s1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hyperbolic_radius_examples() {
        assert_eq!(hyperbolic_radius(&SpacetimePoint::new(1.0, [0.0; 3])), Ok(1.0));
        assert_eq!(hyperbolic_radius(&SpacetimePoint::new(5.0, [3.0, 0.0, 0.0])), Ok(4.0));
        assert!(matches!(
            hyperbolic_radius(&SpacetimePoint::new(2.0, [3.0, 0.0, 0.0])),
            Err(GeometryError::OutsideCone { .. })
        ));
    }

    #[test]
    fn cone_membership_examples() {
        assert!(in_cone(&SpacetimePoint::new(5.0, [3.0, 0.0, 0.0])));
        assert!(!in_cone(&SpacetimePoint::new(5.0, [4.5, 0.0, 0.0])));
        assert!(in_cone(&SpacetimePoint::new(1.0, [0.0; 3])));
    }

    #[test]
    fn ratio_s_examples() {
        assert_eq!(ratio_s(5.0, 3.0), Ok(2.0));
        assert_eq!(ratio_s(7.0, 0.0), Ok(1.0));
        assert!(ratio_s(2.0, 2.0).is_err());
        assert!(ratio_s(2.0, -0.1).is_err());
    }

    #[test]
    fn window_membership() {
        let w = ConeWindow::new(2.0, 4.0).unwrap();
        assert!(w.contains(&SpacetimePoint::on_slice(3.0, [1.0, 0.5, 0.0])));
        assert!(!w.contains(&SpacetimePoint::on_slice(5.0, [0.0; 3])));
        assert!(!w.contains(&SpacetimePoint::on_slice(3.0, [10.0, 0.0, 0.0])));
        assert!(ConeWindow::new(1.0, 3.0).is_err());
        assert!(ConeWindow::new(3.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn ratio_s_identity(t in 0.1f64..1e3, frac in 0.0f64..0.999) {
            let r = frac * t;
            let lhs = ratio_s(t, r).unwrap() * (t - r).sqrt();
            prop_assert!((lhs - (t + r).sqrt()).abs() <= 1e-12 * (t + r).sqrt());
        }

        #[test]
        fn slice_points_lie_on_hyperboloid(s in 1.0f64..100.0, x in prop::array::uniform3(-50.0f64..50.0)) {
            let p = SpacetimePoint::on_slice(s, x);
            let back = p.hyperbolic_radius().unwrap();
            prop_assert!((back - s).abs() <= 1e-12 * p.t.max(1.0) * p.t / s);
        }

        #[test]
        fn cone_points_satisfy_s_bounds(t in 1.0f64..1e3, frac in 0.0f64..1.0) {
            let r = frac * (t - 1.0);
            let p = SpacetimePoint::new(t, [r, 0.0, 0.0]);
            prop_assert!(in_cone(&p));
            let s = p.hyperbolic_radius().unwrap();
            prop_assert!(s >= 1.0 - 1e-12);
            prop_assert!(s <= t * (1.0 + 1e-12) && t <= s * s * (1.0 + 1e-12));
        }
    }
}
