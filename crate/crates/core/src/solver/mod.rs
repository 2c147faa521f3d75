//! Explicit finite-difference evolution of the coupled model and of the
//! auxiliary linear problems (sourced wave, Klein-Gordon on a perturbed metric).
//!
//! Time stepping is leapfrog with centred second-order stencils. The
//! Klein-Gordon mass term is weighted `(1/4, 1/2, 1/4)` over the three levels,
//! and the quasilinear coefficient `u H^{αβ}` is taken at the current level.

mod cartesian;
mod evolve;
mod manufactured;
mod radial;
pub mod snapshot;

pub use cartesian::{CartesianHistory, CartesianSolver};
pub use evolve::{
    evolve, evolve_to_time, slice_time_needed, solve_linear_kg_curved, solve_linear_wave_sourced, support_offset, Failure,
    FailureKind, History, Observer, RunRecord,
};
pub use manufactured::{manufactured_residual, manufactured_sources, ResidualNorms};
pub use radial::{RadialGrid, RadialHistory, RadialLevel, RadialSolver};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::geometry::GeometryError;

/// Field magnitude beyond which a run is declared blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// `|u|·‖H‖` at or above this value leaves the small-data regime.
pub const HYPERBOLICITY_LIMIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CFL violated: effective Courant number {courant:.4} exceeds {limit}")]
    Cfl { courant: f64, limit: f64 },
    #[error("hyperbolicity lost at t={t}, x={x:?}: |u|·‖H‖ = {value:.4} >= 0.5")]
    HyperbolicityLoss { t: f64, x: [f64; 3], value: f64 },
    #[error("non-finite or blown-up value {value} at t={t}, x={x:?}")]
    NonFinite { t: f64, x: [f64; 3], value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial data: {0}")]
    InvalidData(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Constant coefficients of the model system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// P^{αβ}, index 0 = t.
    pub p: [[f64; 4]; 4],
    pub r: f64,
    /// H^{αβ}.
    pub h: [[f64; 4]; 4],
    /// Klein-Gordon mass.
    pub c: f64,
}

fn symmetrize(m: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = m;
    for a in 0..4 {
        for b in 0..4 {
            out[a][b] = 0.5 * (m[a][b] + m[b][a]);
        }
    }
    out
}

impl ModelParams {
    pub fn new(p: [[f64; 4]; 4], r: f64, h: [[f64; 4]; 4], c: f64) -> Result<Self, SolverError> {
        let out = ModelParams { p: symmetrize(p), r, h: symmetrize(h), c };
        out.validate()?;
        Ok(out)
    }

    /// Decoupled linear fields: `P = H = 0`, `R = 0`.
    pub fn free(c: f64) -> Self {
        ModelParams { p: [[0.0; 4]; 4], r: 0.0, h: [[0.0; 4]; 4], c }
    }

    /// Isotropic coefficients `diag(p0, p1, p1, p1)` and `diag(h0, h1, h1, h1)`.
    pub fn isotropic(p0: f64, p1: f64, r: f64, h0: f64, h1: f64, c: f64) -> Self {
        let diag = |a: f64, b: f64| {
            let mut m = [[0.0; 4]; 4];
            m[0][0] = a;
            for k in 1..4 {
                m[k][k] = b;
            }
            m
        };
        ModelParams { p: diag(p0, p1), r, h: diag(h0, h1), c }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SolverError::InvalidParams(format!("Klein-Gordon mass c must be > 0, got {}", self.c)));
        }
        let finite = self.p.iter().chain(self.h.iter()).flatten().all(|v| v.is_finite()) && self.r.is_finite();
        if !finite {
            return Err(SolverError::InvalidParams("non-finite coefficient".into()));
        }
        for a in 0..4 {
            for b in 0..4 {
                if self.p[a][b] != self.p[b][a] || self.h[a][b] != self.h[b][a] {
                    return Err(SolverError::InvalidParams("P and H must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Induced ∞-norm of H (maximal absolute row sum).
    pub fn h_norm(&self) -> f64 {
        self.h.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// True when P and H are of the form `diag(a, b, b, b)`, the only
    /// coefficients compatible with spherical symmetry.
    pub fn is_isotropic(&self) -> bool {
        let iso = |m: &[[f64; 4]; 4]| {
            (0..4).all(|a| (0..4).all(|b| a == b || m[a][b] == 0.0)) && m[1][1] == m[2][2] && m[2][2] == m[3][3]
        };
        iso(&self.p) && iso(&self.h)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::isotropic(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    #[serde(rename = "full-3d")]
    Full3d,
    #[serde(rename = "radial-1d")]
    Radial1d,
}

/// Spatial grid and time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: GridMode,
    /// Half-width of the cube (3D) or outer radius (radial).
    pub extent: f64,
    pub dx: f64,
    /// Courant factor `Δt/Δx`.
    pub courant: f64,
}

impl GridSpec {
    pub fn radial(extent: f64, dx: f64, courant: f64) -> Self {
        GridSpec { mode: GridMode::Radial1d, extent, dx, courant }
    }

    pub fn full_3d(extent: f64, dx: f64, courant: f64) -> Self {
        GridSpec { mode: GridMode::Full3d, extent, dx, courant }
    }

    pub fn dt(&self) -> f64 {
        self.courant * self.dx
    }

    pub fn courant_limit(&self) -> f64 {
        match self.mode {
            GridMode::Full3d => 0.5,
            GridMode::Radial1d => 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dx > 0.0 && self.extent > self.dx) {
            return Err(SolverError::InvalidParams(format!(
                "grid needs 0 < dx < extent, got dx={}, extent={}",
                self.dx, self.extent
            )));
        }
        if !(self.courant > 0.0 && self.courant <= self.courant_limit()) {
            return Err(SolverError::Cfl { courant: self.courant, limit: self.courant_limit() });
        }
        Ok(())
    }
}

/// Where a closed-form source or perturbation may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// Nonzero only where `|x| ≤ t − offset`.
    Cone { offset: f64 },
    /// Nonzero only where `|x| ≤ radius`.
    Ball { radius: f64 },
    Everywhere,
}

impl Support {
    /// Largest radius that may be nonzero at time `t` (infinite for `Everywhere`).
    pub fn reach(&self, t: f64) -> f64 {
        match *self {
            Support::Cone { offset } => t - offset,
            Support::Ball { radius } => radius,
            Support::Everywhere => f64::INFINITY,
        }
    }
}

/// A prescribed source `f(t, x)`.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub f: Expr,
    pub support: Support,
    /// Spherically symmetric, so usable in radial mode.
    pub radial: bool,
}

impl SourceSpec {
    pub fn new(f: Expr, support: Support, radial: bool) -> Self {
        SourceSpec { f, support, radial }
    }

    pub fn zero() -> Self {
        SourceSpec { f: Expr::constant(0.0), support: Support::Ball { radius: 0.0 }, radial: true }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero()
    }

    /// Evaluates the source, returning zero outside the declared support.
    pub fn value(&self, t: f64, x: [f64; 3]) -> f64 {
        let r = crate::geometry::norm3(x);
        if r > self.support.reach(t) {
            0.0
        } else {
            self.f.value(t, x)
        }
    }
}

/// A metric perturbation `h̄^{00}(t, x)`; the inverse metric is
/// `g^{αβ} = m^{αβ} − h^{αβ}` with only the `00` entry perturbed.
#[derive(Debug, Clone)]
pub struct MetricPerturbSpec {
    pub h00: Expr,
    pub support: Support,
    pub radial: bool,
}

impl MetricPerturbSpec {
    pub fn new(h00: Expr, support: Support, radial: bool) -> Self {
        MetricPerturbSpec { h00, support, radial }
    }

    pub fn zero() -> Self {
        MetricPerturbSpec { h00: Expr::constant(0.0), support: Support::Ball { radius: 0.0 }, radial: true }
    }

    /// `0.1·(s/t)·χ` with `χ` rising smoothly from 0 at `t − r = 1` to 1 at `t − r = 2`.
    pub fn cone_profile(amp: f64) -> Self {
        let s_over_t = (Expr::s2() / (Expr::t() * Expr::t())).sqrt();
        let chi = (Expr::t() - Expr::r() - 1.0).smoothstep();
        MetricPerturbSpec { h00: amp * s_over_t * chi, support: Support::Cone { offset: 1.0 }, radial: true }
    }

    pub fn is_zero(&self) -> bool {
        self.h00.is_zero()
    }

    pub fn value(&self, t: f64, x: [f64; 3]) -> f64 {
        let r = crate::geometry::norm3(x);
        if r > self.support.reach(t) {
            0.0
        } else {
            self.h00.value(t, x)
        }
    }
}

/// Cauchy data `(u, ∂_t u, v, ∂_t v)` on the flat slice `t = t_init`.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub t_init: f64,
    pub u0: Expr,
    pub u1: Expr,
    pub v0: Expr,
    pub v1: Expr,
    /// All four functions vanish for `|x| ≥ support_radius`.
    pub support_radius: f64,
}

impl InitialData {
    pub fn zero(t_init: f64) -> Self {
        let z = Expr::constant(0.0);
        InitialData { t_init, u0: z.clone(), u1: z.clone(), v0: z.clone(), v1: z, support_radius: 0.0 }
    }

    /// Centred smooth bumps `eps·bump(r/ρ)` for both `u` and `v`, zero velocities.
    pub fn bumps(t_init: f64, eps_u: f64, eps_v: f64, radius: f64) -> Self {
        InitialData {
            t_init,
            u0: Expr::radial_bump(eps_u, [0.0; 3], radius),
            u1: Expr::constant(0.0),
            v0: Expr::radial_bump(eps_v, [0.0; 3], radius),
            v1: Expr::constant(0.0),
            support_radius: radius,
        }
    }

    /// Truncated Gaussians `eps·exp(−r²/σ²)` for `u` and `v`, zero velocities,
    /// supported in `r < 6σ`.
    pub fn gaussians(t_init: f64, eps_u: f64, eps_v: f64, sigma: f64) -> Self {
        InitialData {
            t_init,
            u0: Expr::truncated_gaussian(eps_u, sigma),
            u1: Expr::constant(0.0),
            v0: Expr::truncated_gaussian(eps_v, sigma),
            v1: Expr::constant(0.0),
            support_radius: 6.0 * sigma,
        }
    }

    /// Support must sit strictly inside `r ≤ t_init − 1 − margin`.
    pub fn validate(&self, margin: f64) -> Result<(), SolverError> {
        if self.support_radius >= self.t_init - 1.0 - margin {
            return Err(SolverError::InvalidData(format!(
                "support radius {} not inside the cone r <= t_init - 1 - margin = {}",
                self.support_radius,
                self.t_init - 1.0 - margin
            )));
        }
        Ok(())
    }
}

/// Bundle of the equations to evolve.
#[derive(Debug, Clone)]
pub struct System {
    pub params: ModelParams,
    /// Extra source appended to the `u` equation.
    pub source_u: SourceSpec,
    /// Extra source appended to the `v` equation.
    pub source_v: SourceSpec,
    /// Background perturbation multiplying `∂_t² v`.
    pub metric: MetricPerturbSpec,
}

impl System {
    pub fn model(params: ModelParams) -> Self {
        System { params, source_u: SourceSpec::zero(), source_v: SourceSpec::zero(), metric: MetricPerturbSpec::zero() }
    }

    /// `−□u = f`.
    pub fn sourced_wave(f: SourceSpec) -> Self {
        System { source_u: f, ..System::model(ModelParams::free(1.0)) }
    }

    /// `−□̃_g v + c² v = f` with `g^{00} = −1 − h̄^{00}`.
    pub fn curved_kg(h: MetricPerturbSpec, f: SourceSpec, c: f64) -> Self {
        System { source_v: f, metric: h, ..System::model(ModelParams::free(c)) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_symmetrized_and_validated() {
        let mut p = [[0.0; 4]; 4];
        p[0][1] = 2.0;
        let m = ModelParams::new(p, 0.0, [[0.0; 4]; 4], 1.0).unwrap();
        assert_eq!(m.p[0][1], 1.0);
        assert_eq!(m.p[1][0], 1.0);
        assert!(!m.is_isotropic());
        assert!(ModelParams::new(p, 0.0, [[0.0; 4]; 4], 0.0).is_err());
        assert!(ModelParams::new(p, f64::NAN, [[0.0; 4]; 4], 1.0).is_err());
        assert!(ModelParams::default().is_isotropic());
        assert_eq!(ModelParams::default().h_norm(), 1.0);
    }

    #[test]
    fn grid_cfl_limits() {
        assert!(GridSpec::radial(10.0, 0.1, 0.9).validate().is_ok());
        assert!(matches!(GridSpec::radial(10.0, 0.1, 0.95).validate(), Err(SolverError::Cfl { .. })));
        assert!(GridSpec::full_3d(2.0, 0.1, 0.5).validate().is_ok());
        assert!(matches!(GridSpec::full_3d(2.0, 0.1, 0.6).validate(), Err(SolverError::Cfl { .. })));
    }

    #[test]
    fn initial_data_support_check() {
        assert!(InitialData::bumps(3.0, 0.01, 0.01, 1.0).validate(0.1).is_ok());
        assert!(InitialData::bumps(2.0, 0.01, 0.01, 1.0).validate(0.1).is_err());
    }

    #[test]
    fn source_support_is_enforced() {
        let s = SourceSpec::new(Expr::constant(1.0), Support::Cone { offset: 1.0 }, true);
        assert_eq!(s.value(5.0, [3.0, 0.0, 0.0]), 1.0);
        assert_eq!(s.value(5.0, [4.5, 0.0, 0.0]), 0.0);
    }
}
