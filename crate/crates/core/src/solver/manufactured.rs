//! Method of manufactured solutions: sources that make a chosen pair `(u, v)`
//! exact, and the defect of the discrete scheme on that pair.

use serde::Serialize;

use super::cartesian::Kernel;
use super::{GridSpec, ModelParams, SolverError, SourceSpec, Support, System};
use crate::expr::Expr;
use crate::geometry::Lattice;

/// Norms of the discrete equation defects over the interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualNorms {
    pub max_u: f64,
    pub max_v: f64,
    pub l2_u: f64,
    pub l2_v: f64,
}

impl ResidualNorms {
    pub fn max(&self) -> f64 {
        self.max_u.max(self.max_v)
    }
}

/// Sources `(S_u, S_v)` such that `(u, v)` solves the model system with them
/// appended on the right.
pub fn manufactured_sources(u: &Expr, v: &Expr, params: &ModelParams) -> (SourceSpec, SourceSpec) {
    let (pu, pv, pp) = (u.clone(), v.clone(), params.clone());
    let su = Expr::native(move |t, x| {
        let (ju, jv) = (pu.jet(t, x), pv.jet(t, x));
        let mut q = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                q += pp.p[a][b] * jv.d[a] * jv.d[b];
            }
        }
        ju.h[0][0] - (1..4).map(|a| ju.h[a][a]).sum::<f64>() - q - pp.r * jv.v * jv.v
    });
    let (pu, pv, pp) = (u.clone(), v.clone(), params.clone());
    let sv = Expr::native(move |t, x| {
        let (ju, jv) = (pu.jet(t, x), pv.jet(t, x));
        let mut quasi = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                quasi += pp.h[a][b] * jv.h[a][b];
            }
        }
        jv.h[0][0] - (1..4).map(|a| jv.h[a][a]).sum::<f64>() + ju.v * quasi + pp.c * pp.c * jv.v
    });
    (SourceSpec::new(su, Support::Everywhere, false), SourceSpec::new(sv, Support::Everywhere, false))
}

/// Defects of one leapfrog step applied to exact samples of `(u, v)` on a cube
/// of half-width `grid.extent` centred at `center`, at time `t`. The `v` defect
/// is the discrete equation residual; the `u` defect is scaled by `1/Δt²` to
/// the same units.
pub fn manufactured_residual(
    u: &Expr,
    v: &Expr,
    params: &ModelParams,
    grid: &GridSpec,
    t: f64,
    center: [f64; 3],
) -> Result<ResidualNorms, SolverError> {
    grid.validate()?;
    params.validate()?;
    let (su, sv) = manufactured_sources(u, v, params);
    let system = System { source_u: su, source_v: sv, ..System::model(params.clone()) };
    let cells = (grid.extent / grid.dx).round().max(2.0) as usize;
    let lattice = Lattice::centered(center, cells, grid.dx);
    let dt = grid.dt();
    let kernel = Kernel::new(&system, &lattice, dt);
    let n = lattice.len();
    let sample = |e: &Expr, tt: f64| -> Vec<f64> { (0..n).map(|k| e.value(tt, kernel.position(k))).collect() };
    let (um, u0, up) = (sample(u, t - dt), sample(u, t), sample(u, t + dt));
    let (vm, v0, vp) = (sample(v, t - dt), sample(v, t), sample(v, t + dt));
    let mut out = ResidualNorms { max_u: 0.0, max_v: 0.0, l2_u: 0.0, l2_v: 0.0 };
    let vol = grid.dx.powi(3);
    for k in 0..n {
        if !kernel.interior(k) {
            continue;
        }
        let rv = kernel.v_diag(t, k, u0[k])? * (vp[k] - kernel.v_plus(t, k, &u0, &vm, &v0, &vp)?);
        let ru = (up[k] - kernel.u_plus(t, k, &um, &u0, &vm, &v0, &vp)) / (dt * dt);
        out.max_u = out.max_u.max(ru.abs());
        out.max_v = out.max_v.max(rv.abs());
        out.l2_u += ru * ru * vol;
        out.l2_v += rv * rv * vol;
    }
    out.l2_u = out.l2_u.sqrt();
    out.l2_v = out.l2_v.sqrt();
    Ok(out)
}
