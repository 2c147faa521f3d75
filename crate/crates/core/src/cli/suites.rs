//! Lattice suites and refinement studies driven by closed-form fields.

use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use serde::Serialize;

use crate::analysis::{sobolev_ratio, AnalysisError, FieldId, MultiIndex, RadialRecorder};
use crate::expr::Expr;
use crate::geometry::{
    box_cartesian, box_semihyperboloidal, interpolate_to_slice, FieldHistory, GeometryError, GridPoint, Lattice,
    SliceChart,
};
use crate::solver::{
    evolve_to_time, manufactured_residual, slice_time_needed, support_offset, GridSpec, InitialData, ModelParams,
    ResidualNorms, SolverError, System,
};

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("evolution failed: {0}")]
    Evolution(String),
}

/// `log2(e_k / e_{k+1})` for errors on grids halving in spacing.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

type Field = fn(f64, [f64; 3]) -> f64;

/// Smooth non-polynomial fields for the frame identity.
pub const FRAME_FIELDS: [(&str, Field); 3] = [
    ("plane-wave", |t, x| (0.5 * (t - 0.6 * x[0] + 0.3 * x[1])).sin() * (0.3 * x[2]).cos()),
    ("gaussian", |t, x| {
        let d = [x[0] - 1.0, x[1] - 0.5, x[2]];
        (-0.25 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])).exp() * (0.5 * t).cos()
    }),
    ("rational", |t, x| 1.0 / (1.0 + 0.05 * t * t + 0.1 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))),
];

const FRAME_TIME: f64 = 3.0;
const FRAME_CENTER: [f64; 3] = [1.5, 0.5, 0.0];
const FRAME_HALF_WIDTH: f64 = 0.4;
/// Nodes compared at every resolution: `|x − c|_∞ ≤ 0.2`, away from the faces.
const FRAME_PROBE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRow {
    pub field: &'static str,
    pub dx: f64,
    pub max_discrepancy: f64,
    pub nodes: usize,
}

/// Max-norm of `box_semihyperboloidal − box_cartesian` over the probe box
/// around `(t, x) = (3, (1.5, 0.5, 0))`, restricted to `t − r ≥ 0.5`.
pub fn frame_identity(field: (&'static str, Field), dx: f64) -> Result<FrameRow, SuiteError> {
    let cells = (FRAME_HALF_WIDTH / dx).round() as usize;
    let lat = Lattice::centered(FRAME_CENTER, cells, dx);
    let h = FieldHistory::from_fn(lat.clone(), dx, FRAME_TIME, -3..4, field.1);
    let mut row = FrameRow { field: field.0, dx, max_discrepancy: 0.0, nodes: 0 };
    for k in 0..lat.len() {
        let i = lat.unflat(k);
        let idx = [i[0] as i64, i[1] as i64, i[2] as i64];
        let x = lat.coord(idx);
        if (0..3).any(|a| (x[a] - FRAME_CENTER[a]).abs() > FRAME_PROBE + 1e-9 * dx) {
            continue;
        }
        if FRAME_TIME - (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() < 0.5 {
            continue;
        }
        let p = GridPoint::new(0, idx);
        let d = box_semihyperboloidal(&h, p)? - box_cartesian(&h, p)?;
        row.max_discrepancy = row.max_discrepancy.max(d.abs());
        row.nodes += 1;
    }
    Ok(row)
}

/// `1` on `[0, a]`, `0` beyond `b`, smooth in between.
fn cutoff(x: f64, a: f64, b: f64) -> f64 {
    let f = |z: f64| if z > 0.0 { (-1.0 / z).exp() } else { 0.0 };
    let q = (b - x) / (b - a);
    f(q) / (f(q) + f(1.0 - q))
}

/// Member of the Sobolev test family: `u = φ(x/t; s)` supported in `|x/t| < 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevMember {
    pub name: String,
    pub center: [f64; 3],
    /// Per-axis Gaussian widths in `y = x/t`.
    pub widths: [f64; 3],
    pub wavenumber: f64,
    /// Relative amplitude of the `sin(ω ln s)` modulation of centre and widths.
    pub drift: f64,
    pub drift_rate: f64,
}

impl SobolevMember {
    pub fn value(&self, t: f64, x: [f64; 3]) -> f64 {
        let y = [x[0] / t, x[1] / t, x[2] / t];
        let rho = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        if rho >= 0.5 {
            return 0.0;
        }
        let s = ((t - rho * t) * (t + rho * t)).sqrt();
        let m = self.drift * (self.drift_rate * s.ln()).sin();
        let mut q = 0.0;
        for a in 0..3 {
            let d = (y[a] - self.center[a] * (1.0 + m)) / (self.widths[a] * (1.0 + 0.5 * m));
            q += d * d;
        }
        (-q).exp() * (self.wavenumber * y[0]).cos() * cutoff(rho, 0.4, 0.5) * s.powf(-1.5)
    }
}

/// Six fixed members and `count − 6` drifting ones drawn from `seed`.
pub fn sobolev_family(count: usize, seed: u64) -> Vec<SobolevMember> {
    let m = |name: &str, center, widths, wavenumber| SobolevMember {
        name: name.into(),
        center,
        widths,
        wavenumber,
        drift: 0.0,
        drift_rate: 0.0,
    };
    let mut out = vec![
        m("centred", [0.0; 3], [0.15; 3], 0.0),
        m("narrow", [0.0; 3], [0.06; 3], 0.0),
        m("shifted", [0.2, 0.0, 0.0], [0.1; 3], 0.0),
        m("oblique", [0.1, -0.15, 0.1], [0.08; 3], 0.0),
        m("anisotropic", [0.0; 3], [0.14, 0.25, 0.08], 0.0),
        m("oscillatory", [0.0; 3], [0.15; 3], 15.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = 0;
    while out.len() < count {
        let mut c = [0.0; 3];
        for v in &mut c {
            *v = rng.random_range(-0.12..0.12);
        }
        out.push(SobolevMember {
            name: format!("drifting-{k}"),
            center: c,
            widths: [rng.random_range(0.07..0.15), rng.random_range(0.07..0.15), rng.random_range(0.07..0.15)],
            wavenumber: rng.random_range(0.0..8.0),
            drift: rng.random_range(0.1..0.3),
            drift_rate: rng.random_range(0.5..2.0),
        });
        k += 1;
    }
    out.truncate(count);
    out
}

/// `sobolev_ratio` of a member on `H_s`, sampled on a lattice of spacing
/// `h·s` covering `|x| ≤ 0.6 s`.
pub fn sobolev_ratio_at(member: &SobolevMember, s: f64, h: f64) -> Result<f64, SuiteError> {
    let dx = h * s;
    let reach = 0.6 * s;
    let lat = Lattice::cube(reach + 4.0 * dx, dx);
    let mut chart = SliceChart::on_lattice(s, &lat, 0.0, 3);
    let keep: Vec<bool> = chart.points.iter().map(|p| p.x.iter().map(|c| c * c).sum::<f64>() <= reach * reach).collect();
    let mut it = keep.iter();
    chart.points.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    chart.nodes.retain(|_| *it.next().unwrap());
    let (lo, hi) = chart.t_range();
    let dt = 0.5 * dx;
    let steps = ((hi - lo) / dt).ceil() as i64 + 7;
    let f = |t: f64, x: [f64; 3]| member.value(t, x);
    let hist = FieldHistory::from_fn(lat, dt, lo - 3.0 * dt, 0..steps, f);
    let sample = interpolate_to_slice(&hist, &chart, true)?;
    Ok(sobolev_ratio(&sample)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub dx: f64,
    pub s: f64,
    pub energy: f64,
    pub relative_drift: f64,
}

/// `E(s, u)` of a free radial wave on the given hyperboloids and its drift
/// relative to the first one.
pub fn energy_drift(data: &InitialData, dx: f64, courant: f64, s_list: &[f64]) -> Result<Vec<DriftRow>, SuiteError> {
    let system = System::model(ModelParams::free(1.0));
    let off = support_offset(&system, data);
    let s_max = s_list.iter().copied().fold(0.0, f64::max);
    let t_needed = slice_time_needed(s_max, off);
    let grid = GridSpec::radial(t_needed + 2.0, dx, courant);
    let mut rec = RadialRecorder::new(0, 1.0, s_list, 2.0 * dx, off, vec![]);
    let until = t_needed + rec.lag_time(grid.dt()) + 3.0 * grid.dt();
    let run = evolve_to_time(system, &grid, data, until, 4, &mut [&mut rec]);
    if let Some(f) = run.failure {
        return Err(SuiteError::Evolution(f.message));
    }
    let tab = rec.finish()?;
    let series = tab.energy_series(FieldId::U, MultiIndex::ZERO);
    let e0 = series.first().map_or(0.0, |p| p.1 * p.1);
    Ok(series
        .iter()
        .map(|&(s, v)| {
            let e = v * v;
            DriftRow { dx, s, energy: e, relative_drift: if e0 > 0.0 { (e - e0).abs() / e0 } else { 0.0 } }
        })
        .collect())
}

/// Trigonometric pair for the manufactured-solution study.
pub fn manufactured_pair() -> (Expr, Expr) {
    let u = 0.1 * (Expr::t() - Expr::x(1) + 0.5 * Expr::x(2)).sin() * (0.7 * Expr::x(3)).cos();
    let v = 0.1 * (0.8 * Expr::t() + 0.6 * Expr::x(1)).cos() * (0.5 * Expr::x(2) - 0.4 * Expr::x(3)).sin();
    (u, v)
}

/// Scheme defect of the trigonometric pair on a cube of half-width 0.4.
pub fn manufactured_defect(params: &ModelParams, dx: f64, courant: f64) -> Result<ResidualNorms, SuiteError> {
    let (u, v) = manufactured_pair();
    let grid = GridSpec::full_3d(0.4, dx, courant);
    Ok(manufactured_residual(&u, &v, params, &grid, 3.0, [0.5, 0.2, -0.1])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_a_smooth_step() {
        assert_eq!(cutoff(0.3, 0.4, 0.5), 1.0);
        assert_eq!(cutoff(0.5, 0.4, 0.5), 0.0);
        assert!((cutoff(0.45, 0.4, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn orders_of_an_exact_quadratic_sequence() {
        assert_eq!(observed_orders(&[4.0, 1.0, 0.25]), vec![2.0, 2.0]);
    }

    #[test]
    fn family_is_seeded() {
        let a = sobolev_family(10, 7);
        assert_eq!(a.len(), 10);
        assert_eq!(a, sobolev_family(10, 7));
        assert_ne!(a[8], sobolev_family(10, 8)[8]);
        assert_eq!(a[0], sobolev_family(10, 8)[0]);
    }

    #[test]
    fn members_vanish_outside_half_speed_cone() {
        for m in sobolev_family(10, 0) {
            assert_eq!(m.value(4.0, [2.0, 0.0, 0.0]), 0.0);
            assert_eq!(m.value(4.0, [0.0, 5.0, 0.0]), 0.0);
        }
    }

    #[test]
    fn transported_member_ratio_is_scale_free() {
        let m = &sobolev_family(1, 0)[0];
        let a = sobolev_ratio_at(m, 3.0, 0.08).unwrap();
        let b = sobolev_ratio_at(m, 6.0, 0.08).unwrap();
        assert!(a > 0.0 && (a / b - 1.0).abs() < 0.02, "{a} {b}");
    }
}
