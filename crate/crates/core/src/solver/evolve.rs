//! Run driver: steps a solver until a target slice is covered, feeding each new
//! level to diagnostic observers and converting solver errors into records.

use std::time::Instant;

use serde::Serialize;

use super::{
    CartesianHistory, CartesianSolver, GridMode, GridSpec, InitialData, MetricPerturbSpec, RadialHistory, RadialSolver,
    SolverError, SourceSpec, System,
};

/// Read-only view of the stored levels handed to observers.
#[derive(Debug, Clone, Copy)]
pub enum History<'a> {
    Radial(&'a RadialHistory),
    Cartesian(&'a CartesianHistory),
}

impl History<'_> {
    pub fn t(&self) -> f64 {
        match self {
            History::Radial(h) => h.latest().t,
            History::Cartesian(h) => h.time(h.latest_step()),
        }
    }

    pub fn step(&self) -> i64 {
        match self {
            History::Radial(h) => h.latest_step(),
            History::Cartesian(h) => h.latest_step(),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            History::Radial(h) => h.dt,
            History::Cartesian(h) => crate::geometry::Sampler::dt(&h.u),
        }
    }
}

/// A diagnostic invoked after every completed step (and once on the initial levels).
pub trait Observer {
    fn observe(&mut self, history: History<'_>) -> Result<(), String>;
}

impl<F: FnMut(History<'_>) -> Result<(), String>> Observer for F {
    fn observe(&mut self, history: History<'_>) -> Result<(), String> {
        self(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Cfl,
    HyperbolicityLoss,
    BlowUp,
    Observer,
    Setup,
}

/// Structured report of the error that stopped a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub t: Option<f64>,
    pub x: Option<[f64; 3]>,
    pub value: Option<f64>,
    pub message: String,
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        let message = e.to_string();
        match e {
            SolverError::Cfl { courant, .. } => {
                Failure { kind: FailureKind::Cfl, t: None, x: None, value: Some(courant), message }
            }
            SolverError::HyperbolicityLoss { t, x, value } => {
                Failure { kind: FailureKind::HyperbolicityLoss, t: Some(t), x: Some(x), value: Some(value), message }
            }
            SolverError::NonFinite { t, x, value } => {
                Failure { kind: FailureKind::BlowUp, t: Some(t), x: Some(x), value: Some(value), message }
            }
            _ => Failure { kind: FailureKind::Setup, t: None, x: None, value: None, message },
        }
    }
}

/// Summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub t_final: f64,
    /// Largest `s` whose (support-truncated) slice is fully covered.
    pub s_reached: f64,
    pub steps: u64,
    pub wall_time_s: f64,
    pub failure: Option<Failure>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Time at which `H_s` meets the line `t − r = offset`, the last time a slice
/// restricted to `t − r ≥ offset` needs.
pub fn slice_time_needed(s: f64, offset: f64) -> f64 {
    if offset >= s {
        s
    } else {
        (s * s + offset * offset) / (2.0 * offset)
    }
}

/// Inverse of [`slice_time_needed`]: the largest `s` covered once `t` is reached.
fn slice_covered(t: f64, offset: f64) -> f64 {
    if t <= offset {
        t
    } else {
        (2.0 * offset * t - offset * offset).max(0.0).sqrt()
    }
}

/// Smallest `t − r` on which the solution can be nonzero: the data edge, or the
/// inner offset of any source or perturbation with cone support.
pub fn support_offset(system: &System, data: &InitialData) -> f64 {
    let mut d = if data.support_radius > 0.0 { data.t_init - data.support_radius } else { f64::INFINITY };
    for s in [&system.source_u, &system.source_v] {
        if !s.is_zero() {
            d = d.min(match s.support {
                super::Support::Cone { offset } => offset,
                _ => 1.0,
            });
        }
    }
    d.clamp(1.0, data.t_init)
}

enum Stepper {
    Radial(Box<RadialSolver>),
    Cartesian(Box<CartesianSolver>),
}

impl Stepper {
    fn history(&self) -> History<'_> {
        match self {
            Stepper::Radial(s) => History::Radial(s.history()),
            Stepper::Cartesian(s) => History::Cartesian(s.history()),
        }
    }

    fn step(&mut self) -> Result<(), SolverError> {
        match self {
            Stepper::Radial(s) => s.step(),
            Stepper::Cartesian(s) => s.step(),
        }
    }
}

/// Steps until `t ≥ until_t`, calling observers after each level.
pub fn evolve_to_time(
    system: System,
    grid: &GridSpec,
    data: &InitialData,
    until_t: f64,
    capacity: usize,
    observers: &mut [&mut dyn Observer],
) -> RunRecord {
    let start = Instant::now();
    let offset = support_offset(&system, data);
    let built = match grid.mode {
        GridMode::Radial1d => RadialSolver::new(system, grid.clone(), data, capacity).map(|s| Stepper::Radial(Box::new(s))),
        GridMode::Full3d => {
            CartesianSolver::new(system, grid.clone(), data, capacity).map(|s| Stepper::Cartesian(Box::new(s)))
        }
    };
    let mut stepper = match built {
        Ok(s) => s,
        Err(e) => {
            return RunRecord {
                t_final: data.t_init,
                s_reached: 0.0,
                steps: 0,
                wall_time_s: start.elapsed().as_secs_f64(),
                failure: Some(e.into()),
            }
        }
    };
    let mut steps = 0u64;
    let mut failure = None;
    let notify = |stepper: &Stepper, observers: &mut [&mut dyn Observer]| -> Option<Failure> {
        for o in observers.iter_mut() {
            if let Err(message) = o.observe(stepper.history()) {
                let t = stepper.history().t();
                return Some(Failure { kind: FailureKind::Observer, t: Some(t), x: None, value: None, message });
            }
        }
        None
    };
    failure = failure.or_else(|| notify(&stepper, observers));
    while failure.is_none() && stepper.history().t() < until_t - 1e-9 * until_t.abs() {
        if let Err(e) = stepper.step() {
            failure = Some(e.into());
            break;
        }
        steps += 1;
        failure = notify(&stepper, observers);
    }
    let t_final = stepper.history().t();
    // interpolation needs one level past the slice
    let t_usable = t_final - 2.0 * grid.dt();
    RunRecord {
        t_final,
        s_reached: slice_covered(t_usable, offset),
        steps,
        wall_time_s: start.elapsed().as_secs_f64(),
        failure,
    }
}

/// Evolves `system` from `data` until the slice `H_{until_s}`, truncated to the
/// numerical support, is covered by the stored levels.
pub fn evolve(
    system: System,
    grid: &GridSpec,
    data: &InitialData,
    until_s: f64,
    observers: &mut [&mut dyn Observer],
) -> RunRecord {
    let offset = support_offset(&system, data);
    let until_t = slice_time_needed(until_s, offset) + 3.0 * grid.dt();
    evolve_to_time(system, grid, data, until_t, 4, observers)
}

/// `−□u = f` from vanishing data at `t_init` up to `until_t`.
pub fn solve_linear_wave_sourced(
    f: SourceSpec,
    grid: &GridSpec,
    t_init: f64,
    until_t: f64,
    observers: &mut [&mut dyn Observer],
) -> RunRecord {
    evolve_to_time(System::sourced_wave(f), grid, &InitialData::zero(t_init), until_t, 4, observers)
}

/// `−□̃_g v + c²v = f` on the perturbed background, data carried by `v0, v1`.
pub fn solve_linear_kg_curved(
    h: MetricPerturbSpec,
    f: SourceSpec,
    data: &InitialData,
    grid: &GridSpec,
    c: f64,
    until_s: f64,
    observers: &mut [&mut dyn Observer],
) -> RunRecord {
    evolve(System::curved_kg(h, f, c), grid, data, until_s, observers)
}
