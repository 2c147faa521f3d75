//! Spherically symmetric evolution in the variables `w = r·u`, `z = r·v`, for
//! which the radial d'Alembertian is the flat 1+1 operator. Nodes sit at
//! `r_i = (i + ½)Δr`; `w` and `z` are odd across the origin, `u` and `v` even.

use std::collections::VecDeque;

use rayon::prelude::*;

use super::{GridMode, GridSpec, InitialData, SolverError, System, BLOW_UP_THRESHOLD, HYPERBOLICITY_LIMIT};

const PAR_MIN: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub dr: f64,
    pub r: Vec<f64>,
}

impl RadialGrid {
    pub fn new(extent: f64, dr: f64) -> Self {
        let n = (extent / dr).floor() as usize;
        RadialGrid { dr, r: (0..n).map(|i| (i as f64 + 0.5) * dr).collect() }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Index of the last node with `r_i ≤ r` (saturating at the ends).
    pub fn floor_index(&self, r: f64) -> usize {
        let k = (r / self.dr - 0.5).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.len().saturating_sub(1))
        }
    }

    /// Number of nodes with `r_i ≤ r`.
    pub fn count_within(&self, r: f64) -> usize {
        if !r.is_finite() {
            return self.len();
        }
        let k = (r / self.dr + 0.5).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.len())
        }
    }
}

/// One stored time level.
#[derive(Debug, Clone)]
pub struct RadialLevel {
    pub step: i64,
    pub t: f64,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Ring of the most recent radial levels.
#[derive(Debug, Clone)]
pub struct RadialHistory {
    pub grid: RadialGrid,
    pub dt: f64,
    pub t_origin: f64,
    levels: VecDeque<RadialLevel>,
    capacity: usize,
    /// Nodes at or beyond this index are exactly zero on the latest level.
    pub active: usize,
}

impl RadialHistory {
    pub fn time(&self, step: i64) -> f64 {
        self.t_origin + step as f64 * self.dt
    }

    pub fn latest(&self) -> &RadialLevel {
        self.levels.back().expect("history is never empty")
    }

    pub fn previous(&self) -> &RadialLevel {
        &self.levels[self.levels.len() - 2]
    }

    pub fn level(&self, step: i64) -> Option<&RadialLevel> {
        let first = self.levels.front()?.step;
        if step < first {
            return None;
        }
        self.levels.get((step - first) as usize)
    }

    pub fn oldest_step(&self) -> i64 {
        self.levels.front().map(|l| l.step).unwrap_or(0)
    }

    pub fn latest_step(&self) -> i64 {
        self.latest().step
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> impl Iterator<Item = &RadialLevel> {
        self.levels.iter()
    }

    fn push(&mut self, level: RadialLevel) {
        if self.levels.len() == self.capacity {
            self.levels.pop_front();
        }
        self.levels.push_back(level);
    }
}

fn level_from(grid: &RadialGrid, step: i64, t: f64, w: Vec<f64>, z: Vec<f64>) -> RadialLevel {
    let u = w.iter().zip(&grid.r).map(|(w, r)| w / r).collect();
    let v = z.iter().zip(&grid.r).map(|(z, r)| z / r).collect();
    RadialLevel { step, t, w, z, u, v }
}

/// Leapfrog stepper for the radial reduction of a [`System`].
#[derive(Debug, Clone)]
pub struct RadialSolver {
    pub system: System,
    pub spec: GridSpec,
    history: RadialHistory,
}

impl RadialSolver {
    pub fn new(system: System, spec: GridSpec, data: &InitialData, capacity: usize) -> Result<Self, SolverError> {
        spec.validate()?;
        if spec.mode != GridMode::Radial1d {
            return Err(SolverError::InvalidParams("radial solver needs a radial-1d grid".into()));
        }
        system.params.validate()?;
        if !system.params.is_isotropic() {
            return Err(SolverError::InvalidParams(
                "radial mode needs isotropic P and H of the form diag(a, b, b, b)".into(),
            ));
        }
        if !(system.source_u.radial && system.source_v.radial && system.metric.radial) {
            return Err(SolverError::InvalidParams("radial mode needs spherically symmetric sources".into()));
        }
        let grid = RadialGrid::new(spec.extent, spec.dx);
        let dt = spec.dt();
        let t0 = data.t_init;
        let ev = |e: &crate::expr::Expr| -> Vec<f64> { grid.r.iter().map(|&r| e.value_radial(t0, r)).collect() };
        let (u0, u1, v0, v1) = (ev(&data.u0), ev(&data.u1), ev(&data.v0), ev(&data.v1));
        let r = &grid.r;
        let w0: Vec<f64> = u0.iter().zip(r).map(|(u, r)| r * u).collect();
        let z0: Vec<f64> = v0.iter().zip(r).map(|(v, r)| r * v).collect();
        let mut history = RadialHistory {
            grid: grid.clone(),
            dt,
            t_origin: t0,
            levels: VecDeque::with_capacity(capacity.max(4)),
            capacity: capacity.max(4),
            active: grid.count_within(data.support_radius) + 3,
        };
        // Backward Taylor level at t0 − dt from the equations at t0.
        let solver = RadialSolver { system, spec, history: history.clone() };
        let n = grid.len();
        let mut w_m = vec![0.0; n];
        let mut z_m = vec![0.0; n];
        let p = &solver.system.params;
        for i in 0..n {
            let (dw, dz) = (lap_odd(&w0, i, grid.dr), lap_odd(&z0, i, grid.dr));
            let (a, b) = solver.coefficients(t0, r[i], u0[i])?;
            let vr = grad_even(&v0, i, grid.dr);
            let src_u = p.p[0][0] * v1[i] * v1[i] + p.p[1][1] * vr * vr + p.r * v0[i] * v0[i]
                + solver.system.source_u.value(t0, [r[i], 0.0, 0.0]);
            let w_tt = dw + r[i] * src_u;
            let z_tt = (b * dz - p.c * p.c * z0[i] + r[i] * solver.system.source_v.value(t0, [r[i], 0.0, 0.0])) / a;
            w_m[i] = w0[i] - dt * r[i] * u1[i] + 0.5 * dt * dt * w_tt;
            z_m[i] = z0[i] - dt * r[i] * v1[i] + 0.5 * dt * dt * z_tt;
        }
        history.push(level_from(&grid, -1, t0 - dt, w_m, z_m));
        history.push(level_from(&grid, 0, t0, w0, z0));
        history.active = history.active.min(n);
        Ok(RadialSolver { history, ..solver })
    }

    pub fn history(&self) -> &RadialHistory {
        &self.history
    }

    pub fn t(&self) -> f64 {
        self.history.latest().t
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.history.grid
    }

    /// `(A, B)` in `A z_tt − B z_rr + c² z = r S_v`.
    fn coefficients(&self, t: f64, r: f64, u: f64) -> Result<(f64, f64), SolverError> {
        let p = &self.system.params;
        let x = [r, 0.0, 0.0];
        let strength = u.abs() * p.h_norm();
        if strength >= HYPERBOLICITY_LIMIT {
            return Err(SolverError::HyperbolicityLoss { t, x, value: strength });
        }
        let h_ext = if self.system.metric.is_zero() { 0.0 } else { self.system.metric.value(t, x) };
        let a = 1.0 + u * p.h[0][0] + h_ext;
        let b = 1.0 - u * p.h[1][1];
        if a <= 0.0 || b <= 0.0 {
            return Err(SolverError::HyperbolicityLoss { t, x, value: strength });
        }
        let courant = self.spec.courant * (b / a).sqrt();
        if courant > 1.0 {
            return Err(SolverError::Cfl { courant, limit: 1.0 });
        }
        Ok((a, b))
    }

    fn reach_index(&self, t: f64) -> usize {
        let g = &self.history.grid;
        let mut k = 0;
        for s in [&self.system.source_u, &self.system.source_v] {
            if !s.is_zero() {
                k = k.max(g.count_within(s.support.reach(t)) + 2);
            }
        }
        if !self.system.metric.is_zero() {
            // the perturbation only multiplies v, so it cannot extend the support
        }
        k
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<(), SolverError> {
        let g = &self.history.grid;
        let n = g.len();
        let dt = self.history.dt;
        let dr = g.dr;
        let cur = self.history.latest();
        let prev = self.history.previous();
        let t = cur.t;
        let step = cur.step + 1;
        let t_new = self.history.time(step);
        let active = (self.history.active + 1).max(self.reach_index(t).max(self.reach_index(t_new))).min(n);
        let p = &self.system.params;
        let c2 = p.c * p.c;

        let coeffs: Result<Vec<(f64, f64)>, SolverError> =
            (0..active).into_par_iter().with_min_len(PAR_MIN).map(|i| self.coefficients(t, g.r[i], cur.u[i])).collect();
        let coeffs = coeffs?;

        let src_v = &self.system.source_v;
        let mut z_new = vec![0.0; n];
        z_new[..active].par_iter_mut().with_min_len(PAR_MIN).enumerate().for_each(|(i, out)| {
            let (a, b) = coeffs[i];
            let ri = g.r[i];
            let sv = if src_v.is_zero() { 0.0 } else { src_v.value(t, [ri, 0.0, 0.0]) };
            let rhs = a * (2.0 * cur.z[i] - prev.z[i]) / (dt * dt) + b * lap_odd(&cur.z, i, dr)
                - c2 * (2.0 * cur.z[i] + prev.z[i]) / 4.0
                + ri * sv;
            *out = rhs / (a / (dt * dt) + c2 / 4.0);
        });
        let v_new: Vec<f64> = z_new.iter().zip(&g.r).map(|(z, r)| z / r).collect();

        let src_u = &self.system.source_u;
        let mut w_new = vec![0.0; n];
        w_new[..active].par_iter_mut().with_min_len(PAR_MIN).enumerate().for_each(|(i, out)| {
            let ri = g.r[i];
            let vt = (v_new[i] - prev.v[i]) / (2.0 * dt);
            let vr = grad_even(&cur.v, i, dr);
            let su = if src_u.is_zero() { 0.0 } else { src_u.value(t, [ri, 0.0, 0.0]) };
            let rhs = p.p[0][0] * vt * vt + p.p[1][1] * vr * vr + p.r * cur.v[i] * cur.v[i] + su;
            *out = 2.0 * cur.w[i] - prev.w[i] + dt * dt * (lap_odd(&cur.w, i, dr) + ri * rhs);
        });

        let level = level_from(g, step, t_new, w_new, z_new);
        for i in 0..active {
            for val in [level.u[i], level.v[i]] {
                if !val.is_finite() || val.abs() > BLOW_UP_THRESHOLD {
                    return Err(SolverError::NonFinite { t: t_new, x: [g.r[i], 0.0, 0.0], value: val });
                }
            }
        }
        self.history.active = active;
        self.history.push(level);
        Ok(())
    }
}

/// `(f_{i+1} − 2f_i + f_{i−1})/Δr²` for an odd profile, zero beyond the last node.
pub(crate) fn lap_odd(f: &[f64], i: usize, dr: f64) -> f64 {
    let left = if i == 0 { -f[0] } else { f[i - 1] };
    let right = f.get(i + 1).copied().unwrap_or(0.0);
    (right - 2.0 * f[i] + left) / (dr * dr)
}

/// Centred `∂_r f` for an even profile, zero beyond the last node.
pub(crate) fn grad_even(f: &[f64], i: usize, dr: f64) -> f64 {
    let left = if i == 0 { f[0] } else { f[i - 1] };
    let right = f.get(i + 1).copied().unwrap_or(0.0);
    (right - left) / (2.0 * dr)
}
