//! Full three-dimensional leapfrog on a cube with homogeneous Dirichlet
//! boundary nodes. Data must stay compactly supported away from the faces.

use rayon::prelude::*;

use super::{GridMode, GridSpec, InitialData, SolverError, System, BLOW_UP_THRESHOLD, HYPERBOLICITY_LIMIT};
use crate::geometry::{FieldHistory, Lattice};

/// Fixed-point sweeps for the implicit `u H^{0a} ∂_t∂_a v` term.
const MIXED_SWEEPS: usize = 3;

/// Paired ring buffers of `u` and `v`.
#[derive(Debug, Clone)]
pub struct CartesianHistory {
    pub u: FieldHistory,
    pub v: FieldHistory,
}

impl CartesianHistory {
    pub fn lattice(&self) -> &Lattice {
        crate::geometry::Sampler::lattice(&self.u)
    }

    pub fn latest_step(&self) -> i64 {
        self.u.latest_step()
    }

    pub fn time(&self, step: i64) -> f64 {
        crate::geometry::Sampler::time(&self.u, step)
    }
}

/// Pointwise discrete operators shared by the stepper and the residual check.
pub(crate) struct Kernel<'a> {
    pub system: &'a System,
    pub lattice: &'a Lattice,
    pub dt: f64,
    stride: [usize; 3],
}

impl<'a> Kernel<'a> {
    pub fn new(system: &'a System, lattice: &'a Lattice, dt: f64) -> Self {
        let stride = [lattice.n[1] * lattice.n[2], lattice.n[2], 1];
        Kernel { system, lattice, dt, stride }
    }

    pub fn interior(&self, k: usize) -> bool {
        let i = self.lattice.unflat(k);
        (0..3).all(|a| i[a] > 0 && i[a] + 1 < self.lattice.n[a])
    }

    pub fn position(&self, k: usize) -> [f64; 3] {
        let i = self.lattice.unflat(k);
        self.lattice.coord([i[0] as i64, i[1] as i64, i[2] as i64])
    }

    fn d1(&self, f: &[f64], k: usize, a: usize) -> f64 {
        let s = self.stride[a];
        (f[k + s] - f[k - s]) / (2.0 * self.lattice.dx)
    }

    fn d2(&self, f: &[f64], k: usize, a: usize, b: usize) -> f64 {
        let h = self.lattice.dx;
        if a == b {
            let s = self.stride[a];
            (f[k + s] - 2.0 * f[k] + f[k - s]) / (h * h)
        } else {
            let (sa, sb) = (self.stride[a], self.stride[b]);
            (f[k + sa + sb] - f[k + sa - sb] - f[k - sa + sb] + f[k - sa - sb]) / (4.0 * h * h)
        }
    }

    fn laplacian(&self, f: &[f64], k: usize) -> f64 {
        (0..3).map(|a| self.d2(f, k, a, a)).sum()
    }

    /// `(A, ‖spatial principal part‖)`, with the hyperbolicity guard.
    fn principal(&self, t: f64, k: usize, u: f64) -> Result<(f64, f64), SolverError> {
        let p = &self.system.params;
        let x = self.position(k);
        let strength = u.abs() * p.h_norm();
        if strength >= HYPERBOLICITY_LIMIT {
            return Err(SolverError::HyperbolicityLoss { t, x, value: strength });
        }
        let h_ext = if self.system.metric.is_zero() { 0.0 } else { self.system.metric.value(t, x) };
        let a = 1.0 + u * p.h[0][0] + h_ext;
        let mut spatial = 0.0f64;
        for i in 1..4 {
            let row: f64 = (1..4).map(|j| ((i == j) as u8 as f64 - u * p.h[i][j]).abs()).sum();
            spatial = spatial.max(row);
        }
        if a <= 0.0 {
            return Err(SolverError::HyperbolicityLoss { t, x, value: strength });
        }
        Ok((a, spatial))
    }

    /// New `v` at node `k` given the other three levels; `vp` supplies the
    /// new level at neighbours for the mixed time-space term.
    pub fn v_plus(&self, t: f64, k: usize, u0: &[f64], vm: &[f64], v0: &[f64], vp: &[f64]) -> Result<f64, SolverError> {
        let p = &self.system.params;
        let dt = self.dt;
        let c2 = p.c * p.c;
        let u = u0[k];
        let (a, spatial) = self.principal(t, k, u)?;
        let courant = dt / self.lattice.dx * (3.0 * spatial / a).sqrt();
        if courant > 1.0 {
            return Err(SolverError::Cfl { courant, limit: 1.0 });
        }
        let lv = self.spatial_v(k, u, v0);
        let mut mixed = 0.0;
        if u != 0.0 {
            for i in 0..3 {
                let h0 = p.h[0][i + 1];
                if h0 != 0.0 {
                    mixed += u * h0 * (self.d1(vp, k, i) - self.d1(vm, k, i)) / dt;
                }
            }
        }
        let x = self.position(k);
        let sv = if self.system.source_v.is_zero() { 0.0 } else { self.system.source_v.value(t, x) };
        let rhs = a * (2.0 * v0[k] - vm[k]) / (dt * dt) + lv - c2 * (2.0 * v0[k] + vm[k]) / 4.0 - mixed + sv;
        Ok(rhs / (a / (dt * dt) + c2 / 4.0))
    }

    /// `Δv − u H^{ab}∂_a∂_b v`.
    fn spatial_v(&self, k: usize, u: f64, v0: &[f64]) -> f64 {
        let p = &self.system.params;
        let mut lv = self.laplacian(v0, k);
        if u != 0.0 {
            for i in 0..3 {
                for j in 0..3 {
                    let hij = p.h[i + 1][j + 1];
                    if hij != 0.0 {
                        lv -= u * hij * self.d2(v0, k, i, j);
                    }
                }
            }
        }
        lv
    }

    /// Coefficient multiplying the new centre value in the `v` equation.
    pub fn v_diag(&self, t: f64, k: usize, u: f64) -> Result<f64, SolverError> {
        let (a, _) = self.principal(t, k, u)?;
        let c = self.system.params.c;
        Ok(a / (self.dt * self.dt) + c * c / 4.0)
    }

    /// Right side of `−□u` at node `k` using the centred `∂_t v` from `vm`, `vp`.
    pub fn u_source(&self, t: f64, k: usize, vm: &[f64], v0: &[f64], vp: &[f64]) -> f64 {
        let p = &self.system.params;
        let mut dv = [0.0; 4];
        dv[0] = (vp[k] - vm[k]) / (2.0 * self.dt);
        for a in 0..3 {
            dv[a + 1] = self.d1(v0, k, a);
        }
        let mut q = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                q += p.p[al][be] * dv[al] * dv[be];
            }
        }
        let su = if self.system.source_u.is_zero() { 0.0 } else { self.system.source_u.value(t, self.position(k)) };
        q + p.r * v0[k] * v0[k] + su
    }

    pub fn u_plus(&self, t: f64, k: usize, um: &[f64], u0: &[f64], vm: &[f64], v0: &[f64], vp: &[f64]) -> f64 {
        let dt = self.dt;
        2.0 * u0[k] - um[k] + dt * dt * (self.laplacian(u0, k) + self.u_source(t, k, vm, v0, vp))
    }

    fn has_mixed(&self) -> bool {
        (1..4).any(|a| self.system.params.h[0][a] != 0.0)
    }

    /// Full new level `(u+, v+)`.
    pub fn advance(
        &self,
        t: f64,
        um: &[f64],
        u0: &[f64],
        vm: &[f64],
        v0: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let n = self.lattice.len();
        // first guess: mixed term with v+ ≈ 2v − v−
        let mut guess: Vec<f64> = (0..n).into_par_iter().map(|k| 2.0 * v0[k] - vm[k]).collect();
        let sweeps = if self.has_mixed() { MIXED_SWEEPS } else { 1 };
        let mut vp = vec![0.0; n];
        for _ in 0..sweeps {
            let next: Result<Vec<f64>, SolverError> = (0..n)
                .into_par_iter()
                .map(|k| if self.interior(k) { self.v_plus(t, k, u0, vm, v0, &guess) } else { Ok(0.0) })
                .collect();
            vp = next?;
            guess.clone_from(&vp);
        }
        let up: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| if self.interior(k) { self.u_plus(t, k, um, u0, vm, v0, &vp) } else { 0.0 })
            .collect();
        Ok((up, vp))
    }
}

/// Stepper for the full 3D system.
#[derive(Debug, Clone)]
pub struct CartesianSolver {
    pub system: System,
    pub spec: GridSpec,
    history: CartesianHistory,
}

impl CartesianSolver {
    pub fn new(system: System, spec: GridSpec, data: &InitialData, capacity: usize) -> Result<Self, SolverError> {
        spec.validate()?;
        if spec.mode != GridMode::Full3d {
            return Err(SolverError::InvalidParams("cartesian solver needs a full-3d grid".into()));
        }
        system.params.validate()?;
        let lattice = Lattice::cube(spec.extent, spec.dx);
        if data.support_radius + 2.0 * spec.dx >= lattice.origin[0].abs() {
            return Err(SolverError::InvalidData(format!(
                "support radius {} does not fit inside the cube of half-width {}",
                data.support_radius,
                lattice.origin[0].abs()
            )));
        }
        let dt = spec.dt();
        let t0 = data.t_init;
        let n = lattice.len();
        let kernel = Kernel::new(&system, &lattice, dt);
        let sample = |e: &crate::expr::Expr| -> Vec<f64> {
            (0..n).into_par_iter().map(|k| if kernel.interior(k) { e.value(t0, kernel.position(k)) } else { 0.0 }).collect()
        };
        let (u0, u1, v0, v1) = (sample(&data.u0), sample(&data.u1), sample(&data.v0), sample(&data.v1));
        // Backward Taylor level: solve the equations at t0 for the second time
        // derivatives, using v_t from the data for the mixed and quadratic terms.
        let vm_lin: Vec<f64> = (0..n).map(|k| v0[k] - dt * v1[k]).collect();
        let vp_lin: Vec<f64> = (0..n).map(|k| v0[k] + dt * v1[k]).collect();
        let mut um = vec![0.0; n];
        let mut vm = vec![0.0; n];
        for k in 0..n {
            if !kernel.interior(k) {
                continue;
            }
            let (a, _) = kernel.principal(t0, k, u0[k])?;
            let c2 = system.params.c * system.params.c;
            let mixed: f64 = (0..3).map(|i| 2.0 * u0[k] * system.params.h[0][i + 1] * kernel.d1(&v1, k, i)).sum();
            let sv = if system.source_v.is_zero() { 0.0 } else { system.source_v.value(t0, kernel.position(k)) };
            let v_tt = (kernel.spatial_v(k, u0[k], &v0) - c2 * v0[k] - mixed + sv) / a;
            let u_tt = kernel.laplacian(&u0, k) + kernel.u_source(t0, k, &vm_lin, &v0, &vp_lin);
            um[k] = u0[k] - dt * u1[k] + 0.5 * dt * dt * u_tt;
            vm[k] = v0[k] - dt * v1[k] + 0.5 * dt * dt * v_tt;
        }
        let cap = capacity.max(4);
        let mut hu = FieldHistory::new(lattice.clone(), dt, t0, -1, cap);
        let mut hv = FieldHistory::new(lattice.clone(), dt, t0, -1, cap);
        hu.push(um);
        hu.push(u0);
        hv.push(vm);
        hv.push(v0);
        Ok(CartesianSolver { history: CartesianHistory { u: hu, v: hv }, system, spec })
    }

    pub fn history(&self) -> &CartesianHistory {
        &self.history
    }

    pub fn t(&self) -> f64 {
        self.history.time(self.history.latest_step())
    }

    pub fn step(&mut self) -> Result<(), SolverError> {
        let step = self.history.latest_step();
        let t = self.history.time(step);
        let lattice = self.history.lattice().clone();
        let kernel = Kernel::new(&self.system, &lattice, self.spec.dt());
        let h = &self.history;
        let (up, vp) = kernel.advance(
            t,
            h.u.level(step - 1).expect("two levels"),
            h.u.level(step).expect("two levels"),
            h.v.level(step - 1).expect("two levels"),
            h.v.level(step).expect("two levels"),
        )?;
        let t_new = h.time(step + 1);
        for (k, (a, b)) in up.iter().zip(&vp).enumerate() {
            for val in [*a, *b] {
                if !val.is_finite() || val.abs() > BLOW_UP_THRESHOLD {
                    return Err(SolverError::NonFinite { t: t_new, x: kernel.position(k), value: val });
                }
            }
        }
        self.history.u.push(up);
        self.history.v.push(vp);
        Ok(())
    }
}
