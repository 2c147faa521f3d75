//! Energy and sup-norm tables for spherically symmetric runs.
//!
//! A radial run cannot carry general `∂^I L^J w`, but it carries the
//! highest-weight members exactly: with `ζ = x¹ + i x²`,
//! `∂_t^{i_t} (∂_1 + i∂_2)^{i_r} (L_1 + iL_2)^k w = g(t, r) (ζ/r)^ℓ`,
//! `ℓ = i_r + k`, where the profile `g` obeys
//!
//! ```text
//! L⁺:  g ↦ r ∂_t g + t ∂_r g − ℓ (t/r) g      (ℓ → ℓ + 1)
//! ∂⁺:  g ↦ ∂_r g − ℓ g / r                     (ℓ → ℓ + 1)
//! ∂_t: g ↦ ∂_t g                               (ℓ unchanged)
//! ```
//!
//! Each profile solves the degree-ℓ radial reduction of the same linear
//! equation, so its hyperboloidal energy is conserved for free fields.
//!
//! The stored quantity is the regular part `G = g / r^ℓ`, a smooth even
//! function of `r`, for which the raisings read
//!
//! ```text
//! L⁺:  G ↦ ∂_t G + t ∂_r G / r
//! ∂⁺:  G ↦ ∂_r G / r
//! ```
//!
//! Profiles are computed level by level as the run proceeds; a profile that
//! needs `j` time differentiations is available `j` steps behind the solver.

use std::collections::VecDeque;

use serde::Serialize;

use super::{AnalysisError, EnergyRecord, FieldId, SupNormRecord};
use crate::geometry::lagrange4;
use crate::solver::{History, Observer, RadialGrid, RadialHistory};

/// `(i_t, i_r, k)`: time derivatives, radial raisings, boost raisings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MultiIndex {
    pub it: u32,
    pub ir: u32,
    pub k: u32,
}

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex { it: 0, ir: 0, k: 0 };

    pub fn new(it: u32, ir: u32, k: u32) -> Self {
        MultiIndex { it, ir, k }
    }

    pub fn order(&self) -> u32 {
        self.it + self.ir + self.k
    }

    /// `|I|`.
    pub fn partial_order(&self) -> u32 {
        self.it + self.ir
    }

    pub fn ell(&self) -> u32 {
        self.ir + self.k
    }

    /// Steps behind the solver.
    pub fn lag(&self) -> i64 {
        (self.it + self.k) as i64
    }

    /// Boosts are applied first, then radial raisings, then time derivatives.
    fn parent(&self) -> Option<(MultiIndex, Raise)> {
        if self.it > 0 {
            Some((MultiIndex { it: self.it - 1, ..*self }, Raise::Time))
        } else if self.ir > 0 {
            Some((MultiIndex { ir: self.ir - 1, ..*self }, Raise::Radial))
        } else if self.k > 0 {
            Some((MultiIndex { k: self.k - 1, ..*self }, Raise::Boost))
        } else {
            None
        }
    }

    /// All indices with order at most `n`, sorted by order.
    pub fn all(n: u32) -> Vec<MultiIndex> {
        let mut v = Vec::new();
        for o in 0..=n {
            for it in 0..=o {
                for ir in 0..=o - it {
                    v.push(MultiIndex::new(it, ir, o - it - ir));
                }
            }
        }
        v
    }

    /// Compact label `t<i_t>r<i_r>` for the partial part.
    pub fn i_label(&self) -> String {
        format!("t{}r{}", self.it, self.ir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Raise {
    Time,
    Radial,
    Boost,
}

/// `⨍_{S²} |ζ/r|^{2ℓ} = 4^ℓ (ℓ!)² / (2ℓ + 1)!`.
pub fn c_ell(ell: u32) -> f64 {
    let mut c = 1.0;
    for j in 1..=ell {
        c *= (2 * j) as f64 / (2 * j + 1) as f64;
    }
    c
}

/// What a sup-norm line measures at a slice point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupKind {
    /// `|g|`
    Value,
    /// `|⊥g|`, `⊥ = ∂_t + (r/t)∂_r`
    Perp,
    /// `|g| + (t/s)|⊥g|`
    ValuePlusPerp,
}

/// A requested weighted sup `sup (t/s)^p t^q |·|` for one profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupSpec {
    pub field: FieldId,
    pub index: MultiIndex,
    pub kind: SupKind,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone)]
struct Node {
    field: FieldId,
    index: MultiIndex,
    parent: Option<(usize, Raise)>,
    first_step: Option<i64>,
    levels: VecDeque<Vec<f64>>,
}

impl Node {
    fn latest(&self) -> Option<i64> {
        self.first_step.map(|f| f + self.levels.len() as i64 - 1)
    }

    fn oldest(&self) -> Option<i64> {
        self.first_step
    }

    fn level(&self, step: i64) -> Option<&[f64]> {
        let f = self.first_step?;
        if step < f {
            return None;
        }
        self.levels.get((step - f) as usize).map(|v| v.as_slice())
    }

    fn push(&mut self, step: i64, data: Vec<f64>, depth: usize) {
        match self.latest() {
            None => self.first_step = Some(step),
            Some(l) => assert_eq!(l + 1, step, "levels must be consecutive"),
        }
        if self.levels.len() == depth {
            self.levels.pop_front();
            self.first_step = self.first_step.map(|f| f + 1);
        }
        self.levels.push_back(data);
    }
}

struct SliceTask {
    s: f64,
    /// Grid indices of the chart nodes, increasing in `r` (and `t`).
    nodes: Vec<usize>,
    t: Vec<f64>,
    cursor: Vec<usize>,
    energy: Vec<f64>,
    /// One entry per sup spec.
    sup: Vec<f64>,
}

const RING: usize = 7;

/// Observer building energy and weighted sup-norm tables of the radial
/// derivative family on a list of hyperboloids.
pub struct RadialRecorder {
    n: u32,
    mass_v: f64,
    grid: Option<RadialGrid>,
    dt: f64,
    t_origin: f64,
    nodes: Vec<Node>,
    base_step: Option<i64>,
    s_list: Vec<f64>,
    cone_margin: f64,
    support_offset: f64,
    tasks: Vec<SliceTask>,
    sup_specs: Vec<SupSpec>,
    /// Sup specs per node.
    node_sups: Vec<Vec<usize>>,
}

/// Tables produced by a [`RadialRecorder`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticTables {
    pub energies: Vec<EnergyRecord>,
    pub sups: Vec<SupNormRecord>,
}

impl DiagnosticTables {
    pub fn energy_series(&self, field: FieldId, index: MultiIndex) -> Vec<(f64, f64)> {
        self.energies.iter().filter(|e| e.field == field && e.index == index).map(|e| (e.s, e.value)).collect()
    }

    pub fn sup_series(&self, spec: &SupSpec) -> Vec<(f64, f64)> {
        self.sups
            .iter()
            .filter(|r| r.field == spec.field && r.index == spec.index && r.kind == spec.kind && r.p == spec.p && r.q == spec.q)
            .map(|r| (r.s, r.value))
            .collect()
    }
}

impl RadialRecorder {
    /// Profiles of both fields up to order `n`, energies on each `s` in
    /// `s_list`. Charts keep nodes with `r ≤ t − 1 − cone_margin` and
    /// `t − r ≥ support_offset` (the solution vanishes closer to the cone).
    pub fn new(n: u32, mass_v: f64, s_list: &[f64], cone_margin: f64, support_offset: f64, sup_specs: Vec<SupSpec>) -> Self {
        let mut nodes = Vec::new();
        for field in [FieldId::U, FieldId::V] {
            let base = nodes.len();
            let all = MultiIndex::all(n);
            for idx in &all {
                let parent = idx.parent().map(|(p, r)| (base + all.iter().position(|q| *q == p).expect("closed"), r));
                nodes.push(Node { field, index: *idx, parent, first_step: None, levels: VecDeque::new() });
            }
        }
        let node_sups = nodes
            .iter()
            .map(|nd| {
                sup_specs
                    .iter()
                    .enumerate()
                    .filter(|(_, sp)| sp.field == nd.field && sp.index == nd.index)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        RadialRecorder {
            n,
            mass_v,
            grid: None,
            dt: 0.0,
            t_origin: 0.0,
            nodes,
            base_step: None,
            s_list: s_list.to_vec(),
            cone_margin,
            support_offset,
            tasks: Vec::new(),
            sup_specs,
            node_sups,
        }
    }

    pub fn order(&self) -> u32 {
        self.n
    }

    /// Extra time beyond the slice coverage needed by the most lagged profile.
    pub fn lag_time(&self, dt: f64) -> f64 {
        let lag = self.nodes.iter().map(|n| n.index.lag()).max().unwrap_or(0);
        (lag + 5) as f64 * dt
    }

    fn init(&mut self, h: &RadialHistory) {
        let grid = h.grid.clone();
        self.dt = h.dt;
        self.t_origin = h.t_origin;
        let nsup = self.sup_specs.len();
        self.tasks = self
            .s_list
            .iter()
            .map(|&s| {
                let mut nodes = Vec::new();
                let mut ts = Vec::new();
                for (i, &r) in grid.r.iter().enumerate() {
                    let t = (s * s + r * r).sqrt();
                    if r <= t - 1.0 - self.cone_margin && t - r >= self.support_offset {
                        nodes.push(i);
                        ts.push(t);
                    }
                }
                let nn = self.nodes.len();
                SliceTask { s, nodes, t: ts, cursor: vec![0; nn], energy: vec![0.0; nn], sup: vec![0.0; nsup] }
            })
            .collect();
        self.grid = Some(grid);
    }

    fn ingest(&mut self, h: &RadialHistory) {
        let from = self.base_step.map(|b| b + 1).unwrap_or(h.oldest_step());
        for step in from.max(h.oldest_step())..=h.latest_step() {
            let lvl = h.level(step).expect("stored");
            let (iu, iv) = (0, self.nodes.len() / 2);
            self.nodes[iu].push(step, lvl.u.clone(), RING);
            self.nodes[iv].push(step, lvl.v.clone(), RING);
            self.base_step = Some(step);
            self.derive();
        }
    }

    /// Brings every profile up to date in topological order.
    fn derive(&mut self) {
        let grid = self.grid.as_ref().expect("initialised");
        let dt = self.dt;
        let dr = grid.dr;
        for k in 0..self.nodes.len() {
            let Some((pi, raise)) = self.nodes[k].parent else { continue };
            loop {
                let next = match self.nodes[k].latest() {
                    Some(l) => l + 1,
                    None => match self.nodes[pi].oldest() {
                        Some(o) => o + if raise == Raise::Radial { 0 } else { 1 },
                        None => break,
                    },
                };
                let parent = &self.nodes[pi];
                let t = self.t_origin + next as f64 * dt;
                let data: Vec<f64> = match raise {
                    Raise::Radial => match parent.level(next) {
                        Some(g) => (0..g.len()).map(|i| grad(g, i, dr) / grid.r[i]).collect(),
                        None => break,
                    },
                    Raise::Time | Raise::Boost => match (parent.level(next - 1), parent.level(next), parent.level(next + 1)) {
                        (Some(gm), Some(g), Some(gp)) => (0..g.len())
                            .map(|i| {
                                let gt = (gp[i] - gm[i]) / (2.0 * dt);
                                if raise == Raise::Time {
                                    gt
                                } else {
                                    gt + t * grad(g, i, dr) / grid.r[i]
                                }
                            })
                            .collect(),
                        _ => break,
                    },
                };
                self.nodes[k].push(next, data, RING);
            }
        }
    }

    /// Processes every slice point whose interpolation stencil is now stored.
    fn sample(&mut self) -> Result<(), String> {
        let grid = self.grid.as_ref().expect("initialised");
        let (dt, t0, dr) = (self.dt, self.t_origin, grid.dr);
        for task in &mut self.tasks {
            let s = task.s;
            for (k, node) in self.nodes.iter().enumerate() {
                let (Some(lo), Some(hi)) = (node.oldest(), node.latest()) else { continue };
                let ell = node.index.ell();
                let ellf = ell as f64;
                let mass = if node.field == FieldId::V { self.mass_v } else { 0.0 };
                let cl = c_ell(ell);
                while task.cursor[k] < task.nodes.len() {
                    let j = task.cursor[k];
                    let (i, t) = (task.nodes[j], task.t[j]);
                    let n0 = ((t - t0) / dt).floor() as i64;
                    if n0 + 3 > hi {
                        break;
                    }
                    if n0 - 2 < lo {
                        return Err(format!(
                            "slice s={s} needs level {} of profile {:?}/{:?}, oldest stored is {lo}",
                            n0 - 2,
                            node.field,
                            node.index
                        ));
                    }
                    let steps = [n0 - 1, n0, n0 + 1, n0 + 2];
                    let w = lagrange4(steps.map(|m| t0 + m as f64 * dt), t);
                    let (mut g, mut gt, mut gr) = (0.0, 0.0, 0.0);
                    for (m, wm) in steps.iter().zip(w) {
                        let f = node.level(*m).expect("in ring");
                        g += wm * f[i];
                        gr += wm * grad(f, i, dr);
                        gt += wm * (node.level(m + 1).expect("in ring")[i] - node.level(m - 1).expect("in ring")[i]) / (2.0 * dt);
                    }
                    let r = grid.r[i];
                    let rl = r.powi(ell as i32);
                    let (g, gt, gr) = (rl * g, rl * gt, rl * (gr + ellf * g / r));
                    let dens = (s / t * gt).powi(2)
                        + (r / t * gt + gr).powi(2)
                        + ellf * (ellf + 1.0) * (g / r).powi(2)
                        + mass * mass * g * g;
                    task.energy[k] += cl * dens * 4.0 * std::f64::consts::PI * r * r * dr;
                    let perp = gt + r / t * gr;
                    for &q in &self.node_sups[k] {
                        let sp = &self.sup_specs[q];
                        let val = match sp.kind {
                            SupKind::Value => g.abs(),
                            SupKind::Perp => perp.abs(),
                            SupKind::ValuePlusPerp => g.abs() + t / s * perp.abs(),
                        };
                        let weighted = (t / s).powf(sp.p) * t.powf(sp.q) * val;
                        task.sup[q] = task.sup[q].max(weighted);
                    }
                    task.cursor[k] += 1;
                }
            }
        }
        Ok(())
    }

    /// True once every slice point of every profile has been processed.
    pub fn complete(&self) -> bool {
        self.tasks.iter().all(|t| t.cursor.iter().all(|&c| c == t.nodes.len()))
    }

    pub fn finish(&self) -> Result<DiagnosticTables, AnalysisError> {
        if !self.complete() {
            let missing: Vec<f64> =
                self.tasks.iter().filter(|t| t.cursor.iter().any(|&c| c < t.nodes.len())).map(|t| t.s).collect();
            return Err(AnalysisError::Coverage(format!("slices not fully covered: {missing:?}")));
        }
        let mut out = DiagnosticTables::default();
        for task in &self.tasks {
            for (k, node) in self.nodes.iter().enumerate() {
                out.energies.push(EnergyRecord { field: node.field, index: node.index, s: task.s, value: task.energy[k].sqrt() });
            }
            for (q, sp) in self.sup_specs.iter().enumerate() {
                out.sups.push(SupNormRecord {
                    field: sp.field,
                    index: sp.index,
                    kind: sp.kind,
                    p: sp.p,
                    q: sp.q,
                    s: task.s,
                    value: task.sup[q],
                });
            }
        }
        Ok(out)
    }
}

impl Observer for RadialRecorder {
    fn observe(&mut self, history: History<'_>) -> Result<(), String> {
        let History::Radial(h) = history else {
            return Err("the radial recorder needs a radial run".into());
        };
        if self.grid.is_none() {
            self.init(h);
        }
        self.ingest(h);
        self.sample()
    }
}

/// Centred `∂_r` of an even profile, zero beyond the grid.
fn grad(f: &[f64], i: usize, dr: f64) -> f64 {
    let left = if i == 0 { f[0] } else { f[i - 1] };
    let right = f.get(i + 1).copied().unwrap_or(0.0);
    (right - left) / (2.0 * dr)
}

/// `sup |u|`, `sup |v|` over the flat level nearest each requested time,
/// restricted to `t − r ≥ offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatSupRecord {
    pub t: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    /// `r` where `|u|` peaks.
    pub r_u: f64,
}

pub struct FlatSupRecorder {
    times: Vec<f64>,
    offset: f64,
    next: usize,
    pub records: Vec<FlatSupRecord>,
}

impl FlatSupRecorder {
    pub fn new(times: &[f64], offset: f64) -> Self {
        let mut times = times.to_vec();
        times.sort_by(f64::total_cmp);
        FlatSupRecorder { times, offset, next: 0, records: Vec::new() }
    }

    pub fn complete(&self) -> bool {
        self.next == self.times.len()
    }
}

impl Observer for FlatSupRecorder {
    fn observe(&mut self, history: History<'_>) -> Result<(), String> {
        let History::Radial(h) = history else {
            return Err("flat sup recorder needs a radial run".into());
        };
        let lvl = h.latest();
        while self.next < self.times.len() && lvl.t >= self.times[self.next] - 0.5 * h.dt {
            let mut rec = FlatSupRecord { t: lvl.t, sup_u: 0.0, sup_v: 0.0, r_u: 0.0 };
            for (i, &r) in h.grid.r.iter().enumerate() {
                if lvl.t - r < self.offset {
                    break;
                }
                if lvl.u[i].abs() > rec.sup_u {
                    rec.sup_u = lvl.u[i].abs();
                    rec.r_u = r;
                }
                rec.sup_v = rec.sup_v.max(lvl.v[i].abs());
            }
            self.records.push(rec);
            self.next += 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::solver::{evolve_to_time, GridSpec, InitialData, ModelParams, System};

    #[test]
    fn index_family() {
        let all = MultiIndex::all(8);
        assert_eq!(all.len(), 165);
        assert_eq!(MultiIndex::new(1, 2, 3).ell(), 5);
        assert_eq!(MultiIndex::new(1, 2, 3).lag(), 4);
        assert_eq!(MultiIndex::new(1, 2, 3).parent().unwrap().0, MultiIndex::new(0, 2, 3));
        assert_eq!(MultiIndex::new(0, 2, 3).parent().unwrap().0, MultiIndex::new(0, 1, 3));
        assert_eq!(MultiIndex::new(0, 0, 3).parent().unwrap().0, MultiIndex::new(0, 0, 2));
        assert!((c_ell(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c_ell(2) - 8.0 / 15.0).abs() < 1e-15);
    }

    /// `w = t r²` pushed through the raising operators and compared with the
    /// hand-computed profiles.
    #[test]
    fn raising_operators_match_cartesian_action() {
        // w = t·r² = t(x1² + x2² + x3²). (L1 + iL2) w = ζ(r² + 2t²) so
        // G = r² + 2t² at ℓ = 1; (∂1 + i∂2) w = 2tζ so G = 2t.
        let dt = 0.01;
        let grid = RadialGrid::new(3.0, 0.01);
        let t0 = 2.0;
        let f = |t: f64, r: f64| t * r * r;
        let mut rec = RadialRecorder::new(1, 1.0, &[], 0.0, 1.0, vec![]);
        rec.grid = Some(grid.clone());
        rec.dt = dt;
        rec.t_origin = t0;
        let iu = 0;
        for step in -1..=3 {
            let t = t0 + step as f64 * dt;
            rec.nodes[iu].push(step, grid.r.iter().map(|&r| f(t, r)).collect(), RING);
        }
        rec.derive();
        let find = |idx: MultiIndex| rec.nodes.iter().position(|n| n.field == FieldId::U && n.index == idx).unwrap();
        let boost = &rec.nodes[find(MultiIndex::new(0, 0, 1))];
        let step = 1;
        let t = t0 + step as f64 * dt;
        let g = boost.level(step).unwrap();
        for (i, &r) in grid.r.iter().enumerate().skip(1).take(200) {
            assert!((g[i] - (r * r + 2.0 * t * t)).abs() < 1e-9, "{} vs {}", g[i], r * r + 2.0 * t * t);
        }
        let rad = &rec.nodes[find(MultiIndex::new(0, 1, 0))];
        let g = rad.level(step).unwrap();
        for g in g.iter().take(200) {
            assert!((g - 2.0 * t).abs() < 1e-9);
        }
        let tim = &rec.nodes[find(MultiIndex::new(1, 0, 0))];
        let g = tim.level(step).unwrap();
        for (i, &r) in grid.r.iter().enumerate().take(200) {
            assert!((g[i] - r * r).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_run_gives_zero_tables() {
        let spec = SupSpec { field: FieldId::V, index: MultiIndex::ZERO, kind: SupKind::Value, p: 0.0, q: 1.5 };
        let mut rec = RadialRecorder::new(2, 1.0, &[4.0, 5.0], 0.04, 1.0, vec![spec]);
        let grid = GridSpec::radial(20.0, 0.05, 0.5);
        let until = crate::solver::slice_time_needed(5.0, 1.0) + rec.lag_time(grid.dt());
        let r = evolve_to_time(System::model(ModelParams::default()), &grid, &InitialData::zero(3.0), until, 4, &mut [&mut rec]);
        assert!(r.ok());
        let tab = rec.finish().unwrap();
        assert_eq!(tab.energies.len(), 2 * 2 * 10);
        assert!(tab.energies.iter().all(|e| e.value == 0.0));
        assert!(tab.sups.iter().all(|e| e.value == 0.0));
    }

    fn worst_energy_drift(dr: f64) -> f64 {
        let grid = GridSpec::radial(30.0, dr, 0.5);
        let data = InitialData { v0: Expr::constant(0.0), ..InitialData::bumps(3.0, 1.0, 0.0, 1.5) };
        let s_list = [3.5, 5.0, 7.0];
        let mut rec = RadialRecorder::new(2, 1.0, &s_list, 0.04, 1.3, vec![]);
        let until = crate::solver::slice_time_needed(7.0, 1.3) + rec.lag_time(grid.dt());
        let r = evolve_to_time(System::model(ModelParams::free(1.0)), &grid, &data, until, 4, &mut [&mut rec]);
        assert!(r.ok(), "{r:?}");
        let tab = rec.finish().unwrap();
        let mut worst: f64 = 0.0;
        for idx in MultiIndex::all(2) {
            let series = tab.energy_series(FieldId::U, idx);
            let e0 = series[0].1;
            assert!(e0 > 0.0);
            for (_, e) in &series {
                worst = worst.max(((e - e0) / e0).abs());
            }
        }
        worst
    }

    #[test]
    fn free_wave_energies_are_conserved() {
        let coarse = worst_energy_drift(0.02);
        let fine = worst_energy_drift(0.01);
        assert!(fine < 1e-2, "{fine}");
        assert!(coarse / fine > 2.0, "{coarse} vs {fine}");
    }
}
