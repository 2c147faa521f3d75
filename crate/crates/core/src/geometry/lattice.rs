use std::collections::VecDeque;
use std::ops::Range;

use rayon::prelude::*;

use super::GeometryError;

/// Uniform Cartesian node lattice in three space dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub n: [usize; 3],
    pub origin: [f64; 3],
    pub dx: f64,
}

impl Lattice {
    /// Nodes at `−half_width + i·dx` on each axis, symmetric about the origin.
    pub fn cube(half_width: f64, dx: f64) -> Self {
        let cells = (2.0 * half_width / dx).round() as usize;
        let h = cells as f64 * dx / 2.0;
        Lattice { n: [cells + 1; 3], origin: [-h; 3], dx }
    }

    /// Lattice centred at `center` with `2·half_cells + 1` nodes per axis.
    pub fn centered(center: [f64; 3], half_cells: usize, dx: f64) -> Self {
        let h = half_cells as f64 * dx;
        Lattice {
            n: [2 * half_cells + 1; 3],
            origin: [center[0] - h, center[1] - h, center[2] - h],
            dx,
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.n[1] + idx[1]) * self.n[2] + idx[2]
    }

    pub fn unflat(&self, k: usize) -> [usize; 3] {
        let i2 = k % self.n[2];
        let rest = k / self.n[2];
        [rest / self.n[1], rest % self.n[1], i2]
    }

    pub fn coord(&self, idx: [i64; 3]) -> [f64; 3] {
        [
            self.origin[0] + idx[0] as f64 * self.dx,
            self.origin[1] + idx[1] as f64 * self.dx,
            self.origin[2] + idx[2] as f64 * self.dx,
        ]
    }

    pub fn contains(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.n[a])
    }

    pub fn full_range(&self) -> [Range<i64>; 3] {
        [0..self.n[0] as i64, 0..self.n[1] as i64, 0..self.n[2] as i64]
    }
}

/// A lattice node at a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub step: i64,
    pub idx: [i64; 3],
}

impl GridPoint {
    pub fn new(step: i64, idx: [i64; 3]) -> Self {
        GridPoint { step, idx }
    }

    fn shift_t(self, k: i64) -> Self {
        GridPoint { step: self.step + k, ..self }
    }

    fn shift_x(self, axis: usize, k: i64) -> Self {
        let mut idx = self.idx;
        idx[axis] += k;
        GridPoint { idx, ..self }
    }
}

/// Read access to a scalar field sampled on lattice nodes at uniformly spaced times.
pub trait Sampler: Sync {
    fn lattice(&self) -> &Lattice;
    fn dt(&self) -> f64;
    fn time(&self, step: i64) -> f64;
    fn sample(&self, p: GridPoint) -> Result<f64, GeometryError>;
}

/// Ring of consecutive time levels of one scalar field on a [`Lattice`].
///
/// Level `step` sits at `t = t_origin + step·dt`. Nodes outside `valid` are
/// treated as unavailable by [`Sampler::sample`].
#[derive(Debug, Clone)]
pub struct FieldHistory {
    lattice: Lattice,
    dt: f64,
    t_origin: f64,
    first_step: i64,
    levels: VecDeque<Vec<f64>>,
    capacity: usize,
    valid: [Range<i64>; 3],
}

impl FieldHistory {
    pub fn new(lattice: Lattice, dt: f64, t_origin: f64, first_step: i64, capacity: usize) -> Self {
        let valid = lattice.full_range();
        FieldHistory {
            lattice,
            dt,
            t_origin,
            first_step,
            levels: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            valid,
        }
    }

    /// Samples a closed-form field on every node of the given steps.
    pub fn from_fn<F>(lattice: Lattice, dt: f64, t_origin: f64, steps: Range<i64>, f: F) -> Self
    where
        F: Fn(f64, [f64; 3]) -> f64 + Sync,
    {
        let mut h = FieldHistory::new(lattice, dt, t_origin, steps.start, (steps.end - steps.start) as usize);
        for step in steps {
            let t = h.time(step);
            let lat = &h.lattice;
            let data: Vec<f64> = (0..lat.len())
                .into_par_iter()
                .map(|k| {
                    let i = lat.unflat(k);
                    f(t, lat.coord([i[0] as i64, i[1] as i64, i[2] as i64]))
                })
                .collect();
            h.push(data);
        }
        h
    }

    /// Appends the next time level, evicting the oldest when at capacity.
    pub fn push(&mut self, data: Vec<f64>) {
        assert_eq!(data.len(), self.lattice.len(), "level size mismatch");
        if self.levels.len() == self.capacity {
            self.levels.pop_front();
            self.first_step += 1;
        }
        self.levels.push_back(data);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn oldest_step(&self) -> i64 {
        self.first_step
    }

    pub fn latest_step(&self) -> i64 {
        self.first_step + self.levels.len() as i64 - 1
    }

    pub fn steps(&self) -> Range<i64> {
        self.first_step..self.first_step + self.levels.len() as i64
    }

    pub fn t_origin(&self) -> f64 {
        self.t_origin
    }

    pub fn level(&self, step: i64) -> Option<&[f64]> {
        if step < self.first_step {
            return None;
        }
        self.levels.get((step - self.first_step) as usize).map(|v| v.as_slice())
    }

    pub fn latest(&self) -> Option<&[f64]> {
        self.levels.back().map(|v| v.as_slice())
    }

    pub fn valid(&self) -> &[Range<i64>; 3] {
        &self.valid
    }

    /// Applies a pointwise operator to every node and step where its stencil
    /// is available; the result's valid region shrinks by `reach` nodes.
    pub fn materialize<S: Sampler + ?Sized>(
        src: &S,
        steps: Range<i64>,
        reach: i64,
        valid: &[Range<i64>; 3],
        op: impl Fn(&S, GridPoint) -> Result<f64, GeometryError> + Sync,
    ) -> FieldHistory {
        let lattice = src.lattice().clone();
        let mut out = FieldHistory::new(
            lattice.clone(),
            src.dt(),
            src.time(0),
            steps.start,
            (steps.end - steps.start).max(1) as usize,
        );
        out.valid = [
            valid[0].start + reach..valid[0].end - reach,
            valid[1].start + reach..valid[1].end - reach,
            valid[2].start + reach..valid[2].end - reach,
        ];
        for step in steps {
            let data: Vec<f64> = (0..lattice.len())
                .into_par_iter()
                .map(|k| {
                    let i = lattice.unflat(k);
                    let idx = [i[0] as i64, i[1] as i64, i[2] as i64];
                    if (0..3).all(|a| out.valid[a].contains(&idx[a])) {
                        op(src, GridPoint::new(step, idx)).unwrap_or(f64::NAN)
                    } else {
                        0.0
                    }
                })
                .collect();
            out.push(data);
        }
        out
    }
}

impl Sampler for FieldHistory {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn time(&self, step: i64) -> f64 {
        self.t_origin + step as f64 * self.dt
    }

    fn sample(&self, p: GridPoint) -> Result<f64, GeometryError> {
        let inside = (0..3).all(|a| self.valid[a].contains(&p.idx[a]));
        let level = if inside { self.level(p.step) } else { None };
        match level {
            Some(data) => {
                let v = data[self.lattice.flat([p.idx[0] as usize, p.idx[1] as usize, p.idx[2] as usize])];
                if v.is_nan() {
                    Err(GeometryError::StencilOutOfRange { step: p.step, idx: p.idx })
                } else {
                    Ok(v)
                }
            }
            None => Err(GeometryError::StencilOutOfRange { step: p.step, idx: p.idx }),
        }
    }
}

/// Discrete first-order vector-field operators of the semi-hyperboloidal calculus.
/// Spatial axes are numbered 1..=3 as in `x^a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// ∂_μ, μ = 0 for time.
    Partial(usize),
    /// ∂_μ∂_μ with the compact three-point stencil.
    Second(usize),
    /// L_a = x_a ∂_t + t ∂_a.
    Boost(usize),
    /// ∂̄_a = L_a / t.
    FrameTangent(usize),
    /// ⊥ = ∂_t + (x^a/t) ∂_a.
    Perp,
}

impl Op {
    /// Maximal stencil displacement in time and in space.
    pub fn reach(&self) -> (i64, i64) {
        match self {
            Op::Partial(0) | Op::Second(0) => (1, 0),
            Op::Partial(_) | Op::Second(_) => (0, 1),
            _ => (1, 1),
        }
    }

    pub fn apply(&self, w: &(impl Sampler + ?Sized), p: GridPoint) -> Result<f64, GeometryError> {
        match *self {
            Op::Partial(mu) => partial(w, p, mu),
            Op::Second(mu) => second(w, p, mu),
            Op::Boost(a) => boost_apply(a, w, p),
            Op::FrameTangent(a) => frame_tangent_apply(a, w, p),
            Op::Perp => perp_apply(w, p),
        }
    }
}

/// Lazily applies an [`Op`] to another sampler, so operators compose.
pub struct Derived<'a> {
    inner: &'a dyn Sampler,
    op: Op,
}

impl<'a> Derived<'a> {
    pub fn new(inner: &'a dyn Sampler, op: Op) -> Self {
        Derived { inner, op }
    }
}

impl Sampler for Derived<'_> {
    fn lattice(&self) -> &Lattice {
        self.inner.lattice()
    }
    fn dt(&self) -> f64 {
        self.inner.dt()
    }
    fn time(&self, step: i64) -> f64 {
        self.inner.time(step)
    }
    fn sample(&self, p: GridPoint) -> Result<f64, GeometryError> {
        self.op.apply(self.inner, p)
    }
}

fn partial(w: &(impl Sampler + ?Sized), p: GridPoint, mu: usize) -> Result<f64, GeometryError> {
    if mu == 0 {
        Ok((w.sample(p.shift_t(1))? - w.sample(p.shift_t(-1))?) / (2.0 * w.dt()))
    } else {
        let dx = w.lattice().dx;
        Ok((w.sample(p.shift_x(mu - 1, 1))? - w.sample(p.shift_x(mu - 1, -1))?) / (2.0 * dx))
    }
}

fn second(w: &(impl Sampler + ?Sized), p: GridPoint, mu: usize) -> Result<f64, GeometryError> {
    let (plus, minus, h) = if mu == 0 {
        (p.shift_t(1), p.shift_t(-1), w.dt())
    } else {
        (p.shift_x(mu - 1, 1), p.shift_x(mu - 1, -1), w.lattice().dx)
    };
    Ok((w.sample(plus)? - 2.0 * w.sample(p)? + w.sample(minus)?) / (h * h))
}

fn coords(w: &(impl Sampler + ?Sized), p: GridPoint) -> (f64, [f64; 3]) {
    (w.time(p.step), w.lattice().coord(p.idx))
}

/// Discrete `L_a w = x_a ∂_t w + t ∂_a w` at `p`, axis `a` in 1..=3.
pub fn boost_apply(a: usize, w: &(impl Sampler + ?Sized), p: GridPoint) -> Result<f64, GeometryError> {
    let (t, x) = coords(w, p);
    Ok(x[a - 1] * partial(w, p, 0)? + t * partial(w, p, a)?)
}

/// Discrete `∂̄_a w = L_a w / t`.
pub fn frame_tangent_apply(a: usize, w: &(impl Sampler + ?Sized), p: GridPoint) -> Result<f64, GeometryError> {
    let t = w.time(p.step);
    Ok(boost_apply(a, w, p)? / t)
}

/// Discrete `⊥w = ∂_t w + (x^a/t) ∂_a w`.
pub fn perp_apply(w: &(impl Sampler + ?Sized), p: GridPoint) -> Result<f64, GeometryError> {
    let (t, x) = coords(w, p);
    let mut out = partial(w, p, 0)?;
    for a in 1..=3 {
        out += x[a - 1] / t * partial(w, p, a)?;
    }
    Ok(out)
}

/// Flat d'Alembertian `□w = −∂_t² w + Δw` with compact centred stencils.
pub fn box_cartesian(w: &(impl Sampler + ?Sized), p: GridPoint) -> Result<f64, GeometryError> {
    let mut out = -second(w, p, 0)?;
    for a in 1..=3 {
        out += second(w, p, a)?;
    }
    Ok(out)
}

/// `□w` through the semi-hyperboloidal decomposition
/// `−(s²/t²)∂̄_0∂̄_0 w − (x^a/t)(∂̄_0∂̄_a + ∂̄_a∂̄_0) w + Σ_a ∂̄_a∂̄_a w − (3/t)∂_t w`,
/// each frame product formed by composing the discrete frame operators.
pub fn box_semihyperboloidal<S: Sampler>(w: &S, p: GridPoint) -> Result<f64, GeometryError> {
    let (t, x) = coords(w, p);
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    if !(t * t > r2) {
        return Err(GeometryError::OutsideCone { t, r: r2.sqrt() });
    }
    let s2 = (t - r2.sqrt()) * (t + r2.sqrt());
    let dt_w = Derived::new(w, Op::Partial(0));
    let mut out = -(s2 / (t * t)) * second(w, p, 0)? - 3.0 / t * partial(w, p, 0)?;
    for a in 1..=3 {
        let fa = Derived::new(w, Op::FrameTangent(a));
        let d0a = partial(&fa, p, 0)?;
        let da0 = frame_tangent_apply(a, &dt_w, p)?;
        let daa = frame_tangent_apply(a, &fa, p)?;
        out += -(x[a - 1] / t) * (d0a + da0) + daa;
    }
    Ok(out)
}

/// Discrete `[L_a, L_b] w = L_a(L_b w) − L_b(L_a w)`.
pub fn commutator_boost<S: Sampler>(a: usize, b: usize, w: &S, p: GridPoint) -> Result<f64, GeometryError> {
    let lb = Derived::new(w, Op::Boost(b));
    let la = Derived::new(w, Op::Boost(a));
    Ok(boost_apply(a, &lb, p)? - boost_apply(b, &la, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(f: impl Fn(f64, [f64; 3]) -> f64 + Sync, dx: f64) -> FieldHistory {
        // Nodes around (t, x) = (5, (3, 0, 0)); step 0 sits at t = 5.
        let lat = Lattice::centered([3.0, 0.0, 0.0], 4, dx);
        FieldHistory::from_fn(lat, 0.5 * dx, 5.0, -3..4, f)
    }

    fn centre() -> GridPoint {
        GridPoint::new(0, [4, 4, 4])
    }

    #[test]
    fn boost_examples() {
        let h = history(|t, _| t, 0.1);
        for a in 1..=3 {
            let x = h.lattice().coord(centre().idx);
            assert!((boost_apply(a, &h, centre()).unwrap() - x[a - 1]).abs() < 1e-12);
        }
        let h = history(|_, x| x[0], 0.1);
        assert!((boost_apply(1, &h, centre()).unwrap() - 5.0).abs() < 1e-12);
        let h = history(|t, x| t * t - x[0] * x[0] - x[1] * x[1] - x[2] * x[2], 0.1);
        for a in 1..=3 {
            assert!(boost_apply(a, &h, centre()).unwrap().abs() < 1e-11);
        }
    }

    #[test]
    fn frame_tangent_examples() {
        let h = history(|t, _| t, 0.1);
        assert!((frame_tangent_apply(1, &h, centre()).unwrap() - 0.6).abs() < 1e-13);
        let h = history(|_, _| 2.5, 0.1);
        assert_eq!(frame_tangent_apply(2, &h, centre()).unwrap(), 0.0);
        let h = history(|_, x| x[0], 0.1);
        assert!((frame_tangent_apply(1, &h, centre()).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn perp_examples() {
        let h = history(|t, _| t, 0.1);
        assert!((perp_apply(&h, centre()).unwrap() - 1.0).abs() < 1e-13);
        let h = history(|t, x| t * t - x[0] * x[0] - x[1] * x[1] - x[2] * x[2], 0.1);
        assert!((perp_apply(&h, centre()).unwrap() - 6.4).abs() < 1e-11);
        let h = history(|_, x| x[0], 0.1);
        assert!((perp_apply(&h, centre()).unwrap() - 0.6).abs() < 1e-13);
    }

    #[test]
    fn box_examples_agree_on_quadratics() {
        let cases: Vec<(Box<dyn Fn(f64, [f64; 3]) -> f64 + Sync>, f64)> = vec![
            (Box::new(|t, _| t), 0.0),
            (Box::new(|t, x| t * t - x[0] * x[0] - x[1] * x[1] - x[2] * x[2]), -8.0),
            (Box::new(|_, x| x[0] * x[1]), 0.0),
        ];
        for (f, expect) in cases {
            let h = history(f, 0.1);
            let bc = box_cartesian(&h, centre()).unwrap();
            let bs = box_semihyperboloidal(&h, centre()).unwrap();
            assert!((bc - expect).abs() < 1e-9, "cartesian {bc} vs {expect}");
            assert!((bs - expect).abs() < 1e-9, "semi-hyperboloidal {bs} vs {expect}");
        }
    }

    #[test]
    fn stencil_range_errors() {
        let h = history(|t, _| t, 0.1);
        let edge = GridPoint::new(0, [0, 4, 4]);
        assert!(matches!(boost_apply(1, &h, edge), Err(GeometryError::StencilOutOfRange { .. })));
        let late = GridPoint::new(3, [4, 4, 4]);
        assert!(matches!(perp_apply(&h, late), Err(GeometryError::StencilOutOfRange { .. })));
        // the semi-hyperboloidal box reaches two levels in time
        let near_end = GridPoint::new(2, [4, 4, 4]);
        assert!(box_cartesian(&h, near_end).is_ok());
        assert!(box_semihyperboloidal(&h, near_end).is_err());
    }

    #[test]
    fn box_semi_rejects_points_outside_cone() {
        let lat = Lattice::centered([3.0, 0.0, 0.0], 3, 0.1);
        let h = FieldHistory::from_fn(lat, 0.05, 2.0, -3..4, |t, _| t);
        assert!(matches!(
            box_semihyperboloidal(&h, GridPoint::new(0, [3, 3, 3])),
            Err(GeometryError::OutsideCone { .. })
        ));
    }

    #[test]
    fn boost_commutator_on_quadratics() {
        // [L_1, L_2] w = (x_1 ∂_2 − x_2 ∂_1) w
        let f = |t: f64, x: [f64; 3]| 0.3 * t * x[0] + x[1] * x[1] - 0.7 * x[0] * x[1] + t * t;
        let h = history(f, 0.1);
        let p = centre();
        let x = h.lattice().coord(p.idx);
        let (d1, d2) = (0.3 * 5.0 - 0.7 * x[1], 2.0 * x[1] - 0.7 * x[0]);
        let expect = x[0] * d2 - x[1] * d1;
        let got = commutator_boost(1, 2, &h, p).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn materialize_shrinks_valid_region() {
        let h = history(|t, x| t * x[1], 0.1);
        let d = FieldHistory::materialize(&h, -2..3, 1, h.valid(), |w, p| boost_apply(2, w, p));
        assert!(d.sample(GridPoint::new(0, [0, 4, 4])).is_err());
        let v = d.sample(centre()).unwrap();
        // L_2 (t x_2) = x_2² + t²
        let x = h.lattice().coord(centre().idx);
        assert!((v - (x[1] * x[1] + 25.0)).abs() < 1e-10);
    }
}
