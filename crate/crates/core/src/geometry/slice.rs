use rayon::prelude::*;

use super::lattice::{boost_apply, Derived, FieldHistory, GridPoint, Lattice, Op, Sampler};
use super::{norm3, GeometryError};

/// One quadrature node on a hyperboloid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePoint {
    pub t: f64,
    pub x: [f64; 3],
    /// Flat spatial measure `dx` carried by this node.
    pub weight: f64,
}

/// Spatial sample set on `H_s` under the graph parametrisation `t = sqrt(s² + |x|²)`.
#[derive(Debug, Clone)]
pub struct SliceChart {
    pub s: f64,
    pub points: Vec<SlicePoint>,
    /// Lattice indices of the points, for charts built on a [`Lattice`].
    pub nodes: Vec<[i64; 3]>,
}

fn on_slice(s: f64, x: [f64; 3]) -> f64 {
    (s * s + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

impl SliceChart {
    /// Lattice nodes at least `interior` nodes away from the lattice faces with
    /// `r ≤ t − 1 − margin`; each carries weight `dx³`.
    pub fn on_lattice(s: f64, lattice: &Lattice, margin: f64, interior: i64) -> Self {
        let w = lattice.dx.powi(3);
        let mut points = Vec::new();
        let mut nodes = Vec::new();
        for k in 0..lattice.len() {
            let i = lattice.unflat(k);
            let idx = [i[0] as i64, i[1] as i64, i[2] as i64];
            if (0..3).any(|a| idx[a] < interior || idx[a] >= lattice.n[a] as i64 - interior) {
                continue;
            }
            let x = lattice.coord(idx);
            let t = on_slice(s, x);
            if norm3(x) <= t - 1.0 - margin {
                points.push(SlicePoint { t, x, weight: w });
                nodes.push(idx);
            }
        }
        SliceChart { s, points, nodes }
    }

    /// Spherically symmetric chart: nodes `(r, 0, 0)` carrying shell weight
    /// `4π r² dr`, truncated at `r ≤ min(t − 1 − margin, r_cap)`.
    pub fn radial(s: f64, radii: &[f64], dr: f64, margin: f64, r_cap: f64) -> Self {
        let points = radii
            .iter()
            .filter_map(|&r| {
                let t = (s * s + r * r).sqrt();
                (r <= t - 1.0 - margin && r <= r_cap).then(|| SlicePoint {
                    t,
                    x: [r, 0.0, 0.0],
                    weight: 4.0 * std::f64::consts::PI * r * r * dr,
                })
            })
            .collect();
        SliceChart { s, points, nodes: Vec::new() }
    }

    /// Arbitrary spatial positions with a common weight; positions outside
    /// `r ≤ t − 1 − margin` are dropped.
    pub fn from_positions(s: f64, xs: impl IntoIterator<Item = [f64; 3]>, weight: f64, margin: f64) -> Self {
        let points = xs
            .into_iter()
            .filter_map(|x| {
                let t = on_slice(s, x);
                (norm3(x) <= t - 1.0 - margin).then_some(SlicePoint { t, x, weight })
            })
            .collect();
        SliceChart { s, points, nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest and largest `t` over the chart.
    pub fn t_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.t), hi.max(p.t)))
    }
}

/// Field value and frame derivatives on the nodes of a [`SliceChart`].
#[derive(Debug, Clone)]
pub struct SliceSample {
    pub s: f64,
    pub points: Vec<SlicePoint>,
    pub value: Vec<f64>,
    /// ∂_t w.
    pub dt: Vec<f64>,
    /// ∂_a w, a = 1..3.
    pub grad: Vec<[f64; 3]>,
    /// L_a L_b w when second-order boosts were requested.
    pub boost2: Option<Vec<[[f64; 3]; 3]>>,
    /// Angular order of a spherical-harmonic profile sampled on a radial chart;
    /// adds `ℓ(ℓ+1) w²/r²` to tangential energy densities. Zero otherwise.
    pub ell: u32,
}

impl SliceSample {
    pub fn zeros(chart: &SliceChart) -> Self {
        let n = chart.len();
        SliceSample {
            s: chart.s,
            points: chart.points.clone(),
            value: vec![0.0; n],
            dt: vec![0.0; n],
            grad: vec![[0.0; 3]; n],
            boost2: None,
            ell: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `L_a w = x_a ∂_t w + t ∂_a w` at node `i`, axis `a` in 1..=3.
    pub fn boost(&self, i: usize, a: usize) -> f64 {
        let p = &self.points[i];
        p.x[a - 1] * self.dt[i] + p.t * self.grad[i][a - 1]
    }

    /// `∂̄_a w = L_a w / t`.
    pub fn frame_tangent(&self, i: usize, a: usize) -> f64 {
        self.boost(i, a) / self.points[i].t
    }

    /// `⊥w = ∂_t w + (x^a/t) ∂_a w`.
    pub fn perp(&self, i: usize) -> f64 {
        let p = &self.points[i];
        self.dt[i] + (0..3).map(|a| p.x[a] / p.t * self.grad[i][a]).sum::<f64>()
    }

    /// True when every stored component is finite.
    pub fn is_complete(&self) -> bool {
        let n = self.len();
        self.value.len() == n
            && self.dt.len() == n
            && self.grad.len() == n
            && self.value.iter().chain(&self.dt).all(|v| v.is_finite())
            && self.grad.iter().flatten().all(|v| v.is_finite())
            && self.boost2.as_ref().is_none_or(|b| b.len() == n && b.iter().flatten().flatten().all(|v| v.is_finite()))
    }
}

/// Cubic Lagrange weights for nodes `ts` evaluated at `t`.
pub fn lagrange4(ts: [f64; 4], t: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for j in 0..4 {
        for m in 0..4 {
            if m != j {
                w[j] *= (t - ts[m]) / (ts[j] - ts[m]);
            }
        }
    }
    w
}

/// Picks the four stored steps used to interpolate at `t`, keeping the window
/// inside the steps where a quantity with time reach `reach` is available.
fn window(h: &FieldHistory, t: f64, reach: i64, s: f64) -> Result<i64, GeometryError> {
    let lo = h.oldest_step() + reach;
    let hi = h.latest_step() - reach;
    let t_lo = h.time(lo);
    let t_hi = h.time(hi);
    let tol = 1e-9 * h.dt();
    if hi - lo < 3 || t < t_lo - tol || t > t_hi + tol {
        return Err(GeometryError::SliceNotCovered { s, need_lo: t, need_hi: t, have_lo: t_lo, have_hi: t_hi });
    }
    let n0 = ((t - h.t_origin()) / h.dt()).floor() as i64;
    Ok((n0 - 1).clamp(lo, hi - 3))
}

/// Interpolates a lattice history onto the nodes of a lattice chart: value,
/// ∂_t, ∂_a (and optionally L_aL_b) at each node, cubic in `t`.
pub fn interpolate_to_slice(
    h: &FieldHistory,
    chart: &SliceChart,
    with_boosts: bool,
) -> Result<SliceSample, GeometryError> {
    assert_eq!(chart.nodes.len(), chart.points.len(), "chart must be built on the history lattice");
    let (need_lo, need_hi) = chart.t_range();
    let reach = if with_boosts { 2 } else { 1 };
    if !chart.is_empty() {
        let have_lo = h.time(h.oldest_step() + reach);
        let have_hi = h.time(h.latest_step() - reach);
        if need_lo < have_lo - 1e-9 * h.dt() || need_hi > have_hi + 1e-9 * h.dt() {
            return Err(GeometryError::SliceNotCovered { s: chart.s, need_lo, need_hi, have_lo, have_hi });
        }
    }
    let boosts: Vec<Derived> = (1..=3).map(|a| Derived::new(h, Op::Boost(a))).collect();
    struct Node {
        value: f64,
        dt: f64,
        grad: [f64; 3],
        b2: [[f64; 3]; 3],
    }
    let nodes: Result<Vec<Node>, GeometryError> = chart
        .points
        .par_iter()
        .zip(chart.nodes.par_iter())
        .map(|(p, &idx)| {
            let start = window(h, p.t, reach, chart.s)?;
            let ts = [0, 1, 2, 3].map(|k| h.time(start + k));
            let wts = lagrange4(ts, p.t);
            let mut n = Node { value: 0.0, dt: 0.0, grad: [0.0; 3], b2: [[0.0; 3]; 3] };
            for (k, wk) in wts.iter().enumerate() {
                let gp = GridPoint::new(start + k as i64, idx);
                n.value += wk * h.sample(gp)?;
                n.dt += wk * Op::Partial(0).apply(h, gp)?;
                for a in 0..3 {
                    n.grad[a] += wk * Op::Partial(a + 1).apply(h, gp)?;
                }
                if with_boosts {
                    for a in 0..3 {
                        for b in 0..3 {
                            n.b2[a][b] += wk * boost_apply(a + 1, &boosts[b], gp)?;
                        }
                    }
                }
            }
            Ok(n)
        })
        .collect();
    let nodes = nodes?;
    let mut out = SliceSample::zeros(chart);
    for (i, n) in nodes.iter().enumerate() {
        out.value[i] = n.value;
        out.dt[i] = n.dt;
        out.grad[i] = n.grad;
    }
    if with_boosts {
        out.boost2 = Some(nodes.iter().map(|n| n.b2).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice_history(f: impl Fn(f64, [f64; 3]) -> f64 + Sync) -> (FieldHistory, Lattice) {
        let lat = Lattice::cube(1.0, 0.1);
        let h = FieldHistory::from_fn(lat.clone(), 0.05, 0.0, 30..60, f);
        (h, lat)
    }

    #[test]
    fn s2_is_constant_on_slice() {
        let (h, lat) = lattice_history(|t, x| t * t - x[0] * x[0] - x[1] * x[1] - x[2] * x[2]);
        let chart = SliceChart::on_lattice(2.0, &lat, 0.2, 2);
        assert!(!chart.is_empty());
        let sample = interpolate_to_slice(&h, &chart, true).unwrap();
        for i in 0..sample.len() {
            assert!((sample.value[i] - 4.0).abs() < 1e-11);
            for a in 1..=3 {
                assert!(sample.boost(i, a).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_field_gives_zero_sample() {
        let (h, lat) = lattice_history(|_, _| 0.0);
        let chart = SliceChart::on_lattice(2.0, &lat, 0.2, 2);
        let sample = interpolate_to_slice(&h, &chart, false).unwrap();
        assert!(sample.value.iter().chain(&sample.dt).all(|v| *v == 0.0));
        assert!(sample.is_complete());
    }

    #[test]
    fn time_field_samples_slice_time() {
        let (h, lat) = lattice_history(|t, _| t);
        let chart = SliceChart::on_lattice(2.0, &lat, 0.2, 2);
        let sample = interpolate_to_slice(&h, &chart, false).unwrap();
        for (i, p) in sample.points.iter().enumerate() {
            let expect = (4.0 + p.x.iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!((sample.value[i] - expect).abs() < 1e-12);
            assert!((sample.dt[i] - 1.0).abs() < 1e-12);
            assert!((sample.perp(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uncovered_slice_reports_range() {
        let (h, lat) = lattice_history(|t, _| t);
        let chart = SliceChart::on_lattice(5.0, &lat, 0.2, 2);
        match interpolate_to_slice(&h, &chart, false) {
            Err(GeometryError::SliceNotCovered { need_lo, have_hi, .. }) => {
                assert!(need_lo > have_hi);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn chart_points_are_in_cone() {
        let lat = Lattice::cube(3.0, 0.25);
        for s in [1.5, 2.0, 4.0] {
            let chart = SliceChart::on_lattice(s, &lat, 0.5, 0);
            for p in &chart.points {
                let sp = crate::geometry::SpacetimePoint::new(p.t, p.x);
                assert!(sp.in_cone());
                assert!((sp.hyperbolic_radius().unwrap() - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let ts = [0.0, 0.3, 0.7, 1.2];
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t * t;
        let w = lagrange4(ts, 0.55);
        let v: f64 = (0..4).map(|k| w[k] * f(ts[k])).sum();
        assert!((v - f(0.55)).abs() < 1e-14);
    }
}
