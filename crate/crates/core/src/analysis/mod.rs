//! Hyperboloidal energies, boosted derivatives, the Sobolev ratio on slices,
//! weighted sup-norms, power-law fits and the bootstrap hierarchy monitor.

mod hierarchy;
mod radial_table;

pub use hierarchy::{chain_sup_specs, hierarchy_check, HierarchyLine, HierarchyReport};
pub use radial_table::{
    c_ell, DiagnosticTables, FlatSupRecord, FlatSupRecorder, MultiIndex, RadialRecorder, SupKind, SupSpec,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FieldHistory, GeometryError, Op, SliceSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("slice sample is incomplete (missing or non-finite components)")]
    Incomplete,
    #[error("power-law fit needs >= 8 positive points spanning a factor >= 4, got {points} points spanning {span:.3}")]
    InsufficientSpan { points: usize, span: f64 },
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("coverage: {0}")]
    Coverage(String),
    #[error("invalid hierarchy spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Summation order for slice quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Left-to-right fold, bit-reproducible.
    #[default]
    Sequential,
    /// Parallel tree sum.
    Tree,
}

pub fn reduce_sum(values: &[f64], mode: Reduction) -> f64 {
    match mode {
        Reduction::Sequential => values.iter().fold(0.0, |a, b| a + b),
        Reduction::Tree => values.par_iter().sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldId {
    U,
    V,
}

impl FieldId {
    pub fn name(&self) -> &'static str {
        match self {
            FieldId::U => "u",
            FieldId::V => "v",
        }
    }
}

/// Bootstrap parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchySpec {
    pub n: u32,
    pub delta: f64,
    pub c1: f64,
    pub epsilon: f64,
    /// Allowed excess of a fitted exponent over its target.
    pub tolerance: f64,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        HierarchySpec { n: 8, delta: 0.02, c1: 10.0, epsilon: 0.01, tolerance: 0.05 }
    }
}

impl HierarchySpec {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.n < 8 {
            return Err(AnalysisError::InvalidSpec(format!("N must be >= 8, got {}", self.n)));
        }
        if !(self.delta > 0.0 && self.delta < 0.1) {
            return Err(AnalysisError::InvalidSpec(format!("delta must satisfy 0 < delta < 0.1, got {}", self.delta)));
        }
        if !(self.c1 > 0.0 && self.epsilon >= 0.0 && self.tolerance >= 0.0) {
            return Err(AnalysisError::InvalidSpec("C1 > 0, epsilon >= 0 and tolerance >= 0 required".into()));
        }
        Ok(())
    }
}

/// `E(s, ∂^I L^J w)^{1/2}` for one member of the radial derivative family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub field: FieldId,
    pub index: MultiIndex,
    pub s: f64,
    pub value: f64,
}

/// `sup_{H_s} (t/s)^p t^q |w|` over a truncated chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNormRecord {
    pub field: FieldId,
    pub index: MultiIndex,
    pub kind: SupKind,
    pub p: f64,
    pub q: f64,
    pub s: f64,
    pub value: f64,
}

/// `E(s, w) = ∫ [((s/t)∂_t w)² + Σ_a (∂̄_a w)² + mass² w²] dx` over the chart;
/// for spherical-harmonic profiles the angular term `ℓ(ℓ+1) w²/r²` is added.
pub fn slice_energy(sample: &SliceSample, mass: f64, mode: Reduction) -> Result<f64, AnalysisError> {
    if !sample.is_complete() {
        return Err(AnalysisError::Incomplete);
    }
    let s = sample.s;
    let ell = sample.ell as f64;
    let dens: Vec<f64> = (0..sample.len())
        .map(|i| {
            let p = &sample.points[i];
            let w = sample.value[i];
            let mut e = (s / p.t * sample.dt[i]).powi(2) + mass * mass * w * w;
            for a in 1..=3 {
                e += sample.frame_tangent(i, a).powi(2);
            }
            if sample.ell > 0 {
                let r2 = p.x.iter().map(|v| v * v).sum::<f64>();
                e += ell * (ell + 1.0) * w * w / r2;
            }
            e * p.weight
        })
        .collect();
    Ok(reduce_sum(&dens, mode))
}

/// Weighted sup of `|w|` over the sample.
pub fn supnorm_on_slice(sample: &SliceSample, p: f64, q: f64) -> f64 {
    let s = sample.s;
    sample
        .points
        .iter()
        .zip(&sample.value)
        .map(|(pt, w)| (pt.t / s).powf(p) * pt.t.powf(q) * w.abs())
        .fold(0.0, f64::max)
}

/// `sup t^{3/2}|u| / Σ_{|I|≤2} ‖L^I u‖_{L²(H_s)}`; 0 for the zero field.
pub fn sobolev_ratio(sample: &SliceSample) -> Result<f64, AnalysisError> {
    let b2 = sample.boost2.as_ref().ok_or(AnalysisError::Incomplete)?;
    if !sample.is_complete() {
        return Err(AnalysisError::Incomplete);
    }
    let num = supnorm_on_slice(sample, 0.0, 1.5);
    let l2 = |f: &dyn Fn(usize) -> f64| -> f64 {
        sample.points.iter().enumerate().map(|(i, p)| p.weight * f(i).powi(2)).sum::<f64>().sqrt()
    };
    let mut den = l2(&|i| sample.value[i]);
    for a in 1..=3 {
        den += l2(&|i| sample.boost(i, a));
    }
    for a in 0..3 {
        for b in 0..3 {
            den += l2(&|i| b2[i][a][b]);
        }
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// `∂^I L^J w` on the lattice: boosts `J` (axes 1..=3) are applied first, then
/// partials `I` (0 = t, 1..=3 = x^a). Each operator consumes one time level on
/// each side and one node at each face.
pub fn boosted_derivative_field(h: &FieldHistory, i: &[usize], j: &[usize]) -> Result<FieldHistory, AnalysisError> {
    let total = (i.len() + j.len()) as i64;
    let steps = h.steps();
    if steps.end - steps.start < 2 * total + 1 {
        return Err(AnalysisError::InsufficientHistory(format!(
            "{} derivatives need {} levels, history has {}",
            total,
            2 * total + 1,
            steps.end - steps.start
        )));
    }
    if i.iter().any(|&a| a > 3) || j.iter().any(|&a| !(1..=3).contains(&a)) {
        return Err(AnalysisError::InvalidSpec("partial index in 0..=3, boost axis in 1..=3".into()));
    }
    let ops: Vec<Op> = j.iter().rev().map(|&a| Op::Boost(a)).chain(i.iter().rev().map(|&a| Op::Partial(a))).collect();
    let mut cur = h.clone();
    for op in ops {
        let st = cur.steps();
        let valid = cur.valid().clone();
        cur = FieldHistory::materialize(&cur, st.start + 1..st.end - 1, 1, &valid, |src, p| op.apply(src, p));
    }
    Ok(cur)
}

/// Least-squares slope of `log value` against `log s` over the last decade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    /// `max(2·standard error, 2·max|residual| / log-span)`.
    pub width: f64,
    pub prefactor: f64,
    pub points: usize,
}

pub fn fit_power_law(series: &[(f64, f64)]) -> Result<PowerFit, AnalysisError> {
    let s_max = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(s, v)| *s >= s_max / 10.0 * (1.0 - 1e-12) && *v > 0.0 && v.is_finite() && *s > 0.0)
        .map(|(s, v)| (s.ln(), v.ln()))
        .collect();
    let span = if pts.is_empty() {
        1.0
    } else {
        let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).exp()
    };
    if pts.len() < 8 || span < 4.0 - 1e-9 {
        return Err(AnalysisError::InsufficientSpan { points: pts.len(), span });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let res: Vec<f64> = pts.iter().map(|p| p.1 - icept - slope * p.0).collect();
    let sse: f64 = res.iter().map(|r| r * r).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let max_res = res.iter().map(|r| r.abs()).fold(0.0, f64::max);
    Ok(PowerFit { exponent: slope, width: (2.0 * se).max(2.0 * max_res / span.ln()), prefactor: icept.exp(), points: pts.len() })
}

/// `n` log-spaced values from `a` to `b` inclusive.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{interpolate_to_slice, Lattice, Sampler, SliceChart};

    #[test]
    fn fit_examples() {
        let s = log_spaced(1.0, 20.0, 16);
        let f = fit_power_law(&s.iter().map(|&s| (s, s * s)).collect::<Vec<_>>()).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12 && f.width < 1e-10);
        let f = fit_power_law(&s.iter().map(|&s| (s, 3.0)).collect::<Vec<_>>()).unwrap();
        assert!(f.exponent.abs() < 1e-12);
        let s = log_spaced(1.0, 100.0, 30);
        let f = fit_power_law(&s.iter().map(|&s| (s, s.powf(0.04) * (1.0 + 0.01 * s.ln().sin()))).collect::<Vec<_>>())
            .unwrap();
        // the wiggle biases the slope by at most its amplitude
        assert!((f.exponent - 0.04).abs() < 0.01, "{f:?}");
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        let narrow = log_spaced(10.0, 20.0, 12);
        assert!(fit_power_law(&narrow.iter().map(|&s| (s, s)).collect::<Vec<_>>()).is_err());
    }

    #[test]
    fn spec_defaults_validate() {
        assert!(HierarchySpec::default().validate().is_ok());
        assert!(HierarchySpec { delta: 0.2, ..Default::default() }.validate().is_err());
        assert!(HierarchySpec { n: 6, ..Default::default() }.validate().is_err());
    }

    fn history(f: impl Fn(f64, [f64; 3]) -> f64 + Sync) -> (FieldHistory, Lattice) {
        let lat = Lattice::cube(1.2, 0.1);
        (FieldHistory::from_fn(lat.clone(), 0.05, 0.0, 30..60, f), lat)
    }

    #[test]
    fn energy_of_zero_and_time_field() {
        let (h, lat) = history(|_, _| 0.0);
        let chart = SliceChart::on_lattice(2.0, &lat, 0.2, 2);
        let smp = interpolate_to_slice(&h, &chart, false).unwrap();
        assert_eq!(slice_energy(&smp, 1.0, Reduction::Sequential).unwrap(), 0.0);
        let (h, _) = history(|t, _| t);
        let smp = interpolate_to_slice(&h, &chart, false).unwrap();
        // independent quadrature of (s/t)² + Σ(x_a/t)²
        let mut oracle = 0.0;
        for p in &chart.points {
            let t2 = 4.0 + p.x.iter().map(|v| v * v).sum::<f64>();
            oracle += (4.0 / t2 + p.x.iter().map(|v| v * v).sum::<f64>() / t2) * p.weight;
        }
        let e = slice_energy(&smp, 0.0, Reduction::Sequential).unwrap();
        assert!((e - oracle).abs() < 1e-10 * oracle, "{e} vs {oracle}");
        let e_tree = slice_energy(&smp, 0.0, Reduction::Tree).unwrap();
        assert!((e - e_tree).abs() <= 1e-12 * e);
    }

    #[test]
    fn supnorm_examples() {
        let (h, lat) = history(|_, _| 1.0);
        let chart = SliceChart::on_lattice(2.0, &lat, 0.2, 2);
        let smp = interpolate_to_slice(&h, &chart, false).unwrap();
        assert!((supnorm_on_slice(&smp, 0.0, 0.0) - 1.0).abs() < 1e-14);
        let r_max = chart.points.iter().map(|p| crate::geometry::norm3(p.x)).fold(0.0, f64::max);
        assert!((supnorm_on_slice(&smp, 0.0, 1.0) - (4.0 + r_max * r_max).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn boosted_field_annihilates_s2_and_commutes() {
        let (h, _) = history(|t, x| t * t - x[0] * x[0] - x[1] * x[1] - x[2] * x[2]);
        let l1 = boosted_derivative_field(&h, &[], &[1]).unwrap();
        let valid = l1.valid().clone();
        for step in l1.steps() {
            for i in valid[0].clone() {
                assert!(l1.sample(crate::geometry::GridPoint::new(step, [i, 10, 12])).unwrap().abs() < 1e-9);
            }
        }
        let id = boosted_derivative_field(&h, &[], &[]).unwrap();
        assert_eq!(id.level(45), h.level(45));
        // [L1, L2] w = (x1 ∂2 − x2 ∂1) w
        let (h, lat) = history(|t, x| x[0] * x[1] + t * x[1] + x[0] * x[0]);
        let a = boosted_derivative_field(&h, &[], &[1, 2]).unwrap();
        let b = boosted_derivative_field(&h, &[], &[2, 1]).unwrap();
        let p = crate::geometry::GridPoint::new(45, [10, 14, 12]);
        let x = lat.coord(p.idx);
        let t = h.time(45);
        let exact = x[0] * (x[0] + t) - x[1] * (x[1] + 2.0 * x[0]);
        let diff = a.sample(p).unwrap() - b.sample(p).unwrap();
        assert!((diff - exact).abs() < 1e-6, "{diff} vs {exact}");
        assert!(boosted_derivative_field(&h, &[0; 20], &[]).is_err());
    }
}
