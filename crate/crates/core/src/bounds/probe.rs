//! Ray probes on radial Klein-Gordon runs and the margin against `V`.

use serde::Serialize;

use super::{cumulative, envelope_profile, h_ray_derivative, ray_grid, BoundParams, BoundsError, RayCoords, RayFunction, Regime};
use crate::solver::{
    evolve_to_time, GridSpec, History, InitialData, MetricPerturbSpec, Observer, RadialHistory, RunRecord, SourceSpec,
    System,
};

/// Finite-difference weights for derivatives 0, 1, 2 at `z` on arbitrary nodes.
pub(crate) fn fd_weights(z: f64, x: &[f64]) -> Vec<[f64; 3]> {
    let n = x.len();
    let mut c = vec![[0.0; 3]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(2);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// Samples of `v` along one ray of constant rapidity.
#[derive(Debug, Clone, Serialize)]
pub struct RayTrace {
    pub rapidity: f64,
    pub regime: Regime,
    pub lambda: Vec<f64>,
    pub v: Vec<f64>,
    /// `dv/dλ`.
    pub dv: Vec<f64>,
    /// `d²v/dλ²`.
    pub d2v: Vec<f64>,
    /// `⊥v`.
    pub perp: Vec<f64>,
}

impl RayTrace {
    fn point(&self, k: usize) -> (f64, f64) {
        let l = self.lambda[k];
        (l * self.rapidity.cosh(), l * self.rapidity.sinh())
    }
}

/// Records `v` and its derivatives along a fan of radial rays, for
/// [`kg_bound_margin`]. Needs a run history of at least 6 levels.
pub struct RayProbe {
    pub s0: f64,
    pub s_max: f64,
    pub dl: f64,
    pub traces: Vec<RayTrace>,
    queue: Vec<(f64, usize, usize)>,
    next: usize,
    first_step: Option<i64>,
}

impl RayProbe {
    pub fn new(s0: f64, s_max: f64, dl: f64, rapidities: &[f64]) -> Self {
        let mut traces = Vec::new();
        let mut queue = Vec::new();
        for &rho in rapidities {
            let ray = RayCoords::radial(s_max, rho);
            let regime = ray.regime(s0);
            let lo = ray.lambda_min(s0);
            if lo >= s_max {
                continue;
            }
            let lambda = ray_grid(lo, s_max, dl);
            let n = lambda.len();
            let idx = traces.len();
            for (k, l) in lambda.iter().enumerate() {
                queue.push((l * rho.cosh(), idx, k));
            }
            traces.push(RayTrace {
                rapidity: rho,
                regime,
                lambda,
                v: vec![f64::NAN; n],
                dv: vec![f64::NAN; n],
                d2v: vec![f64::NAN; n],
                perp: vec![f64::NAN; n],
            });
        }
        queue.sort_by(|a, b| a.0.total_cmp(&b.0));
        RayProbe { s0, s_max, dl, traces, queue, next: 0, first_step: None }
    }

    /// Sixteen rapidities: six far rays evenly spread below `ln s0`, ten near
    /// rays from the threshold (inclusive) up to where `H_{s_max}` still has
    /// `t − r ≥ 2`.
    pub fn standard_rapidities(s0: f64, s_max: f64) -> Vec<f64> {
        let edge = s0.ln();
        let top = (s_max / 2.0).ln().max(edge + 0.1);
        let far = (0..6).map(|j| edge * (j as f64 + 0.5) / 6.0);
        let near = (0..10).map(|j| edge + (top - edge) * j as f64 / 9.0);
        far.chain(near).collect()
    }

    /// Last time any probe point needs.
    pub fn until_t(&self) -> f64 {
        self.queue.last().map_or(0.0, |q| q.0)
    }

    pub fn complete(&self) -> bool {
        self.next == self.queue.len()
    }

    fn sample(&mut self, h: &RadialHistory, q: usize) -> Result<bool, String> {
        let (t, ray, k) = self.queue[q];
        let first = *self.first_step.get_or_insert(h.oldest_step());
        let nc = ((t - h.t_origin) / h.dt).round() as i64;
        let lo = (nc - 2).max(first);
        if lo + 4 > h.latest_step() {
            return Ok(false);
        }
        if lo < h.oldest_step() {
            return Err(format!("ray probe needs step {lo}, oldest stored is {}", h.oldest_step()));
        }
        let (_, r) = self.traces[ray].point(k);
        let dr = h.grid.dr;
        let ic = (r / dr - 0.5).round() as i64;
        let nodes: Vec<i64> = (ic - 2..=ic + 2).collect();
        if *nodes.last().unwrap() >= h.grid.len() as i64 {
            return Err(format!("ray probe at r={r} beyond the grid"));
        }
        let ts: Vec<f64> = (lo..lo + 5).map(|n| h.time(n)).collect();
        let rs: Vec<f64> = nodes.iter().map(|&j| (j as f64 + 0.5) * dr).collect();
        let wt = fd_weights(t, &ts);
        let wr = fd_weights(r, &rs);
        let mut d = [[0.0; 3]; 3];
        for (a, n) in (lo..lo + 5).enumerate() {
            let lvl = h.level(n).expect("window checked");
            for (b, &j) in nodes.iter().enumerate() {
                let val = if j < 0 { lvl.v[(-j - 1) as usize] } else { lvl.v[j as usize] };
                for (p, wtp) in wt[a].iter().enumerate() {
                    for (m, wrm) in wr[b].iter().enumerate() {
                        if p + m <= 2 {
                            d[p][m] += wtp * wrm * val;
                        }
                    }
                }
            }
        }
        let tr = &mut self.traces[ray];
        let (ch, sh) = (tr.rapidity.cosh(), tr.rapidity.sinh());
        tr.v[k] = d[0][0];
        tr.dv[k] = ch * d[1][0] + sh * d[0][1];
        tr.d2v[k] = ch * ch * d[2][0] + 2.0 * ch * sh * d[1][1] + sh * sh * d[0][2];
        tr.perp[k] = d[1][0] + (r / t) * d[0][1];
        Ok(true)
    }
}

impl Observer for RayProbe {
    fn observe(&mut self, history: History<'_>) -> Result<(), String> {
        let History::Radial(h) = history else {
            return Err("the ray probe needs a radial run".into());
        };
        while self.next < self.queue.len() {
            if !self.sample(h, self.next)? {
                break;
            }
            self.next += 1;
        }
        Ok(())
    }
}

/// Evolves the curved Klein-Gordon problem far enough to fill `probe`.
pub fn record_kg_run(
    h: MetricPerturbSpec,
    f: SourceSpec,
    data: &InitialData,
    grid: &GridSpec,
    mass: f64,
    probe: &mut RayProbe,
) -> RunRecord {
    let until = probe.until_t() + 4.0 * grid.dt();
    evolve_to_time(System::curved_kg(h, f, mass), grid, data, until, 6, &mut [probe])
}

/// Largest ratio over the rays at one `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SMargin {
    pub s: f64,
    pub max_ratio: f64,
    pub rapidity: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeCounts {
    pub far: usize,
    pub near: usize,
    /// Near points sitting exactly on the threshold.
    pub ties: usize,
}

/// Margin of `s^{3/2}|v| + (t/s)s^{3/2}|⊥v|` against `V`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KgMarginReport {
    pub proposition: &'static str,
    pub params: BoundParams,
    pub data_norm: f64,
    pub per_s: Vec<SMargin>,
    pub max_ratio: f64,
    pub regime_counts: RegimeCounts,
    pub skipped: usize,
    pub quadrature_step: f64,
    /// Relative change of `max_ratio` against a coarser run, when compared.
    pub refinement_delta: Option<f64>,
}

/// `(w, w', w'')` for `w = λ^{3/2} v` along a trace.
fn weighted(tr: &RayTrace, k: usize) -> (f64, f64, f64) {
    let l = tr.lambda[k];
    let p = l.powf(1.5);
    let w = p * tr.v[k];
    let w1 = p * (tr.dv[k] + 1.5 * tr.v[k] / l);
    let w2 = p * (tr.d2v[k] + 3.0 * tr.dv[k] / l + 0.75 * tr.v[k] / (l * l));
    (w, w1, w2)
}

/// Compares a filled probe with the envelope at the requested `s` values.
/// Points with `t − r < support_offset`, where the exact solution vanishes,
/// are counted as skipped.
///
/// With `include_remainder`, `F` integrates `λ^{3/2}|f| + |R|`, where `R` is
/// the residual of the ray equation `(1 + h̄ cosh²ρ) w'' + c² w = λ^{3/2} f`.
pub fn kg_bound_margin(
    probe: &RayProbe,
    h: &MetricPerturbSpec,
    f: &SourceSpec,
    params: &BoundParams,
    s_list: &[f64],
    support_offset: f64,
) -> Result<KgMarginReport, BoundsError> {
    params.validate()?;
    if !probe.complete() {
        return Err(BoundsError::Coverage(format!("{} of {} probe points filled", probe.next, probe.queue.len())));
    }
    let mut data = (0.0f64, 0.0f64);
    for tr in probe.traces.iter().filter(|t| t.regime == Regime::Far) {
        let (w, w1, _) = weighted(tr, 0);
        data = (data.0.max(w.abs()), data.1.max(w1.abs()));
    }
    let data_norm = data.0 + data.1;
    let c2 = params.mass * params.mass;
    let mut per_s: Vec<SMargin> =
        s_list.iter().map(|&s| SMargin { s, max_ratio: 0.0, rapidity: f64::NAN, samples: 0 }).collect();
    let mut counts = RegimeCounts { far: 0, near: 0, ties: 0 };
    let mut skipped = 0;
    let threshold = super::far_threshold(params.s0);
    for tr in &probe.traces {
        let ray = RayCoords::radial(probe.s_max, tr.rapidity);
        let ch2 = tr.rapidity.cosh().powi(2);
        let n = tr.lambda.len();
        let mut g = Vec::with_capacity(n);
        let mut hp = Vec::with_capacity(n);
        for k in 0..n {
            let (t, x) = ray.point(tr.lambda[k]);
            let src = if f.is_zero() { 0.0 } else { tr.lambda[k].powf(1.5) * f.value(t, x) };
            let mut gk = src.abs();
            if params.include_remainder {
                let (w, _, w2) = weighted(tr, k);
                let hv = if h.is_zero() { 0.0 } else { h.value(t, x) };
                gk += ((1.0 + hv * ch2) * w2 + c2 * w - src).abs();
            }
            g.push(gk);
            hp.push(h_ray_derivative(h, &ray, tr.lambda[k])?);
        }
        let fun = RayFunction { value: cumulative(&tr.lambda, &g), lambda: tr.lambda.clone() };
        let v = envelope_profile(tr.regime, data_norm, &fun, &hp, params.c_weight);
        let step = tr.lambda.get(1).map_or(probe.dl, |l| l - tr.lambda[0]);
        for m in per_s.iter_mut() {
            if m.s < tr.lambda[0] - 1e-9 || m.s > tr.lambda[n - 1] + 1e-9 {
                skipped += 1;
                continue;
            }
            let k = (((m.s - tr.lambda[0]) / step).round() as usize).min(n - 1);
            let l = tr.lambda[k];
            if l * (-tr.rapidity).exp() < support_offset {
                skipped += 1;
                continue;
            }
            let num = l.powf(1.5) * (tr.v[k].abs() + tr.rapidity.cosh() * tr.perp[k].abs());
            let ratio = if v[k] > 0.0 {
                num / v[k]
            } else if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            match tr.regime {
                Regime::Far => counts.far += 1,
                Regime::Near => {
                    counts.near += 1;
                    if (tr.rapidity.tanh() - threshold).abs() < 1e-12 {
                        counts.ties += 1;
                    }
                }
            }
            m.samples += 1;
            if ratio > m.max_ratio || m.rapidity.is_nan() {
                m.max_ratio = ratio.max(m.max_ratio);
                m.rapidity = tr.rapidity;
            }
        }
    }
    let max_ratio = per_s.iter().map(|m| m.max_ratio).fold(0.0, f64::max);
    Ok(KgMarginReport {
        proposition: "curved-klein-gordon",
        params: params.clone(),
        data_norm,
        per_s,
        max_ratio,
        regime_counts: counts,
        skipped,
        quadrature_step: probe.dl,
        refinement_delta: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    #[test]
    fn weights_are_exact_on_quartics() {
        let x = [-0.3, 0.1, 0.4, 1.0, 1.7];
        let w = fd_weights(0.55, &x);
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) + 0.25 * x.powi(4);
        let d1 = |x: f64| -2.0 + 1.5 * x * x + x.powi(3);
        let d2 = |x: f64| 3.0 * x + 3.0 * x * x;
        let apply = |p: usize| x.iter().zip(&w).map(|(xi, wi)| wi[p] * f(*xi)).sum::<f64>();
        assert!((apply(0) - f(0.55)).abs() < 1e-13);
        assert!((apply(1) - d1(0.55)).abs() < 1e-12);
        assert!((apply(2) - d2(0.55)).abs() < 1e-11);
    }

    #[test]
    fn standard_fan_is_biased_near() {
        let r = RayProbe::standard_rapidities(5.0, 20.0);
        assert_eq!(r.len(), 16);
        let thr = super::super::far_threshold(5.0);
        let near = r.iter().filter(|p| p.tanh() >= thr - 1e-15).count();
        assert_eq!(near, 10);
    }

    fn run(data: InitialData, h: MetricPerturbSpec, dr: f64) -> (RayProbe, RunRecord) {
        let mut probe = RayProbe::new(data.t_init, 12.0, 0.02, &RayProbe::standard_rapidities(data.t_init, 12.0));
        let grid = GridSpec::radial(probe.until_t() + 2.0, dr, 0.5);
        let rec = record_kg_run(h, SourceSpec::zero(), &data, &grid, 1.0, &mut probe);
        (probe, rec)
    }

    #[test]
    fn zero_run_has_zero_ratios() {
        let (probe, rec) = run(InitialData::zero(4.0), MetricPerturbSpec::zero(), 0.1);
        assert!(rec.ok());
        let p = BoundParams { s0: 4.0, ..Default::default() };
        let rep = kg_bound_margin(&probe, &MetricPerturbSpec::zero(), &SourceSpec::zero(), &p, &[5.0, 8.0, 12.0], 1.0).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
        assert_eq!(rep.data_norm, 0.0);
        assert!(rep.regime_counts.far > 0 && rep.regime_counts.near > 0 && rep.regime_counts.ties > 0);
    }

    #[test]
    fn free_klein_gordon_ratio_is_moderate() {
        let data = InitialData { u0: Expr::constant(0.0), ..InitialData::bumps(4.0, 0.0, 0.1, 1.5) };
        let (probe, rec) = run(data, MetricPerturbSpec::zero(), 0.05);
        assert!(rec.ok(), "{rec:?}");
        let p = BoundParams { s0: 4.0, ..Default::default() };
        let rep = kg_bound_margin(&probe, &MetricPerturbSpec::zero(), &SourceSpec::zero(), &p, &[5.0, 8.0, 12.0], 1.0).unwrap();
        assert!(rep.data_norm > 0.0);
        assert!(rep.max_ratio > 0.0 && rep.max_ratio < 10.0, "{rep:?}");
        let spec_form = BoundParams { include_remainder: false, ..p };
        let bare = kg_bound_margin(&probe, &MetricPerturbSpec::zero(), &SourceSpec::zero(), &spec_form, &[12.0], 1.0).unwrap();
        assert!(bare.max_ratio.is_infinite(), "near rays see no source without the remainder");
    }
}
