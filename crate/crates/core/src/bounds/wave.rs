//! Margin of a radial sourced-wave run against the wave envelope.

use serde::Serialize;

use super::{wave_bound_value, BoundsError};
use crate::analysis::fit_power_law;
use crate::expr::Expr;
use crate::solver::{History, Observer, SourceSpec, Support};

/// `f = t^{−(2+ν)} (t − r)^{−(1−μ)}` on `t − r ≥ 1`, zero elsewhere.
pub fn wave_source(mu: f64, nu: f64) -> SourceSpec {
    let f = Expr::t().powf(-(2.0 + nu)) * (Expr::t() - Expr::r()).powf(mu - 1.0);
    SourceSpec::new(f, Support::Cone { offset: 1.0 }, true)
}

/// Largest `|u| / W(t, r)` over the flat level at `t`, with `t − r ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveSample {
    pub t: f64,
    pub max_ratio: f64,
    pub r_at: f64,
    pub sup_u: f64,
}

pub struct WaveProbe {
    pub mu: f64,
    pub nu: f64,
    times: Vec<f64>,
    next: usize,
    pub samples: Vec<WaveSample>,
}

impl WaveProbe {
    pub fn new(mu: f64, nu: f64, times: &[f64]) -> Result<Self, BoundsError> {
        wave_bound_value(mu, nu, 2.0, 0.0)?;
        let mut times = times.to_vec();
        times.sort_by(f64::total_cmp);
        if times.first().is_some_and(|t| *t < 2.0) {
            return Err(BoundsError::Domain("wave margin needs t ≥ 2".into()));
        }
        Ok(WaveProbe { mu, nu, times, next: 0, samples: Vec::new() })
    }

    pub fn complete(&self) -> bool {
        self.next == self.times.len()
    }
}

impl Observer for WaveProbe {
    fn observe(&mut self, history: History<'_>) -> Result<(), String> {
        let History::Radial(h) = history else {
            return Err("the wave probe needs a radial run".into());
        };
        let lvl = h.latest();
        while self.next < self.times.len() && lvl.t >= self.times[self.next] - 0.5 * h.dt {
            let mut smp = WaveSample { t: lvl.t, max_ratio: 0.0, r_at: 0.0, sup_u: 0.0 };
            for (i, &r) in h.grid.r.iter().enumerate() {
                if lvl.t - r < 1.0 {
                    break;
                }
                let u = lvl.u[i].abs();
                smp.sup_u = smp.sup_u.max(u);
                let ratio = u / wave_bound_value(self.mu, self.nu, lvl.t, r).map_err(|e| e.to_string())?;
                if ratio > smp.max_ratio {
                    smp.max_ratio = ratio;
                    smp.r_at = r;
                }
            }
            self.samples.push(smp);
            self.next += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecadeMax {
    pub t_lo: f64,
    pub t_hi: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveMarginReport {
    pub proposition: &'static str,
    pub mu: f64,
    pub nu: f64,
    pub samples: Vec<WaveSample>,
    pub per_decade: Vec<DecadeMax>,
    pub max_ratio: f64,
    /// Log-log slope of the per-time maximum over the last decade of `t`.
    pub growth_exponent: Option<f64>,
    pub refinement_delta: Option<f64>,
}

/// Summarises a filled [`WaveProbe`].
pub fn wave_bound_margin(probe: &WaveProbe) -> Result<WaveMarginReport, BoundsError> {
    if !probe.complete() {
        return Err(BoundsError::Coverage(format!("{} of {} times recorded", probe.next, probe.times.len())));
    }
    let mut per_decade: Vec<DecadeMax> = Vec::new();
    for s in &probe.samples {
        let lo = 10f64.powf(s.t.log10().floor());
        match per_decade.last_mut() {
            Some(d) if d.t_lo == lo => d.max_ratio = d.max_ratio.max(s.max_ratio),
            _ => per_decade.push(DecadeMax { t_lo: lo, t_hi: 10.0 * lo, max_ratio: s.max_ratio }),
        }
    }
    let series: Vec<(f64, f64)> = probe.samples.iter().map(|s| (s.t, s.max_ratio)).collect();
    Ok(WaveMarginReport {
        proposition: "sourced-wave",
        mu: probe.mu,
        nu: probe.nu,
        max_ratio: probe.samples.iter().map(|s| s.max_ratio).fold(0.0, f64::max),
        growth_exponent: fit_power_law(&series).ok().map(|f| f.exponent),
        samples: probe.samples.clone(),
        per_decade,
        refinement_delta: None,
    })
}
