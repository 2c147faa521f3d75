//! Scenario pipelines: solver runs, analysis and the files they leave behind.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use super::config::{RunConfig, Scenario};
use super::emit::{emit_series, Cell, Schema};
use super::report::{CriterionOutcome, ReportSummary};
use super::suites::{
    energy_drift, frame_identity, manufactured_defect, observed_orders, sobolev_family, sobolev_ratio_at, DriftRow,
    FRAME_FIELDS,
};
use super::CliError;
use crate::analysis::{
    chain_sup_specs, fit_power_law, hierarchy_check, log_spaced, FlatSupRecord, FlatSupRecorder, RadialRecorder,
};
use crate::bounds::{
    kg_bound_margin, record_kg_run, wave_bound_margin, wave_source, BoundParams, KgMarginReport, RayProbe,
    WaveMarginReport, WaveProbe,
};
use crate::expr::Expr;
use crate::solver::snapshot::Snapshot;
use crate::solver::{
    evolve_to_time, slice_time_needed, solve_linear_wave_sourced, support_offset, GridSpec, History, InitialData,
    MetricPerturbSpec, ModelParams, Observer, RunRecord, SourceSpec, System,
};

pub(super) fn dispatch(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    match cfg.scenario {
        Scenario::ModelEvolution => model_evolution(cfg, out, rep),
        Scenario::LinearKgBound => linear_kg_bound(cfg, out, rep),
        Scenario::LinearWaveBound => linear_wave_bound(cfg, out, rep),
        Scenario::SobolevSuite => sobolev_suite(cfg, out, rep),
        Scenario::FrameIdentitySuite => frame_identity_suite(cfg, out, rep),
        Scenario::ConvergenceSuite => convergence_suite(cfg, out, rep),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.into(), source };
    let file = File::create(path).map_err(io)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| io(e.into()))
}

/// Envelope of a JSON report: schema id, config echo and payload.
#[derive(Serialize)]
struct Document<'a, T> {
    schema: &'static str,
    config_hash: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn document<'a, T>(schema: &'static str, rep: &'a ReportSummary, body: T) -> Document<'a, T> {
    Document { schema, config_hash: &rep.config_hash, config: &rep.config, body }
}

fn record_failure(rep: &mut ReportSummary, what: &str, run: &RunRecord) -> bool {
    match &run.failure {
        Some(f) => {
            rep.errors.push(format!("{what}: {}", f.message));
            false
        }
        None => true,
    }
}

/// Captures the stored levels once the run reaches `until`.
struct FinalSnapshot {
    until: f64,
    snap: Option<Snapshot>,
}

impl Observer for FinalSnapshot {
    fn observe(&mut self, h: History<'_>) -> Result<(), String> {
        if self.snap.is_none() && h.t() >= self.until - 0.5 * h.dt() {
            self.snap = Some(Snapshot::capture(h));
        }
        Ok(())
    }
}

fn model_evolution(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let data = cfg.data.build();
    let system = System::model(cfg.model.clone());
    let off = support_offset(&system, &data);
    let r = &cfg.run;
    let s_list = log_spaced(r.s_min, r.until_s, r.slices);
    let t_needed = slice_time_needed(r.until_s, off);
    let grid = cfg.grid.spec(cfg.grid.dx, t_needed + 20.0);
    let mut rec = RadialRecorder::new(cfg.hierarchy.n, cfg.model.c, &s_list, 2.0 * grid.dx, off, chain_sup_specs(&cfg.hierarchy));
    let until = t_needed + rec.lag_time(grid.dt()) + 3.0 * grid.dt();
    let mut snap = FinalSnapshot { until, snap: None };
    let run = evolve_to_time(system, &grid, &data, until, 4, &mut [&mut rec, &mut snap]);
    let ok = record_failure(rep, "coupled evolution", &run);
    write_json(&document("hfoil-run/1", rep, &run), &out.join("run.json"))?;
    if cfg.run.snapshot {
        if let Some(s) = &snap.snap {
            let path = out.join("final.hfol");
            let io = |source| CliError::Io { path: path.clone(), source };
            let mut w = BufWriter::new(File::create(&path).map_err(io)?);
            s.write_to(&mut w).map_err(io)?;
        }
    }
    let mut outcome = CriterionOutcome {
        id: 7,
        name: "bootstrap-hierarchy",
        pass: false,
        measured: None,
        threshold: format!("fitted <= target + {}", cfg.hierarchy.tolerance),
        detail: String::new(),
    };
    if ok {
        let tables = rec.finish()?;
        let report = hierarchy_check(&tables, &cfg.hierarchy)?;
        emit_series(&tables.energies, Schema::Energy, &out.join("energy.csv"))?;
        emit_series(&tables.sups, Schema::Sup, &out.join("sup.csv"))?;
        emit_series(&report.lines, Schema::Hierarchy, &out.join("hierarchy.csv"))?;
        write_json(&document("hfoil-hierarchy/1", rep, &report), &out.join("hierarchy.json"))?;
        let excess = report.lines.iter().filter_map(|l| l.fitted.map(|f| f - l.target)).fold(f64::NEG_INFINITY, f64::max);
        for l in &report.lines {
            if let Some(f) = l.fitted {
                rep.exponents.insert(format!("hierarchy {}", l.id), f);
            }
        }
        let failed: Vec<&str> = report.lines.iter().filter(|l| !l.pass).map(|l| l.id.as_str()).collect();
        outcome.pass = report.pass() && run.s_reached >= r.until_s;
        outcome.measured = excess.is_finite().then_some(excess);
        outcome.detail = format!(
            "{} lines, largest fitted - target {}, s reached {:.3}{}",
            report.lines.len(),
            outcome.measured.map_or("n/a (all members vanish)".into(), |e| format!("{e:.4}")),
            run.s_reached,
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) }
        );
    } else {
        outcome.detail = format!("run stopped at t = {:.3}", run.t_final);
    }
    rep.criterion(outcome);
    if cfg.decay.enabled {
        decay(cfg, out, rep)?;
    }
    Ok(())
}

/// Flat-slice decay of a free Klein-Gordon field and of the coupled wave.
fn decay(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let k = &cfg.decay;
    let times = log_spaced(k.t_min, k.t_max, k.samples);
    let grid = GridSpec::radial(k.t_max + 5.0, k.dx, cfg.grid.courant);
    let runs = [
        ("free-kg", ModelParams::free(cfg.model.c), InitialData::bumps(k.t_init, 0.0, cfg.data.eps_v, k.width)),
        ("coupled", cfg.model.clone(), InitialData::bumps(k.t_init, cfg.data.eps_u, cfg.data.eps_v, k.width)),
    ];
    let mut rows: Vec<(&str, FlatSupRecord)> = Vec::new();
    let mut fits = Vec::new();
    let mut all_ok = true;
    for (name, params, data) in runs {
        let mut rec = FlatSupRecorder::new(&times, 1.0);
        let run = evolve_to_time(System::model(params), &grid, &data, k.t_max + 0.5 * grid.dt(), 4, &mut [&mut rec]);
        all_ok &= record_failure(rep, &format!("{name} decay run"), &run);
        rows.extend(rec.records.iter().map(|r| (name, *r)));
        let pick = |r: &FlatSupRecord| if name == "free-kg" { r.sup_v } else { r.sup_u };
        let series: Vec<(f64, f64)> = rec.records.iter().map(|r| (r.t, pick(r))).collect();
        let vanishes = series.iter().all(|p| p.1 == 0.0);
        fits.push((name, vanishes, fit_power_law(&series).ok().map(|f| f.exponent)));
    }
    emit_series(&rows, Schema::FlatSup, &out.join("flat_sup.csv"))?;
    let check = |i: usize, target: f64| -> (bool, String) {
        let (name, vanishes, e) = fits[i];
        match e {
            _ if vanishes => (true, format!("{name}: sup vanishes")),
            Some(e) => ((e - target).abs() <= 0.15, format!("{name}: {e:.4}")),
            None => (false, format!("{name}: no fit")),
        }
    };
    let (pv, dv) = check(0, -1.5);
    let (pu, du) = check(1, -1.0);
    for (name, _, e) in &fits {
        if let Some(e) = e {
            rep.exponents.insert(format!("decay {name}"), *e);
        }
    }
    rep.criterion(CriterionOutcome {
        id: 4,
        name: "decay-rates",
        pass: all_ok && pv && pu,
        measured: fits[0].2,
        threshold: "v: -1.5 +/- 0.15, u: -1.0 +/- 0.15".into(),
        detail: format!("{dv}; {du}"),
    });
    Ok(())
}

#[derive(Serialize)]
struct KgCase {
    amplitude: f64,
    dx: f64,
    run: RunRecord,
    reports: Vec<KgMarginReport>,
}

fn linear_kg_bound(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let r = &cfg.run;
    let data = cfg.data.build();
    let s_list = log_spaced(r.s_min, r.until_s, r.slices);
    let dxs = cfg.resolutions();
    let mut cases: Vec<KgCase> = Vec::new();
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut all_ok = true;
    for &amp in &r.kg_amplitudes {
        let h = if amp == 0.0 { MetricPerturbSpec::zero() } else { MetricPerturbSpec::cone_profile(amp) };
        let off = support_offset(&System::curved_kg(h.clone(), SourceSpec::zero(), cfg.model.c), &data);
        for &dx in &dxs {
            let mut probe = RayProbe::new(cfg.bounds.s0, r.until_s, cfg.bounds.dl, &RayProbe::standard_rapidities(cfg.bounds.s0, r.until_s));
            let grid = cfg.grid.spec(dx, probe.until_t() + 2.0);
            let run = record_kg_run(h.clone(), SourceSpec::zero(), &data, &grid, cfg.model.c, &mut probe);
            let ok = record_failure(rep, &format!("curved KG h={amp} dx={dx}"), &run);
            all_ok &= ok;
            let mut reports = Vec::new();
            if ok {
                for &c in &r.c_weights {
                    let params = BoundParams { c_weight: c, ..cfg.bounds.clone() };
                    let m = kg_bound_margin(&probe, &h, &SourceSpec::zero(), &params, &s_list, off)?;
                    for p in &m.per_s {
                        rows.push(vec![
                            amp.into(),
                            dx.into(),
                            c.into(),
                            p.s.into(),
                            p.max_ratio.into(),
                            p.rapidity.into(),
                            p.samples.into(),
                        ]);
                    }
                    reports.push(m);
                }
            }
            cases.push(KgCase { amplitude: amp, dx, run, reports });
        }
    }
    // refinement change between the two finest grids
    let mut worst: f64 = 0.0;
    let mut finite = true;
    let mut details = Vec::new();
    for &amp in &r.kg_amplitudes {
        let idx: Vec<usize> = (0..cases.len()).filter(|&i| cases[i].amplitude == amp).collect();
        let (Some(&fi), Some(&ci)) = (idx.last(), idx.iter().rev().nth(1)) else {
            finite = false;
            continue;
        };
        if cases[fi].reports.len() != r.c_weights.len() || cases[ci].reports.len() != r.c_weights.len() {
            finite = false;
            continue;
        }
        for (j, &c) in r.c_weights.iter().enumerate() {
            let (fine, coarse) = (cases[fi].reports[j].max_ratio, cases[ci].reports[j].max_ratio);
            finite &= fine.is_finite() && coarse.is_finite() && fine > 0.0;
            let d = (fine - coarse).abs() / fine;
            worst = worst.max(d);
            cases[fi].reports[j].refinement_delta = Some(d);
            details.push(format!("h={amp} C={c}: {fine:.5} ({:+.2}%)", 100.0 * (fine - coarse) / fine));
        }
    }
    emit_series(&rows, Schema::KgMargin, &out.join("kg_margin.csv"))?;
    write_json(&document("hfoil-kg-margin/1", rep, serde_json::json!({ "cases": &cases })), &out.join("kg_margin.json"))?;
    rep.exponents.insert("kg refinement change".into(), worst);
    rep.criterion(CriterionOutcome {
        id: 5,
        name: "kg-envelope-margin",
        pass: all_ok && finite && worst < 0.1,
        measured: Some(worst),
        threshold: "finite max ratio, refinement change < 0.1".into(),
        detail: details.join("; "),
    });
    Ok(())
}

#[derive(Serialize)]
struct WaveCase {
    dx: f64,
    run: RunRecord,
    report: Option<WaveMarginReport>,
}

fn linear_wave_bound(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let r = &cfg.run;
    let times = log_spaced(r.t_min, r.t_max, r.samples);
    let dxs = cfg.resolutions();
    let mut cases = Vec::new();
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut pass = true;
    let mut details = Vec::new();
    let mut worst_change: f64 = 0.0;
    for &[mu, nu] in &r.wave_pairs {
        let mut maxima = Vec::new();
        for &dx in &dxs {
            let mut probe = WaveProbe::new(mu, nu, &times)?;
            let grid = cfg.grid.spec(dx, r.t_max + 2.0);
            let run = solve_linear_wave_sourced(wave_source(mu, nu), &grid, cfg.data.t_init, r.t_max + 0.5 * grid.dt(), &mut [&mut probe]);
            let ok = record_failure(rep, &format!("sourced wave mu={mu} nu={nu} dx={dx}"), &run);
            let report = if ok { Some(wave_bound_margin(&probe)?) } else { None };
            if let Some(m) = &report {
                for s in &m.samples {
                    rows.push(vec![mu.into(), nu.into(), dx.into(), s.t.into(), s.max_ratio.into(), s.r_at.into(), s.sup_u.into()]);
                }
                maxima.push(m.max_ratio);
                if let Some(g) = m.growth_exponent {
                    rep.exponents.insert(format!("wave ratio growth mu={mu} nu={nu} dx={dx}"), g);
                }
            } else {
                pass = false;
            }
            cases.push((mu, nu, WaveCase { dx, run, report }));
        }
        if maxima.len() == dxs.len() {
            let (fine, coarse) = (maxima[maxima.len() - 1], maxima[maxima.len() - 2]);
            let change = (fine - coarse).abs() / fine;
            worst_change = worst_change.max(change);
            pass &= fine.is_finite() && fine <= 1.0 && change < 0.1;
            details.push(format!("({mu}, {nu}): max ratio {fine:.5}, change {:.2}%", 100.0 * change));
            if let Some((_, _, c)) = cases.last_mut() {
                if let Some(m) = c.report.as_mut() {
                    m.refinement_delta = Some(change);
                }
            }
        }
    }
    emit_series(&rows, Schema::WaveMargin, &out.join("wave_margin.csv"))?;
    #[derive(Serialize)]
    struct Entry<'a> {
        mu: f64,
        nu: f64,
        #[serde(flatten)]
        case: &'a WaveCase,
    }
    let entries: Vec<Entry> = cases.iter().map(|(mu, nu, case)| Entry { mu: *mu, nu: *nu, case }).collect();
    write_json(&document("hfoil-wave-margin/1", rep, serde_json::json!({ "entries": &entries })), &out.join("wave_margin.json"))?;
    rep.criterion(CriterionOutcome {
        id: 6,
        name: "wave-envelope-margin",
        pass,
        measured: Some(worst_change),
        threshold: "max ratio <= 1 on every grid pair, refinement change < 0.1".into(),
        detail: details.join("; "),
    });
    Ok(())
}

fn sobolev_suite(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let r = &cfg.run;
    let family = sobolev_family(r.members, cfg.seed);
    let s_list = log_spaced(r.s_min, r.until_s, r.slices);
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    let mut pass = true;
    for m in &family {
        let mut ratios = Vec::new();
        for &s in &s_list {
            let q = sobolev_ratio_at(m, s, cfg.grid.dx)?;
            rows.push(vec![m.name.as_str().into(), s.into(), q.into()]);
            ratios.push(q);
        }
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        pass &= lo > 0.0 && spread.is_finite() && spread < 1.5;
        worst = worst.max(spread);
        details.push(format!("{} {:.4}", m.name, spread));
    }
    emit_series(&rows, Schema::Sobolev, &out.join("sobolev.csv"))?;
    write_json(&document("hfoil-sobolev-family/1", rep, serde_json::json!({ "members": &family })), &out.join("sobolev_family.json"))?;
    rep.criterion(CriterionOutcome {
        id: 3,
        name: "sobolev-ratio",
        pass,
        measured: Some(worst),
        threshold: "max/min over s < 1.5 per member".into(),
        detail: details.join("; "),
    });
    Ok(())
}

fn frame_identity_suite(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let dxs = cfg.resolutions();
    let mut rows = Vec::new();
    let mut worst = f64::INFINITY;
    let mut details = Vec::new();
    for field in FRAME_FIELDS {
        let mut errs = Vec::new();
        for &dx in &dxs {
            let row = frame_identity(field, dx)?;
            errs.push(row.max_discrepancy);
            rows.push(vec![row.field.into(), dx.into(), row.max_discrepancy.into(), row.nodes.into()]);
        }
        let orders = observed_orders(&errs);
        let o = orders.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.min(o);
        rep.exponents.insert(format!("frame order {}", field.0), o);
        details.push(format!("{}: {}", field.0, orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")));
    }
    emit_series(&rows, Schema::Frame, &out.join("frame.csv"))?;
    rep.criterion(CriterionOutcome {
        id: 1,
        name: "frame-identity",
        pass: worst >= 1.9,
        measured: Some(worst),
        threshold: "order >= 1.9".into(),
        detail: details.join("; "),
    });
    Ok(())
}

fn convergence_suite(cfg: &RunConfig, out: &Path, rep: &mut ReportSummary) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut errs = Vec::new();
    for dx in cfg.resolutions() {
        let n = manufactured_defect(&cfg.model, dx, cfg.grid.courant)?;
        errs.push(n.max());
        rows.push(vec![dx.into(), n.max_u.into(), n.max_v.into(), n.l2_u.into(), n.l2_v.into()]);
    }
    emit_series(&rows, Schema::Residual, &out.join("residual.csv"))?;
    let orders = observed_orders(&errs);
    let order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    rep.exponents.insert("manufactured order".into(), order);
    rep.criterion(CriterionOutcome {
        id: 8,
        name: "manufactured-convergence",
        pass: order >= 1.9,
        measured: Some(order),
        threshold: "order >= 1.9".into(),
        detail: format!("orders {}", orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")),
    });

    let data = InitialData { v0: Expr::constant(0.0), ..cfg.data.build() };
    let s_list = log_spaced(cfg.run.s_min, cfg.run.until_s, cfg.run.slices);
    let mut drift_rows: Vec<DriftRow> = Vec::new();
    let mut worst = Vec::new();
    for &dx in &cfg.run.drift_resolutions {
        let rows = energy_drift(&data, dx, cfg.run.drift_courant, &s_list)?;
        worst.push(rows.iter().map(|r| r.relative_drift).fold(0.0, f64::max));
        drift_rows.extend(rows);
    }
    let cells: Vec<Vec<Cell>> =
        drift_rows.iter().map(|r| vec![r.dx.into(), r.s.into(), r.energy.into(), r.relative_drift.into()]).collect();
    emit_series(&cells, Schema::Drift, &out.join("drift.csv"))?;
    let (coarse, fine) = (worst[0], worst[1]);
    rep.criterion(CriterionOutcome {
        id: 2,
        name: "energy-conservation",
        pass: coarse < 0.01 && fine < 0.0025,
        measured: Some(fine),
        threshold: "drift < 1% at the first spacing, < 0.25% at the second".into(),
        detail: format!("drift {:.4}% at dx {}, {:.4}% at dx {}", 100.0 * coarse, cfg.run.drift_resolutions[0], 100.0 * fine, cfg.run.drift_resolutions[1]),
    });
    Ok(())
}
