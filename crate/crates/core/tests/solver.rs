//! Evolution against independent oracles: radial/3D agreement, finite
//! propagation, the retarded integral of a radial source.

use hyperfoil::expr::Expr;
use hyperfoil::solver::{
    evolve_to_time, solve_linear_wave_sourced, GridSpec, History, InitialData, ModelParams, SourceSpec, Support,
    System,
};
use hyperfoil::solver::snapshot::Snapshot;

/// Latest `(r or x-axis coordinate, u)` pairs once the run reaches `t`.
fn profile_at(system: System, grid: &GridSpec, data: &InitialData, t: f64) -> (f64, Vec<(f64, f64)>) {
    let mut out = (0.0, Vec::new());
    let mut obs = |h: History<'_>| {
        out.0 = h.t();
        out.1 = match h {
            History::Radial(r) => r.grid.r.iter().copied().zip(r.latest().u.iter().copied()).collect(),
            History::Cartesian(c) => {
                let lat = c.lattice();
                let u = c.u.latest().unwrap();
                (0..lat.len())
                    .filter_map(|k| {
                        let i = lat.unflat(k);
                        let x = lat.coord([i[0] as i64, i[1] as i64, i[2] as i64]);
                        (x[1].abs() < 1e-12 && x[2].abs() < 1e-12 && x[0] >= 0.0).then_some((x[0], u[k]))
                    })
                    .collect()
            }
        };
        Ok(())
    };
    let run = evolve_to_time(system, grid, data, t, 4, &mut [&mut obs]);
    assert!(run.ok(), "{:?}", run.failure);
    out
}

fn lerp(p: &[(f64, f64)], r: f64) -> f64 {
    let k = p.partition_point(|q| q.0 <= r).clamp(1, p.len() - 1);
    let ((r0, a), (r1, b)) = (p[k - 1], p[k]);
    a + (b - a) * (r - r0) / (r1 - r0)
}

#[test]
fn cartesian_runs_converge_to_the_radial_run() {
    let params = ModelParams::isotropic(0.3, 0.2, 0.5, 0.1, -0.05, 1.0);
    let data = InitialData::bumps(2.0, 0.5, 0.5, 1.0);
    let (t_r, radial) = profile_at(System::model(params.clone()), &GridSpec::radial(4.0, 0.00625, 0.5), &data, 2.6);
    let mut mismatch = Vec::new();
    for dx in [0.05, 0.025] {
        let (t_c, axis) = profile_at(System::model(params.clone()), &GridSpec::full_3d(1.8, dx, 0.4), &data, 2.6);
        assert!((t_r - t_c).abs() < 1e-9, "{t_r} vs {t_c}");
        let peak = axis.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let worst = axis.iter().map(|&(x, u)| (u - lerp(&radial, x)).abs()).fold(0.0, f64::max);
        mismatch.push(worst / peak);
    }
    // the steep bump edge keeps the coarse pair short of second order
    assert!(mismatch[1] < 0.05, "{mismatch:?}");
    assert!(mismatch[0] / mismatch[1] > 2.5, "{mismatch:?}");
}

#[test]
fn stencil_cone_bounds_the_support() {
    let params = ModelParams::isotropic(0.3, 0.2, 0.5, 0.1, -0.05, 1.0);
    let data = InitialData::bumps(2.0, 0.5, 0.5, 0.5);
    for grid in [GridSpec::radial(6.0, 0.05, 0.5), GridSpec::full_3d(2.5, 0.1, 0.4)] {
        let (t, p) = profile_at(System::model(params.clone()), &grid, &data, 3.0);
        // one node per step in each direction, plus the stencil half-width
        let reach = 0.5 + (t - 2.0) / grid.courant + 2.0 * grid.dx;
        assert!(p.iter().filter(|q| q.0 > reach).all(|q| q.1 == 0.0), "{:?}", grid.mode);
        let physical = 0.5 + (t - 2.0);
        let peak = p.iter().map(|q| q.1.abs()).fold(0.0, f64::max);
        let beyond = p.iter().filter(|q| q.0 > physical + 0.3).map(|q| q.1.abs()).fold(0.0, f64::max);
        assert!(beyond < 1e-2 * peak, "{:?}: {beyond} beyond the light cone, peak {peak}", grid.mode);
    }
}

/// Source of the retarded-integral check.
fn source(t: f64, r: f64) -> f64 {
    let q = r / 1.5;
    let bump = if q < 1.0 { (1.0 - 1.0 / (1.0 - q * q)).exp() } else { 0.0 };
    bump * (t - 2.0) * (-(t - 2.0)).exp()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + inner + f(b)) * h / 3.0
}

/// `u(t, r) = ∫ dτ (1/2r) ∫_{|r−R|}^{r+R} ρ F(τ, ρ) dρ` with `R = t − τ`.
fn retarded(t: f64, r: f64) -> f64 {
    simpson(
        |tau| {
            let big_r = t - tau;
            let (lo, hi) = ((r - big_r).abs(), (r + big_r).min(1.5));
            if hi <= lo {
                return 0.0;
            }
            simpson(|rho| rho * source(tau, rho), lo, hi, 800) / (2.0 * r)
        },
        2.0,
        t,
        800,
    )
}

#[test]
fn sourced_wave_matches_the_retarded_integral() {
    let f = Expr::radial_bump(1.0, [0.0; 3], 1.5) * (Expr::t() - 2.0) * (-(Expr::t() - 2.0)).exp();
    let spec = SourceSpec::new(f, Support::Ball { radius: 1.5 }, true);
    let grid = GridSpec::radial(8.0, 0.0125, 0.5);
    let mut p = (0.0, Vec::new());
    let mut obs = |h: History<'_>| {
        if let History::Radial(r) = h {
            p = (r.latest().t, r.grid.r.iter().copied().zip(r.latest().u.iter().copied()).collect::<Vec<_>>());
        }
        Ok(())
    };
    let run = solve_linear_wave_sourced(spec, &grid, 2.0, 4.5, &mut [&mut obs]);
    assert!(run.ok());
    let (t, prof) = p;
    assert!((t - 4.5).abs() < 1e-9);
    for r in [0.50625, 1.00625, 2.00625] {
        let want = retarded(t, r);
        let got = lerp(&prof, r);
        assert!(want.abs() > 1e-3);
        assert!(((got - want) / want).abs() < 0.01, "r = {r}: {got} vs {want}");
    }
}

#[test]
fn snapshot_survives_a_file_round_trip() {
    let data = InitialData::bumps(2.0, 0.3, 0.2, 0.6);
    let mut snap = None;
    let mut obs = |h: History<'_>| {
        snap = Some(Snapshot::capture(h));
        Ok(())
    };
    let run = evolve_to_time(System::model(ModelParams::free(1.0)), &GridSpec::full_3d(1.5, 0.1, 0.4), &data, 2.4, 4, &mut [&mut obs]);
    assert!(run.ok());
    let snap = snap.unwrap();
    assert_eq!((snap.mode, snap.dims, snap.times.len()), (1, [31, 31, 31], 4));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.hfol");
    snap.write_to(&mut std::fs::File::create(&path).unwrap()).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"HFOL");
    assert_eq!(bytes.len(), 53 + 8 * 4 + 16 * 4 * 31 * 31 * 31);
    let back = Snapshot::read_from(&mut bytes.as_slice()).unwrap();
    assert_eq!(back, snap);
}


