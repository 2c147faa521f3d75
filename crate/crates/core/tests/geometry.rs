//! Invariants of the geometry kernels and the fitting helpers.

use hyperfoil::analysis::{fit_power_law, log_spaced};
use hyperfoil::geometry::{
    box_cartesian, box_semihyperboloidal, hyperbolic_radius, lagrange4, ratio_s, FieldHistory, GridPoint, Lattice,
    SpacetimePoint,
};
use proptest::prelude::*;

/// `Σ c_k m_k` over the ten monomials of degree ≤ 2 in `(t, x¹, x², x³)`, and
/// its exact `□ = −∂_t² + Δ`.
fn quadratic(c: &[f64; 10]) -> (impl Fn(f64, [f64; 3]) -> f64 + Sync + '_, f64) {
    let f = move |t: f64, x: [f64; 3]| {
        c[0] * t * t + c[1] * x[0] * x[0] + c[2] * x[1] * x[1] + c[3] * x[2] * x[2]
            + c[4] * t * x[0] + c[5] * t * x[1] + c[6] * x[0] * x[2] + c[7] * t + c[8] * x[1] + c[9]
    };
    (f, 2.0 * (-c[0] + c[1] + c[2] + c[3]))
}

proptest! {
    #[test]
    fn both_boxes_are_exact_on_quadratics(
        c in prop::array::uniform10(-1.0f64..1.0),
        cx in 0.0f64..2.0,
        t0 in 4.0f64..8.0,
        dx in 0.02f64..0.2,
    ) {
        let (f, exact) = quadratic(&c);
        let lat = Lattice::centered([cx, 0.3, -0.2], 3, dx);
        let h = FieldHistory::from_fn(lat, 0.5 * dx, t0, -3..4, f);
        let p = GridPoint::new(0, [3, 3, 3]);
        let scale = 1.0 + t0 * t0;
        prop_assert!((box_cartesian(&h, p).unwrap() - exact).abs() < 1e-8 * scale);
        prop_assert!((box_semihyperboloidal(&h, p).unwrap() - exact).abs() < 1e-8 * scale);
    }

    #[test]
    fn points_on_a_slice_have_its_radius(s in 0.5f64..50.0, x in prop::array::uniform3(-40.0f64..40.0)) {
        let p = SpacetimePoint::on_slice(s, x);
        let got = hyperbolic_radius(&p).unwrap();
        prop_assert!((got - s).abs() < 1e-12 * (1.0 + p.t * p.t / s));
    }

    #[test]
    fn ratio_s_is_the_entry_radius(t in 1.5f64..100.0, q in 0.0f64..0.95) {
        // the ray through (t, qt) meets t − r = 1 at t_e = 1/(1 − q), where s = sqrt(2t_e − 1)
        let te = 1.0 / (1.0 - q);
        let s_entry = (2.0 * te - 1.0).sqrt();
        let got = ratio_s(t, q * t).unwrap();
        prop_assert!((got - s_entry).abs() < 1e-10 * s_entry);
    }

    #[test]
    fn lagrange_weights_reproduce_cubics(
        base in -5.0f64..5.0,
        gaps in prop::array::uniform3(0.05f64..1.0),
        frac in 0.0f64..1.0,
        c in prop::array::uniform4(-2.0f64..2.0),
    ) {
        let ts = [base, base + gaps[0], base + gaps[0] + gaps[1], base + gaps[0] + gaps[1] + gaps[2]];
        let t = ts[1] + frac * gaps[1];
        let w = lagrange4(ts, t);
        let cubic = |t: f64| c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
        let got: f64 = w.iter().zip(ts).map(|(w, x)| w * cubic(x)).sum();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((got - cubic(t)).abs() < 1e-7 * (1.0 + cubic(t).abs() + 200.0));
    }

    #[test]
    fn power_laws_fit_exactly(a in -3.0f64..1.0, pre in 1e-6f64..1e3, n in 8usize..40) {
        let series: Vec<(f64, f64)> = log_spaced(5.0, 50.0, n).into_iter().map(|s| (s, pre * s.powf(a))).collect();
        let fit = fit_power_law(&series).unwrap();
        prop_assert!((fit.exponent - a).abs() < 1e-9);
        prop_assert!((fit.prefactor / pre - 1.0).abs() < 1e-8);
        prop_assert!(fit.width < 1e-8);
    }
}
