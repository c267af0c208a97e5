use std::sync::OnceLock;

use nirenberg_core::bubbles::{bubble_spectrum, greens_function};
use nirenberg_core::geometry::geodesic_distance;
use nirenberg_core::*;
use proptest::prelude::*;

const L: usize = 6;

fn plan() -> &'static SpectralPlan {
    static PLAN: OnceLock<SpectralPlan> = OnceLock::new();
    PLAN.get_or_init(|| SpectralPlan::standard(L).unwrap())
}

fn point() -> impl Strategy<Value = SpherePoint> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("away from the origin", |x| x.iter().map(|c| c * c).sum::<f64>() > 0.05)
        .prop_map(|x| SpherePoint::normalize(x).unwrap())
}

fn spectrum() -> impl Strategy<Value = HarmonicSpectrum> {
    let n = HarmonicSpectrum::zeros(L).coeffs().len();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(|c| HarmonicSpectrum::from_coeffs(L, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transform_round_trip(s in spectrum()) {
        let back = plan().forward_values(&plan().inverse_values(&s).unwrap()).unwrap();
        prop_assert!(back.axpy(-1.0, &s).unwrap().l2_norm() <= 1e-12 * (1.0 + s.l2_norm()));
    }

    #[test]
    fn parseval(s in spectrum()) {
        let vals = plan().inverse_values(&s).unwrap();
        let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
        let int = plan().grid().integrate_values(&sq);
        prop_assert!((int - s.l2_norm().powi(2)).abs() <= 1e-11 * (1.0 + int));
    }

    #[test]
    fn half_laplacian_inverts(s in spectrum()) {
        let b = s.apply_p_sigma(false).apply_p_sigma(true);
        prop_assert!(b.axpy(-1.0, &s).unwrap().l2_norm() <= 1e-14 * (1.0 + s.l2_norm()));
        let h = s.hsigma_norm().powi(2);
        prop_assert!((h - s.l2_inner(&s.apply_p_sigma(false)).unwrap()).abs() <= 1e-12 * (1.0 + h));
    }

    #[test]
    fn evaluation_matches_synthesis(s in spectrum(), p in point()) {
        let direct = s.eval_at(&p);
        let z = ZonalSpectrum::from_full(&s, p);
        // The zonal projection about p keeps the value at p.
        prop_assert!((z.eval(0.0) - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
    }

    #[test]
    fn bubble_energy_is_constant(p in point(), t in 1.0f64..1.5) {
        // ⟨δ, δ⟩ = 2π² for every rate; at t ≤ 1.5 the degree-30 tail is negligible.
        let s = bubble_spectrum(&BubbleParams::unit(p, t).unwrap(), 30);
        let e = s.hsigma_norm().powi(2);
        prop_assert!((e / (2.0 * std::f64::consts::PI.powi(2)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn greens_function_is_symmetric(p in point(), q in point()) {
        prop_assume!(geodesic_distance(&p, &q) > 1e-3);
        let a = greens_function(&p, &q).unwrap();
        let b = greens_function(&q, &p).unwrap();
        prop_assert!(a > 0.0 && (a - b).abs() <= 1e-14 * a);
    }
}
