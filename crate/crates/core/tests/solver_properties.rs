use nirenberg_core::asymptotics::loglog_slope;
use nirenberg_core::branch::diagnostics;
use nirenberg_core::bubbles::bubble_spectrum;
use nirenberg_core::geometry::geodesic_distance;
use nirenberg_core::solver::{
    constant_guess, energy_stationarity, jacobian_apply, newton, taylor_remainders, FullDiscretization,
    ZonalDiscretization,
};
use nirenberg_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn poly(s: &str) -> AmbientPolynomial {
    s.parse().unwrap()
}

fn height() -> AmbientPolynomial {
    poly("x4 + 2")
}

#[test]
fn zonal_and_full_agree() {
    let k = height();
    let tau = 0.2;
    let l = 16;
    let c = constant_guess(&k, tau);
    let full = newton_solve(&HarmonicSpectrum::constant(l, c), tau, &k, &SolverOptions::default()).unwrap();
    let zon = axisym_solve(&k, tau, &ZonalSpectrum::constant(l, SpherePoint::north(), c), &SolverOptions::default()).unwrap();
    assert!(full.converged() && zon.converged());
    let diff = full.v.to_full().axpy(-1.0, &zon.v.to_full()).unwrap().l2_norm();
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn constant_seed_converges_positive() {
    let k = height();
    let s = newton_solve(&HarmonicSpectrum::constant(8, constant_guess(&k, 0.5)), 0.5, &k, &SolverOptions::default()).unwrap();
    assert!(s.converged());
    assert!(s.positive && s.min_value > 0.0);
    assert!(s.residual_norm <= 1e-9 * s.nonlinear_norm);
}

#[test]
fn taylor_remainder_is_second_order() {
    let k = poly("x4 + 0.3*x1*x3 + 2");
    let d = FullDiscretization::new(&k, 8, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = HarmonicSpectrum::zeros(8).coeffs().len();
    let mut v = HarmonicSpectrum::constant(8, 0.6);
    v.coeffs_mut().iter_mut().skip(1).for_each(|c| *c = 0.05 * rng.gen_range(-1.0..1.0));
    let w = HarmonicSpectrum::from_coeffs(8, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let e = taylor_remainders(&d, &Solution::Full(v), 0.3, &Solution::Full(w), &hs);
    let slope = loglog_slope(&hs, &e).unwrap();
    assert!(slope >= 1.9, "{slope} {e:?}");

    let kz = height();
    let dz = ZonalDiscretization::new(&kz, SpherePoint::north(), 32).unwrap();
    let vz = ZonalSpectrum::from_coeffs(SpherePoint::north(), (0..=32).map(|l| 0.7f64.powi(l as i32 + 1)).collect()).unwrap();
    let wz = ZonalSpectrum::from_coeffs(SpherePoint::north(), (0..=32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let e = taylor_remainders(&dz, &Solution::Zonal(vz), 0.1, &Solution::Zonal(wz), &hs);
    let slope = loglog_slope(&hs, &e).unwrap();
    assert!(slope >= 1.9, "{slope} {e:?}");
}

#[test]
fn converged_states_are_stationary() {
    let k = poly("x4 + 0.5*x1*x2 + 2");
    let d = FullDiscretization::new(&k, 10, 4).unwrap();
    let v0 = Solution::Full(HarmonicSpectrum::constant(10, constant_guess(&k, 0.3)));
    let s = newton(&d, &v0, 0.3, &SolverOptions::default()).unwrap();
    assert!(s.converged());
    let worst = energy_stationarity(&d, &s.v, 0.3, 50, 11);
    assert!(worst <= 1e-6, "{worst}");
    // The Jacobian at the solution is not the identity on the constants.
    let e0 = Solution::Full(HarmonicSpectrum::constant(10, 1.0));
    assert!(jacobian_apply(&d, &s.v, 0.3, &e0)[0].abs() > 1e-3);
}

#[test]
fn rotated_curvature_gives_rotated_solution() {
    let k = poly("x4 + 0.5*x1*x2 - 0.2*x3 + 2");
    let r = Rotation4::plane(0, 3, 0.7).unwrap().compose(&Rotation4::plane(1, 2, -0.4).unwrap());
    let kr = k.compose_rotation(&r);
    let tau = 0.4;
    let l = 10;
    let a = newton_solve(&HarmonicSpectrum::constant(l, constant_guess(&k, tau)), tau, &k, &SolverOptions::default()).unwrap();
    let b = newton_solve(&HarmonicSpectrum::constant(l, constant_guess(&kr, tau)), tau, &kr, &SolverOptions::default()).unwrap();
    assert!(a.converged() && b.converged());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let p = SpherePoint::normalize([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap();
        let lhs = b.v.eval_at(&p);
        let rhs = a.v.eval_at(&r.apply(&p));
        assert!((lhs - rhs).abs() < 1e-8 * rhs.abs(), "{lhs} {rhs}");
    }
}

#[test]
fn warm_start_from_reduced_model_concentrates_at_maximum() {
    let k = height();
    let tau = 0.05;
    let crit = find_critical_points(&k, 256, 0).unwrap();
    let maxima: Vec<_> = crit.points.iter().filter(|p| p.morse_index == 3).cloned().collect();
    let pred = solve_f_critical(&maxima, &k, tau, 1.0).unwrap();
    let b = BubbleParams::new(pred.points[0], pred.t_star[0], 1.0 / k.eval_at(&pred.points[0])).unwrap();
    let s = newton_solve(&bubble_spectrum(&b, 16), tau, &k, &SolverOptions::default()).unwrap();
    assert!(s.converged() && s.positive);
    let d = diagnostics(&s, &k, 1, &crit.points).unwrap();
    let top = &d.peaks[0];
    assert!(geodesic_distance(&top.location, &SpherePoint::north()) < 1e-6);
    assert!(top.height > 2.0, "{}", top.height);
}

#[test]
fn bubble_residual_vanishes_at_critical_exponent() {
    let k = poly("1");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let p = SpherePoint::normalize([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap();
        // Truncation leaves a tail of size ((t−1)/(t+1))^L in the square.
        let b = BubbleParams::unit(p, rng.gen_range(1.0..2.5)).unwrap();
        let v = bubble_spectrum(&b, 24);
        let r = residual(&v, 0.0, &k).unwrap();
        assert!(r.l2_norm() <= 1e-6 * v.l2_norm(), "{}", r.l2_norm() / v.l2_norm());
    }
}
