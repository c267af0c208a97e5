//! The standard bubble family on S³, its spectra and derivatives, the
//! Green's function of the half-Laplacian, and peak-resolved interaction
//! integrals.
//!
//! `δ_{P,t}(x) = t / (1 + ((t² − 1)/2)(1 − cos d(x, P)))` solves
//! `P_{1/2} δ = δ²`. Its harmonic expansion is closed-form:
//! `δ_{P,t} = (4t/(t+1)²) Σ_l s^l U_l(P·x)` with `s = (t − 1)/(t + 1)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axpy4, dot4, geodesic_distance, norm4, SpherePoint, Vec4};
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};
use crate::spectrum::HarmonicSpectrum;
use crate::transform::SpectralPlan;
use crate::zonal::ZonalSpectrum;

/// `|S³|`.
pub const SPHERE3_AREA: f64 = 2.0 * PI * PI;
/// `|S²|`.
pub const SPHERE2_AREA: f64 = 4.0 * PI;

/// `t²⟨∂_t δ, ∂_t δ⟩`, numerically determined from the closed-form series
/// (see [`dt_norm_sq`]); it agrees with `π²` to machine precision.
pub const GAMMA_DT: f64 = 9.869_604_401_089_358;
/// `lim_{t→∞} t⁻²⟨∂_P δ, ∂_P δ⟩` along a unit tangent direction,
/// numerically determined from [`dp_norm_sq`] at `t = 10⁵`; it agrees with
/// `π²/4` to the digits shown.
pub const GAMMA_DP: f64 = 2.467_401_1;
/// `∫_{R³} |y|² w⁴ dy` with `w = 2/(1 + |y|²)`, the limit integral behind the
/// gradient-in-P coefficient. Numerically determined by
/// [`measure_gradient_limit_integral`]; it agrees with `2π²`.
pub const GRADIENT_LIMIT_INTEGRAL: f64 = 19.739_208_802_178_716;

/// Location, concentration rate and amplitude of one bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub p: SpherePoint,
    pub t: f64,
    pub alpha: f64,
}

impl BubbleParams {
    /// `t ≥ 1` (the value `t = 1` is the constant member) and `alpha > 0`.
    pub fn new(p: SpherePoint, t: f64, alpha: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 1.0) {
            return Err(Error::Domain(format!("concentration rate {t} must be >= 1")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Domain(format!("amplitude {alpha} must be > 0")));
        }
        Ok(BubbleParams { p, t, alpha })
    }

    /// Unit-amplitude bubble.
    pub fn unit(p: SpherePoint, t: f64) -> Result<Self> {
        Self::new(p, t, 1.0)
    }
}

/// What [`eval_bubble`] returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BubbleDerivative {
    Value,
    /// `∂δ/∂t`.
    Rate,
    /// Derivative in the location along a tangent direction at `P`.
    Location(Vec4),
}

/// `δ_{P,t}` as a function of `c = cos d(x, P)`.
#[inline]
pub fn bubble_profile(t: f64, cos_d: f64) -> f64 {
    t / denominator(t, 1.0 - cos_d)
}

#[inline]
fn denominator(t: f64, one_minus_c: f64) -> f64 {
    1.0 + 0.5 * (t * t - 1.0) * one_minus_c
}

/// `∂δ/∂t` as a function of `1 − cos d`.
#[inline]
pub fn bubble_rate_profile(t: f64, one_minus_c: f64) -> f64 {
    let d = denominator(t, one_minus_c);
    (d - t * t * one_minus_c) / (d * d)
}

/// Evaluates `δ_{P,t}(x)` or a derivative (amplitude not applied).
pub fn eval_bubble(b: &BubbleParams, x: &SpherePoint, deriv: BubbleDerivative) -> f64 {
    let omc = one_minus_cos(&b.p, x);
    match deriv {
        BubbleDerivative::Value => b.t / denominator(b.t, omc),
        BubbleDerivative::Rate => bubble_rate_profile(b.t, omc),
        BubbleDerivative::Location(dir) => {
            let e = b.p.project_tangent(&dir);
            let d = denominator(b.t, omc);
            0.5 * b.t * (b.t * b.t - 1.0) * dot4(&e, x.coords()) / (d * d)
        }
    }
}

/// `1 − p·q` computed as `|p − q|²/2` to keep relative accuracy near `p = q`.
#[inline]
pub fn one_minus_cos(p: &SpherePoint, q: &SpherePoint) -> f64 {
    let diff = axpy4(-1.0, q.coords(), p.coords());
    0.5 * dot4(&diff, &diff)
}

/// `G_p(q) = 1/(1 − cos d(p, q))`.
pub fn greens_function(p: &SpherePoint, q: &SpherePoint) -> Result<f64> {
    let omc = one_minus_cos(p, q);
    if omc < 1e-28 {
        return Err(Error::Domain("Green's function at coincident points".into()));
    }
    Ok(1.0 / omc)
}

/// `⟨u, v⟩ = ∫ (P_{1/2} u) v`.
pub fn hsigma_inner(u: &HarmonicSpectrum, v: &HarmonicSpectrum) -> Result<f64> {
    u.hsigma_inner(v)
}

/// Zonal coefficients (about the bubble centre) of `δ_{P,t}` up to `l_max`.
pub fn bubble_zonal_coeffs(t: f64, l_max: usize) -> Vec<f64> {
    let s = (t - 1.0) / (t + 1.0);
    let k = PI * SQRT_2 * 4.0 * t / ((t + 1.0) * (t + 1.0));
    let mut out = Vec::with_capacity(l_max + 1);
    let mut sl = 1.0;
    for _ in 0..=l_max {
        out.push(k * sl);
        sl *= s;
    }
    out
}

/// Zonal coefficients of `∂δ/∂t`.
pub fn bubble_rate_zonal_coeffs(t: f64, l_max: usize) -> Vec<f64> {
    let tp = t + 1.0;
    let s = (t - 1.0) / tp;
    let c0 = PI * SQRT_2 * 4.0 * (1.0 - t) / (tp * tp * tp);
    let c1 = PI * SQRT_2 * 8.0 * t / (tp * tp * tp * tp);
    let mut out = Vec::with_capacity(l_max + 1);
    let mut sl = 1.0; // s^l
    let mut slm1 = 0.0; // s^{l-1}
    for l in 0..=l_max {
        out.push(c0 * sl + c1 * l as f64 * slm1);
        slm1 = sl;
        sl *= s;
    }
    out
}

/// `α δ_{P,t}` as a zonal spectrum about `P`.
pub fn bubble_zonal(b: &BubbleParams, l_max: usize) -> ZonalSpectrum {
    let c = bubble_zonal_coeffs(b.t, l_max).into_iter().map(|c| b.alpha * c).collect();
    ZonalSpectrum::from_coeffs(b.p, c).expect("non-empty")
}

/// `α δ_{P,t}` truncated at degree `l_max`.
pub fn bubble_spectrum(b: &BubbleParams, l_max: usize) -> HarmonicSpectrum {
    bubble_zonal(b, l_max).to_full()
}

/// `α ∂δ/∂t` truncated at degree `l_max`.
pub fn bubble_rate_spectrum(b: &BubbleParams, l_max: usize) -> HarmonicSpectrum {
    let c = bubble_rate_zonal_coeffs(b.t, l_max).into_iter().map(|c| b.alpha * c).collect();
    ZonalSpectrum::from_coeffs(b.p, c).expect("non-empty").to_full()
}

/// `α ∂δ/∂P` along `dir` (projected to the tangent space), by quadrature
/// projection of the closed-form derivative on the plan's grid.
pub fn bubble_location_spectrum(b: &BubbleParams, dir: &Vec4, plan: &SpectralPlan) -> Result<HarmonicSpectrum> {
    let field = crate::spectrum::SphericalField::from_fn(plan.grid(), |x| {
        b.alpha * eval_bubble(b, x, BubbleDerivative::Location(*dir))
    });
    plan.forward(&field)
}

/// Truncation tail of `⟨δ, δ⟩` beyond degree `l_max`; the spectral
/// identities are trusted when this is small.
pub fn bubble_tail(t: f64, l_max: usize) -> f64 {
    let s2 = ((t - 1.0) / (t + 1.0)).powi(2);
    let k = 32.0 * PI * PI * t * t / (t + 1.0).powi(4);
    // Σ_{l>L} (l+1) s^{2l}
    let n = l_max as f64 + 1.0;
    k * s2.powf(n) * ((n + 1.0) - n * s2) / ((1.0 - s2) * (1.0 - s2))
}

/// `⟨δ, δ⟩` from the closed-form series (all degrees), `= |S³|`.
pub fn norm_sq(t: f64) -> f64 {
    series_sum(t, |l, a, _| (l + 1.0) * a * a)
}

/// `⟨∂_t δ, ∂_t δ⟩` from the closed-form series.
pub fn dt_norm_sq(t: f64) -> f64 {
    series_sum(t, |l, _, da| (l + 1.0) * da * da)
}

/// `⟨∂_P δ, ∂_P δ⟩` for a unit tangent direction.
///
/// Uses `Σ_m (∂_e Y_lm(P))² = (l+1)² l(l+2)/(6π²)`, obtained by
/// differentiating the addition theorem twice.
pub fn dp_norm_sq(t: f64) -> f64 {
    series_sum(t, |l, a, _| (l + 1.0) * a * a * l * (l + 2.0) / 3.0)
}

fn series_sum<F: Fn(f64, f64, f64) -> f64>(t: f64, term: F) -> f64 {
    let mut l_max = 64;
    loop {
        let a = bubble_zonal_coeffs(t, l_max);
        let da = bubble_rate_zonal_coeffs(t, l_max);
        let last = term(l_max as f64, a[l_max], da[l_max]).abs();
        let total: f64 = (0..=l_max).map(|l| term(l as f64, a[l], da[l])).sum();
        if last <= 1e-18 * total.abs() || l_max > 1 << 26 {
            return total;
        }
        l_max *= 2;
    }
}

/// `∫_{R³} |y|² (2/(1+|y|²))⁴ dy` by adaptive radial quadrature.
pub fn measure_gradient_limit_integral() -> Result<f64> {
    // r = tan(u/2) maps (0, π) onto (0, ∞).
    let f = |u: f64| {
        let r = (0.5 * u).tan();
        let w = 2.0 / (1.0 + r * r);
        let dr = 0.5 / (0.5 * u).cos().powi(2);
        4.0 * PI * r.powi(4) * w.powi(4) * dr
    };
    let (v, _) = integrate_adaptive(f, 0.0, PI, &[], AdaptiveOptions { rtol: 1e-14, atol: 0.0, max_intervals: 2000 })?;
    Ok(v)
}

/// Largest rate accepted by the peak-refined integrators.
pub const MAX_QUADRATURE_RATE: f64 = 1e5;

fn peak_breaks(centre: f64, t: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut w = 0.25 / t;
    while w < hi - lo {
        for x in [centre - w, centre + w] {
            if x > lo && x < hi {
                out.push(x);
            }
        }
        w *= 2.0;
    }
    out
}

fn check_rate(t: f64) -> Result<()> {
    if t > MAX_QUADRATURE_RATE {
        return Err(Error::Resolution {
            message: format!("rate {t} exceeds the peak-refined quadrature range"),
            required: (t / MAX_QUADRATURE_RATE).ceil() as usize,
        });
    }
    Ok(())
}

fn map_quadrature_error(e: Error, t: f64) -> Error {
    match e {
        Error::Numerical(m) => Error::Resolution { message: m, required: (4.0 * t).ceil() as usize },
        other => other,
    }
}

/// `∫_{S³} f(χ) dμ` for a function of the distance `χ` to a bubble centre
/// of rate `t`, with breakpoints clustered at the peak.
pub fn radial_integral<F: Fn(f64) -> f64>(t: f64, f: F, rtol: f64) -> Result<f64> {
    check_rate(t)?;
    let breaks = peak_breaks(0.0, t, 0.0, PI);
    let opts = AdaptiveOptions { rtol, atol: 0.0, max_intervals: 20_000 };
    integrate_adaptive(|chi| 4.0 * PI * chi.sin().powi(2) * f(chi), 0.0, PI, &breaks, opts)
        .map(|(v, _)| v)
        .map_err(|e| map_quadrature_error(e, t))
}

/// `∫_{S³} F(δ₁, ∂_t δ₁, δ₂, ∂_t δ₂) dμ` for two unit bubbles, by nested
/// adaptive quadrature in coordinates centred at `P₁`:
/// `x = cosχ P₁ + sinχ ω` with `ω·e = cosθ`, where `P₂ = cos d P₁ + sin d e`.
pub fn two_bubble_integral<F>(b1: &BubbleParams, b2: &BubbleParams, f: F, rtol: f64) -> Result<f64>
where
    F: Fn(f64, f64, f64, f64) -> f64,
{
    check_rate(b1.t)?;
    check_rate(b2.t)?;
    let d = geodesic_distance(&b1.p, &b2.p);
    let (t1, t2) = (b1.t, b2.t);
    let sd = d.sin();
    let mut outer_breaks = peak_breaks(0.0, t1, 0.0, PI);
    outer_breaks.extend(peak_breaks(d, t2, 0.0, PI));
    outer_breaks.push(d);
    let inner_opts = AdaptiveOptions { rtol: 0.1 * rtol, atol: 1e-300, max_intervals: 20_000 };
    let outer_opts = AdaptiveOptions { rtol, atol: 1e-300, max_intervals: 20_000 };
    let outer = |chi: f64| -> f64 {
        let sc = chi.sin();
        let omc1 = 2.0 * (0.5 * chi).sin().powi(2);
        let a1 = t1 / denominator(t1, omc1);
        let da1 = bubble_rate_profile(t1, omc1);
        // Angular width of the second peak seen from this χ-sphere.
        let w = if sc * sd > 0.0 { 1.0 / (t2 * (sc * sd).sqrt().max(1e-300)) } else { PI };
        let breaks = peak_breaks(0.0, 1.0 / w.max(1e-300), 0.0, PI);
        let g = |theta: f64| {
            let st = theta.sin();
            // 1 − cos d(x, P₂) = 1 − (cosχ cos d + sinχ sin d cosθ), evaluated
            // as (1 − cos(χ − d)) + sinχ sin d (1 − cosθ).
            let omc2 = 2.0 * (0.5 * (chi - d)).sin().powi(2) + sc * sd * 2.0 * (0.5 * theta).sin().powi(2);
            let a2 = t2 / denominator(t2, omc2);
            let da2 = bubble_rate_profile(t2, omc2);
            2.0 * PI * st * f(a1, da1, a2, da2)
        };
        match integrate_adaptive(g, 0.0, PI, &breaks, inner_opts) {
            Ok((v, _)) => v * sc * sc,
            Err(_) => f64::NAN,
        }
    };
    // An inner failure surfaces as a non-finite outer integrand.
    integrate_adaptive(outer, 0.0, PI, &outer_breaks, outer_opts)
        .map(|(v, _)| v).map_err(|e| map_quadrature_error(e, t1.max(t2)))
}

/// `∫_{S³} δ₁^{a} δ₂^{b} dμ` for unit-amplitude bubbles (amplitudes are not
/// applied).
pub fn interaction_integral(b1: &BubbleParams, b2: &BubbleParams, a: f64, b: f64) -> Result<f64> {
    if geodesic_distance(&b1.p, &b2.p) < 1e-12 {
        if b2.t == 1.0 {
            return radial_integral(b1.t, |chi| bubble_profile(b1.t, chi.cos()).powf(a), 1e-12);
        }
        return Err(Error::Precondition("interaction integral needs distinct centres".into()));
    }
    two_bubble_integral(b1, b2, |d1, _, d2, _| d1.powf(a) * d2.powf(b), 1e-10)
}

/// Leading-order prediction `16π² G / (t₁ t₂)` for `∫ δ₁² δ₂`.
pub fn interaction_prediction(b1: &BubbleParams, b2: &BubbleParams) -> Result<f64> {
    Ok(SPHERE2_AREA * 4.0 * PI * greens_function(&b1.p, &b2.p)? / (b1.t * b2.t))
}

/// The 5×5 Gram matrix of `{δ, ∂_t δ, ∂_P δ (three frame directions)}` in
/// `⟨·,·⟩`, and its 2-norm condition number.
pub fn tangent_gram(b: &BubbleParams, plan: &SpectralPlan) -> Result<([[f64; 5]; 5], f64)> {
    let l = plan.l_max();
    let mut vecs = vec![bubble_spectrum(b, l), bubble_rate_spectrum(b, l)];
    for e in b.p.tangent_frame() {
        vecs.push(bubble_location_spectrum(b, &e, plan)?);
    }
    let mut g = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            g[i][j] = vecs[i].hsigma_inner(&vecs[j])?;
        }
    }
    let m = nalgebra::Matrix5::from_fn(|i, j| g[i][j]);
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok((g, cond))
}

/// Stereographic chart distance between two points, in the chart that
/// sends `p` to the origin: `tan(d/2)`.
pub fn chart_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    crate::geometry::stereographic_radius(geodesic_distance(p, q))
}

/// Unit tangent at `p` pointing towards `q` (along the minimizing geodesic).
pub fn direction_towards(p: &SpherePoint, q: &SpherePoint) -> Result<Vec4> {
    let w = p.project_tangent(q.coords());
    let n = norm4(&w);
    if n < 1e-14 {
        return Err(Error::Domain("direction undefined for coincident or antipodal points".into()));
    }
    Ok([w[0] / n, w[1] / n, w[2] / n, w[3] / n])
}

/// Outcome of the spectral identity checks at one truncation degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralIdentityReport {
    #[serde(rename = "L")]
    pub l: usize,
    pub samples: usize,
    /// `‖P1 − 1‖`.
    pub constant_error: f64,
    /// Largest relative L² error of `Pδ` against the transform of `δ²` sampled exactly.
    pub square_error: f64,
    /// Largest relative error of `⟨δ,δ⟩` against `2π²`.
    pub energy_error: f64,
}

impl SpectralIdentityReport {
    pub fn passes(&self, square_rtol: f64, energy_rtol: f64) -> bool {
        self.constant_error == 0.0 && self.square_error <= square_rtol && self.energy_error <= energy_rtol
    }
}

/// Checks `P1 = 1`, `Pδ = δ²` and `⟨δ,δ⟩ = 2π²` for `samples` random bubbles
/// with rates in `[1, L/4]`.
pub fn spectral_identities(l: usize, samples: usize, seed: u64) -> Result<SpectralIdentityReport> {
    use rand::{Rng, SeedableRng};
    if l < 4 {
        return Err(Error::Precondition(format!("L = {l} leaves no room for rates up to L/4")));
    }
    let plan = SpectralPlan::with_grid_order(l, 4 * l + 1)?;
    let one = HarmonicSpectrum::constant(l, 1.0);
    let constant_error = one.apply_p_sigma(false).axpy(-1.0, &one)?.l2_norm();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut square_error, mut energy_error) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let x: Vec4 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let Ok(p) = SpherePoint::normalize(x) else { continue };
        let t = rng.gen_range(1.0..=l as f64 / 4.0);
        let s = bubble_spectrum(&BubbleParams::unit(p, t)?, l);
        let sq: Vec<f64> = plan.grid().nodes().iter().map(|q| bubble_profile(t, p.dot(q)).powi(2)).collect();
        let rhs = plan.forward_values(&sq)?;
        square_error = square_error.max(s.apply_p_sigma(false).axpy(-1.0, &rhs)?.l2_norm() / rhs.l2_norm());
        energy_error = energy_error.max((s.hsigma_norm().powi(2) / (2.0 * PI * PI) - 1.0).abs());
    }
    Ok(SpectralIdentityReport { l, samples, constant_error, square_error, energy_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: [f64; 4]) -> SpherePoint {
        SpherePoint::normalize(x).unwrap()
    }

    #[test]
    fn bubble_special_values() {
        let p = pt([0.1, 0.2, -0.3, 0.9]);
        let b = BubbleParams::unit(p, 7.0).unwrap();
        assert!((eval_bubble(&b, &p, BubbleDerivative::Value) - 7.0).abs() < 1e-14);
        assert!((eval_bubble(&b, &p.antipode(), BubbleDerivative::Value) - 1.0 / 7.0).abs() < 1e-14);
        let one = BubbleParams::unit(p, 1.0).unwrap();
        assert_eq!(eval_bubble(&one, &pt([1.0, 0.0, 0.0, 0.0]), BubbleDerivative::Value), 1.0);
    }

    #[test]
    fn greens_function_values() {
        let n = SpherePoint::north();
        assert!((greens_function(&n, &SpherePoint::axis(0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((greens_function(&n, &SpherePoint::south()).unwrap() - 0.5).abs() < 1e-15);
        assert!(greens_function(&n, &n).is_err());
    }

    #[test]
    fn closed_form_series_matches_profile() {
        let t = 3.5;
        let a = bubble_zonal_coeffs(t, 200);
        let z = ZonalSpectrum::from_coeffs(SpherePoint::north(), a).unwrap();
        for chi in [0.0, 0.3, 1.0, 2.5, PI] {
            assert!((z.eval(chi) - bubble_profile(t, chi.cos())).abs() < 1e-12);
        }
        let da = bubble_rate_zonal_coeffs(t, 200);
        let z = ZonalSpectrum::from_coeffs(SpherePoint::north(), da).unwrap();
        for chi in [0.0f64, 0.7, 2.0] {
            let omc = 1.0 - chi.cos();
            assert!((z.eval(chi) - bubble_rate_profile(t, omc)).abs() < 1e-12);
        }
    }

    #[test]
    fn measured_constants_are_stable() {
        for t in [1.5, 4.0, 30.0] {
            assert!((norm_sq(t) / SPHERE3_AREA - 1.0).abs() < 1e-12);
            assert!((t * t * dt_norm_sq(t) / GAMMA_DT - 1.0).abs() < 1e-12);
        }
        assert!((dp_norm_sq(1e5) / 1e10 / GAMMA_DP - 1.0).abs() < 1e-7);
        let v = measure_gradient_limit_integral().unwrap();
        assert!((v / GRADIENT_LIMIT_INTEGRAL - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_formula() {
        let t = 8.0;
        let a = bubble_zonal_coeffs(t, 4000);
        let direct: f64 = (33..=4000).map(|l| (l as f64 + 1.0) * a[l] * a[l]).sum();
        assert!((bubble_tail(t, 32) / direct - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cube_integral_is_conformally_invariant() {
        let v = radial_integral(9.0, |chi| bubble_profile(9.0, chi.cos()).powi(3), 1e-12).unwrap();
        assert!((v / SPHERE3_AREA - 1.0).abs() < 1e-10);
    }
}
