//! Boundary fluxes of the Pohozaev identity for the half-Laplacian extension
//! to the upper half-space `R⁴₊ = {(x, t) : x ∈ R³, t > 0}`, for analytic
//! profiles `U = a|X|⁻² + M + α(X)`.
//!
//! On the upper hemisphere of radius `R`,
//! `B″ = ((n−2σ)/2) U ∂_ν U − (R/2)|∇U|² + R|∂_ν U|²`,
//! and on the flat disc `B′ = ((n−2σ)/2) K U^{p+1} + ⟨X, ∇U⟩ K U^p`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec4;
use crate::polynomial::AmbientPolynomial;
use crate::quadrature::gauss_legendre;

/// Dimension of the boundary `R³`.
pub const DIM: f64 = 3.0;
/// Order of the fractional Laplacian.
pub const SIGMA: f64 = 0.5;
/// Consecutive quadrature orders must agree to this relative tolerance.
pub const FLUX_RTOL: f64 = 1e-9;
/// Errors estimated above this relative size are reported as failures.
const FLUX_FAIL_RTOL: f64 = 1e-8;
const START_ORDER: usize = 8;
const MAX_ORDER: usize = 1024;

/// `(n − 2σ)/2`.
fn half_gap() -> f64 {
    (DIM - 2.0 * SIGMA) / 2.0
}

/// Extension weight `t^{1−2σ}`; identically one at `σ = 1/2`.
pub fn extension_weight(t: f64) -> f64 {
    t.powf(1.0 - 2.0 * SIGMA)
}

/// `U(X) = a |X|⁻² + M + α(X)` with `α(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfBallProfile {
    pub a: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub alpha: AmbientPolynomial,
}

impl HalfBallProfile {
    pub fn new(a: f64, m: f64, alpha: AmbientPolynomial) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::Precondition("singular coefficient must be non-negative".into()));
        }
        if alpha.eval(&[0.0; 4]) != 0.0 {
            return Err(Error::Precondition("alpha must vanish at the origin".into()));
        }
        Ok(HalfBallProfile { a, m, alpha })
    }

    pub fn value(&self, x: &Vec4) -> f64 {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        self.a / r2 + self.m + self.alpha.eval(x)
    }

    pub fn gradient(&self, x: &Vec4) -> Vec4 {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let g = self.alpha.gradient(x);
        std::array::from_fn(|i| -2.0 * self.a * x[i] / (r2 * r2) + g[i])
    }
}

/// `B″` at a point of the sphere `|X| = R`. The profile is split into its
/// singular part `S = a|X|⁻²` and the regular rest `W`; since `∇S` is
/// radial, the self-term of `S` is `((n−2σ)/2) S ∂_ν S + (R/2)(∂_ν S)²
/// = a² R^{4σ−2n−1} ((n−2σ)(2σ−n)/2 + (2σ−n)²/2)`, evaluated in that
/// factored form to avoid cancelling `R⁻⁵` terms.
fn b_second(u: &HalfBallProfile, x: &Vec4, r: f64) -> f64 {
    let c = half_gap();
    let nu: Vec4 = std::array::from_fn(|i| x[i] / r);
    let s = u.a * r.powf(2.0 * SIGMA - DIM);
    let ds = (2.0 * SIGMA - DIM) * u.a * r.powf(2.0 * SIGMA - DIM - 1.0);
    let g = 2.0 * SIGMA - DIM;
    let self_s = u.a * u.a * r.powf(4.0 * SIGMA - 2.0 * DIM - 1.0) * (c * g + 0.5 * g * g);
    let w = u.m + u.alpha.eval(x);
    let gw = u.alpha.gradient(x);
    let dw: f64 = gw.iter().zip(&nu).map(|(a, b)| a * b).sum();
    let gw2: f64 = gw.iter().map(|a| a * a).sum();
    let cross = c * (s * dw + w * ds) + r * ds * dw;
    let self_w = c * w * dw - 0.5 * r * gw2 + r * dw * dw;
    self_s + cross + self_w
}

/// `B′` at a point of the flat disc.
fn b_prime(u: &HalfBallProfile, x: &Vec4, k: f64, p: f64) -> f64 {
    let v = u.value(x);
    let g = u.gradient(x);
    let radial: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
    half_gap() * k * v.powf(p + 1.0) + radial * k * v.powf(p)
}

/// Product rule on the upper hemisphere `|X| = R, t > 0`:
/// `X = R(sin ψ sin θ cos φ, sin ψ sin θ sin φ, sin ψ cos θ, cos ψ)` with
/// Gauss nodes in `ψ` and `cos θ`, and the trapezoidal rule in `φ`.
fn hemisphere_sum<F: Fn(&Vec4) -> f64 + Sync>(f: F, r: f64, n: usize) -> (f64, f64) {
    let (xs, ws) = gauss_legendre(n);
    let nphi = 2 * n;
    let dphi = 2.0 * PI / nphi as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let psi = PI / 4.0 * (xs[i] + 1.0);
            let wpsi = PI / 4.0 * ws[i] * psi.sin().powi(2);
            let (sp, cp) = psi.sin_cos();
            let mut acc = (0.0, 0.0);
            for (ct, wt) in xs.iter().zip(&ws) {
                let st = (1.0 - ct * ct).sqrt();
                for k in 0..nphi {
                    let (sf, cf) = (k as f64 * dphi).sin_cos();
                    let x = [r * sp * st * cf, r * sp * st * sf, r * sp * ct, r * cp];
                    let v = extension_weight(x[3]) * f(&x);
                    let w = wpsi * wt * dphi * r.powi(3);
                    acc.0 += w * v;
                    acc.1 += w * v.abs();
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Product rule on the flat ball `|x| ≤ R, t = 0`.
fn disc_sum<F: Fn(&Vec4) -> f64 + Sync>(f: F, r: f64, n: usize) -> (f64, f64) {
    let (xs, ws) = gauss_legendre(n);
    let nphi = 2 * n;
    let dphi = 2.0 * PI / nphi as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let rho = 0.5 * r * (xs[i] + 1.0);
            let wr = 0.5 * r * ws[i] * rho * rho;
            let mut acc = (0.0, 0.0);
            for (ct, wt) in xs.iter().zip(&ws) {
                let st = (1.0 - ct * ct).sqrt();
                for k in 0..nphi {
                    let (sf, cf) = (k as f64 * dphi).sin_cos();
                    let v = f(&[rho * st * cf, rho * st * sf, rho * ct, 0.0]);
                    let w = wr * wt * dphi;
                    acc.0 += w * v;
                    acc.1 += w * v.abs();
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Doubles the order until two consecutive values agree to `FLUX_RTOL`
/// relative to the integral of the absolute integrand.
fn converge<S: Fn(usize) -> (f64, f64)>(sum: S, what: &str) -> Result<f64> {
    let mut n = START_ORDER;
    let (mut prev, _) = sum(n);
    let mut last_err = f64::INFINITY;
    while n < MAX_ORDER {
        n *= 2;
        let (cur, scale) = sum(n);
        let err = (cur - prev).abs();
        if err <= FLUX_RTOL * scale.max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        last_err = err / scale.max(f64::MIN_POSITIVE);
        prev = cur;
    }
    if last_err <= FLUX_FAIL_RTOL {
        return Ok(prev);
    }
    Err(Error::Numerical(format!("{what} quadrature did not converge (relative change {last_err:e})")))
}

/// Boundary fluxes over the half-ball of radius `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HemisphereFlux {
    pub delta: f64,
    /// `∫ t^{1−2σ} B″` over the curved boundary.
    pub bpp: f64,
    /// `∫ B′` over the flat disc; absent for singular profiles, where it
    /// diverges.
    pub bp: Option<f64>,
}

pub fn hemisphere_flux(u: &HalfBallProfile, delta: f64, k: f64, p: f64) -> Result<HemisphereFlux> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition("delta must lie in (0, 1)".into()));
    }
    let bpp = converge(|n| hemisphere_sum(|x| b_second(u, x, delta), delta, n), "hemisphere")?;
    let bp = if u.a == 0.0 {
        let (lo, _) = disc_sum(|x| u.value(x).min(0.0).abs(), delta, START_ORDER * 4);
        if lo > 0.0 {
            return Err(Error::Domain("profile is negative on the flat disc".into()));
        }
        Some(converge(|n| disc_sum(|x| b_prime(u, x, k, p), delta, n), "disc")?)
    } else {
        None
    };
    Ok(HemisphereFlux { delta, bpp, bp })
}

/// `−((n−2σ)²/4) M |S^{n−1}| B(n/2, 1−σ)`; at `n = 3, σ = 1/2` this is `−2π² M`.
pub fn flux_limit(m: f64) -> f64 {
    // B(3/2, 1/2) = Γ(3/2)Γ(1/2)/Γ(2) = π/2
    let beta = PI / 2.0;
    -(DIM - 2.0 * SIGMA).powi(2) / 4.0 * m * 4.0 * PI * beta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxRow {
    #[serde(rename = "M")]
    pub m: f64,
    pub alpha: String,
    pub delta: f64,
    pub bpp: f64,
    pub closed_form: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxLimitReport {
    pub rows: Vec<FluxRow>,
    /// Linear extrapolation in `δ` through the two smallest radii.
    pub extrapolated: f64,
    pub closed_form: f64,
    /// Relative to `|closed form|`, or absolute when it vanishes.
    pub relative_deviation: f64,
}

fn deviation(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        (value - reference).abs() / reference.abs()
    }
}

/// Flux of `|X|⁻² + M + α` over shrinking hemispheres, extrapolated to
/// `δ → 0` and compared with [`flux_limit`].
pub fn flux_limit_check(m: f64, alpha: &AmbientPolynomial, deltas: &[f64]) -> Result<FluxLimitReport> {
    if deltas.len() < 2 || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("need at least two strictly decreasing radii".into()));
    }
    let u = HalfBallProfile::new(1.0, m, alpha.clone())?;
    let closed = flux_limit(m);
    let fluxes: Vec<f64> = deltas
        .par_iter()
        .map(|&d| hemisphere_flux(&u, d, 1.0, 2.0).map(|f| f.bpp))
        .collect::<Result<_>>()?;
    let rows = deltas
        .iter()
        .zip(&fluxes)
        .map(|(&delta, &bpp)| FluxRow {
            m,
            alpha: alpha.to_string(),
            delta,
            bpp,
            closed_form: closed,
            relative_error: deviation(bpp, closed),
        })
        .collect();
    let n = deltas.len();
    let (d1, d2) = (deltas[n - 2], deltas[n - 1]);
    let (f1, f2) = (fluxes[n - 2], fluxes[n - 1]);
    let extrapolated = (d1 * f2 - d2 * f1) / (d1 - d2);
    Ok(FluxLimitReport { rows, extrapolated, closed_form: closed, relative_deviation: deviation(extrapolated, closed) })
}

/// Largest deviation of the extrapolated limits at three values of `M`
/// from the straight line through the first and last, relative to the
/// largest limit.
pub fn linearity_residual(alpha: &AmbientPolynomial, ms: [f64; 3], deltas: &[f64]) -> Result<f64> {
    let lim: Vec<f64> = ms
        .iter()
        .map(|&m| flux_limit_check(m, alpha, deltas).map(|r| r.extrapolated))
        .collect::<Result<_>>()?;
    let slope = (lim[2] - lim[0]) / (ms[2] - ms[0]);
    let mid = lim[0] + slope * (ms[1] - ms[0]);
    let scale = lim.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok((lim[1] - mid).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_adaptive, AdaptiveOptions};

    fn poly(s: &str) -> AmbientPolynomial {
        s.parse().unwrap()
    }

    #[test]
    fn weight_is_neutral() {
        for t in [0.0, 1e-9, 0.3, 1.0, 7.5] {
            assert_eq!(extension_weight(t), 1.0);
        }
    }

    #[test]
    fn pure_singular_profile_has_no_flux() {
        let u = HalfBallProfile::new(1.0, 0.0, AmbientPolynomial::zero()).unwrap();
        for d in [0.5, 1e-2, 1e-4] {
            let f = hemisphere_flux(&u, d, 1.0, 2.0).unwrap();
            assert!(f.bpp.abs() < 1e-8, "{}", f.bpp);
            assert!(f.bp.is_none());
        }
    }

    #[test]
    fn constant_shift_gives_closed_form() {
        assert!((flux_limit(1.0) + 2.0 * PI * PI).abs() < 1e-13);
        let u = HalfBallProfile::new(1.0, 1.0, AmbientPolynomial::zero()).unwrap();
        let f = hemisphere_flux(&u, 1e-3, 1.0, 2.0).unwrap();
        assert!((f.bpp / (-2.0 * PI * PI) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn height_dependent_alpha_matches_one_dimensional_oracle() {
        // α = t depends on the polar angle only, so the flux is 4π R³ ∫ B″ sin²ψ dψ.
        let alpha = poly("x4");
        let u = HalfBallProfile::new(1.0, 0.7, alpha).unwrap();
        let r = 0.2;
        let opts = AdaptiveOptions { rtol: 1e-13, atol: 1e-15, max_intervals: 10_000 };
        let (oracle, _) = integrate_adaptive(
            |psi: f64| {
                let x = [r * psi.sin(), 0.0, 0.0, r * psi.cos()];
                // Direct evaluation of the integrand, without the singular split.
                let g = u.gradient(&x);
                let dn: f64 = g.iter().zip(&x).map(|(a, b)| a * b / r).sum();
                let g2: f64 = g.iter().map(|a| a * a).sum();
                4.0 * PI * r.powi(3) * psi.sin().powi(2) * (u.value(&x) * dn - 0.5 * r * g2 + r * dn * dn)
            },
            0.0,
            PI / 2.0,
            &[],
            opts,
        )
        .unwrap();
        let f = hemisphere_flux(&u, r, 1.0, 2.0).unwrap();
        assert!((f.bpp - oracle).abs() < 1e-9 * oracle.abs(), "{} {}", f.bpp, oracle);
    }

    #[test]
    fn disc_flux_closed_form() {
        // U = M + x₁, p = 1: ∫ B′ = K (c M² (4π/3) δ³ + (c + 1)(4π/15) δ⁵), c = (n−2σ)/2.
        let (m, k, d) = (1.5, 2.0, 0.4);
        let u = HalfBallProfile::new(0.0, m, poly("x1")).unwrap();
        let f = hemisphere_flux(&u, d, k, 1.0).unwrap();
        let c = half_gap();
        let expect = k * (c * m * m * 4.0 * PI / 3.0 * d.powi(3) + (c + 1.0) * 4.0 * PI / 15.0 * d.powi(5));
        assert!((f.bp.unwrap() - expect).abs() < 1e-12 * expect, "{:?} {expect}", f.bp);
    }

    #[test]
    fn limit_and_linearity() {
        let deltas = [1e-2, 1e-3, 1e-4];
        let rep = flux_limit_check(1.0, &poly("x1"), &deltas).unwrap();
        assert!(rep.relative_deviation < 1e-2, "{rep:?}");
        let rep = flux_limit_check(-3.0, &AmbientPolynomial::zero(), &deltas).unwrap();
        assert!((rep.extrapolated / (6.0 * PI * PI) - 1.0).abs() < 1e-2);
        let rep = flux_limit_check(0.0, &AmbientPolynomial::zero(), &deltas).unwrap();
        assert!(rep.extrapolated.abs() < 1e-8);
        assert!(linearity_residual(&poly("x1"), [-3.0, 0.0, 1.0], &deltas).unwrap() < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(HalfBallProfile::new(1.0, 0.0, poly("x1 + 1")).is_err());
        let u = HalfBallProfile::new(1.0, 1.0, AmbientPolynomial::zero()).unwrap();
        assert!(hemisphere_flux(&u, 1.5, 1.0, 2.0).is_err());
    }
}
