//! Finite-dimensional reduction near bubble configurations: reduced
//! gradients, the convex model function and its critical point, blow-up
//! predictions, and the fit of solver output to bubbles plus remainder.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubbles::{
    bubble_location_spectrum, bubble_rate_spectrum, bubble_rate_zonal_coeffs, bubble_spectrum,
    bubble_zonal_coeffs, greens_function, BubbleParams, GRADIENT_LIMIT_INTEGRAL, SPHERE2_AREA, SPHERE3_AREA,
};
use crate::error::{Error, Result};
use crate::geometry::{scale4, SpherePoint, Vec4};
use crate::linalg::symmetric_eigenvalues;
use crate::morse::build_matrix_m;
use crate::morse::{CriticalPointRecord, PointClass};
use crate::polynomial::{sphere_derivatives, AmbientPolynomial};
use crate::spectrum::HarmonicSpectrum;
use crate::transform::SpectralPlan;
use crate::zonal::ZonalSpectrum;

/// Coefficients of the rate derivative of the reduced energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCoefficients {
    /// Multiplies `τ/(K²t)`.
    pub tau: f64,
    /// Multiplies `ΔK/(K³t³)`.
    pub curvature: f64,
    /// Multiplies `G/(K_iK_j t_i² t_j)`.
    pub interaction: f64,
}

impl RateCoefficients {
    /// The published values `(4/3)π|S²|`, `(2/3)π|S²|`, `2π|S²|`.
    pub fn published() -> Self {
        RateCoefficients {
            tau: 4.0 / 3.0 * PI * SPHERE2_AREA,
            curvature: 2.0 / 3.0 * PI * SPHERE2_AREA,
            interaction: 2.0 * PI * SPHERE2_AREA,
        }
    }

    /// Values obtained by differentiating the bubble integrals directly:
    /// the `τ` term is `(1/6)π|S²|` and the interaction term `4π|S²|`.
    pub fn rederived() -> Self {
        RateCoefficients {
            tau: PI * SPHERE2_AREA / 6.0,
            curvature: 2.0 / 3.0 * PI * SPHERE2_AREA,
            interaction: 4.0 * PI * SPHERE2_AREA,
        }
    }
}

/// Coefficient of `−∇K(P)` in the location derivative of the reduced
/// energy, for amplitude `α`, in unit-speed tangent coordinates:
/// `α³/3 ∫_{R³} |y|² (2/(1+|y|²))⁴ dy`.
pub fn location_coefficient(alpha: f64) -> f64 {
    alpha.powi(3) * GRADIENT_LIMIT_INTEGRAL / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedConfig {
    pub points: Vec<SpherePoint>,
    pub k_values: Vec<f64>,
    pub laplacians: Vec<f64>,
    pub tau: f64,
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
    /// Rates must satisfy `τ^{-1/2}/A < t < A τ^{-1/2}`.
    pub rate_bound: f64,
    /// Amplitudes must satisfy `|α − 1/K| < ε₀`.
    pub amplitude_tolerance: f64,
}

impl ReducedConfig {
    pub fn new(k: &AmbientPolynomial, points: Vec<SpherePoint>, tau: f64, alphas: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if points.is_empty() || alphas.len() != points.len() || rates.len() != points.len() {
            return Err(Error::Precondition("points, amplitudes and rates must have equal non-zero length".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Precondition("tau must be positive".into()));
        }
        let d: Vec<_> = points.iter().map(|p| sphere_derivatives(k, p)).collect();
        Ok(ReducedConfig {
            k_values: d.iter().map(|x| x.value).collect(),
            laplacians: d.iter().map(|x| x.laplacian).collect(),
            points,
            tau,
            alphas,
            rates,
            rate_bound: 10.0,
            amplitude_tolerance: 0.5,
        })
    }

    /// Amplitudes `1/K(P_i)` and the given rates.
    pub fn balanced(k: &AmbientPolynomial, points: Vec<SpherePoint>, tau: f64, rates: Vec<f64>) -> Result<Self> {
        let alphas = points.iter().map(|p| 1.0 / k.eval_at(p)).collect();
        ReducedConfig::new(k, points, tau, alphas, rates)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bubbles(&self) -> Result<Vec<BubbleParams>> {
        (0..self.len()).map(|i| BubbleParams::new(self.points[i], self.rates[i], self.alphas[i])).collect()
    }

    /// Checks the rate window and amplitude tolerance.
    pub fn validate(&self) -> Result<()> {
        let base = self.tau.powf(-0.5);
        for i in 0..self.len() {
            let t = self.rates[i];
            if !(t > base / self.rate_bound && t < base * self.rate_bound) {
                return Err(Error::Precondition(format!(
                    "rate {t} outside ({}, {})",
                    base / self.rate_bound,
                    base * self.rate_bound
                )));
            }
            if (self.alphas[i] - 1.0 / self.k_values[i]).abs() >= self.amplitude_tolerance {
                return Err(Error::Precondition(format!("amplitude {} too far from 1/K", self.alphas[i])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderTerm {
    pub quantity: String,
    /// Order of the neglected term, symbolic.
    pub order: String,
    /// The same expression with unit constants.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedGradient {
    pub d_alpha: Vec<f64>,
    pub d_rate: Vec<f64>,
    pub d_location: Vec<Vec4>,
    pub location_coefficients: Vec<f64>,
    pub error_budget: Vec<RemainderTerm>,
}

/// Leading-order derivatives of the reduced energy with the published
/// rate coefficients.
pub fn reduced_gradient(cfg: &ReducedConfig, k: &AmbientPolynomial, remainder_norm: f64) -> Result<ReducedGradient> {
    reduced_gradient_with(cfg, k, remainder_norm, &RateCoefficients::published())
}

pub fn reduced_gradient_with(
    cfg: &ReducedConfig,
    k: &AmbientPolynomial,
    remainder_norm: f64,
    coeffs: &RateCoefficients,
) -> Result<ReducedGradient> {
    cfg.validate()?;
    let n = cfg.len();
    let tau = cfg.tau;
    let betas: Vec<f64> = (0..n).map(|i| cfg.alphas[i] - 1.0 / cfg.k_values[i]).collect();
    let d_alpha = betas.iter().map(|b| -SPHERE3_AREA * b).collect();
    let mut d_rate = Vec::with_capacity(n);
    for i in 0..n {
        let (ki, ti) = (cfg.k_values[i], cfg.rates[i]);
        let mut v = coeffs.tau * tau / (ki * ki * ti) + coeffs.curvature * cfg.laplacians[i] / (ki.powi(3) * ti.powi(3));
        for j in (0..n).filter(|&j| j != i) {
            let g = greens_function(&cfg.points[i], &cfg.points[j])?;
            v += coeffs.interaction * g / (ki * cfg.k_values[j] * ti * ti * cfg.rates[j]);
        }
        d_rate.push(v);
    }
    let location_coefficients: Vec<f64> = cfg.alphas.iter().map(|&a| location_coefficient(a)).collect();
    let d_location = (0..n)
        .map(|i| scale4(-location_coefficients[i], &sphere_derivatives(k, &cfg.points[i]).gradient))
        .collect();
    let bmax = betas.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let v = remainder_norm;
    let lt = tau * tau.ln().abs();
    let error_budget = vec![
        RemainderTerm {
            quantity: "d_alpha".into(),
            order: "O(|β|²) + O(τ|log τ|) + O(‖v‖^{2−τ})".into(),
            magnitude: bmax * bmax + lt + v.powf(2.0 - tau),
        },
        RemainderTerm {
            quantity: "d_rate".into(),
            order: "O(|β|τ^{3/2}) + O(τ‖v‖) + O(τ^{1/2}‖v‖^{2−τ}) + O(τ^{3/2}|log τ|)".into(),
            magnitude: bmax * tau.powf(1.5) + tau * v + tau.sqrt() * v.powf(2.0 - tau) + tau.sqrt() * lt,
        },
        RemainderTerm {
            quantity: "d_location".into(),
            order: "O(τ^{1/2}) + O(‖v‖) + O(τ^{−1/2}‖v‖^{2−τ})".into(),
            magnitude: tau.sqrt() + v + v.powf(2.0 - tau) / tau.sqrt(),
        },
    ];
    Ok(ReducedGradient { d_alpha, d_rate, d_location, location_coefficients, error_budget })
}

/// The convex model `F(s) = −Σ (4τ/K_j²) log s_j + ½ Σ_i (M_ii s_i² + Σ_j M_ij s_i s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFunction {
    pub barrier: Vec<f64>,
    pub m: Vec<Vec<f64>>,
}

impl ModelFunction {
    pub fn new(k_values: &[f64], m: Vec<Vec<f64>>, tau: f64) -> Self {
        ModelFunction { barrier: k_values.iter().map(|k| 4.0 * tau / (k * k)).collect(), m }
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        let n = s.len();
        let mut f = 0.0;
        for i in 0..n {
            f -= self.barrier[i] * s[i].ln();
            f += 0.5 * self.m[i][i] * s[i] * s[i];
            for j in 0..n {
                f += 0.5 * self.m[i][j] * s[i] * s[j];
            }
        }
        f
    }

    pub fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let n = s.len();
        (0..n)
            .map(|i| {
                let cross: f64 = (0..n).map(|j| self.m[i][j] * s[j]).sum();
                -self.barrier[i] / s[i] + self.m[i][i] * s[i] + cross
            })
            .collect()
    }

    pub fn hessian(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let n = s.len();
        let mut h = self.m.clone();
        for i in 0..n {
            h[i][i] += self.m[i][i] + self.barrier[i] / (s[i] * s[i]);
        }
        h
    }

    /// Damped Newton in `x = log s` from `s0`.
    pub fn minimize(&self, s0: &[f64], max_iter: usize) -> Result<(Vec<f64>, usize)> {
        let n = s0.len();
        let mut x: Vec<f64> = s0.iter().map(|s| s.ln()).collect();
        let f_of = |x: &[f64]| self.value(&x.iter().map(|v| v.exp()).collect::<Vec<_>>());
        let grad_x = |x: &[f64]| {
            let s: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let g = self.gradient(&s);
            (0..n).map(|i| (s[i] * g[i] / self.barrier[i]).abs()).fold(0.0, f64::max)
        };
        for it in 0..max_iter {
            let s: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let g = self.gradient(&s);
            let gx: Vec<f64> = (0..n).map(|i| s[i] * g[i]).collect();
            if (0..n).all(|i| gx[i].abs() <= 1e-12 * self.barrier[i]) {
                return Ok((s, it));
            }
            let h = self.hessian(&s);
            let mut hx = DMatrix::from_fn(n, n, |i, j| s[i] * h[i][j] * s[j]);
            for i in 0..n {
                hx[(i, i)] += s[i] * g[i];
            }
            let rhs = DVector::from_iterator(n, gx.iter().map(|v| -v));
            let mut shift = 0.0;
            let step = loop {
                let mut a = hx.clone();
                for i in 0..n {
                    a[(i, i)] += shift;
                }
                if let Some(c) = a.cholesky() {
                    break c.solve(&rhs);
                }
                shift = if shift == 0.0 { 1e-8 * hx.diagonal().amax().max(1e-300) } else { shift * 10.0 };
            };
            let slope: f64 = step.iter().zip(&gx).map(|(a, b)| a * b).sum();
            let f0 = f_of(&x);
            let mut lam = 1.0;
            loop {
                let trial: Vec<f64> = (0..n).map(|i| x[i] + lam * step[i].clamp(-2.0, 2.0)).collect();
                let f1 = f_of(&trial);
                // Near the minimum the decrease drops below rounding; fall back to the gradient.
                if f1 <= f0 + 1e-4 * lam * slope || grad_x(&trial) < 0.5 * grad_x(&x) || lam < 1e-12 {
                    x = trial;
                    break;
                }
                lam *= 0.5;
            }
        }
        Err(Error::Numerical(format!(
            "model minimization did not converge in {max_iter} iterations; last s = {:?}",
            x.iter().map(|v| v.exp()).collect::<Vec<_>>()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSolveOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for ModelSolveOptions {
    fn default() -> Self {
        ModelSolveOptions { restarts: 100, seed: 0, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupPrediction {
    pub tau: f64,
    pub points: Vec<SpherePoint>,
    pub t_star: Vec<f64>,
    pub mu_pred: Vec<f64>,
    pub lambda: Vec<f64>,
    pub c_mu: f64,
    /// `τ (t*_j/K_j)²`, the peak-height law implied by the model with amplitude `1/K`.
    pub tau_m2_model: Vec<f64>,
    pub interaction_mu: f64,
    pub hessian_min_eig: f64,
    /// Largest relative deviation of `t*` across restarts.
    pub restart_spread: f64,
    pub iterations: usize,
}

/// Critical point of the model function for a configuration of
/// negative-Laplacian critical points.
pub fn solve_f_critical(points: &[CriticalPointRecord], k: &AmbientPolynomial, tau: f64, c_mu: f64) -> Result<BlowupPrediction> {
    solve_f_critical_with(points, k, tau, c_mu, &ModelSolveOptions::default())
}

pub fn solve_f_critical_with(
    points: &[CriticalPointRecord],
    k: &AmbientPolynomial,
    tau: f64,
    c_mu: f64,
    opts: &ModelSolveOptions,
) -> Result<BlowupPrediction> {
    if !(tau > 0.0) || !(c_mu > 0.0) {
        return Err(Error::Precondition("tau and c_mu must be positive".into()));
    }
    if points.iter().any(|p| p.class != PointClass::KMinus) {
        return Err(Error::Precondition("all points must have negative Laplacian".into()));
    }
    let im = build_matrix_m(points, k)?;
    if im.mu_min <= 0.0 {
        return Err(Error::Precondition(format!(
            "infeasible configuration: smallest interaction eigenvalue {:e} is not positive",
            im.mu_min
        )));
    }
    let n = points.len();
    let kv: Vec<f64> = points.iter().map(|p| k.eval_at(&p.location)).collect();
    let model = ModelFunction::new(&kv, im.entries.clone(), tau);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
        .map(|_| (0..n).map(|_| tau.sqrt() * rng.gen_range(-3.0f64..3.0).exp()).collect())
        .collect();
    let sols: Vec<(Vec<f64>, usize)> = starts
        .par_iter()
        .map(|s0| model.minimize(s0, opts.max_iter))
        .collect::<Result<Vec<_>>>()?;
    let s = sols[0].0.clone();
    let mut spread = 0.0f64;
    for (other, _) in &sols {
        for i in 0..n {
            spread = spread.max((other[i] - s[i]).abs() / s[i]);
        }
    }
    let h = model.hessian(&s);
    let flat: Vec<f64> = h.iter().flatten().copied().collect();
    let hessian_min_eig = symmetric_eigenvalues(&flat, n)?[0];
    if hessian_min_eig <= 0.0 {
        return Err(Error::Numerical("model Hessian is not positive definite at the critical point".into()));
    }
    let t_star: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    let lambda: Vec<f64> = kv.iter().map(|v| 1.0 / v).collect();
    let mu_pred = if n == 1 {
        vec![4.0 * im.entries[0][0]]
    } else {
        (0..n)
            .map(|j| (0..n).map(|l| im.entries[l][j] * lambda[l]).sum::<f64>() / (c_mu * lambda[j]))
            .collect()
    };
    Ok(BlowupPrediction {
        tau,
        points: points.iter().map(|p| p.location).collect(),
        tau_m2_model: (0..n).map(|i| tau * (t_star[i] * lambda[i]).powi(2)).collect(),
        t_star,
        mu_pred,
        lambda,
        c_mu,
        interaction_mu: im.mu_min,
        hessian_min_eig,
        restart_spread: spread,
        iterations: sols.iter().map(|s| s.1).max().unwrap_or(0),
    })
}

/// Result of fitting bubbles to a function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition<S> {
    pub fit: ReducedConfig,
    pub remainder: S,
    /// `‖v − Σ α_i δ_i‖` in the half-derivative norm.
    pub remainder_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gram_condition: f64,
}

const FIT_MAX_ITER: usize = 60;
const GRAM_CONDITION_LIMIT: f64 = 1e13;

fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let eig = gram.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(0.0, f64::max);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > GRAM_CONDITION_LIMIT {
        return Err(Error::Singular(format!("rank-deficient tangent Gram matrix (condition {cond:e})")));
    }
    let sol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("tangent Gram matrix not positive definite".into()))?
        .solve(rhs);
    Ok((sol, cond))
}

fn converged_step(step: &DVector<f64>, cfg: &ReducedConfig, per: usize) -> bool {
    (0..cfg.len()).all(|i| {
        let o = i * per;
        step[o].abs() <= 1e-11 * cfg.alphas[i].abs()
            && step[o + 1].abs() <= 1e-11 * cfg.rates[i]
            && (2..per).all(|a| step[o + a].abs() <= 1e-11)
    })
}

/// Gauss–Newton fit of `Σ α_i δ_{P_i,t_i}` to `v` in the half-derivative
/// inner product. At the fit the remainder is orthogonal to every bubble,
/// its rate derivative and its location derivatives.
pub fn decompose_solution(v: &HarmonicSpectrum, init: &ReducedConfig, plan: &SpectralPlan) -> Result<Decomposition<HarmonicSpectrum>> {
    let l = v.l_max();
    if plan.l_max() < l {
        return Err(Error::Precondition("plan degree below the spectrum degree".into()));
    }
    let mut cfg = init.clone();
    let per = 5;
    let mut best: Option<(f64, ReducedConfig, HarmonicSpectrum)> = None;
    let mut cond = 0.0;
    for it in 0..FIT_MAX_ITER {
        let bubbles = cfg.bubbles()?;
        let mut r = v.clone();
        let mut cols = Vec::with_capacity(per * cfg.len());
        let mut frames = Vec::with_capacity(cfg.len());
        for b in &bubbles {
            let unit = BubbleParams::new(b.p, b.t, 1.0)?;
            let d = bubble_spectrum(&unit, l);
            r = r.axpy(-b.alpha, &d)?;
            cols.push(d);
            cols.push(bubble_rate_spectrum(b, l));
            let frame = b.p.tangent_frame();
            for e in &frame {
                cols.push(bubble_location_spectrum(b, e, plan)?.resized(l));
            }
            frames.push(frame);
        }
        let rn = r.hsigma_norm();
        if best.as_ref().map_or(true, |b| rn < b.0) {
            best = Some((rn, cfg.clone(), r.clone()));
        }
        let m = cols.len();
        let pc: Vec<HarmonicSpectrum> = cols.iter().map(|c| c.apply_p_sigma(false)).collect();
        let mut gram = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for a in 0..m {
            for b in a..m {
                let g = pc[a].l2_inner(&cols[b])?;
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
            rhs[a] = pc[a].l2_inner(&r)?;
        }
        let (step, c) = solve_gram(&gram, &rhs)?;
        cond = c;
        for i in 0..cfg.len() {
            let o = i * per;
            cfg.alphas[i] += step[o];
            cfg.rates[i] = (cfg.rates[i] + step[o + 1]).max(1.0);
            let mut disp = [0.0; 4];
            for (a, e) in frames[i].iter().enumerate() {
                for q in 0..4 {
                    disp[q] += step[o + 2 + a] * e[q];
                }
            }
            cfg.points[i] = cfg.points[i].exp(&disp);
        }
        if converged_step(&step, &cfg, per) {
            let bubbles = cfg.bubbles()?;
            let mut r = v.clone();
            for b in &bubbles {
                r = r.axpy(-1.0, &bubble_spectrum(b, l))?;
            }
            return Ok(Decomposition {
                remainder_norm: r.hsigma_norm(),
                fit: cfg,
                remainder: r,
                iterations: it + 1,
                converged: true,
                gram_condition: cond,
            });
        }
    }
    let (rn, fit, remainder) = best.expect("at least one iteration");
    Ok(Decomposition { fit, remainder, remainder_norm: rn, iterations: FIT_MAX_ITER, converged: false, gram_condition: cond })
}

/// Zonal coefficients about `pole` of a unit bubble centred at `pole` or at
/// its antipode.
fn zonal_bubble_about(pole: &SpherePoint, centre: &SpherePoint, t: f64, l: usize, rate: bool) -> Result<Vec<f64>> {
    let c = if rate { bubble_rate_zonal_coeffs(t, l) } else { bubble_zonal_coeffs(t, l) };
    let d = pole.dot(centre);
    if d > 1.0 - 1e-12 {
        Ok(c)
    } else if d < -1.0 + 1e-12 {
        Ok(c.into_iter().enumerate().map(|(i, x)| if i % 2 == 0 { x } else { -x }).collect())
    } else {
        Err(Error::Precondition("zonal fits need bubbles on the symmetry axis".into()))
    }
}

/// Zonal variant of [`decompose_solution`]: bubbles sit on the axis, so
/// only amplitudes and rates are fitted; location derivatives are
/// orthogonal to every zonal function.
pub fn decompose_zonal(v: &ZonalSpectrum, init: &ReducedConfig) -> Result<Decomposition<ZonalSpectrum>> {
    let l = v.l_max();
    let pole = *v.pole();
    let weights: Vec<f64> = (0..=l).map(|i| (i + 1) as f64).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(&weights).map(|((x, y), w)| x * y * w).sum() };
    let mut cfg = init.clone();
    let per = 2;
    let mut cond = 0.0;
    let mut best: Option<(f64, ReducedConfig, Vec<f64>)> = None;
    for it in 0..FIT_MAX_ITER {
        let mut r = v.coeffs().to_vec();
        let mut cols = Vec::new();
        for i in 0..cfg.len() {
            let d = zonal_bubble_about(&pole, &cfg.points[i], cfg.rates[i], l, false)?;
            let dt = zonal_bubble_about(&pole, &cfg.points[i], cfg.rates[i], l, true)?;
            r.iter_mut().zip(&d).for_each(|(x, y)| *x -= cfg.alphas[i] * y);
            cols.push(d);
            cols.push(dt.iter().map(|x| x * cfg.alphas[i]).collect::<Vec<f64>>());
        }
        let rn = inner(&r, &r).sqrt();
        if best.as_ref().map_or(true, |b| rn < b.0) {
            best = Some((rn, cfg.clone(), r.clone()));
        }
        let m = cols.len();
        let gram = DMatrix::from_fn(m, m, |a, b| inner(&cols[a], &cols[b]));
        let rhs = DVector::from_fn(m, |a, _| inner(&cols[a], &r));
        let (step, c) = solve_gram(&gram, &rhs)?;
        cond = c;
        for i in 0..cfg.len() {
            cfg.alphas[i] += step[i * per];
            cfg.rates[i] = (cfg.rates[i] + step[i * per + 1]).max(1.0);
        }
        if converged_step(&step, &cfg, per) {
            let mut r = v.coeffs().to_vec();
            for i in 0..cfg.len() {
                let d = zonal_bubble_about(&pole, &cfg.points[i], cfg.rates[i], l, false)?;
                r.iter_mut().zip(&d).for_each(|(x, y)| *x -= cfg.alphas[i] * y);
            }
            return Ok(Decomposition {
                remainder_norm: inner(&r, &r).sqrt(),
                fit: cfg,
                remainder: ZonalSpectrum::from_coeffs(pole, r)?,
                iterations: it + 1,
                converged: true,
                gram_condition: cond,
            });
        }
    }
    let (rn, fit, r) = best.expect("at least one iteration");
    Ok(Decomposition {
        fit,
        remainder: ZonalSpectrum::from_coeffs(pole, r)?,
        remainder_norm: rn,
        iterations: FIT_MAX_ITER,
        converged: false,
        gram_condition: cond,
    })
}
