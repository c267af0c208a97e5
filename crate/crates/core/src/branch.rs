//! Continuation in τ and blow-up diagnostics along a solution branch.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, SpherePoint, Vec4};
use crate::morse::CriticalPointRecord;
use crate::polynomial::AmbientPolynomial;
use crate::reduced::{decompose_solution, decompose_zonal, ReducedConfig};
use crate::solver::{newton, orthogonal_unit, point_on_meridian, Discretization, Solution, SolverOptions, SolverState};
use crate::transform::SpectralPlan;

/// `max v / min v` at or above which a state counts as concentrating; a
/// bubble reaches it at rate `√10`.
pub const CONCENTRATION_RATIO: f64 = 10.0;
/// Fraction of the degree the fitted rate may reach before a state is
/// considered under-resolved.
pub const RESOLUTION_FRACTION: f64 = 0.25;
/// Radial samples for the profile comparison.
const PROFILE_SAMPLES: usize = 64;
/// Peaks of relative height below this fraction of the range are ignored.
const PEAK_FLOOR: f64 = 0.2;
const MAX_PEAK_CANDIDATES: usize = 12;
const PEAK_SEPARATION: f64 = 0.35;
const MERGE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub location: SpherePoint,
    /// `m = v(q)`.
    pub height: f64,
    /// `τ m²`.
    pub tau_m2: f64,
    /// `K(q)⁻¹ m₁ / m`.
    pub lambda_hat: f64,
    /// Sup over `d ≤ 3/m` of `|v/(m(1 + y²)) − 1/(1 + K(q)² m² y²)|`, `y = tan(d/2)`.
    pub profile_error: f64,
    /// `K(q) m`, the rate of the bubble `δ/K(q)` with the same height.
    pub rate_estimate: f64,
    pub nearest_critical: Option<usize>,
    pub critical_distance: Option<f64>,
}

/// Bubble fit of a concentrating state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleFit {
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
    pub points: Vec<SpherePoint>,
    pub remainder_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupDiagnostics {
    pub tau: f64,
    /// Sorted by height, descending.
    pub peaks: Vec<PeakRecord>,
    pub lambda_hat: Vec<f64>,
    pub resolution_ok: bool,
    pub concentrating: bool,
    /// `max v / min v`.
    pub peak_ratio: f64,
    pub fit: Option<BubbleFit>,
    pub warnings: Vec<String>,
}

impl BlowupDiagnostics {
    /// Largest rate in use: fitted if available, else the height estimate.
    pub fn max_rate(&self) -> f64 {
        match &self.fit {
            Some(f) => f.rates.iter().cloned().fold(0.0, f64::max),
            None => self.peaks.iter().map(|p| p.rate_estimate).fold(0.0, f64::max),
        }
    }
}

/// Local maximum of `f` on the sphere near `p`, by Newton on the gradient
/// in a tangent frame with finite-difference derivatives; falls back to
/// gradient ascent where the Hessian is not negative definite.
fn ascend<F: Fn(&SpherePoint) -> f64>(f: &F, p0: SpherePoint, h: f64) -> (SpherePoint, bool) {
    let mut p = p0;
    let mut fp = f(&p);
    for _ in 0..100 {
        let frame = p.tangent_frame();
        let at = |x: [f64; 3]| {
            let v: Vec4 = std::array::from_fn(|c| x[0] * frame[0][c] + x[1] * frame[1][c] + x[2] * frame[2][c]);
            f(&p.exp(&v))
        };
        let mut g = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for a in 0..3 {
            let mut e = [0.0; 3];
            e[a] = h;
            let fpl = at(e);
            e[a] = -h;
            let fmi = at(e);
            g[a] = (fpl - fmi) / (2.0 * h);
            hess[(a, a)] = (fpl - 2.0 * fp + fmi) / (h * h);
            for b in 0..a {
                let mut x = [0.0; 3];
                x[a] = h;
                x[b] = h;
                let pp = at(x);
                x[b] = -h;
                let pm = at(x);
                x[a] = -h;
                let mm = at(x);
                x[b] = h;
                let mp = at(x);
                hess[(a, b)] = (pp - pm - mp + mm) / (4.0 * h * h);
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let neg_def = hess.symmetric_eigenvalues().iter().all(|&e| e < 0.0);
        let mut step = if neg_def {
            hess.lu().solve(&(-g)).unwrap_or(g * 1e-3)
        } else {
            g * (0.1 / g.norm().max(1e-300))
        };
        if step.norm() > 0.1 {
            step *= 0.1 / step.norm();
        }
        if neg_def && step.norm() < 1e-11 {
            return (p, true);
        }
        let mut lam = 1.0;
        let mut moved = false;
        while lam > 1e-6 {
            let v: Vec4 = std::array::from_fn(|c| lam * (step[0] * frame[0][c] + step[1] * frame[1][c] + step[2] * frame[2][c]));
            let q = p.exp(&v);
            let fq = f(&q);
            if fq >= fp {
                p = q;
                fp = fq;
                moved = true;
                break;
            }
            lam *= 0.5;
        }
        if !moved {
            return (p, neg_def);
        }
    }
    (p, false)
}

/// Maxima of a zonal function over `χ ∈ [0, π]`, refined by golden section.
fn zonal_maxima(z: &crate::zonal::ZonalSpectrum) -> Vec<f64> {
    let n = 8 * (z.l_max() + 1);
    let h = PI / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| z.eval(i as f64 * h)).collect();
    let mut out = Vec::new();
    if vals[0] >= vals[1] {
        out.push(0.0);
    }
    for i in 1..n {
        if vals[i] > vals[i - 1] && vals[i] >= vals[i + 1] {
            let (mut a, mut b) = ((i - 1) as f64 * h, (i + 1) as f64 * h);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if z.eval(c) >= z.eval(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    if vals[n] >= vals[n - 1] {
        out.push(PI);
    }
    out
}

fn profile_error(v: &Solution, q: &SpherePoint, dirs: &[Vec4], m: f64, kq: f64) -> f64 {
    let mut worst = 0.0f64;
    for dir in dirs {
        for i in 1..=PROFILE_SAMPLES {
            let d = (3.0 / m).min(PI) * i as f64 / PROFILE_SAMPLES as f64;
            let y2 = (0.5 * d).tan().powi(2);
            let x = q.exp(&[d * dir[0], d * dir[1], d * dir[2], d * dir[3]]);
            let lhs = v.eval_at(&x) / (m * (1.0 + y2));
            let rhs = 1.0 / (1.0 + kq * kq * m * m * y2);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Peak heights, profiles, bubble fit and critical-point matching for a
/// converged state. Fewer peaks than `expected_k` is a warning.
pub fn diagnostics(
    state: &SolverState,
    k: &AmbientPolynomial,
    expected_k: usize,
    critical: &[CriticalPointRecord],
) -> Result<BlowupDiagnostics> {
    let tau = state.tau;
    let l = state.l;
    let mut warnings = Vec::new();
    let (lo, hi) = (state.min_value, state.max_value);
    let flat = hi - lo <= 1e-10 * hi.abs().max(1e-300);

    // Candidate maxima with the directions used for the profile check.
    let mut found: Vec<(SpherePoint, Vec<Vec4>)> = Vec::new();
    let mut plan = None;
    match &state.v {
        Solution::Zonal(z) => {
            let u = orthogonal_unit(z.pole(), 1);
            let chis = if flat { vec![0.0] } else { zonal_maxima(z) };
            for chi in chis {
                if !flat && z.eval(chi) < lo + PEAK_FLOOR * (hi - lo) {
                    continue;
                }
                let q = point_on_meridian(z.pole(), &u, chi);
                let p1 = point_on_meridian(z.pole(), &u, chi + 1e-3);
                let dir = q.log(&p1).map(|w| w.map(|c| c / 1e-3)).unwrap_or(u);
                found.push((q, vec![dir, dir.map(|c| -c)]));
            }
        }
        Solution::Full(s) => {
            let pl = SpectralPlan::with_grid_order(l, 2 * l + 2)?;
            let vals = pl.inverse_values(s)?;
            let nodes = pl.grid().nodes();
            let mut order: Vec<usize> = (0..vals.len()).collect();
            order.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]));
            let mut cands: Vec<SpherePoint> = Vec::new();
            for &i in &order {
                if cands.len() >= MAX_PEAK_CANDIDATES || (flat && !cands.is_empty()) {
                    break;
                }
                if !flat && vals[i] < lo + PEAK_FLOOR * (hi - lo) {
                    break;
                }
                if cands.iter().all(|c| geodesic_distance(c, &nodes[i]) > PEAK_SEPARATION) {
                    cands.push(nodes[i]);
                }
            }
            let h = 1e-4 / (1.0 + hi / lo.abs().max(1e-300)).sqrt().max(1.0);
            for c in cands {
                let (q, ok) = if flat { (c, true) } else { ascend(&|p: &SpherePoint| s.eval_at(p), c, h) };
                if !ok {
                    continue;
                }
                if found.iter().any(|(f, _)| geodesic_distance(f, &q) < MERGE_DISTANCE.max(10.0 * h)) {
                    continue;
                }
                let fr = q.tangent_frame();
                found.push((q, fr.iter().flat_map(|d| [*d, d.map(|c| -c)]).collect()));
            }
            plan = Some(pl);
        }
    }

    let mut peaks: Vec<PeakRecord> = found
        .iter()
        .map(|(q, dirs)| {
            let m = state.v.eval_at(q);
            let kq = k.eval_at(q);
            let (nearest, dist) = critical
                .iter()
                .enumerate()
                .map(|(i, c)| (i, geodesic_distance(&c.location, q)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or((None, None), |(i, d)| (Some(i), Some(d)));
            PeakRecord {
                location: *q,
                height: m,
                tau_m2: tau * m * m,
                lambda_hat: 0.0,
                profile_error: profile_error(&state.v, q, dirs, m, kq),
                rate_estimate: (kq * m).max(1.0),
                nearest_critical: nearest,
                critical_distance: dist,
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    if let Some(m1) = peaks.first().map(|p| p.height) {
        for p in &mut peaks {
            p.lambda_hat = m1 / (k.eval_at(&p.location) * p.height);
        }
    }
    if peaks.len() < expected_k {
        warnings.push(format!("found {} maxima, expected {expected_k}", peaks.len()));
    }

    let peak_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let concentrating = lo > 0.0 && peak_ratio >= CONCENTRATION_RATIO;
    let mut fit = None;
    if concentrating {
        let cfg = ReducedConfig::balanced(
            k,
            peaks.iter().map(|p| p.location).collect(),
            tau,
            peaks.iter().map(|p| p.rate_estimate).collect(),
        )?;
        let result = match &state.v {
            Solution::Zonal(z) => {
                let on_axis = peaks.iter().all(|p| geodesic_distance(&p.location, z.pole()).min(geodesic_distance(&p.location, &z.pole().antipode())) < 1e-9);
                if on_axis {
                    decompose_zonal(z, &cfg).map(|d| (d.fit, d.remainder_norm, d.converged))
                } else {
                    Err(Error::Precondition("zonal fit needs maxima on the axis".into()))
                }
            }
            Solution::Full(s) => decompose_solution(s, &cfg, plan.as_ref().expect("plan built"))
                .map(|d| (d.fit, d.remainder_norm, d.converged)),
        };
        match result {
            Ok((f, rn, conv)) => {
                if !conv {
                    warnings.push("bubble fit did not converge; best iterate reported".into());
                }
                fit = Some(BubbleFit { alphas: f.alphas, rates: f.rates, points: f.points, remainder_norm: rn, converged: conv })
            }
            Err(e) => warnings.push(format!("bubble fit failed: {e}")),
        }
    }
    let mut diag = BlowupDiagnostics {
        tau,
        lambda_hat: peaks.iter().map(|p| p.lambda_hat).collect(),
        peaks,
        resolution_ok: true,
        concentrating,
        peak_ratio,
        fit,
        warnings,
    };
    diag.resolution_ok = diag.max_rate() <= RESOLUTION_FRACTION * l as f64;
    Ok(diag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub solver: SolverOptions,
    /// Halvings of a log-τ step before the branch is stopped.
    pub max_bisections: usize,
    pub expected_k: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { solver: SolverOptions::default(), max_bisections: 8, expected_k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub state: SolverState,
    pub diagnostics: BlowupDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BranchStop {
    Completed,
    /// The fitted rate outgrew the discretization at `tau`.
    Resolution { tau: f64, rate: f64, l: usize },
    /// Newton failed at every bisected step below the last accepted `tau`.
    StepFailure { tau: f64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub stop: BranchStop,
    /// Smallest τ whose state is resolved.
    pub last_trusted_tau: Option<f64>,
}

/// Geometric schedule `τ_i = τ_start (τ_end/τ_start)^{i/n}`, `i = 0..=n`.
pub fn tau_schedule(tau_start: f64, tau_end: f64, n_steps: usize) -> Result<Vec<f64>> {
    if !(tau_start > tau_end && tau_end > 0.0 && tau_start < 2.0) || n_steps == 0 {
        return Err(Error::Precondition("need 2 > tau_start > tau_end > 0 and at least one step".into()));
    }
    let r = (tau_end / tau_start).ln();
    Ok((0..=n_steps)
        .map(|i| if i == n_steps { tau_end } else { tau_start * (r * i as f64 / n_steps as f64).exp() })
        .collect())
}

fn describe(s: &SolverState) -> String {
    format!("{:?} at tau {} (residual {:e})", s.status, s.tau, s.residual_norm)
}

/// Warm-started Newton along a geometric τ schedule with a secant
/// predictor in `log τ`. Failed steps are halved in `log τ` up to
/// `max_bisections` times; a state whose rate exceeds `L/4` stops the
/// branch.
pub fn continuation<D: Discretization + ?Sized>(
    d: &D,
    k: &AmbientPolynomial,
    tau_start: f64,
    tau_end: f64,
    n_steps: usize,
    init: &Solution,
    critical: &[CriticalPointRecord],
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let schedule = tau_schedule(tau_start, tau_end, n_steps)?;
    let mut points: Vec<BranchPoint> = Vec::new();
    let first = newton(d, init, tau_start, &opts.solver)?;
    if !first.converged() {
        return Ok(Branch {
            points,
            stop: BranchStop::StepFailure { tau: tau_start, message: describe(&first) },
            last_trusted_tau: None,
        });
    }
    let diag = diagnostics(&first, k, opts.expected_k, critical)?;
    if !diag.resolution_ok {
        return Ok(Branch {
            points,
            stop: BranchStop::Resolution { tau: tau_start, rate: diag.max_rate(), l: d.l_max() },
            last_trusted_tau: None,
        });
    }
    points.push(BranchPoint { state: first, diagnostics: diag });

    for &target in &schedule[1..] {
        let mut goal = target;
        let mut halvings = 0;
        while points.last().expect("non-empty").state.tau > target {
            let cur = &points.last().expect("non-empty").state;
            let pred = match points.len() {
                1 => cur.v.clone(),
                n => {
                    let prev = &points[n - 2].state;
                    let s = (goal.ln() - cur.tau.ln()) / (cur.tau.ln() - prev.tau.ln());
                    secant(&cur.v, &prev.v, s)
                }
            };
            let mut attempt = newton(d, &pred, goal, &opts.solver);
            if !matches!(&attempt, Ok(s) if s.converged()) {
                attempt = newton(d, &cur.v, goal, &opts.solver);
            }
            match attempt {
                Ok(s) if s.converged() => {
                    let diag = diagnostics(&s, k, opts.expected_k, critical)?;
                    if !diag.resolution_ok {
                        let last = points.last().map(|p| p.state.tau);
                        return Ok(Branch {
                            points,
                            stop: BranchStop::Resolution { tau: goal, rate: diag.max_rate(), l: d.l_max() },
                            last_trusted_tau: last,
                        });
                    }
                    points.push(BranchPoint { state: s, diagnostics: diag });
                    goal = target;
                    halvings = 0;
                }
                other => {
                    halvings += 1;
                    if halvings > opts.max_bisections {
                        let message = match other {
                            Ok(s) => describe(&s),
                            Err(e) => e.to_string(),
                        };
                        let last = points.last().map(|p| p.state.tau);
                        return Ok(Branch { points, stop: BranchStop::StepFailure { tau: goal, message }, last_trusted_tau: last });
                    }
                    goal = (cur.tau * goal).sqrt();
                }
            }
        }
    }
    let last = points.last().map(|p| p.state.tau);
    Ok(Branch { points, stop: BranchStop::Completed, last_trusted_tau: last })
}

fn secant(cur: &Solution, prev: &Solution, s: f64) -> Solution {
    match (cur, prev) {
        (Solution::Full(a), Solution::Full(b)) => {
            Solution::Full(a.axpy(s, &a.axpy(-1.0, b).expect("same degree")).expect("same degree"))
        }
        (Solution::Zonal(a), Solution::Zonal(b)) => {
            Solution::Zonal(a.axpy(s, &a.axpy(-1.0, b).expect("same degree")).expect("same degree"))
        }
        _ => cur.clone(),
    }
}

/// Writes one row per τ with the top peak, the bubble fit and the remainder.
pub fn write_branch_csv<W: Write>(branch: &Branch, mut w: W) -> Result<()> {
    writeln!(
        w,
        "# m = max of v; tau_m2 = tau*m^2; lambda_hat = m_1/(K(q) m); profile_error = sup_(d<=3/m) |v/(m(1+y^2)) - 1/(1+K(q)^2 m^2 y^2)|, y = tan(d/2); fit = amplitude, rate and centre of the closest bubble; remainder in the half-derivative norm"
    )?;
    writeln!(
        w,
        "tau[1],residual[L2],min_v[1],peak_x1[1],peak_x2[1],peak_x3[1],peak_x4[1],m[1],tau_m2[1],lambda_hat[1],profile_error[1],critical_distance[rad],fit_alpha[1],fit_t[1],fit_x1[1],fit_x2[1],fit_x3[1],fit_x4[1],remainder[H1/2]"
    )?;
    for p in &branch.points {
        let s = &p.state;
        let d = &p.diagnostics;
        let mut row = vec![format!("{:.17e}", s.tau), format!("{:.17e}", s.residual_norm), format!("{:.17e}", s.min_value)];
        match d.peaks.first() {
            Some(pk) => {
                row.extend(pk.location.coords().iter().map(|c| format!("{c:.17e}")));
                row.push(format!("{:.17e}", pk.height));
                row.push(format!("{:.17e}", pk.tau_m2));
                row.push(format!("{:.17e}", pk.lambda_hat));
                row.push(format!("{:.17e}", pk.profile_error));
                row.push(pk.critical_distance.map_or(String::new(), |x| format!("{x:.17e}")));
            }
            None => row.extend(std::iter::repeat(String::new()).take(9)),
        }
        match &d.fit {
            Some(f) => {
                row.push(format!("{:.17e}", f.alphas[0]));
                row.push(format!("{:.17e}", f.rates[0]));
                row.extend(f.points[0].coords().iter().map(|c| format!("{c:.17e}")));
                row.push(format!("{:.17e}", f.remainder_norm));
            }
            None => row.extend(std::iter::repeat(String::new()).take(7)),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Richardson extrapolation to `τ = 0` through the last three samples,
/// for values behaving like `c₀ + c₁ √τ + c₂ τ`.
pub fn richardson_sqrt_tau(taus: &[f64], values: &[f64]) -> Option<f64> {
    let n = taus.len();
    if n < 3 || values.len() != n {
        return None;
    }
    let a = Matrix3::from_fn(|r, c| taus[n - 3 + r].sqrt().powi(c as i32));
    let y = Vector3::from_fn(|r, _| values[n - 3 + r]);
    a.lu().solve(&y).map(|c| c[0])
}

/// Scaling laws measured along a concentrating branch, over its last
/// decade in τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupLaws {
    /// Points used: τ within a factor 10 of the final τ, concentrating.
    pub taus: Vec<f64>,
    pub heights: Vec<f64>,
    pub tau_m2: Vec<f64>,
    /// Distance from the final top peak to its nearest critical point.
    pub final_peak_distance: Option<f64>,
    /// Least-squares slope of `ln m` against `ln τ`.
    pub height_slope: Option<f64>,
    /// Largest relative difference of `τ m²` over the last three points.
    pub tau_m2_spread: Option<f64>,
    pub tau_m2_extrapolated: Option<f64>,
    /// `|τ ln m|` at each point.
    pub log_height: Vec<f64>,
    pub log_height_decreasing: bool,
    /// Smallest and largest fitted rate over the predicted rate, over the
    /// whole branch.
    pub rate_ratio_range: Option<(f64, f64)>,
    /// `remainder ≈ C (τ|ln τ|)^e`: `(C, e)`.
    pub remainder_fit: Option<(f64, f64)>,
}

pub fn blowup_laws<F: Fn(f64) -> f64>(branch: &Branch, predicted_rate: F) -> BlowupLaws {
    let last_tau = branch.points.last().map_or(f64::NAN, |p| p.state.tau);
    let tail: Vec<&BranchPoint> = branch
        .points
        .iter()
        .filter(|p| p.diagnostics.concentrating && !p.diagnostics.peaks.is_empty() && p.state.tau <= 10.0 * last_tau * (1.0 + 1e-12))
        .collect();
    let taus: Vec<f64> = tail.iter().map(|p| p.state.tau).collect();
    let heights: Vec<f64> = tail.iter().map(|p| p.diagnostics.peaks[0].height).collect();
    let tau_m2: Vec<f64> = tail.iter().map(|p| p.diagnostics.peaks[0].tau_m2).collect();
    let n = taus.len();
    let height_slope = if n >= 2 { crate::asymptotics::loglog_slope(&taus, &heights) } else { None };
    let tau_m2_spread = (n >= 3).then(|| {
        let w = &tau_m2[n - 3..];
        let mut worst = 0.0f64;
        for a in w {
            for b in w {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
        worst
    });
    let log_height: Vec<f64> = taus.iter().zip(&heights).map(|(t, m)| (t * m.ln()).abs()).collect();
    let rate_ratio_range = branch
        .points
        .iter()
        .filter_map(|p| p.diagnostics.fit.as_ref().map(|f| f.rates[0] / predicted_rate(p.state.tau)))
        .fold(None, |acc: Option<(f64, f64)>, r| Some(acc.map_or((r, r), |(lo, hi)| (lo.min(r), hi.max(r)))));
    let rem: Vec<(f64, f64)> = tail
        .iter()
        .filter_map(|p| p.diagnostics.fit.as_ref().map(|f| (p.state.tau * p.state.tau.ln().abs(), f.remainder_norm)))
        .collect();
    let remainder_fit = (rem.len() >= 2).then(|| {
        let x: Vec<f64> = rem.iter().map(|r| r.0.ln()).collect();
        let y: Vec<f64> = rem.iter().map(|r| r.1.ln()).collect();
        let m = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
        let e = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
        ((my - e * mx).exp(), e)
    });
    BlowupLaws {
        final_peak_distance: branch.points.last().and_then(|p| p.diagnostics.peaks.first()).and_then(|pk| pk.critical_distance),
        height_slope,
        tau_m2_spread,
        tau_m2_extrapolated: richardson_sqrt_tau(&taus, &tau_m2),
        log_height_decreasing: n >= 2 && log_height.windows(2).all(|w| w[1] < w[0]),
        log_height,
        rate_ratio_range,
        remainder_fit,
        taus,
        heights,
        tau_m2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::{bubble_spectrum, bubble_zonal, BubbleParams};
    use crate::solver::ZonalDiscretization;
    use crate::spectrum::HarmonicSpectrum;
    use crate::solver::SolveStatus;
    use crate::zonal::ZonalSpectrum;

    fn fake_state(v: Solution, tau: f64) -> SolverState {
        let (lo, hi) = match &v {
            Solution::Zonal(z) => (z.eval(PI).min(z.eval(0.0)), z.eval(0.0).max(z.eval(PI))),
            Solution::Full(s) => {
                let pl = SpectralPlan::with_grid_order(s.l_max(), 2 * s.l_max() + 2).unwrap();
                let vals = pl.inverse_values(s).unwrap();
                (vals.iter().cloned().fold(f64::INFINITY, f64::min), vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            }
        };
        SolverState {
            tau,
            l: v.l_max(),
            residual_norm: 0.0,
            nonlinear_norm: 1.0,
            newton_iters: 0,
            positive: lo > 0.0,
            min_value: lo,
            max_value: hi,
            status: SolveStatus::Converged,
            v,
        }
    }

    #[test]
    fn zonal_bubble_profile() {
        let k: AmbientPolynomial = "1".parse().unwrap();
        let b = BubbleParams::unit(SpherePoint::north(), 20.0).unwrap();
        let st = fake_state(Solution::Zonal(bubble_zonal(&b, 200)), 0.01);
        let d = diagnostics(&st, &k, 1, &[]).unwrap();
        assert_eq!(d.peaks.len(), 1);
        let p = &d.peaks[0];
        assert!(geodesic_distance(&p.location, &SpherePoint::north()) < 1e-12);
        assert!((p.height - 20.0).abs() < 1e-6 * 20.0, "{}", p.height);
        assert!(p.profile_error < 0.02, "{}", p.profile_error);
        assert!(d.concentrating && d.resolution_ok);
        let f = d.fit.unwrap();
        assert!((f.rates[0] - 20.0).abs() < 1e-6 && (f.alphas[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn full_bubble_peak() {
        let k: AmbientPolynomial = "1".parse().unwrap();
        let q = SpherePoint::normalize([0.2, -0.4, 0.1, 0.8]).unwrap();
        let b = BubbleParams::unit(q, 4.0).unwrap();
        let st = fake_state(Solution::Full(bubble_spectrum(&b, 24)), 0.05);
        let d = diagnostics(&st, &k, 1, &[]).unwrap();
        assert_eq!(d.peaks.len(), 1, "{:?}", d.peaks);
        assert!(geodesic_distance(&d.peaks[0].location, &q) < 1e-5);
        assert!((d.peaks[0].height - 4.0).abs() < 1e-3, "{}", d.peaks[0].height);
        assert!(d.peaks[0].profile_error < 0.02);
    }

    #[test]
    fn constant_is_not_concentrating() {
        let k: AmbientPolynomial = "1".parse().unwrap();
        let st = fake_state(Solution::Zonal(ZonalSpectrum::constant(8, SpherePoint::north(), 1.0)), 0.3);
        let d = diagnostics(&st, &k, 1, &[]).unwrap();
        assert_eq!(d.peaks.len(), 1);
        assert!(!d.concentrating && d.fit.is_none());
        let st = fake_state(Solution::Full(HarmonicSpectrum::constant(4, 1.0)), 0.3);
        let d = diagnostics(&st, &k, 1, &[]).unwrap();
        assert_eq!(d.peaks.len(), 1);
        assert!(!d.concentrating);
    }

    #[test]
    fn constant_branch_stays_constant() {
        let k: AmbientPolynomial = "1".parse().unwrap();
        let d = ZonalDiscretization::new(&k, SpherePoint::north(), 16).unwrap();
        let init = Solution::Zonal(ZonalSpectrum::constant(16, SpherePoint::north(), 1.0));
        let br = continuation(&d, &k, 0.5, 0.01, 6, &init, &[], &ContinuationOptions::default()).unwrap();
        assert_eq!(br.stop, BranchStop::Completed);
        assert_eq!(br.points.len(), 7);
        for p in &br.points {
            assert!((p.state.max_value - 1.0).abs() < 1e-12 && (p.state.min_value - 1.0).abs() < 1e-12);
            assert!(!p.diagnostics.concentrating);
        }
        let mut buf = Vec::new();
        write_branch_csv(&br, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 9);
    }

    #[test]
    fn schedule_is_geometric() {
        let s = tau_schedule(0.5, 0.005, 4).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[4], 0.005);
        for w in s.windows(2) {
            assert!((w[1] / w[0] - 0.1f64.sqrt()).abs() < 1e-14);
        }
        assert!(tau_schedule(0.1, 0.2, 3).is_err());
    }

    #[test]
    fn richardson_removes_half_and_first_order_terms() {
        let t = [0.04f64, 0.02, 0.01];
        let v: Vec<f64> = t.iter().map(|x| 0.25 - 0.7 * x.sqrt() + 3.0 * x).collect();
        assert!((richardson_sqrt_tau(&t, &v).unwrap() - 0.25).abs() < 1e-13);
        assert!(richardson_sqrt_tau(&t[1..], &v[1..]).is_none());
    }
}
