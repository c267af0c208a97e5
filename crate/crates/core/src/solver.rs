//! Newton and continuation solver for `P_{1/2} v = K |v|^{1−τ} v` on S³,
//! in the full harmonic basis or in the zonal subspace about an axis.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot4, SpherePoint, Vec4};
use crate::linalg::{gmres, GmresOptions};
use crate::polynomial::AmbientPolynomial;
use crate::quadrature::QuadratureGrid;
use crate::spectrum::{p_sigma_multiplier, HarmonicSpectrum};
use crate::transform::SpectralPlan;
use crate::zonal::{ZonalPlan, ZonalSpectrum};

/// A discretized function: full harmonic coefficients or zonal coefficients
/// about a pole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Solution {
    Full(HarmonicSpectrum),
    Zonal(ZonalSpectrum),
}

impl Solution {
    pub fn l_max(&self) -> usize {
        match self {
            Solution::Full(s) => s.l_max(),
            Solution::Zonal(z) => z.l_max(),
        }
    }

    pub fn eval_at(&self, p: &SpherePoint) -> f64 {
        match self {
            Solution::Full(s) => s.eval_at(p),
            Solution::Zonal(z) => z.eval_at(p),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        match self {
            Solution::Full(s) => s.l2_norm(),
            Solution::Zonal(z) => z.l2_norm(),
        }
    }

    pub fn hsigma_norm(&self) -> f64 {
        match self {
            Solution::Full(s) => s.hsigma_norm(),
            Solution::Zonal(z) => z.hsigma_inner(z).map(f64::sqrt).unwrap_or(f64::NAN),
        }
    }

    /// Full-basis coefficients (zonal data expanded by the addition theorem).
    pub fn to_full(&self) -> HarmonicSpectrum {
        match self {
            Solution::Full(s) => s.clone(),
            Solution::Zonal(z) => z.to_full(),
        }
    }

    fn coeffs(&self) -> &[f64] {
        match self {
            Solution::Full(s) => s.coeffs(),
            Solution::Zonal(z) => z.coeffs(),
        }
    }

    fn with_coeffs(&self, c: Vec<f64>) -> Self {
        match self {
            Solution::Full(s) => Solution::Full(HarmonicSpectrum::from_coeffs(s.l_max(), c).expect("length")),
            Solution::Zonal(z) => Solution::Zonal(ZonalSpectrum::from_coeffs(*z.pole(), c).expect("length")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// Converged to a function with a non-positive value.
    NotPositive,
    /// Converged to the zero function.
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub tau: f64,
    pub v: Solution,
    /// `‖P v − K|v|^{1−τ}v‖_{L²}`.
    pub residual_norm: f64,
    /// `‖K|v|^{1−τ}v‖_{L²}`, the scale for the relative tolerance.
    pub nonlinear_norm: f64,
    pub newton_iters: usize,
    pub positive: bool,
    pub min_value: f64,
    pub max_value: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub status: SolveStatus,
}

impl SolverState {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    /// GMRES preconditioned by `P_{1/2}^{-1}`.
    Iterative,
    /// Dense Jacobian and LU; full-basis oracle for small degrees.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rtol: f64,
    pub max_steps: usize,
    pub armijo: f64,
    pub min_step: f64,
    /// Grid order for the nonlinear term in the full basis, as a multiple of `L`.
    pub grid_factor: usize,
    pub linear: LinearSolver,
    pub gmres: GmresOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-9,
            max_steps: 50,
            armijo: 1e-4,
            min_step: 1.0 / 1024.0,
            grid_factor: 4,
            linear: LinearSolver::Iterative,
            gmres: GmresOptions { rtol: 1e-10, restart: 80, max_iterations: 800 },
        }
    }
}

/// Largest degree for which the dense full-basis Jacobian is assembled.
pub const DENSE_JACOBIAN_MAX_DEGREE: usize = 8;

#[inline]
fn power_term(k: f64, v: f64, tau: f64) -> f64 {
    k * v.abs().powf(1.0 - tau) * v
}

#[inline]
fn power_derivative(k: f64, v: f64, tau: f64) -> f64 {
    (2.0 - tau) * k * v.abs().powf(1.0 - tau)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Discretized operator for one `K` and one basis.
pub trait Discretization: Sync {
    fn l_max(&self) -> usize;
    fn template(&self) -> Solution;
    /// Values of `v` and `K` at the quadrature nodes.
    fn node_values(&self, v: &Solution) -> Vec<f64>;
    fn k_nodes(&self) -> &[f64];
    /// Projection of node values onto coefficients.
    fn project(&self, values: &[f64]) -> Vec<f64>;
    /// `P_{1/2}` multiplier for each coefficient.
    fn multipliers(&self) -> &[f64];
    /// Weighted sum approximating `∫_{S³}`.
    fn integrate(&self, values: &[f64]) -> f64;
    /// Dense Jacobian `P − (2−τ)K|v|^{1−τ}`, if available.
    fn dense_jacobian(&self, v: &Solution, tau: f64) -> Option<DMatrix<f64>>;
    /// Minimum and maximum of `v`.
    fn range(&self, v: &Solution) -> (f64, f64);
}

/// Full harmonic basis up to degree `L`.
pub struct FullDiscretization {
    plan: SpectralPlan,
    k_nodes: Vec<f64>,
    multipliers: Vec<f64>,
}

impl FullDiscretization {
    pub fn new(k: &AmbientPolynomial, l_max: usize, grid_factor: usize) -> Result<Self> {
        let order = (grid_factor.max(2) * l_max + 1).max(k.degree() as usize + 2);
        let plan = SpectralPlan::new(l_max, Arc::new(QuadratureGrid::with_order(order)?))?;
        let k_nodes = plan.grid().nodes().iter().map(|p| k.eval_at(p)).collect();
        let multipliers = (0..=l_max)
            .flat_map(|l| std::iter::repeat(p_sigma_multiplier(l)).take((l + 1) * (l + 1)))
            .collect();
        Ok(FullDiscretization { plan, k_nodes, multipliers })
    }

    pub fn plan(&self) -> &SpectralPlan {
        &self.plan
    }
}

impl Discretization for FullDiscretization {
    fn l_max(&self) -> usize {
        self.plan.l_max()
    }

    fn template(&self) -> Solution {
        Solution::Full(HarmonicSpectrum::zeros(self.plan.l_max()))
    }

    fn node_values(&self, v: &Solution) -> Vec<f64> {
        match v {
            Solution::Full(s) => self.plan.inverse_values(s).expect("degree within plan"),
            Solution::Zonal(z) => self.plan.inverse_values(&z.to_full()).expect("degree within plan"),
        }
    }

    fn k_nodes(&self) -> &[f64] {
        &self.k_nodes
    }

    fn project(&self, values: &[f64]) -> Vec<f64> {
        self.plan.forward_values(values).expect("grid values").into_coeffs()
    }

    fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    fn integrate(&self, values: &[f64]) -> f64 {
        self.plan.grid().integrate_values(values)
    }

    fn dense_jacobian(&self, v: &Solution, tau: f64) -> Option<DMatrix<f64>> {
        let l = self.plan.l_max();
        if l > DENSE_JACOBIAN_MAX_DEGREE {
            return None;
        }
        let n = self.multipliers.len();
        let vals = self.node_values(v);
        let g: Vec<f64> = vals.iter().zip(&self.k_nodes).map(|(v, k)| power_derivative(*k, *v, tau)).collect();
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = HarmonicSpectrum::zeros(l);
            e.coeffs_mut()[c] = 1.0;
            let w = self.plan.inverse_values(&e).expect("degree within plan");
            let prod: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a * b).collect();
            let col = self.project(&prod);
            for r in 0..n {
                jac[(r, c)] = -col[r];
            }
            jac[(c, c)] += self.multipliers[c];
        }
        Some(jac)
    }

    fn range(&self, v: &Solution) -> (f64, f64) {
        let vals = self.node_values(v);
        vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }
}

/// Zonal subspace about an axis: one coefficient per degree.
pub struct ZonalDiscretization {
    plan: ZonalPlan,
    axis: SpherePoint,
    k_nodes: Vec<f64>,
    k_poles: [f64; 2],
    weights: Vec<f64>,
    multipliers: Vec<f64>,
}

/// Tolerance for the axial-symmetry check of `K`.
const ZONAL_CHECK_TOL: f64 = 1e-12;

pub(crate) fn orthogonal_unit(axis: &SpherePoint, seed: u64) -> Vec4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let r: Vec4 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let w = axis.project_tangent(&r);
        let n = dot4(&w, &w).sqrt();
        if n > 0.1 {
            return [w[0] / n, w[1] / n, w[2] / n, w[3] / n];
        }
    }
}

pub(crate) fn point_on_meridian(axis: &SpherePoint, u: &Vec4, chi: f64) -> SpherePoint {
    axis.exp(&[chi * u[0], chi * u[1], chi * u[2], chi * u[3]])
}

/// Checks by sampling that `K` depends only on the distance to `axis`.
pub fn check_zonal(k: &AmbientPolynomial, axis: &SpherePoint) -> Result<()> {
    let scale = 1.0 + (0..16).map(|i| k.eval_at(&point_on_meridian(axis, &orthogonal_unit(axis, 99), i as f64 * 0.2))).fold(0.0f64, |a, b| a.max(b.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..64 {
        let chi = rng.gen_range(0.0..PI);
        let base = k.eval_at(&point_on_meridian(axis, &orthogonal_unit(axis, rng.gen()), chi));
        for _ in 0..6 {
            let other = k.eval_at(&point_on_meridian(axis, &orthogonal_unit(axis, rng.gen()), chi));
            if (other - base).abs() > ZONAL_CHECK_TOL * scale {
                return Err(Error::Precondition(format!(
                    "K is not invariant under rotations about the axis (deviation {:e})",
                    (other - base).abs()
                )));
            }
        }
    }
    Ok(())
}

impl ZonalDiscretization {
    pub fn new(k: &AmbientPolynomial, axis: SpherePoint, l_max: usize) -> Result<Self> {
        check_zonal(k, &axis)?;
        let plan = ZonalPlan::dealiased(l_max);
        let u = orthogonal_unit(&axis, 1);
        let k_nodes = plan.nodes().iter().map(|&c| k.eval_at(&point_on_meridian(&axis, &u, c))).collect();
        let k_poles = [k.eval_at(&axis), k.eval_at(&axis.antipode())];
        let weights = plan.weights();
        let multipliers = (0..=l_max).map(p_sigma_multiplier).collect();
        Ok(ZonalDiscretization { plan, axis, k_nodes, k_poles, weights, multipliers })
    }

    pub fn axis(&self) -> &SpherePoint {
        &self.axis
    }

    fn zonal<'a>(&self, v: &'a Solution) -> &'a ZonalSpectrum {
        match v {
            Solution::Zonal(z) => z,
            Solution::Full(_) => panic!("full spectrum passed to a zonal discretization"),
        }
    }

    /// Analysis coefficients `∫ g Z_m` for `m ≤ degree`.
    fn analyze(&self, values: &[f64], degree: usize) -> Vec<f64> {
        self.plan.analyze(values, degree, self.axis).expect("node count").coeffs().to_vec()
    }
}

impl Discretization for ZonalDiscretization {
    fn l_max(&self) -> usize {
        self.plan.l_max()
    }

    fn template(&self) -> Solution {
        Solution::Zonal(ZonalSpectrum::zeros(self.plan.l_max(), self.axis))
    }

    fn node_values(&self, v: &Solution) -> Vec<f64> {
        self.plan.synthesize(self.zonal(v))
    }

    fn k_nodes(&self) -> &[f64] {
        &self.k_nodes
    }

    fn project(&self, values: &[f64]) -> Vec<f64> {
        self.analyze(values, self.plan.l_max())
    }

    fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    fn dense_jacobian(&self, v: &Solution, tau: f64) -> Option<DMatrix<f64>> {
        let l = self.plan.l_max();
        let vals = self.node_values(v);
        let g: Vec<f64> = vals.iter().zip(&self.k_nodes).map(|(v, k)| power_derivative(*k, *v, tau)).collect();
        // Z_l Z_k = (1/(π√2)) Σ_{m=|l−k|, step 2}^{l+k} Z_m, summed with parity prefix sums.
        let h = self.analyze(&g, 2 * l);
        let mut prefix = vec![0.0; 2 * l + 1];
        for m in 0..=2 * l {
            prefix[m] = h[m] + if m >= 2 { prefix[m - 2] } else { 0.0 };
        }
        let c = 1.0 / (PI * SQRT_2);
        let mut jac = DMatrix::zeros(l + 1, l + 1);
        for a in 0..=l {
            for b in a..=l {
                let lo = a.abs_diff(b);
                let hi = a + b;
                let s = prefix[hi] - if lo >= 2 { prefix[lo - 2] } else { 0.0 };
                jac[(a, b)] = -c * s;
                jac[(b, a)] = -c * s;
            }
            jac[(a, a)] += self.multipliers[a];
        }
        Some(jac)
    }

    fn range(&self, v: &Solution) -> (f64, f64) {
        let z = self.zonal(v);
        let vals = self.node_values(v);
        let ends = [z.eval(0.0), z.eval(PI)];
        vals.iter()
            .chain(&ends)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }
}

impl ZonalDiscretization {
    /// `K` at the axis and at its antipode.
    pub fn k_at_poles(&self) -> [f64; 2] {
        self.k_poles
    }
}

/// Coefficients of `P v − K|v|^{1−τ}v` and of `K|v|^{1−τ}v`.
fn residual_parts<D: Discretization + ?Sized>(d: &D, v: &Solution, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let vals = d.node_values(v);
    let nl: Vec<f64> = vals.iter().zip(d.k_nodes()).map(|(v, k)| power_term(*k, *v, tau)).collect();
    let n = d.project(&nl);
    let r = v.coeffs().iter().zip(d.multipliers()).zip(&n).map(|((c, m), x)| m * c - x).collect();
    (r, n)
}

/// Spectrum of `P_{1/2}v − K|v|^{1−τ}v` for a full-basis `v`, with the
/// nonlinearity evaluated on a grid of order `4L + 1`.
pub fn residual(v: &HarmonicSpectrum, tau: f64, k: &AmbientPolynomial) -> Result<HarmonicSpectrum> {
    let d = FullDiscretization::new(k, v.l_max(), SolverOptions::default().grid_factor)?;
    let (r, _) = residual_parts(&d, &Solution::Full(v.clone()), tau);
    HarmonicSpectrum::from_coeffs(v.l_max(), r)
}

/// Jacobian-vector product `P w − (2−τ)K|v|^{1−τ} w`.
pub fn jacobian_apply<D: Discretization + ?Sized>(d: &D, v: &Solution, tau: f64, w: &Solution) -> Vec<f64> {
    let vals = d.node_values(v);
    let wv = d.node_values(w);
    let prod: Vec<f64> = vals
        .iter()
        .zip(&wv)
        .zip(d.k_nodes())
        .map(|((v, w), k)| power_derivative(*k, *v, tau) * w)
        .collect();
    let p = d.project(&prod);
    w.coeffs().iter().zip(d.multipliers()).zip(&p).map(|((c, m), x)| m * c - x).collect()
}

/// Residual of a discretized state.
pub fn residual_of<D: Discretization + ?Sized>(d: &D, v: &Solution, tau: f64) -> Vec<f64> {
    residual_parts(d, v, tau).0
}

fn linear_solve<D: Discretization + ?Sized>(
    d: &D,
    v: &Solution,
    tau: f64,
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let use_dense = matches!(v, Solution::Zonal(_)) || opts.linear == LinearSolver::Dense;
    if use_dense {
        let jac = d.dense_jacobian(v, tau).ok_or_else(|| {
            Error::Precondition(format!("dense Jacobian limited to degree {DENSE_JACOBIAN_MAX_DEGREE}"))
        })?;
        let n = rhs.len();
        let lu = jac.lu();
        let x = lu
            .solve(&DVector::from_column_slice(rhs))
            .ok_or_else(|| Error::Singular("Jacobian is singular (bifurcation suspected)".into()))?;
        if x.iter().any(|t| !t.is_finite()) {
            return Err(Error::Singular("Jacobian is singular (bifurcation suspected)".into()));
        }
        return Ok((0..n).map(|i| x[i]).collect());
    }
    let mult = d.multipliers().to_vec();
    let out = gmres(
        |w: &[f64]| jacobian_apply(d, v, tau, &v.with_coeffs(w.to_vec())),
        |r: &[f64]| r.iter().zip(&mult).map(|(x, m)| x / m).collect(),
        rhs,
        &vec![0.0; rhs.len()],
        opts.gmres,
    );
    if !out.converged {
        return Err(Error::Singular(format!(
            "GMRES stalled at relative residual {:e} after {} iterations (bifurcation suspected)",
            out.relative_residual, out.iterations
        )));
    }
    Ok(out.x)
}

/// Damped Newton iteration on a discretization.
pub fn newton<D: Discretization + ?Sized>(d: &D, v0: &Solution, tau: f64, opts: &SolverOptions) -> Result<SolverState> {
    if !(tau > 0.0 && tau < 2.0) {
        return Err(Error::Precondition("tau must lie in (0, 2)".into()));
    }
    if v0.l_max() != d.l_max() {
        return Err(Error::Precondition(format!("initial degree {} differs from {}", v0.l_max(), d.l_max())));
    }
    let mut v = v0.clone();
    let (mut r, mut n) = residual_parts(d, &v, tau);
    let mut rn = l2(&r);
    let mut status = SolveStatus::MaxIterations;
    let mut iters = 0;
    for it in 0..=opts.max_steps {
        iters = it;
        if rn <= opts.rtol * l2(&n) {
            status = SolveStatus::Converged;
            break;
        }
        if l2(v.coeffs()) == 0.0 {
            status = SolveStatus::Trivial;
            break;
        }
        if it == opts.max_steps {
            break;
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let step = linear_solve(d, &v, tau, &rhs, opts)?;
        let phi0 = 0.5 * rn * rn;
        let mut lam = 1.0;
        loop {
            let trial = v.with_coeffs(v.coeffs().iter().zip(&step).map(|(a, b)| a + lam * b).collect());
            let (rt, nt) = residual_parts(d, &trial, tau);
            let rtn = l2(&rt);
            if 0.5 * rtn * rtn <= (1.0 - 2.0 * opts.armijo * lam) * phi0 {
                v = trial;
                r = rt;
                n = nt;
                rn = rtn;
                break;
            }
            lam *= 0.5;
            if lam < opts.min_step {
                status = SolveStatus::LineSearchFailed;
                break;
            }
        }
        if status == SolveStatus::LineSearchFailed {
            break;
        }
    }
    let (lo, hi) = d.range(&v);
    let positive = lo > 0.0;
    if status == SolveStatus::Converged {
        if l2(v.coeffs()) <= 1e-300 {
            status = SolveStatus::Trivial;
        } else if !positive {
            status = SolveStatus::NotPositive;
        }
    }
    Ok(SolverState {
        tau,
        l: d.l_max(),
        residual_norm: rn,
        nonlinear_norm: l2(&n),
        newton_iters: iters,
        positive,
        min_value: lo,
        max_value: hi,
        status,
        v,
    })
}

/// Newton solve in the full basis of degree `v0.l_max()`.
pub fn newton_solve(v0: &HarmonicSpectrum, tau: f64, k: &AmbientPolynomial, opts: &SolverOptions) -> Result<SolverState> {
    let d = FullDiscretization::new(k, v0.l_max(), opts.grid_factor)?;
    newton(&d, &Solution::Full(v0.clone()), tau, opts)
}

/// Newton solve in the zonal subspace about the pole of `v0`.
pub fn axisym_solve(k: &AmbientPolynomial, tau: f64, v0: &ZonalSpectrum, opts: &SolverOptions) -> Result<SolverState> {
    let d = ZonalDiscretization::new(k, *v0.pole(), v0.l_max())?;
    newton(&d, &Solution::Zonal(v0.clone()), tau, opts)
}

/// Constant initial guess `K̄^{−1/(1−τ)}` with `K̄` the mean of `K`.
pub fn constant_guess(k: &AmbientPolynomial, tau: f64) -> f64 {
    let grid = QuadratureGrid::with_order(k.degree() as usize + 1).expect("small grid");
    let mean = grid.integrate(|p| k.eval_at(p)) / (2.0 * PI * PI);
    mean.powf(-1.0 / (1.0 - tau))
}

/// `I_τ(v) = ½⟨v, v⟩ − (1/(3−τ)) ∫ K|v|^{3−τ}`.
pub fn energy<D: Discretization + ?Sized>(d: &D, v: &Solution, tau: f64) -> f64 {
    let vals = d.node_values(v);
    let quad: f64 = v.coeffs().iter().zip(d.multipliers()).map(|(c, m)| m * c * c).sum();
    let pot: Vec<f64> = vals.iter().zip(d.k_nodes()).map(|(v, k)| k * v.abs().powf(3.0 - tau)).collect();
    0.5 * quad - d.integrate(&pot) / (3.0 - tau)
}

/// Largest relative directional derivative of the energy over random
/// band-limited directions: `|⟨v, w⟩ − ∫ K|v|^{1−τ}v w| / (|⟨v, w⟩| + |∫ K|v|^{1−τ}v w|)`.
pub fn energy_stationarity<D: Discretization + ?Sized>(d: &D, v: &Solution, tau: f64, n_dirs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = d.node_values(v);
    let nl: Vec<f64> = vals.iter().zip(d.k_nodes()).map(|(v, k)| power_term(*k, *v, tau)).collect();
    let mut worst = 0.0f64;
    for _ in 0..n_dirs {
        let w: Vec<f64> = v.coeffs().iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let quad: f64 = v.coeffs().iter().zip(&w).zip(d.multipliers()).map(|((a, b), m)| m * a * b).sum();
        let wv = d.node_values(&v.with_coeffs(w));
        let prod: Vec<f64> = nl.iter().zip(&wv).map(|(a, b)| a * b).collect();
        let pot = d.integrate(&prod);
        worst = worst.max((quad - pot).abs() / (quad.abs() + pot.abs()));
    }
    worst
}

/// Taylor remainders `‖R(v + h w) − R(v) − h J(v) w‖` for each step `h`;
/// they shrink like `h²` when the Jacobian is consistent with the residual.
pub fn taylor_remainders<D: Discretization + ?Sized>(d: &D, v: &Solution, tau: f64, w: &Solution, steps: &[f64]) -> Vec<f64> {
    let r0 = residual_of(d, v, tau);
    let jw = jacobian_apply(d, v, tau, w);
    steps
        .iter()
        .map(|&h| {
            let shifted = v.with_coeffs(v.coeffs().iter().zip(w.coeffs()).map(|(a, b)| a + h * b).collect());
            let r = residual_of(d, &shifted, tau);
            let e: Vec<f64> = r.iter().zip(&r0).zip(&jw).map(|((a, b), c)| a - b - h * c).collect();
            l2(&e)
        })
        .collect()
}
