//! One-dimensional Gauss rules, adaptive Gauss–Kronrod integration, and the
//! product quadrature grid on S³.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;

/// Memory budget for a single quadrature grid (node coordinates + weights).
pub const DEFAULT_GRID_BUDGET_BYTES: u64 = 4 << 30;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on the three-term recurrence.
        let theta = PI * (4.0 * i as f64 + 3.0) / (4.0 * nf + 2.0);
        let mut z = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss rule in `chi ∈ (0, π)` for the weight `sin²χ`: nodes
/// `kπ/(n+1)`, weights `π/(n+1)·sin²χ_k`. Exact for polynomials in `cosχ`
/// of degree `≤ 2n − 1`.
pub fn gauss_chebyshev_u(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = PI / (n as f64 + 1.0);
    (1..=n)
        .map(|k| {
            let chi = k as f64 * h;
            let s = chi.sin();
            (chi, h * s * s)
        })
        .unzip()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    let err = ((rk - rg) * h).abs();
    (rk * h, err)
}

/// Tolerances for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { rtol: 1e-10, atol: 1e-14, max_intervals: 4000 }
    }
}

struct Interval {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over `[a, b]`, with
/// the initial partition split at `breakpoints` (points outside are
/// ignored). Returns the value and an error estimate.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
) -> Result<(f64, f64)> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Precondition(format!("invalid interval [{a}, {b}]")));
    }
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut cuts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(b);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in cuts.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Interval { a: w[0], b: w[1], value: v, err: e });
    }
    loop {
        if !(total.is_finite() && total_err.is_finite()) {
            return Err(Error::Numerical("integrand produced non-finite values".into()));
        }
        if total_err <= opts.atol.max(opts.rtol * total.abs()) {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge: value {total:e}, error estimate {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            return Err(Error::Numerical("interval subdivision underflow".into()));
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Interval { a: worst.a, b: m, value: v1, err: e1 });
        heap.push(Interval { a: m, b: worst.b, value: v2, err: e2 });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value: f64 = heap.iter().map(|i| i.value).sum();
    let err: f64 = heap.iter().map(|i| i.err).sum();
    Ok((value, err))
}

/// A tensor-product quadrature rule on S³.
///
/// Node `(i_chi, i_theta, i_phi)` is stored at flat index
/// `(i_chi·n_theta + i_theta)·n_phi + i_phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    order: usize,
    chi: Vec<f64>,
    chi_weights: Vec<f64>,
    cos_theta: Vec<f64>,
    theta_weights: Vec<f64>,
    n_phi: usize,
    nodes: Vec<SpherePoint>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Bytes a grid of the given order would occupy.
    pub fn estimated_bytes(order: usize) -> u64 {
        let (nc, nt, np) = Self::dims(order);
        (nc * nt * np) as u64 * (std::mem::size_of::<SpherePoint>() as u64 + 8)
    }

    fn dims(order: usize) -> (usize, usize, usize) {
        (order / 2 + 1, order / 2 + 1, order + 1)
    }

    /// Grid integrating every polynomial of ambient degree `≤ order` exactly.
    pub fn with_order(order: usize) -> Result<Self> {
        Self::with_order_budget(order, DEFAULT_GRID_BUDGET_BYTES)
    }

    pub fn with_order_budget(order: usize, budget_bytes: u64) -> Result<Self> {
        let need = Self::estimated_bytes(order);
        if need > budget_bytes {
            return Err(Error::Resource {
                message: format!("quadrature grid of order {order}"),
                required_bytes: need,
            });
        }
        let (nc, nt, np) = Self::dims(order);
        let (chi, chi_weights) = gauss_chebyshev_u(nc);
        let (cos_theta, theta_weights) = gauss_legendre(nt);
        let dphi = 2.0 * PI / np as f64;
        let mut nodes = Vec::with_capacity(nc * nt * np);
        let mut weights = Vec::with_capacity(nc * nt * np);
        let phis: Vec<(f64, f64)> = (0..np).map(|k| (k as f64 * dphi).sin_cos()).collect();
        for (c, wc) in chi.iter().zip(&chi_weights) {
            let (sc, cc) = c.sin_cos();
            for (ct, wt) in cos_theta.iter().zip(&theta_weights) {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for &(sp, cp) in &phis {
                    let x = [sc * st * cp, sc * st * sp, sc * ct, cc];
                    nodes.push(SpherePoint::normalize(x).expect("grid node"));
                    weights.push(wc * wt * dphi);
                }
            }
        }
        Ok(QuadratureGrid {
            order,
            chi,
            chi_weights,
            cos_theta,
            theta_weights,
            n_phi: np,
            nodes,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Identifier used to pair fields with their grid.
    pub fn id(&self) -> GridId {
        GridId(self.order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SpherePoint] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn chi_weights(&self) -> &[f64] {
        &self.chi_weights
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    pub fn theta_weights(&self) -> &[f64] {
        &self.theta_weights
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    /// Quadrature sum `Σ w_i f(x_i)`.
    pub fn integrate<F: Fn(&SpherePoint) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Identifies a grid by its exactness order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(pub usize);

/// The grid used for degree-`L` analysis: exact through degree `2L + 1`.
pub fn build_grid(l: usize) -> Result<QuadratureGrid> {
    if l < 1 {
        return Err(Error::Precondition("build_grid needs L >= 1".into()));
    }
    QuadratureGrid::with_order(2 * l + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_small() {
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(20);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(38)).sum();
        assert!((s - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_u_rule_exact() {
        let (c, w) = gauss_chebyshev_u(6);
        // ∫ cos²χ sin²χ dχ = π/8
        let s: f64 = c.iter().zip(&w).map(|(c, w)| w * c.cos().powi(2)).sum();
        assert!((s - PI / 8.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaks_and_breakpoints() {
        let f = |x: f64| 1.0 / (1e-6 + (x - 0.3) * (x - 0.3));
        let exact = (0.7 / 1e-3f64).atan() / 1e-3 + (0.3 / 1e-3f64).atan() / 1e-3;
        let (v, _) = integrate_adaptive(f, 0.0, 1.0, &[0.3], AdaptiveOptions::default()).unwrap();
        assert!((v / exact - 1.0).abs() < 1e-10);
        let bad = integrate_adaptive(
            |x| 1.0 / x,
            0.0,
            1.0,
            &[],
            AdaptiveOptions { max_intervals: 200, ..Default::default() },
        );
        assert!(bad.is_err());
    }

    #[test]
    fn grid_basic_moments() {
        let g = build_grid(3).unwrap();
        assert_eq!(g.order(), 7);
        assert!((g.weights().iter().sum::<f64>() - 2.0 * PI * PI).abs() < 1e-10);
        assert!(g.integrate(|x| x.coords()[3]).abs() < 1e-10);
        assert!((g.integrate(|x| x.coords()[3].powi(2)) - PI * PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn grid_budget_guard() {
        match QuadratureGrid::with_order_budget(400, 1 << 20) {
            Err(Error::Resource { required_bytes, .. }) => assert!(required_bytes > 1 << 20),
            other => panic!("{other:?}"),
        }
    }
}
