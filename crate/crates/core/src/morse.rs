//! Critical points of a prescribed curvature, the interaction matrix and
//! the degree count over configurations of negative-Laplacian points.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubbles::greens_function;
use crate::error::{Error, Result};
use crate::geometry::{dot4, geodesic_distance, SpherePoint, Vec4};
use crate::linalg::{min_eigenvalue, symmetric_eigenvalues};
use crate::polynomial::{sphere_derivatives, AmbientPolynomial};

/// Largest candidate set accepted by the subset enumeration.
pub const MAX_SUBSET_POINTS: usize = 20;
/// Points closer than this are merged.
pub const MERGE_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PointClass {
    KPlus,
    KMinus,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorseTolerances {
    pub grad: f64,
    /// Relative to the sampled C² size of K.
    pub hess_rel: f64,
    pub lap: f64,
    /// Relative to the largest entry of each interaction matrix.
    pub mu_rel: f64,
}

impl Default for MorseTolerances {
    fn default() -> Self {
        MorseTolerances { grad: 1e-10, hess_rel: 1e-8, lap: 1e-8, mu_rel: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    pub location: SpherePoint,
    pub grad_norm: f64,
    pub hessian_eigs: [f64; 3],
    pub morse_index: u32,
    pub laplacian: f64,
    pub k_value: f64,
    pub class: PointClass,
    /// All Hessian eigenvalues exceed the Hessian tolerance in size.
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPointRecord>,
    /// Every point is nondegenerate.
    pub morse: bool,
    pub tol_grad: f64,
    pub tol_hess: f64,
    pub min_sampled_value: f64,
}

impl CriticalPointSet {
    /// `Σ (−1)^{i(q)}` over all points.
    pub fn euler_sum(&self) -> i64 {
        self.points.iter().map(|p| if p.morse_index % 2 == 0 { 1 } else { -1 }).sum()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Low-discrepancy points on S³: Halton in bases 2, 3, 5 with a seeded
/// Cranley–Patterson shift, mapped through the Hopf-type equal-area chart.
pub fn halton_sphere_points(n: usize, seed: u64) -> Vec<SpherePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    (1..=n as u64)
        .map(|i| {
            let u = [
                (radical_inverse(i, 2) + shift[0]).fract(),
                (radical_inverse(i, 3) + shift[1]).fract(),
                (radical_inverse(i, 5) + shift[2]).fract(),
            ];
            let (r1, r2) = (u[0].sqrt(), (1.0 - u[0]).sqrt());
            let (a, b) = (2.0 * PI * u[1], 2.0 * PI * u[2]);
            SpherePoint::normalize([r1 * a.cos(), r1 * a.sin(), r2 * b.cos(), r2 * b.sin()]).expect("unit")
        })
        .collect()
}

fn frame_gradient(g: &Vec4, frame: &[Vec4; 3]) -> Vector3<f64> {
    Vector3::new(dot4(g, &frame[0]), dot4(g, &frame[1]), dot4(g, &frame[2]))
}

fn c2_size(k: &AmbientPolynomial, p: &SpherePoint) -> f64 {
    let d = sphere_derivatives(k, p);
    let h: f64 = d.hessian.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    d.value.abs() + dot4(&d.gradient, &d.gradient).sqrt() + h
}

/// Riemannian Newton iteration for `∇K = 0`.
fn newton_critical(k: &AmbientPolynomial, start: SpherePoint, tol: f64) -> Option<SpherePoint> {
    let mut p = start;
    for _ in 0..200 {
        let d = sphere_derivatives(k, &p);
        let g = frame_gradient(&d.gradient, &d.frame);
        if g.norm() <= tol {
            return Some(p);
        }
        let h = Matrix3::from_fn(|i, j| d.hessian[i][j]);
        let mut step = h.lu().solve(&(-g)).filter(|s| s.iter().all(|v| v.is_finite())).unwrap_or(-g);
        let n = step.norm();
        if n > 0.5 {
            step *= 0.5 / n;
        }
        let mut v = [0.0; 4];
        for (a, f) in d.frame.iter().enumerate() {
            for i in 0..4 {
                v[i] += step[a] * f[i];
            }
        }
        p = p.exp(&v);
    }
    None
}

fn record(k: &AmbientPolynomial, p: SpherePoint, tol: &MorseTolerances, tol_hess: f64) -> CriticalPointRecord {
    let d = sphere_derivatives(k, &p);
    let flat: Vec<f64> = d.hessian.iter().flatten().copied().collect();
    let e = symmetric_eigenvalues(&flat, 3).unwrap_or(vec![f64::NAN; 3]);
    let eigs = [e[0], e[1], e[2]];
    let class = if d.laplacian < -tol.lap {
        PointClass::KMinus
    } else if d.laplacian > tol.lap {
        PointClass::KPlus
    } else {
        PointClass::Degenerate
    };
    CriticalPointRecord {
        location: p,
        grad_norm: dot4(&d.gradient, &d.gradient).sqrt(),
        hessian_eigs: eigs,
        morse_index: eigs.iter().filter(|&&x| x < 0.0).count() as u32,
        laplacian: d.laplacian,
        k_value: d.value,
        class,
        nondegenerate: eigs.iter().all(|x| x.abs() > tol_hess),
    }
}

/// Multi-start critical point search with default tolerances.
pub fn find_critical_points(k: &AmbientPolynomial, n_starts: usize, seed: u64) -> Result<CriticalPointSet> {
    find_critical_points_with(k, n_starts, seed, &MorseTolerances::default())
}

pub fn find_critical_points_with(
    k: &AmbientPolynomial,
    n_starts: usize,
    seed: u64,
    tol: &MorseTolerances,
) -> Result<CriticalPointSet> {
    if n_starts == 0 {
        return Err(Error::Precondition("at least one start is required".into()));
    }
    let samples = halton_sphere_points(4096, seed ^ 0x5eed);
    let min_sampled = samples.iter().map(|p| k.eval_at(p)).fold(f64::INFINITY, f64::min);
    if min_sampled <= 0.0 {
        return Err(Error::Domain(format!("K is not positive on the sphere (sampled minimum {min_sampled:e})")));
    }
    let scale = samples.iter().take(512).map(|p| c2_size(k, p)).fold(0.0, f64::max);
    let tol_grad = tol.grad * scale.max(1.0);
    let tol_hess = tol.hess_rel * scale;
    let found: Vec<SpherePoint> = halton_sphere_points(n_starts, seed)
        .into_par_iter()
        .filter_map(|s| newton_critical(k, s, tol_grad))
        .collect();
    let mut merged: Vec<SpherePoint> = Vec::new();
    for p in found {
        if merged.iter().all(|q| geodesic_distance(q, &p) > MERGE_DISTANCE) {
            merged.push(p);
        }
    }
    let mut points: Vec<CriticalPointRecord> = merged.into_iter().map(|p| record(k, p, tol, tol_hess)).collect();
    points.sort_by(|a, b| {
        b.k_value
            .partial_cmp(&a.k_value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.location.coords().partial_cmp(b.location.coords()).unwrap_or(std::cmp::Ordering::Equal))
    });
    if let Some(neg) = points.iter().find(|p| p.k_value <= 0.0) {
        return Err(Error::Domain(format!("K is not positive: K = {:e} at a critical point", neg.k_value)));
    }
    let morse = points.iter().all(|p| p.nondegenerate);
    Ok(CriticalPointSet { points, morse, tol_grad, tol_hess, min_sampled_value: min_sampled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub points: Vec<CriticalPointRecord>,
    pub entries: Vec<Vec<f64>>,
    pub mu_min: f64,
}

/// The interaction matrix: diagonal `−ΔK/K³`, off-diagonal `−6G/(K_iK_j)`.
pub fn build_matrix_m(points: &[CriticalPointRecord], k: &AmbientPolynomial) -> Result<InteractionMatrix> {
    if points.is_empty() {
        return Err(Error::Precondition("empty configuration".into()));
    }
    if points.iter().any(|p| p.class == PointClass::KPlus) {
        return Err(Error::Precondition("configuration contains a positive-Laplacian point".into()));
    }
    let data: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = sphere_derivatives(k, &p.location);
            (d.value, d.laplacian)
        })
        .collect();
    let n = points.len();
    let mut entries = vec![vec![0.0; n]; n];
    for i in 0..n {
        entries[i][i] = -data[i].1 / data[i].0.powi(3);
        for j in i + 1..n {
            let g = greens_function(&points[i].location, &points[j].location)?;
            let v = -6.0 * g / (data[i].0 * data[j].0);
            entries[i][j] = v;
            entries[j][i] = v;
        }
    }
    let mu_min = if n == 1 { entries[0][0] } else { min_eigenvalue(&entries)? };
    Ok(InteractionMatrix { points: points.to_vec(), entries, mu_min })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    /// Indices into the critical point list, ascending.
    pub members: Vec<usize>,
    pub mu: f64,
    pub tol_mu: f64,
    /// Every member has negative Laplacian.
    pub all_minus: bool,
    /// Term `(−1)^{k−1+Σi}` when `μ > tol` and all members are negative-Laplacian, else 0.
    pub contribution: i64,
    pub near_degenerate: bool,
    /// `μ ≤ min_i M_ii`.
    pub rayleigh_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub critical_points: Vec<CriticalPointRecord>,
    pub k_minus: Vec<usize>,
    pub subsets: Vec<SubsetRecord>,
    pub index: i64,
    pub in_a: bool,
    /// `min |ΔK|` over all critical points.
    pub laplacian_margin: f64,
    /// `min |μ|` over subsets of negative-Laplacian points with at least two members.
    pub mu_margin: Option<f64>,
    pub h_configs: Vec<Vec<usize>>,
    pub corollary_holds: bool,
    /// `−1 + Σ_{ΔK<0} (−1)^{i(q)}`.
    pub corollary_index: i64,
    pub interaction: Option<InteractionMatrix>,
    pub warnings: Vec<String>,
}

impl DegreeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub tolerances: MorseTolerances,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { n_starts: 256, seed: 0, tolerances: MorseTolerances::default() }
    }
}

/// Finds the critical points of `k` and evaluates the degree count.
pub fn index_of_k(k: &AmbientPolynomial, opts: &IndexOptions) -> Result<DegreeReport> {
    let set = find_critical_points_with(k, opts.n_starts, opts.seed, &opts.tolerances)?;
    degree_report(k, &set, &opts.tolerances)
}

/// Degree count for an already computed critical point inventory.
pub fn degree_report(k: &AmbientPolynomial, set: &CriticalPointSet, tol: &MorseTolerances) -> Result<DegreeReport> {
    if !set.morse {
        return Err(Error::Degenerate(format!(
            "K is not a Morse function: {} of {} critical points have a degenerate Hessian",
            set.points.iter().filter(|p| !p.nondegenerate).count(),
            set.points.len()
        )));
    }
    let pts = &set.points;
    let k_minus: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].class == PointClass::KMinus).collect();
    let candidates: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].class != PointClass::KPlus).collect();
    if k_minus.len() > MAX_SUBSET_POINTS || candidates.len() > MAX_SUBSET_POINTS {
        return Err(Error::Precondition(format!(
            "{} candidate points exceed the enumeration guard of {MAX_SUBSET_POINTS}",
            candidates.len()
        )));
    }
    let nc = candidates.len();
    let mut subsets: Vec<SubsetRecord> = (1u64..(1u64 << nc))
        .into_par_iter()
        .map(|mask| {
            let members: Vec<usize> = (0..nc).filter(|b| mask >> b & 1 == 1).map(|b| candidates[b]).collect();
            let recs: Vec<CriticalPointRecord> = members.iter().map(|&i| pts[i]).collect();
            let m = build_matrix_m(&recs, k)?;
            let scale = m.entries.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
            let tol_mu = tol.mu_rel * scale.max(f64::MIN_POSITIVE);
            let all_minus = recs.iter().all(|r| r.class == PointClass::KMinus);
            let sum_i: u32 = recs.iter().map(|r| r.morse_index).sum();
            let kk = members.len() as u32;
            let contribution = if all_minus && m.mu_min > tol_mu {
                if (kk - 1 + sum_i) % 2 == 0 { 1 } else { -1 }
            } else {
                0
            };
            let min_diag = (0..members.len()).map(|i| m.entries[i][i]).fold(f64::INFINITY, f64::min);
            Ok(SubsetRecord {
                members,
                mu: m.mu_min,
                tol_mu,
                all_minus,
                contribution,
                near_degenerate: m.mu_min.abs() <= 10.0 * tol_mu,
                rayleigh_ok: m.mu_min <= min_diag + 1e-12 * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    subsets.sort_by(|a, b| a.members.len().cmp(&b.members.len()).then_with(|| a.members.cmp(&b.members)));

    let index = -1 + subsets.iter().map(|s| s.contribution).sum::<i64>();
    let laplacian_margin = pts.iter().map(|p| p.laplacian.abs()).fold(f64::INFINITY, f64::min);
    let multi: Vec<&SubsetRecord> = subsets.iter().filter(|s| s.all_minus && s.members.len() >= 2).collect();
    let mu_margin = multi.iter().map(|s| s.mu.abs()).reduce(f64::min);
    let in_a = laplacian_margin > tol.lap && multi.iter().all(|s| s.mu.abs() > s.tol_mu);
    let h_configs = subsets.iter().filter(|s| s.mu.abs() <= s.tol_mu).map(|s| s.members.clone()).collect();

    let mut corollary_holds = true;
    for (a, &i) in k_minus.iter().enumerate() {
        for &j in &k_minus[a + 1..] {
            if pts[i].laplacian * pts[j].laplacian >= 9.0 * pts[i].k_value * pts[j].k_value {
                corollary_holds = false;
            }
        }
    }
    let corollary_index = -1 + k_minus
        .iter()
        .map(|&i| if pts[i].morse_index % 2 == 0 { 1 } else { -1 })
        .sum::<i64>();

    let mut warnings = Vec::new();
    for s in subsets.iter().filter(|s| s.near_degenerate) {
        warnings.push(format!("configuration {:?} has μ = {:e} within ten tolerances of zero", s.members, s.mu));
    }
    if subsets.iter().any(|s| !s.rayleigh_ok) {
        warnings.push("Rayleigh bound μ ≤ min diagonal violated".into());
    }
    for &i in &k_minus {
        if let Some(s) = subsets.iter().find(|s| s.members == [i]) {
            if s.mu <= 0.0 {
                warnings.push(format!("singleton {i} with negative Laplacian has μ = {:e}", s.mu));
            }
        }
    }
    if corollary_holds && corollary_index != index {
        warnings.push(format!("closed-form index {corollary_index} disagrees with enumeration {index}"));
    }
    let interaction = if k_minus.is_empty() {
        None
    } else {
        let recs: Vec<CriticalPointRecord> = k_minus.iter().map(|&i| pts[i]).collect();
        Some(build_matrix_m(&recs, k)?)
    };
    Ok(DegreeReport {
        critical_points: pts.clone(),
        k_minus,
        subsets,
        index,
        in_a,
        laplacian_margin,
        mu_margin,
        h_configs,
        corollary_holds,
        corollary_index,
        interaction,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(s: &str) -> AmbientPolynomial {
        s.parse().unwrap()
    }

    #[test]
    fn height_function_plus_two() {
        let k = poly("x4 + 2");
        let set = find_critical_points(&k, 64, 1).unwrap();
        assert!(set.morse);
        assert_eq!(set.points.len(), 2);
        let top = &set.points[0];
        assert!(geodesic_distance(&top.location, &SpherePoint::north()) < 1e-9);
        assert_eq!(top.morse_index, 3);
        assert!((top.laplacian + 3.0).abs() < 1e-12);
        assert_eq!(top.class, PointClass::KMinus);
        let bottom = &set.points[1];
        assert_eq!(bottom.morse_index, 0);
        assert_eq!(bottom.class, PointClass::KPlus);
        assert_eq!(set.euler_sum(), 0);
    }

    #[test]
    fn constant_is_degenerate() {
        let set = find_critical_points(&poly("2"), 16, 0).unwrap();
        assert!(!set.morse);
        assert!(matches!(index_of_k(&poly("2"), &IndexOptions::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn nonpositive_k_rejected() {
        assert!(matches!(find_critical_points(&poly("x4"), 8, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn single_point_matrix() {
        let k = poly("x4 + 2");
        let set = find_critical_points(&k, 32, 0).unwrap();
        let m = build_matrix_m(&set.points[..1], &k).unwrap();
        assert!((m.mu_min - 1.0 / 9.0).abs() < 1e-14);
        assert!(build_matrix_m(&set.points[1..], &k).is_err());
        let dup = [set.points[0], set.points[0]];
        assert!(matches!(build_matrix_m(&dup, &k), Err(Error::Domain(_))));
    }

    #[test]
    fn antipodal_pair_eigenvalue() {
        // Two equal maxima at the poles.
        let k = poly("x4^2 + 2");
        let set = find_critical_points(&k, 128, 3).unwrap();
        let maxima: Vec<CriticalPointRecord> =
            set.points.iter().filter(|p| p.class == PointClass::KMinus).copied().collect();
        assert_eq!(maxima.len(), 2);
        let m = build_matrix_m(&maxima, &k).unwrap();
        let expect = m.entries[0][0] + m.entries[0][1];
        assert!((m.mu_min - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn index_of_height_function() {
        let r = index_of_k(&poly("x4 + 2"), &IndexOptions::default()).unwrap();
        assert_eq!(r.index, -2);
        assert!(r.in_a);
        assert!(r.h_configs.is_empty());
        assert!(r.corollary_holds);
        assert_eq!(r.corollary_index, -2);
    }
}
