//! Functions on S³ that depend only on the distance to a pole.
//!
//! A zonal function is `f(x) = Σ_l a_l Z_l(d(x, pole))` with the orthonormal
//! zonal harmonics `Z_l(χ) = sin((l+1)χ)/(π√2 sinχ)`.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{basis_values, chebyshev_u_all, degree_offset, spectrum_len};
use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};
use crate::spectrum::{p_sigma_multiplier, HarmonicSpectrum};

/// Coefficients `a_0..a_L` of a zonal function about `pole`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalSpectrum {
    pole: SpherePoint,
    coeffs: Vec<f64>,
}

impl ZonalSpectrum {
    pub fn zeros(l_max: usize, pole: SpherePoint) -> Self {
        ZonalSpectrum { pole, coeffs: vec![0.0; l_max + 1] }
    }

    pub fn from_coeffs(pole: SpherePoint, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Precondition("empty zonal spectrum".into()));
        }
        Ok(ZonalSpectrum { pole, coeffs })
    }

    pub fn constant(l_max: usize, pole: SpherePoint, c: f64) -> Self {
        let mut z = Self::zeros(l_max, pole);
        z.coeffs[0] = c * PI * SQRT_2;
        z
    }

    pub fn l_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn pole(&self) -> &SpherePoint {
        &self.pole
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn apply_p_sigma(&self, invert: bool) -> Self {
        let mut out = self.clone();
        for (l, c) in out.coeffs.iter_mut().enumerate() {
            let k = p_sigma_multiplier(l);
            *c = if invert { *c / k } else { *c * k };
        }
        out
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::Precondition("zonal spectra of different degree".into()));
        }
        Ok(())
    }

    pub fn hsigma_inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(l, (a, b))| p_sigma_multiplier(l) * a * b)
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn axpy(&self, a: f64, x: &Self) -> Result<Self> {
        self.check_same(x)?;
        let mut out = self.clone();
        out.coeffs.iter_mut().zip(&x.coeffs).for_each(|(o, x)| *o += a * x);
        Ok(out)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    pub fn resized(&self, l_max: usize) -> Self {
        let mut out = Self::zeros(l_max, self.pole);
        let n = self.coeffs.len().min(l_max + 1);
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        out
    }

    /// Value at geodesic distance `chi` from the pole.
    pub fn eval(&self, chi: f64) -> f64 {
        // Clenshaw for Σ a_l U_l(x).
        let x = chi.cos();
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &a in self.coeffs.iter().rev() {
            let b0 = a + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        b1 / (PI * SQRT_2)
    }

    pub fn eval_at(&self, p: &SpherePoint) -> f64 {
        self.eval(crate::geometry::geodesic_distance(&self.pole, p))
    }

    /// Embeds into the full basis: by the addition theorem
    /// `Z_l(d(x, P)) = (π√2/(l+1)) Σ_m Y_lm(P) Y_lm(x)`.
    pub fn to_full(&self) -> HarmonicSpectrum {
        let l_max = self.l_max();
        let y = basis_values(l_max, &self.pole);
        let mut c = vec![0.0; spectrum_len(l_max)];
        for l in 0..=l_max {
            let k = self.coeffs[l] * PI * SQRT_2 / (l as f64 + 1.0);
            let o = degree_offset(l);
            for i in 0..(l + 1) * (l + 1) {
                c[o + i] = k * y[o + i];
            }
        }
        HarmonicSpectrum::from_coeffs(l_max, c).expect("length matches")
    }

    /// Projects a full spectrum onto the zonal subspace about `pole`
    /// (the average over rotations fixing the pole).
    pub fn from_full(s: &HarmonicSpectrum, pole: SpherePoint) -> Self {
        let l_max = s.l_max();
        let y = basis_values(l_max, &pole);
        let coeffs = (0..=l_max)
            .map(|l| {
                let o = degree_offset(l);
                let dotp: f64 = s.block(l).iter().zip(&y[o..o + (l + 1) * (l + 1)]).map(|(a, b)| a * b).sum();
                dotp * PI * SQRT_2 / (l as f64 + 1.0)
            })
            .collect();
        ZonalSpectrum { pole, coeffs }
    }
}

/// Gauss rule in the distance variable with fast zonal synthesis/analysis.
///
/// Nodes are `χ_k = kπ/(n+1)`; the values `sin((l+1)χ_k)` come from an
/// exact table indexed by `(l+1)k mod 2(n+1)`.
#[derive(Debug, Clone)]
pub struct ZonalPlan {
    l_max: usize,
    n: usize,
    chi: Vec<f64>,
    sin_table: Vec<f64>,
}

impl ZonalPlan {
    /// Plan with `n` distance nodes; analysis of degree-`l_max` data needs
    /// `n ≥ l_max + 1`.
    pub fn new(l_max: usize, n: usize) -> Result<Self> {
        if n < l_max + 1 {
            return Err(Error::Resolution {
                message: format!("{n} zonal nodes cannot resolve degree {l_max}"),
                required: l_max + 1,
            });
        }
        let h = PI / (n as f64 + 1.0);
        let chi = (1..=n).map(|k| k as f64 * h).collect();
        let sin_table = (0..2 * (n + 1)).map(|r| (r as f64 * h).sin()).collect();
        Ok(ZonalPlan { l_max, n, chi, sin_table })
    }

    /// The default dealiased plan: `2·l_max + 2` nodes, so products of three
    /// degree-`l_max` functions are integrated exactly.
    pub fn dealiased(l_max: usize) -> Self {
        Self::new(l_max, 2 * l_max + 2).expect("enough nodes")
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.chi
    }

    /// `sin((l+1)χ_k)` for `k` in `1..=n`.
    #[inline]
    fn sin_lk(&self, l: usize, k: usize) -> f64 {
        self.sin_table[((l + 1) * k) % (2 * (self.n + 1))]
    }

    /// Values at the nodes.
    pub fn synthesize(&self, z: &ZonalSpectrum) -> Vec<f64> {
        let n = self.n;
        let c = z.coeffs();
        (1..=n)
            .into_par_iter()
            .map(|k| {
                let mut s = 0.0;
                for (l, a) in c.iter().enumerate() {
                    s += a * self.sin_lk(l, k);
                }
                s / (self.sin_table[k] * PI * SQRT_2)
            })
            .collect()
    }

    /// `∫_{S³} f Z_l dμ` for `l ≤ degree`, by the node rule.
    pub fn analyze(&self, values: &[f64], degree: usize, pole: SpherePoint) -> Result<ZonalSpectrum> {
        if values.len() != self.n {
            return Err(Error::Precondition("value count does not match zonal plan".into()));
        }
        // 4π · π/(n+1) · sin²χ_k / (π√2 sinχ_k) = 2√2π/(n+1) · sinχ_k
        let scale = 2.0 * SQRT_2 * PI / (self.n as f64 + 1.0);
        let weighted: Vec<f64> = (1..=self.n).map(|k| scale * self.sin_table[k] * values[k - 1]).collect();
        let coeffs = (0..=degree)
            .into_par_iter()
            .map(|l| {
                let mut s = 0.0;
                for (k, w) in weighted.iter().enumerate() {
                    s += w * self.sin_lk(l, k + 1);
                }
                s
            })
            .collect();
        ZonalSpectrum::from_coeffs(pole, coeffs)
    }

    /// Quadrature weights for `∫_{S³} f dμ` at the nodes.
    pub fn weights(&self) -> Vec<f64> {
        let h = PI / (self.n as f64 + 1.0);
        self.chi.iter().map(|c| 4.0 * PI * h * c.sin().powi(2)).collect()
    }
}

/// Zonal coefficients `a_l = 4π ∫₀^π g(χ) Z_l(χ) sin²χ dχ` by adaptive
/// quadrature. A non-integrable singularity at `χ = 0` surfaces as a
/// numerical error.
pub fn zonal_coefficients<G: Fn(f64) -> f64 + Sync>(g: G, l_max: usize) -> Result<Vec<f64>> {
    (0..=l_max)
        .into_par_iter()
        .map(|l| {
            let breaks: Vec<f64> = (1..=l).map(|k| k as f64 * PI / (l as f64 + 1.0)).collect();
            let opts = AdaptiveOptions { rtol: 1e-12, atol: 1e-13, max_intervals: 20_000 };
            let (v, _) = integrate_adaptive(
                |chi| g(chi) * ((l + 1) as f64 * chi).sin() * chi.sin(),
                0.0,
                PI,
                &breaks,
                opts,
            )?;
            Ok(4.0 * v / SQRT_2)
        })
        .collect()
}

/// Full spectrum of `x ↦ g(d(x, pole))` truncated at degree `l_max`.
pub fn zonal_expand<G: Fn(f64) -> f64 + Sync>(g: G, l_max: usize, pole: SpherePoint) -> Result<HarmonicSpectrum> {
    let a = zonal_coefficients(g, l_max)?;
    Ok(ZonalSpectrum::from_coeffs(pole, a)?.to_full())
}

/// `U_l(P·x)` summed against coefficients, handy for closed-form spectra.
pub fn zonal_series(coeffs: &[f64], cos_d: f64) -> f64 {
    let u = chebyshev_u_all(coeffs.len().saturating_sub(1), cos_d);
    coeffs.iter().zip(&u).map(|(a, u)| a * u).sum::<f64>() / (PI * SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_cosine_expand_to_single_degree() {
        let pole = SpherePoint::normalize([0.2, -0.4, 0.5, 0.7]).unwrap();
        let c = zonal_coefficients(|_| 1.0, 6).unwrap();
        assert!((c[0] - PI * SQRT_2).abs() < 1e-12);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-12));
        let c = zonal_coefficients(|chi: f64| chi.cos(), 6).unwrap();
        assert!(c.iter().enumerate().all(|(l, x)| (l == 1) == (x.abs() > 1e-8)));
        let full = zonal_expand(|chi: f64| chi.cos(), 3, pole).unwrap();
        let q = SpherePoint::normalize([1.0, 0.3, -0.2, 0.1]).unwrap();
        assert!((full.eval_at(&q) - pole.dot(&q)).abs() < 1e-12);
    }

    #[test]
    fn synthesis_analysis_round_trip() {
        let plan = ZonalPlan::dealiased(40);
        let z = ZonalSpectrum::from_coeffs(
            SpherePoint::north(),
            (0..=40).map(|l| 1.0 / (1.0 + l as f64)).collect(),
        )
        .unwrap();
        let v = plan.synthesize(&z);
        for (k, chi) in plan.nodes().iter().enumerate().step_by(7) {
            assert!((v[k] - z.eval(*chi)).abs() < 1e-12);
        }
        let back = plan.analyze(&v, 40, SpherePoint::north()).unwrap();
        for (a, b) in back.coeffs().iter().zip(z.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_embedding_round_trip() {
        let pole = SpherePoint::normalize([0.5, 0.5, -0.5, 0.5]).unwrap();
        let z = ZonalSpectrum::from_coeffs(pole, vec![0.3, -1.0, 0.5, 0.25]).unwrap();
        let full = z.to_full();
        let q = SpherePoint::normalize([0.1, 0.9, 0.3, -0.2]).unwrap();
        assert!((full.eval_at(&q) - z.eval_at(&q)).abs() < 1e-12);
        let back = ZonalSpectrum::from_full(&full, pole);
        for (a, b) in back.coeffs().iter().zip(z.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_integrable_singularity_fails() {
        assert!(zonal_coefficients(|chi: f64| chi.powi(-4), 2).is_err());
    }
}
