//! Analysis and synthesis between grid values and harmonic coefficients.
//!
//! The transform is separable: a Fourier sum in `phi`, an associated
//! Legendre sum in `theta`, and a Gegenbauer sum in `chi`. Cost is
//! `O(L⁴)` per transform for a grid of order `O(L)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::{
    self, degree_offset, gegen_index, gegenbauer_functions, intra_index, legendre_functions,
    spectrum_len,
};
use crate::error::{Error, Result};
use crate::quadrature::{build_grid, QuadratureGrid};
use crate::spectrum::{HarmonicSpectrum, SphericalField};

/// Largest degree accepted by the dense projection oracle.
pub const DENSE_MAX_DEGREE: usize = 8;

/// Precomputed tables for transforms at degree `l_max` on one grid.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    l_max: usize,
    grid: Arc<QuadratureGrid>,
    /// `[ic][gegen_index(l, j)]`
    gegen: Vec<Vec<f64>>,
    /// `[it][gegen_index(j, m)]`
    legendre: Vec<Vec<f64>>,
    /// `[ip][m + l_max]`: `cos(mφ)` for `m ≥ 0`, `sin(|m|φ)` for `m < 0`.
    trig: Vec<Vec<f64>>,
}

impl SpectralPlan {
    /// Plan on an existing grid. Analysis needs grid order `≥ 2·l_max`.
    pub fn new(l_max: usize, grid: Arc<QuadratureGrid>) -> Result<Self> {
        if grid.order() < 2 * l_max {
            return Err(Error::Resolution {
                message: format!("grid order {} cannot resolve degree {l_max}", grid.order()),
                required: 2 * l_max,
            });
        }
        Ok(Self::build(l_max, grid))
    }

    fn build(l_max: usize, grid: Arc<QuadratureGrid>) -> Self {
        let gegen = grid.chi().iter().map(|&c| gegenbauer_functions(l_max, c)).collect();
        let legendre = grid.cos_theta().iter().map(|&x| legendre_functions(l_max, x)).collect();
        let np = grid.n_phi();
        let dphi = 2.0 * std::f64::consts::PI / np as f64;
        let trig = (0..np)
            .map(|ip| {
                let phi = ip as f64 * dphi;
                (0..=2 * l_max)
                    .map(|k| {
                        let m = k as i64 - l_max as i64;
                        if m >= 0 {
                            (m as f64 * phi).cos()
                        } else {
                            (-m as f64 * phi).sin()
                        }
                    })
                    .collect()
            })
            .collect();
        SpectralPlan { l_max, grid, gegen, legendre, trig }
    }

    /// Plan on a fresh grid of the given order.
    pub fn with_grid_order(l_max: usize, order: usize) -> Result<Self> {
        Self::new(l_max, Arc::new(QuadratureGrid::with_order(order)?))
    }

    /// Plan on the standard grid `build_grid(l_max)`.
    pub fn standard(l_max: usize) -> Result<Self> {
        Self::new(l_max, Arc::new(build_grid(l_max.max(1))?))
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.grid.chi().len(), self.grid.cos_theta().len(), self.grid.n_phi())
    }

    /// Quadrature projection onto degrees `≤ l_max`.
    pub fn forward(&self, f: &SphericalField) -> Result<HarmonicSpectrum> {
        f.check_grid(self.grid.id())?;
        self.forward_values(f.values())
    }

    pub fn forward_values(&self, values: &[f64]) -> Result<HarmonicSpectrum> {
        let (nc, nt, np) = self.dims();
        if values.len() != nc * nt * np {
            return Err(Error::Precondition("value count does not match grid".into()));
        }
        let lm = self.l_max;
        let nm = 2 * lm + 1;
        let nb = spectrum_len_s2(lm);
        let dphi = 2.0 * std::f64::consts::PI / np as f64;
        let wt = self.grid.theta_weights();
        let sqrt2 = std::f64::consts::SQRT_2;

        // phi then theta, per chi ring.
        let b: Vec<Vec<f64>> = (0..nc)
            .into_par_iter()
            .map(|ic| {
                let mut bj = vec![0.0; nb];
                let mut a = vec![0.0; nm];
                for it in 0..nt {
                    a.iter_mut().for_each(|x| *x = 0.0);
                    let ring = &values[(ic * nt + it) * np..(ic * nt + it + 1) * np];
                    for (ip, &v) in ring.iter().enumerate() {
                        let tr = &self.trig[ip];
                        for k in 0..nm {
                            a[k] += v * tr[k];
                        }
                    }
                    let leg = &self.legendre[it];
                    let w = wt[it] * dphi;
                    for j in 0..=lm {
                        for m in -(j as i64)..=(j as i64) {
                            let am = m.unsigned_abs() as usize;
                            let fac = if m == 0 { 1.0 } else { sqrt2 };
                            bj[intra_index(j, m)] +=
                                w * fac * leg[gegen_index(j, am)] * a[(m + lm as i64) as usize];
                        }
                    }
                }
                bj
            })
            .collect();

        let wc = self.grid.chi_weights();
        let mut out = HarmonicSpectrum::zeros(lm);
        out.coeffs_mut()
            .par_iter_mut()
            .enumerate()
            .for_each(|(g, slot)| {
                let (l, idx) = global_to_block(g);
                let (j, _) = basis::intra_to_jm(idx);
                let gi = gegen_index(l, j);
                let mut s = 0.0;
                for ic in 0..nc {
                    s += wc[ic] * self.gegen[ic][gi] * b[ic][idx];
                }
                *slot = s;
            });
        Ok(out)
    }

    /// Synthesis of a spectrum on the plan's grid. Degrees above the plan
    /// degree are rejected.
    pub fn inverse(&self, s: &HarmonicSpectrum) -> Result<SphericalField> {
        let values = self.inverse_values(s)?;
        SphericalField::new(&self.grid, values)
    }

    pub fn inverse_values(&self, s: &HarmonicSpectrum) -> Result<Vec<f64>> {
        if s.l_max() > self.l_max {
            return Err(Error::Precondition(format!(
                "spectrum degree {} exceeds plan degree {}",
                s.l_max(),
                self.l_max
            )));
        }
        let (nc, nt, np) = self.dims();
        let ls = s.l_max();
        let lm = self.l_max;
        let nb = spectrum_len_s2(ls);
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut values = vec![0.0; nc * nt * np];
        values
            .par_chunks_mut(nt * np)
            .enumerate()
            .for_each(|(ic, chunk)| {
                let gg = &self.gegen[ic];
                let mut b = vec![0.0; nb];
                for l in 0..=ls {
                    let blk = s.block(l);
                    for j in 0..=l {
                        let gv = gg[gegen_index(l, j)];
                        for m in -(j as i64)..=(j as i64) {
                            let idx = intra_index(j, m);
                            b[idx] += gv * blk[idx];
                        }
                    }
                }
                let mut a = vec![0.0; 2 * lm + 1];
                for it in 0..nt {
                    let leg = &self.legendre[it];
                    a.iter_mut().for_each(|x| *x = 0.0);
                    for j in 0..=ls {
                        for m in -(j as i64)..=(j as i64) {
                            let am = m.unsigned_abs() as usize;
                            let fac = if m == 0 { 1.0 } else { sqrt2 };
                            a[(m + lm as i64) as usize] +=
                                fac * leg[gegen_index(j, am)] * b[intra_index(j, m)];
                        }
                    }
                    let lo = lm - ls;
                    let hi = lm + ls;
                    let ring = &mut chunk[it * np..(it + 1) * np];
                    for (ip, slot) in ring.iter_mut().enumerate() {
                        let tr = &self.trig[ip];
                        let mut v = 0.0;
                        for k in lo..=hi {
                            v += a[k] * tr[k];
                        }
                        *slot = v;
                    }
                }
            });
        Ok(values)
    }
}

fn spectrum_len_s2(l: usize) -> usize {
    (l + 1) * (l + 1)
}

/// Maps a global coefficient index to `(degree, intra-degree index)`.
pub fn global_to_block(g: usize) -> (usize, usize) {
    let mut l = ((3.0 * g as f64).cbrt() as usize).saturating_sub(1);
    while degree_offset(l + 1) <= g {
        l += 1;
    }
    while degree_offset(l) > g {
        l -= 1;
    }
    (l, g - degree_offset(l))
}

/// Projects grid values onto degrees `≤ l_max`. The grid must have order
/// `≥ 2·l_max`.
pub fn forward_transform(
    f: &SphericalField,
    grid: &Arc<QuadratureGrid>,
    l_max: usize,
) -> Result<HarmonicSpectrum> {
    SpectralPlan::new(l_max, grid.clone())?.forward(f)
}

/// Synthesizes a spectrum on a grid.
pub fn inverse_transform(s: &HarmonicSpectrum, grid: &Arc<QuadratureGrid>) -> Result<SphericalField> {
    let l = s.l_max();
    let plan = if grid.order() >= 2 * l {
        SpectralPlan::new(l, grid.clone())?
    } else {
        // Synthesis alone does not need the analysis bound.
        SpectralPlan::build(l, grid.clone())
    };
    plan.inverse(s)
}

/// Dense projection `Σ_nodes w f Y` using direct basis evaluation.
/// Independent of the separable algorithm; used as a test oracle.
pub fn forward_dense(f: &SphericalField, grid: &QuadratureGrid, l_max: usize) -> Result<HarmonicSpectrum> {
    if l_max > DENSE_MAX_DEGREE {
        return Err(Error::Precondition(format!(
            "dense projection limited to degree {DENSE_MAX_DEGREE}"
        )));
    }
    if grid.order() < 2 * l_max {
        return Err(Error::Resolution {
            message: "grid too coarse for dense projection".into(),
            required: 2 * l_max,
        });
    }
    f.check_grid(grid.id())?;
    let mut c = vec![0.0; spectrum_len(l_max)];
    for ((x, w), v) in grid.nodes().iter().zip(grid.weights()).zip(f.values()) {
        let y = basis::basis_values(l_max, x);
        for (ci, yi) in c.iter_mut().zip(&y) {
            *ci += w * v * yi;
        }
    }
    HarmonicSpectrum::from_coeffs(l_max, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpherePoint;

    #[test]
    fn global_index_inverse() {
        for g in 0..2000 {
            let (l, i) = global_to_block(g);
            assert!(i < (l + 1) * (l + 1));
            assert_eq!(degree_offset(l) + i, g);
        }
    }

    #[test]
    fn constant_and_linear_fields() {
        let plan = SpectralPlan::standard(4).unwrap();
        let one = SphericalField::from_fn(plan.grid(), |_| 1.0);
        let s = plan.forward(&one).unwrap();
        let c0 = (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        assert!((s.coeffs()[0] - c0).abs() < 1e-12);
        assert!(s.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));

        let x4 = SphericalField::from_fn(plan.grid(), |p: &SpherePoint| p.coords()[3]);
        let s = plan.forward(&x4).unwrap();
        for l in 0..=4 {
            let norm: f64 = s.block(l).iter().map(|c| c * c).sum::<f64>().sqrt();
            assert_eq!(norm > 1e-8, l == 1, "degree {l}");
        }
    }

    #[test]
    fn under_resolved_grid_is_rejected() {
        let grid = Arc::new(build_grid(3).unwrap());
        match SpectralPlan::new(8, grid) {
            Err(Error::Resolution { required, .. }) => assert_eq!(required, 16),
            other => panic!("{other:?}"),
        }
    }
}
