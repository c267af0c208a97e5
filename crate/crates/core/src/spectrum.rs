//! Coefficient-space and grid-space representations of functions on S³.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::basis::{self, degree_dim, degree_offset, spectrum_len, BASIS_ID};
use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::quadrature::{GridId, QuadratureGrid};

const SPECTRUM_MAGIC: &str = "# nirenberg-spectrum v1";

/// Eigenvalue of `P_{1/2}` on degree-`l` harmonics.
///
/// On S³ the Laplacian has eigenvalue `−l(l+2)`, so
/// `B = √(−Δ + 1)` acts as `√(l(l+2) + 1) = l + 1`, and
/// `P_{1/2} = Γ(B + 1)/Γ(B) = B` has multiplier `l + 1`. This is the only
/// place the order of the operator enters.
#[inline]
pub fn p_sigma_multiplier(l: usize) -> f64 {
    (l + 1) as f64
}

/// Eigenvalue of the Laplace–Beltrami operator on degree `l`.
#[inline]
pub fn laplacian_multiplier(l: usize) -> f64 {
    -((l * (l + 2)) as f64)
}

/// Coefficients in the orthonormal basis of [`crate::basis`], degrees
/// `0..=l_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpectrum {
    l_max: usize,
    coeffs: Vec<f64>,
}

impl HarmonicSpectrum {
    pub fn zeros(l_max: usize) -> Self {
        HarmonicSpectrum { l_max, coeffs: vec![0.0; spectrum_len(l_max)] }
    }

    pub fn from_coeffs(l_max: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spectrum_len(l_max) {
            return Err(Error::Precondition(format!(
                "{} coefficients given, degree {l_max} needs {}",
                coeffs.len(),
                spectrum_len(l_max)
            )));
        }
        Ok(HarmonicSpectrum { l_max, coeffs })
    }

    /// The constant function `c`.
    pub fn constant(l_max: usize, c: f64) -> Self {
        let mut s = Self::zeros(l_max);
        s.coeffs[0] = c * (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        s
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn block(&self, l: usize) -> &[f64] {
        let o = degree_offset(l);
        &self.coeffs[o..o + degree_dim(l)]
    }

    pub fn block_mut(&mut self, l: usize) -> &mut [f64] {
        let o = degree_offset(l);
        &mut self.coeffs[o..o + degree_dim(l)]
    }

    fn map_blocks<F: Fn(usize) -> f64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for l in 0..=self.l_max {
            let k = f(l);
            out.block_mut(l).iter_mut().for_each(|c| *c *= k);
        }
        out
    }

    /// Applies `P_{1/2}` (or its inverse).
    pub fn apply_p_sigma(&self, invert: bool) -> Self {
        if invert {
            self.map_blocks(|l| 1.0 / p_sigma_multiplier(l))
        } else {
            self.map_blocks(p_sigma_multiplier)
        }
    }

    pub fn laplace_beltrami(&self) -> Self {
        self.map_blocks(laplacian_multiplier)
    }

    /// `L²(S³)` inner product (Parseval).
    pub fn l2_inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(dot(&self.coeffs, &other.coeffs))
    }

    pub fn l2_norm(&self) -> f64 {
        dot(&self.coeffs, &self.coeffs).sqrt()
    }

    /// `⟨u, v⟩ = ∫ (P_{1/2} u) v`.
    pub fn hsigma_inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        let mut s = 0.0;
        for l in 0..=self.l_max {
            s += p_sigma_multiplier(l) * dot(self.block(l), other.block(l));
        }
        Ok(s)
    }

    pub fn hsigma_norm(&self) -> f64 {
        self.hsigma_inner(self).expect("same degree").sqrt()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.l_max != other.l_max {
            return Err(Error::Precondition(format!(
                "spectra of degree {} and {} cannot be combined",
                self.l_max, other.l_max
            )));
        }
        Ok(())
    }

    /// `self + a·x`.
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

    /// Truncates or zero-pads to degree `l_max`.
    pub fn resized(&self, l_max: usize) -> Self {
        let mut out = Self::zeros(l_max);
        let n = spectrum_len(l_max.min(self.l_max));
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        out
    }

    /// Point evaluation by direct synthesis.
    pub fn eval_at(&self, p: &SpherePoint) -> f64 {
        dot(&basis::basis_values(self.l_max, p), &self.coeffs)
    }

    /// Writes the versioned text table `l idx coeff`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{SPECTRUM_MAGIC}").ok();
        writeln!(s, "# basis {BASIS_ID}").ok();
        writeln!(s, "L {}", self.l_max).ok();
        for l in 0..=self.l_max {
            for (i, c) in self.block(l).iter().enumerate() {
                writeln!(s, "{l} {i} {c:e}").ok();
            }
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }

    /// Reads the format produced by [`HarmonicSpectrum::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
        match next()? {
            Some(h) if h.trim() == SPECTRUM_MAGIC => {}
            other => return Err(Error::Format(format!("bad header {other:?}"))),
        }
        match next()? {
            Some(h) if h.trim() == format!("# basis {BASIS_ID}") => {}
            other => return Err(Error::Format(format!("unsupported basis line {other:?}"))),
        }
        let l_max: usize = match next()? {
            Some(h) => h
                .strip_prefix("L ")
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad degree line '{h}'")))?,
            None => return Err(Error::Format("missing degree line".into())),
        };
        let mut s = Self::zeros(l_max);
        let mut seen = vec![false; s.coeffs.len()];
        while let Some(line) = next()? {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (l, i, c) = match (it.next(), it.next(), it.next(), it.next()) {
                (Some(l), Some(i), Some(c), None) => (l, i, c),
                _ => return Err(Error::Format(format!("bad row '{line}'"))),
            };
            let l: usize = l.parse().map_err(|_| Error::Format(format!("bad degree in '{line}'")))?;
            let i: usize = i.parse().map_err(|_| Error::Format(format!("bad index in '{line}'")))?;
            let c: f64 = c.parse().map_err(|_| Error::Format(format!("bad coefficient in '{line}'")))?;
            if l > l_max || i >= degree_dim(l) {
                return Err(Error::Format(format!("row out of range '{line}'")));
            }
            let g = degree_offset(l) + i;
            if seen[g] {
                return Err(Error::Format(format!("duplicate row '{line}'")));
            }
            seen[g] = true;
            s.coeffs[g] = c;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("missing coefficient rows".into()));
        }
        Ok(s)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Values of a function at the nodes of a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalField {
    grid: GridId,
    values: Vec<f64>,
}

impl SphericalField {
    pub fn new(grid: &QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(SphericalField { grid: grid.id(), values })
    }

    pub fn from_fn<F: Fn(&SpherePoint) -> f64 + Sync + Send>(grid: &QuadratureGrid, f: F) -> Self {
        use rayon::prelude::*;
        let values = grid.nodes().par_iter().map(f).collect();
        SphericalField { grid: grid.id(), values }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        SphericalField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise product; both fields must live on the same grid.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_grid(other.grid)?;
        Ok(SphericalField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn check_grid(&self, id: GridId) -> Result<()> {
        if self.grid != id {
            return Err(Error::Precondition(format!(
                "field lives on grid {:?}, expected {:?}",
                self.grid, id
            )));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(l: usize) -> HarmonicSpectrum {
        let c = (0..spectrum_len(l)).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        HarmonicSpectrum::from_coeffs(l, c).unwrap()
    }

    #[test]
    fn multipliers() {
        let s = sample(3);
        let p = s.apply_p_sigma(false);
        assert_eq!(p.block(0), s.block(0));
        for (a, b) in p.block(1).iter().zip(s.block(1)) {
            assert_eq!(*a, 2.0 * b);
        }
        let back = p.apply_p_sigma(true);
        for (a, b) in back.coeffs().iter().zip(s.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
        let lap = s.laplace_beltrami();
        assert!(lap.block(0).iter().all(|&c| c == 0.0));
        for (a, b) in lap.block(2).iter().zip(s.block(2)) {
            assert_eq!(*a, -8.0 * b);
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let s = sample(4).scaled(std::f64::consts::PI);
        let back = HarmonicSpectrum::read_text(s.to_text().as_bytes()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn text_rejects_garbage() {
        assert!(HarmonicSpectrum::read_text("hello".as_bytes()).is_err());
        let mut t = sample(1).to_text();
        t.push_str("1 9 0.0\n");
        assert!(HarmonicSpectrum::read_text(t.as_bytes()).is_err());
    }

    #[test]
    fn mismatched_degrees_rejected() {
        assert!(sample(2).hsigma_inner(&sample(3)).is_err());
    }

    #[test]
    fn constant_has_unit_value() {
        let c = HarmonicSpectrum::constant(2, 1.0);
        assert!((c.eval_at(&SpherePoint::axis(1)) - 1.0).abs() < 1e-14);
        assert!((c.hsigma_inner(&c).unwrap() - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }
}
