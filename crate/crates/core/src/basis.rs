//! Real orthonormal hyperspherical harmonics on S³.
//!
//! The degree-`l` space has dimension `(l+1)²` and is spanned by
//!
//! ```text
//! Y_{l,j,m}(χ, θ, φ) = G_{l,j}(χ) · S_{j,m}(θ, φ),   0 ≤ j ≤ l,  −j ≤ m ≤ j,
//! ```
//!
//! where `G_{l,j}(χ) = sin^jχ · q_{l−j}(cosχ)` with `q_n` the orthonormal
//! Gegenbauer polynomials for the weight `(1 − x²)^{j+1/2}`, and `S_{j,m}` are
//! real orthonormal spherical harmonics on S² *without* the Condon–Shortley
//! phase: `S_{j,0} ∝ P_j(cosθ)`, `S_{j,m} ∝ P_j^m(cosθ) cos(mφ)` and
//! `S_{j,−m} ∝ P_j^m(cosθ) sin(mφ)` for `m > 0`.
//!
//! Ordering is frozen: inside degree `l` the function `(j, m)` sits at index
//! `j² + m + j`, and degree `l` starts at global offset `l(l+1)(2l+1)/6`.
//! The `(l, 0, 0)` function is the zonal harmonic
//! `Z_l(χ) = sin((l+1)χ) / (π√2 · sinχ)`.

use std::f64::consts::PI;

use crate::geometry::SpherePoint;

/// Identifier written into serialized spectra.
pub const BASIS_ID: &str = "s3-real-orthonormal/gegenbauer-x-legendre/no-cs-phase/order:j^2+m+j";

/// Number of basis functions of degree `l`.
#[inline]
pub const fn degree_dim(l: usize) -> usize {
    (l + 1) * (l + 1)
}

/// Global index of the first function of degree `l`.
#[inline]
pub const fn degree_offset(l: usize) -> usize {
    l * (l + 1) * (2 * l + 1) / 6
}

/// Total number of basis functions of degree `≤ l_max`.
#[inline]
pub const fn spectrum_len(l_max: usize) -> usize {
    degree_offset(l_max + 1)
}

/// Index of `(j, m)` inside a degree block.
#[inline]
pub const fn intra_index(j: usize, m: i64) -> usize {
    (j * j) as usize + (m + j as i64) as usize
}

/// Inverse of [`intra_index`].
pub fn intra_to_jm(idx: usize) -> (usize, i64) {
    let j = (idx as f64).sqrt() as usize;
    let j = if (j + 1) * (j + 1) <= idx { j + 1 } else if j * j > idx { j - 1 } else { j };
    (j, idx as i64 - (j * j) as i64 - j as i64)
}

/// Recurrence data for the orthonormal Gegenbauer family with `λ = j + 1`.
#[inline]
fn gegenbauer_a(n: usize, lambda: f64) -> f64 {
    let n = n as f64;
    (n * (n + 2.0 * lambda - 1.0) / (4.0 * (n + lambda) * (n + lambda - 1.0))).sqrt()
}

/// `G_{l,j}(χ)` for all `j ≤ l ≤ l_max`, packed by `gegen_index(l, j)`.
pub fn gegenbauer_functions(l_max: usize, chi: f64) -> Vec<f64> {
    let (s, x) = chi.sin_cos();
    let mut out = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
    // mu0(j) = ∫(1 − x²)^{j+1/2} dx, mu0(0) = π/2
    let mut mu0 = PI / 2.0;
    let mut sj = 1.0;
    for j in 0..=l_max {
        if j > 0 {
            mu0 *= (j as f64 + 0.5) / (j as f64 + 1.0);
            sj *= s;
        }
        let lambda = j as f64 + 1.0;
        let mut q_prev = 0.0;
        let mut q = 1.0 / mu0.sqrt();
        out[gegen_index(j, j)] = sj * q;
        let mut a_n = 0.0;
        for n in 0..(l_max - j) {
            let a_next = gegenbauer_a(n + 1, lambda);
            let q_next = (x * q - a_n * q_prev) / a_next;
            q_prev = q;
            q = q_next;
            a_n = a_next;
            out[gegen_index(j + n + 1, j)] = sj * q;
        }
    }
    out
}

/// Packed index of `(l, j)`, `j ≤ l`.
#[inline]
pub const fn gegen_index(l: usize, j: usize) -> usize {
    l * (l + 1) / 2 + j
}

/// Normalized associated Legendre functions `N_{jm} P_j^m(cosθ)` (no
/// Condon–Shortley phase) for `0 ≤ m ≤ j ≤ l_max`, packed by
/// `gegen_index(j, m)`. The normalization makes `∫_{S²} S_{j0}² = 1`.
pub fn legendre_functions(l_max: usize, cos_theta: f64) -> Vec<f64> {
    let x = cos_theta;
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut out = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            pmm *= ((2.0 * m as f64 + 1.0) / (2.0 * m as f64)).sqrt() * s;
        }
        out[gegen_index(m, m)] = pmm;
        if m < l_max {
            let p1 = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
            out[gegen_index(m + 1, m)] = p1;
            let mut pm2 = pmm;
            let mut pm1 = p1;
            for j in (m + 2)..=l_max {
                let jf = j as f64;
                let mf = m as f64;
                let a = ((4.0 * jf * jf - 1.0) / (jf * jf - mf * mf)).sqrt();
                let b = (((jf - 1.0) * (jf - 1.0) - mf * mf) / (4.0 * (jf - 1.0) * (jf - 1.0) - 1.0)).sqrt();
                let p = a * (x * pm1 - b * pm2);
                out[gegen_index(j, m)] = p;
                pm2 = pm1;
                pm1 = p;
            }
        }
    }
    out
}

/// Values of every basis function of degree `≤ l_max` at `p`, in global
/// order.
pub fn basis_values(l_max: usize, p: &SpherePoint) -> Vec<f64> {
    let c = p.to_hyperspherical();
    let g = gegenbauer_functions(l_max, c.chi);
    let leg = legendre_functions(l_max, c.theta.cos());
    let mut trig = vec![(0.0, 1.0); l_max + 1];
    for (m, t) in trig.iter_mut().enumerate() {
        *t = (m as f64 * c.phi).sin_cos();
    }
    let mut out = vec![0.0; spectrum_len(l_max)];
    for l in 0..=l_max {
        let off = degree_offset(l);
        for j in 0..=l {
            let gj = g[gegen_index(l, j)];
            for m in -(j as i64)..=(j as i64) {
                let am = m.unsigned_abs() as usize;
                let ang = leg[gegen_index(j, am)]
                    * match m.cmp(&0) {
                        std::cmp::Ordering::Equal => 1.0,
                        std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * trig[am].1,
                        std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * trig[am].0,
                    };
                out[off + intra_index(j, m)] = gj * ang;
            }
        }
    }
    out
}

/// Zonal harmonic `Z_l(χ) = sin((l+1)χ) / (π√2 sinχ)`, continuous at the
/// poles.
pub fn zonal_harmonic(l: usize, chi: f64) -> f64 {
    chebyshev_u(l, chi.cos()) / (PI * std::f64::consts::SQRT_2)
}

/// Chebyshev polynomial of the second kind `U_l(x)` by recurrence.
pub fn chebyshev_u(l: usize, x: f64) -> f64 {
    let mut u0 = 1.0;
    if l == 0 {
        return u0;
    }
    let mut u1 = 2.0 * x;
    for _ in 1..l {
        let u2 = 2.0 * x * u1 - u0;
        u0 = u1;
        u1 = u2;
    }
    u1
}

/// `U_l(x)` for all `l ≤ l_max`.
pub fn chebyshev_u_all(l_max: usize, x: f64) -> Vec<f64> {
    let mut u = vec![1.0; l_max + 1];
    if l_max >= 1 {
        u[1] = 2.0 * x;
    }
    for l in 2..=l_max {
        u[l] = 2.0 * x * u[l - 1] - u[l - 2];
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HypersphericalCoords;

    #[test]
    fn offsets_and_indices() {
        assert_eq!(degree_offset(0), 0);
        assert_eq!(degree_offset(1), 1);
        assert_eq!(degree_offset(2), 5);
        assert_eq!(spectrum_len(2), 14);
        for idx in 0..100 {
            let (j, m) = intra_to_jm(idx);
            assert_eq!(intra_index(j, m), idx);
            assert!(m.unsigned_abs() as usize <= j);
        }
    }

    #[test]
    fn degree_one_block_is_coordinates() {
        let p = HypersphericalCoords { chi: 0.7, theta: 1.9, phi: 4.0 }.to_point();
        let y = basis_values(1, &p);
        let k = std::f64::consts::SQRT_2 / PI;
        let x = p.coords();
        // order within degree 1: (0,0), (1,-1), (1,0), (1,1)
        let expect = [x[3], x[1], x[2], x[0]];
        for (i, e) in expect.iter().enumerate() {
            assert!((y[1 + i] - k * e).abs() < 1e-14, "{i}");
        }
        assert!((y[0] - 1.0 / (2.0 * PI * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zonal_is_j0_m0() {
        let p = HypersphericalCoords { chi: 1.3, theta: 0.4, phi: 2.0 }.to_point();
        let y = basis_values(7, &p);
        for l in 0..=7 {
            assert!((y[degree_offset(l)] - zonal_harmonic(l, 1.3)).abs() < 1e-13);
        }
    }
}
