//! Points, charts and rigid motions of the round unit 3-sphere in R⁴.
//!
//! Conventions used throughout the crate:
//!
//! * hyperspherical angles `(chi, theta, phi)` map to
//!   `x = (sinχ sinθ cosφ, sinχ sinθ sinφ, sinχ cosθ, cosχ)`, so `chi` is the
//!   geodesic distance from the north pole `e₄`;
//! * the stereographic chart sends `y ∈ R³` to
//!   `(2y, |y|² − 1) / (1 + |y|²)`, with `y = 0` at the south pole `−e₄`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|x| = 1` accepted by [`SpherePoint::new`].
pub const UNIT_TOL: f64 = 1e-12;

pub type Vec4 = [f64; 4];

#[inline]
pub fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn norm4(a: &Vec4) -> f64 {
    dot4(a, a).sqrt()
}

#[inline]
pub fn axpy4(alpha: f64, x: &Vec4, y: &Vec4) -> Vec4 {
    [
        alpha * x[0] + y[0],
        alpha * x[1] + y[1],
        alpha * x[2] + y[2],
        alpha * x[3] + y[3],
    ]
}

#[inline]
pub fn scale4(alpha: f64, x: &Vec4) -> Vec4 {
    [alpha * x[0], alpha * x[1], alpha * x[2], alpha * x[3]]
}

/// A point of S³, stored as a unit vector of R⁴.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct SpherePoint([f64; 4]);

impl TryFrom<[f64; 4]> for SpherePoint {
    type Error = Error;
    fn try_from(x: [f64; 4]) -> Result<Self> {
        SpherePoint::new(x)
    }
}

impl From<SpherePoint> for [f64; 4] {
    fn from(p: SpherePoint) -> Self {
        p.0
    }
}

impl SpherePoint {
    /// Wraps a vector that is already unit length (within [`UNIT_TOL`]).
    pub fn new(x: Vec4) -> Result<Self> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinates {x:?}")));
        }
        let n = norm4(&x);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("|x| = {n} is not 1")));
        }
        Ok(SpherePoint(x))
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn normalize(x: Vec4) -> Result<Self> {
        let n = norm4(&x);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Domain(format!("cannot normalize {x:?}")));
        }
        Ok(SpherePoint(scale4(1.0 / n, &x)))
    }

    /// The standard basis vector `e_{axis+1}`.
    pub fn axis(axis: usize) -> Self {
        let mut x = [0.0; 4];
        x[axis] = 1.0;
        SpherePoint(x)
    }

    /// `e₄`, the point `chi = 0`.
    pub fn north() -> Self {
        Self::axis(3)
    }

    pub fn south() -> Self {
        SpherePoint([0.0, 0.0, 0.0, -1.0])
    }

    #[inline]
    pub fn coords(&self) -> &Vec4 {
        &self.0
    }

    pub fn antipode(&self) -> Self {
        SpherePoint(scale4(-1.0, &self.0))
    }

    #[inline]
    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot4(&self.0, &other.0)
    }

    /// Projects an ambient vector onto the tangent space at this point.
    pub fn project_tangent(&self, v: &Vec4) -> Vec4 {
        axpy4(-dot4(&self.0, v), &self.0, v)
    }

    /// Orthonormal frame of the tangent space.
    ///
    /// The three ambient axes least aligned with the point are projected and
    /// orthonormalized by Gram–Schmidt, so the frame is a deterministic
    /// function of the point and never degenerates.
    pub fn tangent_frame(&self) -> [Vec4; 3] {
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&a, &b| {
            self.0[a]
                .abs()
                .partial_cmp(&self.0[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut frame = [[0.0; 4]; 3];
        for (k, &ax) in order[..3].iter().enumerate() {
            let mut v = [0.0; 4];
            v[ax] = 1.0;
            v = self.project_tangent(&v);
            for prev in frame.iter().take(k) {
                v = axpy4(-dot4(prev, &v), prev, &v);
            }
            let n = norm4(&v);
            frame[k] = scale4(1.0 / n, &v);
        }
        frame
    }

    /// Riemannian exponential map: follows the great circle through `self`
    /// with initial tangent velocity `v` for unit time.
    pub fn exp(&self, v: &Vec4) -> SpherePoint {
        let v = self.project_tangent(v);
        let n = norm4(&v);
        if n < 1e-300 {
            return *self;
        }
        let x = axpy4(n.sin() / n, &v, &scale4(n.cos(), &self.0));
        // renormalize against drift
        SpherePoint::normalize(x).unwrap_or(*self)
    }

    /// Inverse of [`SpherePoint::exp`]; undefined at the antipode.
    pub fn log(&self, q: &SpherePoint) -> Result<Vec4> {
        let d = geodesic_distance(self, q);
        if d < 1e-300 {
            return Ok([0.0; 4]);
        }
        if PI - d < 1e-12 {
            return Err(Error::Domain("logarithm at the antipode".into()));
        }
        let w = self.project_tangent(&q.0);
        let n = norm4(&w);
        Ok(scale4(d / n, &w))
    }

    pub fn to_hyperspherical(&self) -> HypersphericalCoords {
        let x = &self.0;
        let chi = x[3].clamp(-1.0, 1.0).acos();
        let r3 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let theta = if r3 > 0.0 {
            (x[2] / r3).clamp(-1.0, 1.0).acos()
        } else {
            0.0
        };
        let mut phi = x[1].atan2(x[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        if phi >= 2.0 * PI {
            phi -= 2.0 * PI;
        }
        HypersphericalCoords { chi, theta, phi }
    }
}

/// Hyperspherical angles of a point: `chi, theta ∈ [0, π]`, `phi ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypersphericalCoords {
    pub chi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl HypersphericalCoords {
    pub fn to_point(&self) -> SpherePoint {
        let (sc, cc) = self.chi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        SpherePoint([sc * st * cp, sc * st * sp, sc * ct, cc])
    }
}

/// Great-circle distance in radians, `arccos` of the clamped inner product.
pub fn geodesic_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    // For nearly coincident or antipodal points acos loses half the digits;
    // use the chord length there instead.
    let c = p.dot(q).clamp(-1.0, 1.0);
    if c.abs() < 0.9 {
        c.acos()
    } else {
        let diff = if c > 0.0 {
            [p.0[0] - q.0[0], p.0[1] - q.0[1], p.0[2] - q.0[2], p.0[3] - q.0[3]]
        } else {
            [p.0[0] + q.0[0], p.0[1] + q.0[1], p.0[2] + q.0[2], p.0[3] + q.0[3]]
        };
        let half = (0.5 * norm4(&diff)).min(1.0);
        let d = 2.0 * half.asin();
        if c > 0.0 {
            d
        } else {
            PI - d
        }
    }
}

/// Inverse stereographic projection from R³ (pole of projection at `e₄`).
pub fn stereographic_to_sphere(y: &[f64; 3]) -> SpherePoint {
    let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
    if !r2.is_finite() {
        return SpherePoint::north();
    }
    let den = 1.0 + r2;
    SpherePoint([2.0 * y[0] / den, 2.0 * y[1] / den, 2.0 * y[2] / den, (r2 - 1.0) / den])
}

/// Stereographic coordinates of a point; the north pole has none.
pub fn sphere_to_stereographic(p: &SpherePoint) -> Result<[f64; 3]> {
    let x = p.coords();
    let den = 1.0 - x[3];
    if den <= 1e-14 {
        return Err(Error::Domain(
            "stereographic projection is undefined at the north pole".into(),
        ));
    }
    Ok([x[0] / den, x[1] / den, x[2] / den])
}

/// Conformal factor `2 / (1 + |y|²)` of the stereographic chart.
pub fn conformal_factor(y: &[f64; 3]) -> f64 {
    2.0 / (1.0 + y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
}

/// Euclidean radius in a stereographic chart centred at a point, for a point
/// at geodesic distance `d` from that centre.
pub fn stereographic_radius(d: f64) -> f64 {
    (0.5 * d).tan()
}

/// A rotation of R⁴ (orthogonal matrix with determinant 1), row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation4 {
    m: [[f64; 4]; 4],
}

impl Default for Rotation4 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Rotation4 { m }
    }

    /// Validates orthogonality (to 1e-10) and orientation.
    pub fn from_matrix(m: [[f64; 4]; 4]) -> Result<Self> {
        for i in 0..4 {
            for j in 0..4 {
                let g: f64 = (0..4).map(|k| m[i][k] * m[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > 1e-10 {
                    return Err(Error::Domain("matrix is not orthogonal".into()));
                }
            }
        }
        let r = Rotation4 { m };
        if r.determinant() < 0.0 {
            return Err(Error::Domain("matrix is a reflection".into()));
        }
        Ok(r)
    }

    /// Rotation by `angle` in the coordinate plane `(i, j)`, taking `e_i`
    /// towards `e_j`.
    pub fn plane(i: usize, j: usize, angle: f64) -> Result<Self> {
        if i >= 4 || j >= 4 || i == j {
            return Err(Error::Precondition(format!("invalid rotation plane ({i}, {j})")));
        }
        let mut r = Self::identity();
        let (s, c) = angle.sin_cos();
        r.m[i][i] = c;
        r.m[j][j] = c;
        r.m[j][i] = s;
        r.m[i][j] = -s;
        Ok(r)
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Rotation4) -> Rotation4 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Rotation4 { m }
    }

    pub fn transpose(&self) -> Rotation4 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        Rotation4 { m }
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn apply_vec(&self, x: &Vec4) -> Vec4 {
        let mut y = [0.0; 4];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot4(&self.m[i], x);
        }
        y
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        SpherePoint::normalize(self.apply_vec(p.coords())).expect("rotation preserves norm")
    }

    fn determinant(&self) -> f64 {
        let a = nalgebra::Matrix4::from_fn(|i, j| self.m[i][j]);
        a.determinant()
    }

    /// Orthonormalizes four column vectors (Gram–Schmidt) into a rotation,
    /// flipping the last column if needed. Used to build rotations from
    /// arbitrary (e.g. random Gaussian) matrices.
    pub fn from_columns_orthonormalized(cols: [[f64; 4]; 4]) -> Result<Self> {
        let mut q: [Vec4; 4] = [[0.0; 4]; 4];
        for k in 0..4 {
            let mut v = cols[k];
            for prev in q.iter().take(k) {
                v = axpy4(-dot4(prev, &v), prev, &v);
            }
            let n = norm4(&v);
            if n < 1e-12 {
                return Err(Error::Domain("columns are linearly dependent".into()));
            }
            q[k] = scale4(1.0 / n, &v);
        }
        let mut m = [[0.0; 4]; 4];
        for (j, col) in q.iter().enumerate() {
            for i in 0..4 {
                m[i][j] = col[i];
            }
        }
        let mut r = Rotation4 { m };
        if r.determinant() < 0.0 {
            for row in r.m.iter_mut() {
                row[3] = -row[3];
            }
        }
        Ok(r)
    }
}
