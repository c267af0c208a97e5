//! Small dense symmetric eigenvalues and a matrix-free restarted GMRES.

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric `n×n` matrix (row-major), ascending.
///
/// Householder tridiagonalization followed by implicit-shift QL.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Precondition(format!("expected {} entries, got {}", n * n, a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let (mut d, mut e) = tridiagonalize(a, n);
    ql_implicit(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    Ok(d)
}

/// Smallest eigenvalue of a symmetric matrix given as rows.
pub fn min_eigenvalue(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(symmetric_eigenvalues(&flat, n)?.first().copied().unwrap_or(f64::INFINITY))
}

fn tridiagonalize(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| m[idx(i, k)]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|t| *t /= vn);
        let s = n - k - 1;
        let p: Vec<f64> = (0..s)
            .map(|i| (0..s).map(|j| m[idx(k + 1 + i, k + 1 + j)] * v[j]).sum())
            .collect();
        let kk: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum();
        let q: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
        for i in 0..s {
            for j in 0..s {
                m[idx(k + 1 + i, k + 1 + j)] -= 2.0 * (v[i] * q[j] + q[i] * v[j]);
            }
        }
        m[idx(k + 1, k)] = alpha;
        m[idx(k, k + 1)] = alpha;
        for i in k + 2..n {
            m[idx(i, k)] = 0.0;
            m[idx(k, i)] = 0.0;
        }
    }
    let d = (0..n).map(|i| m[idx(i, i)]).collect();
    let e = (0..n).map(|i| if i + 1 < n { m[idx(i + 1, i)] } else { 0.0 }).collect();
    (d, e)
}

fn ql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmresOptions {
    pub rtol: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { rtol: 1e-12, restart: 60, max_iterations: 600 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual `‖b − A x‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES for `A x = b`, `precond` applying
/// an approximation of `A⁻¹`.
pub fn gmres<A, P>(mut apply: A, mut precond: P, b: &[f64], x0: &[f64], opts: GmresOptions) -> GmresOutcome
where
    A: FnMut(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.to_vec();
    if bnorm == 0.0 {
        return GmresOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut total = 0;
    let mut rel;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.rtol || total >= opts.max_iterations {
            break;
        }
        let m = opts.restart.max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                h[i][k] = dot(&w, vi);
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= h[i][k] * vj);
            }
            // Second Gram-Schmidt pass.
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                h[i][k] += c;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= c * vj);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = h[k][k].hypot(h[k + 1][k]);
            if den == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= opts.rtol * 0.5 || wn == 0.0 || total >= opts.max_iterations {
                break;
            }
            v.push(w.iter().map(|t| t / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(xj, zj)| *xj += yi * zj);
        }
        if k_used == 0 {
            let ax = apply(&x);
            rel = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / bnorm;
            break;
        }
    }
    GmresOutcome { converged: rel <= opts.rtol, x, iterations: total, relative_residual: rel }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Roots of the characteristic polynomial for k ≤ 3.
    fn charpoly_eigs(a: &[f64], n: usize) -> Vec<f64> {
        let mut r = match n {
            1 => vec![a[0]],
            2 => {
                let tr = a[0] + a[3];
                let det = a[0] * a[3] - a[1] * a[2];
                let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                vec![tr / 2.0 - disc, tr / 2.0 + disc]
            }
            3 => {
                // Trigonometric solution of the symmetric cubic.
                let q = (a[0] + a[4] + a[8]) / 3.0;
                let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
                let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                let b: Vec<f64> = (0..9)
                    .map(|i| (a[i] - if i % 4 == 0 { q } else { 0.0 }) / p)
                    .collect();
                let detb = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
                    + b[2] * (b[3] * b[7] - b[4] * b[6]);
                let phi = (detb / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
                let pi = std::f64::consts::PI;
                vec![
                    q + 2.0 * p * phi.cos(),
                    q + 2.0 * p * (phi + 2.0 * pi / 3.0).cos(),
                    q + 2.0 * p * (phi + 4.0 * pi / 3.0).cos(),
                ]
            }
            _ => unreachable!(),
        };
        r.sort_by(|x, y| x.partial_cmp(y).unwrap());
        r
    }

    fn sym(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[test]
    fn matches_charpoly_for_small_sizes() {
        for n in 1..=3 {
            for seed in 0..20 {
                let a = sym(n, seed);
                let e = symmetric_eigenvalues(&a, n).unwrap();
                let c = charpoly_eigs(&a, n);
                for (x, y) in e.iter().zip(&c) {
                    assert!((x - y).abs() < 1e-12, "n={n} {e:?} {c:?}");
                }
            }
        }
    }

    #[test]
    fn trace_and_frobenius_preserved() {
        for n in [4, 7, 12, 20] {
            let a = sym(n, 99 + n as u64);
            let e = symmetric_eigenvalues(&a, n).unwrap();
            let tr: f64 = (0..n).map(|i| a[i * n + i]).sum();
            let fro: f64 = a.iter().map(|x| x * x).sum();
            assert!((e.iter().sum::<f64>() - tr).abs() < 1e-12);
            assert!((e.iter().map(|x| x * x).sum::<f64>() - fro).abs() < 1e-11);
        }
    }

    #[test]
    fn diagonal_and_repeated() {
        let e = symmetric_eigenvalues(&[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -1.0], 3).unwrap();
        assert_eq!(e, vec![-1.0, 2.0, 2.0]);
        assert!(symmetric_eigenvalues(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn gmres_solves_spd_and_nonsymmetric() {
        let n = 30;
        let a: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                if i == j {
                    4.0 + i as f64
                } else if j == i + 1 {
                    1.0
                } else if i == j + 1 {
                    -0.5
                } else {
                    0.0
                }
            })
            .collect();
        let mul = |x: &[f64]| (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect::<Vec<f64>>();
        let xt: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = mul(&xt);
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let out = gmres(
            mul,
            |r: &[f64]| r.iter().zip(&diag).map(|(x, d)| x / d).collect(),
            &b,
            &vec![0.0; n],
            GmresOptions { rtol: 1e-13, restart: 8, max_iterations: 500 },
        );
        assert!(out.converged, "{out:?}");
        for (x, y) in out.x.iter().zip(&xt) {
            assert!((x - y).abs() < 1e-11);
        }
    }
}
