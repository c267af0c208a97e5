//! Sweeps comparing bubble interaction integrals with their leading-order
//! asymptotic forms as the rates grow like `τ^{-1/2}`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubbles::{
    bubble_profile, bubble_rate_profile, chart_distance, greens_function, radial_integral,
    two_bubble_integral, BubbleParams,
};
use crate::error::{Error, Result};
use crate::geometry::SpherePoint;

/// Identities checked by [`validate_asymptotics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityId {
    /// `∫ δ₁² δ₂ ≈ 16π² G(P₁,P₂)/(t₁t₂)`.
    CrossSquare,
    /// `∫ δ₁^{2−τ} δ₂`, same leading term as [`IdentityId::CrossSquare`].
    CrossSquareSubcritical,
    /// `∂_{t₁} ∫ δ₁² δ₂ ≈ −16π² G/(t₁² t₂)`.
    CrossSquareRate,
    /// `∂_t ∫ δ^{3−τ} ≈ −2π² τ/t`.
    SelfCubeRate,
    /// `∫ |y|² δ^{3−τ} ≈ 6π²/t²`, with `|y|` the chart distance to the centre.
    SecondMoment,
    /// `∂_t ∫ |y|² δ^{3−τ} ≈ −12π²/t³`.
    SecondMomentRate,
}

impl IdentityId {
    pub const ALL: [IdentityId; 6] = [
        IdentityId::CrossSquare,
        IdentityId::CrossSquareSubcritical,
        IdentityId::CrossSquareRate,
        IdentityId::SelfCubeRate,
        IdentityId::SecondMoment,
        IdentityId::SecondMomentRate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IdentityId::CrossSquare => "cross-square",
            IdentityId::CrossSquareSubcritical => "cross-square-subcritical",
            IdentityId::CrossSquareRate => "cross-square-rate",
            IdentityId::SelfCubeRate => "self-cube-rate",
            IdentityId::SecondMoment => "second-moment",
            IdentityId::SecondMomentRate => "second-moment-rate",
        }
    }

    /// Remainder order claimed for the identity (power of `τ`), if any.
    pub fn claimed_remainder_order(&self) -> Option<f64> {
        match self {
            IdentityId::CrossSquare => Some(1.5),
            IdentityId::CrossSquareSubcritical => None,
            IdentityId::CrossSquareRate => Some(2.0),
            IdentityId::SelfCubeRate => Some(2.5),
            IdentityId::SecondMoment => Some(2.0),
            IdentityId::SecondMomentRate => Some(2.5),
        }
    }

    fn two_bubble(&self) -> bool {
        matches!(
            self,
            IdentityId::CrossSquare | IdentityId::CrossSquareSubcritical | IdentityId::CrossSquareRate
        )
    }
}

/// One sweep: `t₁ = t₂ = rate_factor·τ^{-1/2}` for each `τ`, centres at
/// geodesic distance `distance` (two-bubble identities only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySweep {
    pub id: IdentityId,
    pub taus: Vec<f64>,
    pub distance: f64,
    pub rate_factor: f64,
}

impl IdentitySweep {
    pub fn new(id: IdentityId, taus: Vec<f64>) -> Self {
        IdentitySweep { id, taus, distance: PI / 2.0, rate_factor: 1.0 }
    }

    /// The default validation sweep for every identity.
    pub fn defaults() -> Vec<IdentitySweep> {
        IdentityId::ALL
            .iter()
            .map(|&id| IdentitySweep::new(id, vec![0.04, 0.01, 0.0025]))
            .collect()
    }
}

/// One evaluated parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsRecord {
    pub identity: IdentityId,
    pub tau: f64,
    pub t1: f64,
    pub t2: f64,
    pub distance: f64,
    /// Stereographic distance `tan(d/2)` in the chart centred at `P₁`.
    pub chart_distance: f64,
    pub numeric: f64,
    pub prediction: f64,
    pub ratio: f64,
    /// `|numeric − prediction|`.
    pub remainder: f64,
    pub error: Option<String>,
}

/// Per-identity summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub identity: IdentityId,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Least-squares slope of `log remainder` against `log τ`.
    pub remainder_exponent: Option<f64>,
    pub claimed_order: Option<f64>,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub records: Vec<AsymptoticsRecord>,
    pub summaries: Vec<IdentitySummary>,
}

impl AsymptoticsReport {
    pub fn summary(&self, id: IdentityId) -> Option<&IdentitySummary> {
        self.summaries.iter().find(|s| s.identity == id)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "identity,tau,t1,t2,distance_rad,chart_distance,numeric,prediction,ratio,remainder,error\n",
        );
        for r in &self.records {
            writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.identity.as_str(),
                r.tau,
                r.t1,
                r.t2,
                r.distance,
                r.chart_distance,
                r.numeric,
                r.prediction,
                r.ratio,
                r.remainder,
                r.error.as_deref().unwrap_or("")
            )
            .ok();
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Point on the sphere at geodesic distance `d` from the north pole.
fn partner(d: f64) -> SpherePoint {
    SpherePoint::normalize([d.sin(), 0.0, 0.0, d.cos()]).expect("unit")
}

/// Evaluates one identity at one `τ`.
pub fn evaluate_identity(id: IdentityId, tau: f64, distance: f64, rate_factor: f64) -> AsymptoticsRecord {
    let t = rate_factor / tau.sqrt();
    let p1 = SpherePoint::north();
    let p2 = partner(distance);
    let (numeric, prediction) = match compute(id, tau, t, &p1, &p2) {
        Ok(v) => v,
        Err(e) => {
            return AsymptoticsRecord {
                identity: id,
                tau,
                t1: t,
                t2: t,
                distance,
                chart_distance: chart_distance(&p1, &p2),
                numeric: f64::NAN,
                prediction: f64::NAN,
                ratio: f64::NAN,
                remainder: f64::NAN,
                error: Some(e.to_string()),
            }
        }
    };
    AsymptoticsRecord {
        identity: id,
        tau,
        t1: t,
        t2: t,
        distance: if id.two_bubble() { distance } else { 0.0 },
        chart_distance: if id.two_bubble() { chart_distance(&p1, &p2) } else { 0.0 },
        numeric,
        prediction,
        ratio: numeric / prediction,
        remainder: (numeric - prediction).abs(),
        error: None,
    }
}

fn compute(id: IdentityId, tau: f64, t: f64, p1: &SpherePoint, p2: &SpherePoint) -> Result<(f64, f64)> {
    let rtol = 1e-11;
    let radial = |f: &dyn Fn(f64, f64) -> f64| {
        radial_integral(
            t,
            |chi| {
                let omc = 2.0 * (0.5 * chi).sin().powi(2);
                f(bubble_profile(t, chi.cos()), bubble_rate_profile(t, omc))
            },
            rtol,
        )
    };
    // |y|² sin²χ = 4 sin⁴(χ/2); radial_integral multiplies by sin²χ itself.
    let chart_sq = |chi: f64| (0.5 * chi).tan().powi(2);
    let p = 3.0 - tau;
    Ok(match id {
        IdentityId::CrossSquare | IdentityId::CrossSquareSubcritical | IdentityId::CrossSquareRate => {
            let b1 = BubbleParams::unit(*p1, t)?;
            let b2 = BubbleParams::unit(*p2, t)?;
            let g = greens_function(p1, p2)?;
            let lead = 16.0 * PI * PI * g / (t * t);
            match id {
                IdentityId::CrossSquare => (two_bubble_integral(&b1, &b2, |a1, _, a2, _| a1 * a1 * a2, rtol)?, lead),
                IdentityId::CrossSquareSubcritical => (
                    two_bubble_integral(&b1, &b2, |a1, _, a2, _| a1.powf(2.0 - tau) * a2, rtol)?,
                    lead,
                ),
                _ => (
                    two_bubble_integral(&b1, &b2, |a1, d1, a2, _| 2.0 * a1 * d1 * a2, rtol)?,
                    -lead / t,
                ),
            }
        }
        IdentityId::SelfCubeRate => (radial(&|d, dd| p * d.powf(p - 1.0) * dd)?, -2.0 * PI * PI * tau / t),
        IdentityId::SecondMoment => {
            let v = radial_integral(
                t,
                |chi| chart_sq(chi) * bubble_profile(t, chi.cos()).powf(p),
                rtol,
            )?;
            (v, 6.0 * PI * PI / (t * t))
        }
        IdentityId::SecondMomentRate => {
            let v = radial_integral(
                t,
                |chi| {
                    let omc = 2.0 * (0.5 * chi).sin().powi(2);
                    chart_sq(chi) * p * bubble_profile(t, chi.cos()).powf(p - 1.0) * bubble_rate_profile(t, omc)
                },
                rtol,
            )?;
            (v, -12.0 * PI * PI / (t * t * t))
        }
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Runs every sweep; parameter points are evaluated in parallel.
pub fn validate_asymptotics(config: &[IdentitySweep]) -> Result<AsymptoticsReport> {
    for sweep in config {
        if sweep.taus.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::Precondition("sweep values of tau must lie in (0, 1)".into()));
        }
        if sweep.id.two_bubble() && !(sweep.distance > 0.0 && sweep.distance <= PI) {
            return Err(Error::Precondition("two-bubble sweeps need a distance in (0, π]".into()));
        }
    }
    let jobs: Vec<(IdentityId, f64, f64, f64)> = config
        .iter()
        .flat_map(|s| s.taus.iter().map(move |&tau| (s.id, tau, s.distance, s.rate_factor)))
        .collect();
    let records: Vec<AsymptoticsRecord> = jobs
        .par_iter()
        .map(|&(id, tau, d, f)| evaluate_identity(id, tau, d, f))
        .collect();
    let summaries = config
        .iter()
        .map(|s| {
            let rs: Vec<&AsymptoticsRecord> = records.iter().filter(|r| r.identity == s.id).collect();
            let inconclusive = rs.iter().any(|r| r.error.is_some());
            let ok: Vec<&&AsymptoticsRecord> = rs.iter().filter(|r| r.error.is_none()).collect();
            let taus: Vec<f64> = ok.iter().map(|r| r.tau).collect();
            let rem: Vec<f64> = ok.iter().map(|r| r.remainder).collect();
            IdentitySummary {
                identity: s.id,
                min_ratio: ok.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min),
                max_ratio: ok.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max),
                remainder_exponent: loglog_slope(&taus, &rem),
                claimed_order: s.id.claimed_remainder_order(),
                inconclusive,
            }
        })
        .collect();
    Ok(AsymptoticsReport { records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn exact_at_unit_rate_and_zero_tau() {
        // t = 1: every bubble is the constant 1.
        let r = evaluate_identity(IdentityId::SecondMoment, 1e-300, PI / 2.0, 1e-150);
        assert!(r.error.is_none());
        // ∫ tan²(χ/2) 4π sin²χ dχ = 16π ∫ sin⁴(χ/2) dχ = 6π².
        assert!((r.ratio - 1.0).abs() < 1e-9, "{r:?}");
    }
}
