//! Measured-versus-predicted comparison for a continuation branch, and the
//! two-column plot series.

use std::fmt::Write as _;

use nirenberg_core::branch::{blowup_laws, BranchPoint};
use nirenberg_core::geometry::geodesic_distance;
use nirenberg_core::polynomial::sphere_derivatives;
use nirenberg_core::{AmbientPolynomial, BlowupPrediction, Branch, BranchStop, SpherePoint};

/// Concentration amplitudes used for the interaction predictions.
pub const C_MU_VALUES: [f64; 2] = [1.0, 0.25];

pub struct Rendered {
    pub comparison: String,
    pub log_height: String,
    pub peak_distance: String,
}

fn same_tau(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Single-point prediction at `tau` for the critical point nearest `q`.
fn prediction_for<'a>(preds: &'a [BlowupPrediction], q: &SpherePoint, tau: f64, c_mu: f64) -> Option<&'a BlowupPrediction> {
    preds
        .iter()
        .filter(|p| p.points.len() == 1 && p.c_mu == c_mu && same_tau(p.tau, tau))
        .min_by(|a, b| geodesic_distance(&a.points[0], q).total_cmp(&geodesic_distance(&b.points[0], q)))
}

fn fitted_rate(p: &BranchPoint) -> Option<f64> {
    let d = &p.diagnostics;
    match &d.fit {
        Some(f) if !f.rates.is_empty() => Some(f.rates[0]),
        _ => d.peaks.first().map(|pk| pk.rate_estimate),
    }
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), |v| format!("{v:.6e}"))
}

pub fn render(branch: &Branch, preds: &[BlowupPrediction], k: &AmbientPolynomial) -> Rendered {
    let mut out = String::new();
    writeln!(out, "# K = {k}").unwrap();
    let stop = match &branch.stop {
        BranchStop::Completed => "completed".to_string(),
        BranchStop::Resolution { tau, rate, l } => format!("resolution limit at tau = {tau:.6e} (rate {rate:.3} > L/4, L = {l})"),
        BranchStop::StepFailure { tau, message } => format!("step failure below tau = {tau:.6e}: {message}"),
    };
    writeln!(out, "# stop: {stop}").unwrap();
    writeln!(out, "# last resolved tau: {}", cell(branch.last_trusted_tau)).unwrap();
    writeln!(
        out,
        "tau m tau_m2 t_hat t_star t_hat/t_star lambda_hat peak_x1 peak_x2 peak_x3 peak_x4 critical_distance mu_pred[c_mu=1] mu_pred[c_mu=1/4] concentrating"
    )
    .unwrap();

    let mut log_height = String::from("# ln(tau)[1] ln(m)[1]\n");
    let mut peak_distance = String::from("# tau[1] peak_distance[rad]\n");
    let mut final_peak = None;
    for p in &branch.points {
        let tau = p.state.tau;
        let Some(top) = p.diagnostics.peaks.first() else {
            writeln!(out, "{tau:.6e} (no peak)").unwrap();
            continue;
        };
        final_peak = Some(top.location);
        let t_hat = fitted_rate(p);
        let pred = |c| prediction_for(preds, &top.location, tau, c);
        let t_star = pred(C_MU_VALUES[0]).map(|q| q.t_star[0]);
        let mu = |c| pred(c).map(|q| q.mu_pred[0]);
        let x = top.location.coords();
        writeln!(
            out,
            "{tau:.6e} {:.6e} {:.6e} {} {} {} {} {:.9} {:.9} {:.9} {:.9} {} {} {} {}",
            top.height,
            top.tau_m2,
            cell(t_hat),
            cell(t_star),
            cell(t_hat.zip(t_star).map(|(a, b)| a / b)),
            cell(p.diagnostics.lambda_hat.first().copied()),
            x[0],
            x[1],
            x[2],
            x[3],
            cell(top.critical_distance),
            cell(mu(C_MU_VALUES[0])),
            cell(mu(C_MU_VALUES[1])),
            p.diagnostics.concentrating,
        )
        .unwrap();
        writeln!(log_height, "{:.17e} {:.17e}", tau.ln(), top.height.ln()).unwrap();
        if let Some(d) = top.critical_distance {
            writeln!(peak_distance, "{tau:.17e} {d:.17e}").unwrap();
        }
    }

    let laws = blowup_laws(branch, |tau| {
        final_peak
            .and_then(|q| prediction_for(preds, &q, tau, C_MU_VALUES[0]))
            .map_or(f64::NAN, |p| p.t_star[0])
    });
    writeln!(out, "# last decade: {} concentrating points", laws.taus.len()).unwrap();
    writeln!(out, "# slope of ln m against ln tau: {}", cell(laws.height_slope)).unwrap();
    writeln!(out, "# spread of tau m^2 over the last three points: {}", cell(laws.tau_m2_spread)).unwrap();
    writeln!(out, "# |tau ln m| decreasing: {}", laws.log_height_decreasing).unwrap();
    if let Some((lo, hi)) = laws.rate_ratio_range {
        writeln!(out, "# t_hat/t_star range: [{lo:.4}, {hi:.4}]").unwrap();
    }
    if let Some((c, e)) = laws.remainder_fit {
        writeln!(out, "# remainder ~ C (tau |ln tau|)^e: C = {c:.4e}, e = {e:.4}").unwrap();
    }
    let concentration_point = final_peak.and_then(|q| {
        preds
            .iter()
            .filter(|p| p.points.len() == 1)
            .map(|p| p.points[0])
            .min_by(|a, b| geodesic_distance(a, &q).total_cmp(&geodesic_distance(b, &q)))
    });
    match (concentration_point, laws.tau_m2_extrapolated) {
        (Some(q), Some(x)) => {
            let d = sphere_derivatives(k, &q);
            let reduced = -d.laplacian / (2.0 * d.value.powi(3));
            let law = -4.0 * d.laplacian / d.value.powi(3);
            let (r_red, r_law) = ((x - reduced).abs() / reduced.abs(), (x - law).abs() / law.abs());
            let c = q.coords();
            writeln!(out, "# concentration point: ({:.9}, {:.9}, {:.9}, {:.9})", c[0], c[1], c[2], c[3]).unwrap();
            writeln!(out, "# extrapolated tau m^2 (fit in sqrt(tau) over the last three points): {x:.6}").unwrap();
            writeln!(out, "# reduced-model constant -lapK/(2K^3) = {reduced:.6}, relative distance {r_red:.4}").unwrap();
            writeln!(out, "# blow-up law constant -4 lapK/K^3 = {law:.6}, relative distance {r_law:.4}").unwrap();
            let nearer = if r_law <= r_red { "-4 lapK/K^3" } else { "-lapK/(2K^3)" };
            writeln!(out, "# nearer candidate: {nearer}").unwrap();
        }
        _ => writeln!(out, "# no concentration: no limiting constant to compare").unwrap(),
    }
    Rendered { comparison: out, log_height, peak_distance }
}
