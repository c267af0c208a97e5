//! Command bodies. Each writes its files under the output directory and
//! prints a short summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nirenberg_core::asymptotics::validate_asymptotics;
use nirenberg_core::branch::{continuation, diagnostics, write_branch_csv, Branch, BranchStop};
use nirenberg_core::bubbles::spectral_identities;
use nirenberg_core::morse::{degree_report, find_critical_points_with, CriticalPointRecord, MorseTolerances, PointClass};
use nirenberg_core::pohozaev::{flux_limit_check, linearity_residual};
use nirenberg_core::reduced::solve_f_critical;
use nirenberg_core::solver::{constant_guess, newton, FullDiscretization, ZonalDiscretization};
use nirenberg_core::{
    AmbientPolynomial, BlowupPrediction, HarmonicSpectrum, IdentitySweep, Solution, SolverState, ZonalSpectrum,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::{render, C_MU_VALUES};
use crate::CliError;

const BRANCH_CSV: &str = "branch_0.csv";
const BRANCH_JSON: &str = "branch_0.json";
const BRANCH_PREDICTIONS: &str = "branch_0_predictions.json";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let s = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&s).map_err(|e| io_err(path, e))
}

/// Critical points for diagnostics; a curvature without isolated critical
/// points (e.g. a constant) yields none.
fn critical_points_or_none(k: &AmbientPolynomial, cfg: &RunConfig) -> Vec<CriticalPointRecord> {
    if k.is_constant() {
        return Vec::new();
    }
    find_critical_points_with(k, cfg.analyze.n_starts, cfg.seed, &MorseTolerances::default())
        .map(|s| s.points)
        .unwrap_or_default()
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.curvature()?;
    let tol = MorseTolerances::default();
    let summary_path = cfg.out.join("analyze.txt");
    if k.is_constant() {
        let msg = format!("K = {k} is constant: every point is critical");
        write_text(&summary_path, &format!("{msg}\n"))?;
        return Err(CliError::Degenerate(msg));
    }
    let set = find_critical_points_with(&k, cfg.analyze.n_starts, cfg.seed, &tol)?;
    write_json(&cfg.out.join("critical_points.json"), &set)?;

    let mut s = format!("K = {k}\ncritical points: {}\n", set.points.len());
    s.push_str("index  x1 x2 x3 x4  K  lapK  morse_index  class  nondegenerate\n");
    for (i, p) in set.points.iter().enumerate() {
        let x = p.location.coords();
        s.push_str(&format!(
            "{i}  {:.9} {:.9} {:.9} {:.9}  {:.9}  {:.9}  {}  {:?}  {}\n",
            x[0], x[1], x[2], x[3], p.k_value, p.laplacian, p.morse_index, p.class, p.nondegenerate
        ));
    }
    if !set.morse {
        s.push_str("K is not a Morse function; no degree count\n");
        write_text(&summary_path, &s)?;
        print!("{s}");
        return Err(CliError::Degenerate("degenerate critical points, see analyze.txt".into()));
    }
    let report = degree_report(&k, &set, &tol)?;
    write_text(&cfg.out.join("analyze.json"), &(report.to_json() + "\n"))?;
    s.push_str("subset  mu  contribution  near_degenerate\n");
    for sub in &report.subsets {
        s.push_str(&format!("{:?}  {:.12e}  {}  {}\n", sub.members, sub.mu, sub.contribution, sub.near_degenerate));
    }
    s.push_str(&format!("Index(K) = {}\n", report.index));
    s.push_str(&format!(
        "in A: {} (Laplacian margin {:.6e}, mu margin {})\n",
        report.in_a,
        report.laplacian_margin,
        report.mu_margin.map_or("none".into(), |m| format!("{m:.6e}"))
    ));
    s.push_str(&format!("H(K): {:?}\n", report.h_configs));
    if report.corollary_holds {
        s.push_str(&format!("closed-form index: {}\n", report.corollary_index));
    }
    for w in &report.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    write_text(&summary_path, &s)?;
    print!("{s}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    /// Hard checks decide the exit status; the asymptotic sweeps are reported only.
    hard: bool,
    status: Status,
    measured: String,
}

#[derive(Serialize)]
struct ValidationSummary {
    checks: Vec<Check>,
    spectral: nirenberg_core::bubbles::SpectralIdentityReport,
    asymptotics: nirenberg_core::AsymptoticsReport,
    flux: nirenberg_core::pohozaev::FluxLimitReport,
    flux_linearity_residual: f64,
}

fn status(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::Fail
    }
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let v = &cfg.validate;
    let mut checks = Vec::new();

    let spectral = spectral_identities(v.spectral_l, v.spectral_samples, cfg.seed)?;
    checks.push(Check {
        name: "constant-is-fixed".into(),
        hard: true,
        status: status(spectral.constant_error == 0.0),
        measured: format!("{:.3e}", spectral.constant_error),
    });
    checks.push(Check {
        name: "bubble-square".into(),
        hard: true,
        status: status(spectral.square_error <= v.square_rtol),
        measured: format!("{:.3e}", spectral.square_error),
    });
    checks.push(Check {
        name: "bubble-energy".into(),
        hard: true,
        status: status(spectral.energy_error <= v.energy_rtol),
        measured: format!("{:.3e}", spectral.energy_error),
    });

    let sweeps: Vec<IdentitySweep> = nirenberg_core::IdentityId::ALL
        .iter()
        .map(|&id| IdentitySweep::new(id, v.taus.clone()))
        .collect();
    let asymptotics = validate_asymptotics(&sweeps)?;
    for s in &asymptotics.summaries {
        let exponent = s.remainder_exponent.unwrap_or(f64::NAN);
        let ok = s.min_ratio >= v.ratio_band[0] && s.max_ratio <= v.ratio_band[1] && exponent >= v.min_exponent;
        checks.push(Check {
            name: s.identity.as_str().into(),
            hard: false,
            status: if s.inconclusive { Status::Inconclusive } else { status(ok) },
            measured: format!("ratio [{:.4}, {:.4}], remainder exponent {exponent:.3}", s.min_ratio, s.max_ratio),
        });
    }

    let alpha: AmbientPolynomial =
        v.flux_alpha.parse().map_err(|e| CliError::config(format!("validate.flux_alpha: {e}")))?;
    let flux = flux_limit_check(1.0, &alpha, &v.flux_deltas)?;
    checks.push(Check {
        name: "flux-limit".into(),
        hard: true,
        status: status(flux.relative_deviation <= v.flux_rtol),
        measured: format!("{:.10} vs {:.10} (rel {:.2e})", flux.extrapolated, flux.closed_form, flux.relative_deviation),
    });
    let lin = linearity_residual(&alpha, [-3.0, 0.0, 1.0], &v.flux_deltas)?;
    checks.push(Check {
        name: "flux-linearity".into(),
        hard: true,
        status: status(lin <= v.linearity_rtol),
        measured: format!("{lin:.3e}"),
    });

    let mut text = String::new();
    for c in &checks {
        text.push_str(&format!(
            "{:<26} {:<5} {:<12} {}\n",
            c.name,
            if c.hard { "hard" } else { "soft" },
            format!("{:?}", c.status).to_lowercase(),
            c.measured
        ));
    }
    let failed: Vec<String> = checks.iter().filter(|c| c.hard && c.status != Status::Pass).map(|c| c.name.clone()).collect();
    let inconclusive: Vec<String> =
        checks.iter().filter(|c| c.status == Status::Inconclusive).map(|c| c.name.clone()).collect();
    let summary = ValidationSummary { checks, spectral, asymptotics, flux, flux_linearity_residual: lin };
    write_json(&cfg.out.join("validate.json"), &summary)?;
    print!("{text}");
    if failed.is_empty() && inconclusive.is_empty() {
        Ok(())
    } else {
        Err(CliError::Inconclusive(format!("failed {failed:?}, inconclusive {inconclusive:?}")))
    }
}

fn initial_state(cfg: &RunConfig, k: &AmbientPolynomial, tau: f64) -> Result<Solution, CliError> {
    let c = constant_guess(k, tau);
    Ok(if cfg.zonal {
        Solution::Zonal(ZonalSpectrum::constant(cfg.l_zonal, cfg.axis()?, c))
    } else {
        Solution::Full(HarmonicSpectrum::constant(cfg.l, c))
    })
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    state: &'a SolverState,
    diagnostics: &'a nirenberg_core::BlowupDiagnostics,
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.curvature()?;
    let tau = cfg.solve.tau;
    let init = initial_state(cfg, &k, tau)?;
    let opts = cfg.solver_options();
    let state = if cfg.zonal {
        newton(&ZonalDiscretization::new(&k, cfg.axis()?, cfg.l_zonal)?, &init, tau, &opts)?
    } else {
        newton(&FullDiscretization::new(&k, cfg.l, opts.grid_factor)?, &init, tau, &opts)?
    };
    let crit = critical_points_or_none(&k, cfg);
    let diag = diagnostics(&state, &k, cfg.continuation.expected_k, &crit)?;
    write_json(&cfg.out.join("solve.json"), &SolveOutput { state: &state, diagnostics: &diag })?;
    println!(
        "tau {tau}: {:?} after {} Newton steps, residual {:.3e}, min {:.6}, max {:.6}",
        state.status, state.newton_iters, state.residual_norm, state.min_value, state.max_value
    );
    if state.converged() && state.positive {
        Ok(())
    } else {
        Err(CliError::Solver(format!("{:?} at tau {tau}", state.status)))
    }
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.curvature()?;
    if k.is_constant() {
        return Err(CliError::Degenerate(format!("K = {k} is constant")));
    }
    let tol = MorseTolerances::default();
    let set = find_critical_points_with(&k, cfg.analyze.n_starts, cfg.seed, &tol)?;
    let report = degree_report(&k, &set, &tol)?;
    let mut preds = Vec::new();
    let mut failures = Vec::new();
    // Configurations that carry blow-up: negative-Laplacian points with μ > 0.
    for sub in report.subsets.iter().filter(|s| s.all_minus && s.mu > s.tol_mu) {
        let config = &sub.members;
        let pts: Vec<CriticalPointRecord> = config.iter().map(|&i| report.critical_points[i]).collect();
        for &tau in &cfg.predict.taus {
            match solve_f_critical(&pts, &k, tau, cfg.predict.c_mu) {
                Ok(p) => preds.push(p),
                Err(e) => failures.push(format!("{config:?} at tau {tau}: {e}")),
            }
        }
    }
    write_json(&cfg.out.join("predict.json"), &preds)?;
    for p in &preds {
        println!("tau {:.3e}: t* = {:?}, interaction mu = {:.6e}", p.tau, p.t_star, p.interaction_mu);
    }
    for f in &failures {
        eprintln!("warning: {f}");
    }
    if preds.is_empty() && !failures.is_empty() {
        return Err(CliError::Solver(failures.join("; ")));
    }
    Ok(())
}

/// Single-point predictions at every branch τ, for each negative-Laplacian
/// critical point and each concentration amplitude.
fn branch_predictions(branch: &Branch, k: &AmbientPolynomial, crit: &[CriticalPointRecord]) -> Vec<BlowupPrediction> {
    let mut preds = Vec::new();
    for q in crit.iter().filter(|q| q.class == PointClass::KMinus) {
        for &c_mu in &C_MU_VALUES {
            for p in &branch.points {
                if let Ok(pred) = solve_f_critical(std::slice::from_ref(q), k, p.state.tau, c_mu) {
                    preds.push(pred);
                }
            }
        }
    }
    preds
}

fn write_report(cfg: &RunConfig, branch: &Branch, preds: &[BlowupPrediction], k: &AmbientPolynomial) -> Result<(), CliError> {
    let r = render(branch, preds, k);
    write_text(&cfg.out.join("comparison.txt"), &r.comparison)?;
    write_text(&cfg.out.join("log_m_vs_log_tau.dat"), &r.log_height)?;
    write_text(&cfg.out.join("peak_distance_vs_tau.dat"), &r.peak_distance)?;
    print!("{}", r.comparison);
    Ok(())
}

pub fn continue_branch(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.curvature()?;
    let s = cfg.schedule;
    let init = initial_state(cfg, &k, s.tau_start)?;
    let crit = critical_points_or_none(&k, cfg);
    let opts = cfg.continuation_options();
    let branch = if cfg.zonal {
        let d = ZonalDiscretization::new(&k, cfg.axis()?, cfg.l_zonal)?;
        continuation(&d, &k, s.tau_start, s.tau_end, s.steps, &init, &crit, &opts)
    } else {
        let d = FullDiscretization::new(&k, cfg.l, opts.solver.grid_factor)?;
        continuation(&d, &k, s.tau_start, s.tau_end, s.steps, &init, &crit, &opts)
    }
    .map_err(|e| CliError::Solver(format!("branch failed: {e}")))?;
    if branch.points.is_empty() {
        return Err(CliError::Solver("branch failed: no accepted state".into()));
    }

    let csv_path = cfg.out.join(BRANCH_CSV);
    let file = File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut w = BufWriter::new(file);
    write_branch_csv(&branch, &mut w)?;
    w.flush().map_err(|e| io_err(&csv_path, e))?;
    write_json(&cfg.out.join(BRANCH_JSON), &branch)?;

    let preds = branch_predictions(&branch, &k, &crit);
    write_json(&cfg.out.join(BRANCH_PREDICTIONS), &preds)?;
    write_report(cfg, &branch, &preds, &k)?;
    if let BranchStop::StepFailure { tau, message } = &branch.stop {
        eprintln!("warning: branch stopped below tau {tau}: {message}");
    }
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let k = cfg.curvature()?;
    let branch: Branch = read_json(&cfg.out.join(BRANCH_JSON))?;
    let preds: Vec<BlowupPrediction> = read_json(&cfg.out.join(BRANCH_PREDICTIONS))?;
    write_report(cfg, &branch, &preds, &k)
}
