//! Run configuration: a TOML file with one table per command. Every key is
//! optional; unknown keys are rejected.
//!
//! ```toml
//! k = "x4 + 2"        # prescribed curvature, polynomial in x1..x4
//! L = 16              # full-basis truncation degree
//! L_zonal = 512       # zonal truncation degree
//! zonal = false       # solve in the zonal subspace about `continue.axis`
//! seed = 0
//! out = "out"
//!
//! [[rotation]]        # K is replaced by K∘R, R the product of these plane rotations
//! i = 0
//! j = 3
//! angle = 0.7
//!
//! [schedule]
//! tau_start = 0.5
//! tau_end = 0.005
//! steps = 40
//!
//! [solver]
//! rtol = 1e-9
//! max_steps = 50
//! armijo = 1e-4
//! min_step = 0.0009765625
//! grid_factor = 4
//! max_bisections = 8
//! dense = false
//!
//! [analyze]
//! n_starts = 256
//!
//! [validate]
//! taus = [0.04, 0.01, 0.0025]
//! spectral_L = 32
//! spectral_samples = 20
//! square_rtol = 1e-6
//! energy_rtol = 1e-5
//! ratio_band = [0.9, 1.1]
//! min_exponent = 1.0
//! flux_alpha = "x1"
//! flux_deltas = [1e-2, 1e-3, 1e-4]
//! flux_rtol = 1e-2
//! linearity_rtol = 1e-3
//!
//! [solve]
//! tau = 0.2
//!
//! [predict]
//! taus = [0.1, 0.01, 0.001]
//! c_mu = 1.0
//!
//! [continue]
//! axis = [0.0, 0.0, 0.0, 1.0]
//! expected_k = 1
//! ```

use std::ops::Range;
use std::path::PathBuf;

use nirenberg_core::branch::ContinuationOptions;
use nirenberg_core::{AmbientPolynomial, Rotation4, SolverOptions, SpherePoint};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "L_zonal")]
    pub l_zonal: usize,
    pub zonal: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub rotation: Vec<PlaneRotation>,
    pub schedule: Schedule,
    pub solver: SolverConfig,
    pub analyze: AnalyzeConfig,
    pub validate: ValidateConfig,
    pub solve: SolveConfig,
    pub predict: PredictConfig,
    #[serde(rename = "continue")]
    pub continuation: ContinueConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: "x4 + 2".into(),
            l: 16,
            l_zonal: 512,
            zonal: false,
            seed: 0,
            out: PathBuf::from("out"),
            rotation: Vec::new(),
            schedule: Schedule::default(),
            solver: SolverConfig::default(),
            analyze: AnalyzeConfig::default(),
            validate: ValidateConfig::default(),
            solve: SolveConfig::default(),
            predict: PredictConfig::default(),
            continuation: ContinueConfig::default(),
        }
    }
}

/// Rotation by `angle` in the `(x_{i+1}, x_{j+1})` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneRotation {
    pub i: usize,
    pub j: usize,
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub steps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { tau_start: 0.5, tau_end: 0.005, steps: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rtol: f64,
    pub max_steps: usize,
    pub armijo: f64,
    pub min_step: f64,
    pub grid_factor: usize,
    pub max_bisections: usize,
    /// Dense Jacobian in the full basis (small L only).
    pub dense: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        SolverConfig {
            rtol: s.rtol,
            max_steps: s.max_steps,
            armijo: s.armijo,
            min_step: s.min_step,
            grid_factor: s.grid_factor,
            max_bisections: ContinuationOptions::default().max_bisections,
            dense: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub n_starts: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig { n_starts: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub taus: Vec<f64>,
    #[serde(rename = "spectral_L")]
    pub spectral_l: usize,
    pub spectral_samples: usize,
    pub square_rtol: f64,
    pub energy_rtol: f64,
    pub ratio_band: [f64; 2],
    pub min_exponent: f64,
    pub flux_alpha: String,
    pub flux_deltas: Vec<f64>,
    pub flux_rtol: f64,
    pub linearity_rtol: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            taus: vec![0.04, 0.01, 0.0025],
            spectral_l: 32,
            spectral_samples: 20,
            square_rtol: 1e-6,
            energy_rtol: 1e-5,
            ratio_band: [0.9, 1.1],
            min_exponent: 1.0,
            flux_alpha: "x1".into(),
            flux_deltas: vec![1e-2, 1e-3, 1e-4],
            flux_rtol: 1e-2,
            linearity_rtol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub tau: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { tau: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub taus: Vec<f64>,
    pub c_mu: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { taus: vec![0.1, 0.01, 0.001], c_mu: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinueConfig {
    pub axis: [f64; 4],
    pub expected_k: usize,
}

impl Default for ContinueConfig {
    fn default() -> Self {
        ContinueConfig { axis: [0.0, 0.0, 0.0, 1.0], expected_k: 1 }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

/// Byte range of the string value of a top-level key, if it is written on one line.
fn value_span(src: &str, key: &str) -> Option<Range<usize>> {
    let mut offset = 0;
    for line in src.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                let q = line.find('"')?;
                return Some(offset + q + 1..offset + line.len());
            }
        }
        if trimmed.starts_with('[') {
            return None;
        }
        offset += line.len();
    }
    None
}

impl RunConfig {
    /// Parses a config file, reporting errors with line and column.
    pub fn from_toml(src: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            CliError::Config { line, column, message: e.message().trim().to_string() }
        })?;
        cfg.curvature_from(src)?;
        Ok(cfg)
    }

    fn curvature_from(&self, src: &str) -> Result<AmbientPolynomial, CliError> {
        let k: AmbientPolynomial = self.k.parse().map_err(|e| match e {
            nirenberg_core::Error::Parse { message, column } => {
                let (line, col) = value_span(src, "k").map_or((0, column), |s| {
                    let (l, c) = line_col(src, s.start);
                    (l, c + column.saturating_sub(1))
                });
                CliError::Config { line, column: col, message: format!("in k: {message}") }
            }
            other => CliError::from(other),
        })?;
        Ok(k)
    }

    /// The prescribed curvature after the configured rotation.
    pub fn curvature(&self) -> Result<AmbientPolynomial, CliError> {
        let k = self.curvature_from("")?;
        Ok(k.compose_rotation(&self.rotation()?))
    }

    pub fn rotation(&self) -> Result<Rotation4, CliError> {
        let mut r = Rotation4::identity();
        for p in &self.rotation {
            let q = Rotation4::plane(p.i, p.j, p.angle).map_err(|e| CliError::Config {
                line: 0,
                column: 0,
                message: format!("rotation block: {e}"),
            })?;
            r = r.compose(&q);
        }
        Ok(r)
    }

    pub fn axis(&self) -> Result<SpherePoint, CliError> {
        SpherePoint::normalize(self.continuation.axis).map_err(|e| CliError::Config {
            line: 0,
            column: 0,
            message: format!("continue.axis: {e}"),
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        use nirenberg_core::solver::LinearSolver;
        SolverOptions {
            rtol: self.solver.rtol,
            max_steps: self.solver.max_steps,
            armijo: self.solver.armijo,
            min_step: self.solver.min_step,
            grid_factor: self.solver.grid_factor,
            linear: if self.solver.dense { LinearSolver::Dense } else { LinearSolver::Iterative },
            ..SolverOptions::default()
        }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        ContinuationOptions {
            solver: self.solver_options(),
            max_bisections: self.solver.max_bisections,
            expected_k: self.continuation.expected_k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = RunConfig::from_toml(&doc).unwrap();
        let mut expected = RunConfig::default();
        expected.rotation.push(PlaneRotation { i: 0, j: 3, angle: 0.7 });
        assert_eq!(cfg, expected);
    }

    #[test]
    fn unknown_key_is_located() {
        let err = RunConfig::from_toml("k = \"x4 + 2\"\n[solver]\nrtoll = 1e-9\n").unwrap_err();
        match err {
            CliError::Config { line, column, .. } => assert_eq!((line, column), (3, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_expression_is_located() {
        let err = RunConfig::from_toml("seed = 1\nk = \"x4 + * 2\"\n").unwrap_err();
        match err {
            CliError::Config { line, column, message } => {
                assert_eq!(line, 2, "{message}");
                assert!(column > 5, "{column} {message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rotation_composes_planes() {
        let cfg = RunConfig::from_toml("[[rotation]]\ni = 0\nj = 3\nangle = 0.5\n[[rotation]]\ni = 1\nj = 2\nangle = -0.2\n").unwrap();
        let r = cfg.rotation().unwrap();
        let e = Rotation4::plane(0, 3, 0.5).unwrap().compose(&Rotation4::plane(1, 2, -0.2).unwrap());
        let p = SpherePoint::normalize([0.3, -0.2, 0.5, 0.7]).unwrap();
        let (a, b) = (r.apply(&p), e.apply(&p));
        assert!((0..4).all(|i| (a.coords()[i] - b.coords()[i]).abs() < 1e-15));
    }
}
