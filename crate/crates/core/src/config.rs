//! TOML run configuration.
//!
//! ```toml
//! n = 1
//! N = 64
//! output_dir = "out"
//! dump_every = 0
//! checks = false
//! A = 10.0
//! B = 5.0
//!
//! [[f]]
//! k = [1, 0]
//! amplitude = 0.5
//!
//! [speed]
//! kind = "log"
//!
//! [policy]
//! scheme = "imex"
//! ```
//!
//! Each `f` or `u0` mode contributes `amplitude · cos(2π k·x + phase)` with
//! `x = (x₁, y₁, x₂, y₂)` truncated to `2n` entries.

use crate::error::{Error, Result};
use crate::flow::{FlowProblem, StepPolicy};
use crate::geometry::{BackgroundMetric, Grid, ScalarField};
use crate::hermitian::CMat;
use crate::identities::GMonitor;
use crate::speed::{SpeedFunction, SpeedSpec};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Constant background metric, `chi = re + i·im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_a() -> f64 {
    GMonitor::default().a
}

fn default_b() -> f64 {
    GMonitor::default().b
}

fn default_check_dt() -> f64 {
    1e-5
}

fn default_check_steps() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub size: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write `u` every this many accepted steps; 0 writes only the final state.
    #[serde(default)]
    pub dump_every: usize,
    /// Run the identity suite after `run`.
    #[serde(default)]
    pub checks: bool,
    #[serde(rename = "A", default = "default_a")]
    pub a: f64,
    #[serde(rename = "B", default = "default_b")]
    pub b: f64,
    /// Step and length of the RK4 trajectory used by the identity suite.
    #[serde(default = "default_check_dt")]
    pub check_dt: f64,
    #[serde(default = "default_check_steps")]
    pub check_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<ChiSpec>,
    pub speed: SpeedSpec,
    #[serde(default)]
    pub policy: StepPolicy,
    #[serde(default)]
    pub f: Vec<Mode>,
    #[serde(default)]
    pub u0: Vec<Mode>,
}

fn bad(key: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { key: key.into(), msg: msg.into() }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| bad("<document>", e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            bad(if key == "." { "<document>".to_string() } else { key }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n, self.size).map_err(|e| {
            bad(if matches!(self.n, 1 | 2) { "N" } else { "n" }, e.to_string())
        })?;
        for (name, modes) in [("f", &self.f), ("u0", &self.u0)] {
            for (i, m) in modes.iter().enumerate() {
                if m.k.len() != 2 * self.n {
                    return Err(bad(format!("{name}[{i}].k"), format!("needs {} entries, got {}", 2 * self.n, m.k.len())));
                }
                if !m.amplitude.is_finite() {
                    return Err(bad(format!("{name}[{i}].amplitude"), "must be finite"));
                }
                if !m.phase.is_finite() {
                    return Err(bad(format!("{name}[{i}].phase"), "must be finite"));
                }
            }
        }
        self.speed.build()?;
        self.policy.validate()?;
        self.monitor()?;
        self.metric()?;
        if !(self.check_dt > 0.0) {
            return Err(bad("check_dt", "must be positive"));
        }
        if self.check_steps < 2 {
            return Err(bad("check_steps", "needs at least 2 steps for a centered difference"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.size)
    }

    pub fn metric(&self) -> Result<BackgroundMetric> {
        let Some(spec) = &self.chi else {
            return Ok(BackgroundMetric::identity(self.n));
        };
        let square = |m: &Vec<Vec<f64>>| m.len() == self.n && m.iter().all(|r| r.len() == self.n);
        if !square(&spec.re) {
            return Err(bad("chi.re", format!("must be {0}x{0}", self.n)));
        }
        let zeros = vec![vec![0.0; self.n]; self.n];
        let im = spec.im.as_ref().unwrap_or(&zeros);
        if !square(im) {
            return Err(bad("chi.im", format!("must be {0}x{0}", self.n)));
        }
        BackgroundMetric::new(self.n, CMat::from_parts(self.n, &spec.re, im)).map_err(|e| bad("chi", e.to_string()))
    }

    pub fn monitor(&self) -> Result<GMonitor> {
        GMonitor::new(self.a, self.b)
    }

    pub fn speed(&self) -> Result<SpeedFunction> {
        self.speed.build()
    }

    pub fn f_field(&self, grid: &Grid) -> Result<ScalarField> {
        cosine_series(grid, &self.f)
    }

    pub fn u0_field(&self, grid: &Grid) -> Result<ScalarField> {
        cosine_series(grid, &self.u0)
    }

    pub fn problem(&self) -> Result<FlowProblem> {
        self.problem_with(self.speed()?)
    }

    /// The configured problem with the speed replaced.
    pub fn problem_with(&self, speed: SpeedFunction) -> Result<FlowProblem> {
        let grid = self.grid()?;
        FlowProblem::new(self.metric()?, self.f_field(&grid)?, speed)
    }
}

/// `Σ amplitude · cos(2π k·x + phase)`.
pub fn cosine_series(grid: &Grid, modes: &[Mode]) -> Result<ScalarField> {
    let axes = grid.axes();
    for m in modes {
        if m.k.len() != axes {
            return Err(Error::GridMismatch(format!("mode {:?} on a grid with {axes} real axes", m.k)));
        }
    }
    ScalarField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|m| {
                let dot: f64 = m.k.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
                m.amplitude * (2.0 * PI * dot + m.phase).cos()
            })
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Scheme;

    const SAMPLE: &str = r#"
n = 2
N = 16
A = 12.0
dump_every = 5

[chi]
re = [[2.0, 0.3], [0.3, 1.0]]
im = [[0.0, 0.1], [-0.1, 0.0]]

[speed]
kind = "power"
a = 2.0

[policy]
scheme = "rk4"
dt_max = 0.01

[[f]]
k = [1, 0, 0, 0]
amplitude = 0.3

[[f]]
k = [0, 0, 0, 1]
amplitude = 0.2
phase = 0.5
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!((cfg.n, cfg.size), (2, 16));
        assert_eq!(cfg.a, 12.0);
        assert_eq!(cfg.b, 5.0);
        assert_eq!(cfg.policy.scheme, Scheme::Rk4);
        assert_eq!(cfg.policy.cfl_safety, 0.25);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert!((cfg.metric().unwrap().det_chi() - (2.0 - 0.09 - 0.01)).abs() < 1e-14);
        assert_eq!(cfg.speed().unwrap().to_string(), "power:2");
    }

    #[test]
    fn round_trip_is_identical() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_toml().unwrap());
    }

    #[test]
    fn cosine_modes_match_direct_evaluation() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let grid = cfg.grid().unwrap();
        let f = cfg.f_field(&grid).unwrap();
        for i in [0, 17, 999, grid.len() - 1] {
            let x = grid.coords(i);
            let want = 0.3 * (2.0 * PI * x[0]).cos() + 0.2 * (2.0 * PI * x[3] + 0.5).cos();
            assert!((f.values()[i] - want).abs() < 1e-15);
        }
        assert_eq!(cfg.u0_field(&grid).unwrap().sup_norm(), 0.0);
    }

    fn key_of(text: &str) -> String {
        match RunConfig::parse(text).unwrap_err() {
            Error::Config { key, .. } => key,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        let base = "n = 1\nN = 64\n[speed]\nkind = \"log\"\n";
        assert_eq!(key_of(&format!("{base}[policy]\ndt_max = \"big\"\n")), "policy.dt_max");
        assert_eq!(key_of(&format!("{base}[policy]\ncfl_safety = 2.0\n")), "policy.cfl_safety");
        assert_eq!(key_of(&format!("{base}[[f]]\nk = [1, 0, 0]\namplitude = 0.1\n")), "f[0].k");
        assert_eq!(key_of("n = 1\nN = 64\n[speed]\nkind = \"cubic\"\n"), "speed.kind");
        assert_eq!(key_of("n = 1\nN = 64\n[speed]\nkind = \"power\"\n"), "speed.a");
        assert_eq!(key_of("n = 3\nN = 64\n[speed]\nkind = \"log\"\n"), "n");
        assert_eq!(key_of("n = 1\nN = 60\n[speed]\nkind = \"log\"\n"), "N");
        assert_eq!(key_of("n = 1\nN = 64\nA = 0.5\n[speed]\nkind = \"log\"\n"), "A");
        assert_eq!(key_of("colour = 1\nn = 1\nN = 64\n[speed]\nkind = \"log\"\n"), "colour");
        assert_eq!(key_of(&format!("{base}colour = 1\n")), "speed.colour");
        assert_eq!(key_of("N = 64\n[speed]\nkind = \"log\"\n"), "<document>");
    }
}
