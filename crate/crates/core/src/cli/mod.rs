//! Configuration-driven runs, diagnostics output, checkpoints, and the
//! verification suites behind the `kahler-flow` binary.

pub mod checkpoint;
pub mod diagnostics;
pub mod runner;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flow::StepControl;
use crate::models::{ModelId, ModelParams};

pub use runner::{resume, run, RunOutcome, RunStatus};
pub use verify::{verify, CheckResult, CheckStatus};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Run,
    VerifyEvolution,
    VerifyChern,
    VerifyBounds,
    VerifyExistence,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Run,
        Suite::VerifyEvolution,
        Suite::VerifyChern,
        Suite::VerifyBounds,
        Suite::VerifyExistence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Run => "run",
            Suite::VerifyEvolution => "verify-evolution",
            Suite::VerifyChern => "verify-chern",
            Suite::VerifyBounds => "verify-bounds",
            Suite::VerifyExistence => "verify-existence",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelId,
    pub params: ModelParams,
    pub dt: f64,
    pub max_dt: f64,
    pub safety: f64,
    pub cfl_constant: f64,
    pub t_max: f64,
    pub sample_interval: f64,
    pub out_dir: PathBuf,
    pub suite: Suite,
    pub checkpoint: Option<PathBuf>,
    /// Write a checkpoint whenever a sample time crosses a multiple of this.
    pub checkpoint_interval: Option<f64>,
}

impl RunConfig {
    pub fn new(model: ModelId) -> Self {
        Self {
            model,
            params: ModelParams::default(),
            dt: 1e-3,
            max_dt: 1e-3,
            safety: 0.9,
            cfl_constant: 0.5,
            t_max: 10.0,
            sample_interval: 0.01,
            out_dir: PathBuf::from("out"),
            suite: Suite::Run,
            checkpoint: None,
            checkpoint_interval: None,
        }
    }

    /// Parses a flat `key = value` file; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut model = None;
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::ConfigInvalid(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "model" {
                model = Some(value.parse::<ModelId>()?);
            } else {
                entries.push((key.to_string(), value.to_string()));
            }
        }
        let model = model.ok_or_else(|| Error::ConfigInvalid("missing key: model".into()))?;
        let mut cfg = Self::new(model);
        let mut max_dt_set = false;
        for (key, value) in entries {
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::ConfigInvalid(format!("{key}: not a number: {value:?}")))
            };
            let int = || -> Result<usize> {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::ConfigInvalid(format!("{key}: not an integer: {value:?}")))
            };
            match key.as_str() {
                "dt" => cfg.dt = num()?,
                "max_dt" => {
                    cfg.max_dt = num()?;
                    max_dt_set = true;
                }
                "safety" => cfg.safety = num()?,
                "cfl_constant" => cfg.cfl_constant = num()?,
                "t_max" => cfg.t_max = num()?,
                "sample_interval" => cfg.sample_interval = num()?,
                "grid_points" => cfg.params.grid_points = Some(int()?),
                "genus" => cfg.params.genus = int()? as u32,
                "v_e" => cfg.params.v_e = num()?,
                "a0" => cfg.params.a0 = num()?,
                "b0" => cfg.params.b0 = num()?,
                "c0" => cfg.params.c0 = num()?,
                "epsilon" => cfg.params.epsilon = num()?,
                "lambda" => cfg.params.lambda = num()?,
                "out" => cfg.out_dir = PathBuf::from(&value),
                "suite" => cfg.suite = value.parse()?,
                "checkpoint" => cfg.checkpoint = Some(PathBuf::from(&value)),
                "checkpoint_interval" => cfg.checkpoint_interval = Some(num()?),
                other => return Err(Error::ConfigInvalid(format!("unknown key {other:?}"))),
            }
        }
        if !max_dt_set {
            cfg.max_dt = cfg.dt;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::ConfigInvalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::ConfigInvalid(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.sample_interval >= self.dt) {
            return Err(Error::ConfigInvalid(format!(
                "sample_interval ({}) must be at least dt ({})",
                self.sample_interval, self.dt
            )));
        }
        if let Some(iv) = self.checkpoint_interval {
            if !(iv > 0.0) {
                return Err(Error::ConfigInvalid("checkpoint_interval must be positive".into()));
            }
        }
        self.step_control().map(|_| ())
    }

    pub fn step_control(&self) -> Result<StepControl> {
        let ctl = StepControl {
            dt: self.dt,
            max_dt: self.max_dt,
            safety: self.safety,
            cfl_constant: self.cfl_constant,
        };
        ctl.check()?;
        Ok(ctl)
    }

    /// Sample times `0, Δ, 2Δ, …`, ending exactly at `t_max`.
    pub fn sample_time(&self, k: usize) -> f64 {
        (k as f64 * self.sample_interval).min(self.t_max)
    }

    pub fn num_samples(&self) -> usize {
        let k = self.t_max / self.sample_interval;
        let last = if (k - k.round()).abs() < 1e-9 { k.round() } else { k.ceil() };
        last as usize + 1
    }
}

/// Thread count for the verification suites, from `KAHLER_FLOW_THREADS`.
pub fn thread_count() -> usize {
    std::env::var("KAHLER_FLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let cfg = RunConfig::parse(
            "# E x Sigma\nmodel = product_E_sigma\ndt = 1e-3\nt_max = 2.5 # trailing\n\nsample_interval = 0.5\na0 = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelId::ProductESigma);
        assert_eq!(cfg.params.a0, 3.0);
        assert_eq!(cfg.num_samples(), 6);
        assert_eq!(cfg.sample_time(5), 2.5);
        assert_eq!(cfg.max_dt, 1e-3);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "dt = 1e-3",
            "model = k3",
            "model = cp2_round\ndt = -1",
            "model = cp2_round\nt_max = 0",
            "model = cp2_round\ndt = 0.1\nsample_interval = 0.01",
            "model = cp2_round\ncolour = blue",
            "model = cp2_round\nsuite = verify-everything",
            "model = cp2_round\njust a line",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn uneven_horizon_ends_on_t_max() {
        let mut cfg = RunConfig::new(ModelId::FlatTorus);
        cfg.t_max = 1.05;
        cfg.sample_interval = 0.1;
        assert_eq!(cfg.num_samples(), 12);
        assert_eq!(cfg.sample_time(11), 1.05);
    }
}
