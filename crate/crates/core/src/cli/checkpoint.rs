//! Plain-text flow checkpoints.
//!
//! A header of `key = value` lines (model id, time, dimension, grid, run
//! settings, ledger) is followed by a `phi` line and the potential samples,
//! one grid row per line. Floats are written with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::functionals::AccumulatorLedger;
use crate::models::{ModelId, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelId,
    pub t: f64,
    pub n: usize,
    pub points_per_axis: usize,
    pub reduction_dims: usize,
    /// Index of the diagnostics sample taken at `t`.
    pub sample_index: usize,
    pub dt: f64,
    pub sample_interval: f64,
    pub params: ModelParams,
    pub ledger: AccumulatorLedger,
    pub phi: Vec<f64>,
}

const MAGIC: &str = "kahler-flow checkpoint v1";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::CheckpointMismatch(format!("{key}: not a number: {s:?}")))
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::CheckpointMismatch(format!("{key}: not an integer: {s:?}")))
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let l = &self.ledger;
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "model = {}", self.model);
        let _ = writeln!(out, "t = {}", fmt_f64(self.t));
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "grid = {} {}", self.points_per_axis, self.reduction_dims);
        let _ = writeln!(out, "sample_index = {}", self.sample_index);
        let _ = writeln!(out, "dt = {}", fmt_f64(self.dt));
        let _ = writeln!(out, "sample_interval = {}", fmt_f64(self.sample_interval));
        let _ = writeln!(out, "genus = {}", p.genus);
        for (k, v) in [
            ("v_e", p.v_e),
            ("a0", p.a0),
            ("b0", p.b0),
            ("c0", p.c0),
            ("epsilon", p.epsilon),
            ("lambda", p.lambda),
            ("scalar_l2_accum", l.scalar_l2_accum),
            ("ricci_l2_accum", l.ricci_l2_accum),
            ("inf_scalar", l.inf_scalar),
        ] {
            let _ = writeln!(out, "{k} = {}", fmt_f64(v));
        }
        let history: Vec<String> = l
            .e_history
            .iter()
            .zip(&l.abc_history)
            .map(|((t, e), abc)| {
                format!(
                    "{} {} {} {} {}",
                    fmt_f64(*t),
                    fmt_f64(*e),
                    fmt_f64(abc[0]),
                    fmt_f64(abc[1]),
                    fmt_f64(abc[2])
                )
            })
            .collect();
        let _ = writeln!(out, "history = {}", history.join(","));
        let _ = writeln!(out, "phi");
        let row = self.points_per_axis.max(1);
        let row = if self.reduction_dims == 0 { self.phi.len() } else { row };
        for chunk in self.phi.chunks(row.max(1)) {
            let line: Vec<String> = chunk.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::CheckpointMismatch("not a kahler-flow checkpoint".into()));
        }
        let mut header = std::collections::HashMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "phi" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::CheckpointMismatch(format!("malformed header line {line:?}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&str> {
            header
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing header key {k}")))
        };
        let model: ModelId = get("model")?
            .parse()
            .map_err(|_| Error::CheckpointMismatch(format!("unknown model {:?}", header.get("model"))))?;
        let grid: Vec<&str> = get("grid")?.split_whitespace().collect();
        if grid.len() != 2 {
            return Err(Error::CheckpointMismatch("grid needs two integers".into()));
        }
        let params = ModelParams {
            genus: parse_usize("genus", get("genus")?)? as u32,
            v_e: parse_f64("v_e", get("v_e")?)?,
            a0: parse_f64("a0", get("a0")?)?,
            b0: parse_f64("b0", get("b0")?)?,
            c0: parse_f64("c0", get("c0")?)?,
            epsilon: parse_f64("epsilon", get("epsilon")?)?,
            lambda: parse_f64("lambda", get("lambda")?)?,
            grid_points: None,
        };
        let mut ledger = AccumulatorLedger {
            scalar_l2_accum: parse_f64("scalar_l2_accum", get("scalar_l2_accum")?)?,
            ricci_l2_accum: parse_f64("ricci_l2_accum", get("ricci_l2_accum")?)?,
            inf_scalar: parse_f64("inf_scalar", get("inf_scalar")?)?,
            ..Default::default()
        };
        for entry in get("history")?.split(',').filter(|s| !s.trim().is_empty()) {
            let v: Vec<f64> = entry
                .split_whitespace()
                .map(|s| parse_f64("history", s))
                .collect::<Result<_>>()?;
            if v.len() != 5 {
                return Err(Error::CheckpointMismatch(format!("history entry {entry:?}")));
            }
            ledger.record_sample(v[0], v[1], [v[2], v[3], v[4]]);
        }
        let phi: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|s| parse_f64("phi", s))
            .collect::<Result<_>>()?;
        let points_per_axis = parse_usize("grid", grid[0])?;
        let reduction_dims = parse_usize("grid", grid[1])?;
        let mut params = params;
        if reduction_dims > 0 {
            params.grid_points = Some(points_per_axis);
            if phi.len() != points_per_axis.pow(reduction_dims as u32) {
                return Err(Error::CheckpointMismatch(format!(
                    "expected {} potential samples, found {}",
                    points_per_axis.pow(reduction_dims as u32),
                    phi.len()
                )));
            }
        }
        Ok(Self {
            model,
            t: parse_f64("t", get("t")?)?,
            n: parse_usize("n", get("n")?)?,
            points_per_axis,
            reduction_dims,
            sample_index: parse_usize("sample_index", get("sample_index")?)?,
            dt: parse_f64("dt", get("dt")?)?,
            sample_interval: parse_f64("sample_interval", get("sample_interval")?)?,
            params,
            ledger,
            phi,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(phi: Vec<f64>, ppa: usize, dims: usize) -> Checkpoint {
        let mut ledger = AccumulatorLedger {
            scalar_l2_accum: 0.1 + 0.2,
            ricci_l2_accum: std::f64::consts::PI,
            inf_scalar: -1.0 / 3.0,
            ..Default::default()
        };
        ledger.record_sample(0.0, 1e-300, [-1.5, 2.0 / 3.0, 0.0]);
        ledger.record_sample(0.01, 5e-17, [f64::MIN_POSITIVE, -0.0, 7.0]);
        Checkpoint {
            model: ModelId::AbelianPerturbed,
            t: 5.0,
            n: 2,
            points_per_axis: ppa,
            reduction_dims: dims,
            sample_index: 500,
            dt: 0.01,
            sample_interval: 0.01,
            params: ModelParams {
                grid_points: if dims > 0 { Some(ppa) } else { None },
                ..ModelParams::default()
            },
            ledger,
            phi,
        }
    }

    #[test]
    fn infinite_infimum_round_trips() {
        let mut c = sample(vec![1.0, 2.0], 1, 0);
        c.ledger.inf_scalar = f64::INFINITY;
        let back = Checkpoint::from_text(&c.to_text()).unwrap();
        assert_eq!(back.ledger.inf_scalar, f64::INFINITY);
    }

    #[test]
    fn rejects_foreign_text() {
        assert!(matches!(Checkpoint::from_text("hello"), Err(Error::CheckpointMismatch(_))));
        let c = sample(vec![0.0; 64], 8, 2);
        let text = c.to_text().replace("grid = 8 2", "grid = 9 2");
        assert!(matches!(Checkpoint::from_text(&text), Err(Error::CheckpointMismatch(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            bits in proptest::collection::vec(any::<u64>(), 64),
            t in 0.0f64..100.0,
        ) {
            let phi: Vec<f64> = bits
                .iter()
                .map(|b| f64::from_bits(*b))
                .map(|v| if v.is_finite() { v } else { 0.5 })
                .collect();
            let mut c = sample(phi, 8, 2);
            c.t = t;
            let back = Checkpoint::from_text(&c.to_text()).unwrap();
            prop_assert_eq!(back.t.to_bits(), c.t.to_bits());
            for (a, b) in back.phi.iter().zip(&c.phi) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back, c);
        }
    }
}
