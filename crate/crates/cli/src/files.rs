//! On-disk formats for intermediate results and report envelopes.

use std::fs;
use std::path::Path;

use dynfl::instance::Instance;
use dynfl::lp::{Dims, FractionalSolution, LpCostBreakdown, LpSolution};
use dynfl::preprocess::PreprocessedSolution;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// LP optimum with `x`, `y`, `z` as nested arrays in instance order:
/// `x[t][i][j]`, `y[t][i]`, `z[t][i][j]` for `t < T - 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub x: Vec<Vec<Vec<f64>>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
    pub opening: f64,
    pub connection: f64,
    pub switching: f64,
    pub iterations: usize,
    pub instance: Instance,
}

impl SolutionFile {
    pub fn new(instance: &Instance, lp: &LpSolution) -> Self {
        let s = &lp.solution;
        let Dims {
            facilities: nf,
            clients: nc,
            horizon,
        } = s.dims;
        let cube = |steps: usize, get: &dyn Fn(usize, usize, usize) -> f64| {
            (0..steps)
                .map(|t| {
                    (0..nf)
                        .map(|i| (0..nc).map(|j| get(i, j, t)).collect())
                        .collect()
                })
                .collect()
        };
        Self {
            x: cube(horizon, &|i, j, t| s.x(i, j, t)),
            y: (0..horizon)
                .map(|t| (0..nf).map(|i| s.y(i, t)).collect())
                .collect(),
            z: cube(horizon.saturating_sub(1), &|i, j, t| s.z(i, j, t)),
            objective: lp.objective,
            opening: lp.breakdown.opening,
            connection: lp.breakdown.connection,
            switching: lp.breakdown.switching,
            iterations: lp.iterations,
            instance: instance.clone(),
        }
    }

    pub fn breakdown(&self) -> LpCostBreakdown {
        LpCostBreakdown {
            opening: self.opening,
            connection: self.connection,
            switching: self.switching,
        }
    }

    /// Flat solution, with every array checked against the embedded instance.
    pub fn fractional(&self) -> Result<FractionalSolution, String> {
        let dims = Dims::of(&self.instance);
        let Dims {
            facilities: nf,
            clients: nc,
            horizon,
        } = dims;
        let shape = |name: &str, cube: &[Vec<Vec<f64>>], steps: usize| -> Result<(), String> {
            if cube.len() != steps {
                return Err(format!(
                    "{name} has {} time steps, expected {steps}",
                    cube.len()
                ));
            }
            for (t, m) in cube.iter().enumerate() {
                if m.len() != nf {
                    return Err(format!("{name}[{t}] has {} rows, expected {nf}", m.len()));
                }
                if let Some(i) = m.iter().position(|r| r.len() != nc) {
                    return Err(format!(
                        "{name}[{t}][{i}] has {} entries, expected {nc}",
                        m[i].len()
                    ));
                }
            }
            Ok(())
        };
        shape("x", &self.x, horizon)?;
        shape("z", &self.z, horizon.saturating_sub(1))?;
        if self.y.len() != horizon {
            return Err(format!(
                "y has {} time steps, expected {horizon}",
                self.y.len()
            ));
        }
        if let Some(t) = self.y.iter().position(|r| r.len() != nf) {
            return Err(format!(
                "y[{t}] has {} entries, expected {nf}",
                self.y[t].len()
            ));
        }
        let mut out = FractionalSolution::zeros(dims);
        for t in 0..horizon {
            for i in 0..nf {
                out.set_y(i, t, self.y[t][i]);
                for j in 0..nc {
                    out.set_x(i, j, t, self.x[t][i][j]);
                    if t + 1 < horizon {
                        out.set_z(i, j, t, self.z[t][i][j]);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Preprocessed solution together with the instance it belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepFile {
    pub instance: Instance,
    /// Components of the LP optimum the solution was derived from.
    pub lp: LpCostBreakdown,
    /// Components after stabilizing, equal to those of `preprocessed`.
    pub stabilized: LpCostBreakdown,
    pub preprocessed: PreprocessedSolution,
}

/// A preprocessed solution read either from a [`PrepFile`] or as a bare
/// object.
pub struct PrepInput {
    pub instance: Option<Instance>,
    pub preprocessed: PreprocessedSolution,
}

pub fn read_text(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn read_prep(path: &Path) -> Result<PrepInput, String> {
    let text = read_text(path)?;
    let value: Value = parse_json(path, &text)?;
    let err = |e: serde_json::Error| format!("{}: {e}", path.display());
    if value.get("preprocessed").is_some() {
        let file: PrepFile = serde_json::from_value(value).map_err(err)?;
        Ok(PrepInput {
            instance: Some(file.instance),
            preprocessed: file.preprocessed,
        })
    } else {
        Ok(PrepInput {
            instance: None,
            preprocessed: serde_json::from_value(value).map_err(err)?,
        })
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}
