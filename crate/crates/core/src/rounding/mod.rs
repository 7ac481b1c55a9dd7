//! Exponential-clock rounding of a preprocessed solution.
//!
//! One set of clocks is sampled per run and shared by every time step; each
//! step is then rounded independently from its support graph. The graph
//! presentation ([`ConnectionGraph`]) is what [`round_all`] uses; the
//! client-by-client presentation in [`sequential`] is kept as a cross-check.

pub mod clocks;
pub mod graph;
pub mod sequential;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clocks::{sample_clocks, Clocks};
pub use graph::{
    build_connection_graph, connection_path, last_facility, round_timestep_graph, ConnectionGraph,
    GraphDefect,
};
pub use sequential::{round_support_sequential, round_timestep_sequential};

use crate::preprocess::PreprocessedSolution;

#[derive(Debug, Error)]
pub enum RoundingError {
    #[error("copy {copy} has nonpositive clock rate {rate}")]
    NonPositiveRate { copy: usize, rate: f64 },
    #[error("client {client} has no facility in its support at t={t}")]
    IsolatedClient { t: usize, client: usize },
    #[error("clocks do not cover every copy and client")]
    ClockCoverage,
    #[error("time step {t} out of range for horizon {horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("connection graph at t={t} is malformed: {defect}")]
    Structure { t: usize, defect: GraphDefect },
}

/// A vertex of a support or connection graph. Facilities are copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Client(usize),
    Facility(usize),
}

/// The support graph `S(x^t)` as adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    pub time: usize,
    /// `F(j)`: copies serving client `j`.
    pub client_neighbors: Vec<Vec<usize>>,
    /// `C(i)`: clients served by copy `i`; empty for copies outside `F^t`.
    pub copy_neighbors: Vec<Vec<usize>>,
}

impl Support {
    pub fn new(prep: &PreprocessedSolution, t: usize) -> Result<Self, RoundingError> {
        if t >= prep.horizon {
            return Err(RoundingError::TimeOutOfRange {
                t,
                horizon: prep.horizon,
            });
        }
        Ok(Self {
            time: t,
            client_neighbors: prep.connections[t].clone(),
            copy_neighbors: prep.clients_by_copy(t),
        })
    }

    pub fn from_client_neighbors(
        time: usize,
        num_copies: usize,
        client_neighbors: Vec<Vec<usize>>,
    ) -> Self {
        let mut copy_neighbors = vec![Vec::new(); num_copies];
        for (j, nbrs) in client_neighbors.iter().enumerate() {
            for &i in nbrs {
                copy_neighbors[i].push(j);
            }
        }
        Self {
            time,
            client_neighbors,
            copy_neighbors,
        }
    }

    pub fn num_clients(&self) -> usize {
        self.client_neighbors.len()
    }

    pub fn num_copies(&self) -> usize {
        self.copy_neighbors.len()
    }
}

/// Copy-level outcome of one time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestepRounding {
    /// Opened copies, ascending.
    pub open: Vec<usize>,
    /// Copy serving each client.
    pub assignment: Vec<usize>,
}

/// Open sets and assignments per time step, in original facility indices,
/// with the copy-level detail alongside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundedSolution {
    pub open: Vec<Vec<usize>>,
    pub assignment: Vec<Vec<usize>>,
    pub copy_open: Vec<Vec<usize>>,
    pub copy_assignment: Vec<Vec<usize>>,
}

impl RoundedSolution {
    pub fn horizon(&self) -> usize {
        self.open.len()
    }

    /// Maps copy-level roundings to originals; an original opens at `t` once
    /// even if several of its copies do.
    pub fn from_copies(prep: &PreprocessedSolution, steps: Vec<TimestepRounding>) -> Self {
        let mut out = Self {
            open: Vec::with_capacity(steps.len()),
            assignment: Vec::with_capacity(steps.len()),
            copy_open: Vec::with_capacity(steps.len()),
            copy_assignment: Vec::with_capacity(steps.len()),
        };
        for step in steps {
            let mut open: Vec<usize> = step.open.iter().map(|&k| prep.back_map[k]).collect();
            open.sort_unstable();
            open.dedup();
            out.open.push(open);
            out.assignment
                .push(step.assignment.iter().map(|&k| prep.back_map[k]).collect());
            out.copy_open.push(step.open);
            out.copy_assignment.push(step.assignment);
        }
        out
    }
}

/// Rounds every time step with the graph presentation and the shared clocks.
pub fn round_all(
    prep: &PreprocessedSolution,
    clocks: &Clocks,
) -> Result<RoundedSolution, RoundingError> {
    let steps = (0..prep.horizon)
        .map(|t| round_timestep_graph(prep, t, clocks))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RoundedSolution::from_copies(prep, steps))
}

/// Samples clocks from `seed` and rounds.
pub fn round_with_seed(
    prep: &PreprocessedSolution,
    seed: u64,
) -> Result<RoundedSolution, RoundingError> {
    round_all(prep, &sample_clocks(prep, seed)?)
}
