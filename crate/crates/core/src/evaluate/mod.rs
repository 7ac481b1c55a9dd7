//! Objective evaluation and Monte Carlo checks of the rounding's expectation
//! bounds.

pub mod bounds;
pub mod perturb;
pub mod report;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bounds::{check_bounds, BoundCheck, BoundReport, Relation, SIGMA_THRESHOLD};
pub use perturb::{perturbation_experiment, PerturbationReport};
pub use report::{approximation_report, ApproximationReport, OracleSummary};
pub use stats::{run_trials, Accumulator, CostEstimate, EdgeStat, Estimate, TrialStats};

use crate::instance::Instance;
use crate::lp::LpError;
use crate::oracle::OracleError;
use crate::preprocess::PreprocessError;
use crate::rounding::{RoundedSolution, RoundingError};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("solution spans {found} time steps, the instance has {expected}")]
    Horizon { found: usize, expected: usize },
    #[error("solution assigns {found} clients at t={t}, the instance has {expected}")]
    ClientCount {
        t: usize,
        found: usize,
        expected: usize,
    },
    #[error("solution refers to facility {facility} at t={t}, the instance has {num_facilities}")]
    DanglingFacility {
        t: usize,
        facility: usize,
        num_facilities: usize,
    },
    #[error("client {client} is assigned to facility {facility} at t={t}, which is not open")]
    ClosedFacility {
        t: usize,
        client: usize,
        facility: usize,
    },
    #[error("at least one trial is required")]
    NoTrials,
    #[error("instance fails validation with {0} violation(s)")]
    InvalidInstance(usize),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error("inputs differ at client {client}, t={t}, outside the declared set")]
    OutsideDeclared { t: usize, client: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Rounding(#[from] RoundingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub opening: f64,
    pub connection: f64,
    pub switching: f64,
    pub total: f64,
}

/// Objective value of a rounded solution, in original facilities.
pub fn cost(instance: &Instance, sol: &RoundedSolution) -> Result<CostBreakdown, EvaluateError> {
    cost_of(instance, &sol.open, &sol.assignment)
}

/// Objective value of open sets `open[t]` and assignments `assignment[t][j]`.
/// A facility listed twice at one step is charged once.
pub fn cost_of(
    instance: &Instance,
    open: &[Vec<usize>],
    assignment: &[Vec<usize>],
) -> Result<CostBreakdown, EvaluateError> {
    let horizon = instance.horizon();
    let nf = instance.num_facilities();
    for found in [open.len(), assignment.len()] {
        if found != horizon {
            return Err(EvaluateError::Horizon {
                found,
                expected: horizon,
            });
        }
    }
    let mut opening = 0.0;
    let mut connection = 0.0;
    let mut changes = 0usize;
    for t in 0..horizon {
        let mut is_open = vec![false; nf];
        for &i in &open[t] {
            if i >= nf {
                return Err(EvaluateError::DanglingFacility {
                    t,
                    facility: i,
                    num_facilities: nf,
                });
            }
            is_open[i] = true;
        }
        opening += (0..nf)
            .filter(|&i| is_open[i])
            .map(|i| instance.open_cost(i, t))
            .sum::<f64>();
        if assignment[t].len() != instance.num_clients() {
            return Err(EvaluateError::ClientCount {
                t,
                found: assignment[t].len(),
                expected: instance.num_clients(),
            });
        }
        for (j, &i) in assignment[t].iter().enumerate() {
            if i >= nf {
                return Err(EvaluateError::DanglingFacility {
                    t,
                    facility: i,
                    num_facilities: nf,
                });
            }
            if !is_open[i] {
                return Err(EvaluateError::ClosedFacility {
                    t,
                    client: j,
                    facility: i,
                });
            }
            connection += instance.dist(t, i, j);
            if t + 1 < horizon && assignment[t + 1].get(j).is_some_and(|&next| next != i) {
                changes += 1;
            }
        }
    }
    let switching = instance.switching_cost() * changes as f64;
    Ok(CostBreakdown {
        opening,
        connection,
        switching,
        total: opening + connection + switching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_facility(horizon: usize, g: f64, f: f64, d: f64) -> Instance {
        Instance::from_arrays(1, 1, horizon, g, vec![f; horizon], vec![d; horizon]).unwrap()
    }

    #[test]
    fn single_step() {
        let inst = one_facility(1, 0.0, 5.0, 2.0);
        let c = cost_of(&inst, &[vec![0]], &[vec![0]]).unwrap();
        assert_eq!(
            c,
            CostBreakdown {
                opening: 5.0,
                connection: 2.0,
                switching: 0.0,
                total: 7.0
            }
        );
    }

    #[test]
    fn two_steps_without_switch() {
        let inst = one_facility(2, 3.0, 5.0, 1.0);
        let c = cost_of(&inst, &[vec![0], vec![0]], &[vec![0], vec![0]]).unwrap();
        assert_eq!(
            (c.opening, c.connection, c.switching, c.total),
            (10.0, 2.0, 0.0, 12.0)
        );
    }

    #[test]
    fn one_switch_costs_g() {
        let inst = Instance::from_arrays(2, 1, 2, 4.0, vec![1.0; 4], vec![0.0; 4]).unwrap();
        let c = cost_of(&inst, &[vec![0], vec![1]], &[vec![0], vec![1]]).unwrap();
        assert_eq!(c.switching, 4.0);
        assert_eq!(c.total, 6.0);
    }

    #[test]
    fn duplicate_open_entries_are_charged_once() {
        let inst = one_facility(1, 0.0, 5.0, 2.0);
        let c = cost_of(&inst, &[vec![0, 0]], &[vec![0]]).unwrap();
        assert_eq!(c.opening, 5.0);
    }

    #[test]
    fn dangling_and_closed_references() {
        let inst = Instance::from_arrays(2, 1, 1, 0.0, vec![1.0; 2], vec![0.0; 2]).unwrap();
        assert!(matches!(
            cost_of(&inst, &[vec![2]], &[vec![0]]),
            Err(EvaluateError::DanglingFacility { facility: 2, .. })
        ));
        assert!(matches!(
            cost_of(&inst, &[vec![0]], &[vec![1]]),
            Err(EvaluateError::ClosedFacility { facility: 1, .. })
        ));
        assert!(matches!(
            cost_of(&inst, &[vec![0]], &[vec![0, 0]]),
            Err(EvaluateError::ClientCount { .. })
        ));
        assert!(matches!(
            cost_of(&inst, &[vec![0], vec![0]], &[vec![0], vec![0]]),
            Err(EvaluateError::Horizon { .. })
        ));
    }
}
