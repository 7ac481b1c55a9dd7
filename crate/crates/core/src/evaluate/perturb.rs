//! Shared-clock comparison of two solutions over the same copies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::stats::sweep;
use super::{BoundCheck, Estimate, EvaluateError, Relation};
use crate::preprocess::PreprocessedSolution;
use crate::rounding::{last_facility, sample_clocks, ConnectionGraph, Support};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub trials: u64,
    pub seed: u64,
    /// Clients whose connection sets differ, per step.
    pub changed: Vec<Vec<usize>>,
    /// Clients whose connection paths differ, per step.
    pub differing_paths: Vec<Estimate>,
    /// Clients assigned to different copies, per step.
    pub differing_assignments: Vec<Estimate>,
    pub checks: Vec<BoundCheck>,
    pub structure_violations: u64,
    pub passed: bool,
}

fn check_compatible(
    a: &PreprocessedSolution,
    b: &PreprocessedSolution,
) -> Result<(), EvaluateError> {
    let mismatch = |what: &str| {
        Err(EvaluateError::Mismatch(format!(
            "the two solutions differ in {what}"
        )))
    };
    if a.num_clients != b.num_clients {
        return mismatch("client count");
    }
    if a.horizon != b.horizon {
        return mismatch("horizon");
    }
    if a.back_map != b.back_map || a.o != b.o {
        return mismatch("facility copies");
    }
    Ok(())
}

/// Rounds both solutions with one clock sample per trial and counts, per
/// step, the clients whose connection paths (and assignments) differ. With a
/// declared set, connection sets must agree outside it.
pub fn perturbation_experiment(
    a: &PreprocessedSolution,
    b: &PreprocessedSolution,
    declared: Option<&BTreeSet<usize>>,
    trials: u64,
    seed: u64,
) -> Result<PerturbationReport, EvaluateError> {
    check_compatible(a, b)?;
    let horizon = a.horizon;
    let nc = a.num_clients;
    let changed: Vec<Vec<usize>> = (0..horizon)
        .map(|t| {
            (0..nc)
                .filter(|&j| a.connections[t][j] != b.connections[t][j])
                .collect()
        })
        .collect();
    if let Some(k) = declared {
        for (t, set) in changed.iter().enumerate() {
            if let Some(&client) = set.iter().find(|j| !k.contains(j)) {
                return Err(EvaluateError::OutsideDeclared { t, client });
            }
        }
    }
    let supports = |p: &PreprocessedSolution| {
        (0..horizon)
            .map(|t| Support::new(p, t))
            .collect::<Result<Vec<_>, _>>()
    };
    let (sa, sb) = (supports(a)?, supports(b)?);

    let observe = |s: u64, obs: &mut [f64], violations: &mut u64| {
        let clocks = sample_clocks(a, s)?;
        for t in 0..horizon {
            let ga = ConnectionGraph::build(&sa[t], &clocks)?;
            let gb = ConnectionGraph::build(&sb[t], &clocks)?;
            *violations += u64::from(ga.check_structure(&sa[t]).is_err());
            *violations += u64::from(gb.check_structure(&sb[t]).is_err());
            for j in 0..nc {
                let (pa, pb) = (ga.connection_path(j), gb.connection_path(j));
                if pa != pb {
                    obs[2 * t] += 1.0;
                    if last_facility(&pa) != last_facility(&pb) {
                        obs[2 * t + 1] += 1.0;
                    }
                }
            }
        }
        Ok(())
    };
    let sw = sweep(trials, seed, 2 * horizon, observe)?;

    let differing_paths: Vec<Estimate> = (0..horizon)
        .map(|t| sw.accumulators[2 * t].estimate())
        .collect();
    let differing_assignments = (0..horizon)
        .map(|t| sw.accumulators[2 * t + 1].estimate())
        .collect();
    let checks: Vec<BoundCheck> = differing_paths
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let bound = 7.0 * changed[t].len() as f64;
            BoundCheck::new(
                "differing_paths",
                Relation::AtMost,
                e.mean,
                bound,
                e.sigma(),
            )
            .at(t)
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed) && sw.structure_violations == 0;
    Ok(PerturbationReport {
        trials,
        seed,
        changed,
        differing_paths,
        differing_assignments,
        checks,
        structure_violations: sw.structure_violations,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{perturbed_pair, random_preprocessed};

    #[test]
    fn identical_inputs_never_differ() {
        let prep = random_preprocessed(3, 6, 2, 0.5, 4, 3).unwrap();
        let r = perturbation_experiment(&prep, &prep, None, 1000, 0).unwrap();
        for e in &r.differing_paths {
            assert_eq!(e.mean, 0.0);
            assert_eq!(e.std_error, Some(0.0));
        }
        assert!(r.changed.iter().all(Vec::is_empty));
        assert!(r.passed);
    }

    #[test]
    fn single_change_within_bound() {
        for seed in 0..5 {
            let (a, b, k) = perturbed_pair(3, 8, 1, 5, seed).unwrap();
            let r = perturbation_experiment(&a, &b, Some(&k), 5000, seed).unwrap();
            assert_eq!(r.changed[0], k.iter().copied().collect::<Vec<_>>());
            // the changed client's own path differs often but not always
            assert!(r.differing_paths[0].mean > 0.0);
            assert!(r.differing_assignments[0].mean <= r.differing_paths[0].mean);
            assert!(r.passed, "{:?}", r.checks);
        }
    }

    #[test]
    fn undeclared_difference_is_rejected() {
        let (a, b, k) = perturbed_pair(3, 6, 2, 4, 1).unwrap();
        let first: BTreeSet<usize> = k.iter().take(1).copied().collect();
        assert!(matches!(
            perturbation_experiment(&a, &b, Some(&first), 10, 0),
            Err(EvaluateError::OutsideDeclared { .. })
        ));
    }

    #[test]
    fn different_copies_are_rejected() {
        let a = random_preprocessed(3, 6, 1, 0.0, 4, 1).unwrap();
        let b = random_preprocessed(3, 6, 1, 0.0, 4, 2).unwrap();
        if a.o != b.o {
            assert!(matches!(
                perturbation_experiment(&a, &b, None, 10, 0),
                Err(EvaluateError::Mismatch(_))
            ));
        }
    }
}
