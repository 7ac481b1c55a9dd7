//! End-to-end run: relaxation, preprocessing, rounding trials and ratios.

use serde::{Deserialize, Serialize};

use super::{
    check_bounds, run_trials, BoundCheck, BoundReport, CostEstimate, Estimate, EvaluateError,
    Relation,
};
use crate::instance::Instance;
use crate::lp::{lp_cost_breakdown, solve_instance, LpCostBreakdown};
use crate::oracle::{brute_force, within_limit};
use crate::preprocess::{duplicate_facilities, stabilize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub cost: f64,
    pub enumerated: u64,
    /// `E[ALG] / OPT`, undefined when `OPT = 0`.
    pub ratio: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRatios {
    pub opening: Option<Estimate>,
    pub connection: Option<Estimate>,
    pub switching: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub trials: u64,
    pub seed: u64,
    pub lp: LpCostBreakdown,
    pub lp_iterations: usize,
    pub stabilized: LpCostBreakdown,
    pub preprocessed: LpCostBreakdown,
    pub num_copies: usize,
    /// `Σ z` after stabilizing.
    pub switching_mass: f64,
    /// `Σ_t |Z^t|` after preprocessing.
    pub changed_clients: usize,
    pub algorithm: CostEstimate,
    /// `E[ALG] / LP`, undefined when the LP optimum is 0.
    pub ratio: Option<Estimate>,
    pub component_ratios: ComponentRatios,
    pub oracle: Option<OracleSummary>,
    /// Preprocessing contracts and end-to-end ratio checks.
    pub checks: Vec<BoundCheck>,
    /// Per-step bounds on the preprocessed solution.
    pub bounds: BoundReport,
    pub passed: bool,
}

fn ratio(e: Estimate, denominator: f64) -> Option<Estimate> {
    (denominator > 0.0).then(|| e.scaled(1.0 / denominator))
}

/// Solves the relaxation, stabilizes and duplicates, runs `trials` roundings
/// from `seed`, and compares the mean cost against the LP optimum (and the
/// exact optimum when `(2^F)^T ≤ oracle_limit`).
pub fn approximation_report(
    instance: &Instance,
    trials: u64,
    seed: u64,
    tol: f64,
    oracle_limit: u64,
) -> Result<ApproximationReport, EvaluateError> {
    let validation = instance.validate();
    if !validation.passed() {
        return Err(EvaluateError::InvalidInstance(validation.violations.len()));
    }
    let lp = solve_instance(instance, tol)?;
    let stable = stabilize(&lp.solution)?;
    let stabilized = lp_cost_breakdown(&stable, instance)?;
    let prep = duplicate_facilities(&stable)?;
    let preprocessed = prep.cost_breakdown(instance)?;
    let changed_clients = (0..prep.horizon.saturating_sub(1))
        .map(|t| prep.change_set(t).map(|s| s.len()))
        .sum::<Result<usize, _>>()?;
    let switching_mass: f64 = stable.z.iter().sum();

    let stats = run_trials(instance, &prep, trials, seed)?;
    let bounds = check_bounds(&stats, &prep, instance)?;
    let alg = stats.cost;
    let lp_cost = lp.breakdown;

    let mut checks = vec![
        BoundCheck::new(
            "stabilized_opening",
            Relation::AtMost,
            stabilized.opening,
            2.0 * lp_cost.opening,
            0.0,
        ),
        BoundCheck::new(
            "stabilized_connection",
            Relation::AtMost,
            stabilized.connection,
            2.0 * lp_cost.connection,
            0.0,
        ),
        BoundCheck::new(
            "stabilized_switching",
            Relation::AtMost,
            stabilized.switching,
            2.0 * lp_cost.switching,
            0.0,
        ),
        BoundCheck::new(
            "changed_clients",
            Relation::AtMost,
            changed_clients as f64,
            switching_mass,
            0.0,
        ),
        BoundCheck::new(
            "duplicated_cost",
            Relation::Equal,
            preprocessed.total(),
            stabilized.total(),
            0.0,
        ),
        BoundCheck::new(
            "approximation",
            Relation::WithMargin,
            alg.total.mean,
            14.0 * lp_cost.total(),
            alg.total.sigma(),
        ),
        BoundCheck::new(
            "opening_ratio",
            Relation::AtMost,
            alg.opening.mean,
            2.0 * lp_cost.opening,
            alg.opening.sigma(),
        ),
        BoundCheck::new(
            "connection_ratio",
            Relation::AtMost,
            alg.connection.mean,
            12.0 * lp_cost.connection,
            alg.connection.sigma(),
        ),
        BoundCheck::new(
            "switching_ratio",
            Relation::AtMost,
            alg.switching.mean,
            14.0 * lp_cost.switching,
            alg.switching.sigma(),
        ),
    ];

    let oracle = if within_limit(instance, oracle_limit) {
        let opt = brute_force(instance, oracle_limit)?;
        checks.push(BoundCheck::new(
            "lp_below_optimum",
            Relation::AtMost,
            lp.objective,
            opt.cost,
            0.0,
        ));
        checks.push(BoundCheck::new(
            "approximation_vs_optimum",
            Relation::WithMargin,
            alg.total.mean,
            14.0 * opt.cost,
            alg.total.sigma(),
        ));
        Some(OracleSummary {
            cost: opt.cost,
            enumerated: opt.enumerated,
            ratio: ratio(alg.total, opt.cost),
        })
    } else {
        None
    };

    let passed = checks.iter().all(|c| c.passed) && bounds.passed;
    Ok(ApproximationReport {
        trials,
        seed,
        lp: lp_cost,
        lp_iterations: lp.iterations,
        stabilized,
        preprocessed,
        num_copies: prep.num_copies(),
        switching_mass,
        changed_clients,
        algorithm: alg,
        ratio: ratio(alg.total, lp_cost.total()),
        component_ratios: ComponentRatios {
            opening: ratio(alg.opening, lp_cost.opening),
            connection: ratio(alg.connection, lp_cost.connection),
            switching: ratio(alg.switching, lp_cost.switching),
        },
        oracle,
        checks,
        bounds,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_drifting;
    use crate::oracle::DEFAULT_LIMIT;

    #[test]
    fn forced_solution_has_ratio_one() {
        for horizon in 1..4 {
            let inst = Instance::from_arrays(
                1,
                1,
                horizon,
                2.0,
                vec![3.0; horizon],
                (0..horizon).map(|t| t as f64 + 0.5).collect(),
            )
            .unwrap();
            let r = approximation_report(&inst, 200, 0, 1e-9, DEFAULT_LIMIT).unwrap();
            let ratio = r.ratio.unwrap();
            assert!((ratio.mean - 1.0).abs() <= 1e-12, "{}", ratio.mean);
            assert_eq!(ratio.sigma(), 0.0);
            assert!(r.passed);
        }
    }

    #[test]
    fn optimum_ratio_is_at_most_lp_ratio() {
        for seed in 0..3 {
            let inst = generate_drifting(3, 4, 2, 0.3, 0.5, seed).unwrap();
            let r = approximation_report(&inst, 2000, seed, 1e-9, DEFAULT_LIMIT).unwrap();
            let opt = r.oracle.as_ref().unwrap();
            assert!(opt.ratio.unwrap().mean <= r.ratio.unwrap().mean + 1e-9);
            assert!(
                r.passed,
                "{:?}",
                r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn oracle_skipped_above_limit() {
        let inst = generate_drifting(3, 4, 2, 0.3, 0.5, 1).unwrap();
        let r = approximation_report(&inst, 100, 0, 1e-9, 10).unwrap();
        assert!(r.oracle.is_none());
    }
}
