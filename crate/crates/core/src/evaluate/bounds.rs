//! Per-step expectation bounds checked against trial statistics.

use serde::{Deserialize, Serialize};

use super::{EvaluateError, TrialStats};
use crate::instance::Instance;
use crate::lp::Dims;
use crate::preprocess::PreprocessedSolution;

/// A check fails only when the empirical mean misses the bound by more than
/// this many standard errors.
pub const SIGMA_THRESHOLD: f64 = 4.0;

/// Relative slack absorbing float error in bounds summed in a different
/// order from the empirical value.
const FLOAT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `empirical ≤ bound + 4σ`
    AtMost,
    /// `|empirical − bound| ≤ 4σ`
    Equal,
    /// `empirical + 4σ ≤ bound`
    WithMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<usize>,
    pub relation: Relation,
    pub empirical: f64,
    pub bound: f64,
    pub sigma: f64,
    /// `(bound − empirical) / sigma`, undefined when `sigma = 0`.
    pub slack_sigma: Option<f64>,
    pub passed: bool,
}

impl BoundCheck {
    pub fn new(name: &str, relation: Relation, empirical: f64, bound: f64, sigma: f64) -> Self {
        let eps = FLOAT_SLACK * (1.0 + bound.abs());
        let margin = SIGMA_THRESHOLD * sigma + eps;
        let passed = match relation {
            Relation::AtMost => empirical <= bound + margin,
            Relation::Equal => (empirical - bound).abs() <= margin,
            Relation::WithMargin => empirical + SIGMA_THRESHOLD * sigma <= bound + eps,
        };
        Self {
            name: name.to_owned(),
            t: None,
            copy: None,
            client: None,
            relation,
            empirical,
            bound,
            sigma,
            slack_sigma: (sigma > 0.0).then(|| (bound - empirical) / sigma),
            passed,
        }
    }

    pub fn at(mut self, t: usize) -> Self {
        self.t = Some(t);
        self
    }

    pub fn copy(mut self, copy: usize) -> Self {
        self.copy = Some(copy);
        self
    }

    pub fn client(mut self, client: usize) -> Self {
        self.client = Some(client);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub trials: u64,
    pub checks: Vec<BoundCheck>,
    pub failures: usize,
    pub structure_violations: u64,
    pub passed: bool,
}

impl BoundReport {
    pub fn new(trials: u64, checks: Vec<BoundCheck>, structure_violations: u64) -> Self {
        let failures = checks.iter().filter(|c| !c.passed).count();
        Self {
            trials,
            failures,
            passed: failures == 0 && structure_violations == 0,
            checks,
            structure_violations,
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Checks, per step, opening ≤ `Σ f y`, connection ≤ `6 Σ d x` and copy
/// switches ≤ `7 |Z^t|`; per serving copy, open frequency = `y`; per support
/// edge, path traversals ≤ `6 x`.
pub fn check_bounds(
    stats: &TrialStats,
    prep: &PreprocessedSolution,
    instance: &Instance,
) -> Result<BoundReport, EvaluateError> {
    if Dims::of(instance) != prep.dims()
        || stats.horizon != prep.horizon
        || stats.num_clients != prep.num_clients
        || stats.num_copies != prep.num_copies()
    {
        return Err(EvaluateError::Mismatch(
            "statistics, preprocessed solution and instance disagree on dimensions".into(),
        ));
    }
    let n = stats.trials as f64;
    let mut checks = Vec::new();
    for t in 0..prep.horizon {
        let opening: f64 = prep.active[t]
            .iter()
            .map(|&k| instance.open_cost(prep.back_map[k], t) * prep.o[k])
            .sum();
        let connection: f64 = prep.connections[t]
            .iter()
            .enumerate()
            .flat_map(|(j, conn)| {
                conn.iter()
                    .map(move |&k| instance.dist(t, prep.back_map[k], j) * prep.o[k])
            })
            .sum();
        let e = &stats.copy_opening[t];
        checks.push(BoundCheck::new("opening", Relation::AtMost, e.mean, opening, e.sigma()).at(t));
        let e = &stats.connection[t];
        checks.push(
            BoundCheck::new(
                "connection",
                Relation::AtMost,
                e.mean,
                6.0 * connection,
                e.sigma(),
            )
            .at(t),
        );
        if t + 1 < prep.horizon {
            let changed = prep.change_set(t)?.len() as f64;
            let e = &stats.copy_switches[t];
            checks.push(
                BoundCheck::new(
                    "switching",
                    Relation::AtMost,
                    e.mean,
                    7.0 * changed,
                    e.sigma(),
                )
                .at(t),
            );
        }
        for k in prep.serving_copies(t) {
            let o = prep.o[k];
            let sigma = (o * (1.0 - o) / n).max(0.0).sqrt();
            let e = &stats.open_frequency[t][k];
            checks.push(
                BoundCheck::new("open_frequency", Relation::Equal, e.mean, o, sigma)
                    .at(t)
                    .copy(k),
            );
        }
        for edge in &stats.edge_traversals[t] {
            let e = &edge.traversals;
            let x = prep.x(edge.copy, edge.client, t);
            checks.push(
                BoundCheck::new(
                    "edge_traversals",
                    Relation::AtMost,
                    e.mean,
                    6.0 * x,
                    e.sigma(),
                )
                .at(t)
                .copy(edge.copy)
                .client(edge.client),
            );
        }
    }
    Ok(BoundReport::new(
        stats.trials,
        checks,
        stats.structure_violations,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::run_trials;
    use crate::instance::generate_drifting;
    use crate::synth::random_preprocessed;

    #[test]
    fn relations() {
        assert!(BoundCheck::new("a", Relation::AtMost, 1.3, 1.0, 0.1).passed);
        assert!(!BoundCheck::new("a", Relation::AtMost, 1.5, 1.0, 0.1).passed);
        assert!(BoundCheck::new("a", Relation::Equal, 0.7, 1.0, 0.1).passed);
        assert!(!BoundCheck::new("a", Relation::Equal, 0.5, 1.0, 0.1).passed);
        assert!(BoundCheck::new("a", Relation::WithMargin, 0.5, 1.0, 0.1).passed);
        assert!(!BoundCheck::new("a", Relation::WithMargin, 0.7, 1.0, 0.1).passed);
        let c = BoundCheck::new("a", Relation::AtMost, 1.0, 1.0, 0.0);
        assert!(c.passed && c.slack_sigma.is_none());
    }

    #[test]
    fn time_constant_prep_has_zero_switching() {
        let prep = random_preprocessed(3, 5, 3, 0.0, 4, 8).unwrap();
        let inst = generate_drifting(3, 5, 3, 0.0, 1.0, 8).unwrap();
        let stats = run_trials(&inst, &prep, 2000, 1).unwrap();
        let report = check_bounds(&stats, &prep, &inst).unwrap();
        for c in report.checks.iter().filter(|c| c.name == "switching") {
            assert_eq!((c.empirical, c.bound), (0.0, 0.0));
        }
        assert!(report.passed, "{:?}", report.failed().collect::<Vec<_>>());
    }

    #[test]
    fn random_preps_pass() {
        for seed in 0..5 {
            let prep = random_preprocessed(3, 6, 3, 0.5, 5, seed).unwrap();
            let inst = generate_drifting(3, 6, 3, 0.2, 1.0, seed).unwrap();
            let stats = run_trials(&inst, &prep, 5000, seed * 1000).unwrap();
            let report = check_bounds(&stats, &prep, &inst).unwrap();
            assert!(report.passed, "{:?}", report.failed().collect::<Vec<_>>());
        }
    }

    #[test]
    fn mismatched_dimensions() {
        let prep = random_preprocessed(3, 5, 2, 0.5, 4, 1).unwrap();
        let other = random_preprocessed(3, 4, 2, 0.5, 4, 1).unwrap();
        let inst = generate_drifting(3, 5, 2, 0.1, 1.0, 1).unwrap();
        let stats = run_trials(&inst, &prep, 10, 0).unwrap();
        assert!(matches!(
            check_bounds(&stats, &other, &inst),
            Err(EvaluateError::Mismatch(_))
        ));
    }
}
