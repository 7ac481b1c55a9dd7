//! Monte Carlo rounding trials and their aggregated statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvaluateError;
use crate::instance::Instance;
use crate::lp::Dims;
use crate::preprocess::PreprocessedSolution;
use crate::rounding::{last_facility, sample_clocks, ConnectionGraph, Node, Support};

/// Trials per parallel work unit. Chunks are merged in index order, so
/// results do not depend on the thread count.
pub(crate) const CHUNK: u64 = 512;

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self) -> Estimate {
        let std_error = (self.n > 1).then(|| {
            let var = (self.m2 / (self.n - 1) as f64).max(0.0);
            (var / self.n as f64).sqrt()
        });
        Estimate {
            mean: self.mean,
            std_error,
        }
    }
}

/// Sample mean with its standard error; the error is undefined for a
/// single trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: Option<f64>,
}

impl Estimate {
    /// Standard error, with an undefined one read as zero.
    pub fn sigma(&self) -> f64 {
        self.std_error.unwrap_or(0.0)
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            std_error: self.std_error.map(|s| s * factor.abs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub opening: Estimate,
    pub connection: Estimate,
    pub switching: Estimate,
    pub total: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStat {
    pub copy: usize,
    pub client: usize,
    /// Connection paths using the edge in either direction.
    pub traversals: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: u64,
    pub base_seed: u64,
    pub num_copies: usize,
    pub num_clients: usize,
    pub horizon: usize,
    /// `[t][copy]`
    pub open_frequency: Vec<Vec<Estimate>>,
    /// `[t]`, support edges ordered by `(copy, client)`.
    pub edge_traversals: Vec<Vec<EdgeStat>>,
    /// Opening cost per step with every opened copy charged.
    pub copy_opening: Vec<Estimate>,
    /// Opening cost per step with each original charged once.
    pub opening: Vec<Estimate>,
    pub connection: Vec<Estimate>,
    /// Clients whose copy changes between `t` and `t + 1`.
    pub copy_switches: Vec<Estimate>,
    /// Clients whose original facility changes between `t` and `t + 1`.
    pub switches: Vec<Estimate>,
    pub cost: CostEstimate,
    /// Trials with a malformed connection graph or an assignment to an
    /// unopened copy, summed over steps.
    pub structure_violations: u64,
}

pub(crate) struct Sweep {
    pub accumulators: Vec<Accumulator>,
    pub structure_violations: u64,
}

/// Runs `observe` for seeds `base_seed..base_seed + trials` and accumulates
/// the `width` values it writes per trial (zeroed before each call).
pub(crate) fn sweep<F>(
    trials: u64,
    base_seed: u64,
    width: usize,
    observe: F,
) -> Result<Sweep, EvaluateError>
where
    F: Fn(u64, &mut [f64], &mut u64) -> Result<(), EvaluateError> + Sync,
{
    if trials == 0 {
        return Err(EvaluateError::NoTrials);
    }
    let parts = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut accumulators = vec![Accumulator::default(); width];
            let mut obs = vec![0.0; width];
            let mut structure_violations = 0;
            for k in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                obs.fill(0.0);
                observe(
                    base_seed.wrapping_add(k),
                    &mut obs,
                    &mut structure_violations,
                )?;
                for (a, &x) in accumulators.iter_mut().zip(&obs) {
                    a.push(x);
                }
            }
            Ok(Sweep {
                accumulators,
                structure_violations,
            })
        })
        .collect::<Result<Vec<_>, EvaluateError>>()?;
    let mut out = Sweep {
        accumulators: vec![Accumulator::default(); width],
        structure_violations: 0,
    };
    for part in &parts {
        for (a, b) in out.accumulators.iter_mut().zip(&part.accumulators) {
            a.merge(b);
        }
        out.structure_violations += part.structure_violations;
    }
    Ok(out)
}

/// Offsets of each statistic in the flat per-trial observation vector.
struct Layout {
    copies: usize,
    horizon: usize,
    open: usize,
    edges: Vec<usize>,
    copy_opening: usize,
    opening: usize,
    connection: usize,
    copy_switches: usize,
    switches: usize,
    cost: usize,
    width: usize,
}

impl Layout {
    fn new(copies: usize, horizon: usize, edge_counts: &[usize]) -> Self {
        let open = 0;
        let mut next = copies * horizon;
        let edges = edge_counts
            .iter()
            .map(|&n| {
                let at = next;
                next += n;
                at
            })
            .collect();
        let mut take = |n: usize| {
            let at = next;
            next += n;
            at
        };
        let copy_opening = take(horizon);
        let opening = take(horizon);
        let connection = take(horizon);
        let copy_switches = take(horizon - 1);
        let switches = take(horizon - 1);
        let cost = take(4);
        Self {
            copies,
            horizon,
            open,
            edges,
            copy_opening,
            opening,
            connection,
            copy_switches,
            switches,
            cost,
            width: next,
        }
    }

    fn open_slot(&self, t: usize, copy: usize) -> usize {
        self.open + t * self.copies + copy
    }
}

/// Rounds `prep` once per seed in `base_seed..base_seed + trials` and
/// aggregates per-copy, per-edge and per-step statistics. Every connection
/// graph built is structure-checked.
pub fn run_trials(
    instance: &Instance,
    prep: &PreprocessedSolution,
    trials: u64,
    base_seed: u64,
) -> Result<TrialStats, EvaluateError> {
    if Dims::of(instance) != prep.dims() {
        return Err(EvaluateError::Mismatch(format!(
            "instance {:?} vs preprocessed solution {:?}",
            Dims::of(instance),
            prep.dims()
        )));
    }
    let horizon = prep.horizon;
    let nc = prep.num_clients;
    let ncopies = prep.num_copies();
    let supports = (0..horizon)
        .map(|t| Support::new(prep, t))
        .collect::<Result<Vec<_>, _>>()?;
    let edges: Vec<Vec<(usize, usize)>> = supports
        .iter()
        .map(|s| {
            s.copy_neighbors
                .iter()
                .enumerate()
                .flat_map(|(k, cl)| cl.iter().map(move |&j| (k, j)))
                .collect()
        })
        .collect();
    let layout = Layout::new(
        ncopies,
        horizon,
        &edges.iter().map(Vec::len).collect::<Vec<_>>(),
    );
    // edge_slot[t][copy * nc + client]
    let edge_slot: Vec<Vec<usize>> = edges
        .iter()
        .enumerate()
        .map(|(t, list)| {
            let mut slot = vec![usize::MAX; ncopies * nc];
            for (e, &(k, j)) in list.iter().enumerate() {
                slot[k * nc + j] = layout.edges[t] + e;
            }
            slot
        })
        .collect();
    let g = instance.switching_cost();

    let observe = |seed: u64, obs: &mut [f64], violations: &mut u64| {
        let clocks = sample_clocks(prep, seed)?;
        let mut prev: Option<Vec<usize>> = None;
        let mut opened_original = vec![false; prep.num_facilities];
        let (mut opening, mut connection, mut changes) = (0.0, 0.0, 0usize);
        for (t, support) in supports.iter().enumerate() {
            let graph = ConnectionGraph::build(support, &clocks)?;
            if graph.check_structure(support).is_err() {
                *violations += 1;
            }
            let open = graph.two_cycle_facilities();
            let mut is_open = vec![false; ncopies];
            opened_original.fill(false);
            for &k in &open {
                is_open[k] = true;
                obs[layout.open_slot(t, k)] = 1.0;
                let f = instance.open_cost(prep.back_map[k], t);
                obs[layout.copy_opening + t] += f;
                if !opened_original[prep.back_map[k]] {
                    opened_original[prep.back_map[k]] = true;
                    obs[layout.opening + t] += f;
                }
            }
            let mut assignment = Vec::with_capacity(nc);
            for j in 0..nc {
                let path = graph.connection_path(j);
                for w in path.windows(2) {
                    let (k, c) = match (w[0], w[1]) {
                        (Node::Client(c), Node::Facility(k))
                        | (Node::Facility(k), Node::Client(c)) => (k, c),
                        _ => unreachable!("connection paths alternate"),
                    };
                    obs[edge_slot[t][k * nc + c]] += 1.0;
                }
                let k = last_facility(&path);
                if !is_open[k] {
                    *violations += 1;
                }
                obs[layout.connection + t] += instance.dist(t, prep.back_map[k], j);
                assignment.push(k);
            }
            if let Some(prev) = &prev {
                let s = t - 1;
                for (&a, &b) in prev.iter().zip(&assignment) {
                    if a != b {
                        obs[layout.copy_switches + s] += 1.0;
                        if prep.back_map[a] != prep.back_map[b] {
                            obs[layout.switches + s] += 1.0;
                            changes += 1;
                        }
                    }
                }
            }
            opening += obs[layout.opening + t];
            connection += obs[layout.connection + t];
            prev = Some(assignment);
        }
        let switching = g * changes as f64;
        obs[layout.cost] = opening;
        obs[layout.cost + 1] = connection;
        obs[layout.cost + 2] = switching;
        obs[layout.cost + 3] = opening + connection + switching;
        Ok(())
    };
    let sweep = sweep(trials, base_seed, layout.width, observe)?;

    let est = |slot: usize| sweep.accumulators[slot].estimate();
    let per_step = |start: usize, n: usize| (start..start + n).map(est).collect::<Vec<_>>();
    Ok(TrialStats {
        trials,
        base_seed,
        num_copies: ncopies,
        num_clients: nc,
        horizon,
        open_frequency: (0..horizon)
            .map(|t| (0..ncopies).map(|k| est(layout.open_slot(t, k))).collect())
            .collect(),
        edge_traversals: edges
            .iter()
            .enumerate()
            .map(|(t, list)| {
                list.iter()
                    .enumerate()
                    .map(|(e, &(copy, client))| EdgeStat {
                        copy,
                        client,
                        traversals: est(layout.edges[t] + e),
                    })
                    .collect()
            })
            .collect(),
        copy_opening: per_step(layout.copy_opening, layout.horizon),
        opening: per_step(layout.opening, layout.horizon),
        connection: per_step(layout.connection, layout.horizon),
        copy_switches: per_step(layout.copy_switches, layout.horizon - 1),
        switches: per_step(layout.switches, layout.horizon - 1),
        cost: CostEstimate {
            opening: est(layout.cost),
            connection: est(layout.cost + 1),
            switching: est(layout.cost + 2),
            total: est(layout.cost + 3),
        },
        structure_violations: sweep.structure_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::cost;
    use crate::lp::FractionalSolution;
    use crate::preprocess::duplicate_facilities;
    use crate::rounding::round_with_seed;
    use crate::synth::random_fractional;

    fn instance_for(prep: &PreprocessedSolution, seed: u64) -> Instance {
        crate::instance::generate_drifting(
            prep.num_facilities,
            prep.num_clients,
            prep.horizon,
            0.2,
            0.7,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn accumulator_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|k| ((k * 37) % 101) as f64 / 7.0).collect();
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        let mut c = Accumulator::default();
        for (k, &x) in xs.iter().enumerate() {
            a.push(x);
            if k < 300 {
                b.push(x)
            } else {
                c.push(x)
            }
        }
        b.merge(&c);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        for acc in [a, b] {
            let e = acc.estimate();
            assert!((e.mean - mean).abs() < 1e-12);
            assert!((e.std_error.unwrap() - (var / n).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_trial_matches_single_rounding() {
        let frac = random_fractional(3, 5, 3, 0.5, 4, 2);
        let prep = duplicate_facilities(&frac).unwrap();
        let inst = instance_for(&prep, 2);
        let stats = run_trials(&inst, &prep, 1, 77).unwrap();
        let sol = round_with_seed(&prep, 77).unwrap();
        let c = cost(&inst, &sol).unwrap();
        assert_eq!(stats.cost.total.std_error, None);
        assert!((stats.cost.total.mean - c.total).abs() <= 1e-12 * c.total.max(1.0));
        assert!((stats.cost.opening.mean - c.opening).abs() <= 1e-12 * c.opening.max(1.0));
        for t in 0..3 {
            for k in 0..prep.num_copies() {
                let open = sol.copy_open[t].contains(&k);
                assert_eq!(
                    stats.open_frequency[t][k].mean,
                    if open { 1.0 } else { 0.0 }
                );
            }
        }
        assert_eq!(stats.structure_violations, 0);
    }

    #[test]
    fn two_equal_copies_open_half_the_time() {
        // one client, two copies with o = 1/2 each
        let mut frac = FractionalSolution::zeros(Dims {
            facilities: 2,
            clients: 1,
            horizon: 1,
        });
        for i in 0..2 {
            frac.set_x(i, 0, 0, 0.5);
            frac.set_y(i, 0, 0.5);
        }
        let prep = duplicate_facilities(&frac).unwrap();
        assert_eq!(prep.o, vec![0.5, 0.5]);
        let inst = Instance::from_arrays(2, 1, 1, 0.0, vec![1.0; 2], vec![1.0; 2]).unwrap();
        let n = 20_000;
        let stats = run_trials(&inst, &prep, n, 5).unwrap();
        let sigma = (0.25f64 / n as f64).sqrt();
        for k in 0..2 {
            assert!((stats.open_frequency[0][k].mean - 0.5).abs() <= 4.0 * sigma);
        }
    }

    #[test]
    fn deterministic_in_seed_and_trials() {
        let prep = duplicate_facilities(&random_fractional(3, 6, 3, 0.4, 5, 9)).unwrap();
        let inst = instance_for(&prep, 9);
        let a = run_trials(&inst, &prep, 3 * CHUNK + 17, 100).unwrap();
        let b = run_trials(&inst, &prep, 3 * CHUNK + 17, 100).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = single.install(|| run_trials(&inst, &prep, 3 * CHUNK + 17, 100).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn std_error_shrinks_with_trials() {
        let prep = duplicate_facilities(&random_fractional(3, 6, 2, 0.4, 5, 4)).unwrap();
        let inst = instance_for(&prep, 4);
        let a = run_trials(&inst, &prep, 4000, 0).unwrap();
        let b = run_trials(&inst, &prep, 8000, 0).unwrap();
        let ratio = a.cost.total.sigma() / b.cost.total.sigma();
        assert!((ratio - 2f64.sqrt()).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn zero_trials_rejected() {
        let prep = duplicate_facilities(&random_fractional(2, 2, 1, 0.0, 2, 1)).unwrap();
        let inst = instance_for(&prep, 1);
        assert!(matches!(
            run_trials(&inst, &prep, 0, 0),
            Err(EvaluateError::NoTrials)
        ));
    }
}
