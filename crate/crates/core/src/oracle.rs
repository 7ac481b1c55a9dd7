//! Exact integral optimum for tiny instances by enumerating open sets.
//!
//! Given the open sets `A_1, …, A_T` the objective separates over clients,
//! and each client's best facility sequence is a shortest path over
//! `(t, i ∈ A_t)` with step cost `d_t(i, j)` plus `g` on a change.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

pub const DEFAULT_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(
        "enumeration over (2^{facilities})^{horizon} open-set tuples exceeds the limit {limit}"
    )]
    BudgetExceeded {
        facilities: usize,
        horizon: usize,
        limit: u64,
    },
    #[error("open set at t={t} is empty")]
    EmptyOpenSet { t: usize },
    #[error("open set at t={t} names facility {facility}, but the instance has {num_facilities}")]
    UnknownFacility {
        t: usize,
        facility: usize,
        num_facilities: usize,
    },
    #[error("client {client} out of range for {num_clients} clients")]
    UnknownClient { client: usize, num_clients: usize },
    #[error("open sets span {found} steps, the instance has {expected}")]
    Horizon { found: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    /// Open facilities per time step, ascending.
    pub open: Vec<Vec<usize>>,
    /// Facility sequence over time, per client.
    pub assignment: Vec<Vec<usize>>,
    pub cost: f64,
    /// Number of open-set tuples examined.
    pub enumerated: u64,
}

impl ExactSolution {
    /// Assignment indexed `[t][client]`.
    pub fn assignment_by_time(&self) -> Vec<Vec<usize>> {
        let horizon = self.open.len();
        (0..horizon)
            .map(|t| self.assignment.iter().map(|seq| seq[t]).collect())
            .collect()
    }
}

/// `(2^F)^T`, or `None` on overflow.
pub fn enumeration_size(num_facilities: usize, horizon: usize) -> Option<u128> {
    let per_step = 1u128.checked_shl(u32::try_from(num_facilities).ok()?)?;
    per_step.checked_pow(u32::try_from(horizon).ok()?)
}

pub fn within_limit(instance: &Instance, limit: u64) -> bool {
    enumeration_size(instance.num_facilities(), instance.horizon())
        .is_some_and(|n| n <= u128::from(limit))
}

/// Best facility sequence for `client` given the open sets. Among equal-cost
/// sequences, each step prefers the smallest facility index.
pub fn per_client_dp(
    open_sets: &[Vec<usize>],
    client: usize,
    instance: &Instance,
) -> Result<(Vec<usize>, f64), OracleError> {
    check_open_sets(open_sets, instance)?;
    if client >= instance.num_clients() {
        return Err(OracleError::UnknownClient {
            client,
            num_clients: instance.num_clients(),
        });
    }
    let g = instance.switching_cost();
    let sets: Vec<Vec<usize>> = open_sets
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    // value[t][k]: best cost of steps 0..=t ending at sets[t][k].
    let mut value: Vec<Vec<f64>> = Vec::with_capacity(sets.len());
    let mut pred: Vec<Vec<usize>> = Vec::with_capacity(sets.len());
    for (t, set) in sets.iter().enumerate() {
        let mut row = Vec::with_capacity(set.len());
        let mut back = Vec::with_capacity(set.len());
        for &a in set {
            let d = instance.dist(t, a, client);
            if t == 0 {
                row.push(d);
                back.push(0);
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (kb, &b) in sets[t - 1].iter().enumerate() {
                let c = value[t - 1][kb] + if a == b { 0.0 } else { g };
                if c < best {
                    best = c;
                    arg = kb;
                }
            }
            row.push(best + d);
            back.push(arg);
        }
        value.push(row);
        pred.push(back);
    }

    let last = value.last().expect("horizon is positive");
    let mut k = 0;
    for (kk, &v) in last.iter().enumerate() {
        if v < last[k] {
            k = kk;
        }
    }
    let cost = last[k];
    let mut seq = vec![0; sets.len()];
    for t in (0..sets.len()).rev() {
        seq[t] = sets[t][k];
        k = pred[t][k];
    }
    Ok((seq, cost))
}

fn check_open_sets(open_sets: &[Vec<usize>], instance: &Instance) -> Result<(), OracleError> {
    if open_sets.len() != instance.horizon() {
        return Err(OracleError::Horizon {
            found: open_sets.len(),
            expected: instance.horizon(),
        });
    }
    for (t, set) in open_sets.iter().enumerate() {
        if set.is_empty() {
            return Err(OracleError::EmptyOpenSet { t });
        }
        if let Some(&facility) = set.iter().find(|&&i| i >= instance.num_facilities()) {
            return Err(OracleError::UnknownFacility {
                t,
                facility,
                num_facilities: instance.num_facilities(),
            });
        }
    }
    Ok(())
}

/// Cost of the best assignment for one client, with open sets as bitmasks.
/// Computes the same minimum as [`per_client_dp`].
fn client_cost(
    instance: &Instance,
    masks: &[u64],
    client: usize,
    prev: &mut [f64],
    cur: &mut [f64],
) -> f64 {
    let nf = instance.num_facilities();
    let g = instance.switching_cost();
    for (t, &mask) in masks.iter().enumerate() {
        let best_prev = prev.iter().copied().fold(f64::INFINITY, f64::min);
        for a in 0..nf {
            cur[a] = if mask >> a & 1 == 0 {
                f64::INFINITY
            } else if t == 0 {
                instance.dist(t, a, client)
            } else {
                prev[a].min(best_prev + g) + instance.dist(t, a, client)
            };
        }
        prev.copy_from_slice(cur);
    }
    prev.iter().copied().fold(f64::INFINITY, f64::min)
}

fn decode(mut index: u64, nonempty: u64, masks: &mut [u64]) {
    for m in masks.iter_mut().rev() {
        *m = index % nonempty + 1;
        index /= nonempty;
    }
}

fn tuple_cost(instance: &Instance, masks: &[u64], prev: &mut [f64], cur: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (t, &mask) in masks.iter().enumerate() {
        for i in 0..instance.num_facilities() {
            if mask >> i & 1 == 1 {
                total += instance.open_cost(i, t);
            }
        }
    }
    for j in 0..instance.num_clients() {
        total += client_cost(instance, masks, j, prev, cur);
    }
    total
}

/// Integral optimum over all tuples of nonempty open sets. Tuples are
/// ordered with `t = 0` most significant and masks ascending; the first
/// tuple of minimum cost wins.
pub fn brute_force(instance: &Instance, limit: u64) -> Result<ExactSolution, OracleError> {
    let nf = instance.num_facilities();
    let horizon = instance.horizon();
    if !within_limit(instance, limit) {
        return Err(OracleError::BudgetExceeded {
            facilities: nf,
            horizon,
            limit,
        });
    }
    let nonempty = (1u64 << nf) - 1;
    let count = nonempty.pow(horizon as u32);

    let (best_cost, best_index) = (0..count)
        .into_par_iter()
        .map_init(
            || (vec![0u64; horizon], vec![0.0; nf], vec![0.0; nf]),
            |(masks, prev, cur), index| {
                decode(index, nonempty, masks);
                (tuple_cost(instance, masks, prev, cur), index)
            },
        )
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least one tuple");

    let mut masks = vec![0u64; horizon];
    decode(best_index, nonempty, &mut masks);
    let open: Vec<Vec<usize>> = masks
        .iter()
        .map(|&m| (0..nf).filter(|&i| m >> i & 1 == 1).collect())
        .collect();
    let assignment = (0..instance.num_clients())
        .map(|j| per_client_dp(&open, j, instance).map(|(seq, _)| seq))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExactSolution {
        open,
        assignment,
        cost: best_cost,
        enumerated: count,
    })
}
