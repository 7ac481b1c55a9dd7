//! Client-by-client presentation of the opening and connecting step.

use super::{Clocks, RoundingError, Support, TimestepRounding};
use crate::preprocess::PreprocessedSolution;

/// Clients are processed by increasing clock. Client `j` picks its
/// smallest-clock facility `i`; if `j` is the smallest-clock client of `i`,
/// `i` opens and serves `j`, otherwise `j` follows that client.
pub fn round_support_sequential(
    support: &Support,
    clocks: &Clocks,
) -> Result<TimestepRounding, RoundingError> {
    let nc = support.num_clients();
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by(|&a, &b| clocks.cmp_client(a, b));

    let mut assignment: Vec<Option<usize>> = vec![None; nc];
    let mut open = Vec::new();
    for j in order {
        let i = support.client_neighbors[j]
            .iter()
            .copied()
            .min_by(|&a, &b| clocks.cmp_facility(a, b))
            .ok_or(RoundingError::IsolatedClient {
                t: support.time,
                client: j,
            })?;
        let leader = support.copy_neighbors[i]
            .iter()
            .copied()
            .min_by(|&a, &b| clocks.cmp_client(a, b))
            .expect("copy adjacent to j has a neighbor");
        if leader == j {
            open.push(i);
            assignment[j] = Some(i);
        } else {
            assignment[j] = Some(assignment[leader].expect("leader has a smaller clock"));
        }
    }
    open.sort_unstable();
    open.dedup();
    Ok(TimestepRounding {
        open,
        assignment: assignment
            .into_iter()
            .map(|a| a.expect("assigned"))
            .collect(),
    })
}

pub fn round_timestep_sequential(
    prep: &PreprocessedSolution,
    t: usize,
    clocks: &Clocks,
) -> Result<TimestepRounding, RoundingError> {
    round_support_sequential(&Support::new(prep, t)?, clocks)
}
