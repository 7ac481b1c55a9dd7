//! Connection graphs and connection paths.

use serde::{Deserialize, Serialize};

use super::{Clocks, Node, RoundingError, Support, TimestepRounding};
use crate::preprocess::PreprocessedSolution;

/// Every vertex of `F^t ∪ C` has one arc, to its smallest-clock neighbor in
/// the support graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionGraph {
    pub(crate) client_arc: Vec<usize>,
    /// `None` for copies outside `F^t`.
    pub(crate) facility_arc: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphDefect {
    MissingArc(Node),
    ArcOutsideSupport { from: Node, to: Node },
    LongCycle(Vec<Node>),
}

impl std::fmt::Display for GraphDefect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphDefect::MissingArc(v) => write!(f, "{v:?} has no outgoing arc"),
            GraphDefect::ArcOutsideSupport { from, to } => {
                write!(f, "arc {from:?} -> {to:?} is not a support edge")
            }
            GraphDefect::LongCycle(c) => write!(f, "cycle of length {}: {c:?}", c.len()),
        }
    }
}

impl ConnectionGraph {
    pub fn build(support: &Support, clocks: &Clocks) -> Result<Self, RoundingError> {
        if clocks.facility.len() < support.num_copies()
            || clocks.client.len() < support.num_clients()
        {
            return Err(RoundingError::ClockCoverage);
        }
        let mut client_arc = Vec::with_capacity(support.num_clients());
        for (j, nbrs) in support.client_neighbors.iter().enumerate() {
            let best = nbrs
                .iter()
                .copied()
                .min_by(|&a, &b| clocks.cmp_facility(a, b))
                .ok_or(RoundingError::IsolatedClient {
                    t: support.time,
                    client: j,
                })?;
            client_arc.push(best);
        }
        let facility_arc = support
            .copy_neighbors
            .iter()
            .map(|nbrs| {
                nbrs.iter()
                    .copied()
                    .min_by(|&a, &b| clocks.cmp_client(a, b))
            })
            .collect();
        Ok(Self {
            client_arc,
            facility_arc,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.client_arc.len()
    }

    /// Target of the unique outgoing arc, if the vertex is in the graph.
    #[inline]
    pub fn successor(&self, v: Node) -> Option<Node> {
        match v {
            Node::Client(j) => self.client_arc.get(j).map(|&i| Node::Facility(i)),
            Node::Facility(i) => self
                .facility_arc
                .get(i)
                .copied()
                .flatten()
                .map(Node::Client),
        }
    }

    /// Copies on a 2-cycle, ascending.
    pub fn two_cycle_facilities(&self) -> Vec<usize> {
        self.facility_arc
            .iter()
            .enumerate()
            .filter_map(|(i, arc)| arc.filter(|&j| self.client_arc[j] == i).map(|_| i))
            .collect()
    }

    /// Walk from `client` along arcs, stopping before the first revisit.
    pub fn connection_path(&self, client: usize) -> Vec<Node> {
        let mut path = vec![Node::Client(client)];
        let mut cur = Node::Client(client);
        while let Some(next) = self.successor(cur) {
            if path.contains(&next) {
                break;
            }
            path.push(next);
            cur = next;
        }
        path
    }

    /// Checks out-degree one on `F^t ∪ C`, arcs inside the support, and that
    /// every cycle has exactly two arcs.
    pub fn check_structure(&self, support: &Support) -> Result<(), GraphDefect> {
        for (j, &i) in self.client_arc.iter().enumerate() {
            if !support.client_neighbors[j].contains(&i) {
                return Err(GraphDefect::ArcOutsideSupport {
                    from: Node::Client(j),
                    to: Node::Facility(i),
                });
            }
        }
        for (i, arc) in self.facility_arc.iter().enumerate() {
            let in_graph = !support.copy_neighbors[i].is_empty();
            match arc {
                None if in_graph => return Err(GraphDefect::MissingArc(Node::Facility(i))),
                Some(j) if !support.copy_neighbors[i].contains(j) => {
                    return Err(GraphDefect::ArcOutsideSupport {
                        from: Node::Facility(i),
                        to: Node::Client(*j),
                    })
                }
                _ => {}
            }
        }
        // Functional graph: every walk ends in a cycle. Colour 0 = new,
        // 1 = on the current walk, 2 = done.
        let nc = self.client_arc.len();
        let index = |v: Node| match v {
            Node::Client(j) => j,
            Node::Facility(i) => nc + i,
        };
        let mut colour = vec![0u8; nc + self.facility_arc.len()];
        for start in 0..nc {
            let mut walk = Vec::new();
            let mut v = Node::Client(start);
            loop {
                let idx = index(v);
                if colour[idx] == 2 {
                    break;
                }
                if colour[idx] == 1 {
                    let pos = walk.iter().position(|&w| w == v).expect("on walk");
                    let cycle: Vec<Node> = walk[pos..].to_vec();
                    if cycle.len() != 2 {
                        return Err(GraphDefect::LongCycle(cycle));
                    }
                    break;
                }
                colour[idx] = 1;
                walk.push(v);
                v = self.successor(v).ok_or(GraphDefect::MissingArc(v))?;
            }
            for w in walk {
                colour[index(w)] = 2;
            }
        }
        Ok(())
    }

    /// Opens the copies on 2-cycles and assigns each client to the last
    /// facility on its connection path.
    pub fn round(&self) -> TimestepRounding {
        let assignment = (0..self.num_clients())
            .map(|j| last_facility(&self.connection_path(j)))
            .collect();
        TimestepRounding {
            open: self.two_cycle_facilities(),
            assignment,
        }
    }
}

/// The facility appearing latest on a connection path.
pub fn last_facility(path: &[Node]) -> usize {
    path.iter()
        .rev()
        .find_map(|v| match v {
            Node::Facility(i) => Some(*i),
            Node::Client(_) => None,
        })
        .expect("a connection path contains a facility")
}

pub fn build_connection_graph(
    prep: &PreprocessedSolution,
    t: usize,
    clocks: &Clocks,
) -> Result<ConnectionGraph, RoundingError> {
    ConnectionGraph::build(&Support::new(prep, t)?, clocks)
}

pub fn connection_path(client: usize, graph: &ConnectionGraph) -> Vec<Node> {
    graph.connection_path(client)
}

pub fn round_timestep_graph(
    prep: &PreprocessedSolution,
    t: usize,
    clocks: &Clocks,
) -> Result<TimestepRounding, RoundingError> {
    Ok(build_connection_graph(prep, t, clocks)?.round())
}
