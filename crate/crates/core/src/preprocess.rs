//! Preprocessing of an LP solution before rounding.
//!
//! [`stabilize`] makes each client's fractional connection piecewise constant
//! over time at a factor-2 cost increase, so the LP pays at least one
//! switching unit for every change. [`duplicate_facilities`] then splits every
//! facility into copies, each opened by a single fraction `o` whenever it is
//! open, so that every connection value equals the opening value of its copy.
//!
//! Times are 0-based throughout: boundary lists start at `0` and end at `T`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::lp::{Dims, FractionalSolution, LpCostBreakdown, FEAS_TOL};

/// Values closer than this are treated as one threshold; values at or below
/// it are treated as zero.
pub const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("input solution is infeasible (max violation {0})")]
    Infeasible(f64),
    #[error(
        "switching deficit {deficit} is negative: reconnection count exceeds twice the LP switching mass"
    )]
    SwitchingDeficit { deficit: f64 },
    #[error("time step {t} out of range for horizon {horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("malformed preprocessed solution: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

/// Interval boundaries for one client: `b[0] = 0 < b[1] < … < b[last] = T`.
/// The client's connection is constant on every `[b[k], b[k+1])`.
pub type BoundarySet = Vec<usize>;

/// Greedy boundary selection: from the current start `s`, the next boundary is
/// the largest `t ∈ (s, T]` such that `Σ_i min_{s ≤ u < t} x̄[i,client,u] >= 1/2`.
pub fn compute_boundaries(frac: &FractionalSolution, client: usize) -> BoundarySet {
    let Dims {
        facilities: nf,
        horizon,
        ..
    } = frac.dims;
    let mut boundaries = vec![0];
    let mut start = 0;
    while start < horizon {
        let mut mins: Vec<f64> = (0..nf).map(|i| frac.x(i, client, start).max(0.0)).collect();
        let mut next = start + 1;
        for end in start + 1..=horizon {
            // window [start, end)
            if end > start + 1 {
                for (i, m) in mins.iter_mut().enumerate() {
                    *m = m.min(frac.x(i, client, end - 1).max(0.0));
                }
            }
            if mins.iter().sum::<f64>() >= 0.5 {
                next = end;
            }
        }
        boundaries.push(next);
        start = next;
    }
    boundaries
}

/// Interval stabilization. Within each client interval the connection row is
/// the normalized coordinate-wise minimum over the interval; `y` is doubled;
/// `z` starts at the positive part of consecutive differences and the
/// remaining mass up to `2 Σ z̄` is added to the first switching variable.
pub fn stabilize(frac: &FractionalSolution) -> Result<FractionalSolution, PreprocessError> {
    let violation = frac.max_violation();
    if violation > FEAS_TOL {
        return Err(PreprocessError::Infeasible(violation));
    }
    let dims = frac.dims;
    let Dims {
        facilities: nf,
        clients: nc,
        horizon,
    } = dims;
    let mut out = FractionalSolution::zeros(dims);

    for j in 0..nc {
        let bounds = compute_boundaries(frac, j);
        for w in bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mins: Vec<f64> = (0..nf)
                .map(|i| {
                    (lo..hi)
                        .map(|u| frac.x(i, j, u).max(0.0))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let norm: f64 = mins.iter().sum();
            for (i, m) in mins.iter().enumerate() {
                let v = m / norm;
                for t in lo..hi {
                    out.set_x(i, j, t, v);
                }
            }
        }
    }
    for (dst, src) in out.y.iter_mut().zip(&frac.y) {
        *dst = 2.0 * src.max(0.0);
    }

    if horizon > 1 {
        for t in 0..horizon - 1 {
            for i in 0..nf {
                for j in 0..nc {
                    let d = out.x(i, j, t) - out.x(i, j, t + 1);
                    out.set_z(i, j, t, d.max(0.0));
                }
            }
        }
        let target: f64 = 2.0 * frac.z.iter().map(|z| z.max(0.0)).sum::<f64>();
        let current: f64 = out.z.iter().sum();
        let deficit = target - current;
        if deficit < -FEAS_TOL * (1.0 + target) {
            return Err(PreprocessError::SwitchingDeficit { deficit });
        }
        if deficit > 0.0 {
            let v = out.z(0, 0, 0) + deficit;
            out.set_z(0, 0, 0, v);
        }
    }
    Ok(out)
}

/// Clients whose fractional connection row differs between `t` and `t + 1`
/// by more than `FEAS_TOL` in some entry.
pub fn change_set(frac: &FractionalSolution, t: usize) -> Result<BTreeSet<usize>, PreprocessError> {
    let Dims {
        facilities: nf,
        clients: nc,
        horizon,
    } = frac.dims;
    if t + 1 >= horizon {
        return Err(PreprocessError::TimeOutOfRange { t, horizon });
    }
    Ok((0..nc)
        .filter(|&j| (0..nf).any(|i| (frac.x(i, j, t) - frac.x(i, j, t + 1)).abs() > FEAS_TOL))
        .collect())
}

/// A solution over facility copies. Copy `k` belongs to original facility
/// `back_map[k]` and is opened by fraction `o[k]` whenever it is active.
/// Memberships are explicit sorted copy-index sets, so `x[k,j,t] = o[k]` iff
/// `k ∈ connections[t][j]` and `y[k,t] = o[k]` iff `k ∈ active[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedSolution {
    pub num_facilities: usize,
    pub num_clients: usize,
    pub horizon: usize,
    pub back_map: Vec<usize>,
    pub o: Vec<f64>,
    /// Cumulative opening of copies of the same original up to and including
    /// this copy.
    pub threshold: Vec<f64>,
    pub active: Vec<Vec<usize>>,
    pub connections: Vec<Vec<Vec<usize>>>,
    /// Switching variables of the original facilities, `[t][i][j]`.
    pub z: Vec<f64>,
}

impl PreprocessedSolution {
    pub fn num_copies(&self) -> usize {
        self.o.len()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            facilities: self.num_facilities,
            clients: self.num_clients,
            horizon: self.horizon,
        }
    }

    pub fn is_connected(&self, copy: usize, client: usize, t: usize) -> bool {
        self.connections[t][client].binary_search(&copy).is_ok()
    }

    pub fn is_active(&self, copy: usize, t: usize) -> bool {
        self.active[t].binary_search(&copy).is_ok()
    }

    pub fn x(&self, copy: usize, client: usize, t: usize) -> f64 {
        if self.is_connected(copy, client, t) {
            self.o[copy]
        } else {
            0.0
        }
    }

    pub fn y(&self, copy: usize, t: usize) -> f64 {
        if self.is_active(copy, t) {
            self.o[copy]
        } else {
            0.0
        }
    }

    /// `C(i)` at time `t` for every copy: the clients connected to it.
    pub fn clients_by_copy(&self, t: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_copies()];
        for (j, conn) in self.connections[t].iter().enumerate() {
            for &k in conn {
                out[k].push(j);
            }
        }
        out
    }

    /// `F^t`: copies serving at least one client at `t`.
    pub fn serving_copies(&self, t: usize) -> BTreeSet<usize> {
        self.connections[t].iter().flatten().copied().collect()
    }

    /// Clients whose connection set differs between `t` and `t + 1`.
    pub fn change_set(&self, t: usize) -> Result<BTreeSet<usize>, PreprocessError> {
        if t + 1 >= self.horizon {
            return Err(PreprocessError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok((0..self.num_clients)
            .filter(|&j| self.connections[t][j] != self.connections[t + 1][j])
            .collect())
    }

    /// Single-step solution for time `t`, sharing all copies.
    pub fn time_slice(&self, t: usize) -> Result<Self, PreprocessError> {
        if t >= self.horizon {
            return Err(PreprocessError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(Self {
            horizon: 1,
            active: vec![self.active[t].clone()],
            connections: vec![self.connections[t].clone()],
            z: Vec::new(),
            ..self.clone()
        })
    }

    /// Structural checks: index ranges, sorted sets, `connections ⊆ active`,
    /// positive `o`, and `Σ o = 1` over every client's connection set.
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: String| Err(PreprocessError::Malformed(m));
        let n = self.num_copies();
        if self.back_map.len() != n || self.threshold.len() != n {
            return bad("back_map, o and threshold lengths differ".into());
        }
        if self.back_map.iter().any(|&i| i >= self.num_facilities) {
            return bad("back_map refers to an unknown facility".into());
        }
        if let Some(k) = self.o.iter().position(|&o| !(o > 0.0 && o.is_finite())) {
            return bad(format!(
                "copy {k} has nonpositive opening fraction {}",
                self.o[k]
            ));
        }
        if self.active.len() != self.horizon || self.connections.len() != self.horizon {
            return bad("per-time arrays do not match the horizon".into());
        }
        if self.z.len() != self.dims().z_len() {
            return bad(format!(
                "z has {} entries, expected {}",
                self.z.len(),
                self.dims().z_len()
            ));
        }
        let sorted = |s: &[usize]| s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&k| k < n);
        for t in 0..self.horizon {
            if !sorted(&self.active[t]) {
                return bad(format!("active set at t={t} is not a sorted set of copies"));
            }
            if self.connections[t].len() != self.num_clients {
                return bad(format!("connections at t={t} do not cover every client"));
            }
            for (j, conn) in self.connections[t].iter().enumerate() {
                if !sorted(conn) {
                    return bad(format!(
                        "connection set of client {j} at t={t} is malformed"
                    ));
                }
                if let Some(&k) = conn.iter().find(|&&k| !self.is_active(k, t)) {
                    return bad(format!(
                        "client {j} at t={t} is connected to inactive copy {k}"
                    ));
                }
                let mass: f64 = conn.iter().map(|&k| self.o[k]).sum();
                if (mass - 1.0).abs() > FEAS_TOL {
                    return bad(format!(
                        "client {j} at t={t} has connection mass {mass}, expected 1"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Back-mapped `(x, y, z)` over the original facilities.
    pub fn aggregate(&self) -> FractionalSolution {
        let dims = self.dims();
        let mut out = FractionalSolution::zeros(dims);
        let value = |set: &[usize], i: usize| -> f64 {
            let mine: Vec<usize> = set
                .iter()
                .copied()
                .filter(|&k| self.back_map[k] == i)
                .collect();
            match (mine.first(), mine.last()) {
                (Some(&first), Some(&last))
                    if self.is_first_copy(first) && last - first + 1 == mine.len() =>
                {
                    self.threshold[last]
                }
                _ => mine.iter().map(|&k| self.o[k]).sum(),
            }
        };
        for t in 0..self.horizon {
            for i in 0..self.num_facilities {
                out.set_y(i, t, value(&self.active[t], i));
                for j in 0..self.num_clients {
                    out.set_x(i, j, t, value(&self.connections[t][j], i));
                }
            }
        }
        out.z.clone_from(&self.z);
        out
    }

    fn is_first_copy(&self, k: usize) -> bool {
        k == 0 || self.back_map[k - 1] != self.back_map[k]
    }

    /// Cost with every copy charged its original's opening cost and distances.
    pub fn cost_breakdown(&self, instance: &Instance) -> Result<LpCostBreakdown, PreprocessError> {
        if self.dims() != Dims::of(instance) {
            return Err(PreprocessError::Dimensions(format!(
                "solution {:?} vs instance {:?}",
                self.dims(),
                Dims::of(instance)
            )));
        }
        let mut out = LpCostBreakdown {
            opening: 0.0,
            connection: 0.0,
            switching: instance.switching_cost() * self.z.iter().sum::<f64>(),
        };
        for t in 0..self.horizon {
            for &k in &self.active[t] {
                out.opening += instance.open_cost(self.back_map[k], t) * self.o[k];
            }
            for (j, conn) in self.connections[t].iter().enumerate() {
                for &k in conn {
                    out.connection += instance.dist(t, self.back_map[k], j) * self.o[k];
                }
            }
        }
        Ok(out)
    }
}

/// Sorted, snapped thresholds for one facility: each value is the largest
/// member of a cluster of inputs whose consecutive gaps are at most
/// `SNAP_TOL`.
fn thresholds(mut values: Vec<f64>) -> Vec<f64> {
    values.retain(|&v| v > SNAP_TOL);
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        match out.last_mut() {
            Some(last) if v - *last <= SNAP_TOL => *last = v,
            _ => out.push(v),
        }
    }
    // Slabs above 1 can only come from doubled openings; split them at 1 so
    // every copy keeps o <= 1.
    if out.last().is_some_and(|&v| v > 1.0 + SNAP_TOL)
        && !out.iter().any(|&v| (v - 1.0).abs() <= SNAP_TOL)
    {
        let pos = out.partition_point(|&v| v < 1.0);
        out.insert(pos, 1.0);
    }
    out
}

/// Number of copies (a prefix) realizing value `v` against `thresholds`.
fn level(thresholds: &[f64], v: f64) -> usize {
    if v <= SNAP_TOL {
        0
    } else {
        (thresholds.partition_point(|&th| th < v - SNAP_TOL) + 1).min(thresholds.len())
    }
}

/// Splits each facility at the distinct values of its `x` and `y` entries
/// across all time steps. Copy `k` of a facility has `o = θ_k - θ_{k-1}`; a
/// value `v` is realized by the copies whose cumulative threshold is at most
/// `v`.
pub fn duplicate_facilities(
    frac: &FractionalSolution,
) -> Result<PreprocessedSolution, PreprocessError> {
    let violation = frac.max_violation();
    if violation > FEAS_TOL {
        return Err(PreprocessError::Infeasible(violation));
    }
    let Dims {
        facilities: nf,
        clients: nc,
        horizon,
    } = frac.dims;

    let mut back_map = Vec::new();
    let mut o = Vec::new();
    let mut threshold = Vec::new();
    let mut first_copy = Vec::with_capacity(nf);
    let mut per_facility = Vec::with_capacity(nf);
    for i in 0..nf {
        let mut values = Vec::new();
        for t in 0..horizon {
            values.push(frac.y(i, t));
            values.extend((0..nc).map(|j| frac.x(i, j, t)));
        }
        let th = thresholds(values);
        first_copy.push(back_map.len());
        let mut prev = 0.0;
        for &v in &th {
            back_map.push(i);
            o.push(v - prev);
            threshold.push(v);
            prev = v;
        }
        per_facility.push(th);
    }

    let mut active = vec![Vec::new(); horizon];
    let mut connections = vec![vec![Vec::new(); nc]; horizon];
    for t in 0..horizon {
        for i in 0..nf {
            let th = &per_facility[i];
            let y_level = level(th, frac.y(i, t));
            active[t].extend(first_copy[i]..first_copy[i] + y_level);
            for (j, conn) in connections[t].iter_mut().enumerate() {
                let x_level = level(th, frac.x(i, j, t));
                if x_level > y_level {
                    return Err(PreprocessError::Infeasible(frac.x(i, j, t) - frac.y(i, t)));
                }
                conn.extend(first_copy[i]..first_copy[i] + x_level);
            }
        }
    }

    let out = PreprocessedSolution {
        num_facilities: nf,
        num_clients: nc,
        horizon,
        back_map,
        o,
        threshold,
        active,
        connections,
        z: frac.z.clone(),
    };
    out.validate()?;
    Ok(out)
}

/// Both passes in order.
pub fn preprocess(frac: &FractionalSolution) -> Result<PreprocessedSolution, PreprocessError> {
    duplicate_facilities(&stabilize(frac)?)
}
