//! The dynamic facility location LP relaxation and its solution.
//!
//! Variables are `y[i,t]`, `x[i,j,t]` and `z[i,j,t]` for `t < T-1`
//! (0-based time), all nonnegative. Rows are, in order:
//!
//! * `Σ_i x[i,j,t] = 1` for every `(j,t)`,
//! * `x[i,j,t] <= y[i,t]` for every `(i,j,t)`,
//! * `z[i,j,t] >= x[i,j,t] - x[i,j,t+1]` for every `(i,j,t<T-1)`.

mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

/// Default absolute tolerance on residuals and reduced costs.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Feasibility tolerance used when checking fractional solutions.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
    #[error("relaxation reported infeasible (phase one residual {0})")]
    Infeasible(f64),
    #[error("relaxation reported unbounded")]
    Unbounded,
    #[error("basis matrix became singular")]
    Singular,
    #[error("primal residual {residual} on row {row} exceeds tolerance {tol}")]
    Residual { row: usize, residual: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Problem dimensions shared by every solution type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub facilities: usize,
    pub clients: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn of(instance: &Instance) -> Self {
        Self {
            facilities: instance.num_facilities(),
            clients: instance.num_clients(),
            horizon: instance.horizon(),
        }
    }

    pub fn y_len(&self) -> usize {
        self.facilities * self.horizon
    }

    pub fn x_len(&self) -> usize {
        self.facilities * self.clients * self.horizon
    }

    pub fn z_len(&self) -> usize {
        self.facilities * self.clients * self.horizon.saturating_sub(1)
    }

    #[inline]
    pub fn y_index(&self, i: usize, t: usize) -> usize {
        t * self.facilities + i
    }

    /// Index into `x` (or `z`) storage: `[t][i][j]`.
    #[inline]
    pub fn x_index(&self, i: usize, j: usize, t: usize) -> usize {
        (t * self.facilities + i) * self.clients + j
    }
}

/// Column layout: all `y`, then all `x`, then all `z`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    dims: Dims,
    objective: Vec<f64>,
    rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_columns(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn y_col(&self, i: usize, t: usize) -> usize {
        self.dims.y_index(i, t)
    }

    pub fn x_col(&self, i: usize, j: usize, t: usize) -> usize {
        self.dims.y_len() + self.dims.x_index(i, j, t)
    }

    pub fn z_col(&self, i: usize, j: usize, t: usize) -> usize {
        debug_assert!(t + 1 < self.dims.horizon);
        self.dims.y_len() + self.dims.x_len() + self.dims.x_index(i, j, t)
    }

    pub fn solve(&self, tol: f64) -> Result<LpSolution, LpError> {
        solve(self, tol)
    }
}

pub fn build_relaxation(instance: &Instance) -> LinearProgram {
    let dims = Dims::of(instance);
    let (nf, nc, horizon) = (dims.facilities, dims.clients, dims.horizon);
    let mut lp = LinearProgram {
        dims,
        objective: vec![0.0; dims.y_len() + dims.x_len() + dims.z_len()],
        rows: Vec::new(),
    };
    for t in 0..horizon {
        for i in 0..nf {
            let c = lp.y_col(i, t);
            lp.objective[c] = instance.open_cost(i, t);
            for j in 0..nc {
                let c = lp.x_col(i, j, t);
                lp.objective[c] = instance.dist(t, i, j);
                if t + 1 < horizon {
                    let c = lp.z_col(i, j, t);
                    lp.objective[c] = instance.switching_cost();
                }
            }
        }
    }
    for t in 0..horizon {
        for j in 0..nc {
            lp.rows.push(Constraint {
                coefficients: (0..nf).map(|i| (lp.x_col(i, j, t), 1.0)).collect(),
                sense: Sense::Eq,
                rhs: 1.0,
            });
        }
    }
    for t in 0..horizon {
        for i in 0..nf {
            for j in 0..nc {
                lp.rows.push(Constraint {
                    coefficients: vec![(lp.x_col(i, j, t), 1.0), (lp.y_col(i, t), -1.0)],
                    sense: Sense::Le,
                    rhs: 0.0,
                });
            }
        }
    }
    for t in 0..horizon.saturating_sub(1) {
        for i in 0..nf {
            for j in 0..nc {
                lp.rows.push(Constraint {
                    coefficients: vec![
                        (lp.z_col(i, j, t), 1.0),
                        (lp.x_col(i, j, t), -1.0),
                        (lp.x_col(i, j, t + 1), 1.0),
                    ],
                    sense: Sense::Ge,
                    rhs: 0.0,
                });
            }
        }
    }
    lp
}

/// Fractional `(x, y, z)` stored densely; `x` and `z` are `[t][i][j]`,
/// `y` is `[t][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    pub dims: Dims,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl FractionalSolution {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            x: vec![0.0; dims.x_len()],
            y: vec![0.0; dims.y_len()],
            z: vec![0.0; dims.z_len()],
        }
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize, t: usize) -> f64 {
        self.x[self.dims.x_index(i, j, t)]
    }

    #[inline]
    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.y[self.dims.y_index(i, t)]
    }

    #[inline]
    pub fn z(&self, i: usize, j: usize, t: usize) -> f64 {
        self.z[self.dims.x_index(i, j, t)]
    }

    pub fn set_x(&mut self, i: usize, j: usize, t: usize, v: f64) {
        let k = self.dims.x_index(i, j, t);
        self.x[k] = v;
    }

    pub fn set_y(&mut self, i: usize, t: usize, v: f64) {
        let k = self.dims.y_index(i, t);
        self.y[k] = v;
    }

    pub fn set_z(&mut self, i: usize, j: usize, t: usize, v: f64) {
        let k = self.dims.x_index(i, j, t);
        self.z[k] = v;
    }

    pub fn cost_breakdown(&self, instance: &Instance) -> Result<LpCostBreakdown, LpError> {
        lp_cost_breakdown(self, instance)
    }

    /// Largest violation of the relaxation's constraints (including
    /// nonnegativity).
    pub fn max_violation(&self) -> f64 {
        let Dims {
            facilities: nf,
            clients: nc,
            horizon,
        } = self.dims;
        let mut worst: f64 = 0.0;
        for v in self.x.iter().chain(&self.y).chain(&self.z) {
            worst = worst.max(-v);
        }
        for t in 0..horizon {
            for j in 0..nc {
                let s: f64 = (0..nf).map(|i| self.x(i, j, t)).sum();
                worst = worst.max((s - 1.0).abs());
                for i in 0..nf {
                    worst = worst.max(self.x(i, j, t) - self.y(i, t));
                    if t + 1 < horizon {
                        worst = worst.max(self.x(i, j, t) - self.x(i, j, t + 1) - self.z(i, j, t));
                    }
                }
            }
        }
        worst
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpCostBreakdown {
    pub opening: f64,
    pub connection: f64,
    pub switching: f64,
}

impl LpCostBreakdown {
    pub fn total(&self) -> f64 {
        self.opening + self.connection + self.switching
    }
}

/// Opening `Σ f_i^t y_i^t`, connection `Σ d_t(i,j) x_ij^t`, switching `g Σ z_ij^t`.
pub fn lp_cost_breakdown(
    solution: &FractionalSolution,
    instance: &Instance,
) -> Result<LpCostBreakdown, LpError> {
    let dims = Dims::of(instance);
    if solution.dims != dims
        || solution.x.len() != dims.x_len()
        || solution.y.len() != dims.y_len()
        || solution.z.len() != dims.z_len()
    {
        return Err(LpError::Dimensions(format!(
            "solution {:?} vs instance {:?}",
            solution.dims, dims
        )));
    }
    let mut out = LpCostBreakdown {
        opening: 0.0,
        connection: 0.0,
        switching: 0.0,
    };
    for t in 0..dims.horizon {
        for i in 0..dims.facilities {
            out.opening += instance.open_cost(i, t) * solution.y(i, t);
            for j in 0..dims.clients {
                out.connection += instance.dist(t, i, j) * solution.x(i, j, t);
            }
        }
    }
    out.switching = instance.switching_cost() * solution.z.iter().sum::<f64>();
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub solution: FractionalSolution,
    pub objective: f64,
    pub breakdown: LpCostBreakdown,
    pub iterations: usize,
}

/// Solves the relaxation to an optimal vertex.
pub fn solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    let result = simplex::minimize(lp.num_columns(), &lp.objective, &lp.rows, tol)?;
    let values = result.values;
    for (r, row) in lp.rows.iter().enumerate() {
        let lhs: f64 = row.coefficients.iter().map(|&(c, a)| a * values[c]).sum();
        let residual = match row.sense {
            Sense::Eq => (lhs - row.rhs).abs(),
            Sense::Le => (lhs - row.rhs).max(0.0),
            Sense::Ge => (row.rhs - lhs).max(0.0),
        };
        if residual > tol {
            return Err(LpError::Residual {
                row: r,
                residual,
                tol,
            });
        }
    }
    let dims = lp.dims;
    let (ny, nx) = (dims.y_len(), dims.x_len());
    let solution = FractionalSolution {
        dims,
        y: values[..ny].to_vec(),
        x: values[ny..ny + nx].to_vec(),
        z: values[ny + nx..].to_vec(),
    };
    let breakdown = breakdown_from_objective(lp, &values);
    Ok(LpSolution {
        solution,
        objective: result.objective,
        breakdown,
        iterations: result.iterations,
    })
}

fn breakdown_from_objective(lp: &LinearProgram, values: &[f64]) -> LpCostBreakdown {
    let (ny, nx) = (lp.dims.y_len(), lp.dims.x_len());
    let dot =
        |range: std::ops::Range<usize>| -> f64 { range.map(|c| lp.objective[c] * values[c]).sum() };
    LpCostBreakdown {
        opening: dot(0..ny),
        connection: dot(ny..ny + nx),
        switching: dot(ny + nx..values.len()),
    }
}

/// Builds and solves the relaxation of `instance`.
pub fn solve_instance(instance: &Instance, tol: f64) -> Result<LpSolution, LpError> {
    solve(&build_relaxation(instance), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_drifting;
    use proptest::prelude::*;

    fn single(f: f64, d: f64, horizon: usize, g: f64) -> Instance {
        Instance::from_arrays(1, 1, horizon, g, vec![f; horizon], vec![d; horizon]).unwrap()
    }

    #[test]
    fn single_pair_counts() {
        let lp = build_relaxation(&single(5.0, 2.0, 1, 0.0));
        assert_eq!(lp.num_columns(), 2);
        assert_eq!(lp.rows().len(), 2);
        assert_eq!(lp.rows()[0].sense, Sense::Eq);
        assert_eq!(lp.rows()[1].sense, Sense::Le);
    }

    #[test]
    fn column_count_formula() {
        let inst = generate_drifting(2, 3, 2, 0.1, 1.0, 1).unwrap();
        let lp = build_relaxation(&inst);
        assert_eq!(lp.num_columns(), 4 + 12 + 6);
        // 3*2 assignment rows, 2*3*2 opening rows, 2*3*1 switching rows
        assert_eq!(lp.rows().len(), 6 + 12 + 6);
    }

    #[test]
    fn single_step_has_no_switching() {
        let inst = generate_drifting(3, 4, 1, 0.0, 1.0, 1).unwrap();
        let lp = build_relaxation(&inst);
        assert_eq!(lp.num_columns(), 3 + 12);
        assert!(lp.rows().iter().all(|r| r.sense != Sense::Ge));
    }

    #[test]
    fn objective_coefficients_are_costs() {
        let inst = generate_drifting(2, 2, 3, 0.2, 4.5, 3).unwrap();
        let lp = build_relaxation(&inst);
        assert_eq!(lp.objective()[lp.y_col(1, 2)], inst.open_cost(1, 2));
        assert_eq!(lp.objective()[lp.x_col(1, 0, 2)], inst.dist(2, 1, 0));
        assert_eq!(lp.objective()[lp.z_col(0, 1, 1)], 4.5);
    }

    #[test]
    fn forced_single_pair_solution() {
        let inst = single(5.0, 2.0, 1, 0.0);
        let sol = solve_instance(&inst, DEFAULT_TOL).unwrap();
        assert_eq!(sol.solution.x(0, 0, 0), 1.0);
        assert_eq!(sol.solution.y(0, 0), 1.0);
        assert!((sol.objective - 7.0).abs() < 1e-12);
        let b = lp_cost_breakdown(&sol.solution, &inst).unwrap();
        assert_eq!((b.opening, b.connection, b.switching), (5.0, 2.0, 0.0));
    }

    #[test]
    fn colocated_facilities_open_cheap_one() {
        let inst = Instance::from_arrays(2, 1, 1, 0.0, vec![1.0, 10.0], vec![0.0, 0.0]).unwrap();
        let sol = solve_instance(&inst, DEFAULT_TOL).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.solution.y(0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_solution_breakdown() {
        let inst = generate_drifting(2, 2, 2, 0.1, 1.0, 5).unwrap();
        let zero = FractionalSolution::zeros(Dims::of(&inst));
        let b = lp_cost_breakdown(&zero, &inst).unwrap();
        assert_eq!((b.opening, b.connection, b.switching), (0.0, 0.0, 0.0));
    }

    #[test]
    fn breakdown_dimension_mismatch() {
        let inst = generate_drifting(2, 2, 2, 0.1, 1.0, 5).unwrap();
        let other = generate_drifting(2, 3, 2, 0.1, 1.0, 5).unwrap();
        let zero = FractionalSolution::zeros(Dims::of(&other));
        assert!(matches!(
            lp_cost_breakdown(&zero, &inst),
            Err(LpError::Dimensions(_))
        ));
    }

    #[test]
    fn identical_metrics_need_no_switching() {
        let inst = generate_drifting(3, 4, 2, 0.0, 1.0, 21).unwrap();
        let sol = solve_instance(&inst, DEFAULT_TOL).unwrap();
        assert!(sol.solution.z.iter().all(|&z| z <= DEFAULT_TOL));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solutions_are_feasible_and_consistent(
            nf in 1usize..4, nc in 1usize..5, horizon in 1usize..4,
            drift in 0.0f64..0.4, g in 0.0f64..2.0, seed in any::<u64>(),
        ) {
            let inst = generate_drifting(nf, nc, horizon, drift, g, seed).unwrap();
            let sol = solve_instance(&inst, DEFAULT_TOL).unwrap();
            prop_assert!(sol.solution.is_feasible(DEFAULT_TOL));
            let b = lp_cost_breakdown(&sol.solution, &inst).unwrap();
            prop_assert!((b.total() - sol.objective).abs() <= 1e-9);
        }

        #[test]
        fn objective_is_homogeneous(seed in any::<u64>(), scale in 0.1f64..20.0) {
            let inst = generate_drifting(3, 3, 2, 0.2, 0.7, seed).unwrap();
            let base = solve_instance(&inst, DEFAULT_TOL).unwrap().objective;
            let scaled = solve_instance(&inst.scaled(scale), DEFAULT_TOL).unwrap().objective;
            prop_assert!((scaled - scale * base).abs() <= 1e-8 * scale * base.abs().max(1.0));
        }
    }
}
