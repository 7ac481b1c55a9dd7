//! Dense revised primal simplex with Bland's rule and a two-phase start.
//!
//! The basis inverse is kept explicitly and updated by elementary row
//! operations after each pivot; it is recomputed from scratch every
//! `max(64, m)` pivots and once more before the final solution is read off.

use super::{Constraint, LpError, Sense};

const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct SimplexResult {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Column kinds in the standard-form tableau, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Structural,
    Slack,
    Artificial,
}

struct StandardForm {
    /// Sparse columns `(row, coefficient)`.
    columns: Vec<Vec<(usize, f64)>>,
    kinds: Vec<ColumnKind>,
    rhs: Vec<f64>,
    initial_basis: Vec<usize>,
}

impl StandardForm {
    fn build(num_vars: usize, rows: &[Constraint]) -> Self {
        let m = rows.len();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_vars];
        let mut kinds = vec![ColumnKind::Structural; num_vars];
        let mut rhs = Vec::with_capacity(m);
        let mut initial_basis = vec![usize::MAX; m];
        let mut needs_artificial = Vec::new();

        for (r, row) in rows.iter().enumerate() {
            // Normalize to rhs >= 0; rows `a x >= 0` become `-a x <= 0`.
            let flip = row.rhs < 0.0 || (row.rhs == 0.0 && row.sense == Sense::Ge);
            let sign = if flip { -1.0 } else { 1.0 };
            let sense = match (row.sense, flip) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            for &(col, a) in &row.coefficients {
                columns[col].push((r, sign * a));
            }
            rhs.push(sign * row.rhs);
            match sense {
                Sense::Le => {
                    initial_basis[r] = columns.len();
                    columns.push(vec![(r, 1.0)]);
                    kinds.push(ColumnKind::Slack);
                }
                Sense::Ge => {
                    columns.push(vec![(r, -1.0)]);
                    kinds.push(ColumnKind::Slack);
                    needs_artificial.push(r);
                }
                Sense::Eq => needs_artificial.push(r),
            }
        }
        for r in needs_artificial {
            initial_basis[r] = columns.len();
            columns.push(vec![(r, 1.0)]);
            kinds.push(ColumnKind::Artificial);
        }
        Self {
            columns,
            kinds,
            rhs,
            initial_basis,
        }
    }
}

struct Tableau<'a> {
    form: &'a StandardForm,
    m: usize,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Row-major `m × m` basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_reinvert: usize,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn new(form: &'a StandardForm) -> Self {
        let m = form.rhs.len();
        let mut binv = vec![0.0; m * m];
        for k in 0..m {
            binv[k * m + k] = 1.0;
        }
        let mut in_basis = vec![false; form.columns.len()];
        for &b in &form.initial_basis {
            in_basis[b] = true;
        }
        Self {
            form,
            m,
            basis: form.initial_basis.clone(),
            in_basis,
            binv,
            xb: form.rhs.clone(),
            since_reinvert: 0,
            iterations: 0,
        }
    }

    fn reinvert(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut mat = vec![0.0; m * m];
        for (k, &col) in self.basis.iter().enumerate() {
            for &(r, a) in &self.form.columns[col] {
                mat[r * m + k] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for k in 0..m {
            inv[k * m + k] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, mat[r * m + c].abs()))
                .fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if best < 1e-12 {
                return Err(LpError::Singular);
            }
            if p != c {
                for k in 0..m {
                    mat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = mat[c * m + c];
            for k in 0..m {
                mat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = mat[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        mat[r * m + k] -= f * mat[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        // Row k of B^{-1} corresponds to basis position k.
        self.binv = inv;
        for k in 0..m {
            self.xb[k] = (0..m)
                .map(|r| self.binv[k * m + r] * self.form.rhs[r])
                .sum();
        }
        self.since_reinvert = 0;
        Ok(())
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut pi = vec![0.0; m];
        for k in 0..m {
            let cb = cost[self.basis[k]];
            if cb != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (p, b) in pi.iter_mut().zip(row) {
                    *p += cb * b;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, cost: &[f64], pi: &[f64], col: usize) -> f64 {
        cost[col]
            - self.form.columns[col]
                .iter()
                .map(|&(r, a)| pi[r] * a)
                .sum::<f64>()
    }

    fn ftran(&self, col: usize) -> Vec<f64> {
        let m = self.m;
        let mut u = vec![0.0; m];
        for &(r, a) in &self.form.columns[col] {
            for (k, uk) in u.iter_mut().enumerate() {
                *uk += self.binv[k * m + r] * a;
            }
        }
        u
    }

    fn pivot(&mut self, leave_pos: usize, enter: usize, u: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let up = u[leave_pos];
        for k in 0..m {
            self.binv[leave_pos * m + k] /= up;
        }
        self.xb[leave_pos] /= up;
        let (prow, xp) = (
            self.binv[leave_pos * m..(leave_pos + 1) * m].to_vec(),
            self.xb[leave_pos],
        );
        for k in 0..m {
            if k == leave_pos || u[k] == 0.0 {
                continue;
            }
            let f = u[k];
            let row = &mut self.binv[k * m..(k + 1) * m];
            for (b, p) in row.iter_mut().zip(&prow) {
                *b -= f * p;
            }
            self.xb[k] -= f * xp;
        }
        self.in_basis[self.basis[leave_pos]] = false;
        self.in_basis[enter] = true;
        self.basis[leave_pos] = enter;
        self.iterations += 1;
        self.since_reinvert += 1;
        if self.since_reinvert >= m.max(64) {
            self.reinvert()?;
        }
        Ok(())
    }

    /// Runs Bland's rule to optimality for `cost`. Columns for which
    /// `allowed` is false never enter.
    fn optimize(
        &mut self,
        cost: &[f64],
        allowed: impl Fn(usize) -> bool,
        tol: f64,
        max_iterations: usize,
    ) -> Result<(), LpError> {
        let n = self.form.columns.len();
        loop {
            if self.iterations >= max_iterations {
                return Err(LpError::IterationLimit(max_iterations));
            }
            let pi = self.duals(cost);
            let entering = (0..n).find(|&j| {
                !self.in_basis[j] && allowed(j) && self.reduced_cost(cost, &pi, j) < -tol
            });
            let Some(enter) = entering else {
                return Ok(());
            };
            let u = self.ftran(enter);
            let mut min_ratio = f64::INFINITY;
            for k in 0..self.m {
                if u[k] > PIVOT_TOL {
                    min_ratio = min_ratio.min(self.xb[k].max(0.0) / u[k]);
                }
            }
            if !min_ratio.is_finite() {
                return Err(LpError::Unbounded);
            }
            let eps = 1e-12 * (1.0 + min_ratio);
            let leave_pos = (0..self.m)
                .filter(|&k| u[k] > PIVOT_TOL && self.xb[k].max(0.0) / u[k] <= min_ratio + eps)
                .min_by_key(|&k| self.basis[k])
                .expect("ratio test found a row");
            self.pivot(leave_pos, enter, &u)?;
        }
    }
}

/// Minimizes `cost · x` subject to `rows`, `x >= 0`.
pub(crate) fn minimize(
    num_vars: usize,
    cost: &[f64],
    rows: &[Constraint],
    tol: f64,
) -> Result<SimplexResult, LpError> {
    let form = StandardForm::build(num_vars, rows);
    let n = form.columns.len();
    let m = form.rhs.len();
    let max_iterations = 200 * (n + m) + 10_000;
    let mut tab = Tableau::new(&form);

    let has_artificials = form.kinds.contains(&ColumnKind::Artificial);
    if has_artificials {
        let phase1: Vec<f64> = form
            .kinds
            .iter()
            .map(|k| {
                if *k == ColumnKind::Artificial {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        tab.optimize(&phase1, |_| true, tol, max_iterations)?;
        tab.reinvert()?;
        let infeasibility: f64 = (0..m)
            .filter(|&k| form.kinds[tab.basis[k]] == ColumnKind::Artificial)
            .map(|k| tab.xb[k])
            .sum();
        if infeasibility > tol.max(1e-9) * (1.0 + m as f64) {
            return Err(LpError::Infeasible(infeasibility));
        }
        // Drive zero-level artificials out of the basis where possible.
        for pos in 0..m {
            if form.kinds[tab.basis[pos]] != ColumnKind::Artificial {
                continue;
            }
            let candidate = (0..n).find(|&j| {
                form.kinds[j] != ColumnKind::Artificial && !tab.in_basis[j] && {
                    let row = &tab.binv[pos * m..(pos + 1) * m];
                    form.columns[j]
                        .iter()
                        .map(|&(r, a)| row[r] * a)
                        .sum::<f64>()
                        .abs()
                        > 1e-7
                }
            });
            if let Some(j) = candidate {
                let u = tab.ftran(j);
                tab.pivot(pos, j, &u)?;
            }
            // Otherwise the row is redundant; the artificial stays basic at
            // zero and no structural column can move it.
        }
    }

    let mut full_cost = vec![0.0; n];
    full_cost[..num_vars].copy_from_slice(cost);
    tab.optimize(
        &full_cost,
        |j| form.kinds[j] != ColumnKind::Artificial,
        tol,
        max_iterations,
    )?;
    tab.reinvert()?;

    let mut values = vec![0.0; num_vars];
    for (k, &col) in tab.basis.iter().enumerate() {
        if col < num_vars {
            let v = tab.xb[k];
            values[col] = if v.abs() <= 1e-12 { 0.0 } else { v };
        }
    }
    let objective = values.iter().zip(cost).map(|(v, c)| v * c).sum();
    Ok(SimplexResult {
        values,
        objective,
        iterations: tab.iterations,
    })
}
