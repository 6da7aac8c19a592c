//! Exact rational linear programming.
//!
//! Dense two-phase simplex over arbitrary-precision rationals with Bland's
//! anti-cycling rule, so feasibility answers are exact and termination is
//! guaranteed. Problem sizes here are small (tens of variables), so a dense
//! tableau is plenty.

use num_traits::{One, Signed, Zero};

use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<Rat>,
    cmp: Cmp,
    rhs: Rat,
}

/// An LP in the caller's variables: maximize `objective · x` subject to the
/// constraints. Variables are nonnegative unless marked free, in which case
/// they are internally split into a difference of two nonnegative parts.
#[derive(Debug, Clone)]
pub struct Lp {
    num_vars: usize,
    objective: Vec<Rat>,
    constraints: Vec<Constraint>,
    free: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpResult {
    Infeasible,
    Unbounded,
    Optimal { x: Vec<Rat>, objective: Rat },
}

impl Lp {
    pub fn new(num_vars: usize) -> Self {
        Lp {
            num_vars,
            objective: vec![Rat::zero(); num_vars],
            constraints: Vec::new(),
            free: vec![false; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn maximize(&mut self, objective: Vec<Rat>) {
        assert_eq!(objective.len(), self.num_vars);
        self.objective = objective;
    }

    pub fn constraint(&mut self, coeffs: Vec<Rat>, cmp: Cmp, rhs: Rat) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push(Constraint { coeffs, cmp, rhs });
    }

    /// Solves with the two-phase simplex method.
    pub fn solve(&self) -> LpResult {
        Tableau::build(self).solve()
    }
}

/// Standard-form tableau: rows are equality constraints over nonnegative
/// internal variables, with a nonnegative right-hand side.
struct Tableau {
    /// rows[r] = coefficients over internal variables.
    rows: Vec<Vec<Rat>>,
    rhs: Vec<Rat>,
    /// Basic internal variable per row.
    basis: Vec<usize>,
    /// Objective over internal variables (maximization).
    obj: Vec<Rat>,
    n_internal: usize,
    n_structural: usize,
    artificial_start: usize,
    /// internal index pair (plus, minus) per caller variable.
    var_map: Vec<(usize, Option<usize>)>,
}

impl Tableau {
    fn build(lp: &Lp) -> Tableau {
        // Map caller variables to internal nonnegative ones; free variables
        // become a difference of two.
        let mut var_map = Vec::with_capacity(lp.num_vars);
        let mut n = 0usize;
        for &is_free in &lp.free {
            if is_free {
                var_map.push((n, Some(n + 1)));
                n += 2;
            } else {
                var_map.push((n, None));
                n += 1;
            }
        }
        let n_structural_with_slacks = n
            + lp.constraints
                .iter()
                .filter(|c| c.cmp != Cmp::Eq)
                .count();
        let m = lp.constraints.len();
        let n_internal = n_structural_with_slacks + m; // + artificials
        let artificial_start = n_structural_with_slacks;

        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack_cursor = n;
        for (r, c) in lp.constraints.iter().enumerate() {
            let mut row = vec![Rat::zero(); n_internal];
            for (v, coef) in c.coeffs.iter().enumerate() {
                let (p, q) = var_map[v];
                row[p] += coef;
                if let Some(q) = q {
                    row[q] -= coef;
                }
            }
            let mut b = c.rhs.clone();
            match c.cmp {
                Cmp::Le => {
                    row[slack_cursor] = Rat::one();
                    slack_cursor += 1;
                }
                Cmp::Ge => {
                    row[slack_cursor] = -Rat::one();
                    slack_cursor += 1;
                }
                Cmp::Eq => {}
            }
            if b.is_negative() {
                for v in row.iter_mut() {
                    *v = -v.clone();
                }
                b = -b;
            }
            let art = artificial_start + r;
            row[art] = Rat::one();
            basis.push(art);
            rows.push(row);
            rhs.push(b);
        }

        let mut obj = vec![Rat::zero(); n_internal];
        for (v, coef) in lp.objective.iter().enumerate() {
            let (p, q) = var_map[v];
            obj[p] += coef;
            if let Some(q) = q {
                obj[q] -= coef;
            }
        }

        Tableau {
            rows,
            rhs,
            basis,
            obj,
            n_internal,
            n_structural: n_structural_with_slacks,
            artificial_start,
            var_map,
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let inv = self.rows[row][col].clone().recip();
        for v in self.rows[row].iter_mut() {
            *v *= &inv;
        }
        self.rhs[row] *= &inv;
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let factor = self.rows[r][col].clone();
            if factor.is_zero() {
                continue;
            }
            for c in 0..self.n_internal {
                let delta = &self.rows[row][c] * &factor;
                self.rows[r][c] -= delta;
            }
            let delta = &self.rhs[row] * &factor;
            self.rhs[r] -= delta;
        }
        self.basis[row] = col;
    }

    /// Reduced cost of column `col` under objective `obj`: obj[col] − c_B · B⁻¹A_col.
    fn reduced_cost(&self, obj: &[Rat], col: usize) -> Rat {
        let mut rc = obj[col].clone();
        for (r, &b) in self.basis.iter().enumerate() {
            if !obj[b].is_zero() {
                rc -= &obj[b] * &self.rows[r][col];
            }
        }
        rc
    }

    /// Primal simplex with Bland's rule over columns `0..limit`.
    /// Returns false if unbounded.
    fn optimize(&mut self, obj: &[Rat], limit: usize) -> bool {
        loop {
            // Bland: entering = lowest-index column with positive reduced cost.
            let mut entering = None;
            for col in 0..limit {
                if self.basis.contains(&col) {
                    continue;
                }
                if self.reduced_cost(obj, col).is_positive() {
                    entering = Some(col);
                    break;
                }
            }
            let Some(col) = entering else { return true };
            // Ratio test; Bland: tie-break on lowest basic variable index.
            let mut best: Option<(usize, Rat)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][col];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[r] / a;
                match &best {
                    None => best = Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < *bratio
                            || (ratio == *bratio && self.basis[r] < self.basis[*br])
                        {
                            best = Some((r, ratio));
                        }
                    }
                }
            }
            let Some((row, _)) = best else { return false };
            self.pivot(row, col);
        }
    }

    fn solve(mut self) -> LpResult {
        // Phase 1: minimize artificial sum, i.e. maximize -Σ artificials.
        let mut phase1 = vec![Rat::zero(); self.n_internal];
        for a in self.artificial_start..self.n_internal {
            phase1[a] = -Rat::one();
        }
        self.optimize(&phase1, self.n_internal);
        let mut p1 = Rat::zero();
        for (r, &b) in self.basis.iter().enumerate() {
            if b >= self.artificial_start {
                p1 += &self.rhs[r];
            }
        }
        if !p1.is_zero() {
            return LpResult::Infeasible;
        }
        // Drive remaining zero-valued artificials out of the basis; a row
        // with no structural pivot is redundant and can be ignored (its rhs
        // is zero and all structural coefficients vanish).
        for r in 0..self.rows.len() {
            if self.basis[r] < self.artificial_start {
                continue;
            }
            let col = (0..self.n_structural)
                .find(|&c| !self.rows[r][c].is_zero() && !self.basis.contains(&c));
            if let Some(col) = col {
                self.pivot(r, col);
            }
        }

        // Phase 2 over structural columns only.
        let obj = self.obj.clone();
        if !self.optimize(&obj, self.n_structural) {
            return LpResult::Unbounded;
        }

        let mut internal = vec![Rat::zero(); self.n_internal];
        for (r, &b) in self.basis.iter().enumerate() {
            internal[b] = self.rhs[r].clone();
        }
        let mut x = Vec::with_capacity(self.var_map.len());
        for &(p, q) in &self.var_map {
            let mut v = internal[p].clone();
            if let Some(q) = q {
                v -= &internal[q];
            }
            x.push(v);
        }
        let objective = x
            .iter()
            .zip(self.obj_caller())
            .map(|(xi, ci)| xi * &ci)
            .fold(Rat::zero(), |acc, t| acc + t);
        LpResult::Optimal { x, objective }
    }

    fn obj_caller(&self) -> Vec<Rat> {
        self.var_map
            .iter()
            .map(|&(p, _)| self.obj[p].clone())
            .collect()
    }
}

/// Feasibility helper: any point satisfying the constraints, or None.
pub fn feasible_point(lp: &Lp) -> Option<Vec<Rat>> {
    match lp.solve() {
        LpResult::Infeasible => None,
        LpResult::Unbounded => unreachable!("feasibility query cannot be unbounded"),
        LpResult::Optimal { x, .. } => Some(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rat_int};

    #[test]
    fn simple_maximization() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6
        let mut lp = Lp::new(2);
        lp.maximize(vec![rat_int(1), rat_int(1)]);
        lp.constraint(vec![rat_int(1), rat_int(2)], Cmp::Le, rat_int(4));
        lp.constraint(vec![rat_int(3), rat_int(1)], Cmp::Le, rat_int(6));
        match lp.solve() {
            LpResult::Optimal { x, objective } => {
                assert_eq!(objective, rat(14, 5));
                assert_eq!(x, vec![rat(8, 5), rat(6, 5)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_system() {
        // x >= 2, x <= 1
        let mut lp = Lp::new(1);
        lp.constraint(vec![rat_int(1)], Cmp::Ge, rat_int(2));
        lp.constraint(vec![rat_int(1)], Cmp::Le, rat_int(1));
        assert_eq!(lp.solve(), LpResult::Infeasible);
    }

    #[test]
    fn unbounded_objective() {
        let mut lp = Lp::new(1);
        lp.maximize(vec![rat_int(1)]);
        lp.constraint(vec![rat_int(1)], Cmp::Ge, rat_int(0));
        assert_eq!(lp.solve(), LpResult::Unbounded);
    }

    #[test]
    fn equality_with_free_variable() {
        // x free, y >= 0: x + y = -3, maximize x → x = -3, y = 0.
        let mut lp = Lp::new(2);
        lp.set_free(0);
        lp.maximize(vec![rat_int(1), rat_int(0)]);
        lp.constraint(vec![rat_int(1), rat_int(1)], Cmp::Eq, rat_int(-3));
        match lp.solve() {
            LpResult::Optimal { x, objective } => {
                assert_eq!(objective, rat_int(-3));
                assert_eq!(x, vec![rat_int(-3), rat_int(0)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 2 stated twice plus x - y = 0 → x = y = 1.
        let mut lp = Lp::new(2);
        lp.maximize(vec![rat_int(0), rat_int(0)]);
        lp.constraint(vec![rat_int(1), rat_int(1)], Cmp::Eq, rat_int(2));
        lp.constraint(vec![rat_int(1), rat_int(1)], Cmp::Eq, rat_int(2));
        lp.constraint(vec![rat_int(1), rat_int(-1)], Cmp::Eq, rat_int(0));
        match lp.solve() {
            LpResult::Optimal { x, .. } => assert_eq!(x, vec![rat_int(1), rat_int(1)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fractional_solution_is_exact() {
        // x = 1/3 exactly: 3x = 1.
        let mut lp = Lp::new(1);
        lp.maximize(vec![rat_int(1)]);
        lp.constraint(vec![rat_int(3)], Cmp::Eq, rat_int(1));
        match lp.solve() {
            LpResult::Optimal { x, .. } => assert_eq!(x[0], rat(1, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
