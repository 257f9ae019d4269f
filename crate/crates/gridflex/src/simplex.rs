//! Bounded-variable revised primal simplex.
//!
//! Solves the [`crate::lp::LinearProgram`] form directly: every row gets a
//! logical slack with the row's bounds (`a_i' x - s_i = 0`), so equalities,
//! one-sided rows and ranges all reduce to simple bounds and the method
//! never needs artificial variables. Phase 1 minimises the total bound
//! violation of the basic variables (composite objective, recomputed every
//! iteration); phase 2 minimises the real objective.
//!
//! The basis inverse is kept as a dense LU factorisation plus a short chain
//! of product-form eta updates, refactorised periodically. Pivoting is
//! Dantzig pricing with lowest-index tie-breaking, falling back to Bland's
//! rule after a run of degenerate steps, which keeps solves deterministic
//! and terminating. Solutions come with row duals and reduced costs so
//! callers can read marginal prices straight off the constraints.

use crate::linalg::{DenseMatrix, LuFactors};
use crate::lp::LinearProgram;

/// Solver tuning knobs. The defaults suit problems whose coefficients live
/// within a few orders of magnitude of 1, which holds for all models here.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Absolute bound-violation tolerance for feasibility decisions.
    pub feasibility_tol: f64,
    /// Reduced-cost threshold below which a column is not worth entering.
    pub optimality_tol: f64,
    /// Hard iteration cap; 0 picks a size-based default.
    pub max_iterations: usize,
    /// Basis refactorisation interval (eta chain length).
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            max_iterations: 0,
            refactor_every: 64,
        }
    }
}

/// Why a solve failed.
#[derive(Debug, Clone, thiserror::Error)]
pub enum SolveError {
    /// No point satisfies all rows and bounds; carries the residual bound
    /// violation at the best point phase 1 reached.
    #[error("problem is infeasible (residual bound violation {infeasibility:.6})")]
    Infeasible { infeasibility: f64 },
    /// The objective decreases without limit along a feasible ray.
    #[error("problem is unbounded along variable {variable}")]
    Unbounded { variable: String },
    /// Pivoting stalled past the iteration cap.
    #[error("iteration limit reached after {iterations} pivots")]
    IterationLimit { iterations: usize },
    /// The basis became numerically unusable.
    #[error("numerical failure: {detail}")]
    Numerical { detail: String },
}

/// Optimal solution with first-order certificates.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Structural variable values, in declaration order.
    pub x: Vec<f64>,
    /// Row activities `a_i' x` at the optimum.
    pub row_activity: Vec<f64>,
    /// Row duals: marginal objective change per unit increase of both row
    /// bounds (for an equality, per unit increase of its right-hand side).
    pub duals: Vec<f64>,
    /// Reduced costs of the structural variables.
    pub reduced_costs: Vec<f64>,
    /// Objective value `c' x`.
    pub objective: f64,
    /// Simplex pivots performed across both phases.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable, held at zero.
    FreeZero,
}

/// Minimise the program. Deterministic: identical inputs produce identical
/// pivot sequences and bit-identical solutions on a given platform.
pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution, SolveError> {
    Worker::new(lp, opts).run()
}

const PIVOT_MIN: f64 = 1e-7;
const PIVOT_HARD_MIN: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-10;
const BLAND_TRIGGER: usize = 50;
const RATIO_TIE: f64 = 1e-9;

struct Worker<'a> {
    lp: &'a LinearProgram,
    opts: SimplexOptions,
    n_struct: usize,
    m: usize,
    /// Sparse columns for structural variables then row slacks.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    status: Vec<Status>,
    /// Column occupying each basis position.
    basis: Vec<usize>,
    /// Values of the basic variables, aligned with `basis`.
    x_b: Vec<f64>,
    lu: Option<LuFactors>,
    /// Product-form updates since the last refactorisation, oldest first.
    etas: Vec<(usize, Vec<f64>)>,
    iterations: usize,
    degenerate_streak: usize,
}

enum Entering {
    None,
    Candidate { col: usize, direction: f64 },
}

enum Step {
    BoundFlip { t: f64 },
    Pivot { pos: usize, t: f64, leave_at_upper: bool },
    Unbounded,
}

impl<'a> Worker<'a> {
    fn new(lp: &'a LinearProgram, opts: &SimplexOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j].push((i, a));
            }
        }
        for i in 0..m {
            cols[n + i].push((i, -1.0));
        }

        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut cost = lp.objective.clone();
        for row in &lp.rows {
            lower.push(row.lower);
            upper.push(row.upper);
            cost.push(0.0);
        }

        // Start from the all-slack basis; structural variables sit at their
        // finite bound nearest to use, free ones at zero.
        let mut status = Vec::with_capacity(n + m);
        for j in 0..n {
            status.push(if lower[j].is_finite() {
                Status::AtLower
            } else if upper[j].is_finite() {
                Status::AtUpper
            } else {
                Status::FreeZero
            });
        }
        status.extend(std::iter::repeat(Status::Basic).take(m));
        let basis: Vec<usize> = (n..n + m).collect();

        let mut max_iterations = opts.max_iterations;
        if max_iterations == 0 {
            max_iterations = 200 + 40 * (n + m);
        }
        let opts = SimplexOptions {
            max_iterations,
            ..opts.clone()
        };

        Worker {
            lp,
            opts,
            n_struct: n,
            m,
            cols,
            lower,
            upper,
            cost,
            status,
            basis,
            x_b: vec![0.0; m],
            lu: None,
            etas: Vec::new(),
            iterations: 0,
            degenerate_streak: 0,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::AtLower => self.lower[j],
            Status::AtUpper => self.upper[j],
            Status::FreeZero => 0.0,
            Status::Basic => unreachable!("basic variable has no nonbasic value"),
        }
    }

    /// Rebuild the LU factors of the current basis and recompute the basic
    /// values from scratch, dropping the eta chain.
    fn refactor(&mut self) -> Result<(), SolveError> {
        let m = self.m;
        let mut b = DenseMatrix::zeros(m);
        for (pos, &col) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[col] {
                b.set(i, pos, a);
            }
        }
        let lu = LuFactors::factor(b).map_err(|e| SolveError::Numerical {
            detail: format!("basis factorisation failed: {e}"),
        })?;
        self.lu = Some(lu);
        self.etas.clear();

        // x_B = -B^{-1} (sum of nonbasic columns at their values).
        let mut q = vec![0.0; m];
        for j in 0..self.cols.len() {
            if self.status[j] == Status::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                for &(i, a) in &self.cols[j] {
                    q[i] -= a * v;
                }
            }
        }
        self.x_b = self.lu.as_ref().unwrap().solve(&q);
        Ok(())
    }

    /// `w = B^{-1} a` for a dense right-hand side.
    fn ftran(&self, a: &[f64]) -> Vec<f64> {
        let mut w = self.lu.as_ref().unwrap().solve(a);
        for (pos, eta) in &self.etas {
            let piv = w[*pos] / eta[*pos];
            if piv != 0.0 {
                for (wi, ei) in w.iter_mut().zip(eta) {
                    *wi -= ei * piv;
                }
            }
            w[*pos] = piv;
        }
        w
    }

    /// `y` solving `B^T y = c_B`.
    fn btran(&self, c_b: &[f64]) -> Vec<f64> {
        let mut y = c_b.to_vec();
        for (pos, eta) in self.etas.iter().rev() {
            let mut dot = 0.0;
            for (ei, yi) in eta.iter().zip(&y) {
                dot += ei * yi;
            }
            y[*pos] -= dot - eta[*pos] * y[*pos];
            y[*pos] /= eta[*pos];
        }
        self.lu.as_ref().unwrap().solve_transpose(&y)
    }

    fn infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for (pos, &col) in self.basis.iter().enumerate() {
            let v = self.x_b[pos];
            if v < self.lower[col] {
                total += self.lower[col] - v;
            } else if v > self.upper[col] {
                total += v - self.upper[col];
            }
        }
        total
    }

    /// Cost of each basic variable under the active phase. Phase 1 charges
    /// +-1 on bound violations so the reduced costs become the gradient of
    /// the total infeasibility.
    fn basic_costs(&self, phase: u8) -> Vec<f64> {
        let tol = self.opts.feasibility_tol;
        self.basis
            .iter()
            .enumerate()
            .map(|(pos, &col)| {
                if phase == 1 {
                    let v = self.x_b[pos];
                    if v < self.lower[col] - tol {
                        -1.0
                    } else if v > self.upper[col] + tol {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cost[col]
                }
            })
            .collect()
    }

    /// Dantzig pricing (most negative improvement rate, lowest index on
    /// ties); Bland mode takes the lowest-index improving column outright.
    fn price(&self, phase: u8, y: &[f64], bland: bool) -> Entering {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..self.cols.len() {
            if self.status[j] == Status::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let cj = if phase == 1 { 0.0 } else { self.cost[j] };
            let mut d = cj;
            for &(i, a) in &self.cols[j] {
                d -= y[i] * a;
            }
            let (score, direction) = match self.status[j] {
                Status::AtLower if d < -tol => (-d, 1.0),
                Status::AtUpper if d > tol => (d, -1.0),
                Status::FreeZero if d.abs() > tol => (d.abs(), if d < 0.0 { 1.0 } else { -1.0 }),
                _ => continue,
            };
            if bland {
                return Entering::Candidate { col: j, direction };
            }
            match best {
                Some((s, _, _)) if s >= score => {}
                _ => best = Some((score, j, direction)),
            }
        }
        match best {
            Some((_, col, direction)) => Entering::Candidate { col, direction },
            None => Entering::None,
        }
    }

    /// Bounded-variable ratio test. The entering column moves `t >= 0` in
    /// `direction`; each basic variable moves by `-direction * w[pos] * t`
    /// and blocks at the first bound it meets. In phase 1 a variable that is
    /// already outside a bound blocks when it comes back onto it, and never
    /// blocks when moving further away (its violation is what pricing is
    /// paying to reduce).
    fn ratio_test(&self, entering: usize, direction: f64, w: &[f64], phase: u8, bland: bool) -> Step {
        let ftol = self.opts.feasibility_tol;
        let flip_span = self.upper[entering] - self.lower[entering];
        let mut best_t = f64::INFINITY;
        let mut best: Option<(usize, bool, f64)> = None; // (pos, leave_at_upper, |pivot|)

        for (pos, &wv) in w.iter().enumerate() {
            if wv.abs() <= PIVOT_HARD_MIN {
                continue;
            }
            let delta = direction * wv; // basic value moves by -delta per unit t
            let col = self.basis[pos];
            let v = self.x_b[pos];
            let (lo, hi) = (self.lower[col], self.upper[col]);

            let (bound, dist, at_upper) = if delta > 0.0 {
                // Basic variable decreasing.
                if v < lo - ftol {
                    continue; // already below: no bound in this direction
                }
                if phase == 1 && v > hi + ftol {
                    (hi, v - hi, true)
                } else if lo.is_finite() {
                    (lo, v - lo, false)
                } else {
                    continue;
                }
            } else {
                // Basic variable increasing.
                if v > hi + ftol {
                    continue;
                }
                if phase == 1 && v < lo - ftol {
                    (lo, lo - v, false)
                } else if hi.is_finite() {
                    (hi, hi - v, true)
                } else {
                    continue;
                }
            };
            let _ = bound;
            let t = dist.max(0.0) / delta.abs();
            let better = if t < best_t - RATIO_TIE {
                true
            } else if t <= best_t + RATIO_TIE {
                // Near-tie: keep the numerically strongest pivot, or the
                // lowest variable index when Bland's rule is active.
                match best {
                    None => true,
                    Some((bpos, _, bpiv)) => {
                        if bland {
                            col < self.basis[bpos]
                        } else {
                            wv.abs() > bpiv
                        }
                    }
                }
            } else {
                false
            };
            if better {
                best_t = best_t.min(t);
                best = Some((pos, at_upper, wv.abs()));
            }
        }

        if flip_span.is_finite() && flip_span <= best_t {
            return Step::BoundFlip { t: flip_span };
        }
        match best {
            Some((pos, leave_at_upper, _)) => Step::Pivot {
                pos,
                t: best_t,
                leave_at_upper,
            },
            None => Step::Unbounded,
        }
    }

    fn dense_column(&self, j: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.m];
        for &(i, v) in &self.cols[j] {
            a[i] = v;
        }
        a
    }

    fn run(mut self) -> Result<LpSolution, SolveError> {
        self.refactor()?;
        let mut phase: u8 = if self.infeasibility() > self.opts.feasibility_tol {
            1
        } else {
            2
        };
        let mut bland = false;

        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(SolveError::IterationLimit {
                    iterations: self.iterations,
                });
            }
            if self.etas.len() >= self.opts.refactor_every {
                self.refactor()?;
            }
            if phase == 1 && self.infeasibility() <= self.opts.feasibility_tol {
                phase = 2;
                bland = false;
                self.degenerate_streak = 0;
            }

            let c_b = self.basic_costs(phase);
            let y = self.btran(&c_b);
            let entering = match self.price(phase, &y, bland) {
                Entering::Candidate { col, direction } => (col, direction),
                Entering::None => {
                    if !self.etas.is_empty() {
                        // Confirm the verdict on a freshly factorised basis.
                        self.refactor()?;
                        continue;
                    }
                    if phase == 1 {
                        let residual = self.infeasibility();
                        if residual <= self.opts.feasibility_tol {
                            phase = 2;
                            continue;
                        }
                        return Err(SolveError::Infeasible {
                            infeasibility: residual,
                        });
                    }
                    return Ok(self.extract());
                }
            };
            let (col, direction) = entering;

            let a_col = self.dense_column(col);
            let w = self.ftran(&a_col);
            let step = self.ratio_test(col, direction, &w, phase, bland);
            match step {
                Step::Unbounded => {
                    if !self.etas.is_empty() {
                        self.refactor()?;
                        continue;
                    }
                    if phase == 1 {
                        // A descent direction of the infeasibility cannot be
                        // unbounded; this is numerical noise.
                        return Err(SolveError::Numerical {
                            detail: "unblocked descent direction in phase 1".into(),
                        });
                    }
                    return Err(SolveError::Unbounded {
                        variable: self
                            .lp
                            .var_names
                            .get(col)
                            .cloned()
                            .unwrap_or_else(|| format!("slack#{}", col - self.n_struct)),
                    });
                }
                Step::BoundFlip { t } => {
                    for (xb, wv) in self.x_b.iter_mut().zip(&w) {
                        *xb -= t * direction * wv;
                    }
                    self.status[col] = match self.status[col] {
                        Status::AtLower => Status::AtUpper,
                        Status::AtUpper => Status::AtLower,
                        other => other,
                    };
                    self.note_step(t, &mut bland);
                }
                Step::Pivot {
                    pos,
                    t,
                    leave_at_upper,
                } => {
                    if w[pos].abs() < PIVOT_MIN && !self.etas.is_empty() {
                        // Weak pivot on a stale basis: refactorise and redo.
                        self.refactor()?;
                        continue;
                    }
                    let entering_value = self.nonbasic_value(col) + t * direction;
                    for (xb, wv) in self.x_b.iter_mut().zip(&w) {
                        *xb -= t * direction * wv;
                    }
                    let leaving = self.basis[pos];
                    self.status[leaving] = if leave_at_upper {
                        Status::AtUpper
                    } else {
                        Status::AtLower
                    };
                    self.status[col] = Status::Basic;
                    self.basis[pos] = col;
                    self.x_b[pos] = entering_value;
                    self.etas.push((pos, w));
                    self.note_step(t, &mut bland);
                }
            }
            self.iterations += 1;
        }
    }

    fn note_step(&mut self, t: f64, bland: &mut bool) {
        if t <= DEGENERATE_STEP {
            self.degenerate_streak += 1;
            if self.degenerate_streak > BLAND_TRIGGER {
                *bland = true;
            }
        } else {
            self.degenerate_streak = 0;
            *bland = false;
        }
    }

    /// Assemble the solution from a clean factorisation so the reported
    /// point carries refactorised (not eta-accumulated) accuracy.
    fn extract(mut self) -> LpSolution {
        if self.refactor().is_err() {
            // The basis factored moments ago; keep the last good state.
        }
        let n = self.n_struct;
        let mut full = vec![0.0; n + self.m];
        for j in 0..n + self.m {
            if self.status[j] != Status::Basic {
                full[j] = self.nonbasic_value(j);
            }
        }
        for (pos, &col) in self.basis.iter().enumerate() {
            full[col] = self.x_b[pos];
        }
        let x: Vec<f64> = full[..n].to_vec();
        let row_activity: Vec<f64> = full[n..].to_vec();

        let c_b = self.basic_costs(2);
        let duals = self.btran(&c_b);
        let reduced_costs: Vec<f64> = (0..n)
            .map(|j| {
                let mut d = self.cost[j];
                for &(i, a) in &self.cols[j] {
                    d -= duals[i] * a;
                }
                d
            })
            .collect();
        let objective = self.lp.objective_value(&x);
        LpSolution {
            x,
            row_activity,
            duals,
            reduced_costs,
            objective,
            iterations: self.iterations,
        }
    }
}

/// Check first-order optimality of a claimed solution: primal feasibility,
/// dual sign conditions and complementary slackness. These conditions are
/// sufficient for global optimality of a linear program, so this acts as an
/// independent certificate for solver output in tests.
pub fn verify_optimality(
    lp: &LinearProgram,
    x: &[f64],
    duals: &[f64],
    tol: f64,
) -> Result<(), String> {
    if x.len() != lp.num_vars() || duals.len() != lp.num_rows() {
        return Err("dimension mismatch".into());
    }
    let scale = |v: f64| tol * (1.0 + v.abs());

    for (j, &xj) in x.iter().enumerate() {
        if xj < lp.lower[j] - scale(lp.lower[j]) || xj > lp.upper[j] + scale(lp.upper[j]) {
            return Err(format!(
                "variable {} = {xj} violates bounds [{}, {}]",
                lp.var_names[j], lp.lower[j], lp.upper[j]
            ));
        }
    }

    let activity = lp.row_activity(x);
    for (i, row) in lp.rows.iter().enumerate() {
        let act = activity[i];
        if act < row.lower - scale(row.lower) || act > row.upper + scale(row.upper) {
            return Err(format!(
                "row {} activity {act} violates [{}, {}]",
                row.name, row.lower, row.upper
            ));
        }
        // Dual sign: a row binding below supports only a nonnegative dual,
        // binding above only a nonpositive one, interior only zero.
        let at_lower = act <= row.lower + scale(row.lower);
        let at_upper = act >= row.upper - scale(row.upper);
        let y = duals[i];
        if !at_lower && !at_upper && y.abs() > tol {
            return Err(format!(
                "row {} is slack but has dual {y}",
                row.name
            ));
        }
        if at_lower && !at_upper && y < -tol {
            return Err(format!(
                "row {} binds at its lower bound but has dual {y} < 0",
                row.name
            ));
        }
        if at_upper && !at_lower && y > tol {
            return Err(format!(
                "row {} binds at its upper bound but has dual {y} > 0",
                row.name
            ));
        }
    }

    // Reduced-cost signs against each variable's position in its bounds.
    let mut reduced: Vec<f64> = lp.objective.clone();
    for (i, row) in lp.rows.iter().enumerate() {
        let y = duals[i];
        if y != 0.0 {
            for &(j, a) in &row.coeffs {
                reduced[j] -= y * a;
            }
        }
    }
    let dual_tol = |j: usize| tol * (1.0 + lp.objective[j].abs());
    for (j, &d) in reduced.iter().enumerate() {
        let at_lower = x[j] <= lp.lower[j] + scale(lp.lower[j]);
        let at_upper = x[j] >= lp.upper[j] - scale(lp.upper[j]);
        if !at_lower && !at_upper && d.abs() > dual_tol(j) {
            return Err(format!(
                "variable {} is interior but has reduced cost {d}",
                lp.var_names[j]
            ));
        }
        if at_lower && !at_upper && d < -dual_tol(j) {
            return Err(format!(
                "variable {} sits at its lower bound with reduced cost {d} < 0",
                lp.var_names[j]
            ));
        }
        if at_upper && !at_lower && d > dual_tol(j) {
            return Err(format!(
                "variable {} sits at its upper bound with reduced cost {d} > 0",
                lp.var_names[j]
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_ok(lp: &LinearProgram) -> LpSolution {
        let sol = solve(lp, &SimplexOptions::default()).expect("solvable");
        verify_optimality(lp, &sol.x, &sol.duals, 1e-6)
            .unwrap_or_else(|e| panic!("optimality certificate failed: {e}"));
        sol
    }

    #[test]
    fn minimises_single_variable_without_rows() {
        let mut lp = LinearProgram::new();
        lp.add_variable("x", 1.0, 2.0, 5.0);
        let sol = solve_ok(&lp);
        assert_eq!(sol.x, vec![2.0]);
        assert_eq!(sol.objective, 2.0);
    }

    #[test]
    fn maximising_cost_drives_to_upper_bound() {
        let mut lp = LinearProgram::new();
        lp.add_variable("x", -1.0, 2.0, 5.0);
        let sol = solve_ok(&lp);
        assert_eq!(sol.x, vec![5.0]);
    }

    #[test]
    fn free_variable_settles_on_equality() {
        // min x + y with x - y = 3: y = x - 3, objective 2x - 3, so x = 0.
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 1.0, 0.0, 10.0);
        let y = lp.add_variable("y", 1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row("link", 3.0, 3.0, &[(x, 1.0), (y, -1.0)]);
        let sol = solve_ok(&lp);
        assert!((sol.x[0] - 0.0).abs() < 1e-9);
        assert!((sol.x[1] + 3.0).abs() < 1e-9);
        assert!((sol.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_textbook_optimum_and_duals() {
        // max 3a + 5b st a <= 4, 2b <= 12, 3a + 2b <= 18 has optimum 36 at
        // (2, 6) with duals (0, 3/2, 1) on the three rows.
        let mut lp = LinearProgram::new();
        let a = lp.add_variable("a", -3.0, 0.0, f64::INFINITY);
        let b = lp.add_variable("b", -5.0, 0.0, f64::INFINITY);
        lp.add_row("ra", f64::NEG_INFINITY, 4.0, &[(a, 1.0)]);
        lp.add_row("rb", f64::NEG_INFINITY, 12.0, &[(b, 2.0)]);
        lp.add_row("rc", f64::NEG_INFINITY, 18.0, &[(a, 3.0), (b, 2.0)]);
        let sol = solve_ok(&lp);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 6.0).abs() < 1e-9);
        assert!((sol.objective + 36.0).abs() < 1e-9);
        assert!(sol.duals[0].abs() < 1e-9);
        assert!((sol.duals[1] + 1.5).abs() < 1e-9);
        assert!((sol.duals[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn marginal_unit_sets_the_balance_dual() {
        // Two generators (10 and 20 per unit, 5 cap each) serving demand 8:
        // cheap one saturates, dual of the balance row is the price 20.
        let mut lp = LinearProgram::new();
        let g1 = lp.add_variable("g1", 10.0, 0.0, 5.0);
        let g2 = lp.add_variable("g2", 20.0, 0.0, 5.0);
        lp.add_row("balance", 8.0, 8.0, &[(g1, 1.0), (g2, 1.0)]);
        let sol = solve_ok(&lp);
        assert!((sol.x[0] - 5.0).abs() < 1e-9);
        assert!((sol.x[1] - 3.0).abs() < 1e-9);
        assert!((sol.objective - 110.0).abs() < 1e-9);
        assert!((sol.duals[0] - 20.0).abs() < 1e-9);
        assert!((sol.reduced_costs[0] + 10.0).abs() < 1e-9);
    }

    #[test]
    fn range_row_binds_at_its_cheaper_side() {
        // min x + 2y with 1 <= x + y <= 4: activity settles on the lower edge.
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 1.0, 0.0, 10.0);
        let y = lp.add_variable("y", 2.0, 0.0, 10.0);
        lp.add_row("band", 1.0, 4.0, &[(x, 1.0), (y, 1.0)]);
        let sol = solve_ok(&lp);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!(sol.x[1].abs() < 1e-9);
        assert!((sol.row_activity[0] - 1.0).abs() < 1e-9);
        assert!((sol.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_rows() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 1.0, 0.0, 1.0);
        lp.add_row("need2", 2.0, f64::INFINITY, &[(x, 1.0)]);
        match solve(&lp, &SimplexOptions::default()) {
            Err(SolveError::Infeasible { infeasibility }) => {
                assert!((infeasibility - 1.0).abs() < 1e-6);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn detects_unbounded_direction() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", -1.0, 0.0, f64::INFINITY);
        let y = lp.add_variable("y", 0.0, 0.0, f64::INFINITY);
        lp.add_row("slackish", f64::NEG_INFINITY, 5.0, &[(x, 1.0), (y, -1.0)]);
        // The ray raises x and y together; either may be named.
        match solve(&lp, &SimplexOptions::default()) {
            Err(SolveError::Unbounded { variable }) => {
                assert!(variable == "x" || variable == "y", "ray variable {variable}");
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn survives_classic_cycling_instance() {
        // Beale's example makes textbook Dantzig pivoting cycle forever; the
        // degenerate-streak fallback to Bland's rule must escape it.
        let mut lp = LinearProgram::new();
        let x1 = lp.add_variable("x1", -0.75, 0.0, f64::INFINITY);
        let x2 = lp.add_variable("x2", 150.0, 0.0, f64::INFINITY);
        let x3 = lp.add_variable("x3", -0.02, 0.0, f64::INFINITY);
        let x4 = lp.add_variable("x4", 6.0, 0.0, f64::INFINITY);
        lp.add_row(
            "r1",
            f64::NEG_INFINITY,
            0.0,
            &[(x1, 0.25), (x2, -60.0), (x3, -1.0 / 25.0), (x4, 9.0)],
        );
        lp.add_row(
            "r2",
            f64::NEG_INFINITY,
            0.0,
            &[(x1, 0.5), (x2, -90.0), (x3, -1.0 / 50.0), (x4, 3.0)],
        );
        lp.add_row("r3", f64::NEG_INFINITY, 1.0, &[(x3, 1.0)]);
        let sol = solve_ok(&lp);
        assert!((sol.objective + 0.05).abs() < 1e-9, "objective {}", sol.objective);
    }

    #[test]
    fn bound_flips_skip_basis_changes() {
        // Only upper-bounded improving moves: the optimal point flips both
        // variables to their upper bounds under one shared cap.
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", -1.0, 0.0, 1.0);
        let y = lp.add_variable("y", -1.0, 0.0, 1.0);
        lp.add_row("cap", f64::NEG_INFINITY, 3.0, &[(x, 1.0), (y, 1.0)]);
        let sol = solve_ok(&lp);
        assert_eq!(sol.x, vec![1.0, 1.0]);
    }

    #[test]
    fn eta_refactor_interval_does_not_change_the_answer() {
        let lp = dense_random_lp(40, 60, 7, false);
        let baseline = solve(
            &lp,
            &SimplexOptions {
                refactor_every: 1,
                ..Default::default()
            },
        )
        .expect("solvable");
        let chained = solve(
            &lp,
            &SimplexOptions {
                refactor_every: 1000,
                ..Default::default()
            },
        )
        .expect("solvable");
        assert!(
            (baseline.objective - chained.objective).abs() < 1e-6,
            "{} vs {}",
            baseline.objective,
            chained.objective
        );
        verify_optimality(&lp, &chained.x, &chained.duals, 1e-6).unwrap();
    }

    #[test]
    fn certifies_many_random_programs() {
        let mut optimal = 0;
        let mut infeasible = 0;
        for seed in 0..120 {
            let lp = dense_random_lp(2 + seed % 7, 2 + (seed * 3) % 9, seed as u64, true);
            match solve(&lp, &SimplexOptions::default()) {
                Ok(sol) => {
                    verify_optimality(&lp, &sol.x, &sol.duals, 1e-6)
                        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
                    optimal += 1;
                }
                Err(SolveError::Infeasible { .. }) => infeasible += 1,
                Err(e) => panic!("seed {seed}: unexpected failure {e}"),
            }
        }
        assert!(optimal >= 80, "only {optimal} optimal out of 120");
        assert!(infeasible > 0, "generator never produced infeasible cases");
    }

    /// Deterministic pseudo-random bounded LP. Row bounds are anchored to a
    /// random interior point, so instances are feasible by construction
    /// unless `allow_infeasible` injects shifted-away rows; finite variable
    /// bounds rule out unbounded rays.
    fn dense_random_lp(m: usize, n: usize, seed: u64, allow_infeasible: bool) -> LinearProgram {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut lp = LinearProgram::new();
        let mut anchor = Vec::with_capacity(n);
        for j in 0..n {
            let lo = (next() * 10.0).floor() - 5.0;
            let hi = lo + (next() * 10.0).floor();
            lp.add_variable(format!("v{j}"), (next() * 20.0).round() - 10.0, lo, hi);
            anchor.push(lo + (hi - lo) * next());
        }
        let spoiled_row = if allow_infeasible && next() < 0.2 {
            Some((next() * m as f64) as usize)
        } else {
            None
        };
        for i in 0..m {
            let mut coeffs = Vec::new();
            for j in 0..n {
                if next() < 0.6 {
                    coeffs.push((j, (next() * 8.0).round() - 4.0));
                }
            }
            let at: f64 = coeffs.iter().map(|&(j, a)| a * anchor[j]).sum();
            let span_lo = (next() * 6.0).floor();
            let span_hi = (next() * 6.0).floor();
            let (mut lo, mut hi) = match (next() * 4.0) as u32 {
                0 => (f64::NEG_INFINITY, at + span_hi),
                1 => (at - span_lo, f64::INFINITY),
                2 => (at, at),
                _ => (at - span_lo, at + span_hi),
            };
            if spoiled_row == Some(i) {
                // Push the window far past anything the variable box allows.
                let shift = 1e4;
                lo = if lo.is_finite() { lo + shift } else { at + shift };
                hi = if hi.is_finite() { hi + shift } else { f64::INFINITY };
            }
            lp.add_row(format!("r{i}"), lo, hi, &coeffs);
        }
        lp
    }
}
