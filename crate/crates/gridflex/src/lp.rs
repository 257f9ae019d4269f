//! Sparse linear-program description.
//!
//! A [`LinearProgram`] is a minimisation problem over bounded variables with
//! two-sided row constraints:
//!
//! ```text
//! minimise    c' x
//! subject to  row.lower <= a_i' x <= row.upper    for every row i
//!             var.lower <= x_j    <= var.upper    for every variable j
//! ```
//!
//! Equalities are rows with `lower == upper`; one-sided rows use infinite
//! bounds. The struct is a plain builder consumed by [`crate::simplex`] and
//! by the MPS writer used for external debugging of model instances.

use std::fmt::Write as _;

/// One two-sided linear constraint with a sparse coefficient list.
#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    /// `(variable index, coefficient)`, sorted by variable index, no dupes.
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// Bounded-variable minimisation LP in build order.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_names: Vec<String>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Append a variable and return its index.
    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        cost: f64,
        lower: f64,
        upper: f64,
    ) -> usize {
        assert!(
            lower <= upper,
            "variable bounds must be ordered: {lower} > {upper}"
        );
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.push(name.into());
        self.objective.len() - 1
    }

    /// Append a constraint row and return its index. Coefficients may arrive
    /// in any order and with repeated indices; they are merged and sorted.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        coeffs: &[(usize, f64)],
    ) -> usize {
        assert!(lower <= upper, "row bounds must be ordered: {lower} > {upper}");
        let nv = self.num_vars();
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        let mut sorted = coeffs.to_vec();
        sorted.sort_by_key(|&(j, _)| j);
        for (j, v) in sorted {
            assert!(j < nv, "row references variable {j} of {nv}");
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(Row {
            name: name.into(),
            coeffs: merged,
            lower,
            upper,
        });
        self.rows.len() - 1
    }

    /// Evaluate every row's activity `a_i' x` at a point.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_vars());
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Objective value at a point.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Serialise in free-format MPS (minimisation). Range rows are written
    /// as `L` rows with a RANGES entry; fixed and one-sided variable bounds
    /// map onto `FX`/`UP`/`LO`/`MI`/`FR` records.
    pub fn to_mps(&self, problem_name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME {problem_name}");
        let _ = writeln!(out, "ROWS");
        let _ = writeln!(out, " N COST");
        for row in &self.rows {
            let kind = if row.lower == row.upper {
                'E'
            } else if row.lower.is_infinite() && row.upper.is_finite() {
                'L'
            } else if row.upper.is_infinite() && row.lower.is_finite() {
                'G'
            } else if row.lower.is_infinite() && row.upper.is_infinite() {
                // Unconstrained row; emit as N so readers keep the activity.
                'N'
            } else {
                'L' // finite range, tightened again under RANGES
            };
            let _ = writeln!(out, " {kind} {}", row.name);
        }

        let _ = writeln!(out, "COLUMNS");
        for j in 0..self.num_vars() {
            let name = &self.var_names[j];
            if self.objective[j] != 0.0 {
                let _ = writeln!(out, " {name} COST {}", fmt_mps(self.objective[j]));
            }
            for row in &self.rows {
                if let Ok(pos) = row.coeffs.binary_search_by_key(&j, |&(idx, _)| idx) {
                    let _ = writeln!(out, " {name} {} {}", row.name, fmt_mps(row.coeffs[pos].1));
                }
            }
        }

        let _ = writeln!(out, "RHS");
        for row in &self.rows {
            let rhs = if row.upper.is_finite() {
                row.upper
            } else if row.lower.is_finite() {
                row.lower
            } else {
                continue;
            };
            if rhs != 0.0 {
                let _ = writeln!(out, " RHS1 {} {}", row.name, fmt_mps(rhs));
            }
        }

        let mut ranges = String::new();
        for row in &self.rows {
            if row.lower.is_finite() && row.upper.is_finite() && row.lower != row.upper {
                let _ = writeln!(ranges, " RNG1 {} {}", row.name, fmt_mps(row.upper - row.lower));
            }
        }
        if !ranges.is_empty() {
            let _ = writeln!(out, "RANGES");
            out.push_str(&ranges);
        }

        let _ = writeln!(out, "BOUNDS");
        for j in 0..self.num_vars() {
            let name = &self.var_names[j];
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo == hi {
                let _ = writeln!(out, " FX BND1 {name} {}", fmt_mps(lo));
            } else if lo.is_infinite() && hi.is_infinite() {
                let _ = writeln!(out, " FR BND1 {name}");
            } else {
                if lo.is_infinite() {
                    let _ = writeln!(out, " MI BND1 {name}");
                } else if lo != 0.0 {
                    let _ = writeln!(out, " LO BND1 {name} {}", fmt_mps(lo));
                }
                if hi.is_finite() {
                    let _ = writeln!(out, " UP BND1 {name} {}", fmt_mps(hi));
                }
            }
        }
        let _ = writeln!(out, "ENDATA");
        out
    }
}

/// Shortest round-trippable decimal for MPS fields.
fn fmt_mps(v: f64) -> String {
    // `{}` on f64 already prints the shortest representation that parses
    // back exactly, which keeps dumps diff-stable.
    format!("{v}")
}
