//! Dense LU factorisation with partial pivoting.
//!
//! Backs the revised simplex basis (factor once, then forward/backward
//! substitution per iteration) and the reduced susceptance solves in the
//! loadability sweep. Matrices here are small (a few hundred rows), so a
//! dense factorisation is both simpler and faster than anything sparse.

/// Row-major dense matrix, only as structured storage for [`LuFactors`].
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Zero-filled `n x n` matrix.
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Build from a row-major slice of length `n * n`.
    pub fn from_rows(n: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), n * n, "matrix data must be n*n");
        DenseMatrix {
            n,
            data: rows.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] += v;
    }

    /// Matrix-vector product `A * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let row = &self.data[r * self.n..(r + 1) * self.n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[r] = acc;
        }
        y
    }

    /// Transposed matrix-vector product `A^T * x`.
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let row = &self.data[r * self.n..(r + 1) * self.n];
            let xr = x[r];
            if xr != 0.0 {
                for (yc, a) in y.iter_mut().zip(row) {
                    *yc += a * xr;
                }
            }
        }
        y
    }
}

/// The factored matrix was singular to working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularMatrix {
    /// Elimination column at which no acceptable pivot was found.
    pub column: usize,
}

impl std::fmt::Display for SingularMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "matrix is singular at elimination column {}", self.column)
    }
}

impl std::error::Error for SingularMatrix {}

/// LU factors of a square matrix with row partial pivoting: `P * A = L * U`.
///
/// `L` (unit lower) and `U` (upper) share one dense array; `perm[k]` is the
/// original row index that landed in factored row `k`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factor `a`, consuming it as workspace.
    pub fn factor(a: DenseMatrix) -> Result<LuFactors, SingularMatrix> {
        let n = a.n;
        let mut lu = a.data;
        let mut perm: Vec<usize> = (0..n).collect();

        // Relative singularity threshold keyed to the largest entry so that
        // badly scaled but regular matrices still factor.
        let mut max_abs = 0.0_f64;
        for &v in &lu {
            max_abs = max_abs.max(v.abs());
        }
        let pivot_floor = if max_abs == 0.0 {
            f64::MIN_POSITIVE
        } else {
            max_abs * 1e-13
        };

        for k in 0..n {
            let mut best_row = k;
            let mut best_val = lu[k * n + k].abs();
            for r in (k + 1)..n {
                let v = lu[r * n + k].abs();
                if v > best_val {
                    best_val = v;
                    best_row = r;
                }
            }
            if best_val < pivot_floor {
                return Err(SingularMatrix { column: k });
            }
            if best_row != k {
                perm.swap(k, best_row);
                for c in 0..n {
                    lu.swap(k * n + c, best_row * n + c);
                }
            }
            let pivot = lu[k * n + k];
            for r in (k + 1)..n {
                let factor = lu[r * n + k] / pivot;
                lu[r * n + k] = factor;
                if factor != 0.0 {
                    for c in (k + 1)..n {
                        lu[r * n + c] -= factor * lu[k * n + c];
                    }
                }
            }
        }

        Ok(LuFactors { n, lu, perm })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `A * x = b`, returning `x`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // Apply the row permutation, then L y = Pb (forward), then U x = y.
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            let mut acc = x[r];
            let row = &self.lu[r * n..r * n + r];
            for (c, &l) in row.iter().enumerate() {
                acc -= l * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            let row = &self.lu[r * n + r + 1..(r + 1) * n];
            for (i, &u) in row.iter().enumerate() {
                acc -= u * x[r + 1 + i];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solve `A^T * x = b`, returning `x`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // A^T = U^T L^T P, so solve U^T y = b (forward), L^T z = y
        // (backward), then undo the permutation: x[perm[k]] = z[k].
        let mut y = b.to_vec();
        for r in 0..n {
            let mut acc = y[r];
            for c in 0..r {
                acc -= self.lu[c * n + r] * y[c];
            }
            y[r] = acc / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut acc = y[r];
            for c in (r + 1)..n {
                acc -= self.lu[c * n + r] * y[c];
            }
            y[r] = acc;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!(
                (x - y).abs() <= tol,
                "component {i}: {x} vs {y} (tol {tol})"
            );
        }
    }

    #[test]
    fn solves_known_3x3_system() {
        // A = [[2,1,1],[4,-6,0],[-2,7,2]], b = [5,-2,9] has x = [1,1,2].
        let a = DenseMatrix::from_rows(3, &[2.0, 1.0, 1.0, 4.0, -6.0, 0.0, -2.0, 7.0, 2.0]);
        let lu = LuFactors::factor(a).unwrap();
        let x = lu.solve(&[5.0, -2.0, 9.0]);
        assert_close(&x, &[1.0, 1.0, 2.0], 1e-12);
    }

    #[test]
    fn transpose_solve_matches_explicit_transpose() {
        let a = DenseMatrix::from_rows(
            4,
            &[
                3.0, -1.0, 0.0, 2.0, //
                1.0, 4.0, -2.0, 0.5, //
                0.0, -3.0, 5.0, 1.0, //
                2.5, 0.0, 1.0, -4.0,
            ],
        );
        let mut at = DenseMatrix::zeros(4);
        for r in 0..4 {
            for c in 0..4 {
                at.set(c, r, a.get(r, c));
            }
        }
        let b = [1.0, -2.0, 0.5, 3.0];
        let via_transpose_solve = LuFactors::factor(a).unwrap().solve_transpose(&b);
        let via_explicit = LuFactors::factor(at).unwrap().solve(&b);
        assert_close(&via_transpose_solve, &via_explicit, 1e-12);
    }

    #[test]
    fn roundtrips_random_systems() {
        // Deterministic congruential fill; checks A * solve(A, b) == b.
        let mut state = 0x2545f4914f6cdd1d_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for n in [1, 2, 5, 17, 40] {
            let mut a = DenseMatrix::zeros(n);
            for r in 0..n {
                for c in 0..n {
                    a.set(r, c, next());
                }
                // Diagonal boost keeps the random matrix comfortably regular.
                a.add(r, r, 4.0);
            }
            let b: Vec<f64> = (0..n).map(|_| next()).collect();
            let a_copy = a.clone();
            let lu = LuFactors::factor(a).unwrap();
            let x = lu.solve(&b);
            assert_close(&a_copy.mul_vec(&x), &b, 1e-9);
            let xt = lu.solve_transpose(&b);
            assert_close(&a_copy.mul_vec_transpose(&xt), &b, 1e-9);
        }
    }

    #[test]
    fn pivots_through_zero_diagonal() {
        // Leading zero forces a row swap; without pivoting this would fail.
        let a = DenseMatrix::from_rows(2, &[0.0, 1.0, 1.0, 0.0]);
        let lu = LuFactors::factor(a).unwrap();
        let x = lu.solve(&[3.0, 7.0]);
        assert_close(&x, &[7.0, 3.0], 1e-14);
    }

    #[test]
    fn reports_singularity() {
        let a = DenseMatrix::from_rows(2, &[1.0, 2.0, 2.0, 4.0]);
        let err = LuFactors::factor(a).unwrap_err();
        assert_eq!(err.column, 1);
    }
}
