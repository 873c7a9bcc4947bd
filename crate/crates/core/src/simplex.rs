//! Dense two-phase simplex method for small linear programs in standard form
//!
//! ```text
//! minimise c·x  subject to  A x = b,  x ≥ 0.
//! ```
//!
//! Problems handled here have a handful of rows and at most a few dozen
//! columns, so the tableau is stored densely and Bland's rule is used
//! throughout to rule out cycling.

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    rhs: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations for `cost` over the columns `0..allowed`.
    /// Returns false when the objective is unbounded below.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> bool {
        let m = self.rows.len();
        // Bland's rule terminates; the cap only guards against NaN input.
        for _ in 0..10_000 {
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced =
                    cost[j] - (0..m).map(|i| cost[self.basis[i]] * self.rows[i][j]).sum::<f64>();
                if reduced < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][col];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i][self.rhs] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return false,
            }
        }
        true
    }
}

/// Minimises `c·x` subject to `A x = b`, `x ≥ 0`, where `a` holds the rows of `A`.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m, "right-hand side length must match row count");
    assert!(a.iter().all(|r| r.len() == n), "constraint rows must match cost length");

    let rhs = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; n + m + 1];
        for j in 0..n {
            r[j] = sign * a[i][j];
        }
        r[n + i] = 1.0;
        r[rhs] = sign * b[i];
        rows.push(r);
    }
    let mut tab = Tableau {
        rows,
        basis: (n..n + m).collect(),
        rhs,
    };

    // Phase 1: drive the artificial variables to zero.
    let mut phase1 = vec![0.0; n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    tab.optimise(&phase1, n + m);
    let infeasibility: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n)
        .map(|i| tab.rows[i][rhs])
        .sum();
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if infeasibility > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL) {
                tab.pivot(i, j);
            }
        }
    }

    // Phase 2 over the structural columns only.
    let mut phase2 = vec![0.0; n + m];
    phase2[..n].copy_from_slice(c);
    if !tab.optimise(&phase2, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rows[i][rhs].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { value, x }
}
