//! Dense two-phase revised simplex for `max c.x  s.t.  A x = b, x >= 0`.
//!
//! Problems here are small (tens of rows, up to a few thousand columns), so
//! the basis inverse is recomputed from scratch at every pivot. Pricing is
//! Dantzig's rule with a switch to Bland's rule after a run of degenerate
//! pivots.

use nalgebra::{DMatrix, DVector};

use crate::error::{LosrError, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 50_000;

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual vector `y` with `A^T y >= c` and `b.y = objective`.
    pub duals: Vec<f64>,
}

/// Indices of a maximal linearly independent subset of the rows of `a`.
fn independent_rows(a: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..a.nrows() {
        let mut v: DVector<f64> = a.row(i).transpose();
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        // two rounds of Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-9 * norm0 {
            basis.push(v / n);
            keep.push(i);
        }
    }
    keep
}

struct Tableau<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    basis: Vec<usize>,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau<'_> {
    fn binv(&self) -> Result<DMatrix<f64>> {
        let m = self.a.nrows();
        let bm = DMatrix::from_fn(m, m, |i, j| self.a[(i, self.basis[j])]);
        bm.try_inverse()
            .ok_or_else(|| LosrError::Lp("singular basis".into()))
    }

    /// Run simplex iterations for cost `c` over columns `allowed`.
    fn run(&mut self, c: &[f64], allowed: &[bool]) -> Result<Outcome> {
        let m = self.a.nrows();
        let n = self.a.ncols();
        let mut degenerate_run = 0usize;
        for _ in 0..MAX_ITERS {
            let binv = self.binv()?;
            let xb = &binv * self.b;
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| c[j]));
            let y = binv.transpose() * cb;
            let bland = degenerate_run > 50;
            let mut entering: Option<(usize, f64)> = None;
            let mut in_basis = vec![false; n];
            for &j in &self.basis {
                in_basis[j] = true;
            }
            for j in 0..n {
                if in_basis[j] || !allowed[j] {
                    continue;
                }
                let d = c[j] - self.a.column(j).dot(&y);
                if d > COST_TOL {
                    match entering {
                        None => entering = Some((j, d)),
                        Some((_, best)) if !bland && d > best => entering = Some((j, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((j, _)) = entering else {
                return Ok(Outcome::Optimal);
            };
            let u = &binv * self.a.column(j);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if u[i] > PIVOT_TOL {
                    let ratio = xb[i].max(0.0) / u[i];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, r)) => {
                            if ratio < r - 1e-14
                                || (ratio <= r + 1e-14 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((i, ratio)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if ratio < 1e-13 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.basis[i] = j;
        }
        Err(LosrError::Lp("iteration limit reached".into()))
    }
}

/// Solve `max c.x  s.t.  A x = b, x >= 0`.
pub fn maximize(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Result<LpSolution> {
    let (m0, n) = (a.nrows(), a.ncols());
    if c.len() != n || b.len() != m0 {
        return Err(LosrError::DimensionMismatch(format!(
            "LP with A {}x{}, c {}, b {}",
            m0,
            n,
            c.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(LosrError::Lp("non-finite data".into()));
    }
    let rows = independent_rows(a);
    let m = rows.len();
    // sign-normalize so that b >= 0
    let sign: Vec<f64> = rows.iter().map(|&r| if b[r] < 0.0 { -1.0 } else { 1.0 }).collect();
    // columns: n originals then m artificials
    let big = DMatrix::from_fn(m, n + m, |i, j| {
        if j < n {
            sign[i] * a[(rows[i], j)]
        } else if j - n == i {
            1.0
        } else {
            0.0
        }
    });
    let bb = DVector::from_iterator(m, (0..m).map(|i| sign[i] * b[rows[i]]));

    let mut t = Tableau {
        a: &big,
        b: &bb,
        basis: (n..n + m).collect(),
    };
    let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { -1.0 }).collect();
    let all = vec![true; n + m];
    t.run(&phase1, &all)?;
    let binv = t.binv()?;
    let xb = &binv * &bb;
    let infeas: f64 = t
        .basis
        .iter()
        .zip(xb.iter())
        .filter(|(&j, _)| j >= n)
        .map(|(_, v)| v.abs())
        .sum();
    let scale = bb.amax().max(1.0);
    if infeas > 1e-8 * scale {
        return Err(LosrError::Lp(format!("infeasible (residual {:.3e})", infeas)));
    }
    // drive zero-level artificials out of the basis
    for i in 0..m {
        if t.basis[i] < n {
            continue;
        }
        let binv = t.binv()?;
        let row = binv.row(i) * big.columns(0, n);
        let in_basis: Vec<usize> = t.basis.clone();
        if let Some(j) = (0..n)
            .filter(|j| !in_basis.contains(j))
            .max_by(|&p, &q| row[p].abs().partial_cmp(&row[q].abs()).unwrap())
        {
            if row[j].abs() > PIVOT_TOL {
                t.basis[i] = j;
            }
        }
    }
    if t.basis.iter().any(|&j| j >= n) {
        return Err(LosrError::Lp("could not remove artificial variables".into()));
    }
    let phase2: Vec<f64> = (0..n + m).map(|j| if j < n { c[j] } else { 0.0 }).collect();
    let allowed: Vec<bool> = (0..n + m).map(|j| j < n).collect();
    match t.run(&phase2, &allowed)? {
        Outcome::Unbounded => return Err(LosrError::Lp("unbounded".into())),
        Outcome::Optimal => {}
    }
    let binv = t.binv()?;
    let xb = &binv * &bb;
    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        x[j] = xb[i].max(0.0);
    }
    let cb = DVector::from_iterator(m, t.basis.iter().map(|&j| c[j]));
    let y = binv.transpose() * cb;
    let mut duals = vec![0.0; m0];
    for (i, &r) in rows.iter().enumerate() {
        duals[r] = sign[i] * y[i];
    }
    let objective = x.iter().zip(c).map(|(x, c)| x * c).sum();
    Ok(LpSolution { x, objective, duals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + y  s.t.  x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0]);
        let sol = maximize(&[1.0, 1.0, 0.0, 0.0], &a, &[4.0, 6.0]).unwrap();
        assert!((sol.objective - 2.8).abs() < 1e-12);
        assert!((sol.x[0] - 1.6).abs() < 1e-12);
        assert!((sol.x[1] - 1.2).abs() < 1e-12);
        // strong duality
        let dual_obj = 4.0 * sol.duals[0] + 6.0 * sol.duals[1];
        assert!((dual_obj - 2.8).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows() {
        // x + y = 1 stated twice, max x
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let sol = maximize(&[1.0, 0.0], &a, &[1.0, 2.0]).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(maximize(&[1.0, 0.0], &a, &[-1.0]).is_err());
    }

    #[test]
    fn unbounded_detected() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(maximize(&[1.0, 0.0], &a, &[1.0]).is_err());
    }

    #[test]
    fn negative_rhs() {
        // -x - y = -2, max -x  => x = 0, y = 2
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        let sol = maximize(&[-1.0, 0.0], &a, &[-2.0]).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
        assert!((-2.0 * sol.duals[0] - sol.objective).abs() < 1e-12);
    }
}
