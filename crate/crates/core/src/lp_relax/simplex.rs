//! Bounded-variable dual simplex over `A x + s = b`, `l ≤ (x, s) ≤ u`.
//!
//! Every row carries its own slack, so the all-slack basis is always
//! available. Starting from nonnegative costs with every structural variable
//! at a dual-feasible bound, only dual iterations are ever needed, and rows
//! appended after a solve keep the basis dual feasible: re-optimization
//! continues from the previous basis.

use log::trace;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Sparse linear row `Σ a_j x_j (sense) rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow<T> {
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> SparseRow<T> {
    pub fn activity(&self, x: &[T]) -> T {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[T]) -> T {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(T::zero()),
            Sense::Ge => (self.rhs - lhs).max(T::zero()),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 1000;
const REFACTOR_EVERY: usize = 100;

#[derive(Clone, Debug)]
pub(crate) struct DualSimplex<T> {
    n_struct: usize,
    cost: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    /// Structural columns; slack `n_struct + r` is the unit column `e_r`.
    cols: Vec<Vec<(usize, T)>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    status: Vec<Status>,
    x: Vec<T>,
    d: Vec<T>,
    /// Dense row-major `B⁻¹`.
    binv: Vec<T>,
    since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
    feas_tol: T,
    piv_tol: T,
    pub(crate) total_pivots: usize,
}

impl<T: Scalar> DualSimplex<T> {
    /// `cost` must be nonnegative wherever `upper` is infinite.
    pub fn new(cost: Vec<T>, lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let n = cost.len();
        let mut status = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for j in 0..n {
            if cost[j] >= T::zero() || upper[j].is_infinite() {
                if cost[j] < T::zero() || lower[j].is_infinite() {
                    return Err(Error::Validation(format!(
                        "variable {j} has no dual-feasible starting bound"
                    )));
                }
                status.push(Status::AtLower);
                x.push(lower[j]);
            } else {
                status.push(Status::AtUpper);
                x.push(upper[j]);
            }
        }
        let eps = T::epsilon();
        Ok(DualSimplex {
            n_struct: n,
            d: cost.clone(),
            cost,
            lower,
            upper,
            cols: vec![Vec::new(); n],
            rhs: Vec::new(),
            basis: Vec::new(),
            status,
            x,
            binv: Vec::new(),
            since_refactor: 0,
            degenerate_run: 0,
            bland: false,
            feas_tol: T::lit(1e-9).max(eps * T::lit(1e3)),
            piv_tol: T::lit(1e-9).max(eps * T::lit(1e2)),
            total_pivots: 0,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn values(&self) -> &[T] {
        &self.x[..self.n_struct]
    }

    pub fn objective(&self) -> T {
        (0..self.n_struct).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// Appends a row whose slack enters the basis. Duals of the existing rows
    /// are unchanged, so the current basis stays dual feasible.
    pub fn add_row(&mut self, row: &SparseRow<T>) {
        let m = self.num_rows();
        let r = m;
        for &(j, a) in &row.coeffs {
            if a != T::zero() {
                self.cols[j].push((r, a));
            }
        }
        let (lo, up) = match row.sense {
            Sense::Le => (T::zero(), T::infinity()),
            Sense::Ge => (T::neg_infinity(), T::zero()),
            Sense::Eq => (T::zero(), T::zero()),
        };
        let slack = self.cost.len();
        self.cost.push(T::zero());
        self.lower.push(lo);
        self.upper.push(up);
        self.d.push(T::zero());
        self.status.push(Status::Basic(r));
        let activity: T = row.coeffs.iter().map(|&(j, a)| a * self.x[j]).sum();
        self.x.push(row.rhs - activity);
        self.rhs.push(row.rhs);

        // B' = [[B, 0], [a_Bᵀ, 1]]  ⇒  B'⁻¹ = [[B⁻¹, 0], [−a_Bᵀ B⁻¹, 1]]
        let mut a_b = vec![T::zero(); m];
        for &(j, a) in &row.coeffs {
            if let Status::Basic(pos) = self.status[j] {
                a_b[pos] += a;
            }
        }
        let mut next = vec![T::zero(); (m + 1) * (m + 1)];
        for i in 0..m {
            next[i * (m + 1)..i * (m + 1) + m].copy_from_slice(&self.binv[i * m..(i + 1) * m]);
        }
        for k in 0..m {
            let mut acc = T::zero();
            for (i, &ab) in a_b.iter().enumerate() {
                if ab != T::zero() {
                    acc += ab * self.binv[i * m + k];
                }
            }
            next[m * (m + 1) + k] = -acc;
        }
        next[m * (m + 1) + m] = T::one();
        self.binv = next;
        self.basis.push(slack);
    }

    fn column(&self, j: usize) -> ColumnIter<'_, T> {
        if j < self.n_struct {
            ColumnIter::Sparse(self.cols[j].iter())
        } else {
            ColumnIter::Unit(Some(j - self.n_struct))
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.num_rows();
        // Dense B, then Gauss-Jordan with partial pivoting on [B | I].
        let mut b = vec![T::zero(); m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            for (i, a) in self.column(j) {
                b[i * m + pos] = a;
            }
        }
        let mut inv = vec![T::zero(); m * m];
        for i in 0..m {
            inv[i * m + i] = T::one();
        }
        for c in 0..m {
            let mut p = c;
            for r in (c + 1)..m {
                if b[r * m + c].abs() > b[p * m + c].abs() {
                    p = r;
                }
            }
            let piv = b[p * m + c];
            if piv.abs() <= T::epsilon() {
                return Err(Error::State("singular basis during refactorization".into()));
            }
            if p != c {
                for k in 0..m {
                    b.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let s = T::one() / piv;
            for k in 0..m {
                b[c * m + k] *= s;
                inv[c * m + k] *= s;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = b[r * m + c];
                if f == T::zero() {
                    continue;
                }
                for k in 0..m {
                    let bv = b[c * m + k];
                    let iv = inv[c * m + k];
                    b[r * m + k] -= f * bv;
                    inv[r * m + k] -= f * iv;
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_primal();
        self.recompute_duals();
        Ok(())
    }

    fn recompute_primal(&mut self) {
        let m = self.num_rows();
        let mut resid = self.rhs.clone();
        for j in 0..self.cost.len() {
            if matches!(self.status[j], Status::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj == T::zero() {
                continue;
            }
            for (i, a) in self.column(j) {
                resid[i] -= a * xj;
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            let v: T = row.iter().zip(&resid).map(|(&a, &b)| a * b).sum();
            self.x[self.basis[pos]] = v;
        }
    }

    fn recompute_duals(&mut self) {
        let m = self.num_rows();
        let mut y = vec![T::zero(); m];
        for (pos, &j) in self.basis.iter().enumerate() {
            let cb = self.cost[j];
            if cb == T::zero() {
                continue;
            }
            for k in 0..m {
                y[k] += cb * self.binv[pos * m + k];
            }
        }
        for j in 0..self.cost.len() {
            if matches!(self.status[j], Status::Basic(_)) {
                self.d[j] = T::zero();
                continue;
            }
            let ya: T = self.column(j).map(|(i, a)| y[i] * a).sum();
            self.d[j] = self.cost[j] - ya;
        }
    }

    /// Basis position with the largest bound violation, or the smallest
    /// variable index among violated ones under Bland's rule.
    fn choose_leaving(&self) -> Option<(usize, bool)> {
        let mut best: Option<(usize, bool, T)> = None;
        for (pos, &j) in self.basis.iter().enumerate() {
            let xj = self.x[j];
            let (infeas, below) = if xj < self.lower[j] - self.feas_tol {
                (self.lower[j] - xj, true)
            } else if xj > self.upper[j] + self.feas_tol {
                (xj - self.upper[j], false)
            } else {
                continue;
            };
            let better = match best {
                None => true,
                Some((bp, _, bi)) => {
                    if self.bland {
                        j < self.basis[bp]
                    } else {
                        infeas > bi
                    }
                }
            };
            if better {
                best = Some((pos, below, infeas));
            }
        }
        best.map(|(p, b, _)| (p, b))
    }

    /// Runs dual simplex iterations until primal feasibility.
    pub fn optimize(&mut self, max_pivots: usize) -> Result<usize> {
        let start = self.total_pivots;
        loop {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let Some((r, below)) = self.choose_leaving() else {
                // Confirm on fresh factors before declaring optimality.
                if self.since_refactor > 0 {
                    self.refactor()?;
                    if self.choose_leaving().is_some() {
                        continue;
                    }
                }
                return Ok(self.total_pivots - start);
            };
            if self.total_pivots - start >= max_pivots {
                return Err(Error::LpIterationLimit);
            }
            self.pivot(r, below)?;
        }
    }

    fn pivot(&mut self, r: usize, below: bool) -> Result<()> {
        let m = self.num_rows();
        let leaving = self.basis[r];
        let rho = self.binv[r * m..(r + 1) * m].to_vec();

        // Dual ratio test over the pivot row α_j = ρ · a_j.
        let mut entering: Option<(usize, T, T)> = None; // (j, alpha, ratio)
        let mut row_alpha: Vec<(usize, T)> = Vec::new();
        for j in 0..self.cost.len() {
            let at_upper = match self.status[j] {
                Status::Basic(_) => continue,
                Status::AtLower => false,
                Status::AtUpper => true,
            };
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let alpha: T = self.column(j).map(|(i, a)| rho[i] * a).sum();
            if alpha != T::zero() {
                row_alpha.push((j, alpha));
            }
            // x_leaving moves by −α Δx_j; it must move toward the violated bound.
            let ok = match (below, at_upper) {
                (true, false) => alpha < -self.piv_tol,
                (true, true) => alpha > self.piv_tol,
                (false, false) => alpha > self.piv_tol,
                (false, true) => alpha < -self.piv_tol,
            };
            if !ok {
                continue;
            }
            let dj = if at_upper {
                (-self.d[j]).max(T::zero())
            } else {
                self.d[j].max(T::zero())
            };
            let ratio = dj / alpha.abs();
            let better = match entering {
                None => true,
                Some((bj, ba, br)) => {
                    if ratio < br {
                        true
                    } else if ratio == br {
                        if self.bland {
                            j < bj
                        } else {
                            alpha.abs() > ba.abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                entering = Some((j, alpha, ratio));
            }
        }
        let Some((q, alpha_q, _)) = entering else {
            return Err(Error::Infeasible { row: r });
        };

        // w = B⁻¹ a_q
        let mut w = vec![T::zero(); m];
        for (i, a) in self.column(q) {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk += self.binv[k * m + i] * a;
            }
        }
        let target = if below { self.lower[leaving] } else { self.upper[leaving] };
        let step = (self.x[leaving] - target) / alpha_q;
        for (k, &wk) in w.iter().enumerate() {
            if wk != T::zero() {
                let j = self.basis[k];
                self.x[j] -= wk * step;
            }
        }
        self.x[q] += step;
        self.x[leaving] = target;

        let theta = self.d[q] / alpha_q;
        if theta.abs() <= self.piv_tol {
            self.degenerate_run += 1;
            if self.degenerate_run >= DEGENERATE_LIMIT && !self.bland {
                trace!("switching to Bland's rule after {} degenerate pivots", self.degenerate_run);
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
        if theta != T::zero() {
            for &(j, alpha) in &row_alpha {
                self.d[j] -= theta * alpha;
            }
        }
        self.d[q] = T::zero();
        self.d[leaving] = -theta;

        // Eta update of B⁻¹ on pivot element w_r.
        let wr = w[r];
        if wr.abs() <= T::epsilon() {
            return Err(Error::State("vanishing pivot element".into()));
        }
        let inv_wr = T::one() / wr;
        for k in 0..m {
            self.binv[r * m + k] *= inv_wr;
        }
        let pivot_row = self.binv[r * m..(r + 1) * m].to_vec();
        for (i, &wi) in w.iter().enumerate() {
            if i == r || wi == T::zero() {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (b, &p) in row.iter_mut().zip(&pivot_row) {
                *b -= wi * p;
            }
        }

        self.basis[r] = q;
        self.status[q] = Status::Basic(r);
        self.status[leaving] = if below { Status::AtLower } else { Status::AtUpper };
        self.total_pivots += 1;
        self.since_refactor += 1;
        Ok(())
    }
}

enum ColumnIter<'a, T> {
    Sparse(std::slice::Iter<'a, (usize, T)>),
    Unit(Option<usize>),
}

impl<T: Scalar> Iterator for ColumnIter<'_, T> {
    type Item = (usize, T);

    #[inline]
    fn next(&mut self) -> Option<(usize, T)> {
        match self {
            ColumnIter::Sparse(it) => it.next().copied(),
            ColumnIter::Unit(r) => r.take().map(|r| (r, T::one())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_lp() {
        // min x0 + 2 x1  s.t.  x0 + x1 = 1.5, 0 ≤ x ≤ 1
        let mut s = DualSimplex::<f64>::new(vec![1.0, 2.0], vec![0.0; 2], vec![1.0; 2]).unwrap();
        s.add_row(&SparseRow { coeffs: vec![(0, 1.0), (1, 1.0)], sense: Sense::Eq, rhs: 1.5 });
        s.optimize(100).unwrap();
        assert!((s.objective() - 2.0).abs() < 1e-12);
        // x1 ≤ 0.25 makes it infeasible.
        s.add_row(&SparseRow { coeffs: vec![(1, 1.0)], sense: Sense::Le, rhs: 0.25 });
        assert!(matches!(s.optimize(100), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn ge_row_warm_start() {
        // min x0 + x1 + x2, x0 + x1 + x2 ≥ 2 appended after an empty solve.
        let mut s = DualSimplex::<f64>::new(vec![1.0, 1.0, 3.0], vec![0.0; 3], vec![1.0; 3]).unwrap();
        s.optimize(10).unwrap();
        assert_eq!(s.objective(), 0.0);
        s.add_row(&SparseRow {
            coeffs: vec![(0, 1.0), (1, 1.0), (2, 1.0)],
            sense: Sense::Ge,
            rhs: 2.0,
        });
        s.optimize(10).unwrap();
        assert!((s.objective() - 2.0).abs() < 1e-12);
    }
}
