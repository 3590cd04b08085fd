//! Small dense two-phase simplex for the certificate programs.
//!
//! Problems here have a handful of variables and at most a few thousand
//! rows, so a textbook tableau with Bland's rule is plenty.

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// `maximize c.x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

impl Lp {
    pub fn new(objective: Vec<f64>) -> Self {
        Lp {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn add(&mut self, row: Vec<f64>, cmp: Cmp, rhs: f64) {
        debug_assert_eq!(row.len(), self.objective.len());
        self.rows.push((row, cmp, rhs));
    }

    pub fn maximize(&self) -> LpOutcome {
        Tableau::build(self).solve(&self.objective)
    }
}

struct Tableau {
    n: usize,
    /// `m` rows of `cols + 1` entries, right-hand side last.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    artificial_from: usize,
}

impl Tableau {
    fn build(lp: &Lp) -> Self {
        let n = lp.objective.len();
        let rows: Vec<(Vec<f64>, Cmp, f64)> = lp
            .rows
            .iter()
            .map(|(a, cmp, b)| {
                if *b < 0.0 {
                    let flipped = match cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.iter().map(|x| -x).collect(), flipped, -b)
                } else {
                    (a.clone(), *cmp, *b)
                }
            })
            .collect();
        let slacks = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let artificials = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let cols = n + slacks + artificials;
        let artificial_from = n + slacks;
        let mut t = Vec::with_capacity(rows.len());
        let mut basis = Vec::with_capacity(rows.len());
        let (mut s, mut a) = (n, artificial_from);
        for (coef, cmp, b) in rows {
            let mut row = vec![0.0; cols + 1];
            row[..n].copy_from_slice(&coef);
            row[cols] = b;
            match cmp {
                Cmp::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Cmp::Ge => {
                    row[s] = -1.0;
                    s += 1;
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
                Cmp::Eq => {
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
            }
            t.push(row);
        }
        Tableau {
            n,
            t,
            basis,
            cols,
            artificial_from,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for x in self.t[r].iter_mut() {
            *x /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex on `cost` (maximized) over the allowed columns.
    /// Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        loop {
            // reduced costs, Bland's rule: first improving column
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let z: f64 = self.t.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum();
                if cost[j] - z > EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[self.cols] / row[c];
                    let better = match leave {
                        None => true,
                        Some((l, best)) => ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn solve(mut self, objective: &[f64]) -> LpOutcome {
        let mut phase1 = vec![0.0; self.cols];
        for c in phase1.iter_mut().skip(self.artificial_from) {
            *c = -1.0;
        }
        self.optimize(&phase1, self.cols);
        let infeasibility: f64 = self
            .t
            .iter()
            .zip(&self.basis)
            .filter(|(_, &b)| b >= self.artificial_from)
            .map(|(row, _)| row[self.cols])
            .sum();
        if infeasibility > 1e-9 {
            return LpOutcome::Infeasible;
        }
        // drive artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < self.t.len() {
            if self.basis[i] >= self.artificial_from {
                let col = (0..self.artificial_from).find(|&j| self.t[i][j].abs() > EPS);
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.t.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.n].copy_from_slice(objective);
        if !self.optimize(&cost, self.artificial_from) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; self.n];
        for (row, &b) in self.t.iter().zip(&self.basis) {
            if b < self.n {
                x[b] = row[self.cols];
            }
        }
        let value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(lp: &Lp) -> (Vec<f64>, f64) {
        match lp.maximize() {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = Lp::new(vec![3.0, 5.0]);
        lp.add(vec![1.0, 0.0], Cmp::Le, 4.0);
        lp.add(vec![0.0, 2.0], Cmp::Le, 12.0);
        lp.add(vec![3.0, 2.0], Cmp::Le, 18.0);
        let (x, v) = optimum(&lp);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((v - 36.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x - y, x + y = 1, y >= 0.25
        let mut lp = Lp::new(vec![1.0, -1.0]);
        lp.add(vec![1.0, 1.0], Cmp::Eq, 1.0);
        lp.add(vec![0.0, 1.0], Cmp::Ge, 0.25);
        let (x, v) = optimum(&lp);
        assert!((x[0] - 0.75).abs() < 1e-9 && (v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = Lp::new(vec![1.0]);
        lp.add(vec![1.0], Cmp::Le, 1.0);
        lp.add(vec![1.0], Cmp::Ge, 2.0);
        assert_eq!(lp.maximize(), LpOutcome::Infeasible);
        let mut lp = Lp::new(vec![1.0, 0.0]);
        lp.add(vec![-1.0, 1.0], Cmp::Le, 1.0);
        assert_eq!(lp.maximize(), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_right_hand_side() {
        // max -x, -x <= -3 -> x = 3
        let mut lp = Lp::new(vec![-1.0]);
        lp.add(vec![-1.0], Cmp::Le, -3.0);
        let (x, _) = optimum(&lp);
        assert!((x[0] - 3.0).abs() < 1e-9);
    }
}
