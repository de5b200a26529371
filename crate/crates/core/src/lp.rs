//! Dense two-phase simplex for tiny standard-form LPs
//! `min cᵀx  s.t.  Ax = b, x ≥ 0`, using Bland's rule.

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-11;

struct Tableau {
    /// rows × (cols + 1); last column is the rhs
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over the allowed columns; `None` if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Option<()> {
        loop {
            // reduced costs
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let rc = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &bj)| cost[bj] * self.t[i][j])
                        .sum::<f64>();
                if rc < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Some(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[self.cols] / row[c];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let (r, _) = leave?;
            self.pivot(r, c);
        }
    }
}

pub(crate) fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    let cols = n + m;
    let mut t = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; cols + 1];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[cols] = sign * b[i];
        t.push(row);
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), cols };

    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, cols).expect("phase one is bounded");
    let infeas: f64 = tab.basis.iter().enumerate().filter(|(_, &j)| j >= n).map(|(i, _)| tab.t[i][cols]).sum();
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if infeas > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| tab.t[r][j].abs() > 1e-9) {
                tab.pivot(r, c);
            }
        }
    }
    // Rows still holding an artificial are redundant; the artificial stays at 0.
    let mut cost = c.to_vec();
    cost.resize(cols, 0.0);
    if tab.optimize(&cost, n).is_none() {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &j) in tab.basis.iter().enumerate() {
        if j < n {
            x[j] = tab.t[i][cols];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}
