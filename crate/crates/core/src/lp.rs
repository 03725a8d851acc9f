//! Small dense two-phase simplex with Bland's rule. Sized for per-intersection
//! programs of a few dozen rows and columns.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coef: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// maximize `objective . x` subject to `constraints`, `x >= 0`.
#[derive(Clone, Debug)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-10;

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f.abs() < 1e-300 {
                continue;
            }
            for j in 0..self.rows[i].len() {
                self.rows[i][j] -= f * self.rows[r][j];
            }
            self.rhs[i] -= f * self.rhs[r];
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost` over the current basis; columns with `allowed[j]`
    /// false never enter. Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            let n = cost.len();
            let mut entering = None;
            for j in 0..n {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let z: f64 = self
                    .basis
                    .iter()
                    .zip(&self.rows)
                    .map(|(&b, row)| cost[b] * row[j])
                    .sum();
                if cost[j] - z > EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > EPS {
                    let ratio = self.rhs[r] / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - EPS
                                || (ratio <= lratio + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leaving else { return false };
            self.pivot(r, c);
        }
    }
}

pub fn solve(lp: &Lp) -> LpOutcome {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    // Normalize to nonnegative right-hand sides.
    let rows: Vec<(Vec<f64>, Cmp, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            assert_eq!(c.coef.len(), n);
            if c.rhs < 0.0 {
                let cmp = match c.cmp {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
                (c.coef.iter().map(|v| -v).collect(), cmp, -c.rhs)
            } else {
                (c.coef.clone(), c.cmp, c.rhs)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Cmp::Le).count();
    let total = n + n_slack + n_art;
    let mut t = Tableau {
        rows: vec![vec![0.0; total]; m],
        rhs: vec![0.0; m],
        basis: vec![0; m],
    };
    let mut is_art = vec![false; total];
    let (mut s, mut a) = (n, n + n_slack);
    for (r, (coef, cmp, rhs)) in rows.iter().enumerate() {
        t.rows[r][..n].copy_from_slice(coef);
        t.rhs[r] = *rhs;
        match cmp {
            Cmp::Le => {
                t.rows[r][s] = 1.0;
                t.basis[r] = s;
                s += 1;
            }
            Cmp::Ge => {
                t.rows[r][s] = -1.0;
                s += 1;
                t.rows[r][a] = 1.0;
                t.basis[r] = a;
                is_art[a] = true;
                a += 1;
            }
            Cmp::Eq => {
                t.rows[r][a] = 1.0;
                t.basis[r] = a;
                is_art[a] = true;
                a += 1;
            }
        }
    }

    if n_art > 0 {
        let cost: Vec<f64> = is_art.iter().map(|&x| if x { -1.0 } else { 0.0 }).collect();
        let allowed = vec![true; total];
        t.optimize(&cost, &allowed);
        let infeas: f64 = t
            .basis
            .iter()
            .zip(&t.rhs)
            .filter(|(&b, _)| is_art[b])
            .map(|(_, &v)| v)
            .sum();
        if infeas > 1e-9 {
            return LpOutcome::Infeasible;
        }
        // Drive remaining zero-level artificials out of the basis.
        let mut r = 0;
        while r < t.rows.len() {
            if is_art[t.basis[r]] {
                match (0..total).find(|&j| !is_art[j] && t.rows[r][j].abs() > 1e-9) {
                    Some(j) => t.pivot(r, j),
                    None => {
                        t.rows.remove(r);
                        t.rhs.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = is_art.iter().map(|&x| !x).collect();
    if !t.optimize(&cost, &allowed) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[r];
        }
    }
    let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}
