//! Primal active-set solver for small dense quadratic programs
//!
//! ```text
//! minimize  1/2 x' G x - b' x   subject to  x >= 0   [and sum(x) = 1]
//! ```
//!
//! with `G` symmetric positive definite. This is the Lawson-Hanson scheme in
//! Gram form, extended to the simplex by eliminating the multiplier of the
//! sum constraint inside each subproblem. Problems here have at most a few
//! dozen variables, so subproblems are re-factored from scratch.

/// Feasible region of the QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Region {
    Orthant,
    Simplex,
}

#[derive(Debug, Clone, Copy)]
#[allow(dead_code)]
pub(crate) struct Status {
    pub iterations: usize,
    pub converged: bool,
}

/// Row-major `n x n` Gram matrix and linear term.
pub(crate) struct GramQp<'a> {
    pub gram: &'a [f64],
    pub linear: &'a [f64],
    pub region: Region,
}

/// Reusable buffers so repeated solves of the same size do not allocate.
#[derive(Debug, Default, Clone)]
pub(crate) struct Workspace {
    passive: Vec<usize>,
    in_passive: Vec<bool>,
    x: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    chol: Vec<f64>,
    rhs: Vec<f64>,
    ones: Vec<f64>,
}

impl Workspace {
    pub fn solution(&self) -> &[f64] {
        &self.x
    }
}

const MAX_ITER_FACTOR: usize = 10;

impl GramQp<'_> {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn g(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.dim() + j]
    }

    /// Solves the QP; the minimizer is left in [`Workspace::solution`].
    pub fn solve(&self, ws: &mut Workspace) -> Status {
        let n = self.dim();
        debug_assert_eq!(self.gram.len(), n * n);
        ws.passive.clear();
        ws.in_passive.clear();
        ws.in_passive.resize(n, false);
        ws.x.clear();
        ws.x.resize(n, 0.0);
        ws.w.resize(n, 0.0);

        let scale = 1.0
            + self.linear.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + (0..n).fold(0.0f64, |m, i| m.max(self.g(i, i)));
        let tol = 1e-14 * scale;

        if self.region == Region::Simplex {
            // Start at the best vertex.
            let start = (0..n)
                .min_by(|&a, &b| {
                    let fa = 0.5 * self.g(a, a) - self.linear[a];
                    let fb = 0.5 * self.g(b, b) - self.linear[b];
                    fa.total_cmp(&fb)
                })
                .expect("non-empty problem");
            ws.x[start] = 1.0;
            ws.passive.push(start);
            ws.in_passive[start] = true;
        }

        let max_iter = MAX_ITER_FACTOR * (n + 1);
        let mut iterations = 0;
        let mut converged = false;
        let mut last_added = usize::MAX;
        while iterations < max_iter {
            iterations += 1;
            self.residual(ws);
            let level = match self.region {
                Region::Orthant => 0.0,
                Region::Simplex => {
                    ws.passive.iter().map(|&i| ws.w[i]).sum::<f64>() / ws.passive.len() as f64
                }
            };
            let entering = (0..n)
                .filter(|&j| !ws.in_passive[j])
                .map(|j| (j, ws.w[j] - level))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            let j = match entering {
                Some((j, gain)) if gain > tol && j != last_added => j,
                Some((_, gain)) if gain > tol => break,
                _ => {
                    converged = true;
                    break;
                }
            };
            ws.passive.push(j);
            ws.in_passive[j] = true;
            last_added = j;

            // Inner loop: move toward the subproblem optimum, dropping
            // variables that hit zero.
            let mut singular = false;
            loop {
                if !self.solve_subproblem(ws) {
                    singular = true;
                    break;
                }
                let blocked = ws.passive.iter().any(|&i| ws.z[i] <= 0.0);
                if !blocked {
                    for &i in &ws.passive {
                        ws.x[i] = ws.z[i];
                    }
                    break;
                }
                let mut step = 1.0f64;
                for &i in &ws.passive {
                    if ws.z[i] <= 0.0 {
                        let denom = ws.x[i] - ws.z[i];
                        if denom > 0.0 {
                            step = step.min(ws.x[i] / denom);
                        } else {
                            step = 0.0;
                        }
                    }
                }
                for &i in &ws.passive {
                    ws.x[i] += step * (ws.z[i] - ws.x[i]);
                }
                let x = &mut ws.x;
                let in_passive = &mut ws.in_passive;
                ws.passive.retain(|&i| {
                    let keep = x[i] > tol;
                    if !keep {
                        x[i] = 0.0;
                        in_passive[i] = false;
                    }
                    keep
                });
                if ws.passive.is_empty() {
                    break;
                }
            }
            if singular {
                ws.passive.retain(|&i| i != j);
                ws.in_passive[j] = false;
                ws.x[j] = 0.0;
                break;
            }
        }

        if self.region == Region::Simplex {
            let total: f64 = ws.x.iter().sum();
            if total > 0.0 {
                ws.x.iter_mut().for_each(|v| *v /= total);
            }
        }
        Status {
            iterations,
            converged,
        }
    }

    /// `w = b - G x`, the negative gradient.
    fn residual(&self, ws: &mut Workspace) {
        let n = self.dim();
        for i in 0..n {
            let row = &self.gram[i * n..(i + 1) * n];
            let gx: f64 = ws
                .passive
                .iter()
                .map(|&j| row[j] * ws.x[j])
                .sum();
            ws.w[i] = self.linear[i] - gx;
        }
    }

    /// Unconstrained (or sum-constrained) minimizer over the passive set,
    /// written into `ws.z`. Returns false if the reduced Gram matrix is not
    /// numerically positive definite.
    fn solve_subproblem(&self, ws: &mut Workspace) -> bool {
        let m = ws.passive.len();
        let n = self.dim();
        ws.z.clear();
        ws.z.resize(n, 0.0);
        ws.chol.clear();
        ws.chol.resize(m * m, 0.0);
        for (a, &i) in ws.passive.iter().enumerate() {
            for (b, &j) in ws.passive.iter().enumerate().take(a + 1) {
                ws.chol[a * m + b] = self.g(i, j);
            }
        }
        if !cholesky_in_place(&mut ws.chol, m) {
            return false;
        }
        ws.rhs.clear();
        ws.rhs.extend(ws.passive.iter().map(|&i| self.linear[i]));
        cholesky_solve(&ws.chol, m, &mut ws.rhs);
        if self.region == Region::Simplex {
            ws.ones.clear();
            ws.ones.resize(m, 1.0);
            cholesky_solve(&ws.chol, m, &mut ws.ones);
            let sum_b: f64 = ws.rhs.iter().sum();
            let sum_1: f64 = ws.ones.iter().sum();
            let nu = (1.0 - sum_b) / sum_1;
            for (r, o) in ws.rhs.iter_mut().zip(&ws.ones) {
                *r += nu * o;
            }
        }
        for (a, &i) in ws.passive.iter().enumerate() {
            ws.z[i] = ws.rhs[a];
        }
        true
    }
}

/// Lower Cholesky factor stored in the lower triangle of the row-major
/// `m x m` buffer.
fn cholesky_in_place(a: &mut [f64], m: usize) -> bool {
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], m: usize, b: &mut [f64]) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= l[k * m + i] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
}
