//! Brute-force reference solvers for tests. Exponential in the number of
//! constraints; only meant for dimensions up to about 10.

use crate::pmf::{triangular_mass, Pmf};
use crate::projection::ConeSpec;

/// Dense Gaussian elimination with partial pivoting. `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (offset, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot[col];
            for (x, y) in r[col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * y;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn row(x: usize, dim: usize) -> Vec<f64> {
    let mut r = vec![0.0; dim];
    r[x - 1] = 1.0;
    r[x] = -2.0;
    r[x + 1] = 1.0;
    r
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Projection onto the cone by trying every set of active constraints and
/// keeping the closest feasible candidate.
pub fn cone_project_enumerate(g: &[f64], cone: &ConeSpec) -> Vec<f64> {
    let dim = cone.dim();
    let rows: Vec<Vec<f64>> = cone.constrained().iter().map(|&x| row(x, dim)).collect();
    let feasible = |h: &[f64]| {
        rows.iter()
            .all(|r| r.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() >= -1e-11)
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<&Vec<f64>> = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, r)| r)
            .collect();
        // h = g - A' (A A')^{-1} A g
        let h = if active.is_empty() {
            g.to_vec()
        } else {
            let gram: Vec<Vec<f64>> = active
                .iter()
                .map(|ri| {
                    active
                        .iter()
                        .map(|rj| ri.iter().zip(rj.iter()).map(|(a, b)| a * b).sum())
                        .collect()
                })
                .collect();
            let ag: Vec<f64> = active
                .iter()
                .map(|r| r.iter().zip(g).map(|(a, b)| a * b).sum())
                .collect();
            let Some(mu) = solve_dense(gram, ag) else {
                continue;
            };
            let mut h = g.to_vec();
            for (r, m) in active.iter().zip(&mu) {
                for (hk, rk) in h.iter_mut().zip(r.iter()) {
                    *hk -= m * rk;
                }
            }
            h
        };
        if !feasible(&h) {
            continue;
        }
        let d = dist2(&h, g);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, h));
        }
    }
    best.expect("the zero-constraint or all-active candidate is feasible").1
}

/// Convex least-squares fit by enumerating the support of the triangular
/// mixture weights: every subset of `T_1..T_{S+1}`, plus a tail of either one
/// triangle `T_k` or an adjacent pair `T_k, T_{k+1}` with `S+1 < k < 6(S+2)`.
/// Past the last atom the fit is a single linear piece, whose end may fall
/// between two integers; a pmf with most of its mass on the last atom needs a
/// tail several times longer than `S`.
pub fn convex_lse_enumerate(p: &Pmf) -> Vec<f64> {
    let s = p.support_end();
    let len = 6 * (s + 2);
    let target = p.padded(len);
    let cols: Vec<Vec<f64>> = (1..=len)
        .map(|k| (0..len).map(|i| triangular_mass(k, i)).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram: Vec<Vec<f64>> = cols
        .iter()
        .map(|ci| cols.iter().map(|cj| dot(ci, cj)).collect())
        .collect();
    let lin: Vec<f64> = cols.iter().map(|c| dot(c, &target)).collect();
    let head = s + 1;

    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for mask in 0u32..(1 << head) {
        let base: Vec<usize> = (0..head).filter(|i| mask & (1 << i) != 0).collect();
        let singles = (head..len).map(|k| vec![k]);
        let pairs = (head..len - 1).map(|k| vec![k, k + 1]);
        let tails = std::iter::once(Vec::new()).chain(singles).chain(pairs);
        for tail in tails {
            let mut support = base.clone();
            support.extend(tail);
            let m = support.len();
            if m == 0 {
                continue;
            }
            // [T'T 1; 1' 0] [w; nu] = [T'p; 1]
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut b = vec![0.0; m + 1];
            for (i, &ci) in support.iter().enumerate() {
                for (j, &cj) in support.iter().enumerate() {
                    a[i][j] = gram[ci][cj];
                }
                a[i][m] = 1.0;
                a[m][i] = 1.0;
                b[i] = lin[ci];
            }
            b[m] = 1.0;
            let Some(sol) = solve_dense(a, b) else {
                continue;
            };
            let w = &sol[..m];
            if w.iter().any(|&x| x < -1e-12) {
                continue;
            }
            // |p - Tw|^2 up to the constant |p|^2
            let mut obj = 0.0;
            for (i, &ci) in support.iter().enumerate() {
                obj -= 2.0 * w[i] * lin[ci];
                for (j, &cj) in support.iter().enumerate() {
                    obj += w[i] * w[j] * gram[ci][cj];
                }
            }
            if best.as_ref().is_none_or(|(bo, _, _)| obj < *bo) {
                best = Some((obj, support, w.to_vec()));
            }
        }
    }
    let (_, support, w) = best.expect("single-vertex supports are always feasible");
    let mut fit = vec![0.0; len];
    for (&ci, &wi) in support.iter().zip(&w) {
        for (f, c) in fit.iter_mut().zip(&cols[ci]) {
            *f += wi * c;
        }
    }
    fit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_identity_inside_cone() {
        let g = [2.0, 1.0, 0.5, 0.5, 1.0];
        let h = cone_project_enumerate(&g, &ConeSpec::convex(5));
        assert!(dist2(&g, &h) < 1e-24);
    }

    #[test]
    fn oracle_lse_fixed_point() {
        let p = crate::pmf::null_mixture();
        let fit = convex_lse_enumerate(&p);
        assert!(dist2(&fit, &p.padded(fit.len())) < 1e-20);
    }
}
