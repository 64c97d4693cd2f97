//! Least-squares projection onto the convex pmfs.
//!
//! Every convex pmf is a mixture of triangular pmfs, so the projection is a
//! least-squares fit over the simplex of weights on `T_1..T_K`. For a pmf
//! supported on `{0..S}` the fit is usually supported on `{0..S+1}`
//! (`K = S + 2`), but small irregular samples can push it further out; the
//! basis is enlarged until the optimality conditions hold for every `k`.

use serde::{Deserialize, Serialize};

use crate::active_set::{GramQp, Region, Workspace};
use crate::pmf::{mixture_to_pmf, triangular_mass, Pmf, TriangularMixture};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexLseResult {
    pub fit: Pmf,
    /// Support end of the projected pmf (`S_n` for an empirical pmf).
    pub input_support_end: usize,
    pub weights: TriangularMixture,
    /// `sum_j (p(j) - fit(j))^2`.
    pub sq_distance: f64,
    /// Largest violation of the variational inequality characterizing the
    /// projection.
    pub kkt_residual: f64,
}

impl ConvexLseResult {
    /// `Delta fit(k)` read off the mixture weights, so positions without a
    /// knot give exactly 0.
    pub fn delta_fit(&self, k: usize) -> f64 {
        let w = self.weights.weight(k);
        if w == 0.0 {
            0.0
        } else {
            2.0 * w / (k * (k + 1)) as f64
        }
    }
}

/// `<p - q, T_k - q>`; nonpositive for every `k` exactly when `q` is the
/// projection of `p`.
pub fn variational_gap(p: &Pmf, q: &Pmf, k: usize) -> f64 {
    let len = p.mass().len().max(q.mass().len()).max(k);
    (0..len)
        .map(|i| (p.at(i) - q.at(i)) * (triangular_mass(k, i) - q.at(i)))
        .sum()
}

pub fn convex_lse(p: &Pmf) -> ConvexLseResult {
    // Start from T_1..T_{S+2}; long triangles are occasionally needed for
    // small samples, so the basis grows until the tail is certified.
    let base = p.support_end() + 2;
    let mut len = base;
    loop {
        let (result, tail_gap) = fit_with_basis(p, len);
        if tail_gap <= TAIL_TOL || len >= MAX_BASIS_FACTOR * base {
            return result;
        }
        len *= 2;
    }
}

const TAIL_TOL: f64 = 1e-14;
const MAX_BASIS_FACTOR: usize = 16;

/// Fit over `T_1..T_len` on `{0..len-1}`, with the largest variational gap
/// over all `k > len`.
fn fit_with_basis(p: &Pmf, len: usize) -> (ConvexLseResult, f64) {
    let basis: Vec<Vec<f64>> = (1..=len)
        .map(|k| (0..len).map(|i| triangular_mass(k, i)).collect())
        .collect();
    let target = p.padded(len);
    let mut gram = vec![0.0; len * len];
    for a in 0..len {
        for b in a..len {
            let v = dot(&basis[a], &basis[b]);
            gram[a * len + b] = v;
            gram[b * len + a] = v;
        }
    }
    let linear: Vec<f64> = basis.iter().map(|col| dot(col, &target)).collect();
    let qp = GramQp {
        gram: &gram,
        linear: &linear,
        region: Region::Simplex,
    };
    let mut ws = Workspace::default();
    qp.solve(&mut ws);
    let weights = TriangularMixture::new(ws.solution().to_vec())
        .expect("active-set iterates stay on the simplex");
    let fit = mixture_to_pmf(&weights);

    let resid: Vec<f64> = (0..len).map(|i| target[i] - fit.at(i)).collect();
    let sq_distance = resid.iter().map(|r| r * r).sum();
    let along_fit: f64 = (0..len).map(|i| resid[i] * fit.at(i)).sum();
    let in_basis = basis
        .iter()
        .enumerate()
        .map(|(idx, col)| {
            let gap = dot(&resid, col) - along_fit;
            if weights.weight(idx + 1) > 0.0 {
                gap.abs()
            } else {
                gap.max(0.0)
            }
        })
        .fold(0.0f64, f64::max);
    // Both p and the fit vanish past len - 1, and their masses agree, so for
    // k > len the gap is -<r, fit> - 2 M / (k (k + 1)) with
    // M = sum_i i r(i): monotone in k, checked at k = len + 1 and k -> inf.
    let moment: f64 = resid.iter().enumerate().map(|(i, r)| i as f64 * r).sum();
    let k = (len + 1) as f64;
    let tail_gap = (-along_fit - 2.0 * moment / (k * (k + 1.0))).max(-along_fit);

    let result = ConvexLseResult {
        fit,
        input_support_end: p.support_end(),
        weights,
        sq_distance,
        kkt_residual: in_basis.max(tail_gap),
    };
    (result, tail_gap)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
