//! Euclidean projection onto cones `{h in R^d : Delta h(x) >= 0 for x in A}`.
//!
//! The constraint rows of `D` (one second difference per position in `A`)
//! are linearly independent, so the projection is `g + D' lambda` where
//! `lambda >= 0` solves the dual nonnegative least-squares problem
//! `min |D' lambda + g|^2`. The active set of that problem is the set of
//! constraints that bind at the projection.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::active_set::{GramQp, Region, Workspace};
use crate::error::{invalid, Result};

/// Tolerance used when certifying projections.
pub const KKT_TOL: f64 = 1e-8;

/// Ambient dimension and the positions where convexity is imposed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    dim: usize,
    constrained: Vec<usize>,
}

impl ConeSpec {
    pub fn new(dim: usize, constrained: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = constrained.into_iter().collect();
        if let Some(&x) = set.iter().find(|&&x| x == 0 || x + 2 > dim) {
            return Err(invalid(format!(
                "constraint position {x} outside 1..={} for dimension {dim}",
                dim.saturating_sub(2)
            )));
        }
        Ok(Self {
            dim,
            constrained: set.into_iter().collect(),
        })
    }

    /// All convex vectors of length `dim`.
    pub fn convex(dim: usize) -> Self {
        Self {
            dim,
            constrained: (1..dim.saturating_sub(1)).collect(),
        }
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self {
            dim,
            constrained: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    pub fn contains(&self, g: &[f64], tol: f64) -> bool {
        g.len() == self.dim && self.constrained.iter().all(|&x| second_diff(g, x) >= -tol)
    }
}

fn second_diff(g: &[f64], x: usize) -> f64 {
    g[x + 1] - 2.0 * g[x] + g[x - 1]
}

/// Breakdown of how far a candidate projection is from optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeKkt {
    /// Largest violation of `Delta h(x) >= 0` on constrained positions.
    pub infeasibility: f64,
    /// `|<g - h, h>|`, relative to `max(1, |g|^2)`.
    pub complementarity: f64,
    /// Largest `<g - h, r>` over unit extreme rays `r`, and `|<g - h, l>|`
    /// over an orthonormal basis `l` of the lineality space.
    pub dual_infeasibility: f64,
}

impl ConeKkt {
    pub fn residual(&self) -> f64 {
        self.infeasibility
            .max(self.complementarity)
            .max(self.dual_infeasibility)
    }
}

/// A cone with its Gram matrix and certification directions precomputed,
/// for projecting many vectors onto the same cone.
#[derive(Debug, Clone)]
pub struct ConeProjector {
    spec: ConeSpec,
    gram: Vec<f64>,
    rays: Vec<Vec<f64>>,
    lineality: Vec<Vec<f64>>,
}

/// Scratch buffers for [`ConeProjector::project_into`].
#[derive(Debug, Default, Clone)]
pub struct ProjectionWorkspace {
    qp: Workspace,
    linear: Vec<f64>,
}

impl ConeProjector {
    pub fn new(spec: &ConeSpec) -> Self {
        let rows = spec.constrained();
        let r = rows.len();
        let d = spec.dim();
        let mut gram = vec![0.0; r * r];
        for (a, &xa) in rows.iter().enumerate() {
            for (b, &xb) in rows.iter().enumerate() {
                gram[a * r + b] = match xa.abs_diff(xb) {
                    0 => 6.0,
                    1 => -4.0,
                    2 => 1.0,
                    _ => 0.0,
                };
            }
        }
        let (rays, lineality) = certification_directions(rows, d);
        Self {
            spec: spec.clone(),
            gram,
            rays,
            lineality,
        }
    }

    pub fn spec(&self) -> &ConeSpec {
        &self.spec
    }

    /// Projects `g` into `out` (resized to the cone dimension).
    pub fn project_into(&self, g: &[f64], ws: &mut ProjectionWorkspace, out: &mut Vec<f64>) {
        debug_assert_eq!(g.len(), self.spec.dim());
        out.clear();
        out.extend_from_slice(g);
        let rows = self.spec.constrained();
        if rows.is_empty() {
            return;
        }
        ws.linear.clear();
        ws.linear.extend(rows.iter().map(|&x| -second_diff(g, x)));
        let qp = GramQp {
            gram: &self.gram,
            linear: &ws.linear,
            region: Region::Orthant,
        };
        qp.solve(&mut ws.qp);
        for (&x, &lambda) in rows.iter().zip(ws.qp.solution()) {
            if lambda != 0.0 {
                out[x - 1] += lambda;
                out[x] -= 2.0 * lambda;
                out[x + 1] += lambda;
            }
        }
    }

    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.spec.dim() {
            return Err(invalid(format!(
                "vector of length {} does not match cone dimension {}",
                g.len(),
                self.spec.dim()
            )));
        }
        let mut out = Vec::with_capacity(g.len());
        self.project_into(g, &mut ProjectionWorkspace::default(), &mut out);
        Ok(out)
    }

    /// Checks the optimality conditions of `h` as the projection of `g`.
    pub fn kkt(&self, g: &[f64], h: &[f64]) -> ConeKkt {
        let infeasibility = self
            .spec
            .constrained()
            .iter()
            .map(|&x| -second_diff(h, x))
            .fold(0.0f64, f64::max);
        let resid: Vec<f64> = g.iter().zip(h).map(|(a, b)| a - b).collect();
        let norm_sq: f64 = g.iter().map(|v| v * v).sum();
        let complementarity = dot(&resid, h).abs() / norm_sq.max(1.0);
        let scale = norm_sq.sqrt().max(1.0);
        let rays = self
            .rays
            .iter()
            .map(|r| dot(&resid, r))
            .fold(0.0f64, f64::max);
        let lines = self
            .lineality
            .iter()
            .map(|l| dot(&resid, l).abs())
            .fold(0.0f64, f64::max);
        ConeKkt {
            infeasibility,
            complementarity,
            dual_infeasibility: rays.max(lines) / scale,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit extreme rays of the pointed part of the cone (columns of the
/// pseudo-inverse of `D`) and an orthonormal basis of its null space.
fn certification_directions(rows: &[usize], d: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let r = rows.len();
    let mut dmat = DMatrix::<f64>::zeros(r, d);
    for (a, &x) in rows.iter().enumerate() {
        dmat[(a, x - 1)] = 1.0;
        dmat[(a, x)] = -2.0;
        dmat[(a, x + 1)] = 1.0;
    }
    let rays = if r == 0 {
        Vec::new()
    } else {
        let gram = &dmat * dmat.transpose();
        let inv = gram
            .try_inverse()
            .expect("second-difference rows are independent");
        let pinv = dmat.transpose() * inv;
        pinv.column_iter()
            .map(|c| {
                let n = c.norm();
                c.iter().map(|v| v / n).collect()
            })
            .collect()
    };
    let eig = SymmetricEigen::new(dmat.transpose() * &dmat);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lineality = order[..d - r]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (rays, lineality)
}

/// Projection of `g` onto the cone described by `cone`.
pub fn cone_project(g: &[f64], cone: &ConeSpec) -> Result<Vec<f64>> {
    ConeProjector::new(cone).project(g)
}

/// Squared Euclidean distance.
pub fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
