//! Finitely supported pmfs on the nonnegative integers.
//!
//! Masses are stored densely on `{0..S}`; any index past `S` reads as 0.
//! Convex pmfs are exactly the mixtures of the triangular pmfs
//! `T_k(i) = 2 (k - i)_+ / (k (k + 1))`, and [`pmf_to_mixture`] /
//! [`mixture_to_pmf`] move between the two representations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Tolerance on the total mass of a pmf.
pub const MASS_TOL: f64 = 1e-12;

/// A second difference above this value counts as a knot.
pub const KNOT_TOL: f64 = 1e-10;

/// Second differences down to `-CONVEXITY_TOL` are accepted as convex.
pub const CONVEXITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    mass: Vec<f64>,
}

impl Pmf {
    /// Validates and wraps `mass`. Trailing zeros are trimmed so the support
    /// end is tight.
    pub fn new(mut mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(invalid("pmf needs at least one entry"));
        }
        if let Some((i, &m)) = mass
            .iter()
            .enumerate()
            .find(|(_, m)| !m.is_finite() || **m < 0.0)
        {
            return Err(invalid(format!("mass at {i} is {m}, expected >= 0")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("masses sum to {total}, expected 1")));
        }
        while mass.len() > 1 && *mass.last().unwrap() == 0.0 {
            mass.pop();
        }
        Ok(Self { mass })
    }

    /// Point mass at 0.
    pub fn dirac() -> Self {
        Self { mass: vec![1.0] }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mass at `j`, zero beyond the support.
    pub fn at(&self, j: usize) -> f64 {
        self.mass.get(j).copied().unwrap_or(0.0)
    }

    /// Largest index `S` with stored mass.
    pub fn support_end(&self) -> usize {
        self.mass.len() - 1
    }

    /// Mass vector padded with zeros (or truncated) to `len` entries.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        (0..len).map(|j| self.at(j)).collect()
    }

    pub fn delta(&self, k: usize) -> Result<f64> {
        delta(&self.mass, k)
    }

    pub fn is_convex(&self) -> bool {
        (1..=self.mass.len()).all(|k| second_difference(&self.mass, k) >= -CONVEXITY_TOL)
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;

    fn try_from(mass: Vec<f64>) -> Result<Self> {
        Pmf::new(mass)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.mass
    }
}

/// Observations `X_1..X_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<usize>,
}

impl Sample {
    pub fn new(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sample is empty"));
        }
        Ok(Self { values })
    }

    /// Expands `(value, count)` pairs. Values must be distinct and counts
    /// positive.
    pub fn from_histogram(pairs: &[(usize, usize)]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut values = Vec::new();
        for &(v, c) in pairs {
            if c == 0 {
                return Err(invalid(format!("count for value {v} is 0")));
            }
            if !seen.insert(v) {
                return Err(invalid(format!("value {v} appears twice in histogram")));
            }
            values.extend(std::iter::repeat_n(v, c));
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `S_n`, the largest observation.
    pub fn max(&self) -> usize {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Occurrences of each value in `0..=max`.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.max() + 1];
        for &v in &self.values {
            counts[v] += 1;
        }
        counts
    }
}

/// Weights `pi_1..pi_K` of a mixture of triangular pmfs; `weights()[k - 1]`
/// multiplies `T_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangularMixture {
    weights: Vec<f64>,
}

impl TriangularMixture {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("mixture needs at least one weight"));
        }
        if let Some((i, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(invalid(format!("weight pi_{} is {w}", i + 1)));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `pi_k`, zero past the stored range.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.weights.get(k - 1).copied().unwrap_or(0.0)
    }

    /// Indices `k` with a positive weight.
    pub fn active(&self) -> Vec<usize> {
        (1..=self.weights.len())
            .filter(|&k| self.weights[k - 1] > 0.0)
            .collect()
    }
}

/// `T_k(i)` for any `i`, zero for `i >= k`.
pub fn triangular_mass(k: usize, i: usize) -> f64 {
    if i >= k {
        0.0
    } else {
        2.0 * (k - i) as f64 / (k * (k + 1)) as f64
    }
}

/// The triangular pmf on `{0..k-1}`.
pub fn triangular(k: usize) -> Result<Pmf> {
    if k == 0 {
        return Err(invalid("triangular pmf needs k >= 1"));
    }
    Ok(Pmf {
        mass: (0..k).map(|i| triangular_mass(k, i)).collect(),
    })
}

/// `p(k+1) - 2 p(k) + p(k-1)` with out-of-range entries read as 0. `k` must
/// be at least 1.
pub(crate) fn second_difference(values: &[f64], k: usize) -> f64 {
    let at = |j: usize| values.get(j).copied().unwrap_or(0.0);
    at(k + 1) - 2.0 * at(k) + at(k - 1)
}

/// Discrete Laplacian of `values` at `k >= 1`.
pub fn delta(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("second difference is defined for k >= 1"));
    }
    Ok(second_difference(values, k))
}

/// Knots of `p` in `{1..S}`: positions where the slope strictly increases.
pub fn knots(p: &Pmf) -> Vec<usize> {
    (1..=p.support_end())
        .filter(|&k| second_difference(p.mass(), k) > KNOT_TOL)
        .collect()
}

pub fn mixture_to_pmf(m: &TriangularMixture) -> Pmf {
    let len = m.weights.len();
    let mut mass = vec![0.0; len];
    for (idx, &w) in m.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let k = idx + 1;
        for (i, slot) in mass.iter_mut().enumerate().take(k) {
            *slot += w * triangular_mass(k, i);
        }
    }
    while mass.len() > 1 && *mass.last().unwrap() == 0.0 {
        mass.pop();
    }
    Pmf { mass }
}

/// Recovers the mixture weights of a convex pmf through
/// `pi_k = k (k + 1) Delta p(k) / 2`.
pub fn pmf_to_mixture(p: &Pmf) -> Result<TriangularMixture> {
    let s = p.support_end();
    // T_k with k > S + 1 puts mass past S, so weights stop at S + 1.
    let mut weights = Vec::with_capacity(s + 1);
    for k in 1..=s + 1 {
        let d = second_difference(p.mass(), k);
        if d < -CONVEXITY_TOL {
            return Err(Error::ShapeViolation {
                position: k,
                value: d,
            });
        }
        weights.push(0.5 * (k * (k + 1)) as f64 * d.max(0.0));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    TriangularMixture::new(weights)
}

pub fn empirical_pmf(s: &Sample) -> Pmf {
    let n = s.len() as f64;
    Pmf {
        mass: s.counts().into_iter().map(|c| c as f64 / n).collect(),
    }
}

/// Poisson(`rate`) restricted to `{0..upper}` and renormalized.
pub fn truncated_poisson(rate: f64, upper: usize) -> Result<Pmf> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("poisson rate must be positive, got {rate}")));
    }
    let mut mass = Vec::with_capacity(upper + 1);
    let mut term = (-rate).exp();
    for j in 0..=upper {
        if j > 0 {
            term *= rate / j as f64;
        }
        mass.push(term);
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    Pmf::new(mass)
}

/// `T_6` with 0.008 of mass moved from 1 to 0, which breaks convexity at 2.
pub fn perturbed_triangular() -> Pmf {
    let mut mass = triangular(6).expect("k >= 1").mass;
    mass[0] += 0.008;
    mass[1] -= 0.008;
    Pmf { mass }
}

/// Convex null pmf without knots in its support: `T_6`.
pub fn null_triangular() -> Pmf {
    triangular(6).expect("k >= 1")
}

/// Convex null pmf with knots at 2, 3 and 5.
pub fn null_mixture() -> Pmf {
    let third = 1.0 / 3.0;
    let sixth = 1.0 / 6.0;
    let m = TriangularMixture::new(vec![0.0, sixth, sixth, 0.0, third, third])
        .expect("weights sum to one");
    mixture_to_pmf(&m)
}

/// Non-convex alternative: Poisson(1.5) truncated to `{0..5}`.
pub fn alternative_poisson() -> Pmf {
    truncated_poisson(1.5, 5).expect("positive rate")
}

/// `n` i.i.d. draws from `p` by inverse-cdf lookup.
pub fn sample_from(p: &Pmf, n: usize, rng: &mut RngStream) -> Result<Sample> {
    if n == 0 {
        return Err(invalid("sample size must be >= 1"));
    }
    let cdf = p.cdf();
    let last = p.support_end();
    let values = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect();
    Sample::new(values)
}
