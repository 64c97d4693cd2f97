//! Test statistic, Monte Carlo calibration and decisions.
//!
//! The statistic is `n * sum_j (p_n(j) - phat_n(j))^2`, where `phat_n` is
//! the convex least-squares fit of the empirical pmf. Its null law is
//! approximated by `sum_k (g(k) - ghat(k))^2`, with `g ~ N(0, Gamma_n)` of
//! dimension `S_n + 2` and `ghat` the projection of `g` onto a cone:
//!
//! * [`Method::Knot`] imposes `Delta g(x) >= 0` only where
//!   `Delta phat_n(x) <= v_n`, exempting the estimated knots;
//! * [`Method::Lfh`] imposes it at every `x` in `{1..S_n}`, which calibrates
//!   against the least favorable (triangular) null.
//!
//! Both sides are on the squared scale, so the decision matches the one
//! made with square roots on both sides.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::pmf::{empirical_pmf, Sample};
use crate::projection::{
    convex_lse, dispersion_matrix, factor_psd, ConeProjector, ConeSpec, ConvexLseResult,
    GaussianFactor, ProjectionWorkspace,
};
use crate::rng::RngStream;
use crate::stats::upper_rank;

/// Threshold sequence `v_n` separating estimated knots from flat spots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VnRule {
    Zero,
    /// `sqrt(log(log n)) / sqrt(n)`
    SqrtLogLog,
    /// `n^(-1/4)`
    Quarter,
    Constant(f64),
}

impl fmt::Display for VnRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VnRule::Zero => f.write_str("zero"),
            VnRule::SqrtLogLog => f.write_str("loglog"),
            VnRule::Quarter => f.write_str("quarter"),
            VnRule::Constant(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for VnRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(VnRule::Zero),
            "loglog" => Ok(VnRule::SqrtLogLog),
            "quarter" => Ok(VnRule::Quarter),
            other => {
                let c: f64 = other
                    .parse()
                    .map_err(|_| invalid(format!("unknown vn rule `{other}`")))?;
                if !c.is_finite() || c < 0.0 {
                    return Err(invalid(format!("constant vn must be finite and >= 0, got {c}")));
                }
                Ok(VnRule::Constant(c))
            }
        }
    }
}

impl Serialize for VnRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VnRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
            Raw::Number(c) => c.to_string().parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn vn_value(rule: &VnRule, n: usize) -> Result<f64> {
    let nf = n as f64;
    match rule {
        VnRule::Zero => Ok(0.0),
        VnRule::SqrtLogLog => {
            if n < 3 {
                return Err(invalid(format!("loglog threshold needs n >= 3, got {n}")));
            }
            Ok(nf.ln().ln().sqrt() / nf.sqrt())
        }
        VnRule::Quarter => {
            if n == 0 {
                return Err(invalid("quarter threshold needs n >= 1"));
            }
            Ok(nf.powf(-0.25))
        }
        VnRule::Constant(c) => Ok(*c),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Knot,
    Lfh,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Knot => "knot",
            Method::Lfh => "lfh",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "knot" => Ok(Method::Knot),
            "lfh" => Ok(Method::Lfh),
            other => Err(invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub alpha: f64,
    /// Number of Monte Carlo draws `B`.
    pub draws: usize,
    pub method: Method,
    /// Only used by [`Method::Knot`].
    pub vn: VnRule,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            draws: 1000,
            method: Method::Lfh,
            vn: VnRule::Quarter,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.draws == 0 {
            return Err(invalid("number of Monte Carlo draws must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub n: usize,
    pub s_n: usize,
    pub method: Method,
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    /// Threshold `v_n` used to exempt knots; `None` for [`Method::Lfh`].
    pub vn_value: Option<f64>,
    pub vn_rule: Option<VnRule>,
    /// Positions in `{1..S_n}` where convexity was imposed on the draws.
    pub constrained_positions: Vec<usize>,
    /// Calibration statistics, sorted ascending.
    pub mc_statistics: Vec<f64>,
    /// Worst optimality residual over the convex fit and all projections.
    pub max_kkt_residual: f64,
    pub fit: Vec<f64>,
}

/// `n * |p_n - phat_n|^2` together with the convex fit.
pub fn test_statistic(s: &Sample) -> (f64, ConvexLseResult) {
    let lse = convex_lse(&empirical_pmf(s));
    (s.len() as f64 * lse.sq_distance, lse)
}

/// Cone of dimension `S_n + 2` with convexity imposed at every
/// `x in {1..S_n}` where `Delta phat_n(x) <= vn`.
pub fn knot_constraint_set(lse: &ConvexLseResult, vn: f64) -> Result<ConeSpec> {
    if vn.is_nan() || vn < 0.0 {
        return Err(invalid(format!("vn must be >= 0, got {vn}")));
    }
    let s_n = lse.input_support_end;
    ConeSpec::new(s_n + 2, (1..=s_n).filter(|&x| lse.delta_fit(x) <= vn))
}

/// Monte Carlo calibration values in draw order, with the worst KKT
/// residual seen. Draw `b` uses the child stream `b` of `seed`.
#[derive(Debug, Clone)]
pub struct McDraws {
    pub statistics: Vec<f64>,
    pub max_kkt_residual: f64,
}

pub fn calibration_draws(
    factor: &GaussianFactor,
    projector: &ConeProjector,
    draws: usize,
    seed: u64,
) -> McDraws {
    let root = RngStream::new(seed);
    let per_draw: Vec<(f64, f64)> = (0..draws)
        .into_par_iter()
        .map_init(DrawScratch::default, |scratch, b| {
            let mut rng = root.child(b as u64);
            factor.sample_into(&mut rng, &mut scratch.z, &mut scratch.g);
            projector.project_into(&scratch.g, &mut scratch.ws, &mut scratch.h);
            let stat = scratch
                .g
                .iter()
                .zip(&scratch.h)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let kkt = projector.kkt(&scratch.g, &scratch.h).residual();
            (stat, kkt)
        })
        .collect();
    McDraws {
        statistics: per_draw.iter().map(|d| d.0).collect(),
        max_kkt_residual: per_draw.iter().map(|d| d.1).fold(0.0, f64::max),
    }
}

#[derive(Default)]
struct DrawScratch {
    z: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    ws: ProjectionWorkspace,
}

pub fn calibrate(s: &Sample, cfg: &CalibrationConfig) -> Result<TestReport> {
    cfg.validate()?;
    let n = s.len();
    let s_n = s.max();
    if s_n == 0 {
        return Err(Error::DegenerateSupport);
    }
    let p_n = empirical_pmf(s);
    let lse = convex_lse(&p_n);
    let statistic = n as f64 * lse.sq_distance;
    let dim = s_n + 2;

    let (cone, vn) = match cfg.method {
        Method::Knot => {
            let v = vn_value(&cfg.vn, n)?;
            (knot_constraint_set(&lse, v)?, Some(v))
        }
        Method::Lfh => (ConeSpec::convex(dim), None),
    };
    let factor = factor_psd(&dispersion_matrix(&p_n, dim))?;
    let projector = ConeProjector::new(&cone);
    let mc = calibration_draws(&factor, &projector, cfg.draws, cfg.seed);

    let mut sorted = mc.statistics;
    sorted.sort_by(f64::total_cmp);
    let critical_value = sorted[upper_rank(1.0 - cfg.alpha, cfg.draws) - 1];
    let exceed = sorted.len() - sorted.partition_point(|&t| t < statistic);
    let p_value = (1 + exceed) as f64 / (cfg.draws + 1) as f64;

    Ok(TestReport {
        statistic,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        n,
        s_n,
        method: cfg.method,
        alpha: cfg.alpha,
        draws: cfg.draws,
        seed: cfg.seed,
        vn_value: vn,
        vn_rule: (cfg.method == Method::Knot).then_some(cfg.vn),
        constrained_positions: cone.constrained().to_vec(),
        mc_statistics: sorted,
        max_kkt_residual: mc.max_kkt_residual.max(lse.kkt_residual),
        fit: lse.fit.mass().to_vec(),
    })
}
