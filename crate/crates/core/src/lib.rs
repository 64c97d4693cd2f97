//! Testing convexity of a discrete distribution with finite unknown support.
//!
//! The test statistic is the scaled squared distance between the empirical
//! pmf and its convex least-squares projection. Critical values come from
//! Monte Carlo draws of a Gaussian vector projected onto a polyhedral cone,
//! either with estimated knots exempted ([`Method::Knot`]) or with
//! convexity imposed everywhere ([`Method::Lfh`]).

mod active_set;
pub mod calibration;
pub mod error;
#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
pub mod pmf;
pub mod projection;
pub mod rng;
pub mod sim;
pub mod stats;

pub use calibration::{
    calibrate, knot_constraint_set, test_statistic, vn_value, CalibrationConfig, Method,
    TestReport, VnRule,
};
pub use error::{Error, Result};
pub use pmf::{Pmf, Sample, TriangularMixture};
pub use projection::{convex_lse, cone_project, ConeSpec, ConvexLseResult};
pub use rng::RngStream;
