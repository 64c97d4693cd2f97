//! Least-squares projections: onto convex pmfs, and onto polyhedral cones
//! of vectors with nonnegative second differences at chosen positions.

mod cone;
mod gaussian;
mod lse;

pub use cone::{
    cone_project, sq_distance, ConeKkt, ConeProjector, ConeSpec, ProjectionWorkspace, KKT_TOL,
};
pub use gaussian::{
    dispersion_matrix, factor_psd, rank_diagnostic, sample_gaussian, DispersionMatrix,
    GaussianFactor, PSD_CLAMP, PSD_REJECT,
};
pub use lse::{convex_lse, variational_gap, ConvexLseResult};
