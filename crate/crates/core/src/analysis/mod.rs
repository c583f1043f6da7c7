//! Post-optimization analysis: free-motion manifolds, principal axes of the
//! desired grasps, force-closure margins and the comparison report tying
//! them together.

mod closure;
mod manifold;
mod pca;
mod report;

pub use closure::{
    force_closure_margin, force_closure_margin_with, grasp_force_closure, margin_along,
    sample_directions, ForceClosureReport, MarginOptions, CLOSURE_TOLERANCE,
};
pub use manifold::{derive_mrm, mrm_distance, MRManifold};
pub use pca::{pca_grasps, pca_rows, PCAResult};
pub use report::{
    build_comparison_report, reduction_percent, ComparisonOptions, ComparisonReport,
    FingerComparison, PhaseComparison, PoseDistance,
};
