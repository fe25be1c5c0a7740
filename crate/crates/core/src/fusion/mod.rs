//! Early fusion of hand-crafted features into the content model, late
//! fusion of model scores, and the validation sweep over both.

mod bundle;
mod early;
mod late;
mod sweep;

pub use bundle::{
    combination_members, BundleFiles, BundleInfo, BundleManifest, BundleScore, Prepared, Preprocessor, SimComBundle,
    BUNDLE_FORMAT,
};
pub use early::{EarlyFusion, EarlyStrategy, FusionCache};
pub use late::{late_fuse, weight_grid, LateFusionRule, LateStrategy, GEOMETRIC_FLOOR};
pub use sweep::{fuse_columns, sweep_combinations, ComponentScores, SweepCell, SweepResult};
