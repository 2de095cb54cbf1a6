//! Piecewise local-expert ensembles on compact partitions of R^d.
//!
//! The library fits a base model class (polynomials or a small MLP)
//! region by region on a partition, glues the fitted pieces into a
//! hard-gated ensemble — an *architope* — and measures approximation
//! quality under three regimes:
//!
//! * the plain L^p distance over a truncated cover,
//! * the local-L^p metric, a weighted series that discounts errors on
//!   far-out regions,
//! * the strict norm, the max of the per-region L^p norms, under which
//!   convergence additionally demands eventual essential-support
//!   containment.
//!
//! The strict regime is the interesting one: a single analytic model
//! (any global polynomial) can never vanish on an open region, so it
//! always leaves mass on regions outside the target's support, while
//! the gated ensemble matches compactly supported targets exactly.
//! [`tope::gap_demo`] tabulates that separation; the
//! [`metrics::strict_convergence_diagnostic`] checks the
//! support-containment condition on sequences.
//!
//! Start with the runnable examples (`cargo run --example upgrade`,
//! `gap_demo`, `convergence_diagnostic`, …) or the `architope` binary,
//! which drives the same runners from declarative TOML configs.

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod learners;
pub mod measure;
pub mod metrics;
pub mod partition;
pub mod tope;

pub use error::Error;
pub use geometry::AxisBox;
pub use measure::{integrate, integrate_region, MeasureSpec, QuadratureScheme};
pub use metrics::{ErrorReport, FunctionHandle};
pub use partition::{Partition, Region};
pub use tope::{Architope, LearnerSpec};
