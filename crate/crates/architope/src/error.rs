//! Error types, one enum per subsystem, aggregated for the CLI.
//!
//! The CLI contract distinguishes validation failures (exit code 2)
//! from numerical failures (exit code 3); see [`Error::exit_code`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("box bounds have mismatched dimensions (lo: {lo}, hi: {hi})")]
    DimensionMismatch { lo: usize, hi: usize },
    #[error("box bound on axis {axis} is not finite")]
    NonFiniteBound { axis: usize },
    #[error("box side on axis {axis} is degenerate ([{lo}, {hi}])")]
    DegenerateSide { axis: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("density is not finite at node {at:?}")]
    NonFiniteDensity { at: Vec<f64> },
    #[error("density is negative ({value}) at node {at:?}")]
    NegativeDensity { at: Vec<f64>, value: f64 },
    #[error("integrand is not finite at node {at:?}")]
    NonFiniteIntegrand { at: Vec<f64> },
    #[error("tensor-midpoint refinement must be at least 2 (got {got})")]
    InvalidRefinement { got: u32 },
    #[error("monte-carlo sample count must be positive")]
    InvalidSampleCount,
    #[error("dimension mismatch: measure has d = {measure}, input has d = {input}")]
    DimensionMismatch { measure: usize, input: usize },
    #[error("density table: {0}")]
    Table(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum PartitionError {
    /// Region mass at or below the null tolerance: the partition cannot
    /// carry local models on that region.
    #[error("region {region} has mass {mass:.3e} <= {tol:.0e} under the configured measure")]
    AssumptionViolation { region: usize, mass: f64, tol: f64 },
    #[error("region {region}: {message}")]
    InvalidRegion { region: usize, message: String },
    #[error("region index {region} out of range (partition has {len} regions)")]
    IndexOutOfRange { region: usize, len: usize },
    #[error("partition must contain at least one region")]
    Empty,
    #[error("shell width must be positive and finite (got {width})")]
    InvalidShellWidth { width: f64 },
    #[error("regions must be indexed 1..=N in order (expected {expected}, found {found})")]
    BadIndexing { expected: usize, found: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("exponent p must lie in [1, inf) (got {p})")]
    InvalidExponent { p: f64 },
    #[error("output dimensions differ ({left} vs {right})")]
    OutputDimensionMismatch { left: usize, right: usize },
    #[error("truncation {requested} exceeds partition size {available}")]
    TruncationTooLarge { requested: usize, available: usize },
    #[error("function `{label}` is not finite at {at:?}")]
    NonFiniteValue { label: String, at: Vec<f64> },
    #[error("diagnostic target has unbounded essential support on this partition")]
    UnboundedTargetSupport,
    #[error("diagnostic sequence is empty")]
    EmptySequence,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no quadrature node with positive weight falls inside the region")]
    EmptyFitSupport,
    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid layer widths: {message}")]
    InvalidWidths { message: String },
    #[error("gradient check requires the tanh activation")]
    GradientCheckNeedsTanh,
    #[error("gradient step h = {h} outside [1e-6, 1e-4]")]
    InvalidGradientStep { h: f64 },
    #[error("target is not finite at node {at:?}")]
    NonFiniteTarget { at: Vec<f64> },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Error)]
pub enum TopeError {
    #[error("all scales are zero; an architope needs at least one nonzero beta")]
    AllScalesZero,
    #[error("duplicate term for region {region}")]
    DuplicateRegion { region: usize },
    #[error("term references region {region} outside the partition")]
    UnknownRegion { region: usize },
    #[error("gap demo needs a partition with at least 2 regions")]
    NeedTwoRegions,
    #[error("fit failed on region {region}: {source}")]
    Fit { region: usize, source: FitError },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Configuration problems carry the offending field path so reports
/// point at the exact key to fix.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Tope(#[from] TopeError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// 2 for validation/input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Geometry(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
