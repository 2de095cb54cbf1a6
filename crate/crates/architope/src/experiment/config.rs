//! Declarative experiment configuration.  A config file plus a seed
//! fully determines a run: reports contain no timestamps and every
//! random stream is derived from the config, so identical configs
//! produce byte-identical report bodies.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, Error};
use crate::learners::{Activation, FitConfig, PolyBasis};
use crate::measure::{DensityTable, MeasureSpec, QuadratureScheme};
use crate::metrics::FunctionHandle;
use crate::partition::Partition;
use crate::tope::LearnerSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub measure: MeasureConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub upgrade: Option<UpgradeSection>,
    #[serde(default)]
    pub gap_demo: Option<GapDemoSection>,
    #[serde(default)]
    pub diagnostic: Option<DiagnosticSection>,
    #[serde(default)]
    pub metrics: Option<MetricsSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    #[default]
    Lebesgue,
    Gaussian {
        sigma: f64,
    },
    ExpDecay {
        lambda: f64,
    },
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionConfig {
    Shells { regions: usize, width: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadratureConfig {
    TensorMidpoint {
        refinement: u32,
    },
    MonteCarlo {
        samples: u64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    /// The indicator of one partition region.
    Indicator {
        region: usize,
    },
    /// `exp(-lambda * ||x||_1)`.
    ExpDecay {
        #[serde(default = "default_one")]
        lambda: f64,
    },
    /// `exp(-||x||^2 / (2 sigma^2))`.
    Gaussian {
        #[serde(default = "default_inv_sqrt2")]
        sigma: f64,
    },
    /// `sin(frequency * Σ_k x_k)`.
    Sine {
        #[serde(default = "default_one")]
        frequency: f64,
    },
    /// `||x||_1`.
    Abs,
    /// Sampled values: linear interpolation for d = 1, nearest sample
    /// for d >= 2 (an approximation layer, not an exact target).
    Csv {
        path: PathBuf,
    },
}

fn default_one() -> f64 {
    1.0
}

fn default_inv_sqrt2() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerConfig {
    Polynomial {
        degree: usize,
        #[serde(default = "default_basis")]
        basis: PolyBasis,
    },
    Mlp {
        hidden: Vec<usize>,
        #[serde(default = "default_activation")]
        activation: Activation,
    },
}

fn default_basis() -> PolyBasis {
    PolyBasis::Chebyshev
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::Polynomial {
            degree: 6,
            basis: PolyBasis::Chebyshev,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_node_budget")]
    pub node_budget: u32,
    #[serde(default)]
    pub regularization: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub batch_size: usize,
}

fn default_node_budget() -> u32 {
    1024
}

fn default_epochs() -> usize {
    2000
}

fn default_learning_rate() -> f64 {
    0.1
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            node_budget: default_node_budget(),
            regularization: 0.0,
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            batch_size: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct UpgradeSection {
    pub regions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GapDemoSection {
    pub degrees: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DiagnosticSection {
    /// One of the built-in families, or "models-dir" with `models-dir`
    /// pointing at serialized models.
    pub family: String,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_support_tol")]
    pub support_tol: f64,
    #[serde(default)]
    pub models_dir: Option<PathBuf>,
    /// Overrides the top-level target for the diagnostic; the verdict
    /// needs a compactly supported target even when the surrounding
    /// experiment approximates something global.
    #[serde(default)]
    pub target: Option<TargetConfig>,
}

fn default_length() -> usize {
    48
}

fn default_tol() -> f64 {
    0.1
}

fn default_support_tol() -> f64 {
    1e-9
}

pub const DIAGNOSTIC_FAMILIES: &[&str] = &[
    "shrinking-on-k1",
    "leaking-to-k2",
    "marching-support",
    "stalling",
    "models-dir",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MetricsSection {
    pub g: TargetConfig,
    #[serde(default)]
    pub truncation: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Structural validation, run before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dimension == 0 {
            return Err(ConfigError::invalid("dimension", "must be at least 1"));
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(ConfigError::invalid("p", "must lie in [1, inf)"));
        }
        match &self.measure {
            MeasureConfig::Gaussian { sigma } if !(sigma.is_finite() && *sigma > 0.0) => {
                return Err(ConfigError::invalid("measure.sigma", "must be positive"));
            }
            MeasureConfig::ExpDecay { lambda } if !(lambda.is_finite() && *lambda > 0.0) => {
                return Err(ConfigError::invalid("measure.lambda", "must be positive"));
            }
            _ => {}
        }
        match &self.partition {
            PartitionConfig::Shells { regions, width } => {
                if *regions == 0 {
                    return Err(ConfigError::invalid(
                        "partition.regions",
                        "must be at least 1",
                    ));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(ConfigError::invalid(
                        "partition.width",
                        "must be positive (zero-width regions have zero mass)",
                    ));
                }
            }
            PartitionConfig::File { .. } => {}
        }
        if let Some(q) = &self.quadrature {
            match q {
                QuadratureConfig::TensorMidpoint { refinement } if *refinement < 2 => {
                    return Err(ConfigError::invalid(
                        "quadrature.refinement",
                        "must be at least 2",
                    ));
                }
                QuadratureConfig::MonteCarlo { samples: 0, .. } => {
                    return Err(ConfigError::invalid(
                        "quadrature.samples",
                        "must be positive",
                    ));
                }
                _ => {}
            }
        }
        if let Some(TargetConfig::Indicator { region }) = &self.target {
            if *region == 0 {
                return Err(ConfigError::invalid("target.region", "indices start at 1"));
            }
        }
        if let LearnerConfig::Mlp { hidden, .. } = &self.learner {
            if hidden.iter().any(|&w| w == 0) {
                return Err(ConfigError::invalid(
                    "learner.hidden",
                    "layer widths must be positive",
                ));
            }
        }
        if self.fit.node_budget < 2 {
            return Err(ConfigError::invalid("fit.node-budget", "must be at least 2"));
        }
        if !(self.fit.learning_rate.is_finite() && self.fit.learning_rate > 0.0) {
            return Err(ConfigError::invalid("fit.learning-rate", "must be positive"));
        }
        if self.fit.regularization < 0.0 {
            return Err(ConfigError::invalid(
                "fit.regularization",
                "must be nonnegative",
            ));
        }
        if let Some(u) = &self.upgrade {
            if u.regions == 0 {
                return Err(ConfigError::invalid("upgrade.regions", "must be at least 1"));
            }
        }
        if let Some(d) = &self.diagnostic {
            if !DIAGNOSTIC_FAMILIES.contains(&d.family.as_str()) {
                return Err(ConfigError::invalid(
                    "diagnostic.family",
                    format!(
                        "unknown family `{}`; known: {}",
                        d.family,
                        DIAGNOSTIC_FAMILIES.join(", ")
                    ),
                ));
            }
            if d.family == "models-dir" && d.models_dir.is_none() {
                return Err(ConfigError::invalid(
                    "diagnostic.models-dir",
                    "required when family = \"models-dir\"",
                ));
            }
            if d.length == 0 {
                return Err(ConfigError::invalid("diagnostic.length", "must be at least 1"));
            }
            if !(d.tol.is_finite() && d.tol > 0.0) {
                return Err(ConfigError::invalid("diagnostic.tol", "must be positive"));
            }
            if !(d.support_tol.is_finite() && d.support_tol > 0.0) {
                return Err(ConfigError::invalid(
                    "diagnostic.support-tol",
                    "must be positive",
                ));
            }
        }
        Ok(())
    }

    /// Canonical hash of the effective config; stamped on every report
    /// row so tables trace back to their inputs.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn build_measure(&self) -> Result<MeasureSpec, Error> {
        Ok(match &self.measure {
            MeasureConfig::Lebesgue => MeasureSpec::lebesgue(self.dimension),
            MeasureConfig::Gaussian { sigma } => MeasureSpec::gaussian(self.dimension, *sigma),
            MeasureConfig::ExpDecay { lambda } => MeasureSpec::exp_decay(self.dimension, *lambda),
            MeasureConfig::Table { path } => {
                let table = DensityTable::from_csv_path(path).map_err(|e| {
                    ConfigError::invalid("measure.path", e.to_string())
                })?;
                if table.dimension() != self.dimension {
                    return Err(ConfigError::invalid(
                        "measure.path",
                        format!(
                            "table has {} coordinate columns, config dimension is {}",
                            table.dimension(),
                            self.dimension
                        ),
                    )
                    .into());
                }
                MeasureSpec::from_table(table, format!("table({})", path.display()))
            }
        })
    }

    pub fn build_partition(&self) -> Result<Partition, Error> {
        match &self.partition {
            PartitionConfig::Shells { regions, width } => {
                Ok(Partition::shells(self.dimension, *regions, *width)?)
            }
            PartitionConfig::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let partition = Partition::from_json_str(&text)
                    .map_err(|e| ConfigError::invalid("partition.path", e.to_string()))?;
                if partition.dimension() != self.dimension {
                    return Err(ConfigError::invalid(
                        "partition.path",
                        format!(
                            "partition has dimension {}, config says {}",
                            partition.dimension(),
                            self.dimension
                        ),
                    )
                    .into());
                }
                Ok(partition)
            }
        }
    }

    pub fn build_quadrature(&self) -> QuadratureScheme {
        match &self.quadrature {
            Some(QuadratureConfig::TensorMidpoint { refinement }) => {
                QuadratureScheme::tensor(*refinement)
            }
            Some(QuadratureConfig::MonteCarlo { samples, seed }) => {
                QuadratureScheme::monte_carlo(*samples, seed.unwrap_or(self.seed))
            }
            None => {
                if self.dimension <= 3 {
                    QuadratureScheme::tensor(4096 >> (self.dimension.saturating_sub(1) * 4))
                } else {
                    QuadratureScheme::monte_carlo(1 << 20, self.seed)
                }
            }
        }
    }

    pub fn build_fit_config(&self) -> FitConfig {
        FitConfig {
            p: self.p,
            node_budget: self.fit.node_budget,
            regularization: self.fit.regularization,
            epochs: self.fit.epochs,
            learning_rate: self.fit.learning_rate,
            batch_size: self.fit.batch_size,
            seed: self.seed,
        }
    }

    pub fn build_learner(&self) -> LearnerSpec {
        match &self.learner {
            LearnerConfig::Polynomial { degree, basis } => LearnerSpec::Polynomial {
                degree: *degree,
                basis: *basis,
            },
            LearnerConfig::Mlp { hidden, activation } => LearnerSpec::Mlp {
                hidden: hidden.clone(),
                activation: *activation,
            },
        }
    }

    pub fn build_target(&self, partition: &Partition) -> Result<FunctionHandle, Error> {
        let spec = self
            .target
            .as_ref()
            .ok_or_else(|| ConfigError::invalid("target", "this command needs a target"))?;
        build_function(spec, "target", self.dimension, partition)
    }

    pub fn build_named_function(
        &self,
        spec: &TargetConfig,
        path: &str,
        partition: &Partition,
    ) -> Result<FunctionHandle, Error> {
        build_function(spec, path, self.dimension, partition)
    }
}

fn build_function(
    spec: &TargetConfig,
    config_path: &str,
    dimension: usize,
    partition: &Partition,
) -> Result<FunctionHandle, Error> {
    Ok(match spec {
        TargetConfig::Indicator { region } => {
            let region = partition
                .region(*region)
                .map_err(|e| ConfigError::invalid(format!("{config_path}.region"), e.to_string()))?
                .clone();
            let label = format!("indicator(K{})", region.index);
            FunctionHandle::scalar(label, move |x| {
                if region.membership(x) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        TargetConfig::ExpDecay { lambda } => {
            let l = *lambda;
            FunctionHandle::scalar(format!("exp-decay({l})"), move |x| {
                (-l * x.iter().map(|v| v.abs()).sum::<f64>()).exp()
            })
        }
        TargetConfig::Gaussian { sigma } => {
            let inv = 1.0 / (2.0 * sigma * sigma);
            FunctionHandle::scalar(format!("gaussian({sigma})"), move |x| {
                (-x.iter().map(|v| v * v).sum::<f64>() * inv).exp()
            })
        }
        TargetConfig::Sine { frequency } => {
            let f = *frequency;
            FunctionHandle::scalar(format!("sine({f})"), move |x| {
                (f * x.iter().sum::<f64>()).sin()
            })
        }
        TargetConfig::Abs => {
            FunctionHandle::scalar("abs", |x| x.iter().map(|v| v.abs()).sum::<f64>())
        }
        TargetConfig::Csv { path } => {
            let table = TargetTable::from_csv_path(path, dimension)
                .map_err(|e| ConfigError::invalid(format!("{config_path}.path"), e))?;
            let d = table.output_dimension;
            FunctionHandle::new(format!("csv({})", path.display()), d, move |x| table.eval(x))
        }
    })
}

/// Sampled vector-valued target: header `x_1..x_d` names the coordinate
/// columns, every remaining column is one output component.
#[derive(Debug, Clone)]
struct TargetTable {
    dimension: usize,
    output_dimension: usize,
    points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl TargetTable {
    fn from_csv_path(path: &Path, dimension: usize) -> Result<Self, String> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let headers = reader.headers().map_err(|e| e.to_string())?.clone();
        let coord_cols = headers
            .iter()
            .take_while(|h| h.starts_with("x_") || *h == "x")
            .count();
        if coord_cols != dimension {
            return Err(format!(
                "expected {dimension} coordinate columns (x_1..x_{dimension}), found {coord_cols}"
            ));
        }
        if headers.len() == coord_cols {
            return Err("no output columns after the coordinates".into());
        }
        let mut points = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| e.to_string())?;
            let mut nums = Vec::with_capacity(record.len());
            for field in record.iter() {
                nums.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| format!("bad number `{field}`: {e}"))?,
                );
            }
            let vals = nums.split_off(coord_cols);
            if vals.iter().chain(&nums).any(|v| !v.is_finite()) {
                return Err(format!("non-finite sample near {nums:?}"));
            }
            points.push(nums);
            values.push(vals);
        }
        if points.is_empty() {
            return Err("table has no rows".into());
        }
        let output_dimension = values[0].len();
        let mut joined: Vec<(Vec<f64>, Vec<f64>)> = points.into_iter().zip(values).collect();
        if dimension == 1 {
            joined.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        }
        let (points, values) = joined.into_iter().unzip();
        Ok(Self {
            dimension,
            output_dimension,
            points,
            values,
        })
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        if self.dimension == 1 {
            let q = x[0];
            let n = self.points.len();
            if q <= self.points[0][0] {
                return self.values[0].clone();
            }
            if q >= self.points[n - 1][0] {
                return self.values[n - 1].clone();
            }
            let hi = self.points.partition_point(|p| p[0] < q);
            let (x0, x1) = (self.points[hi - 1][0], self.points[hi][0]);
            let t = if x1 == x0 { 0.0 } else { (q - x0) / (x1 - x0) };
            self.values[hi - 1]
                .iter()
                .zip(&self.values[hi])
                .map(|(a, b)| a + (b - a) * t)
                .collect()
        } else {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, p) in self.points.iter().enumerate() {
                let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            self.values[best].clone()
        }
    }
}
