//! Base model classes fitted region by region: polynomial least squares
//! and a small trainable feedforward network, plus the extension-by-zero
//! wrapper that gates a model onto its region.

mod mlp;
mod polynomial;

pub use mlp::{fit_mlp, gradient_check, Activation, MlpModel, TrainTrace};
pub use polynomial::{basis_size, fit_polynomial, PolyBasis, PolyFitReport, PolynomialModel};

use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::measure::{MeasureSpec, QuadratureScheme};
use crate::metrics::FunctionHandle;
use crate::partition::Region;

/// Knobs shared by the fit routines.  A fixed seed makes every fit
/// deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Exponent the surrounding error reports target.  Least squares is
    /// solved in L^2 regardless; the report exponent only affects how
    /// results are measured afterwards.
    pub p: f64,
    /// Nodes per axis for the fit grid over the region's bounding box.
    pub node_budget: u32,
    /// Ridge weight for polynomial fits.
    pub regularization: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            node_budget: 1024,
            regularization: 0.0,
            epochs: 2000,
            learning_rate: 0.1,
            batch_size: 0,
            seed: 0,
        }
    }
}

/// A fitted local model; the architope stores these per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Polynomial(PolynomialModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Polynomial(m) => m.evaluate(x),
            Model::Mlp(m) => m.evaluate(x),
        }
    }

    pub fn output_dimension(&self) -> usize {
        match self {
            Model::Polynomial(m) => m.output_dimension(),
            Model::Mlp(m) => m.output_dimension(),
        }
    }

    pub fn handle(&self, label: impl Into<String>) -> FunctionHandle {
        let model = self.clone();
        FunctionHandle::new(label, self.output_dimension(), move |x| model.evaluate(x))
    }
}

/// Fit sample: quadrature nodes of the region's bounding box, masked by
/// membership.  Nodes outside the region carry zero weight and are
/// dropped; the weighted objective is unchanged.
#[derive(Debug)]
pub(crate) struct FitSample {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
}

pub(crate) fn collect_fit_sample(
    target: &FunctionHandle,
    region: &Region,
    measure: &MeasureSpec,
    config: &FitConfig,
) -> Result<FitSample, FitError> {
    let d = region.dimension();
    let scheme = QuadratureScheme::default_for(d, config.node_budget, config.seed);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut targets = Vec::new();
    scheme.for_each_node(region.bounding_box(), |x, w| {
        if !region.membership(x) {
            return Ok(());
        }
        let rho = measure.density_at(x);
        if !rho.is_finite() {
            return Err(crate::error::MeasureError::NonFiniteDensity { at: x.to_vec() });
        }
        if rho < 0.0 {
            return Err(crate::error::MeasureError::NegativeDensity {
                at: x.to_vec(),
                value: rho,
            });
        }
        let wt = w * rho;
        if wt > 0.0 {
            points.push(x.to_vec());
            weights.push(wt);
        }
        Ok(())
    })?;
    if points.is_empty() {
        return Err(FitError::EmptyFitSupport);
    }
    for x in &points {
        let y = target.evaluate(x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFiniteTarget { at: x.clone() });
        }
        targets.push(y);
    }
    Ok(FitSample {
        points,
        weights,
        targets,
    })
}

/// Gates a function onto a region: the result returns `f(x)` inside the
/// region and the zero vector elsewhere, so its essential support sits
/// inside the region by construction.
pub fn extend_by_zero(f: &FunctionHandle, region: &Region) -> FunctionHandle {
    let inner = f.clone();
    let gate = region.clone();
    let dim = f.output_dimension();
    FunctionHandle::new(
        format!("{}*I(K{})", f.label(), region.index),
        dim,
        move |x| {
            if gate.membership(x) {
                inner.evaluate(x)
            } else {
                vec![0.0; dim]
            }
        },
    )
}
