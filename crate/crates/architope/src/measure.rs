//! Reference measures given by Lebesgue densities, plus deterministic
//! numerical integration over boxes and box-minus-box regions.
//!
//! Integrals over a full region are evaluated as the difference of two
//! box integrals (outer minus inner).  For box-minus-box regions this
//! identity is exact and keeps indicator jumps out of the integrand, so
//! the quadrature error is governed by the smoothness of the integrand
//! alone.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::MeasureError;
use crate::geometry::AxisBox;
use crate::partition::Region;

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A sigma-finite Borel measure described by its Lebesgue density.
///
/// The library never integrates over all of R^d at once; every integral
/// is taken over a box or a box-minus-box region, and unbounded domains
/// are approached through growing finite unions of regions.
#[derive(Clone)]
pub struct MeasureSpec {
    dimension: usize,
    label: String,
    density: DensityFn,
}

impl fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasureSpec")
            .field("dimension", &self.dimension)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl MeasureSpec {
    pub fn new(
        dimension: usize,
        label: impl Into<String>,
        density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dimension,
            label: label.into(),
            density: Arc::new(density),
        }
    }

    /// Lebesgue measure: density identically 1.
    pub fn lebesgue(dimension: usize) -> Self {
        Self::new(dimension, "lebesgue", |_| 1.0)
    }

    /// Product of centered normal marginals with common scale `sigma`.
    pub fn gaussian(dimension: usize, sigma: f64) -> Self {
        let norm = (sigma * (2.0 * std::f64::consts::PI).sqrt()).powi(dimension as i32);
        let inv_two_var = 1.0 / (2.0 * sigma * sigma);
        Self::new(dimension, format!("gaussian({sigma})"), move |x| {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            (-sq * inv_two_var).exp() / norm
        })
    }

    /// Density `exp(-lambda * ||x||_1)`.
    pub fn exp_decay(dimension: usize, lambda: f64) -> Self {
        Self::new(dimension, format!("exp-decay({lambda})"), move |x| {
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            (-lambda * l1).exp()
        })
    }

    /// Density tabulated on sample points (CSV-loadable).
    pub fn from_table(table: DensityTable, label: impl Into<String>) -> Self {
        let dimension = table.dimension;
        Self::new(dimension, label, move |x| table.eval(x))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Raw density value; may be non-finite for a broken density, which
    /// integration reports as a hard error rather than clamping.
    pub fn density_at(&self, x: &[f64]) -> f64 {
        (self.density)(x)
    }

    fn density_checked(&self, x: &[f64]) -> Result<f64, MeasureError> {
        let v = (self.density)(x);
        if !v.is_finite() {
            return Err(MeasureError::NonFiniteDensity { at: x.to_vec() });
        }
        if v < 0.0 {
            return Err(MeasureError::NegativeDensity {
                at: x.to_vec(),
                value: v,
            });
        }
        Ok(v)
    }

    /// The finite measure with density `density * indicator(region)`.
    pub fn restrict_to_region(&self, region: &Region) -> MeasureSpec {
        let base = Arc::clone(&self.density);
        let gate = region.clone();
        MeasureSpec {
            dimension: self.dimension,
            label: format!("{}|K{}", self.label, region.index),
            density: Arc::new(move |x| if gate.membership(x) { base(x) } else { 0.0 }),
        }
    }
}

/// Deterministic quadrature over an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuadratureScheme {
    /// Composite midpoint rule with `nodes_per_axis^d` nodes.
    TensorMidpoint { nodes_per_axis: u32 },
    /// Fixed-seed uniform sampling; the node set is a pure function of
    /// (samples, seed, box).
    MonteCarlo { samples: u64, seed: u64 },
}

impl QuadratureScheme {
    pub fn tensor(nodes_per_axis: u32) -> Self {
        Self::TensorMidpoint { nodes_per_axis }
    }

    pub fn monte_carlo(samples: u64, seed: u64) -> Self {
        Self::MonteCarlo { samples, seed }
    }

    /// Tensor midpoint for low dimension, Monte Carlo above d = 3 where
    /// tensor grids explode combinatorially.
    pub fn default_for(dimension: usize, budget: u32, seed: u64) -> Self {
        if dimension <= 3 {
            Self::TensorMidpoint {
                nodes_per_axis: budget.max(2),
            }
        } else {
            Self::MonteCarlo {
                samples: (budget as u64).pow(2),
                seed,
            }
        }
    }

    fn validate(&self) -> Result<(), MeasureError> {
        match self {
            Self::TensorMidpoint { nodes_per_axis } if *nodes_per_axis < 2 => {
                Err(MeasureError::InvalidRefinement {
                    got: *nodes_per_axis,
                })
            }
            Self::MonteCarlo { samples: 0, .. } => Err(MeasureError::InvalidSampleCount),
            _ => Ok(()),
        }
    }

    /// Visits every (node, weight) pair in a fixed order.
    pub fn for_each_node(
        &self,
        bx: &AxisBox,
        mut visit: impl FnMut(&[f64], f64) -> Result<(), MeasureError>,
    ) -> Result<(), MeasureError> {
        self.validate()?;
        let d = bx.dimension();
        match *self {
            Self::TensorMidpoint { nodes_per_axis } => {
                let r = nodes_per_axis as usize;
                let steps: Vec<f64> = bx
                    .lo
                    .iter()
                    .zip(&bx.hi)
                    .map(|(a, b)| (b - a) / r as f64)
                    .collect();
                let weight: f64 = steps.iter().product();
                let mut idx = vec![0usize; d];
                let mut node = vec![0.0f64; d];
                loop {
                    for k in 0..d {
                        node[k] = bx.lo[k] + (idx[k] as f64 + 0.5) * steps[k];
                    }
                    visit(&node, weight)?;
                    // odometer increment
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < r {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == d {
                            return Ok(());
                        }
                    }
                }
            }
            Self::MonteCarlo { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let weight = bx.volume() / samples as f64;
                let mut node = vec![0.0f64; d];
                for _ in 0..samples {
                    for k in 0..d {
                        let u: f64 = rng.gen();
                        node[k] = bx.lo[k] + u * (bx.hi[k] - bx.lo[k]);
                    }
                    visit(&node, weight)?;
                }
                Ok(())
            }
        }
    }
}

/// `∫_box g(x) dμ(x)`, i.e. the weighted sum `Σ g(x)·density(x)·w`.
///
/// Non-finite integrand or density values abort with the offending node.
pub fn integrate(
    g: &dyn Fn(&[f64]) -> f64,
    bx: &AxisBox,
    measure: &MeasureSpec,
    quad: &QuadratureScheme,
) -> Result<f64, MeasureError> {
    if bx.dimension() != measure.dimension() {
        return Err(MeasureError::DimensionMismatch {
            measure: measure.dimension(),
            input: bx.dimension(),
        });
    }
    let mut acc = 0.0;
    quad.for_each_node(bx, |x, w| {
        let rho = measure.density_checked(x)?;
        let gv = g(x);
        if !gv.is_finite() {
            return Err(MeasureError::NonFiniteIntegrand { at: x.to_vec() });
        }
        acc += gv * rho * w;
        Ok(())
    })?;
    Ok(acc)
}

/// `∫_region g dμ` for a box-minus-box region, evaluated over the
/// region's exact slab decomposition (see [`Region::slabs`]).  Every
/// quadrature node lies in the region's interior, so the integral of a
/// function vanishing on the region is exactly zero and no node ever
/// sits on a region boundary.
pub fn integrate_region(
    g: &dyn Fn(&[f64]) -> f64,
    region: &Region,
    measure: &MeasureSpec,
    quad: &QuadratureScheme,
) -> Result<f64, MeasureError> {
    let mut acc = 0.0;
    for slab in region.slabs() {
        acc += integrate(g, &slab, measure, quad)?;
    }
    Ok(acc)
}

/// Density samples on scattered points: linear interpolation along a
/// sorted 1-d table, nearest sample point for d >= 2.  Points outside
/// the sampled range carry zero density.
#[derive(Debug, Clone)]
pub struct DensityTable {
    dimension: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl DensityTable {
    pub fn new(dimension: usize, mut rows: Vec<(Vec<f64>, f64)>) -> Result<Self, MeasureError> {
        if rows.is_empty() {
            return Err(MeasureError::Table("table has no rows".into()));
        }
        for (x, v) in &rows {
            if x.len() != dimension {
                return Err(MeasureError::Table(format!(
                    "row has {} coordinates, expected {dimension}",
                    x.len()
                )));
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(MeasureError::Table(format!(
                    "density value {v} at {x:?} is not a finite nonnegative number"
                )));
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(MeasureError::Table(format!("non-finite coordinate in {x:?}")));
            }
        }
        if dimension == 1 {
            rows.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        }
        let (points, values) = rows.into_iter().unzip();
        Ok(Self {
            dimension,
            points,
            values,
        })
    }

    /// Parses CSV with header `x_1,…,x_d,density`.
    pub fn from_csv_path(path: &Path) -> Result<Self, MeasureError> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| MeasureError::Table(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| MeasureError::Table(e.to_string()))?
            .clone();
        if headers.len() < 2 {
            return Err(MeasureError::Table(
                "expected columns x_1..x_d and density".into(),
            ));
        }
        let dimension = headers.len() - 1;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| MeasureError::Table(e.to_string()))?;
            let mut nums = Vec::with_capacity(headers.len());
            for field in record.iter() {
                nums.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| MeasureError::Table(format!("bad number `{field}`: {e}")))?,
                );
            }
            let value = nums.pop().expect("at least two columns");
            rows.push((nums, value));
        }
        Self::new(dimension, rows)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.dimension == 1 {
            let q = x[0];
            let first = self.points[0][0];
            let last = self.points[self.points.len() - 1][0];
            if q < first || q > last {
                return 0.0;
            }
            let hi = self.points.partition_point(|p| p[0] < q);
            if hi == 0 {
                return self.values[0];
            }
            if hi == self.points.len() {
                return self.values[hi - 1];
            }
            let (x0, x1) = (self.points[hi - 1][0], self.points[hi][0]);
            let (y0, y1) = (self.values[hi - 1], self.values[hi]);
            if x1 == x0 {
                return y0;
            }
            y0 + (y1 - y0) * (q - x0) / (x1 - x0)
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
            self.values[best]
        }
    }
}
