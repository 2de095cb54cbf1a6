//! Density-weighted polynomial least squares on a region.
//!
//! The default basis is Chebyshev, affinely rescaled so the region's
//! bounding box maps to `[-1,1]^d`; monomial normal systems become
//! hopeless well before degree ten, while the rescaled Chebyshev design
//! stays tame across the degrees used here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::geometry::AxisBox;
use crate::learners::{collect_fit_sample, FitConfig};
use crate::measure::MeasureSpec;
use crate::metrics::FunctionHandle;
use crate::partition::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyBasis {
    Chebyshev,
    Monomial,
}

/// Number of monomials of total degree at most `degree` in `d`
/// variables: C(d + degree, d).
pub fn basis_size(dimension: usize, degree: usize) -> usize {
    let mut n = 1usize;
    for k in 1..=dimension {
        n = n * (degree + k) / k;
    }
    n
}

/// Multi-indices of total degree <= `degree`, graded lexicographic.
fn multi_indices(dimension: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(basis_size(dimension, degree));
    let mut stack = vec![(Vec::<usize>::new(), 0usize)];
    // depth-first enumeration, then sort graded-lex for a stable order
    while let Some((prefix, used)) = stack.pop() {
        if prefix.len() == dimension {
            out.push(prefix);
            continue;
        }
        for a in (0..=(degree - used)).rev() {
            let mut next = prefix.clone();
            next.push(a);
            stack.push((next, used + a));
        }
    }
    out.sort_by(|a, b| {
        let (sa, sb) = (a.iter().sum::<usize>(), b.iter().sum::<usize>());
        sa.cmp(&sb).then_with(|| a.cmp(b))
    });
    out
}

/// A fitted polynomial: one coefficient row per output component over a
/// total-degree basis scaled to `reference_box`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub dimension: usize,
    pub output_dimension: usize,
    pub degree: usize,
    pub basis: PolyBasis,
    pub reference_box: AxisBox,
    /// `output_dimension` rows of `basis_size(dimension, degree)` each.
    pub coefficients: Vec<Vec<f64>>,
}

impl PolynomialModel {
    pub fn zero(
        dimension: usize,
        output_dimension: usize,
        reference_box: AxisBox,
    ) -> PolynomialModel {
        PolynomialModel {
            dimension,
            output_dimension,
            degree: 0,
            basis: PolyBasis::Chebyshev,
            reference_box,
            coefficients: vec![vec![0.0]; output_dimension],
        }
    }

    pub fn output_dimension(&self) -> usize {
        self.output_dimension
    }

    /// Per-axis basis values T_0..T_degree (or powers for the monomial
    /// basis) at `x`.
    fn axis_values(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let deg = self.degree;
        let mut per_axis = Vec::with_capacity(self.dimension);
        for k in 0..self.dimension {
            let mut vals = vec![0.0; deg + 1];
            match self.basis {
                PolyBasis::Chebyshev => {
                    let lo = self.reference_box.lo[k];
                    let hi = self.reference_box.hi[k];
                    let t = (2.0 * x[k] - (lo + hi)) / (hi - lo);
                    vals[0] = 1.0;
                    if deg >= 1 {
                        vals[1] = t;
                    }
                    for j in 2..=deg {
                        vals[j] = 2.0 * t * vals[j - 1] - vals[j - 2];
                    }
                }
                PolyBasis::Monomial => {
                    vals[0] = 1.0;
                    for j in 1..=deg {
                        vals[j] = vals[j - 1] * x[k];
                    }
                }
            }
            per_axis.push(vals);
        }
        per_axis
    }

    fn design_row(&self, x: &[f64], indices: &[Vec<usize>]) -> Vec<f64> {
        let per_axis = self.axis_values(x);
        indices
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .map(|(k, &a)| per_axis[k][a])
                    .product()
            })
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let indices = multi_indices(self.dimension, self.degree);
        let row = self.design_row(x, &indices);
        self.coefficients
            .iter()
            .map(|c| c.iter().zip(&row).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn handle(&self, label: impl Into<String>) -> FunctionHandle {
        let model = self.clone();
        FunctionHandle::new(label, self.output_dimension, move |x| model.evaluate(x))
    }
}

/// Diagnostics attached to every polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFitReport {
    /// Data term of the objective: `Σ w_i ||target(x_i) - model(x_i)||^2`.
    pub weighted_residual_sq: f64,
    /// Its square root, the density-weighted L^2 error on the region.
    pub l2_error: f64,
    /// Set when lambda = 0 and the design matrix is rank-deficient; the
    /// reported coefficients are then the minimum-norm solution.
    pub rank_deficient: bool,
    pub nodes: usize,
}

/// Minimizes `Σ w_i ||target(x_i) - model(x_i)||^2 + λ ||coeffs||^2`
/// over the masked fit grid of the region.
pub fn fit_polynomial(
    target: &FunctionHandle,
    region: &Region,
    measure: &MeasureSpec,
    degree: usize,
    basis: PolyBasis,
    config: &FitConfig,
) -> Result<(PolynomialModel, PolyFitReport), FitError> {
    let sample = collect_fit_sample(target, region, measure, config)?;
    let d = region.dimension();
    let dd = target.output_dimension();
    let indices = multi_indices(d, degree);
    let terms = indices.len();
    let n = sample.points.len();

    let mut template = PolynomialModel {
        dimension: d,
        output_dimension: dd,
        degree,
        basis,
        reference_box: region.bounding_box().clone(),
        coefficients: vec![vec![0.0; terms]; dd],
    };

    let lambda = config.regularization;
    let rows = n + if lambda > 0.0 { terms } else { 0 };
    let mut a = DMatrix::zeros(rows, terms);
    let mut b = DMatrix::zeros(rows, dd);
    for (i, x) in sample.points.iter().enumerate() {
        let sw = sample.weights[i].sqrt();
        let row = template.design_row(x, &indices);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = sw * v;
        }
        for (j, y) in sample.targets[i].iter().enumerate() {
            b[(i, j)] = sw * y;
        }
    }
    if lambda > 0.0 {
        let sl = lambda.sqrt();
        for j in 0..terms {
            a[(n + j, j)] = sl;
        }
    }

    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = sigma_max * rows.max(terms) as f64 * f64::EPSILON;
    let rank = svd.rank(eps.max(f64::MIN_POSITIVE));
    let rank_deficient = lambda == 0.0 && rank < terms;
    let solution = svd
        .solve(&b, eps.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(terms, dd));

    for j in 0..dd {
        for t in 0..terms {
            template.coefficients[j][t] = solution[(t, j)];
        }
    }

    let mut residual = 0.0;
    for (i, x) in sample.points.iter().enumerate() {
        let y = template.evaluate(x);
        let sq: f64 = y
            .iter()
            .zip(&sample.targets[i])
            .map(|(m, t)| (m - t) * (m - t))
            .sum();
        residual += sample.weights[i] * sq;
    }

    let report = PolyFitReport {
        weighted_residual_sq: residual,
        l2_error: residual.sqrt(),
        rank_deficient,
        nodes: n,
    };
    Ok((template, report))
}

/// Recomputes the fit objective for a given coefficient matrix; the
/// optimality tests perturb coefficients through this.
#[cfg(test)]
fn objective_on_sample(
    model: &PolynomialModel,
    points: &[Vec<f64>],
    weights: &[f64],
    targets: &[Vec<f64>],
) -> f64 {
    let mut acc = 0.0;
    for ((x, w), t) in points.iter().zip(weights).zip(targets) {
        let y = model.evaluate(x);
        let sq: f64 = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += w * sq;
    }
    acc
}
