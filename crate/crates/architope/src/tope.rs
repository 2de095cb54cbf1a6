//! The architope: local models gated onto partition regions by hard
//! indicators, one scale per term plus an off-cover tail term, together
//! with the upgrade procedure that builds one by fitting every region
//! and the polynomial-vs-architope gap demonstration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TopeError;
use crate::learners::{
    fit_mlp, fit_polynomial, Activation, FitConfig, Model, PolyBasis, PolynomialModel,
};
use crate::measure::{integrate_region, MeasureSpec, QuadratureScheme};
use crate::metrics::{error_report, per_region_distances, ErrorReport, FunctionHandle};
use crate::partition::{Partition, Region};

/// One gated term: the model is active exactly on its region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopeTerm {
    pub region_index: usize,
    pub beta: f64,
    pub model: Model,
}

/// The off-cover term, evaluated only where no region matches.  With a
/// covering partition the uncovered set is null, so the tail never
/// contributes to an integral; it pins down pointwise values outside
/// the cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub beta: f64,
    pub model: Model,
}

/// A piecewise ensemble `Σ_i beta_i · I_{K_i}(x) · f_i(x)` plus the
/// tail term on the uncovered remainder.  Evaluation routes each point
/// through exactly one term (smallest matching region index), so
/// boundary points are single-valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchitopeData", into = "ArchitopeData")]
pub struct Architope {
    partition: Partition,
    p: f64,
    /// Sorted by region index.
    terms: Vec<TopeTerm>,
    tail: Tail,
}

#[derive(Clone, Serialize, Deserialize)]
struct ArchitopeData {
    partition: Partition,
    p: f64,
    terms: Vec<TopeTerm>,
    tail: Tail,
}

impl TryFrom<ArchitopeData> for Architope {
    type Error = TopeError;

    fn try_from(d: ArchitopeData) -> Result<Self, TopeError> {
        Architope::new(d.partition, d.terms, d.tail, d.p)
    }
}

impl From<Architope> for ArchitopeData {
    fn from(a: Architope) -> Self {
        ArchitopeData {
            partition: a.partition,
            p: a.p,
            terms: a.terms,
            tail: a.tail,
        }
    }
}

impl Architope {
    pub fn new(
        partition: Partition,
        mut terms: Vec<TopeTerm>,
        tail: Tail,
        p: f64,
    ) -> Result<Self, TopeError> {
        if terms.iter().all(|t| t.beta == 0.0) && tail.beta == 0.0 {
            return Err(TopeError::AllScalesZero);
        }
        terms.sort_by_key(|t| t.region_index);
        for pair in terms.windows(2) {
            if pair[0].region_index == pair[1].region_index {
                return Err(TopeError::DuplicateRegion {
                    region: pair[0].region_index,
                });
            }
        }
        for t in &terms {
            if t.region_index == 0 || t.region_index > partition.len() {
                return Err(TopeError::UnknownRegion {
                    region: t.region_index,
                });
            }
        }
        Ok(Self {
            partition,
            p,
            terms,
            tail,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn terms(&self) -> &[TopeTerm] {
        &self.terms
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn output_dimension(&self) -> usize {
        self.terms
            .first()
            .map(|t| t.model.output_dimension())
            .unwrap_or_else(|| self.tail.model.output_dimension())
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        match self.partition.locate(x) {
            Some(i) => match self.terms.binary_search_by_key(&i, |t| t.region_index) {
                Ok(slot) => {
                    let term = &self.terms[slot];
                    scale(term.beta, term.model.evaluate(x))
                }
                Err(_) => vec![0.0; self.output_dimension()],
            },
            None => scale(self.tail.beta, self.tail.model.evaluate(x)),
        }
    }

    pub fn handle(&self) -> FunctionHandle {
        let tope = self.clone();
        FunctionHandle::new("architope", self.output_dimension(), move |x| {
            tope.evaluate(x)
        })
    }

    /// Re-exposes the `(beta, model)` factorization: replaces the scale
    /// of one term.
    pub fn with_term_scale(mut self, region_index: usize, beta: f64) -> Result<Self, TopeError> {
        let slot = self
            .terms
            .binary_search_by_key(&region_index, |t| t.region_index)
            .map_err(|_| TopeError::UnknownRegion {
                region: region_index,
            })?;
        self.terms[slot].beta = beta;
        Architope::new(self.partition, self.terms, self.tail, self.p)
    }

    /// Multiplies every scale (terms and tail) by `c`.
    pub fn scaled(mut self, c: f64) -> Result<Self, TopeError> {
        for t in &mut self.terms {
            t.beta *= c;
        }
        self.tail.beta *= c;
        Architope::new(self.partition, self.terms, self.tail, self.p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architope serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn scale(beta: f64, mut v: Vec<f64>) -> Vec<f64> {
    for u in &mut v {
        *u *= beta;
    }
    v
}

/// Which base class the upgrade fits on each region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerSpec {
    Polynomial {
        degree: usize,
        basis: PolyBasis,
    },
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
}

/// Per-region fit diagnostics collected during an upgrade.
#[derive(Debug, Clone, Serialize)]
pub struct RegionFit {
    pub region_index: usize,
    pub mass: f64,
    /// Density-weighted L^2 error on the fit grid.
    pub fit_l2_error: f64,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone)]
pub struct UpgradeOutcome {
    pub architope: Architope,
    pub report: ErrorReport,
    pub region_fits: Vec<RegionFit>,
}

/// Fits one local model per region under the region-restricted measure,
/// glues them with unit scales, and measures the result against the
/// target.  Scales stay at 1; fitted structure lives in the models.
pub fn upgrade(
    target: &FunctionHandle,
    learner: &LearnerSpec,
    partition: &Partition,
    measure: &MeasureSpec,
    regions_to_fit: usize,
    config: &FitConfig,
    quad: &QuadratureScheme,
) -> Result<UpgradeOutcome, TopeError> {
    if regions_to_fit == 0 || regions_to_fit > partition.len() {
        return Err(TopeError::Partition(
            crate::error::PartitionError::IndexOutOfRange {
                region: regions_to_fit,
                len: partition.len(),
            },
        ));
    }

    let fitted: Vec<(TopeTerm, RegionFit)> = (1..=regions_to_fit)
        .into_par_iter()
        .map(|i| -> Result<(TopeTerm, RegionFit), TopeError> {
            let region = partition.region(i)?;
            let mass = partition.region_mass(i, measure, quad)?;
            let restricted = measure.restrict_to_region(region);
            // decorrelate per-region seeds while keeping runs reproducible
            let mut region_config = config.clone();
            region_config.seed = config.seed.wrapping_add(i as u64);
            let (model, fit_l2_error, rank_deficient) = match learner {
                LearnerSpec::Polynomial { degree, basis } => {
                    let (model, report) = fit_polynomial(
                        target,
                        region,
                        &restricted,
                        *degree,
                        *basis,
                        &region_config,
                    )
                    .map_err(|source| TopeError::Fit { region: i, source })?;
                    (Model::Polynomial(model), report.l2_error, report.rank_deficient)
                }
                LearnerSpec::Mlp { hidden, activation } => {
                    let mut widths = Vec::with_capacity(hidden.len() + 2);
                    widths.push(region.dimension());
                    widths.extend_from_slice(hidden);
                    widths.push(target.output_dimension());
                    let (model, trace) = fit_mlp(
                        target,
                        region,
                        &restricted,
                        &widths,
                        *activation,
                        &region_config,
                    )
                    .map_err(|source| TopeError::Fit { region: i, source })?;
                    (Model::Mlp(model), trace.final_l2_error, false)
                }
            };
            Ok((
                TopeTerm {
                    region_index: i,
                    beta: 1.0,
                    model,
                },
                RegionFit {
                    region_index: i,
                    mass,
                    fit_l2_error,
                    rank_deficient,
                },
            ))
        })
        .collect::<Result<_, _>>()?;

    let (terms, region_fits): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let tail = Tail {
        beta: 0.0,
        model: Model::Polynomial(PolynomialModel::zero(
            partition.dimension(),
            target.output_dimension(),
            partition.bounding_box(),
        )),
    };
    let architope = Architope::new(partition.clone(), terms, tail, config.p)?;
    let report = error_report(
        target,
        &architope.handle(),
        partition,
        measure,
        config.p,
        regions_to_fit,
        quad,
    )?;
    Ok(UpgradeOutcome {
        architope,
        report,
        region_fits,
    })
}

/// One row of the gap table.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub label: String,
    pub degree: Option<usize>,
    /// Max over regions 1..=2 of the per-region L^p residuals.
    pub strict_error: f64,
    /// L^1 mass of the fitted model itself on region 2 — the witness
    /// that a globally fitted analytic model cannot vanish there.
    pub off_support_mass: f64,
    /// The fitted constant, recorded for degree-0 rows.
    pub fitted_constant: Option<f64>,
}

/// Fits one global polynomial over `K_1 ∪ K_2` to the indicator of
/// `K_1` for each requested degree, and contrasts the rows with a
/// two-region degree-0 architope that represents the target exactly.
pub fn gap_demo(
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    degrees: &[usize],
    quad: &QuadratureScheme,
    config: &FitConfig,
) -> Result<Vec<GapRow>, TopeError> {
    if partition.len() < 2 {
        return Err(TopeError::NeedTwoRegions);
    }
    let k1 = partition.region(1)?.clone();
    let k2 = partition.region(2)?.clone();
    let gate1 = k1.clone();
    let target = FunctionHandle::scalar("indicator(K1)", move |x| {
        if gate1.membership(x) {
            1.0
        } else {
            0.0
        }
    });

    // the union of the first two regions, as one solid fit region with
    // the measure masked to the union
    let hull = k1.bounding_box().hull(k2.bounding_box());
    let union_region = Region::solid(1, hull)?;
    let (m1, m2) = (k1.clone(), k2.clone());
    let base = measure.clone();
    let union_measure = MeasureSpec::new(
        measure.dimension(),
        format!("{}|K1+K2", measure.label()),
        move |x| {
            if m1.membership(x) || m2.membership(x) {
                base.density_at(x)
            } else {
                0.0
            }
        },
    );

    let mut rows = Vec::with_capacity(degrees.len() + 1);
    for &degree in degrees {
        let (model, _) = fit_polynomial(
            &target,
            &union_region,
            &union_measure,
            degree,
            PolyBasis::Chebyshev,
            config,
        )
        .map_err(|source| TopeError::Fit { region: 1, source })?;
        let handle = model.handle(format!("global-poly-{degree}"));
        let per_region = per_region_distances(&handle, &target, partition, measure, p, 2, quad)?;
        let strict_error = per_region.iter().copied().fold(0.0, f64::max);
        let off_support_mass =
            integrate_region(&|x| norm(&handle.evaluate(x)), &k2, measure, quad)?;
        rows.push(GapRow {
            label: format!("global-poly-{degree}"),
            degree: Some(degree),
            strict_error,
            off_support_mass,
            fitted_constant: (degree == 0).then(|| model.coefficients[0][0]),
        });
    }

    let outcome = upgrade(
        &target,
        &LearnerSpec::Polynomial {
            degree: 0,
            basis: PolyBasis::Chebyshev,
        },
        partition,
        measure,
        2,
        config,
        quad,
    )?;
    let handle = outcome.architope.handle();
    let off_support_mass = integrate_region(&|x| norm(&handle.evaluate(x)), &k2, measure, quad)?;
    rows.push(GapRow {
        label: "architope".into(),
        degree: None,
        strict_error: outcome.report.strict_norm,
        off_support_mass,
        fitted_constant: None,
    });
    Ok(rows)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|u| u * u).sum::<f64>().sqrt()
}
