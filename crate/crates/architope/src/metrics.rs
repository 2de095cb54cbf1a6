//! The three error functionals: per-region L^p distances and their
//! aggregates (total L^p over a truncation, the strict max-over-regions
//! norm, and the weighted local-L^p series), plus essential-support
//! indexing and the support-aware convergence diagnostic.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::MetricsError;
use crate::geometry::AxisBox;
use crate::measure::{integrate, integrate_region, MeasureSpec, QuadratureScheme};
use crate::partition::{Partition, Region};

/// A vector-valued function of a point, evaluated through a shared
/// closure.  Handles are cheap to clone and safe to share across
/// threads.
#[derive(Clone)]
pub struct FunctionHandle {
    label: String,
    output_dimension: usize,
    eval: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionHandle")
            .field("label", &self.label)
            .field("output_dimension", &self.output_dimension)
            .finish_non_exhaustive()
    }
}

impl FunctionHandle {
    pub fn new(
        label: impl Into<String>,
        output_dimension: usize,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            output_dimension,
            eval: Arc::new(eval),
        }
    }

    /// Scalar-valued convenience constructor (D = 1).
    pub fn scalar(
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(label, 1, move |x| vec![eval(x)])
    }

    pub fn zero(output_dimension: usize) -> Self {
        Self::new("zero", output_dimension, move |_| vec![0.0; output_dimension])
    }

    pub fn constant(label: impl Into<String>, value: Vec<f64>) -> Self {
        let d = value.len();
        Self::new(label, d, move |_| value.clone())
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn output_dimension(&self) -> usize {
        self.output_dimension
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

fn check_exponent(p: f64) -> Result<(), MetricsError> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(MetricsError::InvalidExponent { p });
    }
    Ok(())
}

fn check_pair(f: &FunctionHandle, g: &FunctionHandle) -> Result<(), MetricsError> {
    if f.output_dimension() != g.output_dimension() {
        return Err(MetricsError::OutputDimensionMismatch {
            left: f.output_dimension(),
            right: g.output_dimension(),
        });
    }
    Ok(())
}

/// `||f(x) - g(x)||^p` with the Euclidean norm on the outputs.
fn diff_pow_integrand<'a>(
    f: &'a FunctionHandle,
    g: &'a FunctionHandle,
    p: f64,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x| {
        let a = f.evaluate(x);
        let b = g.evaluate(x);
        let norm_sq: f64 = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum();
        norm_sq.powf(0.5 * p)
    }
}

/// Integration domain accepted by [`lp_distance`].
#[derive(Debug, Clone, Copy)]
pub enum Domain<'a> {
    Box(&'a AxisBox),
    Region(&'a Region),
}

impl<'a> From<&'a AxisBox> for Domain<'a> {
    fn from(b: &'a AxisBox) -> Self {
        Domain::Box(b)
    }
}

impl<'a> From<&'a Region> for Domain<'a> {
    fn from(r: &'a Region) -> Self {
        Domain::Region(r)
    }
}

/// `( ∫_domain ||f - g||^p dμ )^{1/p}`.
pub fn lp_distance(
    f: &FunctionHandle,
    g: &FunctionHandle,
    measure: &MeasureSpec,
    domain: Domain<'_>,
    p: f64,
    quad: &QuadratureScheme,
) -> Result<f64, MetricsError> {
    check_exponent(p)?;
    check_pair(f, g)?;
    let integrand = diff_pow_integrand(f, g, p);
    let v = match domain {
        Domain::Box(b) => integrate(&integrand, b, measure, quad)?,
        Domain::Region(r) => integrate_region(&integrand, r, measure, quad)?,
    };
    Ok(v.powf(1.0 / p))
}

/// Per-region values `( ∫_{K_i} ||f - g||^p dμ )^{1/p}` for
/// `i = 1..=truncation`.  Regions are integrated independently (in
/// parallel) and returned in index order.
pub fn per_region_distances(
    f: &FunctionHandle,
    g: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    truncation: usize,
    quad: &QuadratureScheme,
) -> Result<Vec<f64>, MetricsError> {
    check_exponent(p)?;
    check_pair(f, g)?;
    if truncation == 0 || truncation > partition.len() {
        return Err(MetricsError::TruncationTooLarge {
            requested: truncation,
            available: partition.len(),
        });
    }
    (1..=truncation)
        .into_par_iter()
        .map(|i| {
            let region = partition.region(i)?;
            let v = integrate_region(&diff_pow_integrand(f, g, p), region, measure, quad)?;
            Ok(v.powf(1.0 / p))
        })
        .collect()
}

/// Max over the first `truncation` regions of the per-region L^p norms
/// of `f` itself.
pub fn strict_norm(
    f: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    truncation: usize,
    quad: &QuadratureScheme,
) -> Result<f64, MetricsError> {
    strict_distance(
        f,
        &FunctionHandle::zero(f.output_dimension()),
        partition,
        measure,
        p,
        truncation,
        quad,
    )
}

/// Strict-norm distance: max over regions of the per-region L^p
/// distances between `f` and `g`.
pub fn strict_distance(
    f: &FunctionHandle,
    g: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    truncation: usize,
    quad: &QuadratureScheme,
) -> Result<f64, MetricsError> {
    let values = per_region_distances(f, g, partition, measure, p, truncation, quad)?;
    Ok(values.iter().copied().fold(0.0, f64::max))
}

/// Value of the truncated local-L^p series together with the analytic
/// bound `2^{-n_terms}` on the dropped tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMetricValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Truncated series `Σ_{n<=N} 2^{-n} e_n / (1 + e_n)` with
/// `e_n = ∫_{K_n} ||f - g||^p dμ` (the p-th power error, not its root).
/// Every term is below `2^{-n}`, so the dropped tail is below
/// `2^{-N}` regardless of the functions involved.
pub fn local_metric(
    f: &FunctionHandle,
    g: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    n_terms: usize,
    quad: &QuadratureScheme,
) -> Result<LocalMetricValue, MetricsError> {
    let values = per_region_distances(f, g, partition, measure, p, n_terms, quad)?;
    Ok(local_metric_from_norms(&values, p, n_terms))
}

fn local_metric_from_norms(per_region: &[f64], p: f64, n_terms: usize) -> LocalMetricValue {
    let mut value = 0.0;
    for (i, v) in per_region.iter().enumerate() {
        let e = v.powf(p);
        value += 0.5f64.powi(i as i32 + 1) * e / (1.0 + e);
    }
    LocalMetricValue {
        value,
        tail_bound: 0.5f64.powi(n_terms as i32),
    }
}

/// Result of essential-support indexing: the smallest region prefix
/// that carries all mass above the threshold, or `Unbounded` when the
/// last region still carries mass.  `Bounded(0)` means empty support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportIndex {
    Bounded(usize),
    Unbounded,
}

impl SupportIndex {
    pub fn exceeds(&self, n: usize) -> bool {
        match self {
            SupportIndex::Bounded(i) => *i > n,
            SupportIndex::Unbounded => true,
        }
    }

    pub fn bounded(&self) -> Option<usize> {
        match self {
            SupportIndex::Bounded(i) => Some(*i),
            SupportIndex::Unbounded => None,
        }
    }
}

impl fmt::Display for SupportIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportIndex::Bounded(i) => write!(f, "{i}"),
            SupportIndex::Unbounded => write!(f, "unbounded"),
        }
    }
}

impl Serialize for SupportIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SupportIndex::Bounded(i) => serializer.serialize_u64(*i as u64),
            SupportIndex::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

/// Numerical essential-support index: smallest `n` such that the
/// per-region L^1 mass of `||f||` is at most `tol` on every region with
/// index above `n`.  Exact essential supports are undecidable for a
/// sampled function, so the threshold is part of the contract.
pub fn ess_support_index(
    f: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    quad: &QuadratureScheme,
    tol: f64,
) -> Result<SupportIndex, MetricsError> {
    let masses = per_region_distances(
        f,
        &FunctionHandle::zero(f.output_dimension()),
        partition,
        measure,
        1.0,
        partition.len(),
        quad,
    )?;
    let last_carrying = masses.iter().rposition(|&m| m > tol);
    match last_carrying {
        None => Ok(SupportIndex::Bounded(0)),
        Some(i) if i + 1 == partition.len() => Ok(SupportIndex::Unbounded),
        Some(i) => Ok(SupportIndex::Bounded(i + 1)),
    }
}

/// Diagnostic verdicts for a sequence converging (or not) to a
/// compactly supported target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converging,
    SupportViolation,
    NotConverging,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Converging => write!(f, "converging"),
            Verdict::SupportViolation => write!(f, "support-violation"),
            Verdict::NotConverging => write!(f, "not-converging"),
        }
    }
}

/// Per-step record of the diagnostic run.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticStep {
    pub k: usize,
    pub strict_err: f64,
    pub lp_err: f64,
    pub support_index: SupportIndex,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub verdict: Verdict,
    pub target_support: usize,
    pub steps: Vec<DiagnosticStep>,
}

/// Checks whether a sequence approaches `target` in the strict sense:
/// eventual essential-support containment in the target's region prefix
/// plus per-region error decay.
///
/// `tol` is the convergence tolerance (monotonicity slack and final
/// strict-error threshold); `support_tol` is the mass threshold for
/// essential-support indexing (a separate, much smaller scale —
/// support containment is a binary condition, not an error bound).
/// "All but a finite number" is realized as the trailing half of the
/// finite sequence.
pub fn strict_convergence_diagnostic(
    sequence: &[FunctionHandle],
    target: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    tol: f64,
    support_tol: f64,
    quad: &QuadratureScheme,
) -> Result<DiagnosticReport, MetricsError> {
    if sequence.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    check_exponent(p)?;
    let target_support = match ess_support_index(target, partition, measure, quad, support_tol)? {
        SupportIndex::Bounded(n) => n,
        SupportIndex::Unbounded => return Err(MetricsError::UnboundedTargetSupport),
    };

    let truncation = partition.len();
    let mut steps = Vec::with_capacity(sequence.len());
    let mut per_region_history: Vec<Vec<f64>> = Vec::with_capacity(sequence.len());
    for (k, f) in sequence.iter().enumerate() {
        let per_region =
            per_region_distances(f, target, partition, measure, p, truncation, quad)?;
        let strict_err = per_region.iter().copied().fold(0.0, f64::max);
        let lp_err = per_region
            .iter()
            .map(|v| v.powf(p))
            .sum::<f64>()
            .powf(1.0 / p);
        let support_index = ess_support_index(f, partition, measure, quad, support_tol)?;
        steps.push(DiagnosticStep {
            k: k + 1,
            strict_err,
            lp_err,
            support_index,
        });
        per_region_history.push(per_region);
    }

    let tail_start = sequence.len() - sequence.len().div_ceil(2);
    let violated = steps[tail_start..]
        .iter()
        .any(|s| s.support_index.exceeds(target_support));
    let verdict = if violated {
        Verdict::SupportViolation
    } else {
        let monotone = (1..per_region_history.len()).all(|k| {
            per_region_history[k]
                .iter()
                .zip(&per_region_history[k - 1])
                .all(|(cur, prev)| cur <= &(prev + tol))
        });
        let final_strict = steps.last().expect("non-empty").strict_err;
        if monotone && final_strict < tol {
            Verdict::Converging
        } else {
            Verdict::NotConverging
        }
    };

    Ok(DiagnosticReport {
        verdict,
        target_support,
        steps,
    })
}

/// Per-region error value inside an [`ErrorReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionError {
    pub index: usize,
    pub value: f64,
}

/// All three error functionals for one (f, g, measure) triple over a
/// fixed truncation, computed from a single per-region pass so the
/// aggregates are exactly consistent with the per-region rows.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ErrorReport {
    pub p: f64,
    pub truncation: usize,
    pub per_region: Vec<RegionError>,
    pub lp_total: f64,
    pub strict_norm: f64,
    pub local_metric: f64,
    pub local_metric_tail_bound: f64,
}

impl Serialize for ErrorReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ErrorReport", 7)?;
        s.serialize_field("p", &self.p)?;
        s.serialize_field("truncation", &self.truncation)?;
        s.serialize_field("per_region", &self.per_region)?;
        s.serialize_field("lp_total", &self.lp_total)?;
        s.serialize_field("strict_norm", &self.strict_norm)?;
        s.serialize_field("local_metric", &self.local_metric)?;
        s.serialize_field("local_metric_tail_bound", &self.local_metric_tail_bound)?;
        s.end()
    }
}

/// Builds the [`ErrorReport`] for `f` against `g`.
pub fn error_report(
    f: &FunctionHandle,
    g: &FunctionHandle,
    partition: &Partition,
    measure: &MeasureSpec,
    p: f64,
    truncation: usize,
    quad: &QuadratureScheme,
) -> Result<ErrorReport, MetricsError> {
    let values = per_region_distances(f, g, partition, measure, p, truncation, quad)?;
    Ok(report_from_values(&values, p, truncation))
}

fn report_from_values(values: &[f64], p: f64, truncation: usize) -> ErrorReport {
    let per_region = values
        .iter()
        .enumerate()
        .map(|(i, &value)| RegionError { index: i + 1, value })
        .collect::<Vec<_>>();
    let lp_total = values.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
    let strict_norm = values.iter().copied().fold(0.0, f64::max);
    let local = local_metric_from_norms(values, p, truncation);
    ErrorReport {
        p,
        truncation,
        per_region,
        lp_total,
        strict_norm,
        local_metric: local.value,
        local_metric_tail_bound: local.tail_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shells(n: usize) -> Partition {
        Partition::shells(1, n, 1.0).unwrap()
    }

    fn lebesgue() -> MeasureSpec {
        MeasureSpec::lebesgue(1)
    }

    fn quad() -> QuadratureScheme {
        QuadratureScheme::tensor(1024)
    }

    fn indicator(partition: &Partition, index: usize) -> FunctionHandle {
        let region = partition.region(index).unwrap().clone();
        FunctionHandle::scalar(format!("indicator(K{index})"), move |x| {
            if region.membership(x) {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identical_functions_have_zero_distance() {
        let f = FunctionHandle::scalar("sin", |x| x[0].sin());
        let b = AxisBox::new(vec![-1.0], vec![1.0]).unwrap();
        let d = lp_distance(&f, &f, &lebesgue(), Domain::Box(&b), 2.0, &quad()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn constant_gap_integrates_to_the_region_mass() {
        let one = FunctionHandle::constant("one", vec![1.0]);
        let zero = FunctionHandle::zero(1);
        let b = AxisBox::new(vec![-1.0], vec![1.0]).unwrap();
        let d = lp_distance(&one, &zero, &lebesgue(), Domain::Box(&b), 1.0, &quad()).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_vs_zero_l2_matches_closed_form() {
        let f = FunctionHandle::scalar("x", |x| x[0]);
        let zero = FunctionHandle::zero(1);
        let b = AxisBox::new(vec![0.0], vec![1.0]).unwrap();
        let d = lp_distance(
            &f,
            &zero,
            &lebesgue(),
            Domain::Box(&b),
            2.0,
            &QuadratureScheme::tensor(4096),
        )
        .unwrap();
        assert!((d - 1.0 / 3.0f64.sqrt()).abs() < 1e-6, "{d}");
    }

    #[test]
    fn strict_norm_of_indicator_is_its_region_mass() {
        let p = shells(2);
        let f = indicator(&p, 1);
        let v = strict_norm(&f, &p, &lebesgue(), 1.0, 2, &quad()).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}"); // max(2, 0)
    }

    #[test]
    fn strict_norm_of_zero_is_zero() {
        let p = shells(2);
        let v = strict_norm(&FunctionHandle::zero(1), &p, &lebesgue(), 1.0, 2, &quad()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn strict_norm_of_one_takes_the_max_not_the_sum() {
        let p = shells(3);
        let one = FunctionHandle::constant("one", vec![1.0]);
        let v = strict_norm(&one, &p, &lebesgue(), 1.0, 3, &quad()).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}"); // max(2,2,2), not 6
    }

    #[test]
    fn local_metric_of_equal_functions_is_zero() {
        let p = shells(3);
        let f = FunctionHandle::scalar("cos", |x| x[0].cos());
        let v = local_metric(&f, &f, &p, &lebesgue(), 1.0, 3, &quad()).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.tail_bound, 0.125);
    }

    #[test]
    fn local_metric_geometric_series_when_all_region_errors_are_one() {
        // constant 1/2 against zero, p=1: e_n = 0.5 * mass(K_n) = 1 on every shell
        let p = shells(3);
        let f = FunctionHandle::constant("half", vec![0.5]);
        let zero = FunctionHandle::zero(1);
        let v = local_metric(&f, &zero, &p, &lebesgue(), 1.0, 3, &quad()).unwrap();
        let expected = (1.0 - 0.5f64.powi(3)) / 2.0;
        assert!((v.value - expected).abs() < 1e-9, "{} vs {expected}", v.value);
    }

    #[test]
    fn local_metric_of_one_vs_zero_on_two_shells() {
        let p = shells(2);
        let one = FunctionHandle::constant("one", vec![1.0]);
        let zero = FunctionHandle::zero(1);
        let v = local_metric(&one, &zero, &p, &lebesgue(), 1.0, 2, &quad()).unwrap();
        // e_n = 2 on both shells: (1/2)(2/3) + (1/4)(2/3) = 1/2
        assert!((v.value - 0.5).abs() < 1e-9, "{}", v.value);
        assert_eq!(v.tail_bound, 0.25);
    }

    #[test]
    fn support_index_of_an_indicator_is_its_region() {
        let p = shells(4);
        let f = indicator(&p, 1);
        let idx = ess_support_index(&f, &p, &lebesgue(), &quad(), 1e-9).unwrap();
        assert_eq!(idx, SupportIndex::Bounded(1));
    }

    #[test]
    fn support_index_of_zero_is_empty() {
        let p = shells(4);
        let idx =
            ess_support_index(&FunctionHandle::zero(1), &p, &lebesgue(), &quad(), 1e-9).unwrap();
        assert_eq!(idx, SupportIndex::Bounded(0));
    }

    #[test]
    fn support_index_of_a_gaussian_bump_at_tolerance_1e6() {
        let p = shells(8);
        let f = FunctionHandle::scalar("exp(-x^2)", |x| (-x[0] * x[0]).exp());
        let idx = ess_support_index(&f, &p, &lebesgue(), &quad(), 1e-6).unwrap();
        // mass beyond |x|=4 is ~2.7e-8 < 1e-6, beyond |x|=3 is ~3.9e-5 > 1e-6
        assert_eq!(idx, SupportIndex::Bounded(4));
    }

    #[test]
    fn support_index_unbounded_when_the_last_region_carries_mass() {
        let p = shells(3);
        let one = FunctionHandle::constant("one", vec![1.0]);
        let idx = ess_support_index(&one, &p, &lebesgue(), &quad(), 1e-9).unwrap();
        assert_eq!(idx, SupportIndex::Unbounded);
    }

    fn scaled_indicator(partition: &Partition, index: usize, c: f64) -> FunctionHandle {
        let region = partition.region(index).unwrap().clone();
        FunctionHandle::scalar(format!("{c}*I(K{index})"), move |x| {
            if region.membership(x) {
                c
            } else {
                0.0
            }
        })
    }

    #[test]
    fn diagnostic_shrinking_sequence_converges() {
        let p = shells(2);
        let target = indicator(&p, 1);
        let seq: Vec<_> = (1..=10)
            .map(|k| scaled_indicator(&p, 1, 1.0 - 1.0 / k as f64))
            .collect();
        let report = strict_convergence_diagnostic(
            &seq, &target, &p, &lebesgue(), 1.0, 0.25, 1e-9, &quad(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Converging);
        assert_eq!(report.target_support, 1);
    }

    #[test]
    fn diagnostic_flags_mass_leaking_into_the_next_region() {
        let p = shells(2);
        let target = indicator(&p, 1);
        let r1 = p.region(1).unwrap().clone();
        let r2 = p.region(2).unwrap().clone();
        let seq: Vec<_> = (1..=10)
            .map(|k| {
                let (a, b) = (r1.clone(), r2.clone());
                FunctionHandle::scalar(format!("f{k}"), move |x| {
                    if a.membership(x) {
                        1.0
                    } else if b.membership(x) {
                        1.0 / k as f64
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let report = strict_convergence_diagnostic(
            &seq, &target, &p, &lebesgue(), 1.0, 0.25, 1e-9, &quad(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::SupportViolation);
        // the plain L^p distance still shrinks: 2/k
        assert!(report.steps.last().unwrap().lp_err < report.steps[0].lp_err);
    }

    #[test]
    fn diagnostic_flags_a_constant_wrong_support() {
        let p = shells(2);
        let target = indicator(&p, 1);
        let seq: Vec<_> = (1..=6).map(|_| indicator(&p, 2)).collect();
        let report = strict_convergence_diagnostic(
            &seq, &target, &p, &lebesgue(), 1.0, 0.25, 1e-9, &quad(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::SupportViolation);
    }

    #[test]
    fn diagnostic_not_converging_when_errors_stall() {
        let p = shells(2);
        let target = indicator(&p, 1);
        let seq: Vec<_> = (1..=8).map(|_| scaled_indicator(&p, 1, 0.5)).collect();
        let report = strict_convergence_diagnostic(
            &seq, &target, &p, &lebesgue(), 1.0, 0.25, 1e-9, &quad(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::NotConverging);
    }

    #[test]
    fn diagnostic_requires_a_compactly_supported_target() {
        let p = shells(2);
        let target = FunctionHandle::constant("one", vec![1.0]);
        let seq = vec![indicator(&p, 1)];
        let err = strict_convergence_diagnostic(
            &seq, &target, &p, &lebesgue(), 1.0, 0.25, 1e-9, &quad(),
        )
        .unwrap_err();
        assert!(matches!(err, MetricsError::UnboundedTargetSupport));
    }

    #[test]
    fn report_aggregates_are_consistent_with_per_region_rows() {
        let p = shells(4);
        let f = FunctionHandle::scalar("exp", |x| (-x[0].abs()).exp());
        let zero = FunctionHandle::zero(1);
        for pk in [1.0, 2.0] {
            let report = error_report(&f, &zero, &p, &lebesgue(), pk, 4, &quad()).unwrap();
            let max = report
                .per_region
                .iter()
                .map(|r| r.value)
                .fold(0.0, f64::max);
            assert_eq!(report.strict_norm, max);
            let sum_p: f64 = report.per_region.iter().map(|r| r.value.powf(pk)).sum();
            assert!((report.lp_total.powf(pk) - sum_p).abs() <= 1e-12 * sum_p.max(1.0));
        }
    }

    #[test]
    fn marching_support_separates_local_from_lp_convergence() {
        // indicators of ever-farther shells: the local metric decays like
        // 2^{-k}, the plain L^p distance stays at mass^{1/p}
        let p = shells(5);
        let zero = FunctionHandle::zero(1);
        let mut last_local = f64::INFINITY;
        for k in 1..=5 {
            let f = indicator(&p, k);
            let lm = local_metric(&f, &zero, &p, &lebesgue(), 1.0, 5, &quad()).unwrap();
            let lp = error_report(&f, &zero, &p, &lebesgue(), 1.0, 5, &quad())
                .unwrap()
                .lp_total;
            assert!(lm.value < last_local);
            assert!((lp - 2.0).abs() < 1e-9, "mass stays put, got {lp}");
            last_local = lm.value;
        }
        assert!(last_local < 0.025); // 2^{-5} * (2/3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn triangle_inequality_for_lp_and_strict(
            a0 in -2.0f64..2.0, a1 in -2.0f64..2.0,
            b0 in -2.0f64..2.0, b1 in -2.0f64..2.0,
            c0 in -2.0f64..2.0, c1 in -2.0f64..2.0,
            p in prop_oneof![Just(1.0f64), Just(1.5), Just(2.0)],
        ) {
            let part = shells(2);
            let m = lebesgue();
            let q = QuadratureScheme::tensor(128);
            let mk = |u: f64, v: f64, name: &str| {
                FunctionHandle::scalar(name.to_string(), move |x| u + v * x[0].abs())
            };
            let f = mk(a0, a1, "f");
            let g = mk(b0, b1, "g");
            let h = mk(c0, c1, "h");
            let d = |u: &FunctionHandle, v: &FunctionHandle| {
                error_report(u, v, &part, &m, p, 2, &q).unwrap()
            };
            let fg = d(&f, &g);
            let gh = d(&g, &h);
            let fh = d(&f, &h);
            prop_assert!(fh.lp_total <= fg.lp_total + gh.lp_total + 1e-9);
            prop_assert!(fh.strict_norm <= fg.strict_norm + gh.strict_norm + 1e-9);
        }

        #[test]
        fn lp_distance_is_absolutely_homogeneous(
            c in -3.0f64..3.0,
            p in prop_oneof![Just(1.0f64), Just(2.0)],
        ) {
            let part = shells(2);
            let m = lebesgue();
            let q = QuadratureScheme::tensor(128);
            let f = FunctionHandle::scalar("f", |x| x[0].sin() + 0.3);
            let g = FunctionHandle::scalar("g", |x| x[0] * 0.25);
            let cf = FunctionHandle::scalar("cf", move |x| c * (x[0].sin() + 0.3));
            let cg = FunctionHandle::scalar("cg", move |x| c * (x[0] * 0.25));
            let base = error_report(&f, &g, &part, &m, p, 2, &q).unwrap().lp_total;
            let scaled = error_report(&cf, &cg, &part, &m, p, 2, &q).unwrap().lp_total;
            prop_assert!((scaled - c.abs() * base).abs() < 1e-9);
        }

        #[test]
        fn local_metric_is_bounded_by_the_geometric_tail(scale in 0.0f64..50.0) {
            let part = shells(3);
            let f = FunctionHandle::scalar("big", move |x| scale * (1.0 + x[0] * x[0]));
            let zero = FunctionHandle::zero(1);
            let v = local_metric(&f, &zero, &part, &lebesgue(), 1.0, 3, &QuadratureScheme::tensor(128)).unwrap();
            // sum of 2^{-n} over n <= 3, strictly below 1
            prop_assert!(v.value <= 0.875 + 1e-12);
        }
    }
}
