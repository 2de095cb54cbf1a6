//! Config-driven experiment runners behind the CLI subcommands.  Each
//! runner validates inputs, computes, and writes its reports into the
//! output directory.

use std::path::Path;

use serde::Serialize;

use crate::error::{ConfigError, Error};
use crate::experiment::config::{
    ExperimentConfig, PartitionConfig, TargetConfig,
};
use crate::experiment::report;
use crate::learners::Model;
use crate::measure::{integrate_region, MeasureSpec, QuadratureScheme};
use crate::metrics::{
    error_report, ess_support_index, strict_convergence_diagnostic, ErrorReport, FunctionHandle,
    SupportIndex,
};
use crate::partition::{Partition, PartitionCheck};
use crate::tope::{gap_demo, upgrade, GapRow, RegionFit};

/// Factor by which the shell family is extended past the fitted cover
/// when probing essential support and uncovered tail mass.
const TAIL_EXTENSION_FACTOR: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct UpgradeSummary {
    pub config_hash: String,
    pub p: f64,
    pub regions_fitted: usize,
    pub lp_total: f64,
    pub strict_norm: f64,
    pub local_metric: f64,
    pub local_metric_tail_bound: f64,
    /// Essential-support index of the assembled architope, probed on a
    /// shell family extended past the cover when the partition is
    /// shell-generated.
    pub ess_support_index: SupportIndex,
    /// L^p mass of the target beyond the fitted cover, estimated over
    /// the extension shells; absent for file-loaded partitions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncovered_tail_mass: Option<f64>,
    pub region_fits: Vec<RegionFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticSummary {
    pub config_hash: String,
    pub verdict: crate::metrics::Verdict,
    pub target_support: usize,
    pub per_step: Vec<crate::metrics::DiagnosticStep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionSummary {
    pub config_hash: String,
    pub valid: bool,
    pub max_overlap_mass: f64,
    pub covering_residual: f64,
    pub region_masses: Vec<(usize, f64)>,
    pub mass_violations: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsSummary {
    pub config_hash: String,
    pub f_label: String,
    pub g_label: String,
    pub report: ErrorReport,
}

struct BuiltExperiment {
    hash: String,
    measure: MeasureSpec,
    partition: Partition,
    quad: QuadratureScheme,
}

fn build_common(config: &ExperimentConfig) -> Result<BuiltExperiment, Error> {
    config.validate()?;
    Ok(BuiltExperiment {
        hash: config.hash(),
        measure: config.build_measure()?,
        partition: config.build_partition()?,
        quad: config.build_quadrature(),
    })
}

/// Fits an architope to the configured target and writes
/// `architope.json`, `report.csv`, and `summary.json`.
pub fn run_upgrade(config: &ExperimentConfig, out: &Path) -> Result<UpgradeSummary, Error> {
    let built = build_common(config)?;
    let target = config.build_target(&built.partition)?;
    let regions = config
        .upgrade
        .as_ref()
        .map(|u| u.regions)
        .unwrap_or_else(|| built.partition.len());
    if regions > built.partition.len() {
        return Err(ConfigError::invalid(
            "upgrade.regions",
            format!("partition only has {} regions", built.partition.len()),
        )
        .into());
    }
    let learner = config.build_learner();
    let fit_config = config.build_fit_config();
    let outcome = upgrade(
        &target,
        &learner,
        &built.partition,
        &built.measure,
        regions,
        &fit_config,
        &built.quad,
    )?;

    // probe support and tail on an extended shell family where one is
    // available; a file-loaded partition has no canonical extension
    let (support_index, tail_mass) = match &config.partition {
        PartitionConfig::Shells { width, .. } => {
            let extended = Partition::shells(
                config.dimension,
                regions * TAIL_EXTENSION_FACTOR,
                *width,
            )?;
            let support = ess_support_index(
                &outcome.architope.handle(),
                &extended,
                &built.measure,
                &built.quad,
                1e-9,
            )?;
            let mut tail_pow = 0.0;
            for i in (regions + 1)..=extended.len() {
                let region = extended.region(i)?;
                tail_pow += integrate_region(
                    &|x| {
                        let y = target.evaluate(x);
                        y.iter().map(|v| v * v).sum::<f64>().powf(0.5 * config.p)
                    },
                    region,
                    &built.measure,
                    &built.quad,
                )?;
            }
            (support, Some(tail_pow.powf(1.0 / config.p)))
        }
        PartitionConfig::File { .. } => (
            ess_support_index(
                &outcome.architope.handle(),
                &built.partition,
                &built.measure,
                &built.quad,
                1e-9,
            )?,
            None,
        ),
    };

    let summary = UpgradeSummary {
        config_hash: built.hash.clone(),
        p: config.p,
        regions_fitted: regions,
        lp_total: outcome.report.lp_total,
        strict_norm: outcome.report.strict_norm,
        local_metric: outcome.report.local_metric,
        local_metric_tail_bound: outcome.report.local_metric_tail_bound,
        ess_support_index: support_index,
        uncovered_tail_mass: tail_mass,
        region_fits: outcome.region_fits,
    };
    report::write_file(&out.join("architope.json"), &outcome.architope.to_json())?;
    report::write_file(
        &out.join("report.csv"),
        &report::error_report_csv(&outcome.report, &built.hash),
    )?;
    report::write_file(&out.join("summary.json"), &report::to_pretty_json(&summary))?;
    Ok(summary)
}

/// Runs the analytic-family gap table and writes `gap_table.csv`.
pub fn run_gap_demo(config: &ExperimentConfig, out: &Path) -> Result<Vec<GapRow>, Error> {
    let built = build_common(config)?;
    let degrees: Vec<usize> = config
        .gap_demo
        .as_ref()
        .map(|g| g.degrees.clone())
        .unwrap_or_else(|| (0..=15).collect());
    let rows = gap_demo(
        &built.partition,
        &built.measure,
        config.p,
        &degrees,
        &built.quad,
        &config.build_fit_config(),
    )?;
    report::write_file(
        &out.join("gap_table.csv"),
        &report::gap_table_csv(&rows, &built.hash),
    )?;
    Ok(rows)
}

/// Runs the convergence diagnostic on a built-in family (or a directory
/// of serialized models) and writes `diagnostic.json` / `diagnostic.csv`.
pub fn run_diagnostic(config: &ExperimentConfig, out: &Path) -> Result<DiagnosticSummary, Error> {
    let built = build_common(config)?;
    let section = config
        .diagnostic
        .as_ref()
        .ok_or_else(|| ConfigError::invalid("diagnostic", "this command needs a [diagnostic] section"))?;
    let target_spec = section
        .target
        .clone()
        .or_else(|| config.target.clone())
        .unwrap_or(TargetConfig::Indicator { region: 1 });
    let target = config.build_named_function(&target_spec, "target", &built.partition)?;
    let sequence = diagnostic_family(
        &section.family,
        section.length,
        &built.partition,
        section.models_dir.as_deref(),
    )?;
    let diagnostic = strict_convergence_diagnostic(
        &sequence,
        &target,
        &built.partition,
        &built.measure,
        config.p,
        section.tol,
        section.support_tol,
        &built.quad,
    )?;
    let summary = DiagnosticSummary {
        config_hash: built.hash.clone(),
        verdict: diagnostic.verdict,
        target_support: diagnostic.target_support,
        per_step: diagnostic.steps.clone(),
    };
    report::write_file(&out.join("diagnostic.json"), &report::to_pretty_json(&summary))?;
    report::write_file(
        &out.join("diagnostic.csv"),
        &report::diagnostic_csv(&diagnostic, &built.hash),
    )?;
    Ok(summary)
}

/// One-off distance computation between the target and a second
/// configured function; writes `report.csv` / `report.json`.
pub fn run_metrics(config: &ExperimentConfig, out: &Path) -> Result<MetricsSummary, Error> {
    let built = build_common(config)?;
    let section = config
        .metrics
        .as_ref()
        .ok_or_else(|| ConfigError::invalid("metrics", "this command needs a [metrics] section"))?;
    let f = config.build_target(&built.partition)?;
    let g = config.build_named_function(&section.g, "metrics.g", &built.partition)?;
    let truncation = section.truncation.unwrap_or_else(|| built.partition.len());
    let report_data = error_report(
        &f,
        &g,
        &built.partition,
        &built.measure,
        config.p,
        truncation,
        &built.quad,
    )?;
    let summary = MetricsSummary {
        config_hash: built.hash.clone(),
        f_label: f.label().to_string(),
        g_label: g.label().to_string(),
        report: report_data.clone(),
    };
    report::write_file(
        &out.join("report.csv"),
        &report::error_report_csv(&report_data, &built.hash),
    )?;
    report::write_file(&out.join("report.json"), &report::to_pretty_json(&summary))?;
    Ok(summary)
}

/// Emits the configured partition as JSON and checks the partition
/// axioms numerically; writes `partition.json` / `validation.json`.
pub fn run_partition(config: &ExperimentConfig, out: &Path) -> Result<PartitionSummary, Error> {
    let built = build_common(config)?;
    let check: PartitionCheck = built.partition.validate(&built.measure, &built.quad)?;
    let summary = PartitionSummary {
        config_hash: built.hash.clone(),
        valid: check.is_valid(),
        max_overlap_mass: check.max_overlap_mass,
        covering_residual: check.covering_residual,
        region_masses: check.region_masses,
        mass_violations: check.mass_violations,
    };
    report::write_file(&out.join("partition.json"), &built.partition.to_json())?;
    report::write_file(&out.join("validation.json"), &report::to_pretty_json(&summary))?;
    Ok(summary)
}

/// Built-in diagnostic families, parametrized by the partition so the
/// same family name is meaningful under any shell width.
pub fn diagnostic_family(
    name: &str,
    length: usize,
    partition: &Partition,
    models_dir: Option<&Path>,
) -> Result<Vec<FunctionHandle>, Error> {
    let indicator = |index: usize| -> Result<FunctionHandle, Error> {
        let region = partition.region(index)?.clone();
        Ok(FunctionHandle::scalar(
            format!("indicator(K{index})"),
            move |x| if region.membership(x) { 1.0 } else { 0.0 },
        ))
    };
    match name {
        "shrinking-on-k1" => {
            let region = partition.region(1)?.clone();
            Ok((1..=length)
                .map(|k| {
                    let gate = region.clone();
                    let c = 1.0 - 1.0 / k as f64;
                    FunctionHandle::scalar(format!("({c})*I(K1)"), move |x| {
                        if gate.membership(x) {
                            c
                        } else {
                            0.0
                        }
                    })
                })
                .collect())
        }
        "leaking-to-k2" => {
            if partition.len() < 2 {
                return Err(ConfigError::invalid(
                    "diagnostic.family",
                    "leaking-to-k2 needs at least 2 regions",
                )
                .into());
            }
            let r1 = partition.region(1)?.clone();
            let r2 = partition.region(2)?.clone();
            Ok((1..=length)
                .map(|k| {
                    let (a, b) = (r1.clone(), r2.clone());
                    let leak = 1.0 / k as f64;
                    FunctionHandle::scalar(format!("I(K1)+({leak})*I(K2)"), move |x| {
                        if a.membership(x) {
                            1.0
                        } else if b.membership(x) {
                            leak
                        } else {
                            0.0
                        }
                    })
                })
                .collect())
        }
        "marching-support" => (1..=length)
            .map(|k| indicator(k.min(partition.len())))
            .collect(),
        "stalling" => {
            let region = partition.region(1)?.clone();
            Ok((1..=length)
                .map(|_| {
                    let gate = region.clone();
                    FunctionHandle::scalar("0.5*I(K1)", move |x| {
                        if gate.membership(x) {
                            0.5
                        } else {
                            0.0
                        }
                    })
                })
                .collect())
        }
        "models-dir" => {
            let dir = models_dir.ok_or_else(|| {
                ConfigError::invalid("diagnostic.models-dir", "path is required")
            })?;
            let mut paths: Vec<_> = std::fs::read_dir(dir)
                .map_err(|source| ConfigError::Io {
                    path: dir.display().to_string(),
                    source,
                })?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(ConfigError::invalid(
                    "diagnostic.models-dir",
                    "no .json models found",
                )
                .into());
            }
            let mut handles = Vec::with_capacity(paths.len());
            for path in paths {
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let model: Model = serde_json::from_str(&text).map_err(|e| {
                    ConfigError::invalid("diagnostic.models-dir", format!("{}: {e}", path.display()))
                })?;
                handles.push(model.handle(path.display().to_string()));
            }
            Ok(handles)
        }
        other => Err(ConfigError::invalid(
            "diagnostic.family",
            format!("unknown family `{other}`"),
        )
        .into()),
    }
}
