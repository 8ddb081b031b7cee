//! Versioned report documents emitted by the command-line tools.
//!
//! Every report has two top-level sections:
//!
//! * `results` — the numeric payload. For a fixed input, configuration, and
//!   seed this subtree is byte-for-byte reproducible, so callers can verify
//!   determinism by serializing `results` alone.
//! * `provenance` — tool name/version, report schema version, the seed and
//!   thread settings the run used, and wall-clock timings. Timings are
//!   machine-dependent by nature, which is exactly why they live outside
//!   `results`.

use serde::{Deserialize, Serialize};

use crate::dataset::{CovariateKind, Dataset};
use crate::estimator::StratumEffect;
use crate::imbalance::ImbalanceReport;
use crate::importance::ImportanceVector;
use crate::matcher::MatchResult;
use crate::pipeline::{EstimateOutput, MatchOutput, Timings};
use crate::refine::RefinedStratum;
use crate::simulate::{BenchmarkRow, BenchmarkSummary, BenchmarkTable, ScenarioSpec};

/// Version of the report document layout, bumped on breaking changes.
pub const REPORT_VERSION: u32 = 1;

/// Identity block for the emitting tool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    pub report_version: u32,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: "tim".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            report_version: REPORT_VERSION,
        }
    }
}

/// Everything machine- or invocation-specific.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: ToolInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl Provenance {
    pub fn new(seed: Option<u64>, threads: Option<usize>, timings: Option<Timings>) -> Self {
        Provenance { tool: ToolInfo::current(), seed, threads, timings }
    }
}

/// Shape of the input data, echoed for auditability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub k: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub columns: Vec<ColumnSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: CovariateKind,
    /// Number of levels for discrete columns, absent for continuous ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<u16>,
}

impl DatasetSummary {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let columns = (0..ds.k())
            .map(|j| ColumnSummary {
                name: ds.name(j).to_string(),
                kind: ds.kind(j),
                levels: match ds.kind(j) {
                    CovariateKind::Discrete => Some(ds.levels(j)),
                    CovariateKind::Continuous => None,
                },
            })
            .collect();
        DatasetSummary {
            n: ds.n(),
            k: ds.k(),
            n_treated: ds.n_treated(),
            n_control: ds.n_control(),
            columns,
        }
    }
}

/// One covariate's importance diagnostics. `rank` is 1-based; rank 1 is the
/// most important covariate (last to be dropped during matching).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub column: String,
    pub beta_hat: f64,
    pub alpha_hat: f64,
    pub theta_star: f64,
    pub rank: usize,
}

fn importance_rows(ds: &Dataset, imp: &ImportanceVector) -> Vec<ImportanceRow> {
    let mut rank_of = vec![0usize; imp.order.len()];
    for (pos, &col) in imp.order.iter().enumerate() {
        rank_of[col] = pos + 1;
    }
    (0..ds.k())
        .map(|j| ImportanceRow {
            column: ds.name(j).to_string(),
            beta_hat: imp.beta_hat[j],
            alpha_hat: imp.alpha_hat[j],
            theta_star: imp.theta_star[j],
            rank: rank_of[j],
        })
        .collect()
}

/// Sizes and coverage of the matched sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingSummary {
    pub n_strata: usize,
    pub t_fraction: f64,
    pub matched_treated: usize,
    pub matched_controls: usize,
    pub unmatched_treated: Vec<usize>,
    pub unmatched_controls: usize,
}

impl MatchingSummary {
    fn from_result(result: &MatchResult) -> Self {
        MatchingSummary {
            n_strata: result.strata.len(),
            t_fraction: result.t_fraction(),
            matched_treated: result.matched_treated(),
            matched_controls: result.matched_controls(),
            unmatched_treated: result.unmatched_treated.clone(),
            unmatched_controls: result.unmatched_controls.len(),
        }
    }
}

/// A stratum as exported by the matching-only report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRecord {
    pub id: usize,
    /// Coarsening iteration that produced the stratum (0 = all covariates
    /// exact; k = everything dropped).
    pub iteration: usize,
    pub matched_columns: Vec<String>,
    /// Names in drop order: first entry was dropped first.
    pub dropped_columns: Vec<String>,
    /// Shared codes on `matched_columns`, in that column order.
    pub signature: Vec<u16>,
    pub treated: Vec<usize>,
    pub controls: Vec<usize>,
}

/// A stratum in the full-pipeline report: members plus per-control mixed
/// distances, inverse scores, and the stratum's weighted effect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinedStratumRecord {
    pub id: usize,
    pub iteration: usize,
    pub matched_columns: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub signature: Vec<u16>,
    pub treated: Vec<usize>,
    pub controls: Vec<ControlRecord>,
    pub cate: f64,
    pub total_weight: f64,
}

/// One matched control with its refinement scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlRecord {
    pub row: usize,
    /// Mixed squared distance over the dropped covariates (Δ).
    pub distance: f64,
    /// Inverse min-max score used as the control's weight (I).
    pub inverse_score: f64,
}

fn column_names(ds: &Dataset, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&j| ds.name(j).to_string()).collect()
}

fn stratum_records(ds: &Dataset, result: &MatchResult) -> Vec<StratumRecord> {
    result
        .strata
        .iter()
        .enumerate()
        .map(|(id, s)| StratumRecord {
            id,
            iteration: s.iteration,
            matched_columns: column_names(ds, &s.matched_columns),
            dropped_columns: column_names(ds, &s.dropped_columns),
            signature: s.signature.clone(),
            treated: s.treated_members.clone(),
            controls: s.control_members.clone(),
        })
        .collect()
}

fn refined_records(
    ds: &Dataset,
    refined: &[RefinedStratum],
    effects: &[StratumEffect],
) -> Vec<RefinedStratumRecord> {
    refined
        .iter()
        .zip(effects)
        .enumerate()
        .map(|(id, (r, e))| RefinedStratumRecord {
            id,
            iteration: r.base.iteration,
            matched_columns: column_names(ds, &r.base.matched_columns),
            dropped_columns: column_names(ds, &r.base.dropped_columns),
            signature: r.base.signature.clone(),
            treated: r.base.treated_members.clone(),
            controls: r
                .base
                .control_members
                .iter()
                .zip(&r.control_distance)
                .zip(&r.inverse_score)
                .map(|((&row, &distance), &inverse_score)| ControlRecord {
                    row,
                    distance,
                    inverse_score,
                })
                .collect(),
            cate: e.cate,
            total_weight: e.total_weight,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Match report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub results: MatchResults,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchResults {
    pub config: serde_json::Value,
    pub dataset: DatasetSummary,
    pub importance: Vec<ImportanceRow>,
    pub matching: MatchingSummary,
    pub strata: Vec<StratumRecord>,
    pub warnings: Vec<String>,
}

pub fn build_match_report(
    ds: &Dataset,
    out: &MatchOutput,
    config: serde_json::Value,
    seed: Option<u64>,
    threads: Option<usize>,
) -> MatchReport {
    MatchReport {
        results: MatchResults {
            config,
            dataset: DatasetSummary::from_dataset(ds),
            importance: importance_rows(ds, &out.importance),
            matching: MatchingSummary::from_result(&out.match_result),
            strata: stratum_records(ds, &out.match_result),
            warnings: out.warnings.clone(),
        },
        provenance: Provenance::new(seed, threads, Some(out.timings.clone())),
    }
}

// ---------------------------------------------------------------------------
// Estimate report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub results: EstimateResults,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectSummary {
    /// Primary estimate: unweighted mean of stratum effects.
    pub overall_cate: f64,
    /// True when strata were aggregated with treated-count weights
    /// instead of the default unweighted mean.
    pub weighted_by_treated_count: bool,
    /// Unadjusted difference in means over the full dataset.
    pub naive_dim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResults {
    pub config: serde_json::Value,
    pub dataset: DatasetSummary,
    pub importance: Vec<ImportanceRow>,
    pub matching: MatchingSummary,
    pub effects: EffectSummary,
    pub imbalance: ImbalanceReport,
    pub strata: Vec<RefinedStratumRecord>,
    pub warnings: Vec<String>,
}

pub fn build_estimate_report(
    ds: &Dataset,
    out: &EstimateOutput,
    config: serde_json::Value,
    seed: Option<u64>,
    threads: Option<usize>,
) -> EstimateReport {
    EstimateReport {
        results: EstimateResults {
            config,
            dataset: DatasetSummary::from_dataset(ds),
            importance: importance_rows(ds, &out.importance),
            matching: MatchingSummary::from_result(&out.match_result),
            effects: EffectSummary {
                overall_cate: out.cate.overall,
                weighted_by_treated_count: out.cate.weighted_by_treated_count,
                naive_dim: out.cate.naive_dim,
            },
            imbalance: out.imbalance.clone(),
            strata: refined_records(ds, &out.refined, &out.cate.per_stratum),
            warnings: out.warnings.clone(),
        },
        provenance: Provenance::new(seed, threads, Some(out.timings.clone())),
    }
}

// ---------------------------------------------------------------------------
// Benchmark report
// ---------------------------------------------------------------------------

/// A replicate row without its wall-clock time (which lives in provenance).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRowResult {
    pub replicate: usize,
    pub cate: Option<f64>,
    pub bias: Option<f64>,
    pub naive_dim: Option<f64>,
    pub l1_pre: Option<f64>,
    pub l1_post: Option<f64>,
    pub t_fraction: Option<f64>,
    pub error: Option<String>,
}

impl From<&BenchmarkRow> for BenchmarkRowResult {
    fn from(row: &BenchmarkRow) -> Self {
        BenchmarkRowResult {
            replicate: row.replicate,
            cate: row.cate,
            bias: row.bias,
            naive_dim: row.naive_dim,
            l1_pre: row.l1_pre,
            l1_post: row.l1_post,
            t_fraction: row.t_fraction,
            error: row.error.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub results: BenchmarkResults,
    pub provenance: BenchmarkProvenance,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkResults {
    pub config: serde_json::Value,
    pub scenario: ScenarioSpec,
    pub master_seed: u64,
    pub summary: BenchmarkSummary,
    pub rows: Vec<BenchmarkRowResult>,
}

// Deserialize is only needed for report consumers; summaries are read back
// as raw JSON values to avoid duplicating their layout here.
impl<'de> Deserialize<'de> for BenchmarkResults {
    fn deserialize<D>(_: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        Err(serde::de::Error::custom(
            "benchmark results are write-only; parse them as serde_json::Value",
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkProvenance {
    pub tool: ToolInfo,
    pub seconds_per_replicate: Vec<f64>,
    pub mean_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

pub fn build_benchmark_report(
    table: &BenchmarkTable,
    config: serde_json::Value,
    threads: Option<usize>,
) -> BenchmarkReport {
    let seconds: Vec<f64> = table.rows.iter().map(|r| r.seconds).collect();
    let mean_seconds = if seconds.is_empty() {
        0.0
    } else {
        seconds.iter().sum::<f64>() / seconds.len() as f64
    };
    BenchmarkReport {
        results: BenchmarkResults {
            config,
            scenario: table.scenario.clone(),
            master_seed: table.master_seed,
            summary: table.summary.clone(),
            rows: table.rows.iter().map(BenchmarkRowResult::from).collect(),
        },
        provenance: BenchmarkProvenance {
            tool: ToolInfo::current(),
            seconds_per_replicate: seconds,
            mean_seconds,
            threads,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run_estimate, run_match, PipelineOptions};
    use crate::simulate::{generate, run_benchmark};

    fn fixture() -> Dataset {
        let spec = ScenarioSpec::preset("1A").unwrap();
        generate(&spec, 99, 0).unwrap().0
    }

    #[test]
    fn estimate_report_serializes_with_expected_sections() {
        let ds = fixture();
        let out = run_estimate(&ds, &PipelineOptions::default()).unwrap();
        let report =
            build_estimate_report(&ds, &out, serde_json::json!({"seed": 99}), Some(99), None);
        let value = serde_json::to_value(&report).unwrap();
        assert!(value.get("results").is_some());
        assert!(value.get("provenance").is_some());
        let results = &value["results"];
        for key in ["config", "dataset", "importance", "matching", "effects", "imbalance", "strata", "warnings"] {
            assert!(results.get(key).is_some(), "missing results.{key}");
        }
        assert_eq!(value["provenance"]["tool"]["report_version"], REPORT_VERSION);
        // Timings never leak into the reproducible payload.
        assert!(serde_json::to_string(results).unwrap().find("timings").is_none());
    }

    #[test]
    fn results_subtree_is_reproducible_but_provenance_is_not_compared() {
        let ds = fixture();
        let a = run_estimate(&ds, &PipelineOptions::default()).unwrap();
        let b = run_estimate(&ds, &PipelineOptions::default()).unwrap();
        let ra = build_estimate_report(&ds, &a, serde_json::Value::Null, Some(1), None);
        let rb = build_estimate_report(&ds, &b, serde_json::Value::Null, Some(1), None);
        assert_eq!(
            serde_json::to_string(&ra.results).unwrap(),
            serde_json::to_string(&rb.results).unwrap()
        );
    }

    #[test]
    fn importance_ranks_are_a_permutation_ordered_by_theta() {
        let ds = fixture();
        let out = run_match(&ds, &PipelineOptions::default()).unwrap();
        let report = build_match_report(&ds, &out, serde_json::Value::Null, None, None);
        let rows = &report.results.importance;
        let mut ranks: Vec<usize> = rows.iter().map(|r| r.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (1..=ds.k()).collect::<Vec<_>>());
        // rank 1 has the maximal theta*.
        let best = rows.iter().find(|r| r.rank == 1).unwrap();
        assert!(rows.iter().all(|r| r.theta_star <= best.theta_star));
    }

    #[test]
    fn stratum_records_drop_order_reverses_importance_tail() {
        let ds = fixture();
        let out = run_match(&ds, &PipelineOptions::default()).unwrap();
        let report = build_match_report(&ds, &out, serde_json::Value::Null, None, None);
        for s in &report.results.strata {
            assert_eq!(s.matched_columns.len() + s.dropped_columns.len(), ds.k());
            assert_eq!(s.signature.len(), s.matched_columns.len());
            assert!(!s.treated.is_empty());
            assert!(!s.controls.is_empty());
        }
        let total_treated: usize = report.results.strata.iter().map(|s| s.treated.len()).sum();
        assert_eq!(total_treated, report.results.matching.matched_treated);
    }

    #[test]
    fn benchmark_report_moves_seconds_to_provenance() {
        let mut spec = ScenarioSpec::preset("1A").unwrap();
        spec.n = 120;
        let table = run_benchmark(&spec, 3, 5, &PipelineOptions::default()).unwrap();
        let report = build_benchmark_report(&table, serde_json::Value::Null, Some(2));
        let value = serde_json::to_value(&report).unwrap();
        assert_eq!(value["provenance"]["seconds_per_replicate"].as_array().unwrap().len(), 3);
        let results_text = serde_json::to_string(&value["results"]).unwrap();
        assert!(!results_text.contains("seconds"));
        assert_eq!(value["results"]["rows"].as_array().unwrap().len(), 3);
    }
}
