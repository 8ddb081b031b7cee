//! End-to-end orchestration: importance → coarsen → match → refine →
//! estimate → imbalance, with per-stage wall-clock timings.
//!
//! Two entry points: [`run_match`] stops after the matching stage (strata
//! only), [`run_estimate`] runs the full pipeline to a weighted CATE and the
//! imbalance report. Both are deterministic for a fixed dataset and options.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::distance::DiscreteDistanceModel;
use crate::error::Result;
use crate::estimator::{estimate_cate, CateEstimate, EstimatorOptions};
use crate::imbalance::{imbalance_report, Binning, ImbalanceOptions, ImbalanceReport};
use crate::importance::{compute_importance, ImportanceVector, LogisticConfig};
use crate::matcher::{run_matching_with, MatchResult, MatcherOptions};
use crate::refine::{RefineContext, RefineOptions, RefinedStratum};

/// Knobs for every stage. The defaults reproduce the standard pipeline.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineOptions {
    pub logistic: LogisticConfig,
    pub matcher: MatcherOptions,
    /// Per-column coarsening overrides for the *matching* stage. The
    /// imbalance diagnostic always uses the dataset's default binning so
    /// that reported L1 values stay comparable across option settings.
    pub bins_per_column: Option<HashMap<String, u16>>,
    pub refine: RefineOptions,
    pub estimator: EstimatorOptions,
    pub imbalance: ImbalanceOptions,
}

/// Seconds spent in each stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub importance_s: f64,
    pub coarsen_s: f64,
    pub distance_model_s: f64,
    pub matching_s: f64,
    pub refine_s: f64,
    pub estimate_s: f64,
    pub imbalance_s: f64,
    pub total_s: f64,
}

/// Output of the matching-only pipeline.
#[derive(Debug, Clone)]
pub struct MatchOutput {
    pub importance: ImportanceVector,
    pub match_result: MatchResult,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

/// Output of the full estimation pipeline.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub importance: ImportanceVector,
    pub match_result: MatchResult,
    pub refined: Vec<RefinedStratum>,
    pub cate: CateEstimate,
    pub imbalance: ImbalanceReport,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

/// Ranks covariates, coarsens, and matches. No refinement or estimates.
pub fn run_match(ds: &Dataset, options: &PipelineOptions) -> Result<MatchOutput> {
    let total = Instant::now();
    let mut timings = Timings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let importance = compute_importance(ds, &options.logistic)?;
    timings.importance_s = t.elapsed().as_secs_f64();
    warnings.extend(importance.warnings.iter().cloned());

    let t = Instant::now();
    let view = ds.coarsen(options.bins_per_column.as_ref())?;
    timings.coarsen_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let match_result = run_matching_with(&view, ds.treatment(), &importance.order, &options.matcher)?;
    timings.matching_s = t.elapsed().as_secs_f64();

    timings.total_s = total.elapsed().as_secs_f64();
    Ok(MatchOutput { importance, match_result, warnings, timings })
}

/// The full pipeline: match, refine with the mixed distance, estimate the
/// CATE, and compute pre/post imbalance.
pub fn run_estimate(ds: &Dataset, options: &PipelineOptions) -> Result<EstimateOutput> {
    let total = Instant::now();
    let mut timings = Timings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let importance = compute_importance(ds, &options.logistic)?;
    timings.importance_s = t.elapsed().as_secs_f64();
    warnings.extend(importance.warnings.iter().cloned());

    let t = Instant::now();
    let view = ds.coarsen(options.bins_per_column.as_ref())?;
    timings.coarsen_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let codes = ds.discretize_for_distance(&view)?;
    let levels: Vec<u16> = (0..ds.k()).map(|j| view.levels(j)).collect();
    let dmodel = DiscreteDistanceModel::build(&codes, &levels)?;
    timings.distance_model_s = t.elapsed().as_secs_f64();
    warnings.extend(dmodel.warnings().iter().cloned());

    let t = Instant::now();
    let match_result = run_matching_with(&view, ds.treatment(), &importance.order, &options.matcher)?;
    timings.matching_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ctx = RefineContext::new(ds, &view, &dmodel, &options.refine)?;
    let refined = ctx.refine_all(&match_result.strata);
    timings.refine_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let cate = estimate_cate(&refined, ds.outcome(), ds.treatment(), &options.estimator)?;
    timings.estimate_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    // Deliberately independent of `bins_per_column`: see
    // `PipelineOptions::bins_per_column`. The diagnostic can still be
    // coarsened explicitly through `ImbalanceOptions::equal_width_bins`.
    let binning = match options.imbalance.equal_width_bins {
        Some(bins) => Binning::equal_width_for(ds, bins),
        None => Binning::default_for(ds),
    };
    let imbalance =
        imbalance_report(ds, &binning, &match_result, Some(&refined), &options.imbalance)?;
    timings.imbalance_s = t.elapsed().as_secs_f64();

    timings.total_s = total.elapsed().as_secs_f64();
    Ok(EstimateOutput {
        importance,
        match_result,
        refined,
        cate,
        imbalance,
        warnings,
        timings,
    })
}
