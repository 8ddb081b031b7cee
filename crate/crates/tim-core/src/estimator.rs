//! Conditional average treatment effect from refined strata.
//!
//! Within a stratum, each control j supplies a pairwise effect
//! (Ȳ_T − Y_j) — the mean treated outcome minus the control's outcome —
//! weighted by its inverse score I_j. The stratum CATE is the I-weighted
//! mean of those effects, and the overall CATE is by default the unweighted
//! mean of stratum CATEs. An unadjusted difference in means is reported
//! alongside as the naive baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::RefinedStratum;

/// Per-stratum effect row.
#[derive(Debug, Clone, Serialize)]
pub struct StratumEffect {
    /// Position of the stratum in the match result.
    pub stratum_id: usize,
    pub cate: f64,
    /// Σ I over the stratum's controls.
    pub total_weight: f64,
    pub m_treated: usize,
    pub m_control: usize,
}

/// CATE estimate with its per-stratum decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct CateEstimate {
    pub per_stratum: Vec<StratumEffect>,
    /// Mean of stratum CATEs — unweighted by default, treated-count
    /// weighted when requested.
    pub overall: f64,
    /// Unadjusted difference in means over the full dataset, for reference.
    pub naive_dim: f64,
    /// True when `overall` used treated-count weights instead of the plain
    /// stratum mean.
    pub weighted_by_treated_count: bool,
}

/// Estimator knobs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Weight each stratum's CATE by its treated count in the overall
    /// average (ATT-style aggregation) instead of the plain stratum mean.
    pub weight_strata_by_treated_count: bool,
}

/// Unadjusted difference in means: mean(Y | T=1) − mean(Y | T=0).
pub fn naive_difference_in_means(outcome: &[f64], treatment: &[bool]) -> Result<f64> {
    let mut sum_t = 0.0;
    let mut n_t = 0usize;
    let mut sum_c = 0.0;
    let mut n_c = 0usize;
    for (&y, &t) in outcome.iter().zip(treatment) {
        if t {
            sum_t += y;
            n_t += 1;
        } else {
            sum_c += y;
            n_c += 1;
        }
    }
    if n_t == 0 || n_c == 0 {
        return Err(Error::Degenerate("difference in means needs both classes".into()));
    }
    Ok(sum_t / n_t as f64 - sum_c / n_c as f64)
}

/// Computes the stratum-level and overall CATE from refined strata.
///
/// Controls with zero inverse score contribute nothing; if an entire
/// stratum's weights sum to zero (cannot happen under the refinement
/// conventions, but guarded), its controls are averaged unweighted instead.
pub fn estimate_cate(
    refined: &[RefinedStratum],
    outcome: &[f64],
    treatment: &[bool],
    options: &EstimatorOptions,
) -> Result<CateEstimate> {
    if refined.is_empty() {
        return Err(Error::Degenerate("no matched strata".into()));
    }
    let naive_dim = naive_difference_in_means(outcome, treatment)?;

    let mut per_stratum = Vec::with_capacity(refined.len());
    for (stratum_id, rs) in refined.iter().enumerate() {
        let treated = &rs.base.treated_members;
        let controls = &rs.base.control_members;
        if treated.is_empty() || controls.is_empty() {
            return Err(Error::Internal(format!(
                "stratum {stratum_id} is missing a class (m_T={}, m_C={})",
                treated.len(),
                controls.len()
            )));
        }
        let mean_treated: f64 =
            treated.iter().map(|&i| outcome[i]).sum::<f64>() / treated.len() as f64;
        let total_weight: f64 = rs.inverse_score.iter().sum();
        let cate = if total_weight > 0.0 {
            controls
                .iter()
                .zip(&rs.inverse_score)
                .map(|(&j, &w)| w * (mean_treated - outcome[j]))
                .sum::<f64>()
                / total_weight
        } else {
            controls.iter().map(|&j| mean_treated - outcome[j]).sum::<f64>()
                / controls.len() as f64
        };
        per_stratum.push(StratumEffect {
            stratum_id,
            cate,
            total_weight,
            m_treated: treated.len(),
            m_control: controls.len(),
        });
    }

    let overall = if options.weight_strata_by_treated_count {
        let total: f64 = per_stratum.iter().map(|s| s.m_treated as f64).sum();
        per_stratum.iter().map(|s| s.cate * s.m_treated as f64).sum::<f64>() / total
    } else {
        per_stratum.iter().map(|s| s.cate).sum::<f64>() / per_stratum.len() as f64
    };

    Ok(CateEstimate {
        per_stratum,
        overall,
        naive_dim,
        weighted_by_treated_count: options.weight_strata_by_treated_count,
    })
}
