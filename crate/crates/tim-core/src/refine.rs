//! Within-stratum refinement: mixed distance over dropped covariates and the
//! inverse min-max score used to weight controls in the effect estimate.
//!
//! For a control unit j in a stratum whose formation dropped covariate set u,
//! the grand total distance is
//!
//! Δ = Σ dropped continuous c (x_c − x_cj)²  +  Σ dropped discrete d Ω(x_d, x_dj)²,
//!
//! averaged over the stratum's treated units when there are several (the
//! single-treated case reduces to the plain formula). Continuous columns use
//! original values — coarsening is for match grouping only — optionally
//! min-max normalized to [0,1] (default on) so both terms share the scale of
//! Ω. Scores are I = 1 − (Δ − Δ_min)/(Δ_max − Δ_min) per stratum: 1 for the
//! closest control, 0 for the farthest, and 1 for everyone when all
//! distances are equal (exact matches, single-control strata).
//!
//! The per-control cost is O(u): the mean over treated units of
//! (x_i − x_j)² expands to mean(x_i²) − 2·x_j·mean(x_i) + x_j², and the
//! discrete term needs only the treated code counts, so no treated×control
//! double loop is required.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CoarsenedView, CovariateKind, Dataset};
use crate::distance::DiscreteDistanceModel;
use crate::error::{Error, Result};
use crate::matcher::Stratum;

/// Refinement knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Min-max normalize continuous columns to [0,1] before distance
    /// computation so squared differences are commensurate with Ω² ∈ [0,1].
    /// Off reproduces the raw-difference formula literally.
    pub normalize_continuous: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { normalize_continuous: true }
    }
}

/// A stratum with per-control distances and inverse scores attached.
/// Both vectors align with `base.control_members`.
#[derive(Debug, Clone, Serialize)]
pub struct RefinedStratum {
    pub base: Stratum,
    pub control_distance: Vec<f64>,
    pub inverse_score: Vec<f64>,
}

/// Precomputed per-column state shared by every stratum refinement:
/// (possibly normalized) continuous values and memoized Ω lookup tables.
pub struct RefineContext<'a> {
    view: &'a CoarsenedView,
    /// For each continuous column: its values on the distance scale.
    continuous: Vec<Option<Vec<f64>>>,
    /// For each discrete column: full Ω table (levels × levels).
    omega: Vec<Option<Vec<Vec<f64>>>>,
}

impl<'a> RefineContext<'a> {
    pub fn new(
        ds: &'a Dataset,
        view: &'a CoarsenedView,
        dmodel: &DiscreteDistanceModel,
        options: &RefineOptions,
    ) -> Result<Self> {
        if view.n() != ds.n() || view.k() != ds.k() || dmodel.k_total() != ds.k() {
            return Err(Error::Internal(
                "refinement inputs disagree on dataset dimensions".into(),
            ));
        }
        let mut continuous = Vec::with_capacity(ds.k());
        let mut omega = Vec::with_capacity(ds.k());
        for j in 0..ds.k() {
            match ds.kind(j) {
                CovariateKind::Continuous => {
                    let raw = ds.continuous(j);
                    let values = if options.normalize_continuous {
                        let (min, max) = ds.min_max(j);
                        if max > min {
                            raw.iter().map(|&x| (x - min) / (max - min)).collect()
                        } else {
                            vec![0.0; raw.len()] // constant column: distance 0 either way
                        }
                    } else {
                        raw.to_vec()
                    };
                    continuous.push(Some(values));
                    omega.push(None);
                }
                CovariateKind::Discrete => {
                    continuous.push(None);
                    omega.push(Some(dmodel.omega_table(j)));
                }
            }
        }
        Ok(RefineContext { view, continuous, omega })
    }

    /// Refines one stratum: grand total distance Δ and inverse score I per
    /// control member.
    pub fn refine(&self, stratum: &Stratum) -> RefinedStratum {
        let m_t = stratum.treated_members.len() as f64;
        let mut distances = vec![0.0f64; stratum.control_members.len()];

        for &col in &stratum.dropped_columns {
            match (&self.continuous[col], &self.omega[col]) {
                (Some(values), None) => {
                    // Mean over treated of (x_i − x_j)², decomposed so each
                    // control costs O(1).
                    let mut mean = 0.0;
                    let mut mean_sq = 0.0;
                    for &i in &stratum.treated_members {
                        mean += values[i];
                        mean_sq += values[i] * values[i];
                    }
                    mean /= m_t;
                    mean_sq /= m_t;
                    for (slot, &j) in stratum.control_members.iter().enumerate() {
                        let x = values[j];
                        // = Var_T + (mean − x)²; clamp tiny negative drift.
                        distances[slot] += (mean_sq - 2.0 * mean * x + x * x).max(0.0);
                    }
                }
                (None, Some(table)) => {
                    // Mean over treated of Ω(x_i, x_j)² needs only the
                    // treated code counts; fold them into a per-code weight.
                    let levels = table.len();
                    let mut counts = vec![0.0f64; levels];
                    for &i in &stratum.treated_members {
                        counts[usize::from(self.view.code(i, col))] += 1.0;
                    }
                    let mut per_code = vec![0.0f64; levels];
                    for (y, w) in per_code.iter_mut().enumerate() {
                        for v in 0..levels {
                            if counts[v] > 0.0 {
                                let o = table[v][y];
                                *w += counts[v] * o * o;
                            }
                        }
                        *w /= m_t;
                    }
                    for (slot, &j) in stratum.control_members.iter().enumerate() {
                        distances[slot] += per_code[usize::from(self.view.code(j, col))];
                    }
                }
                _ => unreachable!("context stores exactly one representation per column"),
            }
        }

        let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = distances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inverse_score = if max == min {
            // All equally distant (exact matches, single control): weight 1.
            vec![1.0; distances.len()]
        } else {
            distances.iter().map(|&d| 1.0 - (d - min) / (max - min)).collect()
        };

        RefinedStratum {
            base: stratum.clone(),
            control_distance: distances,
            inverse_score,
        }
    }

    /// Refines every stratum, in parallel; output order matches input order.
    pub fn refine_all(&self, strata: &[Stratum]) -> Vec<RefinedStratum> {
        strata.par_iter().map(|s| self.refine(s)).collect()
    }
}

/// Convenience wrapper building the context for a single stratum.
pub fn refine_stratum(
    stratum: &Stratum,
    ds: &Dataset,
    view: &CoarsenedView,
    dmodel: &DiscreteDistanceModel,
    options: &RefineOptions,
) -> Result<RefinedStratum> {
    Ok(RefineContext::new(ds, view, dmodel, options)?.refine(stratum))
}
