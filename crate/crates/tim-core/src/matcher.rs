//! Iterative exact matching on coarsened covariate signatures.
//!
//! Iteration u = 0 groups every remaining unit by its full k-column coarsened
//! signature; each group meeting the per-class size floors (default: at
//! least three treated and three control units) becomes a stratum. Matched
//! treated units leave the pool. The least-important covariate (by θ* rank)
//! is then dropped and the survivors are regrouped on the shorter signature.
//! The loop ends when no unmatched treated unit remains or all columns have
//! been dropped — the final iteration groups on the empty signature,
//! sweeping everything left into one catch-all stratum, and is exempt from
//! the size floors so that coverage never suffers.
//!
//! Treated units are always matched without replacement (each belongs to at
//! most one stratum). Controls are reusable across iterations by default: a
//! control serves every stratum whose signature it shares, one per
//! iteration, which guarantees that the control pool never empties and
//! therefore that every treated unit is eventually matched (T_f = 1).
//! [`MatcherOptions`] can restrict controls to single use instead.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::CoarsenedView;
use crate::error::{Error, Result};

/// One matched group: treated and control units agreeing exactly on the
/// coarsened codes of `matched_columns`.
#[derive(Debug, Clone, Serialize)]
pub struct Stratum {
    /// Coarsened codes on `matched_columns`, in the same order.
    pub signature: Vec<u16>,
    /// Covariate indices matched exactly, ascending. `k − u` columns.
    pub matched_columns: Vec<usize>,
    /// Covariate indices dropped before this stratum formed, in drop order.
    pub dropped_columns: Vec<usize>,
    /// Row indices of treated members (ascending), size ≥ 1.
    pub treated_members: Vec<usize>,
    /// Row indices of control members (ascending), size ≥ 1.
    pub control_members: Vec<usize>,
    /// Number of columns dropped when this stratum formed (u).
    pub iteration: usize,
}

/// Matching-loop knobs. The defaults are the standard algorithm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatcherOptions {
    /// Controls stay in the pool after matching and may serve several strata
    /// across iterations (default). When false, a matched control is
    /// consumed like a treated unit, and the control pool can run dry before
    /// every treated unit finds a stratum.
    pub reuse_controls: bool,
    /// Smallest number of treated units a signature group needs to become a
    /// stratum during the ordinary iterations (default 3). The final
    /// catch-all iteration is exempt: its job is the full-coverage
    /// guarantee, so it accepts any group with one of each class. Raising
    /// the floors trades a little coarsening (units deferred to later, wider
    /// strata) for strata whose group means rest on more than one or two
    /// units; the defaults were calibrated on the bundled scenario suite.
    pub min_treated: u16,
    /// Smallest number of control units a signature group needs to become a
    /// stratum during the ordinary iterations (default 3); the catch-all is
    /// exempt.
    pub min_controls: u16,
    /// Let the final iteration group on the empty signature, sweeping all
    /// survivors into one catch-all stratum (default). When false, the loop
    /// stops after grouping on the single most important covariate.
    pub final_catch_all: bool,
}

impl Default for MatcherOptions {
    fn default() -> Self {
        MatcherOptions {
            reuse_controls: true,
            min_treated: 3,
            min_controls: 3,
            final_catch_all: true,
        }
    }
}

/// Result of the full matching loop.
#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    pub strata: Vec<Stratum>,
    pub unmatched_treated: Vec<usize>,
    /// Controls that never entered any stratum.
    pub unmatched_controls: Vec<usize>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl MatchResult {
    /// Fraction of treated units that landed in a stratum.
    pub fn t_fraction(&self) -> f64 {
        let matched: usize = self.strata.iter().map(|s| s.treated_members.len()).sum();
        matched as f64 / self.n_treated as f64
    }

    pub fn matched_treated(&self) -> usize {
        self.strata.iter().map(|s| s.treated_members.len()).sum()
    }

    /// Distinct controls appearing in at least one stratum. (A reused
    /// control counts once here even when it serves several strata.)
    pub fn matched_controls(&self) -> usize {
        self.n_control - self.unmatched_controls.len()
    }

    /// Total control memberships, counting a reused control once per stratum.
    pub fn control_memberships(&self) -> usize {
        self.strata.iter().map(|s| s.control_members.len()).sum()
    }
}

/// Runs the iterative exact-matching loop with default [`MatcherOptions`].
///
/// `order` is the importance permutation (most important first); columns are
/// dropped from its tail. The result is deterministic: strata are listed in
/// iteration order, and within an iteration by first appearance of their
/// signature in row order.
pub fn run_matching(view: &CoarsenedView, treatment: &[bool], order: &[usize]) -> Result<MatchResult> {
    run_matching_with(view, treatment, order, &MatcherOptions::default())
}

/// [`run_matching`] with explicit loop knobs.
pub fn run_matching_with(
    view: &CoarsenedView,
    treatment: &[bool],
    order: &[usize],
    options: &MatcherOptions,
) -> Result<MatchResult> {
    let k = view.k();
    let n = view.n();
    if treatment.len() != n {
        return Err(Error::Internal(format!(
            "coarsened view has {n} rows but treatment vector has {}",
            treatment.len()
        )));
    }
    {
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&j| j >= k || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::Internal(format!("order {order:?} is not a permutation of 0..{k}")));
        }
    }
    let last_iteration = if options.final_catch_all { k } else { k.saturating_sub(1) };

    let n_treated = treatment.iter().filter(|&&t| t).count();
    let n_control = n - n_treated;
    let mut pool: Vec<usize> = (0..n).collect();
    let mut consumed = vec![false; n];
    let mut control_matched = vec![false; n];
    let mut strata = Vec::new();

    for u in 0..=last_iteration {
        if !pool.iter().any(|&i| treatment[i]) {
            break; // every treated unit is matched
        }
        // The u = k catch-all is exempt from the group-size floors: it
        // exists to guarantee coverage of every remaining treated unit.
        let (min_t, min_c) = if u < k {
            (usize::from(options.min_treated.max(1)), usize::from(options.min_controls.max(1)))
        } else {
            (1, 1)
        };
        // Matched columns this round: the k−u most important, ascending.
        let mut matched_columns: Vec<usize> = order[..k - u].to_vec();
        matched_columns.sort_unstable();
        let dropped_columns: Vec<usize> = order[k - u..].iter().rev().copied().collect();

        // Group the pool by signature, remembering first-appearance order of
        // keys so the result never depends on hash iteration order.
        let mut groups: HashMap<Vec<u16>, Vec<usize>> = HashMap::new();
        let mut key_order: Vec<Vec<u16>> = Vec::new();
        for &i in &pool {
            let signature: Vec<u16> =
                matched_columns.iter().map(|&j| view.code(i, j)).collect();
            if let Some(members) = groups.get_mut(&signature) {
                members.push(i);
            } else {
                key_order.push(signature.clone());
                groups.insert(signature, vec![i]);
            }
        }

        let mut any_consumed = false;
        for key in &key_order {
            let members = &groups[key];
            let treated_members: Vec<usize> =
                members.iter().copied().filter(|&i| treatment[i]).collect();
            let n_controls_here = members.len() - treated_members.len();
            if treated_members.len() < min_t || n_controls_here < min_c {
                continue;
            }
            let control_members: Vec<usize> =
                members.iter().copied().filter(|&i| !treatment[i]).collect();
            for &i in &treated_members {
                consumed[i] = true;
            }
            for &i in &control_members {
                control_matched[i] = true;
                if !options.reuse_controls {
                    consumed[i] = true;
                }
            }
            any_consumed = true;
            strata.push(Stratum {
                signature: key.clone(),
                matched_columns: matched_columns.clone(),
                dropped_columns: dropped_columns.clone(),
                treated_members,
                control_members,
                iteration: u,
            });
        }
        if any_consumed {
            pool.retain(|&i| !consumed[i]);
        }
    }

    let unmatched_treated: Vec<usize> =
        (0..n).filter(|&i| treatment[i] && !consumed[i]).collect();
    let unmatched_controls: Vec<usize> =
        (0..n).filter(|&i| !treatment[i] && !control_matched[i]).collect();

    Ok(MatchResult { strata, unmatched_treated, unmatched_controls, n_treated, n_control })
}
