//! Multivariate L1 imbalance over a shared multidimensional histogram.
//!
//! Each unit is assigned a k-tuple cell; L1(f, g) is half the sum of
//! absolute differences between the two groups' relative cell frequencies:
//! 0 for perfect overlap, 1 for disjoint supports. By default continuous
//! columns are kept at full resolution — every distinct value is its own
//! cell — so the diagnostic asks whether the groups overlap *exactly*;
//! with truly continuous data they never do, the pre-match L1 is exactly 1,
//! and the statistic has the whole [0, 1] range to show matching gains.
//! Equal-width alternatives (fixed count or Sturges' rule, mirroring the
//! matcher's coarsening) are available for coarser audits. The binning is
//! frozen once on the full pre-match sample and reused for every later
//! computation so pre- and post-match numbers are comparable.
//!
//! Cells are stored sparsely (22 covariates make dense tensors infeasible)
//! and the sum is evaluated in integer arithmetic —
//! Σ |a_i·n_B − b_i·n_A| / (2·n_A·n_B) — so the result is independent of
//! accumulation order and hits the 0 and 1 boundaries exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{bin_code, CovariateKind, Dataset};
use crate::error::{Error, Result};
use crate::matcher::{MatchResult, Stratum};
use crate::refine::RefinedStratum;

/// Binning of one covariate column for histogram-cell assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnBins {
    /// Discrete column: one cell per category code.
    Discrete { name: String, levels: u16 },
    /// Continuous column at full resolution: every distinct value is its own
    /// cell (the default).
    Distinct { name: String },
    /// Continuous column: equal-width bins over the recorded range.
    Continuous { name: String, min: f64, max: f64, bins: u16, cut_points: Vec<f64> },
}

/// Frozen per-column binning, shared by pre- and post-match computations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Binning {
    pub columns: Vec<ColumnBins>,
}

impl Binning {
    /// Default binning: continuous columns at full resolution (one cell per
    /// distinct value); discrete columns keep their category levels as
    /// cells.
    pub fn default_for(ds: &Dataset) -> Binning {
        let columns = (0..ds.k())
            .map(|j| match ds.kind(j) {
                CovariateKind::Discrete => ColumnBins::Discrete {
                    name: ds.name(j).to_owned(),
                    levels: ds.levels(j),
                },
                CovariateKind::Continuous => ColumnBins::Distinct { name: ds.name(j).to_owned() },
            })
            .collect();
        Binning { columns }
    }

    /// Sturges'-rule equal-width bins per continuous column — the same
    /// coarsening the matching stage applies at its defaults.
    pub fn sturges_for(ds: &Dataset) -> Binning {
        Binning::equal_width_for(ds, ds.sturges_bins())
    }

    /// Equal-width bins at a fixed per-column count over each continuous
    /// column's recorded range; discrete columns keep their levels.
    pub fn equal_width_for(ds: &Dataset, bins: u16) -> Binning {
        let bins = bins.max(1);
        let columns = (0..ds.k())
            .map(|j| match ds.kind(j) {
                CovariateKind::Discrete => ColumnBins::Discrete {
                    name: ds.name(j).to_owned(),
                    levels: ds.levels(j),
                },
                CovariateKind::Continuous => {
                    let (min, max) = ds.min_max(j);
                    let effective = if max > min { bins } else { 1 };
                    let cut_points = (1..effective)
                        .map(|i| min + (max - min) * f64::from(i) / f64::from(effective))
                        .collect();
                    ColumnBins::Continuous { name: ds.name(j).to_owned(), min, max, bins: effective, cut_points }
                }
            })
            .collect();
        Binning { columns }
    }

    /// Histogram cell of one dataset row. Components are wide enough for
    /// full-resolution cells: a distinct-value component is the value's
    /// canonical bit pattern (−0.0 folded into 0.0; data are validated
    /// finite on load, so NaN never reaches here).
    pub fn cell(&self, ds: &Dataset, row: usize) -> Vec<u64> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, col)| match col {
                ColumnBins::Discrete { .. } => u64::from(ds.discrete(j)[row]),
                ColumnBins::Distinct { .. } => {
                    let x = ds.continuous(j)[row];
                    (if x == 0.0 { 0.0f64 } else { x }).to_bits()
                }
                ColumnBins::Continuous { min, max, bins, .. } => {
                    u64::from(bin_code(ds.continuous(j)[row], *min, *max, *bins))
                }
            })
            .collect()
    }
}

/// Sparse two-group cell counts plus the exact L1 statistic.
/// L1 plus the number of occupied cells, for callers that report both.
pub fn l1_detailed(ds: &Dataset, binning: &Binning, group_a: &[usize], group_b: &[usize]) -> Result<(f64, usize)> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Degenerate("imbalance is undefined for an empty group".into()));
    }
    if binning.columns.len() != ds.k() {
        return Err(Error::Internal("binning does not match dataset width".into()));
    }
    let mut cells: HashMap<Vec<u64>, (u64, u64)> = HashMap::new();
    for &i in group_a {
        cells.entry(binning.cell(ds, i)).or_insert((0, 0)).0 += 1;
    }
    for &i in group_b {
        cells.entry(binning.cell(ds, i)).or_insert((0, 0)).1 += 1;
    }
    let n_a = group_a.len() as u128;
    let n_b = group_b.len() as u128;
    let numerator: u128 = cells
        .values()
        .map(|&(a, b)| {
            let fa = u128::from(a) * n_b;
            let gb = u128::from(b) * n_a;
            fa.abs_diff(gb)
        })
        .sum();
    let l1 = numerator as f64 / (2.0 * n_a as f64 * n_b as f64);
    Ok((l1, cells.len()))
}

/// L1 imbalance between two row groups under a frozen binning.
pub fn compute_l1(ds: &Dataset, binning: &Binning, group_a: &[usize], group_b: &[usize]) -> Result<f64> {
    l1_detailed(ds, binning, group_a, group_b).map(|(l1, _)| l1)
}

/// L1 with real-valued weights on group B (group A stays unweighted).
/// Used by the exploratory inverse-score weighting flag; unlike the
/// unweighted path this accumulates in floating point.
pub fn compute_l1_weighted(
    ds: &Dataset,
    binning: &Binning,
    group_a: &[usize],
    group_b: &[usize],
    weights_b: &[f64],
) -> Result<f64> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Degenerate("imbalance is undefined for an empty group".into()));
    }
    if weights_b.len() != group_b.len() {
        return Err(Error::Internal("one weight per group-B row required".into()));
    }
    let total_b: f64 = weights_b.iter().sum();
    if total_b <= 0.0 {
        return Err(Error::Degenerate("imbalance weights sum to zero".into()));
    }
    let mut cells: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
    let share_a = 1.0 / group_a.len() as f64;
    for &i in group_a {
        cells.entry(binning.cell(ds, i)).or_insert((0.0, 0.0)).0 += share_a;
    }
    for (&i, &w) in group_b.iter().zip(weights_b) {
        cells.entry(binning.cell(ds, i)).or_insert((0.0, 0.0)).1 += w / total_b;
    }
    let mut keys: Vec<&Vec<u64>> = cells.keys().collect();
    keys.sort_unstable(); // deterministic float accumulation order
    let sum: f64 = keys.iter().map(|k| (cells[*k].0 - cells[*k].1).abs()).sum();
    Ok((sum / 2.0).clamp(0.0, 1.0))
}

/// Post-match L1 at stratum resolution: the matched sample's histogram cells
/// are the strata themselves, f_s = m_T^s / M_T and g_s = m_C^s / M_C.
/// Exact integer arithmetic, like [`compute_l1`]. Strictly below 1 whenever
/// at least one stratum exists, since every stratum holds both classes.
pub fn stratum_l1(strata: &[Stratum]) -> Result<f64> {
    if strata.is_empty() {
        return Err(Error::Degenerate("no matched strata".into()));
    }
    let m_t: u128 = strata.iter().map(|s| s.treated_members.len() as u128).sum();
    let m_c: u128 = strata.iter().map(|s| s.control_members.len() as u128).sum();
    let numerator: u128 = strata
        .iter()
        .map(|s| {
            let f = s.treated_members.len() as u128 * m_c;
            let g = s.control_members.len() as u128 * m_t;
            f.abs_diff(g)
        })
        .sum();
    Ok(numerator as f64 / (2.0 * m_t as f64 * m_c as f64))
}

/// How the post-match L1^m is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostMatchMode {
    /// Strata are the cells (default): captures how well the matched strata
    /// balance treated against control mass.
    StratumResolution,
    /// Definition-literal: pooled matched treated vs matched controls on the
    /// frozen pre-match binning.
    PooledUnits,
}

/// Imbalance diagnostics knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceOptions {
    pub post_mode: PostMatchMode,
    /// Weight matched controls by their inverse score in the pooled
    /// post-match histogram (exploratory; departs from the unweighted
    /// definition).
    pub weight_controls_by_inverse_score: bool,
    /// Override the diagnostic binning with this many equal-width bins per
    /// continuous column. `None` keeps the full-resolution default where
    /// every distinct value is its own cell.
    pub equal_width_bins: Option<u16>,
}

impl Default for ImbalanceOptions {
    fn default() -> Self {
        ImbalanceOptions {
            post_mode: PostMatchMode::StratumResolution,
            weight_controls_by_inverse_score: false,
            equal_width_bins: None,
        }
    }
}

/// Pre/post imbalance diagnostics with the frozen binning that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceReport {
    /// L1 on all treated vs all controls, before matching.
    pub l1_pre: f64,
    /// L1^m on the matched sample (mode-dependent, see `post_mode`).
    pub l1_post: f64,
    pub post_mode: PostMatchMode,
    /// Occupied cells in the pre-match histogram.
    pub cells_occupied: usize,
    pub binning: Binning,
}

/// Computes the full pre/post imbalance report for a match result.
/// `refined` is only needed when control weighting is requested.
pub fn imbalance_report(
    ds: &Dataset,
    binning: &Binning,
    result: &MatchResult,
    refined: Option<&[RefinedStratum]>,
    options: &ImbalanceOptions,
) -> Result<ImbalanceReport> {
    let treated = ds.treated_indices();
    let controls = ds.control_indices();
    let (l1_pre, cells_occupied) = l1_detailed(ds, binning, &treated, &controls)?;

    let l1_post = match options.post_mode {
        PostMatchMode::StratumResolution => stratum_l1(&result.strata)?,
        PostMatchMode::PooledUnits => {
            let matched_t: Vec<usize> =
                result.strata.iter().flat_map(|s| s.treated_members.iter().copied()).collect();
            if options.weight_controls_by_inverse_score {
                // Weighted form: one entry per stratum membership, so a
                // reused control contributes each of its stratum weights.
                let refined = refined.ok_or_else(|| {
                    Error::Internal("inverse-score weighting requires refined strata".into())
                })?;
                let matched_c: Vec<usize> = result
                    .strata
                    .iter()
                    .flat_map(|s| s.control_members.iter().copied())
                    .collect();
                let weights: Vec<f64> =
                    refined.iter().flat_map(|r| r.inverse_score.iter().copied()).collect();
                compute_l1_weighted(ds, binning, &matched_t, &matched_c, &weights)?
            } else {
                // Unweighted form compares distinct units: a control reused
                // by several strata still counts once.
                let mut seen = vec![false; ds.n()];
                let mut matched_c = Vec::new();
                for s in &result.strata {
                    for &i in &s.control_members {
                        if !std::mem::replace(&mut seen[i], true) {
                            matched_c.push(i);
                        }
                    }
                }
                compute_l1(ds, binning, &matched_t, &matched_c)?
            }
        }
    };

    Ok(ImbalanceReport {
        l1_pre,
        l1_post,
        post_mode: options.post_mode,
        cells_occupied,
        binning: binning.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnData, ColumnSpec, Dataset};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// All-discrete dataset: one column per entry of `cols`.
    fn discrete_ds(cols: Vec<Vec<u16>>, treatment: Vec<bool>) -> Dataset {
        let specs = (0..cols.len())
            .map(|j| ColumnSpec { name: format!("d{j}"), kind: CovariateKind::Discrete })
            .collect();
        let n = cols[0].len();
        let data = cols.into_iter().map(ColumnData::Discrete).collect();
        Dataset::new(specs, data, treatment, vec![0.0; n]).unwrap()
    }

    #[test]
    fn identical_groups_give_exact_zero() {
        let ds = discrete_ds(
            vec![vec![0, 1, 2, 0, 1, 2]],
            vec![true, true, true, false, false, false],
        );
        let binning = Binning::default_for(&ds);
        let l1 = compute_l1(&ds, &binning, &[0, 1, 2], &[3, 4, 5]).unwrap();
        assert_eq!(l1, 0.0);
    }

    #[test]
    fn disjoint_cells_give_exact_one() {
        let ds = discrete_ds(
            vec![vec![0, 1, 2, 3, 4, 5]],
            vec![true, true, true, false, false, false],
        );
        let binning = Binning::default_for(&ds);
        let l1 = compute_l1(&ds, &binning, &[0, 1, 2], &[3, 4, 5]).unwrap();
        assert_eq!(l1, 1.0);
    }

    #[test]
    fn half_overlap_example() {
        // f = (0.5, 0.5, 0), g = (0, 0.5, 0.5) over three cells → 0.5.
        let ds = discrete_ds(vec![vec![0, 1, 1, 2]], vec![true, true, false, false]);
        let binning = Binning::default_for(&ds);
        let l1 = compute_l1(&ds, &binning, &[0, 1], &[2, 3]).unwrap();
        assert_eq!(l1, 0.5);
    }

    #[test]
    fn symmetric_and_permutation_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 40;
        let cols: Vec<Vec<u16>> = (0..2).map(|_| (0..n).map(|_| rng.random_range(0..3u16)).collect()).collect();
        let treatment: Vec<bool> = (0..n).map(|i| i < 20).collect();
        let ds = discrete_ds(cols, treatment);
        let binning = Binning::default_for(&ds);
        let a: Vec<usize> = (0..20).collect();
        let b: Vec<usize> = (20..40).collect();
        let ab = compute_l1(&ds, &binning, &a, &b).unwrap();
        let ba = compute_l1(&ds, &binning, &b, &a).unwrap();
        assert_eq!(ab, ba);

        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.shuffle(&mut rng);
        b2.shuffle(&mut rng);
        assert_eq!(compute_l1(&ds, &binning, &a2, &b2).unwrap(), ab);
        assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn sparse_equals_dense_tensor_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        for _ in 0..100 {
            let k = rng.random_range(1..=3usize);
            let levels: Vec<u16> = (0..k).map(|_| rng.random_range(2..=5u16)).collect();
            let n = rng.random_range(4..=60usize);
            let n_a = rng.random_range(1..n);
            let cols: Vec<Vec<u16>> = levels
                .iter()
                .map(|&lv| (0..n).map(|_| rng.random_range(0..lv)).collect())
                .collect();
            let treatment: Vec<bool> = (0..n).map(|i| i < n_a).collect();
            if n_a == 0 || n_a == n {
                continue;
            }
            let ds = discrete_ds(cols.clone(), treatment);
            let binning = Binning::default_for(&ds);
            let a: Vec<usize> = (0..n_a).collect();
            let b: Vec<usize> = (n_a..n).collect();
            let sparse = compute_l1(&ds, &binning, &a, &b).unwrap();

            // Dense full-tensor computation with the same integer formula.
            let strides: Vec<usize> = {
                let mut s = vec![1usize; k];
                for j in (0..k.saturating_sub(1)).rev() {
                    s[j] = s[j + 1] * usize::from(levels[j + 1]);
                }
                s
            };
            let total: usize = levels.iter().map(|&l| usize::from(l)).product();
            let mut dense_a = vec![0u64; total];
            let mut dense_b = vec![0u64; total];
            for i in 0..n {
                let idx: usize = (0..k).map(|j| usize::from(cols[j][i]) * strides[j]).sum();
                if i < n_a {
                    dense_a[idx] += 1;
                } else {
                    dense_b[idx] += 1;
                }
            }
            let num: u128 = dense_a
                .iter()
                .zip(&dense_b)
                .map(|(&x, &y)| {
                    (u128::from(x) * (n - n_a) as u128).abs_diff(u128::from(y) * n_a as u128)
                })
                .sum();
            let dense = num as f64 / (2.0 * n_a as f64 * (n - n_a) as f64);
            assert_eq!(sparse, dense, "sparse/dense mismatch");
        }
    }

    #[test]
    fn sturges_binning_matches_coarsen_codes() {
        // The Sturges audit binning must agree with what the matcher's
        // coarsen produces at the default bin count.
        let values: Vec<f64> = (0..32).map(|i| (i as f64) * 0.37 - 5.0).collect();
        let treatment: Vec<bool> = (0..32).map(|i| i % 2 == 0).collect();
        let ds = Dataset::new(
            vec![ColumnSpec { name: "x".into(), kind: CovariateKind::Continuous }],
            vec![ColumnData::Continuous(values)],
            treatment,
            vec![0.0; 32],
        )
        .unwrap();
        let binning = Binning::sturges_for(&ds);
        let view = ds.coarsen(None).unwrap();
        for i in 0..32 {
            assert_eq!(binning.cell(&ds, i)[0], u64::from(view.code(i, 0)));
        }
    }

    #[test]
    fn default_distinct_cells_separate_continuous_groups_exactly() {
        // All values distinct → disjoint supports → L1 exactly 1, however
        // close the values sit. Shared values overlap; equal multisets → 0.
        let make = |values: Vec<f64>| {
            let n = values.len();
            Dataset::new(
                vec![ColumnSpec { name: "x".into(), kind: CovariateKind::Continuous }],
                vec![ColumnData::Continuous(values)],
                (0..n).map(|i| i < n / 2).collect(),
                vec![0.0; n],
            )
            .unwrap()
        };

        let ds = make(vec![0.1, 0.2, 0.3, 0.100000001, 0.200000001, 0.300000001]);
        let binning = Binning::default_for(&ds);
        assert_eq!(compute_l1(&ds, &binning, &[0, 1, 2], &[3, 4, 5]).unwrap(), 1.0);

        let ds = make(vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.3]);
        let binning = Binning::default_for(&ds);
        assert_eq!(compute_l1(&ds, &binning, &[0, 1, 2], &[3, 4, 5]).unwrap(), 0.0);

        // Signed zero is one cell, not two: the zero cell overlaps fully
        // and only 1.0 vs 2.0 stay disjoint (1.0 without the folding).
        let ds = make(vec![-0.0, 1.0, 0.0, 2.0]);
        let binning = Binning::default_for(&ds);
        assert_eq!(compute_l1(&ds, &binning, &[0, 1], &[2, 3]).unwrap(), 0.5);

        // Under an equal-width audit binning the near-duplicates above land
        // in the same cells, so the same data show full overlap instead.
        let ds = make(vec![0.1, 0.2, 0.3, 0.100000001, 0.200000001, 0.300000001]);
        let coarse = Binning::equal_width_for(&ds, 3);
        assert_eq!(compute_l1(&ds, &coarse, &[0, 1, 2], &[3, 4, 5]).unwrap(), 0.0);
    }

    #[test]
    fn empty_group_is_an_error() {
        let ds = discrete_ds(vec![vec![0, 1]], vec![true, false]);
        let binning = Binning::default_for(&ds);
        assert!(matches!(
            compute_l1(&ds, &binning, &[], &[1]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn stratum_l1_balanced_strata_give_zero() {
        let s = |t: usize, c: usize| Stratum {
            signature: vec![],
            matched_columns: vec![],
            dropped_columns: vec![],
            treated_members: (0..t).collect(),
            control_members: (0..c).collect(),
            iteration: 0,
        };
        // Same treated/control proportions in every stratum → 0.
        assert_eq!(stratum_l1(&[s(2, 2), s(3, 3)]).unwrap(), 0.0);
        // Proportions maximally skewed but both classes present → below 1.
        let skewed = stratum_l1(&[s(9, 1), s(1, 9)]).unwrap();
        assert!(skewed > 0.0 && skewed < 1.0, "skewed = {skewed}");
        // Exact value: f = (0.9, 0.1), g = (0.1, 0.9) → ½(0.8 + 0.8) = 0.8.
        assert!((skewed - 0.8).abs() < 1e-15);
        assert!(matches!(stratum_l1(&[]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn weighted_l1_reduces_to_unweighted_with_unit_weights() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 30;
        let cols: Vec<Vec<u16>> =
            (0..2).map(|_| (0..n).map(|_| rng.random_range(0..4u16)).collect()).collect();
        let treatment: Vec<bool> = (0..n).map(|i| i < 12).collect();
        let ds = discrete_ds(cols, treatment);
        let binning = Binning::default_for(&ds);
        let a: Vec<usize> = (0..12).collect();
        let b: Vec<usize> = (12..n).collect();
        let unweighted = compute_l1(&ds, &binning, &a, &b).unwrap();
        let weighted = compute_l1_weighted(&ds, &binning, &a, &b, &vec![1.0; b.len()]).unwrap();
        assert!((weighted - unweighted).abs() < 1e-12);
    }
}
