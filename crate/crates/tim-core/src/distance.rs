//! Distribution-aware discrete distance Ω(x, y).
//!
//! For each ordered attribute pair (target, co) the model stores the
//! conditional distribution P(co = v | target = x), estimated by
//! row-normalized co-occurrence counts over the full pooled dataset
//! (discretized continuous columns included). The distance between two
//! values x, y of a target attribute with respect to one co-attribute is
//!
//! δ(x, y) = max over value subsets w of [ P(w | x) + P(w̄ | y) ] − 1,
//!
//! computed in closed form by picking w = {v : P(v|x) ≥ P(v|y)}, which
//! reduces to Σ_v |P(v|x) − P(v|y)| / 2 — half the total-variation
//! distance between the two conditionals, implemented in the
//! absolute-value form so that δ (and hence Ω) is exactly symmetric in
//! floating point. Ω(x, y) averages δ over all co-attributes. The
//! exponential subset search survives only as a test oracle.

use serde::Serialize;

use crate::error::{Error, Result};

/// Read-only co-occurrence model for evaluating Ω on any attribute pair.
#[derive(Debug, Clone)]
pub struct DiscreteDistanceModel {
    k_total: usize,
    levels: Vec<u16>,
    /// `tables[target][co]` is the row-major matrix P(co = v | target = x),
    /// indexed `x * levels[co] + v`; `None` on the diagonal.
    tables: Vec<Vec<Option<Vec<f64>>>>,
    warnings: Vec<String>,
}

impl DiscreteDistanceModel {
    /// Builds all pairwise conditional frequency tables from the all-discrete
    /// representation (one `Vec<u16>` per attribute, equal lengths).
    ///
    /// Target values that never occur get uniform conditionals with a
    /// warning: they cannot arise for values actually present in a stratum,
    /// so this only affects diagnostics.
    pub fn build(columns: &[Vec<u16>], levels: &[u16]) -> Result<Self> {
        let k = columns.len();
        if k == 0 {
            return Err(Error::Validation("distance model needs at least one attribute".into()));
        }
        if levels.len() != k {
            return Err(Error::Internal(format!(
                "{k} attribute columns but {} level counts",
                levels.len()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::Validation("distance model needs a non-empty dataset".into()));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Internal(format!(
                    "attribute {j} has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(&bad) = col.iter().find(|&&c| c >= levels[j]) {
                return Err(Error::Internal(format!(
                    "attribute {j} contains code {bad} outside 0..{}",
                    levels[j]
                )));
            }
        }

        let mut warnings = Vec::new();
        if k == 1 {
            let msg = "only one attribute: Ω falls back to the indicator distance 1{x≠y}"
                .to_string();
            log::warn!("{msg}");
            warnings.push(msg);
        }

        // Marginal counts per attribute value.
        let marginals: Vec<Vec<u64>> = columns
            .iter()
            .zip(levels)
            .map(|(col, &lv)| {
                let mut counts = vec![0u64; usize::from(lv)];
                for &c in col {
                    counts[usize::from(c)] += 1;
                }
                counts
            })
            .collect();
        for (j, counts) in marginals.iter().enumerate() {
            for (value, &count) in counts.iter().enumerate() {
                if count == 0 {
                    let msg = format!(
                        "attribute {j} value {value} has zero support; conditionals set to uniform"
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }

        let mut tables: Vec<Vec<Option<Vec<f64>>>> = (0..k).map(|_| vec![None; k]).collect();
        for a in 0..k {
            for b in (a + 1)..k {
                let (la, lb) = (usize::from(levels[a]), usize::from(levels[b]));
                let mut joint = vec![0u64; la * lb];
                for (&ca, &cb) in columns[a].iter().zip(&columns[b]) {
                    joint[usize::from(ca) * lb + usize::from(cb)] += 1;
                }
                // P(b = v | a = x), rows x over values of a.
                let mut ab = vec![0.0f64; la * lb];
                for x in 0..la {
                    let total = marginals[a][x];
                    for v in 0..lb {
                        ab[x * lb + v] = if total == 0 {
                            1.0 / lb as f64
                        } else {
                            joint[x * lb + v] as f64 / total as f64
                        };
                    }
                }
                // P(a = v | b = x) from the transposed joint counts.
                let mut ba = vec![0.0f64; lb * la];
                for x in 0..lb {
                    let total = marginals[b][x];
                    for v in 0..la {
                        ba[x * la + v] = if total == 0 {
                            1.0 / la as f64
                        } else {
                            joint[v * lb + x] as f64 / total as f64
                        };
                    }
                }
                tables[a][b] = Some(ab);
                tables[b][a] = Some(ba);
            }
        }

        Ok(DiscreteDistanceModel { k_total: k, levels: levels.to_vec(), tables, warnings })
    }

    pub fn k_total(&self) -> usize {
        self.k_total
    }

    pub fn levels(&self, attr: usize) -> u16 {
        self.levels[attr]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Conditional distribution P(co = · | target = x) as a slice of
    /// `levels(co)` probabilities summing to 1.
    pub fn conditional(&self, target: usize, co: usize, x: u16) -> &[f64] {
        assert_ne!(target, co, "conditional requires two distinct attributes");
        assert!(x < self.levels[target], "code {x} out of range for attribute {target}");
        let lc = usize::from(self.levels[co]);
        let table = self.tables[target][co]
            .as_ref()
            .expect("off-diagonal tables are always built");
        &table[usize::from(x) * lc..(usize::from(x) + 1) * lc]
    }

    /// Pairwise value distance for one co-attribute:
    /// δ = Σ_v |P(v|x) − P(v|y)| / 2, clamped to [0, 1].
    ///
    /// Equal to the positive-part sum Σ_v max(P(v|x) − P(v|y), 0) whenever
    /// each conditional sums to exactly 1; the absolute-value form is used
    /// because it is exactly symmetric in floating point (|a − b| and
    /// |b − a| are identical IEEE values).
    pub fn delta_ij(&self, target: usize, co: usize, x: u16, y: u16) -> f64 {
        if x == y {
            return 0.0;
        }
        let px = self.conditional(target, co, x);
        let py = self.conditional(target, co, y);
        let sum: f64 = px.iter().zip(py).map(|(a, b)| (a - b).abs()).sum();
        (sum / 2.0).clamp(0.0, 1.0)
    }

    /// Ω(x, y): mean of δ over all co-attributes of `target`. With a single
    /// attribute there are no co-attributes and the indicator distance
    /// 1{x≠y} is used instead (warned at build time).
    pub fn omega(&self, target: usize, x: u16, y: u16) -> f64 {
        assert!(x < self.levels[target] && y < self.levels[target]);
        if x == y {
            return 0.0;
        }
        if self.k_total == 1 {
            return 1.0;
        }
        let mut sum = 0.0;
        for co in 0..self.k_total {
            if co != target {
                sum += self.delta_ij(target, co, x, y);
            }
        }
        sum / (self.k_total - 1) as f64
    }

    /// Full Ω lookup table for one attribute: `table[x][y] = Ω(x, y)`.
    /// Used to memoize refinement distances and for the debug dump.
    #[allow(clippy::needless_range_loop)] // fills [x][y] and [y][x] together
    pub fn omega_table(&self, target: usize) -> Vec<Vec<f64>> {
        let lv = usize::from(self.levels[target]);
        let mut table = vec![vec![0.0; lv]; lv];
        for x in 0..lv {
            for y in (x + 1)..lv {
                let w = self.omega(target, x as u16, y as u16);
                table[x][y] = w;
                table[y][x] = w;
            }
        }
        table
    }

    /// Audit dump of every attribute's pairwise Ω table.
    pub fn debug_dump(&self, attribute_names: &[String]) -> OmegaDump {
        let attributes = (0..self.k_total)
            .map(|j| OmegaTable {
                attribute: attribute_names.get(j).cloned().unwrap_or_else(|| format!("attr_{j}")),
                levels: self.levels[j],
                omega: self.omega_table(j),
            })
            .collect();
        OmegaDump { k_total: self.k_total, attributes }
    }
}

/// JSON-serializable dump of all pairwise Ω tables.
#[derive(Debug, Serialize)]
pub struct OmegaDump {
    pub k_total: usize,
    pub attributes: Vec<OmegaTable>,
}

#[derive(Debug, Serialize)]
pub struct OmegaTable {
    pub attribute: String,
    pub levels: u16,
    pub omega: Vec<Vec<f64>>,
}
