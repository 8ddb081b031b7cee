//! Typed data model, CSV ingestion, and coarsened/discretized views.
//!
//! A [`Dataset`] is an immutable table of `n` units: a covariate matrix with
//! per-column kinds (continuous or discrete), a binary treatment vector, and
//! a real outcome vector. Downstream stages never touch raw files; they
//! consume either the original values, a [`CoarsenedView`] (continuous
//! columns binned, discrete passed through), or the all-discrete matrix from
//! [`Dataset::discretize_for_distance`].

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on category codes per discrete column (and on bin counts), so a
/// mistyped schema cannot blow up the distance tables.
pub const MAX_LEVELS: u16 = 1024;

/// Kind of a covariate column, fixed at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Continuous,
    Discrete,
}

impl fmt::Display for CovariateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateKind::Continuous => write!(f, "continuous"),
            CovariateKind::Discrete => write!(f, "discrete"),
        }
    }
}

/// Name and kind of one covariate column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: CovariateKind,
}

/// Column-major storage for one covariate column.
#[derive(Debug, Clone)]
pub enum ColumnData {
    Continuous(Vec<f64>),
    /// Dense category codes in `0..levels`.
    Discrete(Vec<u16>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Role a CSV column plays, as declared in the schema config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Treatment,
    Outcome,
    CovariateContinuous,
    CovariateDiscrete,
    Ignore,
}

/// Immutable dataset: covariates X (typed), treatment T, outcome Y.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    data: Vec<ColumnData>,
    /// Number of category codes per column: `max code + 1` for discrete
    /// columns (unoccupied codes below the max are allowed), 0 for continuous.
    levels: Vec<u16>,
    treatment: Vec<bool>,
    outcome: Vec<f64>,
    /// For discrete columns ingested from CSV: original label per code, in
    /// code order. Programmatic datasets have no codebook.
    codebooks: Vec<Option<Vec<String>>>,
}

impl Dataset {
    /// Builds a dataset from parts and validates every invariant: n ≥ 2,
    /// k ≥ 1, at least one treated and one control unit, finite values,
    /// and discrete codes within the level cap.
    pub fn new(
        columns: Vec<ColumnSpec>,
        data: Vec<ColumnData>,
        treatment: Vec<bool>,
        outcome: Vec<f64>,
    ) -> Result<Self> {
        Self::with_codebooks(columns, data, treatment, outcome, None)
    }

    fn with_codebooks(
        columns: Vec<ColumnSpec>,
        data: Vec<ColumnData>,
        treatment: Vec<bool>,
        outcome: Vec<f64>,
        codebooks: Option<Vec<Option<Vec<String>>>>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Validation("dataset must have at least one covariate column".into()));
        }
        if columns.len() != data.len() {
            return Err(Error::Internal(format!(
                "{} column specs but {} data columns",
                columns.len(),
                data.len()
            )));
        }
        let n = treatment.len();
        if n < 2 {
            return Err(Error::Degenerate(format!("dataset has {n} rows; at least 2 required")));
        }
        if outcome.len() != n {
            return Err(Error::Internal(format!(
                "treatment has {n} rows but outcome has {}",
                outcome.len()
            )));
        }
        let mut seen = HashMap::new();
        for (j, spec) in columns.iter().enumerate() {
            if let Some(prev) = seen.insert(spec.name.clone(), j) {
                return Err(Error::Validation(format!(
                    "duplicate covariate column name '{}' (columns {prev} and {j})",
                    spec.name
                )));
            }
        }
        let mut levels = Vec::with_capacity(columns.len());
        for (spec, col) in columns.iter().zip(&data) {
            if col.len() != n {
                return Err(Error::Internal(format!(
                    "column '{}' has {} rows, expected {n}",
                    spec.name,
                    col.len()
                )));
            }
            match (spec.kind, col) {
                (CovariateKind::Continuous, ColumnData::Continuous(values)) => {
                    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                        return Err(Error::Validation(format!(
                            "non-finite value in continuous column '{}', row {}",
                            spec.name,
                            i + 1
                        )));
                    }
                    levels.push(0);
                }
                (CovariateKind::Discrete, ColumnData::Discrete(codes)) => {
                    let max = codes.iter().copied().max().unwrap_or(0);
                    if max >= MAX_LEVELS {
                        return Err(Error::Validation(format!(
                            "discrete column '{}' has {} levels; limit is {MAX_LEVELS}",
                            spec.name,
                            u32::from(max) + 1
                        )));
                    }
                    levels.push(max + 1);
                }
                (kind, _) => {
                    return Err(Error::Internal(format!(
                        "column '{}' declared {kind} but stores the other representation",
                        spec.name
                    )));
                }
            }
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite outcome in row {}", i + 1)));
        }
        let n_treated = treatment.iter().filter(|&&t| t).count();
        if n_treated == 0 {
            return Err(Error::Degenerate("dataset has no treated units".into()));
        }
        if n_treated == n {
            return Err(Error::Degenerate("dataset has no control units".into()));
        }
        let codebooks = codebooks.unwrap_or_else(|| vec![None; columns.len()]);
        Ok(Dataset { columns, data, levels, treatment, outcome, codebooks })
    }

    /// Loads a CSV file with a header row, assigning each column the role
    /// declared in `schema`. Every header column must be mapped (use
    /// [`ColumnRole::Ignore`] to drop one); exactly one treatment and one
    /// outcome column are required, plus at least one covariate.
    ///
    /// Discrete cells are treated as categorical labels and assigned dense
    /// codes in order of first appearance; the label↔code mapping is kept in
    /// the dataset's codebook so matches stay auditable.
    pub fn load_csv(path: &Path, schema: &HashMap<String, ColumnRole>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Io {
                    path: path.display().to_string(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => Error::Csv(e),
            })?;
        let headers: Vec<String> =
            reader.headers()?.iter().map(str::to_owned).collect();

        // Resolve roles for every header column up front.
        let mut treatment_idx = None;
        let mut outcome_idx = None;
        let mut covariate_cols: Vec<(usize, ColumnSpec)> = Vec::new();
        for (idx, name) in headers.iter().enumerate() {
            let role = schema.get(name).ok_or_else(|| {
                Error::Schema(format!(
                    "column '{name}' appears in the file but has no role in the schema \
                     (map it to a role or to 'ignore')"
                ))
            })?;
            match role {
                ColumnRole::Treatment => {
                    if treatment_idx.replace(idx).is_some() {
                        return Err(Error::Schema("more than one treatment column in file".into()));
                    }
                }
                ColumnRole::Outcome => {
                    if outcome_idx.replace(idx).is_some() {
                        return Err(Error::Schema("more than one outcome column in file".into()));
                    }
                }
                ColumnRole::CovariateContinuous => covariate_cols.push((
                    idx,
                    ColumnSpec { name: name.clone(), kind: CovariateKind::Continuous },
                )),
                ColumnRole::CovariateDiscrete => covariate_cols.push((
                    idx,
                    ColumnSpec { name: name.clone(), kind: CovariateKind::Discrete },
                )),
                ColumnRole::Ignore => {}
            }
        }
        let mut missing: Vec<&String> =
            schema.keys().filter(|name| !headers.iter().any(|h| h == *name)).collect();
        missing.sort();
        if let Some(name) = missing.first() {
            return Err(Error::Schema(format!("schema column '{name}' is missing from the file")));
        }
        let treatment_idx = treatment_idx
            .ok_or_else(|| Error::Schema("schema maps no column to the treatment role".into()))?;
        let outcome_idx = outcome_idx
            .ok_or_else(|| Error::Schema("schema maps no column to the outcome role".into()))?;
        if covariate_cols.is_empty() {
            return Err(Error::Schema("schema maps no covariate columns".into()));
        }

        let mut treatment = Vec::new();
        let mut outcome = Vec::new();
        let mut columns = Vec::with_capacity(covariate_cols.len());
        let mut data: Vec<ColumnData> = Vec::with_capacity(covariate_cols.len());
        let mut label_maps: Vec<HashMap<String, u16>> = Vec::new();
        let mut codebooks: Vec<Option<Vec<String>>> = Vec::new();
        for (_, spec) in &covariate_cols {
            columns.push(spec.clone());
            match spec.kind {
                CovariateKind::Continuous => {
                    data.push(ColumnData::Continuous(Vec::new()));
                    label_maps.push(HashMap::new());
                    codebooks.push(None);
                }
                CovariateKind::Discrete => {
                    data.push(ColumnData::Discrete(Vec::new()));
                    label_maps.push(HashMap::new());
                    codebooks.push(Some(Vec::new()));
                }
            }
        }

        // Data rows are reported 1-based, excluding the header.
        for (row_idx, record) in reader.records().enumerate() {
            let row = row_idx + 1;
            let record = record?;
            let cell = |idx: usize, name: &str| -> Result<&str> {
                let raw = record.get(idx).unwrap_or("").trim();
                if raw.is_empty() {
                    Err(Error::Validation(format!("missing value in column '{name}', row {row}")))
                } else {
                    Ok(raw)
                }
            };

            let t_raw = cell(treatment_idx, &headers[treatment_idx])?;
            let t_num: f64 = t_raw.parse().map_err(|_| {
                Error::Validation(format!(
                    "treatment value '{t_raw}' in row {row} is not binary (expected 0 or 1)"
                ))
            })?;
            treatment.push(if t_num == 0.0 {
                false
            } else if t_num == 1.0 {
                true
            } else {
                return Err(Error::Validation(format!(
                    "treatment value '{t_raw}' in row {row} is not binary (expected 0 or 1)"
                )));
            });

            let y_raw = cell(outcome_idx, &headers[outcome_idx])?;
            let y: f64 = y_raw.parse().map_err(|_| {
                Error::Validation(format!(
                    "outcome value '{y_raw}' in row {row} is not a number"
                ))
            })?;
            outcome.push(y);

            for (slot, (idx, spec)) in covariate_cols.iter().enumerate() {
                let raw = cell(*idx, &spec.name)?;
                match (&mut data[slot], spec.kind) {
                    (ColumnData::Continuous(values), CovariateKind::Continuous) => {
                        let v: f64 = raw.parse().map_err(|_| {
                            Error::Validation(format!(
                                "value '{raw}' in continuous column '{}', row {row} is not a number",
                                spec.name
                            ))
                        })?;
                        values.push(v);
                    }
                    (ColumnData::Discrete(codes), CovariateKind::Discrete) => {
                        let next = label_maps[slot].len() as u16;
                        let code = *label_maps[slot].entry(raw.to_owned()).or_insert_with(|| {
                            if let Some(book) = &mut codebooks[slot] {
                                book.push(raw.to_owned());
                            }
                            next
                        });
                        if code >= MAX_LEVELS {
                            return Err(Error::Validation(format!(
                                "discrete column '{}' exceeds {MAX_LEVELS} levels at row {row}",
                                spec.name
                            )));
                        }
                        codes.push(code);
                    }
                    _ => unreachable!("column kind fixed at schema resolution"),
                }
            }
        }

        Self::with_codebooks(columns, data, treatment, outcome, Some(codebooks))
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn kind(&self, j: usize) -> CovariateKind {
        self.columns[j].kind
    }

    pub fn name(&self, j: usize) -> &str {
        &self.columns[j].name
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatment[i]).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.treatment[i]).collect()
    }

    /// Raw values of a continuous column; panics if the column is discrete.
    pub fn continuous(&self, j: usize) -> &[f64] {
        match &self.data[j] {
            ColumnData::Continuous(v) => v,
            ColumnData::Discrete(_) => panic!("column {j} is discrete, not continuous"),
        }
    }

    /// Category codes of a discrete column; panics if the column is continuous.
    pub fn discrete(&self, j: usize) -> &[u16] {
        match &self.data[j] {
            ColumnData::Discrete(v) => v,
            ColumnData::Continuous(_) => panic!("column {j} is continuous, not discrete"),
        }
    }

    /// Number of category codes for a discrete column (0 for continuous).
    pub fn levels(&self, j: usize) -> u16 {
        self.levels[j]
    }

    /// Label per code for a discrete column ingested from CSV.
    pub fn codebook(&self, j: usize) -> Option<&[String]> {
        self.codebooks[j].as_deref()
    }

    /// (min, max) of a continuous column. The dataset is non-empty and all
    /// values finite, so both bounds exist.
    pub fn min_max(&self, j: usize) -> (f64, f64) {
        let values = self.continuous(j);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in values {
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }

    /// Sturges' rule bin count for this dataset: ⌈log2(n)+1⌉.
    pub fn sturges_bins(&self) -> u16 {
        sturges(self.n())
    }

    /// Equal-width coarsening of continuous columns between column min and
    /// max; discrete columns pass their category codes through. Default bin
    /// count is Sturges' rule; `bins_per_column` overrides it per column name.
    pub fn coarsen(&self, bins_per_column: Option<&HashMap<String, u16>>) -> Result<CoarsenedView> {
        if let Some(overrides) = bins_per_column {
            for (name, &bins) in overrides {
                if !self.columns.iter().any(|c| c.name == *name) {
                    return Err(Error::Validation(format!(
                        "bin override names unknown column '{name}'"
                    )));
                }
                if bins < 2 {
                    return Err(Error::Validation(format!(
                        "bin override for column '{name}' is {bins}; at least 2 required"
                    )));
                }
                if bins > MAX_LEVELS {
                    return Err(Error::Validation(format!(
                        "bin override for column '{name}' is {bins}; limit is {MAX_LEVELS}"
                    )));
                }
            }
        }
        let default_bins = self.sturges_bins();
        let mut codes = Vec::with_capacity(self.k());
        let mut bin_edges = Vec::with_capacity(self.k());
        let mut levels = Vec::with_capacity(self.k());
        for (j, spec) in self.columns.iter().enumerate() {
            match spec.kind {
                CovariateKind::Discrete => {
                    codes.push(self.discrete(j).to_vec());
                    bin_edges.push(None);
                    levels.push(self.levels[j]);
                }
                CovariateKind::Continuous => {
                    let bins = bins_per_column
                        .and_then(|m| m.get(&spec.name).copied())
                        .unwrap_or(default_bins);
                    let (min, max) = self.min_max(j);
                    let values = self.continuous(j);
                    if max == min {
                        // Constant column: one bin, everything coded 0.
                        codes.push(vec![0; values.len()]);
                        bin_edges.push(Some(Vec::new()));
                        levels.push(1);
                    } else {
                        let width = (max - min) / f64::from(bins);
                        let col: Vec<u16> =
                            values.iter().map(|&x| bin_code(x, min, max, bins)).collect();
                        let edges: Vec<f64> =
                            (1..bins).map(|i| min + width * f64::from(i)).collect();
                        codes.push(col);
                        bin_edges.push(Some(edges));
                        levels.push(bins);
                    }
                }
            }
        }
        Ok(CoarsenedView { codes, bin_edges, levels, n: self.n() })
    }

    /// The all-discrete representation used by the discrete-distance model:
    /// continuous columns replaced by their coarsened bin codes, discrete
    /// columns unchanged.
    pub fn discretize_for_distance(&self, view: &CoarsenedView) -> Result<Vec<Vec<u16>>> {
        if view.n != self.n() || view.codes.len() != self.k() {
            return Err(Error::Internal(
                "coarsened view does not match dataset dimensions".into(),
            ));
        }
        Ok(view.codes.clone())
    }
}

/// Coarsened representation of a dataset: integer bin codes per column plus
/// the cut points that produced them. Built once from the full dataset and
/// reused (frozen) wherever pre/post comparisons must share binning.
#[derive(Debug, Clone)]
pub struct CoarsenedView {
    /// Column-major bin codes, `k` columns × `n` rows.
    codes: Vec<Vec<u16>>,
    /// Ascending interior cut points per continuous column; `None` for
    /// discrete columns, empty for constant columns.
    bin_edges: Vec<Option<Vec<f64>>>,
    /// Number of possible codes per column (bin count or category levels).
    levels: Vec<u16>,
    n: usize,
}

impl CoarsenedView {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.codes.len()
    }

    /// Bin codes of column `j`, all rows.
    pub fn column(&self, j: usize) -> &[u16] {
        &self.codes[j]
    }

    pub fn code(&self, row: usize, j: usize) -> u16 {
        self.codes[j][row]
    }

    /// Number of possible codes for column `j`.
    pub fn levels(&self, j: usize) -> u16 {
        self.levels[j]
    }

    pub fn bin_edges(&self, j: usize) -> Option<&[f64]> {
        self.bin_edges[j].as_deref()
    }
}

/// Sturges' rule: ⌈log2(n)+1⌉ bins for n observations.
pub fn sturges(n: usize) -> u16 {
    debug_assert!(n >= 1);
    ((n as f64).log2() + 1.0).ceil() as u16
}

/// Equal-width bin code of `x` over `[min, max]` with `bins` bins; the last
/// bin is closed so `x == max` lands in bin `bins − 1`. `min == max`
/// (constant column) degenerates to a single bin 0.
pub fn bin_code(x: f64, min: f64, max: f64, bins: u16) -> u16 {
    if max <= min {
        return 0;
    }
    let raw = ((x - min) / (max - min) * f64::from(bins)) as u16;
    raw.min(bins - 1)
}
