//! CSV table writers: datasets from the simulator and the tabular views of
//! report sections (importance, strata, benchmark replicates).
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! parses back to the identical bits and repeated runs produce byte-identical
//! files.

use std::path::Path;

use tim_core::report::{ImportanceRow, RefinedStratumRecord, StratumRecord};
use tim_core::simulate::BenchmarkRow;
use tim_core::{CovariateKind, Dataset, Result};

fn fmt(value: f64) -> String {
    format!("{value}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

/// Writes a dataset as CSV: covariate columns in dataset order, then the
/// binary `treated` flag and the `outcome`.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.k()).map(|j| ds.name(j).to_string()).collect();
    header.push("treated".to_string());
    header.push("outcome".to_string());
    writer.write_record(&header)?;

    for i in 0..ds.n() {
        let mut record = Vec::with_capacity(ds.k() + 2);
        for j in 0..ds.k() {
            match ds.kind(j) {
                CovariateKind::Continuous => record.push(fmt(ds.continuous(j)[i])),
                CovariateKind::Discrete => record.push(ds.discrete(j)[i].to_string()),
            }
        }
        record.push(u8::from(ds.treatment()[i]).to_string());
        record.push(fmt(ds.outcome()[i]));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Importance table: one row per covariate with both regression scores.
pub fn write_importance_csv(rows: &[ImportanceRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["column", "beta_hat", "alpha_hat", "theta_star", "rank"])?;
    for row in rows {
        writer.write_record([
            row.column.clone(),
            fmt(row.beta_hat),
            fmt(row.alpha_hat),
            fmt(row.theta_star),
            row.rank.to_string(),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Stratum table for a matching-only run.
pub fn write_match_strata_csv(records: &[StratumRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "id",
        "iteration",
        "n_treated",
        "n_controls",
        "matched_columns",
        "signature",
    ])?;
    for record in records {
        writer.write_record([
            record.id.to_string(),
            record.iteration.to_string(),
            record.treated.len().to_string(),
            record.controls.len().to_string(),
            record.matched_columns.join("|"),
            record
                .signature
                .iter()
                .map(|code| code.to_string())
                .collect::<Vec<_>>()
                .join("|"),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Stratum table for a full estimation run, with per-stratum effects.
pub fn write_estimate_strata_csv(records: &[RefinedStratumRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "id",
        "iteration",
        "n_treated",
        "n_controls",
        "cate",
        "total_weight",
        "matched_columns",
    ])?;
    for record in records {
        writer.write_record([
            record.id.to_string(),
            record.iteration.to_string(),
            record.treated.len().to_string(),
            record.controls.len().to_string(),
            fmt(record.cate),
            fmt(record.total_weight),
            record.matched_columns.join("|"),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Benchmark replicate table. Wall-clock seconds are included here (the CSV
/// is a human-facing artifact); the deterministic JSON payload omits them.
pub fn write_replicates_csv(rows: &[BenchmarkRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "replicate",
        "cate",
        "bias",
        "naive_dim",
        "l1_pre",
        "l1_post",
        "t_fraction",
        "seconds",
        "error",
    ])?;
    for row in rows {
        writer.write_record([
            row.replicate.to_string(),
            fmt_opt(row.cate),
            fmt_opt(row.bias),
            fmt_opt(row.naive_dim),
            fmt_opt(row.l1_pre),
            fmt_opt(row.l1_post),
            fmt_opt(row.t_fraction),
            fmt(row.seconds),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tim_core::simulate::{generate, ScenarioSpec};

    #[test]
    fn dataset_csv_has_expected_header_and_row_count() {
        let spec = ScenarioSpec::preset("1A").unwrap();
        let (ds, _) = generate(&spec, 7, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset_csv(&ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "xc1,xc2,xc3,xc4,xc5,xd1,xd2,xd3,treated,outcome");
        assert_eq!(lines.count(), ds.n());
    }

    #[test]
    fn dataset_csv_round_trips_through_the_loader() {
        use std::collections::HashMap;
        use tim_core::dataset::ColumnRole;

        let spec = ScenarioSpec::preset("1A").unwrap();
        let (ds, _) = generate(&spec, 7, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset_csv(&ds, &path).unwrap();

        let mut schema = HashMap::new();
        for j in 0..ds.k() {
            let role = match ds.kind(j) {
                CovariateKind::Continuous => ColumnRole::CovariateContinuous,
                CovariateKind::Discrete => ColumnRole::CovariateDiscrete,
            };
            schema.insert(ds.name(j).to_string(), role);
        }
        schema.insert("treated".to_string(), ColumnRole::Treatment);
        schema.insert("outcome".to_string(), ColumnRole::Outcome);
        let reloaded = Dataset::load_csv(&path, &schema).unwrap();

        assert_eq!(reloaded.n(), ds.n());
        assert_eq!(reloaded.k(), ds.k());
        assert_eq!(reloaded.treatment(), ds.treatment());
        // Shortest round-trip formatting reproduces the exact bits.
        for j in 0..ds.k() {
            match ds.kind(j) {
                CovariateKind::Continuous => {
                    assert_eq!(reloaded.continuous(j), ds.continuous(j), "column {j}");
                }
                CovariateKind::Discrete => {
                    // The loader assigns codes by first appearance, so compare
                    // the decoded labels rather than the raw codes.
                    let book = reloaded.codebook(j).unwrap();
                    for (i, &code) in reloaded.discrete(j).iter().enumerate() {
                        assert_eq!(book[usize::from(code)], ds.discrete(j)[i].to_string());
                    }
                }
            }
        }
        assert_eq!(reloaded.outcome(), ds.outcome());
    }
}
