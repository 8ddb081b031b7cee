//! Run configuration: a strict JSON file plus command-line overrides.
//!
//! The file is deserialized with `deny_unknown_fields` so a typo like
//! `"seeed"` fails loudly instead of silently running with defaults. The
//! resolved configuration (after `--seed`/`--out` overrides) is echoed into
//! the `results.config` section of every report for provenance.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tim_core::dataset::ColumnRole;
use tim_core::pipeline::PipelineOptions;
use tim_core::{Dataset, Error, Result};

use crate::DEFAULT_SEED;

/// Everything a run can be configured with. All fields are optional; the
/// subcommands validate that the pieces they need are present.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV with a header row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Column name → role for every column in the input. Columns not listed
    /// here are rejected; use the `ignore` role to skip one.
    #[serde(default, skip_serializing_if = "HashMap::is_empty")]
    pub schema: HashMap<String, ColumnRole>,
    /// Matching-stage coarsening overrides: bins per continuous column.
    /// Columns not listed use the sample-size heuristic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarsen_bins: Option<HashMap<String, u16>>,
    /// Min-max normalize continuous columns inside the refinement distance
    /// (default true) so squared differences share the discrete scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize_continuous: Option<bool>,
    /// Aggregate stratum effects weighted by treated counts instead of the
    /// default unweighted mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_strata_by_treated_count: Option<bool>,
    /// Override the imbalance diagnostic's binning with this many equal-width
    /// bins per continuous column. Default: every distinct value is a cell.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic_bins: Option<u16>,
    /// Seed recorded in reports and used to derive simulation streams.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Directory reports and tables are written to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config file, rejecting unknown keys.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        Ok(config)
    }

    /// Applies command-line overrides and fills in the fixed default seed,
    /// yielding the configuration a run actually uses.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        if self.seed.is_none() {
            self.seed = Some(DEFAULT_SEED);
        }
        if out.is_some() {
            self.out_dir = out;
        }
        if self.out_dir.is_none() {
            self.out_dir = Some(PathBuf::from("."));
        }
        self
    }

    /// The seed a resolved configuration runs with.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// The output directory of a resolved configuration.
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// JSON echo of the resolved configuration for `results.config`.
    pub fn echo(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    /// Pipeline options implied by the configuration.
    pub fn pipeline_options(&self) -> PipelineOptions {
        let mut options = PipelineOptions {
            bins_per_column: self.coarsen_bins.clone(),
            ..PipelineOptions::default()
        };
        if let Some(normalize) = self.normalize_continuous {
            options.refine.normalize_continuous = normalize;
        }
        if let Some(weight) = self.weight_strata_by_treated_count {
            options.estimator.weight_strata_by_treated_count = weight;
        }
        options.imbalance.equal_width_bins = self.diagnostic_bins;
        options
    }

    /// Loads the input CSV declared by the configuration.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let input = self.input.as_ref().ok_or_else(|| {
            Error::Validation("config is missing \"input\": a CSV path is required".into())
        })?;
        if self.schema.is_empty() {
            return Err(Error::Validation(
                "config is missing \"schema\": map each CSV column to a role".into(),
            ));
        }
        Dataset::load_csv(input, &self.schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"seeed": 7}"#).unwrap_err();
        assert!(err.to_string().contains("seeed"));
    }

    #[test]
    fn resolve_prefers_flag_over_file_over_default() {
        let file = RunConfig { seed: Some(11), ..RunConfig::default() };
        assert_eq!(file.clone().resolve(Some(3), None).seed(), 3);
        assert_eq!(file.resolve(None, None).seed(), 11);
        assert_eq!(RunConfig::default().resolve(None, None).seed(), DEFAULT_SEED);
    }

    #[test]
    fn echo_round_trips_through_json() {
        let config = RunConfig {
            input: Some(PathBuf::from("data.csv")),
            schema: HashMap::from([("t".to_string(), ColumnRole::Treatment)]),
            ..RunConfig::default()
        }
        .resolve(Some(5), Some(PathBuf::from("out")));
        let value = config.echo().unwrap();
        assert_eq!(value["seed"], 5);
        assert_eq!(value["out_dir"], "out");
        assert_eq!(value["schema"]["t"], "treatment");
    }

    #[test]
    fn missing_input_or_schema_is_a_validation_error() {
        let config = RunConfig::default();
        let err = config.load_dataset().unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
