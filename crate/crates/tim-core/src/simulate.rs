//! Synthetic-scenario generator and the Monte-Carlo benchmark harness.
//!
//! Six scenario presets (each in an uncorrelated **A** and an equicorrelated
//! **B** variant, ρ = 0.5) cover three association structures at n = 500
//! (k = 5 continuous + 3 binary) and the same three at n = 4000
//! (k = 10 + 6):
//!
//! 1/4. strong confounders everywhere (all coefficients 0.8);
//! 2/5. strong/medium/weak confounders (0.8 / 0.5 / 0.2);
//! 3/6. like 2/5 but the weak outcome covariates are strong treatment
//!      predictors (0.8 in the treatment model, 0.2 in the outcome model).
//!
//! Continuous covariates are standard normal with pairwise correlation ρ
//! inside the continuous block (X_j = √ρ·Z₀ + √(1−ρ)·Z_j). Each observation
//! draws one success probability p ~ Uniform(0.3, 0.7) shared by all of its
//! binary covariates, which are then independent Bernoulli(p) values: every
//! binary column is marginally Bernoulli(1/2), with a mild positive
//! within-row association (pairwise correlation Var(p)/0.25 ≈ 0.053) from
//! the shared p. The recipe has no correlation parameter of its own, so the
//! ρ knob drives the continuous block only. Treatment is
//! Bernoulli(expit(x·treat_coefs)) with no intercept, and the outcome is
//! TE·T + x·outcome_coefs + ε with ε ~ N(0, σ).
//!
//! Replicates use one master seed plus the replicate index as an independent
//! RNG stream, so benchmark results do not depend on thread count.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnData, ColumnSpec, CovariateKind, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{run_estimate, PipelineOptions};

/// Full description of one data-generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Preset id ("1A".."6B") or "custom".
    pub name: String,
    pub n: usize,
    /// Continuous covariate count.
    pub k_c: usize,
    /// Binary covariate count.
    pub k_d: usize,
    /// Pairwise correlation of the continuous block, in [0, 1).
    pub rho: f64,
    /// Treatment-model coefficients, continuous block first. Length k_c+k_d.
    pub treat_coefs: Vec<f64>,
    /// Outcome-model coefficients, same layout.
    pub outcome_coefs: Vec<f64>,
    /// TE: the true (homogeneous) treatment effect added for treated units.
    pub treatment_effect: f64,
    /// Outcome noise scale σ.
    pub noise_sigma: f64,
}

impl ScenarioSpec {
    /// Builds one of the named presets: scenario digit 1–6, variant letter
    /// A (ρ = 0) or B (ρ = 0.5). Case-insensitive, e.g. "2a".
    pub fn preset(id: &str) -> Result<ScenarioSpec> {
        let canon = id.trim().to_ascii_uppercase();
        let mut chars = canon.chars();
        let (digit, variant) = match (chars.next(), chars.next(), chars.next()) {
            (Some(d), Some(v), None) => (d, v),
            _ => return Err(Error::Validation(format!("unknown scenario '{id}'"))),
        };
        let rho = match variant {
            'A' => 0.0,
            'B' => 0.5,
            _ => return Err(Error::Validation(format!("unknown scenario variant in '{id}'"))),
        };
        // Coefficient patterns; continuous block first.
        let rep = |value: f64, times: usize| std::iter::repeat_n(value, times);
        let (n, k_c, k_d, treat, outcome): (usize, usize, usize, Vec<f64>, Vec<f64>) = match digit {
            '1' => (500, 5, 3, vec![0.8; 8], vec![0.8; 8]),
            '2' => {
                let coefs: Vec<f64> = vec![0.8, 0.8, 0.5, 0.5, 0.2, 0.8, 0.5, 0.2];
                (500, 5, 3, coefs.clone(), coefs)
            }
            '3' => (
                500,
                5,
                3,
                vec![0.8, 0.8, 0.5, 0.5, 0.8, 0.8, 0.5, 0.8],
                vec![0.8, 0.8, 0.5, 0.5, 0.2, 0.8, 0.5, 0.2],
            ),
            '4' => (4000, 10, 6, vec![0.8; 16], vec![0.8; 16]),
            '5' => {
                let coefs: Vec<f64> = rep(0.8, 4)
                    .chain(rep(0.5, 4))
                    .chain(rep(0.2, 2))
                    .chain(rep(0.8, 2))
                    .chain(rep(0.5, 2))
                    .chain(rep(0.2, 2))
                    .collect();
                (4000, 10, 6, coefs.clone(), coefs)
            }
            '6' => (
                4000,
                10,
                6,
                rep(0.8, 4)
                    .chain(rep(0.5, 4))
                    .chain(rep(0.8, 2))
                    .chain(rep(0.8, 2))
                    .chain(rep(0.5, 2))
                    .chain(rep(0.8, 2))
                    .collect(),
                rep(0.8, 4)
                    .chain(rep(0.5, 4))
                    .chain(rep(0.2, 2))
                    .chain(rep(0.8, 2))
                    .chain(rep(0.5, 2))
                    .chain(rep(0.2, 2))
                    .collect(),
            ),
            _ => return Err(Error::Validation(format!("unknown scenario '{id}'"))),
        };
        let spec = ScenarioSpec {
            name: canon,
            n,
            k_c,
            k_d,
            rho,
            treat_coefs: treat,
            outcome_coefs: outcome,
            treatment_effect: 1.0,
            noise_sigma: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Degenerate(format!(
                "scenario n = {} is too small to simulate (minimum 10)",
                self.n
            )));
        }
        let k = self.k_c + self.k_d;
        if k == 0 {
            return Err(Error::Validation("scenario needs at least one covariate".into()));
        }
        if self.treat_coefs.len() != k || self.outcome_coefs.len() != k {
            return Err(Error::Validation(format!(
                "coefficient vectors must have length k_c+k_d = {k} (got {} and {})",
                self.treat_coefs.len(),
                self.outcome_coefs.len()
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Validation(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::Validation(format!("noise_sigma = {} invalid", self.noise_sigma)));
        }
        Ok(())
    }
}

fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Draws one dataset. `stream` selects an independent substream of the
/// seed's generator (the benchmark uses the replicate index), so the pair
/// (seed, stream) fully determines the data, bit for bit.
pub fn generate(spec: &ScenarioSpec, seed: u64, stream: u64) -> Result<(Dataset, f64)> {
    spec.validate()?;
    let k = spec.k_c + spec.k_d;
    let n = spec.n;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let sqrt_shared = spec.rho.sqrt();
    let sqrt_own = (1.0 - spec.rho).sqrt();

    let mut continuous: Vec<Vec<f64>> = vec![Vec::with_capacity(n); spec.k_c];
    let mut discrete: Vec<Vec<u16>> = vec![Vec::with_capacity(n); spec.k_d];
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);

    for _ in 0..n {
        // Equicorrelated Gaussian block: shared factor + idiosyncratic part,
        // unit variance, pairwise correlation ρ.
        let shared: f64 = rng.sample(StandardNormal);
        let mut row = Vec::with_capacity(k);
        for col in continuous.iter_mut() {
            let own: f64 = rng.sample(StandardNormal);
            let x = sqrt_shared * shared + sqrt_own * own;
            col.push(x);
            row.push(x);
        }
        let p = rng.random_range(0.3..0.7);
        for col in discrete.iter_mut() {
            let value = u16::from(rng.random_bool(p));
            col.push(value);
            row.push(f64::from(value));
        }
        let treat_index: f64 = row.iter().zip(&spec.treat_coefs).map(|(x, c)| x * c).sum();
        let t = rng.random_bool(expit(treat_index));
        treatment.push(t);
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sigma;
        let y_index: f64 = row.iter().zip(&spec.outcome_coefs).map(|(x, c)| x * c).sum();
        outcome.push(spec.treatment_effect * f64::from(u8::from(t)) + y_index + noise);
    }

    let mut columns = Vec::with_capacity(k);
    let mut data = Vec::with_capacity(k);
    for (j, col) in continuous.into_iter().enumerate() {
        columns.push(ColumnSpec { name: format!("xc{}", j + 1), kind: CovariateKind::Continuous });
        data.push(ColumnData::Continuous(col));
    }
    for (j, col) in discrete.into_iter().enumerate() {
        columns.push(ColumnSpec { name: format!("xd{}", j + 1), kind: CovariateKind::Discrete });
        data.push(ColumnData::Discrete(col));
    }
    let ds = Dataset::new(columns, data, treatment, outcome)?;
    Ok((ds, spec.treatment_effect))
}

/// One benchmark replicate's outcomes. Failed replicates carry the error
/// text instead of numbers and are excluded from the summary.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub replicate: usize,
    pub cate: Option<f64>,
    /// cate − true TE.
    pub bias: Option<f64>,
    pub naive_dim: Option<f64>,
    pub l1_pre: Option<f64>,
    pub l1_post: Option<f64>,
    pub t_fraction: Option<f64>,
    /// Wall-clock pipeline time. Machine-dependent: excluded from the
    /// deterministic numeric payload.
    pub seconds: f64,
    pub error: Option<String>,
}

/// Mean and 95% normal-approximation confidence interval.
#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub lower_ci: f64,
    pub upper_ci: f64,
}

fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return Some(MetricSummary { mean, lower_ci: mean, upper_ci: mean });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    let half = 1.96 * (var / r).sqrt();
    Some(MetricSummary { mean, lower_ci: mean - half, upper_ci: mean + half })
}

/// Aggregates over the successful replicates.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub replicates: usize,
    pub failed: usize,
    pub cate: Option<MetricSummary>,
    pub bias: Option<MetricSummary>,
    pub naive_dim: Option<MetricSummary>,
    pub l1_pre: Option<MetricSummary>,
    pub l1_post: Option<MetricSummary>,
    pub t_fraction: Option<MetricSummary>,
}

/// Per-replicate rows plus the cross-replicate summary.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub scenario: ScenarioSpec,
    pub master_seed: u64,
    pub rows: Vec<BenchmarkRow>,
    pub summary: BenchmarkSummary,
}

/// Runs `replicates` generate→match→estimate rounds in parallel and
/// summarizes them. Per-replicate failures are recorded as flagged rows;
/// the sweep itself never aborts.
pub fn run_benchmark(
    spec: &ScenarioSpec,
    replicates: usize,
    master_seed: u64,
    options: &PipelineOptions,
) -> Result<BenchmarkTable> {
    if replicates == 0 {
        return Err(Error::Validation("benchmark needs at least one replicate".into()));
    }
    spec.validate()?;

    let rows: Vec<BenchmarkRow> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let start = Instant::now();
            let outcome = generate(spec, master_seed, rep as u64)
                .and_then(|(ds, true_te)| run_estimate(&ds, options).map(|out| (out, true_te)));
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok((out, true_te)) => BenchmarkRow {
                    replicate: rep,
                    cate: Some(out.cate.overall),
                    bias: Some(out.cate.overall - true_te),
                    naive_dim: Some(out.cate.naive_dim),
                    l1_pre: Some(out.imbalance.l1_pre),
                    l1_post: Some(out.imbalance.l1_post),
                    t_fraction: Some(out.match_result.t_fraction()),
                    seconds,
                    error: None,
                },
                Err(e) => {
                    log::warn!("replicate {rep} failed: {e}");
                    BenchmarkRow {
                        replicate: rep,
                        cate: None,
                        bias: None,
                        naive_dim: None,
                        l1_pre: None,
                        l1_post: None,
                        t_fraction: None,
                        seconds,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let collect = |f: fn(&BenchmarkRow) -> Option<f64>| -> Vec<f64> {
        rows.iter().filter_map(f).collect()
    };
    let summary = BenchmarkSummary {
        replicates,
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        cate: summarize(&collect(|r| r.cate)),
        bias: summarize(&collect(|r| r.bias)),
        naive_dim: summarize(&collect(|r| r.naive_dim)),
        l1_pre: summarize(&collect(|r| r.l1_pre)),
        l1_post: summarize(&collect(|r| r.l1_post)),
        t_fraction: summarize(&collect(|r| r.t_fraction)),
    };

    Ok(BenchmarkTable {
        scenario: spec.clone(),
        master_seed,
        rows,
        summary,
    })
}
