//! Implementations of the five subcommands. Each takes a resolved
//! [`RunConfig`], writes its artifacts under the configured output
//! directory, and prints a one-line summary to stdout.
//!
//! Parallelism lives inside the library (the benchmark fans replicates out
//! over the global thread pool); these functions only orchestrate I/O, so
//! reports are identical regardless of the thread count.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use tim_core::imbalance::{l1_detailed, Binning};
use tim_core::pipeline::{run_estimate, run_match};
use tim_core::report::{build_benchmark_report, build_estimate_report, build_match_report};
use tim_core::simulate::{generate, run_benchmark, ScenarioSpec};
use tim_core::{Error, Result};

use crate::config::RunConfig;
use crate::csvout;

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `tim match`: importance ordering plus iterative exact matching, without
/// refinement or effect estimation.
pub fn match_command(config: &RunConfig, threads: Option<usize>) -> Result<()> {
    let ds = config.load_dataset()?;
    let out_dir = config.out_dir();
    ensure_out_dir(&out_dir)?;

    let output = run_match(&ds, &config.pipeline_options())?;
    let report = build_match_report(&ds, &output, config.echo()?, Some(config.seed()), threads);

    let report_path = out_dir.join("match_report.json");
    write_json(&report, &report_path)?;
    csvout::write_importance_csv(&report.results.importance, &out_dir.join("importance.csv"))?;
    csvout::write_match_strata_csv(&report.results.strata, &out_dir.join("strata.csv"))?;

    println!(
        "wrote {} ({} strata, t_fraction={:.4})",
        report_path.display(),
        report.results.matching.n_strata,
        report.results.matching.t_fraction,
    );
    Ok(())
}

/// `tim estimate`: the full pipeline — matching, refinement, weighted effect
/// estimates, and imbalance diagnostics.
pub fn estimate_command(config: &RunConfig, threads: Option<usize>) -> Result<()> {
    let ds = config.load_dataset()?;
    let out_dir = config.out_dir();
    ensure_out_dir(&out_dir)?;

    let output = run_estimate(&ds, &config.pipeline_options())?;
    let report = build_estimate_report(&ds, &output, config.echo()?, Some(config.seed()), threads);

    let report_path = out_dir.join("estimate_report.json");
    write_json(&report, &report_path)?;
    csvout::write_importance_csv(&report.results.importance, &out_dir.join("importance.csv"))?;
    csvout::write_estimate_strata_csv(&report.results.strata, &out_dir.join("strata.csv"))?;

    println!(
        "wrote {} (cate={:.6}, l1_pre={:.6}, l1_post={:.6}, t_fraction={:.4})",
        report_path.display(),
        report.results.effects.overall_cate,
        report.results.imbalance.l1_pre,
        report.results.imbalance.l1_post,
        report.results.matching.t_fraction,
    );
    Ok(())
}

/// `tim simulate`: writes one synthetic dataset as CSV. The file name
/// encodes scenario and seed, and repeated runs with the same seed produce
/// byte-identical files.
pub fn simulate_command(config: &RunConfig, scenario: &str) -> Result<PathBuf> {
    let spec = ScenarioSpec::preset(scenario)?;
    let out_dir = config.out_dir();
    ensure_out_dir(&out_dir)?;

    let seed = config.seed();
    let (ds, _) = generate(&spec, seed, 0)?;
    let path = out_dir.join(format!("scenario_{}_seed{}.csv", spec.name, seed));
    csvout::write_dataset_csv(&ds, &path)?;

    println!(
        "wrote {} (n={}, k={}, treated={})",
        path.display(),
        ds.n(),
        ds.k(),
        ds.n_treated(),
    );
    Ok(path)
}

/// `tim benchmark`: runs replicated synthetic-scenario evaluations in
/// parallel and writes the per-replicate table plus a summary report with
/// confidence intervals.
pub fn benchmark_command(
    config: &RunConfig,
    scenario: &str,
    reps: usize,
    threads: Option<usize>,
) -> Result<()> {
    let spec = ScenarioSpec::preset(scenario)?;
    let out_dir = config.out_dir();
    ensure_out_dir(&out_dir)?;

    let table = run_benchmark(&spec, reps, config.seed(), &config.pipeline_options())?;
    let report = build_benchmark_report(&table, config.echo()?, threads);

    let report_path = out_dir.join("benchmark_report.json");
    write_json(&report, &report_path)?;
    csvout::write_replicates_csv(&table.rows, &out_dir.join("replicates.csv"))?;

    let cate = table.summary.cate.as_ref().map(|m| m.mean);
    let l1_post = table.summary.l1_post.as_ref().map(|m| m.mean);
    println!(
        "wrote {} ({} replicates, mean cate={}, mean l1_post={})",
        report_path.display(),
        table.summary.replicates,
        cate.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into()),
        l1_post.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

/// `tim imbalance`: prints the multivariate L1 between the two treatment
/// groups of a dataset, without matching anything.
pub fn imbalance_command(config: &RunConfig, bins: Option<u16>) -> Result<()> {
    let ds = config.load_dataset()?;
    let bins = bins.or(config.diagnostic_bins);
    let binning = match bins {
        Some(b) => Binning::equal_width_for(&ds, b),
        None => Binning::default_for(&ds),
    };
    let treated = ds.treated_indices();
    let controls = ds.control_indices();
    let (l1, cells_occupied) = l1_detailed(&ds, &binning, &treated, &controls)?;

    let value = serde_json::json!({
        "l1": l1,
        "cells_occupied": cells_occupied,
        "groups": {
            "treated": treated.len(),
            "control": controls.len(),
        },
        "binning": match bins {
            Some(b) => serde_json::json!({ "equal_width_bins": b }),
            None => serde_json::json!("distinct"),
        },
    });
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &value)?;
    writeln!(stdout).ok();
    Ok(())
}
