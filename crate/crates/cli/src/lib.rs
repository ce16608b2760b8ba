//! Command-line driver: read a config, run its experiments in parallel and
//! write deterministic result files.

pub mod config;
pub mod ops;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use config::{Config, Setup, SCHEMA_VERSION, SEEDED};
use output::{evaluate_checks, finite_or_none, ExperimentSummary, ResultRow, RunSummary};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub jobs: Option<usize>,
    pub seed_override: Option<u64>,
    pub output: Option<PathBuf>,
}

/// Runs every experiment of the config at `path` and writes the results.
pub fn run_config(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let (cfg, base) = Config::load(path)?;
    let out_dir = match &opts.output {
        Some(o) => o.clone(),
        None if cfg.output_dir.is_relative() => base.join(&cfg.output_dir),
        None => cfg.output_dir.clone(),
    };
    run(&cfg, &base, &out_dir, opts)
}

pub fn run(cfg: &Config, base: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let setup = Setup::build(cfg, base)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build()?;
    let results: Vec<Result<ExperimentSummary>> = pool.install(|| {
        cfg.experiments
            .par_iter()
            .map(|exp| {
                let seed = if SEEDED.contains(&exp.operation.as_str()) {
                    opts.seed_override.or(exp.seed)
                } else {
                    exp.seed
                };
                let (metrics, checks, error) = match ops::run_experiment(&setup, exp, seed) {
                    Ok(o) => {
                        let global: Vec<_> = cfg
                            .tolerances
                            .iter()
                            .filter(|c| o.summary.contains_key(&c.metric))
                            .cloned()
                            .collect();
                        let mut checks = evaluate_checks(&exp.checks, &o.summary);
                        checks.extend(evaluate_checks(&global, &o.summary));
                        let mut summary_row = ResultRow::new(&exp.id, "summary", &[], None);
                        summary_row.metrics = o.summary.clone();
                        summary_row.pass = Some(checks.iter().all(|c| c.pass));
                        let mut rows = vec![summary_row];
                        rows.extend(o.rows);
                        output::write_csv(&out_dir.join(format!("{}.csv", exp.id)), &rows)?;
                        output::write_json(&out_dir.join(format!("{}.json", exp.id)), &o.report)?;
                        (o.summary, checks, None)
                    }
                    Err(e) => (Default::default(), Vec::new(), Some(format!("{e:#}"))),
                };
                let pass = error.is_none() && checks.iter().all(|c| c.pass);
                Ok(ExperimentSummary {
                    id: exp.id.clone(),
                    operation: exp.operation.clone(),
                    seed,
                    metrics: metrics.into_iter().map(|(k, v)| (k, finite_or_none(v))).collect(),
                    checks,
                    error,
                    pass,
                })
            })
            .collect()
    });
    let experiments = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        all_passed: experiments.iter().all(|e| e.pass),
        experiments,
    };
    output::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
