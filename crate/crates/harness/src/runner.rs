//! Ensemble orchestration.
//!
//! Realizations run on a rayon pool and are collected in index order; the
//! fold into tables and accumulators is sequential, so every output byte is
//! independent of the worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tglab_core::localization::{fit_ecl, EclFit, EnsembleAccumulator};
use tglab_core::table::{fmt_real, Table};

use crate::config::{ExperimentConfig, Kind};
use crate::error::{HarnessError, Result};
use crate::experiments::{columns, correlator_matrix, realize, table_name, LengthContext, Output};
use crate::manifest::{sha256_hex, RunManifest, SeedRecord, MANIFEST_FILE};

/// Failures above this fraction of `R` abort the run.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Stats {
            median: median_sorted(&v),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    Stats::of(values).map(|s| s.median)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    /// `None` when the decay is not resolvable.
    pub ell: Option<f64>,
    pub slope: f64,
    pub r_squared: f64,
    pub prefactor: Option<f64>,
}

impl From<&EclFit<f64>> for FitSummary {
    fn from(fit: &EclFit<f64>) -> Self {
        match fit {
            EclFit::Localized(f) => FitSummary {
                ell: Some(f.ell),
                slope: f.slope,
                r_squared: f.r_squared,
                prefactor: Some(f.prefactor),
            },
            EclFit::Divergent { slope, r_squared } => FitSummary {
                ell: None,
                slope: *slope,
                r_squared: *r_squared,
                prefactor: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub length: usize,
    pub completed: usize,
    pub failures: Vec<Failure>,
    pub metrics: BTreeMap<String, Stats>,
    pub fit: Option<FitSummary>,
    /// Localization length fed to the trial construction (`bound` runs).
    pub ell_used: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub config_hash: String,
    pub realizations: usize,
    pub lengths: Vec<LengthSummary>,
    /// Median of a metric at the largest length over the median at the smallest.
    pub ratios: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub aborted: Option<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn length(&self, l: usize) -> Option<&LengthSummary> {
        self.lengths.iter().find(|s| s.length == l)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable") + "\n"
    }
}

/// Everything a run produces, before it touches the file system.
#[derive(Debug)]
pub struct RunOutput {
    pub config_toml: String,
    pub config_hash: String,
    /// Data files in emission order.
    pub files: Vec<(String, String)>,
    pub summary: Summary,
    pub seeds: Vec<SeedRecord>,
    pub abort: Option<HarnessError>,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))
}

fn is_invariant(e: &tglab_core::Error) -> bool {
    matches!(e, tglab_core::Error::Invariant(_))
}

fn bins_table(length: usize, acc: &EnsembleAccumulator<f64>, table: &mut Table) {
    for d in 0..=length / 2 {
        table.push(vec![
            length.to_string(),
            d.to_string(),
            fmt_real(acc.mean(d)),
            fmt_real(acc.variance(d)),
            acc.count(d).to_string(),
        ]);
    }
}

/// Executes the ensemble in memory.
pub fn execute(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let config_toml = cfg.to_toml();
    let config_hash = sha256_hex(config_toml.as_bytes());
    let pool = pool(workers)?;
    let r = cfg.realizations;
    let mut table = Table::new(columns(cfg.kind));
    let mut lengths = Vec::new();
    let mut seeds = Vec::new();
    let mut violations: Vec<String> = Vec::new();
    let mut abort = None;

    for &l in &cfg.grid.lengths {
        let mut ctx = LengthContext::new(cfg, l)?;
        let mut ell_fit = None;
        if cfg.kind == Kind::Bound {
            if cfg.fit.ell > 0.0 {
                ctx.ell = Some(cfg.fit.ell);
            } else {
                let window = cfg.window();
                let mats: Vec<_> = pool.install(|| {
                    (0..r as u64)
                        .into_par_iter()
                        .map(|i| correlator_matrix(&ctx, i, window))
                        .collect()
                });
                let mut acc = EnsembleAccumulator::new(l, Some(window));
                for m in mats {
                    acc.accumulate_matrix(l, &m?)?;
                }
                let fit = fit_ecl(&acc, cfg.fit.options())?;
                ctx.ell = Some(fit.ell().ok_or_else(|| {
                    HarnessError::Invariant(format!(
                        "no finite localization length at L = {l}; set fit.ell explicitly"
                    ))
                })?);
                ell_fit = Some(FitSummary::from(&fit));
            }
        }
        info!("{} L = {l}: {r} realizations", cfg.kind.name());
        let outcomes: Vec<(u64, tglab_core::Result<Output>)> = pool.install(|| {
            (0..r as u64)
                .into_par_iter()
                .map(|i| (i, realize(&ctx, i)))
                .collect()
        });

        let mut acc = EnsembleAccumulator::new(l, None);
        let mut metrics: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut failures = Vec::new();
        let mut invariant = false;
        let mut completed = 0;
        for (i, outcome) in outcomes {
            seeds.push(SeedRecord {
                length: l,
                index: i,
                base_seed: cfg.base_seed,
                ok: outcome.is_ok(),
            });
            match outcome {
                Ok(out) => {
                    completed += 1;
                    for row in out.rows {
                        table.push(row);
                    }
                    if let Some(m) = out.matrix {
                        acc.accumulate_matrix(l, &m)?;
                    }
                    for (k, v) in out.metrics {
                        metrics.entry(k).or_default().push(v);
                    }
                    violations.extend(out.violations.into_iter().map(|v| format!("L = {l}, realization {i}: {v}")));
                }
                Err(e) => {
                    warn!("L = {l}, realization {i}: {e}");
                    invariant |= is_invariant(&e);
                    failures.push(Failure {
                        index: i,
                        error: e.to_string(),
                    });
                }
            }
        }
        let fit = if matches!(cfg.kind, Kind::Correlator | Kind::Obdm) && completed > 0 {
            bins_table(l, &acc, &mut table);
            Some(FitSummary::from(&fit_ecl(&acc, cfg.fit.options())?))
        } else {
            ell_fit
        };
        let too_many = failures.len() as f64 >= MAX_FAILURE_FRACTION * r as f64;
        if !failures.is_empty() && (too_many || invariant) {
            abort = Some(HarnessError::Aborted {
                length: l,
                failed: failures.len(),
                total: r,
                first: failures[0].error.clone(),
                invariant,
            });
        }
        lengths.push(LengthSummary {
            length: l,
            completed,
            failures,
            metrics: metrics.iter().filter_map(|(k, v)| Some((k.clone(), Stats::of(v)?))).collect(),
            fit,
            ell_used: ctx.ell,
        });
        if abort.is_some() {
            break;
        }
    }

    let mut ratios = BTreeMap::new();
    if let (Some(first), Some(last)) = (lengths.first(), lengths.last()) {
        if first.length != last.length {
            for (k, s) in &last.metrics {
                if let Some(base) = first.metrics.get(k) {
                    if base.median != 0.0 {
                        ratios.insert(k.clone(), s.median / base.median);
                    }
                }
            }
        }
    }
    let checks = vec![
        Check {
            name: "invariants".into(),
            passed: violations.is_empty(),
            detail: if violations.is_empty() {
                "no inequality violated beyond its slack".into()
            } else {
                violations.join("; ")
            },
        },
        Check {
            name: "failures".into(),
            passed: lengths.iter().all(|s| s.failures.is_empty()),
            detail: format!(
                "{} realizations failed",
                lengths.iter().map(|s| s.failures.len()).sum::<usize>()
            ),
        },
    ];
    if abort.is_none() && !violations.is_empty() {
        abort = Some(HarnessError::Invariant(violations.join("; ")));
    }
    let summary = Summary {
        kind: cfg.kind.name().into(),
        config_hash: config_hash.clone(),
        realizations: r,
        lengths,
        ratios,
        checks,
        aborted: abort.as_ref().map(|e| e.to_string()),
    };
    Ok(RunOutput {
        config_toml,
        config_hash,
        files: vec![(table_name(cfg.kind).to_string(), table.to_csv())],
        summary,
        seeds,
        abort,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))
}

/// Runs the ensemble and writes the config, data tables, summary and manifest into `out`
/// (or the configured output directory). Partial outputs are written and flagged before
/// an abort is reported.
pub fn run_ensemble(cfg: &ExperimentConfig, workers: usize, out: Option<&Path>) -> Result<(PathBuf, RunManifest)> {
    let run = execute(cfg, workers)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir(&run.config_hash));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut manifest = RunManifest {
        kind: cfg.kind.name().into(),
        config_hash: run.config_hash.clone(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seeds: run.seeds.clone(),
        files: Vec::new(),
        partial: run.abort.is_some(),
    };
    write(&dir, CONFIG_FILE, &run.config_toml)?;
    manifest.record(CONFIG_FILE, run.config_toml.as_bytes());
    for (name, contents) in &run.files {
        write(&dir, name, contents)?;
        manifest.record(name, contents.as_bytes());
    }
    let summary = run.summary.to_json();
    write(&dir, SUMMARY_FILE, &summary)?;
    manifest.record(SUMMARY_FILE, summary.as_bytes());
    write(&dir, MANIFEST_FILE, &manifest.to_json())?;
    match run.abort {
        Some(e) => Err(e),
        None => Ok((dir, manifest)),
    }
}
