//! Seeded Monte Carlo harness.
//!
//! An experiment is a grid of cells `(K, fading)` crossed with `R` replicates.
//! Replicate `r` uses seed `base_seed + r` for every cell, so the cells of one
//! replicate share their geometry draw. Each replicate draws its instance,
//! certifies the optimum with the oracle and runs the configured algorithms.
//! Replicates may run on several threads; results are reduced in replicate
//! order, so output bytes do not depend on the thread count.
//!
//! Output is a long-format CSV with the fixed header
//! `experiment,replicate,algorithm,K,N,B_c,t,metric,value` (the `t` column is
//! empty for per-run metrics) plus a JSON summary with means, standard errors
//! and, when requested, trend checks.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, RunTrace, StepSchedule, StoppingRule, Termination, TraceOptions};
use crate::error::{Error, Result};
use crate::metrics::{self, ActivityThreshold};
use crate::model::NetworkInstance;
use crate::numeric::mean_and_stderr;
use crate::oracle;
use crate::scenario::{self, BudgetPolicy, Fading, ScenarioSpec, DEFAULT_AREA_SIDE, DEFAULT_NOISE};

pub const CSV_HEADER: &str = "experiment,replicate,algorithm,K,N,B_c,t,metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Per-iteration traces of every algorithm against the certified optimum.
    Convergence,
    #[serde(alias = "collision_vs_K")]
    CollisionVsK,
    #[serde(alias = "efficiency_vs_K")]
    EfficiencyVsK,
    #[serde(alias = "efficiency_vs_Bc")]
    EfficiencyVsBc,
    Table1,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::CollisionVsK => "collision_vs_k",
            ExperimentKind::EfficiencyVsK => "efficiency_vs_k",
            ExperimentKind::EfficiencyVsBc => "efficiency_vs_bc",
            ExperimentKind::Table1 => "table1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Aiwf,
    Siwf,
    Pgd,
    SimultaneousIwf,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Aiwf => "aiwf",
            Algorithm::Siwf => "siwf",
            Algorithm::Pgd => "pgd",
            Algorithm::SimultaneousIwf => "simultaneous_iwf",
        }
    }
}

/// Experiment description, usually read from TOML.
///
/// ```toml
/// kind = "collision_vs_k"
/// n_users = 10
/// channels = [32, 64, 128, 256]
/// fading = ["independent", { correlated = 0.5 }]
/// replicates = 50
/// base_seed = 1000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Label for the `experiment` column and the output file stem;
    /// defaults to the kind's name.
    #[serde(default)]
    pub name: Option<String>,
    pub n_users: usize,
    pub channels: Vec<usize>,
    #[serde(default = "default_fading")]
    pub fading: Vec<Fading>,
    #[serde(default = "default_area")]
    pub area_side: f64,
    #[serde(default)]
    pub budget: BudgetPolicy,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Iterations for the averaged, gradient and simultaneous algorithms (and
    /// for the sequential one in convergence runs).
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Defaults depend on the kind; see [`ExperimentConfig::algorithms`].
    #[serde(default, rename = "algorithms")]
    pub algorithm_list: Option<Vec<Algorithm>>,
    /// Step sizes for the averaged algorithm.
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default = "default_pgd_schedule")]
    pub pgd_schedule: StepSchedule,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    /// Residual at which the sequential algorithm is taken to have reached an
    /// equilibrium in the statistics experiments.
    #[serde(default = "default_equilibrium_tol")]
    pub equilibrium_tol: f64,
    /// Cap on sequential sweeps (one sweep is `N` single-user updates).
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// Keep every n-th iterate of convergence traces.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub activity_threshold: ActivityThreshold,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_fading() -> Vec<Fading> {
    vec![Fading::Independent]
}
fn default_area() -> f64 {
    DEFAULT_AREA_SIDE
}
fn default_noise() -> f64 {
    DEFAULT_NOISE
}
fn default_iterations() -> usize {
    200
}
fn default_pgd_schedule() -> StepSchedule {
    StepSchedule::gradient_default()
}
fn default_oracle_tol() -> f64 {
    1e-9
}
fn default_equilibrium_tol() -> f64 {
    1e-10
}
fn default_max_sweeps() -> usize {
    2000
}
fn default_record_every() -> usize {
    1
}

impl ExperimentConfig {
    /// A config of the given kind with every optional field at its default.
    pub fn new(kind: ExperimentKind, n_users: usize, channels: Vec<usize>, replicates: usize) -> Self {
        ExperimentConfig {
            kind,
            name: None,
            n_users,
            channels,
            fading: default_fading(),
            area_side: default_area(),
            budget: BudgetPolicy::default(),
            noise: default_noise(),
            replicates,
            base_seed: 0,
            iterations: default_iterations(),
            algorithm_list: None,
            schedule: StepSchedule::default(),
            pgd_schedule: default_pgd_schedule(),
            oracle_tol: default_oracle_tol(),
            equilibrium_tol: default_equilibrium_tol(),
            max_sweeps: default_max_sweeps(),
            record_every: default_record_every(),
            activity_threshold: ActivityThreshold::default(),
            output: None,
            threads: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.name())
    }

    /// Configured algorithms, or the kind's default: all four for
    /// convergence runs, averaged and sequential IWF otherwise.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        match (&self.algorithm_list, self.kind) {
            (Some(list), _) => list.clone(),
            (None, ExperimentKind::Convergence) => vec![
                Algorithm::Aiwf,
                Algorithm::Siwf,
                Algorithm::Pgd,
                Algorithm::SimultaneousIwf,
            ],
            (None, _) => vec![Algorithm::Aiwf, Algorithm::Siwf],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        if self.channels.is_empty() || self.fading.is_empty() {
            return Err(Error::Config("channel and fading lists must be non-empty".into()));
        }
        if self.algorithms().is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if !(self.oracle_tol > 0.0 && self.equilibrium_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.record_every == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("record_every and max_sweeps must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        if self.base_seed.checked_add(self.replicates as u64 - 1).is_none() {
            return Err(Error::Config("base_seed + replicates overflows".into()));
        }
        for cell in self.cells() {
            self.scenario(cell, self.base_seed).validate()?;
        }
        Ok(())
    }

    /// Cells in output order: channel counts outer, fading settings inner.
    pub fn cells(&self) -> Vec<Cell> {
        self.channels
            .iter()
            .flat_map(|&k| self.fading.iter().map(move |&f| Cell { n_channels: k, fading: f }))
            .collect()
    }

    pub fn scenario(&self, cell: Cell, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            n_users: self.n_users,
            n_channels: cell.n_channels,
            area_side: self.area_side,
            budget: self.budget.clone(),
            noise: self.noise,
            fading: cell.fading,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_channels: usize,
    pub fading: Fading,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub replicate: usize,
    pub algorithm: &'static str,
    pub cell: Cell,
    pub t: Option<usize>,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub algorithm: String,
    #[serde(rename = "K")]
    pub n_channels: usize,
    #[serde(rename = "N")]
    pub n_users: usize,
    #[serde(rename = "B_c")]
    pub fading: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultsDocument {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub summary: Vec<Aggregate>,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip)]
    pub rows: Vec<Row>,
}

impl ResultsDocument {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * self.rows.len() + CSV_HEADER.len() + 1);
        out.push_str(CSV_HEADER);
        out.push('\n');
        let n = self.config.n_users;
        for r in &self.rows {
            let t = r.t.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.experiment,
                r.replicate,
                r.algorithm,
                r.cell.n_channels,
                n,
                r.cell.fading.label(),
                t,
                r.metric,
                r.value
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn aggregate(&self, algorithm: &str, cell: Cell, metric: &str) -> Option<&Aggregate> {
        self.summary.iter().find(|a| {
            a.algorithm == algorithm
                && a.n_channels == cell.n_channels
                && a.fading == cell.fading.label()
                && a.metric == metric
        })
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.experiment));
        let json = dir.join(format!("{}.json", self.experiment));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&json, self.to_json())?;
        Ok((csv, json))
    }
}

/// Runs every replicate of every cell and aggregates the results. Trend
/// checks are evaluated when `check` is set.
pub fn run_experiment(config: &ExperimentConfig, check: bool) -> Result<ResultsDocument> {
    config.validate()?;
    let cells = config.cells();
    let tasks: Vec<(usize, usize)> = (0..config.replicates)
        .flat_map(|r| (0..cells.len()).map(move |c| (r, c)))
        .collect();
    let run = || -> Vec<Result<Vec<Row>>> {
        tasks
            .par_iter()
            .map(|&(r, c)| {
                let seed = config.base_seed + r as u64;
                run_cell(config, cells[c], r, seed).map_err(|e| Error::Replicate {
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let outcomes = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut rows = Vec::new();
    for outcome in outcomes {
        rows.extend(outcome?);
    }
    let summary = aggregate(config, &rows);
    let mut doc = ResultsDocument {
        experiment: config.name().to_string(),
        kind: config.kind,
        seeds: (0..config.replicates as u64).map(|r| config.base_seed + r).collect(),
        config: config.clone(),
        summary,
        checks: Vec::new(),
        rows,
    };
    if check {
        doc.checks = trend_checks(&doc);
    }
    Ok(doc)
}

fn run_cell(config: &ExperimentConfig, cell: Cell, replicate: usize, seed: u64) -> Result<Vec<Row>> {
    let inst = scenario::generate(&config.scenario(cell, seed))?;
    let cert = oracle::solve_max_potential(&inst, config.oracle_tol)?;
    let mut rows = Vec::new();
    let mut push = |algorithm: &'static str, t: Option<usize>, metric: &'static str, value: f64| {
        rows.push(Row {
            replicate,
            algorithm,
            cell,
            t,
            metric,
            value,
        })
    };
    push("oracle", None, "p_star", cert.value);
    push("oracle", None, "gap_bound", cert.gap_bound);
    push("oracle", None, "iterations", cert.iterations as f64);

    for algorithm in config.algorithms() {
        let name = algorithm.name();
        let trace = run_algorithm(config, &inst, algorithm)?;
        if config.kind == ExperimentKind::Convergence {
            for r in &trace.records {
                push(name, Some(r.t), "potential_gap", cert.value - r.potential);
                push(name, Some(r.t), "sum_rate", r.sum_rate);
                if let Some(res) = r.residual_inf {
                    push(name, Some(r.t), "residual_inf", res);
                }
                if let Some(eps) = r.epsilon {
                    push(name, Some(r.t), "epsilon_t", eps);
                }
            }
        }
        let last = trace.last();
        let final_profile = &trace.final_profile;
        let collisions = metrics::count_collisions(&inst, final_profile, config.activity_threshold)?;
        push(name, None, "iterations", trace.iterations() as f64);
        push(name, None, "potential_gap", cert.value - last.potential);
        push(name, None, "efficiency", metrics::efficiency(&inst, final_profile, &cert)?);
        push(name, None, "collided_channels", collisions.collided_channels as f64);
        push(name, None, "total_collisions", collisions.total_collisions as f64);
        let residual = match last.residual_inf {
            Some(r) => r,
            None => crate::waterfill::residual_inf(&inst, final_profile)?,
        };
        push(name, None, "residual_inf", residual);
        let min_residual = trace
            .records
            .iter()
            .filter_map(|r| r.residual_inf)
            .fold(f64::INFINITY, f64::min);
        if min_residual.is_finite() {
            push(name, None, "min_residual", min_residual);
        }
        push(
            name,
            None,
            "diverged",
            f64::from(u8::from(trace.termination == Termination::DivergedGuard)),
        );
    }
    Ok(rows)
}

fn run_algorithm(
    config: &ExperimentConfig,
    inst: &NetworkInstance,
    algorithm: Algorithm,
) -> Result<RunTrace> {
    let p0 = inst.uniform_profile();
    let convergence = config.kind == ExperimentKind::Convergence;
    let trace = TraceOptions {
        record_every: if convergence { config.record_every } else { usize::MAX },
        ..TraceOptions::default()
    };
    let stop = StoppingRule::max_iters(config.iterations);
    let mut quiet = |_: usize, _: &crate::model::PowerProfile| {};
    match algorithm {
        Algorithm::Aiwf => dynamics::run_aiwf_with(inst, &p0, config.schedule, None, stop, trace, &mut quiet),
        Algorithm::Pgd => dynamics::run_pgd_with(inst, &p0, config.pgd_schedule, stop, trace, &mut quiet),
        Algorithm::SimultaneousIwf => {
            dynamics::run_simultaneous_iwf_with(inst, &p0, stop, config.iterations, trace, &mut quiet)
        }
        Algorithm::Siwf => {
            let stop = if convergence {
                stop
            } else {
                StoppingRule::max_iters(config.max_sweeps.saturating_mul(inst.n_users()))
                    .with_residual_tol(config.equilibrium_tol)
            };
            dynamics::run_siwf_with(inst, &p0, Default::default(), stop, trace, &mut quiet)
        }
    }
}

fn aggregate(config: &ExperimentConfig, rows: &[Row]) -> Vec<Aggregate> {
    // Keys in first-seen order keep the summary layout stable.
    let mut order: Vec<(&'static str, usize, &'static str)> = Vec::new();
    let mut values: HashMap<(&'static str, usize, &'static str), Vec<f64>> = HashMap::new();
    let cells = config.cells();
    for row in rows.iter().filter(|r| r.t.is_none()) {
        let cell_index = cells.iter().position(|c| *c == row.cell).expect("row from a configured cell");
        let key = (row.algorithm, cell_index, row.metric);
        values
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row.value);
    }
    order
        .into_iter()
        .map(|key| {
            let v = &values[&key];
            let (mean, stderr) = mean_and_stderr(v);
            let cell = cells[key.1];
            Aggregate {
                algorithm: key.0.to_string(),
                n_channels: cell.n_channels,
                n_users: config.n_users,
                fading: cell.fading.label(),
                metric: key.2.to_string(),
                count: v.len(),
                mean,
                stderr,
            }
        })
        .collect()
}

/// `later ≥ earlier` up to one standard error of the difference.
fn non_decreasing_within_se(earlier: &Aggregate, later: &Aggregate) -> bool {
    later.mean >= earlier.mean - earlier.stderr.hypot(later.stderr)
}

fn describe(a: &Aggregate) -> String {
    format!("K={} B_c={}: {:.4}±{:.4}", a.n_channels, a.fading, a.mean, a.stderr)
}

fn series<'a>(doc: &'a ResultsDocument, algorithm: &str, metric: &str, cells: &[Cell]) -> Option<Vec<&'a Aggregate>> {
    cells.iter().map(|c| doc.aggregate(algorithm, *c, metric)).collect()
}

fn check_series(
    doc: &ResultsDocument,
    name: String,
    algorithm: &str,
    metric: &str,
    cells: &[Cell],
    ok: impl Fn(&Aggregate, &Aggregate) -> bool,
) -> CheckOutcome {
    match series(doc, algorithm, metric, cells) {
        None => CheckOutcome {
            name,
            passed: false,
            detail: format!("{algorithm} did not report {metric}"),
        },
        Some(s) => CheckOutcome {
            passed: s.windows(2).all(|w| ok(w[0], w[1])),
            detail: s.iter().map(|a| describe(a)).collect::<Vec<_>>().join("; "),
            name,
        },
    }
}

/// Directional assertions for each experiment kind. Collision counts come
/// from the sequential algorithm's equilibria, efficiency from the averaged
/// algorithm after the configured iteration budget.
pub fn trend_checks(doc: &ResultsDocument) -> Vec<CheckOutcome> {
    let config = &doc.config;
    let mut checks = Vec::new();
    let by_k = |fading: Fading| -> Vec<Cell> {
        let mut ks = config.channels.clone();
        ks.sort_unstable();
        ks.into_iter().map(|n_channels| Cell { n_channels, fading }).collect()
    };
    match config.kind {
        ExperimentKind::Convergence => {
            for cell in config.cells() {
                for algorithm in config.algorithms() {
                    let name = algorithm.name();
                    match algorithm {
                        Algorithm::Aiwf | Algorithm::Siwf => {
                            let gap = doc.aggregate(name, cell, "potential_gap");
                            checks.push(CheckOutcome {
                                name: format!("{name} potential gap below 1e-4 (K={})", cell.n_channels),
                                passed: gap.is_some_and(|g| g.mean < 1e-4),
                                detail: gap.map(describe).unwrap_or_default(),
                            });
                        }
                        Algorithm::SimultaneousIwf => {
                            let diverged = doc.aggregate(name, cell, "diverged");
                            checks.push(CheckOutcome {
                                name: format!("{name} flagged divergent (K={})", cell.n_channels),
                                passed: diverged.is_some_and(|d| d.mean == 1.0),
                                detail: diverged.map(describe).unwrap_or_default(),
                            });
                        }
                        Algorithm::Pgd => {}
                    }
                }
            }
        }
        ExperimentKind::CollisionVsK => {
            for &fading in &config.fading {
                checks.push(check_series(
                    doc,
                    format!("collided channels strictly decreasing in K (B_c={})", fading.label()),
                    "siwf",
                    "collided_channels",
                    &by_k(fading),
                    |a, b| b.mean < a.mean,
                ));
            }
        }
        ExperimentKind::EfficiencyVsK => {
            for &fading in &config.fading {
                let cells = by_k(fading);
                checks.push(check_series(
                    doc,
                    format!("efficiency non-decreasing in K (B_c={})", fading.label()),
                    "aiwf",
                    "efficiency",
                    &cells,
                    non_decreasing_within_se,
                ));
                let ends = [cells[0], cells[cells.len() - 1]];
                checks.push(check_series(
                    doc,
                    format!(
                        "efficiency at K={} exceeds K={} by 3 standard errors (B_c={})",
                        ends[1].n_channels,
                        ends[0].n_channels,
                        fading.label()
                    ),
                    "aiwf",
                    "efficiency",
                    &ends,
                    |a, b| b.mean - a.mean >= 3.0 * a.stderr.hypot(b.stderr),
                ));
            }
        }
        ExperimentKind::EfficiencyVsBc => {
            let most_correlated = config
                .fading
                .iter()
                .filter_map(|f| match f {
                    Fading::Correlated(bc) => Some(*bc),
                    Fading::Independent => None,
                })
                .fold(None, |m: Option<f64>, bc| Some(m.map_or(bc, |m| m.max(bc))));
            if let (Some(bc), true) = (most_correlated, config.fading.contains(&Fading::Independent)) {
                for &k in &config.channels {
                    let cells = [
                        Cell { n_channels: k, fading: Fading::Correlated(bc) },
                        Cell { n_channels: k, fading: Fading::Independent },
                    ];
                    checks.push(check_series(
                        doc,
                        format!("efficiency with B_c={bc} at most independent (K={k})"),
                        "aiwf",
                        "efficiency",
                        &cells,
                        non_decreasing_within_se,
                    ));
                }
            }
        }
        ExperimentKind::Table1 => {
            let mut ks = config.channels.clone();
            ks.sort_unstable();
            for &k in &ks {
                let cells: Vec<Cell> = config.fading.iter().map(|&fading| Cell { n_channels: k, fading }).collect();
                checks.push(check_series(
                    doc,
                    format!("total collisions increase across fading settings (K={k})"),
                    "siwf",
                    "total_collisions",
                    &cells,
                    non_decreasing_within_se,
                ));
            }
            for &fading in &config.fading {
                checks.push(check_series(
                    doc,
                    format!("total collisions decrease in K (B_c={})", fading.label()),
                    "siwf",
                    "total_collisions",
                    &by_k(fading),
                    |a, b| b.mean < a.mean,
                ));
            }
        }
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(kind, 3, vec![4, 8], 3);
        c.iterations = 20;
        c
    }

    #[test]
    fn parses_toml_with_fading_list() {
        let c = ExperimentConfig::from_toml_str(
            "kind = \"collision_vs_K\"\nn_users = 4\nchannels = [8, 16]\nreplicates = 2\n\
             fading = [\"independent\", { correlated = 0.5 }]\n",
        )
        .unwrap();
        assert_eq!(c.kind, ExperimentKind::CollisionVsK);
        assert_eq!(c.fading, vec![Fading::Independent, Fading::Correlated(0.5)]);
        assert_eq!(c.cells().len(), 4);
        assert!(ExperimentConfig::from_toml_str("kind = \"table1\"\nn_users = 2\nchannels = [4]\nreplicates = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("kind = \"table1\"\nn_users = 2\nchannels = [4]\nreplicates = 1\nbogus = 1\n").is_err());
    }

    #[test]
    fn csv_layout() {
        let doc = run_experiment(&small(ExperimentKind::CollisionVsK), false).unwrap();
        let csv = doc.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for line in lines {
            assert_eq!(line.split(',').count(), 9, "{line}");
            assert!(line.starts_with("collision_vs_k,"));
        }
        assert!(doc.summary.iter().any(|a| a.algorithm == "siwf" && a.metric == "collided_channels" && a.count == 3));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let mut config = small(ExperimentKind::Convergence);
        config.threads = Some(1);
        let one = run_experiment(&config, false).unwrap();
        config.threads = Some(3);
        let three = run_experiment(&config, false).unwrap();
        assert_eq!(one.to_csv(), three.to_csv());
    }

    #[test]
    fn convergence_rows_carry_iterations() {
        let doc = run_experiment(&small(ExperimentKind::Convergence), true).unwrap();
        assert!(doc.rows.iter().any(|r| r.algorithm == "pgd" && r.metric == "epsilon_t" && r.t == Some(20)));
        assert!(doc.checks.iter().any(|c| c.name.starts_with("simultaneous_iwf")));
    }

    #[test]
    fn seeds_follow_base_seed() {
        let mut config = small(ExperimentKind::Table1);
        config.base_seed = 40;
        let doc = run_experiment(&config, false).unwrap();
        assert_eq!(doc.seeds, vec![40, 41, 42]);
    }
}
