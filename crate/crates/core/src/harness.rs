//! Experiment orchestration: replicated simulations compared against state
//! evolution, theory-only traces, cobweb data, crossover sweeps and the
//! logit-mixture pipeline. Every command is described by a serializable
//! [`CommandConfig`] and produces named tables; the same config always
//! produces byte-identical tables.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayesmix::{
    bayesmix_retrain_demo, emit_targets, fit_bimodal_em, BayesMixConfig, BimodalFit, DemoConfig,
};
use crate::error::{Error, Result};
use crate::glm::{run_retraining_glm, sample_glm_dataset, GlmDataset, GlmParams, ScheduleGlm};
use crate::glm_se::{glm_eta_map, se_trajectory_glm};
use crate::gmm::{run_retraining_gmm, sample_gmm_dataset, GmmDataset, GmmParams, ScheduleGmm};
use crate::gmm_se::{
    cobweb_trace_of, eta_map_ct, eta_map_ft, find_crossovers, find_fixed_points_of, p_star,
    se_init_gmm, se_trajectory_gmm, se_trajectory_map, SeMapSpec, SeMapVariant, DEFAULT_GRID,
};
use crate::io::{self, fmt_f64, DatasetFile, Table};
use crate::numerics::RngStream;

/// Model family, parameters and aggregator schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Gmm {
        params: GmmParams,
        schedule: ScheduleGmm,
    },
    Glm {
        params: GlmParams,
        schedule: ScheduleGlm,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Gmm { params, schedule } => {
                params.validate()?;
                schedule.validate()
            }
            ModelSpec::Glm { params, schedule } => {
                params.validate()?;
                schedule.validate()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub iterations: usize,
    pub replications: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        self.model.validate()
    }
}

/// One iterate of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub t: usize,
    pub test_error: f64,
    pub overlap: f64,
    pub predicted_error: f64,
    pub onsager: f64,
    pub aggregator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub rows: Vec<ReplicationRow>,
    pub failure: Option<String>,
}

impl Replication {
    pub fn completed(&self, iterations: usize) -> bool {
        self.failure.is_none() && self.rows.len() == iterations
    }
}

/// Runs replication `index`; its data come from stream `index` of the
/// master seed, so results do not depend on scheduling.
pub fn run_replication(cfg: &ExperimentConfig, index: usize) -> Replication {
    let stream = RngStream::new(cfg.master_seed, index as u64);
    let outcome = match &cfg.model {
        ModelSpec::Gmm { params, schedule } => {
            run_retraining_gmm(params, schedule, cfg.iterations, stream).map(|tr| {
                let rows = tr
                    .rows
                    .iter()
                    .map(|r| ReplicationRow {
                        t: r.t,
                        test_error: r.test_error,
                        overlap: r.overlap,
                        predicted_error: r.predicted_error,
                        onsager: r.onsager,
                        aggregator: serde_json::to_string(&r.aggregator).unwrap(),
                    })
                    .collect();
                (rows, tr.failure)
            })
        }
        ModelSpec::Glm { params, schedule } => {
            run_retraining_glm(params, schedule, cfg.iterations, stream).map(|tr| {
                let rows = tr
                    .rows
                    .iter()
                    .map(|r| ReplicationRow {
                        t: r.t,
                        test_error: r.test_error,
                        overlap: r.overlap,
                        predicted_error: r.predicted_error,
                        onsager: r.onsager,
                        aggregator: serde_json::to_string(&r.aggregator).unwrap(),
                    })
                    .collect();
                (rows, tr.failure)
            })
        }
    };
    match outcome {
        Ok((rows, failure)) => Replication {
            index,
            rows,
            failure: failure.map(|e| e.to_string()),
        },
        Err(e) => Replication {
            index,
            rows: Vec::new(),
            failure: Some(e.to_string()),
        },
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// All replications, in index order, using at most `jobs` threads.
pub fn run_replications(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<Replication>> {
    cfg.validate()?;
    let pool = thread_pool(jobs)?;
    Ok(pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| run_replication(cfg, i))
            .collect()
    }))
}

/// State-evolution error prediction for t = 1..T.
pub fn predicted_errors(model: &ModelSpec, iterations: usize) -> Result<Vec<f64>> {
    Ok(match model {
        ModelSpec::Gmm { params, schedule } => se_trajectory_gmm(params, schedule, iterations)?
            .iter()
            .map(|r| r.error)
            .collect(),
        ModelSpec::Glm { params, schedule } => se_trajectory_glm(params, schedule, iterations)?
            .iter()
            .map(|r| r.error)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: usize,
    pub predicted_error: f64,
    pub empirical_mean: f64,
    /// Sample standard deviation across replications (0 for a single one).
    pub empirical_std: f64,
    pub gap: f64,
    /// Replications that reached this iteration.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    pub failed: Vec<usize>,
}

impl ComparisonReport {
    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }
}

pub fn compare(predicted: &[f64], reps: &[Replication]) -> ComparisonReport {
    let rows = predicted
        .iter()
        .enumerate()
        .map(|(k, &pred)| {
            let t = k + 1;
            let errs: Vec<f64> = reps
                .iter()
                .filter_map(|r| {
                    r.rows
                        .iter()
                        .find(|row| row.t == t)
                        .map(|row| row.test_error)
                })
                .collect();
            let count = errs.len();
            let mean = if count == 0 {
                f64::NAN
            } else {
                errs.iter().sum::<f64>() / count as f64
            };
            let std = if count < 2 {
                0.0
            } else {
                (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (count - 1) as f64)
                    .sqrt()
            };
            ReportRow {
                t,
                predicted_error: pred,
                empirical_mean: mean,
                empirical_std: std,
                gap: (pred - mean).abs(),
                count,
            }
        })
        .collect();
    ComparisonReport {
        rows,
        failed: reps
            .iter()
            .filter(|r| r.failure.is_some())
            .map(|r| r.index)
            .collect(),
    }
}

/// Settings for a theory-only trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeConfig {
    pub model: ModelSpec,
    pub iterations: usize,
}

/// An η² ↦ η² map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MapSpec {
    Gmm {
        params: GmmParams,
        variant: SeMapVariant,
    },
    /// Optimal recursion of the linear model.
    Glm { params: GlmParams, order: usize },
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MapSpec::Gmm { params, variant } => SeMapSpec::new(*variant, *params).map(|_| ()),
            MapSpec::Glm { params, order } => {
                params.validate_scalars()?;
                if *order < 2 {
                    return Err(Error::Config(format!(
                        "quadrature order must be >= 2, got {order}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            MapSpec::Gmm { params, variant } => SeMapSpec {
                variant: *variant,
                params: *params,
            }
            .eval(u),
            MapSpec::Glm { params, order } => glm_eta_map(u, params, *order).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CobwebConfig {
    pub map: MapSpec,
    pub u1: f64,
    pub iterations: usize,
    /// Samples of the map curve on [0, u_max].
    pub grid_points: usize,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub pi_plus: f64,
    pub p_values: Vec<f64>,
    pub u_max: f64,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub p: f64,
    pub u_star: Option<f64>,
    /// |F_CT(u*) − F_FT(u*)|.
    pub residual: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverTable {
    pub rows: Vec<CrossoverRow>,
    /// u* increases as p decreases across all rows that have one.
    pub increases_as_p_decreases: bool,
}

pub fn crossover_sweep(cfg: &CrossoverConfig) -> Result<CrossoverTable> {
    if cfg.p_values.is_empty() {
        return Err(Error::Config("crossover sweep needs at least one p".into()));
    }
    let rows: Vec<CrossoverRow> = cfg
        .p_values
        .iter()
        .map(|&p| {
            let params = match GmmParams::theory(cfg.gamma, cfg.alpha, p, cfg.pi_plus) {
                Ok(pr) => pr,
                Err(e) => {
                    return CrossoverRow {
                        p,
                        u_star: None,
                        residual: None,
                        note: e.to_string(),
                    };
                }
            };
            let found = find_crossovers(&params, cfg.u_max, cfg.grid).map(|v| v.first().copied());
            match found {
                Ok(Some(u)) => CrossoverRow {
                    p,
                    u_star: Some(u),
                    residual: Some((eta_map_ct(u, &params) - eta_map_ft(u, &params)).abs()),
                    note: "ok".into(),
                },
                Ok(None) => CrossoverRow {
                    p,
                    u_star: None,
                    residual: None,
                    note: "no crossover".into(),
                },
                Err(e) => CrossoverRow {
                    p,
                    u_star: None,
                    residual: None,
                    note: e.to_string(),
                },
            }
        })
        .collect();
    let mut pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.u_star.map(|u| (r.p, u)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let increases_as_p_decreases = pairs.windows(2).all(|w| w[0].1 > w[1].1);
    Ok(CrossoverTable {
        rows,
        increases_as_p_decreases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFitConfig {
    pub input: PathBuf,
    pub bayes: BayesMixConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesApplyConfig {
    pub input: PathBuf,
    /// Stored fit; when absent the logits themselves are fitted first.
    pub fit: Option<PathBuf>,
    pub bayes: BayesMixConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesDemoConfig {
    pub params: GmmParams,
    pub bayes: BayesMixConfig,
    pub demo: DemoConfig,
    pub rounds: usize,
    pub seeds: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DataSpec {
    Gmm { params: GmmParams },
    Glm { params: GlmParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub data: DataSpec,
    pub master_seed: u64,
    /// Stream index within the master seed; replication k of a simulation
    /// uses stream k.
    pub replication: u64,
}

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandConfig {
    Simulate(ExperimentConfig),
    Se(SeConfig),
    Cobweb(CobwebConfig),
    Crossover(CrossoverConfig),
    BayesmixFit(BayesFitConfig),
    BayesmixApply(BayesApplyConfig),
    BayesmixDemo(BayesDemoConfig),
    Dataset(DatasetConfig),
}

impl CommandConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            CommandConfig::Simulate(c) => Some(c.master_seed),
            CommandConfig::BayesmixDemo(c) => Some(c.master_seed),
            CommandConfig::Dataset(c) => Some(c.master_seed),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap()
    }

    /// Reads a config from a `config.json` sidecar or from the embedded
    /// config of any output table.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            return Ok(serde_json::from_str(&text)?);
        }
        let table = Table::read(text.as_bytes())?;
        Ok(serde_json::from_value(table.config()?)?)
    }
}

/// Named artifacts of one command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub json: Vec<(String, String)>,
    /// Set when the command ran but its result counts as a failure.
    pub failure: Option<Error>,
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

pub fn execute(cmd: &CommandConfig, jobs: usize) -> Result<Outputs> {
    match cmd {
        CommandConfig::Simulate(c) => simulate(c, jobs),
        CommandConfig::Se(c) => se(c),
        CommandConfig::Cobweb(c) => cobweb(c),
        CommandConfig::Crossover(c) => crossover(c),
        CommandConfig::BayesmixFit(c) => bayes_fit(c),
        CommandConfig::BayesmixApply(c) => bayes_apply(c),
        CommandConfig::BayesmixDemo(c) => bayes_demo(c, jobs),
        CommandConfig::Dataset(c) => dataset(c),
    }
}

fn simulate(cfg: &ExperimentConfig, jobs: usize) -> Result<Outputs> {
    let predicted = predicted_errors(&cfg.model, cfg.iterations)?;
    let reps = run_replications(cfg, jobs)?;
    let report = compare(&predicted, &reps);

    let mut summary = Table::new(
        "comparison",
        &[
            "t",
            "predicted_error",
            "empirical_mean",
            "empirical_std",
            "gap",
            "count",
        ],
    );
    for r in &report.rows {
        summary.push(vec![
            r.t.to_string(),
            f(r.predicted_error),
            f(r.empirical_mean),
            f(r.empirical_std),
            f(r.gap),
            r.count.to_string(),
        ]);
    }
    let mut traj = Table::new(
        "trajectories",
        &[
            "replication",
            "t",
            "test_error",
            "overlap",
            "predicted_error",
            "onsager",
            "aggregator",
        ],
    );
    for rep in &reps {
        for row in &rep.rows {
            traj.push(vec![
                rep.index.to_string(),
                row.t.to_string(),
                f(row.test_error),
                f(row.overlap),
                f(row.predicted_error),
                f(row.onsager),
                row.aggregator.clone(),
            ]);
        }
    }
    let mut status = Table::new(
        "replications",
        &["replication", "status", "iterations", "detail"],
    );
    for rep in &reps {
        let ok = rep.completed(cfg.iterations);
        status.push(vec![
            rep.index.to_string(),
            if ok { "ok".into() } else { "failed".into() },
            rep.rows.len().to_string(),
            rep.failure
                .clone()
                .unwrap_or_default()
                .replace(['\t', '\n'], " "),
        ]);
    }
    let failure = if reps.iter().all(|r| r.failure.is_some()) {
        Some(Error::Divergence {
            iteration: 0,
            detail: format!("all {} replications failed", reps.len()),
        })
    } else {
        None
    };
    Ok(Outputs {
        tables: vec![
            ("report.tsv".into(), summary),
            ("trajectories.tsv".into(), traj),
            ("replications.tsv".into(), status),
        ],
        json: Vec::new(),
        failure,
    })
}

fn se(cfg: &SeConfig) -> Result<Outputs> {
    if cfg.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let table = match &cfg.model {
        ModelSpec::Gmm { params, schedule } => {
            let mut t = Table::new(
                "se_trajectory",
                &["variant", "t", "m", "sigma", "eta", "error"],
            );
            let rows = se_trajectory_gmm(params, schedule, cfg.iterations)?;
            for r in &rows {
                t.push(vec![
                    schedule.name().into(),
                    r.t.to_string(),
                    f(r.m),
                    f(r.sigma),
                    f(r.eta),
                    f(r.error),
                ]);
            }
            let eta1 = se_init_gmm(params).eta;
            for variant in [SeMapVariant::FtLimit, SeMapVariant::CtLimit] {
                let map = SeMapSpec::new(variant, *params)?;
                for r in se_trajectory_map(&map, eta1.max(0.0), cfg.iterations)? {
                    t.push(vec![
                        map.name().into(),
                        r.t.to_string(),
                        f(r.m),
                        f(r.sigma),
                        f(r.eta),
                        f(r.error),
                    ]);
                }
            }
            t
        }
        ModelSpec::Glm { params, schedule } => {
            let mut t = Table::new(
                "se_trajectory",
                &["variant", "t", "mu", "sigma", "eta", "error"],
            );
            for r in se_trajectory_glm(params, schedule, cfg.iterations)? {
                t.push(vec![
                    schedule.name().into(),
                    r.t.to_string(),
                    f(r.mu),
                    f(r.sigma),
                    f(r.eta),
                    f(r.error),
                ]);
            }
            t
        }
    };
    Ok(Outputs {
        tables: vec![("se.tsv".into(), table)],
        ..Outputs::default()
    })
}

fn cobweb(cfg: &CobwebConfig) -> Result<Outputs> {
    cfg.map.validate()?;
    if !(cfg.u_max > 0.0) || cfg.grid_points < 2 {
        return Err(Error::Config(
            "cobweb needs u_max > 0 and at least 2 grid points".into(),
        ));
    }
    let trace = cobweb_trace_of(|u| cfg.map.eval(u), cfg.u1, cfg.iterations)?;
    let mut steps = Table::new("cobweb", &["t", "u", "f_u"])
        .with_meta("truncated", trace.truncated.to_string());
    for (k, (u, fu)) in trace.points.iter().enumerate() {
        steps.push(vec![(k + 1).to_string(), f(*u), f(*fu)]);
    }
    let mut curve = Table::new("map_samples", &["u", "f_u", "diagonal"]);
    for k in 0..cfg.grid_points {
        let u = cfg.u_max * k as f64 / (cfg.grid_points - 1) as f64;
        curve.push(vec![f(u), f(cfg.map.eval(u)), f(u)]);
    }
    let mut fixed = Table::new("fixed_points", &["u"]);
    for u in find_fixed_points_of(
        |u| cfg.map.eval(u),
        cfg.u_max,
        cfg.grid_points.max(DEFAULT_GRID / 10),
    )? {
        fixed.push(vec![f(u)]);
    }
    Ok(Outputs {
        tables: vec![
            ("cobweb.tsv".into(), steps),
            ("map.tsv".into(), curve),
            ("fixed_points.tsv".into(), fixed),
        ],
        ..Outputs::default()
    })
}

fn crossover(cfg: &CrossoverConfig) -> Result<Outputs> {
    let sweep = crossover_sweep(cfg)?;
    let ps = p_star(cfg.gamma, cfg.alpha)?;
    let mut t = Table::new("crossover", &["p", "u_star", "residual", "note"])
        .with_meta(
            "increases_as_p_decreases",
            sweep.increases_as_p_decreases.to_string(),
        )
        .with_meta("p_star", opt(ps.p));
    for r in &sweep.rows {
        t.push(vec![
            f(r.p),
            opt(r.u_star),
            opt(r.residual),
            r.note.replace('\t', " "),
        ]);
    }
    let failure = if sweep.rows.iter().all(|r| r.u_star.is_none()) {
        Some(Error::Numerical("no crossover found for any p".into()))
    } else {
        None
    };
    Ok(Outputs {
        tables: vec![("crossover.tsv".into(), t)],
        json: Vec::new(),
        failure,
    })
}

fn fit_json(fit: &BimodalFit) -> String {
    serde_json::to_string_pretty(fit).unwrap() + "\n"
}

fn loglik_table(fit: &BimodalFit) -> Table {
    let mut t = Table::new("em_loglik", &["iteration", "loglik"]);
    for (k, ll) in fit.loglik_trace.iter().enumerate() {
        t.push(vec![k.to_string(), f(*ll)]);
    }
    t
}

fn bayes_fit(cfg: &BayesFitConfig) -> Result<Outputs> {
    let records = io::read_logits_file(&cfg.input)?;
    let logits: Vec<f64> = records.iter().map(|r| r.z).collect();
    let fit = fit_bimodal_em(&logits, &cfg.bayes)?;
    Ok(Outputs {
        tables: vec![("em_loglik.tsv".into(), loglik_table(&fit))],
        json: vec![("fit.json".into(), fit_json(&fit))],
        failure: None,
    })
}

fn bayes_apply(cfg: &BayesApplyConfig) -> Result<Outputs> {
    let records = io::read_logits_file(&cfg.input)?;
    let mut out = Outputs::default();
    let fit = match &cfg.fit {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<BimodalFit>(&text)?
        }
        None => {
            let logits: Vec<f64> = records.iter().map(|r| r.z).collect();
            let fit = fit_bimodal_em(&logits, &cfg.bayes)?;
            out.json.push(("fit.json".into(), fit_json(&fit)));
            fit
        }
    };
    let targets = emit_targets(&records, &fit, &cfg.bayes)?;
    out.tables
        .push(("targets.tsv".into(), io::targets_table(&targets, "{}")));
    Ok(out)
}

fn bayes_demo(cfg: &BayesDemoConfig, jobs: usize) -> Result<Outputs> {
    if cfg.seeds == 0 || cfg.rounds == 0 {
        return Err(Error::Config(
            "demo needs at least one seed and one round".into(),
        ));
    }
    cfg.params.validate()?;
    let pool = thread_pool(jobs)?;
    let runs: Vec<Result<_>> = pool.install(|| {
        (0..cfg.seeds)
            .into_par_iter()
            .map(|s| {
                bayesmix_retrain_demo(
                    &cfg.params,
                    &cfg.bayes,
                    &cfg.demo,
                    cfg.rounds,
                    RngStream::new(cfg.master_seed, s as u64),
                )
            })
            .collect()
    });
    let mut rounds = Table::new("demo_rounds", &["seed", "round", "accuracy"]);
    let mut summary = Table::new(
        "demo_summary",
        &["seed", "round0", "final", "improved", "halted"],
    );
    let mut improved = 0;
    for (s, run) in runs.into_iter().enumerate() {
        let run = run?;
        for (r, a) in run.accuracies.iter().enumerate() {
            rounds.push(vec![s.to_string(), r.to_string(), f(*a)]);
        }
        let first = run.accuracies[0];
        let last = *run.accuracies.last().unwrap();
        if last > first {
            improved += 1;
        }
        summary.push(vec![
            s.to_string(),
            f(first),
            f(last),
            (last > first).to_string(),
            run.halted.unwrap_or_default().replace('\t', " "),
        ]);
    }
    let summary = summary.with_meta("improved_seeds", format!("{improved}/{}", cfg.seeds));
    Ok(Outputs {
        tables: vec![
            ("demo.tsv".into(), rounds),
            ("demo_summary.tsv".into(), summary),
        ],
        ..Outputs::default()
    })
}

fn dataset(cfg: &DatasetConfig) -> Result<Outputs> {
    let stream = RngStream::new(cfg.master_seed, cfg.replication);
    let (kind, file) = match &cfg.data {
        DataSpec::Gmm { params } => {
            let d = sample_gmm_dataset(params, stream)?;
            (
                "gmm_dataset",
                DatasetFile {
                    x: d.x,
                    y_true: d.y_true,
                    y_noisy: d.y_noisy,
                    signal: d.mu,
                },
            )
        }
        DataSpec::Glm { params } => {
            let d = sample_glm_dataset(params, stream)?;
            (
                "glm_dataset",
                DatasetFile {
                    x: d.x,
                    y_true: d.y_true,
                    y_noisy: d.y_noisy,
                    signal: d.beta_true,
                },
            )
        }
    };
    Ok(Outputs {
        tables: vec![("dataset.tsv".into(), io::dataset_table(kind, &file, "{}"))],
        ..Outputs::default()
    })
}

/// A dataset file read back together with the command that produced it.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedDataset {
    Gmm(GmmParams, GmmDataset),
    Glm(GlmParams, GlmDataset),
}

pub fn load_dataset(path: &Path) -> Result<LoadedDataset> {
    let table = Table::read_file(path)?;
    let cfg: CommandConfig = serde_json::from_value(table.config()?)?;
    let file = io::dataset_from_table(&table)?;
    match cfg {
        CommandConfig::Dataset(DatasetConfig {
            data: DataSpec::Gmm { params },
            ..
        }) => Ok(LoadedDataset::Gmm(
            params,
            GmmDataset {
                x: file.x,
                y_true: file.y_true,
                y_noisy: file.y_noisy,
                mu: file.signal,
            },
        )),
        CommandConfig::Dataset(DatasetConfig {
            data: DataSpec::Glm { params },
            ..
        }) => Ok(LoadedDataset::Glm(
            params,
            GlmDataset {
                x: file.x,
                y_true: file.y_true,
                y_noisy: file.y_noisy,
                beta_true: file.signal,
            },
        )),
        _ => Err(Error::Parse {
            line: 0,
            msg: "file was not produced by the dataset command".into(),
        }),
    }
}

/// Writes every artifact plus a `config.json` sidecar into `dir`. Each table
/// embeds the config (and the master seed when there is one).
pub fn write_outputs(dir: &Path, cmd: &CommandConfig, outputs: &Outputs) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let compact = cmd.to_json();
    for (name, table) in &outputs.tables {
        let mut table = table.clone().with_meta("config", compact.clone());
        if let Some(seed) = cmd.seed() {
            table = table.with_meta("seed", seed.to_string());
        }
        table.write_file(&dir.join(name))?;
    }
    for (name, text) in &outputs.json {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cmd).unwrap() + "\n")
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_gmm() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::Gmm {
                params: GmmParams::new(1.5, 0.8, 0.4, 0.3, 200).unwrap(),
                schedule: ScheduleGmm::Optimal,
            },
            iterations: 3,
            replications: 3,
            master_seed: 11,
        }
    }

    #[test]
    fn config_json_round_trip() {
        let cmd = CommandConfig::Simulate(small_gmm());
        let back: CommandConfig = serde_json::from_str(&cmd.to_json()).unwrap();
        assert_eq!(back, cmd);
    }

    #[test]
    fn replications_do_not_depend_on_jobs() {
        let cfg = small_gmm();
        let a = run_replications(&cfg, 1).unwrap();
        let b = run_replications(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|r| r.completed(3)));
    }

    #[test]
    fn report_gap_is_recomputed() {
        let cfg = small_gmm();
        let reps = run_replications(&cfg, 1).unwrap();
        let pred = predicted_errors(&cfg.model, cfg.iterations).unwrap();
        let report = compare(&pred, &reps);
        assert_eq!(report.rows.len(), 3);
        for r in &report.rows {
            assert_eq!(r.gap, (r.predicted_error - r.empirical_mean).abs());
            assert_eq!(r.count, 3);
        }
    }

    #[test]
    fn validation() {
        let mut cfg = small_gmm();
        cfg.replications = 0;
        assert!(run_replications(&cfg, 1).is_err());
        let sweep = CrossoverConfig {
            gamma: 1.5,
            alpha: 2.0,
            pi_plus: 0.3,
            p_values: vec![],
            u_max: 50.0,
            grid: 100,
        };
        assert!(crossover_sweep(&sweep).is_err());
    }
}
