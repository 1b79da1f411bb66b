//! Monte Carlo rejection-rate studies.
//!
//! A study file is TOML:
//!
//! ```toml
//! seed = 1
//! runs = 200
//! bootstrap = 200
//! grid_m = 20
//! alphas = [0.1, 0.05]
//! statistics = ["l2", "ks"]
//! hypotheses = ["archimedeanity", "associativity"]
//! bandwidth = "auto"      # or a number in (0, 1/2)
//! parallelism = "auto"    # or a worker count
//!
//! [[scenario]]
//! label = "Clayton(tau=1/3)"   # optional, defaults to the model string
//! model = "clayton(tau=1/3)"
//! n = 200
//! ```
//!
//! Randomness flows master seed -> scenario (keyed by label, model and `n`)
//! -> repetition -> {data, test}. Adding or reordering scenarios leaves the
//! draws of the others untouched, and results do not depend on the number
//! of workers.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archtest::{analyze, Bandwidth, Hypothesis, TestConfig, Ties};
use crate::error::{Error, Result};
use crate::model_spec::parse_model;
use crate::models::CopulaModel;
use crate::process::Statistic;
use crate::rng::Stream;

pub const STUDY_SCHEMA: &str = "archcop.study-result/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub model: String,
    pub n: usize,
}

impl ScenarioSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.model.clone())
    }
}

fn default_runs() -> usize {
    200
}
fn default_bootstrap() -> usize {
    200
}
fn default_grid() -> usize {
    20
}
fn default_alphas() -> Vec<f64> {
    vec![0.1, 0.05]
}
fn default_statistics() -> Vec<Statistic> {
    vec![Statistic::L2, Statistic::Ks]
}
fn default_hypotheses() -> Vec<Hypothesis> {
    vec![Hypothesis::Archimedeanity, Hypothesis::Associativity]
}
fn default_auto() -> Setting {
    Setting::Text("auto".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<Statistic>,
    #[serde(default = "default_hypotheses")]
    pub hypotheses: Vec<Hypothesis>,
    #[serde(default = "default_grid")]
    pub grid_m: usize,
    #[serde(default = "default_auto")]
    pub bandwidth: Setting,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_auto")]
    pub parallelism: Setting,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(format!("study file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bandwidth(&self) -> Result<Bandwidth> {
        match &self.bandwidth {
            Setting::Number(h) => Ok(Bandwidth::Fixed(*h)),
            Setting::Text(t) if t == "auto" => Ok(Bandwidth::Auto),
            Setting::Text(t) => Err(Error::Config(format!("bandwidth must be a number or \"auto\", got {t:?}"))),
        }
    }

    /// Worker count; `None` means one per available core.
    pub fn workers(&self) -> Result<Option<usize>> {
        match &self.parallelism {
            Setting::Number(w) if *w >= 1.0 && w.fract() == 0.0 => Ok(Some(*w as usize)),
            Setting::Text(t) if t == "auto" => Ok(None),
            other => Err(Error::Config(format!("parallelism must be a positive integer or \"auto\", got {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("study has no scenarios".into()));
        }
        if self.alphas.is_empty() || self.statistics.is_empty() || self.hypotheses.is_empty() {
            return Err(Error::Config("alphas, statistics and hypotheses must be non-empty".into()));
        }
        self.bandwidth()?;
        self.workers()?;
        for (k, s) in self.scenarios.iter().enumerate() {
            parse_model(&s.model).map_err(|e| Error::Config(format!("scenario {} ({}): {e}", k + 1, s.model)))?;
            if s.n < 2 {
                return Err(Error::Config(format!("scenario {}: n must be at least 2", k + 1)));
            }
        }
        for &alpha in &self.alphas {
            let probe = TestConfig {
                alpha,
                bootstrap: self.bootstrap,
                grid_m: self.grid_m,
                bandwidth: self.bandwidth()?,
                ..TestConfig::default()
            };
            probe.validate()?;
        }
        Ok(())
    }

    /// Every requested (hypothesis, statistic, alpha) combination in table order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &hypothesis in &self.hypotheses {
            for &statistic in &self.statistics {
                for &alpha in &self.alphas {
                    out.push(CellKey { hypothesis, statistic, alpha });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub hypothesis: Hypothesis,
    pub statistic: Statistic,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(flatten)]
    pub key: CellKey,
    pub rejections: usize,
    pub runs: usize,
    pub rate: f64,
    pub se: f64,
}

/// One repetition of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub stream: u64,
    /// Decisions in the order of the scenario's cells; empty when the run failed.
    pub reject: Vec<bool>,
    pub t_l2: Option<f64>,
    pub t_ks: Option<f64>,
    pub a_n: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub label: String,
    pub model: String,
    pub n: usize,
    pub cells: Vec<Cell>,
    pub failures: usize,
    pub log: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyProvenance {
    pub seed: u64,
    pub runs: usize,
    pub bootstrap: usize,
    pub grid_m: usize,
    pub bandwidth: Bandwidth,
    pub alphas: Vec<f64>,
    pub statistics: Vec<Statistic>,
    pub hypotheses: Vec<Hypothesis>,
    pub version: String,
}

/// Deterministic study payload: identical bytes for identical configs, whatever the worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub schema: String,
    pub provenance: StudyProvenance,
    pub scenarios: Vec<ScenarioResult>,
}

/// A study result together with its (non-deterministic) timing.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub result: StudyResult,
    pub wall_time: Duration,
    pub workers: usize,
}

fn scenario_stream(master: Stream, s: &ScenarioSpec) -> Stream {
    master.child_label(&format!("{}|{}|{}", s.label(), s.model, s.n))
}

fn one_run(
    cfg: &StudyConfig,
    model: &CopulaModel,
    n: usize,
    cells: &[CellKey],
    bandwidth: Bandwidth,
    stream: Stream,
    run: usize,
) -> RunRecord {
    let attempt = || -> Result<(Vec<bool>, f64, f64, f64)> {
        let mut rng = stream.child_label("data").rng();
        let data = model.sample(n, &mut rng)?;
        let seed = stream.child_label("test").id();
        let analysis = analyze(&data, cfg.grid_m, bandwidth, cfg.bootstrap, seed, Ties::Error)?;
        let mut reject = Vec::with_capacity(cells.len());
        for c in cells {
            let tc = TestConfig {
                hypothesis: c.hypothesis,
                statistic: c.statistic,
                alpha: c.alpha,
                bootstrap: cfg.bootstrap,
                grid_m: cfg.grid_m,
                bandwidth,
                seed,
                ties: Ties::Error,
            };
            reject.push(analysis.report(&tc)?.reject);
        }
        Ok((reject, analysis.t_l2, analysis.t_ks, analysis.a_n))
    };
    match attempt() {
        Ok((reject, t_l2, t_ks, a_n)) => RunRecord {
            run,
            stream: stream.id(),
            reject,
            t_l2: Some(t_l2),
            t_ks: Some(t_ks),
            a_n: Some(a_n),
            error: None,
        },
        Err(e) => RunRecord { run, stream: stream.id(), reject: Vec::new(), t_l2: None, t_ks: None, a_n: None, error: Some(e.to_string()) },
    }
}

/// Rejection counts of each cell, recomputed from a run log.
pub fn aggregate(cells: &[CellKey], log: &[RunRecord]) -> Vec<Cell> {
    let ok: Vec<&RunRecord> = log.iter().filter(|r| r.error.is_none()).collect();
    cells
        .iter()
        .enumerate()
        .map(|(k, key)| {
            let rejections = ok.iter().filter(|r| r.reject[k]).count();
            let runs = ok.len();
            let rate = if runs == 0 { 0.0 } else { rejections as f64 / runs as f64 };
            let se = if runs == 0 { 0.0 } else { (rate * (1.0 - rate) / runs as f64).sqrt() };
            Cell { key: *key, rejections, runs, rate, se }
        })
        .collect()
}

/// Runs a study on `workers` threads (`None`: the config's parallelism setting).
pub fn run_study(cfg: &StudyConfig, workers: Option<usize>) -> Result<StudyOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let bandwidth = cfg.bandwidth()?;
    let cells = cfg.cells();
    let master = Stream::from_seed(cfg.seed);
    let models: Vec<CopulaModel> = cfg.scenarios.iter().map(|s| parse_model(&s.model)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.scenarios.len()).flat_map(|s| (0..cfg.runs).map(move |r| (s, r))).collect();

    let workers = match workers.or(cfg.workers()?) {
        Some(w) => w.max(1),
        None => std::thread::available_parallelism().map(|w| w.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| {
                let spec = &cfg.scenarios[s];
                let stream = scenario_stream(master, spec).child(r as u64);
                one_run(cfg, &models[s], spec.n, &cells, bandwidth, stream, r)
            })
            .collect()
    });

    let mut records = records.into_iter();
    let scenarios = cfg
        .scenarios
        .iter()
        .zip(&models)
        .map(|(spec, model)| {
            let log: Vec<RunRecord> = records.by_ref().take(cfg.runs).collect();
            ScenarioResult {
                label: spec.label(),
                model: model.to_string(),
                n: spec.n,
                cells: aggregate(&cells, &log),
                failures: log.iter().filter(|r| r.error.is_some()).count(),
                log,
            }
        })
        .collect();

    let result = StudyResult {
        schema: STUDY_SCHEMA.into(),
        provenance: StudyProvenance {
            seed: cfg.seed,
            runs: cfg.runs,
            bootstrap: cfg.bootstrap,
            grid_m: cfg.grid_m,
            bandwidth,
            alphas: cfg.alphas.clone(),
            statistics: cfg.statistics.clone(),
            hypotheses: cfg.hypotheses.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        scenarios,
    };
    Ok(StudyOutcome { result, wall_time: started.elapsed(), workers })
}

impl StudyResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study result serialises")
    }

    /// Table with one row per scenario and one column per (statistic, alpha);
    /// cells read `archimedeanity (associativity)` when both hypotheses ran.
    pub fn table_csv(&self) -> String {
        let p = &self.provenance;
        let mut out = String::from("scenario,n");
        for s in &p.statistics {
            for a in &p.alphas {
                out.push_str(&format!(",{}@{}", s.name(), a));
            }
        }
        out.push('\n');
        for sc in &self.scenarios {
            out.push_str(&format!("{},{}", csv_field(&sc.label), sc.n));
            for &s in &p.statistics {
                for &a in &p.alphas {
                    let rate = |h: Hypothesis| {
                        sc.cells
                            .iter()
                            .find(|c| c.key.hypothesis == h && c.key.statistic == s && c.key.alpha == a)
                            .map(|c| c.rate)
                    };
                    let text = match (rate(Hypothesis::Archimedeanity), rate(Hypothesis::Associativity)) {
                        (Some(x), Some(y)) => format!("{x:.3} ({y:.3})"),
                        (Some(x), None) => format!("{x:.3}"),
                        (None, Some(y)) => format!("({y:.3})"),
                        (None, None) => String::new(),
                    };
                    out.push(',');
                    out.push_str(&text);
                }
            }
            out.push('\n');
        }
        out
    }

    /// One row per cell.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("scenario,model,n,hypothesis,statistic,alpha,rejections,runs,rate,se\n");
        for sc in &self.scenarios {
            for c in &sc.cells {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    csv_field(&sc.label),
                    csv_field(&sc.model),
                    sc.n,
                    c.key.hypothesis.name(),
                    c.key.statistic.name(),
                    c.key.alpha,
                    c.rejections,
                    c.runs,
                    c.rate,
                    c.se
                ));
            }
        }
        out
    }

    pub fn cell(&self, scenario: usize, hypothesis: Hypothesis, statistic: Statistic, alpha: f64) -> Option<&Cell> {
        self.scenarios.get(scenario)?.cells.iter().find(|c| {
            c.key.hypothesis == hypothesis && c.key.statistic == statistic && c.key.alpha == alpha
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
