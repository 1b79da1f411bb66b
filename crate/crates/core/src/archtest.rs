//! Decision procedures for associativity and Archimedeanity.
//!
//! Both tests compare a statistic with quantiles of the multiplier-bootstrap
//! replicates of `T`. The Archimedeanity test adds the diagonal penalty
//! `k_n phi(A_n)` with `phi(x) = (4x)^2` and `k_n = q_0.05 n^(1/4)`, where
//! `q_0.05` is the 5% quantile of the same bootstrap sample. The bootstrap
//! sample itself is never penalised.
//!
//! Level control for the Archimedeanity test is only claimed for Archimedean
//! nulls whose lower and upper tail dependence coefficients are both below 1;
//! nothing in the data can verify that condition.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_both, BootstrapPlan, BootstrapSample};
use crate::empirical::{check_bandwidth, EmpiricalCopula, Sample, TiePolicy};
use crate::error::{Error, Result};
use crate::process::{hn_field, statistic_ks, statistic_l2, Grid3, Statistic};
use crate::rng::Stream;

/// Version tag written into every JSON report.
pub const REPORT_SCHEMA: &str = "archcop.test-report/1";

/// Largest bandwidth chosen automatically; `n^(-1/4)` exceeds it only for `n <= 17`.
pub const MAX_AUTO_BANDWIDTH: f64 = 0.49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Associativity,
    Archimedeanity,
}

impl Hypothesis {
    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::Associativity => "associativity",
            Hypothesis::Archimedeanity => "archimedeanity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// `h = n^(-1/4)`.
    Auto,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, n: usize) -> Result<f64> {
        let h = match self {
            Bandwidth::Auto => (n as f64).powf(-0.25).min(MAX_AUTO_BANDWIDTH),
            Bandwidth::Fixed(h) => h,
        };
        check_bandwidth(h)?;
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    Error,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub hypothesis: Hypothesis,
    pub statistic: Statistic,
    pub alpha: f64,
    pub bootstrap: usize,
    pub grid_m: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
    pub ties: Ties,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            hypothesis: Hypothesis::Archimedeanity,
            statistic: Statistic::L2,
            alpha: 0.05,
            bootstrap: 200,
            grid_m: 20,
            bandwidth: Bandwidth::Auto,
            seed: 0,
            ties: Ties::Random,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.bootstrap == 0 {
            return Err(Error::Config("number of bootstrap replications must be positive".into()));
        }
        Grid3::new(self.grid_m)?;
        if let Bandwidth::Fixed(h) = self.bandwidth {
            check_bandwidth(h)?;
        }
        Ok(())
    }

    pub fn tie_policy(&self) -> TiePolicy {
        match self.ties {
            Ties::Error => TiePolicy::Error,
            Ties::Random => TiePolicy::RandomBreak { seed: self.seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Points `i/n` (including 0 and 1) with `C_n(i/n, i/n) = i/n`.
    pub fixed_points: Vec<f64>,
    pub bandwidth: f64,
    pub bootstrap_redraws: u32,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: TestConfig,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub hypothesis: Hypothesis,
    pub statistic: Statistic,
    pub n: usize,
    pub alpha: f64,
    pub t_value: f64,
    pub a_n: f64,
    pub k_n: f64,
    pub penalty: f64,
    pub s_value: f64,
    pub q_alpha: f64,
    pub q05: f64,
    pub p_value: f64,
    pub reject: bool,
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
}

impl TestReport {
    /// The statistic the decision is based on.
    pub fn tested_value(&self) -> f64 {
        match self.hypothesis {
            Hypothesis::Associativity => self.t_value,
            Hypothesis::Archimedeanity => self.s_value,
        }
    }
}

/// `max{(i/n)(1 - i/n) : C_n(i/n, i/n) = i/n}`; the endpoints always hit and contribute 0.
pub fn an_statistic(ec: &EmpiricalCopula) -> f64 {
    let n = ec.n();
    // maximise i(n - i) over integer hits; the smallest maximiser fixes the float value
    let mut best = 0;
    for i in 0..=n {
        if ec.is_diagonal_fixed_point(i) && i * (n - i) > best * (n - best) {
            best = i;
        }
    }
    let q = best as f64 / n as f64;
    q * (1.0 - q)
}

/// `k_n phi(A_n)` with `k_n = q05 n^(1/4)` and `phi(x) = (4x)^2`.
pub fn penalty(a_n: f64, q05: f64, n: usize) -> f64 {
    q05 * (n as f64).powf(0.25) * (4.0 * a_n).powi(2)
}

/// Data-dependent quantities shared by every (hypothesis, statistic, level)
/// decision on one data set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub n: usize,
    pub t_l2: f64,
    pub t_ks: f64,
    pub a_n: f64,
    pub fixed_points: Vec<f64>,
    pub bandwidth: f64,
    pub boot_l2: BootstrapSample,
    pub boot_ks: BootstrapSample,
    pub warnings: Vec<String>,
}

/// Runs ranks, the observed statistics and one bootstrap pass.
pub fn analyze(sample: &Sample, grid_m: usize, bandwidth: Bandwidth, b: usize, seed: u64, ties: Ties) -> Result<Analysis> {
    if b == 0 {
        return Err(Error::Config("number of bootstrap replications must be positive".into()));
    }
    let policy = match ties {
        Ties::Error => TiePolicy::Error,
        Ties::Random => TiePolicy::RandomBreak { seed },
    };
    let ec = EmpiricalCopula::from_sample(sample, policy)?;
    let n = ec.n();
    let grid = Grid3::new(grid_m)?;
    let h = bandwidth.resolve(n)?;
    let mut warnings = Vec::new();
    if n < 20 {
        warnings.push(format!("sample size {n} is below the supported minimum of 20"));
    } else if n < 50 {
        warnings.push(format!("sample size {n} is below 50; the bootstrap approximation may be poor"));
    }
    if b < 50 {
        warnings.push(format!("only {b} bootstrap replications; at least 50 are recommended"));
    }

    let field = hn_field(&ec, &grid);
    let plan = BootstrapPlan::new(&ec, &grid, h)?;
    let [boot_l2, boot_ks] = bootstrap_both(&plan, b, Stream::from_seed(seed).child_label("bootstrap"))?;
    let fixed_points = (0..=n)
        .filter(|&i| ec.is_diagonal_fixed_point(i))
        .map(|i| i as f64 / n as f64)
        .collect();
    Ok(Analysis {
        n,
        t_l2: statistic_l2(&field),
        t_ks: statistic_ks(&field),
        a_n: an_statistic(&ec),
        fixed_points,
        bandwidth: h,
        boot_l2,
        boot_ks,
        warnings,
    })
}

impl Analysis {
    pub fn bootstrap(&self, statistic: Statistic) -> &BootstrapSample {
        match statistic {
            Statistic::L2 => &self.boot_l2,
            Statistic::Ks => &self.boot_ks,
        }
    }

    pub fn observed(&self, statistic: Statistic) -> f64 {
        match statistic {
            Statistic::L2 => self.t_l2,
            Statistic::Ks => self.t_ks,
        }
    }

    /// Decision and report for one configuration.
    pub fn report(&self, config: &TestConfig) -> Result<TestReport> {
        config.validate()?;
        let boot = self.bootstrap(config.statistic);
        let t = self.observed(config.statistic);
        let q_alpha = boot.quantile(1.0 - config.alpha)?;
        let q05 = boot.quantile(0.05)?;
        let k_n = q05 * (self.n as f64).powf(0.25);
        let pen = penalty(self.a_n, q05, self.n);
        let s = t + pen;
        let tested = match config.hypothesis {
            Hypothesis::Associativity => t,
            Hypothesis::Archimedeanity => s,
        };
        Ok(TestReport {
            schema: REPORT_SCHEMA.to_string(),
            hypothesis: config.hypothesis,
            statistic: config.statistic,
            n: self.n,
            alpha: config.alpha,
            t_value: t,
            a_n: self.a_n,
            k_n,
            penalty: pen,
            s_value: s,
            q_alpha,
            q05,
            p_value: boot.p_value(tested),
            reject: tested > q_alpha,
            diagnostics: Diagnostics {
                fixed_points: self.fixed_points.clone(),
                bandwidth: self.bandwidth,
                bootstrap_redraws: boot.redraws,
                warnings: self.warnings.clone(),
            },
            provenance: Provenance {
                config: config.clone(),
                seed: config.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }
}

/// Full test pipeline on raw data.
pub fn run_test(sample: &Sample, config: &TestConfig) -> Result<TestReport> {
    config.validate()?;
    let analysis = analyze(sample, config.grid_m, config.bandwidth, config.bootstrap, config.seed, config.ties)?;
    analysis.report(config)
}
