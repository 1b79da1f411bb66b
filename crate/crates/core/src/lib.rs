//! Nonparametric tests for associativity and Archimedeanity of the copula of
//! bivariate i.i.d. data.
//!
//! The pipeline is: ranks -> [`empirical::EmpiricalCopula`] -> associativity
//! process on a cube grid ([`process`]) -> multiplier bootstrap
//! ([`bootstrap`]) -> decision ([`archtest`]). [`models`] provides the copula
//! families used for simulation and [`study`] runs rejection-rate studies.

pub mod archtest;
pub mod bootstrap;
pub mod empirical;
pub mod error;
pub mod model_spec;
pub mod models;
pub mod process;
pub mod rng;
pub mod study;

pub use archtest::{an_statistic, penalty, run_test, Bandwidth, Hypothesis, TestConfig, TestReport, Ties};
pub use empirical::{EmpiricalCopula, RankMatrix, Sample, TiePolicy};
pub use error::{Error, Result};
pub use model_spec::parse_model;
pub use models::CopulaModel;
pub use process::{Grid3, ProcessField, Statistic};
pub use rng::Stream;
