//! The associativity process `H_n(x, y, z) = sqrt(n) (C_n(x, C_n(y, z)) - C_n(C_n(x, y), z))`
//! on a midpoint lattice of the unit cube, and its Cramér–von Mises and
//! Kolmogorov–Smirnov reductions.
//!
//! Nodes are stored with `z` varying fastest. Field values are computed in
//! parallel but every reduction runs sequentially in node order, so results
//! never depend on the thread schedule.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::EmpiricalCopula;
use crate::error::{Error, Result};

/// Which functional of the process is used as test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    L2,
    Ks,
}

impl Statistic {
    pub fn of(self, field: &ProcessField) -> f64 {
        match self {
            Statistic::L2 => statistic_l2(field),
            Statistic::Ks => statistic_ks(field),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::L2 => "l2",
            Statistic::Ks => "ks",
        }
    }
}

/// Midpoint lattice `{(i + 1/2) / m}^3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid3 {
    m: usize,
}

impl Grid3 {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points per axis, got {m}")));
        }
        Ok(Grid3 { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m * self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.m as f64
    }

    /// Coordinates of node number `k`.
    #[inline]
    pub fn node(&self, k: usize) -> [f64; 3] {
        let m = self.m;
        [self.coord(k / (m * m)), self.coord((k / m) % m), self.coord(k % m)]
    }

    pub fn nodes(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }
}

/// Values of a process at every node of a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessField {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl ProcessField {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Internal(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Internal("field contains non-finite values".into()));
        }
        Ok(ProcessField { grid, values })
    }

    /// Writes `x,y,z,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,value")?;
        for (k, v) in self.values.iter().enumerate() {
            let [x, y, z] = self.grid.node(k);
            writeln!(out, "{x},{y},{z},{v}")?;
        }
        Ok(())
    }
}

/// Evaluates `H_n` at every grid node.
pub fn hn_field(ec: &EmpiricalCopula, grid: &Grid3) -> ProcessField {
    let sqrt_n = (ec.n() as f64).sqrt();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let [x, y, z] = grid.node(k);
            sqrt_n * (ec.eval(x, ec.eval(y, z)) - ec.eval(ec.eval(x, y), z))
        })
        .collect();
    ProcessField { grid: *grid, values }
}

/// Midpoint-rule approximation of the integral of the squared field.
pub fn statistic_l2(field: &ProcessField) -> f64 {
    let sum: f64 = field.values.iter().map(|v| v * v).sum();
    sum / field.values.len() as f64
}

/// Maximum absolute field value over the grid.
pub fn statistic_ks(field: &ProcessField) -> f64 {
    field.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
