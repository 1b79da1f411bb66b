//! Multiplier bootstrap for the associativity process.
//!
//! Each replication draws multipliers `xi_i` uniformly from `{0, 2}` and forms
//! `alpha(u) = sqrt(n) (C_n^xi(u) - C_n(u))`, where `C_n^xi` reweights every
//! observation by `xi_i / mean(xi)`. The bootstrap process `H_n^xi` combines
//! `alpha` with the finite-difference derivative estimates of the data; those
//! estimates do not depend on the multipliers and are computed once per data
//! set in a [`BootstrapPlan`].
//!
//! With `G(u) = alpha(u) - D1(u) alpha(u1, 1) - D2(u) alpha(1, u2)` the process is
//! `G(x, C_n(y,z)) - G(C_n(x,y), z) + D2(x, C_n(y,z)) G(y,z) - D1(C_n(x,y), z) G(x,y)`,
//! the derivative of `C -> C(x, C(y,z)) - C(C(x,y), z)` applied to `G`.

use rand::Rng;
use rayon::prelude::*;

use crate::empirical::{check_bandwidth, EmpiricalCopula};
use crate::error::{Error, Result};
use crate::process::{statistic_ks, statistic_l2, Grid3, ProcessField, Statistic};
use crate::rng::Stream;

const MAX_REDRAWS: u32 = 64;

/// One vector of multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierDraw {
    pub xi: Vec<f64>,
    pub xibar: f64,
    /// Number of degenerate (all-zero) draws discarded before this one.
    pub redraws: u32,
}

impl MultiplierDraw {
    /// Wraps explicit multiplier values.
    pub fn from_values(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::Config("multiplier vector is empty".into()));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("multipliers must be finite".into()));
        }
        let xibar = xi.iter().sum::<f64>() / xi.len() as f64;
        if xibar == 0.0 {
            return Err(Error::Config("multipliers have zero mean".into()));
        }
        Ok(MultiplierDraw { xi, xibar, redraws: 0 })
    }
}

/// Draws `n` i.i.d. multipliers from `U({0, 2})`. An all-zero draw is
/// discarded and redrawn from the next child stream.
pub fn draw_multipliers(n: usize, stream: Stream) -> Result<MultiplierDraw> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 multipliers, got {n}")));
    }
    for attempt in 0..=MAX_REDRAWS {
        let mut rng = stream.child(u64::from(attempt)).rng();
        let xi: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 2.0 } else { 0.0 }).collect();
        let sum: f64 = xi.iter().sum();
        if sum > 0.0 {
            return Ok(MultiplierDraw { xibar: sum / n as f64, xi, redraws: attempt });
        }
    }
    Err(Error::Internal(format!("{MAX_REDRAWS} consecutive degenerate multiplier draws")))
}

/// Weighted cumulative table for `C_n^xi`, giving `alpha` in constant time.
#[derive(Debug, Clone)]
pub struct MultiplierProcess<'a> {
    ec: &'a EmpiricalCopula,
    wcum: Vec<f64>,
    total: f64,
    sqrt_n: f64,
}

impl<'a> MultiplierProcess<'a> {
    pub fn new(ec: &'a EmpiricalCopula, draw: &MultiplierDraw) -> Result<Self> {
        let n = ec.n();
        if draw.xi.len() != n {
            return Err(Error::Config(format!(
                "multiplier draw has {} values for {} observations",
                draw.xi.len(),
                n
            )));
        }
        let stride = n + 1;
        let mut wcum = vec![0.0; stride * stride];
        let r = ec.ranks();
        for ((&a, &b), &w) in r.r1.iter().zip(&r.r2).zip(&draw.xi) {
            wcum[a as usize * stride + b as usize] += w;
        }
        for i in 1..=n {
            let mut row = 0.0;
            for j in 1..=n {
                row += wcum[i * stride + j];
                wcum[i * stride + j] = row + wcum[(i - 1) * stride + j];
            }
        }
        // C_n^xi = n^{-1} sum (xi_i / xibar) 1{...} = (sum over the set of xi_i) / (sum of all xi_i)
        let total = wcum[n * stride + n];
        Ok(MultiplierProcess { ec, wcum, total, sqrt_n: (n as f64).sqrt() })
    }

    /// `alpha` at lattice indices `(i, j)`.
    #[inline]
    pub fn alpha_at(&self, i: usize, j: usize) -> f64 {
        let n = self.ec.n();
        let weighted = self.wcum[i * (n + 1) + j] / self.total;
        self.sqrt_n * (weighted - self.ec.count(i, j) as f64 / n as f64)
    }

    #[inline]
    pub fn alpha(&self, u1: f64, u2: f64) -> f64 {
        self.alpha_at(self.ec.index(u1), self.ec.index(u2))
    }
}

/// `alpha_n^xi(u)` for a single point.
pub fn alpha_xi(ec: &EmpiricalCopula, draw: &MultiplierDraw, u1: f64, u2: f64) -> Result<f64> {
    Ok(MultiplierProcess::new(ec, draw)?.alpha(u1, u2))
}

/// Multiplier-independent ingredients of `H_n^xi` at one node: lattice
/// indices of every `alpha` argument and the eight derivative estimates.
#[derive(Debug, Clone, Copy)]
struct NodePlan {
    ix: usize,
    iy: usize,
    iz: usize,
    /// lattice index of `C_n(y, z)`
    iyz: usize,
    /// lattice index of `C_n(x, y)`
    ixy: usize,
    d1_x_cyz: f64,
    d2_x_cyz: f64,
    d1_cxy_z: f64,
    d2_cxy_z: f64,
    d1_yz: f64,
    d2_yz: f64,
    d1_xy: f64,
    d2_xy: f64,
}

/// Everything about `H_n^xi` that is fixed for a data set.
#[derive(Debug, Clone)]
pub struct BootstrapPlan<'a> {
    ec: &'a EmpiricalCopula,
    grid: Grid3,
    bandwidth: f64,
    nodes: Vec<NodePlan>,
}

impl<'a> BootstrapPlan<'a> {
    pub fn new(ec: &'a EmpiricalCopula, grid: &Grid3, h: f64) -> Result<Self> {
        check_bandwidth(h)?;
        let n = ec.n();
        let nf = n as f64;
        let d = |p, u1, u2| ec.deriv_unclamped(p, u1, u2, h).clamp(0.0, 1.0);
        let nodes = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let [x, y, z] = grid.node(k);
                let cyz = ec.eval(y, z);
                let cxy = ec.eval(x, y);
                NodePlan {
                    ix: ec.index(x),
                    iy: ec.index(y),
                    iz: ec.index(z),
                    // C_n takes values k/n, whose lattice index is k
                    iyz: (cyz * nf).round() as usize,
                    ixy: (cxy * nf).round() as usize,
                    d1_x_cyz: d(1, x, cyz),
                    d2_x_cyz: d(2, x, cyz),
                    d1_cxy_z: d(1, cxy, z),
                    d2_cxy_z: d(2, cxy, z),
                    d1_yz: d(1, y, z),
                    d2_yz: d(2, y, z),
                    d1_xy: d(1, x, y),
                    d2_xy: d(2, x, y),
                }
            })
            .collect();
        Ok(BootstrapPlan { ec, grid: *grid, bandwidth: h, nodes })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// `H_n^xi` for one multiplier draw.
    pub fn field(&self, draw: &MultiplierDraw) -> Result<ProcessField> {
        let mp = MultiplierProcess::new(self.ec, draw)?;
        let n = self.ec.n();
        let a = |i, j| mp.alpha_at(i, j);
        let values = self
            .nodes
            .iter()
            .map(|p| {
                let first = a(p.ix, p.iyz) - p.d1_x_cyz * a(p.ix, n) - p.d2_x_cyz * a(n, p.iyz);
                let second = a(p.ixy, p.iz) - p.d1_cxy_z * a(p.ixy, n) - p.d2_cxy_z * a(n, p.iz);
                let third = p.d2_x_cyz * (a(p.iy, p.iz) - p.d1_yz * a(p.iy, n) - p.d2_yz * a(n, p.iz));
                let fourth = p.d1_cxy_z * (a(p.ix, p.iy) - p.d1_xy * a(p.ix, n) - p.d2_xy * a(n, p.iy));
                first - second + third - fourth
            })
            .collect();
        Ok(ProcessField { grid: self.grid, values })
    }
}

/// `H_n^xi` on `grid` for the multipliers in `draw`.
pub fn hn_xi_field(ec: &EmpiricalCopula, draw: &MultiplierDraw, grid: &Grid3, h: f64) -> Result<ProcessField> {
    BootstrapPlan::new(ec, grid, h)?.field(draw)
}

/// Bootstrap replicates of one statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSample {
    pub statistic: Statistic,
    pub stats: Vec<f64>,
    /// Stream id used by each replication.
    pub stream_ids: Vec<u64>,
    /// Total degenerate multiplier draws discarded.
    pub redraws: u32,
}

impl BootstrapSample {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// The `ceil(p B)`-th smallest replicate.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        quantile(&self.stats, p)
    }

    /// `(1 + #{b : stat_b >= observed}) / (B + 1)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let exceed = self.stats.iter().filter(|&&s| s >= observed).count();
        (1 + exceed) as f64 / (self.stats.len() + 1) as f64
    }
}

/// Order-statistic quantile: the smallest `k`-th order statistic with `k / B >= p`.
pub fn quantile(stats: &[f64], p: f64) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::Config("quantile of an empty bootstrap sample".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("quantile level must lie in (0, 1), got {p}")));
    }
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = crate::empirical::lattice_index(p, sorted.len()).max(1);
    Ok(sorted[k - 1])
}

/// Replicates of both statistics computed from the same multiplier draws.
pub fn bootstrap_both(plan: &BootstrapPlan<'_>, b: usize, stream: Stream) -> Result<[BootstrapSample; 2]> {
    if b == 0 {
        return Err(Error::Config("number of bootstrap replications must be positive".into()));
    }
    let n = plan.ec.n();
    let reps: Vec<(f64, f64, u64, u32)> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let child = stream.child(rep as u64);
            let draw = draw_multipliers(n, child)?;
            let field = plan.field(&draw)?;
            Ok((statistic_l2(&field), statistic_ks(&field), child.id(), draw.redraws))
        })
        .collect::<Result<_>>()?;
    let ids: Vec<u64> = reps.iter().map(|r| r.2).collect();
    let redraws = reps.iter().map(|r| r.3).sum();
    Ok([
        BootstrapSample {
            statistic: Statistic::L2,
            stats: reps.iter().map(|r| r.0).collect(),
            stream_ids: ids.clone(),
            redraws,
        },
        BootstrapSample { statistic: Statistic::Ks, stats: reps.iter().map(|r| r.1).collect(), stream_ids: ids, redraws },
    ])
}

/// `B` bootstrap replicates of `statistic`; replication `b` uses child stream `b` of `stream`.
pub fn bootstrap_statistics(
    ec: &EmpiricalCopula,
    grid: &Grid3,
    h: f64,
    b: usize,
    statistic: Statistic,
    stream: Stream,
) -> Result<BootstrapSample> {
    let plan = BootstrapPlan::new(ec, grid, h)?;
    let [l2, ks] = bootstrap_both(&plan, b, stream)?;
    Ok(match statistic {
        Statistic::L2 => l2,
        Statistic::Ks => ks,
    })
}

/// Replicates for caller-supplied multiplier draws.
pub fn bootstrap_from_draws(
    ec: &EmpiricalCopula,
    grid: &Grid3,
    h: f64,
    draws: &[MultiplierDraw],
    statistic: Statistic,
) -> Result<BootstrapSample> {
    if draws.is_empty() {
        return Err(Error::Config("number of bootstrap replications must be positive".into()));
    }
    let plan = BootstrapPlan::new(ec, grid, h)?;
    let stats = draws
        .par_iter()
        .map(|d| Ok(statistic.of(&plan.field(d)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapSample {
        statistic,
        stream_ids: vec![0; stats.len()],
        redraws: draws.iter().map(|d| d.redraws).sum(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::{RankMatrix, TiePolicy};
    use crate::models::CopulaModel;

    fn hand3() -> EmpiricalCopula {
        EmpiricalCopula::new(&RankMatrix::from_ranks(vec![1, 2, 3], vec![1, 3, 2]).unwrap())
    }

    #[test]
    fn forced_draw_mean() {
        let d = MultiplierDraw::from_values(vec![2.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(d.xibar, 1.5);
        assert!(MultiplierDraw::from_values(vec![0.0; 4]).is_err());
    }

    #[test]
    fn degenerate_draw_is_redrawn() {
        // n = 2 gives an all-zero draw with probability 1/4; find a stream that hits it
        let root = Stream::from_seed(0);
        let mut found = false;
        for s in 0..200u64 {
            let st = root.child(s);
            let mut rng = st.child(0).rng();
            let first_zero = (0..2).all(|_| !rng.random::<bool>());
            let d = draw_multipliers(2, st).unwrap();
            if first_zero {
                assert!(d.redraws >= 1);
                assert!(d.xibar > 0.0);
                found = true;
            } else {
                assert_eq!(d.redraws, 0);
            }
        }
        assert!(found);
    }

    #[test]
    fn multiplier_law() {
        let n = 10_000;
        let d = draw_multipliers(n, Stream::from_seed(1)).unwrap();
        assert!(d.xi.iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = d.xibar;
        let var = d.xi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 1.0).abs() <= 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() <= 0.05);
    }

    #[test]
    fn equal_multipliers_give_zero_alpha() {
        let ec = hand3();
        let d = MultiplierDraw::from_values(vec![2.0; 3]).unwrap();
        let mp = MultiplierProcess::new(&ec, &d).unwrap();
        for i in 0..=3 {
            for j in 0..=3 {
                assert_eq!(mp.alpha_at(i, j), 0.0);
            }
        }
    }

    #[test]
    fn hand_alpha() {
        let ec = hand3();
        let d = MultiplierDraw::from_values(vec![2.0, 0.0, 2.0]).unwrap();
        // only observation 1 (ranks (1,1)) lies in [0,2/3]^2; its weight is 2 / (4/3) = 3/2
        let c_xi = (1.0 / 3.0) * 1.5;
        let expect = 3f64.sqrt() * (c_xi - 1.0 / 3.0);
        let got = alpha_xi(&ec, &d, 2.0 / 3.0, 2.0 / 3.0).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert_eq!(alpha_xi(&ec, &d, 0.0, 0.4).unwrap(), 0.0);
        assert_eq!(alpha_xi(&ec, &d, 0.4, 0.0).unwrap(), 0.0);
        assert_eq!(alpha_xi(&ec, &d, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn equal_multipliers_give_zero_field() {
        let mut rng = Stream::from_seed(2).rng();
        let data = CopulaModel::clayton(1.0).unwrap().sample(30, &mut rng).unwrap();
        let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
        let d = MultiplierDraw::from_values(vec![1.0; 30]).unwrap();
        let f = hn_xi_field(&ec, &d, &Grid3::new(5).unwrap(), 0.3).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        let bs = bootstrap_from_draws(&ec, &Grid3::new(5).unwrap(), 0.3, &[d], Statistic::L2).unwrap();
        assert_eq!(bs.stats, vec![0.0]);
    }

    #[test]
    fn comonotone_field_bounded_by_alpha() {
        let n = 40;
        let r: Vec<u32> = (1..=n as u32).collect();
        let ec = EmpiricalCopula::new(&RankMatrix::from_ranks(r.clone(), r).unwrap());
        let d = draw_multipliers(n, Stream::from_seed(8)).unwrap();
        let mp = MultiplierProcess::new(&ec, &d).unwrap();
        let max_alpha = (0..=n)
            .flat_map(|i| (0..=n).map(move |j| (i, j)))
            .map(|(i, j)| mp.alpha_at(i, j).abs())
            .fold(0.0, f64::max);
        let f = hn_xi_field(&ec, &d, &Grid3::new(6).unwrap(), 0.2).unwrap();
        for v in f.values {
            assert!(v.abs() <= 6.0 * max_alpha + 1e-12);
        }
    }

    #[test]
    fn linear_in_multipliers() {
        // alpha is linear in the normalised weights xi_i / xibar; so is H_n^xi
        let mut rng = Stream::from_seed(9).rng();
        let n = 25;
        let data = CopulaModel::gumbel(2.0).unwrap().sample(n, &mut rng).unwrap();
        let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
        let grid = Grid3::new(3).unwrap();
        let w1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
        let w2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
        let norm = |w: &Vec<f64>| {
            let m = w.iter().sum::<f64>() / n as f64;
            w.iter().map(|v| v / m).collect::<Vec<f64>>()
        };
        let (a, b) = (norm(&w1), norm(&w2));
        let (s, t) = (0.3, 0.7);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + t * y).collect();
        let f = |w: Vec<f64>| hn_xi_field(&ec, &MultiplierDraw::from_values(w).unwrap(), &grid, 0.25).unwrap();
        let (fa, fb, fm) = (f(a), f(b), f(mix));
        for k in 0..grid.len() {
            assert!((fm.values[k] - (s * fa.values[k] + t * fb.values[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn quantile_order_statistics() {
        assert_eq!(quantile(&[4.0, 2.0, 3.0, 1.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[7.0], 0.01).unwrap(), 7.0);
        assert_eq!(quantile(&[7.0], 0.99).unwrap(), 7.0);
        let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&hundred, 0.95).unwrap(), 95.0);
        assert_eq!(quantile(&hundred, 1.0 - 0.05).unwrap(), 95.0);
        let two_hundred: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(quantile(&two_hundred, 0.05).unwrap(), 10.0);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn p_value_counts_exceedances() {
        let bs = BootstrapSample { statistic: Statistic::L2, stats: vec![1.0, 2.0, 3.0, 4.0], stream_ids: vec![0; 4], redraws: 0 };
        assert_eq!(bs.p_value(2.5), 3.0 / 5.0);
        assert_eq!(bs.p_value(10.0), 1.0 / 5.0);
        assert_eq!(bs.p_value(0.0), 1.0);
    }

    #[test]
    fn deterministic_replicates() {
        let mut rng = Stream::from_seed(4).rng();
        let data = CopulaModel::clayton(1.0).unwrap().sample(50, &mut rng).unwrap();
        let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
        let g = Grid3::new(5).unwrap();
        let a = bootstrap_statistics(&ec, &g, 0.3, 5, Statistic::Ks, Stream::from_seed(77)).unwrap();
        let b = bootstrap_statistics(&ec, &g, 0.3, 5, Statistic::Ks, Stream::from_seed(77)).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| bootstrap_statistics(&ec, &g, 0.3, 5, Statistic::Ks, Stream::from_seed(77)).unwrap());
        assert_eq!(a, c);
        assert!(bootstrap_statistics(&ec, &g, 0.3, 0, Statistic::Ks, Stream::from_seed(77)).is_err());
    }
}
