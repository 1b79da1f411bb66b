//! Ranks, the empirical copula and its finite-difference partial derivatives.
//!
//! `C_n(u) = F_n(F_n1^-(u1), F_n2^-(u2))` is realised by a cumulative count
//! table over the rank lattice: `cum[i][j] = #{k : R_k1 <= i, R_k2 <= j}`.
//! The generalised inverse maps `u` to the smallest lattice index `j` with
//! `j / n >= u`, so `C_n(u) = cum[j1][j2] / n` is a constant-time lookup.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Bivariate observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    rows: Vec<[f64; 2]>,
}

impl Sample {
    pub fn new(rows: Vec<[f64; 2]>) -> Result<Self> {
        for (k, r) in rows.iter().enumerate() {
            if !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Data(format!("row {} contains a non-finite value", k + 1)));
            }
        }
        Ok(Sample { rows })
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<[f64; 2]>) -> Self {
        Sample { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn column(&self, p: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[p])
    }

    /// Sample with its two columns exchanged.
    pub fn swapped(&self) -> Sample {
        Sample { rows: self.rows.iter().map(|r| [r[1], r[0]]).collect() }
    }
}

/// How to rank tied observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiePolicy {
    /// Any tie is a data error.
    Error,
    /// Ties are ordered by a seeded uniform perturbation.
    RandomBreak { seed: u64 },
}

/// Componentwise ranks in `1..=n`; each column is a permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    pub r1: Vec<u32>,
    pub r2: Vec<u32>,
}

impl RankMatrix {
    /// Builds a rank matrix from explicit rank vectors, checking that both are permutations of `1..=n`.
    pub fn from_ranks(r1: Vec<u32>, r2: Vec<u32>) -> Result<Self> {
        if r1.len() != r2.len() {
            return Err(Error::Data("rank vectors differ in length".into()));
        }
        if r1.len() < 2 {
            return Err(Error::Data(format!("need at least 2 observations, got {}", r1.len())));
        }
        for (name, r) in [("r1", &r1), ("r2", &r2)] {
            let mut seen = vec![false; r.len()];
            for &v in r.iter() {
                let v = v as usize;
                if v == 0 || v > r.len() || seen[v - 1] {
                    return Err(Error::Data(format!("{name} is not a permutation of 1..={}", r.len())));
                }
                seen[v - 1] = true;
            }
        }
        Ok(RankMatrix { r1, r2 })
    }

    pub fn len(&self) -> usize {
        self.r1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r1.is_empty()
    }
}

/// Componentwise ranks of `sample` under `policy`.
pub fn ranks(sample: &Sample, policy: TiePolicy) -> Result<RankMatrix> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 observations, got {n}")));
    }
    if n > u32::MAX as usize {
        return Err(Error::Data("sample too large".into()));
    }
    let mut out = [Vec::new(), Vec::new()];
    for (p, slot) in out.iter_mut().enumerate() {
        let values: Vec<f64> = sample.column(p).collect();
        let keys: Vec<u64> = match policy {
            TiePolicy::Error => vec![0; n],
            TiePolicy::RandomBreak { seed } => {
                let mut rng = Stream::from_seed(seed).child_label("ties").child(p as u64).rng();
                (0..n).map(|_| rng.random()).collect()
            }
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(keys[a].cmp(&keys[b])).then(a.cmp(&b)));
        if policy == TiePolicy::Error {
            for w in order.windows(2) {
                if values[w[0]] == values[w[1]] {
                    return Err(Error::Data(format!(
                        "tie in column {}: value {} occurs at rows {} and {}",
                        p + 1,
                        values[w[0]],
                        w[0].min(w[1]) + 1,
                        w[0].max(w[1]) + 1
                    )));
                }
            }
        }
        let mut r = vec![0u32; n];
        for (rank, &idx) in order.iter().enumerate() {
            r[idx] = rank as u32 + 1;
        }
        *slot = r;
    }
    let [r1, r2] = out;
    Ok(RankMatrix { r1, r2 })
}

/// Smallest `j` in `0..=n` with `j / n >= u`: the lattice index of the
/// generalised inverse of a uniform empirical margin.
pub fn lattice_index(u: f64, n: usize) -> usize {
    if u <= 0.0 {
        return 0;
    }
    if u >= 1.0 {
        return n;
    }
    let nf = n as f64;
    let mut j = ((u * nf).ceil() as usize).min(n);
    while j > 0 && (j - 1) as f64 / nf >= u {
        j -= 1;
    }
    while j < n && (j as f64) / nf < u {
        j += 1;
    }
    j
}

/// Empirical copula backed by a cumulative rank-count table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCopula {
    n: usize,
    cum: Vec<u32>,
    ranks: RankMatrix,
}

impl EmpiricalCopula {
    pub fn new(ranks: &RankMatrix) -> Self {
        let n = ranks.len();
        let stride = n + 1;
        let mut cum = vec![0u32; stride * stride];
        for (&a, &b) in ranks.r1.iter().zip(&ranks.r2) {
            cum[a as usize * stride + b as usize] += 1;
        }
        for i in 1..=n {
            for j in 1..=n {
                let v = cum[i * stride + j] + cum[(i - 1) * stride + j] + cum[i * stride + j - 1]
                    - cum[(i - 1) * stride + j - 1];
                cum[i * stride + j] = v;
            }
        }
        EmpiricalCopula { n, cum, ranks: ranks.clone() }
    }

    pub fn from_sample(sample: &Sample, policy: TiePolicy) -> Result<Self> {
        Ok(Self::new(&ranks(sample, policy)?))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ranks(&self) -> &RankMatrix {
        &self.ranks
    }

    /// `#{k : R_k1 <= i, R_k2 <= j}`.
    #[inline]
    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.cum[i * (self.n + 1) + j]
    }

    #[inline]
    pub fn index(&self, u: f64) -> usize {
        lattice_index(u, self.n)
    }

    /// `C_n(u1, u2)`.
    #[inline]
    pub fn eval(&self, u1: f64, u2: f64) -> f64 {
        self.count(self.index(u1), self.index(u2)) as f64 / self.n as f64
    }

    /// `C_n(i/n, i/n) == i/n`, tested on integer counts.
    pub fn is_diagonal_fixed_point(&self, i: usize) -> bool {
        self.count(i, i) as usize == i
    }

    /// Finite-difference estimator of `dC/du_p` (`p` in `{1, 2}`), clamped to `[0, 1]`.
    pub fn deriv_hat(&self, p: usize, u1: f64, u2: f64, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        match p {
            1 | 2 => Ok(self.deriv_unclamped(p, u1, u2, h).clamp(0.0, 1.0)),
            _ => Err(Error::Config(format!("partial derivative index must be 1 or 2, got {p}"))),
        }
    }

    /// The three-branch differential quotient without clamping. `h` must be valid.
    pub(crate) fn deriv_unclamped(&self, p: usize, u1: f64, u2: f64, h: f64) -> f64 {
        if p == 1 {
            if u1 < h {
                self.eval(2.0 * h, u2) / (2.0 * h)
            } else if u1 > 1.0 - h {
                (u2 - self.eval(1.0 - 2.0 * h, u2)) / (2.0 * h)
            } else {
                (self.eval(u1 + h, u2) - self.eval(u1 - h, u2)) / (2.0 * h)
            }
        } else if u2 < h {
            self.eval(u1, 2.0 * h) / (2.0 * h)
        } else if u2 > 1.0 - h {
            (u1 - self.eval(u1, 1.0 - 2.0 * h)) / (2.0 * h)
        } else {
            (self.eval(u1, u2 + h) - self.eval(u1, u2 - h)) / (2.0 * h)
        }
    }
}

/// Bandwidths must lie in `(0, 1/2)`.
pub fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h < 0.5 {
        Ok(())
    } else {
        Err(Error::Config(format!("bandwidth must lie in (0, 1/2), got {h}")))
    }
}

/// Sample Kendall's tau (tau-a), by pair enumeration.
pub fn kendall_tau(sample: &Sample) -> f64 {
    let rows = sample.rows();
    let n = rows.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (rows[i][0] - rows[j][0]) * (rows[i][1] - rows[j][1]);
            s += if a > 0.0 {
                1
            } else if a < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    s as f64 / (n as f64 * (n as f64 - 1.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CopulaModel;
    use proptest::prelude::*;

    fn sample(rows: &[[f64; 2]]) -> Sample {
        Sample::new(rows.to_vec()).unwrap()
    }

    /// Direct O(n) evaluation from the generalised-inverse definition on raw data.
    fn brute_eval(data: &Sample, u1: f64, u2: f64) -> f64 {
        let n = data.len();
        let thresh = |p: usize, u: f64| -> f64 {
            if u <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let mut col: Vec<f64> = data.column(p).collect();
            col.sort_by(f64::total_cmp);
            let j = (1..=n).find(|&j| j as f64 / n as f64 >= u).unwrap_or(n);
            col[j - 1]
        };
        let (t1, t2) = (thresh(0, u1), thresh(1, u2));
        data.rows().iter().filter(|r| r[0] <= t1 && r[1] <= t2).count() as f64 / n as f64
    }

    #[test]
    fn hand_ranks() {
        let r = ranks(&sample(&[[1.0, 1.0], [2.0, 3.0], [3.0, 2.0]]), TiePolicy::Error).unwrap();
        assert_eq!(r.r1, vec![1, 2, 3]);
        assert_eq!(r.r2, vec![1, 3, 2]);
        let r = ranks(&sample(&[[0.3, 0.9], [0.1, 0.2], [0.2, 0.5]]), TiePolicy::Error).unwrap();
        assert_eq!(r.r1, vec![3, 1, 2]);
        assert_eq!(r.r2, vec![3, 1, 2]);
    }

    #[test]
    fn ties_error_names_column() {
        let err = ranks(&sample(&[[5.0, 9.0], [5.0, 1.0]]), TiePolicy::Error).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("column 1") && msg.contains('5'), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn random_break_yields_permutations_deterministically() {
        let s = sample(&[[1.0, 2.0], [1.0, 2.0], [1.0, 3.0], [0.0, 2.0]]);
        let a = ranks(&s, TiePolicy::RandomBreak { seed: 9 }).unwrap();
        let b = ranks(&s, TiePolicy::RandomBreak { seed: 9 }).unwrap();
        assert_eq!(a, b);
        RankMatrix::from_ranks(a.r1.clone(), a.r2.clone()).unwrap();
        assert_eq!(a.r1[3], 1);
        assert_eq!(a.r2[2], 4);
    }

    #[test]
    fn too_few_rows() {
        assert!(ranks(&sample(&[[1.0, 2.0]]), TiePolicy::Error).is_err());
        assert!(Sample::new(vec![[f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn hand_eval() {
        let ec = EmpiricalCopula::new(&RankMatrix::from_ranks(vec![1, 2, 3], vec![1, 3, 2]).unwrap());
        assert_eq!(ec.eval(0.0, 0.7), 0.0);
        assert_eq!(ec.eval(1.0, 1.0), 1.0);
        assert_eq!(ec.eval(2.0 / 3.0, 2.0 / 3.0), 1.0 / 3.0);
        assert_eq!(ec.count(2, 2), 1);
        assert_eq!(ec.count(3, 3), 3);
    }

    #[test]
    fn lattice_index_is_exact_on_lattice() {
        for n in [3usize, 7, 49, 100, 200, 500] {
            for i in 0..=n {
                assert_eq!(lattice_index(i as f64 / n as f64, n), i);
            }
        }
        assert_eq!(lattice_index(0.34, 3), 2);
        assert_eq!(lattice_index(1e-12, 3), 1);
    }

    #[test]
    fn eval_matches_brute_force() {
        use rand::Rng;
        let mut rng = Stream::from_seed(5).rng();
        for trial in 0..10 {
            let n = 5 + 17 * trial;
            let data = CopulaModel::clayton(2.0).unwrap().sample(n, &mut rng).unwrap();
            let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
            for _ in 0..100 {
                let (u1, u2): (f64, f64) = (rng.random(), rng.random());
                assert_eq!(ec.eval(u1, u2), brute_eval(&data, u1, u2));
            }
        }
    }

    #[test]
    fn exact_margins() {
        let mut rng = Stream::from_seed(6).rng();
        let data = CopulaModel::gumbel(2.0).unwrap().sample(73, &mut rng).unwrap();
        let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
        let n = ec.n();
        for i in 0..=n {
            let u = i as f64 / n as f64;
            assert_eq!(ec.eval(u, 1.0), u);
            assert_eq!(ec.eval(1.0, u), u);
            assert_eq!(ec.count(i, n) as usize, i);
            assert_eq!(ec.count(n, i) as usize, i);
            assert_eq!(ec.count(0, i), 0);
        }
    }

    #[test]
    fn comonotone_derivative_is_near_one() {
        let n = 100;
        let r: Vec<u32> = (1..=n).collect();
        let ec = EmpiricalCopula::new(&RankMatrix::from_ranks(r.clone(), r).unwrap());
        for h in [0.05, 0.1, 0.3] {
            let d = ec.deriv_hat(1, 0.5, 0.9, h).unwrap();
            assert!(d >= 1.0 - 1.0 / (n as f64 * h) && d <= 1.0, "h={h}: {d}");
        }
    }

    #[test]
    fn lower_branch_is_verbatim() {
        let mut rng = Stream::from_seed(8).rng();
        let data = CopulaModel::clayton(1.0).unwrap().sample(60, &mut rng).unwrap();
        let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
        let h = 0.2;
        let got = ec.deriv_hat(2, 0.4, 0.1, h).unwrap();
        assert_eq!(got, (ec.eval(0.4, 2.0 * h) / (2.0 * h)).clamp(0.0, 1.0));
        let got = ec.deriv_hat(1, 0.95, 0.3, h).unwrap();
        assert_eq!(got, ((0.3 - ec.eval(1.0 - 2.0 * h, 0.3)) / (2.0 * h)).clamp(0.0, 1.0));
    }

    #[test]
    fn bad_bandwidth() {
        let ec = EmpiricalCopula::new(&RankMatrix::from_ranks(vec![1, 2], vec![2, 1]).unwrap());
        assert!(matches!(ec.deriv_hat(1, 0.5, 0.5, 0.0), Err(Error::Config(_))));
        assert!(matches!(ec.deriv_hat(1, 0.5, 0.5, 0.5), Err(Error::Config(_))));
        assert!(matches!(ec.deriv_hat(3, 0.5, 0.5, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn independence_derivative_monte_carlo() {
        let n = 4096;
        let mut rng = Stream::from_seed(12).rng();
        let data = CopulaModel::Independence.sample(n, &mut rng).unwrap();
        let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
        let h = (n as f64).powf(-0.25);
        let d = ec.deriv_hat(1, 0.5, 0.5, h).unwrap();
        assert!((d - 0.5).abs() <= 4.0 * h, "{d}");
    }

    #[test]
    fn kendall_tau_of_ordered_data() {
        assert_eq!(kendall_tau(&sample(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])), 1.0);
        assert_eq!(kendall_tau(&sample(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]])), -1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rank_invariance(seed in any::<u64>(), n in 2usize..60, u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0) {
            let mut rng = Stream::from_seed(seed).rng();
            let data = CopulaModel::clayton(1.0).unwrap().sample(n, &mut rng).unwrap();
            let moved = Sample::new(data.rows().iter().map(|r| [r[0].ln() * 3.0 - 1.0, r[1].powi(3)]).collect()).unwrap();
            let a = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
            let b = EmpiricalCopula::from_sample(&moved, TiePolicy::Error).unwrap();
            prop_assert_eq!(a.eval(u1, u2).to_bits(), b.eval(u1, u2).to_bits());
        }

        #[test]
        fn derivative_bounds(seed in any::<u64>(), n in 2usize..80, h in 0.01f64..0.49, u1 in 0.0f64..=1.0, u2 in 0.0f64..=1.0) {
            let mut rng = Stream::from_seed(seed).rng();
            let data = CopulaModel::gumbel(1.7).unwrap().sample(n, &mut rng).unwrap();
            let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
            let k = 1.0 + 1.0 / (2.0 * h * n as f64);
            for p in [1, 2] {
                let raw = ec.deriv_unclamped(p, u1, u2, h);
                prop_assert!(raw >= -1.0 / (2.0 * h * n as f64) - 1e-12 && raw <= k + 1e-12, "raw {}", raw);
                let c = ec.deriv_hat(p, u1, u2, h).unwrap();
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }

        #[test]
        fn cum_is_monotone(seed in any::<u64>(), n in 2usize..40) {
            let mut rng = Stream::from_seed(seed).rng();
            let data = CopulaModel::Independence.sample(n, &mut rng).unwrap();
            let ec = EmpiricalCopula::from_sample(&data, TiePolicy::Error).unwrap();
            prop_assert_eq!(ec.count(n, n) as usize, n);
            for i in 1..=n {
                for j in 1..=n {
                    prop_assert!(ec.count(i, j) >= ec.count(i - 1, j));
                    prop_assert!(ec.count(i, j) >= ec.count(i, j - 1));
                }
            }
        }
    }
}
