//! Bivariate copula families: exact distribution functions, conditional
//! distributions, parameter calibration and samplers.
//!
//! The asymmetric negative logistic family is the extreme-value copula
//! `C(u, v) = exp(-l(x, y))` with `x = -ln u`, `y = -ln v` and stable tail
//! dependence function
//!
//! ```text
//! l(x, y) = x + y - ((psi1 x)^(-theta) + (psi2 y)^(-theta))^(-1/theta),   theta > 0,
//! ```
//!
//! whose upper tail dependence coefficient is
//! `lambda_U = (psi1^(-theta) + psi2^(-theta))^(-1/theta)`, increasing in
//! theta from 0 to `min(psi1, psi2)`.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Open01, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::empirical::Sample;
use crate::error::{Error, Result};

/// Families that can be calibrated from Kendall's tau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Clayton,
    Gumbel,
    StudentT { df: u32 },
}

/// Target dependence level used to pick a family parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DependenceSpec {
    KendallTau(f64),
    LambdaU(f64),
}

/// One diagonal block `[lo, hi]` of an ordinal sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub lo: f64,
    pub hi: f64,
    pub component: CopulaModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CopulaModel {
    Independence,
    /// Comonotone upper Fréchet bound `min(u1, u2)`.
    FrechetM,
    /// `theta > 0`, or `theta` in `(-1, 0)` for the negatively dependent
    /// (non-strict generator) branch.
    Clayton {
        theta: f64,
    },
    Gumbel {
        theta: f64,
    },
    StudentT {
        rho: f64,
        df: u32,
    },
    AsymNegLogistic {
        theta: f64,
        psi1: f64,
        psi2: f64,
    },
    OrdinalSum(Vec<Block>),
}

impl CopulaModel {
    pub fn clayton(theta: f64) -> Result<Self> {
        let m = CopulaModel::Clayton { theta };
        m.validate()?;
        Ok(m)
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        let m = CopulaModel::Gumbel { theta };
        m.validate()?;
        Ok(m)
    }

    pub fn student_t(rho: f64, df: u32) -> Result<Self> {
        let m = CopulaModel::StudentT { rho, df };
        m.validate()?;
        Ok(m)
    }

    pub fn asym_neg_logistic(theta: f64, psi1: f64, psi2: f64) -> Result<Self> {
        let m = CopulaModel::AsymNegLogistic { theta, psi1, psi2 };
        m.validate()?;
        Ok(m)
    }

    pub fn ordinal_sum(blocks: Vec<Block>) -> Result<Self> {
        let m = CopulaModel::OrdinalSum(blocks);
        m.validate()?;
        Ok(m)
    }

    /// Checks every parameter against the family's admissible range.
    pub fn validate(&self) -> Result<()> {
        match *self {
            CopulaModel::Independence | CopulaModel::FrechetM => Ok(()),
            CopulaModel::Clayton { theta } => {
                if !theta.is_finite() || theta <= -1.0 || theta == 0.0 {
                    return Err(Error::Domain(format!(
                        "clayton theta must lie in (-1, 0) or (0, inf), got {theta}"
                    )));
                }
                Ok(())
            }
            CopulaModel::Gumbel { theta } => {
                if !theta.is_finite() || theta < 1.0 {
                    return Err(Error::Domain(format!("gumbel theta must be >= 1, got {theta}")));
                }
                Ok(())
            }
            CopulaModel::StudentT { rho, df } => {
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(Error::Domain(format!("t-copula rho must lie in (-1, 1), got {rho}")));
                }
                if df == 0 {
                    return Err(Error::Domain("t-copula df must be positive".into()));
                }
                Ok(())
            }
            CopulaModel::AsymNegLogistic { theta, psi1, psi2 } => {
                if !theta.is_finite() || theta <= 0.0 {
                    return Err(Error::Domain(format!("aneglog theta must be > 0, got {theta}")));
                }
                for (name, psi) in [("psi1", psi1), ("psi2", psi2)] {
                    if !(psi > 0.0 && psi <= 1.0) {
                        return Err(Error::Domain(format!("aneglog {name} must lie in (0, 1], got {psi}")));
                    }
                }
                Ok(())
            }
            CopulaModel::OrdinalSum(ref blocks) => {
                if blocks.is_empty() {
                    return Err(Error::Domain("ordinal sum needs at least one block".into()));
                }
                if blocks[0].lo != 0.0 {
                    return Err(Error::Domain("first ordinal-sum block must start at 0".into()));
                }
                if blocks[blocks.len() - 1].hi != 1.0 {
                    return Err(Error::Domain("last ordinal-sum block must end at 1".into()));
                }
                for (k, b) in blocks.iter().enumerate() {
                    if b.lo.partial_cmp(&b.hi) != Some(std::cmp::Ordering::Less) {
                        return Err(Error::Domain(format!(
                            "ordinal-sum block {k} is empty: [{}, {}]",
                            b.lo, b.hi
                        )));
                    }
                    if k + 1 < blocks.len() && b.hi != blocks[k + 1].lo {
                        return Err(Error::Domain(format!(
                            "ordinal-sum blocks {k} and {} are not contiguous",
                            k + 1
                        )));
                    }
                    b.component.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Copula distribution function `C(u1, u2)`.
    pub fn cdf(&self, u1: f64, u2: f64) -> Result<f64> {
        self.validate()?;
        check_unit("u1", u1)?;
        check_unit("u2", u2)?;
        Ok(self.cdf_unchecked(u1, u2))
    }

    /// `C(u, u)`.
    pub fn diagonal(&self, u: f64) -> Result<f64> {
        self.cdf(u, u)
    }

    /// Distribution function for a model already known to be valid and a point in the unit square.
    pub(crate) fn cdf_unchecked(&self, u1: f64, u2: f64) -> f64 {
        if u1 <= 0.0 || u2 <= 0.0 {
            return 0.0;
        }
        if u1 >= 1.0 {
            return u2.min(1.0);
        }
        if u2 >= 1.0 {
            return u1;
        }
        let c = match *self {
            CopulaModel::Independence => u1 * u2,
            CopulaModel::FrechetM => u1.min(u2),
            CopulaModel::Clayton { theta } => {
                let s = u1.powf(-theta) + u2.powf(-theta) - 1.0;
                if s <= 0.0 {
                    0.0
                } else {
                    s.powf(-1.0 / theta)
                }
            }
            CopulaModel::Gumbel { .. } | CopulaModel::AsymNegLogistic { .. } => {
                let (x, y) = (-u1.ln(), -u2.ln());
                (-self.stable_tail(x, y)).exp()
            }
            CopulaModel::StudentT { rho, df } => {
                let (h, k) = (t_quantile(u1, df), t_quantile(u2, df));
                bivariate_t_cdf(df, h, k, rho)
            }
            CopulaModel::OrdinalSum(ref blocks) => match find_block(blocks, u1, u2) {
                Some(b) => {
                    let w = b.hi - b.lo;
                    let v1 = ((u1 - b.lo) / w).clamp(0.0, 1.0);
                    let v2 = ((u2 - b.lo) / w).clamp(0.0, 1.0);
                    b.lo + w * b.component.cdf_unchecked(v1, v2)
                }
                None => u1.min(u2),
            },
        };
        c.clamp((u1 + u2 - 1.0).max(0.0), u1.min(u2))
    }

    /// Stable tail dependence function of the extreme-value families.
    fn stable_tail(&self, x: f64, y: f64) -> f64 {
        match *self {
            CopulaModel::Gumbel { theta } => {
                if x == 0.0 || y == 0.0 {
                    return x + y;
                }
                (x.powf(theta) + y.powf(theta)).powf(1.0 / theta)
            }
            CopulaModel::AsymNegLogistic { theta, psi1, psi2 } => {
                if x == 0.0 || y == 0.0 {
                    return x + y;
                }
                let s = (psi1 * x).powf(-theta) + (psi2 * y).powf(-theta);
                x + y - s.powf(-1.0 / theta)
            }
            _ => unreachable!("stable tail function requested for a non extreme-value family"),
        }
    }

    /// Partial derivative of the stable tail function in its first (`first = true`) or second argument.
    fn stable_tail_grad(&self, x: f64, y: f64, first: bool) -> f64 {
        let (a, b) = if first { (x, y) } else { (y, x) };
        match *self {
            CopulaModel::Gumbel { theta } => {
                if a == 0.0 && b == 0.0 {
                    return 2f64.powf(1.0 / theta - 1.0);
                }
                if a == 0.0 {
                    return if theta == 1.0 { 1.0 } else { 0.0 };
                }
                (1.0 + (b / a).powf(theta)).powf(1.0 / theta - 1.0)
            }
            CopulaModel::AsymNegLogistic { theta, psi1, psi2 } => {
                let (pa, pb) = if first { (psi1, psi2) } else { (psi2, psi1) };
                if b == 0.0 {
                    return 1.0;
                }
                if a == 0.0 {
                    return 1.0 - pa;
                }
                let r = (pa * a / (pb * b)).powf(theta);
                1.0 - pa * (1.0 + r).powf(-(1.0 + 1.0 / theta))
            }
            _ => unreachable!("stable tail gradient requested for a non extreme-value family"),
        }
    }

    /// Partial derivative `dC/du_p` at `(u1, u2)`, `p` in `{1, 2}`.
    ///
    /// For `p = 1` this is the conditional distribution of `U2` given `U1 = u1`.
    pub fn partial(&self, p: usize, u1: f64, u2: f64) -> Result<f64> {
        self.validate()?;
        check_unit("u1", u1)?;
        check_unit("u2", u2)?;
        match p {
            1 => Ok(self.partial1_unchecked(u1, u2)),
            2 => Ok(self.partial2_unchecked(u1, u2)),
            _ => Err(Error::Config(format!("partial derivative index must be 1 or 2, got {p}"))),
        }
    }

    fn partial2_unchecked(&self, u1: f64, u2: f64) -> f64 {
        match *self {
            CopulaModel::AsymNegLogistic { .. } => {
                if u1 <= 0.0 {
                    return 0.0;
                }
                if u1 >= 1.0 {
                    return 1.0;
                }
                let v = u2.max(f64::MIN_POSITIVE);
                let (x, y) = (-u1.ln(), -v.ln());
                let c = (-self.stable_tail(x, y)).exp();
                (c * self.stable_tail_grad(x, y, false) / v).clamp(0.0, 1.0)
            }
            CopulaModel::OrdinalSum(ref blocks) => match find_block(blocks, u1, u2) {
                Some(b) => {
                    let w = b.hi - b.lo;
                    let v1 = ((u1 - b.lo) / w).clamp(0.0, 1.0);
                    let v2 = ((u2 - b.lo) / w).clamp(0.0, 1.0);
                    b.component.partial2_unchecked(v1, v2)
                }
                None => {
                    if u2 < u1 {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
            // the remaining families are exchangeable
            _ => self.partial1_unchecked(u2, u1),
        }
    }

    fn partial1_unchecked(&self, u1: f64, u2: f64) -> f64 {
        if u2 <= 0.0 {
            return 0.0;
        }
        if u2 >= 1.0 {
            return 1.0;
        }
        match *self {
            CopulaModel::Independence => u2,
            CopulaModel::FrechetM => {
                if u1 < u2 {
                    1.0
                } else {
                    0.0
                }
            }
            CopulaModel::Clayton { theta } => {
                let u = u1.max(f64::MIN_POSITIVE);
                let q = 1.0 + u.powf(theta) * (u2.powf(-theta) - 1.0);
                if q <= 0.0 {
                    0.0
                } else {
                    q.powf(-(1.0 + theta) / theta).clamp(0.0, 1.0)
                }
            }
            CopulaModel::Gumbel { .. } | CopulaModel::AsymNegLogistic { .. } => {
                let u = u1.max(f64::MIN_POSITIVE);
                if u >= 1.0 {
                    let y = -u2.ln();
                    return self.stable_tail_grad(0.0, y, true).clamp(0.0, 1.0) * u2;
                }
                let (x, y) = (-u.ln(), -u2.ln());
                let c = (-self.stable_tail(x, y)).exp();
                (c * self.stable_tail_grad(x, y, true) / u).clamp(0.0, 1.0)
            }
            CopulaModel::StudentT { rho, df } => {
                let tu = t_quantile(u1, df);
                let tv = t_quantile(u2, df);
                if tu.is_infinite() {
                    // conditional law degenerates at the boundary
                    return if (tu > 0.0) == (rho > 0.0) { 1.0 } else { 0.0 };
                }
                let nu = f64::from(df);
                let scale = ((1.0 - rho * rho) * (nu + tu * tu) / (nu + 1.0)).sqrt();
                t_cdf((tv - rho * tu) / scale, df + 1)
            }
            CopulaModel::OrdinalSum(ref blocks) => match find_block(blocks, u1, u2) {
                Some(b) => {
                    let w = b.hi - b.lo;
                    let v1 = ((u1 - b.lo) / w).clamp(0.0, 1.0);
                    let v2 = ((u2 - b.lo) / w).clamp(0.0, 1.0);
                    b.component.partial1_unchecked(v1, v2)
                }
                None => {
                    if u1 < u2 {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
        }
    }

    /// Population Kendall's tau, where a closed form exists.
    pub fn kendall_tau(&self) -> Option<f64> {
        match *self {
            CopulaModel::Independence => Some(0.0),
            CopulaModel::FrechetM => Some(1.0),
            CopulaModel::Clayton { theta } => Some(theta / (theta + 2.0)),
            CopulaModel::Gumbel { theta } => Some(1.0 - 1.0 / theta),
            CopulaModel::StudentT { rho, .. } => Some(2.0 / PI * rho.asin()),
            CopulaModel::AsymNegLogistic { .. } => None,
            CopulaModel::OrdinalSum(ref blocks) => {
                let mut tau = 1.0;
                for b in blocks {
                    let w2 = (b.hi - b.lo) * (b.hi - b.lo);
                    tau += w2 * (b.component.kendall_tau()? - 1.0);
                }
                Some(tau)
            }
        }
    }

    /// Upper tail dependence coefficient, where a closed form exists.
    pub fn lambda_u(&self) -> Option<f64> {
        match *self {
            CopulaModel::Independence => Some(0.0),
            CopulaModel::FrechetM => Some(1.0),
            CopulaModel::Clayton { .. } => Some(0.0),
            CopulaModel::Gumbel { theta } => Some(2.0 - 2f64.powf(1.0 / theta)),
            CopulaModel::AsymNegLogistic { theta, psi1, psi2 } => Some(aneglog_lambda_u(theta, psi1, psi2)),
            _ => None,
        }
    }

    /// Draws `n` i.i.d. observations with uniform margins and joint law `self`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        let rows = (0..n).map(|_| self.draw(rng)).collect();
        Ok(Sample::from_rows_unchecked(rows))
    }

    /// One draw from a validated model.
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match *self {
            CopulaModel::Independence => [open01(rng), open01(rng)],
            CopulaModel::FrechetM => {
                let u = open01(rng);
                [u, u]
            }
            CopulaModel::Clayton { theta } => {
                let u = open01(rng);
                let w = open01(rng);
                // closed-form inverse of the conditional distribution dC/du(u, .)
                let base = u.powf(-theta) * (w.powf(-theta / (1.0 + theta)) - 1.0) + 1.0;
                let v = base.max(0.0).powf(-1.0 / theta);
                [u, v.clamp(0.0, 1.0)]
            }
            CopulaModel::Gumbel { .. } | CopulaModel::AsymNegLogistic { .. } => {
                let u = open01(rng);
                let w = open01(rng);
                [u, self.invert_conditional(u, w)]
            }
            CopulaModel::StudentT { rho, df } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let chi = ChiSquared::new(f64::from(df)).expect("df is positive");
                let w: f64 = chi.sample(rng);
                let s = (w / f64::from(df)).sqrt();
                let x1 = z1;
                let x2 = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
                [t_cdf(x1 / s, df), t_cdf(x2 / s, df)]
            }
            CopulaModel::OrdinalSum(ref blocks) => {
                let pick: f64 = rng.random();
                let mut chosen = &blocks[blocks.len() - 1];
                for b in blocks {
                    if pick < b.hi {
                        chosen = b;
                        break;
                    }
                }
                let [v1, v2] = chosen.component.draw(rng);
                let w = chosen.hi - chosen.lo;
                [
                    (chosen.lo + w * v1).clamp(chosen.lo, chosen.hi),
                    (chosen.lo + w * v2).clamp(chosen.lo, chosen.hi),
                ]
            }
        }
    }

    /// Solves `dC/du(u, v) = w` for `v` by bisection on `-ln v`.
    fn invert_conditional(&self, u: f64, w: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 745.0_f64);
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            // conditional cdf is decreasing in -ln v
            if self.partial1_unchecked(u, (-mid).exp()) > w {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1e-3) {
                break;
            }
        }
        (-0.5 * (lo + hi)).exp()
    }
}

impl fmt::Display for CopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CopulaModel::Independence => write!(f, "indep()"),
            CopulaModel::FrechetM => write!(f, "m()"),
            CopulaModel::Clayton { theta } => write!(f, "clayton(theta={theta})"),
            CopulaModel::Gumbel { theta } => write!(f, "gumbel(theta={theta})"),
            CopulaModel::StudentT { rho, df } => write!(f, "t(rho={rho},df={df})"),
            CopulaModel::AsymNegLogistic { theta, psi1, psi2 } => {
                write!(f, "aneglog(theta={theta},psi1={psi1},psi2={psi2})")
            }
            CopulaModel::OrdinalSum(blocks) => {
                write!(f, "ordinal(")?;
                for (k, b) in blocks.iter().enumerate() {
                    if k > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "[{},{}]:{}", b.lo, b.hi, b.component)?;
                }
                write!(f, ")")
            }
        }
    }
}

fn check_unit(name: &str, u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {u} is outside [0, 1]")))
    }
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

fn find_block(blocks: &[Block], u1: f64, u2: f64) -> Option<&Block> {
    blocks
        .iter()
        .find(|b| u1 >= b.lo && u1 <= b.hi && u2 >= b.lo && u2 <= b.hi)
}

/// Calibrates a family parameter from Kendall's tau.
pub fn param_from_tau(family: Family, tau: f64) -> Result<CopulaModel> {
    if !(tau > -1.0 && tau < 1.0) {
        return Err(Error::Domain(format!("kendall tau must lie in (-1, 1), got {tau}")));
    }
    match family {
        Family::Clayton => {
            if tau == 0.0 {
                return Ok(CopulaModel::Independence);
            }
            CopulaModel::clayton(2.0 * tau / (1.0 - tau))
        }
        Family::Gumbel => {
            if tau < 0.0 {
                return Err(Error::Domain(format!(
                    "gumbel copula cannot attain negative kendall tau {tau}"
                )));
            }
            CopulaModel::gumbel(1.0 / (1.0 - tau))
        }
        Family::StudentT { df } => CopulaModel::student_t((PI * tau / 2.0).sin(), df),
    }
}

/// Upper tail dependence of the asymmetric negative logistic copula.
pub fn aneglog_lambda_u(theta: f64, psi1: f64, psi2: f64) -> f64 {
    (psi1.powf(-theta) + psi2.powf(-theta)).powf(-1.0 / theta)
}

/// Solves for the asymmetric negative logistic dependence parameter that
/// yields upper tail dependence `lambda_u`, by bisection (tolerance 1e-10).
pub fn param_from_lambda_u(psi1: f64, psi2: f64, lambda_u: f64) -> Result<CopulaModel> {
    for (name, psi) in [("psi1", psi1), ("psi2", psi2)] {
        if !(psi > 0.0 && psi <= 1.0) {
            return Err(Error::Domain(format!("aneglog {name} must lie in (0, 1], got {psi}")));
        }
    }
    let sup = psi1.min(psi2);
    if !(lambda_u > 0.0 && lambda_u < sup) {
        return Err(Error::Domain(format!(
            "upper tail dependence {lambda_u} is not attainable; must lie in (0, {sup})"
        )));
    }
    let mut hi = 1.0;
    while aneglog_lambda_u(hi, psi1, psi2) < lambda_u {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain(format!(
                "upper tail dependence {lambda_u} is numerically unattainable"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if aneglog_lambda_u(mid, psi1, psi2) < lambda_u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    CopulaModel::asym_neg_logistic(0.5 * (lo + hi), psi1, psi2)
}

/// Distribution function of Student's t with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: u32) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if df == 1 {
        return 0.5 + x.atan() / PI;
    }
    StudentsT::new(0.0, 1.0, f64::from(df))
        .expect("valid t distribution")
        .cdf(x)
}

/// Quantile function of Student's t with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: u32) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if df == 1 {
        return (PI * (p - 0.5)).tan();
    }
    StudentsT::new(0.0, 1.0, f64::from(df))
        .expect("valid t distribution")
        .inverse_cdf(p)
}

/// `P(T1 < h, T2 < k)` for a standard bivariate t vector with integer
/// degrees of freedom and correlation `rho` (Dunnett–Sobel recursion as
/// organised in Genz's BVTL).
pub fn bivariate_t_cdf(df: u32, h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return t_cdf(k, df);
    }
    if k == f64::INFINITY {
        return t_cdf(h, df);
    }
    let nu = f64::from(df);
    let tpi = 2.0 * PI;
    let snu = nu.sqrt();
    let ors = 1.0 - rho * rho;
    let hrk = h - rho * k;
    let krh = k - rho * h;
    let (xnhk, xnkh) = if hrk.abs() + ors > 0.0 {
        (
            hrk * hrk / (hrk * hrk + ors * (nu + k * k)),
            krh * krh / (krh * krh + ors * (nu + h * h)),
        )
    } else {
        (0.0, 0.0)
    };
    let hs = if hrk < 0.0 { -1.0 } else { 1.0 };
    let ks = if krh < 0.0 { -1.0 } else { 1.0 };
    let mut bvt;
    if df.is_multiple_of(2) {
        bvt = ors.sqrt().atan2(-rho) / tpi;
        let mut gmph = h / (16.0 * (nu + h * h)).sqrt();
        let mut gmpk = k / (16.0 * (nu + k * k)).sqrt();
        let mut btnckh = 2.0 * xnkh.sqrt().atan2((1.0 - xnkh).sqrt()) / PI;
        let mut btpdkh = 2.0 * (xnkh * (1.0 - xnkh)).sqrt() / PI;
        let mut btnchk = 2.0 * xnhk.sqrt().atan2((1.0 - xnhk).sqrt()) / PI;
        let mut btpdhk = 2.0 * (xnhk * (1.0 - xnhk)).sqrt() / PI;
        for j in 1..=df / 2 {
            let j = f64::from(j);
            bvt += gmph * (1.0 + ks * btnckh);
            bvt += gmpk * (1.0 + hs * btnchk);
            btnckh += btpdkh;
            btpdkh = 2.0 * j * btpdkh * (1.0 - xnkh) / (2.0 * j + 1.0);
            btnchk += btpdhk;
            btpdhk = 2.0 * j * btpdhk * (1.0 - xnhk) / (2.0 * j + 1.0);
            gmph = gmph * (2.0 * j - 1.0) / (2.0 * j * (1.0 + h * h / nu));
            gmpk = gmpk * (2.0 * j - 1.0) / (2.0 * j * (1.0 + k * k / nu));
        }
    } else {
        let qhrk = (h * h + k * k - 2.0 * rho * h * k + nu * ors).sqrt();
        let hkrn = h * k + rho * nu;
        let hkn = h * k - nu;
        let hpk = h + k;
        bvt = (-snu * (hkn * qhrk + hpk * hkrn)).atan2(hkn * hkrn - nu * hpk * qhrk) / tpi;
        if bvt < -1e-15 {
            bvt += 1.0;
        }
        let mut gmph = h / (tpi * snu * (1.0 + h * h / nu));
        let mut gmpk = k / (tpi * snu * (1.0 + k * k / nu));
        let mut btnckh = xnkh.sqrt();
        let mut btpdkh = btnckh;
        let mut btnchk = xnhk.sqrt();
        let mut btpdhk = btnchk;
        for j in 1..=(df - 1) / 2 {
            let j = f64::from(j);
            bvt += gmph * (1.0 + ks * btnckh);
            bvt += gmpk * (1.0 + hs * btnchk);
            btpdkh = (2.0 * j - 1.0) * btpdkh * (1.0 - xnkh) / (2.0 * j);
            btnckh += btpdkh;
            btpdhk = (2.0 * j - 1.0) * btpdhk * (1.0 - xnhk) / (2.0 * j);
            btnchk += btpdhk;
            gmph = gmph * 2.0 * j / ((2.0 * j + 1.0) * (1.0 + h * h / nu));
            gmpk = gmpk * 2.0 * j / ((2.0 * j + 1.0) * (1.0 + k * k / nu));
        }
    }
    bvt.clamp(0.0, 1.0)
}
