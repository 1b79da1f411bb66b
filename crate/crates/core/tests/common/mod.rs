//! Brute-force reference implementations. They work from raw ranks and never
//! touch the cumulative tables used by the library.

#![allow(dead_code)]

use archcop::rng::Stream;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Ranks {
    pub r1: Vec<u32>,
    pub r2: Vec<u32>,
}

impl Ranks {
    pub fn n(&self) -> usize {
        self.r1.len()
    }

    pub fn random(n: usize, stream: Stream) -> Ranks {
        let mut rng = stream.rng();
        let mut r2: Vec<u32> = (1..=n as u32).collect();
        r2.shuffle(&mut rng);
        Ranks { r1: (1..=n as u32).collect(), r2 }
    }

    pub fn matrix(&self) -> archcop::RankMatrix {
        archcop::RankMatrix::from_ranks(self.r1.clone(), self.r2.clone()).unwrap()
    }
}

/// Observation `i` sits below `u` in a margin iff `(r_i - 1) / n < u`.
fn below(r: u32, n: usize, u: f64) -> bool {
    ((r - 1) as f64 / n as f64) < u
}

pub fn eval(rk: &Ranks, u1: f64, u2: f64) -> f64 {
    let n = rk.n();
    let hits = (0..n).filter(|&i| below(rk.r1[i], n, u1) && below(rk.r2[i], n, u2)).count();
    hits as f64 / n as f64
}

pub fn weighted_eval(rk: &Ranks, xi: &[f64], u1: f64, u2: f64) -> f64 {
    let n = rk.n();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &w) in xi.iter().enumerate() {
        den += w;
        if below(rk.r1[i], n, u1) && below(rk.r2[i], n, u2) {
            num += w;
        }
    }
    num / den
}

pub fn alpha(rk: &Ranks, xi: &[f64], u1: f64, u2: f64) -> f64 {
    (rk.n() as f64).sqrt() * (weighted_eval(rk, xi, u1, u2) - eval(rk, u1, u2))
}

pub fn deriv(rk: &Ranks, p: usize, u1: f64, u2: f64, h: f64) -> f64 {
    let (s, t) = if p == 1 { (u1, u2) } else { (u2, u1) };
    let c = |a: f64, b: f64| if p == 1 { eval(rk, a, b) } else { eval(rk, b, a) };
    let raw = if s < h {
        c(2.0 * h, t) / (2.0 * h)
    } else if s > 1.0 - h {
        (t - c(1.0 - 2.0 * h, t)) / (2.0 * h)
    } else {
        (c(s + h, t) - c(s - h, t)) / (2.0 * h)
    };
    raw.clamp(0.0, 1.0)
}

pub fn nodes(m: usize) -> Vec<[f64; 3]> {
    let c = |i: usize| (i as f64 + 0.5) / m as f64;
    let mut out = Vec::with_capacity(m * m * m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                out.push([c(i), c(j), c(k)]);
            }
        }
    }
    out
}

pub fn hn(rk: &Ranks, m: usize) -> Vec<f64> {
    let sn = (rk.n() as f64).sqrt();
    nodes(m)
        .into_iter()
        .map(|[x, y, z]| sn * (eval(rk, x, eval(rk, y, z)) - eval(rk, eval(rk, x, y), z)))
        .collect()
}

/// The bootstrap field written out term by term:
/// `G(x,Cyz) - G(Cxy,z) + D2(x,Cyz) G(y,z) - D1(Cxy,z) G(x,y)`.
pub fn hn_xi(rk: &Ranks, xi: &[f64], m: usize, h: f64) -> Vec<f64> {
    let a = |u1: f64, u2: f64| alpha(rk, xi, u1, u2);
    let d = |p: usize, u1: f64, u2: f64| deriv(rk, p, u1, u2, h);
    let g = |u1: f64, u2: f64| a(u1, u2) - d(1, u1, u2) * a(u1, 1.0) - d(2, u1, u2) * a(1.0, u2);
    nodes(m)
        .into_iter()
        .map(|[x, y, z]| {
            let cyz = eval(rk, y, z);
            let cxy = eval(rk, x, y);
            g(x, cyz) - g(cxy, z) + d(2, x, cyz) * g(y, z) - d(1, cxy, z) * g(x, y)
        })
        .collect()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

pub fn ks(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn random_multipliers(n: usize, stream: Stream) -> Vec<f64> {
    let mut rng = stream.rng();
    loop {
        let xi: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 2.0 } else { 0.0 }).collect();
        if xi.iter().any(|&v| v > 0.0) {
            return xi;
        }
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
