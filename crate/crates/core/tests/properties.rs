mod common;

use archcop::archtest::{analyze, Bandwidth, Hypothesis, TestConfig, Ties};
use archcop::study::{run_study, StudyConfig};
use archcop::{run_test, CopulaModel, Sample, Statistic, Stream};
use proptest::prelude::*;

const REPORT_KEYS: [&str; 16] = [
    "schema",
    "hypothesis",
    "statistic",
    "n",
    "alpha",
    "t_value",
    "a_n",
    "k_n",
    "penalty",
    "s_value",
    "q_alpha",
    "q05",
    "p_value",
    "reject",
    "diagnostics",
    "provenance",
];

fn clayton_sample(n: usize, seed: u64) -> Sample {
    CopulaModel::clayton(1.0).unwrap().sample(n, &mut Stream::from_seed(seed).rng()).unwrap()
}

#[test]
fn report_json_has_the_documented_shape() {
    let sample = clayton_sample(40, 1);
    let cfg = TestConfig { bootstrap: 30, grid_m: 5, ..TestConfig::default() };
    let report = run_test(&sample, &cfg).unwrap();
    let v = serde_json::to_value(&report).unwrap();
    let obj = v.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    let mut expect = REPORT_KEYS.to_vec();
    expect.sort_unstable();
    assert_eq!(keys, expect);
    for k in ["alpha", "t_value", "a_n", "k_n", "penalty", "s_value", "q_alpha", "q05", "p_value"] {
        assert!(obj[k].is_f64(), "{k}");
    }
    assert!(obj["reject"].is_boolean());
    assert_eq!(obj["hypothesis"], "archimedeanity");
    assert_eq!(obj["statistic"], "l2");
    let diag = obj["diagnostics"].as_object().unwrap();
    for k in ["fixed_points", "bandwidth", "bootstrap_redraws", "warnings"] {
        assert!(diag.contains_key(k), "{k}");
    }
    let prov = obj["provenance"].as_object().unwrap();
    assert_eq!(prov["seed"], 0);
    assert_eq!(prov["config"]["bandwidth"], "auto");
    let back: archcop::TestReport = serde_json::from_value(v).unwrap();
    assert_eq!(back, report);
}

#[test]
fn decisions_are_monotone_in_the_level() {
    let sample = CopulaModel::student_t(0.5, 1).unwrap().sample(80, &mut Stream::from_seed(2).rng()).unwrap();
    let a = analyze(&sample, 6, Bandwidth::Auto, 80, 3, Ties::Error).unwrap();
    for hyp in [Hypothesis::Associativity, Hypothesis::Archimedeanity] {
        for stat in [Statistic::L2, Statistic::Ks] {
            let mut prev = false;
            for alpha in [0.01, 0.05, 0.1, 0.2, 0.5] {
                let cfg = TestConfig { hypothesis: hyp, statistic: stat, alpha, bootstrap: 80, grid_m: 6, seed: 3, ties: Ties::Error, ..TestConfig::default() };
                let r = a.report(&cfg).unwrap();
                assert!(r.reject || !prev, "{hyp:?} {stat:?} stops rejecting at {alpha}");
                prev = r.reject;
            }
        }
    }
}

#[test]
fn study_rates_equal_the_mean_of_the_run_log() {
    let text = "runs = 5\nbootstrap = 20\ngrid_m = 4\nseed = 4\n[[scenario]]\nmodel = \"gumbel(theta=2)\"\nn = 40\n[[scenario]]\nmodel = \"t(rho=0.5,df=1)\"\nn = 40\n";
    let cfg = StudyConfig::from_toml(text).unwrap();
    let r = run_study(&cfg, Some(2)).unwrap().result;
    for s in &r.scenarios {
        for (k, c) in s.cells.iter().enumerate() {
            let hits = s.log.iter().filter(|run| run.error.is_none() && run.reject[k]).count();
            assert_eq!(c.rejections, hits);
            assert_eq!(c.rate, hits as f64 / c.runs as f64);
            assert!((c.se - (c.rate * (1.0 - c.rate) / c.runs as f64).sqrt()).abs() < 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn report_invariants(seed in 0u64..1000, n in 20usize..60, ks in any::<bool>(), arch in any::<bool>()) {
        let sample = clayton_sample(n, seed);
        let cfg = TestConfig {
            hypothesis: if arch { Hypothesis::Archimedeanity } else { Hypothesis::Associativity },
            statistic: if ks { Statistic::Ks } else { Statistic::L2 },
            bootstrap: 30,
            grid_m: 4,
            seed,
            ..TestConfig::default()
        };
        let r = run_test(&sample, &cfg).unwrap();
        prop_assert_eq!(r.s_value, r.t_value + r.penalty);
        prop_assert!(r.penalty >= 0.0);
        prop_assert!(r.s_value >= r.t_value);
        prop_assert_eq!(r.penalty == 0.0, r.a_n == 0.0 || r.q05 == 0.0);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!((0.0..=0.25).contains(&r.a_n));
        prop_assert_eq!(r.reject, r.tested_value() > r.q_alpha);
    }

    #[test]
    fn reports_are_invariant_under_increasing_transforms(seed in 0u64..1000, shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let sample = clayton_sample(30, seed);
        let moved = Sample::new(sample.rows().iter().map(|&[a, b]| [scale * a + shift, (b * 3.0).exp()]).collect()).unwrap();
        let cfg = TestConfig { bootstrap: 25, grid_m: 4, seed, ties: Ties::Error, ..TestConfig::default() };
        let a = run_test(&sample, &cfg).unwrap();
        let b = run_test(&moved, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn oracle_agreement_on_random_ranks(seed in any::<u64>(), n in 2usize..30, m in 2usize..6) {
        let rk = common::Ranks::random(n, Stream::from_seed(seed));
        let ec = archcop::EmpiricalCopula::new(&rk.matrix());
        let field = archcop::process::hn_field(&ec, &archcop::Grid3::new(m).unwrap());
        prop_assert_eq!(field.values, common::hn(&rk, m));
    }
}
