use proptest::prelude::*;

use saddlepath::cgf::{make_builtin, CgfSpec};
use saddlepath::cli::SpecFile;
use saddlepath::oracle::zoo::{galton_watson, inar, two_type};
use saddlepath::solver::{solve_saddlepoint, spa_joint, spa_stepwise};
use saddlepath::tilting::tilt;
use saddlepath::{CgfExpr, HistoryMode, SamplePath, SolverConfig};

fn builtin() -> impl Strategy<Value = CgfExpr> {
    prop_oneof![
        (-3.0..3.0f64, 0.1..5.0f64).prop_map(|(m, v)| make_builtin("gaussian", &[m, v]).unwrap()),
        (0.05..20.0f64).prop_map(|l| make_builtin("poisson", &[l]).unwrap()),
        (0.01..0.99f64).prop_map(|p| make_builtin("bernoulli", &[p]).unwrap()),
        (1u32..30, 0.01..0.99f64).prop_map(|(n, p)| make_builtin("binomial", &[n as f64, p]).unwrap()),
        (0.05..0.95f64).prop_map(|p| make_builtin("geometric", &[p]).unwrap()),
        (0.2..10.0f64, 0.05..0.95f64).prop_map(|(r, p)| make_builtin("negative-binomial", &[r, p]).unwrap()),
        (0.2..10.0f64, 0.2..5.0f64).prop_map(|(k, r)| make_builtin("gamma", &[k, r]).unwrap()),
        (0.0..0.9f64, 0.1..10.0f64).prop_map(|(pi, l)| make_builtin("zero-inflated-poisson", &[pi, l]).unwrap()),
    ]
}

/// A point strictly inside the domain: `u ∈ (-1, 1)` mapped onto
/// `(-2, min(2, 0.9·hi))`.
fn interior(k: &CgfExpr, u: f64) -> f64 {
    let hi = k.domain().bounds[0].hi.min(2.0 / 0.9) * 0.9;
    -2.0 + (u + 1.0) * 0.5 * (hi + 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_cgf_is_convex(k in builtin()) {
        let mut prev = f64::NEG_INFINITY;
        for j in 0..40 {
            let s = interior(&k, -0.99 + 1.98 * j as f64 / 39.0);
            let v = k.eval(&[s]).unwrap();
            prop_assert!(v.hess[(0, 0)] >= 0.0);
            prop_assert!(v.grad[0] >= prev - 1e-12 * prev.abs());
            prev = v.grad[0];
        }
    }

    #[test]
    fn cgf_vanishes_at_zero(k in builtin()) {
        prop_assert!(k.value(&[0.0]).unwrap().abs() < 1e-13);
    }

    #[test]
    fn relative_entropy_is_nonnegative(k in builtin(), u in -0.99..0.99f64) {
        let v = tilt(&k, &[interior(&k, u)]).unwrap();
        prop_assert!(v.relent >= -1e-12);
    }

    #[test]
    fn saddlepoint_hits_the_target(k in builtin(), u in -0.9..0.9f64) {
        let s = interior(&k, u);
        let x = k.eval(&[s]).unwrap().grad[0];
        let r = solve_saddlepoint(&k, &[x], &SolverConfig::default()).unwrap();
        if r.status.is_converged() {
            prop_assert!(r.grad_residual <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn cgf_spec_round_trips(k in builtin()) {
        let spec = k.spec().unwrap();
        let text = toml::to_string(&spec).unwrap();
        let back: CgfSpec = toml::from_str(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        let s = interior(&k, 0.3);
        prop_assert_eq!(back.build().unwrap().value(&[s]).unwrap(), k.value(&[s]).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn galton_watson_factorizes(
        rate in 0.3..3.0f64,
        x0 in 1u64..6,
        xs in prop::collection::vec(0u32..12, 1..6),
    ) {
        let p = galton_watson(&make_builtin("poisson", &[rate]).unwrap(), x0, xs.len()).unwrap();
        let path = SamplePath::scalar(&xs.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let cfg = SolverConfig::default();
        let j = spa_joint(&p, &path, &cfg).unwrap();
        let s = spa_stepwise(&p, &path, &cfg, HistoryMode::Extension).unwrap();
        prop_assert_eq!(j.status.is_converged(), s.status.is_converged());
        if let (Some(a), Some(b)) = (j.log_spa, s.log_spa) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn inar_factorizes(
        a1 in 0.05..0.6f64,
        a2 in 0.05..0.35f64,
        lambda in 0.5..4.0f64,
        xs in prop::collection::vec(1u32..10, 2..6),
    ) {
        let p = inar(&[a1, a2], &make_builtin("poisson", &[lambda]).unwrap(), &[2.0, 3.0], xs.len()).unwrap();
        let path = SamplePath::scalar(&xs.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let cfg = SolverConfig::default();
        let j = spa_joint(&p, &path, &cfg).unwrap();
        let s = spa_stepwise(&p, &path, &cfg, HistoryMode::Extension).unwrap();
        prop_assert!(j.status.is_converged() && s.status.is_converged());
        let (a, b) = (j.log_spa.unwrap(), s.log_spa.unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
    }

    #[test]
    fn spec_files_round_trip(x0 in 1u64..5, y0 in 1u64..5, n in 1usize..5) {
        let p = two_type([x0, y0], n).unwrap();
        let f = SpecFile::from_process(&p).unwrap();
        let back = SpecFile::parse(&f.to_toml()).unwrap();
        prop_assert_eq!(&back, &f);
        let q = back.to_process().unwrap();
        let s = vec![0.05; q.total_dim()];
        prop_assert_eq!(q.joint_cgf().value(&s).unwrap(), p.joint_cgf().value(&s).unwrap());
    }
}
