use std::f64::consts::PI;

use mwrn::network::{alpha_closed, alpha_icsi, AdcProfile, NetworkConfig, NetworkParams};
use mwrn::quantizer::Resolution;
use mwrn::rates::*;
use proptest::prelude::*;

mod common;
use common::{db, from_counts, lossless, params, table1_100, uniform};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn aggregate_examples() {
    let v = 2.0;
    let u = AdcProfile::uniform(10, Resolution::Bits(3), v).unwrap();
    let a = aggregates(&u, v).unwrap();
    assert!((a.g2 - a.g1 * a.g1).abs() < 1e-15);
    assert_eq!(a.c_hat, u.stats()[0].output_variance);

    let inf = AdcProfile::uniform(10, Resolution::Infinite, v).unwrap();
    let a = aggregates(&inf, v).unwrap();
    assert_eq!((a.g1, a.g2, a.c_hat), (1.0, 1.0, v));

    let mut half = vec![Resolution::Bits(1); 5];
    half.extend(vec![Resolution::Infinite; 5]);
    let a = aggregates(&AdcProfile::design(half, v).unwrap(), v).unwrap();
    assert!((a.g1 - (1.0 + 2.0 / PI) / 2.0).abs() < 1e-12);
    assert!((a.g2 - (1.0 + 4.0 / (PI * PI)) / 2.0).abs() < 1e-12);
    assert!((a.c_hat - (v + 4.0 / PI) / 2.0).abs() < 1e-12);

    assert!(aggregates(&u, 2.5).is_err());
}

#[test]
fn lossless_uniform_rate_equals_theorem() {
    let p = params(64, 6, 10.0, 12.0, lossless(64));
    for k in 1..=6 {
        for t in 1..6 {
            let a = rate_uniform(&p, k, t).unwrap();
            let b = rate_closed_perfect(&p, k, t).unwrap();
            assert!(rel(a, b) <= 1e-12);
        }
    }
}

#[test]
fn product_of_gain_and_power_is_what_matters() {
    let cfg = NetworkConfig { betas: vec![1.0, 0.5, 2.0, 1.5], ..NetworkConfig::homogeneous(50, 4, 3.0, 20.0) };
    let doubled = NetworkConfig { p_u: 6.0, ..cfg.clone() };
    let (g, c) = (0.8, 12.0);
    for t in 1..4 {
        let a = alpha_uniform_from(&cfg, g, c, t).unwrap();
        let b = alpha_uniform_from(&doubled, g / 2f64.sqrt(), c, t).unwrap();
        assert!(rel(a, b) <= 1e-12);
        let a = rate_uniform_from(&cfg, g, c, 1, t).unwrap();
        let b = rate_uniform_from(&doubled, g / 2f64.sqrt(), c, 1, t).unwrap();
        assert!(rel(a, b) <= 1e-12);
    }
}

#[test]
fn icsi_orderings() {
    let base = params(200, 8, 15.0, 15.0, uniform(200, 3));
    let r: Vec<f64> = [0.0, 0.01, 0.1]
        .iter()
        .map(|&s| rate_closed_icsi(&base.with_sigma_e_sq(s).unwrap(), 1, 1).unwrap())
        .collect();
    assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");

    let gap = |bits: u8| {
        let p = params(200, 8, 15.0, 15.0, uniform(200, bits));
        rate_closed_icsi(&p, 1, 1).unwrap() - rate_closed_icsi(&p.with_sigma_e_sq(0.1).unwrap(), 1, 1).unwrap()
    };
    assert!(gap(4) > gap(1), "{} vs {}", gap(4), gap(1));
}

#[test]
fn large_n_sinr_is_linear_in_n() {
    let sinr = |n: usize| {
        let p = params(n, 5, 15.0, 15.0, uniform(n, 2));
        2f64.powf(rate_asymptotic_large_n(&p, 1, 1).unwrap()) - 1.0
    };
    for n in [50, 100, 400] {
        assert!((sinr(2 * n) / sinr(n) - 2.0).abs() < 1e-12);
    }
}

#[test]
fn large_n_rate_has_a_ceiling_in_user_power() {
    let r = |p_u_db: f64| rate_asymptotic_large_n(&params(100, 5, p_u_db, 15.0, uniform(100, 2)), 1, 1).unwrap();
    assert!(r(40.0) - r(60.0) < 0.01 && r(60.0) >= r(40.0));
}

#[test]
fn loading_rate_examples() {
    let p = params(200, 10, 15.0, 15.0, uniform(200, 2));
    let mut asym = AsymptoticParams::from_params(&p, 1).unwrap();
    let g1 = p.profile().aggregates().g1;
    asym.c = 0.05;
    let a = 2f64.powf(rate_asymptotic_loading(&asym, p.p_u(), 1.0, g1).unwrap()) - 1.0;
    asym.c = 0.1;
    let b = 2f64.powf(rate_asymptotic_loading(&asym, p.p_u(), 1.0, g1).unwrap()) - 1.0;
    assert!((a / b - 19.0 / 9.0).abs() < 1e-12);

    let (r1, _) = closed_form(&p, RateMode::AsymLoading, 1, 1).unwrap();
    let (r2, _) = closed_form(&p.with_p_r(1e6).unwrap(), RateMode::AsymLoading, 1, 1).unwrap();
    assert_eq!(r1.to_bits(), r2.to_bits());

    asym.c_hat_bar = 0.1 * p.p_u() * asym.beta_bar * g1 * g1;
    match rate_asymptotic_loading(&asym, p.p_u(), 1.0, g1) {
        Err(mwrn::Error::ApproximationBreakdown { denominator, .. }) => assert!(denominator < 0.0),
        other => panic!("expected breakdown, got {other:?}"),
    }
}

#[test]
fn loading_denominator_is_positive_for_designed_profiles() {
    for res in [uniform(100, 1), uniform(100, 2), table1_100(), lossless(100)] {
        for p_u_db in [-10.0, 0.0, 15.0, 40.0] {
            let p = params(100, 5, p_u_db, 15.0, res.clone());
            let asym = AsymptoticParams::from_params(&p, 1).unwrap();
            let g1 = p.profile().aggregates().g1;
            assert!(asym.c_hat_bar - p.p_u() * asym.beta_bar * g1 * g1 > 0.0);
        }
    }
}

#[test]
fn semi_analytic_matches_closed_form_for_two_bits() {
    let p = params(100, 5, 15.0, 15.0, uniform(100, 2));
    let closed = rate_closed_perfect(&p, 1, 1).unwrap();
    let mc = rate_monte_carlo(&p, 1, 1, 1000, 100, 21, &McOptions::default()).unwrap();
    assert!(rel(closed, mc.rate.mean) < 0.03, "{closed} vs {:?}", mc.rate);
}

#[test]
fn semi_analytic_and_empirical_agree_at_infinite_resolution() {
    for p_u_db in [0.0, 15.0] {
        let p = params(100, 5, p_u_db, 15.0, lossless(100));
        let semi = rate_monte_carlo(&p, 1, 1, 1000, 100, 22, &McOptions::default()).unwrap().rate;
        let opts = McOptions { mode: McMode::Empirical, ..Default::default() };
        let emp = rate_monte_carlo(&p, 1, 1, 1000, 100, 22, &opts).unwrap().rate;
        let se = (semi.std_error.powi(2) + emp.std_error.powi(2)).sqrt();
        assert!((semi.mean - emp.mean).abs() < 2.0 * se, "{semi:?} vs {emp:?}");
    }
}

#[test]
fn monte_carlo_is_reproducible_across_thread_counts() {
    let p = params(40, 4, 5.0, 10.0, table1_100().into_iter().step_by(2).take(40).collect());
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rate_monte_carlo(&p, 2, 3, 200, 20, 5, &McOptions { mode: McMode::Empirical, ..Default::default() }))
            .unwrap()
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.rate.mean.to_bits(), b.rate.mean.to_bits());
    assert_eq!(a.rate.std_error.to_bits(), b.rate.std_error.to_bits());
}

#[test]
fn empirical_alpha_option_runs() {
    let p = params(64, 4, 10.0, 15.0, uniform(64, 3));
    let opts = McOptions { alpha: AlphaSource::Empirical, ..Default::default() };
    let mc = rate_monte_carlo(&p, 1, 1, 200, 20, 3, &opts).unwrap();
    let closed_alpha = alpha_closed(&p, 1).unwrap();
    assert!(rel(mc.alpha, closed_alpha) < 0.05);
}

#[test]
fn monte_carlo_rejects_tiny_runs() {
    let p = params(20, 2, 0.0, 0.0, uniform(20, 1));
    assert!(rate_monte_carlo(&p, 1, 1, 50, 100, 0, &McOptions::default()).is_err());
    assert!(rate_monte_carlo(&p, 1, 1, 100, 5, 0, &McOptions::default()).is_err());
}

#[test]
fn rate_decreases_with_users() {
    for res in [uniform(100, 1), uniform(100, 4), table1_100(), lossless(100)] {
        let r: Vec<f64> = [5, 10, 15, 20]
            .iter()
            .map(|&k| rate_closed_perfect(&params(100, k, 15.0, 15.0, res.clone()), 1, 1).unwrap())
            .collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    }
}

fn any_resolution() -> impl Strategy<Value = Resolution> {
    prop_oneof![(1u8..=8).prop_map(Resolution::Bits), Just(Resolution::Infinite)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_specialization_is_exact(
        bits in 1u8..=8,
        k in 2usize..8,
        extra in 2usize..80,
        p_u_db in -5.0f64..20.0,
        p_r_db in 0.0f64..25.0,
        betas in prop::collection::vec(0.2f64..3.0, 8),
    ) {
        let n = k + extra;
        let cfg = NetworkConfig { betas: betas[..k].to_vec(), ..NetworkConfig::homogeneous(n, k, db(p_u_db), db(p_r_db)) };
        let p = NetworkParams::new(cfg, uniform(n, bits)).unwrap();
        for t in 1..k {
            let a = alpha_closed(&p, t);
            let b = alpha_uniform(&p, t).unwrap();
            prop_assert!(rel(a.unwrap(), b) <= 1e-12);
            for user in 1..=k {
                let a = rate_closed_perfect(&p, user, t).unwrap();
                let b = rate_uniform(&p, user, t).unwrap();
                prop_assert!(rel(a, b) <= 1e-12, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn icsi_reduces_to_perfect(
        counts in prop::collection::vec(0usize..12, 8),
        k in 2usize..6,
        p_u_db in -5.0f64..20.0,
        betas in prop::collection::vec(0.2f64..3.0, 6),
    ) {
        let mut res = from_counts(&counts);
        res.extend(vec![Resolution::Infinite; 3]);
        let n = res.len().max(k + 2);
        res.resize(n, Resolution::Bits(2));
        let cfg = NetworkConfig { betas: betas[..k].to_vec(), ..NetworkConfig::homogeneous(n, k, db(p_u_db), db(15.0)) };
        let p = NetworkParams::new(cfg, res).unwrap();
        for t in 1..k {
            prop_assert_eq!(alpha_icsi(&p, t).unwrap(), alpha_closed(&p, t).unwrap());
            for user in 1..=k {
                let a = rate_closed_icsi(&p, user, t).unwrap();
                let b = rate_closed_perfect(&p, user, t).unwrap();
                prop_assert!(rel(a, b) <= 1e-12);
            }
        }
    }

    #[test]
    fn rate_grows_with_any_single_antenna_resolution(
        res in prop::collection::vec(any_resolution(), 20..60),
        pick in 0usize..60,
        p_u_db in -5.0f64..20.0,
    ) {
        let n = res.len();
        let pick = pick % n;
        let better = match res[pick] {
            Resolution::Bits(b) if b < 8 => Resolution::Bits(b + 1),
            Resolution::Bits(_) => Resolution::Infinite,
            Resolution::Infinite => return Ok(()),
        };
        let mut upgraded = res.clone();
        upgraded[pick] = better;
        let r0 = rate_closed_perfect(&params(n, 4, p_u_db, 15.0, res), 1, 1).unwrap();
        let r1 = rate_closed_perfect(&params(n, 4, p_u_db, 15.0, upgraded), 1, 1).unwrap();
        prop_assert!(r1 >= r0 - 1e-12, "{} -> {}", r0, r1);
    }

    #[test]
    fn rate_grows_with_powers(
        counts in prop::collection::vec(1usize..6, 8),
        k in 2usize..6,
    ) {
        let res = from_counts(&counts);
        let n = res.len();
        let grid = [-5.0, 0.0, 5.0, 10.0, 15.0];
        for p_r_db in grid {
            let r: Vec<f64> = grid.iter().map(|&p| rate_closed_perfect(&params(n, k, p, p_r_db, res.clone()), 1, 1).unwrap()).collect();
            prop_assert!(r.windows(2).all(|w| w[1] >= w[0]), "p_u sweep {:?}", r);
        }
        for p_u_db in grid {
            let r: Vec<f64> = grid.iter().map(|&p| rate_closed_perfect(&params(n, k, p_u_db, p, res.clone()), 1, 1).unwrap()).collect();
            prop_assert!(r.windows(2).all(|w| w[1] >= w[0]), "P_R sweep {:?}", r);
        }
    }
}
