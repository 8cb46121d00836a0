use mwrn::network::*;
use mwrn::quantizer::Resolution;
use mwrn::randmat::{sample_channel, CMatrix, CVector};
use mwrn::rng::{complex_normal, substream, ORACLE};
use mwrn::stats::Estimate;
use num_complex::Complex64;
use proptest::prelude::*;

mod common;
use common::{db, params, table1_100};

fn perm(k: usize, t: usize) -> CMatrix {
    permutation_power(k, t).map(Complex64::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn zf_identity_holds_for_every_slot(k in 2usize..7, extra in 0usize..40, seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let n = k + extra;
        let betas: Vec<f64> = (0..k).map(|i| 0.5 + i as f64 * 0.7).collect();
        let ch = sample_channel(n, k, &betas, seed).unwrap();
        let h = &ch.overall;
        let bf = match ZfBeamformer::new(h) {
            Ok(bf) => bf,
            Err(_) => return Ok(()),
        };
        for t in 1..k {
            let g = bf.matrix(t, alpha);
            let target = perm(k, t) * Complex64::from(alpha.sqrt());
            let err = (h.transpose() * &g * h - &target).norm() / target.norm();
            prop_assert!(err < 1e-8, "t={} err={}", t, err);
        }
    }

    #[test]
    fn partner_map_is_a_cycle_power(k in 2usize..30) {
        for t in 1..k {
            let mut seen = vec![false; k];
            for user in 1..=k {
                let p = partner_index(user, t, k).unwrap();
                prop_assert!(p != user);
                prop_assert!(!seen[p - 1]);
                seen[p - 1] = true;
            }
        }
        for user in 1..=k {
            let mut partners: Vec<usize> = (1..k).map(|t| partner_index(user, t, k).unwrap()).collect();
            partners.sort();
            let others: Vec<usize> = (1..=k).filter(|&j| j != user).collect();
            prop_assert_eq!(partners, others);
        }
    }
}

#[test]
fn two_users_swap() {
    let ch = sample_channel(6, 2, &[1.0, 3.0], 4).unwrap();
    let g = zf_matrix(&ch.overall, 1, 1.0).unwrap();
    let eff = ch.overall.transpose() * g * &ch.overall;
    assert!((eff[(0, 1)] - 1.0).norm() < 1e-10 && (eff[(1, 0)] - 1.0).norm() < 1e-10);
    assert!(eff[(0, 0)].norm() < 1e-10 && eff[(1, 1)].norm() < 1e-10);
}

#[test]
fn zf_matrix_is_deterministic() {
    let a = zf_matrix(&sample_channel(8, 3, &[1.0; 3], 99).unwrap().overall, 2, 0.7).unwrap();
    let b = zf_matrix(&sample_channel(8, 3, &[1.0; 3], 99).unwrap().overall, 2, 0.7).unwrap();
    assert_eq!(a, b);
}

#[test]
fn singular_channel_is_reported() {
    let mut h = sample_channel(5, 2, &[1.0; 2], 1).unwrap().overall;
    let c0 = h.column(0).into_owned();
    h.set_column(1, &c0);
    match zf_matrix(&h, 1, 1.0) {
        Err(mwrn::Error::Singular { condition }) => assert!(condition > CONDITION_LIMIT),
        other => panic!("expected singular error, got {other:?}"),
    }
}

#[test]
fn alpha_closed_lossless_homogeneous() {
    let (n, k) = (40usize, 4usize);
    let p = params(n, k, 5.0, 10.0, vec![Resolution::Infinite; n]);
    let (nf, kf) = (n as f64, k as f64);
    let shape = (nf * kf + nf - kf * kf) / ((nf - kf).powi(2) * (kf + 1.0));
    let want = db(10.0) * (nf - kf) / (kf * db(5.0) + shape * kf);
    for t in 1..k {
        let a = alpha_closed(&p, t).unwrap();
        assert!((a - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn alpha_icsi_reduces_to_perfect() {
    let p = params(100, 5, 15.0, 15.0, table1_100());
    for t in 1..5 {
        assert_eq!(alpha_icsi(&p, t).unwrap(), alpha_closed(&p, t).unwrap());
    }
}

#[test]
fn alpha_icsi_decreases_with_error_power() {
    let p = params(100, 8, 15.0, 15.0, vec![Resolution::Bits(3); 100]);
    let a: Vec<f64> = [0.0, 0.05, 0.1].iter().map(|&s| alpha_icsi(&p.with_sigma_e_sq(s).unwrap(), 1).unwrap()).collect();
    assert!(a[0] > a[1] && a[1] > a[2], "{a:?}");
}

#[test]
fn alpha_closed_needs_perfect_csi() {
    let p = params(20, 2, 0.0, 0.0, vec![Resolution::Bits(1); 20]).with_sigma_e_sq(0.1).unwrap();
    assert!(alpha_closed(&p, 1).is_err());
}

#[test]
fn alpha_closed_matches_empirical_for_mixed_profile() {
    let p = params(100, 5, 15.0, 15.0, table1_100());
    let closed = alpha_closed(&p, 1).unwrap();
    let emp = alpha_empirical(&p, 1, 400, 100, 11).unwrap();
    assert!((closed - emp).abs() / emp < 0.05, "{closed} vs {emp}");
}

#[test]
fn alpha_icsi_matches_empirical() {
    let p = params(100, 8, 15.0, 15.0, vec![Resolution::Bits(3); 100]).with_sigma_e_sq(0.1).unwrap();
    let closed = alpha_icsi(&p, 1).unwrap();
    let emp = alpha_empirical(&p, 1, 400, 100, 12).unwrap();
    assert!((closed - emp).abs() / emp < 0.05, "{closed} vs {emp}");
}

#[test]
fn alpha_empirical_lossless_and_linear() {
    let p = params(64, 4, 10.0, 15.0, vec![Resolution::Infinite; 64]);
    let closed = alpha_closed(&p, 1).unwrap();
    let emp = alpha_empirical(&p, 1, 400, 50, 13).unwrap();
    assert!((closed - emp).abs() / closed < 0.03, "{closed} vs {emp}");
    let again = alpha_empirical(&p, 1, 400, 50, 13).unwrap();
    assert_eq!(emp.to_bits(), again.to_bits());
    let doubled = alpha_empirical(&p.with_p_r(2.0 * p.p_r()).unwrap(), 1, 400, 50, 13).unwrap();
    assert_eq!(doubled, 2.0 * emp);
}

#[test]
fn closed_alpha_meets_power_budget() {
    for (k, res) in [(5, table1_100()), (8, vec![Resolution::Bits(1); 100]), (8, vec![Resolution::Bits(2); 64])] {
        let n = res.len();
        let p = params(n, k, 10.0, 15.0, res);
        let a = alpha_closed(&p, 1).unwrap();
        let m = relay_power_estimate(&p, 1, a, 300, 50, 14, Qam::default()).unwrap();
        let ratio = m.power.mean / p.p_r();
        assert!((ratio - 1.0).abs() < 0.05, "N={n} K={k}: {ratio}");
    }
}

#[test]
fn mac_examples() {
    let h = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    let x = CVector::from_element(1, Complex64::new(1.0, 0.0));
    let z = CVector::zeros(1);
    assert_eq!(simulate_mac(&h, &x, 4.0, &z).unwrap()[0], Complex64::new(2.0, 0.0));

    let ch = sample_channel(10, 3, &[1.0; 3], 0).unwrap();
    let r = simulate_mac(&ch.overall, &CVector::zeros(3), 2.0, &CVector::zeros(10)).unwrap();
    assert!(r.iter().all(|c| c.norm() == 0.0));
    assert!(simulate_mac(&ch.overall, &CVector::zeros(2), 2.0, &CVector::zeros(10)).is_err());
}

#[test]
fn received_variance_matches_v() {
    let p_u = db(5.0);
    let cfg = NetworkConfig::homogeneous(100, 5, p_u, 1.0);
    let qam = Qam::default();
    let mut rng = substream(3, ORACLE);
    let mut power = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        let ch = sample_channel(100, 5, &cfg.betas, 1000 + i).unwrap();
        let x = qam.symbols(&mut rng, 5);
        let z = CVector::from_fn(100, |_, _| complex_normal(&mut rng, 1.0));
        let r = simulate_mac(&ch.overall, &x, p_u, &z).unwrap();
        power.push(r[0].norm_sqr());
    }
    let e = Estimate::from_samples(&power);
    assert!(e.within_sigma(cfg.v(), 5.0), "{e:?} vs {}", cfg.v());
}

#[test]
fn quantize_received_examples() {
    let v = 7.0;
    let mut rng = substream(4, ORACLE);
    let r = CVector::from_fn(16, |_, _| complex_normal(&mut rng, v));

    let lossless = AdcProfile::uniform(16, Resolution::Infinite, v).unwrap();
    assert_eq!(quantize_received(&r, &lossless), r);

    let one_bit = AdcProfile::uniform(16, Resolution::Bits(1), v).unwrap();
    let level = (v / std::f64::consts::PI).sqrt();
    for c in quantize_received(&r, &one_bit).iter() {
        assert!((c.re.abs() - level).abs() < 1e-12 && (c.im.abs() - level).abs() < 1e-12);
    }
}

#[test]
fn quantized_output_variance_matches_closed_form() {
    let v = 5.0;
    let res = vec![Resolution::Bits(1), Resolution::Bits(2), Resolution::Bits(4), Resolution::Infinite];
    let profile = AdcProfile::design(res, v).unwrap();
    let mut rng = substream(5, ORACLE);
    let trials = 200_000;
    let mut power = (0..4).map(|_| Vec::with_capacity(trials)).collect::<Vec<_>>();
    for _ in 0..trials {
        let r = CVector::from_fn(4, |_, _| complex_normal(&mut rng, v));
        for (n, c) in quantize_received(&r, &profile).iter().enumerate() {
            power[n].push(c.norm_sqr());
        }
    }
    for (n, p) in power.iter().enumerate() {
        let e = Estimate::from_samples(p);
        let want = profile.stats()[n].output_variance;
        // 1-bit output power is constant, so the band gets a relative floor.
        assert!((e.mean - want).abs() <= 5.0 * e.std_error + 1e-9 * want, "antenna {n}: {e:?} vs {want}");
    }
}

#[test]
fn bc_slot_zero_input() {
    let ch = sample_channel(6, 3, &[1.0; 3], 2).unwrap();
    let g = zf_matrix(&ch.overall, 1, 1.0).unwrap();
    let out = simulate_bc_slot(&ch.overall, &g, &CVector::zeros(6), &CVector::zeros(3)).unwrap();
    assert!(out.iter().all(|c| c.norm() == 0.0));
    assert!(simulate_bc_slot(&ch.overall, &g, &CVector::zeros(5), &CVector::zeros(3)).is_err());
}

#[test]
fn lossless_perfect_csi_cancels_interference() {
    let (n, k) = (32, 4);
    let p_u = db(10.0);
    let ch = sample_channel(n, k, &[1.0, 2.0, 0.5, 1.5], 8).unwrap();
    let mut rng = substream(6, ORACLE);
    let qam = Qam::default();
    let alpha = 0.3;
    for t in 1..k {
        let g = zf_matrix(&ch.overall, t, alpha).unwrap();
        let x = qam.symbols(&mut rng, k);
        let r = simulate_mac(&ch.overall, &x, p_u, &CVector::zeros(n)).unwrap();
        let out = simulate_bc_slot(&ch.overall, &g, &r, &CVector::zeros(k)).unwrap();
        for user in 1..=k {
            let i = partner_index(user, t, k).unwrap() - 1;
            let want = x[i] * (alpha * p_u).sqrt();
            assert!((out[user - 1] - want).norm() < 1e-8 * want.norm());
        }
    }
}

/// Per-user interference and desired power of `h_kᵀ G G_b H` for one channel.
fn interference_ratio(p: &NetworkParams, seed: u64) -> f64 {
    let ch = sample_channel(p.n(), p.k(), p.betas(), seed).unwrap();
    let g = zf_matrix(&ch.overall, 1, 1.0).unwrap();
    let gains = CMatrix::from_diagonal(&CVector::from_iterator(p.n(), p.profile().gains().map(Complex64::from)));
    let eff = ch.overall.transpose() * g * gains * &ch.overall;
    let mut worst: f64 = 0.0;
    for user in 0..p.k() {
        let i = (user + 1) % p.k();
        let signal = eff[(user, i)].norm_sqr();
        let leak: f64 = (0..p.k()).filter(|&j| j != i).map(|j| eff[(user, j)].norm_sqr()).sum();
        worst = worst.max(leak / signal);
    }
    worst
}

#[test]
fn uniform_profile_nulls_interference() {
    let p = params(100, 5, 15.0, 15.0, vec![Resolution::Bits(2); 100]);
    for seed in 0..20 {
        assert!(interference_ratio(&p, seed) < 1e-6);
    }
}

#[test]
fn mixed_profile_leaks_interference() {
    let p = params(100, 5, 15.0, 15.0, table1_100());
    let total: f64 = (0..1000).map(|s| interference_ratio(&p, s)).sum();
    assert!(total / 1000.0 > 1e-4, "{}", total / 1000.0);
}

#[test]
fn training_set_has_received_variance() {
    let cfg = NetworkConfig::homogeneous(50, 5, db(10.0), 1.0);
    let xs = training_set(&cfg, 100_000, 3).unwrap();
    assert_eq!(xs.len(), 100_000);
    let e = Estimate::from_samples(&xs.iter().map(|x| 2.0 * x * x).collect::<Vec<_>>());
    // Samples within a symbol vector share a channel and symbols, so allow a wider band.
    assert!((e.mean - cfg.v()).abs() / cfg.v() < 0.05, "{e:?}");
}
