//! Acceptance checks, one function per criterion. Each returns an [`Outcome`]
//! with the measured numbers so failures can be read off the report.

use std::f64::consts::PI;

use mwrn::experiment::{counts_to_resolutions, db_to_linear, table1_counts};
use mwrn::network::{alpha_closed, alpha_icsi, relay_power_estimate, NetworkConfig, NetworkParams, Qam};
use mwrn::quantizer::{design_lloyd_max, design_lloyd_max_with, LloydMaxOptions, Resolution};
use mwrn::randmat::{haar_moment_estimate, wishart_moment_estimate, HaarMoment, WishartMoment};
use mwrn::rates::{
    rate_asymptotic_large_n, rate_asymptotic_loading, rate_closed_icsi, rate_closed_perfect, rate_monte_carlo,
    rate_uniform, AsymptoticParams, McOptions,
};
use mwrn::rng::{complex_normal, substream, ORACLE};
use mwrn::Result;
use num_complex::Complex64;
use rand::Rng;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome { passed, detail: detail.into() }
    }
}

pub fn table1(n: usize) -> Vec<Resolution> {
    counts_to_resolutions(&table1_counts(n).expect("mixed-ADC-#1 size"))
}

fn uniform(n: usize, bits: u8) -> Vec<Resolution> {
    vec![Resolution::Bits(bits); n]
}

fn lossless(n: usize) -> Vec<Resolution> {
    vec![Resolution::Infinite; n]
}

fn params(n: usize, k: usize, p_u_db: f64, p_r_db: f64, res: Vec<Resolution>) -> Result<NetworkParams> {
    NetworkParams::new(NetworkConfig::homogeneous(n, k, db_to_linear(p_u_db), db_to_linear(p_r_db)), res)
}

/// Uniform 1/2/3-bit, full precision, and mixed-ADC-#1 where it is defined for `n`.
fn profiles(n: usize) -> Vec<(&'static str, Vec<Resolution>)> {
    let mut out = vec![
        ("1-bit", uniform(n, 1)),
        ("2-bit", uniform(n, 2)),
        ("3-bit", uniform(n, 3)),
        ("inf-bit", lossless(n)),
    ];
    if let Ok(counts) = table1_counts(n) {
        out.push(("mixed-ADC-#1", counts_to_resolutions(&counts)));
    }
    out
}

const POWERS_DB: [f64; 5] = [-5.0, 0.0, 5.0, 10.0, 15.0];
const SEED: u64 = 2024;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Closed form against the semi-analytic simulator over the user-power grid.
pub fn criterion_1() -> Result<Outcome> {
    let mut worst = (0.0, String::new());
    for (name, res) in profiles(100) {
        for p_u_db in POWERS_DB {
            let p = params(100, 5, p_u_db, 15.0, res.clone())?;
            let closed = rate_closed_perfect(&p, 1, 1)?;
            let mc = rate_monte_carlo(&p, 1, 1, 1000, 100, SEED, &McOptions::default())?.rate.mean;
            let gap = rel(closed, mc);
            if gap > worst.0 {
                worst = (gap, format!("{name} at {p_u_db} dB: closed {closed:.4}, MC {mc:.4}"));
            }
        }
    }
    Ok(Outcome::new(worst.0 < 0.05, format!("max relative gap {:.2}% ({})", 100.0 * worst.0, worst.1)))
}

/// Mixed-ADC-#1 over full precision at p_u = 15 dB.
pub fn criterion_2() -> Result<Outcome> {
    let mixed = params(100, 5, 15.0, 15.0, table1(100))?;
    let full = params(100, 5, 15.0, 15.0, lossless(100))?;
    let closed = rate_closed_perfect(&mixed, 1, 1)? / rate_closed_perfect(&full, 1, 1)?;
    let mc_rate = |p: &NetworkParams| rate_monte_carlo(p, 1, 1, 1000, 100, SEED, &McOptions::default()).map(|m| m.rate.mean);
    let mc = mc_rate(&mixed)? / mc_rate(&full)?;
    let ok = |r: f64| (0.70..=0.78).contains(&r);
    Ok(Outcome::new(ok(closed) && ok(mc), format!("ratio closed {closed:.4}, MC {mc:.4}; required [0.70, 0.78]")))
}

/// Large-N approximation against the exact closed form at K = 5.
pub fn criterion_3() -> Result<Outcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, make) in [("2-bit", uniform as fn(usize, u8) -> Vec<Resolution>), ("mixed-ADC-#1", |n, _| table1(n))] {
        let mut line = Vec::new();
        for n in [50, 100, 200, 300, 400] {
            let p = params(n, 5, 15.0, 15.0, make(n, 2))?;
            let exact = rate_closed_perfect(&p, 1, 1)?;
            let approx = rate_asymptotic_large_n(&p, 1, 1)?;
            let gap = (approx - exact) / exact;
            passed &= if n >= 200 { gap.abs() <= 0.02 } else { approx > exact };
            line.push(format!("N={n} {:+.2}%", 100.0 * gap));
        }
        parts.push(format!("{name}: {}", line.join(", ")));
    }
    Ok(Outcome::new(passed, parts.join("; ")))
}

fn loading_gap(res: Vec<Resolution>, n: usize, k: usize) -> Result<(f64, f64)> {
    let p = params(n, k, 15.0, 15.0, res)?;
    let exact = rate_closed_perfect(&p, 1, 1)?;
    let asym = AsymptoticParams::from_params(&p, 1)?;
    let approx = rate_asymptotic_loading(&asym, p.p_u(), p.betas()[1], p.profile().aggregates().g1)?;
    Ok((exact, approx))
}

/// Fixed-loading approximation: tight for uniform 2-bit, an upper bound for the mixed profile.
pub fn criterion_4() -> Result<Outcome> {
    let mut uniform_ok = true;
    let mut bound_ok = true;
    let mut uni = Vec::new();
    let mut mixed = Vec::new();
    for n in [200, 300, 400] {
        let (exact, approx) = loading_gap(uniform(n, 2), n, n / 20)?;
        let gap = (approx - exact) / exact;
        uniform_ok &= gap.abs() <= 0.03;
        uni.push(format!("N={n} {:+.2}%", 100.0 * gap));

        let mut gaps = Vec::new();
        for k in [n / 20, n / 10] {
            let (exact, approx) = loading_gap(table1(n), n, k)?;
            bound_ok &= approx >= exact;
            gaps.push((approx - exact) / exact);
        }
        bound_ok &= gaps[0] < gaps[1];
        mixed.push(format!("N={n} c=0.05 {:+.2}% c=0.1 {:+.2}%", 100.0 * gaps[0], 100.0 * gaps[1]));
    }
    Ok(Outcome::new(
        uniform_ok && bound_ok,
        format!(
            "uniform 2-bit c=0.05 [{}] within 3%: {}; mixed upper bound shrinking with c [{}]: {}",
            uni.join(", "),
            if uniform_ok { "yes" } else { "no" },
            mixed.join(", "),
            if bound_ok { "yes" } else { "no" }
        ),
    ))
}

/// Uniform and perfect-CSI specializations reproduce the general expressions.
pub fn criterion_5() -> Result<Outcome> {
    let mut worst_uniform: f64 = 0.0;
    let mut worst_icsi: f64 = 0.0;
    let betas = [1.0, 0.5, 0.5, 2.0, 3.0];
    for n in [20, 100, 200] {
        for p_u_db in POWERS_DB {
            for (_, res) in profiles(n) {
                let cfg = NetworkConfig {
                    betas: betas.to_vec(),
                    ..NetworkConfig::homogeneous(n, 5, db_to_linear(p_u_db), db_to_linear(15.0))
                };
                let p = NetworkParams::new(cfg, res.clone())?;
                for t in 1..5 {
                    worst_icsi = worst_icsi.max(rel(alpha_icsi(&p, t)?, alpha_closed(&p, t)?));
                    for k in 1..=5 {
                        let perfect = rate_closed_perfect(&p, k, t)?;
                        worst_icsi = worst_icsi.max(rel(rate_closed_icsi(&p, k, t)?, perfect));
                        if p.profile().uniform_resolution().is_some() {
                            worst_uniform = worst_uniform.max(rel(rate_uniform(&p, k, t)?, perfect));
                        }
                    }
                }
            }
        }
    }
    Ok(Outcome::new(
        worst_uniform <= 1e-12 && worst_icsi <= 1e-12,
        format!("max relative difference: uniform {worst_uniform:.1e}, imperfect CSI at zero error {worst_icsi:.1e}"),
    ))
}

/// Simulated relay power under the closed-form coefficients.
pub fn criterion_6() -> Result<Outcome> {
    let mut worst = (0.0, String::new());
    for k in [5, 8] {
        for (name, res) in profiles(100) {
            let p = params(100, k, 10.0, 15.0, res)?;
            let icsi = p.with_sigma_e_sq(0.1)?;
            for (label, params, alpha) in [("perfect", &p, alpha_closed(&p, 1)?), ("icsi 0.1", &icsi, alpha_icsi(&icsi, 1)?)] {
                let power = relay_power_estimate(params, 1, alpha, 400, 25, SEED, Qam::default())?.power.mean;
                let gap = rel(power, params.p_r());
                if gap > worst.0 {
                    worst = (gap, format!("K={k} {name} {label}: {power:.3} vs {:.3}", params.p_r()));
                }
            }
        }
    }
    Ok(Outcome::new(worst.0 < 0.05, format!("max relative power error {:.2}% ({})", 100.0 * worst.0, worst.1)))
}

fn integrated_mse(bits: u32) -> Result<f64> {
    let q = design_lloyd_max(bits, 2.0)?;
    let points = 1_000_000;
    let h = 24.0 / points as f64;
    Ok((0..points)
        .map(|i| {
            let z = -12.0 + (i as f64 + 0.5) * h;
            let e = z - q.quantize(z);
            e * e * (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * h
        / (2.0 * PI).sqrt())
}

/// Quantizer design and Bussgang statistics.
pub fn criterion_7() -> Result<Outcome> {
    let gain = design_lloyd_max(1, 2.0)?.bussgang_gain(2.0)?;
    let gain_ok = (gain - 2.0 / PI).abs() <= 1e-6;

    let q3 = design_lloyd_max(3, 2.0)?;
    let grid = integrated_mse(3)?;
    let mse_ok = (q3.normalized_mse() - grid).abs() <= 1e-3;

    let mut rng = substream(SEED, ORACLE);
    let mut monotone = 0;
    for _ in 0..100 {
        let bits = rng.random_range(1..=10);
        let v = 10f64.powf(rng.random_range(-3.0..5.0));
        let d = design_lloyd_max_with(bits, v, &LloydMaxOptions::default())?;
        if d.mse_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)) {
            monotone += 1;
        }
    }

    let n = 1_000_000;
    let v = 2.0;
    let g3 = q3.bussgang_gain(v)?;
    let (mut cross, mut dd, mut xx) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    for _ in 0..n {
        let x = complex_normal(&mut rng, v);
        let d = q3.quantize_complex(x)? - x * g3;
        cross += d * x.conj();
        dd += d.norm_sqr();
        xx += x.norm_sqr();
    }
    let corr = cross.norm() / (dd * xx).sqrt();
    let band = 5.0 / (n as f64).sqrt();

    Ok(Outcome::new(
        gain_ok && mse_ok && monotone == 100 && corr < band,
        format!(
            "1-bit gain {gain:.9}; 3-bit MSE {:.6} vs integrated {grid:.6}; {monotone}/100 MSE sequences non-increasing; \
             residual correlation {corr:.2e} < {band:.1e}",
            q3.normalized_mse()
        ),
    ))
}

/// Haar moments and the inverse-Wishart diagonal.
pub fn criterion_8() -> Result<Outcome> {
    let mut misses = Vec::new();
    let mut checked = 0;
    for n in [4, 8] {
        for (i, m) in HaarMoment::ALL.into_iter().enumerate() {
            let e = haar_moment_estimate(n, m, 100_000, SEED + 10 * n as u64 + i as u64)?;
            checked += 1;
            if !e.within_sigma(m.exact(n), 5.0) {
                misses.push(format!("N={n} {m}: {:.5} vs {:.5}", e.mean, m.exact(n)));
            }
        }
    }
    let diag = wishart_moment_estimate(10, &[1.0, 1.0], WishartMoment::InvDiag, 100_000, SEED)?;
    for (i, e) in diag.iter().enumerate() {
        checked += 1;
        if !e.within_sigma(0.125, 5.0) {
            misses.push(format!("inverse Wishart [{i}]: {:.5} vs 0.125", e.mean));
        }
    }
    let detail = if misses.is_empty() {
        format!("{checked} moments within 5 sigma; inverse Wishart diagonal {:.5}, {:.5}", diag[0].mean, diag[1].mean)
    } else {
        misses.join("; ")
    };
    Ok(Outcome::new(misses.is_empty(), detail))
}

/// Orderings in power, resolution, user count and CSI error.
pub fn criterion_9() -> Result<Outcome> {
    let mut failures = Vec::new();
    let rate = |n, k, p_u_db, p_r_db, res: Vec<Resolution>| -> Result<f64> {
        rate_closed_perfect(&params(n, k, p_u_db, p_r_db, res)?, 1, 1)
    };
    for (name, res) in profiles(100) {
        let by_pu: Vec<f64> = POWERS_DB.iter().map(|&x| rate(100, 5, x, 15.0, res.clone())).collect::<Result<_>>()?;
        if by_pu.windows(2).any(|w| w[1] < w[0]) {
            failures.push(format!("{name} p_u"));
        }
        let by_pr: Vec<f64> = POWERS_DB.iter().map(|&x| rate(100, 5, 15.0, x, res.clone())).collect::<Result<_>>()?;
        if by_pr.windows(2).any(|w| w[1] < w[0]) {
            failures.push(format!("{name} P_R"));
        }
        let by_k: Vec<f64> = [5, 10, 15, 20].iter().map(|&k| rate(100, k, 15.0, 15.0, res.clone())).collect::<Result<_>>()?;
        if by_k.windows(2).any(|w| w[1] > w[0]) {
            failures.push(format!("{name} K"));
        }
        let base = params(100, 8, 15.0, 15.0, res.clone())?;
        let by_sigma: Vec<f64> = [0.0, 0.01, 0.05, 0.1]
            .iter()
            .map(|&s| rate_closed_icsi(&base.with_sigma_e_sq(s)?, 1, 1))
            .collect::<Result<_>>()?;
        if by_sigma.windows(2).any(|w| w[1] > w[0]) {
            failures.push(format!("{name} sigma_e_sq"));
        }
    }

    let mut rng = substream(SEED, ORACLE + 1);
    let mut res = table1(100);
    let mut current = rate(100, 5, 10.0, 15.0, res.clone())?;
    for _ in 0..60 {
        let i = rng.random_range(0..res.len());
        res[i] = match res[i] {
            Resolution::Bits(b) if b < 8 => Resolution::Bits(b + 1),
            _ => Resolution::Infinite,
        };
        let next = rate(100, 5, 10.0, 15.0, res.clone())?;
        if next < current - 1e-12 {
            failures.push(format!("antenna {i} upgrade {current:.6} -> {next:.6}"));
        }
        current = next;
    }

    let gap = |bits: u8| -> Result<f64> {
        let p = params(200, 8, 15.0, 15.0, uniform(200, bits))?;
        Ok(rate_closed_icsi(&p, 1, 1)? - rate_closed_icsi(&p.with_sigma_e_sq(0.1)?, 1, 1)?)
    };
    let (g1, g4) = (gap(1)?, gap(4)?);
    if g4 <= g1 {
        failures.push(format!("CSI gap 4-bit {g4:.4} <= 1-bit {g1:.4}"));
    }
    let detail = if failures.is_empty() {
        format!("all orderings hold; CSI gap at N=200, K=8: 1-bit {g1:.4}, 4-bit {g4:.4}")
    } else {
        format!("violations: {}", failures.join(", "))
    };
    Ok(Outcome::new(failures.is_empty(), detail))
}

pub type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

pub const CRITERIA: [Criterion; 9] = [
    (1, "closed form vs Monte Carlo", criterion_1),
    (2, "mixed-ADC-#1 at 74% of full precision", criterion_2),
    (3, "large-N approximation", criterion_3),
    (4, "fixed-loading approximation", criterion_4),
    (5, "specialization identities", criterion_5),
    (6, "relay power coefficient", criterion_6),
    (7, "quantizer suite", criterion_7),
    (8, "random-matrix oracles", criterion_8),
    (9, "monotonicity and ordering", criterion_9),
];
