//! Average achievable rates: closed forms and the Monte-Carlo estimator that
//! checks them.
//!
//! Rates are per BC slot in bits per channel use, without the `1/K`
//! duplexing factor. Users are 1-based: `rate_*(params, k, t)` is the rate at
//! which user `k` decodes its slot-`t` partner `i(k, t)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    self, alpha_closed, alpha_empirical, alpha_icsi, draw_trial, partner0, AdcProfile, Aggregates, NetworkConfig,
    NetworkParams, Qam,
};
use crate::quantizer::Resolution;
use crate::randmat::CVector;
use crate::rng;
use crate::stats::Estimate;

/// Which closed form produced a rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateMode {
    #[serde(rename = "perfect")]
    Perfect,
    #[serde(rename = "icsi")]
    Icsi,
    #[serde(rename = "asym_largeN")]
    AsymLargeN,
    #[serde(rename = "asym_loading")]
    AsymLoading,
    #[serde(rename = "uniform")]
    Uniform,
}

impl RateMode {
    pub const ALL: [RateMode; 5] =
        [RateMode::Perfect, RateMode::Icsi, RateMode::AsymLargeN, RateMode::AsymLoading, RateMode::Uniform];
}

impl fmt::Display for RateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMode::Perfect => "perfect",
            RateMode::Icsi => "icsi",
            RateMode::AsymLargeN => "asym_largeN",
            RateMode::AsymLoading => "asym_loading",
            RateMode::Uniform => "uniform",
        })
    }
}

impl FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::validation(format!("unknown rate mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub k: usize,
    pub partner: usize,
    pub t: usize,
    pub rate_closed: f64,
    pub rate_mc: Option<Estimate>,
    pub mode: RateMode,
    pub alpha: f64,
    pub aggregates: Aggregates,
    pub params_echo: NetworkConfig,
}

/// Quantities held fixed when `N, K → ∞` with `K/N = c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub c: f64,
    /// `ĉ / K`
    pub c_hat_bar: f64,
    /// `β_sum / K`
    pub beta_bar: f64,
    pub beta_inv_sum: f64,
    pub beta_inv_pair_sum: f64,
}

impl AsymptoticParams {
    pub fn from_params(params: &NetworkParams, t: usize) -> Result<Self> {
        let cfg = params.config();
        let k = cfg.k as f64;
        let asym = AsymptoticParams {
            c: k / cfg.n as f64,
            c_hat_bar: params.profile().aggregates().c_hat / k,
            beta_bar: cfg.beta_sum() / k,
            beta_inv_sum: cfg.beta_inv_sum(),
            beta_inv_pair_sum: cfg.beta_inv_pair_sum(t),
        };
        asym.validate()?;
        Ok(asym)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::validation(format!("loading factor must be in (0, 1), got {}", self.c)));
        }
        let positive = [self.c_hat_bar, self.beta_bar, self.beta_inv_sum, self.beta_inv_pair_sum];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::validation("asymptotic parameters must be positive"));
        }
        Ok(())
    }
}

/// Antenna means `(g1, g2, ĉ)` of a profile, which must have been designed for `v`.
pub fn aggregates(profile: &AdcProfile, v: f64) -> Result<Aggregates> {
    if !profile.matches_variance(v) {
        return Err(Error::validation(format!(
            "profile designed for v={} is stale at v={v}",
            profile.design_variance()
        )));
    }
    Ok(profile.aggregates())
}

fn check_pair(params: &NetworkParams, k: usize, t: usize) -> Result<(usize, usize)> {
    let i = network::partner_index(k, t, params.k())?;
    Ok((k - 1, i - 1))
}

fn log_rate(formula: &'static str, num: f64, den: f64) -> Result<f64> {
    if den > 0.0 && num >= 0.0 && (num / den).is_finite() {
        Ok((num / den).ln_1p() / std::f64::consts::LN_2)
    } else {
        Err(Error::ApproximationBreakdown { formula, numerator: num, denominator: den })
    }
}

fn current_aggregates(params: &NetworkParams) -> Result<Aggregates> {
    aggregates(params.profile(), params.v())
}

/// Perfect-CSI rate with α from [`alpha_closed`].
pub fn rate_closed_perfect(params: &NetworkParams, k: usize, t: usize) -> Result<f64> {
    let (_, i0) = check_pair(params, k, t)?;
    let alpha = alpha_closed(params, t)?;
    let cfg = params.config();
    let Aggregates { g1, g2, c_hat } = current_aggregates(params)?;
    let (n, kk) = (cfg.n as f64, cfg.k as f64);
    let bi = cfg.betas[i0];
    let f1 = cfg.p_u * bi * ((n * kk + n - kk * kk - 2.0 * kk) * g1 * g1 + kk * g2) / (kk + 1.0);
    let f2 = c_hat + (n - kk) / alpha * bi - cfg.p_u * (cfg.beta_sum() - bi) * g1 * g1 - cfg.p_u * bi * g2;
    log_rate("rate_closed_perfect", f1, f2)
}

/// Imperfect-CSI rate with α from [`alpha_icsi`].
pub fn rate_closed_icsi(params: &NetworkParams, k: usize, t: usize) -> Result<f64> {
    let (k0, i0) = check_pair(params, k, t)?;
    let alpha = alpha_icsi(params, t)?;
    let cfg = params.config();
    let Aggregates { g1, g2, c_hat } = current_aggregates(params)?;
    let (n, kk) = (cfg.n as f64, cfg.k as f64);
    let (bk, bi) = (cfg.betas[k0], cfg.betas[i0]);
    let s = cfg.sigma_e_sq;
    let keep = 1.0 - s;
    let pair = cfg.beta_inv_pair_sum(t);
    let shape = n * kk + n - kk * kk;

    let f1 = cfg.p_u * bi / (kk + 1.0)
        * (g1 * g1 * keep * keep * (shape - 2.0 * kk)
            + g2 * (keep * (kk + s) + shape / ((n - kk) * (n - kk)) * bk * bi * s * s * pair));
    let inv_others: f64 = (0..cfg.k).filter(|&j| j != k0).map(|j| 1.0 / cfg.betas[j]).sum();
    let f2 = c_hat + (n - kk) * keep / alpha * bi - cfg.p_u * bi * g2
        + cfg.p_u
            * g1
            * g1
            * (-(cfg.beta_sum() - bi) * keep
                + bi * bk * s * inv_others
                + bi * bk * bk * s * s * n / ((n - kk) * kk * keep) * pair);
    log_rate("rate_closed_icsi", f1, f2)
}

/// Fixed-K, large-N rate. α does not appear; `P_R` enters only through `p_u / P_R`.
pub fn rate_asymptotic_large_n(params: &NetworkParams, k: usize, t: usize) -> Result<f64> {
    let (_, i0) = check_pair(params, k, t)?;
    let cfg = params.config();
    let Aggregates { g1, g2, c_hat } = current_aggregates(params)?;
    let bi = cfg.betas[i0];
    let g1s = g1 * g1;
    let num = cfg.n as f64 * cfg.p_u * bi * g1s;
    let den = c_hat + cfg.p_u / cfg.p_r * bi * cfg.beta_inv_sum() * g1s
        - cfg.p_u * (cfg.beta_sum() - bi) * g1s
        - cfg.p_u * bi * g2;
    log_rate("rate_asymptotic_large_n", num, den)
}

/// Fixed-loading-factor rate, independent of `N` and `P_R`.
pub fn rate_asymptotic_loading(asym: &AsymptoticParams, p_u: f64, beta_ik: f64, g1: f64) -> Result<f64> {
    asym.validate()?;
    let g1s = g1 * g1;
    let num = (1.0 - asym.c) / asym.c * p_u * beta_ik * g1s;
    let den = asym.c_hat_bar - p_u * asym.beta_bar * g1s;
    log_rate("rate_asymptotic_loading", num, den)
}

fn uniform_stats(params: &NetworkParams) -> Result<(f64, f64)> {
    let profile = params.profile();
    match profile.uniform_resolution() {
        Some(Resolution::Infinite) => Ok((1.0, params.v())),
        Some(Resolution::Bits(_)) => {
            aggregates(profile, params.v())?;
            let s = profile.stats()[0];
            Ok((s.gain, s.output_variance))
        }
        None => Err(Error::validation("uniform-ADC formulas need the same resolution on every antenna")),
    }
}

/// Relay power coefficient for a uniform profile.
pub fn alpha_uniform(params: &NetworkParams, t: usize) -> Result<f64> {
    network::check_slot(params, t)?;
    let (gain, c) = uniform_stats(params)?;
    alpha_uniform_from(params.config(), gain, c, t)
}

/// [`alpha_uniform`] for an explicit gain `G_b` and output variance `C`.
pub fn alpha_uniform_from(cfg: &NetworkConfig, gain: f64, c: f64, t: usize) -> Result<f64> {
    let (n, kk) = (cfg.n as f64, cfg.k as f64);
    if cfg.n <= cfg.k {
        return Err(Error::ApproximationBreakdown { formula: "alpha_uniform", numerator: 0.0, denominator: n - kk });
    }
    let shape = (n * kk + n - kk * kk) / ((n - kk) * (n - kk) * (kk + 1.0));
    let pg = cfg.p_u * gain * gain;
    let den: f64 = (0..cfg.k)
        .map(|m| {
            let partner = cfg.betas[partner0(m, t, cfg.k)];
            (pg + (c - cfg.beta_sum() * pg) * shape / partner) / cfg.betas[m]
        })
        .sum();
    let num = cfg.p_r * (n - kk);
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::ApproximationBreakdown { formula: "alpha_uniform", numerator: num, denominator: den })
    }
}

pub fn rate_uniform(params: &NetworkParams, k: usize, t: usize) -> Result<f64> {
    check_pair(params, k, t)?;
    let (gain, c) = uniform_stats(params)?;
    rate_uniform_from(params.config(), gain, c, k, t)
}

/// [`rate_uniform`] for an explicit gain and output variance. Gain and user
/// power enter only through the product `p_u G_b²`.
pub fn rate_uniform_from(cfg: &NetworkConfig, gain: f64, c: f64, k: usize, t: usize) -> Result<f64> {
    let i0 = network::partner_index(k, t, cfg.k)? - 1;
    let alpha = alpha_uniform_from(cfg, gain, c, t)?;
    let d = (cfg.n - cfg.k) as f64;
    let bi = cfg.betas[i0];
    let num = d * bi;
    let den = (d / alpha * bi + c) / (cfg.p_u * gain * gain) - cfg.beta_sum();
    log_rate("rate_uniform", num, den)
}

/// Closed-form rate and the α it used, for any mode.
pub fn closed_form(params: &NetworkParams, mode: RateMode, k: usize, t: usize) -> Result<(f64, f64)> {
    match mode {
        RateMode::Perfect => Ok((rate_closed_perfect(params, k, t)?, alpha_closed(params, t)?)),
        RateMode::Icsi => Ok((rate_closed_icsi(params, k, t)?, alpha_icsi(params, t)?)),
        RateMode::Uniform => Ok((rate_uniform(params, k, t)?, alpha_uniform(params, t)?)),
        RateMode::AsymLargeN => Ok((rate_asymptotic_large_n(params, k, t)?, alpha_closed(params, t)?)),
        RateMode::AsymLoading => {
            let (_, i0) = check_pair(params, k, t)?;
            let asym = AsymptoticParams::from_params(params, t)?;
            let g1 = current_aggregates(params)?.g1;
            let r = rate_asymptotic_loading(&asym, params.p_u(), params.betas()[i0], g1)?;
            Ok((r, alpha_closed(params, t)?))
        }
    }
}

/// Monte-Carlo run size for [`rate_report`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McRun {
    pub n_channels: usize,
    pub n_symbols: usize,
    pub seed: u64,
    pub options: McOptions,
}

/// Closed-form rate for one user pair, optionally with a Monte-Carlo estimate.
pub fn rate_report(params: &NetworkParams, mode: RateMode, k: usize, t: usize, mc: Option<&McRun>) -> Result<RateReport> {
    let partner = network::partner_index(k, t, params.k())?;
    let (rate_closed, alpha) = closed_form(params, mode, k, t)?;
    let rate_mc = match mc {
        Some(run) => Some(rate_monte_carlo(params, k, t, run.n_channels, run.n_symbols, run.seed, &run.options)?.rate),
        None => None,
    };
    Ok(RateReport {
        k,
        partner,
        t,
        rate_closed,
        rate_mc,
        mode,
        alpha,
        aggregates: params.profile().aggregates(),
        params_echo: params.config().clone(),
    })
}

/// How the Monte-Carlo estimator obtains per-channel SINRs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    /// Bussgang model: coefficient powers computed from the channel and beamformer.
    #[default]
    SemiAnalytic,
    /// QAM traffic through the quantizers; SINR estimated from the received samples.
    Empirical,
}

/// Where the Monte-Carlo run takes its relay power coefficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// Closed form, perfect or imperfect CSI as the parameters dictate.
    #[default]
    Closed,
    /// Solved from simulated relay power.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub mode: McMode,
    pub alpha: AlphaSource,
    pub qam_order: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { mode: McMode::SemiAnalytic, alpha: AlphaSource::Closed, qam_order: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Mean of per-channel `log2(1 + SINR)`.
    pub rate: Estimate,
    pub alpha: f64,
    /// Ill-conditioned channels redrawn.
    pub resampled: usize,
}

pub fn rate_monte_carlo(
    params: &NetworkParams,
    k: usize,
    t: usize,
    n_channels: usize,
    n_symbols: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    let (k0, i0) = check_pair(params, k, t)?;
    if n_channels < 100 || n_symbols < 10 {
        return Err(Error::validation(format!(
            "Monte Carlo needs at least 100 channels and 10 symbol vectors, got {n_channels} and {n_symbols}"
        )));
    }
    let qam = Qam::new(opts.qam_order)?;
    let alpha = match opts.alpha {
        AlphaSource::Closed if params.sigma_e_sq() > 0.0 => alpha_icsi(params, t)?,
        AlphaSource::Closed => alpha_closed(params, t)?,
        AlphaSource::Empirical => alpha_empirical(params, t, n_channels, n_symbols, seed)?,
    };
    let profile = params.profile();
    let gains: Vec<f64> = profile.gains().collect();
    let distortion: Vec<f64> = profile.stats().iter().map(|s| s.distortion_variance).collect();
    let p_u = params.p_u();

    let per_channel: Vec<(f64, usize)> = (0..n_channels)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::substream(seed, rng::RATE_MC + c as u64);
            let trial = draw_trial(&mut rng, params, seed)?;
            let h = &trial.channel.overall;
            let h_k = h.column(k0).into_owned();
            let row = trial.beamformer.user_row(t, alpha, &h_k);
            let sinr = match opts.mode {
                McMode::SemiAnalytic => {
                    let b = CVector::from_fn(row.len(), |n, _| row[n] * gains[n]);
                    let eff = h.tr_mul(&b);
                    let desired = p_u * eff[i0].norm_sqr();
                    let interference = p_u * (eff.norm_squared() - eff[i0].norm_sqr());
                    let relay_noise = b.norm_squared();
                    let dist: f64 = row.iter().zip(&distortion).map(|(a, d)| a.norm_sqr() * d).sum();
                    desired / (interference + relay_noise + dist + 1.0)
                }
                McMode::Empirical => {
                    let mut xs = Vec::with_capacity(n_symbols);
                    let mut rs = Vec::with_capacity(n_symbols);
                    for _ in 0..n_symbols {
                        let x = qam.symbols(&mut rng, params.k());
                        let z = network::noise_vector(&mut rng, params.n());
                        let r_a = network::simulate_mac(h, &x, p_u, &z)?;
                        let r_hat = network::quantize_received(&r_a, profile);
                        let z_u = rng::complex_normal(&mut rng, 1.0);
                        rs.push(row.dot(&r_hat) + z_u);
                        xs.push(x[i0]);
                    }
                    empirical_sinr(&rs, &xs)
                }
            };
            Ok(((sinr.ln_1p()) / std::f64::consts::LN_2, trial.resampled))
        })
        .collect::<Result<_>>()?;

    let rates: Vec<f64> = per_channel.iter().map(|p| p.0).collect();
    Ok(McEstimate {
        rate: Estimate::from_samples(&rates),
        alpha,
        resampled: per_channel.iter().map(|p| p.1).sum(),
    })
}

/// Fits `r = g x + e` by least squares and returns `|g|² / var(e)` with
/// small-sample bias corrections on both powers.
fn empirical_sinr(r: &[Complex64], x: &[Complex64]) -> f64 {
    let n = r.len() as f64;
    let energy: f64 = x.iter().map(|s| s.norm_sqr()).sum();
    let g = r.iter().zip(x).map(|(r, x)| r * x.conj()).sum::<Complex64>() / energy;
    let residual = r.iter().zip(x).map(|(r, x)| (r - g * x).norm_sqr()).sum::<f64>() / (n - 1.0);
    let signal = (g.norm_sqr() - residual / energy).max(0.0);
    signal / residual
}
