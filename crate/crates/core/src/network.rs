//! The multi-way relay link: MAC phase, per-antenna quantization, ZF relay
//! beamforming with a per-slot cyclic permutation, and the BC phase.
//!
//! Users are 1-based in the public partner API and 0-based everywhere else.
//! In slot `t` user `k` decodes user `i(k, t) = mod_K(k + t - 1) + 1`, which is
//! `(k + t) % K` with 0-based indices.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{design_lloyd_max, BussgangStats, Resolution, ScalarQuantizer};
use crate::randmat::{self, CMatrix, CVector, ChannelRealization, CsiSplit};
use crate::rng;
use crate::stats::Estimate;

/// Channels whose Gram matrix has a larger condition number are resampled.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Consecutive resampling attempts before giving up on a trial.
const MAX_RESAMPLES: usize = 64;

/// Scalar system parameters. Powers are linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n: usize,
    pub k: usize,
    pub p_u: f64,
    pub p_r: f64,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub sigma_e_sq: f64,
}

impl NetworkConfig {
    /// All users with unit large-scale fading and perfect CSI.
    pub fn homogeneous(n: usize, k: usize, p_u: f64, p_r: f64) -> Self {
        NetworkConfig { n, k, p_u, p_r, betas: vec![1.0; k], sigma_e_sq: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        randmat::check_dimensions(self.n, self.k, &self.betas)?;
        randmat::check_sigma_e_sq(self.sigma_e_sq)?;
        for (name, p) in [("p_u", self.p_u), ("P_R", self.p_r)] {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive and finite, got {p}")));
            }
        }
        Ok(())
    }

    pub fn beta_sum(&self) -> f64 {
        self.betas.iter().sum()
    }

    /// Variance of each received antenna sample, `1 + p_u β_sum`.
    pub fn v(&self) -> f64 {
        1.0 + self.p_u * self.beta_sum()
    }

    pub fn beta_inv_sum(&self) -> f64 {
        self.betas.iter().map(|b| 1.0 / b).sum()
    }

    /// `Σ_m 1 / (β_m β_{i(m, t)})`.
    pub fn beta_inv_pair_sum(&self, t: usize) -> f64 {
        let k = self.k;
        (0..k).map(|m| 1.0 / (self.betas[m] * self.betas[partner0(m, t, k)])).sum()
    }
}

/// Antenna averages of the Bussgang statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean gain.
    pub g1: f64,
    /// Mean squared gain.
    pub g2: f64,
    /// Mean output variance.
    pub c_hat: f64,
}

impl Aggregates {
    pub fn lossless(v: f64) -> Self {
        Aggregates { g1: 1.0, g2: 1.0, c_hat: v }
    }
}

/// Per-antenna ADC resolutions with the quantizers and statistics for one input variance.
#[derive(Clone, Debug)]
pub struct AdcProfile {
    resolutions: Vec<Resolution>,
    design_variance: f64,
    quantizers: BTreeMap<u8, Arc<ScalarQuantizer>>,
    per_antenna: Vec<Option<Arc<ScalarQuantizer>>>,
    stats: Vec<BussgangStats>,
    aggregates: Aggregates,
}

impl AdcProfile {
    /// Designs one analytic Lloyd-Max quantizer per distinct resolution.
    pub fn design(resolutions: Vec<Resolution>, v: f64) -> Result<Self> {
        Self::build(resolutions, v, |bits, v| Ok(Arc::new(design_lloyd_max(bits, v)?)))
    }

    pub fn uniform(n: usize, resolution: Resolution, v: f64) -> Result<Self> {
        Self::design(vec![resolution; n], v)
    }

    /// Builds a profile with quantizers supplied by `quantizer(bits, v)`,
    /// called once per distinct finite resolution.
    pub fn build<F>(resolutions: Vec<Resolution>, v: f64, mut quantizer: F) -> Result<Self>
    where
        F: FnMut(u32, f64) -> Result<Arc<ScalarQuantizer>>,
    {
        if resolutions.is_empty() {
            return Err(Error::validation("ADC profile must cover at least one antenna"));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::validation(format!("input variance must be positive, got {v}")));
        }
        let mut quantizers = BTreeMap::new();
        let mut table: BTreeMap<u8, BussgangStats> = BTreeMap::new();
        for r in &resolutions {
            if let Resolution::Bits(b) = *r {
                if let std::collections::btree_map::Entry::Vacant(slot) = quantizers.entry(b) {
                    let q = quantizer(b as u32, v)?;
                    if q.bits() != b as u32 {
                        return Err(Error::validation(format!("quantizer for {b} bits has {} bits", q.bits())));
                    }
                    table.insert(b, q.bussgang(v)?);
                    slot.insert(q);
                }
            }
        }
        let per_antenna: Vec<_> = resolutions
            .iter()
            .map(|r| match r {
                Resolution::Bits(b) => Some(quantizers[b].clone()),
                Resolution::Infinite => None,
            })
            .collect();
        let stats: Vec<_> = resolutions
            .iter()
            .map(|r| match r {
                Resolution::Bits(b) => table[b],
                Resolution::Infinite => BussgangStats::lossless(v),
            })
            .collect();
        let n = stats.len() as f64;
        let aggregates = Aggregates {
            g1: stats.iter().map(|s| s.gain).sum::<f64>() / n,
            g2: stats.iter().map(|s| s.gain * s.gain).sum::<f64>() / n,
            c_hat: stats.iter().map(|s| s.output_variance).sum::<f64>() / n,
        };
        Ok(AdcProfile { resolutions, design_variance: v, quantizers, per_antenna, stats, aggregates })
    }

    pub fn n(&self) -> usize {
        self.resolutions.len()
    }

    pub fn resolutions(&self) -> &[Resolution] {
        &self.resolutions
    }

    pub fn design_variance(&self) -> f64 {
        self.design_variance
    }

    pub fn quantizers(&self) -> impl Iterator<Item = &ScalarQuantizer> {
        self.quantizers.values().map(|q| q.as_ref())
    }

    pub fn quantizer(&self, antenna: usize) -> Option<&ScalarQuantizer> {
        self.per_antenna[antenna].as_deref()
    }

    pub fn stats(&self) -> &[BussgangStats] {
        &self.stats
    }

    pub fn aggregates(&self) -> Aggregates {
        self.aggregates
    }

    /// Same resolution on every antenna.
    pub fn uniform_resolution(&self) -> Option<Resolution> {
        let first = self.resolutions[0];
        self.resolutions.iter().all(|r| *r == first).then_some(first)
    }

    pub fn gains(&self) -> impl Iterator<Item = f64> + '_ {
        self.stats.iter().map(|s| s.gain)
    }

    /// Whether the profile was designed for input variance `v` (to 1e-9 relative).
    pub fn matches_variance(&self, v: f64) -> bool {
        (self.design_variance - v).abs() <= 1e-9 * v.abs().max(1.0)
    }
}

/// Parameters plus a profile designed for their input variance.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    config: NetworkConfig,
    profile: AdcProfile,
}

impl NetworkParams {
    /// Designs the profile for `config.v()`.
    pub fn new(config: NetworkConfig, resolutions: Vec<Resolution>) -> Result<Self> {
        config.validate()?;
        let profile = AdcProfile::design(resolutions, config.v())?;
        Self::with_profile(config, profile)
    }

    pub fn with_profile(config: NetworkConfig, profile: AdcProfile) -> Result<Self> {
        config.validate()?;
        if profile.n() != config.n {
            return Err(Error::validation(format!(
                "profile covers {} antennas but N={}",
                profile.n(),
                config.n
            )));
        }
        if !profile.matches_variance(config.v()) {
            return Err(Error::validation(format!(
                "profile designed for v={} but parameters give v={}",
                profile.design_variance(),
                config.v()
            )));
        }
        Ok(NetworkParams { config, profile })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn profile(&self) -> &AdcProfile {
        &self.profile
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn p_u(&self) -> f64 {
        self.config.p_u
    }

    pub fn p_r(&self) -> f64 {
        self.config.p_r
    }

    pub fn betas(&self) -> &[f64] {
        &self.config.betas
    }

    pub fn sigma_e_sq(&self) -> f64 {
        self.config.sigma_e_sq
    }

    pub fn v(&self) -> f64 {
        self.config.v()
    }

    /// Relay power does not enter `v`, so the profile is kept.
    pub fn with_p_r(&self, p_r: f64) -> Result<Self> {
        let config = NetworkConfig { p_r, ..self.config.clone() };
        Self::with_profile(config, self.profile.clone())
    }

    pub fn with_sigma_e_sq(&self, sigma_e_sq: f64) -> Result<Self> {
        let config = NetworkConfig { sigma_e_sq, ..self.config.clone() };
        Self::with_profile(config, self.profile.clone())
    }
}

#[inline]
pub(crate) fn partner0(k: usize, t: usize, users: usize) -> usize {
    (k + t) % users
}

/// `i(k, t) = mod_K(k + t - 1) + 1` with 1-based users.
pub fn partner_index(k: usize, t: usize, users: usize) -> Result<usize> {
    if users < 2 || !(1..=users).contains(&k) || !(1..users).contains(&t) {
        return Err(Error::validation(format!("partner index needs 1 <= k <= K, 1 <= t < K; got k={k}, t={t}, K={users}")));
    }
    Ok(partner0(k - 1, t, users) + 1)
}

/// `P^t` where `P` shifts the columns of `I_K` circularly right by one.
pub fn permutation_power(users: usize, t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(users, users, |m, j| if (m + t) % users == j { 1.0 } else { 0.0 })
}

/// Zero-forcing relay precoder built from `W = (Hᴴ H)^{-1} Hᴴ`, so that
/// `G^(t) = sqrt(α) Wᵀ Pᵗ W`.
#[derive(Clone, Debug)]
pub struct ZfBeamformer {
    w: CMatrix,
    condition: f64,
}

impl ZfBeamformer {
    pub fn new(h: &CMatrix) -> Result<Self> {
        let (n, k) = h.shape();
        if n < k {
            return Err(Error::validation(format!("zero forcing needs N >= K, got {n}x{k}")));
        }
        let hh = h.adjoint();
        let gram = &hh * h;
        let eig = gram.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::Singular { condition });
        }
        let chol = gram.cholesky().ok_or(Error::Singular { condition })?;
        Ok(ZfBeamformer { w: chol.solve(&hh), condition })
    }

    /// `W`, K×N.
    pub fn pseudo_inverse(&self) -> &CMatrix {
        &self.w
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    /// The full N×N matrix `G^(t)`.
    pub fn matrix(&self, t: usize, alpha: f64) -> CMatrix {
        let k = self.k();
        let permuted = CMatrix::from_fn(k, self.n(), |m, j| self.w[((m + t) % k, j)]);
        self.w.transpose() * permuted * Complex64::from(alpha.sqrt())
    }

    /// `G^(t) r̂` without forming `G^(t)`.
    pub fn forward(&self, t: usize, alpha: f64, r_hat: &CVector) -> CVector {
        let k = self.k();
        let y = &self.w * r_hat;
        let z = CVector::from_fn(k, |m, _| y[(m + t) % k]);
        self.w.tr_mul(&z) * Complex64::from(alpha.sqrt())
    }

    /// `(h_kᵀ G^(t))ᵀ` for a user channel `h_k`.
    pub fn user_row(&self, t: usize, alpha: f64, h_k: &CVector) -> CVector {
        let k = self.k();
        let c = &self.w * h_k;
        let shifted = CVector::from_fn(k, |j, _| c[(j + k - t % k) % k]);
        self.w.tr_mul(&shifted) * Complex64::from(alpha.sqrt())
    }
}

/// `G^(t) = sqrt(α) H*(Hᵀ H*)^{-1} Pᵗ (Hᴴ H)^{-1} Hᴴ`.
pub fn zf_matrix(channel: &CMatrix, t: usize, alpha: f64) -> Result<CMatrix> {
    Ok(ZfBeamformer::new(channel)?.matrix(t, alpha))
}

/// Beamforming state of one BC slot.
#[derive(Clone, Debug)]
pub struct SlotState {
    pub t: usize,
    pub alpha: f64,
    pub zf_matrix: CMatrix,
}

impl SlotState {
    pub fn new(beamformer: &ZfBeamformer, t: usize, alpha: f64) -> Self {
        SlotState { t, alpha, zf_matrix: beamformer.matrix(t, alpha) }
    }
}

pub(crate) fn check_slot(params: &NetworkParams, t: usize) -> Result<()> {
    if !(1..params.k()).contains(&t) {
        return Err(Error::validation(format!("BC slot must be in 1..={}, got {t}", params.k() - 1)));
    }
    Ok(())
}

fn n_minus_k(params: &NetworkParams, formula: &'static str) -> Result<(f64, f64, f64)> {
    let (n, k) = (params.n() as f64, params.k() as f64);
    if params.n() <= params.k() {
        return Err(Error::ApproximationBreakdown { formula, numerator: 0.0, denominator: n - k });
    }
    Ok((n, k, n - k))
}

fn positive_ratio(formula: &'static str, numerator: f64, denominator: f64) -> Result<f64> {
    if denominator > 0.0 && numerator > 0.0 && (numerator / denominator).is_finite() {
        Ok(numerator / denominator)
    } else {
        Err(Error::ApproximationBreakdown { formula, numerator, denominator })
    }
}

/// Closed-form relay power coefficient under perfect CSI.
pub fn alpha_closed(params: &NetworkParams, t: usize) -> Result<f64> {
    check_slot(params, t)?;
    if params.sigma_e_sq() != 0.0 {
        return Err(Error::validation("alpha_closed assumes perfect CSI; use alpha_icsi"));
    }
    alpha_formula(params, t, 0.0, "alpha_closed")
}

/// Closed-form relay power coefficient with a beamformer built from the channel estimate.
pub fn alpha_icsi(params: &NetworkParams, t: usize) -> Result<f64> {
    check_slot(params, t)?;
    alpha_formula(params, t, params.sigma_e_sq(), "alpha_icsi")
}

fn alpha_formula(params: &NetworkParams, t: usize, s: f64, formula: &'static str) -> Result<f64> {
    let (n, k, d) = n_minus_k(params, formula)?;
    let cfg = params.config();
    let Aggregates { g1, g2, c_hat } = params.profile().aggregates();
    let keep = 1.0 - s;
    let shape = (n * k + n - k * k) / (d * d * (k + 1.0) * keep);
    let den = cfg.p_u * g1 * g1 * cfg.beta_inv_sum()
        + shape * (c_hat - cfg.p_u * cfg.beta_sum() * g2 * keep) * cfg.beta_inv_pair_sum(t);
    positive_ratio(formula, cfg.p_r * d * keep, den)
}

/// Unit-power square QAM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qam {
    side: usize,
    scale: f64,
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if order < 4 || side * side != order {
            return Err(Error::validation(format!("QAM order must be a square >= 4, got {order}")));
        }
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        Ok(Qam { side, scale })
    }

    pub fn order(&self) -> usize {
        self.side * self.side
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let level = |i: usize| (2 * i) as f64 - (self.side - 1) as f64;
        let re = level(rng.random_range(0..self.side));
        let im = level(rng.random_range(0..self.side));
        Complex64::new(re, im) * self.scale
    }

    pub fn symbols<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> CVector {
        CVector::from_fn(count, |_, _| self.sample(rng))
    }
}

impl Default for Qam {
    fn default() -> Self {
        Qam::new(4).unwrap()
    }
}

pub(crate) fn noise_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| rng::complex_normal(rng, 1.0))
}

/// `r_a = sqrt(p_u) H x + z_R`.
pub fn simulate_mac(channel: &CMatrix, x: &CVector, p_u: f64, noise: &CVector) -> Result<CVector> {
    if x.len() != channel.ncols() || noise.len() != channel.nrows() {
        return Err(Error::validation(format!(
            "MAC dimensions: channel {}x{}, symbols {}, noise {}",
            channel.nrows(),
            channel.ncols(),
            x.len(),
            noise.len()
        )));
    }
    Ok(channel * x * Complex64::from(p_u.sqrt()) + noise)
}

/// Quantizes antenna `n` with its own ADC; infinite-resolution antennas pass through.
pub fn quantize_received(r_a: &CVector, profile: &AdcProfile) -> CVector {
    CVector::from_fn(r_a.len(), |n, _| match profile.quantizer(n) {
        Some(q) => q.quantize_complex_unchecked(r_a[n]),
        None => r_a[n],
    })
}

/// `r_u = Hᵀ G r̂ + z_u`, always with the true channel.
pub fn simulate_bc_slot(channel_true: &CMatrix, g: &CMatrix, r_hat: &CVector, user_noise: &CVector) -> Result<CVector> {
    let (n, k) = channel_true.shape();
    if g.shape() != (n, n) || r_hat.len() != n || user_noise.len() != k {
        return Err(Error::validation(format!(
            "BC dimensions: channel {n}x{k}, G {}x{}, r_hat {}, noise {}",
            g.nrows(),
            g.ncols(),
            r_hat.len(),
            user_noise.len()
        )));
    }
    Ok(channel_true.tr_mul(&(g * r_hat)) + user_noise)
}

/// A channel realization with the beamformer the relay builds from it.
pub struct Trial {
    pub channel: ChannelRealization,
    pub split: CsiSplit,
    pub beamformer: ZfBeamformer,
    /// Ill-conditioned draws discarded before this one.
    pub resampled: usize,
}

/// Draws channels from `rng` until the relay's matrix passes the condition guard.
/// The beamformer uses the estimate `Ĥ` when `σ_e² > 0`.
pub fn draw_trial<R: Rng + ?Sized>(rng: &mut R, params: &NetworkParams, seed: u64) -> Result<Trial> {
    let cfg = params.config();
    let mut last = Error::Singular { condition: f64::INFINITY };
    for resampled in 0..MAX_RESAMPLES {
        let (channel, split) = randmat::draw_channel(rng, cfg.n, cfg.k, &cfg.betas, cfg.sigma_e_sq, seed);
        let relay_view = if cfg.sigma_e_sq > 0.0 {
            split.estimate_overall(&cfg.betas)
        } else {
            channel.overall.clone()
        };
        match ZfBeamformer::new(&relay_view) {
            Ok(beamformer) => return Ok(Trial { channel, split, beamformer, resampled }),
            Err(e @ Error::Singular { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Relay transmit power `E‖r_t‖²` from simulated traffic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    /// Per-channel mean of `‖r_t‖²` over symbols, averaged over channels.
    pub power: Estimate,
    pub resampled: usize,
}

/// Runs MAC, quantization and beamforming for `n_channels × n_symbols` symbol
/// vectors and averages the relay transmit power.
pub fn relay_power_estimate(
    params: &NetworkParams,
    t: usize,
    alpha: f64,
    n_channels: usize,
    n_symbols: usize,
    seed: u64,
    qam: Qam,
) -> Result<PowerEstimate> {
    check_slot(params, t)?;
    if n_channels == 0 || n_symbols == 0 {
        return Err(Error::validation("need at least one channel and one symbol vector"));
    }
    let per_channel: Vec<(f64, usize)> = (0..n_channels)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, rng::RELAY_POWER + i as u64);
            let trial = draw_trial(&mut rng, params, seed)?;
            let mut acc = 0.0;
            for _ in 0..n_symbols {
                let x = qam.symbols(&mut rng, params.k());
                let z = noise_vector(&mut rng, params.n());
                let r_a = simulate_mac(&trial.channel.overall, &x, params.p_u(), &z)?;
                let r_hat = quantize_received(&r_a, params.profile());
                acc += trial.beamformer.forward(t, alpha, &r_hat).norm_squared();
            }
            Ok((acc / n_symbols as f64, trial.resampled))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = per_channel.iter().map(|p| p.0).collect();
    Ok(PowerEstimate {
        power: Estimate::from_samples(&values),
        resampled: per_channel.iter().map(|p| p.1).sum(),
    })
}

/// Solves `P_R = E‖r_t‖²` for α by simulation. The constraint is linear in α,
/// so one run at α = 1 suffices.
pub fn alpha_empirical(params: &NetworkParams, t: usize, n_channels: usize, n_symbols: usize, seed: u64) -> Result<f64> {
    if n_channels < 100 {
        return Err(Error::validation(format!("empirical alpha needs at least 100 channels, got {n_channels}")));
    }
    let m = relay_power_estimate(params, t, 1.0, n_channels, n_symbols, seed, Qam::default())?;
    positive_ratio("alpha_empirical", params.p_r(), m.power.mean)
}

/// Real and imaginary parts of received antenna samples, for training an
/// empirical quantizer. Each symbol vector uses a fresh channel.
pub fn training_set(config: &NetworkConfig, count: usize, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = rng::substream(seed, rng::TRAINING);
    let qam = Qam::default();
    let mut out = Vec::with_capacity(count + 2 * config.n);
    while out.len() < count {
        let (ch, _) = randmat::draw_channel(&mut rng, config.n, config.k, &config.betas, 0.0, seed);
        let x = qam.symbols(&mut rng, config.k);
        let z = noise_vector(&mut rng, config.n);
        let r = simulate_mac(&ch.overall, &x, config.p_u, &z)?;
        out.extend(r.iter().flat_map(|c| [c.re, c.im]));
    }
    out.truncate(count);
    Ok(out)
}
