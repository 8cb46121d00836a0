//! Channel sampling and random-matrix oracles.
//!
//! Channels are `H = H̃ D^{1/2}` with `H̃` having i.i.d. `CN(0, 1)` entries and
//! `D = diag(β)`. The oracles estimate Haar and Wishart moments by Monte
//! Carlo so the closed-form rate machinery can be property-tested against
//! independent sampling.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, complex_normal};
use crate::stats::Estimate;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Minimum trial count accepted by the Haar oracle.
pub const MIN_HAAR_TRIALS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// `H̃`, N×K with i.i.d. `CN(0, 1)` entries.
    pub small_scale: CMatrix,
    /// Large-scale fading `β`, the diagonal of `D`.
    pub large_scale: Vec<f64>,
    /// `H = H̃ D^{1/2}`.
    pub overall: CMatrix,
    pub seed: u64,
}

/// Imperfect-CSI decomposition `H̃ = Ĥ̃ + ΔH̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiSplit {
    /// `Ĥ̃`, entries `CN(0, 1 - σ_e²)`.
    pub estimate: CMatrix,
    /// `ΔH̃`, entries `CN(0, σ_e²)`.
    pub error: CMatrix,
    pub sigma_e_sq: f64,
}

impl ChannelRealization {
    pub fn n(&self) -> usize {
        self.small_scale.nrows()
    }

    pub fn k(&self) -> usize {
        self.small_scale.ncols()
    }
}

impl CsiSplit {
    /// The estimated overall channel `Ĥ = Ĥ̃ D^{1/2}` seen by the relay.
    pub fn estimate_overall(&self, betas: &[f64]) -> CMatrix {
        scale_columns(&self.estimate, betas)
    }
}

pub(crate) fn check_dimensions(n: usize, k: usize, betas: &[f64]) -> Result<()> {
    if k < 2 {
        return Err(Error::validation(format!("need at least 2 users, got K={k}")));
    }
    if n < k {
        return Err(Error::validation(format!("need N >= K for zero forcing, got N={n}, K={k}")));
    }
    if betas.len() != k {
        return Err(Error::validation(format!("expected {k} large-scale fading values, got {}", betas.len())));
    }
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::validation(format!("large-scale fading must be positive and finite, got {b}")));
    }
    Ok(())
}

pub(crate) fn check_sigma_e_sq(sigma_e_sq: f64) -> Result<()> {
    if (0.0..1.0).contains(&sigma_e_sq) {
        Ok(())
    } else {
        Err(Error::validation(format!("CSI error power must be in [0, 1), got {sigma_e_sq}")))
    }
}

fn scale_columns(m: &CMatrix, betas: &[f64]) -> CMatrix {
    let mut out = m.clone();
    for (mut col, b) in out.column_iter_mut().zip(betas) {
        col *= Complex64::from(b.sqrt());
    }
    out
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, variance: f64) -> CMatrix {
    // Column-major fill, so draw order is column by column.
    CMatrix::from_fn(n, k, |_, _| complex_normal(rng, variance))
}

/// Draws one channel (and its CSI split) from `rng`.
///
/// Standard normals for the estimate are drawn first and scaled by
/// `sqrt(1 - σ_e²)`, so with `σ_e² = 0` the channel equals the one from
/// [`sample_channel`] on the same stream.
pub(crate) fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
    betas: &[f64],
    sigma_e_sq: f64,
    seed: u64,
) -> (ChannelRealization, CsiSplit) {
    let estimate = gaussian_matrix(rng, n, k, 1.0) * Complex64::from((1.0 - sigma_e_sq).sqrt());
    let error = if sigma_e_sq > 0.0 {
        gaussian_matrix(rng, n, k, sigma_e_sq)
    } else {
        CMatrix::zeros(n, k)
    };
    let small_scale = &estimate + &error;
    let overall = scale_columns(&small_scale, betas);
    (
        ChannelRealization { small_scale, large_scale: betas.to_vec(), overall, seed },
        CsiSplit { estimate, error, sigma_e_sq },
    )
}

pub fn sample_channel(n: usize, k: usize, betas: &[f64], seed: u64) -> Result<ChannelRealization> {
    check_dimensions(n, k, betas)?;
    let mut rng = rng::substream(seed, rng::CHANNEL);
    Ok(draw_channel(&mut rng, n, k, betas, 0.0, seed).0)
}

pub fn split_imperfect_csi(
    n: usize,
    k: usize,
    betas: &[f64],
    sigma_e_sq: f64,
    seed: u64,
) -> Result<(ChannelRealization, CsiSplit)> {
    check_dimensions(n, k, betas)?;
    check_sigma_e_sq(sigma_e_sq)?;
    let mut rng = rng::substream(seed, rng::CHANNEL);
    Ok(draw_channel(&mut rng, n, k, betas, sigma_e_sq, seed))
}

/// Haar-distributed N×N unitary: QR of a Gaussian matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn sample_haar<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = gaussian_matrix(rng, n, n, 1.0).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        let norm = d.norm();
        if norm > 0.0 {
            col *= d / norm;
        }
    }
    q
}

/// Fourth-order-and-below moments of a Haar matrix entry set, with
/// `i ≠ i'` and `j ≠ j'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaarMoment {
    /// `E|u_ij|²`
    M2,
    /// `E|u_ij|⁴`
    M4,
    /// `E|u_ij|² |u_i'j|²`
    CrossCol,
    /// `E|u_ij|² |u_ij'|²`
    CrossRow,
    /// `E|u_ij|² |u_i'j'|²`
    CrossFull,
    /// `E[u_ij u_i'j' conj(u_ij') conj(u_i'j)]`
    Quad,
}

impl HaarMoment {
    pub const ALL: [HaarMoment; 6] = [
        HaarMoment::M2,
        HaarMoment::M4,
        HaarMoment::CrossCol,
        HaarMoment::CrossRow,
        HaarMoment::CrossFull,
        HaarMoment::Quad,
    ];

    /// Exact value for an N×N Haar matrix.
    pub fn exact(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            HaarMoment::M2 => 1.0 / n,
            HaarMoment::M4 => 2.0 / (n * (n + 1.0)),
            HaarMoment::CrossCol | HaarMoment::CrossRow => 1.0 / (n * (n + 1.0)),
            HaarMoment::CrossFull => 1.0 / (n * n - 1.0),
            HaarMoment::Quad => -1.0 / (n * (n * n - 1.0)),
        }
    }

    /// The sampled quantity on one unitary, at indices `i=0, i'=1, j=0, j'=1`.
    pub fn evaluate(self, u: &CMatrix) -> f64 {
        let a = |i: usize, j: usize| u[(i, j)];
        match self {
            HaarMoment::M2 => a(0, 0).norm_sqr(),
            HaarMoment::M4 => a(0, 0).norm_sqr().powi(2),
            HaarMoment::CrossCol => a(0, 0).norm_sqr() * a(1, 0).norm_sqr(),
            HaarMoment::CrossRow => a(0, 0).norm_sqr() * a(0, 1).norm_sqr(),
            HaarMoment::CrossFull => a(0, 0).norm_sqr() * a(1, 1).norm_sqr(),
            HaarMoment::Quad => (a(0, 0) * a(1, 1) * a(0, 1).conj() * a(1, 0).conj()).re,
        }
    }
}

impl fmt::Display for HaarMoment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HaarMoment::M2 => "m2",
            HaarMoment::M4 => "m4",
            HaarMoment::CrossCol => "cross_col",
            HaarMoment::CrossRow => "cross_row",
            HaarMoment::CrossFull => "cross_full",
            HaarMoment::Quad => "quad",
        })
    }
}

impl FromStr for HaarMoment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HaarMoment::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::validation(format!("unknown Haar moment `{s}`")))
    }
}

pub fn haar_moment_estimate(n: usize, moment: HaarMoment, trials: usize, seed: u64) -> Result<Estimate> {
    if n < 2 {
        return Err(Error::validation(format!("Haar oracle needs N >= 2, got {n}")));
    }
    if trials < MIN_HAAR_TRIALS {
        return Err(Error::validation(format!("Haar oracle needs at least {MIN_HAAR_TRIALS} trials, got {trials}")));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, rng::HAAR + i as u64);
            moment.evaluate(&sample_haar(&mut rng, n))
        })
        .collect();
    Ok(Estimate::from_samples(&values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WishartMoment {
    /// `E[((Hᵀ H*)^{-1})_ii]`, one value per user.
    InvDiag,
    /// `E tr (H̃ᴴ H̃)^{-1}`
    InvTrace,
    /// `E tr (H̃ᴴ H̃)^{-2}`
    InvSqTrace,
    /// `E σ_k²`, averaged over the K eigenvalues.
    EigMean,
}

impl WishartMoment {
    pub const ALL: [WishartMoment; 4] =
        [WishartMoment::InvDiag, WishartMoment::InvTrace, WishartMoment::InvSqTrace, WishartMoment::EigMean];

    /// Exact finite-N values for a complex Wishart matrix with N degrees of freedom.
    pub fn exact(self, n: usize, betas: &[f64]) -> Vec<f64> {
        let k = betas.len() as f64;
        let d = n as f64 - k;
        match self {
            WishartMoment::InvDiag => betas.iter().map(|b| 1.0 / (d * b)).collect(),
            WishartMoment::InvTrace => vec![k / d],
            WishartMoment::InvSqTrace => vec![k * n as f64 / (d * d * d - d)],
            WishartMoment::EigMean => vec![n as f64],
        }
    }

    /// Leading-order value as N grows. Differs from [`exact`](Self::exact)
    /// only for `InvSqTrace`, where it drops the factor `N / (N - K + 1)`.
    pub fn large_n(self, n: usize, betas: &[f64]) -> Vec<f64> {
        match self {
            WishartMoment::InvSqTrace => {
                let k = betas.len() as f64;
                let d = n as f64 - k;
                vec![k / (d * (d - 1.0))]
            }
            other => other.exact(n, betas),
        }
    }
}

impl fmt::Display for WishartMoment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WishartMoment::InvDiag => "inv_diag",
            WishartMoment::InvTrace => "inv_trace",
            WishartMoment::InvSqTrace => "inv_sq_trace",
            WishartMoment::EigMean => "eig_mean",
        })
    }
}

impl FromStr for WishartMoment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WishartMoment::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::validation(format!("unknown Wishart moment `{s}`")))
    }
}

fn check_wishart(n: usize, betas: &[f64]) -> Result<()> {
    let k = betas.len();
    check_dimensions(n, k, betas)?;
    if n <= k + 1 {
        return Err(Error::validation(format!("inverse Wishart moments need N > K + 1, got N={n}, K={k}")));
    }
    Ok(())
}

fn gram(h: &CMatrix) -> CMatrix {
    h.adjoint() * h
}

fn hermitian_inverse(w: CMatrix) -> Result<CMatrix> {
    w.cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular { condition: f64::INFINITY })
}

/// Monte-Carlo estimate of a Wishart moment. `InvDiag` yields one estimate
/// per user, the others a single estimate.
pub fn wishart_moment_estimate(
    n: usize,
    betas: &[f64],
    moment: WishartMoment,
    trials: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    check_wishart(n, betas)?;
    let k = betas.len();
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, rng::WISHART + i as u64);
            let (ch, _) = draw_channel(&mut rng, n, k, betas, 0.0, seed);
            Ok(match moment {
                WishartMoment::InvDiag => {
                    let inv = hermitian_inverse(gram(&ch.overall))?;
                    (0..k).map(|j| inv[(j, j)].re).collect()
                }
                WishartMoment::InvTrace => vec![hermitian_inverse(gram(&ch.small_scale))?.trace().re],
                WishartMoment::InvSqTrace => {
                    let inv = hermitian_inverse(gram(&ch.small_scale))?;
                    vec![(&inv * &inv).trace().re]
                }
                WishartMoment::EigMean => vec![gram(&ch.small_scale).trace().re / k as f64],
            })
        })
        .collect::<Result<_>>()?;
    let width = per_trial.first().map_or(0, Vec::len);
    Ok((0..width)
        .map(|j| Estimate::from_samples(&per_trial.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect())
}

/// Joint versus factorized second inverse moment of two distinct Wishart eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPairing {
    /// `E[1 / (σ_{k1}² σ_{k2}²)]`, `k1 ≠ k2`, averaged over pairs.
    pub joint: Estimate,
    /// `(E[1 / σ_k²])²`
    pub product_of_means: f64,
    /// `(E[1/σ²])² = 1/(N-K)²`
    pub large_n: f64,
}

impl EigenPairing {
    pub fn relative_gap(&self) -> f64 {
        (self.product_of_means - self.joint.mean) / self.joint.mean
    }
}

pub fn eigen_independence_gap(n: usize, k: usize, trials: usize, seed: u64) -> Result<EigenPairing> {
    let betas = vec![1.0; k];
    check_wishart(n, &betas)?;
    let per_trial: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, rng::WISHART + i as u64);
            let (ch, _) = draw_channel(&mut rng, n, k, &betas, 0.0, seed);
            let inv: Vec<f64> = gram(&ch.small_scale).symmetric_eigenvalues().iter().map(|l| 1.0 / l).collect();
            let sum: f64 = inv.iter().sum();
            let sq: f64 = inv.iter().map(|x| x * x).sum();
            let pairs = (k * (k - 1)) as f64;
            ((sum * sum - sq) / pairs, sum / k as f64)
        })
        .collect();
    let joint = Estimate::from_samples(&per_trial.iter().map(|p| p.0).collect::<Vec<_>>());
    let mean_inv = per_trial.iter().map(|p| p.1).sum::<f64>() / trials as f64;
    let d = (n - k) as f64;
    Ok(EigenPairing { joint, product_of_means: mean_inv * mean_inv, large_n: 1.0 / (d * d) })
}
