//! Lloyd-Max scalar quantizers for Gaussian inputs and their Bussgang statistics.
//!
//! An ADC pair quantizes the in-phase and quadrature parts of a complex sample
//! independently with the same real quantizer. For a `CN(0, v)` input each part
//! is `N(0, v/2)`, so quantizers are designed for the standard deviation
//! `sqrt(v/2)`. The design itself runs in standardized units and is scaled
//! afterwards, which makes `design(b, 4v)` exactly twice `design(b, v)`.
//!
//! Cells are half-open on the left: a component `x` maps to `labels[i]` iff
//! `thresholds[i] < x <= thresholds[i + 1]`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};

pub const MAX_BITS: u32 = 12;

/// Resolution of one ADC pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resolution {
    Bits(u8),
    /// Lossless conversion: gain 1, output variance `v`, zero distortion.
    Infinite,
}

impl Resolution {
    pub fn bits(bits: u32) -> Result<Self> {
        if (1..=MAX_BITS).contains(&bits) {
            Ok(Resolution::Bits(bits as u8))
        } else {
            Err(Error::validation(format!("ADC resolution must be in 1..={MAX_BITS} bits, got {bits}")))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Resolution::Infinite)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" | "∞" => Ok(Resolution::Infinite),
            other => other
                .parse::<u32>()
                .map_err(|_| Error::validation(format!("bad resolution `{other}`")))
                .and_then(Resolution::bits),
        }
    }
}

// Serialized as a bit count or the string "inf".
impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resolution::Bits(b) => s.serialize_u8(*b),
            Resolution::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Str(String),
        }
        let r = match Raw::deserialize(d)? {
            Raw::Num(b) => Resolution::bits(b),
            Raw::Str(s) => s.parse(),
        };
        r.map_err(serde::de::Error::custom)
    }
}

/// A `b`-bit quantizer designed for one input variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarQuantizer {
    bits: u32,
    /// `2^b + 1` values, first `-inf`, last `+inf`.
    thresholds: Vec<f64>,
    /// `2^b` reconstruction levels.
    labels: Vec<f64>,
    /// Complex-input variance `v` targeted by the design.
    design_variance: f64,
}

/// Bussgang linearization `Q(x) = G x + d` of a quantizer under `CN(0, v)` input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BussgangStats {
    pub gain: f64,
    /// Variance of the complex quantizer output.
    pub output_variance: f64,
    pub distortion_variance: f64,
    /// Set when the statistics were evaluated at a variance other than the design variance.
    pub design_mismatch: bool,
}

impl BussgangStats {
    pub fn lossless(v: f64) -> Self {
        BussgangStats { gain: 1.0, output_variance: v, distortion_variance: 0.0, design_mismatch: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LloydMaxOptions {
    pub max_iterations: usize,
    /// Stop once the relative change of the MSE between iterations drops below this.
    pub tolerance: f64,
}

impl Default for LloydMaxOptions {
    fn default() -> Self {
        LloydMaxOptions { max_iterations: 500, tolerance: 1e-10 }
    }
}

/// Result of a Lloyd-Max run together with its convergence trace.
#[derive(Clone, Debug)]
pub struct LloydMaxDesign {
    pub quantizer: ScalarQuantizer,
    /// Per-component MSE normalized by the component variance `v/2`, one entry per iteration.
    pub mse_history: Vec<f64>,
    pub iterations: usize,
}

/// Designs the MSE-optimal `bits`-bit quantizer for a `CN(0, v)` input.
pub fn design_lloyd_max(bits: u32, v: f64) -> Result<ScalarQuantizer> {
    design_lloyd_max_with(bits, v, &LloydMaxOptions::default()).map(|d| d.quantizer)
}

pub fn design_lloyd_max_with(bits: u32, v: f64, opts: &LloydMaxOptions) -> Result<LloydMaxDesign> {
    check_design_inputs(bits, v)?;
    let sigma = (0.5 * v).sqrt();
    let gl = GaussLegendre::new(24);
    let levels = 1usize << bits;

    let mut thresholds = initial_thresholds(levels);
    let mut labels = vec![0.0; levels];
    let mut history: Vec<f64> = Vec::new();
    let mut residual = f64::INFINITY;

    for (i, l) in labels.iter_mut().enumerate() {
        *l = normal_centroid(thresholds[i], thresholds[i + 1]);
    }
    let mut mse = total_mse(&gl, &thresholds, &labels);

    for it in 1..=opts.max_iterations {
        if let Some(&prev) = history.last() {
            residual = (prev - mse).abs() / mse;
        }
        history.push(mse);
        if residual < opts.tolerance {
            return Ok(LloydMaxDesign {
                quantizer: ScalarQuantizer::from_standardized(bits, &thresholds, &labels, sigma, v),
                mse_history: history,
                iterations: it,
            });
        }

        // Plain Lloyd step: midpoints, then centroids. Never increases the MSE.
        let mut t_lloyd = thresholds.clone();
        update_midpoints(&mut t_lloyd, &labels);
        let l_lloyd = centroids(&t_lloyd);
        let mse_lloyd = total_mse(&gl, &t_lloyd, &l_lloyd);
        (thresholds, labels, mse) = (t_lloyd, l_lloyd, mse_lloyd);

        // Newton step on the same fixed point, kept only when it beats the Lloyd step.
        if let Some(t_newton) = newton_thresholds(&thresholds, &labels) {
            let l_newton = centroids(&t_newton);
            let mse_newton = total_mse(&gl, &t_newton, &l_newton);
            if mse_newton < mse {
                (thresholds, labels, mse) = (t_newton, l_newton, mse_newton);
            }
        }
    }

    Err(Error::NonConvergence {
        bits,
        iterations: opts.max_iterations,
        residual,
        last: Box::new(ScalarQuantizer::from_standardized(bits, &thresholds, &labels, sigma, v)),
    })
}

/// Lloyd-Max on a real training set (the 1-D k-means variant).
///
/// `samples` are real components (in-phase and quadrature parts) of received
/// signals. The set is symmetrized by appending `-x` for every sample, so the
/// result stays symmetric about zero like the Gaussian density.
pub fn design_lloyd_max_empirical(
    bits: u32,
    v: f64,
    samples: &[f64],
    opts: &LloydMaxOptions,
) -> Result<LloydMaxDesign> {
    check_design_inputs(bits, v)?;
    if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("training set must be non-empty and finite"));
    }
    let sigma = (0.5 * v).sqrt();
    let mut xs: Vec<f64> = samples.iter().flat_map(|&x| [x / sigma, -x / sigma]).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut s1 = Vec::with_capacity(xs.len() + 1);
    let mut s2 = Vec::with_capacity(xs.len() + 1);
    s1.push(0.0);
    s2.push(0.0);
    for &x in &xs {
        s1.push(s1.last().unwrap() + x);
        s2.push(s2.last().unwrap() + x * x);
    }

    let levels = 1usize << bits;
    // Warm start from the analytic optimum; sample-based Lloyd from a uniform
    // grid needs thousands of iterations beyond a few bits.
    let mut thresholds: Vec<f64> = design_lloyd_max_with(bits, v, &LloydMaxOptions::default())?
        .quantizer
        .thresholds
        .iter()
        .map(|t| t / sigma)
        .collect();
    let mut labels = vec![0.0; levels];
    let mut history: Vec<f64> = Vec::new();
    let mut residual = f64::INFINITY;

    for it in 1..=opts.max_iterations {
        let bounds: Vec<usize> = thresholds.iter().map(|&t| xs.partition_point(|&x| x <= t)).collect();
        let mut sse = 0.0;
        for i in 0..levels {
            let (lo, hi) = (bounds[i], bounds[i + 1]);
            let count = (hi - lo) as f64;
            let sum = s1[hi] - s1[lo];
            let sum_sq = s2[hi] - s2[lo];
            labels[i] = if count > 0.0 {
                sum / count
            } else {
                empty_cell_label(thresholds[i], thresholds[i + 1])
            };
            sse += sum_sq - 2.0 * labels[i] * sum + count * labels[i] * labels[i];
        }
        let mse = sse.max(0.0) / n;
        if let Some(&prev) = history.last() {
            residual = if mse > 0.0 { (prev - mse).abs() / mse } else { 0.0 };
        }
        history.push(mse);
        if residual < opts.tolerance {
            return Ok(LloydMaxDesign {
                quantizer: ScalarQuantizer::from_standardized(bits, &thresholds, &labels, sigma, v),
                mse_history: history,
                iterations: it,
            });
        }
        update_midpoints(&mut thresholds, &labels);
    }

    Err(Error::NonConvergence {
        bits,
        iterations: opts.max_iterations,
        residual,
        last: Box::new(ScalarQuantizer::from_standardized(bits, &thresholds, &labels, sigma, v)),
    })
}

fn check_design_inputs(bits: u32, v: f64) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(Error::validation(format!("bits must be in 1..={MAX_BITS}, got {bits}")));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::validation(format!("design variance must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Uniform thresholds over `[-4, 4]` standard deviations, outer ones at infinity.
fn initial_thresholds(levels: usize) -> Vec<f64> {
    let step = 8.0 / levels as f64;
    let mut t: Vec<f64> = (0..=levels).map(|i| -4.0 + step * i as f64).collect();
    t[0] = f64::NEG_INFINITY;
    t[levels] = f64::INFINITY;
    t
}

fn odd_symmetric(x: &[f64], sigma: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let j = n - 1 - i;
            if i == j {
                0.0
            } else {
                let a = 0.5 * (x[i.max(j)] - x[i.min(j)]) * sigma;
                if i > j { a } else { -a }
            }
        })
        .collect()
}

fn update_midpoints(thresholds: &mut [f64], labels: &[f64]) {
    for i in 1..labels.len() {
        thresholds[i] = 0.5 * (labels[i - 1] + labels[i]);
    }
}

fn centroids(thresholds: &[f64]) -> Vec<f64> {
    thresholds.windows(2).map(|w| normal_centroid(w[0], w[1])).collect()
}

fn total_mse(gl: &GaussLegendre, thresholds: &[f64], labels: &[f64]) -> f64 {
    labels.iter().enumerate().map(|(i, &l)| cell_mse(gl, thresholds[i], thresholds[i + 1], l)).sum()
}

/// One Newton step on `x_j = (m_{j-1}(x) + m_j(x)) / 2` for the interior
/// thresholds, where `m_i` is the centroid of cell `i`. The Jacobian is
/// tridiagonal. Returns `None` if the step breaks the threshold ordering.
fn newton_thresholds(thresholds: &[f64], labels: &[f64]) -> Option<Vec<f64>> {
    let levels = labels.len();
    if levels < 3 {
        return None;
    }
    // Centroid sensitivities: dm/da = phi(a)(m - a)/p, dm/db = phi(b)(b - m)/p.
    let mut dm_lo = vec![0.0; levels];
    let mut dm_hi = vec![0.0; levels];
    for i in 0..levels {
        let (a, b, m) = (thresholds[i], thresholds[i + 1], labels[i]);
        let p = std_normal_mass(a, b);
        if !(p > 0.0) {
            return None;
        }
        if a.is_finite() {
            dm_lo[i] = std_normal_pdf(a) * (m - a) / p;
        }
        if b.is_finite() {
            dm_hi[i] = std_normal_pdf(b) * (b - m) / p;
        }
    }
    let n = levels - 1;
    let mut diag = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        // Threshold j+1 separates cells j and j+1.
        diag[j] = 1.0 - 0.5 * (dm_hi[j] + dm_lo[j + 1]);
        if j > 0 {
            lower[j] = -0.5 * dm_lo[j];
        }
        if j + 1 < n {
            upper[j] = -0.5 * dm_hi[j + 1];
        }
        rhs[j] = -(thresholds[j + 1] - 0.5 * (labels[j] + labels[j + 1]));
    }
    let step = solve_tridiagonal(&lower, &diag, &upper, rhs)?;
    let mut next = thresholds.to_vec();
    for (j, d) in step.iter().enumerate() {
        next[j + 1] += d;
    }
    next.windows(2).all(|w| w[0] < w[1]).then_some(next)
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    c[0] = upper[0] / d;
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - lower[i] * c[i - 1];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        c[i] = upper[i] / d;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    rhs.iter().all(|x| x.is_finite()).then_some(rhs)
}

fn empty_cell_label(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => 0.5 * (a + b),
        (false, true) => b,
        (true, false) => a + 1e-12_f64.max(a.abs() * 1e-12),
        (false, false) => 0.0,
    }
}

impl ScalarQuantizer {
    /// Scales standardized tables by `sigma`, mirroring the upper half onto
    /// the lower so the tables are exactly odd.
    fn from_standardized(bits: u32, thresholds: &[f64], labels: &[f64], sigma: f64, v: f64) -> Self {
        ScalarQuantizer {
            bits,
            thresholds: odd_symmetric(thresholds, sigma),
            labels: odd_symmetric(labels, sigma),
            design_variance: v,
        }
    }

    /// Builds a quantizer from explicit tables, checking ordering and label placement.
    pub fn from_tables(bits: u32, thresholds: Vec<f64>, labels: Vec<f64>, design_variance: f64) -> Result<Self> {
        check_design_inputs(bits, design_variance)?;
        let levels = 1usize << bits;
        if labels.len() != levels || thresholds.len() != levels + 1 {
            return Err(Error::validation(format!(
                "{bits}-bit quantizer needs {levels} labels and {} thresholds",
                levels + 1
            )));
        }
        if thresholds[0] != f64::NEG_INFINITY || thresholds[levels] != f64::INFINITY {
            return Err(Error::validation("outer thresholds must be -inf and +inf"));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("thresholds must be strictly increasing"));
        }
        if labels.iter().enumerate().any(|(i, &l)| !(l > thresholds[i] && l <= thresholds[i + 1])) {
            return Err(Error::validation("every label must lie in its cell (t_i, t_i+1]"));
        }
        Ok(ScalarQuantizer { bits, thresholds, labels, design_variance })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn design_variance(&self) -> f64 {
        self.design_variance
    }

    /// Interior (finite) thresholds.
    pub fn finite_thresholds(&self) -> &[f64] {
        &self.thresholds[1..self.thresholds.len() - 1]
    }

    /// Index `i` of the cell `(t_i, t_{i+1}]` holding `x`.
    #[inline]
    pub fn cell_index(&self, x: f64) -> usize {
        self.finite_thresholds().partition_point(|&t| t < x)
    }

    #[inline]
    pub fn quantize(&self, x: f64) -> f64 {
        self.labels[self.cell_index(x)]
    }

    /// Quantizes real and imaginary parts independently.
    pub fn quantize_complex(&self, sample: Complex64) -> Result<Complex64> {
        if sample.re.is_nan() || sample.im.is_nan() {
            return Err(Error::validation("cannot quantize NaN"));
        }
        Ok(self.quantize_complex_unchecked(sample))
    }

    #[inline]
    pub(crate) fn quantize_complex_unchecked(&self, sample: Complex64) -> Complex64 {
        Complex64::new(self.quantize(sample.re), self.quantize(sample.im))
    }

    /// Bussgang gain `G_b = (1/sqrt(pi v)) sum_i l_i [exp(-t_i^2/v) - exp(-t_{i+1}^2/v)]`.
    pub fn bussgang_gain(&self, v: f64) -> Result<f64> {
        check_variance(v)?;
        let g = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| l * (gauss_kernel(self.thresholds[i], v) - gauss_kernel(self.thresholds[i + 1], v)))
            .sum::<f64>();
        Ok(g / (PI * v).sqrt())
    }

    /// Complex output variance `sum_i l_i^2 [erf(t_{i+1}/sqrt v) - erf(t_i/sqrt v)]`.
    pub fn output_variance(&self, v: f64) -> Result<f64> {
        check_variance(v)?;
        let sv = v.sqrt();
        Ok(self
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| l * l * erf_diff(self.thresholds[i] / sv, self.thresholds[i + 1] / sv))
            .sum())
    }

    /// `output_variance - v * gain^2`.
    pub fn distortion_variance(&self, v: f64) -> Result<f64> {
        Ok(self.bussgang(v)?.distortion_variance)
    }

    pub fn bussgang(&self, v: f64) -> Result<BussgangStats> {
        let gain = self.bussgang_gain(v)?;
        let output_variance = self.output_variance(v)?;
        let distortion_variance = (output_variance - v * gain * gain).max(0.0);
        let design_mismatch = (v - self.design_variance).abs() > 1e-9 * self.design_variance.max(1.0);
        Ok(BussgangStats { gain, output_variance, distortion_variance, design_mismatch })
    }

    /// Per-component MSE under the design input, normalized by the component variance.
    pub fn normalized_mse(&self) -> f64 {
        let sigma = (0.5 * self.design_variance).sqrt();
        let gl = GaussLegendre::new(24);
        (0..self.labels.len())
            .map(|i| cell_mse(&gl, self.thresholds[i] / sigma, self.thresholds[i + 1] / sigma, self.labels[i] / sigma))
            .sum()
    }

    /// One Lloyd-Max iteration (midpoints, then centroids) applied to this quantizer.
    pub fn lloyd_step(&self) -> ScalarQuantizer {
        let sigma = (0.5 * self.design_variance).sqrt();
        let mut t: Vec<f64> = self.thresholds.iter().map(|x| x / sigma).collect();
        let mut l: Vec<f64> = self.labels.iter().map(|x| x / sigma).collect();
        update_midpoints(&mut t, &l);
        for (i, li) in l.iter_mut().enumerate() {
            *li = normal_centroid(t[i], t[i + 1]);
        }
        ScalarQuantizer::from_standardized(self.bits, &t, &l, sigma, self.design_variance)
    }

    /// CSV row `bits, v, label_0.., threshold_1..` (finite thresholds only).
    pub fn csv_record(&self) -> Vec<String> {
        let mut row = vec![self.bits.to_string(), self.design_variance.to_string()];
        row.extend(self.labels.iter().map(f64::to_string));
        row.extend(self.finite_thresholds().iter().map(f64::to_string));
        row
    }
}

/// Writes one CSV row per quantizer. Rows have different lengths for different bit counts.
pub fn write_quantizer_csv<W: std::io::Write>(quantizers: &[ScalarQuantizer], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for q in quantizers {
        w.write_record(q.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

fn check_variance(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("input variance must be positive, got {v}")))
    }
}

#[inline]
fn gauss_kernel(t: f64, v: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        (-t * t / v).exp()
    }
}

/// `erf(b) - erf(a)` for `a < b`, evaluated in the tail where it is accurate.
fn erf_diff(a: f64, b: f64) -> f64 {
    let e = |x: f64| {
        if x == f64::INFINITY {
            1.0
        } else if x == f64::NEG_INFINITY {
            -1.0
        } else {
            erf(x)
        }
    };
    let c = |x: f64| {
        if x == f64::INFINITY {
            0.0
        } else if x == f64::NEG_INFINITY {
            2.0
        } else {
            erfc(x)
        }
    };
    if a >= 0.0 {
        c(a) - c(b)
    } else if b <= 0.0 {
        c(-b) - c(-a)
    } else {
        e(b) - e(a)
    }
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// `P(a < X <= b)` for standard normal `X`.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    0.5 * erf_diff(a * FRAC_1_SQRT_2, b * FRAC_1_SQRT_2)
}

/// Conditional mean of a standard normal on `(a, b]`.
fn normal_centroid(a: f64, b: f64) -> f64 {
    let p = std_normal_mass(a, b);
    if p > 0.0 {
        ((std_normal_pdf(a) - std_normal_pdf(b)) / p).clamp(a, b)
    } else {
        empty_cell_label(a, b)
    }
}

/// `integral_a^b (x - l)^2 phi(x) dx` for the standard normal density.
fn cell_mse(gl: &GaussLegendre, a: f64, b: f64, l: f64) -> f64 {
    if a.is_finite() && b.is_finite() {
        gl.integrate(a, b, |x| (x - l) * (x - l) * std_normal_pdf(x))
    } else {
        // p(1 + l^2) + (a - 2l) phi(a) - (b - 2l) phi(b), with x phi(x) -> 0 at infinity.
        let p = std_normal_mass(a, b);
        let edge = |t: f64| if t.is_infinite() { 0.0 } else { (t - 2.0 * l) * std_normal_pdf(t) };
        (p * (1.0 + l * l) + edge(a) - edge(b)).max(0.0)
    }
}

/// Gauss-Legendre rule on `[-1, 1]`.
struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>()
    }
}
