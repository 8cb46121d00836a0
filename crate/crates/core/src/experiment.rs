//! Parameter sweeps: JSON experiment configs, ADC profile construction,
//! parallel evaluation of closed-form and Monte-Carlo rates, CSV tables and
//! SVG line plots.
//!
//! Powers are given in dB in configs and converted to linear once, when a
//! sweep point is resolved.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{partner_index, AdcProfile, Aggregates, NetworkConfig, NetworkParams};
use crate::quantizer::{
    design_lloyd_max, design_lloyd_max_empirical, LloydMaxOptions, Resolution, ScalarQuantizer, MAX_BITS,
};
use crate::rates::{closed_form, rate_monte_carlo, AlphaSource, McMode, McOptions, RateMode};
use crate::{network, rng};

pub const DEFAULT_N_CHANNELS: usize = 1000;
pub const DEFAULT_N_SYMBOLS: usize = 100;

/// Mixed-ADC-#1 antenna counts for 1..=8 bits at N = 50 and N = 100.
pub const TABLE1_N50: [usize; 8] = [3, 6, 7, 6, 7, 11, 5, 5];
pub const TABLE1_N100: [usize; 8] = [7, 12, 15, 11, 14, 22, 9, 10];

/// Mixed-ADC-#2: 1..=4 bits on 21, 27, 22 and 30 antennas (N = 100).
pub const MIXED2_N100: [usize; 4] = [21, 27, 22, 30];

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "p_u_db")]
    PuDb,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "N")]
    N,
    #[serde(rename = "sigma_e_sq")]
    SigmaESq,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PuDb => "p_u_db",
            SweepVariable::K => "K",
            SweepVariable::N => "N",
            SweepVariable::SigmaESq => "sigma_e_sq",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A second parameter varied inside every sweep point, producing one curve per value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesVariable {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "sigma_e_sq")]
    SigmaESq,
    /// `K / N`; K is recomputed at every N.
    #[serde(rename = "loading")]
    Loading,
}

impl SeriesVariable {
    pub fn name(self) -> &'static str {
        match self {
            SeriesVariable::N => "N",
            SeriesVariable::K => "K",
            SeriesVariable::SigmaESq => "sigma_e_sq",
            SeriesVariable::Loading => "c",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub variable: SeriesVariable,
    pub values: Vec<f64>,
}

/// Network parameters shared by every sweep point. The swept one may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    /// Sets K = c N at every point instead of a fixed K.
    #[serde(default)]
    pub loading: Option<f64>,
    #[serde(default)]
    pub p_u_db: Option<f64>,
    pub p_r_db: f64,
    /// Large-scale fading per user; all ones when absent.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma_e_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Uniform {
        bits: u8,
    },
    Infinite,
    /// `(bits, antennas)` pairs. With `scale` the counts may describe a
    /// fraction of the array and are multiplied by `N / total`.
    Counts {
        counts: Vec<(u8, usize)>,
        #[serde(default)]
        scale: bool,
    },
    /// I.i.d. resolutions, discrete uniform on `[b_min, b_max]`.
    RandomUniform {
        b_min: u8,
        b_max: u8,
        seed: u64,
    },
    /// Mixed-ADC-#1: the tabulated rows for N = 50 and 100; 150 is the
    /// 50-antenna row times three, 200/300/400 the 100-antenna row times 2/3/4.
    Table1,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: ProfileKind,
}

impl ProfileSpec {
    pub fn new(kind: ProfileKind) -> Self {
        ProfileSpec { name: None, kind }
    }

    pub fn named(name: impl Into<String>, kind: ProfileKind) -> Self {
        ProfileSpec { name: Some(name.into()), kind }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match &self.kind {
            ProfileKind::Uniform { bits } => format!("{bits}-bit"),
            ProfileKind::Infinite => "inf-bit".into(),
            ProfileKind::Counts { counts, .. } => {
                let parts: Vec<String> = counts.iter().map(|(b, n)| format!("{n}x{b}")).collect();
                format!("mixed {}", parts.join("+"))
            }
            ProfileKind::RandomUniform { b_min, b_max, seed } => format!("random {b_min}-{b_max} bit #{seed}"),
            ProfileKind::Table1 => "mixed-ADC-#1".into(),
        }
    }

    /// Per-antenna resolutions for an array of `n` antennas.
    pub fn resolutions(&self, n: usize) -> Result<Vec<Resolution>> {
        let bits = |b: u8| -> Result<Resolution> {
            if b == 0 || b as u32 > MAX_BITS {
                return Err(Error::validation(format!("resolution must be 1..={MAX_BITS} bits, got {b}")));
            }
            Ok(Resolution::Bits(b))
        };
        match &self.kind {
            ProfileKind::Uniform { bits: b } => Ok(vec![bits(*b)?; n]),
            ProfileKind::Infinite => Ok(vec![Resolution::Infinite; n]),
            ProfileKind::Counts { counts, scale } => {
                let total: usize = counts.iter().map(|c| c.1).sum();
                let factor = if *scale && total > 0 && n.is_multiple_of(total) { n / total } else { 1 };
                if total * factor != n {
                    return Err(Error::validation(format!("antenna counts sum to {total} but N={n}")));
                }
                let mut out = Vec::with_capacity(n);
                for &(b, count) in counts {
                    out.extend(std::iter::repeat_n(bits(b)?, count * factor));
                }
                Ok(out)
            }
            ProfileKind::RandomUniform { b_min, b_max, seed } => {
                bits(*b_min)?;
                bits(*b_max)?;
                if b_min > b_max {
                    return Err(Error::validation(format!("b_min {b_min} exceeds b_max {b_max}")));
                }
                let mut rng = rng::substream(*seed, rng::PROFILE);
                Ok((0..n).map(|_| Resolution::Bits(rng.random_range(*b_min..=*b_max))).collect())
            }
            ProfileKind::Table1 => {
                let counts = table1_counts(n)?;
                Ok(counts_to_resolutions(&counts))
            }
        }
    }
}

/// Mixed-ADC-#1 antenna counts (1..=8 bits) for the array sizes it is defined for.
pub fn table1_counts(n: usize) -> Result<[usize; 8]> {
    let (row, factor) = match n {
        50 => (TABLE1_N50, 1),
        100 => (TABLE1_N100, 1),
        150 => (TABLE1_N50, 3),
        200 | 300 | 400 => (TABLE1_N100, n / 100),
        _ => {
            return Err(Error::validation(format!(
                "mixed-ADC-#1 is defined for N in {{50, 100, 150, 200, 300, 400}}, got {n}"
            )))
        }
    };
    Ok(row.map(|c| c * factor))
}

/// Antenna counts indexed by `bits - 1`, expanded in increasing resolution.
pub fn counts_to_resolutions(counts: &[usize]) -> Vec<Resolution> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(b, &n)| std::iter::repeat_n(Resolution::Bits(b as u8 + 1), n))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    #[serde(default = "default_channels")]
    pub n_channels: usize,
    #[serde(default = "default_symbols")]
    pub n_symbols: usize,
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub mode: McMode,
    #[serde(default)]
    pub alpha: AlphaSource,
}

fn default_channels() -> usize {
    DEFAULT_N_CHANNELS
}

fn default_symbols() -> usize {
    DEFAULT_N_SYMBOLS
}

fn default_true() -> bool {
    true
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            n_channels: DEFAULT_N_CHANNELS,
            n_symbols: DEFAULT_N_SYMBOLS,
            enabled: true,
            mode: McMode::SemiAnalytic,
            alpha: AlphaSource::Closed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerDesign {
    #[default]
    Analytic,
    /// Lloyd-Max on simulated received samples.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    #[serde(default)]
    pub design: QuantizerDesign,
    #[serde(default = "default_training")]
    pub training_samples: usize,
}

fn default_training() -> usize {
    200_000
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        QuantizerSpec { design: QuantizerDesign::Analytic, training_samples: default_training() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub title: Option<String>,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub fixed: FixedParams,
    #[serde(default)]
    pub series: Option<Series>,
    pub profiles: Vec<ProfileSpec>,
    /// Closed forms to evaluate. Defaults to the imperfect-CSI theorem when any
    /// point has CSI error and the perfect-CSI one otherwise.
    #[serde(default)]
    pub modes: Option<Vec<RateMode>>,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub quantizer: QuantizerSpec,
    /// Report every (k, t) pair instead of R_{1,2}.
    #[serde(default)]
    pub all_pairs: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn config_error(path: impl Into<String>, message: impl fmt::Display) -> Error {
    Error::Config { path: path.into(), message: message.to_string() }
}

/// Parses and validates a JSON experiment config.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { "$".into() } else { path }, e.into_inner())
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    parse_experiment_config(&text)
}

/// One resolved sweep point. Powers are linear.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub series_value: Option<f64>,
    pub config: NetworkConfig,
}

fn as_count(x: f64, path: &str) -> Result<usize> {
    if x.fract() != 0.0 || !(1.0..=1e9).contains(&x) {
        return Err(config_error(path, format!("expected a positive integer, got {x}")));
    }
    Ok(x as usize)
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(config_error("sweep_values", "must not be empty"));
        }
        for (i, x) in self.sweep_values.iter().enumerate() {
            if !x.is_finite() {
                return Err(config_error(format!("sweep_values[{i}]"), "must be finite"));
            }
        }
        if self.sweep_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_error("sweep_values", "must be strictly increasing"));
        }
        if self.profiles.is_empty() {
            return Err(config_error("profiles", "must not be empty"));
        }
        if let Some(series) = &self.series {
            if series.values.is_empty() {
                return Err(config_error("series.values", "must not be empty"));
            }
            let clash = match series.variable {
                SeriesVariable::N => self.sweep_variable == SweepVariable::N,
                SeriesVariable::K | SeriesVariable::Loading => self.sweep_variable == SweepVariable::K,
                SeriesVariable::SigmaESq => self.sweep_variable == SweepVariable::SigmaESq,
            };
            if clash {
                return Err(config_error("series.variable", "cannot vary the swept parameter"));
            }
        }
        if let Some(modes) = &self.modes {
            if modes.is_empty() {
                return Err(config_error("modes", "must not be empty when given"));
            }
        }
        if self.mc.enabled && (self.mc.n_channels < 100 || self.mc.n_symbols < 10) {
            return Err(config_error("mc", "Monte Carlo needs n_channels >= 100 and n_symbols >= 10"));
        }
        if self.quantizer.design == QuantizerDesign::Empirical && self.quantizer.training_samples < 1000 {
            return Err(config_error("quantizer.training_samples", "must be at least 1000"));
        }
        for point in self.points()? {
            for (i, profile) in self.profiles.iter().enumerate() {
                profile
                    .resolutions(point.config.n)
                    .map_err(|e| config_error(format!("profiles[{i}]"), strip_validation(e)))?;
            }
        }
        Ok(())
    }

    /// Sweep values crossed with series values, in output order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let series: Vec<Option<f64>> = match &self.series {
            Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
            None => vec![None],
        };
        let mut out = Vec::with_capacity(self.sweep_values.len() * series.len());
        for (i, &x) in self.sweep_values.iter().enumerate() {
            for (j, &s) in series.iter().enumerate() {
                let config = self.resolve(i, x, j, s)?;
                out.push(SweepPoint { sweep_index: i, sweep_value: x, series_value: s, config });
            }
        }
        Ok(out)
    }

    fn resolve(&self, i: usize, x: f64, j: usize, s: Option<f64>) -> Result<NetworkConfig> {
        let f = &self.fixed;
        let here = format!("sweep_values[{i}]");
        let (mut n, mut k, mut p_u_db, mut sigma, mut loading) = (f.n, f.k, f.p_u_db, f.sigma_e_sq, f.loading);
        match self.sweep_variable {
            SweepVariable::PuDb => p_u_db = Some(x),
            SweepVariable::K => k = Some(as_count(x, &here)?),
            SweepVariable::N => n = Some(as_count(x, &here)?),
            SweepVariable::SigmaESq => sigma = x,
        }
        if let (Some(series), Some(s)) = (&self.series, s) {
            let path = format!("series.values[{j}]");
            match series.variable {
                SeriesVariable::N => n = Some(as_count(s, &path)?),
                SeriesVariable::K => {
                    k = Some(as_count(s, &path)?);
                    loading = None;
                }
                SeriesVariable::SigmaESq => sigma = s,
                SeriesVariable::Loading => loading = Some(s),
            }
        }
        let n = n.ok_or_else(|| config_error("fixed.N", "required unless N is swept"))?;
        if let Some(c) = loading {
            if !(c > 0.0 && c < 1.0) {
                return Err(config_error("fixed.loading", format!("must lie in (0, 1), got {c}")));
            }
            let kc = c * n as f64;
            if (kc - kc.round()).abs() > 1e-9 || kc.round() < 2.0 {
                return Err(config_error(&here, format!("loading {c} at N={n} gives non-integer or too few users {kc}")));
            }
            k = Some(kc.round() as usize);
        }
        let k = k.ok_or_else(|| config_error("fixed.K", "required unless K is swept or set by loading"))?;
        let p_u_db = p_u_db.ok_or_else(|| config_error("fixed.p_u_db", "required unless p_u_db is swept"))?;
        let betas = match &f.betas {
            Some(b) if b.len() != k => {
                return Err(config_error("fixed.betas", format!("has {} entries but K={k} at {here}", b.len())))
            }
            Some(b) => b.clone(),
            None => vec![1.0; k],
        };
        let config = NetworkConfig {
            n,
            k,
            p_u: db_to_linear(p_u_db),
            p_r: db_to_linear(f.p_r_db),
            betas,
            sigma_e_sq: sigma,
        };
        config.validate().map_err(|e| config_error(&here, strip_validation(e)))?;
        Ok(config)
    }

    fn modes(&self, points: &[SweepPoint]) -> Vec<RateMode> {
        match &self.modes {
            Some(m) => m.clone(),
            None if points.iter().any(|p| p.config.sigma_e_sq > 0.0) => vec![RateMode::Icsi],
            None => vec![RateMode::Perfect],
        }
    }

    fn series_suffix(&self, value: Option<f64>) -> String {
        match (&self.series, value) {
            (Some(s), Some(v)) => format!(", {}={v}", s.variable.name()),
            _ => String::new(),
        }
    }
}

fn strip_validation(e: Error) -> String {
    match e {
        Error::Validation(m) => m,
        other => other.to_string(),
    }
}

/// Designs quantizers once per `(bits, v)` pair, with `v` keyed at 1e-9 granularity.
pub struct QuantizerCache {
    entries: BTreeMap<(u32, i64), std::result::Result<Arc<ScalarQuantizer>, String>>,
}

fn variance_key(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

impl QuantizerCache {
    /// Designs every `(bits, v)` in `requests`; the first `v` seen for a key is used.
    pub fn build(requests: &[(u32, f64, &NetworkConfig)], design: &QuantizerSpec, seed: u64) -> Self {
        let mut first: BTreeMap<(u32, i64), (f64, &NetworkConfig)> = BTreeMap::new();
        for &(bits, v, cfg) in requests {
            first.entry((bits, variance_key(v))).or_insert((v, cfg));
        }
        let jobs: Vec<_> = first.into_iter().collect();
        let entries = jobs
            .into_par_iter()
            .map(|(key, (v, cfg))| {
                let q = match design.design {
                    QuantizerDesign::Analytic => design_lloyd_max(key.0, v),
                    QuantizerDesign::Empirical => network::training_set(cfg, design.training_samples, seed)
                        .and_then(|xs| design_lloyd_max_empirical(key.0, v, &xs, &LloydMaxOptions::default()))
                        .map(|d| d.quantizer),
                };
                (key, q.map(Arc::new).map_err(|e| e.to_string()))
            })
            .collect();
        QuantizerCache { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, bits: u32, v: f64) -> Result<Arc<ScalarQuantizer>> {
        match self.entries.get(&(bits, variance_key(v))) {
            Some(Ok(q)) => Ok(q.clone()),
            Some(Err(msg)) => Err(Error::validation(format!("quantizer design failed: {msg}"))),
            None => Err(Error::validation(format!("no cached quantizer for {bits} bits at v={v}"))),
        }
    }
}

/// Materializes a profile from its spec; distinct quantizers are designed once.
pub fn build_profile(spec: &ProfileSpec, n: usize, v: f64) -> Result<AdcProfile> {
    AdcProfile::design(spec.resolutions(n)?, v)
}

/// One CSV row. Fields are `None` when the point failed before producing them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub profile_name: String,
    pub mode: RateMode,
    pub k: usize,
    pub partner: usize,
    pub t: usize,
    pub rate_closed: Option<f64>,
    pub rate_mc: Option<f64>,
    pub rate_mc_stderr: Option<f64>,
    pub alpha: Option<f64>,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub c_hat: Option<f64>,
    pub seed: u64,
    /// `ok`, or the reason values are missing.
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const CSV_COLUMNS: [&str; 16] = [
    "sweep_var",
    "sweep_value",
    "profile_name",
    "mode",
    "k",
    "partner",
    "t",
    "rate_closed",
    "rate_mc",
    "rate_mc_stderr",
    "alpha",
    "g1",
    "g2",
    "c_hat",
    "seed",
    "status",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

struct Task<'a> {
    point: &'a SweepPoint,
    profile: &'a ProfileSpec,
    resolutions: Vec<Resolution>,
}

/// Evaluates every sweep point and profile. Per-point failures become flagged rows.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let points = spec.points()?;
    let modes = spec.modes(&points);
    let mut tasks = Vec::with_capacity(points.len() * spec.profiles.len());
    for point in &points {
        for profile in &spec.profiles {
            tasks.push(Task { point, profile, resolutions: profile.resolutions(point.config.n)? });
        }
    }
    let mut requests = Vec::new();
    for task in &tasks {
        let mut seen = [false; MAX_BITS as usize + 1];
        for r in &task.resolutions {
            if let Resolution::Bits(b) = *r {
                if !std::mem::replace(&mut seen[b as usize], true) {
                    requests.push((b as u32, task.point.config.v(), &task.point.config));
                }
            }
        }
    }
    let cache = QuantizerCache::build(&requests, &spec.quantizer, spec.seed);
    log::info!("sweep: {} points x {} profiles, {} quantizer designs", points.len(), spec.profiles.len(), cache.len());

    let rows: Vec<Vec<ResultRow>> = tasks.par_iter().map(|task| evaluate(spec, &modes, &cache, task)).collect();
    let rows: Vec<ResultRow> = rows.into_iter().flatten().collect();
    for r in rows.iter().filter(|r| !r.is_ok()) {
        log::warn!("{}={} {} {}: {}", r.sweep_var, r.sweep_value, r.profile_name, r.mode, r.status);
    }
    Ok(ResultTable { rows })
}

fn evaluate(spec: &ExperimentSpec, modes: &[RateMode], cache: &QuantizerCache, task: &Task) -> Vec<ResultRow> {
    let cfg = &task.point.config;
    let pairs: Vec<(usize, usize)> =
        if spec.all_pairs { (1..cfg.k).flat_map(|t| (1..=cfg.k).map(move |k| (k, t))).collect() } else { vec![(1, 1)] };
    let name = format!("{}{}", task.profile.label(), spec.series_suffix(task.point.series_value));
    let blank = |mode: RateMode, k: usize, t: usize, status: String| ResultRow {
        sweep_var: spec.sweep_variable,
        sweep_value: task.point.sweep_value,
        profile_name: name.clone(),
        mode,
        k,
        partner: partner_index(k, t, cfg.k).unwrap_or(0),
        t,
        rate_closed: None,
        rate_mc: None,
        rate_mc_stderr: None,
        alpha: None,
        g1: None,
        g2: None,
        c_hat: None,
        seed: spec.seed,
        status,
    };

    let params = AdcProfile::build(task.resolutions.clone(), cfg.v(), |b, v| cache.get(b, v))
        .and_then(|profile| NetworkParams::with_profile(cfg.clone(), profile));
    let params = match params {
        Ok(p) => p,
        Err(e) => {
            let status = format!("profile: {e}");
            return pairs
                .iter()
                .flat_map(|&(k, t)| modes.iter().map(move |&m| (m, k, t)))
                .map(|(m, k, t)| blank(m, k, t, status.clone()))
                .collect();
        }
    };
    let agg: Aggregates = params.profile().aggregates();
    let mc_opts = McOptions { mode: spec.mc.mode, alpha: spec.mc.alpha, ..McOptions::default() };

    let mut rows = Vec::with_capacity(pairs.len() * modes.len());
    for &(k, t) in &pairs {
        let mc = spec
            .mc
            .enabled
            .then(|| rate_monte_carlo(&params, k, t, spec.mc.n_channels, spec.mc.n_symbols, spec.seed, &mc_opts));
        for &mode in modes {
            let mut row = blank(mode, k, t, String::new());
            row.g1 = Some(agg.g1);
            row.g2 = Some(agg.g2);
            row.c_hat = Some(agg.c_hat);
            let mut problems = Vec::new();
            match closed_form(&params, mode, k, t) {
                Ok((rate, alpha)) => {
                    row.rate_closed = Some(rate);
                    row.alpha = Some(alpha);
                }
                Err(e) => problems.push(format!("closed: {e}")),
            }
            match &mc {
                Some(Ok(m)) => {
                    row.rate_mc = Some(m.rate.mean);
                    row.rate_mc_stderr = Some(m.rate.std_error);
                }
                Some(Err(e)) => problems.push(format!("mc: {e}")),
                None => {}
            }
            row.status = if problems.is_empty() { "ok".into() } else { problems.join("; ") };
            rows.push(row);
        }
    }
    rows
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Io { path: PathBuf::from("<csv>"), source: e.into() };
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for row in &self.rows {
            w.serialize(row).map_err(io)?;
        }
        w.flush().map_err(|source| Error::Io { path: PathBuf::from("<csv>"), source })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(|e| Error::validation(format!("CSV header: {e}")))?;
        if headers.iter().ne(CSV_COLUMNS) {
            return Err(Error::validation(format!("unexpected CSV columns: {headers:?}")));
        }
        let rows = r
            .deserialize()
            .enumerate()
            .map(|(i, row)| row.map_err(|e| Error::validation(format!("CSV row {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        Ok(ResultTable { rows })
    }

    pub fn emit_csv(&self, path: &Path) -> Result<()> {
        let text = self.to_csv_string()?;
        fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
    }

    pub fn emit_svg(&self, path: &Path, x: &str, y: &str, series: &str) -> Result<()> {
        let svg = self.render_svg(x, y, series)?;
        fs::write(path, svg).map_err(|source| Error::Io { path: path.to_owned(), source })
    }

    /// A line plot of `y` against `x`, one polyline per distinct `series` value.
    pub fn render_svg(&self, x: &str, y: &str, series: &str) -> Result<String> {
        for col in [x, y] {
            if !is_numeric_column(col, self) {
                return Err(Error::validation(format!("unknown numeric column `{col}`")));
            }
        }
        if !CSV_COLUMNS.contains(&series) && !is_numeric_column(series, self) {
            return Err(Error::validation(format!("unknown column `{series}`")));
        }
        let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for row in &self.rows {
            let key = text_value(row, series);
            let idx = match groups.iter().position(|g| g.0 == key) {
                Some(i) => i,
                None => {
                    groups.push((key, Vec::new()));
                    groups.len() - 1
                }
            };
            if let (Some(a), Some(b)) = (numeric_value(row, x), numeric_value(row, y)) {
                if a.is_finite() && b.is_finite() {
                    groups[idx].1.push((a, b));
                }
            }
        }
        for g in &mut groups {
            g.1.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Ok(Plot::new(x, y, &groups).render())
    }
}

fn is_numeric_column(col: &str, table: &ResultTable) -> bool {
    matches!(
        col,
        "sweep_value"
            | "k"
            | "partner"
            | "t"
            | "rate_closed"
            | "rate_mc"
            | "rate_mc_stderr"
            | "alpha"
            | "g1"
            | "g2"
            | "c_hat"
            | "seed"
    ) || table.rows.first().is_some_and(|r| r.sweep_var.name() == col)
        || (table.rows.is_empty() && ["p_u_db", "K", "N", "sigma_e_sq"].contains(&col))
}

fn numeric_value(row: &ResultRow, col: &str) -> Option<f64> {
    match col {
        "sweep_value" => Some(row.sweep_value),
        "k" => Some(row.k as f64),
        "partner" => Some(row.partner as f64),
        "t" => Some(row.t as f64),
        "rate_closed" => row.rate_closed,
        "rate_mc" => row.rate_mc,
        "rate_mc_stderr" => row.rate_mc_stderr,
        "alpha" => row.alpha,
        "g1" => row.g1,
        "g2" => row.g2,
        "c_hat" => row.c_hat,
        "seed" => Some(row.seed as f64),
        c if c == row.sweep_var.name() => Some(row.sweep_value),
        _ => None,
    }
}

fn text_value(row: &ResultRow, col: &str) -> String {
    match col {
        "sweep_var" => row.sweep_var.to_string(),
        "profile_name" => row.profile_name.clone(),
        "mode" => row.mode.to_string(),
        "status" => row.status.clone(),
        _ => numeric_value(row, col).map(|v| v.to_string()).unwrap_or_default(),
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Plot<'a> {
    x_label: &'a str,
    y_label: &'a str,
    groups: &'a [(String, Vec<(f64, f64)>)],
    x_range: (f64, f64),
    y_range: (f64, f64),
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.3}", v);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl<'a> Plot<'a> {
    fn new(x_label: &'a str, y_label: &'a str, groups: &'a [(String, Vec<(f64, f64)>)]) -> Self {
        let pts = || groups.iter().flat_map(|g| g.1.iter());
        Plot {
            x_label,
            y_label,
            groups,
            x_range: padded_range(pts().map(|p| p.0)),
            y_range: padded_range(pts().map(|p| p.1)),
        }
    }

    fn sx(&self, x: f64) -> f64 {
        LEFT + (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * (WIDTH - LEFT - RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y_range.0) / (self.y_range.1 - self.y_range.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn render(&self) -> String {
        let mut s = String::new();
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let yv = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let (px, py) = (self.sx(xv), self.sy(yv));
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 20.0,
                tick_label(xv)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            0.5 * (x0 + x1),
            HEIGHT - 15.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            0.5 * (y0 + y1),
            0.5 * (y0 + y1),
            escape(self.y_label)
        );
        for (i, (name, pts)) in self.groups.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y))).collect();
            let _ = writeln!(s, r#"<g class="series" data-name="{}">"#, escape(name));
            if coords.len() > 1 {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
            }
            for &(x, y) in pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, self.sx(x), self.sy(y));
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
                x1 + 15.0,
                x1 + 35.0,
                x1 + 40.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
