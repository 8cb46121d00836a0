use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Deserialize;

use mwrn::experiment::{
    db_to_linear, load_experiment_config, run_sweep, ExperimentSpec, McSpec, ProfileKind, ProfileSpec, ResultTable,
};
use mwrn::network::{NetworkConfig, NetworkParams};
use mwrn::quantizer::{design_lloyd_max, write_quantizer_csv, MAX_BITS};
use mwrn::randmat::{haar_moment_estimate, wishart_moment_estimate, HaarMoment, WishartMoment};
use mwrn::rates::{rate_monte_carlo, rate_report, McOptions, McRun, RateMode};
use mwrn::rng::{complex_normal, substream, ORACLE};

#[derive(Parser)]
#[command(name = "mwrn", version, about = "Mixed-ADC massive-MIMO multi-way relay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design Lloyd-Max quantizers and write their tables as CSV.
    DesignQuantizer(DesignArgs),
    /// Closed-form (and optionally simulated) rate for one user pair, as JSON.
    Rate(RateArgs),
    /// Run a JSON experiment config; writes <out>.csv and <out>.svg.
    Sweep(SweepArgs),
    /// Quick self-check of the quantizer, random-matrix and rate oracles.
    ValidateOracles(OracleArgs),
}

#[derive(Args)]
struct McFlags {
    /// Run the Monte-Carlo simulator.
    #[arg(long, overrides_with = "no_mc")]
    mc: bool,
    /// Skip the Monte-Carlo simulator.
    #[arg(long, overrides_with = "mc")]
    no_mc: bool,
}

impl McFlags {
    fn resolve(&self, default: bool) -> bool {
        if self.mc {
            true
        } else if self.no_mc {
            false
        } else {
            default
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    /// Resolutions, e.g. `1,2,3` or `1-8`.
    #[arg(long, default_value = "1-8")]
    bits: String,
    /// Complex input variance v.
    #[arg(long, default_value_t = 2.0)]
    variance: f64,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    /// JSON request; replaces the network flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'N', long = "antennas", default_value_t = 100)]
    n: usize,
    #[arg(short = 'K', long = "users", default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    p_u_db: f64,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    p_r_db: f64,
    /// Comma-separated large-scale fading, one per user.
    #[arg(long)]
    betas: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    sigma_e_sq: f64,
    /// `uniform:B`, `infinite`, `table1`, `counts:B=COUNT,...` or `random:BMIN-BMAX:SEED`.
    #[arg(long, default_value = "table1")]
    profile: String,
    /// perfect, icsi, asym_largeN, asym_loading or uniform.
    #[arg(long)]
    mode: Option<String>,
    /// Receiving user (1-based).
    #[arg(long, default_value_t = 1)]
    user: usize,
    /// BC slot.
    #[arg(long, default_value_t = 1)]
    slot: usize,
    #[arg(long, default_value_t = 1000)]
    n_channels: usize,
    #[arg(long, default_value_t = 100)]
    n_symbols: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    mc: McFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    mc: McFlags,
    /// Output path prefix; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Column plotted on the SVG y axis.
    #[arg(long, default_value = "rate_closed")]
    plot_y: String,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Trials for the sampled checks.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Report file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateRequest {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    p_u_db: f64,
    p_r_db: f64,
    #[serde(default)]
    betas: Option<Vec<f64>>,
    #[serde(default)]
    sigma_e_sq: f64,
    profile: ProfileSpec,
    #[serde(default)]
    mode: Option<RateMode>,
    #[serde(default = "one")]
    user: usize,
    #[serde(default = "one")]
    slot: usize,
    #[serde(default)]
    mc: Option<McSpec>,
    #[serde(default)]
    seed: u64,
}

fn one() -> usize {
    1
}

fn parse_bits_list(text: &str) -> anyhow::Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => out.extend(a.trim().parse::<u32>()?..=b.trim().parse::<u32>()?),
            None => out.push(part.parse()?),
        }
    }
    if out.is_empty() || out.iter().any(|&b| b == 0 || b > MAX_BITS) {
        bail!(mwrn::Error::Validation(format!("bits must be a non-empty list within 1..={MAX_BITS}, got `{text}`")));
    }
    Ok(out)
}

fn parse_profile(text: &str) -> anyhow::Result<ProfileSpec> {
    let invalid = || mwrn::Error::Validation(format!("unrecognized profile `{text}`"));
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let kind = match kind {
        "infinite" | "inf" => ProfileKind::Infinite,
        "table1" => ProfileKind::Table1,
        "uniform" => ProfileKind::Uniform { bits: rest.parse().map_err(|_| invalid())? },
        "counts" => {
            let counts = rest
                .split(',')
                .map(|pair| {
                    let (b, c) = pair.split_once('=').ok_or_else(invalid)?;
                    Ok((b.trim().parse().map_err(|_| invalid())?, c.trim().parse().map_err(|_| invalid())?))
                })
                .collect::<Result<_, mwrn::Error>>()?;
            ProfileKind::Counts { counts, scale: false }
        }
        "random" => {
            let (range, seed) = rest.split_once(':').unwrap_or((rest, "0"));
            let (lo, hi) = range.split_once('-').ok_or_else(invalid)?;
            ProfileKind::RandomUniform {
                b_min: lo.parse().map_err(|_| invalid())?,
                b_max: hi.parse().map_err(|_| invalid())?,
                seed: seed.parse().map_err(|_| invalid())?,
            }
        }
        _ => return Err(invalid().into()),
    };
    Ok(ProfileSpec::new(kind))
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|source| mwrn::Error::Io { path: path.to_owned(), source })?;
            info!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing to stdout")?;
        }
    }
    Ok(())
}

fn design_quantizer(args: DesignArgs) -> anyhow::Result<()> {
    let bits = parse_bits_list(&args.bits)?;
    let quantizers = bits.iter().map(|&b| design_lloyd_max(b, args.variance)).collect::<Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    write_quantizer_csv(&quantizers, &mut buf).context("formatting quantizer CSV")?;
    write_output(args.out.as_deref(), &String::from_utf8(buf)?)
}

fn rate(args: RateArgs) -> anyhow::Result<()> {
    let request = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| mwrn::Error::Io { path: path.clone(), source })?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| mwrn::Error::Config { path: e.path().to_string(), message: e.into_inner().to_string() })?
        }
        None => RateRequest {
            n: args.n,
            k: args.k,
            p_u_db: args.p_u_db,
            p_r_db: args.p_r_db,
            betas: args
                .betas
                .as_deref()
                .map(|b| b.split(',').map(|x| f64::from_str(x.trim())).collect::<Result<Vec<_>, _>>())
                .transpose()
                .map_err(|e| mwrn::Error::Validation(format!("betas: {e}")))?,
            sigma_e_sq: args.sigma_e_sq,
            profile: parse_profile(&args.profile)?,
            mode: args.mode.as_deref().map(RateMode::from_str).transpose()?,
            user: args.user,
            slot: args.slot,
            mc: Some(McSpec { n_channels: args.n_channels, n_symbols: args.n_symbols, ..McSpec::default() }),
            seed: 0,
        },
    };
    let config = NetworkConfig {
        n: request.n,
        k: request.k,
        p_u: db_to_linear(request.p_u_db),
        p_r: db_to_linear(request.p_r_db),
        betas: request.betas.clone().unwrap_or_else(|| vec![1.0; request.k]),
        sigma_e_sq: request.sigma_e_sq,
    };
    config.validate()?;
    let resolutions = request.profile.resolutions(config.n)?;
    let params = NetworkParams::new(config, resolutions)?;
    let mode = request.mode.unwrap_or(if request.sigma_e_sq > 0.0 { RateMode::Icsi } else { RateMode::Perfect });
    let spec = request.mc.unwrap_or_default();
    let run = McRun {
        n_channels: spec.n_channels,
        n_symbols: spec.n_symbols,
        seed: args.seed.unwrap_or(request.seed),
        options: McOptions { mode: spec.mode, alpha: spec.alpha, ..McOptions::default() },
    };
    let with_mc = args.mc.resolve(spec.enabled);
    let report = rate_report(&params, mode, request.user, request.slot, with_mc.then_some(&run))?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut spec: ExperimentSpec = load_experiment_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.mc.enabled = args.mc.resolve(spec.mc.enabled);
    let prefix = args
        .out
        .clone()
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| args.config.with_extension(""));
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| mwrn::Error::Io { path: dir.to_owned(), source })?;
    }
    let table = run_sweep(&spec)?;
    let flagged = table.rows.iter().filter(|r| !r.is_ok()).count();
    if flagged > 0 {
        warn!("{flagged} of {} rows flagged", table.len());
    }
    let csv = prefix.with_extension("csv");
    table.emit_csv(&csv)?;
    info!("wrote {} ({} rows)", csv.display(), table.len());

    let x = spec.sweep_variable.name();
    let mut modes: Vec<RateMode> = table.rows.iter().map(|r| r.mode).collect();
    modes.dedup();
    modes.sort_by_key(|m| m.to_string());
    modes.dedup();
    for mode in &modes {
        let part = ResultTable { rows: table.rows.iter().filter(|r| r.mode == *mode).cloned().collect() };
        let svg = if modes.len() == 1 {
            prefix.with_extension("svg")
        } else {
            let stem = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            prefix.with_file_name(format!("{stem}_{mode}.svg"))
        };
        part.emit_svg(&svg, x, &args.plot_y, "profile_name")?;
        info!("wrote {}", svg.display());
    }
    Ok(())
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

/// Midpoint-rule MSE of a quantizer on one standardized real component.
fn integrated_mse(q: &mwrn::quantizer::ScalarQuantizer) -> f64 {
    let sigma = (q.design_variance() / 2.0).sqrt();
    let points = 400_000;
    let h = 24.0 / points as f64;
    (0..points)
        .map(|i| {
            let z = -12.0 + (i as f64 + 0.5) * h;
            let e = z - q.quantize(z * sigma) / sigma;
            e * e * (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * h
        / (2.0 * PI).sqrt()
}

fn oracle_checks(seed: u64, trials: usize) -> anyhow::Result<Vec<Check>> {
    let mut checks = Vec::new();

    let q1 = design_lloyd_max(1, 2.0)?;
    let g = q1.bussgang_gain(2.0)?;
    checks.push(Check {
        name: "1-bit Bussgang gain is 2/pi",
        passed: (g - 2.0 / PI).abs() < 1e-6,
        detail: format!("{g:.9}"),
    });

    let q3 = design_lloyd_max(3, 2.0)?;
    let (mse, grid) = (q3.normalized_mse(), integrated_mse(&q3));
    checks.push(Check {
        name: "3-bit MSE matches numerical integration",
        passed: (mse - grid).abs() < 1e-3,
        detail: format!("{mse:.6} vs {grid:.6}"),
    });

    let mut rng = substream(seed, ORACLE);
    let v = 2.0;
    let (mut cross, mut dd, mut xx) = (num_complex::Complex64::new(0.0, 0.0), 0.0, 0.0);
    for _ in 0..trials {
        let x = complex_normal(&mut rng, v);
        let d = q3.quantize_complex(x)? - x * q3.bussgang_gain(v)?;
        cross += d * x.conj();
        dd += d.norm_sqr();
        xx += x.norm_sqr();
    }
    let corr = cross.norm() / (dd * xx).sqrt();
    checks.push(Check {
        name: "Bussgang residual is uncorrelated with input",
        passed: corr < 5.0 / (trials as f64).sqrt(),
        detail: format!("correlation {corr:.2e}"),
    });

    for m in HaarMoment::ALL {
        let e = haar_moment_estimate(4, m, trials.max(10_000), seed)?;
        let exact = m.exact(4);
        checks.push(Check {
            name: "Haar moment at N=4",
            passed: e.within_sigma(exact, 5.0),
            detail: format!("{m}: {:.5} +/- {:.1e} vs {exact:.5}", e.mean, e.std_error),
        });
    }

    let diag = wishart_moment_estimate(10, &[1.0, 1.0], WishartMoment::InvDiag, trials, seed)?;
    checks.push(Check {
        name: "inverse Wishart diagonal at N=10, K=2",
        passed: diag.iter().all(|e| e.within_sigma(0.125, 5.0)),
        detail: format!("{:.5} +/- {:.1e} vs 0.125", diag[0].mean, diag[0].std_error),
    });

    let params = NetworkParams::new(
        NetworkConfig::homogeneous(100, 5, db_to_linear(10.0), db_to_linear(15.0)),
        ProfileSpec::new(ProfileKind::Table1).resolutions(100)?,
    )?;
    let closed = mwrn::rates::rate_closed_perfect(&params, 1, 1)?;
    let mc = rate_monte_carlo(&params, 1, 1, 1000, 100, seed, &McOptions::default())?.rate;
    checks.push(Check {
        name: "closed-form rate matches simulation (mixed-ADC-#1, p_u=10 dB)",
        passed: (closed - mc.mean).abs() / mc.mean < 0.05,
        detail: format!("{closed:.4} vs {:.4}", mc.mean),
    });
    Ok(checks)
}

fn validate_oracles(args: OracleArgs) -> anyhow::Result<bool> {
    let checks = oracle_checks(args.seed, args.trials)?;
    let mut text = String::new();
    for c in &checks {
        text.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    write_output(args.out.as_deref(), &text)?;
    Ok(checks.iter().all(|c| c.passed))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<mwrn::Error>())
        .map(|e| e.exit_code() as u8)
        .or_else(|| err.chain().find_map(|e| e.downcast_ref::<std::io::Error>()).map(|_| 3))
        .unwrap_or(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::DesignQuantizer(a) => design_quantizer(a).map(|_| true),
        Command::Rate(a) => rate(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::ValidateOracles(a) => validate_oracles(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !message.contains(&text) {
                    message = format!("{message}: {text}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(exit_code(&e))
        }
    }
}
