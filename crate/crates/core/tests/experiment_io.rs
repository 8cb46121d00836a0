use mwrn::experiment::*;
use mwrn::quantizer::Resolution;
use mwrn::rates::RateMode;
use mwrn::stats::Estimate;
use mwrn::Error;

const FIG1: &str = include_str!("../../../configs/fig1.json");
const FIG2: &str = include_str!("../../../configs/fig2.json");
const FIG5: &str = include_str!("../../../configs/fig5.json");

fn config_path(text: &str) -> String {
    match parse_experiment_config(text) {
        Err(Error::Config { path, .. }) => path,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn no_mc(text: &str) -> ExperimentSpec {
    let mut spec = parse_experiment_config(text).unwrap();
    spec.mc.enabled = false;
    spec
}

fn bit_counts(res: &[Resolution]) -> [usize; 8] {
    let mut c = [0; 8];
    for r in res {
        if let Resolution::Bits(b) = r {
            c[*b as usize - 1] += 1;
        }
    }
    c
}

#[test]
fn minimal_config_gets_defaults() {
    let text = r#"{
        "sweep_variable": "p_u_db",
        "sweep_values": [-5, 0, 5, 10, 15],
        "fixed": { "N": 100, "K": 5, "p_r_db": 15 },
        "profiles": [ { "kind": "uniform", "bits": 1 }, { "kind": "infinite" } ]
    }"#;
    let spec = parse_experiment_config(text).unwrap();
    assert_eq!(spec.sweep_variable, SweepVariable::PuDb);
    assert_eq!(spec.sweep_values, vec![-5.0, 0.0, 5.0, 10.0, 15.0]);
    assert_eq!((spec.fixed.n, spec.fixed.k, spec.fixed.p_r_db), (Some(100), Some(5), 15.0));
    assert_eq!((spec.mc.n_channels, spec.mc.n_symbols, spec.mc.enabled), (1000, 100, true));
    let points = spec.points().unwrap();
    assert_eq!(points.len(), 5);
    assert!((points[4].config.p_u - 10f64.powf(1.5)).abs() < 1e-12);
    assert!((points[0].config.p_r - 10f64.powf(1.5)).abs() < 1e-12);
}

#[test]
fn table1_counts_are_accepted() {
    let text = r#"{
        "sweep_variable": "p_u_db", "sweep_values": [15],
        "fixed": { "N": 100, "K": 5, "p_r_db": 15 },
        "profiles": [ { "name": "t1", "kind": "counts",
            "counts": [[1,7],[2,12],[3,15],[4,11],[5,14],[6,22],[7,9],[8,10]] } ]
    }"#;
    let spec = parse_experiment_config(text).unwrap();
    let res = spec.profiles[0].resolutions(100).unwrap();
    assert_eq!(res.len(), 100);
    assert_eq!(bit_counts(&res), TABLE1_N100);
}

#[test]
fn schema_errors_carry_field_paths() {
    let short = r#"{
        "sweep_variable": "p_u_db", "sweep_values": [15],
        "fixed": { "N": 100, "K": 5, "p_r_db": 15 },
        "profiles": [ { "kind": "infinite" }, { "kind": "counts", "counts": [[1, 50], [2, 49]] } ]
    }"#;
    assert_eq!(config_path(short), "profiles[1]");

    let wrong_type = r#"{ "sweep_variable": "p_u_db", "sweep_values": [15],
        "fixed": { "N": "many", "K": 5, "p_r_db": 15 }, "profiles": [] }"#;
    assert_eq!(config_path(wrong_type), "fixed.N");

    let typo = r#"{ "sweep_variable": "p_u_db", "sweep_values": [15],
        "fixed": { "N": 100, "K": 5, "p_r_db": 15 }, "profiles": [{ "kind": "infinite" }],
        "mc": { "n_chanels": 10 } }"#;
    assert!(config_path(typo).starts_with("mc"));

    let unsorted = r#"{ "sweep_variable": "p_u_db", "sweep_values": [5, 0],
        "fixed": { "N": 100, "K": 5, "p_r_db": 15 }, "profiles": [{ "kind": "infinite" }] }"#;
    assert_eq!(config_path(unsorted), "sweep_values");

    let fractional_k = r#"{ "sweep_variable": "K", "sweep_values": [2, 2.5],
        "fixed": { "N": 100, "p_u_db": 0, "p_r_db": 15 }, "profiles": [{ "kind": "infinite" }] }"#;
    assert_eq!(config_path(fractional_k), "sweep_values[1]");

    let bad_variable = r#"{ "sweep_variable": "P_R", "sweep_values": [1],
        "fixed": { "N": 100, "K": 5, "p_r_db": 15 }, "profiles": [] }"#;
    assert_eq!(config_path(bad_variable), "sweep_variable");

    let missing_power = r#"{ "sweep_variable": "N", "sweep_values": [100],
        "fixed": { "K": 5, "p_r_db": 15 }, "profiles": [{ "kind": "infinite" }] }"#;
    assert_eq!(config_path(missing_power), "fixed.p_u_db");

    let err = parse_experiment_config(short).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("99"));
}

#[test]
fn bundled_configs_parse() {
    for name in ["fig1", "fig2", "fig3", "fig4_large_n", "fig4_loading", "fig5"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.json"));
        load_experiment_config(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn table1_scaling_rule() {
    let t1 = ProfileSpec::new(ProfileKind::Table1);
    assert_eq!(bit_counts(&t1.resolutions(50).unwrap()), TABLE1_N50);
    assert_eq!(bit_counts(&t1.resolutions(100).unwrap()), TABLE1_N100);
    assert_eq!(bit_counts(&t1.resolutions(150).unwrap()), TABLE1_N50.map(|c| 3 * c));
    for m in [2, 3, 4] {
        assert_eq!(bit_counts(&t1.resolutions(100 * m).unwrap()), TABLE1_N100.map(|c| m * c));
    }
    // Doubling the 50-antenna row fills 100 antennas with the same resolution levels.
    let doubled = ProfileSpec::new(ProfileKind::Counts {
        counts: TABLE1_N50.iter().enumerate().map(|(b, &c)| (b as u8 + 1, c)).collect(),
        scale: true,
    });
    let res = doubled.resolutions(100).unwrap();
    assert_eq!(bit_counts(&res), TABLE1_N50.map(|c| 2 * c));
    assert!(doubled.resolutions(99).is_err());
}

#[test]
fn uniform_profile_has_no_gain_spread() {
    let p = build_profile(&ProfileSpec::new(ProfileKind::Uniform { bits: 3 }), 40, 11.0).unwrap();
    let a = p.aggregates();
    assert!((a.g2 - a.g1 * a.g1).abs() <= 1e-15 * a.g2);
    let t1 = build_profile(&ProfileSpec::new(ProfileKind::Table1), 100, 11.0).unwrap();
    let a = t1.aggregates();
    assert!(a.g2 - a.g1 * a.g1 > 0.0);
    assert_eq!(t1.quantizers().count(), 8);
}

#[test]
fn random_uniform_profile_has_discrete_uniform_mean() {
    let means: Vec<f64> = (0..400)
        .map(|seed| {
            let spec = ProfileSpec::new(ProfileKind::RandomUniform { b_min: 1, b_max: 8, seed });
            let res = spec.resolutions(100).unwrap();
            res.iter().map(|r| match r {
                Resolution::Bits(b) => *b as f64,
                Resolution::Infinite => unreachable!(),
            }).sum::<f64>() / 100.0
        })
        .collect();
    let e = Estimate::from_samples(&means);
    assert!(e.within_sigma(4.5, 5.0), "{e:?}");
    // Each profile mean has variance (8² − 1)/12/100.
    assert!((e.std_error - (5.25f64 / 100.0 / 400.0).sqrt()).abs() < 0.2 * e.std_error);
    let a = ProfileSpec::new(ProfileKind::RandomUniform { b_min: 2, b_max: 5, seed: 9 });
    assert_eq!(a.resolutions(64).unwrap(), a.resolutions(64).unwrap());
}

#[test]
fn fig1_sweep_shape_and_agreement() {
    let spec = parse_experiment_config(FIG1).unwrap();
    let table = run_sweep(&spec).unwrap();
    assert_eq!(table.len(), 25);
    for row in &table.rows {
        assert!(row.is_ok(), "{row:?}");
        assert_eq!((row.k, row.partner, row.t, row.mode), (1, 2, 1, RateMode::Perfect));
        let (closed, mc) = (row.rate_closed.unwrap(), row.rate_mc.unwrap());
        assert!((closed - mc).abs() / mc < 0.05, "{row:?}");
    }
    let csv = table.to_csv_string().unwrap();
    assert_eq!(csv.lines().count(), 26);
    assert!(csv.ends_with('\n'));
}

#[test]
fn fig2_rates_fall_with_users() {
    let table = run_sweep(&no_mc(FIG2)).unwrap();
    assert_eq!(table.len(), 28);
    let mut names: Vec<&str> = table.rows.iter().map(|r| r.profile_name.as_str()).collect();
    names.dedup();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 7);
    for name in names {
        let r: Vec<f64> = table.rows.iter().filter(|r| r.profile_name == name).map(|r| r.rate_closed.unwrap()).collect();
        assert_eq!(r.len(), 4);
        assert!(r.windows(2).all(|w| w[1] < w[0]), "{name}: {r:?}");
    }
}

#[test]
fn fig5_error_power_ordering() {
    let table = run_sweep(&no_mc(FIG5)).unwrap();
    assert_eq!(table.len(), 4 * 3 * 4);
    for base in ["1-bit", "4-bit", "inf-bit", "mixed-ADC-#1"] {
        for n in [100.0, 200.0, 300.0, 400.0] {
            let r: Vec<f64> = ["0", "0.01", "0.1"]
                .iter()
                .map(|s| {
                    let name = format!("{base}, sigma_e_sq={s}");
                    let row = table.rows.iter().find(|r| r.profile_name == name && r.sweep_value == n).unwrap();
                    assert_eq!(row.mode, RateMode::Icsi);
                    row.rate_closed.unwrap()
                })
                .collect();
            assert!(r[0] > r[1] && r[1] > r[2], "{base} N={n}: {r:?}");
        }
    }
}

#[test]
fn failed_points_are_flagged_not_dropped() {
    let text = r#"{ "sweep_variable": "sigma_e_sq", "sweep_values": [0, 0.1],
        "fixed": { "N": 40, "K": 4, "p_u_db": 5, "p_r_db": 10 },
        "profiles": [{ "kind": "uniform", "bits": 2 }, { "kind": "infinite" }],
        "modes": ["perfect", "icsi"], "mc": { "n_channels": 100, "n_symbols": 10 } }"#;
    let table = run_sweep(&parse_experiment_config(text).unwrap()).unwrap();
    assert_eq!(table.len(), 2 * 2 * 2);
    let flagged: Vec<_> = table.rows.iter().filter(|r| !r.is_ok()).collect();
    assert_eq!(flagged.len(), 2);
    for r in flagged {
        assert_eq!((r.sweep_value, r.mode), (0.1, RateMode::Perfect));
        assert!(r.rate_closed.is_none() && r.rate_mc.is_some() && r.g1.is_some());
        assert!(r.status.starts_with("closed:"), "{}", r.status);
    }
}

#[test]
fn all_pairs_flag_covers_every_slot() {
    let mut spec = no_mc(FIG1);
    spec.sweep_values = vec![5.0];
    spec.all_pairs = true;
    let table = run_sweep(&spec).unwrap();
    assert_eq!(table.len(), 5 * 5 * 4);
    let row = table.rows.iter().find(|r| r.k == 5 && r.t == 3).unwrap();
    assert_eq!(row.partner, 3);
}

#[test]
fn sweeps_are_byte_identical() {
    let mut spec = parse_experiment_config(FIG1).unwrap();
    spec.mc.n_channels = 200;
    spec.mc.n_symbols = 20;
    let a = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    let b = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    assert_eq!(a, b);
    spec.seed += 1;
    let c = run_sweep(&spec).unwrap().to_csv_string().unwrap();
    assert_ne!(a, c);
}

#[test]
fn empirical_quantizers_track_analytic_ones() {
    let mut spec = no_mc(FIG1);
    spec.sweep_values = vec![0.0, 15.0];
    let analytic = run_sweep(&spec).unwrap();
    spec.quantizer = QuantizerSpec { design: QuantizerDesign::Empirical, training_samples: 200_000 };
    let empirical = run_sweep(&spec).unwrap();
    for (a, e) in analytic.rows.iter().zip(&empirical.rows) {
        let (a, e) = (a.rate_closed.unwrap(), e.rate_closed.unwrap());
        assert!((a - e).abs() / a < 0.02, "{a} vs {e}");
    }
}

#[test]
fn csv_round_trip() {
    let mut spec = parse_experiment_config(FIG5).unwrap();
    spec.sweep_values = vec![100.0];
    spec.mc.n_channels = 100;
    spec.mc.n_symbols = 10;
    spec.modes = Some(vec![RateMode::Perfect, RateMode::Icsi]);
    let table = run_sweep(&spec).unwrap();
    assert!(table.rows.iter().any(|r| !r.is_ok()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    table.emit_csv(&path).unwrap();
    let back = ResultTable::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, table);

    let empty = ResultTable::default().to_csv_string().unwrap();
    assert_eq!(empty, format!("{}\n", CSV_COLUMNS.join(",")));
    assert_eq!(ResultTable::read_csv(empty.as_bytes()).unwrap(), ResultTable::default());
}

#[test]
fn csv_output_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("t.csv");
    match ResultTable::default().emit_csv(&path) {
        Err(e @ Error::Io { .. }) => {
            assert_eq!(e.exit_code(), 3);
            assert!(e.to_string().contains("missing"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn svg_has_one_polyline_per_series() {
    let table = run_sweep(&no_mc(FIG1)).unwrap();
    let svg = table.render_svg("p_u_db", "rate_closed", "profile_name").unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, 5);
    let labels: Vec<&str> = doc.descendants().filter(|n| n.has_tag_name("text")).filter_map(|n| n.text()).collect();
    assert!(labels.contains(&"p_u_db") && labels.contains(&"rate_closed") && labels.contains(&"mixed-ADC-#1"));
}

#[test]
fn svg_single_row_and_escaping() {
    let mut spec = no_mc(FIG1);
    spec.sweep_values = vec![0.0];
    spec.profiles = vec![ProfileSpec::named("<1-bit & \"friends\">", ProfileKind::Uniform { bits: 1 })];
    let table = run_sweep(&spec).unwrap();
    assert_eq!(table.len(), 1);
    let svg = table.render_svg("sweep_value", "rate_closed", "profile_name").unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 0);
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 1);
    assert!(doc.descendants().any(|n| n.text() == Some("<1-bit & \"friends\">")));

    assert!(table.render_svg("nope", "rate_closed", "profile_name").is_err());
    assert!(table.render_svg("p_u_db", "rate_closed", "nope").is_err());
    let empty = ResultTable::default().render_svg("p_u_db", "rate_mc", "mode").unwrap();
    roxmltree::Document::parse(&empty).unwrap();
}
