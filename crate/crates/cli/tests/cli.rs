//! End-to-end checks of the binary: exit codes, report contents, and the
//! equivalence of the pipeline with direct library composition.

use std::fs;
use std::path::Path;
use std::process::Command;

use levyscale::density::p0_curve;
use levyscale::returns::log_returns;
use levyscale::synth::{price_path_on, sample, Family, GeneratorSpec};
use levyscale_cli::commands;
use levyscale_cli::config::{AnalysisConfig, SynthInput};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levyscale"))
}

fn write_prices(path: &Path, rows: &[(&str, f64)]) {
    let mut csv = String::from("timestamp,price\n");
    for (ts, p) in rows {
        csv.push_str(&format!("{ts},{p}\n"));
    }
    fs::write(path, csv).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Bad config: decreasing ladder.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[analysis]\ndt_ladder = [4, 2]\n").unwrap();
    let out = bin()
        .arg("analyze")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // No input configured at all.
    let out = bin()
        .arg("analyze")
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ingest"));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();

    // Unreadable input file.
    let out = bin()
        .arg("ingest")
        .arg("--input")
        .arg(dir.path().join("missing.csv"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Only out-of-session rows: empty result.
    let prices = dir.path().join("offsession.csv");
    write_prices(
        &prices,
        &[("2020-01-11 10:00", 100.0), ("2020-01-12 10:00", 101.0)],
    );
    let out = bin()
        .arg("ingest")
        .arg("--input")
        .arg(&prices)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_writes_artifact_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    write_prices(
        &prices,
        &[
            ("2020-01-06 09:31", 100.0),
            ("2020-01-06 09:32", 101.0),
            ("2020-01-06 09:34", 102.0), // 09:33 missing -> forward filled
        ],
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("ingest")
        .arg("--input")
        .arg(&prices)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("ingest_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["ticks"], 4);
    assert_eq!(report["load"]["rows_read"], 3);
    assert_eq!(report["stitch"]["filled_minutes"], 1);

    let artifact = fs::read_to_string(out_dir.join("price_series.tsv")).unwrap();
    assert!(artifact.contains("2020-01-06 09:33\t101"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "ingest");
    assert_eq!(manifest["rng"], "chacha12");
}

#[test]
fn analyze_matches_manual_composition() {
    // The p0 table emitted by the analyze command must equal the direct
    // library composition with the same configuration.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AnalysisConfig::default();
    cfg.seed = 77;
    cfg.input.synth = Some(SynthInput {
        family: Family::Stable {
            alpha: 1.5,
            gamma: 1e-6,
            dt: 1.0,
        },
        n: 50_000,
    });
    cfg.analysis.dt_ladder = vec![1, 2, 4, 8];
    cfg.output.dir = dir.path().join("out");
    commands::run_analyze(&cfg).unwrap();

    // Manual composition.
    let spec = GeneratorSpec::new(cfg.input.synth.as_ref().unwrap().family.clone(), 77, 50_000);
    let returns = sample(&spec).unwrap();
    let cal = cfg.calendar.build().unwrap();
    let series = price_path_on(&returns, 100.0, &cal, cfg.calendar.start_date).unwrap();
    let ladder: Vec<_> = cfg
        .analysis
        .dt_ladder
        .iter()
        .map(|&dt| log_returns(&series, dt as usize).unwrap())
        .collect();
    let expected = p0_curve(ladder.iter(), cfg.analysis.p0_rel_width).unwrap();

    let table = fs::read_to_string(cfg.output.dir.join("p0.tsv")).unwrap();
    let rows: Vec<(f64, f64, f64)> = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("dt"))
        .map(|l| {
            let mut it = l.split('\t').map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), expected.len());
    for (got, want) in rows.iter().zip(&expected) {
        assert_eq!(got, want, "pipeline and manual composition diverge");
    }
}

#[test]
fn analyze_recovers_alpha_from_synthetic_inputs() {
    // Stable(1.5) input: the first-regime alpha lands within 0.05; Gaussian
    // input recovers the diffusive alpha = 2.
    let dir = tempfile::tempdir().unwrap();
    let run = |family: Family, out: &str| -> serde_json::Value {
        let mut cfg = AnalysisConfig::default();
        cfg.seed = 99;
        cfg.input.synth = Some(SynthInput { family, n: 300_000 });
        cfg.analysis.dt_ladder = vec![1, 2, 4, 8, 15, 30, 60];
        cfg.analysis.scaling_ranges = vec![(1.0, 60.0)];
        cfg.output.dir = dir.path().join(out);
        commands::run_analyze(&cfg).unwrap();
        serde_json::from_str(
            &fs::read_to_string(cfg.output.dir.join("analysis_report.json")).unwrap(),
        )
        .unwrap()
    };

    let stable = run(
        Family::Stable {
            alpha: 1.5,
            gamma: 1e-6,
            dt: 1.0,
        },
        "stable",
    );
    let alpha = stable["alpha_fits"][0]["alpha"].as_f64().unwrap();
    assert!((alpha - 1.5).abs() < 0.05, "stable alpha {alpha}");

    let gauss = run(
        Family::Gaussian {
            mean: 0.0,
            std: 1e-4,
        },
        "gauss",
    );
    let alpha = gauss["alpha_fits"][0]["alpha"].as_f64().unwrap();
    assert!((alpha - 2.0).abs() < 0.05, "gaussian alpha {alpha}");
}

#[test]
fn single_dt_ladder_skips_fits_with_a_note() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AnalysisConfig::default();
    cfg.seed = 3;
    cfg.input.synth = Some(SynthInput {
        family: Family::Gaussian {
            mean: 0.0,
            std: 1e-4,
        },
        n: 20_000,
    });
    cfg.analysis.dt_ladder = vec![1];
    cfg.output.dir = dir.path().join("out");
    commands::run_analyze(&cfg).unwrap();

    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(cfg.output.dir.join("analysis_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["alpha_fits"].as_array().unwrap().is_empty());
    assert!(report["crossover"].is_null());
    let notes = report["notes"].as_array().unwrap();
    assert!(
        notes
            .iter()
            .any(|n| n.as_str().unwrap().contains("skipped")),
        "no explanatory note in {notes:?}"
    );
    // The P(0) table itself is still emitted.
    assert!(cfg.output.dir.join("p0.tsv").exists());
}

#[test]
fn synth_samples_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = AnalysisConfig::default();
    cfg.seed = 5;
    cfg.input.synth = Some(SynthInput {
        family: Family::Gaussian {
            mean: 0.0,
            std: 1.0,
        },
        n: 1000,
    });
    cfg.output.dir = dir.path().join("out");
    commands::run_synth(&cfg).unwrap();

    let spec = GeneratorSpec::new(
        Family::Gaussian {
            mean: 0.0,
            std: 1.0,
        },
        5,
        1000,
    );
    let expected = sample(&spec).unwrap();
    let text = fs::read_to_string(cfg.output.dir.join("samples.txt")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values, expected);
}
