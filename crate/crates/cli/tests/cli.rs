use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SKEWED: &str = r#"
[scenario]
num_images = 20
height = 32
width = 32
class_frequencies = [0.6, 0.2, 0.1, 0.07, 0.03]
spatial_granularity = 4
noise_schedule = [0.8, 0.7, 0.6, 0.5, 0.4]
seed = 7

[schedule]
budget_fraction = 0.05

[run]
strategy = "cbda"
heuristic = "entropy"
"#;

fn cbda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbda"))
        .current_dir(dir)
        .env_remove("CBDA_OUTPUT_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(config: &str) -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("config.toml");
    fs::write(&path, config).unwrap();
    (tmp, path)
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let o = cbda(dir, args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn generate_writes_identical_ground_truth_twice() {
    let (tmp, _) = setup(SKEWED);
    run_ok(tmp.path(), &["generate", "config.toml", "--out", "a"]);
    run_ok(tmp.path(), &["generate", "config.toml", "--out", "b"]);
    for f in ["ground_truth.bin", "scenario.json", "manifest.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
    let gt = fs::read(tmp.path().join("a/ground_truth.bin")).unwrap();
    assert_eq!(&gt[..4], b"CBGT");
    assert_eq!(gt.len(), 24 + 20 * 32 * 32 * 2);
    assert!(!tmp.path().join("a/.cbda.lock").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let (tmp, _) = setup(SKEWED);
    let o = Command::new(env!("CARGO_BIN_EXE_cbda"))
        .current_dir(tmp.path())
        .env("CBDA_OUTPUT_ROOT", "runs")
        .args(["generate", "config.toml"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = PathBuf::from(stdout(&o).trim());
    assert!(dir.starts_with("runs"));
    assert!(tmp.path().join(&dir).join("ground_truth.bin").exists());
}

#[test]
fn bad_config_fields_exit_2_and_are_named() {
    let cases = [
        (
            SKEWED.replace("0.03]", "0.04]"),
            "scenario.class_frequencies",
        ),
        (
            SKEWED.replace("spatial_granularity = 4", "spatial_granularity = 40"),
            "scenario.spatial_granularity",
        ),
        (
            SKEWED.replace("[0.8, 0.7, 0.6, 0.5, 0.4]", "[0.4, 0.8]"),
            "scenario.noise_schedule",
        ),
        (
            SKEWED.replace("budget_fraction = 0.05", "budget_fraction = 1.5"),
            "schedule.budget_fraction",
        ),
        (SKEWED.replace("\"cbda\"", "\"cbdx\""), "run.strategy"),
        (SKEWED.replace("seed = 7", "seed = 7\ncolour = 1"), "colour"),
    ];
    for (config, field) in cases {
        let (tmp, _) = setup(&config);
        let o = cbda(tmp.path(), &["generate", "config.toml"]);
        assert_eq!(o.status.code(), Some(2), "{field}: {}", stderr(&o));
        assert!(
            stderr(&o).contains(field),
            "{field} missing from: {}",
            stderr(&o)
        );
    }
    let (tmp, _) = setup(SKEWED);
    let o = cbda(tmp.path(), &["run", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_names_list_the_valid_ones() {
    let (tmp, _) = setup(SKEWED);
    let o = cbda(tmp.path(), &["run", "config.toml", "--strategy", "greedy"]);
    assert_eq!(o.status.code(), Some(2));
    for name in ["image", "ra", "da", "cbra", "cbda"] {
        assert!(stderr(&o).contains(name));
    }
    let o = cbda(tmp.path(), &["run", "config.toml", "--heuristic", "bald"]);
    assert_eq!(o.status.code(), Some(2));
    for name in ["entropy", "margin", "region-impurity", "random"] {
        assert!(stderr(&o).contains(name));
    }
}

#[test]
fn run_outputs_reference_their_manifest() {
    let (tmp, _) = setup(SKEWED);
    run_ok(
        tmp.path(),
        &[
            "run",
            "config.toml",
            "--strategy",
            "cbda",
            "--budget",
            "0.05",
            "--out",
            "r",
        ],
    );
    let dir = tmp.path().join("r");
    let hash = hex::encode(Sha256::digest(fs::read(dir.join("manifest.json")).unwrap()));

    let s = summary(&dir);
    assert_eq!(s["manifest"], hash.as_str());
    assert!(s["imbalance_score"].as_f64().unwrap() >= 0.0);
    let counts: Vec<u64> = serde_json::from_value(s["per_class_counts"].clone()).unwrap();
    assert_eq!(counts.len(), 5);
    assert_eq!(counts.iter().sum::<u64>(), 20 * 32 * 32 / 20);

    let labels = fs::read_to_string(dir.join("active_labels.tsv")).unwrap();
    assert!(labels
        .lines()
        .nth(1)
        .unwrap()
        .ends_with(&format!("manifest={hash}")));
    for f in ["iterations.csv", "class_counts.csv", "histogram.csv"] {
        let text = fs::read_to_string(dir.join(f)).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            format!("# manifest: {hash}"),
            "{f}"
        );
    }

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["strategy"], "cbda");
    assert_eq!(manifest["heuristic"], "entropy");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(
        manifest["schemas"]["active_labels"],
        "cbda-active-labels v1"
    );
    for file in manifest["artifacts"].as_object().unwrap().values() {
        assert!(dir.join(file.as_str().unwrap()).exists());
    }
}

#[test]
fn runs_are_reproducible_byte_for_byte() {
    let (tmp, _) = setup(SKEWED);
    run_ok(
        tmp.path(),
        &["run", "config.toml", "--strategy", "cbra", "--out", "a"],
    );
    run_ok(
        tmp.path(),
        &["run", "config.toml", "--strategy", "cbra", "--out", "b"],
    );
    for entry in fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(tmp.path().join("a").join(&name)).unwrap();
        assert_eq!(
            a,
            fs::read(tmp.path().join("b").join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn label_file_round_trips_through_the_reader() {
    let (tmp, _) = setup(SKEWED);
    run_ok(
        tmp.path(),
        &["run", "config.toml", "--strategy", "da", "--out", "r"],
    );
    let bytes = fs::read(tmp.path().join("r/active_labels.tsv")).unwrap();
    let (store, header) = cbda_core::persist::read_labels_text(bytes.as_slice()).unwrap();
    assert_eq!(store.len(), 1024);
    let mut again = Vec::new();
    cbda_core::persist::write_labels_text(&mut again, &store, &header.manifest).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn ra_and_da_spend_the_same_total() {
    // 10 images of 20x20 at 10% over 5 rounds: 80 pixels, 8 per image, each round
    let config = SKEWED
        .replace("num_images = 20", "num_images = 10")
        .replace("height = 32", "height = 20")
        .replace("width = 32", "width = 20")
        .replace("budget_fraction = 0.05", "budget_fraction = 0.1");
    let (tmp, _) = setup(&config);
    for s in ["ra", "da"] {
        run_ok(
            tmp.path(),
            &[
                "run",
                "config.toml",
                "--strategy",
                s,
                "--heuristic",
                "random",
                "--out",
                s,
            ],
        );
    }
    let (ra, da) = (
        summary(&tmp.path().join("ra")),
        summary(&tmp.path().join("da")),
    );
    assert_eq!(ra["total_selected"], 400);
    assert_eq!(ra["total_selected"], da["total_selected"]);
}

#[test]
fn zero_budget_gives_an_empty_label_file_that_metrics_refuses() {
    let (tmp, _) = setup(SKEWED);
    run_ok(
        tmp.path(),
        &["run", "config.toml", "--budget", "0", "--out", "z"],
    );
    let labels = fs::read_to_string(tmp.path().join("z/active_labels.tsv")).unwrap();
    assert_eq!(labels.lines().count(), 3);
    assert!(summary(&tmp.path().join("z"))["imbalance_score"].is_null());
    let o = cbda(tmp.path(), &["metrics", "z"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no labels"));
}

#[test]
fn metrics_reads_a_run_or_a_label_file() {
    let (tmp, _) = setup(SKEWED);
    run_ok(tmp.path(), &["run", "config.toml", "--out", "r"]);
    let from_dir: serde_json::Value =
        serde_json::from_str(&run_ok(tmp.path(), &["metrics", "r"])).unwrap();
    let from_file: serde_json::Value =
        serde_json::from_str(&run_ok(tmp.path(), &["metrics", "r/active_labels.tsv"])).unwrap();
    assert_eq!(from_dir, from_file);
    assert_eq!(
        from_dir["imbalance_score"],
        summary(&tmp.path().join("r"))["imbalance_score"]
    );
    let pseudo: serde_json::Value = serde_json::from_str(&run_ok(
        tmp.path(),
        &["metrics", "r", "--count-mode", "pseudo", "--bins", "4"],
    ))
    .unwrap();
    assert_eq!(pseudo["histogram"].as_array().unwrap().len(), 4);
}

#[test]
fn iterations_flag_resamples_the_noise_schedule() {
    let (tmp, _) = setup(SKEWED);
    run_ok(
        tmp.path(),
        &["run", "config.toml", "--iterations", "3", "--out", "r"],
    );
    let csv = fs::read_to_string(tmp.path().join("r/iterations.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    let noise: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(noise, ["0.8", "0.6", "0.4"]);
}

#[test]
fn compare_tabulates_runs_of_one_scenario() {
    let (tmp, _) = setup(SKEWED);
    for s in ["ra", "da", "cbda"] {
        run_ok(
            tmp.path(),
            &["run", "config.toml", "--strategy", s, "--out", s],
        );
    }
    let table = run_ok(
        tmp.path(),
        &["compare", "ra", "da", "cbda", "--out", "table.csv"],
    );
    assert_eq!(
        fs::read_to_string(tmp.path().join("table.csv")).unwrap(),
        table
    );
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "strategy,budget,imbalance_score,min_class_count,max_min_ratio"
    );
    assert_eq!(lines.len(), 4);
    let score = |row: &str| row.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert!(lines[3].starts_with("cbda,0.05,"));
    assert!(score(lines[3]) < score(lines[1]), "{table}");

    let o = cbda(tmp.path(), &["compare", "ra"]);
    assert_eq!(o.status.code(), Some(2));

    run_ok(
        tmp.path(),
        &["run", "config.toml", "--seed", "8", "--out", "other"],
    );
    let o = cbda(tmp.path(), &["compare", "ra", "other"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario hash"));
}

#[test]
fn a_locked_output_directory_is_refused() {
    let (tmp, _) = setup(SKEWED);
    fs::create_dir(tmp.path().join("r")).unwrap();
    fs::write(tmp.path().join("r/.cbda.lock"), "1\n").unwrap();
    let o = cbda(tmp.path(), &["run", "config.toml", "--out", "r"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("locked"));
    assert!(!tmp.path().join("r/summary.json").exists());
}
