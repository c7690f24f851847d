use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use cbda_core::metrics::{max_min_ratio, selected_fraction_variance};
use cbda_core::persist::{read_labels_text, write_ground_truth, write_labels_text};
use cbda_core::scenario::{generate_ground_truth, run_loop_on};
use cbda_core::{
    CountMode, Execution, ImbalanceReport64, LoopOptions, LoopReport, SelectionHistogram,
};
use serde::{Deserialize, Serialize};

use crate::config::{read_config, Overrides};
use crate::lock::DirLock;
use crate::manifest::{RunManifest, ScheduleInfo};
use crate::UsageError;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.bin";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const LABELS_FILE: &str = "active_labels.tsv";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const CLASS_COUNTS_FILE: &str = "class_counts.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARE_HEADER: &str = "strategy,budget,imbalance_score,min_class_count,max_min_ratio";

const SUMMARY_SCHEMA: u32 = 1;
const CSV_SCHEMA: &str = "csv v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub summary_schema: u32,
    pub manifest: String,
    pub strategy: String,
    pub heuristic: String,
    pub budget_fraction: f64,
    pub iterations: u32,
    pub total_selected: u64,
    pub total_shortfall: u64,
    pub per_class_counts: Vec<u64>,
    /// Absent when nothing was selected.
    pub imbalance_score: Option<f64>,
    pub kl_to_uniform: Option<f64>,
    pub min_class_count: u64,
    pub max_min_ratio: Option<f64>,
    pub fraction_variance: f64,
    pub histogram: Vec<u64>,
    pub report: LoopReport,
}

fn short(hash: &str) -> &str {
    &hash[..12]
}

fn csv_file(dir: &Path, name: &str, manifest: &str) -> anyhow::Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    writeln!(w, "# manifest: {manifest}")?;
    Ok(w)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn generate(config: &Path, out: Option<PathBuf>, root: &Path) -> anyhow::Result<PathBuf> {
    let cfg = read_config(config, &Overrides::default())?;
    let dir = out.unwrap_or_else(|| root.join(format!("scenario-{}", short(&cfg.scenario_hash()))));
    let _lock = DirLock::acquire(&dir)?;
    let gt = generate_ground_truth(&cfg.scenario)?;

    let mut manifest = RunManifest::new("generate", &cfg);
    manifest.artifact("ground_truth", GROUND_TRUTH_FILE, "cbgt v1");
    manifest.artifact("scenario", SCENARIO_FILE, "json v1");
    let hash = manifest.write(&dir)?;

    let mut w = BufWriter::new(File::create(dir.join(GROUND_TRUTH_FILE))?);
    write_ground_truth(&mut w, &gt)?;
    let scenario = serde_json::json!({ "manifest": hash, "scenario": cfg.scenario });
    std::fs::write(
        dir.join(SCENARIO_FILE),
        serde_json::to_string_pretty(&scenario)? + "\n",
    )?;
    Ok(dir)
}

pub fn run(
    config: &Path,
    overrides: &Overrides,
    out: Option<PathBuf>,
    root: &Path,
) -> anyhow::Result<PathBuf> {
    let cfg = read_config(config, overrides)?;
    let dir =
        out.unwrap_or_else(|| root.join(format!("{}-{}", cfg.strategy, short(&cfg.config_hash()))));
    let _lock = DirLock::acquire(&dir)?;

    let sched = cfg.schedule()?;
    let gt = generate_ground_truth(&cfg.scenario)?;
    let options = LoopOptions {
        region_radius: cfg.region_radius,
        count_mode: cfg.count_mode,
        pinned_weights: None,
        execution: Execution::Parallel,
        histogram_bins: cfg.histogram_bins,
    };
    let outcome = run_loop_on(
        &gt,
        &cfg.scenario,
        &sched,
        cfg.strategy,
        cfg.heuristic,
        &options,
    )?;

    let mut manifest = RunManifest::new("run", &cfg);
    manifest.strategy = Some(cfg.strategy.to_string());
    manifest.heuristic = Some(cfg.heuristic.to_string());
    manifest.schedule = Some(ScheduleInfo {
        budget_fraction: cfg.budget_fraction,
        iterations: cfg.iterations,
        goal_distribution: cfg.goal_distribution.clone(),
        epsilon: cfg.epsilon,
        noise_schedule: cfg.scenario.noise_schedule.clone(),
    });
    manifest.artifact("active_labels", LABELS_FILE, "cbda-active-labels v1");
    manifest.artifact("iterations", ITERATIONS_FILE, CSV_SCHEMA);
    manifest.artifact("class_counts", CLASS_COUNTS_FILE, CSV_SCHEMA);
    manifest.artifact("histogram", HISTOGRAM_FILE, CSV_SCHEMA);
    manifest.artifact(
        "summary",
        SUMMARY_FILE,
        format!("json v{SUMMARY_SCHEMA}").as_str(),
    );
    let hash = manifest.write(&dir)?;

    let store = &outcome.store;
    let mut w = BufWriter::new(File::create(dir.join(LABELS_FILE))?);
    write_labels_text(&mut w, store, &hash)?;

    let report = &outcome.report;
    let c = cfg.scenario.shape.num_classes();
    let mut w = csv_file(&dir, ITERATIONS_FILE, &hash)?;
    let mut header =
        "iteration,noise_level,pseudo_accuracy,budget,picked,shortfall,cumulative,imbalance_score,fraction_variance"
            .to_string();
    for k in 0..c {
        write!(header, ",weight_{k}")?;
    }
    writeln!(w, "{header}")?;
    let mut cumulative = 0;
    for r in &report.iterations {
        cumulative += r.picked;
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.noise_level,
            r.pseudo_accuracy,
            r.budget,
            r.picked,
            r.shortfall,
            cumulative,
            opt(r.imbalance_score),
            r.fraction_variance
        );
        for k in 0..c {
            line.push(',');
            line.push_str(&opt(r.weights.as_ref().map(|ws| ws[k])));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;

    let mut w = csv_file(&dir, CLASS_COUNTS_FILE, &hash)?;
    writeln!(w, "iteration,class,count")?;
    for r in &report.iterations {
        for (k, n) in r.class_counts.iter().enumerate() {
            writeln!(w, "{},{k},{n}", r.iteration)?;
        }
    }
    w.flush()?;

    let mut w = csv_file(&dir, HISTOGRAM_FILE, &hash)?;
    writeln!(w, "iteration,bin,lower,upper,images")?;
    for r in &report.iterations {
        let hist = SelectionHistogram {
            counts: r.histogram.clone(),
        };
        for (b, n) in hist.counts.iter().enumerate() {
            let (lo, hi) = hist.bin_edges(b);
            writeln!(w, "{},{b},{lo},{hi},{n}", r.iteration)?;
        }
    }
    w.flush()?;

    let counts = store.class_counts(CountMode::GroundTruth);
    let imbalance = ImbalanceReport64::from_counts(&counts).ok();
    let last = report.final_record();
    let summary = Summary {
        summary_schema: SUMMARY_SCHEMA,
        manifest: hash,
        strategy: cfg.strategy.to_string(),
        heuristic: cfg.heuristic.to_string(),
        budget_fraction: cfg.budget_fraction,
        iterations: cfg.iterations,
        total_selected: store.len(),
        total_shortfall: report.iterations.iter().map(|r| r.shortfall).sum(),
        imbalance_score: imbalance.as_ref().map(|r| r.imbalance_score),
        kl_to_uniform: imbalance.as_ref().map(|r| r.kl_to_uniform),
        min_class_count: counts.iter().copied().min().unwrap_or(0),
        max_min_ratio: max_min_ratio(&counts),
        per_class_counts: counts,
        fraction_variance: selected_fraction_variance(store),
        histogram: last.map(|r| r.histogram.clone()).unwrap_or_default(),
        report: report.clone(),
    };
    std::fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(dir)
}

fn read_summary(dir: &Path) -> anyhow::Result<(RunManifest, Summary)> {
    let (manifest, hash) = RunManifest::read(dir)?;
    let path = dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("{} is not a completed run: {e}", dir.display())))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    if summary.manifest != hash {
        return Err(UsageError(format!(
            "{} was not produced by the manifest next to it",
            path.display()
        ))
        .into());
    }
    Ok((manifest, summary))
}

pub fn compare(dirs: &[PathBuf]) -> anyhow::Result<String> {
    if dirs.len() < 2 {
        return Err(UsageError(format!(
            "compare needs at least 2 run directories, got {}",
            dirs.len()
        ))
        .into());
    }
    let runs = dirs
        .iter()
        .map(|d| read_summary(d))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let reference = &runs[0].0.scenario_hash;
    for (dir, (m, _)) in dirs.iter().zip(&runs) {
        if &m.scenario_hash != reference {
            return Err(UsageError(format!(
                "scenario hash of {} ({}) differs from {} ({}); runs on different ground truths cannot be compared",
                dir.display(),
                short(&m.scenario_hash),
                dirs[0].display(),
                short(reference)
            ))
            .into());
        }
    }
    let mut table = format!("{COMPARE_HEADER}\n");
    for (_, s) in &runs {
        let ratio = s.max_min_ratio.map_or("inf".to_string(), |r| r.to_string());
        writeln!(
            table,
            "{},{},{},{},{ratio}",
            s.strategy,
            s.budget_fraction,
            opt(s.imbalance_score),
            s.min_class_count
        )?;
    }
    Ok(table)
}

#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub labels: u64,
    pub count_mode: CountMode,
    pub per_class_counts: Vec<u64>,
    pub imbalance_score: f64,
    pub kl_to_uniform: f64,
    pub max_min_ratio: Option<f64>,
    pub histogram: Vec<u64>,
    pub fraction_variance: f64,
}

pub fn metrics(path: &Path, mode: CountMode, bins: usize) -> anyhow::Result<MetricsReport> {
    let file = if path.is_dir() {
        path.join(LABELS_FILE)
    } else {
        path.to_path_buf()
    };
    let reader = File::open(&file)
        .map_err(|e| UsageError(format!("cannot open {}: {e}", file.display())))?;
    let (store, _) = read_labels_text(BufReader::new(reader))
        .with_context(|| format!("reading {}", file.display()))?;
    if store.is_empty() {
        return Err(UsageError(format!(
            "{} holds no labels; imbalance is undefined",
            file.display()
        ))
        .into());
    }
    let report = ImbalanceReport64::from_store(&store, mode)?;
    Ok(MetricsReport {
        labels: store.len(),
        count_mode: mode,
        max_min_ratio: max_min_ratio(&report.per_class_counts),
        per_class_counts: report.per_class_counts,
        imbalance_score: report.imbalance_score,
        kl_to_uniform: report.kl_to_uniform,
        histogram: cbda_core::selection_histogram(&store, bins)?.counts,
        fraction_variance: selected_fraction_variance(&store),
    })
}
