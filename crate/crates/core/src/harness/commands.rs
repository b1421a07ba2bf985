use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentSpec, HarnessError};
use crate::radarsynth::{build_dataset, read_dataset, write_dataset, Dataset};
use crate::saliency::{saliency_histogram, score, Metric, SaliencyTable};
use crate::schedules::{evaluate, run, ScheduleConfig, ScheduleData, ScheduleError, Strategy};
use crate::surgeon::{compression_report, model_flops, model_params, read_rows, report_from_counts, write_rows, ReportRow};
use crate::tensorcore::{io, train, Example, FeatureMap, NetworkGraph};

/// Histogram resolution of saliency distribution exports.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Synthesizes the dataset into `<output_dir>/data`.
pub fn cmd_generate(spec: &ExperimentSpec) -> Result<GenerateSummary, HarnessError> {
    spec.validate()?;
    let ds = build_dataset(&spec.dataset)?;
    fs::create_dir_all(&spec.output_dir)?;
    write_dataset(&ds, spec.data_dir(), spec.pgm)?;
    Ok(GenerateSummary { train: ds.train.len(), val: ds.val.len(), test: ds.test.len() })
}

pub fn load_dataset(spec: &ExperimentSpec) -> Result<Dataset, HarnessError> {
    let dir = spec.data_dir();
    if !dir.join("train").join("index.csv").exists() {
        return Err(HarnessError::Missing(dir));
    }
    Ok(read_dataset(dir)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub fingerprint: String,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub params: u64,
    pub flops: u64,
    pub losses: Vec<f64>,
}

impl BaselineRecord {
    pub fn row(&self) -> ReportRow {
        report_from_counts(self.flops, self.flops, self.params, self.params, self.test_accuracy, 0.0).row("baseline")
    }
}

/// Trains the baseline on the train split and saves model, record and reference row.
pub fn cmd_train_baseline(spec: &ExperimentSpec) -> Result<BaselineRecord, HarnessError> {
    spec.validate()?;
    let ds = load_dataset(spec)?;
    let mut model = spec.architecture.build(spec.classes())?;
    let losses = train(&mut model, &ds.train.examples, &spec.train)?;
    let record = BaselineRecord {
        fingerprint: io::fingerprint(&model),
        test_accuracy: evaluate(&model, &ds.test.examples)?,
        val_accuracy: evaluate(&model, &ds.val.examples)?,
        params: model_params(&model),
        flops: model_flops(&model)?,
        losses,
    };
    io::save_model(&model, spec.baseline_model_path())?;
    fs::write(spec.baseline_record_path(), serde_json::to_vec_pretty(&record)?)?;
    write_rows(fs::File::create(spec.baseline_row_path())?, &[record.row()])?;
    Ok(record)
}

pub fn load_baseline(spec: &ExperimentSpec) -> Result<(NetworkGraph, BaselineRecord), HarnessError> {
    let (m, r) = (spec.baseline_model_path(), spec.baseline_record_path());
    for p in [&m, &r] {
        if !p.exists() {
            return Err(HarnessError::Missing(p.clone()));
        }
    }
    let model = io::load_model(m)?;
    let record: BaselineRecord = serde_json::from_slice(&fs::read(r)?)?;
    if io::fingerprint(&model) != record.fingerprint {
        return Err(HarnessError::Config("baseline model does not match its record".into()));
    }
    Ok((model, record))
}

fn apoz_batch(spec: &ExperimentSpec, val: &[Example]) -> Vec<FeatureMap> {
    let take = spec.schedule.apoz_samples.unwrap_or(val.len()).min(val.len());
    val[..take].iter().map(|e| e.input.clone()).collect()
}

/// Scores the baseline and writes `saliency/<metric>.csv` and `saliency/<metric>_hist.json`.
pub fn cmd_saliency(spec: &ExperimentSpec, metric: Metric) -> Result<SaliencyTable, HarnessError> {
    let (model, _) = load_baseline(spec)?;
    let batch = if metric == Metric::Apoz { apoz_batch(spec, &load_dataset(spec)?.val.examples) } else { Vec::new() };
    let table = score(metric, &model, &batch, &spec.schedule.saliency)?;
    let dir = spec.saliency_dir();
    fs::create_dir_all(&dir)?;
    table.write_csv(fs::File::create(dir.join(format!("{metric}.csv")))?)?;
    let hist = saliency_histogram(&table, HISTOGRAM_BINS)?;
    fs::write(dir.join(format!("{metric}_hist.json")), serde_json::to_vec_pretty(&hist)?)?;
    Ok(table)
}

/// `metric/strategy`, the approach column of result rows.
pub fn approach(metric: Metric, strategy: Strategy) -> String {
    format!("{metric}/{strategy}")
}

fn cell_stem(metric: Metric, strategy: Strategy, p: f64) -> String {
    format!("{metric}_{strategy}_p{p}")
}

fn run_cell(spec: &ExperimentSpec, baseline: &NetworkGraph, ds: &Dataset, metric: Metric, strategy: Strategy, p: f64) -> Result<ReportRow, HarnessError> {
    let cfg = ScheduleConfig { strategy, metric, target_pct: p, ..spec.schedule.clone() };
    let data = ScheduleData { train: &ds.train.examples, val: &ds.val.examples, test: &ds.test.examples };
    let dir = spec.cell_dir();
    fs::create_dir_all(&dir)?;
    let stem = cell_stem(metric, strategy, p);
    let (pruned, trace) = match run(baseline, data, &cfg) {
        Err(ScheduleError::TargetUnreachable { max_iters, trace }) => {
            trace.save(dir.join(format!("{stem}.trace.json")))?;
            return Err(ScheduleError::TargetUnreachable { max_iters, trace }.into());
        }
        other => other?,
    };
    trace.save(dir.join(format!("{stem}.trace.json")))?;
    io::save_model(&pruned, dir.join(format!("{stem}.fpnet")))?;
    let report = compression_report(baseline, &pruned, trace.final_accuracy(), p)?;
    Ok(report.row(&approach(metric, strategy)))
}

/// Runs one (metric, strategy, p) cell against the saved baseline.
pub fn cmd_prune(spec: &ExperimentSpec, metric: Metric, strategy: Strategy, p: f64) -> Result<ReportRow, HarnessError> {
    let (baseline, _) = load_baseline(spec)?;
    let ds = load_dataset(spec)?;
    run_cell(spec, &baseline, &ds, metric, strategy, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub metric: Metric,
    pub strategy: Strategy,
    pub p: f64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub row: Option<ReportRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub cells: Vec<Cell>,
}

impl ExperimentMatrix {
    /// Cartesian product in metric, strategy, p order, all pending.
    pub fn new(spec: &ExperimentSpec) -> Self {
        let mut cells = Vec::new();
        for &metric in &spec.metrics {
            for &strategy in &spec.strategies {
                for &p in &spec.p_values {
                    cells.push(Cell { metric, strategy, p, status: CellStatus::Pending, error: None, row: None });
                }
            }
        }
        ExperimentMatrix { cells }
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.cells.iter().filter_map(|c| c.row.clone()).collect()
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }

    pub fn all_done(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Done)
    }
}

/// (p, accuracy) points of one metric/strategy pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub metric: Metric,
    pub strategy: Strategy,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub baseline_accuracy: f64,
    pub series: Vec<PlotSeries>,
}

pub fn plot_data(matrix: &ExperimentMatrix, baseline_accuracy: f64) -> PlotData {
    let mut grouped: BTreeMap<(usize, usize), PlotSeries> = BTreeMap::new();
    for c in &matrix.cells {
        let key = (
            Metric::ALL.iter().position(|&m| m == c.metric).unwrap_or(0),
            Strategy::ALL.iter().position(|&s| s == c.strategy).unwrap_or(0),
        );
        let series = grouped.entry(key).or_insert_with(|| PlotSeries { metric: c.metric, strategy: c.strategy, points: Vec::new() });
        if let Some(row) = &c.row {
            series.points.push((c.p, row.top1_acc));
        }
    }
    PlotData { baseline_accuracy, series: grouped.into_values().collect() }
}

/// Runs every cell of the matrix. A failing cell is recorded and the rest continue.
pub fn cmd_run_matrix(spec: &ExperimentSpec) -> Result<ExperimentMatrix, HarnessError> {
    spec.validate()?;
    let (baseline, record) = load_baseline(spec)?;
    let ds = load_dataset(spec)?;
    let mut matrix = ExperimentMatrix::new(spec);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.workers).build().map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<Result<ReportRow, HarnessError>> =
        pool.install(|| matrix.cells.par_iter().map(|c| run_cell(spec, &baseline, &ds, c.metric, c.strategy, c.p)).collect());
    for (cell, result) in matrix.cells.iter_mut().zip(results) {
        match result {
            Ok(row) => {
                cell.status = CellStatus::Done;
                cell.row = Some(row);
            }
            Err(e) => {
                cell.status = CellStatus::Failed;
                cell.error = Some(e.to_string());
            }
        }
    }
    write_rows(fs::File::create(spec.results_path())?, &matrix.rows())?;
    fs::write(spec.plot_data_path(), serde_json::to_vec_pretty(&plot_data(&matrix, record.test_accuracy))?)?;
    fs::write(spec.matrix_path(), serde_json::to_vec_pretty(&matrix)?)?;
    Ok(matrix)
}

/// Loads `results.csv`, checks every row against the baseline, and renders a table.
pub fn cmd_report(spec: &ExperimentSpec) -> Result<String, HarnessError> {
    let path = spec.results_path();
    if !path.exists() {
        return Err(HarnessError::Missing(path));
    }
    let rows = read_rows(fs::File::open(&path)?)?;
    let baseline = read_rows(fs::File::open(spec.baseline_row_path()).map_err(|_| HarnessError::Missing(spec.baseline_row_path()))?)?;
    let base = baseline.first().ok_or_else(|| HarnessError::Config("baseline.csv is empty".into()))?;
    validate_rows(base, &rows)?;
    Ok(render_table(base, &rows))
}

/// Every row's speedup and compression must follow from its counts and the baseline's.
pub fn validate_rows(base: &ReportRow, rows: &[ReportRow]) -> Result<(), HarnessError> {
    for r in rows {
        let expect = report_from_counts(base.flops, r.flops, base.trainable_params, r.trainable_params, r.top1_acc, r.layer_pruning_pct);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
        if !close(r.speedup, expect.speedup) || !close(r.model_compression_pct, expect.compression_pct) {
            return Err(HarnessError::InvalidRow(format!("{} at p={}", r.approach, r.layer_pruning_pct)));
        }
        if r.flops > base.flops || r.trainable_params > base.trainable_params || !(0.0..=1.0).contains(&r.top1_acc) {
            return Err(HarnessError::InvalidRow(format!("{} at p={}", r.approach, r.layer_pruning_pct)));
        }
    }
    Ok(())
}

pub fn render_table(base: &ReportRow, rows: &[ReportRow]) -> String {
    let mut out = String::from("| Approach | Layer pruning % | Model compression % | FLOPs (M) | Params (M) | Speedup | Top-1 acc. % |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in std::iter::once(base).chain(rows) {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.3} | {:.4} | {:.2}x | {:.2} |\n",
            r.approach,
            r.layer_pruning_pct,
            r.model_compression_pct,
            r.flops as f64 / 1e6,
            r.trainable_params as f64 / 1e6,
            r.speedup,
            100.0 * r.top1_acc
        ));
    }
    out
}

pub fn trace_path(spec: &ExperimentSpec, metric: Metric, strategy: Strategy, p: f64) -> PathBuf {
    spec.cell_dir().join(format!("{}.trace.json", cell_stem(metric, strategy, p)))
}
