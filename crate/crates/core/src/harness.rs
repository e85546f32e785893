//! Experiment orchestration: builds shifted train/test pairs per seed, runs pre-processing and
//! training pipelines, and aggregates metrics across seeds.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::{generate_synthetic, make_test_resampled, make_test_rotated, SyntheticSpec};
use crate::dataset::{joint_ratios, load_csv, seeded_rng, TabularDataset};
use crate::error::{Error, Result};
use crate::ratio::RatioSolution;
use crate::resample::{preprocess, resample, reweighing_weights, MinDistOptions, PreprocessOptions, Sampling};
use crate::shift::{estimate, ShiftRange};
use crate::stats::correlation_constant;
use crate::train::{evaluate, select_lambda, train, Method, TrainConfig, LAMBDA_GRID};

/// Environment variable holding the worker count for concurrent cells.
pub const WORKERS_ENV: &str = "CORRSHIFT_WORKERS";

/// Seed offset separating test draws from training draws.
const TEST_SEED_OFFSET: u64 = 10_000;
/// Seed offset for the extra draw used by oracle pipelines.
const ORACLE_SEED_OFFSET: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        n_train: usize,
        n_test: usize,
        k: f64,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        label_column: String,
        group_column: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestSpec {
    /// Test data as drawn.
    Unshifted,
    /// Resampled within classes to c = fraction·c_train with fixed marginals.
    Resampled { fraction: f64 },
    /// Synthetic only: z regenerated with rotation π/k_test.
    Rotated { k_test: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftSpec {
    /// Fixed [α, β].
    Given { alpha: f64, beta: f64 },
    /// Estimated from m unlabeled-by-model (y, z) draws of the test distribution.
    Estimated { m: usize, delta: f64 },
    /// Centered on fraction·c_train, widened by ±percent of the center.
    TargetFraction {
        fraction: f64,
        #[serde(default)]
        band_percent: f64,
    },
}

/// Pre-processing applied before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prep {
    None,
    Reweighing,
    Ours,
    OursOptional,
    /// Train on a fresh draw from the test distribution.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pipeline {
    pub prep: Prep,
    pub method: Method,
}

fn method_id(m: Method) -> &'static str {
    match m {
        Method::Lr => "lr",
        Method::Fc => "fc",
        Method::FbLite => "fb_lite",
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = method_id(self.method);
        match self.prep {
            Prep::None => write!(f, "{m}"),
            Prep::Reweighing => write!(f, "rw+{m}"),
            Prep::Ours => write!(f, "ours+{m}"),
            Prep::OursOptional => write!(f, "ours+optional+{m}"),
            Prep::Oracle => write!(f, "{m}_oracle"),
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let method = |m: &str| match m {
            "lr" => Ok(Method::Lr),
            "fc" => Ok(Method::Fc),
            "fb_lite" => Ok(Method::FbLite),
            _ => Err(Error::InvalidArgument(format!("unknown pipeline {s:?}"))),
        };
        let (prep, m) = if let Some(m) = s.strip_prefix("ours+optional+") {
            (Prep::OursOptional, m)
        } else if let Some(m) = s.strip_prefix("ours+") {
            (Prep::Ours, m)
        } else if let Some(m) = s.strip_prefix("rw+") {
            (Prep::Reweighing, m)
        } else if let Some(m) = s.strip_suffix("_oracle") {
            (Prep::Oracle, m)
        } else {
            (Prep::None, s)
        };
        Ok(Self {
            prep,
            method: method(m)?,
        })
    }
}

impl Serialize for Pipeline {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pipeline {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub test: TestSpec,
    pub shift: ShiftSpec,
    pub pipelines: Vec<Pipeline>,
    pub trainer: TrainConfig,
    /// FC penalty; chosen by cross-validation when absent.
    pub fc_lambda: Option<f64>,
    pub cv_folds: usize,
    pub seeds: Vec<u64>,
    pub gamma_y: f64,
    pub gamma_z: f64,
    pub sampling: Sampling,
    pub min_dist: MinDistOptions,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Synthetic {
                n_train: 2000,
                n_test: 1000,
                k: 4.0,
            },
            test: TestSpec::Resampled { fraction: 0.5 },
            shift: ShiftSpec::TargetFraction {
                fraction: 0.5,
                band_percent: 0.0,
            },
            pipelines: ["lr", "fc", "fb_lite", "rw+fb_lite", "ours+fc", "ours+fb_lite"]
                .iter()
                .map(|s| s.parse().expect("valid id"))
                .collect(),
            trainer: TrainConfig::default(),
            fc_lambda: None,
            cv_folds: 3,
            seeds: (0..5).collect(),
            gamma_y: 0.1,
            gamma_z: 0.1,
            sampling: Sampling::Stratified,
            min_dist: MinDistOptions::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pipelines.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one pipeline and one seed".into()));
        }
        if matches!(self.test, TestSpec::Rotated { .. }) && !matches!(self.dataset, DatasetSpec::Synthetic { .. }) {
            return Err(Error::InvalidArgument("rotated test sets need synthetic data".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma_y) || !(0.0..=1.0).contains(&self.gamma_z) {
            return Err(Error::InvalidArgument("gamma outside [0, 1]".into()));
        }
        self.trainer.validate()
    }
}

/// Outcome of one (pipeline, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub c_train: Option<f64>,
    pub c_pre: Option<f64>,
    pub c_test: Option<f64>,
    pub accuracy: Option<f64>,
    pub dp: Option<f64>,
    pub eo: Option<f64>,
    pub combined: Option<f64>,
    pub fc_lambda: Option<f64>,
    pub range: Option<ShiftRange>,
    pub solution: Option<RatioSolution>,
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and population standard deviation; NaN when empty.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Per-pipeline aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pipeline: Pipeline,
    /// Sweep coordinate label, empty outside sweeps.
    pub sweep: String,
    pub c_train: Summary,
    pub c_pre: Option<Summary>,
    pub c_test: Summary,
    pub accuracy: Summary,
    pub dp: Summary,
    pub eo: Summary,
    pub combined: Summary,
    pub failed: usize,
    pub cells: Vec<CellResult>,
}

impl RunRecord {
    fn from_cells(pipeline: Pipeline, sweep: String, cells: Vec<CellResult>) -> Self {
        let pick = |f: fn(&CellResult) -> Option<f64>| -> Vec<f64> {
            cells.iter().filter(|c| c.error.is_none()).filter_map(f).collect()
        };
        let c_pre = pick(|c| c.c_pre);
        Self {
            pipeline,
            sweep,
            c_train: Summary::of(&pick(|c| c.c_train)),
            c_pre: (!c_pre.is_empty()).then(|| Summary::of(&c_pre)),
            c_test: Summary::of(&pick(|c| c.c_test)),
            accuracy: Summary::of(&pick(|c| c.accuracy)),
            dp: Summary::of(&pick(|c| c.dp)),
            eo: Summary::of(&pick(|c| c.eo)),
            combined: Summary::of(&pick(|c| c.combined)),
            failed: cells.iter().filter(|c| c.error.is_some()).count(),
            cells,
        }
    }
}

/// Train/test pair for one seed.
struct SeedData {
    train: TabularDataset,
    test: TabularDataset,
    /// Fresh draw from the test distribution, same size as train.
    oracle: Option<TabularDataset>,
    c_train: f64,
    c_test: f64,
    range: ShiftRange,
}

fn c_of(d: &TabularDataset) -> Result<f64> {
    correlation_constant(&joint_ratios(d)?)
}

fn shift_test(cfg: &ExperimentConfig, raw: TabularDataset, spec: Option<SyntheticSpec>, c_train: f64, seed: u64) -> Result<TabularDataset> {
    match cfg.test {
        TestSpec::Unshifted => Ok(raw),
        TestSpec::Resampled { fraction } => make_test_resampled(&raw, fraction * c_train, seed),
        TestSpec::Rotated { k_test } => {
            let spec = spec.ok_or_else(|| Error::InvalidArgument("rotated test sets need synthetic data".into()))?;
            make_test_rotated(&spec, k_test)
        }
    }
}

fn seed_data(cfg: &ExperimentConfig, seed: u64, need_oracle: bool) -> Result<SeedData> {
    let (train, raw_test, test_spec) = match &cfg.dataset {
        DatasetSpec::Synthetic { n_train, n_test, k } => {
            let train = generate_synthetic(&SyntheticSpec::standard(*n_train, *k, seed))?;
            let spec = SyntheticSpec::standard(*n_test, *k, seed.wrapping_add(TEST_SEED_OFFSET));
            (train, generate_synthetic(&spec)?, Some(spec))
        }
        DatasetSpec::Csv {
            train,
            test,
            label_column,
            group_column,
        } => (
            load_csv(train, label_column, group_column)?,
            load_csv(test, label_column, group_column)?,
            None,
        ),
    };
    let c_train = c_of(&train)?;
    let test = shift_test(cfg, raw_test, test_spec, c_train, seed)?;
    let c_test = c_of(&test)?;
    let oracle = match (&cfg.dataset, need_oracle) {
        (DatasetSpec::Synthetic { n_train, k, .. }, true) => {
            let spec = SyntheticSpec::standard(*n_train, *k, seed.wrapping_add(ORACLE_SEED_OFFSET));
            let raw = generate_synthetic(&spec)?;
            Some(shift_test(cfg, raw, Some(spec), c_train, seed.wrapping_add(ORACLE_SEED_OFFSET))?)
        }
        (_, true) => Some(test.clone()),
        _ => None,
    };
    let range = match cfg.shift {
        ShiftSpec::Given { alpha, beta } => ShiftRange::given(alpha, beta)?,
        ShiftSpec::Estimated { m, delta } => {
            let mut rng = seeded_rng(seed.wrapping_add(TEST_SEED_OFFSET + 1));
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..test.n())).collect();
            let sample = test.select(&idx);
            estimate(sample.labels(), sample.groups(), delta)?
        }
        ShiftSpec::TargetFraction { fraction, band_percent } => {
            let center = fraction * c_train;
            let half = (center * band_percent / 100.0).abs();
            ShiftRange::given((center - half).max(-1.0), (center + half).min(1.0))?
        }
    };
    Ok(SeedData {
        train,
        test,
        oracle,
        c_train,
        c_test,
        range,
    })
}

fn run_cell(cfg: &ExperimentConfig, pipeline: Pipeline, seed: u64, data: &Result<SeedData>) -> CellResult {
    let start = Instant::now();
    let mut cell = CellResult {
        seed,
        c_train: None,
        c_pre: None,
        c_test: None,
        accuracy: None,
        dp: None,
        eo: None,
        combined: None,
        fc_lambda: None,
        range: None,
        solution: None,
        error: None,
        wall_seconds: 0.0,
    };
    if let Err(e) = run_cell_inner(cfg, pipeline, seed, data, &mut cell) {
        cell.error = Some(format!("{}: {e}", e.code()));
    }
    cell.wall_seconds = start.elapsed().as_secs_f64();
    cell
}

fn run_cell_inner(
    cfg: &ExperimentConfig,
    pipeline: Pipeline,
    seed: u64,
    data: &Result<SeedData>,
    cell: &mut CellResult,
) -> Result<()> {
    let data = data.as_ref().map_err(|e| Error::InvalidArgument(format!("data construction failed: {e}")))?;
    cell.c_train = Some(data.c_train);
    cell.c_test = Some(data.c_test);
    let fit: TabularDataset = match pipeline.prep {
        Prep::None => data.train.clone(),
        Prep::Reweighing => {
            let w = reweighing_weights(&data.train)?;
            resample(&data.train, &w, data.train.n(), cfg.sampling, seed)?
        }
        Prep::Ours | Prep::OursOptional => {
            cell.range = Some(data.range);
            let options = PreprocessOptions {
                sampling: cfg.sampling,
                min_dist: (pipeline.prep == Prep::OursOptional).then_some(cfg.min_dist),
            };
            let out = preprocess(&data.train, data.range, cfg.gamma_y, cfg.gamma_z, seed, &options)?;
            cell.solution = Some(out.solution);
            out.data
        }
        Prep::Oracle => data.oracle.clone().expect("oracle data requested"),
    };
    if pipeline.prep != Prep::None {
        cell.c_pre = Some(c_of(&fit)?);
    }
    let mut tc = TrainConfig {
        method: pipeline.method,
        seed,
        ..cfg.trainer
    };
    if pipeline.method == Method::Fc {
        tc.lambda = match cfg.fc_lambda {
            Some(l) => l,
            None => select_lambda(&fit, &tc, &LAMBDA_GRID, cfg.cv_folds, 0.02)?.0,
        };
        cell.fc_lambda = Some(tc.lambda);
    }
    let model = train(&fit, &tc)?;
    let ev = evaluate(&model, &data.test)?;
    cell.accuracy = Some(ev.accuracy);
    cell.dp = Some(ev.disparities.dp);
    cell.eo = Some(ev.disparities.eo);
    cell.combined = Some(ev.disparities.combined);
    Ok(())
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.parse().ok().filter(|&n: &usize| n > 0)
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers_from_env() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(e.to_string())),
        None => Ok(f()),
    }
}

fn run_labeled(cfg: &ExperimentConfig, sweep: String) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let need_oracle = cfg.pipelines.iter().any(|p| p.prep == Prep::Oracle);
    with_pool(|| {
        let data: Vec<Result<SeedData>> = cfg.seeds.par_iter().map(|&s| seed_data(cfg, s, need_oracle)).collect();
        let jobs: Vec<(usize, usize)> = (0..cfg.pipelines.len())
            .flat_map(|p| (0..cfg.seeds.len()).map(move |s| (p, s)))
            .collect();
        let cells: Vec<CellResult> = jobs
            .par_iter()
            .map(|&(p, s)| run_cell(cfg, cfg.pipelines[p], cfg.seeds[s], &data[s]))
            .collect();
        let mut cells = cells.into_iter();
        cfg.pipelines
            .iter()
            .map(|&p| RunRecord::from_cells(p, sweep.clone(), cells.by_ref().take(cfg.seeds.len()).collect()))
            .collect()
    })
}

/// Runs every (pipeline, seed) cell and aggregates per pipeline.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_labeled(config, String::new())
}

/// Test c and the targeted c both set to fraction·c_train, for each fraction.
pub fn run_c_sweep(config: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for &f in fractions {
        let cfg = ExperimentConfig {
            test: TestSpec::Resampled { fraction: f },
            shift: ShiftSpec::TargetFraction {
                fraction: f,
                band_percent: 0.0,
            },
            ..config.clone()
        };
        out.extend(run_labeled(&cfg, format!("c_fraction={f}"))?);
    }
    Ok(out)
}

/// Test c fixed at true_fraction·c_train while the specified c (as a fraction of c_train) varies.
pub fn run_misspecification(config: &ExperimentConfig, true_fraction: f64, specified: &[f64]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for &s in specified {
        let cfg = ExperimentConfig {
            test: TestSpec::Resampled { fraction: true_fraction },
            shift: ShiftSpec::TargetFraction {
                fraction: s,
                band_percent: 0.0,
            },
            ..config.clone()
        };
        out.extend(run_labeled(&cfg, format!("specified={s}"))?);
    }
    Ok(out)
}

/// Range [c(1 − x/100), c(1 + x/100)] around the test correlation c for each x.
pub fn run_range_sweep(config: &ExperimentConfig, fraction: f64, percents: &[f64]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for &x in percents {
        let cfg = ExperimentConfig {
            test: TestSpec::Resampled { fraction },
            shift: ShiftSpec::TargetFraction {
                fraction,
                band_percent: x,
            },
            ..config.clone()
        };
        out.extend(run_labeled(&cfg, format!("band_percent={x}"))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    pipeline: String,
    sweep: &'a str,
    seeds: usize,
    failed: usize,
    c_train: f64,
    c_pre: Option<f64>,
    c_test: f64,
    accuracy_mean: f64,
    accuracy_std: f64,
    dp_mean: f64,
    dp_std: f64,
    eo_mean: f64,
    eo_std: f64,
    combined_mean: f64,
    combined_std: f64,
}

const CSV_HEADER: [&str; 15] = [
    "pipeline",
    "sweep",
    "seeds",
    "failed",
    "c_train",
    "c_pre",
    "c_test",
    "accuracy_mean",
    "accuracy_std",
    "dp_mean",
    "dp_std",
    "eo_mean",
    "eo_std",
    "combined_mean",
    "combined_std",
];

/// One CSV row per record, without timing, so identical runs give identical bytes.
pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(CsvRow {
            pipeline: r.pipeline.to_string(),
            sweep: &r.sweep,
            seeds: r.cells.len(),
            failed: r.failed,
            c_train: r.c_train.mean,
            c_pre: r.c_pre.map(|s| s.mean),
            c_test: r.c_test.mean,
            accuracy_mean: r.accuracy.mean,
            accuracy_std: r.accuracy.std,
            dp_mean: r.dp.mean,
            dp_std: r.dp.std,
            eo_mean: r.eo.mean,
            eo_std: r.eo.std,
            combined_mean: r.combined.mean,
            combined_std: r.combined.std,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `report.csv` and `report.json` (full provenance) into `dir`.
pub fn write_report(records: &[RunRecord], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), records_to_csv(records)?)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(records)?)?;
    Ok(())
}
