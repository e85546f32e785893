//! Command-line front end for correlation-shift pre-processing and fair training experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corrshift::datagen::{frontier, generate_synthetic, make_test_rotated, write_frontier_csv, SyntheticSpec};
use corrshift::dataset::{joint_ratios, load_csv, write_csv, JointRatios};
use corrshift::harness::{
    run_c_sweep, run_experiment, run_misspecification, run_range_sweep, write_report, ExperimentConfig, Pipeline,
    RunRecord,
};
use corrshift::ratio::{grid_oracle, optimize, RatioProblem};
use corrshift::resample::{preprocess, MinDistOptions, PreprocessOptions, Sampling};
use corrshift::shift::{estimate, ShiftRange};
use corrshift::stats::correlation_constant;
use corrshift::train::{evaluate, train, FairnessTarget, LinearModel, Method, TrainConfig};
use corrshift::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "corrshift", version, about = "Fair training under label/group correlation shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column name.
    #[arg(long, default_value = "y")]
    label: String,
    /// Group column name.
    #[arg(long, default_value = "z")]
    group: String,
}

impl DataArgs {
    fn load(&self) -> Result<corrshift::dataset::TabularDataset> {
        load_csv(&self.data, &self.label, &self.group)
    }
}

#[derive(Args)]
struct RangeArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma_y: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma_z: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Overrides the config's pipeline list.
    #[arg(long, value_delimiter = ',')]
    pipelines: Option<Vec<String>>,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(p) = &self.pipelines {
            cfg.pipelines = p.iter().map(|s| s.parse()).collect::<Result<Vec<Pipeline>>>()?;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lr,
    Fc,
    FbLite,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Dp,
    Eo,
    DpAndEo,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the two-Gaussian synthetic dataset.
    GenSynthetic {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 4.0)]
        k: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Regenerate z with rotation π/k_test, keeping the (x, y) draws.
        #[arg(long)]
        k_test: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confidence range for c from labelled deployment samples.
    EstimateShift {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Solve the class-ratio program for a dataset or given ratios.
    OptimizeRatios {
        #[arg(long, conflicts_with = "ratios")]
        data: Option<PathBuf>,
        /// Current ratios as JSON (inline or a file path).
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long, default_value = "y")]
        label: String,
        #[arg(long, default_value = "z")]
        group: String,
        #[command(flatten)]
        range: RangeArgs,
        /// Also run the grid oracle at this resolution.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Resample a training set to the optimized class ratios.
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        range: RangeArgs,
        /// Use MinDistChange split weights.
        #[arg(long)]
        min_dist: bool,
        #[arg(long, default_value_t = 10)]
        grid_m: usize,
        #[arg(long, default_value_t = 256)]
        subsample: usize,
        #[arg(long, default_value_t = 0)]
        feature_index: usize,
        /// Draw rows i.i.d. instead of stratified.
        #[arg(long)]
        iid: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; a JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear classifier.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "lr")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "dp")]
        target: TargetArg,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        #[arg(long, default_value_t = 0.5)]
        knob: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.0005)]
        lr_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and disparities of a trained model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run a config-driven experiment.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Vary the test correlation as a fraction of the training correlation.
    SweepC {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7")]
        fractions: Vec<f64>,
    },
    /// Fix the true test correlation and vary the specified one.
    SweepMisspec {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0.6)]
        true_fraction: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7")]
        specified: Vec<f64>,
    },
    /// Widen the range around the test correlation by ±x%.
    SweepRange {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0.6)]
        fraction: f64,
        #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
        percents: Vec<f64>,
    },
    /// Enumerate cell-rate classifiers and their accuracy/disparity.
    Frontier {
        /// Ratios as JSON (inline or a file path).
        #[arg(long)]
        ratios: String,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_ratios(arg: &str) -> Result<JointRatios> {
    let text = if Path::new(arg).is_file() {
        std::fs::read_to_string(arg)?
    } else {
        arg.to_string()
    };
    let r: JointRatios = serde_json::from_str(&text)?;
    r.validate()?;
    Ok(r)
}

fn print_json(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

/// Writes or prints the report; returns whether every cell succeeded.
fn finish(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<bool> {
    match &cfg.output_dir {
        Some(dir) => write_report(records, dir)?,
        None => print!("{}", corrshift::harness::records_to_csv(records)?),
    }
    for r in records {
        for c in r.cells.iter().filter(|c| c.error.is_some()) {
            eprintln!(
                "{} {} seed {}: {}",
                r.pipeline,
                r.sweep,
                c.seed,
                c.error.as_deref().unwrap_or_default()
            );
        }
    }
    Ok(records.iter().all(|r| r.failed == 0))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenSynthetic { n, k, seed, k_test, out } => {
            let spec = SyntheticSpec::standard(n, k, seed);
            let data = match k_test {
                Some(kt) => make_test_rotated(&spec, kt)?,
                None => generate_synthetic(&spec)?,
            };
            write_csv(&out, &data)?;
        }
        Command::EstimateShift { data, delta } => {
            let d = data.load()?;
            print_json(json!(estimate(d.labels(), d.groups(), delta)?))?;
        }
        Command::OptimizeRatios {
            data,
            ratios,
            label,
            group,
            range,
            resolution,
        } => {
            let current = match (data, ratios) {
                (Some(p), _) => joint_ratios(&load_csv(p, &label, &group)?)?,
                (None, Some(r)) => read_ratios(&r)?,
                (None, None) => return Err(Error::InvalidArgument("pass --data or --ratios".into())),
            };
            let problem = RatioProblem::new(
                current,
                ShiftRange::given(range.alpha, range.beta)?,
                range.gamma_y,
                range.gamma_z,
            )?;
            let solution = optimize(&problem)?;
            let grid = resolution.map(|r| grid_oracle(&problem, r)).transpose()?;
            print_json(json!({ "current": current, "solution": solution, "grid": grid }))?;
        }
        Command::Preprocess {
            data,
            range,
            min_dist,
            grid_m,
            subsample,
            feature_index,
            iid,
            seed,
            out,
        } => {
            let d = data.load()?;
            let options = PreprocessOptions {
                sampling: if iid { Sampling::Iid } else { Sampling::Stratified },
                min_dist: min_dist.then_some(MinDistOptions {
                    grid_m,
                    feature_index,
                    subsample,
                }),
            };
            let shift = ShiftRange::given(range.alpha, range.beta)?;
            let pre = preprocess(&d, shift, range.gamma_y, range.gamma_z, seed, &options)?;
            write_csv(&out, &pre.data)?;
            let sidecar = json!({
                "range": shift,
                "solution": pre.solution,
                "achieved_c": correlation_constant(&joint_ratios(&pre.data)?)?,
                "split": pre.split,
            });
            std::fs::write(out.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        }
        Command::Train {
            data,
            method,
            target,
            lambda,
            step,
            knob,
            epochs,
            batch_size,
            lr_rate,
            seed,
            out,
        } => {
            let config = TrainConfig {
                method: match method {
                    MethodArg::Lr => Method::Lr,
                    MethodArg::Fc => Method::Fc,
                    MethodArg::FbLite => Method::FbLite,
                },
                target: match target {
                    TargetArg::Dp => FairnessTarget::Dp,
                    TargetArg::Eo => FairnessTarget::Eo,
                    TargetArg::DpAndEo => FairnessTarget::DpAndEo,
                },
                lambda,
                step,
                knob,
                epochs,
                batch_size,
                lr_rate,
                seed,
            };
            let model = train(&data.load()?, &config)?;
            std::fs::write(out, serde_json::to_string_pretty(&model)?)?;
        }
        Command::Eval { model, data } => {
            let model: LinearModel = serde_json::from_str(&std::fs::read_to_string(model)?)?;
            print_json(json!(evaluate(&model, &data.load()?)?))?;
        }
        Command::Run { exp } => {
            let cfg = exp.resolve()?;
            return finish(&cfg, &run_experiment(&cfg)?);
        }
        Command::SweepC { exp, fractions } => {
            let cfg = exp.resolve()?;
            return finish(&cfg, &run_c_sweep(&cfg, &fractions)?);
        }
        Command::SweepMisspec {
            exp,
            true_fraction,
            specified,
        } => {
            let cfg = exp.resolve()?;
            return finish(&cfg, &run_misspecification(&cfg, true_fraction, &specified)?);
        }
        Command::SweepRange { exp, fraction, percents } => {
            let cfg = exp.resolve()?;
            return finish(&cfg, &run_range_sweep(&cfg, fraction, &percents)?);
        }
        Command::Frontier { ratios, step, out } => {
            let w = read_ratios(&ratios)?;
            write_frontier_csv(out, &frontier(&w, step)?)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error ({}): {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
