//! Command-line front end. Exit codes: 0 success, 1 usage or input error,
//! 2 runtime failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{load_dir, save_dir, synthesize, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::interpret::{
    chapter_report, composition_table, feature_heatmaps, modality_report, write_report, FeatureGroup, HeatmapOptions,
};
use crate::model::Ablation;
use crate::trainer::{
    ablate, checkpoint_predictions, evaluate, repeated_runs, run, test_split, tune, Checkpoint, PipelineExecutor,
    PipelineTrialRunner, SearchSpace, TrainConfig, TrainedRun,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const CHECKPOINT_FILE: &str = "best.ckpt";

#[derive(Debug, Parser)]
#[command(name = "emdlot", version, about = "Multimodal default-risk classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file (synth settings for `synth`, training settings otherwise).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train on a dataset and evaluate on its test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate a checkpoint on the test split it was trained against.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Random hyperparameter search.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train one ablation variant.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// ABL1 (no text), ABL2 (no clustering) or ABL3 (no attention).
        #[arg(long)]
        variant: Ablation,
    },
    /// Export attention reports and cluster composition for a checkpoint.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Repeat training with fresh seeds until enough valid runs.
    Runs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_valid: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let body = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&body).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let body = serde_json::to_string_pretty(value)?;
    write_report(dir, name, &(body + "\n"))?;
    Ok(dir.join(name))
}

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| Error::invalid("--out is required for this command"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn train_config(common: &Common) -> Result<TrainConfig> {
    let mut c: TrainConfig = read_json(common.config.as_deref())?;
    if let Some(s) = common.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn load_data(dir: &Path) -> Result<Dataset> {
    let ds = load_dir(dir)?;
    info!("loaded {} samples with {} features from {}", ds.len(), ds.num_features(), dir.display());
    Ok(ds)
}

fn save_run(run: &mut TrainedRun, dir: &Path) -> Result<()> {
    let ck = dir.join(CHECKPOINT_FILE);
    run.checkpoint.save(&ck)?;
    run.result.checkpoint = Some(ck);
    write_json(dir, "run.json", &run.result)?;
    write_json(dir, "metrics.json", &run.result.report.to_flat_json())?;
    write_report(dir, "composition.csv", &run.result.composition.to_csv()?)?;
    let r = &run.result.report;
    eprintln!(
        "{}: recall {:.4}  precision {:.4}  f1 {:.4}  auc {:.4}  map {:.4}  ({} classes predicted, best epoch {})",
        run.result.variant, r.recall, r.precision, r.f1, r.auc_ovr, r.map, r.unique_preds, run.result.best_epoch
    );
    Ok(())
}

fn explain(common: &Common, data: &Path, checkpoint: &Path) -> Result<()> {
    let dir = out_dir(common)?;
    let ck = Checkpoint::load(checkpoint)?;
    let (_, test, _, _) = test_split(&ck.config, &load_data(data)?)?;
    let p = checkpoint_predictions(&ck, &test)?;
    let clusters = p.clusters();
    let table = composition_table(&clusters, &p.labels, ck.spec.clusters())?;
    write_json(dir, "composition.json", &table)?;
    write_report(dir, "composition.csv", &table.to_csv()?)?;
    eprint!("{table}");

    match modality_report(std::slice::from_ref(&p.records)) {
        Ok(m) => {
            eprintln!("modality weights {m}");
            write_json(dir, "modality.json", &m)?;
        }
        Err(e) => eprintln!("modality report skipped: {e}"),
    }
    match chapter_report(&p.records) {
        Ok(c) => {
            eprintln!("chapter weights {c}");
            write_json(dir, "chapter.json", &c)?;
        }
        Err(e) => eprintln!("chapter report skipped: {e}"),
    }
    let by_id: HashMap<String, usize> = p.ids.iter().cloned().zip(clusters).collect();
    for group in [FeatureGroup::Financial, FeatureGroup::Macro] {
        let opts = HeatmapOptions {
            group,
            ..Default::default()
        };
        for g in feature_heatmaps(&p.records, &by_id, &ck.feature_names, opts)? {
            let name = match g.cluster_id {
                Some(k) => format!("heatmap_financial_cluster{k}.csv"),
                None => "heatmap_macro.csv".to_string(),
            };
            write_report(dir, &name, &g.to_csv()?)?;
        }
    }
    eprintln!("reports written to {}", dir.display());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let dir = out_dir(&common)?;
            let cfg: SynthConfig = read_json(common.config.as_deref())?;
            let ds = synthesize(&cfg, common.seed.unwrap_or(cfg.seed))?;
            save_dir(&ds, dir)?;
            eprintln!("wrote {} firms to {}", ds.len(), dir.display());
        }
        Command::Train { common, data } => {
            let dir = out_dir(&common)?;
            let mut r = run(&train_config(&common)?, &load_data(&data)?)?;
            save_run(&mut r, dir)?;
        }
        Command::Ablate { common, data, variant } => {
            let dir = out_dir(&common)?;
            let mut r = ablate(variant, &train_config(&common)?, &load_data(&data)?)?;
            save_run(&mut r, dir)?;
        }
        Command::Eval { common, data, checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let (_, test, _, _) = test_split(&ck.config, &load_data(&data)?)?;
            let flat = evaluate(&ck, &test)?.to_flat_json();
            if common.out.is_some() {
                write_json(out_dir(&common)?, "eval.json", &flat)?;
            }
            println!("{}", serde_json::to_string_pretty(&flat)?);
        }
        Command::Tune {
            common,
            data,
            trials,
            jobs,
        } => {
            let dir = out_dir(&common)?;
            let base = train_config(&common)?;
            let ds = load_data(&data)?;
            let log_path = dir.join("trials.jsonl");
            let mut log = BufWriter::new(fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
            let result = tune(
                &SearchSpace::default(),
                trials,
                &base,
                &PipelineTrialRunner { data: &ds },
                base.seed,
                jobs,
                Some(&mut log),
            )?;
            write_json(dir, "best_config.json", &result.best)?;
            eprintln!(
                "best trial {} of {trials}: objective {:.4}{}",
                result.best_trial,
                result.best_objective,
                if result.best_valid { "" } else { " (no valid trial)" }
            );
        }
        Command::Runs {
            common,
            data,
            n_valid,
            jobs,
        } => {
            let dir = out_dir(&common)?;
            let config = train_config(&common)?;
            let ds = load_data(&data)?;
            let summary = repeated_runs(&PipelineExecutor { config: &config, data: &ds }, n_valid, config.seed, jobs)?;
            write_json(dir, "runs.json", &summary)?;
            eprintln!(
                "{} valid of {} attempts{}",
                summary.valid_runs,
                summary.attempts,
                if summary.failed { " (attempt cap reached)" } else { "" }
            );
            for (name, m) in &summary.metrics {
                eprintln!("{name:>10}: {:.4} ± {:.4}", m.mean, m.sd);
            }
        }
        Command::Explain {
            common,
            data,
            checkpoint,
        } => explain(&common, &data, &checkpoint)?,
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
