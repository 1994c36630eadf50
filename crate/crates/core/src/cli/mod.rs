//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error
//! (unreadable or malformed files, empty splits), 3 training divergence.
//! Failures print a single line `nutripred: error[<category>]: <message>`
//! to stderr.

mod args;

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use clap::Parser;
use serde_json::json;

use crate::dataio::{load_image, load_manifest, split_dataset, ImageSet, Split, Subset};
use crate::evaluation::{default_label, evaluate, render_table, EvalReport, TableFormat};
use crate::model::{build_model, Scope};
use crate::synthdata::{self, SynthSpec};
use crate::training::{fit, load_checkpoint, Checkpoint, FitOptions, Resume, BEST_CHECKPOINT, LAST_CHECKPOINT};
use crate::{Error, Result, TASK_NAMES, TASK_UNITS};

pub use self::args::{
    resolve_data_path, Cli, Command, EvaluateArgs, InspectArgs, PredictArgs, RunConfig, SynthArgs, TrainArgs,
    DATA_DIR_ENV,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.json";

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        "config" => EXIT_CONFIG,
        "divergence" => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

fn diagnostic(category: &str, message: &str) -> String {
    let flat: Vec<&str> = message.split_whitespace().collect();
    format!("nutripred: error[{category}]: {}", flat.join(" "))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let text = e.to_string();
            let text = text.trim_start_matches("error:").split("\n\nUsage").next().unwrap_or("");
            eprintln!("{}", diagnostic("usage", text));
            return EXIT_CONFIG;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", diagnostic(e.category(), &e.to_string()));
            exit_code(&e)
        }
    }
}

/// Runs one command, writing its regular output to `out`.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => train(&a, out),
        Command::Evaluate(a) => evaluate_cmd(&a, out),
        Command::Predict(a) => predict(&a, out),
        Command::Synth(a) => synth(&a, out),
        Command::Inspect(a) => inspect(&a, out),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing required flag --{flag}")))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::file("<stdout>", e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let run = args.resolve()?;
    eprintln!("config: {}", serde_json::to_string(&run).expect("plain data serializes"));

    let manifest = load_manifest(&run.manifest)?;
    let manifest = split_dataset(&manifest, run.train.split, run.train.seed)?;
    let data = ImageSet::new(manifest, run.model.backbone.image_size)?;

    fs::create_dir_all(&run.out).map_err(|e| Error::file(&run.out, e))?;
    let config_path = run.out.join(CONFIG_FILE);
    fs::write(&config_path, to_json(&run)).map_err(|e| Error::file(&config_path, e))?;

    let resume = if run.resume {
        let last = load_checkpoint(run.out.join(LAST_CHECKPOINT))?;
        let best = load_checkpoint(run.out.join(BEST_CHECKPOINT))?;
        if last.model_config != run.model {
            return Err(Error::Config("model settings differ from the run being resumed".to_string()));
        }
        Some(Resume { last, best })
    } else {
        None
    };
    let model = build_model(&run.model)?;

    let history_path = run.out.join(HISTORY_FILE);
    let mut history_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(run.resume)
        .truncate(!run.resume)
        .open(&history_path)
        .map_err(|e| Error::file(&history_path, e))?;

    let mut log = Progress { file: &mut history_file };
    let outcome = fit(
        model,
        &data,
        &run.train,
        FitOptions {
            checkpoint_dir: Some(run.out.clone()),
            log: Some(&mut log),
            resume,
        },
    )?;
    outcome.best.save(run.out.join(BEST_CHECKPOINT))?;

    let best_model = outcome.best.model()?;
    let subset = if data.manifest().indices(Subset::Split(Split::Test))?.is_empty() {
        Subset::Split(Split::Val)
    } else {
        Subset::Split(Split::Test)
    };
    let report = evaluate(&best_model, &data, subset, run.train.batch_size)?;
    let report_path = run.out.join(REPORT_FILE);
    fs::write(&report_path, to_json(&report)).map_err(|e| Error::file(&report_path, e))?;

    let text = format!(
        "trained {} epochs; best epoch {}; {} combined MAE {:.4}\n{}",
        outcome.history.len(),
        outcome.best.epoch,
        subset.name(),
        report.combined_mae,
        render_table(std::slice::from_ref(&report), TableFormat::Text)?
    );
    write_out(out, &text)
}

/// Writes history lines to the log file and echoes them to stderr.
struct Progress<'a> {
    file: &'a mut fs::File,
}

impl Write for Progress<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.file.write_all(buf)?;
        io::stderr().write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.flush()
    }
}

fn evaluate_cmd(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    if args.checkpoints.is_empty() {
        return Err(Error::Config("missing required flag --checkpoint".to_string()));
    }
    if !args.labels.is_empty() && args.labels.len() != args.checkpoints.len() {
        return Err(Error::Config("--label must be given once per --checkpoint".to_string()));
    }
    if args.batch_size == 0 {
        return Err(Error::Config("--batch-size must be positive".to_string()));
    }
    let json_output = args.format.eq_ignore_ascii_case("json");
    let table_format = if json_output { None } else { Some(args.format.parse::<TableFormat>()?) };
    let subset = args.subset()?;
    let manifest = load_manifest(resolve_data_path(required(&args.manifest, "manifest")?))?;

    let mut reports = Vec::with_capacity(args.checkpoints.len());
    for (i, path) in args.checkpoints.iter().enumerate() {
        let ckpt = load_checkpoint(path)?;
        let model = ckpt.model()?;
        let split = split_dataset(&manifest, ckpt.train_config.split, ckpt.train_config.seed)?;
        let data = ImageSet::new(split, model.image_size())?;
        let report = evaluate(&model, &data, subset, args.batch_size)?;
        let label = args.labels.get(i).cloned().unwrap_or_else(|| default_label(&model));
        reports.push(report.with_label(label));
    }

    let text = match table_format {
        Some(format) => render_table(&reports, format)?,
        None if reports.len() == 1 => to_json(&reports[0]) + "\n",
        None => to_json(&reports) + "\n",
    };
    if let Some(path) = &args.out {
        fs::write(path, &text).map_err(|e| Error::file(path, e))?;
    }
    write_out(out, &text)
}

fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint(required(&args.checkpoint, "checkpoint")?)?;
    let image_path = required(&args.image, "image")?;
    let model = ckpt.model()?;
    let image = load_image(image_path, model.image_size())?;
    let (c, h, w) = image.shape();
    let tensor = candle_core::Tensor::from_vec(image.pixels.clone(), (1, c, h, w), &candle_core::Device::Cpu)?;
    let row = model.predict(&tensor)?[0];
    let mut text = String::new();
    for ((name, unit), value) in TASK_NAMES.iter().zip(TASK_UNITS).zip(row) {
        text.push_str(&format!("{name}: {value:.3} {unit}\n"));
    }
    write_out(out, &text)
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let dir = required(&args.out, "out")?;
    let spec = SynthSpec {
        count: args.count,
        resolution: args.resolution,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let manifest = synthdata::generate(&spec, dir)?;
    write_out(
        out,
        &format!(
            "wrote {} samples to {}\n",
            manifest.len(),
            dir.join(synthdata::MANIFEST_FILE).display()
        ),
    )
}

/// Machine-readable description of a checkpoint.
pub fn describe_checkpoint(ckpt: &Checkpoint) -> Result<serde_json::Value> {
    let model = ckpt.model()?;
    let summary = model.backbone_summary();
    Ok(json!({
        "model_config": ckpt.model_config,
        "backbone": {
            "kind": summary.kind,
            "attention_heads": summary.attention_heads,
            "blocks": summary.blocks,
            "feature_dim": summary.feature_dim,
            "image_size": summary.image_size,
        },
        "parameters": {
            "all": model.parameter_count(Scope::All),
            "head": model.parameter_count(Scope::HeadOnly),
            "backbone": model.parameter_count(Scope::BackboneOnly),
        },
        "training": {
            "train_config": ckpt.train_config,
            "epoch": ckpt.epoch,
            "best_val_combined_mae": ckpt.best_val_combined_mae,
            "epochs_without_improvement": ckpt.epochs_without_improvement,
            "optimizer_steps": ckpt.optimizer_steps,
            "epochs_logged": ckpt.history.len(),
        },
    }))
}

fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let path: &Path = required(&args.checkpoint, "checkpoint")?;
    let ckpt = load_checkpoint(path)?;
    write_out(out, &(to_json(&describe_checkpoint(&ckpt)?) + "\n"))
}

/// Parses a report previously written by `evaluate --format json` or
/// `train` (`report.json`).
pub fn parse_report(text: &str) -> Result<EvalReport> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}
