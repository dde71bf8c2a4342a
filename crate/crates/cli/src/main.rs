use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use efc_core::evaluation::{cross_validate, unknown_attack_experiment};
use efc_core::model_io::{self, RunManifest};
use efc_core::schema::{builtin_schema, DatasetProfile};
use efc_core::synthesis::{discretized_to_raw, generate, generate_continuous, SyntheticSpec};
use efc_core::{
    CvConfig, DatasetSchema, Discretizer, EfcError, IngestOptions, MultiClassModel, RawFlowTable,
    TrainingParams,
};

#[derive(Parser)]
#[command(name = "efc", version, about = "Energy-based network flow classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one energy model per class and save them to a model file.
    Train(TrainArgs),
    /// Classify flows with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation.
    Evaluate(EvaluateArgs),
    /// Withhold classes from training and report where their flows land.
    Unknown(UnknownArgs),
    /// Sample a labeled synthetic flow table from a TOML spec.
    Synth(SynthArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Flow CSV file(s); several files are stacked in order.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Built-in profile (cidds001, cicids2017) or a schema sidecar TOML.
    #[arg(long)]
    schema: String,
    /// Replace NaN/+inf cells with the column maximum and -inf with the minimum.
    #[arg(long)]
    clip_nonfinite: bool,
    /// Relabel before use, e.g. `Web Attack=Web Attack - XSS,Web Attack - Sql Injection`.
    #[arg(long = "merge-labels", value_name = "TARGET=SOURCES")]
    merge_labels: Vec<String>,
}

#[derive(Args)]
struct ModelArgs {
    /// Alphabet size Q.
    #[arg(long, default_value_t = 30)]
    bins: usize,
    /// Pseudocount weight.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Undersample every class to at most this many rows.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input cells already hold symbols 1..=bins (e.g. `efc synth` output).
    #[arg(long)]
    symbols: bool,
}

impl ModelArgs {
    fn params(&self) -> TrainingParams {
        TrainingParams {
            q: self.bins,
            alpha: self.alpha,
            cap: self.cap,
            seed: self.seed,
            discretizer: if self.symbols {
                Discretizer::Identity
            } else {
                Discretizer::Quantile
            },
        }
    }

    fn record(&self, manifest: &mut RunManifest) {
        manifest.flag("bins", self.bins);
        manifest.flag("alpha", self.alpha);
        manifest.flag("cap", self.cap.map_or("none".into(), |c| c.to_string()));
        manifest.flag("seed", self.seed);
        manifest.flag("symbols", self.symbols);
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the model file.
    #[arg(long = "model")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Profile or sidecar; defaults to the model's features with an optional `label` column.
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    clip_nonfinite: bool,
    /// Append one energy column per class.
    #[arg(long)]
    emit_energies: bool,
    /// Predictions CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when the mean macro F1 falls below this value.
    #[arg(long)]
    min_macro_f1: Option<f64>,
}

#[derive(Args)]
struct UnknownArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Label of normal traffic.
    #[arg(long)]
    benign: String,
    /// Class to withhold (repeatable); every non-benign class in turn when omitted.
    #[arg(long)]
    withheld: Vec<String>,
    /// JSON report path (one entry per withheld class).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML spec: q, seed, [[classes]] with label/rows/features, optional [pair].
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Emit reals in [s-1, s) instead of the symbols themselves.
    #[arg(long)]
    continuous: bool,
}

/// Returned when a run completed but missed a requested bound.
#[derive(Debug)]
struct MetricFailure(String);

impl std::fmt::Display for MetricFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for MetricFailure {}

fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<EfcError>() {
            return if e.is_config_or_io() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Unknown(a) => unknown(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !message.contains(&text) {
                    message = format!("{message}: {text}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn resolve_schema(spec: &str) -> Result<DatasetSchema, EfcError> {
    match DatasetProfile::parse(spec) {
        Ok(profile) => Ok(builtin_schema(profile)),
        Err(unknown) => {
            let path = Path::new(spec);
            if path.exists() {
                DatasetSchema::from_sidecar(path)
            } else {
                Err(unknown)
            }
        }
    }
}

fn parse_merge(rule: &str) -> Result<(String, Vec<String>)> {
    let (target, sources) = rule
        .split_once('=')
        .ok_or_else(|| anyhow!("--merge-labels expects TARGET=SOURCE[,SOURCE...], got `{rule}`"))?;
    let sources: Vec<String> = sources.split(',').map(|s| s.trim().to_string()).collect();
    if target.trim().is_empty() || sources.iter().any(String::is_empty) {
        bail!("--merge-labels rule `{rule}` has an empty label");
    }
    Ok((target.trim().to_string(), sources))
}

fn read_tables(
    paths: &[PathBuf],
    schema: &DatasetSchema,
    options: IngestOptions,
    manifest: &mut RunManifest,
) -> Result<RawFlowTable> {
    let mut tables = Vec::with_capacity(paths.len());
    for path in paths {
        let (table, report) = RawFlowTable::read_csv_path(path, schema, options)?;
        manifest.add_input(path)?;
        for (column, count) in &report.clipped {
            manifest.notes.push(format!(
                "{}: clipped {count} non-finite cells in `{column}`",
                path.display()
            ));
        }
        tables.push(table);
    }
    Ok(RawFlowTable::concat(&tables)?)
}

fn load_labeled(args: &InputArgs, manifest: &mut RunManifest) -> Result<RawFlowTable> {
    let schema = resolve_schema(&args.schema)?;
    manifest.flag("schema", &args.schema);
    manifest.flag("clip-nonfinite", args.clip_nonfinite);
    let options = IngestOptions {
        clip_nonfinite: args.clip_nonfinite,
        require_label: true,
    };
    let mut table = read_tables(&args.input, &schema, options, manifest)?;
    for rule in &args.merge_labels {
        let (target, sources) = parse_merge(rule)?;
        table = table.merge_labels(&sources, &target)?;
        manifest.flag("merge-labels", rule);
    }
    Ok(table)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_manifest(manifest: &RunManifest, output: &Path) -> Result<()> {
    let path = sibling(output, ".manifest.json");
    manifest.write(&path)?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let params = args.model.params();
    let mut manifest = RunManifest::new("train", params.seed);
    args.model.record(&mut manifest);
    let table = load_labeled(&args.input, &mut manifest)?;

    let start = Instant::now();
    let model = MultiClassModel::train(&table, params)?;
    let elapsed = start.elapsed();
    model_io::save(&model, &args.out)?;
    write_manifest(&manifest, &args.out)?;

    println!("{:<28} {:>9} {:>14}", "class", "n", "threshold");
    for class in &model.classes {
        println!(
            "{:<28} {:>9} {:>14.6}",
            class.label, class.sample_count, class.threshold
        );
    }
    println!(
        "trained {} classes on {} flows (m={}, Q={}) in {elapsed:.2?}; wrote {}",
        model.classes.len(),
        table.n(),
        model.m(),
        model.q(),
        args.out.display()
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = model_io::load(&args.model)?;
    let schema = match &args.schema {
        Some(s) => resolve_schema(s)?,
        None => DatasetSchema::new(
            model
                .preprocessor
                .features
                .iter()
                .map(|f| (f.name.clone(), f.encoder.kind())),
            "label",
            Vec::new(),
        )?,
    };
    let mut manifest = RunManifest::new("predict", model.params.seed);
    manifest.add_input(&args.model)?;
    manifest.flag("emit-energies", args.emit_energies);
    let options = IngestOptions {
        clip_nonfinite: args.clip_nonfinite,
        require_label: false,
    };
    let table = read_tables(&args.input, &schema, options, &mut manifest)?;
    let verdicts = model.predict(&table)?;

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| EfcError::Io {
            path: path.clone(),
            source: e,
        })?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut out = csv::Writer::from_writer(sink);
    let truth = table.labels.as_ref();
    let mut header = vec!["row".to_string()];
    if truth.is_some() {
        header.push("label".into());
    }
    header.extend(["verdict", "min_energy", "argmin_class"].map(String::from));
    if args.emit_energies {
        header.extend(model.labels().iter().map(|l| format!("energy:{l}")));
    }
    out.write_record(&header)?;
    for (row, ev) in verdicts.iter().enumerate() {
        let mut record = vec![row.to_string()];
        if let Some(t) = truth {
            record.push(t.get(row).to_string());
        }
        record.push(model.verdict_label(ev.verdict).value);
        record.push(ev.min_energy().to_string());
        record.push(model.classes[ev.argmin].label.clone());
        if args.emit_energies {
            record.extend(ev.energies.iter().map(f64::to_string));
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    if let Some(path) = &args.out {
        write_manifest(&manifest, path)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(value)?;
    std::fs::write(path, json).map_err(|e| EfcError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let config = CvConfig {
        folds: args.folds,
        params: args.model.params(),
    };
    let mut manifest = RunManifest::new("evaluate", config.params.seed);
    args.model.record(&mut manifest);
    manifest.flag("folds", args.folds);
    let table = load_labeled(&args.input, &mut manifest)?;
    let report = cross_validate(&table, &config)?;
    print!("{}", report.render());
    if let Some(path) = &args.out {
        write_json(&report, path)?;
        write_manifest(&manifest, path)?;
    }
    if let Some(min) = args.min_macro_f1 {
        if report.macro_f1.mean < min {
            return Err(MetricFailure(format!(
                "macro F1 {:.4} is below the required {min}",
                report.macro_f1.mean
            ))
            .into());
        }
    }
    Ok(())
}

fn unknown(args: UnknownArgs) -> Result<()> {
    let config = CvConfig {
        folds: args.folds,
        params: args.model.params(),
    };
    let mut manifest = RunManifest::new("unknown", config.params.seed);
    args.model.record(&mut manifest);
    manifest.flag("folds", args.folds);
    manifest.flag("benign", &args.benign);
    let table = load_labeled(&args.input, &mut manifest)?;
    let withheld: Vec<String> = if args.withheld.is_empty() {
        table
            .label_column()?
            .counts()
            .into_iter()
            .map(|(l, _)| l)
            .filter(|l| *l != args.benign)
            .collect()
    } else {
        args.withheld.clone()
    };
    let mut reports = Vec::with_capacity(withheld.len());
    for label in &withheld {
        manifest.flag("withheld", label);
        let report = unknown_attack_experiment(&table, label, &args.benign, &config)?;
        print!("{}", report.render());
        reports.push(report);
    }
    if let Some(path) = &args.out {
        write_json(&reports, path)?;
        write_manifest(&manifest, path)?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec::from_toml_path(&args.spec)?;
    let table = if args.continuous {
        generate_continuous(&spec)?
    } else {
        discretized_to_raw(&generate(&spec)?)?
    };
    let file = std::fs::File::create(&args.out).map_err(|e| EfcError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    table
        .write_csv(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", args.out.display()))?;
    let sidecar = args.out.with_extension("schema.toml");
    std::fs::write(&sidecar, table.schema.to_sidecar_string()).map_err(|e| EfcError::Io {
        path: sidecar.clone(),
        source: e,
    })?;

    let mut manifest = RunManifest::new("synth", spec.seed);
    manifest.add_input(&args.spec)?;
    manifest.flag("continuous", args.continuous);
    write_manifest(&manifest, &args.out)?;
    println!(
        "wrote {} rows ({} classes, m={}) to {}; schema in {}",
        table.n(),
        spec.classes.len(),
        spec.m(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}
