use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use credit_stack::blend::{self, EnsembleSpec};
use credit_stack::cv_stack::{self, FoldPlan};
use credit_stack::features::{self, AggregationSpec, Encoding, FeatureMatrix, Vocabulary};
use credit_stack::gbdt::{self, BoostedModel, Holdout, ImportanceKind, TrainConfig};
use credit_stack::pipeline::{self, PipelineConfig};
use credit_stack::{ingest, io, metric, report, synth, Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "credit-stack", version, about = "Credit-default stacking pipeline")]
struct Cli {
    /// Override the seed of the config in use.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic statement dataset.
    Synth(SynthArgs),
    /// Round, mask outliers and compact a statement CSV.
    Prep(PrepArgs),
    /// Aggregate statements into a customer feature matrix.
    Features(FeaturesArgs),
    /// Train one boosted model.
    Train(TrainArgs),
    /// Out-of-fold base model plus meta model.
    Stack(StackArgs),
    /// Search blend weights over member predictions.
    Blend(BlendArgs),
    /// Score predictions against labels.
    Eval(EvalArgs),
    /// Importance report over fold models.
    Importance(ImportanceArgs),
    /// Run the whole pipeline from one config file.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
    /// Also write the matching schema.
    #[arg(long)]
    out_schema: Option<PathBuf>,
}

#[derive(Args)]
struct PrepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    precision: f64,
    #[arg(long)]
    out: PathBuf,
    /// Per-column masked cell counts as JSON.
    #[arg(long)]
    mask_report: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Statement CSV, usually the output of `prep`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Aggregation spec JSON; all statistics when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Keep only the last k statements per customer.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    encoding: Option<Encoding>,
    /// Vocabulary fitted on the training split.
    #[arg(long)]
    vocab_in: Option<PathBuf>,
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
    /// Holdout matrix for early stopping.
    #[arg(long, requires = "valid_labels")]
    valid_features: Option<PathBuf>,
    #[arg(long, requires = "valid_features")]
    valid_labels: Option<PathBuf>,
}

#[derive(Args)]
struct StackArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    base_config: Option<PathBuf>,
    #[arg(long)]
    meta_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BlendArgs {
    /// Member prediction CSV; repeat per member.
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
    /// Write the blended predictions here.
    #[arg(long)]
    out_pred: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    /// Fold model JSON; repeat per fold.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long, default_value = "average_gain")]
    kind: ImportanceKind,
    #[arg(long, default_value_t = 20)]
    top_n: usize,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Training => 4,
            })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth_cmd(a, cli.seed),
        Command::Prep(a) => prep_cmd(a),
        Command::Features(a) => features_cmd(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Stack(a) => stack_cmd(a, cli.seed),
        Command::Blend(a) => blend_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Importance(a) => importance_cmd(a),
        Command::Run(a) => run_cmd(a, cli.seed),
    }
}

fn config_or_default<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => io::read_json(p).map_err(|e| match e {
            Error::Format { path, message } => Error::Config(format!("{path}: {message}")),
            other => other,
        }),
        None => Ok(T::default()),
    }
}

fn synth_cmd(a: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: synth::SynthConfig = config_or_default(a.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = synth::generate(&cfg)?;
    for p in [Some(&a.out_data), Some(&a.out_labels), a.out_schema.as_ref()].into_iter().flatten() {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    data.write_files(&a.out_data, &a.out_labels)?;
    if let Some(p) = &a.out_schema {
        data.write_schema(p)?;
    }
    log::info!(
        "{} customers, {} positives, {} statements",
        data.customer_ids.len(),
        data.labels.iter().filter(|&&y| y == 1).count(),
        data.statement_counts.iter().sum::<usize>()
    );
    Ok(())
}

fn prep_cmd(a: &PrepArgs) -> Result<()> {
    let schema = ingest::read_schema(&a.schema)?;
    let table = ingest::parse_csv(&a.data, &schema)?;
    let (table, mask) = ingest::clean(table, a.precision)?;
    table.write_csv_file(&a.out)?;
    if let Some(p) = &a.mask_report {
        io::write_json(p, &mask)?;
    }
    log::info!(
        "{} customers, {} statements, {} cells masked",
        table.n_customers(),
        table.n_rows(),
        mask.total()
    );
    Ok(())
}

fn features_cmd(a: &FeaturesArgs) -> Result<()> {
    let mut spec: AggregationSpec = config_or_default(a.spec.as_deref())?;
    if a.window.is_some() {
        spec.recent_window = a.window;
    }
    if a.encoding.is_some() {
        spec.encoding = a.encoding;
    }
    let schema = ingest::read_schema(&a.schema)?;
    let table = ingest::parse_csv(&a.data, &schema)?;
    let vocab: Vocabulary = match &a.vocab_in {
        Some(p) => io::read_json(p)?,
        None => match spec.recent_window.and_then(std::num::NonZeroUsize::new) {
            Some(k) => Vocabulary::fit(&features::select_recent_window(&table, k), &spec)?,
            None => Vocabulary::fit(&table, &spec)?,
        },
    };
    let matrix = features::transform(&table, &spec, Some(&vocab))?;
    matrix.save(&a.out)?;
    if let Some(p) = &a.vocab_out {
        io::write_json(p, &vocab)?;
    }
    log::info!("{} rows x {} columns", matrix.n_rows(), matrix.n_cols());
    Ok(())
}

fn labels_for(matrix: &FeatureMatrix, path: &Path) -> Result<Vec<u8>> {
    io::read_labels(path)?.aligned(matrix.customer_ids())
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: TrainConfig = config_or_default(a.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let matrix = FeatureMatrix::load(&a.features)?;
    let labels = labels_for(&matrix, &a.labels)?;
    let valid = match (&a.valid_features, &a.valid_labels) {
        (Some(f), Some(l)) => {
            let m = FeatureMatrix::load(f)?;
            let y = labels_for(&m, l)?;
            Some((m, y))
        }
        _ => None,
    };
    let holdout = valid.as_ref().map(|(m, y)| Holdout { matrix: m, labels: y });
    let (model, history) = gbdt::train_with_history(&matrix, &labels, &cfg, holdout)?;
    model.save(&a.model_out)?;
    log::info!(
        "{} trees, final training log-loss {:.6}",
        history.best_rounds,
        history.train_log_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn stack_cmd(a: &StackArgs, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(42);
    let base: TrainConfig = config_or_default(a.base_config.as_deref())?;
    let meta: TrainConfig = config_or_default(a.meta_config.as_deref())?;
    let matrix = FeatureMatrix::load(&a.features)?;
    let labels = labels_for(&matrix, &a.labels)?;
    let plan: FoldPlan = cv_stack::make_folds_keyed(matrix.customer_ids(), &labels, a.folds, seed)?;

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let out = |name: &str| a.out.join(name);
    plan.write_csv(out("folds.csv"))?;

    let seeded = |c: TrainConfig| TrainConfig {
        seed: seed.wrapping_add(c.seed),
        ..c
    };
    let base_fit = cv_stack::train_oof(&matrix, &labels, &plan, &seeded(base))?;
    let ids = matrix.customer_ids();
    io::write_predictions(out("base_oof.csv"), ids, &base_fit.oof.predictions)?;
    std::fs::create_dir_all(out("base")).map_err(|e| Error::io(out("base"), e))?;
    for fm in &base_fit.models {
        fm.model.save(out(&format!("base/fold_{}.json", fm.fold)))?;
    }

    let augmented = cv_stack::append_meta(&matrix, &[&base_fit.oof.predictions])?;
    augmented.save(out("augmented.csfm"))?;
    let meta_fit = cv_stack::train_meta(&augmented, &labels, &plan, &seeded(meta))?;
    io::write_predictions(out("meta_oof.csv"), ids, &meta_fit.oof.predictions)?;
    std::fs::create_dir_all(out("meta")).map_err(|e| Error::io(out("meta"), e))?;
    for fm in &meta_fit.models {
        fm.model.save(out(&format!("meta/fold_{}.json", fm.fold)))?;
    }

    let base_report = metric::amex_metric(&labels, &base_fit.oof.predictions)?;
    let meta_report = metric::amex_metric(&labels, &meta_fit.oof.predictions)?;
    io::write_json(
        out("metrics.json"),
        &serde_json::json!({ "base_oof": base_report, "meta_oof": meta_report }),
    )?;
    log::info!("OOF M: base {:.5}, meta {:.5}", base_report.score, meta_report.score);
    Ok(())
}

fn blend_cmd(a: &BlendArgs) -> Result<()> {
    let labels = io::read_labels(&a.labels)?;
    let files = a
        .preds
        .iter()
        .map(io::read_predictions)
        .collect::<Result<Vec<_>>>()?;
    let ids = &files[0].customer_ids;
    let y = labels.aligned(ids)?;
    let columns = files.iter().map(|f| f.aligned(ids)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let search = blend::optimize_weights(&refs, &y, a.step)?;
    let names = a
        .preds
        .iter()
        .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
        .collect();
    let spec = EnsembleSpec::new(names, search.weights)?;
    io::write_json(&a.out, &spec)?;
    if let Some(p) = &a.out_pred {
        io::write_predictions(p, ids, &blend::blend(&refs, &spec.weights)?)?;
    }
    log::info!("blend M {:.6} after {} evaluations", search.score, search.evaluated);
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let preds = io::read_predictions(&a.pred)?;
    let labels = io::read_labels(&a.labels)?.aligned(&preds.customer_ids)?;
    let report = metric::amex_metric(&labels, &preds.predictions)?;
    match &a.report {
        Some(p) => io::write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?),
    }
    Ok(())
}

fn importance_cmd(a: &ImportanceArgs) -> Result<()> {
    let models = a.models.iter().map(BoostedModel::load).collect::<Result<Vec<_>>>()?;
    let rep = report::build_importance_report(&models, a.kind)?;
    if let Some(p) = &a.out_json {
        rep.save_json(p)?;
    }
    if let Some(p) = &a.out_csv {
        std::fs::write(p, rep.summary_csv()).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &a.out_svg {
        std::fs::write(p, report::render_box_plot(&rep, a.top_n)?).map_err(|e| Error::io(p, e))?;
    }
    for s in rep.summary.iter().take(a.top_n) {
        println!("{}\t{}", s.column, s.median);
    }
    Ok(())
}

fn run_cmd(a: &RunArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let summary = pipeline::run_pipeline(&cfg)?;
    for m in &summary.members {
        log::info!("{}: OOF M {:.5}, holdout M {:.5}", m.name, m.oof.score, m.holdout.score);
    }
    log::info!(
        "ensemble: OOF M {:.5}, holdout M {:.5}",
        summary.ensemble.oof.score,
        summary.ensemble.holdout.score
    );
    Ok(())
}
