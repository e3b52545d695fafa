//! `langpanel` — extract interview feature panels and run the modeling
//! pipeline (stepwise selection, LOOCV regression, LOOCV classification,
//! synthetic corpus generation).
//!
//! Exit codes: 0 success, 1 data/processing failure, 2 usage error.
//! Analysis commands are deterministic; randomness lives only in `synth`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use langpanel::corpus::load_corpus;
use langpanel::embed::{load_embeddings, load_external_vectors, FrequencyTable};
use langpanel::io_util::write_atomic;
use langpanel::learn::{
    confusion, logistic_fit, loocv_classify, loocv_regress, metrics_regress, nb_fit, roc_auc,
    stepwise_select, ClassificationReport, ClassifierKind, InputDigest, Provenance,
    RegressionReport, SelectionReport, SubjectPrediction, SubjectScore, DEFAULT_MIN_IMPROVEMENT,
    LOGISTIC_DEFAULT_RIDGE,
};
use langpanel::pipeline::{
    canonical_feature_names, extract_corpus, read_table, task_labels, to_dataset, write_table,
    EncoderKind, ExtractConfig, ExtractResources, FeaturePanel, Task,
};
use langpanel::syntax::{load_tree_sidecar, TreeAggregate};
use langpanel::synth::{default_profiles, generate_with, load_profiles, GenerateOptions};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("extraction failed for {0} subject(s)")]
    SubjectsFailed(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] langpanel::corpus::CorpusError),
    #[error(transparent)]
    Embed(#[from] langpanel::embed::EmbedError),
    #[error(transparent)]
    Syntax(#[from] langpanel::syntax::SyntaxError),
    #[error(transparent)]
    Pipeline(#[from] langpanel::pipeline::PipelineError),
    #[error(transparent)]
    Learn(#[from] langpanel::learn::LearnError),
    #[error(transparent)]
    Synth(#[from] langpanel::synth::SynthError),
}

#[derive(Parser)]
#[command(name = "langpanel", version, about = "Speech-coherence feature panels and models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-subject feature panels from a transcript corpus.
    Extract(ExtractArgs),
    /// Greedy forward feature selection against a continuous target.
    Select(SelectArgs),
    /// LOOCV linear regression over a selected feature subset.
    Regress(RegressArgs),
    /// LOOCV binary classification over a selected feature subset.
    Classify(ClassifyArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderArg {
    Bow,
    Sif,
    Ext,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> EncoderKind {
        match e {
            EncoderArg::Bow => EncoderKind::Bow,
            EncoderArg::Sif => EncoderKind::Sif,
            EncoderArg::Ext => EncoderKind::Ext,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregateArg {
    Mean,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    ClinicalVsControl,
    SzVsBipolar,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::ClinicalVsControl => Task::ClinicalVsControl,
            TaskArg::SzVsBipolar => Task::SzVsBipolar,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Lr,
    Nb,
}

#[derive(Args)]
struct ExtractArgs {
    /// Directory of transcript JSON files.
    #[arg(long)]
    corpus: PathBuf,
    /// Word-vector file: `<vocab> <dim>` header then `word v1..vd` lines.
    #[arg(long)]
    embeddings: PathBuf,
    /// Word-frequency file (`word count` lines); derived from the corpus if absent.
    #[arg(long)]
    freq: Option<PathBuf>,
    /// Directory of per-subject `<subject_id>.trees` sidecar files.
    #[arg(long)]
    trees: Option<PathBuf>,
    /// Turn encoders contributing coherence features.
    #[arg(long, value_delimiter = ',', default_values = ["bow", "sif", "ext"])]
    encoders: Vec<EncoderArg>,
    /// Precomputed external turn vectors (JSON array).
    #[arg(long)]
    ext_vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    mattr_window: usize,
    /// SIF weighting parameter a.
    #[arg(long, default_value_t = 1e-3)]
    sif_a: f64,
    #[arg(long, value_enum, default_value_t = AggregateArg::Mean)]
    tree_aggregate: AggregateArg,
    /// Append a plain type/token ratio column to the complexity block.
    #[arg(long)]
    include_ttr: bool,
    /// Write the table even when some subjects fail (still exits nonzero).
    #[arg(long)]
    keep_partial: bool,
    /// Dump every per-scene similarity-score distribution to this directory.
    #[arg(long)]
    dump_coherence: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Feature table CSV produced by `extract`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "sspa_overall", value_parser = ["sspa_overall"])]
    target: String,
    #[arg(long)]
    max_features: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_IMPROVEMENT)]
    min_improvement: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    features: PathBuf,
    /// Selection report JSON produced by `select`.
    #[arg(long)]
    selection: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    features: PathBuf,
    /// Selection report JSON produced by `select`.
    #[arg(long)]
    selection: PathBuf,
    #[arg(long, default_value = "group", value_parser = ["group"])]
    label: String,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Use only insertion ranks 1..=N of the selection.
    #[arg(long)]
    top: Option<usize>,
    /// Re-run feature selection inside every training fold instead of
    /// reusing the one precomputed selection (slower, avoids optimism).
    #[arg(long)]
    nested: bool,
    /// Ridge penalty for the logistic model.
    #[arg(long, default_value_t = LOGISTIC_DEFAULT_RIDGE)]
    ridge: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Group profile JSON array; built-in two-group default when absent.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Subjects per group.
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Word-vector dimension.
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("LANGPANEL_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: LANGPANEL_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(args) => cmd_extract(args),
        Command::Select(args) => cmd_select(args),
        Command::Regress(args) => cmd_regress(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// SHA-256 of a file, or of a directory's sorted (path, contents) stream.
fn digest_path(path: &Path) -> Result<InputDigest, CliError> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = Vec::new();
        let mut stack = vec![path.to_path_buf()];
        while let Some(dir) = stack.pop() {
            let entries = std::fs::read_dir(&dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            for entry in entries {
                let p = entry
                    .map_err(|source| CliError::Io {
                        path: dir.clone(),
                        source,
                    })?
                    .path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p);
                }
            }
        }
        files.sort();
        for file in files {
            let rel = file.strip_prefix(path).unwrap_or(&file);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            let bytes = std::fs::read(&file).map_err(|source| CliError::Io {
                path: file.clone(),
                source,
            })?;
            hasher.update(&bytes);
        }
    } else {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256,
    })
}

fn provenance(inputs: &[&Path]) -> Result<Provenance, CliError> {
    Ok(Provenance {
        tool: "langpanel".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        args: std::env::args().skip(1).collect(),
        inputs: inputs
            .iter()
            .map(|p| digest_path(p))
            .collect::<Result<_, _>>()?,
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("report serialization");
    body.push('\n');
    write_atomic(path, body.as_bytes()).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_selection(path: &Path) -> Result<SelectionReport, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Data(format!("{}: not a selection report: {e}", path.display())))
}

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let mut encoders: Vec<EncoderKind> = Vec::new();
    for e in &args.encoders {
        let kind = EncoderKind::from(*e);
        if !encoders.contains(&kind) {
            encoders.push(kind);
        }
    }
    if encoders.contains(&EncoderKind::Ext) && args.ext_vectors.is_none() {
        return Err(CliError::Usage(
            "--encoders ext requires --ext-vectors".to_string(),
        ));
    }

    let transcripts = load_corpus(&args.corpus)?;
    if transcripts.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no transcripts found",
            args.corpus.display()
        )));
    }
    let (store, stats) = load_embeddings(&args.embeddings)?;
    if stats.duplicate_words > 0 {
        eprintln!(
            "warning: {} duplicate word(s) in {}; last definition wins",
            stats.duplicate_words,
            args.embeddings.display()
        );
    }
    let freq = match &args.freq {
        Some(path) => FrequencyTable::load(path)?,
        None => FrequencyTable::from_corpus(&transcripts)?,
    };
    let external = match &args.ext_vectors {
        Some(path) => Some(load_external_vectors(path)?),
        None => None,
    };
    let mut trees = std::collections::HashMap::new();
    if let Some(tree_dir) = &args.trees {
        for t in &transcripts {
            let path = tree_dir.join(format!("{}.trees", t.subject_id));
            if path.exists() {
                trees.insert(t.subject_id.clone(), load_tree_sidecar(&path)?);
            }
        }
    }

    let config = ExtractConfig {
        encoders,
        sif_a: args.sif_a,
        mattr_window: args.mattr_window,
        tree_aggregate: match args.tree_aggregate {
            AggregateArg::Mean => TreeAggregate::Mean,
            AggregateArg::Max => TreeAggregate::Max,
        },
        include_ttr: args.include_ttr,
        ..ExtractConfig::default()
    };
    let resources = ExtractResources {
        store: &store,
        freq: &freq,
        external: external.as_ref(),
        trees: &trees,
    };
    let outcome = extract_corpus(&transcripts, &resources, &config)?;

    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    for (subject_id, message) in &outcome.failures {
        eprintln!("failed: {subject_id}: {message}");
    }

    if let Some(dump_dir) = &args.dump_coherence {
        for dist in &outcome.distributions {
            let name = format!(
                "{}_scene{}_{}.json",
                dist.subject_id, dist.scene_id, dist.encoder_id
            );
            write_json(dist, &dump_dir.join(name))?;
        }
    }

    let write_output = outcome.failures.is_empty() || args.keep_partial;
    if write_output && !outcome.panels.is_empty() {
        write_table(&outcome.panels, &args.out)?;
        println!(
            "wrote {} subject(s) x {} feature(s) to {}",
            outcome.panels.len(),
            canonical_feature_names(&config).len(),
            args.out.display()
        );
    }
    // --keep-partial downgrades per-subject failures to warnings as long as
    // at least one subject survived to be written.
    if !outcome.failures.is_empty() && (!args.keep_partial || outcome.panels.is_empty()) {
        return Err(CliError::SubjectsFailed(outcome.failures.len()));
    }
    Ok(())
}

/// Splits panels into (usable, warnings) by presence of the target score.
fn with_target(panels: Vec<FeaturePanel>) -> (Vec<FeaturePanel>, Vec<String>) {
    let mut kept = Vec::with_capacity(panels.len());
    let mut warnings = Vec::new();
    for panel in panels {
        if panel.sspa_overall.is_some() {
            kept.push(panel);
        } else {
            warnings.push(format!(
                "subject {}: no sspa_overall score; excluded",
                panel.subject_id
            ));
        }
    }
    (kept, warnings)
}

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    let panels = read_table(&args.features)?;
    let (kept, warnings) = with_target(panels);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if kept.len() < 3 {
        return Err(CliError::Data(format!(
            "stepwise selection needs at least 3 subjects with {}, got {}",
            args.target,
            kept.len()
        )));
    }
    let ds = to_dataset(&kept)?;
    let y: Vec<f64> = kept.iter().map(|p| p.sspa_overall.expect("filtered")).collect();
    let result = stepwise_select(&ds, &y, args.max_features, args.min_improvement)?;
    let report = SelectionReport {
        provenance: provenance(&[&args.features])?,
        baseline_rmse: result.baseline_rmse,
        steps: result.steps,
        warnings,
    };
    write_json(&report, &args.out)?;
    println!(
        "selected {} feature(s) from {} subject(s); wrote {}",
        report.steps.len(),
        kept.len(),
        args.out.display()
    );
    Ok(())
}

/// Selection-file feature names in rank order, optionally truncated, checked
/// against the table's columns.
fn selected_names(
    selection: &SelectionReport,
    top: Option<usize>,
    panels: &[FeaturePanel],
) -> Result<Vec<String>, CliError> {
    let mut names: Vec<String> = selection.steps.iter().map(|s| s.feature.clone()).collect();
    if names.is_empty() {
        return Err(CliError::Data("selection report contains no features".to_string()));
    }
    if let Some(k) = top {
        if k == 0 || k > names.len() {
            return Err(CliError::Usage(format!(
                "--top {k} outside the selection's 1..={} ranks",
                names.len()
            )));
        }
        names.truncate(k);
    }
    let available: HashSet<&str> = panels
        .first()
        .map(|p| p.names().into_iter().collect())
        .unwrap_or_default();
    let missing: Vec<&String> = names.iter().filter(|n| !available.contains(n.as_str())).collect();
    if !missing.is_empty() {
        let listing = missing
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        return Err(CliError::Data(format!(
            "selection features missing from the table: {listing}"
        )));
    }
    Ok(names)
}

fn cmd_regress(args: RegressArgs) -> Result<(), CliError> {
    let panels = read_table(&args.features)?;
    let selection = read_selection(&args.selection)?;
    let names = selected_names(&selection, None, &panels)?;
    let (kept, warnings) = with_target(panels);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if kept.is_empty() {
        return Err(CliError::Data("no subjects with sspa_overall".to_string()));
    }
    let ds = to_dataset(&kept)?.select_features(&names)?;
    let y: Vec<f64> = kept.iter().map(|p| p.sspa_overall.expect("filtered")).collect();
    let predictions = loocv_regress(&ds.x, &y)?;
    let metrics = metrics_regress(&y, &predictions)?;
    let per_subject = kept
        .iter()
        .zip(&predictions)
        .map(|(p, &pred)| SubjectPrediction {
            subject_id: p.subject_id.clone(),
            actual: p.sspa_overall.expect("filtered"),
            predicted: pred,
        })
        .collect();
    let report = RegressionReport {
        provenance: provenance(&[&args.features, &args.selection])?,
        features_used: names,
        metrics,
        per_subject,
        warnings,
    };
    write_json(&report, &args.out)?;
    println!(
        "r={:.4} mae={:.4} rmse={:.4} over {} subject(s); wrote {}",
        report.metrics.r,
        report.metrics.mae,
        report.metrics.rmse,
        kept.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let panels = read_table(&args.features)?;
    let selection = read_selection(&args.selection)?;
    let names = selected_names(&selection, args.top, &panels)?;
    let task = Task::from(args.task);
    let (kept_idx, labels) = task_labels(&panels, task)?;
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(CliError::Data(format!(
            "task {} has an empty class in this table",
            task.as_str()
        )));
    }
    let kept: Vec<FeaturePanel> = kept_idx.iter().map(|&i| panels[i].clone()).collect();
    let model_name = match args.model {
        ModelArg::Lr => "logistic",
        ModelArg::Nb => "naive_bayes",
    };

    let (scores, predicted, mut warnings) = if args.nested {
        nested_classify(&args, &kept, &labels, &selection)?
    } else {
        let ds = to_dataset(&kept)?.select_features(&names)?;
        let kind = match args.model {
            ModelArg::Lr => ClassifierKind::Logistic,
            ModelArg::Nb => ClassifierKind::NaiveBayes,
        };
        let out = loocv_classify(&ds.x, &labels, kind, args.ridge)?;
        (out.scores, out.predicted, out.warnings)
    };

    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let matrix = confusion(&labels, &predicted)?;
    let (roc, auc) = roc_auc(&labels, &scores)?;
    let per_subject = kept
        .iter()
        .enumerate()
        .map(|(i, p)| SubjectScore {
            subject_id: p.subject_id.clone(),
            label: labels[i],
            score: scores[i],
            predicted: predicted[i],
        })
        .collect();
    if args.nested {
        warnings.insert(
            0,
            "nested mode: features re-selected within each training fold".to_string(),
        );
    }
    let report = ClassificationReport {
        provenance: provenance(&[&args.features, &args.selection])?,
        task: task.as_str().to_string(),
        model: model_name.to_string(),
        features_used: names,
        confusion: matrix,
        roc,
        auc,
        per_subject,
        warnings,
    };
    write_json(&report, &args.out)?;
    println!(
        "task={} model={} auc={:.4} over {} subject(s); wrote {}",
        report.task,
        report.model,
        report.auc,
        kept.len(),
        args.out.display()
    );
    Ok(())
}

/// Honest nested LOOCV: re-run stepwise selection and model fitting on every
/// training fold. The selection file only sets the per-fold feature budget.
fn nested_classify(
    args: &ClassifyArgs,
    kept: &[FeaturePanel],
    labels: &[u8],
    selection: &SelectionReport,
) -> Result<(Vec<f64>, Vec<u8>, Vec<String>), CliError> {
    let budget = match args.top {
        Some(k) => k,
        None => selection.steps.len(),
    };
    for panel in kept {
        if panel.sspa_overall.is_none() {
            return Err(CliError::Data(format!(
                "nested mode needs sspa_overall for every subject; {} lacks it",
                panel.subject_id
            )));
        }
    }
    let full = to_dataset(kept)?;
    let n = kept.len();
    let mut scores = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for i in 0..n {
        let train: Vec<FeaturePanel> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        let train_labels: Vec<u8> = labels
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &l)| l)
            .collect();
        let ds = to_dataset(&train)?;
        let y: Vec<f64> = train.iter().map(|p| p.sspa_overall.expect("checked")).collect();
        let fold_selection = stepwise_select(&ds, &y, budget, DEFAULT_MIN_IMPROVEMENT)?;
        let names = fold_selection.selected_names();
        if names.is_empty() {
            return Err(CliError::Data(format!(
                "fold {i}: nested selection chose no features"
            )));
        }
        let x_train = ds.select_features(&names)?.x;
        let test_row: Vec<f64> = {
            let sub = full.select_features(&names)?;
            sub.x.row(i).iter().copied().collect()
        };
        let score = match args.model {
            ModelArg::Lr => {
                let model = logistic_fit(&x_train, &train_labels, args.ridge)?;
                if !model.converged {
                    warnings.push(format!(
                        "fold {i}: logistic regression did not converge within 100 iterations"
                    ));
                }
                model.predict_proba(&test_row)
            }
            ModelArg::Nb => nb_fit(&x_train, &train_labels)?.predict_proba(&test_row),
        };
        scores.push(score);
        predicted.push(u8::from(score >= 0.5));
    }
    Ok((scores, predicted, warnings))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let profiles = match &args.profile {
        Some(path) => load_profiles(path)?,
        None => default_profiles(),
    };
    let options = GenerateOptions {
        n_per_group: args.n,
        seed: args.seed,
        dim: args.dim,
        ..GenerateOptions::default()
    };
    let summary = generate_with(&profiles, &options, &args.out)?;
    println!(
        "generated {} subject(s), vocab {} x dim {}, into {}",
        summary.subjects.len(),
        summary.vocab_size,
        summary.dim,
        summary.out_dir.display()
    );
    Ok(())
}
