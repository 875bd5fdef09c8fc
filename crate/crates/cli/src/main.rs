//! `ofn` — pipeline driver: synthesize a corpus, prepare chunk pairs,
//! train, normalize, evaluate, sweep chunk sizes, verify gradients.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 runtime
//! failure (divergence, format error).

mod config;
mod formats;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{resolve, FileConfig};
use ofn_core::corpus::{
    build_vocab, load_corpus, make_chunks, split_corpus, Corpus, Sentence, SplitSpec,
};
use ofn_core::eval::{
    chunk_sweep, error_report, in_list_accuracy, render_sweep_table, word_accuracy, EvalOptions,
    EvalReport,
};
use ofn_core::inference::{normalize_sentence, NormalizationResult, NormalizeOptions};
use ofn_core::model::{load_model, ModelConfig, Seq2SeqModel};
use ofn_core::numerics::{OptimConfig, OptimKind};
use ofn_core::synth::{default_lemmas, default_ruleset, generate, SynthConfig};
use ofn_core::training::{train_with_progress, GradCheckConfig, TrainConfig, TrainLogRecord};
use ofn_core::{OfnError, Result};

#[derive(Parser)]
#[command(
    name = "ofn",
    version,
    about = "Character-level normalization and lemmatization of Old Literary Finnish"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic parallel corpus.
    Synth(SynthArgs),
    /// Split a corpus and write chunk-pair and vocabulary files.
    Prepare(PrepareArgs),
    /// Train a model on chunk-pair files.
    Train(TrainArgs),
    /// Normalize text with a trained model.
    Normalize(NormalizeArgs),
    /// Score predictions (and/or an analyzer baseline) against gold.
    Evaluate(EvaluateArgs),
    /// Accuracy table across per-chunk-size models.
    Sweep(SweepArgs),
    /// Finite-difference audit of the gradient implementation.
    VerifyGrad(VerifyGradArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print on stdout and are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &OfnError) -> u8 {
    match e {
        OfnError::Parse { .. }
        | OfnError::Validation(_)
        | OfnError::Config(_)
        | OfnError::Alignment(_) => 1,
        OfnError::Shape(_)
        | OfnError::Format { .. }
        | OfnError::Divergence { .. }
        | OfnError::Io(_) => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Prepare(args) => run_prepare(args),
        Command::Train(args) => run_train(args),
        Command::Normalize(args) => run_normalize(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::VerifyGrad(args) => run_verify_grad(args),
    }
}

fn log_config(entries: &[(&str, String)]) {
    for (k, v) in entries {
        eprintln!("config {} = {}", k, v);
    }
}

fn check_chunk_size(chunk_size: usize) -> Result<()> {
    if !(1..=5).contains(&chunk_size) {
        return Err(OfnError::Config(format!(
            "chunk_size must be within 1..=5, got {}",
            chunk_size
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct SynthArgs {
    /// Output corpus TSV path.
    #[arg(long)]
    out: PathBuf,
    /// Number of sentences to generate (default 1000).
    #[arg(long)]
    sentences: Option<usize>,
    /// Minimum words per sentence (default 3).
    #[arg(long)]
    words_min: Option<usize>,
    /// Maximum words per sentence (default 7).
    #[arg(long)]
    words_max: Option<usize>,
    /// Probability of a sentence-final period token.
    #[arg(long)]
    period_prob: Option<f64>,
    /// Random seed (default 3435).
    #[arg(long)]
    seed: Option<u64>,
    /// Lemma list file (one word per line); defaults to the bundled
    /// 500-lemma list.
    #[arg(long)]
    lemmas: Option<PathBuf>,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    let lemma_path = args
        .lemmas
        .or_else(|| file.get_string("lemmas").map(PathBuf::from));
    let lemma_list = match &lemma_path {
        Some(p) => formats::load_lemma_list(p)?,
        None => default_lemmas(),
    };
    let cfg = SynthConfig {
        lemma_list,
        rules: default_ruleset(),
        sentences: resolve(args.sentences, file.get("sentences")?, 1000),
        words_min: resolve(args.words_min, file.get("words_min")?, 3),
        words_max: resolve(args.words_max, file.get("words_max")?, 7),
        period_prob: resolve(args.period_prob, file.get("period_prob")?, 0.25),
        seed: resolve(args.seed, file.get("seed")?, 3435),
    };
    log_config(&[
        ("sentences", cfg.sentences.to_string()),
        ("words_min", cfg.words_min.to_string()),
        ("words_max", cfg.words_max.to_string()),
        ("period_prob", cfg.period_prob.to_string()),
        ("seed", cfg.seed.to_string()),
        (
            "lemmas",
            lemma_path
                .as_deref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "<builtin>".into()),
        ),
    ]);
    let corpus = generate(&cfg)?;
    corpus.save(&args.out)?;
    println!(
        "wrote {} documents, {} sentences, {} tokens to {}",
        corpus.num_documents(),
        corpus.num_sentences(),
        corpus.num_tokens(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct PrepareArgs {
    /// Input corpus TSV.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
    /// Words per chunk, 1-5 (default 3).
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Comma-separated document ids held out as the test set.
    #[arg(long, value_delimiter = ',')]
    test_docs: Option<Vec<String>>,
    /// Share of non-test sentences held for validation (default 0.15).
    #[arg(long)]
    valid_fraction: Option<f64>,
    /// Random seed (default 3435).
    #[arg(long)]
    seed: Option<u64>,
    /// Preserve case instead of folding to lowercase.
    #[arg(long)]
    keep_case: bool,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn sentences_to_corpus(id: &str, sentences: &[Sentence]) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    corpus.push_document(ofn_core::corpus::Document {
        id: id.to_string(),
        sentences: sentences.to_vec(),
    })?;
    Ok(corpus)
}

fn pairs_for(
    sentences: &[Sentence],
    chunk_size: usize,
) -> Result<Vec<ofn_core::corpus::ChunkPair>> {
    let mut pairs = Vec::new();
    for s in sentences {
        pairs.extend(make_chunks(s, chunk_size)?);
    }
    Ok(pairs)
}

fn run_prepare(args: PrepareArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    let chunk_size = resolve(args.chunk_size, file.get("chunk_size")?, 3);
    check_chunk_size(chunk_size)?;
    let lowercase = resolve(
        if args.keep_case { Some(false) } else { None },
        file.get("lowercase")?,
        true,
    );
    let test_docs: BTreeSet<String> = args
        .test_docs
        .or_else(|| {
            file.get_string("test_docs")
                .map(|s| s.split(',').map(|d| d.trim().to_string()).collect())
        })
        .unwrap_or_default()
        .into_iter()
        .filter(|d| !d.is_empty())
        .collect();
    let spec = SplitSpec {
        test_docs,
        valid_fraction: resolve(args.valid_fraction, file.get("valid_fraction")?, 0.15),
        seed: resolve(args.seed, file.get("seed")?, 3435),
    };
    log_config(&[
        ("chunk_size", chunk_size.to_string()),
        ("lowercase", lowercase.to_string()),
        (
            "test_docs",
            spec.test_docs.iter().cloned().collect::<Vec<_>>().join(","),
        ),
        ("valid_fraction", spec.valid_fraction.to_string()),
        ("seed", spec.seed.to_string()),
    ]);

    let corpus = load_corpus(&args.corpus, lowercase)?;
    let (train, valid, test) = split_corpus(&corpus, &spec)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let mut vocab_pairs = Vec::new();
    println!("documents: {}", corpus.num_documents());
    for (name, sentences) in [("train", &train), ("valid", &valid), ("test", &test)] {
        let pairs = pairs_for(sentences, chunk_size)?;
        let tokens: usize = sentences.iter().map(|s| s.tokens.len()).sum();
        std::fs::write(
            args.out_dir.join(format!("{}.pairs", name)),
            formats::pairs_to_string(&pairs),
        )?;
        sentences_to_corpus(name, sentences)?.save(args.out_dir.join(format!("{}.tsv", name)))?;
        println!(
            "{} sentences: {}, tokens: {}, pairs: {}",
            name,
            sentences.len(),
            tokens,
            pairs.len()
        );
        if name == "train" {
            vocab_pairs = pairs;
        }
    }
    if vocab_pairs.is_empty() {
        return Err(OfnError::Config(
            "training split is empty; nothing to build vocabularies from".into(),
        ));
    }
    let (source_vocab, target_vocab) = build_vocab(&vocab_pairs)?;
    std::fs::write(
        args.out_dir.join("source.vocab"),
        formats::vocab_to_string(&source_vocab),
    )?;
    std::fs::write(
        args.out_dir.join("target.vocab"),
        formats::vocab_to_string(&target_vocab),
    )?;
    println!(
        "vocabularies: source {} symbols, target {} symbols",
        source_vocab.size(),
        target_vocab.size()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct TrainArgs {
    /// Training chunk-pair file from `prepare`.
    #[arg(long)]
    train_pairs: PathBuf,
    /// Validation chunk-pair file from `prepare`.
    #[arg(long)]
    valid_pairs: Option<PathBuf>,
    /// Checkpoints, final/best models and train.log land here.
    #[arg(long)]
    out_dir: PathBuf,
    /// Words per chunk, 1-5 (default 3).
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Optimizer steps to run (default 100000).
    #[arg(long)]
    steps: Option<u64>,
    /// Pairs per optimizer step (default 64).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Random seed (default 3435).
    #[arg(long)]
    seed: Option<u64>,
    /// Validate every N steps (default 1000).
    #[arg(long)]
    valid_every: Option<u64>,
    /// Write a checkpoint every N steps (default 10000).
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// sgd_decay or adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Initial learning rate (default 1.0 for sgd_decay, 0.002 for adam).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Learning-rate multiplier at each decay point (default 0.5).
    #[arg(long)]
    decay_factor: Option<f64>,
    /// Step of the first decay (default steps/2).
    #[arg(long)]
    decay_start: Option<u64>,
    /// Steps between decays (default steps/10).
    #[arg(long)]
    decay_every: Option<u64>,
    /// Character embedding width (default 64).
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Hidden width, split across encoder directions (default 128).
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Encoder and decoder layer count (default 2).
    #[arg(long)]
    layers: Option<usize>,
    /// Dropout between stacked layers during training (default 0.3).
    #[arg(long)]
    dropout: Option<f64>,
    /// Disable feeding the attentional state into the next step.
    #[arg(long)]
    no_input_feed: bool,
    /// Decoding stops after ceil(factor * source_len) + 10 steps (default 3).
    #[arg(long)]
    max_decode_factor: Option<f64>,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    let steps = resolve(args.steps, file.get("steps")?, 100_000);
    if steps < 1 {
        return Err(OfnError::Config("steps must be >= 1".into()));
    }
    let chunk_size = resolve(args.chunk_size, file.get("chunk_size")?, 3);
    check_chunk_size(chunk_size)?;
    let kind = OptimKind::parse(&resolve(
        args.optimizer.clone(),
        file.get_string("optimizer"),
        "sgd_decay".into(),
    ))?;
    let default_schedule = OptimConfig::default_for_steps(steps);
    let optim = OptimConfig {
        kind,
        learning_rate: resolve(
            args.learning_rate,
            file.get("learning_rate")?,
            match kind {
                OptimKind::SgdDecay => 1.0,
                OptimKind::Adam => 0.002,
            },
        ),
        decay_factor: resolve(args.decay_factor, file.get("decay_factor")?, 0.5),
        decay_start_step: resolve(
            args.decay_start,
            file.get("decay_start")?,
            default_schedule.decay_start_step,
        ),
        decay_every: resolve(
            args.decay_every,
            file.get("decay_every")?,
            default_schedule.decay_every,
        ),
    };
    let model = ModelConfig {
        embed_dim: resolve(args.embed_dim, file.get("embed_dim")?, 64),
        hidden_dim: resolve(args.hidden_dim, file.get("hidden_dim")?, 128),
        layers: resolve(args.layers, file.get("layers")?, 2),
        dropout: resolve(args.dropout, file.get("dropout")?, 0.3),
        source_vocab_size: 0,
        target_vocab_size: 0,
        max_decode_factor: resolve(args.max_decode_factor, file.get("max_decode_factor")?, 3.0),
        input_feed: resolve(
            if args.no_input_feed {
                Some(false)
            } else {
                None
            },
            file.get("input_feed")?,
            true,
        ),
    };
    let cfg = TrainConfig {
        steps,
        batch_size: resolve(args.batch_size, file.get("batch_size")?, 64),
        seed: resolve(args.seed, file.get("seed")?, 3435),
        valid_every: resolve(args.valid_every, file.get("valid_every")?, 1000),
        checkpoint_every: resolve(args.checkpoint_every, file.get("checkpoint_every")?, 10_000),
        chunk_size,
        optim,
        model,
        checkpoint_dir: Some(args.out_dir.clone()),
    };
    log_config(&[
        ("steps", cfg.steps.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("seed", cfg.seed.to_string()),
        ("valid_every", cfg.valid_every.to_string()),
        ("checkpoint_every", cfg.checkpoint_every.to_string()),
        ("chunk_size", cfg.chunk_size.to_string()),
        ("optimizer", cfg.optim.kind.name().to_string()),
        ("learning_rate", cfg.optim.learning_rate.to_string()),
        ("decay_factor", cfg.optim.decay_factor.to_string()),
        ("decay_start", cfg.optim.decay_start_step.to_string()),
        ("decay_every", cfg.optim.decay_every.to_string()),
        ("embed_dim", cfg.model.embed_dim.to_string()),
        ("hidden_dim", cfg.model.hidden_dim.to_string()),
        ("layers", cfg.model.layers.to_string()),
        ("dropout", cfg.model.dropout.to_string()),
        ("input_feed", cfg.model.input_feed.to_string()),
        ("max_decode_factor", cfg.model.max_decode_factor.to_string()),
    ]);

    let train_pairs = formats::load_pairs(&args.train_pairs, chunk_size)?;
    let valid_pairs = match &args.valid_pairs {
        Some(p) => formats::load_pairs(p, chunk_size)?,
        None => Vec::new(),
    };
    let out = train_with_progress(&train_pairs, &valid_pairs, &cfg, |r: &TrainLogRecord| {
        eprintln!(
            "step {} train_loss {:.4} valid_loss {:.4} lr {} ({:.0}s)",
            r.step, r.train_loss, r.valid_loss, r.learning_rate, r.wall_seconds
        );
    })?;
    println!(
        "trained {} steps on {} pairs; best valid loss {:.6} at step {}",
        cfg.steps,
        train_pairs.len(),
        out.best_valid_loss,
        out.best_step
    );
    println!(
        "wrote {} and {}",
        args.out_dir.join("final.ofn").display(),
        args.out_dir.join("best.ofn").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// normalize
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct NormalizeArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Plain text (one sentence per line) or corpus TSV.
    #[arg(long)]
    input: PathBuf,
    /// Output predictions TSV path.
    #[arg(long)]
    output: PathBuf,
    /// Defaults to the chunk size the model was trained with.
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Let punctuation occupy chunk slots (training-identical).
    #[arg(long)]
    chunk_punct: bool,
    #[arg(long, value_parser = ["auto", "text", "tsv"], default_value = "auto")]
    format: String,
    /// Preserve case instead of folding to lowercase.
    #[arg(long)]
    keep_case: bool,
    /// Worker threads for sentence-parallel decoding (default 1).
    #[arg(long)]
    threads: Option<usize>,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Normalize sentences, optionally in parallel; results are collected
/// in input order, so the thread count never changes the output.
fn normalize_all(
    model: &Seq2SeqModel,
    sentences: &[Vec<String>],
    chunk_size: usize,
    opts: &NormalizeOptions,
    threads: usize,
) -> Result<Vec<NormalizationResult>> {
    if threads <= 1 || sentences.len() < 2 {
        return sentences
            .iter()
            .map(|s| normalize_sentence(model, s, chunk_size, opts))
            .collect();
    }
    let per_thread = sentences.len().div_ceil(threads);
    let mut slots: Vec<Option<Result<NormalizationResult>>> =
        (0..sentences.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (sent_chunk, slot_chunk) in sentences
            .chunks(per_thread)
            .zip(slots.chunks_mut(per_thread))
        {
            scope.spawn(move || {
                for (s, slot) in sent_chunk.iter().zip(slot_chunk.iter_mut()) {
                    *slot = Some(normalize_sentence(model, s, chunk_size, opts));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every sentence slot is filled"))
        .collect()
}

fn run_normalize(args: NormalizeArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let chunk_size = resolve(args.chunk_size, file.get("chunk_size")?, model.chunk_size);
    check_chunk_size(chunk_size)?;
    let threads = resolve(args.threads, file.get("threads")?, 1);
    let lowercase = resolve(
        if args.keep_case { Some(false) } else { None },
        file.get("lowercase")?,
        true,
    );
    let opts = NormalizeOptions {
        chunk_punct: args.chunk_punct || file.get("chunk_punct")?.unwrap_or(false),
    };
    log_config(&[
        ("chunk_size", chunk_size.to_string()),
        ("chunk_punct", opts.chunk_punct.to_string()),
        ("lowercase", lowercase.to_string()),
        ("threads", threads.to_string()),
        ("format", args.format.clone()),
    ]);

    let text = std::fs::read_to_string(&args.input).map_err(|e| {
        OfnError::Config(format!("cannot read input {}: {}", args.input.display(), e))
    })?;
    let is_tsv = match args.format.as_str() {
        "tsv" => true,
        "text" => false,
        _ => text
            .lines()
            .find(|l| !l.trim().is_empty())
            .map(|l| l.starts_with("# doc") || l.contains('\t'))
            .unwrap_or(false),
    };
    let mut sentences: Vec<Vec<String>> = if is_tsv {
        Corpus::from_tsv_str(&text, lowercase)?
            .sentences()
            .map(|s| s.surfaces())
            .collect()
    } else {
        formats::load_plain_sentences(&text)
    };
    if !is_tsv && lowercase {
        for sent in &mut sentences {
            for w in sent {
                *w = w.to_lowercase();
            }
        }
    }

    let results = normalize_all(&model, &sentences, chunk_size, &opts, threads)?;
    let out: Vec<Vec<formats::PredToken>> = results
        .iter()
        .map(|r| {
            r.tokens
                .iter()
                .map(|t| formats::PredToken {
                    surface: t.surface.clone(),
                    lemma: t.lemma.clone(),
                    repaired: t.repaired,
                })
                .collect()
        })
        .collect();
    std::fs::write(&args.output, formats::predictions_to_string(&out))?;
    let tokens: usize = results.iter().map(|r| r.tokens.len()).sum();
    let repaired: usize = results.iter().map(|r| r.repaired_count()).sum();
    println!(
        "normalized {} sentences, {} tokens ({} repaired) to {}",
        results.len(),
        tokens,
        repaired,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct EvaluateArgs {
    /// Gold corpus TSV.
    #[arg(long)]
    gold: PathBuf,
    /// Predictions from `normalize`.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Analyzer candidate lists for the in-list baseline.
    #[arg(long)]
    analyses: Option<PathBuf>,
    /// Lexicon enabling the error taxonomy.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Score punctuation tokens instead of excluding them.
    #[arg(long)]
    include_punct: bool,
    /// Compare case-sensitively.
    #[arg(long)]
    keep_case: bool,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn print_report(label: &str, report: &EvalReport) {
    println!("[{}]", label);
    println!(
        "accuracy {:.1}% ({}/{} correct, {} punctuation excluded)",
        report.accuracy() * 100.0,
        report.correct,
        report.total,
        report.excluded_punct
    );
    if report.wrong_in_lexicon + report.non_word > 0 {
        println!(
            "errors: {} wrong-but-in-lexicon, {} non-words",
            report.wrong_in_lexicon, report.non_word
        );
        if !report.top_errors.is_empty() {
            println!("most frequent errors (prediction <- gold):");
            for ((p, g), n) in &report.top_errors {
                println!("  {:>4}x {} <- {}", n, p, g);
            }
        }
    }
    print!("{}", report.to_kv());
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    if args.pred.is_none() && args.analyses.is_none() {
        return Err(OfnError::Config(
            "evaluate needs --pred and/or --analyses".into(),
        ));
    }
    let fold_case = resolve(
        if args.keep_case { Some(false) } else { None },
        file.get("fold_case")?,
        true,
    );
    let include_punct = args.include_punct || file.get("include_punct")?.unwrap_or(false);
    log_config(&[
        ("fold_case", fold_case.to_string()),
        ("include_punct", include_punct.to_string()),
    ]);

    let gold_corpus = load_corpus(&args.gold, false)?;
    let mut gold = Vec::new();
    let mut surfaces = Vec::new();
    let mut mask = Vec::new();
    for s in gold_corpus.sentences() {
        for t in &s.tokens {
            gold.push(t.lemma.clone());
            surfaces.push(t.surface.clone());
            mask.push(if include_punct { false } else { t.is_punct });
        }
    }
    let lexicon = match &args.lexicon {
        Some(p) => Some(formats::load_lexicon(p)?),
        None => None,
    };

    if let Some(pred_path) = &args.pred {
        let pred_sentences = formats::load_predictions(pred_path)?;
        let pred_tokens: Vec<formats::PredToken> = pred_sentences.into_iter().flatten().collect();
        if pred_tokens.len() != gold.len() {
            return Err(OfnError::Alignment(format!(
                "predictions have {} tokens, gold has {}",
                pred_tokens.len(),
                gold.len()
            )));
        }
        for (i, (p, s)) in pred_tokens.iter().zip(&surfaces).enumerate() {
            if !p.surface.eq_ignore_ascii_case(s) && p.surface.to_lowercase() != s.to_lowercase() {
                return Err(OfnError::Alignment(format!(
                    "surface mismatch at token {}: '{}' vs gold '{}'",
                    i + 1,
                    p.surface,
                    s
                )));
            }
        }
        let predictions: Vec<String> = pred_tokens.iter().map(|t| t.lemma.clone()).collect();
        let mut report = match &lexicon {
            Some(lex) => error_report(&predictions, &gold, &mask, lex, fold_case)?,
            None => word_accuracy(&predictions, &gold, &mask, fold_case)?,
        };
        report.repaired = pred_tokens.iter().filter(|t| t.repaired).count();
        print_report("model", &report);
    }

    if let Some(analyses_path) = &args.analyses {
        let analyses = formats::load_analyses(analyses_path)?;
        if analyses.len() != gold.len() {
            return Err(OfnError::Alignment(format!(
                "analyses have {} tokens, gold has {}",
                analyses.len(),
                gold.len()
            )));
        }
        let report = in_list_accuracy(&analyses, &gold, &mask, fold_case)?;
        print_report("baseline (lemma in candidate list)", &report);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct SweepArgs {
    /// Model file; repeat once per chunk size.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Gold corpus TSV.
    #[arg(long)]
    gold: PathBuf,
    /// Word list enabling the error taxonomy.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Score punctuation tokens instead of excluding them.
    #[arg(long)]
    include_punct: bool,
    /// Let punctuation occupy chunk slots (training-identical).
    #[arg(long)]
    chunk_punct: bool,
    /// Compare case-sensitively.
    #[arg(long)]
    keep_case: bool,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    let fold_case = resolve(
        if args.keep_case { Some(false) } else { None },
        file.get("fold_case")?,
        true,
    );
    let options = EvalOptions {
        fold_case,
        include_punct: args.include_punct || file.get("include_punct")?.unwrap_or(false),
        normalize: NormalizeOptions {
            chunk_punct: args.chunk_punct || file.get("chunk_punct")?.unwrap_or(false),
        },
    };
    log_config(&[
        ("fold_case", options.fold_case.to_string()),
        ("include_punct", options.include_punct.to_string()),
        ("chunk_punct", options.normalize.chunk_punct.to_string()),
    ]);

    let gold = load_corpus(&args.gold, false)?;
    let sentences: Vec<Sentence> = gold.sentences().cloned().collect();
    let models: Vec<Seq2SeqModel> = args
        .models
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<_>>()?;
    let refs: Vec<&Seq2SeqModel> = models.iter().collect();
    let lexicon = match &args.lexicon {
        Some(p) => Some(formats::load_lexicon(p)?),
        None => None,
    };
    let rows = chunk_sweep(&refs, &sentences, lexicon.as_ref(), &options)?;
    print!("{}", render_sweep_table(&rows));
    for row in &rows {
        println!("[chunk {}]", row.chunk_size);
        print!("{}", row.report.to_kv());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify-grad
// ---------------------------------------------------------------------------

#[derive(clap::Args)]
struct VerifyGradArgs {
    /// Random seed (default 3435).
    #[arg(long)]
    seed: Option<u64>,
    /// Finite-difference step (default 1e-5).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Per-tensor relative-error bound (default 1e-3).
    #[arg(long)]
    threshold: Option<f64>,
    /// key=value configuration file; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_verify_grad(args: VerifyGradArgs) -> Result<()> {
    let file = FileConfig::load_opt(args.config.as_deref())?;
    let cfg = GradCheckConfig {
        seed: resolve(args.seed, file.get("seed")?, 3435),
        epsilon: args.epsilon.unwrap_or(1e-5),
        threshold: args.threshold.unwrap_or(1e-3),
    };
    log_config(&[
        ("seed", cfg.seed.to_string()),
        ("epsilon", cfg.epsilon.to_string()),
        ("threshold", cfg.threshold.to_string()),
    ]);
    let report = ofn_core::training::verify_gradients(&cfg)?;
    print!("{}", report.render());
    if !report.pass {
        return Err(OfnError::Shape(format!(
            "gradient audit failed: max relative error {:.3e} over threshold {:.1e}",
            report.max_rel_err, report.threshold
        )));
    }
    Ok(())
}
