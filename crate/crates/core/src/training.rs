//! Deterministic seeded training: bucketed batch scheduling, the
//! optimizer loop with validation and checkpointing, and the
//! finite-difference gradient audit.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use crate::corpus::{build_vocab, ChunkPair, Vocabulary};
use crate::error::{OfnError, Result};
use crate::model::{
    backward, forward_batch, forward_loss, save_model, Mode, ModelConfig, PaddedBatch, Seq2SeqModel,
};
use crate::numerics::{derive_seed, Gradients, OptimConfig, Optimizer, Parameters, Rng};

/// Window size for length bucketing: indices are shuffled, then sorted
/// by source length within windows of this size, trading padding waste
/// against shuffle quality deterministically.
const BUCKET_WINDOW: usize = 1024;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub valid_every: u64,
    pub checkpoint_every: u64,
    pub chunk_size: usize,
    pub optim: OptimConfig,
    pub model: ModelConfig,
    /// When set, checkpoints and the train.log land here.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            steps: 100_000,
            batch_size: 64,
            seed: 3435,
            valid_every: 1000,
            checkpoint_every: 10_000,
            chunk_size: 3,
            optim: OptimConfig::default_for_steps(100_000),
            model: ModelConfig::default(),
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(OfnError::config("steps must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(OfnError::config("batch_size must be >= 1"));
        }
        if self.valid_every < 1 || self.checkpoint_every < 1 {
            return Err(OfnError::config(
                "valid_every and checkpoint_every must be >= 1",
            ));
        }
        if self.chunk_size < 1 {
            return Err(OfnError::config("chunk_size must be >= 1"));
        }
        self.optim.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub step: u64,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub learning_rate: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<TrainLogRecord>,
}

impl TrainLog {
    /// Log-file lines: `step<TAB>train_loss<TAB>valid_loss<TAB>lr`.
    /// Wall-clock time is not serialized; it is environment, not
    /// result.
    pub fn to_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                format!(
                    "{}\t{}\t{}\t{}",
                    r.step, r.train_loss, r.valid_loss, r.learning_rate
                )
            })
            .collect()
    }
}

/// Deterministic batch index schedule for one epoch: a seeded shuffle,
/// length-bucketed within fixed windows, cut into consecutive batches.
pub fn batch_order(
    pairs: &[ChunkPair],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = Rng::seed_from(derive_seed(seed, epoch));
    rng.shuffle(&mut idx);
    for window in idx.chunks_mut(BUCKET_WINDOW) {
        window.sort_by_key(|&i| pairs[i].source.len());
    }
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Endless deterministic stream of batches; epoch follows epoch, each
/// a pure function of (pairs, seed, epoch).
pub struct BatchStream<'a> {
    pairs: &'a [ChunkPair],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    queue: std::vec::IntoIter<Vec<usize>>,
}

impl<'a> BatchStream<'a> {
    pub fn new(pairs: &'a [ChunkPair], batch_size: usize, seed: u64) -> BatchStream<'a> {
        BatchStream {
            pairs,
            batch_size,
            seed,
            epoch: 0,
            queue: Vec::new().into_iter(),
        }
    }

    pub fn next_batch(&mut self) -> Vec<&'a ChunkPair> {
        loop {
            if let Some(indices) = self.queue.next() {
                return indices.iter().map(|&i| &self.pairs[i]).collect();
            }
            self.queue =
                batch_order(self.pairs, self.batch_size, self.seed, self.epoch).into_iter();
            self.epoch += 1;
        }
    }
}

/// Divergence guard: a non-finite training loss aborts the run with a
/// diagnostic naming the step.
fn ensure_finite(loss: f64, step: u64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(OfnError::Divergence {
            step,
            msg: format!("training loss became {}", loss),
        })
    }
}

/// Masked mean validation loss over all pairs; NaN when there are no
/// validation pairs.
pub fn validation_loss(
    model: &Seq2SeqModel,
    pairs: &[ChunkPair],
    batch_size: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total_ce = 0.0;
    let mut total_symbols = 0.0;
    for chunk in pairs.chunks(batch_size.max(1)) {
        let refs: Vec<&ChunkPair> = chunk.iter().collect();
        let batch = PaddedBatch::from_pairs(&refs, &model.source_vocab, &model.target_vocab);
        let (_, cache) = forward_batch(model, &batch, Mode::Eval)?;
        total_ce += cache.per_seq_loss.iter().sum::<f64>();
        total_symbols += cache.mask_total;
    }
    Ok(total_ce / total_symbols)
}

pub struct TrainOutput {
    /// Model after the final step.
    pub model: Seq2SeqModel,
    /// Checkpoint with the best validation loss (the final model when
    /// there is no validation data).
    pub best: Seq2SeqModel,
    pub best_step: u64,
    pub best_valid_loss: f64,
    pub log: TrainLog,
}

/// Run exactly `config.steps` optimizer steps. Vocabularies come from
/// the training pairs only; validation pairs may hit UNK. Identical
/// config and data give bit-identical parameters.
pub fn train(
    train_pairs: &[ChunkPair],
    valid_pairs: &[ChunkPair],
    config: &TrainConfig,
) -> Result<TrainOutput> {
    train_with_progress(train_pairs, valid_pairs, config, |_| {})
}

/// [`train`] with an observer invoked at every log record.
pub fn train_with_progress(
    train_pairs: &[ChunkPair],
    valid_pairs: &[ChunkPair],
    config: &TrainConfig,
    mut progress: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(OfnError::config("no training pairs"));
    }
    let (source_vocab, target_vocab) = build_vocab(train_pairs)?;
    let mut model = Seq2SeqModel::new(
        config.model.clone(),
        config.chunk_size,
        source_vocab,
        target_vocab,
        derive_seed(config.seed, 0),
    )?;
    let mut dropout_rng = Rng::seed_from(derive_seed(config.seed, 1));
    let mut stream = BatchStream::new(train_pairs, config.batch_size, derive_seed(config.seed, 2));
    let mut optimizer = Optimizer::new(config.optim.clone())?;

    let mut log_file = match &config.checkpoint_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(
                fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join("train.log"))?,
            )
        }
        None => None,
    };

    let started = Instant::now();
    let mut log = TrainLog::default();
    let mut best: Option<(u64, f64, Seq2SeqModel)> = None;
    let mut running_loss = 0.0;
    let mut running_batches = 0u64;

    for step in 1..=config.steps {
        let refs = stream.next_batch();
        let batch = PaddedBatch::from_pairs(&refs, &model.source_vocab, &model.target_vocab);
        let (loss, cache) = forward_batch(
            &model,
            &batch,
            Mode::Train {
                dropout_rng: &mut dropout_rng,
            },
        )?;
        ensure_finite(loss, step)?;
        let grads = backward(&model, &batch, &cache)?;
        optimizer.apply(&mut model, &grads)?;
        running_loss += loss;
        running_batches += 1;

        let validate_now = step % config.valid_every == 0
            || step % config.checkpoint_every == 0
            || step == config.steps;
        if validate_now {
            let valid_loss = validation_loss(&model, valid_pairs, config.batch_size)?;
            let record = TrainLogRecord {
                step,
                train_loss: running_loss / running_batches as f64,
                valid_loss,
                learning_rate: optimizer.lr_for_step(step),
                wall_seconds: started.elapsed().as_secs_f64(),
            };
            running_loss = 0.0;
            running_batches = 0;
            if let Some(f) = log_file.as_mut() {
                writeln!(
                    f,
                    "{}\t{}\t{}\t{}",
                    record.step, record.train_loss, record.valid_loss, record.learning_rate
                )?;
            }
            if valid_loss.is_finite() && best.as_ref().map_or(true, |(_, b, _)| valid_loss < *b) {
                best = Some((step, valid_loss, model.clone()));
            }
            progress(&record);
            log.records.push(record);
        }
        if step % config.checkpoint_every == 0 || step == config.steps {
            if let Some(dir) = &config.checkpoint_dir {
                save_model(&model, dir.join(format!("checkpoint-{}.ofn", step)))?;
            }
        }
    }

    if let Some(dir) = &config.checkpoint_dir {
        save_model(&model, dir.join("final.ofn"))?;
        if let Some((_, _, best_model)) = &best {
            save_model(best_model, dir.join("best.ofn"))?;
        }
    }
    let (best_step, best_valid_loss, best_model) = match best {
        Some((s, v, m)) => (s, v, m),
        None => (config.steps, f64::NAN, model.clone()),
    };
    Ok(TrainOutput {
        model,
        best: best_model,
        best_step,
        best_valid_loss,
        log,
    })
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub epsilon: f64,
    pub threshold: f64,
}

impl Default for GradCheckConfig {
    fn default() -> GradCheckConfig {
        GradCheckConfig {
            seed: 3435,
            epsilon: 1e-5,
            threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    /// ‖analytic − fd‖₂ / max(‖analytic‖₂, ‖fd‖₂).
    pub rel_err: f64,
    pub max_abs_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl GradReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.tensors {
            out.push_str(&format!(
                "{:<16} rel_err {:>12.3e}  max_abs_diff {:>12.3e}  {}\n",
                t.name,
                t.rel_err,
                t.max_abs_diff,
                if t.pass { "ok" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "max relative error {:.3e} (threshold {:.1e}): {}\n",
            self.max_rel_err,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Gradients from the hand-derived backward pass, evaluation mode.
pub fn analytic_gradients(model: &Seq2SeqModel, pair: &ChunkPair) -> Result<Gradients> {
    let batch = PaddedBatch::from_pairs(&[pair], &model.source_vocab, &model.target_vocab);
    let (_, cache) = forward_batch(model, &batch, Mode::Eval)?;
    backward(model, &batch, &cache)
}

/// Central finite differences of the evaluation loss w.r.t. every
/// parameter entry. Restores the model exactly.
pub fn finite_difference_gradients(
    model: &mut Seq2SeqModel,
    pair: &ChunkPair,
    epsilon: f64,
) -> Result<Gradients> {
    let shapes: Vec<(String, usize, usize)> = {
        let mut v = Vec::new();
        model.visit(&mut |name, m| v.push((name.to_string(), m.rows(), m.cols())));
        v
    };
    let mut grads = Gradients::new();
    for (name, rows, cols) in shapes {
        let mut g = crate::numerics::Matrix::zeros(rows, cols);
        for idx in 0..rows * cols {
            let original = read_entry(model, &name, idx);
            write_entry(model, &name, idx, original + epsilon);
            let (loss_plus, _) = forward_loss(model, pair)?;
            write_entry(model, &name, idx, original - epsilon);
            let (loss_minus, _) = forward_loss(model, pair)?;
            write_entry(model, &name, idx, original);
            g.data_mut()[idx] = (loss_plus - loss_minus) / (2.0 * epsilon);
        }
        grads.insert(&name, g);
    }
    Ok(grads)
}

fn read_entry(model: &Seq2SeqModel, name: &str, idx: usize) -> f64 {
    let mut out = 0.0;
    model.visit(&mut |n, m| {
        if n == name {
            out = m.data()[idx];
        }
    });
    out
}

fn write_entry(model: &mut Seq2SeqModel, name: &str, idx: usize, value: f64) {
    model.visit_mut(&mut |n, m| {
        if n == name {
            m.data_mut()[idx] = value;
        }
    });
}

/// Per-tensor comparison of two gradient sets by relative L2 error.
pub fn compare_gradients(
    analytic: &Gradients,
    reference: &Gradients,
    threshold: f64,
) -> GradReport {
    let mut tensors = Vec::new();
    let mut max_rel = 0.0f64;
    for (name, a) in analytic.iter() {
        let Some(r) = reference.get(name) else {
            tensors.push(TensorCheck {
                name: name.to_string(),
                rel_err: f64::INFINITY,
                max_abs_diff: f64::INFINITY,
                pass: false,
            });
            max_rel = f64::INFINITY;
            continue;
        };
        let mut diff_sq = 0.0;
        let mut max_abs = 0.0f64;
        for (x, y) in a.data().iter().zip(r.data()) {
            let d = x - y;
            diff_sq += d * d;
            max_abs = max_abs.max(d.abs());
        }
        let denom = a
            .frob_norm_sq()
            .sqrt()
            .max(r.frob_norm_sq().sqrt())
            .max(1e-12);
        let rel = diff_sq.sqrt() / denom;
        max_rel = max_rel.max(rel);
        tensors.push(TensorCheck {
            name: name.to_string(),
            rel_err: rel,
            max_abs_diff: max_abs,
            pass: rel < threshold,
        });
    }
    let pass = tensors.iter().all(|t| t.pass);
    GradReport {
        tensors,
        max_rel_err: max_rel,
        threshold,
        pass,
    }
}

/// The model and probe pair used by the gradient audit: total
/// vocabulary of 8 symbols, embedding 4, hidden 8, two layers.
///
/// Weights are scaled up after the standard initialization. At the
/// 0.1-uniform init of a two-layer stack annotations sit near 1e-4,
/// which pushes the attention matrix's true gradient below what
/// central differences can resolve at all; the audit needs a probe
/// point where every tensor has measurable influence on the loss.
pub fn gradcheck_fixture(seed: u64) -> Result<(Seq2SeqModel, ChunkPair)> {
    let source_vocab = Vocabulary::from_chars("abs".chars());
    let target_vocab = Vocabulary::from_chars("abs".chars());
    let config = ModelConfig {
        embed_dim: 4,
        hidden_dim: 8,
        layers: 2,
        dropout: 0.0,
        source_vocab_size: 0,
        target_vocab_size: 0,
        max_decode_factor: 3.0,
        input_feed: true,
    };
    let mut model = Seq2SeqModel::new(config, 2, source_vocab, target_vocab, seed)?;
    model.visit_mut(&mut |name, m| {
        if !name.ends_with(".b") {
            m.scale(9.0);
        }
    });
    let pair = ChunkPair {
        source: "ab_sa".chars().collect(),
        target: "ba_as".chars().collect(),
        chunk_size: 2,
    };
    Ok((model, pair))
}

/// Build the tiny fixture model, compare hand-derived gradients with
/// central finite differences, and report per-tensor relative errors.
pub fn verify_gradients(cfg: &GradCheckConfig) -> Result<GradReport> {
    let (mut model, pair) = gradcheck_fixture(cfg.seed)?;
    let analytic = analytic_gradients(&model, &pair)?;
    let fd = finite_difference_gradients(&mut model, &pair, cfg.epsilon)?;
    Ok(compare_gradients(&analytic, &fd, cfg.threshold))
}
