//! Forward passes: the batched teacher-forced pass used by training
//! (which records every intermediate needed by the backward pass) and
//! the incremental encoder/decoder-step pass used by greedy decoding.
//!
//! Padding never leaks into results: encoder states carry through
//! masked positions unchanged, attention scores at padded positions
//! are -inf (exact zero weight), and the loss is masked, so appending
//! PAD columns to a batch changes nothing.

use crate::corpus::ChunkPair;
use crate::error::{OfnError, Result};
use crate::numerics::{gemm, sigmoid, softmax_inplace, Matrix, Rng, PROB_FLOOR};

use super::batch::PaddedBatch;
use super::{LstmWeights, Seq2SeqModel};

/// Forward mode: training applies dropout from the given stream,
/// evaluation is deterministic.
pub enum Mode<'a> {
    Train { dropout_rng: &'a mut Rng },
    Eval,
}

pub(crate) struct CellCache {
    /// Post-activation gate values, column blocks [i f g o] (B × 4h).
    pub gates: Matrix,
    /// tanh of the new cell state (B × h).
    pub tanh_c: Matrix,
}

/// One LSTM step over a batch.
pub(crate) fn cell_forward(
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    w: &LstmWeights,
) -> Result<(Matrix, Matrix, CellCache)> {
    let b = x.rows();
    let h = w.hidden();
    let mut gates = x.matmul_nt(&w.w_x)?;
    gemm(false, true, h_prev, &w.w_h, 1.0, &mut gates)?;
    let mut c_new = Matrix::zeros(b, h);
    let mut tanh_c = Matrix::zeros(b, h);
    let mut h_new = Matrix::zeros(b, h);
    for bi in 0..b {
        let row = gates.row_mut(bi);
        for (j, bias) in w.b.row(0).iter().enumerate() {
            row[j] += bias;
        }
        for j in 0..h {
            let i = sigmoid(row[j]);
            let f = sigmoid(row[h + j]);
            let g = row[2 * h + j].tanh();
            let o = sigmoid(row[3 * h + j]);
            row[j] = i;
            row[h + j] = f;
            row[2 * h + j] = g;
            row[3 * h + j] = o;
            let c = f * c_prev.get(bi, j) + i * g;
            let tc = c.tanh();
            c_new.set(bi, j, c);
            tanh_c.set(bi, j, tc);
            h_new.set(bi, j, o * tc);
        }
    }
    Ok((h_new, c_new, CellCache { gates, tanh_c }))
}

/// Single-vector LSTM cell: i, f, o = σ(·), g = tanh(·),
/// c' = f⊙c + i⊙g, h' = o⊙tanh(c').
pub fn lstm_cell(x: &[f64], h: &[f64], c: &[f64], w: &LstmWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != w.in_dim() || h.len() != w.hidden() || c.len() != w.hidden() {
        return Err(OfnError::shape(format!(
            "lstm_cell dims: x {} (want {}), h {} / c {} (want {})",
            x.len(),
            w.in_dim(),
            h.len(),
            c.len(),
            w.hidden()
        )));
    }
    let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let hm = Matrix::from_vec(1, h.len(), h.to_vec())?;
    let cm = Matrix::from_vec(1, c.len(), c.to_vec())?;
    let (h_new, c_new, _) = cell_forward(&xm, &hm, &cm, w)?;
    Ok((h_new.row(0).to_vec(), c_new.row(0).to_vec()))
}

/// General global attention for one decoder state over a set of
/// annotations (one row each).
pub struct Attention {
    pub context: Vec<f64>,
    pub weights: Vec<f64>,
    /// h̃ = tanh(W_c · [context; h_t])
    pub attentional: Vec<f64>,
}

/// score_s = h_tᵀ · W_a · a_s; weights = softmax(scores);
/// context = Σ weights_s · a_s.
pub fn attention(model: &Seq2SeqModel, h_t: &[f64], annotations: &Matrix) -> Result<Attention> {
    let h = model.config.hidden_dim;
    if h_t.len() != h || annotations.cols() != h || annotations.rows() == 0 {
        return Err(OfnError::shape(format!(
            "attention dims: h_t {} and annotations {:?} (want width {})",
            h_t.len(),
            annotations.shape(),
            h
        )));
    }
    let transformed = annotations.matmul_nt(&model.attn_general)?;
    let mut weights = vec![0.0; annotations.rows()];
    for (si, w) in weights.iter_mut().enumerate() {
        *w = h_t
            .iter()
            .zip(transformed.row(si))
            .map(|(&a, &b)| a * b)
            .sum();
    }
    softmax_inplace(&mut weights);
    let mut context = vec![0.0; h];
    for (si, &w) in weights.iter().enumerate() {
        for (j, c) in context.iter_mut().enumerate() {
            *c += w * annotations.get(si, j);
        }
    }
    let mut cat = context.clone();
    cat.extend_from_slice(h_t);
    let catm = Matrix::from_vec(1, 2 * h, cat)?;
    let mut attentional = catm.matmul_nt(&model.attn_combine)?;
    for v in attentional.data_mut() {
        *v = v.tanh();
    }
    Ok(Attention {
        context,
        weights,
        attentional: attentional.row(0).to_vec(),
    })
}

/// Row-wise select: mask·new + (1-mask)·prev.
fn masked_state(new: &Matrix, prev: &Matrix, mask: &[f64]) -> Matrix {
    let mut out = new.clone();
    for bi in 0..out.rows() {
        let m = mask[bi];
        if m == 0.0 {
            out.row_mut(bi).copy_from_slice(prev.row(bi));
        } else if m != 1.0 {
            let prev_row = prev.row(bi);
            for (j, v) in out.row_mut(bi).iter_mut().enumerate() {
                *v = m * *v + (1.0 - m) * prev_row[j];
            }
        }
    }
    out
}

fn gather_rows(table: &Matrix, ids: impl Iterator<Item = usize>) -> Matrix {
    let ids: Vec<usize> = ids.collect();
    let mut out = Matrix::zeros(ids.len(), table.cols());
    for (bi, &id) in ids.iter().enumerate() {
        out.row_mut(bi).copy_from_slice(table.row(id));
    }
    out
}

/// Inverted dropout mask: entries are 0 with probability p, else
/// 1/(1-p). Drawn row-major so the stream is reproducible.
fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.bernoulli(p) { 0.0 } else { keep };
    }
    m
}

fn apply_mask(x: &Matrix, mask: &Matrix) -> Matrix {
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    out
}

pub(crate) struct DirCache {
    pub caches: Vec<CellCache>,
    /// Post-mask states at the S+1 step boundaries. Forward direction:
    /// hs[0] is the zero initial state and hs[t+1] the state after
    /// position t. Backward direction: hs[S] is initial and hs[t] the
    /// state after position t (scanning right to left).
    pub hs: Vec<Matrix>,
    pub cs: Vec<Matrix>,
}

pub(crate) struct EncLayerCache {
    /// Layer inputs per position, after dropout.
    pub inputs: Vec<Matrix>,
    /// Dropout masks that produced `inputs` (layers > 0, training only).
    pub dropout: Option<Vec<Matrix>>,
    pub fwd: DirCache,
    pub bwd: DirCache,
    /// Per-position annotations (B × H).
    pub ann: Vec<Matrix>,
}

pub(crate) struct StepCache {
    /// Inputs per decoder layer, after dropout.
    pub inputs: Vec<Matrix>,
    /// Dropout masks between decoder layers (index l-1 for layer l).
    pub dropout: Vec<Option<Matrix>>,
    pub cells: Vec<CellCache>,
    /// Attention weights (B × S).
    pub weights: Matrix,
    /// Attention context (B × H).
    pub context: Matrix,
    /// Attentional state (B × H).
    pub h_tilde: Matrix,
    /// Output distributions (B × V_t).
    pub probs: Matrix,
}

/// Everything the backward pass needs, plus per-sequence losses for
/// the masking tests.
pub struct ForwardCache {
    pub loss: f64,
    /// Summed cross-entropy per sequence.
    pub per_seq_loss: Vec<f64>,
    /// Real target symbols per sequence.
    pub per_seq_count: Vec<f64>,
    pub(crate) mask_total: f64,
    pub(crate) enc: Vec<EncLayerCache>,
    /// W_a-transformed top annotations per position (B × H).
    pub(crate) p_mats: Vec<Matrix>,
    pub(crate) steps: Vec<StepCache>,
    /// Decoder states per layer at the T+1 step boundaries.
    pub(crate) dec_hs: Vec<Vec<Matrix>>,
    pub(crate) dec_cs: Vec<Vec<Matrix>>,
}

fn run_direction(
    inputs: &[Matrix],
    col_masks: &[Vec<f64>],
    w: &LstmWeights,
    batch: usize,
    forward: bool,
) -> Result<DirCache> {
    let s = inputs.len();
    let hh = w.hidden();
    let mut hs: Vec<Matrix> = vec![Matrix::zeros(0, 0); s + 1];
    let mut cs: Vec<Matrix> = vec![Matrix::zeros(0, 0); s + 1];
    let mut caches: Vec<Option<CellCache>> = (0..s).map(|_| None).collect();
    let init_idx = if forward { 0 } else { s };
    hs[init_idx] = Matrix::zeros(batch, hh);
    cs[init_idx] = Matrix::zeros(batch, hh);
    let order: Vec<usize> = if forward {
        (0..s).collect()
    } else {
        (0..s).rev().collect()
    };
    for t in order {
        let (prev, next) = if forward { (t, t + 1) } else { (t + 1, t) };
        let (h_new, c_new, cache) = cell_forward(&inputs[t], &hs[prev], &cs[prev], w)?;
        hs[next] = masked_state(&h_new, &hs[prev], &col_masks[t]);
        cs[next] = masked_state(&c_new, &cs[prev], &col_masks[t]);
        caches[t] = Some(cache);
    }
    Ok(DirCache {
        caches: caches.into_iter().map(Option::unwrap).collect(),
        hs,
        cs,
    })
}

/// Run the full encoder stack. Returns layer caches and the decoder
/// initial states (per layer: concatenated final forward /
/// first-position backward states).
fn run_encoder(
    model: &Seq2SeqModel,
    batch: &PaddedBatch,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<(Vec<EncLayerCache>, Vec<(Matrix, Matrix)>)> {
    let b = batch.batch;
    let s = batch.src_len;
    let col_masks: Vec<Vec<f64>> = (0..s)
        .map(|t| (0..b).map(|bi| batch.src_masked(bi, t)).collect())
        .collect();

    let mut layer_inputs: Vec<Matrix> = (0..s)
        .map(|t| gather_rows(&model.source_embed, (0..b).map(|bi| batch.src_id(bi, t))))
        .collect();

    let mut enc_layers = Vec::with_capacity(model.encoder.len());
    let mut init_states = Vec::with_capacity(model.encoder.len());
    for (l, layer) in model.encoder.iter().enumerate() {
        let (inputs, dropout) = if l == 0 {
            (std::mem::take(&mut layer_inputs), None)
        } else if model.config.dropout > 0.0 && dropout_rng.is_some() {
            let rng = dropout_rng.as_deref_mut().unwrap();
            let masks: Vec<Matrix> = layer_inputs
                .iter()
                .map(|x| dropout_mask(x.rows(), x.cols(), model.config.dropout, rng))
                .collect();
            let dropped = layer_inputs
                .iter()
                .zip(&masks)
                .map(|(x, m)| apply_mask(x, m))
                .collect();
            (dropped, Some(masks))
        } else {
            (std::mem::take(&mut layer_inputs), None)
        };
        let fwd = run_direction(&inputs, &col_masks, &layer.fwd, b, true)?;
        let bwd = run_direction(&inputs, &col_masks, &layer.bwd, b, false)?;
        let ann: Vec<Matrix> = (0..s)
            .map(|t| Matrix::concat_cols(&fwd.hs[t + 1], &bwd.hs[t]))
            .collect::<Result<_>>()?;
        let init_h = Matrix::concat_cols(&fwd.hs[s], &bwd.hs[0])?;
        let init_c = Matrix::concat_cols(&fwd.cs[s], &bwd.cs[0])?;
        init_states.push((init_h, init_c));
        layer_inputs = ann.clone();
        enc_layers.push(EncLayerCache {
            inputs,
            dropout,
            fwd,
            bwd,
            ann,
        });
    }
    Ok((enc_layers, init_states))
}

/// Batched teacher-forced forward pass. Returns the masked mean
/// cross-entropy over real target symbols and the cache for backward.
pub fn forward_batch(
    model: &Seq2SeqModel,
    batch: &PaddedBatch,
    mode: Mode,
) -> Result<(f64, ForwardCache)> {
    if batch.batch == 0 || batch.src_len == 0 {
        return Err(OfnError::validation("forward pass needs a non-empty batch"));
    }
    let mut dropout_rng: Option<&mut Rng> = match mode {
        Mode::Train { dropout_rng } => Some(dropout_rng),
        Mode::Eval => None,
    };
    let b = batch.batch;
    let s = batch.src_len;
    let t1 = batch.tgt_len;
    let h = model.config.hidden_dim;
    let layers = model.config.layers;

    let (enc, init_states) = run_encoder(model, batch, dropout_rng.as_deref_mut())?;
    let top_ann = &enc[layers - 1].ann;

    // P[s] = a_s · W_aᵀ, reused by every decoder step.
    let p_mats: Vec<Matrix> = top_ann
        .iter()
        .map(|a| a.matmul_nt(&model.attn_general))
        .collect::<Result<_>>()?;

    let mut dec_hs: Vec<Vec<Matrix>> = Vec::with_capacity(layers);
    let mut dec_cs: Vec<Vec<Matrix>> = Vec::with_capacity(layers);
    for (init_h, init_c) in init_states {
        dec_hs.push(vec![init_h]);
        dec_cs.push(vec![init_c]);
    }

    let mut h_tilde_prev = Matrix::zeros(b, h);
    let mut steps: Vec<StepCache> = Vec::with_capacity(t1);
    let mut per_seq_loss = vec![0.0; b];
    let mut per_seq_count = vec![0.0; b];

    for t in 0..t1 {
        let y_emb = gather_rows(&model.target_embed, (0..b).map(|bi| batch.tgt_in_id(bi, t)));
        let mut inputs: Vec<Matrix> = Vec::with_capacity(layers);
        let mut dropout: Vec<Option<Matrix>> = Vec::with_capacity(layers.saturating_sub(1));
        let first = if model.config.input_feed {
            Matrix::concat_cols(&y_emb, &h_tilde_prev)?
        } else {
            y_emb
        };
        inputs.push(first);
        let mut cells: Vec<CellCache> = Vec::with_capacity(layers);
        for l in 0..layers {
            let (h_new, c_new, cache) =
                cell_forward(&inputs[l], &dec_hs[l][t], &dec_cs[l][t], &model.decoder[l])?;
            if l + 1 < layers {
                let next_in = if model.config.dropout > 0.0 && dropout_rng.is_some() {
                    let rng = dropout_rng.as_deref_mut().unwrap();
                    let m = dropout_mask(b, h, model.config.dropout, rng);
                    let dropped = apply_mask(&h_new, &m);
                    dropout.push(Some(m));
                    dropped
                } else {
                    dropout.push(None);
                    h_new.clone()
                };
                inputs.push(next_in);
            }
            dec_hs[l].push(h_new);
            dec_cs[l].push(c_new);
            cells.push(cache);
        }
        let h_top = &dec_hs[layers - 1][t + 1];

        // General attention: score_s = h_topᵀ W_a a_s, via P[s].
        let mut scores = Matrix::zeros(b, s);
        for (si, p) in p_mats.iter().enumerate() {
            for bi in 0..b {
                let v = if batch.src_masked(bi, si) == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    h_top
                        .row(bi)
                        .iter()
                        .zip(p.row(bi))
                        .map(|(&a, &b)| a * b)
                        .sum()
                };
                scores.set(bi, si, v);
            }
        }
        for bi in 0..b {
            softmax_inplace(scores.row_mut(bi));
        }
        let weights = scores;

        let mut context = Matrix::zeros(b, h);
        for (si, a) in top_ann.iter().enumerate() {
            for bi in 0..b {
                let w = weights.get(bi, si);
                if w != 0.0 {
                    let arow = a.row(bi);
                    for (j, c) in context.row_mut(bi).iter_mut().enumerate() {
                        *c += w * arow[j];
                    }
                }
            }
        }

        let cat = Matrix::concat_cols(&context, h_top)?;
        let mut h_tilde = cat.matmul_nt(&model.attn_combine)?;
        for v in h_tilde.data_mut() {
            *v = v.tanh();
        }

        let mut probs = h_tilde.matmul_nt(&model.output_proj)?;
        for bi in 0..b {
            softmax_inplace(probs.row_mut(bi));
        }

        for bi in 0..b {
            let m = batch.tgt_masked(bi, t);
            if m != 0.0 {
                let p = probs.get(bi, batch.tgt_out_id(bi, t));
                // The floor must not swallow NaN/inf: a poisoned
                // forward has to surface as a non-finite loss so
                // training can abort with the step number.
                let clamped = if p.is_finite() { p.max(PROB_FLOOR) } else { p };
                per_seq_loss[bi] += m * -(clamped.ln());
                per_seq_count[bi] += m;
            }
        }

        h_tilde_prev = h_tilde.clone();
        steps.push(StepCache {
            inputs,
            dropout,
            cells,
            weights,
            context,
            h_tilde,
            probs,
        });
    }

    let mask_total: f64 = per_seq_count.iter().sum();
    let loss = if mask_total > 0.0 {
        per_seq_loss.iter().sum::<f64>() / mask_total
    } else {
        0.0
    };

    Ok((
        loss,
        ForwardCache {
            loss,
            per_seq_loss,
            per_seq_count,
            mask_total,
            enc,
            p_mats,
            steps,
            dec_hs,
            dec_cs,
        },
    ))
}

/// Teacher-forced loss of a single pair in evaluation mode, with the
/// per-step output distributions. Unknown symbols map to UNK.
pub fn forward_loss(model: &Seq2SeqModel, pair: &ChunkPair) -> Result<(f64, Vec<Vec<f64>>)> {
    let batch = PaddedBatch::from_pairs(&[pair], &model.source_vocab, &model.target_vocab);
    let (loss, cache) = forward_batch(model, &batch, Mode::Eval)?;
    let dists = cache
        .steps
        .iter()
        .map(|s| s.probs.row(0).to_vec())
        .collect();
    Ok((loss, dists))
}

/// Encoder output for incremental decoding.
pub struct EncoderOutput {
    /// One row per source position (S × H).
    pub annotations: Matrix,
    /// W_a-transformed annotations (S × H).
    pub transformed: Matrix,
    /// Per-layer decoder initial states (1 × H each).
    pub init_states: Vec<(Matrix, Matrix)>,
}

/// Encode one source sequence (evaluation mode).
pub fn encode(model: &Seq2SeqModel, source_ids: &[usize]) -> Result<EncoderOutput> {
    if source_ids.is_empty() {
        return Err(OfnError::validation(
            "cannot encode an empty source sequence",
        ));
    }
    for &id in source_ids {
        if id >= model.config.source_vocab_size {
            return Err(OfnError::shape(format!(
                "source id {} out of range for vocabulary of {}",
                id, model.config.source_vocab_size
            )));
        }
    }
    let pseudo = PaddedBatch {
        batch: 1,
        src_len: source_ids.len(),
        tgt_len: 1,
        src_ids: source_ids.to_vec(),
        src_mask: vec![1.0; source_ids.len()],
        tgt_in: vec![crate::corpus::BOS_ID],
        tgt_out: vec![crate::corpus::EOS_ID],
        tgt_mask: vec![1.0],
    };
    let (enc, init_states) = run_encoder(model, &pseudo, None)?;
    let top = &enc[model.config.layers - 1].ann;
    let h = model.config.hidden_dim;
    let mut annotations = Matrix::zeros(source_ids.len(), h);
    for (t, a) in top.iter().enumerate() {
        annotations.row_mut(t).copy_from_slice(a.row(0));
    }
    let transformed = annotations.matmul_nt(&model.attn_general)?;
    Ok(EncoderOutput {
        annotations,
        transformed,
        init_states,
    })
}

/// Decoder state for incremental greedy decoding.
pub struct DecoderState {
    hs: Vec<Matrix>,
    cs: Vec<Matrix>,
    h_tilde: Matrix,
}

impl DecoderState {
    pub fn init(model: &Seq2SeqModel, enc: &EncoderOutput) -> DecoderState {
        DecoderState {
            hs: enc.init_states.iter().map(|(h, _)| h.clone()).collect(),
            cs: enc.init_states.iter().map(|(_, c)| c.clone()).collect(),
            h_tilde: Matrix::zeros(1, model.config.hidden_dim),
        }
    }
}

/// One decoder step: consume the previous target symbol, return the
/// distribution over the next one. Matches the teacher-forced pass
/// exactly in evaluation mode.
pub fn decoder_step(
    model: &Seq2SeqModel,
    enc: &EncoderOutput,
    state: &mut DecoderState,
    prev_id: usize,
) -> Result<Vec<f64>> {
    if prev_id >= model.config.target_vocab_size {
        return Err(OfnError::shape(format!(
            "target id {} out of range for vocabulary of {}",
            prev_id, model.config.target_vocab_size
        )));
    }
    let h = model.config.hidden_dim;
    let s = enc.annotations.rows();
    let y_emb = gather_rows(&model.target_embed, std::iter::once(prev_id));
    let mut input = if model.config.input_feed {
        Matrix::concat_cols(&y_emb, &state.h_tilde)?
    } else {
        y_emb
    };
    for l in 0..model.config.layers {
        let (h_new, c_new, _) =
            cell_forward(&input, &state.hs[l], &state.cs[l], &model.decoder[l])?;
        input = h_new.clone();
        state.hs[l] = h_new;
        state.cs[l] = c_new;
    }
    let h_top = &state.hs[model.config.layers - 1];

    let mut scores = vec![0.0; s];
    for (si, score) in scores.iter_mut().enumerate() {
        *score = h_top
            .row(0)
            .iter()
            .zip(enc.transformed.row(si))
            .map(|(&a, &b)| a * b)
            .sum();
    }
    softmax_inplace(&mut scores);

    let mut context = Matrix::zeros(1, h);
    for (si, &w) in scores.iter().enumerate() {
        let arow = enc.annotations.row(si);
        for (j, c) in context.row_mut(0).iter_mut().enumerate() {
            *c += w * arow[j];
        }
    }
    let cat = Matrix::concat_cols(&context, h_top)?;
    let mut h_tilde = cat.matmul_nt(&model.attn_combine)?;
    for v in h_tilde.data_mut() {
        *v = v.tanh();
    }
    let mut probs = h_tilde.matmul_nt(&model.output_proj)?;
    softmax_inplace(probs.row_mut(0));
    state.h_tilde = h_tilde;
    Ok(probs.row(0).to_vec())
}
