//! Hand-derived reverse pass through the fixed topology: softmax and
//! cross-entropy, output projection, attentional combiner, bilinear
//! attention, the decoder stack with input feeding, and the masked
//! bi-directional encoder stack down to both embedding tables.
//!
//! The finite-difference audit in `training::verify_gradients` checks
//! every tensor produced here against central differences.

use crate::error::Result;
use crate::numerics::{gemm, Gradients, Matrix, PROB_FLOOR};

use super::batch::PaddedBatch;
use super::forward::{CellCache, ForwardCache};
use super::{LstmWeights, Seq2SeqModel};

struct CellNames {
    w_x: String,
    w_h: String,
    b: String,
}

impl CellNames {
    fn new(prefix: &str) -> CellNames {
        CellNames {
            w_x: format!("{}.w_x", prefix),
            w_h: format!("{}.w_h", prefix),
            b: format!("{}.b", prefix),
        }
    }
}

fn col_sum_acc(src: &Matrix, dst: &mut Matrix) {
    for bi in 0..src.rows() {
        let row = src.row(bi);
        for (j, v) in dst.row_mut(0).iter_mut().enumerate() {
            *v += row[j];
        }
    }
}

/// Reverse one LSTM step. `dh_new` and `dc_carry` are the gradients
/// flowing into the (pre-mask) outputs; parameter gradients accumulate
/// into `grads`, and the gradients w.r.t. the step inputs come back.
#[allow(clippy::too_many_arguments)]
fn cell_backward(
    w: &LstmWeights,
    names: &CellNames,
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    cache: &CellCache,
    dh_new: &Matrix,
    dc_carry: &Matrix,
    grads: &mut Gradients,
) -> Result<(Matrix, Matrix, Matrix)> {
    let b = dh_new.rows();
    let h = w.hidden();
    let mut dpre = Matrix::zeros(b, 4 * h);
    let mut dc_prev = Matrix::zeros(b, h);
    for bi in 0..b {
        let gates = cache.gates.row(bi);
        let tanh_c = cache.tanh_c.row(bi);
        let cp = c_prev.row(bi);
        let dh = dh_new.row(bi);
        let dcc = dc_carry.row(bi);
        let dpre_row = dpre.row_mut(bi);
        let dcp = dc_prev.row_mut(bi);
        for j in 0..h {
            let i_g = gates[j];
            let f_g = gates[h + j];
            let g_g = gates[2 * h + j];
            let o_g = gates[3 * h + j];
            let tc = tanh_c[j];
            let d_o = dh[j] * tc;
            let dct = dcc[j] + dh[j] * o_g * (1.0 - tc * tc);
            let d_i = dct * g_g;
            let d_f = dct * cp[j];
            let d_g = dct * i_g;
            dcp[j] = dct * f_g;
            dpre_row[j] = d_i * i_g * (1.0 - i_g);
            dpre_row[h + j] = d_f * f_g * (1.0 - f_g);
            dpre_row[2 * h + j] = d_g * (1.0 - g_g * g_g);
            dpre_row[3 * h + j] = d_o * o_g * (1.0 - o_g);
        }
    }
    {
        let gw = grads.entry(&names.w_x, 4 * h, x.cols());
        gemm(true, false, &dpre, x, 1.0, gw)?;
    }
    {
        let gw = grads.entry(&names.w_h, 4 * h, h);
        gemm(true, false, &dpre, h_prev, 1.0, gw)?;
    }
    col_sum_acc(&dpre, grads.entry(&names.b, 1, 4 * h));
    let dx = dpre.matmul(&w.w_x)?;
    let dh_prev = dpre.matmul(&w.w_h)?;
    Ok((dx, dh_prev, dc_prev))
}

fn scatter_rows_acc(table: &mut Matrix, ids: impl Iterator<Item = usize>, rows: &Matrix) {
    for (bi, id) in ids.enumerate() {
        let src = rows.row(bi);
        for (j, v) in table.row_mut(id).iter_mut().enumerate() {
            *v += src[j];
        }
    }
}

fn split_cols(m: &Matrix, at: usize) -> (Matrix, Matrix) {
    let mut left = Matrix::zeros(m.rows(), at);
    let mut right = Matrix::zeros(m.rows(), m.cols() - at);
    for bi in 0..m.rows() {
        let row = m.row(bi);
        left.row_mut(bi).copy_from_slice(&row[..at]);
        right.row_mut(bi).copy_from_slice(&row[at..]);
    }
    (left, right)
}

fn masked_rows(m: &Matrix, mask: &[f64]) -> Matrix {
    let mut out = m.clone();
    for bi in 0..out.rows() {
        let w = mask[bi];
        if w != 1.0 {
            for v in out.row_mut(bi) {
                *v *= w;
            }
        }
    }
    out
}

fn inverse_masked_rows(m: &Matrix, mask: &[f64]) -> Matrix {
    let inv: Vec<f64> = mask.iter().map(|&w| 1.0 - w).collect();
    masked_rows(m, &inv)
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x *= y;
    }
    out
}

/// Gradients of the masked mean cross-entropy w.r.t. every parameter.
pub fn backward(
    model: &Seq2SeqModel,
    batch: &PaddedBatch,
    cache: &ForwardCache,
) -> Result<Gradients> {
    let b = batch.batch;
    let s = batch.src_len;
    let t1 = batch.tgt_len;
    let h = model.config.hidden_dim;
    let e = model.config.embed_dim;
    let hh = model.dir_hidden();
    let layers = model.config.layers;
    let vt = model.config.target_vocab_size;

    let mut grads = Gradients::new();
    // Materialize every tensor so optimizers and checks see the full
    // set even when some gradient is identically zero.
    model.visit_params_zero_grads(&mut grads);

    if cache.mask_total == 0.0 {
        return Ok(grads);
    }
    let inv = 1.0 / cache.mask_total;

    let dec_names: Vec<CellNames> = (0..layers)
        .map(|l| CellNames::new(&format!("dec.l{}", l)))
        .collect();

    let top_ann = &cache.enc[layers - 1].ann;
    let mut d_ann_top: Vec<Matrix> = (0..s).map(|_| Matrix::zeros(b, h)).collect();
    let mut d_p: Vec<Matrix> = (0..s).map(|_| Matrix::zeros(b, h)).collect();

    let mut d_h_next: Vec<Matrix> = (0..layers).map(|_| Matrix::zeros(b, h)).collect();
    let mut d_c_next: Vec<Matrix> = (0..layers).map(|_| Matrix::zeros(b, h)).collect();
    let mut d_feed = Matrix::zeros(b, h);

    for t in (0..t1).rev() {
        let step = &cache.steps[t];
        let h_top = &cache.dec_hs[layers - 1][t + 1];

        // Softmax + clamped cross-entropy. When the target probability
        // sits below the floor the loss is locally constant, so the
        // whole row's gradient is zero.
        let mut dlogits = Matrix::zeros(b, vt);
        for bi in 0..b {
            let m = batch.tgt_masked(bi, t);
            if m == 0.0 {
                continue;
            }
            let y = batch.tgt_out_id(bi, t);
            let probs = step.probs.row(bi);
            if probs[y] < PROB_FLOOR {
                continue;
            }
            let scale = m * inv;
            let out = dlogits.row_mut(bi);
            for (j, &p) in probs.iter().enumerate() {
                out[j] = scale * p;
            }
            out[y] -= scale;
        }

        {
            let g = grads.entry("out.proj", vt, h);
            gemm(true, false, &dlogits, &step.h_tilde, 1.0, g)?;
        }
        let mut d_h_tilde = dlogits.matmul(&model.output_proj)?;
        d_h_tilde.add_assign(&d_feed)?;

        // h̃ = tanh(W_c [context; h_top])
        let mut d_pre = d_h_tilde;
        for (v, &ht) in d_pre.data_mut().iter_mut().zip(step.h_tilde.data()) {
            *v *= 1.0 - ht * ht;
        }
        let cat = Matrix::concat_cols(&step.context, h_top)?;
        {
            let g = grads.entry("attn.w_c", h, 2 * h);
            gemm(true, false, &d_pre, &cat, 1.0, g)?;
        }
        let d_cat = d_pre.matmul(&model.attn_combine)?;
        let (d_context, mut d_h_top) = split_cols(&d_cat, h);

        // context = Σ_s w_s · a_s
        let mut d_weights = Matrix::zeros(b, s);
        for (si, a) in top_ann.iter().enumerate() {
            for bi in 0..b {
                let w = step.weights.get(bi, si);
                let dot: f64 = d_context
                    .row(bi)
                    .iter()
                    .zip(a.row(bi))
                    .map(|(&x, &y)| x * y)
                    .sum();
                d_weights.set(bi, si, dot);
                if w != 0.0 {
                    let dc = d_context.row(bi);
                    for (j, v) in d_ann_top[si].row_mut(bi).iter_mut().enumerate() {
                        *v += w * dc[j];
                    }
                }
            }
        }

        // softmax over scores; masked positions have weight zero and
        // therefore zero score gradient.
        let mut d_scores = Matrix::zeros(b, s);
        for bi in 0..b {
            let wrow = step.weights.row(bi);
            let dwrow = d_weights.row(bi);
            let inner: f64 = wrow.iter().zip(dwrow).map(|(&w, &dw)| w * dw).sum();
            for si in 0..s {
                d_scores.set(bi, si, wrow[si] * (dwrow[si] - inner));
            }
        }

        // score_s = h_topᵀ · P_s
        for si in 0..s {
            let p = &cache.p_mats[si];
            for bi in 0..b {
                let ds = d_scores.get(bi, si);
                if ds != 0.0 {
                    let prow = p.row(bi);
                    for (j, v) in d_h_top.row_mut(bi).iter_mut().enumerate() {
                        *v += ds * prow[j];
                    }
                    let hrow = h_top.row(bi);
                    for (j, v) in d_p[si].row_mut(bi).iter_mut().enumerate() {
                        *v += ds * hrow[j];
                    }
                }
            }
        }

        // Decoder stack, top down.
        d_h_top.add_assign(&d_h_next[layers - 1])?;
        let mut d_h_cur = d_h_top;
        for l in (0..layers).rev() {
            let (dx, dh_prev, dc_prev) = cell_backward(
                &model.decoder[l],
                &dec_names[l],
                &step.inputs[l],
                &cache.dec_hs[l][t],
                &cache.dec_cs[l][t],
                &step.cells[l],
                &d_h_cur,
                &d_c_next[l],
                &mut grads,
            )?;
            d_h_next[l] = dh_prev;
            d_c_next[l] = dc_prev;
            if l > 0 {
                // Layer l-1's output feeds this layer (through
                // dropout) and its own next step; the recurrent part
                // is folded in here and d_h_next[l-1] is overwritten
                // by the l-1 iteration right after.
                let mut down = dx;
                if let Some(mask) = &step.dropout[l - 1] {
                    down = hadamard(&down, mask);
                }
                down.add_assign(&d_h_next[l - 1])?;
                d_h_cur = down;
            } else {
                let (d_y_emb, d_ht_feed) = if model.config.input_feed {
                    split_cols(&dx, e)
                } else {
                    (dx, Matrix::zeros(b, h))
                };
                scatter_rows_acc(
                    grads.entry("tgt_embed", model.config.target_vocab_size, e),
                    (0..b).map(|bi| batch.tgt_in_id(bi, t)),
                    &d_y_emb,
                );
                d_feed = d_ht_feed;
            }
        }
    }

    // Attention parameter and annotation gradients from P_s = a_s·W_aᵀ.
    for si in 0..s {
        {
            let g = grads.entry("attn.w_a", h, h);
            gemm(true, false, &d_p[si], &top_ann[si], 1.0, g)?;
        }
        let extra = d_p[si].matmul(&model.attn_general)?;
        d_ann_top[si].add_assign(&extra)?;
    }

    // Encoder stack, top layer down. Decoder init-state gradients
    // enter at each layer's final states.
    let col_masks: Vec<Vec<f64>> = (0..s)
        .map(|t| (0..b).map(|bi| batch.src_masked(bi, t)).collect())
        .collect();
    let mut d_ann = d_ann_top;
    for l in (0..layers).rev() {
        let enc = &cache.enc[l];
        let names_f = CellNames::new(&format!("enc.l{}.fwd", l));
        let names_b = CellNames::new(&format!("enc.l{}.bwd", l));
        let (d_init_h_f, d_init_h_b) = split_cols(&d_h_next[l], hh);
        let (d_init_c_f, d_init_c_b) = split_cols(&d_c_next[l], hh);

        let in_dim = enc.inputs[0].cols();
        let mut d_inputs: Vec<Matrix> = (0..s).map(|_| Matrix::zeros(b, in_dim)).collect();

        // Forward direction: states run left to right, so gradients
        // run right to left, entering at hs[S] (the final state).
        let mut d_run_h = d_init_h_f;
        let mut d_run_c = d_init_c_f;
        for t in (0..s).rev() {
            let (d_ann_f, _) = split_cols(&d_ann[t], hh);
            let mut d_total_h = d_run_h;
            d_total_h.add_assign(&d_ann_f)?;
            let d_total_c = d_run_c;
            let dh_new = masked_rows(&d_total_h, &col_masks[t]);
            let dc_new = masked_rows(&d_total_c, &col_masks[t]);
            let (dx, dh_prev, dc_prev) = cell_backward(
                &model.encoder[l].fwd,
                &names_f,
                &enc.inputs[t],
                &enc.fwd.hs[t],
                &enc.fwd.cs[t],
                &enc.fwd.caches[t],
                &dh_new,
                &dc_new,
                &mut grads,
            )?;
            d_inputs[t].add_assign(&dx)?;
            d_run_h = inverse_masked_rows(&d_total_h, &col_masks[t]);
            d_run_h.add_assign(&dh_prev)?;
            d_run_c = inverse_masked_rows(&d_total_c, &col_masks[t]);
            d_run_c.add_assign(&dc_prev)?;
        }

        // Backward direction: states run right to left (hb[t] built
        // from hb[t+1]), so gradients run left to right, entering at
        // hb[0] (its final state).
        let mut d_run_h = d_init_h_b;
        let mut d_run_c = d_init_c_b;
        for t in 0..s {
            let (_, d_ann_b) = split_cols(&d_ann[t], hh);
            let mut d_total_h = d_run_h;
            d_total_h.add_assign(&d_ann_b)?;
            let d_total_c = d_run_c;
            let dh_new = masked_rows(&d_total_h, &col_masks[t]);
            let dc_new = masked_rows(&d_total_c, &col_masks[t]);
            let (dx, dh_prev, dc_prev) = cell_backward(
                &model.encoder[l].bwd,
                &names_b,
                &enc.inputs[t],
                &enc.bwd.hs[t + 1],
                &enc.bwd.cs[t + 1],
                &enc.bwd.caches[t],
                &dh_new,
                &dc_new,
                &mut grads,
            )?;
            d_inputs[t].add_assign(&dx)?;
            d_run_h = inverse_masked_rows(&d_total_h, &col_masks[t]);
            d_run_h.add_assign(&dh_prev)?;
            d_run_c = inverse_masked_rows(&d_total_c, &col_masks[t]);
            d_run_c.add_assign(&dc_prev)?;
        }

        if l > 0 {
            let mut next_down: Vec<Matrix> = Vec::with_capacity(s);
            for (t, mut dx) in d_inputs.into_iter().enumerate() {
                if let Some(masks) = &enc.dropout {
                    dx = hadamard(&dx, &masks[t]);
                }
                next_down.push(dx);
            }
            d_ann = next_down;
        } else {
            let g = grads.entry("src_embed", model.config.source_vocab_size, e);
            for (t, dx) in d_inputs.iter().enumerate() {
                scatter_rows_acc(g, (0..b).map(|bi| batch.src_id(bi, t)), dx);
            }
        }
    }

    Ok(grads)
}

impl Seq2SeqModel {
    /// Insert a zero gradient tensor for every parameter.
    fn visit_params_zero_grads(&self, grads: &mut Gradients) {
        use crate::numerics::Parameters;
        self.visit(&mut |name, m| {
            grads.entry(name, m.rows(), m.cols());
        });
    }
}
