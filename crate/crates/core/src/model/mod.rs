//! The sequence-to-sequence network: character embeddings, a 2-layer
//! bi-directional LSTM encoder, a 2-layer LSTM decoder with general
//! (bilinear) global attention and input feeding, and a projection to
//! target-character logits.
//!
//! Forward and backward passes are hand-derived for this fixed
//! topology; the finite-difference audit in the training module keeps
//! the backward pass honest.

mod backward;
mod batch;
mod forward;
mod serialize;

pub use backward::backward;
pub use batch::PaddedBatch;
pub use forward::{
    attention, decoder_step, encode, forward_batch, forward_loss, lstm_cell, Attention,
    DecoderState, EncoderOutput, ForwardCache, Mode,
};
pub use serialize::{load_model, save_model};

use crate::corpus::Vocabulary;
use crate::error::{OfnError, Result};
use crate::numerics::{Matrix, Parameters, Rng};

/// Range of the uniform parameter initialization.
const INIT_RANGE: f64 = 0.1;
/// Initial value of the LSTM forget-gate bias.
const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Total hidden width; each encoder direction uses half of it.
    pub hidden_dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub source_vocab_size: usize,
    pub target_vocab_size: usize,
    /// Greedy decoding stops after ⌈factor·source_len⌉ + 10 steps.
    pub max_decode_factor: f64,
    /// Feed the previous attentional state into the next decoder step.
    pub input_feed: bool,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            embed_dim: 64,
            hidden_dim: 128,
            layers: 2,
            dropout: 0.3,
            source_vocab_size: 0,
            target_vocab_size: 0,
            max_decode_factor: 3.0,
            input_feed: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(OfnError::config("embed_dim must be >= 1"));
        }
        if self.hidden_dim < 2 || self.hidden_dim % 2 != 0 {
            return Err(OfnError::config(
                "hidden_dim must be even and >= 2 (it is split across encoder directions)",
            ));
        }
        if self.layers == 0 {
            return Err(OfnError::config("layers must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(OfnError::config("dropout must be in [0, 1)"));
        }
        if self.source_vocab_size < 5 || self.target_vocab_size < 5 {
            return Err(OfnError::config(
                "vocabulary sizes must cover the controls and the underscore",
            ));
        }
        if self.max_decode_factor <= 0.0 {
            return Err(OfnError::config("max_decode_factor must be > 0"));
        }
        Ok(())
    }
}

/// Four-gate LSTM weights. Gate blocks are laid out [input, forget,
/// cell, output] along the 4h axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// (4h × in)
    pub w_x: Matrix,
    /// (4h × h)
    pub w_h: Matrix,
    /// (1 × 4h)
    pub b: Matrix,
}

impl LstmWeights {
    fn zeros(in_dim: usize, hidden: usize) -> LstmWeights {
        LstmWeights {
            w_x: Matrix::zeros(4 * hidden, in_dim),
            w_h: Matrix::zeros(4 * hidden, hidden),
            b: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn in_dim(&self) -> usize {
        self.w_x.cols()
    }
}

/// One bi-directional encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: LstmWeights,
    pub bwd: LstmWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    /// Chunk size of the training data this model was built for.
    pub chunk_size: usize,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    /// (V_s × E)
    pub source_embed: Matrix,
    /// (V_t × E)
    pub target_embed: Matrix,
    pub encoder: Vec<BiLstm>,
    pub decoder: Vec<LstmWeights>,
    /// Bilinear attention matrix W_a (H × H).
    pub attn_general: Matrix,
    /// Attentional combiner W_c (H × 2H).
    pub attn_combine: Matrix,
    /// Output projection (V_t × H).
    pub output_proj: Matrix,
}

impl Seq2SeqModel {
    /// Initialize with uniform(-0.1, 0.1) weights and forget biases
    /// at 1.0, all drawn in a fixed order from the seed.
    pub fn new(
        config: ModelConfig,
        chunk_size: usize,
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        seed: u64,
    ) -> Result<Seq2SeqModel> {
        let mut config = config;
        config.source_vocab_size = source_vocab.size();
        config.target_vocab_size = target_vocab.size();
        config.validate()?;
        if chunk_size < 1 {
            return Err(OfnError::config("chunk_size must be >= 1"));
        }
        let mut rng = Rng::seed_from(seed);
        let model = Self::build(config, chunk_size, source_vocab, target_vocab, |r, c| {
            Matrix::uniform(r, c, -INIT_RANGE, INIT_RANGE, &mut rng)
        });
        Ok(model)
    }

    /// All-zero parameters; used by tests and by the loader.
    pub fn zeros(
        config: ModelConfig,
        chunk_size: usize,
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
    ) -> Result<Seq2SeqModel> {
        let mut config = config;
        config.source_vocab_size = source_vocab.size();
        config.target_vocab_size = target_vocab.size();
        config.validate()?;
        let mut model = Self::build(
            config,
            chunk_size,
            source_vocab,
            target_vocab,
            Matrix::zeros,
        );
        for layer in &mut model.encoder {
            layer.fwd.b.fill(0.0);
            layer.bwd.b.fill(0.0);
        }
        for layer in &mut model.decoder {
            layer.b.fill(0.0);
        }
        Ok(model)
    }

    fn build(
        config: ModelConfig,
        chunk_size: usize,
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        mut init: impl FnMut(usize, usize) -> Matrix,
    ) -> Seq2SeqModel {
        let e = config.embed_dim;
        let h = config.hidden_dim;
        let hh = h / 2;
        let source_embed = init(config.source_vocab_size, e);
        let target_embed = init(config.target_vocab_size, e);
        let mut encoder = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let in_dim = if l == 0 { e } else { h };
            let mut fwd = LstmWeights::zeros(in_dim, hh);
            let mut bwd = LstmWeights::zeros(in_dim, hh);
            for w in [&mut fwd, &mut bwd] {
                w.w_x = init(4 * hh, in_dim);
                w.w_h = init(4 * hh, hh);
                w.b = Matrix::zeros(1, 4 * hh);
                for j in hh..2 * hh {
                    w.b.set(0, j, FORGET_BIAS);
                }
            }
            encoder.push(BiLstm { fwd, bwd });
        }
        let mut decoder = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let in_dim = if l == 0 {
                e + if config.input_feed { h } else { 0 }
            } else {
                h
            };
            let mut w = LstmWeights::zeros(in_dim, h);
            w.w_x = init(4 * h, in_dim);
            w.w_h = init(4 * h, h);
            for j in h..2 * h {
                w.b.set(0, j, FORGET_BIAS);
            }
            decoder.push(w);
        }
        let attn_general = init(h, h);
        let attn_combine = init(h, 2 * h);
        let output_proj = init(config.target_vocab_size, h);
        Seq2SeqModel {
            config,
            chunk_size,
            source_vocab,
            target_vocab,
            source_embed,
            target_embed,
            encoder,
            decoder,
            attn_general,
            attn_combine,
            output_proj,
        }
    }

    /// Per-direction encoder hidden width (H/2).
    pub fn dir_hidden(&self) -> usize {
        self.config.hidden_dim / 2
    }

    /// Verify every tensor shape against the configuration.
    pub fn audit_shapes(&self) -> Result<()> {
        let e = self.config.embed_dim;
        let h = self.config.hidden_dim;
        let hh = h / 2;
        let vs = self.config.source_vocab_size;
        let vt = self.config.target_vocab_size;
        fn check(problems: &mut Vec<String>, name: &str, m: &Matrix, want: (usize, usize)) {
            if m.shape() != want {
                problems.push(format!("{}: have {:?}, want {:?}", name, m.shape(), want));
            }
        }
        let mut problems = Vec::new();
        check(&mut problems, "src_embed", &self.source_embed, (vs, e));
        check(&mut problems, "tgt_embed", &self.target_embed, (vt, e));
        if self.encoder.len() != self.config.layers || self.decoder.len() != self.config.layers {
            problems.push("layer count mismatch".to_string());
        }
        for (l, layer) in self.encoder.iter().enumerate() {
            let in_dim = if l == 0 { e } else { h };
            for (dir, w) in [("fwd", &layer.fwd), ("bwd", &layer.bwd)] {
                let name = format!("enc.l{}.{}", l, dir);
                check(
                    &mut problems,
                    &format!("{}.w_x", name),
                    &w.w_x,
                    (4 * hh, in_dim),
                );
                check(
                    &mut problems,
                    &format!("{}.w_h", name),
                    &w.w_h,
                    (4 * hh, hh),
                );
                check(&mut problems, &format!("{}.b", name), &w.b, (1, 4 * hh));
            }
        }
        for (l, w) in self.decoder.iter().enumerate() {
            let in_dim = if l == 0 {
                e + if self.config.input_feed { h } else { 0 }
            } else {
                h
            };
            check(
                &mut problems,
                &format!("dec.l{}.w_x", l),
                &w.w_x,
                (4 * h, in_dim),
            );
            check(
                &mut problems,
                &format!("dec.l{}.w_h", l),
                &w.w_h,
                (4 * h, h),
            );
            check(&mut problems, &format!("dec.l{}.b", l), &w.b, (1, 4 * h));
        }
        check(&mut problems, "attn.w_a", &self.attn_general, (h, h));
        check(&mut problems, "attn.w_c", &self.attn_combine, (h, 2 * h));
        check(&mut problems, "out.proj", &self.output_proj, (vt, h));
        if self.source_vocab.size() != vs || self.target_vocab.size() != vt {
            problems.push("vocabulary sizes disagree with config".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(OfnError::shape(problems.join("; ")))
        }
    }
}

impl Parameters for Seq2SeqModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &Matrix)) {
        f("src_embed", &self.source_embed);
        f("tgt_embed", &self.target_embed);
        for (l, layer) in self.encoder.iter().enumerate() {
            for (dir, w) in [("fwd", &layer.fwd), ("bwd", &layer.bwd)] {
                f(&format!("enc.l{}.{}.w_x", l, dir), &w.w_x);
                f(&format!("enc.l{}.{}.w_h", l, dir), &w.w_h);
                f(&format!("enc.l{}.{}.b", l, dir), &w.b);
            }
        }
        for (l, w) in self.decoder.iter().enumerate() {
            f(&format!("dec.l{}.w_x", l), &w.w_x);
            f(&format!("dec.l{}.w_h", l), &w.w_h);
            f(&format!("dec.l{}.b", l), &w.b);
        }
        f("attn.w_a", &self.attn_general);
        f("attn.w_c", &self.attn_combine);
        f("out.proj", &self.output_proj);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f("src_embed", &mut self.source_embed);
        f("tgt_embed", &mut self.target_embed);
        for (l, layer) in self.encoder.iter_mut().enumerate() {
            for (dir, w) in [("fwd", &mut layer.fwd), ("bwd", &mut layer.bwd)] {
                f(&format!("enc.l{}.{}.w_x", l, dir), &mut w.w_x);
                f(&format!("enc.l{}.{}.w_h", l, dir), &mut w.w_h);
                f(&format!("enc.l{}.{}.b", l, dir), &mut w.b);
            }
        }
        for (l, w) in self.decoder.iter_mut().enumerate() {
            f(&format!("dec.l{}.w_x", l), &mut w.w_x);
            f(&format!("dec.l{}.w_h", l), &mut w.w_h);
            f(&format!("dec.l{}.b", l), &mut w.b);
        }
        f("attn.w_a", &mut self.attn_general);
        f("attn.w_c", &mut self.attn_combine);
        f("out.proj", &mut self.output_proj);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    fn vocabs() -> (Vocabulary, Vocabulary) {
        (
            Vocabulary::from_chars("abc".chars()),
            Vocabulary::from_chars("abd".chars()),
        )
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            hidden_dim: 8,
            layers: 2,
            dropout: 0.0,
            source_vocab_size: 0,
            target_vocab_size: 0,
            max_decode_factor: 3.0,
            input_feed: true,
        }
    }

    #[test]
    fn shape_audit_passes_on_fresh_model() {
        let (sv, tv) = vocabs();
        let m = Seq2SeqModel::new(tiny_config(), 1, sv, tv, 3435).unwrap();
        m.audit_shapes().unwrap();
    }

    #[test]
    fn shape_audit_catches_corruption() {
        let (sv, tv) = vocabs();
        let mut m = Seq2SeqModel::new(tiny_config(), 1, sv, tv, 3435).unwrap();
        m.attn_general = Matrix::zeros(3, 3);
        assert!(m.audit_shapes().is_err());
    }

    #[test]
    fn odd_hidden_dim_rejected() {
        let (sv, tv) = vocabs();
        let cfg = ModelConfig {
            hidden_dim: 7,
            ..tiny_config()
        };
        assert!(Seq2SeqModel::new(cfg, 1, sv, tv, 1).is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let (sv, tv) = vocabs();
        let a = Seq2SeqModel::new(tiny_config(), 1, sv.clone(), tv.clone(), 99).unwrap();
        let b = Seq2SeqModel::new(tiny_config(), 1, sv, tv, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let (sv, tv) = vocabs();
        let m = Seq2SeqModel::new(tiny_config(), 1, sv, tv, 7).unwrap();
        let hh = m.dir_hidden();
        for layer in &m.encoder {
            for j in hh..2 * hh {
                assert_eq!(layer.fwd.b.get(0, j), 1.0);
                assert_eq!(layer.bwd.b.get(0, j), 1.0);
            }
            assert_eq!(layer.fwd.b.get(0, 0), 0.0);
        }
        let h = m.config.hidden_dim;
        for layer in &m.decoder {
            for j in h..2 * h {
                assert_eq!(layer.b.get(0, j), 1.0);
            }
        }
    }

    #[test]
    fn param_names_are_stable_and_complete() {
        let (sv, tv) = vocabs();
        let m = Seq2SeqModel::new(tiny_config(), 1, sv, tv, 7).unwrap();
        let names = m.param_names();
        assert_eq!(names.len(), 2 + 2 * 2 * 3 + 2 * 3 + 3);
        assert!(names.contains(&"enc.l1.bwd.w_h".to_string()));
        assert!(names.contains(&"attn.w_a".to_string()));
    }
}
