//! Greedy chunk decoding and sentence-level stitching.
//!
//! The decoder emits characters freely, so its word count can disagree
//! with the input chunk's. Stitching repairs that: missing trailing
//! positions fall back to their own surface form, surplus predictions
//! are dropped from the end, and either case flags the affected token.
//! The result always carries exactly one lemma per input token.

use crate::corpus::{decode_chars, encode_chars, is_punct_word, BOS_ID, EOS_ID, UNK_ID};
use crate::error::Result;
use crate::model::{decoder_step, encode, DecoderState, Seq2SeqModel};

/// One normalized token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedToken {
    pub surface: String,
    pub lemma: String,
    pub repaired: bool,
}

/// Per-sentence normalization output; `tokens` is aligned 1:1 with
/// the input surfaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationResult {
    pub tokens: Vec<NormalizedToken>,
    pub chunk_size: usize,
}

impl NormalizationResult {
    pub fn lemmas(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.lemma.clone()).collect()
    }

    pub fn repaired_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.repaired).count()
    }
}

/// Options for sentence normalization.
#[derive(Debug, Clone, Default)]
pub struct NormalizeOptions {
    /// Let punctuation tokens occupy chunk slots as they do in the
    /// training pairs, instead of passing them through.
    pub chunk_punct: bool,
}

/// Greedy decode: from BOS, emit the argmax symbol each step (ties
/// break toward the lowest id), stop at EOS or at
/// ⌈max_decode_factor·source_len⌉ + 10 steps. UNK emissions are fed
/// back as context but dropped from the returned sequence.
pub fn decode_greedy(model: &Seq2SeqModel, source_ids: &[usize]) -> Result<Vec<usize>> {
    let enc = encode(model, source_ids)?;
    let mut state = DecoderState::init(model, &enc);
    let cap = (model.config.max_decode_factor * source_ids.len() as f64).ceil() as usize + 10;
    let mut out = Vec::new();
    let mut prev = BOS_ID;
    for _ in 0..cap {
        let dist = decoder_step(model, &enc, &mut state, prev)?;
        let mut best = 0;
        let mut best_p = dist[0];
        for (id, &p) in dist.iter().enumerate().skip(1) {
            if p > best_p {
                best = id;
                best_p = p;
            }
        }
        if best == EOS_ID {
            break;
        }
        if best != UNK_ID {
            out.push(best);
        }
        prev = best;
    }
    Ok(out)
}

/// Normalize one chunk of words: encode to characters, decode
/// greedily, split the emitted characters back into words. The output
/// word count may disagree with the input; the caller repairs.
pub fn normalize_chunk(model: &Seq2SeqModel, surfaces: &[String]) -> Result<Vec<String>> {
    let chars = encode_chars(surfaces)?;
    let ids = model.source_vocab.encode(&chars);
    let emitted = decode_greedy(model, &ids)?;
    let out_chars = model.target_vocab.decode_to_chars(&emitted);
    Ok(decode_chars(&out_chars))
}

/// Normalize a sentence with the model's decoder. Punctuation passes
/// through unchanged (unless `chunk_punct`), the remaining tokens are
/// chunked exactly like training data, and per-chunk predictions are
/// repaired to one lemma per token.
pub fn normalize_sentence(
    model: &Seq2SeqModel,
    surfaces: &[String],
    chunk_size: usize,
    options: &NormalizeOptions,
) -> Result<NormalizationResult> {
    normalize_sentence_with(
        |chunk| normalize_chunk(model, chunk),
        surfaces,
        chunk_size,
        options,
    )
}

/// Sentence stitching over an arbitrary chunk normalizer; the tests
/// inject word-count-mismatching normalizers to force both repair
/// branches.
pub fn normalize_sentence_with<F>(
    mut normalize: F,
    surfaces: &[String],
    chunk_size: usize,
    options: &NormalizeOptions,
) -> Result<NormalizationResult>
where
    F: FnMut(&[String]) -> Result<Vec<String>>,
{
    if chunk_size < 1 {
        return Err(crate::error::OfnError::config("chunk_size must be >= 1"));
    }
    let mut tokens: Vec<Option<NormalizedToken>> = vec![None; surfaces.len()];
    let mut chunk_positions: Vec<usize> = Vec::new();
    for (i, surface) in surfaces.iter().enumerate() {
        if !options.chunk_punct && is_punct_word(surface) {
            tokens[i] = Some(NormalizedToken {
                surface: surface.clone(),
                lemma: surface.clone(),
                repaired: false,
            });
        } else {
            chunk_positions.push(i);
        }
    }
    for window in chunk_positions.chunks(chunk_size) {
        let chunk: Vec<String> = window.iter().map(|&i| surfaces[i].clone()).collect();
        let mut predicted = normalize(&chunk)?;
        let wanted = window.len();
        let got = predicted.len();
        if got > wanted {
            // Surplus predictions are dropped from the end; the last
            // kept token carries the repair flag.
            predicted.truncate(wanted);
            for (k, &pos) in window.iter().enumerate() {
                tokens[pos] = Some(NormalizedToken {
                    surface: surfaces[pos].clone(),
                    lemma: predicted[k].clone(),
                    repaired: k == wanted - 1,
                });
            }
        } else {
            // Matching counts map positionally; missing trailing
            // positions keep their own surface form, flagged.
            for (k, &pos) in window.iter().enumerate() {
                if k < got {
                    tokens[pos] = Some(NormalizedToken {
                        surface: surfaces[pos].clone(),
                        lemma: predicted[k].clone(),
                        repaired: false,
                    });
                } else {
                    tokens[pos] = Some(NormalizedToken {
                        surface: surfaces[pos].clone(),
                        lemma: surfaces[pos].clone(),
                        repaired: true,
                    });
                }
            }
        }
    }
    Ok(NormalizationResult {
        tokens: tokens.into_iter().map(Option::unwrap).collect(),
        chunk_size,
    })
}
