//! Padded id tensors for a batch of chunk pairs.

use crate::corpus::{ChunkPair, Vocabulary, BOS_ID, EOS_ID, PAD_ID};

/// A batch ready for the model: source ids padded to the batch
/// maximum, teacher-forcing decoder inputs (BOS followed by the
/// target) and outputs (target followed by EOS), and the loss mask
/// that zeroes PAD positions.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub batch: usize,
    /// Source length after padding.
    pub src_len: usize,
    /// Decoder length after padding (target length + 1 for EOS).
    pub tgt_len: usize,
    /// (batch × src_len), row-major.
    pub src_ids: Vec<usize>,
    /// 1.0 at real source positions, 0.0 at padding; (batch × src_len).
    pub src_mask: Vec<f64>,
    /// Decoder inputs, (batch × tgt_len).
    pub tgt_in: Vec<usize>,
    /// Decoder outputs, (batch × tgt_len).
    pub tgt_out: Vec<usize>,
    /// 1.0 where tgt_out is a real symbol (including EOS), 0.0 at
    /// padding; (batch × tgt_len).
    pub tgt_mask: Vec<f64>,
}

impl PaddedBatch {
    pub fn from_pairs(
        pairs: &[&ChunkPair],
        source_vocab: &Vocabulary,
        target_vocab: &Vocabulary,
    ) -> PaddedBatch {
        Self::with_extra_padding(pairs, source_vocab, target_vocab, 0, 0)
    }

    /// Like [`PaddedBatch::from_pairs`] but with additional all-PAD
    /// columns appended; the loss must be invariant to them.
    pub fn with_extra_padding(
        pairs: &[&ChunkPair],
        source_vocab: &Vocabulary,
        target_vocab: &Vocabulary,
        extra_src: usize,
        extra_tgt: usize,
    ) -> PaddedBatch {
        let batch = pairs.len();
        let src_len = pairs.iter().map(|p| p.source.len()).max().unwrap_or(0) + extra_src;
        let tgt_len = pairs.iter().map(|p| p.target.len()).max().unwrap_or(0) + 1 + extra_tgt;

        let mut src_ids = vec![PAD_ID; batch * src_len];
        let mut src_mask = vec![0.0; batch * src_len];
        let mut tgt_in = vec![PAD_ID; batch * tgt_len];
        let mut tgt_out = vec![PAD_ID; batch * tgt_len];
        let mut tgt_mask = vec![0.0; batch * tgt_len];

        for (b, pair) in pairs.iter().enumerate() {
            for (t, &c) in pair.source.iter().enumerate() {
                src_ids[b * src_len + t] = source_vocab.id_of(c);
                src_mask[b * src_len + t] = 1.0;
            }
            let target_ids = target_vocab.encode(&pair.target);
            tgt_in[b * tgt_len] = BOS_ID;
            for (t, &id) in target_ids.iter().enumerate() {
                tgt_in[b * tgt_len + t + 1] = id;
                tgt_out[b * tgt_len + t] = id;
                tgt_mask[b * tgt_len + t] = 1.0;
            }
            tgt_out[b * tgt_len + target_ids.len()] = EOS_ID;
            tgt_mask[b * tgt_len + target_ids.len()] = 1.0;
        }

        PaddedBatch {
            batch,
            src_len,
            tgt_len,
            src_ids,
            src_mask,
            tgt_in,
            tgt_out,
            tgt_mask,
        }
    }

    #[inline]
    pub fn src_id(&self, b: usize, t: usize) -> usize {
        self.src_ids[b * self.src_len + t]
    }

    #[inline]
    pub fn src_masked(&self, b: usize, t: usize) -> f64 {
        self.src_mask[b * self.src_len + t]
    }

    #[inline]
    pub fn tgt_in_id(&self, b: usize, t: usize) -> usize {
        self.tgt_in[b * self.tgt_len + t]
    }

    #[inline]
    pub fn tgt_out_id(&self, b: usize, t: usize) -> usize {
        self.tgt_out[b * self.tgt_len + t]
    }

    #[inline]
    pub fn tgt_masked(&self, b: usize, t: usize) -> f64 {
        self.tgt_mask[b * self.tgt_len + t]
    }

    /// Number of real (unmasked) target symbols in the batch.
    pub fn target_symbols(&self) -> f64 {
        self.tgt_mask.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, ChunkPair};

    fn pair(src: &str, tgt: &str) -> ChunkPair {
        ChunkPair {
            source: src.chars().collect(),
            target: tgt.chars().collect(),
            chunk_size: 1,
        }
    }

    #[test]
    fn shapes_and_teacher_forcing_layout() {
        let pairs = vec![pair("ab", "ba"), pair("abcd", "d")];
        let (sv, tv) = build_vocab(&pairs).unwrap();
        let refs: Vec<&ChunkPair> = pairs.iter().collect();
        let b = PaddedBatch::from_pairs(&refs, &sv, &tv);
        assert_eq!(b.batch, 2);
        assert_eq!(b.src_len, 4);
        assert_eq!(b.tgt_len, 3); // max target 2 + EOS

        // first sequence: a b PAD PAD
        assert_eq!(b.src_id(0, 0), sv.id_of('a'));
        assert_eq!(b.src_id(0, 2), PAD_ID);
        assert_eq!(b.src_masked(0, 1), 1.0);
        assert_eq!(b.src_masked(0, 2), 0.0);

        // teacher forcing: in = BOS b a, out = b a EOS
        assert_eq!(b.tgt_in_id(0, 0), BOS_ID);
        assert_eq!(b.tgt_in_id(0, 1), tv.id_of('b'));
        assert_eq!(b.tgt_out_id(0, 0), tv.id_of('b'));
        assert_eq!(b.tgt_out_id(0, 2), EOS_ID);
        assert_eq!(b.tgt_masked(0, 2), 1.0);

        // second sequence: target d EOS PAD
        assert_eq!(b.tgt_out_id(1, 0), tv.id_of('d'));
        assert_eq!(b.tgt_out_id(1, 1), EOS_ID);
        assert_eq!(b.tgt_masked(1, 2), 0.0);
        assert_eq!(b.target_symbols(), 3.0 + 2.0);
    }

    #[test]
    fn extra_padding_extends_without_unmasking() {
        let pairs = vec![pair("ab", "ba")];
        let (sv, tv) = build_vocab(&pairs).unwrap();
        let refs: Vec<&ChunkPair> = pairs.iter().collect();
        let b = PaddedBatch::with_extra_padding(&refs, &sv, &tv, 3, 2);
        assert_eq!(b.src_len, 5);
        assert_eq!(b.tgt_len, 5);
        assert_eq!(b.target_symbols(), 3.0);
    }
}
