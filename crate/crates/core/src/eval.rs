//! Word-level accuracy scoring, the chunk-size sweep, candidate-list
//! baseline scoring, and the error taxonomy report.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Corpus, Sentence};
use crate::error::{OfnError, Result};
use crate::inference::{normalize_sentence, NormalizeOptions};
use crate::model::Seq2SeqModel;
use crate::numerics::Rng;

/// How many (prediction, gold) pairs the error report keeps for
/// manual inspection.
const TOP_ERRORS: usize = 20;

/// Scoring results. `total` counts scored tokens: punctuation-masked
/// positions are excluded and reported separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub excluded_punct: usize,
    /// Wrong predictions that are nevertheless real words (only
    /// counted when a lexicon is supplied).
    pub wrong_in_lexicon: usize,
    /// Wrong predictions absent from the lexicon.
    pub non_word: usize,
    /// Tokens whose lemma came from alignment repair.
    pub repaired: usize,
    /// Most frequent (prediction, gold) error pairs, by descending
    /// count then lexicographically.
    pub top_errors: Vec<((String, String), usize)>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Machine-readable key=value block.
    pub fn to_kv(&self) -> String {
        format!(
            "total={}\ncorrect={}\naccuracy={:.6}\nexcluded_punct={}\nwrong_in_lexicon={}\nnon_word={}\nrepaired={}\n",
            self.total,
            self.correct,
            self.accuracy(),
            self.excluded_punct,
            self.wrong_in_lexicon,
            self.non_word,
            self.repaired
        )
    }
}

fn fold(s: &str, fold_case: bool) -> String {
    if fold_case {
        s.to_lowercase()
    } else {
        s.to_string()
    }
}

fn check_aligned(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || b != c {
        return Err(OfnError::Alignment(format!(
            "sequence lengths disagree: {} predictions, {} gold, {} mask entries",
            a, b, c
        )));
    }
    Ok(())
}

/// Exact-match word accuracy after optional case folding, punctuation
/// positions excluded via the mask.
pub fn word_accuracy(
    predictions: &[String],
    gold: &[String],
    punct_mask: &[bool],
    fold_case: bool,
) -> Result<EvalReport> {
    check_aligned(predictions.len(), gold.len(), punct_mask.len())?;
    let mut report = EvalReport::default();
    for ((p, g), &is_punct) in predictions.iter().zip(gold).zip(punct_mask) {
        if is_punct {
            report.excluded_punct += 1;
            continue;
        }
        report.total += 1;
        if fold(p, fold_case) == fold(g, fold_case) {
            report.correct += 1;
        }
    }
    Ok(report)
}

/// Candidate-list baseline scoring: a token counts as correct when the
/// gold lemma appears anywhere in its candidate list.
pub fn in_list_accuracy(
    analyses: &[Vec<String>],
    gold: &[String],
    punct_mask: &[bool],
    fold_case: bool,
) -> Result<EvalReport> {
    check_aligned(analyses.len(), gold.len(), punct_mask.len())?;
    let mut report = EvalReport::default();
    for ((candidates, g), &is_punct) in analyses.iter().zip(gold).zip(punct_mask) {
        if is_punct {
            report.excluded_punct += 1;
            continue;
        }
        report.total += 1;
        let g = fold(g, fold_case);
        if candidates.iter().any(|c| fold(c, fold_case) == g) {
            report.correct += 1;
        }
    }
    Ok(report)
}

/// Word accuracy plus an error taxonomy: each wrong prediction is
/// classified as a real word with the wrong lemma or as a non-word,
/// and the most frequent error pairs are listed for inspection.
pub fn error_report(
    predictions: &[String],
    gold: &[String],
    punct_mask: &[bool],
    lexicon: &BTreeSet<String>,
    fold_case: bool,
) -> Result<EvalReport> {
    if lexicon.is_empty() {
        return Err(OfnError::config("error taxonomy needs a non-empty lexicon"));
    }
    check_aligned(predictions.len(), gold.len(), punct_mask.len())?;
    let mut report = EvalReport::default();
    let mut pair_counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for ((p, g), &is_punct) in predictions.iter().zip(gold).zip(punct_mask) {
        if is_punct {
            report.excluded_punct += 1;
            continue;
        }
        report.total += 1;
        let pf = fold(p, fold_case);
        let gf = fold(g, fold_case);
        if pf == gf {
            report.correct += 1;
        } else {
            if lexicon.contains(&pf) {
                report.wrong_in_lexicon += 1;
            } else {
                report.non_word += 1;
            }
            *pair_counts.entry((pf, gf)).or_insert(0) += 1;
        }
    }
    let mut pairs: Vec<((String, String), usize)> = pair_counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs.truncate(TOP_ERRORS);
    report.top_errors = pairs;
    Ok(report)
}

/// Model evaluation options.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub fold_case: bool,
    /// Score punctuation tokens too instead of masking them out.
    pub include_punct: bool,
    pub normalize: NormalizeOptions,
}

impl Default for EvalOptions {
    fn default() -> EvalOptions {
        EvalOptions {
            fold_case: true,
            include_punct: false,
            normalize: NormalizeOptions::default(),
        }
    }
}

/// Normalize every sentence with the model (at its own chunk size) and
/// score against the gold lemmas.
pub fn evaluate_model(
    model: &Seq2SeqModel,
    sentences: &[Sentence],
    lexicon: Option<&BTreeSet<String>>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let mut predictions = Vec::new();
    let mut gold = Vec::new();
    let mut mask = Vec::new();
    let mut repaired = 0;
    for sentence in sentences {
        let surfaces = sentence.surfaces();
        let result = normalize_sentence(model, &surfaces, model.chunk_size, &options.normalize)?;
        repaired += result.repaired_count();
        for (token, out) in sentence.tokens.iter().zip(&result.tokens) {
            predictions.push(out.lemma.clone());
            gold.push(token.lemma.clone());
            mask.push(if options.include_punct {
                false
            } else {
                token.is_punct
            });
        }
    }
    let mut report = match lexicon {
        Some(lex) => error_report(&predictions, &gold, &mask, lex, options.fold_case)?,
        None => word_accuracy(&predictions, &gold, &mask, options.fold_case)?,
    };
    report.repaired = repaired;
    Ok(report)
}

/// One sweep row: a model keyed by its chunk size.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub chunk_size: usize,
    pub report: EvalReport,
}

/// Evaluate several models (one per chunk size) over the same test
/// sentences.
pub fn chunk_sweep(
    models: &[&Seq2SeqModel],
    test: &[Sentence],
    lexicon: Option<&BTreeSet<String>>,
    options: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = Vec::with_capacity(models.len());
    for model in models {
        rows.push(SweepRow {
            chunk_size: model.chunk_size,
            report: evaluate_model(model, test, lexicon, options)?,
        });
    }
    rows.sort_by_key(|r| r.chunk_size);
    Ok(rows)
}

/// Render sweep rows as an accuracy table, one column per chunk size.
pub fn render_sweep_table(rows: &[SweepRow]) -> String {
    let mut header = String::from("|          |");
    let mut line = String::from("| Accuracy |");
    for row in rows {
        header.push_str(&format!(" Chunk {} |", row.chunk_size));
        let cell = format!("{:.1}%", row.report.accuracy() * 100.0);
        let width = format!(" Chunk {} ", row.chunk_size).len();
        line.push_str(&format!("{:>width$}|", format!("{} ", cell), width = width));
    }
    format!("{}\n{}\n", header, line)
}

/// Seeded uniform sample of `n` sentences without replacement,
/// ordered by draw.
pub fn sample_sentences(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<Sentence>> {
    let all: Vec<&Sentence> = corpus.sentences().collect();
    if n > all.len() {
        return Err(OfnError::config(format!(
            "cannot sample {} sentences from a corpus of {}",
            n,
            all.len()
        )));
    }
    let mut rng = Rng::seed_from(seed);
    let mut indices: Vec<usize> = (0..all.len()).collect();
    for i in 0..n {
        let j = i + rng.below(indices.len() - i);
        indices.swap(i, j);
    }
    Ok(indices[..n].iter().map(|&i| all[i].clone()).collect())
}
