//! Deterministic pseudo-historical corpus generation.
//!
//! Real Old Literary Finnish training data cannot be redistributed, so
//! this module fabricates parallel corpora whose surface forms are the
//! lemmas perturbed by a fixed pack of spelling rules emulating
//! attested historical correspondences (c for k, w for v, dh for d,
//! and so on). Every rule is a local substitution, so the induced
//! surface-to-lemma mapping stays learnable by a character transducer;
//! the bundled lemma list is built so that no two lemmas can produce
//! the same surface form.

use crate::corpus::{Corpus, Document, Sentence, Token};
use crate::error::{OfnError, Result};
use crate::numerics::Rng;
use std::collections::BTreeSet;

const FINAL_VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'y', 'ä', 'ö'];

/// Sentences per generated document; document-level splits need more
/// than one document, so the generator opens a new one at this cadence.
pub const SENTENCES_PER_DOCUMENT: usize = 1000;

/// One spelling perturbation. Applied left-to-right over a word's
/// occurrences of the pattern, each occurrence firing with the rule's
/// probability; the first firing occurrence is replaced and the rule
/// moves on, so a rule rewrites at most one site per word.
#[derive(Debug, Clone, PartialEq)]
pub enum SpellingRule {
    Subst {
        pattern: String,
        replacement: String,
        probability: f64,
    },
    /// Drop a word-final vowel (never emptying the word).
    DropFinalVowel { probability: f64 },
}

impl SpellingRule {
    pub fn subst(pattern: &str, replacement: &str, probability: f64) -> SpellingRule {
        SpellingRule::Subst {
            pattern: pattern.to_string(),
            replacement: replacement.to_string(),
            probability,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpellingRule::Subst {
                pattern,
                probability,
                ..
            } => {
                if pattern.is_empty() {
                    return Err(OfnError::validation("rule pattern must be non-empty"));
                }
                if !(0.0..=1.0).contains(probability) {
                    return Err(OfnError::validation("rule probability must be in [0, 1]"));
                }
            }
            SpellingRule::DropFinalVowel { probability } => {
                if !(0.0..=1.0).contains(probability) {
                    return Err(OfnError::validation("rule probability must be in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// The built-in rule pack, in fixed order: k→c, v→w, d→dh, ts→tz,
/// uo→o, ä→e at probability 0.8 each, then a final-vowel drop at 0.3.
pub fn default_ruleset() -> Vec<SpellingRule> {
    vec![
        SpellingRule::subst("k", "c", 0.8),
        SpellingRule::subst("v", "w", 0.8),
        SpellingRule::subst("d", "dh", 0.8),
        SpellingRule::subst("ts", "tz", 0.8),
        SpellingRule::subst("uo", "o", 0.8),
        SpellingRule::subst("ä", "e", 0.8),
        SpellingRule::DropFinalVowel { probability: 0.3 },
    ]
}

/// Apply one rule to a word, drawing from `rng`.
fn apply_rule(word: &str, rule: &SpellingRule, rng: &mut Rng) -> String {
    match rule {
        SpellingRule::Subst {
            pattern,
            replacement,
            probability,
        } => {
            let mut from = 0;
            while let Some(pos) = word[from..].find(pattern.as_str()) {
                let at = from + pos;
                if rng.bernoulli(*probability) {
                    let mut out = String::with_capacity(word.len());
                    out.push_str(&word[..at]);
                    out.push_str(replacement);
                    out.push_str(&word[at + pattern.len()..]);
                    return out;
                }
                from = at + pattern.len();
            }
            word.to_string()
        }
        SpellingRule::DropFinalVowel { probability } => {
            let mut chars: Vec<char> = word.chars().collect();
            if chars.len() > 1
                && FINAL_VOWELS.contains(chars.last().unwrap())
                && rng.bernoulli(*probability)
            {
                chars.pop();
                chars.into_iter().collect()
            } else {
                word.to_string()
            }
        }
    }
}

/// Perturb a word with the whole pack, rules applied in order.
pub fn apply_rules(word: &str, rules: &[SpellingRule], rng: &mut Rng) -> String {
    let mut w = word.to_string();
    for rule in rules {
        w = apply_rule(&w, rule, rng);
    }
    w
}

/// Every surface form a word can take under the pack: per rule, either
/// no site fires or exactly one occurrence is rewritten. Used to check
/// that a lemma list keeps the surface-to-lemma mapping unambiguous.
pub fn surface_forms(word: &str, rules: &[SpellingRule]) -> BTreeSet<String> {
    let mut forms: BTreeSet<String> = BTreeSet::new();
    forms.insert(word.to_string());
    for rule in rules {
        let mut next = BTreeSet::new();
        for w in &forms {
            next.insert(w.clone());
            match rule {
                SpellingRule::Subst {
                    pattern,
                    replacement,
                    ..
                } => {
                    let mut from = 0;
                    while let Some(pos) = w[from..].find(pattern.as_str()) {
                        let at = from + pos;
                        let mut out = String::with_capacity(w.len());
                        out.push_str(&w[..at]);
                        out.push_str(replacement);
                        out.push_str(&w[at + pattern.len()..]);
                        next.insert(out);
                        from = at + pattern.len();
                    }
                }
                SpellingRule::DropFinalVowel { .. } => {
                    let chars: Vec<char> = w.chars().collect();
                    if chars.len() > 1 && FINAL_VOWELS.contains(chars.last().unwrap()) {
                        next.insert(chars[..chars.len() - 1].iter().collect());
                    }
                }
            }
        }
        forms = next;
    }
    forms
}

/// Generator configuration. Identical configs generate identical
/// corpora.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub lemma_list: Vec<String>,
    pub rules: Vec<SpellingRule>,
    pub sentences: usize,
    pub words_min: usize,
    pub words_max: usize,
    /// Probability of ending a sentence with a `.` token, exercising
    /// the punctuation paths downstream.
    pub period_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            lemma_list: default_lemmas(),
            rules: default_ruleset(),
            sentences: 1000,
            words_min: 3,
            words_max: 7,
            period_prob: 0.25,
            seed: 3435,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lemma_list.is_empty() {
            return Err(OfnError::config("lemma_list must be non-empty"));
        }
        if self.words_min < 1 || self.words_min > self.words_max {
            return Err(OfnError::config(format!(
                "invalid words_per_sentence range {}..={}",
                self.words_min, self.words_max
            )));
        }
        if !(0.0..=1.0).contains(&self.period_prob) {
            return Err(OfnError::config("period_prob must be in [0, 1]"));
        }
        for rule in &self.rules {
            rule.validate()?;
        }
        Ok(())
    }
}

/// The bundled list of 500 modern-Finnish-like lemmas. Built so that
/// under [`default_ruleset`] no surface form is reachable from two
/// different lemmas.
pub fn default_lemmas() -> Vec<String> {
    include_str!("../assets/lemmas.txt")
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Generate a corpus: seeded sampling from the lemma list, surfaces
/// perturbed by the rule pack, one document per 1000 sentences.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = Rng::seed_from(config.seed);
    let mut corpus = Corpus::new();
    let mut doc: Option<Document> = None;
    for s_idx in 0..config.sentences {
        if s_idx % SENTENCES_PER_DOCUMENT == 0 {
            if let Some(d) = doc.take() {
                corpus.push_document(d)?;
            }
            doc = Some(Document {
                id: format!("synth-{:03}", s_idx / SENTENCES_PER_DOCUMENT),
                sentences: Vec::new(),
            });
        }
        let n_words = config.words_min + rng.below(config.words_max - config.words_min + 1);
        let mut tokens = Vec::with_capacity(n_words + 1);
        for _ in 0..n_words {
            let lemma = &config.lemma_list[rng.below(config.lemma_list.len())];
            let surface = apply_rules(lemma, &config.rules, &mut rng);
            tokens.push(Token::new(surface, lemma.clone())?);
        }
        if rng.bernoulli(config.period_prob) {
            tokens.push(Token::new(".", ".")?);
        }
        let d = doc.as_mut().expect("document opened above");
        d.sentences.push(Sentence {
            id: format!("s{:06}", s_idx),
            tokens,
        });
    }
    if let Some(d) = doc.take() {
        corpus.push_document(d)?;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    // "All-fire" behavior comes from setting every rule probability
    // to 1.0; the rng then never matters.
    fn all_fire_rng() -> Rng {
        Rng::seed_from(0)
    }

    fn all_fire(rules: &[SpellingRule]) -> Vec<SpellingRule> {
        rules
            .iter()
            .map(|r| match r {
                SpellingRule::Subst {
                    pattern,
                    replacement,
                    ..
                } => SpellingRule::subst(pattern, replacement, 1.0),
                SpellingRule::DropFinalVowel { .. } => {
                    SpellingRule::DropFinalVowel { probability: 1.0 }
                }
            })
            .collect()
    }

    #[test]
    fn all_fire_gives_initial_c_for_kaiken() {
        let rules = all_fire(&default_ruleset());
        // Only the k rule matches "kaiken"; it rewrites the first k
        // and then moves on, and the word ends in a consonant.
        let out = apply_rules("kaiken", &rules, &mut all_fire_rng());
        assert_eq!(out, "caiken");
    }

    #[test]
    fn no_matching_rule_is_fixed_point() {
        let mut rules = default_ruleset();
        // Remove chance: keep substitutions at their defaults but turn
        // the vowel drop off entirely.
        if let Some(SpellingRule::DropFinalVowel { probability }) = rules.last_mut() {
            *probability = 0.0;
        }
        let out = apply_rules("herra", &rules, &mut Rng::seed_from(123));
        assert_eq!(out, "herra");
    }

    #[test]
    fn all_fire_sydan_becomes_sydhen() {
        let rules = all_fire(&default_ruleset());
        let out = apply_rules("sydän", &rules, &mut all_fire_rng());
        assert_eq!(out, "sydhen");
    }

    #[test]
    fn vowel_drop_never_empties_a_word() {
        let rules = vec![SpellingRule::DropFinalVowel { probability: 1.0 }];
        assert_eq!(apply_rules("a", &rules, &mut all_fire_rng()), "a");
        assert_eq!(apply_rules("ta", &rules, &mut all_fire_rng()), "t");
    }

    #[test]
    fn surface_forms_enumerates_reachable_outputs() {
        let rules = default_ruleset();
        let forms = surface_forms("kukka", &rules);
        // k occurs three times ("kukka"); one of them may become c,
        // and the final a may drop, possibly both.
        assert!(forms.contains("kukka"));
        assert!(forms.contains("cukka"));
        assert!(forms.contains("kucka"));
        assert!(forms.contains("kukca"));
        assert!(forms.contains("kukk"));
        assert!(forms.contains("cukk"));
        assert!(!forms.contains("cucka"), "two sites may not both fire");
    }

    #[test]
    fn generate_zero_sentences_is_empty() {
        let config = SynthConfig {
            sentences: 0,
            ..SynthConfig::default()
        };
        let corpus = generate(&config).unwrap();
        assert_eq!(corpus.num_documents(), 0);
    }

    #[test]
    fn generate_is_deterministic() {
        let config = SynthConfig {
            sentences: 120,
            ..SynthConfig::default()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&SynthConfig {
            sentences: 100,
            seed: 3435,
            ..SynthConfig::default()
        })
        .unwrap();
        let b = generate(&SynthConfig {
            sentences: 100,
            seed: 3436,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_ne!(a.to_tsv(), b.to_tsv());
    }

    #[test]
    fn generated_tokens_are_valid_and_documents_roll_over() {
        let config = SynthConfig {
            sentences: 2100,
            ..SynthConfig::default()
        };
        let corpus = generate(&config).unwrap();
        assert_eq!(corpus.num_documents(), 3);
        assert_eq!(corpus.num_sentences(), 2100);
        for s in corpus.sentences() {
            for t in &s.tokens {
                assert!(!t.surface.is_empty());
                assert!(!t.surface.contains('_'));
                assert!(!t.surface.chars().any(char::is_whitespace));
            }
        }
    }

    #[test]
    fn bundled_lemmas_load_and_are_plentiful() {
        let lemmas = default_lemmas();
        assert_eq!(lemmas.len(), 500);
        assert!(lemmas.iter().all(|l| !l.is_empty()));
    }

    #[test]
    fn bundled_lemmas_keep_surface_mapping_unambiguous() {
        let lemmas = default_lemmas();
        let rules = default_ruleset();
        let mut owner: std::collections::HashMap<String, &str> = Default::default();
        for lemma in &lemmas {
            for form in surface_forms(lemma, &rules) {
                if let Some(other) = owner.insert(form.clone(), lemma) {
                    panic!(
                        "surface '{}' reachable from both '{}' and '{}'",
                        form, other, lemma
                    );
                }
            }
        }
    }
}
