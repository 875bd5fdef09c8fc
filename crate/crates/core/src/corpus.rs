//! Token-aligned historical/lemma corpora: TSV loading, document-level
//! splits, character-encoded chunk pairs, and vocabularies.
//!
//! The corpus format is a UTF-8 TSV: a directive line `# doc = <id>`
//! opens a document, each token is one line `surface<TAB>lemma` (with
//! an optional third column `PUNCT` forcing the punctuation flag), and
//! a blank line ends a sentence. Words are split into characters for
//! the model; actual spaces between the words of a chunk are marked
//! with an underscore, so the underscore is banned inside tokens.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{OfnError, Result};
use crate::numerics::Rng;

/// Word-boundary marker inside an encoded chunk.
pub const UNDERSCORE: char = '_';

/// Reserved vocabulary indices.
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

pub const CONTROL_NAMES: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Punctuation test used to flag tokens at load time. Covers ASCII
/// punctuation plus the general punctuation encountered in digitized
/// historical text; the TSV `PUNCT` column overrides it either way.
fn is_punct_char(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'
                ..='\u{2027}' // hyphens, dashes, quotes, daggers, ellipsis
            | '\u{00A1}' | '\u{00BF}' // ¡ ¿
            | '\u{00AB}' | '\u{00BB}' // « »
            | '\u{00A7}' | '\u{00B6}' | '\u{00B7}' // § ¶ ·
        )
}

/// True when the word consists solely of punctuation characters.
pub fn is_punct_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_punct_char)
}

fn validate_word(kind: &str, w: &str) -> Result<()> {
    if w.is_empty() {
        return Err(OfnError::validation(format!("{} must be non-empty", kind)));
    }
    if w.chars().any(char::is_whitespace) {
        return Err(OfnError::validation(format!(
            "{} '{}' contains whitespace",
            kind, w
        )));
    }
    if w.contains(UNDERSCORE) {
        return Err(OfnError::validation(format!(
            "{} '{}' contains the reserved underscore boundary marker",
            kind, w
        )));
    }
    Ok(())
}

/// One aligned token: historical written form and its modern lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub is_punct: bool,
}

impl Token {
    /// Validating constructor; the punctuation flag is computed from
    /// the surface form.
    pub fn new(surface: impl Into<String>, lemma: impl Into<String>) -> Result<Token> {
        let surface = surface.into();
        let lemma = lemma.into();
        validate_word("surface", &surface)?;
        validate_word("lemma", &lemma)?;
        let is_punct = is_punct_word(&surface);
        Ok(Token {
            surface,
            lemma,
            is_punct,
        })
    }

    /// Constructor for the TSV `PUNCT` column, which forces the flag.
    pub fn new_forced_punct(surface: impl Into<String>, lemma: impl Into<String>) -> Result<Token> {
        let mut t = Token::new(surface, lemma)?;
        t.is_punct = true;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn surfaces(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn lemmas(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.lemma.clone()).collect()
    }

    pub fn punct_mask(&self) -> Vec<bool> {
        self.tokens.iter().map(|t| t.is_punct).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

/// An ordered collection of documents, each an ordered sequence of
/// sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new() -> Corpus {
        Corpus::default()
    }

    /// Append a document; ids must be unique.
    pub fn push_document(&mut self, doc: Document) -> Result<()> {
        if self.documents.iter().any(|d| d.id == doc.id) {
            return Err(OfnError::validation(format!(
                "duplicate document id '{}'",
                doc.id
            )));
        }
        let mut seen = HashSet::new();
        for s in &doc.sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(OfnError::validation(format!(
                    "duplicate sentence id '{}' in document '{}'",
                    s.id, doc.id
                )));
            }
        }
        self.documents.push(doc);
        Ok(())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document_ids(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.id.as_str()).collect()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences().map(|s| s.tokens.len()).sum()
    }

    /// Parse the TSV corpus format. `lowercase` case-folds surfaces
    /// and lemmas as they are read.
    pub fn from_tsv_str(text: &str, lowercase: bool) -> Result<Corpus> {
        let mut corpus = Corpus::new();
        let mut doc: Option<Document> = None;
        let mut tokens: Vec<Token> = Vec::new();

        fn flush_sentence(doc: &mut Option<Document>, tokens: &mut Vec<Token>) {
            if tokens.is_empty() {
                return;
            }
            let doc = doc.as_mut().expect("tokens require an open document");
            let id = format!("{}:{}", doc.id, doc.sentences.len() + 1);
            doc.sentences.push(Sentence {
                id,
                tokens: std::mem::take(tokens),
            });
        }

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                flush_sentence(&mut doc, &mut tokens);
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let Some(id) = rest.strip_prefix("doc").map(str::trim_start) else {
                    return Err(OfnError::Parse {
                        line: line_no,
                        msg: format!("unknown directive '{}'; expected '# doc = <id>'", line),
                    });
                };
                let Some(id) = id.strip_prefix('=').map(str::trim) else {
                    return Err(OfnError::Parse {
                        line: line_no,
                        msg: "malformed document directive; expected '# doc = <id>'".into(),
                    });
                };
                if id.is_empty() {
                    return Err(OfnError::Parse {
                        line: line_no,
                        msg: "empty document id".into(),
                    });
                }
                flush_sentence(&mut doc, &mut tokens);
                if let Some(finished) = doc.take() {
                    corpus.push_document(finished)?;
                }
                doc = Some(Document {
                    id: id.to_string(),
                    sentences: Vec::new(),
                });
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(OfnError::Parse {
                    line: line_no,
                    msg: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
                });
            }
            if doc.is_none() {
                return Err(OfnError::Parse {
                    line: line_no,
                    msg: "token line before any '# doc = <id>' directive".into(),
                });
            }
            let (mut surface, mut lemma) = (fields[0].to_string(), fields[1].to_string());
            if lowercase {
                surface = surface.to_lowercase();
                lemma = lemma.to_lowercase();
            }
            let token = if fields.len() == 3 {
                if fields[2] != "PUNCT" {
                    return Err(OfnError::Parse {
                        line: line_no,
                        msg: format!("third field must be 'PUNCT', got '{}'", fields[2]),
                    });
                }
                Token::new_forced_punct(surface, lemma)
            } else {
                Token::new(surface, lemma)
            };
            let token = token.map_err(|e| match e {
                OfnError::Validation(msg) => {
                    OfnError::Validation(format!("line {}: {}", line_no, msg))
                }
                other => other,
            })?;
            tokens.push(token);
        }
        flush_sentence(&mut doc, &mut tokens);
        if let Some(finished) = doc.take() {
            corpus.push_document(finished)?;
        }
        Ok(corpus)
    }

    /// Serialize back to the TSV format. Sentence ids are positional
    /// and regenerated on load; fields round-trip exactly.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&format!("# doc = {}\n", doc.id));
            for sentence in &doc.sentences {
                for t in &sentence.tokens {
                    out.push_str(&t.surface);
                    out.push('\t');
                    out.push_str(&t.lemma);
                    if t.is_punct != is_punct_word(&t.surface) {
                        out.push_str("\tPUNCT");
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Load a TSV corpus file, preserving document, sentence and token
/// order.
pub fn load_corpus(path: impl AsRef<Path>, lowercase: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        OfnError::config(format!("cannot read corpus file {}: {}", path.display(), e))
    })?;
    Corpus::from_tsv_str(&text, lowercase)
}

/// Document-level split specification.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub test_docs: BTreeSet<String>,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> SplitSpec {
        SplitSpec {
            test_docs: BTreeSet::new(),
            valid_fraction: 0.15,
            seed: 3435,
        }
    }
}

/// Split a corpus: the test set is exactly the sentences of the held
/// out documents, and the remaining sentences are shuffled with the
/// given seed, a `valid_fraction` share (rounded down) going to the
/// validation set and the rest to training.
pub fn split_corpus(
    corpus: &Corpus,
    spec: &SplitSpec,
) -> Result<(Vec<Sentence>, Vec<Sentence>, Vec<Sentence>)> {
    if !(0.0..1.0).contains(&spec.valid_fraction) {
        return Err(OfnError::config(format!(
            "valid_fraction must be in [0, 1), got {}",
            spec.valid_fraction
        )));
    }
    let known: HashSet<&str> = corpus.document_ids().into_iter().collect();
    for id in &spec.test_docs {
        if !known.contains(id.as_str()) {
            return Err(OfnError::config(format!(
                "test document '{}' not present in the corpus",
                id
            )));
        }
    }
    let mut test = Vec::new();
    let mut rest = Vec::new();
    for doc in corpus.documents() {
        if spec.test_docs.contains(&doc.id) {
            test.extend(doc.sentences.iter().cloned());
        } else {
            rest.extend(doc.sentences.iter().cloned());
        }
    }
    let mut rng = Rng::seed_from(spec.seed);
    rng.shuffle(&mut rest);
    let n_valid = (spec.valid_fraction * rest.len() as f64).floor() as usize;
    let train = rest.split_off(n_valid);
    let valid = rest;
    Ok((train, valid, test))
}

/// A character-encoded source/target training pair for one chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPair {
    pub source: Vec<char>,
    pub target: Vec<char>,
    pub chunk_size: usize,
}

impl ChunkPair {
    /// Chunk-pair file line: space-separated source characters, a tab,
    /// space-separated target characters.
    pub fn to_line(&self) -> String {
        let join = |chars: &[char]| {
            chars
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!("{}\t{}", join(&self.source), join(&self.target))
    }
}

/// Serialize pairs in the chunk-pair file format, one per line.
pub fn pairs_to_tsv(pairs: &[ChunkPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.to_line());
        out.push('\n');
    }
    out
}

fn parse_pair_side(field: &str, line_no: usize) -> Result<Vec<char>> {
    if field.is_empty() {
        return Err(OfnError::Parse {
            line: line_no,
            msg: "empty pair side".into(),
        });
    }
    let mut chars = Vec::new();
    for sym in field.split(' ') {
        let mut it = sym.chars();
        let (Some(c), None) = (it.next(), it.next()) else {
            return Err(OfnError::Parse {
                line: line_no,
                msg: format!("symbol '{}' is not a single character", sym),
            });
        };
        chars.push(c);
    }
    let leading = chars.first() == Some(&UNDERSCORE);
    let trailing = chars.last() == Some(&UNDERSCORE);
    let adjacent = chars
        .windows(2)
        .any(|w| w[0] == UNDERSCORE && w[1] == UNDERSCORE);
    if leading || trailing || adjacent {
        return Err(OfnError::Parse {
            line: line_no,
            msg: "malformed word boundaries (leading/trailing/adjacent underscore)".into(),
        });
    }
    Ok(chars)
}

/// Parse a chunk-pair file. The chunk size is a property of the run,
/// not the file, so the caller supplies it.
pub fn parse_pairs_tsv(text: &str, chunk_size: usize) -> Result<Vec<ChunkPair>> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((src, tgt)) = line.split_once('\t') else {
            return Err(OfnError::Parse {
                line: idx + 1,
                msg: "expected source<TAB>target".into(),
            });
        };
        pairs.push(ChunkPair {
            source: parse_pair_side(src, idx + 1)?,
            target: parse_pair_side(tgt, idx + 1)?,
            chunk_size,
        });
    }
    Ok(pairs)
}

/// Encode words as a character sequence with a single underscore
/// between consecutive words.
pub fn encode_chars<S: AsRef<str>>(words: &[S]) -> Result<Vec<char>> {
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let w = w.as_ref();
        validate_word("word", w)?;
        if i > 0 {
            out.push(UNDERSCORE);
        }
        out.extend(w.chars());
    }
    Ok(out)
}

/// Inverse of [`encode_chars`]: split on underscores, collapsing runs
/// and dropping empty words. Total on any input.
pub fn decode_chars(chars: &[char]) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for &c in chars {
        if c == UNDERSCORE {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Partition a sentence into consecutive windows of at most
/// `chunk_size` tokens and encode each window as one training pair.
/// Punctuation tokens participate like any token here.
pub fn make_chunks(sentence: &Sentence, chunk_size: usize) -> Result<Vec<ChunkPair>> {
    if chunk_size < 1 {
        return Err(OfnError::config("chunk_size must be >= 1"));
    }
    let mut pairs = Vec::new();
    for window in sentence.tokens.chunks(chunk_size) {
        let surfaces: Vec<&str> = window.iter().map(|t| t.surface.as_str()).collect();
        let lemmas: Vec<&str> = window.iter().map(|t| t.lemma.as_str()).collect();
        pairs.push(ChunkPair {
            source: encode_chars(&surfaces)?,
            target: encode_chars(&lemmas)?,
            chunk_size,
        });
    }
    Ok(pairs)
}

/// Character vocabulary with reserved control symbols at indices 0-3.
/// Data symbols start at index 4: the underscore first, then the
/// remaining characters sorted by code point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub fn from_chars(set: impl IntoIterator<Item = char>) -> Vocabulary {
        let mut data: BTreeSet<char> = set.into_iter().collect();
        data.remove(&UNDERSCORE);
        let mut chars = vec![UNDERSCORE];
        chars.extend(data);
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + CONTROL_NAMES.len()))
            .collect();
        Vocabulary { chars, index }
    }

    /// Total size including the four reserved controls.
    pub fn size(&self) -> usize {
        self.chars.len() + CONTROL_NAMES.len()
    }

    /// Id for a character; unknown characters map to UNK.
    pub fn id_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK_ID)
    }

    /// Character for an id; `None` for controls and out-of-range ids.
    pub fn char_of(&self, id: usize) -> Option<char> {
        id.checked_sub(CONTROL_NAMES.len())
            .and_then(|i| self.chars.get(i))
            .copied()
    }

    pub fn encode(&self, chars: &[char]) -> Vec<usize> {
        chars.iter().map(|&c| self.id_of(c)).collect()
    }

    /// Map ids back to characters, dropping control symbols.
    pub fn decode_to_chars(&self, ids: &[usize]) -> Vec<char> {
        ids.iter().filter_map(|&id| self.char_of(id)).collect()
    }

    /// One symbol per line: the control names, then the characters.
    pub fn lines(&self) -> Vec<String> {
        CONTROL_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain(self.chars.iter().map(|c| c.to_string()))
            .collect()
    }

    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> Result<Vocabulary> {
        if lines.len() < CONTROL_NAMES.len() {
            return Err(OfnError::validation(format!(
                "vocabulary needs at least the {} control symbols",
                CONTROL_NAMES.len()
            )));
        }
        for (i, expected) in CONTROL_NAMES.iter().enumerate() {
            if lines[i].as_ref() != *expected {
                return Err(OfnError::validation(format!(
                    "vocabulary line {} must be the control symbol '{}', got '{}'",
                    i,
                    expected,
                    lines[i].as_ref()
                )));
            }
        }
        let mut chars = Vec::new();
        for line in &lines[CONTROL_NAMES.len()..] {
            let line = line.as_ref();
            let mut it = line.chars();
            let (Some(c), None) = (it.next(), it.next()) else {
                return Err(OfnError::validation(format!(
                    "vocabulary symbol '{}' is not a single character",
                    line
                )));
            };
            chars.push(c);
        }
        if chars.first() != Some(&UNDERSCORE) {
            return Err(OfnError::validation(
                "first data symbol must be the underscore",
            ));
        }
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + CONTROL_NAMES.len()))
            .collect();
        Ok(Vocabulary { chars, index })
    }
}

/// Build source and target vocabularies from training pairs only.
pub fn build_vocab(pairs: &[ChunkPair]) -> Result<(Vocabulary, Vocabulary)> {
    if pairs.is_empty() {
        return Err(OfnError::config(
            "cannot build vocabularies from an empty pair set",
        ));
    }
    let src = pairs.iter().flat_map(|p| p.source.iter().copied());
    let tgt = pairs.iter().flat_map(|p| p.target.iter().copied());
    Ok((Vocabulary::from_chars(src), Vocabulary::from_chars(tgt)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(words: &[(&str, &str)]) -> Sentence {
        Sentence {
            id: "t:1".into(),
            tokens: words
                .iter()
                .map(|(s, l)| Token::new(*s, *l).unwrap())
                .collect(),
        }
    }

    #[test]
    fn single_token_file() {
        let corpus = Corpus::from_tsv_str("# doc = d1\nsydhemen\tsydän\n", true).unwrap();
        assert_eq!(corpus.num_documents(), 1);
        assert_eq!(corpus.num_sentences(), 1);
        assert_eq!(corpus.num_tokens(), 1);
        let t = &corpus.sentences().next().unwrap().tokens[0];
        assert_eq!(t.surface, "sydhemen");
        assert_eq!(t.lemma, "sydän");
        assert!(!t.is_punct);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let corpus = Corpus::from_tsv_str("", true).unwrap();
        assert_eq!(corpus.num_documents(), 0);
    }

    #[test]
    fn whitespace_in_token_is_validation_error() {
        let err = Corpus::from_tsv_str("# doc = d\na b\tx\n", false).unwrap_err();
        assert!(matches!(err, OfnError::Validation(_)), "{err}");
    }

    #[test]
    fn wrong_field_count_is_parse_error_with_line() {
        let err = Corpus::from_tsv_str("# doc = d\nx\n", false).unwrap_err();
        match err {
            OfnError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn underscore_in_token_rejected() {
        let err = Corpus::from_tsv_str("# doc = d\na_b\tx\n", false).unwrap_err();
        assert!(matches!(err, OfnError::Validation(_)));
    }

    #[test]
    fn punct_column_forces_flag() {
        let corpus = Corpus::from_tsv_str("# doc = d\nabc\tabc\tPUNCT\n", false).unwrap();
        assert!(corpus.sentences().next().unwrap().tokens[0].is_punct);
    }

    #[test]
    fn punct_autodetected() {
        let corpus = Corpus::from_tsv_str("# doc = d\n.\t.\n", false).unwrap();
        assert!(corpus.sentences().next().unwrap().tokens[0].is_punct);
    }

    #[test]
    fn lowercase_flag_folds_case() {
        let corpus = Corpus::from_tsv_str("# doc = d\nHErra\tHerra\n", true).unwrap();
        let t = &corpus.sentences().next().unwrap().tokens[0];
        assert_eq!(t.surface, "herra");
        assert_eq!(t.lemma, "herra");
    }

    #[test]
    fn tsv_round_trip_is_field_exact() {
        let text = "# doc = a\nx\ty\n-\t-\n\n# doc = b\nfoo\tbar\tPUNCT\n\n";
        let corpus = Corpus::from_tsv_str(text, false).unwrap();
        let again = Corpus::from_tsv_str(&corpus.to_tsv(), false).unwrap();
        assert_eq!(corpus, again);
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let err = Corpus::from_tsv_str("# doc = d\na\tb\n\n# doc = d\nc\td\n", false).unwrap_err();
        assert!(matches!(err, OfnError::Validation(_)));
    }

    fn nine_doc_corpus() -> Corpus {
        let mut corpus = Corpus::new();
        for d in 0..9 {
            let id = format!("book{}", d);
            let sentences = (0..20)
                .map(|s| Sentence {
                    id: format!("{}:{}", id, s + 1),
                    tokens: vec![
                        Token::new(format!("w{}x{}", d, s), format!("l{}x{}", d, s)).unwrap()
                    ],
                })
                .collect();
            corpus.push_document(Document { id, sentences }).unwrap();
        }
        corpus
    }

    #[test]
    fn split_puts_test_docs_in_test() {
        let corpus = nine_doc_corpus();
        let spec = SplitSpec {
            test_docs: ["book7".to_string(), "book8".to_string()].into(),
            valid_fraction: 0.15,
            seed: 3435,
        };
        let (train, valid, test) = split_corpus(&corpus, &spec).unwrap();
        assert_eq!(test.len(), 40);
        assert!(test
            .iter()
            .all(|s| s.id.starts_with("book7") || s.id.starts_with("book8")));
        // 140 remaining, floor(0.15 * 140) = 21
        assert_eq!(valid.len(), 21);
        assert_eq!(train.len(), 119);
    }

    #[test]
    fn split_zero_fraction_has_empty_valid() {
        let corpus = nine_doc_corpus();
        let spec = SplitSpec {
            test_docs: BTreeSet::new(),
            valid_fraction: 0.0,
            seed: 1,
        };
        let (train, valid, test) = split_corpus(&corpus, &spec).unwrap();
        assert!(valid.is_empty());
        assert!(test.is_empty());
        assert_eq!(train.len(), 180);
    }

    #[test]
    fn split_unknown_doc_is_config_error() {
        let corpus = nine_doc_corpus();
        let spec = SplitSpec {
            test_docs: ["nope".to_string()].into(),
            ..SplitSpec::default()
        };
        assert!(matches!(
            split_corpus(&corpus, &spec),
            Err(OfnError::Config(_))
        ));
    }

    #[test]
    fn split_is_deterministic_disjoint_and_exhaustive() {
        let corpus = nine_doc_corpus();
        let spec = SplitSpec {
            test_docs: ["book0".to_string()].into(),
            valid_fraction: 0.25,
            seed: 99,
        };
        let (tr1, va1, te1) = split_corpus(&corpus, &spec).unwrap();
        let (tr2, va2, te2) = split_corpus(&corpus, &spec).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(va1, va2);
        assert_eq!(te1, te2);

        let mut ids: Vec<&str> = tr1
            .iter()
            .chain(&va1)
            .chain(&te1)
            .map(|s| s.id.as_str())
            .collect();
        let total = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), total, "splits overlap");
        assert_eq!(total, corpus.num_sentences(), "splits do not exhaust");
    }

    #[test]
    fn encode_single_word() {
        let chars = encode_chars(&["sydhemen"]).unwrap();
        assert_eq!(chars, "sydhemen".chars().collect::<Vec<_>>());
    }

    #[test]
    fn encode_marks_spaces_with_underscore() {
        let chars = encode_chars(&["paluellen", "herra", "caiken"]).unwrap();
        let expected: Vec<char> = "paluellen_herra_caiken".chars().collect();
        assert_eq!(chars, expected);
    }

    #[test]
    fn encode_empty_sequence() {
        assert_eq!(encode_chars::<&str>(&[]).unwrap(), Vec::<char>::new());
    }

    #[test]
    fn encode_rejects_underscore_in_word() {
        assert!(encode_chars(&["a_b"]).is_err());
        assert!(encode_chars(&[""]).is_err());
    }

    #[test]
    fn decode_basic_and_edge_cases() {
        let chars: Vec<char> = "sydän".chars().collect();
        assert_eq!(decode_chars(&chars), vec!["sydän"]);
        assert_eq!(decode_chars(&[]), Vec::<String>::new());
        let messy: Vec<char> = "_a__b_".chars().collect();
        assert_eq!(decode_chars(&messy), vec!["a", "b"]);
    }

    #[test]
    fn encode_decode_round_trip_on_random_words() {
        let mut rng = Rng::seed_from(4242);
        let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyzäö".chars().collect();
        for _ in 0..500 {
            let n_words = 1 + rng.below(6);
            let words: Vec<String> = (0..n_words)
                .map(|_| {
                    let len = 1 + rng.below(10);
                    (0..len)
                        .map(|_| alphabet[rng.below(alphabet.len())])
                        .collect()
                })
                .collect();
            let decoded = decode_chars(&encode_chars(&words).unwrap());
            assert_eq!(decoded, words);
        }
    }

    #[test]
    fn chunks_match_table_shape() {
        let s = sentence(&[
            ("paluellen", "palvella"),
            ("herra", "herra"),
            ("caiken", "kaikki"),
        ]);
        let pairs = make_chunks(&s, 3).unwrap();
        assert_eq!(pairs.len(), 1);
        let src: String = pairs[0].source.iter().collect();
        let tgt: String = pairs[0].target.iter().collect();
        assert_eq!(src, "paluellen_herra_caiken");
        assert_eq!(tgt, "palvella_herra_kaikki");
    }

    #[test]
    fn chunks_partition_with_short_tail() {
        let words: Vec<(String, String)> = (0..7)
            .map(|i| (format!("w{}", i), format!("l{}", i)))
            .collect();
        let refs: Vec<(&str, &str)> = words
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let s = sentence(&refs);
        let pairs = make_chunks(&s, 3).unwrap();
        assert_eq!(pairs.len(), 3);
        let counts: Vec<usize> = pairs
            .iter()
            .map(|p| decode_chars(&p.source).len())
            .collect();
        assert_eq!(counts, vec![3, 3, 1]);
    }

    #[test]
    fn single_word_chunk_has_no_underscores() {
        let s = sentence(&[("abc", "abd")]);
        let pairs = make_chunks(&s, 1).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(!pairs[0].source.contains(&UNDERSCORE));
    }

    #[test]
    fn chunk_size_zero_rejected() {
        let s = sentence(&[("a", "b")]);
        assert!(matches!(make_chunks(&s, 0), Err(OfnError::Config(_))));
    }

    #[test]
    fn chunk_partition_property() {
        let mut rng = Rng::seed_from(7);
        for _ in 0..200 {
            let n = 1 + rng.below(12);
            let words: Vec<(String, String)> = (0..n)
                .map(|i| (format!("w{}", i), format!("l{}", i)))
                .collect();
            let refs: Vec<(&str, &str)> = words
                .iter()
                .map(|(a, b)| (a.as_str(), b.as_str()))
                .collect();
            let s = sentence(&refs);
            let size = 1 + rng.below(5);
            let pairs = make_chunks(&s, size).unwrap();
            let counts: Vec<usize> = pairs
                .iter()
                .map(|p| decode_chars(&p.source).len())
                .collect();
            assert_eq!(counts.iter().sum::<usize>(), n);
            assert!(counts.iter().all(|&c| c <= size));
            for c in &counts[..counts.len().saturating_sub(1)] {
                assert_eq!(*c, size);
            }
        }
    }

    #[test]
    fn vocab_ordering_is_deterministic() {
        let pairs = vec![ChunkPair {
            source: vec!['b', '_', 'a'],
            target: vec!['x'],
            chunk_size: 2,
        }];
        let (src, tgt) = build_vocab(&pairs).unwrap();
        assert_eq!(
            src.lines(),
            vec!["<pad>", "<s>", "</s>", "<unk>", "_", "a", "b"]
        );
        assert_eq!(src.id_of('_'), 4);
        assert_eq!(src.id_of('a'), 5);
        assert_eq!(src.id_of('b'), 6);
        assert_eq!(src.id_of('z'), UNK_ID);
        // underscore present even when no pair contains one
        assert_eq!(tgt.lines(), vec!["<pad>", "<s>", "</s>", "<unk>", "_", "x"]);

        let (src2, _) = build_vocab(&pairs).unwrap();
        assert_eq!(src, src2);
    }

    #[test]
    fn vocab_of_table_rows_has_umlaut_on_target_side_only() {
        let s1 = sentence(&[("sydhemen", "sydän")]);
        let s3 = sentence(&[
            ("paluellen", "palvella"),
            ("herra", "herra"),
            ("caiken", "kaikki"),
        ]);
        let mut pairs = make_chunks(&s1, 1).unwrap();
        pairs.extend(make_chunks(&s3, 3).unwrap());
        let (src, tgt) = build_vocab(&pairs).unwrap();
        assert_eq!(src.id_of('ä'), UNK_ID);
        assert_ne!(tgt.id_of('ä'), UNK_ID);
    }

    #[test]
    fn empty_pair_set_rejected() {
        assert!(matches!(build_vocab(&[]), Err(OfnError::Config(_))));
    }

    #[test]
    fn vocab_line_round_trip() {
        let v = Vocabulary::from_chars("abcä_".chars());
        let lines = v.lines();
        let back = Vocabulary::from_lines(&lines).unwrap();
        assert_eq!(v, back);
    }
}
