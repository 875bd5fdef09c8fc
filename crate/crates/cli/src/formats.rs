//! On-disk formats the CLI moves between: chunk-pair files, vocabulary
//! files, prediction TSVs, analyzer candidate lists, lexicons, and
//! plain-text sentence input.

use std::collections::BTreeSet;
use std::path::Path;

use ofn_core::corpus::{parse_pairs_tsv, ChunkPair, Vocabulary};
use ofn_core::{OfnError, Result};

fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| OfnError::Config(format!("cannot read {} {}: {}", what, path.display(), e)))
}

/// One pair per line: `source chars space-separated<TAB>target chars
/// space-separated`, underscores marking word boundaries.
pub fn pairs_to_string(pairs: &[ChunkPair]) -> String {
    ofn_core::corpus::pairs_to_tsv(pairs)
}

pub fn load_pairs(path: &Path, chunk_size: usize) -> Result<Vec<ChunkPair>> {
    let text = read(path, "pair file")?;
    parse_pairs_tsv(&text, chunk_size)
}

pub fn vocab_to_string(vocab: &Vocabulary) -> String {
    let mut s = vocab.lines().join("\n");
    s.push('\n');
    s
}

/// Newline-separated word list.
pub fn load_lexicon(path: &Path) -> Result<BTreeSet<String>> {
    let text = read(path, "lexicon")?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn load_lemma_list(path: &Path) -> Result<Vec<String>> {
    let text = read(path, "lemma list")?;
    let lemmas: Vec<String> = text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if lemmas.is_empty() {
        return Err(OfnError::Config(format!(
            "lemma list {} is empty",
            path.display()
        )));
    }
    Ok(lemmas)
}

/// Analyzer output: one token per line, candidate lemmas separated by
/// commas; an empty line is a token with no candidates.
pub fn load_analyses(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read(path, "analyses file")?;
    Ok(text
        .lines()
        .map(|line| {
            let line = line.trim();
            if line.is_empty() {
                Vec::new()
            } else {
                line.split(',')
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect()
            }
        })
        .collect())
}

/// A predicted token from a normalize output file.
#[derive(Debug, Clone)]
pub struct PredToken {
    pub surface: String,
    pub lemma: String,
    pub repaired: bool,
}

/// Normalize output: `surface<TAB>lemma<TAB>repaired(0|1)` per token,
/// blank line between sentences.
pub fn predictions_to_string(sentences: &[Vec<PredToken>]) -> String {
    let mut out = String::new();
    for sent in sentences {
        for t in sent {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                t.surface,
                t.lemma,
                if t.repaired { 1 } else { 0 }
            ));
        }
        out.push('\n');
    }
    out
}

pub fn load_predictions(path: &Path) -> Result<Vec<Vec<PredToken>>> {
    let text = read(path, "predictions file")?;
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(OfnError::Parse {
                line: idx + 1,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let repaired = match fields[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(OfnError::Parse {
                    line: idx + 1,
                    msg: format!("repaired flag must be 0 or 1, got '{}'", other),
                })
            }
        };
        current.push(PredToken {
            surface: fields[0].to_string(),
            lemma: fields[1].to_string(),
            repaired,
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Plain-text input: one sentence per line, space-separated tokens.
pub fn load_plain_sentences(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ofn-cli-formats-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn pair_file_round_trip() {
        let pairs = vec![ChunkPair {
            source: "sydhemen".chars().collect(),
            target: "sydän".chars().collect(),
            chunk_size: 1,
        }];
        let text = pairs_to_string(&pairs);
        assert_eq!(text, "s y d h e m e n\ts y d ä n\n");
        let path = tmp("pairs.txt", &text);
        let loaded = load_pairs(&path, 1).unwrap();
        assert_eq!(loaded, pairs);
    }

    #[test]
    fn malformed_pair_sides_rejected() {
        let path = tmp("badpairs.txt", "a b\tx _ y\n");
        assert!(load_pairs(&path, 1).is_ok());
        let path = tmp("badpairs2.txt", "_ a\tx\n");
        assert!(load_pairs(&path, 1).is_err());
        let path = tmp("badpairs3.txt", "ab\tx\n");
        assert!(load_pairs(&path, 1).is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let sents = vec![
            vec![
                PredToken {
                    surface: "a".into(),
                    lemma: "b".into(),
                    repaired: false,
                },
                PredToken {
                    surface: "c".into(),
                    lemma: "c".into(),
                    repaired: true,
                },
            ],
            vec![PredToken {
                surface: "d".into(),
                lemma: "e".into(),
                repaired: false,
            }],
        ];
        let text = predictions_to_string(&sents);
        let path = tmp("preds.tsv", &text);
        let loaded = load_predictions(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0][1].lemma, "c");
        assert!(loaded[0][1].repaired);
    }

    #[test]
    fn analyses_with_empty_lines() {
        let path = tmp("an.txt", "olla,olka\n\nherra\n");
        let a = load_analyses(&path).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0], vec!["olla", "olka"]);
        assert!(a[1].is_empty());
        assert_eq!(a[2], vec!["herra"]);
    }

    #[test]
    fn plain_sentences_split_on_whitespace() {
        let s = load_plain_sentences("herra caiken\n\nsydhemen .\n");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], vec!["herra", "caiken"]);
        assert_eq!(s[1], vec!["sydhemen", "."]);
    }
}
