//! Plain key=value run configuration files (UTF-8, `#` comments).
//! Flags win over file values; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ofn_core::{OfnError, Result};

/// Every key any subcommand understands. A config file may carry keys
/// for other subcommands; anything outside this list is an error.
const KNOWN_KEYS: &[&str] = &[
    "steps",
    "batch_size",
    "seed",
    "valid_every",
    "checkpoint_every",
    "chunk_size",
    "optimizer",
    "learning_rate",
    "decay_factor",
    "decay_start",
    "decay_every",
    "embed_dim",
    "hidden_dim",
    "layers",
    "dropout",
    "input_feed",
    "max_decode_factor",
    "sentences",
    "words_min",
    "words_max",
    "period_prob",
    "lemmas",
    "valid_fraction",
    "test_docs",
    "lowercase",
    "threads",
    "chunk_punct",
    "include_punct",
    "fold_case",
];

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    map: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            OfnError::Config(format!("cannot read config file {}: {}", path.display(), e))
        })?;
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(OfnError::Parse {
                    line: idx + 1,
                    msg: format!("expected key=value, got '{}'", raw.trim()),
                });
            };
            let key = k.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(OfnError::Config(format!(
                    "unknown configuration key '{}'",
                    key
                )));
            }
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(OfnError::Config(format!(
                    "configuration key '{}' given twice",
                    key
                )));
            }
        }
        Ok(FileConfig { map })
    }

    pub fn load_opt(path: Option<&Path>) -> Result<FileConfig> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(FileConfig::default()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                OfnError::Config(format!("config value '{}' invalid for '{}'", raw, key))
            }),
        }
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.map.get(key).cloned()
    }
}

/// Flag beats file beats default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_tmp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ofn-cli-config-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn parses_values_and_comments() {
        let path = write_tmp("ok.conf", "# comment\nsteps = 500\nseed=7 # trailing\n");
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(cfg.get::<u64>("steps").unwrap(), Some(500));
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.get::<u64>("batch_size").unwrap(), None);
    }

    #[test]
    fn unknown_key_rejected() {
        let path = write_tmp("bad.conf", "stepz = 500\n");
        assert!(matches!(FileConfig::load(&path), Err(OfnError::Config(_))));
    }

    #[test]
    fn bad_value_rejected() {
        let path = write_tmp("badval.conf", "steps = many\n");
        let cfg = FileConfig::load(&path).unwrap();
        assert!(cfg.get::<u64>("steps").is_err());
    }

    #[test]
    fn flags_beat_file_beats_default() {
        assert_eq!(resolve(Some(1u64), Some(2), 3), 1);
        assert_eq!(resolve(None, Some(2u64), 3), 2);
        assert_eq!(resolve::<u64>(None, None, 3), 3);
    }
}
