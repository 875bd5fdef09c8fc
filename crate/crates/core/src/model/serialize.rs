//! Model file format.
//!
//! Layout: magic `OFN1`; a length-prefixed UTF-8 block of `key=value`
//! configuration lines; two vocabulary blocks (symbol count, then the
//! newline-separated symbols, length-prefixed); then the named
//! tensors until end of file, each as name length + name bytes, rows,
//! cols (unsigned 32-bit little-endian) and row-major 64-bit
//! little-endian reals. Loading reproduces parameters bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{OfnError, Result};
use crate::numerics::{Matrix, Parameters};

use super::{ModelConfig, Seq2SeqModel};

const MAGIC: &[u8; 4] = b"OFN1";

pub fn save_model(model: &Seq2SeqModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;

    let cfg = &model.config;
    let config_text = format!(
        "embed_dim={}\nhidden_dim={}\nlayers={}\ndropout={}\nsource_vocab_size={}\ntarget_vocab_size={}\nmax_decode_factor={}\ninput_feed={}\nchunk_size={}\n",
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.layers,
        cfg.dropout,
        cfg.source_vocab_size,
        cfg.target_vocab_size,
        cfg.max_decode_factor,
        cfg.input_feed,
        model.chunk_size,
    );
    write_u32(&mut w, config_text.len() as u32)?;
    w.write_all(config_text.as_bytes())?;

    for vocab in [&model.source_vocab, &model.target_vocab] {
        let lines = vocab.lines();
        let blob = lines.join("\n");
        write_u32(&mut w, lines.len() as u32)?;
        write_u32(&mut w, blob.len() as u32)?;
        w.write_all(blob.as_bytes())?;
    }

    let mut err = None;
    model.visit(&mut |name, m| {
        if err.is_some() {
            return;
        }
        if let Err(e) = write_tensor(&mut w, name, m) {
            err = Some(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    w.flush()?;
    Ok(())
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_tensor(w: &mut impl Write, name: &str, m: &Matrix) -> Result<()> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, m.rows() as u32)?;
    write_u32(w, m.cols() as u32)?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reader that tracks its byte offset so format errors can name the
/// position of the damage.
struct Cursor<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn new(inner: R) -> Cursor<R> {
        Cursor { inner, offset: 0 }
    }

    fn fail(&self, msg: impl Into<String>) -> OfnError {
        OfnError::Format {
            offset: self.offset,
            msg: msg.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(_) => Err(self.fail(format!("truncated file while reading {}", what))),
        }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_string(&mut self, len: usize, what: &str) -> Result<String> {
        let mut buf = vec![0u8; len];
        self.read_exact(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| self.fail(format!("{} is not valid UTF-8", what)))
    }

    /// Try to read the start of another tensor record; None on a clean
    /// end of file.
    fn read_u32_or_eof(&mut self, what: &str) -> Result<Option<u32>> {
        let mut b = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            let n = self
                .inner
                .read(&mut b[filled..])
                .map_err(|e| self.fail(format!("i/o error reading {}: {}", what, e)))?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                self.offset += filled as u64;
                return Err(self.fail(format!("truncated file while reading {}", what)));
            }
            filled += n;
        }
        self.offset += 4;
        Ok(Some(u32::from_le_bytes(b)))
    }
}

fn parse_config(text: &str, cur: &Cursor<impl Read>) -> Result<(ModelConfig, usize)> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(cur.fail(format!("malformed config line '{}'", line)));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn want<'a>(
        map: &'a BTreeMap<String, String>,
        key: &str,
        cur: &Cursor<impl Read>,
    ) -> Result<&'a str> {
        map.get(key)
            .map(String::as_str)
            .ok_or_else(|| cur.fail(format!("config block is missing '{}'", key)))
    }
    fn num<T: std::str::FromStr>(s: &str, key: &str, cur: &Cursor<impl Read>) -> Result<T> {
        s.parse()
            .map_err(|_| cur.fail(format!("config value '{}' invalid for '{}'", s, key)))
    }
    let config = ModelConfig {
        embed_dim: num(want(&map, "embed_dim", cur)?, "embed_dim", cur)?,
        hidden_dim: num(want(&map, "hidden_dim", cur)?, "hidden_dim", cur)?,
        layers: num(want(&map, "layers", cur)?, "layers", cur)?,
        dropout: num(want(&map, "dropout", cur)?, "dropout", cur)?,
        source_vocab_size: num(
            want(&map, "source_vocab_size", cur)?,
            "source_vocab_size",
            cur,
        )?,
        target_vocab_size: num(
            want(&map, "target_vocab_size", cur)?,
            "target_vocab_size",
            cur,
        )?,
        max_decode_factor: num(
            want(&map, "max_decode_factor", cur)?,
            "max_decode_factor",
            cur,
        )?,
        input_feed: num(want(&map, "input_feed", cur)?, "input_feed", cur)?,
    };
    let chunk_size = num(want(&map, "chunk_size", cur)?, "chunk_size", cur)?;
    Ok((config, chunk_size))
}

fn read_vocab(cur: &mut Cursor<impl Read>, which: &str) -> Result<Vocabulary> {
    let count = cur.read_u32(&format!("{} vocabulary symbol count", which))? as usize;
    let len = cur.read_u32(&format!("{} vocabulary byte length", which))? as usize;
    let blob = cur.read_string(len, &format!("{} vocabulary symbols", which))?;
    let lines: Vec<&str> = if blob.is_empty() {
        Vec::new()
    } else {
        blob.split('\n').collect()
    };
    if lines.len() != count {
        return Err(cur.fail(format!(
            "{} vocabulary declares {} symbols but contains {}",
            which,
            count,
            lines.len()
        )));
    }
    Vocabulary::from_lines(&lines).map_err(|e| cur.fail(format!("{} vocabulary: {}", which, e)))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Seq2SeqModel> {
    let file = File::open(path.as_ref()).map_err(|e| {
        OfnError::config(format!(
            "cannot open model file {}: {}",
            path.as_ref().display(),
            e
        ))
    })?;
    let mut cur = Cursor::new(BufReader::new(file));

    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(OfnError::Format {
            offset: 0,
            msg: format!("bad magic {:?}; not a model file", magic),
        });
    }

    let config_len = cur.read_u32("config block length")? as usize;
    let config_text = cur.read_string(config_len, "config block")?;
    let (config, chunk_size) = parse_config(&config_text, &cur)?;

    let source_vocab = read_vocab(&mut cur, "source")?;
    let target_vocab = read_vocab(&mut cur, "target")?;
    if source_vocab.size() != config.source_vocab_size {
        return Err(cur.fail(format!(
            "source vocabulary has {} symbols, config says {}",
            source_vocab.size(),
            config.source_vocab_size
        )));
    }
    if target_vocab.size() != config.target_vocab_size {
        return Err(cur.fail(format!(
            "target vocabulary has {} symbols, config says {}",
            target_vocab.size(),
            config.target_vocab_size
        )));
    }

    let mut model = Seq2SeqModel::zeros(config, chunk_size, source_vocab, target_vocab)
        .map_err(|e| cur.fail(format!("invalid configuration: {}", e)))?;

    let mut tensors: BTreeMap<String, Matrix> = BTreeMap::new();
    loop {
        let Some(name_len) = cur.read_u32_or_eof("tensor name length")? else {
            break;
        };
        let name = cur.read_string(name_len as usize, "tensor name")?;
        let rows = cur.read_u32("tensor rows")? as usize;
        let cols = cur.read_u32("tensor cols")? as usize;
        let mut data = vec![0.0f64; rows * cols];
        let mut buf = [0u8; 8];
        for v in &mut data {
            cur.read_exact(&mut buf, &format!("tensor '{}' data", name))?;
            *v = f64::from_le_bytes(buf);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(cur.fail(format!("tensor '{}' contains non-finite values", name)));
        }
        let m = Matrix::from_vec(rows, cols, data)
            .map_err(|e| cur.fail(format!("tensor '{}': {}", name, e)))?;
        if tensors.insert(name.clone(), m).is_some() {
            return Err(cur.fail(format!("duplicate tensor '{}'", name)));
        }
    }

    let mut err = None;
    let mut missing = Vec::new();
    model.visit_mut(&mut |name, slot| {
        if err.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some(m) => {
                if m.shape() != slot.shape() {
                    err = Some(format!(
                        "tensor '{}' has shape {:?}, expected {:?}",
                        name,
                        m.shape(),
                        slot.shape()
                    ));
                } else {
                    *slot = m;
                }
            }
            None => missing.push(name.to_string()),
        }
    });
    if let Some(msg) = err {
        return Err(cur.fail(msg));
    }
    if !missing.is_empty() {
        return Err(cur.fail(format!("missing tensors: {}", missing.join(", "))));
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(cur.fail(format!("unknown tensor '{}'", extra)));
    }
    model.audit_shapes()?;
    Ok(model)
}
