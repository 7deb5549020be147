//! Checkpoint persistence and word2vec text export.
//!
//! Layout: one JSON header line `{"card_i":N,"card_j":M,"d":D,"dtype":"f32"}`,
//! then `W` and `O` as row-major little-endian `f32`, then one label per line
//! for the contexts followed by one label per line for the targets.
//!
//! Parameters are trained in `f64` and narrowed to `f32` on save, so a
//! save/load round trip is exact only for values already representable in
//! `f32`; a second save of a loaded checkpoint reproduces the file bytewise.
//! Popularity counts are not stored and come back as zeros.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Matrix, ModelParams};
use crate::vocab::Vocab;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    card_i: usize,
    card_j: usize,
    d: usize,
    dtype: String,
}

pub fn checkpoint_bytes(params: &ModelParams, vocab: &Vocab) -> Result<Vec<u8>> {
    if params.card_i() != vocab.card_i() || params.card_j() != vocab.card_j() {
        return Err(Error::Format(format!(
            "params are {}x{} but vocabulary is {}x{}",
            params.card_i(),
            params.card_j(),
            vocab.card_i(),
            vocab.card_j()
        )));
    }
    let header = Header {
        card_i: params.card_i(),
        card_j: params.card_j(),
        d: params.dim(),
        dtype: "f32".into(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve((params.w.as_slice().len() + params.o.as_slice().len()) * 4);
    for x in params.w.as_slice().iter().chain(params.o.as_slice()) {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    for label in vocab.context_labels().iter().chain(vocab.target_labels()) {
        if label.contains(['\n', '\r']) {
            return Err(Error::Format(format!("label {label:?} contains a line break")));
        }
        out.extend_from_slice(label.as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

pub fn save_checkpoint(params: &ModelParams, vocab: &Vocab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(params, vocab)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, Vocab)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

fn split_labels(block: &[u8], expected: usize) -> Option<Vec<String>> {
    let text = std::str::from_utf8(block).ok()?;
    if expected == 0 {
        return text.is_empty().then(Vec::new);
    }
    let body = text.strip_suffix('\n')?;
    let labels: Vec<String> = body.split('\n').map(str::to_owned).collect();
    (labels.len() == expected).then_some(labels)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(ModelParams, Vocab)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse("header", Some(1), "missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::parse("header", Some(1), e.to_string()))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.card_i == 0 || header.card_j == 0 || header.d == 0 {
        return Err(Error::Format("header declares an empty dimension".into()));
    }
    let rows = header.card_i + header.card_j;
    let rest = &bytes[nl + 1..];
    let payload_len = rows * header.d * 4;
    if rest.len() < payload_len {
        return Err(Error::parse(
            "payload",
            None,
            format!("truncated: expected {payload_len} bytes, found {}", rest.len()),
        ));
    }
    let labels = match split_labels(&rest[payload_len..], rows) {
        Some(l) => l,
        None => {
            // A label block that lines up under another embedding width means
            // the header's d disagrees with the payload.
            let max_d = rest.len() / (rows * 4);
            if let Some(d) = (1..=max_d)
                .filter(|&d| d != header.d)
                .find(|&d| split_labels(&rest[rows * d * 4..], rows).is_some())
            {
                return Err(Error::Format(format!(
                    "header declares d={} but the payload holds d={d}",
                    header.d
                )));
            }
            let text = String::from_utf8_lossy(&rest[payload_len..]);
            let found = text.lines().count();
            let section = if found < header.card_i {
                "context labels"
            } else {
                "target labels"
            };
            return Err(Error::parse(
                section,
                None,
                format!("expected {rows} newline-terminated labels, found {found}"),
            ));
        }
    };
    let floats: Vec<f64> = rest[..payload_len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let split = header.card_i * header.d;
    let w = Matrix::from_vec(header.card_i, header.d, floats[..split].to_vec())?;
    let o = Matrix::from_vec(header.card_j, header.d, floats[split..].to_vec())?;
    let params = ModelParams::new(w, o)?;
    let mut labels = labels;
    let targets = labels.split_off(header.card_i);
    let vocab = Vocab::new(labels, targets).map_err(|e| Error::parse("labels", None, e.to_string()))?;
    Ok((params, vocab))
}

/// Which embedding matrix to export.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Input,
    Output,
}

/// Writes `<count> <dim>` followed by `label v1 v2 ...` per row.
pub fn write_word2vec<Wr: Write>(params: &ModelParams, vocab: &Vocab, side: Side, mut out: Wr) -> Result<()> {
    let (m, labels) = match side {
        Side::Input => (&params.w, vocab.context_labels()),
        Side::Output => (&params.o, vocab.target_labels()),
    };
    let io = |e| Error::io("<word2vec output>", e);
    writeln!(out, "{} {}", m.rows(), m.cols()).map_err(io)?;
    for (r, label) in labels.iter().enumerate() {
        if label.contains(char::is_whitespace) {
            return Err(Error::Format(format!("label {label:?} contains whitespace")));
        }
        write!(out, "{label}").map_err(io)?;
        for x in m.row(r) {
            write!(out, " {}", *x as f32).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

pub fn export_word2vec(params: &ModelParams, vocab: &Vocab, side: Side, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_word2vec(params, vocab, side, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
