//! Pair dataset cache: little-endian `u32` (context, target) pairs in one
//! file and a JSON sidecar (`<path>.json`) holding vocabulary, split and
//! provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PairDataset, Split};
use crate::vocab::Vocab;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    vocab: Vocab,
    /// One character per pair: `t`rain, `v`alid, t`e`st.
    split: String,
    source_meta: String,
    n_pairs: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_pair_cache(dataset: &PairDataset, vocab: &Vocab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    dataset.validate(vocab.card_i(), vocab.card_j())?;
    let mut bin = Vec::with_capacity(dataset.len() * 8);
    for &(i, j) in dataset.pairs() {
        let i = u32::try_from(i).map_err(|_| Error::Format(format!("context id {i} exceeds u32")))?;
        let j = u32::try_from(j).map_err(|_| Error::Format(format!("target id {j} exceeds u32")))?;
        bin.extend_from_slice(&i.to_le_bytes());
        bin.extend_from_slice(&j.to_le_bytes());
    }
    let split = dataset
        .split_labels()
        .iter()
        .map(|s| match s {
            Split::Train => 't',
            Split::Valid => 'v',
            Split::Test => 'e',
        })
        .collect();
    let side = Sidecar {
        vocab: vocab.clone(),
        split,
        source_meta: dataset.source_meta().to_owned(),
        n_pairs: dataset.len(),
    };
    fs::write(path, bin).map_err(|e| Error::io(path, e))?;
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_vec(&side)?).map_err(|e| Error::io(&sp, e))
}

pub fn load_pair_cache(path: impl AsRef<Path>) -> Result<(Vocab, PairDataset)> {
    let path = path.as_ref();
    let bin = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sp = sidecar_path(path);
    let side: Sidecar = serde_json::from_slice(&fs::read(&sp).map_err(|e| Error::io(&sp, e))?)
        .map_err(|e| Error::parse("pair cache sidecar", None, e.to_string()))?;
    if bin.len() != side.n_pairs * 8 {
        return Err(Error::Format(format!(
            "pair file has {} bytes, sidecar declares {} pairs",
            bin.len(),
            side.n_pairs
        )));
    }
    let pairs: Vec<(usize, usize)> = bin
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize,
                u32::from_le_bytes([c[4], c[5], c[6], c[7]]) as usize,
            )
        })
        .collect();
    let split = side
        .split
        .chars()
        .map(|c| match c {
            't' => Ok(Split::Train),
            'v' => Ok(Split::Valid),
            'e' => Ok(Split::Test),
            other => Err(Error::parse("pair cache sidecar", None, format!("bad split code {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = PairDataset::with_split(pairs, split, side.source_meta)?;
    ds.validate(side.vocab.card_i(), side.vocab.card_j())?;
    Ok((side.vocab, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{pairs_from_text, split_dataset};

    #[test]
    fn cache_round_trip() {
        let toks: Vec<String> = "a b c a b d a c".split(' ').map(String::from).collect();
        let (v, d) = pairs_from_text(&toks, 2, 10).unwrap();
        let d = split_dataset(&d, [0.6, 0.2, 0.2], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.bin");
        save_pair_cache(&d, &v, &p).unwrap();
        let (v2, d2) = load_pair_cache(&p).unwrap();
        assert_eq!(v2, v);
        assert_eq!(d2, d);
        fs::write(&p, [0u8; 5]).unwrap();
        assert!(matches!(load_pair_cache(&p), Err(Error::Format(_))));
    }
}
