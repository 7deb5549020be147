use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::PairDataset;
use crate::vocab::Vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowOptions {
    pub window: usize,
    pub vocab_size: usize,
    /// Also emit `(token_{t+k}, token_t)`.
    pub bidirectional: bool,
}

/// Reads a whitespace-tokenized UTF-8 corpus, optionally only its first
/// `max_bytes` bytes (a token cut at the boundary is dropped).
pub fn read_corpus(path: impl AsRef<Path>, max_bytes: Option<u64>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    match max_bytes {
        Some(n) => f.take(n).read_to_end(&mut buf),
        None => { let mut f = f; f.read_to_end(&mut buf) }
    }
    .map_err(|e| Error::io(path, e))?;
    let truncated = max_bytes.is_some_and(|n| buf.len() as u64 == n);
    // back off to a char boundary
    let text = match std::str::from_utf8(&buf) {
        Ok(t) => t,
        Err(e) if truncated && e.error_len().is_none() => std::str::from_utf8(&buf[..e.valid_up_to()]).expect("valid prefix"),
        Err(e) => return Err(Error::parse("corpus", None, e.to_string())),
    };
    let mut tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    if truncated && !text.ends_with(char::is_whitespace) {
        tokens.pop();
    }
    Ok(tokens)
}

/// Top `vocab_size` labels by frequency, ties broken lexicographically.
pub(crate) fn top_labels<'a, I>(items: I, vocab_size: usize) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for t in items {
        *freq.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(vocab_size);
    ranked.into_iter().map(|(t, _)| t.to_owned()).collect()
}

/// Forward window pairs over already-mapped ids.
pub(crate) fn window_pairs(ids: &[usize], window: usize, bidirectional: bool, out: &mut Vec<(usize, usize)>) {
    for t in 0..ids.len() {
        for k in 1..=window {
            let Some(&next) = ids.get(t + k) else { break };
            out.push((ids[t], next));
            if bidirectional {
                out.push((next, ids[t]));
            }
        }
    }
}

pub fn pairs_from_text<S: AsRef<str>>(tokens: &[S], window: usize, vocab_size: usize) -> Result<(Vocab, PairDataset)> {
    pairs_from_text_with(
        tokens,
        WindowOptions {
            window,
            vocab_size,
            bidirectional: false,
        },
    )
}

/// Keeps the `vocab_size` most frequent tokens, drops the rest from the
/// sequence, then emits `(token_t, token_{t+k})` for `k = 1..=window`.
pub fn pairs_from_text_with<S: AsRef<str>>(tokens: &[S], opts: WindowOptions) -> Result<(Vocab, PairDataset)> {
    if tokens.is_empty() {
        return Err(Error::Empty("token stream"));
    }
    if opts.window == 0 || opts.vocab_size == 0 {
        return Err(Error::Config("window and vocab_size must be positive".into()));
    }
    let labels = top_labels(tokens.iter().map(AsRef::as_ref), opts.vocab_size);
    let mut vocab = Vocab::shared(labels)?;
    let ids: Vec<usize> = tokens.iter().filter_map(|t| vocab.context_id(t.as_ref())).collect();
    let mut pairs = Vec::with_capacity(ids.len() * opts.window);
    window_pairs(&ids, opts.window, opts.bidirectional, &mut pairs);
    vocab.recount(&pairs)?;
    let meta = format!(
        "text: {} tokens ({} retained), vocab {}, window {}{}",
        tokens.len(),
        ids.len(),
        vocab.card_i(),
        opts.window,
        if opts.bidirectional { ", bidirectional" } else { "" }
    );
    Ok((vocab, PairDataset::new(pairs, meta)))
}
