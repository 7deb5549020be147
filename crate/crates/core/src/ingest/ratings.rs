use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::text::{top_labels, window_pairs};
use crate::ingest::PairDataset;
use crate::vocab::Vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Column names in a ratings CSV header.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingsColumns {
    pub user: String,
    pub item: String,
    pub rating: String,
    pub timestamp: Option<String>,
}

impl Default for RatingsColumns {
    /// MovieLens `ratings.csv` naming.
    fn default() -> Self {
        RatingsColumns {
            user: "userId".into(),
            item: "movieId".into(),
            rating: "rating".into(),
            timestamp: Some("timestamp".into()),
        }
    }
}

pub fn load_ratings_csv(path: impl AsRef<Path>, columns: &RatingsColumns) -> Result<Vec<RatingEvent>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse("ratings", None, e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("ratings header", Some(1), e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("ratings file has no column {name:?}")))
    };
    let (cu, ci, cr) = (col(&columns.user)?, col(&columns.item)?, col(&columns.rating)?);
    let ct = columns.timestamp.as_deref().map(col).transpose()?;
    let mut events = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse("ratings", Some(line), e.to_string()))?;
        let field = |c: usize| {
            rec.get(c)
                .ok_or_else(|| Error::parse("ratings", Some(line), format!("missing column {c}")))
        };
        let rating = field(cr)?
            .parse::<f64>()
            .map_err(|e| Error::parse("ratings", Some(line), format!("rating: {e}")))?;
        let timestamp = match ct {
            Some(c) => Some(
                field(c)?
                    .parse::<i64>()
                    .map_err(|e| Error::parse("ratings", Some(line), format!("timestamp: {e}")))?,
            ),
            None => None,
        };
        events.push(RatingEvent {
            user: field(cu)?.to_owned(),
            item: field(ci)?.to_owned(),
            rating,
            timestamp,
        });
    }
    Ok(events)
}

/// Item-to-item pairs from user timelines.
///
/// Keeps events with `rating >= threshold`, orders each user's items by
/// timestamp (input order breaks ties and stands in when timestamps are
/// absent), caps the item vocabulary at the `max_items` most frequent, and
/// windows each timeline forward exactly like text. Users are visited in
/// order of first appearance. Nothing retained yields an empty vocabulary
/// and dataset.
pub fn pairs_from_ratings(
    events: &[RatingEvent],
    threshold: f64,
    max_items: usize,
    window: usize,
) -> Result<(Vocab, PairDataset)> {
    if window == 0 || max_items == 0 {
        return Err(Error::Config("window and max_items must be positive".into()));
    }
    let kept: Vec<(usize, &RatingEvent)> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.rating >= threshold)
        .collect();
    let meta = format!(
        "ratings: {} events, {} with rating >= {threshold}, window {window}",
        events.len(),
        kept.len()
    );
    if kept.is_empty() {
        return Ok((Vocab::default(), PairDataset::new(Vec::new(), meta)));
    }
    let labels = top_labels(kept.iter().map(|(_, e)| e.item.as_str()), max_items);
    let mut vocab = Vocab::shared(labels)?;

    let mut user_order: Vec<&str> = Vec::new();
    let mut timelines: HashMap<&str, Vec<(Option<i64>, usize, usize)>> = HashMap::new();
    for &(pos, e) in &kept {
        let Some(id) = vocab.context_id(&e.item) else { continue };
        let tl = timelines.entry(e.user.as_str()).or_insert_with(|| {
            user_order.push(e.user.as_str());
            Vec::new()
        });
        tl.push((e.timestamp, pos, id));
    }
    let mut pairs = Vec::new();
    for user in user_order {
        let tl = timelines.get_mut(user).expect("timeline exists");
        tl.sort_by_key(|&(ts, pos, _)| (ts, pos));
        let ids: Vec<usize> = tl.iter().map(|t| t.2).collect();
        window_pairs(&ids, window, false, &mut pairs);
    }
    vocab.recount(&pairs)?;
    Ok((vocab, PairDataset::new(pairs, meta)))
}
