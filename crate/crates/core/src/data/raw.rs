use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetBundle, RawSequence, SplitRatios};
use crate::error::{Error, Result};

/// Event time; numeric when the column parses as a number, else compared as text
/// (ISO-8601 strings order correctly).
#[derive(Debug, Clone, PartialEq)]
pub enum Timestamp {
    Numeric(f64),
    Text(String),
}

impl Timestamp {
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Timestamp::Numeric(v),
            _ => Timestamp::Text(s.to_string()),
        }
    }

    fn cmp_total(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Timestamp::Numeric(a), Timestamp::Numeric(b)) => a.total_cmp(b),
            (Timestamp::Text(a), Timestamp::Text(b)) => a.cmp(b),
            (Timestamp::Numeric(_), Timestamp::Text(_)) => Ordering::Less,
            (Timestamp::Text(_), Timestamp::Numeric(_)) => Ordering::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingRow {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickRow {
    pub session: String,
    pub item: String,
    pub timestamp: Timestamp,
}

/// Where each field lives in a delimiter-separated file. Columns are header
/// names when `has_header` is set, otherwise zero-based positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub delimiter: char,
    pub has_header: bool,
    pub user: String,
    pub item: String,
    #[serde(default)]
    pub rating: Option<String>,
    pub timestamp: String,
}

impl ColumnMapping {
    /// `ratings.csv` from the MovieLens distribution.
    pub fn movielens() -> Self {
        Self {
            delimiter: ',',
            has_header: true,
            user: "userId".into(),
            item: "movieId".into(),
            rating: Some("rating".into()),
            timestamp: "timestamp".into(),
        }
    }

    /// `yoochoose-clicks.dat`: session, timestamp, item, category; no header.
    pub fn recsys() -> Self {
        Self {
            delimiter: ',',
            has_header: false,
            user: "0".into(),
            item: "2".into(),
            rating: None,
            timestamp: "1".into(),
        }
    }

    fn resolve(&self, column: &str, header: Option<&csv::StringRecord>, source: &str) -> Result<usize> {
        if let Some(h) = header {
            if let Some(pos) = h.iter().position(|c| c.trim() == column) {
                return Ok(pos);
            }
        }
        column.parse::<usize>().map_err(|_| Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!("column `{column}` not found"),
        })
    }
}

struct Columns {
    user: usize,
    item: usize,
    rating: Option<usize>,
    timestamp: usize,
}

fn for_each_record<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
    source: &str,
    mut f: impl FnMut(&csv::StringRecord, &Columns, usize) -> Result<()>,
) -> Result<()> {
    if !mapping.delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter {:?} must be ASCII", mapping.delimiter)));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter as u8)
        .has_headers(mapping.has_header)
        .flexible(true)
        .from_reader(reader);
    let header = if mapping.has_header {
        Some(rdr.headers()?.clone())
    } else {
        None
    };
    let cols = Columns {
        user: mapping.resolve(&mapping.user, header.as_ref(), source)?,
        item: mapping.resolve(&mapping.item, header.as_ref(), source)?,
        rating: mapping
            .rating
            .as_deref()
            .map(|c| mapping.resolve(c, header.as_ref(), source))
            .transpose()?,
        timestamp: mapping.resolve(&mapping.timestamp, header.as_ref(), source)?,
    };
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                return Err(Error::Parse {
                    path: source.to_string(),
                    line,
                    message: e.to_string(),
                });
            }
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        f(&record, &cols, line)?;
    }
    Ok(())
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str, source: &str, line: usize) -> Result<&'r str> {
    match record.get(idx).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Parse {
            path: source.to_string(),
            line,
            message: format!("missing {name} field"),
        }),
    }
}

pub fn parse_ratings<R: Read>(reader: R, mapping: &ColumnMapping, source: &str) -> Result<Vec<RatingRow>> {
    let rating_col = mapping
        .rating
        .as_ref()
        .ok_or_else(|| Error::Config("rating column required for rating data".into()))?;
    let mut rows = Vec::new();
    for_each_record(reader, mapping, source, |rec, cols, line| {
        let raw_rating = field(rec, cols.rating.expect("resolved"), rating_col, source, line)?;
        let rating = raw_rating.parse::<f64>().map_err(|_| Error::Parse {
            path: source.to_string(),
            line,
            message: format!("rating `{raw_rating}` is not a number"),
        })?;
        rows.push(RatingRow {
            user: field(rec, cols.user, "user", source, line)?.to_string(),
            item: field(rec, cols.item, "item", source, line)?.to_string(),
            rating,
            timestamp: Timestamp::parse(field(rec, cols.timestamp, "timestamp", source, line)?),
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn parse_clicks<R: Read>(reader: R, mapping: &ColumnMapping, source: &str) -> Result<Vec<ClickRow>> {
    let mut rows = Vec::new();
    for_each_record(reader, mapping, source, |rec, cols, line| {
        rows.push(ClickRow {
            session: field(rec, cols.user, "session", source, line)?.to_string(),
            item: field(rec, cols.item, "item", source, line)?.to_string(),
            timestamp: Timestamp::parse(field(rec, cols.timestamp, "timestamp", source, line)?),
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn read_ratings(path: &Path, mapping: &ColumnMapping) -> Result<Vec<RatingRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(std::io::BufReader::new(file), mapping, &path.display().to_string())
}

pub fn read_clicks(path: &Path, mapping: &ColumnMapping) -> Result<Vec<ClickRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_clicks(std::io::BufReader::new(file), mapping, &path.display().to_string())
}

/// Groups events by key in first-appearance order, each group stably sorted by time.
fn group_by_time<T>(
    rows: impl IntoIterator<Item = T>,
    key: impl Fn(&T) -> &str,
    time: impl Fn(&T) -> &Timestamp,
) -> Vec<(String, Vec<T>)> {
    let mut order: Vec<(String, Vec<T>)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for row in rows {
        let k = key(&row);
        let i = match slot.get(k) {
            Some(&i) => i,
            None => {
                slot.insert(k.to_string(), order.len());
                order.push((k.to_string(), Vec::new()));
                order.len() - 1
            }
        };
        order[i].1.push(row);
    }
    for (_, group) in &mut order {
        group.sort_by(|a, b| time(a).cmp_total(time(b)));
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovieLensConfig {
    pub min_rating: f64,
    pub min_positives: usize,
    pub history_len: usize,
    pub future_len: usize,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for MovieLensConfig {
    fn default() -> Self {
        Self {
            min_rating: 4.0,
            min_positives: 15,
            history_len: 10,
            future_len: 5,
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

/// Ratings at or above `min_rating` become positives; users with at least
/// `min_positives` contribute their last `history_len + future_len`
/// positives, split chronologically into history and future.
pub fn preprocess_movielens(rows: Vec<RatingRow>, config: &MovieLensConfig) -> Result<DatasetBundle> {
    let window = config.history_len + config.future_len;
    if config.history_len == 0 || config.future_len == 0 || config.min_positives < window {
        return Err(Error::Config(format!(
            "need history_len, future_len >= 1 and min_positives >= {window}"
        )));
    }
    let positives = rows.into_iter().filter(|r| r.rating >= config.min_rating);
    let users = group_by_time(positives, |r| &r.user, |r| &r.timestamp);

    let mut sequences = Vec::new();
    for (user, events) in users {
        if events.len() < config.min_positives {
            continue;
        }
        let mut seen = HashSet::new();
        for e in &events {
            if !seen.insert(e.item.as_str()) {
                return Err(Error::DuplicateItem {
                    user,
                    item: e.item.clone(),
                });
            }
        }
        let last: Vec<String> = events[events.len() - window..].iter().map(|e| e.item.clone()).collect();
        sequences.push(RawSequence {
            user,
            history: last[..config.history_len].to_vec(),
            future: last[config.history_len..].to_vec(),
        });
    }

    let params = BTreeMap::from([
        ("min_rating".to_string(), config.min_rating.to_string()),
        ("min_positives".to_string(), config.min_positives.to_string()),
        ("history_len".to_string(), config.history_len.to_string()),
        ("future_len".to_string(), config.future_len.to_string()),
    ]);
    DatasetBundle::assemble(sequences, config.ratios, config.seed, "movielens", params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecsysConfig {
    pub min_length: usize,
    pub history_len: usize,
    pub future_len: usize,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl Default for RecsysConfig {
    fn default() -> Self {
        Self {
            min_length: 15,
            history_len: 13,
            future_len: 2,
            ratios: SplitRatios::default(),
            seed: 0,
        }
    }
}

/// Sessions with at least `min_length` clicks contribute their first
/// `history_len` clicks as history and final `future_len` as future.
/// Repeated items are kept.
pub fn preprocess_recsys(rows: Vec<ClickRow>, config: &RecsysConfig) -> Result<DatasetBundle> {
    if config.history_len == 0 || config.future_len == 0 || config.min_length < config.history_len + config.future_len {
        return Err(Error::Config(
            "need history_len, future_len >= 1 and min_length >= history_len + future_len".into(),
        ));
    }
    let sessions = group_by_time(rows, |r| &r.session, |r| &r.timestamp);
    let sequences = sessions
        .into_iter()
        .filter(|(_, clicks)| clicks.len() >= config.min_length)
        .map(|(session, clicks)| {
            let items: Vec<String> = clicks.into_iter().map(|c| c.item).collect();
            RawSequence {
                user: session,
                history: items[..config.history_len].to_vec(),
                future: items[items.len() - config.future_len..].to_vec(),
            }
        })
        .collect();
    let params = BTreeMap::from([
        ("min_length".to_string(), config.min_length.to_string()),
        ("history_len".to_string(), config.history_len.to_string()),
        ("future_len".to_string(), config.future_len.to_string()),
    ]);
    DatasetBundle::assemble(sequences, config.ratios, config.seed, "recsys", params)
}
