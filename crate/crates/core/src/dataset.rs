//! Rating matrices, content catalogs and event logs for the two domains.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Read, Write};
use std::path::Path;

use crate::csvio::{self, field};
use crate::error::{Error, Line, Result};

pub type UserId = String;
pub type ItemId = String;
pub type Rating = u8;

/// Sparse user x item ratings of one domain. Every rating lies in `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    domain: String,
    k: Rating,
    by_user: BTreeMap<UserId, BTreeMap<ItemId, Rating>>,
    len: usize,
}

impl RatingMatrix {
    pub fn new(domain: impl Into<String>, k: Rating) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("number of rating values k must be positive".into()));
        }
        Ok(RatingMatrix {
            domain: domain.into(),
            k,
            by_user: BTreeMap::new(),
            len: 0,
        })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn k(&self) -> Rating {
        self.k
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, user: &str, item: &str, rating: i64) -> Result<()> {
        self.insert_at(Line(None), user, item, rating)
    }

    fn insert_at(&mut self, line: Line, user: &str, item: &str, rating: i64) -> Result<()> {
        if rating < 1 || rating > i64::from(self.k) {
            return Err(Error::RatingOutOfRange {
                line,
                rating,
                k: self.k,
            });
        }
        let row = self.by_user.entry(user.to_string()).or_default();
        if row.contains_key(item) {
            return Err(Error::DuplicateRating {
                line,
                user: user.to_string(),
                item: item.to_string(),
            });
        }
        row.insert(item.to_string(), rating as Rating);
        self.len += 1;
        Ok(())
    }

    pub fn get(&self, user: &str, item: &str) -> Option<Rating> {
        self.by_user.get(user)?.get(item).copied()
    }

    /// All ratings of one user, keyed by item. `None` if the user rated nothing.
    pub fn user_ratings(&self, user: &str) -> Option<&BTreeMap<ItemId, Rating>> {
        self.by_user.get(user)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.by_user.keys()
    }

    pub fn user_set(&self) -> BTreeSet<UserId> {
        self.by_user.keys().cloned().collect()
    }

    pub fn items(&self) -> BTreeSet<ItemId> {
        self.by_user
            .values()
            .flat_map(|row| row.keys().cloned())
            .collect()
    }

    /// Entries in (user, item) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Rating)> {
        self.by_user.iter().flat_map(|(u, row)| {
            row.iter()
                .map(move |(i, r)| (u.as_str(), i.as_str(), *r))
        })
    }

    /// A copy keeping only the users accepted by `keep`.
    pub fn filter_users(&self, mut keep: impl FnMut(&str) -> bool) -> RatingMatrix {
        let by_user: BTreeMap<_, _> = self
            .by_user
            .iter()
            .filter(|(u, _)| keep(u))
            .map(|(u, row)| (u.clone(), row.clone()))
            .collect();
        let len = by_user.values().map(BTreeMap::len).sum();
        RatingMatrix {
            domain: self.domain.clone(),
            k: self.k,
            by_user,
            len,
        }
    }

    pub fn read_csv<R: Read>(input: R, name: &Path, domain: &str, k: Rating) -> Result<Self> {
        let mut csv = csvio::from_reader(input, name);
        csv.expect_header(&["user_id", "item_id", "rating"], false)?;
        let mut matrix = RatingMatrix::new(domain, k)?;
        for (line, fields) in csv.records()? {
            if fields.len() != 3 {
                return Err(csv.parse_error(line, format!("expected 3 fields, found {}", fields.len())));
            }
            let (user, item) = (&fields[0], &fields[1]);
            if user.is_empty() || item.is_empty() {
                return Err(csv.parse_error(line, "empty user_id or item_id"));
            }
            let rating: i64 = fields[2]
                .parse()
                .map_err(|_| csv.parse_error(line, format!("rating `{}` is not an integer", fields[2])))?;
            matrix.insert_at(Line(Some(line)), user, item, rating)?;
        }
        Ok(matrix)
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "user_id,item_id,rating")?;
        for (u, i, r) in self.iter() {
            writeln!(out, "{u},{i},{r}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        csvio::write_file(path, |w| self.write_csv(w))
    }
}

/// Loads a ratings CSV with header `user_id,item_id,rating`.
pub fn ingest_ratings(path: &Path, domain: &str, k: Rating) -> Result<RatingMatrix> {
    RatingMatrix::read_csv(csvio::open(path)?, path, domain, k)
}

/// Per-item real-valued content features of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCatalog {
    domain: String,
    feature_names: Vec<String>,
    features: BTreeMap<ItemId, Vec<f64>>,
}

impl ContentCatalog {
    pub fn new(domain: impl Into<String>, feature_names: Vec<String>) -> Self {
        ContentCatalog {
            domain: domain.into(),
            feature_names,
            features: BTreeMap::new(),
        }
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn insert(&mut self, item: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim() {
            return Err(Error::Validation(format!(
                "content vector for `{item}` has {} values, catalog `{}` expects {}",
                vector.len(),
                self.domain,
                self.dim()
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("content vector for `{item}` is not finite")));
        }
        if self.features.insert(item.to_string(), vector).is_some() {
            return Err(Error::Validation(format!("duplicate content row for `{item}`")));
        }
        Ok(())
    }

    pub fn get(&self, item: &str) -> Option<&[f64]> {
        self.features.get(item).map(Vec::as_slice)
    }

    pub fn require(&self, item: &str) -> Result<&[f64]> {
        self.get(item).ok_or_else(|| Error::MissingContent {
            domain: self.domain.clone(),
            item: item.to_string(),
        })
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.features.keys()
    }

    /// Checks that every item rated in `matrix` has a content vector.
    pub fn validate_covers(&self, matrix: &RatingMatrix) -> Result<()> {
        for item in matrix.items() {
            self.require(&item)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, name: &Path, domain: &str) -> Result<Self> {
        let mut csv = csvio::from_reader(input, name);
        let header = csv.headers()?;
        if header.first().map(String::as_str) != Some("item_id") {
            return Err(csv.parse_error(1, "content header must start with `item_id`"));
        }
        let mut catalog = ContentCatalog::new(domain, header[1..].to_vec());
        for (line, fields) in csv.records()? {
            if fields.len() != header.len() {
                return Err(csv.parse_error(
                    line,
                    format!("expected {} fields, found {}", header.len(), fields.len()),
                ));
            }
            let mut vector = Vec::with_capacity(fields.len() - 1);
            for value in &fields[1..] {
                let v: f64 = value
                    .parse()
                    .map_err(|_| csv.parse_error(line, format!("feature `{value}` is not a number")))?;
                vector.push(v);
            }
            catalog
                .insert(&fields[0], vector)
                .map_err(|e| csv.parse_error(line, e.to_string()))?;
        }
        Ok(catalog)
    }

    pub fn load(path: &Path, domain: &str) -> Result<Self> {
        Self::read_csv(csvio::open(path)?, path, domain)
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "item_id")?;
        for name in &self.feature_names {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (item, vector) in &self.features {
            write!(out, "{item}")?;
            for v in vector {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        csvio::write_file(path, |w| self.write_csv(w))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub user: UserId,
    pub item: ItemId,
    pub event_type: String,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn read_csv<R: Read>(input: R, name: &Path) -> Result<Self> {
        let mut csv = csvio::from_reader(input, name);
        let header = csv.expect_header(&["user_id", "item_id", "event_type"], true)?;
        if header.len() > 4 || (header.len() == 4 && header[3] != "timestamp") {
            return Err(csv.parse_error(1, "events header must be `user_id,item_id,event_type[,timestamp]`"));
        }
        let mut events = Vec::new();
        for (line, fields) in csv.records()? {
            if fields.len() < 3 || fields.len() > 4 {
                return Err(csv.parse_error(line, format!("expected 3 or 4 fields, found {}", fields.len())));
            }
            events.push(Event {
                user: fields[0].clone(),
                item: fields[1].clone(),
                event_type: fields[2].clone(),
                timestamp: field(&fields, 3).filter(|t| !t.is_empty()).map(str::to_string),
            });
        }
        Ok(EventLog { events })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(csvio::open(path)?, path)
    }
}

/// Converts an event log to ratings by mapping each event type to a rating and
/// keeping the largest mapped rating per (user, item).
pub fn events_to_ratings(
    log: &EventLog,
    weights: &BTreeMap<String, Rating>,
    domain: &str,
    k: Rating,
) -> Result<RatingMatrix> {
    for (event_type, &w) in weights {
        if w < 1 || w > k {
            return Err(Error::Config(format!(
                "event_weights.{event_type} = {w} is outside 1..={k}"
            )));
        }
    }
    let mut best: BTreeMap<(&str, &str), Rating> = BTreeMap::new();
    for event in &log.events {
        let w = *weights.get(&event.event_type).ok_or_else(|| {
            Error::Config(format!(
                "event type `{}` has no entry in event_weights",
                event.event_type
            ))
        })?;
        let slot = best.entry((&event.user, &event.item)).or_insert(w);
        *slot = (*slot).max(w);
    }
    let mut matrix = RatingMatrix::new(domain, k)?;
    for ((user, item), rating) in best {
        matrix.insert(user, item, i64::from(rating))?;
    }
    Ok(matrix)
}

/// |A ∩ B| / |A ∪ B|, defined as 0 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Ratings and content for a source and a target domain sharing a user space.
#[derive(Debug, Clone)]
pub struct CrossDomainData {
    pub source: RatingMatrix,
    pub target: RatingMatrix,
    pub source_content: ContentCatalog,
    pub target_content: ContentCatalog,
}

impl CrossDomainData {
    pub fn validate(&self) -> Result<()> {
        self.source_content.validate_covers(&self.source)?;
        self.target_content.validate_covers(&self.target)
    }

    /// Users present in both domains.
    pub fn shared_users(&self) -> BTreeSet<UserId> {
        let target = self.target.user_set();
        self.source
            .users()
            .filter(|u| target.contains(*u))
            .cloned()
            .collect()
    }
}
