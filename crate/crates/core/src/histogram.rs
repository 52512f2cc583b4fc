//! Histogram datasets, the add/remove neighbor relation, and sensitivity-1
//! integer queries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Identifiers mapped to nonnegative counts. Entry order is the dataset
/// order and is preserved by every operation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Histogram {
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
}

impl Histogram {
    pub fn new(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (pos, (key, _)) in entries.iter().enumerate() {
            if index.insert(key.clone(), pos).is_some() {
                return Err(Error::Histogram(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries, index })
    }

    /// Keys `"1"`, `"2"`, ... in order.
    pub fn from_counts(counts: &[u64]) -> Self {
        let entries = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| ((i + 1).to_string(), c))
            .collect();
        Self::new(entries).expect("generated keys are unique")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, key: &str) -> u64 {
        self.index.get(key).map_or(0, |&i| self.entries[i].1)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.entries.iter().map(|(k, c)| (k.as_str(), *c))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Adds one contribution to `key`, appending the key if absent.
    pub fn with_added(&self, key: &str) -> Self {
        let mut out = self.clone();
        match out.index.get(key) {
            Some(&i) => out.entries[i].1 += 1,
            None => {
                out.index.insert(key.to_string(), out.entries.len());
                out.entries.push((key.to_string(), 1));
            }
        }
        out
    }

    /// Removes one contribution from `key`; `None` if the count is zero.
    pub fn with_removed(&self, key: &str) -> Option<Self> {
        let &i = self.index.get(key)?;
        if self.entries[i].1 == 0 {
            return None;
        }
        let mut out = self.clone();
        out.entries[i].1 -= 1;
        Some(out)
    }

    /// All add/remove-one-contribution neighbors over the existing keys.
    pub fn neighbors(&self) -> Vec<Histogram> {
        let mut out = Vec::with_capacity(2 * self.len());
        for (key, _) in &self.entries {
            out.push(self.with_added(key));
            if let Some(h) = self.with_removed(key) {
                out.push(h);
            }
        }
        out
    }

    /// True iff the two histograms differ by exactly one unit in one key.
    pub fn is_neighbor_of(&self, other: &Histogram) -> bool {
        let keys: BTreeSet<&str> = self.keys().chain(other.keys()).collect();
        let mut diff = 0u64;
        for k in keys {
            diff += self.count(k).abs_diff(other.count(k));
            if diff > 1 {
                return false;
            }
        }
        diff == 1
    }

    /// Reads a `key,count` CSV with a header row, keeping file order.
    pub fn read_counts_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        check_header(&mut rdr, &["key", "count"])?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let key = rec.get(0).unwrap_or_default().to_string();
            let count = rec
                .get(1)
                .unwrap_or_default()
                .parse::<u64>()
                .map_err(|e| Error::Histogram(format!("bad count for `{key}`: {e}")))?;
            entries.push((key, count));
        }
        Self::new(entries)
    }

    /// Reads raw `author,thread` contributions and counts unique authors per
    /// thread. Threads come out in ascending key order.
    pub fn read_contributions_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        check_header(&mut rdr, &["author", "thread"])?;
        let mut users: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let author = rec.get(0).unwrap_or_default();
            let thread = rec.get(1).unwrap_or_default();
            users
                .entry(thread.to_string())
                .or_default()
                .insert(author.to_string());
        }
        Self::new(
            users
                .into_iter()
                .map(|(t, a)| (t, a.len() as u64))
                .collect(),
        )
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Histogram(format!(
            "expected header {expected:?}, found {got:?}"
        )));
    }
    Ok(())
}

type QueryFn = dyn Fn(&Histogram) -> i64 + Send + Sync;

/// An integer-valued query declared to have sensitivity at most one under
/// add/remove neighbors, optionally declared monotone (never decreases when a
/// contribution is added).
#[derive(Clone)]
pub struct Query {
    label: String,
    f: Arc<QueryFn>,
    monotone: bool,
}

impl fmt::Debug for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Query")
            .field("label", &self.label)
            .field("monotone", &self.monotone)
            .finish()
    }
}

/// Largest change of a query over the neighbors of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborCheck {
    pub max_abs_change: u64,
    /// No neighbor with one more contribution has a smaller value, and no
    /// neighbor with one fewer has a larger one.
    pub monotone: bool,
}

impl Query {
    pub fn sensitivity_one(
        label: impl Into<String>,
        f: impl Fn(&Histogram) -> i64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
            monotone: false,
        }
    }

    pub fn monotone(
        label: impl Into<String>,
        f: impl Fn(&Histogram) -> i64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            monotone: true,
            ..Self::sensitivity_one(label, f)
        }
    }

    /// Count of one key, shifted down by `threshold`.
    pub fn count_of(key: impl Into<String>, threshold: i64) -> Self {
        let key = key.into();
        let label = format!("count({key}) - {threshold}");
        Self::monotone(label, move |h| h.count(&key) as i64 - threshold)
    }

    pub fn constant(value: i64) -> Self {
        Self::monotone(format!("const {value}"), move |_| value)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, data: &Histogram) -> i64 {
        (self.f)(data)
    }

    /// Evaluates the query on every neighbor of `data`.
    pub fn check_on_neighbors(&self, data: &Histogram) -> NeighborCheck {
        let base = self.eval(data);
        let total = data.total();
        let mut max_abs_change = 0;
        let mut monotone = true;
        for n in data.neighbors() {
            let v = self.eval(&n);
            max_abs_change = max_abs_change.max(v.abs_diff(base));
            if (n.total() > total && v < base) || (n.total() < total && v > base) {
                monotone = false;
            }
        }
        NeighborCheck {
            max_abs_change,
            monotone,
        }
    }
}
