//! Catalogs, interaction logs and the user histories built from them.
//!
//! On-disk formats:
//!
//! - Item catalog: JSON lines, one object per item with the keys
//!   `item_id`, `title`, `category`, `description`, `cast`,
//!   `playtime_seconds`.
//! - Interaction log: tab-separated `user_id<TAB>timestamp<TAB>item_id<TAB>domain`
//!   where `domain` is `source` or `target`. Lines starting with `#` are
//!   comments.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Playtimes must stay below 100 hours.
pub const MAX_PLAYTIME_SECONDS: i64 = 360_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Domain label fed to the discriminator: `0` for source, `1` for target.
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub category: String,
    pub description: String,
    #[serde(default)]
    pub cast: String,
    #[serde(default)]
    pub playtime_seconds: i64,
}

impl ItemRecord {
    /// All free-text fields, in a fixed order.
    pub fn text_fields(&self) -> [&str; 3] {
        [&self.title, &self.description, &self.cast]
    }
}

/// Items of one domain, addressable by dense index (the class label for
/// source items) or by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Catalog {
    items: Vec<ItemRecord>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(items: Vec<ItemRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.playtime_seconds >= MAX_PLAYTIME_SECONDS {
                return Err(Error::Config(format!(
                    "item `{}` playtime {} exceeds {MAX_PLAYTIME_SECONDS}",
                    item.item_id, item.playtime_seconds
                )));
            }
            if index.insert(item.item_id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate item id `{}`", item.item_id)));
            }
        }
        Ok(Catalog { items, index })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn get(&self, idx: usize) -> &ItemRecord {
        &self.items[idx]
    }

    pub fn position(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    pub fn resolve(&self, item_id: &str) -> Result<usize> {
        self.position(item_id).ok_or_else(|| Error::UnknownId {
            kind: "item",
            id: item_id.to_string(),
        })
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut items = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: ItemRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })?;
            items.push(item);
        }
        Catalog::new(items)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for item in &self.items {
            let line = serde_json::to_string(item).expect("item records serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEvent {
    pub user_id: String,
    pub timestamp: u64,
    pub item_id: String,
    pub domain: Domain,
}

pub fn read_log(path: &Path) -> Result<Vec<LogEvent>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let timestamp = fields[1]
            .parse::<u64>()
            .map_err(|e| parse_err(format!("bad timestamp: {e}")))?;
        let domain = fields[3].parse::<Domain>().map_err(parse_err)?;
        events.push(LogEvent {
            user_id: fields[0].to_string(),
            timestamp,
            item_id: fields[2].to_string(),
            domain,
        });
    }
    Ok(events)
}

pub fn write_log(path: &Path, events: &[LogEvent]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        writeln!(w, "{}\t{}\t{}\t{}", e.user_id, e.timestamp, e.item_id, e.domain)
            .map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Time-ordered item consumption of one user in one domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    pub domain: Domain,
    /// `(item_id, timestamp)` with non-decreasing timestamps.
    pub events: Vec<(String, u64)>,
}

impl UserHistory {
    pub fn new(user_id: String, domain: Domain, mut events: Vec<(String, u64)>) -> Self {
        events.sort_by_key(|(_, ts)| *ts);
        UserHistory {
            user_id,
            domain,
            events,
        }
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|(id, _)| id.as_str())
    }

    /// Fails when an item is absent from the domain's catalog.
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        for id in self.item_ids() {
            catalog.resolve(id)?;
        }
        Ok(())
    }
}

/// A history with the index of the source item consumed next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub history: UserHistory,
    pub label: usize,
}

fn group_by_user(events: &[LogEvent]) -> BTreeMap<&str, Vec<&LogEvent>> {
    let mut users: BTreeMap<&str, Vec<&LogEvent>> = BTreeMap::new();
    for e in events {
        users.entry(e.user_id.as_str()).or_default().push(e);
    }
    users
}

/// Splits each source user's log into a history and the last item as label.
/// Users with fewer than two events are skipped.
pub fn source_examples(events: &[LogEvent], catalog: &Catalog) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (user, evs) in group_by_user(events) {
        let history = UserHistory::new(
            user.to_string(),
            Domain::Source,
            evs.iter()
                .filter(|e| e.domain == Domain::Source)
                .map(|e| (e.item_id.clone(), e.timestamp))
                .collect(),
        );
        if history.events.len() < 2 {
            continue;
        }
        let mut history = history;
        let (last, _) = history.events.pop().expect("non-empty");
        history.validate(catalog)?;
        out.push(LabeledExample {
            label: catalog.resolve(&last)?,
            history,
        });
    }
    Ok(out)
}

/// All target-domain users as unlabeled histories.
pub fn target_histories(events: &[LogEvent], catalog: &Catalog) -> Result<Vec<UserHistory>> {
    let mut out = Vec::new();
    for (user, evs) in group_by_user(events) {
        let history = UserHistory::new(
            user.to_string(),
            Domain::Target,
            evs.iter()
                .filter(|e| e.domain == Domain::Target)
                .map(|e| (e.item_id.clone(), e.timestamp))
                .collect(),
        );
        if history.events.is_empty() {
            continue;
        }
        history.validate(catalog)?;
        out.push(history);
    }
    Ok(out)
}

/// Common users: the target-domain events form the history and the first
/// source-domain event is the label.
pub fn common_user_examples(
    events: &[LogEvent],
    source: &Catalog,
    target: &Catalog,
) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (user, evs) in group_by_user(events) {
        let history = UserHistory::new(
            user.to_string(),
            Domain::Target,
            evs.iter()
                .filter(|e| e.domain == Domain::Target)
                .map(|e| (e.item_id.clone(), e.timestamp))
                .collect(),
        );
        let label = evs
            .iter()
            .filter(|e| e.domain == Domain::Source)
            .min_by_key(|e| e.timestamp);
        let (Some(label), false) = (label, history.events.is_empty()) else {
            continue;
        };
        history.validate(target)?;
        out.push(LabeledExample {
            label: source.resolve(&label.item_id)?,
            history,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str) -> ItemRecord {
        ItemRecord {
            item_id: id.into(),
            title: format!("title {id}"),
            category: "film".into(),
            description: "desc".into(),
            cast: String::new(),
            playtime_seconds: 60,
        }
    }

    fn ev(user: &str, ts: u64, item: &str, domain: Domain) -> LogEvent {
        LogEvent {
            user_id: user.into(),
            timestamp: ts,
            item_id: item.into(),
            domain,
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Catalog::new(vec![item("a"), item("a")]).is_err());
    }

    #[test]
    fn source_examples_take_last_item_as_label() {
        let cat = Catalog::new(vec![item("a"), item("b"), item("c")]).unwrap();
        let events = vec![
            ev("u1", 5, "c", Domain::Source),
            ev("u1", 1, "a", Domain::Source),
            ev("u1", 3, "b", Domain::Source),
            ev("u2", 1, "a", Domain::Source),
        ];
        let ex = source_examples(&events, &cat).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].label, 2);
        assert_eq!(ex[0].history.item_ids().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn unknown_items_are_reported() {
        let cat = Catalog::new(vec![item("a")]).unwrap();
        let events = vec![ev("u", 1, "zzz", Domain::Target)];
        assert!(matches!(
            target_histories(&events, &cat),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn log_round_trip() {
        let dir = std::env::temp_dir().join(format!("dsnrec-log-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("log.tsv");
        let events = vec![ev("u1", 1, "a", Domain::Source), ev("u2", 7, "n1", Domain::Target)];
        write_log(&path, &events).unwrap();
        assert_eq!(read_log(&path).unwrap(), events);
        fs::remove_dir_all(&dir).ok();
    }
}
