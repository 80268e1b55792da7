//! Merging a JSON config file with command-line flags.
//!
//! A config file is a JSON object whose keys are flag names (`n_pairs` or
//! `n-pairs`). Top-level keys apply to every subcommand; an object stored
//! under a subcommand's name (`"train": {...}`) applies to that subcommand
//! only and overrides the top level. Flags given on the command line win
//! over both.

use std::path::Path;

use randprompt_ad_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SUBCOMMANDS: [&str; 8] = [
    "gen-prompts",
    "train",
    "score",
    "eval",
    "sweep",
    "report",
    "make-manifest",
    "synth-fixture",
];

pub fn load(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config(format!("config {} is not a JSON object", path.display())));
    }
    Ok(v)
}

fn normalized(obj: &Map<String, Value>) -> Map<String, Value> {
    obj.iter().map(|(k, v)| (k.replace('-', "_"), v.clone())).collect()
}

/// Fills every flag missing from `cli` from the config file.
pub fn merge<T: Serialize + DeserializeOwned>(cli: T, config: Option<&Value>, section: &str) -> Result<T> {
    let Some(Value::Object(cfg)) = config else {
        return Ok(cli);
    };
    let mut merged = Map::new();
    for (k, v) in normalized(cfg) {
        if !SUBCOMMANDS.contains(&k.replace('_', "-").as_str()) {
            merged.insert(k, v);
        }
    }
    let own = cfg.get(section).or_else(|| cfg.get(&section.replace('-', "_")));
    if let Some(own) = own {
        let Value::Object(own) = own else {
            return Err(Error::Config(format!("config section {section:?} is not an object")));
        };
        merged.extend(normalized(own));
    }
    let Value::Object(flags) = serde_json::to_value(&cli).expect("flags serialize") else {
        unreachable!("flag structs serialize to objects")
    };
    merged.extend(flags.into_iter().filter(|(_, v)| !v.is_null()));
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::Config(format!("config value for {section}: {e}")))
}

/// Seeds given as `0-9`, `0,3,7`, or a JSON list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SeedRepr", into = "String")]
pub struct SeedList(pub Vec<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedRepr {
    One(u64),
    List(Vec<u64>),
    Text(String),
}

impl TryFrom<SeedRepr> for SeedList {
    type Error = Error;

    fn try_from(r: SeedRepr) -> Result<Self> {
        match r {
            SeedRepr::One(s) => Ok(SeedList(vec![s])),
            SeedRepr::List(v) if !v.is_empty() => Ok(SeedList(v)),
            SeedRepr::List(_) => Err(Error::Config("empty seed list".into())),
            SeedRepr::Text(t) => t.parse(),
        }
    }
}

impl From<SeedList> for String {
    fn from(s: SeedList) -> String {
        s.0.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
    }
}

impl std::str::FromStr for SeedList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse seeds {s:?}"));
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                    if a > b {
                        return Err(bad());
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.parse().map_err(|_| bad())?),
            }
        }
        if out.is_empty() {
            return Err(bad());
        }
        Ok(SeedList(out))
    }
}

/// Comma-separated list that also accepts a JSON array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ListRepr", into = "String")]
pub struct CommaList(pub Vec<String>);

#[derive(Deserialize)]
#[serde(untagged)]
enum ListRepr {
    List(Vec<Value>),
    Text(String),
}

impl TryFrom<ListRepr> for CommaList {
    type Error = Error;

    fn try_from(r: ListRepr) -> Result<Self> {
        Ok(match r {
            ListRepr::Text(t) => t.parse()?,
            ListRepr::List(v) => CommaList(
                v.into_iter()
                    .map(|x| match x {
                        Value::String(s) => s,
                        other => other.to_string(),
                    })
                    .collect(),
            ),
        })
    }
}

impl From<CommaList> for String {
    fn from(l: CommaList) -> String {
        l.0.join(",")
    }
}

impl std::str::FromStr for CommaList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(CommaList(
            s.split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(String::from)
                .collect(),
        ))
    }
}

impl CommaList {
    pub fn parse_each<T: std::str::FromStr>(&self, what: &str) -> Result<Vec<T>> {
        self.0
            .iter()
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("cannot parse {what} value {v:?}")))
            })
            .collect()
    }
}
