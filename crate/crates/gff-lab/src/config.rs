//! Flat `key = value` configs with `[section]` headers.
//!
//! ```text
//! experiment = repulsion
//! seed = 7
//!
//! [model]
//! spin = 1
//! avoid = interval:-1,1
//!
//! [run]
//! sizes = 16,32,64
//! ```
//!
//! Keys are addressed as `section.key` (top-level keys have no prefix). The
//! JSON mirror nests sections as objects of strings.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{value_err, LabError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| LabError::Syntax {
                        line: k + 1,
                        msg: "unterminated section header".into(),
                    })?
                    .trim();
                if name.is_empty() || name.contains(['.', ' ']) {
                    return Err(LabError::Syntax {
                        line: k + 1,
                        msg: format!("bad section name `{name}`"),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| LabError::Syntax {
                line: k + 1,
                msg: "expected key = value".into(),
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(['.', ' ']) {
                return Err(LabError::Syntax {
                    line: k + 1,
                    msg: format!("bad key `{key}`"),
                });
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if entries
                .insert(full.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(LabError::Syntax {
                    line: k + 1,
                    msg: format!("duplicate key `{full}`"),
                });
            }
        }
        Ok(Config { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut sections: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
        for (k, v) in &self.entries {
            match k.split_once('.') {
                Some((s, key)) => sections.entry(s).or_default().push((key, v)),
                None => out.push_str(&format!("{k} = {v}\n")),
            }
        }
        for (s, kv) in sections {
            out.push_str(&format!("\n[{s}]\n"));
            for (k, v) in kv {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        for (k, v) in &self.entries {
            match k.split_once('.') {
                Some((s, key)) => {
                    let obj = root.entry(s).or_insert_with(|| Value::Object(Map::new()));
                    obj.as_object_mut()
                        .unwrap()
                        .insert(key.to_string(), Value::String(v.clone()));
                }
                None => {
                    root.insert(k.clone(), Value::String(v.clone()));
                }
            }
        }
        Value::Object(root)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |msg: &str| LabError::Syntax {
            line: 0,
            msg: msg.to_string(),
        };
        let root = v
            .as_object()
            .ok_or_else(|| bad("config JSON must be an object"))?;
        let mut entries = BTreeMap::new();
        for (k, v) in root {
            match v {
                Value::String(s) => {
                    entries.insert(k.clone(), s.clone());
                }
                Value::Object(inner) => {
                    for (key, val) in inner {
                        let s = val
                            .as_str()
                            .ok_or_else(|| bad("config values must be strings"))?;
                        entries.insert(format!("{k}.{key}"), s.to_string());
                    }
                }
                _ => return Err(bad("config values must be strings or sections")),
            }
        }
        Ok(Config { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn experiment(&self) -> Result<&str> {
        self.get("experiment")
            .ok_or_else(|| LabError::MissingKeys(vec!["experiment".into()]))
    }

    /// Check the keys against a schema and fill in defaults. Every key must be
    /// listed; keys without a default are required.
    pub fn resolve(&self, schema: &[(&str, Option<&str>)]) -> Result<Resolved> {
        let unknown: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !schema.iter().any(|(s, _)| s == k))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(LabError::UnknownKeys(unknown));
        }
        let mut values = BTreeMap::new();
        let mut missing = Vec::new();
        for &(key, default) in schema {
            match (self.entries.get(key), default) {
                (Some(v), _) => {
                    values.insert(key.to_string(), v.clone());
                }
                (None, Some(d)) => {
                    values.insert(key.to_string(), d.to_string());
                }
                (None, None) => missing.push(key.to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(LabError::MissingKeys(missing));
        }
        Ok(Resolved { values })
    }
}

/// A validated parameter record with every schema key present.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub values: BTreeMap<String, String>,
}

impl Resolved {
    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let s = self.str(key);
        s.parse::<T>()
            .map_err(|_| value_err(key, format!("cannot parse `{s}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        crate::parse::list(key, self.str(key))
    }

    pub fn to_json(&self) -> Value {
        Config {
            entries: self.values.clone(),
        }
        .to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "experiment = capacity\nseed = 3 # comment\n\n[model]\nshape = disc:0.25\n[run]\nsizes = 64,128\n";

    #[test]
    fn parses_sections_and_round_trips() {
        let c = Config::parse(TEXT).unwrap();
        assert_eq!(c.get("model.shape"), Some("disc:0.25"));
        assert_eq!(c.get("seed"), Some("3"));
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(Config::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match Config::parse("a = 1\n[oops\n") {
            Err(LabError::Syntax { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        assert!(Config::parse("just words\n").is_err());
    }

    #[test]
    fn unknown_keys_are_listed() {
        let c = Config::parse("experiment = x\n[run]\nsizez = 1\nsweep = 2\n").unwrap();
        match c.resolve(&[("experiment", None), ("run.sizes", Some("1"))]) {
            Err(LabError::UnknownKeys(keys)) => assert_eq!(keys, vec!["run.sizez", "run.sweep"]),
            other => panic!("{other:?}"),
        }
        let c = Config::parse("[run]\nsizes = 4\n").unwrap();
        assert!(matches!(
            c.resolve(&[("experiment", None), ("run.sizes", None)]),
            Err(LabError::MissingKeys(_))
        ));
    }
}
