//! Flat key-value configuration files.
//!
//! Keys are the long flag names with dashes or underscores, e.g.
//! `max_dwell = 75`. A flag given on the command line always wins; the file
//! fills in what is missing, and `TORHSMM_SEED` is consulted for seeds only
//! when neither sets one.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::failure::{Classify, Failure, Kind, Outcome};

pub const SEED_ENV: &str = "TORHSMM_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
    used: RefCell<BTreeSet<String>>,
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Outcome<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).or_fail(Kind::Usage, format!("cannot read config {}", path.display()))?;
        ConfigFile::parse(&text).map_err(|f| Failure {
            kind: f.kind,
            error: f.error.context(format!("in config {}", path.display())),
        })
    }

    pub fn parse(text: &str) -> Outcome<Self> {
        let raw: toml::Table = text.parse().or_fail(Kind::Usage, "malformed config")?;
        let mut table = toml::Table::new();
        for (key, value) in raw {
            if value.is_table() {
                return Err(Failure::usage(format!("config key '{key}': nested tables are not supported")));
            }
            table.insert(normalize(&key), value);
        }
        Ok(ConfigFile {
            table,
            used: RefCell::default(),
        })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Outcome<Option<T>> {
        let key = normalize(key);
        self.used.borrow_mut().insert(key.clone());
        match self.table.get(&key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .or_fail(Kind::Usage, format!("config key '{key}' has the wrong type")),
        }
    }

    /// `flag`, else the config value, else `default`.
    pub fn resolve<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Outcome<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Outcome<Option<T>> {
        let from_file = self.get(key)?;
        Ok(flag.or(from_file))
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Outcome<T> {
        self.pick(flag, key)?
            .ok_or_else(|| Failure::usage(format!("--{} is required (flag or config key)", key.replace('_', "-"))))
    }

    /// Seed precedence: flag, config file, environment, built-in default.
    pub fn seed(&self, flag: Option<u64>, key: &str) -> Outcome<u64> {
        if let Some(s) = self.pick(flag, key)? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Failure::usage(format!("{SEED_ENV}='{v}' is not a non-negative integer"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    /// Rejects keys no resolver asked for, which are almost always typos.
    pub fn finish(&self) -> Outcome<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.table.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Failure::usage(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let c = ConfigFile::parse("states = 3\nmax-dwell = 40\n").unwrap();
        assert_eq!(c.resolve(Some(4usize), "states", 2).unwrap(), 4);
        assert_eq!(c.resolve(None, "max_dwell", 10usize).unwrap(), 40);
        assert_eq!(c.resolve(None, "jobs", 1usize).unwrap(), 1);
        c.finish().unwrap();
    }

    #[test]
    fn unknown_and_mistyped_keys_are_usage_errors() {
        let c = ConfigFile::parse("statse = 3\n").unwrap();
        let _ = c.resolve(None, "states", 2usize).unwrap();
        assert_eq!(c.finish().unwrap_err().kind, Kind::Usage);

        let c = ConfigFile::parse("states = \"three\"\n").unwrap();
        assert_eq!(c.resolve(None, "states", 2usize).unwrap_err().kind, Kind::Usage);
        assert_eq!(ConfigFile::parse("[fit]\nstates = 2\n").unwrap_err().kind, Kind::Usage);
    }

    #[test]
    fn seed_from_file_beats_default() {
        let c = ConfigFile::parse("seed = 99\n").unwrap();
        assert_eq!(c.seed(None, "seed").unwrap(), 99);
        assert_eq!(c.seed(Some(5), "seed").unwrap(), 5);
    }
}
