use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// A flat `key = value` TOML file. Nested tables are rejected so that every
/// entry can be mirrored by a command-line flag of the same name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    values: BTreeMap<String, toml::Value>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            if v.is_table() || v.as_array().is_some_and(|a| a.iter().any(|x| x.is_table())) {
                return Err(Error::InvalidConfig(format!("config key {k:?}: nested tables are not supported")));
            }
            values.insert(k.replace('-', "_"), v);
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.clone()
                    .try_into()
                    .map_err(|e| Error::InvalidConfig(format!("config key {key:?}: {e}")))
            })
            .transpose()
    }

    /// Flag value if given, else the file value, else `default`.
    pub fn resolve<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Deserialize the whole file into a struct with defaults for missing fields.
    pub fn to_struct<T: DeserializeOwned>(&self) -> Result<T> {
        let table: toml::Table = self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn insert(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.values.insert(key.replace('-', "_"), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[test]
    fn flag_wins_over_file() {
        let cfg = FlatConfig::parse("q = 25.0\nseed = 7\nkey-file = \"a.key\"\n").unwrap();
        assert_eq!(cfg.resolve("q", Some(40.0), 1.0).unwrap(), 40.0);
        assert_eq!(cfg.resolve::<f64>("q", None, 1.0).unwrap(), 25.0);
        assert_eq!(cfg.resolve::<u64>("missing", None, 3).unwrap(), 3);
        assert_eq!(cfg.get::<String>("key_file").unwrap().as_deref(), Some("a.key"));
        assert!(cfg.get::<u64>("key_file").is_err());
    }

    #[test]
    fn rejects_nested() {
        assert!(FlatConfig::parse("[section]\nx = 1\n").is_err());
        assert!(FlatConfig::parse("x = [{ a = 1 }]\n").is_err());
        assert!(FlatConfig::parse("x = [1, 2]\n").is_ok());
    }

    #[test]
    fn into_struct() {
        #[derive(Deserialize, Default)]
        #[serde(default)]
        struct S {
            a: u32,
            b: Vec<f64>,
        }
        let mut cfg = FlatConfig::parse("b = [0.5]").unwrap();
        cfg.insert("a", 4);
        let s: S = cfg.to_struct().unwrap();
        assert_eq!((s.a, s.b), (4, vec![0.5]));
    }
}
