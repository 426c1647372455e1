//! Flat key-value config files. Every flag has a key of the same name
//! with `-` replaced by `_`; flags given on the command line win.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "instance",
    "out",
    "n",
    "rho_p",
    "rho_op",
    "truncation",
    "seed",
    "g_bar",
    "order",
    "tolerance",
    "clamp_to_gmax",
    "matching",
    "trace",
    "grid",
    "grid_range",
    "grid_steps",
    "k",
    "orders",
    "pseudo_noise",
    "pseudo_seed",
    "no_variance",
    "instances",
    "max_n",
    "max_locations",
    "max_capacity",
    "self_test",
    "threads",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut values = BTreeMap::new();
        for (key, value) in table {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("unknown config key {key:?}");
            }
            let text = match value {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => bail!("config key {key:?} must be a scalar, got {other}"),
            };
            values.insert(key, text);
        }
        Ok(Self { values })
    }

    /// The flag value if given, else the parsed config value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key {key:?}: {e}")))
            .transpose()
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}
