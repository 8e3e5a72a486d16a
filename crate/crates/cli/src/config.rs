//! TOML run files. Top-level keys hold paths; `[train]` and `[eval]` hold the
//! library configs. Flags are merged over file values before deserializing.

use std::fs;
use std::path::{Path, PathBuf};

use clm::{EvalConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    #[serde(default)]
    pub train: Table,
    #[serde(default)]
    pub eval: Table,
}

impl RunFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunFile::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Collects flag values that override a config table.
#[derive(Default)]
pub struct Overrides(Vec<(&'static str, Value)>);

impl Overrides {
    pub fn set<T: Into<Value>>(&mut self, key: &'static str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.push((key, v.into()));
        }
        self
    }

    pub fn set_u64(&mut self, key: &'static str, value: Option<u64>) -> &mut Self {
        self.set(key, value.map(|v| v as i64))
    }

    pub fn set_usize(&mut self, key: &'static str, value: Option<usize>) -> &mut Self {
        self.set(key, value.map(|v| v as i64))
    }

    fn apply(&self, mut table: Table) -> Table {
        for (k, v) in &self.0 {
            table.insert((*k).to_owned(), v.clone());
        }
        table
    }
}

fn merge<T: DeserializeOwned>(
    section: &str,
    table: &Table,
    flags: &Overrides,
) -> Result<T, CliError> {
    let merged = flags.apply(table.clone());
    if !merged.contains_key("seed") {
        return Err(CliError::config(format!(
            "no seed given; set `seed` in [{section}] or pass --seed"
        )));
    }
    Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::config(format!("[{section}]: {e}")))
}

pub fn train_config(file: &RunFile, flags: &Overrides) -> Result<TrainConfig, CliError> {
    let config: TrainConfig = merge("train", &file.train, flags)?;
    config
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(config)
}

pub fn eval_config(file: &RunFile, flags: &Overrides) -> Result<EvalConfig, CliError> {
    merge("eval", &file.eval, flags)
}

/// Flag value if present, else the file value, else a config error naming the key.
pub fn pick(flag: Option<PathBuf>, file: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| file.clone()).ok_or_else(|| {
        CliError::config(format!(
            "missing {key}; pass --{} or set it in the config file",
            key.replace('_', "-")
        ))
    })
}
