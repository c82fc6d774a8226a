use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::error::CliError;

/// Settings shared by the pipeline steps. Values come from `--config` and are
/// overridden by flags.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// `key = value` configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory holding one CSV per relation (defaults to the manifest's directory)
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long)]
    pub criteria: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mle or dirichlet
    #[arg(long)]
    pub estimator: Option<String>,
    /// Aggregate for rules that do not name one (avg, sum, min, max, count)
    #[arg(long)]
    pub aggregate: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// `key = value` lines; `#` starts a comment. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub values: BTreeMap<String, String>,
    pub base: PathBuf,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{} line {}: expected key = value", path.display(), i + 1)))?;
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(ConfigFile {
            values,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(|v| self.base.join(v))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::config(format!("{key} = {v} is not valid"))))
            .transpose()
    }
}

impl Settings {
    /// Fills unset flags from the config file.
    pub fn resolve(&self) -> Result<(Settings, ConfigFile), CliError> {
        let file = match &self.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::default(),
        };
        let mut s = self.clone();
        let path = |flag: &mut Option<PathBuf>, key: &str| {
            if flag.is_none() {
                *flag = file.path(key);
            }
        };
        path(&mut s.manifest, "manifest");
        path(&mut s.data_dir, "data_dir");
        path(&mut s.rules, "rules");
        path(&mut s.priors, "priors");
        path(&mut s.criteria, "criteria");
        path(&mut s.out, "out");
        if s.estimator.is_none() {
            s.estimator = file.values.get("estimator").cloned();
        }
        if s.aggregate.is_none() {
            s.aggregate = file.values.get("aggregate").cloned();
        }
        if s.seed.is_none() {
            s.seed = file.parse("seed")?;
        }
        if s.data_dir.is_none() {
            s.data_dir = s.manifest.as_ref().and_then(|m| m.parent().map(Path::to_path_buf));
        }
        Ok((s, file))
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::config(format!("--{name} is required")))
    }
}
