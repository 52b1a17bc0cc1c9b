use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::experiments::Params;

/// Per-experiment parameter table; unset fields keep the experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub eps: Option<Vec<f64>>,
    pub ny: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// ```toml
/// [run]
/// out = "results"
/// seed = 7
///
/// [experiments.separation-law]
/// eps = [0.1, 0.05, 0.025, 0.0125]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    pub experiments: BTreeMap<String, Overrides>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let c: ConfigFile = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        for name in c.experiments.keys() {
            super::registry::find(name)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        ConfigFile::parse(&text)
    }

    /// Spec for one experiment: config table, then command-line overrides on top.
    pub fn spec(&self, name: &str, out_root: &Path, cli: &Overrides) -> Result<ExperimentSpec> {
        super::registry::find(name)?;
        let table = self.experiments.get(name).cloned().unwrap_or_default();
        let params = Params {
            eps: cli.eps.clone().or(table.eps),
            ny: cli.ny.or(table.ny),
            seed: cli.seed.or(table.seed).or(self.run.seed).unwrap_or(0),
        };
        let spec = ExperimentSpec { name: name.to_string(), params, out: out_root.join(name) };
        spec.validate()?;
        Ok(spec)
    }
}

/// A fully resolved run request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub params: Params,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        super::registry::find(&self.name)?;
        if let Some(e) = &self.params.eps {
            if e.is_empty() {
                return Err(LabError::Config("empty epsilon list".into()));
            }
            if e.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(LabError::Config("epsilon values must lie in (0, 1)".into()));
            }
            if e.windows(2).any(|w| w[1] >= w[0]) {
                return Err(LabError::Config("epsilon list must be sorted descending".into()));
            }
        }
        if self.params.ny.is_some_and(|n| n < 4) {
            return Err(LabError::Config("ny must be at least 4".into()));
        }
        Ok(())
    }
}

/// Output root: explicit flag, then AC_LAB_OUT, then the config file, then the default.
pub fn out_root(flag: Option<&Path>, cfg: &ConfigFile) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(v) = std::env::var(super::OUT_ENV) {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    cfg.run.out.clone().unwrap_or_else(|| PathBuf::from(super::DEFAULT_OUT))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tables_and_merges() {
        let c = ConfigFile::parse(
            "[run]\nseed = 7\n[experiments.separation-law]\neps = [0.1, 0.05, 0.025, 0.0125]\n[experiments.index-comparison]\nny = 24\n",
        )
        .unwrap();
        let s = c.spec("separation-law", Path::new("/tmp/x"), &Overrides::default()).unwrap();
        assert_eq!(s.params.seed, 7);
        assert_eq!(s.params.eps.as_deref(), Some(&[0.1, 0.05, 0.025, 0.0125][..]));
        assert_eq!(s.out, Path::new("/tmp/x/separation-law"));
        let cli = Overrides { ny: Some(40), seed: Some(3), ..Default::default() };
        let s = c.spec("index-comparison", Path::new("o"), &cli).unwrap();
        assert_eq!((s.params.ny, s.params.seed), (Some(40), 3));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ConfigFile::parse("[experiments.nope]\n"), Err(LabError::Config(_))));
        assert!(matches!(ConfigFile::parse("[run]\nbogus = 1\n"), Err(LabError::Config(_))));
        let c = ConfigFile::parse("[experiments.separation-law]\neps = [0.05, 0.1]\n").unwrap();
        assert!(matches!(c.spec("separation-law", Path::new("o"), &Overrides::default()), Err(LabError::Config(_))));
        assert!(matches!(c.spec("unknown", Path::new("o"), &Overrides::default()), Err(LabError::Config(_))));
    }
}
