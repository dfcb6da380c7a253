//! Run configuration: one TOML file plus `key=value` overrides.
//!
//! Keys are addressed by dotted paths (`train.epochs`, `synth.shift`,
//! `train.weights.gamma`). Every key has a default, so an empty file is a
//! valid configuration. Top-level keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `seed` | data seed; also the `train`/`synth` seed (copied on resolve) |
//! | `data_dir` | where the catalogs and logs live, relative to `--out` |
//! | `synth.*` | generator settings, see [`SynthConfig`] |
//! | `features.*` | vocabulary sizes, playtime buckets and the validation split |
//! | `train.*` | optimizer, loss weights, sampling and selection, see [`TrainConfig`] |
//! | `eval.*` | methods, seeds and cutoffs of `evaluate` |
//! | `recommend.*` | list length and users of `recommend` |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{Method, DEFAULT_KS};
use crate::features::PlaytimeBuckets;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Capacity of the user-history vocabulary (source and target words).
    pub user_vocab: usize,
    /// Capacity of the item text vocabulary.
    pub item_vocab: usize,
    pub playtime_hours: usize,
    pub playtime_minutes: usize,
    pub playtime_seconds: usize,
    /// Share of labeled source users held out for checkpoint selection.
    pub validation_fraction: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let b = PlaytimeBuckets::default();
        FeatureConfig {
            user_vocab: 2000,
            item_vocab: 20_000,
            playtime_hours: b.hours,
            playtime_minutes: b.minutes,
            playtime_seconds: b.seconds,
            validation_fraction: 0.2,
        }
    }
}

impl FeatureConfig {
    pub fn buckets(&self) -> PlaytimeBuckets {
        PlaytimeBuckets {
            hours: self.playtime_hours,
            minutes: self.playtime_minutes,
            seconds: self.playtime_seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    /// One training run per seed and trained method.
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            methods: Method::ALL.to_vec(),
            seeds: vec![0],
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendConfig {
    pub k: usize,
    /// Target-domain log whose users receive lists; defaults to the test log.
    pub log: Option<String>,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig { k: 10, log: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data_dir: String,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub recommend: RecommendConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            data_dir: "data".into(),
            synth: SynthConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            recommend: RecommendConfig::default(),
        }
    }
}

impl Config {
    /// Parses TOML text, applies overrides in order and resolves seeds.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("config: {e}")))?;
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// Copies the top-level seed into the generator and trainer.
    pub fn resolve(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        let f = &self.features;
        if f.user_vocab == 0 || f.item_vocab == 0 {
            return Err(Error::Config("vocabulary capacities must be at least 1".into()));
        }
        if f.playtime_hours == 0 || f.playtime_minutes == 0 || f.playtime_seconds == 0 {
            return Err(Error::Config("playtime buckets must be at least 1".into()));
        }
        if !(f.validation_fraction > 0.0 && f.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        if self.eval.seeds.is_empty() || self.eval.methods.is_empty() {
            return Err(Error::Config("eval needs at least one method and one seed".into()));
        }
        if self.eval.ks.iter().any(|&k| k == 0) {
            return Err(Error::Config("eval cutoffs must be at least 1".into()));
        }
        if self.recommend.k == 0 {
            return Err(Error::Config("recommend.k must be at least 1".into()));
        }
        Ok(())
    }

    /// The resolved configuration as TOML, echoed next to every output.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config: {e}")))
    }
}

/// Sets a dotted `path=value` in a TOML table. The value is read as a TOML
/// literal when it parses as one, otherwise as a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Selection;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml_str("", &[]).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = Config::from_toml_str(
            "seed = 3\n[train]\nepochs = 4\n",
            &[
                "train.epochs=2".into(),
                "train.weights.gamma=0.5".into(),
                "train.selection=cross_entropy".into(),
                "eval.methods=[\"DSN\", \"POP\"]".into(),
                "synth.shift=0.25".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.weights.gamma, 0.5);
        assert_eq!(c.train.selection, Selection::CrossEntropy);
        assert_eq!(c.eval.methods, vec![Method::Dsn, Method::Pop]);
        assert_eq!(c.synth.shift, 0.25);
        assert_eq!((c.synth.seed, c.train.seed), (3, 3));
    }

    #[test]
    fn echo_round_trips() {
        let c = Config::from_toml_str("", &["train.lr=0.01".into(), "seed=9".into()]).unwrap();
        let again = Config::from_toml_str(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_keys_and_bad_values_error() {
        assert!(Config::from_toml_str("epochs = 3\n", &[]).is_err());
        assert!(Config::from_toml_str("", &["train.nope=1".into()]).is_err());
        assert!(Config::from_toml_str("", &["train.epochs".into()]).is_err());
        assert!(Config::from_toml_str("", &["train.epochs=0".into()]).is_err());
        assert!(Config::from_toml_str("", &["seed.x=1".into()]).is_err());
    }
}
