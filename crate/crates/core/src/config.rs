//! Flat key-value run configuration shared by every CLI subcommand.
//!
//! A config file is a TOML document with top-level keys only. Command-line
//! overrides are merged on top of it key by key. Keys that accept a list
//! (`model`, `rank`, `regulariser`, `p`, `hidden`, `lambda_emb`,
//! `lambda_time`, `learning_rate`, `batch_size`, `seed`) become grid axes
//! when given more than one value; `train` rejects lists of length > 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BuildOptions, DatasetFormat, NoTimeHandling};
use crate::error::{Error, Result};
use crate::eval::TiePolicy;
use crate::grid::GridSpec;
use crate::model::{ModelKind, ModelSpec};
use crate::regularisers::{NormCurve, RegFamily, TemporalRegSpec};
use crate::train::{AdamConfig, TrainConfig};

pub const DEFAULT_RANK: usize = 100;

/// One value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // ingestion
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub format: Option<String>,
    pub no_time: Option<String>,
    /// Encoded dataset container.
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,

    // model and training
    pub model: Option<OneOrMany<String>>,
    pub rank: Option<OneOrMany<usize>>,
    pub relation_rank: Option<usize>,
    pub time_rank: Option<usize>,
    pub conj_tail: Option<bool>,
    pub regulariser: Option<OneOrMany<String>>,
    pub p: Option<OneOrMany<u32>>,
    pub hidden: Option<OneOrMany<usize>>,
    pub lp_per_pair: Option<bool>,
    pub lambda_emb: Option<OneOrMany<f64>>,
    pub lambda_time: Option<OneOrMany<f64>>,
    pub learning_rate: Option<OneOrMany<f64>>,
    pub batch_size: Option<OneOrMany<usize>>,
    pub epochs: Option<usize>,
    pub seed: Option<OneOrMany<u64>>,
    pub valid_every: Option<usize>,
    pub init_scale: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,

    // evaluation
    pub checkpoint: Option<PathBuf>,
    pub split: Option<String>,
    pub ties: Option<String>,
    pub report: Option<PathBuf>,

    // norm curves
    pub norms: Option<Vec<String>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub samples: Option<usize>,
    pub output: Option<PathBuf>,
}

const FLOAT_KEYS: &[&str] = &[
    "lambda_emb",
    "lambda_time",
    "learning_rate",
    "init_scale",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "lo",
    "hi",
];

fn coerce_floats(table: &mut toml::Table) {
    fn fix(v: &mut toml::Value) {
        match v {
            toml::Value::Integer(i) => *v = toml::Value::Float(*i as f64),
            toml::Value::Array(a) => a.iter_mut().for_each(fix),
            _ => {}
        }
    }
    for k in FLOAT_KEYS {
        if let Some(v) = table.get_mut(*k) {
            fix(v);
        }
    }
}

/// Parses a single override value: TOML syntax when it parses, a
/// comma-separated list when it contains commas, a bare string otherwise.
pub fn parse_override_value(raw: &str) -> toml::Value {
    let scalar = |s: &str| -> toml::Value {
        let s = s.trim();
        match toml::from_str::<toml::Table>(&format!("v = {s}")) {
            Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(s.to_string())),
            Err(_) => toml::Value::String(s.to_string()),
        }
    };
    let t = raw.trim();
    if t.contains(',') && !t.starts_with('[') {
        toml::Value::Array(t.split(',').map(scalar).collect())
    } else {
        scalar(t)
    }
}

impl RunConfig {
    /// Reads a config file into a raw table.
    pub fn read_table(path: &Path) -> Result<toml::Table> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e).with_path(path))?;
        text.parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Builds the effective configuration from an optional file table and
    /// `key = value` overrides applied in order.
    pub fn from_parts(file: Option<toml::Table>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = file.unwrap_or_default();
        for (k, v) in overrides {
            table.insert(k.replace('-', "_"), v.clone());
        }
        if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!("config must be flat; key {k:?} is a table")));
        }
        coerce_floats(&mut table);
        toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(e.to_string()))?;
        Self::from_parts(Some(table), &[])
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self) -> Result<String> {
        crate::checkpoint::to_toml(self)
    }

    pub fn require<'a, T>(&'a self, value: &'a Option<T>, key: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    pub fn dataset_format(&self) -> Result<DatasetFormat> {
        self.format.as_deref().unwrap_or("icews").parse()
    }

    pub fn build_options(&self) -> Result<BuildOptions> {
        let no_time = match self.no_time.as_deref().unwrap_or("reserve") {
            "reserve" => NoTimeHandling::Reserve,
            "drop" => NoTimeHandling::Drop,
            "reject" => NoTimeHandling::Reject,
            other => return Err(Error::Config(format!("unknown no_time handling {other:?}"))),
        };
        Ok(BuildOptions { no_time })
    }

    pub fn tie_policy(&self) -> Result<TiePolicy> {
        self.ties.as_deref().map_or(Ok(TiePolicy::default()), str::parse)
    }

    pub fn norm_curves(&self) -> Result<Vec<NormCurve>> {
        match &self.norms {
            None => Ok(NormCurve::defaults()),
            Some(list) => list.iter().map(|s| s.parse()).collect(),
        }
    }

    fn single<T: Clone>(v: &Option<OneOrMany<T>>, key: &str) -> Result<Option<T>> {
        match v {
            None => Ok(None),
            Some(o) => match o.values().as_slice() {
                [x] => Ok(Some(x.clone())),
                _ => Err(Error::Config(format!(
                    "key {key:?} must be a single value here (lists are for grid search)"
                ))),
            },
        }
    }

    fn first<T: Clone>(v: &Option<OneOrMany<T>>) -> Option<T> {
        v.as_ref().and_then(|o| o.values().into_iter().next())
    }

    fn many<T: Clone>(v: &Option<OneOrMany<T>>) -> Vec<T> {
        match v {
            Some(OneOrMany::Many(xs)) if xs.len() > 1 => xs.clone(),
            _ => Vec::new(),
        }
    }

    fn model_spec(&self, kind: ModelKind, rank: usize) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(kind, rank);
        if kind == ModelKind::ChronoR {
            let dj = self.relation_rank.unwrap_or(spec.relation_rank);
            let dt = self.time_rank.unwrap_or(rank - dj.min(rank));
            spec = ModelSpec::chronor(rank, dj, dt, self.conj_tail.unwrap_or(true));
        } else if self.relation_rank.is_some() || self.time_rank.is_some() {
            return Err(Error::Config("relation_rank/time_rank apply to chronor only".into()));
        } else if self.conj_tail == Some(false) {
            return Err(Error::Config("conj_tail = false applies to chronor only".into()));
        }
        Ok(spec)
    }

    fn temporal(&self, name: &str, p: Option<u32>, hidden: Option<usize>, rank: usize) -> Result<TemporalRegSpec> {
        let mut spec = match name.trim() {
            "N" | "n" => TemporalRegSpec::np(p.ok_or_else(|| missing_p(name))?),
            "L" | "l" => TemporalRegSpec::lp(p.ok_or_else(|| missing_p(name))?),
            other => other.parse::<TemporalRegSpec>()?,
        };
        match spec.family {
            RegFamily::Np | RegFamily::Lp | RegFamily::Linear3 => {
                if let Some(p) = p {
                    spec.p = p;
                }
            }
            RegFamily::Recurrent(_) => spec.hidden = hidden.unwrap_or((rank / 2).max(1)),
            RegFamily::None => {}
        }
        if spec.family == RegFamily::Lp && self.lp_per_pair == Some(true) {
            spec.lp_per_pair = true;
        }
        Ok(spec)
    }

    fn base_config(&self, pick: impl Fn(&Self) -> Result<Picked>) -> Result<TrainConfig> {
        let v = pick(self)?;
        let kind = v.model.as_deref().unwrap_or("tntcomplex").parse::<ModelKind>()?;
        let rank = v.rank.unwrap_or(DEFAULT_RANK);
        let model = self.model_spec(kind, rank)?;
        let temporal = self.temporal(v.regulariser.as_deref().unwrap_or("none"), v.p, v.hidden, rank)?;
        let mut c = TrainConfig::new(model);
        c.temporal = temporal;
        c.lambda_emb = v.lambda_emb.unwrap_or(c.lambda_emb);
        c.lambda_time = v.lambda_time.unwrap_or(c.lambda_time);
        c.learning_rate = v.learning_rate.unwrap_or(c.learning_rate);
        c.batch_size = v.batch_size.unwrap_or(c.batch_size);
        c.seed = v.seed.unwrap_or(c.seed);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.valid_every = self.valid_every.unwrap_or(c.valid_every);
        c.init_scale = self.init_scale.unwrap_or(c.init_scale);
        let d = AdamConfig::default();
        c.adam = AdamConfig {
            beta1: self.adam_beta1.unwrap_or(d.beta1),
            beta2: self.adam_beta2.unwrap_or(d.beta2),
            eps: self.adam_eps.unwrap_or(d.eps),
        };
        Ok(c)
    }

    /// The single training configuration; validated.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let c = self.base_config(|s| {
            Ok(Picked {
                model: Self::single(&s.model, "model")?,
                rank: Self::single(&s.rank, "rank")?,
                regulariser: Self::single(&s.regulariser, "regulariser")?,
                p: Self::single(&s.p, "p")?,
                hidden: Self::single(&s.hidden, "hidden")?,
                lambda_emb: Self::single(&s.lambda_emb, "lambda_emb")?,
                lambda_time: Self::single(&s.lambda_time, "lambda_time")?,
                learning_rate: Self::single(&s.learning_rate, "learning_rate")?,
                batch_size: Self::single(&s.batch_size, "batch_size")?,
                seed: Self::single(&s.seed, "seed")?,
            })
        })?;
        c.validate()?;
        Ok(c)
    }

    /// Base configuration (first value of every list) and grid axes.
    pub fn grid(&self) -> Result<(TrainConfig, GridSpec)> {
        let base = self.base_config(|s| {
            Ok(Picked {
                model: Self::first(&s.model),
                rank: Self::first(&s.rank),
                regulariser: Self::first(&s.regulariser),
                p: Self::first(&s.p),
                hidden: Self::first(&s.hidden),
                lambda_emb: Self::first(&s.lambda_emb),
                lambda_time: Self::first(&s.lambda_time),
                learning_rate: Self::first(&s.learning_rate),
                batch_size: Self::first(&s.batch_size),
                seed: Self::first(&s.seed),
            })
        })?;
        let rank = base.model.rank;
        let p = Self::first(&self.p);
        let hidden = Self::first(&self.hidden);
        let temporal = Self::many(&self.regulariser)
            .iter()
            .map(|name| self.temporal(name, p, hidden, rank))
            .collect::<Result<_>>()?;
        let model = Self::many(&self.model)
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_>>()?;
        let grid = GridSpec {
            model,
            rank: Self::many(&self.rank),
            temporal,
            p: Self::many(&self.p),
            hidden: Self::many(&self.hidden),
            lambda_emb: Self::many(&self.lambda_emb),
            lambda_time: Self::many(&self.lambda_time),
            learning_rate: Self::many(&self.learning_rate),
            batch_size: Self::many(&self.batch_size),
            seed: Self::many(&self.seed),
        };
        Ok((base, grid))
    }
}

fn missing_p(name: &str) -> Error {
    Error::Config(format!("regulariser {name:?} needs an exponent (set p)"))
}

struct Picked {
    model: Option<String>,
    rank: Option<usize>,
    regulariser: Option<String>,
    p: Option<u32>,
    hidden: Option<usize>,
    lambda_emb: Option<f64>,
    lambda_time: Option<f64>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, toml::Value) {
        (k.to_string(), parse_override_value(v))
    }

    #[test]
    fn best_icews14_flags_are_accepted() {
        let c = RunConfig::from_parts(
            None,
            &[
                kv("model", "tntcomplex"),
                kv("regulariser", "N"),
                kv("p", "4"),
                kv("lambda_emb", "0.001"),
                kv("lambda_time", "0.01"),
                kv("rank", "2000"),
            ],
        )
        .unwrap();
        let t = c.train_config().unwrap();
        assert_eq!(t.model, ModelSpec::new(ModelKind::TNTComplEx, 2000));
        assert_eq!(t.temporal, TemporalRegSpec::np(4));
        assert_eq!((t.lambda_emb, t.lambda_time), (0.001, 0.01));
    }

    #[test]
    fn p_zero_is_rejected() {
        let c = RunConfig::from_parts(None, &[kv("regulariser", "N"), kv("p", "0")]).unwrap();
        assert!(matches!(c.train_config(), Err(Error::Config(_))));
    }

    #[test]
    fn flags_override_file_and_integers_become_floats() {
        let file = "rank = 8\nlambda_time = 1\nregulariser = \"N3\"\n";
        let table: toml::Table = file.parse().unwrap();
        let c = RunConfig::from_parts(Some(table), &[kv("rank", "16")]).unwrap();
        let t = c.train_config().unwrap();
        assert_eq!(t.model.rank, 16);
        assert_eq!(t.lambda_time, 1.0);
    }

    #[test]
    fn unknown_keys_and_tables_fail() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[section]\nrank = 1").is_err());
    }

    #[test]
    fn lists_become_grid_axes() {
        let c = RunConfig::from_toml_str(
            "lambda_time = [0.0001, 0.001, 0.01, 0.1, 1, 10]\nregulariser = [\"N3\", \"N4\", \"L4\", \"Linear3\", \"RNN\", \"LSTM\"]\nrank = 8",
        )
        .unwrap();
        assert!(c.train_config().is_err());
        let (base, grid) = c.grid().unwrap();
        let configs = grid.configs(&base);
        assert_eq!(configs.len(), 36);
        assert_eq!(configs[30].temporal.hidden, 4);
    }

    #[test]
    fn override_values() {
        assert_eq!(parse_override_value("3"), toml::Value::Integer(3));
        assert_eq!(parse_override_value("tntcomplex"), toml::Value::String("tntcomplex".into()));
        assert_eq!(
            parse_override_value("0.1,1"),
            toml::Value::Array(vec![toml::Value::Float(0.1), toml::Value::Integer(1)])
        );
    }

    #[test]
    fn chronor_split_and_real_mode() {
        let c = RunConfig::from_toml_str("model = \"chronor\"\nrank = 10\nrelation_rank = 6\nconj_tail = false").unwrap();
        let t = c.train_config().unwrap();
        assert_eq!((t.model.relation_rank, t.model.time_rank, t.model.conj_tail), (6, 4, false));
    }
}
