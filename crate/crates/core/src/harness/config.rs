//! Run configuration: defaults, a flat `key=value` file and command-line
//! overrides, in increasing precedence. `MAJLAB_SEED` supplies the default seed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Link, RecursionMode};
use crate::oracle::OracleDirection;

pub const SEED_ENV: &str = "MAJLAB_SEED";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Transformer,
    Linear,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "transformer" => Ok(ModelKind::Transformer),
            "linear" => Ok(ModelKind::Linear),
            _ => Err("expected transformer or linear".into()),
        }
    }
}

/// `ε`: a number, `inf`, or `auto` (chosen from `V`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonSetting {
    Auto,
    Value(f64),
}

impl FromStr for EpsilonSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(EpsilonSetting::Auto),
            "inf" | "+inf" | "infinity" => Ok(EpsilonSetting::Value(f64::INFINITY)),
            _ => match s.parse::<f64>() {
                Ok(v) if v >= 0.0 => Ok(EpsilonSetting::Value(v)),
                _ => Err("expected auto, inf or a nonnegative number".into()),
            },
        }
    }
}

impl fmt::Display for EpsilonSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSetting::Auto => f.write_str("auto"),
            EpsilonSetting::Value(v) if v.is_infinite() => f.write_str("inf"),
            EpsilonSetting::Value(v) => write!(f, "{v}"),
        }
    }
}

/// `exhaustive` or `sampled:<count>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilySetting {
    Exhaustive,
    Sampled(usize),
}

impl FromStr for FamilySetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "exhaustive" {
            return Ok(FamilySetting::Exhaustive);
        }
        s.strip_prefix("sampled:")
            .and_then(|c| c.parse().ok())
            .filter(|&c: &usize| c > 0)
            .map(FamilySetting::Sampled)
            .ok_or_else(|| "expected exhaustive or sampled:<count>".into())
    }
}

impl fmt::Display for FamilySetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySetting::Exhaustive => f.write_str("exhaustive"),
            FamilySetting::Sampled(c) => write!(f, "sampled:{c}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err("expected csv or json".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub t: usize,
    pub lr: f64,
    pub epsilon: EpsilonSetting,
    pub seed: u64,
    pub model: ModelKind,
    pub recursion: RecursionMode,
    pub link: Link,
    pub family: FamilySetting,
    pub direction: OracleDirection,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub format: OutputFormat,
    /// Random parameter draws feeding the empirical gradient-norm supremum.
    pub sup_draws: usize,
    /// `c₀, c₁` of the `c₀·e^{−c₁d}` slack term; both zero by default.
    pub slack: (f64, f64),
    /// `c₁..c₄` for the theorem-regime annotation.
    pub theorem_constants: [f64; 4],
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: 10,
            k: 5,
            n: 256,
            t: 10,
            lr: 1.0,
            epsilon: EpsilonSetting::Auto,
            seed: 0,
            model: ModelKind::Transformer,
            recursion: RecursionMode::default(),
            link: Link::default(),
            family: FamilySetting::Exhaustive,
            direction: OracleDirection::default(),
            out: None,
            workers: None,
            format: OutputFormat::Json,
            sup_draws: 64,
            slack: (0.0, 0.0),
            theorem_constants: [0.25; 4],
            record_wall_time: false,
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        msg: e.to_string(),
    })
}

impl RunConfig {
    /// Defaults with the seed taken from `MAJLAB_SEED` when set.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = parse(SEED_ENV, &v)?;
        }
        Ok(cfg)
    }

    /// Applies one setting by name (flag names with `-` or `_`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "d" => self.d = parse(&key, value)?,
            "k" => self.k = parse(&key, value)?,
            "n" => self.n = parse(&key, value)?,
            "t" | "T" => self.t = parse(&key, value)?,
            "lr" => self.lr = parse(&key, value)?,
            "epsilon" => self.epsilon = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "model" => self.model = parse(&key, value)?,
            "recursion" => {
                self.recursion = RecursionMode::from_name(value).ok_or_else(|| ConfigError::Value {
                    key: key.clone(),
                    value: value.into(),
                    msg: "expected raw_tokens or computed_tokens".into(),
                })?
            }
            "link" => {
                self.link = Link::from_name(value).ok_or_else(|| ConfigError::Value {
                    key: key.clone(),
                    value: value.into(),
                    msg: "expected neg_cos or quartic".into(),
                })?
            }
            "family" => self.family = parse(&key, value)?,
            "direction" => {
                self.direction = OracleDirection::from_name(value).ok_or_else(|| ConfigError::Value {
                    key: key.clone(),
                    value: value.into(),
                    msg: "expected hide_when_close or paper_literal".into(),
                })?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "workers" => self.workers = Some(parse(&key, value)?),
            "format" => self.format = parse(&key, value)?,
            "sup_draws" => self.sup_draws = parse(&key, value)?,
            "slack_c0" => self.slack.0 = parse(&key, value)?,
            "slack_c1" => self.slack.1 = parse(&key, value)?,
            "c1" => self.theorem_constants[0] = parse(&key, value)?,
            "c2" => self.theorem_constants[1] = parse(&key, value)?,
            "c3" => self.theorem_constants[2] = parse(&key, value)?,
            "c4" => self.theorem_constants[3] = parse(&key, value)?,
            "wall_time" => self.record_wall_time = parse(&key, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.d == 0 || self.k == 0 || self.k > self.d {
            return bad(format!("need 1 <= k <= d, got d = {}, k = {}", self.d, self.k));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        // lr = 0 is allowed so a frozen run can serve as a baseline
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be nonnegative, got {}", self.lr));
        }
        if self.d > 64 {
            return bad("d above 64 is not supported".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    /// The configuration as `key=value` lines, readable by [`parse_config_text`].
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("d={}", self.d),
            format!("k={}", self.k),
            format!("n={}", self.n),
            format!("T={}", self.t),
            format!("lr={}", self.lr),
            format!("epsilon={}", self.epsilon),
            format!("seed={}", self.seed),
            format!("model={}", if self.model == ModelKind::Linear { "linear" } else { "transformer" }),
            format!("recursion={}", self.recursion.name()),
            format!("link={}", self.link.name()),
            format!("family={}", self.family),
            format!("direction={}", self.direction.name()),
            format!("sup_draws={}", self.sup_draws),
        ];
        if let Some(out) = &self.out {
            lines.push(format!("out={}", out.display()));
        }
        lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = parse_config_text("# run\nd = 12\nk=6  # half\nepsilon=inf\nfamily=sampled:40\n\nmodel=linear\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_all(file.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        cfg.apply_all([("k", "4"), ("T", "3"), ("lr", "0.5")]).unwrap();
        assert_eq!((cfg.d, cfg.k, cfg.t, cfg.lr), (12, 4, 3, 0.5));
        assert_eq!(cfg.epsilon, EpsilonSetting::Value(f64::INFINITY));
        assert_eq!(cfg.family, FamilySetting::Sampled(40));
        assert_eq!(cfg.model, ModelKind::Linear);
        cfg.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_all([("epsilon", "0.75"), ("recursion", "raw_tokens"), ("family", "sampled:9"), ("seed", "3")])
            .unwrap();
        let parsed = parse_config_text(&cfg.to_text()).unwrap();
        let mut back = RunConfig::default();
        back.apply_all(parsed.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_text("d 4").is_err());
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("colour", "red"), Err(ConfigError::UnknownKey(_))));
        assert!(cfg.set("epsilon", "-1").is_err());
        assert!(cfg.set("family", "sampled:0").is_err());
        assert!(cfg.set("recursion", "both").is_err());
        cfg.k = 11;
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { n: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { lr: -1.0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
