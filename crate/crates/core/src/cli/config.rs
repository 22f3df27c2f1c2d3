//! Experiment configuration.
//!
//! Settings are layered as strings: preset defaults, then a flat key=value
//! file, then environment variables and flags. Parsing happens once, on the
//! merged layer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::posterior::{ArmBelief, BeliefState, PosteriorError};

/// Keys accepted in a config file.
pub const KEYS: [&str; 10] = [
    "experiment",
    "prior",
    "family",
    "theta",
    "horizon",
    "trials",
    "seed",
    "m_bar",
    "policies",
    "out",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("no experiment given (pass one or set `experiment` in the config file)")]
    NoExperiment,
    #[error("invalid prior for family: {0}")]
    Prior(String),
}

impl From<PosteriorError> for ConfigError {
    fn from(e: PosteriorError) -> Self {
        ConfigError::Prior(e.to_string())
    }
}

/// Experiment ids, one per figure panel plus `custom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig1Left,
    Fig1Right,
    FigUcb,
    FigTsOverlap,
    FigCov,
    FigBerLeft,
    FigBerRight,
    FigFixLeft,
    FigFixRight,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Fig1Left,
        Experiment::Fig1Right,
        Experiment::FigUcb,
        Experiment::FigTsOverlap,
        Experiment::FigCov,
        Experiment::FigBerLeft,
        Experiment::FigBerRight,
        Experiment::FigFixLeft,
        Experiment::FigFixRight,
        Experiment::Custom,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::Fig1Left => "fig1_left",
            Experiment::Fig1Right => "fig1_right",
            Experiment::FigUcb => "fig_ucb",
            Experiment::FigTsOverlap => "fig_ts_overlap",
            Experiment::FigCov => "fig_cov",
            Experiment::FigBerLeft => "fig_ber_left",
            Experiment::FigBerRight => "fig_ber_right",
            Experiment::FigFixLeft => "fig_fix_left",
            Experiment::FigFixRight => "fig_fix_right",
            Experiment::Custom => "custom",
        }
    }

    /// Preset defaults as config entries.
    pub fn defaults(self) -> Layer {
        let beta_uniform = "Beta(1,1)xBeta(1,1)";
        let entries: &[(&str, &str)] = match self {
            Experiment::Fig1Left => &[
                ("prior", "N(0,1)xPoint(0)"),
                ("family", "gaussian:1"),
                ("horizon", "500"),
                ("trials", "20000"),
                ("policies", "ts,r2"),
            ],
            Experiment::Fig1Right => &[
                ("prior", "N(0,1)xPoint(0)"),
                ("family", "gaussian:1"),
                ("policies", "ts,r2"),
            ],
            Experiment::FigUcb => &[
                ("prior", beta_uniform),
                ("theta", "0.6,0.4"),
                ("horizon", "1000"),
                ("trials", "1"),
                ("policies", "ucb"),
            ],
            Experiment::FigTsOverlap | Experiment::FigCov => &[
                ("prior", beta_uniform),
                ("theta", "0.6,0.4"),
                ("horizon", "1000"),
                ("trials", "1"),
                ("policies", "ts"),
            ],
            Experiment::FigBerLeft => &[
                ("prior", beta_uniform),
                ("horizon", "20"),
                ("trials", "50000"),
                ("m_bar", "20,30,40"),
                ("policies", "ts,r2"),
            ],
            Experiment::FigBerRight => &[
                ("prior", beta_uniform),
                ("m_bar", "40"),
                ("policies", "ts,r2"),
            ],
            Experiment::FigFixLeft => &[
                ("prior", "Beta(5,4)xBeta(500,500)"),
                ("horizon", "200"),
                ("trials", "2000"),
                ("policies", "ts,fix"),
            ],
            Experiment::FigFixRight => &[
                ("prior", beta_uniform),
                ("m_bar", "40"),
                ("policies", "ts,fix,r2"),
            ],
            Experiment::Custom => &[
                ("prior", beta_uniform),
                ("horizon", "100"),
                ("trials", "1000"),
                ("policies", "ts"),
            ],
        };
        let mut layer = Layer::new();
        layer.set("experiment", self.id());
        layer.set("family", "bernoulli");
        layer.set("theta", "prior");
        layer.set("horizon", "1");
        layer.set("trials", "1");
        layer.set("seed", "1");
        layer.set("m_bar", "");
        layer.set("out", "results");
        for (k, v) in entries {
            layer.set(k, v);
        }
        layer
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.id() == s.trim())
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A set of raw settings; later layers override earlier ones key by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layer(BTreeMap<String, String>);

impl Layer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.0.insert(key.to_string(), value.trim().to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn overlay(&mut self, other: &Layer) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    /// Parse `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut layer = Layer::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.into(),
                });
            }
            layer.set(key, value);
        }
        Ok(layer)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

/// Reward model named in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    Gaussian { reward_variance: f64 },
    Bernoulli,
}

impl FromStr for FamilySpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |message: String| ConfigError::Value {
            key: "family".into(),
            message,
        };
        let s = s.trim();
        if s == "bernoulli" {
            return Ok(FamilySpec::Bernoulli);
        }
        let tau2 = s
            .strip_prefix("gaussian:")
            .ok_or_else(|| bad(format!("`{s}` (expected bernoulli or gaussian:<variance>)")))?;
        let reward_variance: f64 = tau2.trim().parse().map_err(|_| bad(format!("`{tau2}`")))?;
        if !(reward_variance.is_finite() && reward_variance >= 0.0) {
            return Err(bad(format!("reward variance {reward_variance}")));
        }
        Ok(FamilySpec::Gaussian { reward_variance })
    }
}

/// Parse one arm: `N(mean,variance)`, `Beta(alpha,beta)` or `Point(value)`.
pub fn parse_arm(s: &str) -> Result<ArmBelief, ConfigError> {
    let bad = || ConfigError::Value {
        key: "prior".into(),
        message: format!("cannot parse arm `{s}`"),
    };
    let s = s.trim();
    let open = s.find('(').ok_or_else(bad)?;
    let body = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let args: Vec<f64> = body
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let belief = match (s[..open].trim(), args.as_slice()) {
        ("N", &[m, v]) => ArmBelief::gaussian(m, v)?,
        ("Beta", &[a, b]) => ArmBelief::beta(a, b)?,
        ("Point", &[v]) => ArmBelief::point(v)?,
        _ => return Err(bad()),
    };
    Ok(belief)
}

/// Parse `<arm>x<arm>` and check it against the family.
pub fn parse_prior(s: &str, family: FamilySpec) -> Result<BeliefState, ConfigError> {
    let mut depth = 0i32;
    let mut split = None;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            'x' if depth == 0 => split = Some(i),
            _ => {}
        }
    }
    let i = split.ok_or_else(|| ConfigError::Value {
        key: "prior".into(),
        message: format!("`{s}` (expected <arm>x<arm>)"),
    })?;
    let arms = [parse_arm(&s[..i])?, parse_arm(&s[i + 1..])?];
    let reward_variance = match family {
        FamilySpec::Bernoulli => {
            if arms.iter().any(|a| matches!(a, ArmBelief::Gaussian { .. })) {
                return Err(ConfigError::Prior(format!(
                    "{s} has a Gaussian arm under bernoulli"
                )));
            }
            if !arms.iter().any(|a| matches!(a, ArmBelief::Beta { .. })) {
                return Err(ConfigError::Prior(format!(
                    "{s} needs a Beta arm under bernoulli"
                )));
            }
            0.0
        }
        FamilySpec::Gaussian { reward_variance } => {
            if arms.iter().any(|a| matches!(a, ArmBelief::Beta { .. })) {
                return Err(ConfigError::Prior(format!(
                    "{s} has a Beta arm under gaussian"
                )));
            }
            reward_variance
        }
    };
    Ok(BeliefState::new(arms[0], arms[1], reward_variance)?)
}

/// Fully parsed settings of one `run` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub prior: BeliefState,
    pub family: FamilySpec,
    /// Fixed true means, or `None` to draw them from the prior.
    pub theta: Option<[f64; 2]>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub m_bar: Vec<u32>,
    pub policies: Vec<String>,
    pub out: PathBuf,
}

fn required<'a>(layer: &'a Layer, key: &str) -> Result<&'a str, ConfigError> {
    layer.get(key).ok_or_else(|| ConfigError::Value {
        key: key.into(),
        message: "missing".into(),
    })
}

fn number<T: FromStr>(layer: &Layer, key: &str) -> Result<T, ConfigError> {
    let raw = required(layer, key)?;
    raw.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        message: format!("`{raw}` is not a number"),
    })
}

fn list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl ExperimentConfig {
    /// Resolve an experiment: its preset defaults under the given layers.
    /// `experiment` wins over the file's `experiment` key.
    pub fn resolve(
        experiment: Option<&str>,
        file: &Layer,
        overrides: &Layer,
    ) -> Result<Self, ConfigError> {
        let id = experiment
            .or_else(|| overrides.get("experiment"))
            .or_else(|| file.get("experiment"))
            .ok_or(ConfigError::NoExperiment)?;
        let experiment: Experiment = id.parse()?;
        let mut layer = experiment.defaults();
        layer.overlay(file);
        layer.overlay(overrides);
        layer.set("experiment", experiment.id());
        Self::from_layer(&layer)
    }

    pub fn from_layer(layer: &Layer) -> Result<Self, ConfigError> {
        let experiment: Experiment = required(layer, "experiment")?.parse()?;
        let family: FamilySpec = required(layer, "family")?.parse()?;
        let prior = parse_prior(required(layer, "prior")?, family)?;
        let theta = match required(layer, "theta")? {
            "prior" => None,
            raw => {
                let bad = || ConfigError::Value {
                    key: "theta".into(),
                    message: format!("`{raw}` (expected prior or <mean>,<mean>)"),
                };
                let values: Vec<f64> = list(raw)
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                let [a, b] = values.as_slice() else {
                    return Err(bad());
                };
                Some([*a, *b])
            }
        };
        let horizon: usize = number(layer, "horizon")?;
        let trials: usize = number(layer, "trials")?;
        for (key, v) in [("horizon", horizon), ("trials", trials)] {
            if v == 0 {
                return Err(ConfigError::Value {
                    key: key.into(),
                    message: "must be at least 1".into(),
                });
            }
        }
        let m_bar = list(required(layer, "m_bar")?)
            .map(|v| {
                v.parse::<u32>().map_err(|_| ConfigError::Value {
                    key: "m_bar".into(),
                    message: format!("`{v}` is not a whole number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let policies: Vec<String> = list(required(layer, "policies")?)
            .map(String::from)
            .collect();
        if policies.is_empty() {
            return Err(ConfigError::Value {
                key: "policies".into(),
                message: "empty".into(),
            });
        }
        Ok(Self {
            experiment,
            prior,
            family,
            theta,
            horizon,
            trials,
            seed: number(layer, "seed")?,
            m_bar,
            policies,
            out: PathBuf::from(required(layer, "out")?),
        })
    }
}
