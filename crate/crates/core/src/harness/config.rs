use std::fmt;
use std::str::FromStr;

use crate::signal::SignalConfig;

/// Algorithms the harness can run on each realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlgorithmId {
    /// DLMS fed the distorted measurements.
    DlmsNl,
    /// DLMS fed linear measurements over clean links.
    DlmsClean,
    SonecFd,
    SonecSd,
    SonecCombOnly,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::DlmsNl,
        AlgorithmId::DlmsClean,
        AlgorithmId::SonecFd,
        AlgorithmId::SonecSd,
        AlgorithmId::SonecCombOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::DlmsNl => "dlms_nl",
            AlgorithmId::DlmsClean => "dlms_clean",
            AlgorithmId::SonecFd => "sonec_fd",
            AlgorithmId::SonecSd => "sonec_sd",
            AlgorithmId::SonecCombOnly => "sonec_comb_only",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Complete description of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    pub l: usize,
    pub n_iters: usize,
    pub n_runs: usize,
    pub mu: f64,
    pub mu_b: f64,
    pub b_max: f64,
    pub sigma_theta: f64,
    pub sigma_v: f64,
    pub sigma_eta: f64,
    pub sigma_u: f64,
    pub topology_degree: usize,
    pub pilot_len: usize,
    /// Exchanged estimates pass through each sender's nonlinearity.
    pub link_nonlinearity: bool,
    /// Sorted, without duplicates.
    pub algorithms: Vec<AlgorithmId>,
    pub master_seed: u64,
    pub normalize_omega: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_nodes: 16,
            l: 20,
            n_iters: 1000,
            n_runs: 100,
            mu: 0.01,
            mu_b: 0.005,
            b_max: 0.4,
            sigma_theta: 0.045,
            sigma_v: 0.0,
            sigma_eta: 0.0,
            sigma_u: 1.0,
            topology_degree: 4,
            pilot_len: 200,
            link_nonlinearity: false,
            algorithms: AlgorithmId::ALL.to_vec(),
            master_seed: 1,
            normalize_omega: true,
        }
    }
}

/// Configuration problems, each naming the offending key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{}unknown key `{key}`", at(*.line))]
    UnknownKey { line: Option<usize>, key: String },
    #[error("{}invalid value for `{key}`: {reason}", at(*.line))]
    InvalidValue {
        line: Option<usize>,
        key: String,
        reason: String,
    },
    #[error("`{key}` out of range: {reason}")]
    Range { key: &'static str, reason: String },
}

fn at(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

fn parse_num<V: FromStr>(key: &str, value: &str) -> Result<V, ConfigError>
where
    V::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: V::Err| ConfigError::InvalidValue {
            line: None,
            key: key.to_string(),
            reason: e.to_string(),
        })
}

fn parse_switch(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            line: None,
            key: key.to_string(),
            reason: format!("expected on or off, got `{value}`"),
        }),
    }
}

impl ExperimentConfig {
    /// Assigns one key; `value` is trimmed text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "n_nodes" => self.n_nodes = parse_num(key, value)?,
            "L" => self.l = parse_num(key, value)?,
            "n_iters" => self.n_iters = parse_num(key, value)?,
            "n_runs" => self.n_runs = parse_num(key, value)?,
            "mu" => self.mu = parse_num(key, value)?,
            "mu_b" => self.mu_b = parse_num(key, value)?,
            "b_max" => self.b_max = parse_num(key, value)?,
            "sigma_theta" => self.sigma_theta = parse_num(key, value)?,
            "sigma_v" => self.sigma_v = parse_num(key, value)?,
            "sigma_eta" => self.sigma_eta = parse_num(key, value)?,
            "sigma_u" => self.sigma_u = parse_num(key, value)?,
            "topology_degree" => self.topology_degree = parse_num(key, value)?,
            "pilot_len" => self.pilot_len = parse_num(key, value)?,
            "master_seed" => self.master_seed = parse_num(key, value)?,
            "link_nonlinearity" => self.link_nonlinearity = parse_switch(key, value)?,
            "normalize_omega" => self.normalize_omega = parse_switch(key, value)?,
            "algorithms" => {
                let mut algs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(AlgorithmId::from_str)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|reason| ConfigError::InvalidValue {
                        line: None,
                        key: key.to_string(),
                        reason,
                    })?;
                algs.sort();
                algs.dedup();
                self.algorithms = algs;
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: None,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("n_nodes", self.n_nodes),
            ("L", self.l),
            ("n_iters", self.n_iters),
            ("n_runs", self.n_runs),
            ("topology_degree", self.topology_degree),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(ConfigError::Range {
                    key,
                    reason: "must be positive".into(),
                });
            }
        }
        if self.n_nodes > 1 && self.topology_degree >= self.n_nodes {
            return Err(ConfigError::Range {
                key: "topology_degree",
                reason: format!("must be below n_nodes ({})", self.n_nodes),
            });
        }
        for (key, v) in [
            ("mu", self.mu),
            ("mu_b", self.mu_b),
            ("b_max", self.b_max),
            ("sigma_u", self.sigma_u),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Range {
                    key,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        for (key, v) in [
            ("sigma_theta", self.sigma_theta),
            ("sigma_v", self.sigma_v),
            ("sigma_eta", self.sigma_eta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::Range {
                    key,
                    reason: format!("must be nonnegative, got {v}"),
                });
            }
        }
        if self.algorithms.contains(&AlgorithmId::SonecSd) && self.pilot_len == 0 {
            return Err(ConfigError::Range {
                key: "pilot_len",
                reason: "sonec_sd needs a positive pilot window".into(),
            });
        }
        if self.algorithms.is_empty() {
            return Err(ConfigError::Range {
                key: "algorithms",
                reason: "select at least one algorithm".into(),
            });
        }
        Ok(())
    }

    pub fn signal(&self) -> SignalConfig {
        SignalConfig {
            n_nodes: self.n_nodes,
            l: self.l,
            n_iters: self.n_iters,
            sigma_u: self.sigma_u,
            sigma_v: self.sigma_v,
            sigma_theta: self.sigma_theta,
            sigma_eta: self.sigma_eta,
            b_max: self.b_max,
            pilot_len: self.pilot_len,
            normalize_omega: self.normalize_omega,
        }
    }
}

/// Parses flat `key = value` text; `#` starts a comment. Missing keys keep
/// their defaults and the result is validated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: content.to_string(),
            });
        };
        cfg.set(key.trim(), value.trim()).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey {
                line: Some(line),
                key,
            },
            ConfigError::InvalidValue { key, reason, .. } => ConfigError::InvalidValue {
                line: Some(line),
                key,
                reason,
            },
            other => other,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}
