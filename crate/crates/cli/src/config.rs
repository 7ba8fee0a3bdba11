//! Flat `key = value` run configuration with `#` comments.

use heatwave::error::ConfigError;
use heatwave::operators::SourceConfig;
use heatwave::{DecouplerConfig, DecouplingMethod, GoalFunctional, PhysicalParams};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Primal,
    DecouplerCompare,
    Convergence,
    Adaptive,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    #[serde(skip)]
    pub physical: PhysicalParams,
    pub t_end: f64,
    pub n_macro: usize,
    pub m_micro: usize,
    pub l_micro: usize,
    /// Source configuration id (1: fluid, 2: solid).
    pub config_id: u8,
    /// Goal functional kind ("fluid" or "solid").
    pub functional: String,
    #[serde(skip)]
    pub decoupler: DecouplerConfig,
    /// Mesh doubling levels of a convergence study.
    pub levels: usize,
    pub adaptive_steps: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Primal,
            physical: PhysicalParams::default(),
            t_end: 1.0,
            n_macro: 50,
            m_micro: 1,
            l_micro: 1,
            config_id: 1,
            functional: "fluid".into(),
            decoupler: DecouplerConfig::default(),
            levels: 4,
            adaptive_steps: 4,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn source(&self) -> SourceConfig {
        SourceConfig::from_id(self.config_id).expect("validated")
    }

    pub fn goal(&self) -> GoalFunctional {
        if self.functional == "solid" {
            GoalFunctional::solid()
        } else {
            GoalFunctional::fluid()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.physical.validate()?;
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Constraint(what.to_string()))
            }
        };
        check(self.t_end > 0.0, "t_end must be positive")?;
        check(self.n_macro >= 1, "n_macro must be at least 1")?;
        check(self.m_micro >= 1, "m_micro must be at least 1")?;
        check(self.l_micro >= 1, "l_micro must be at least 1")?;
        check(SourceConfig::from_id(self.config_id).is_some(), "config must be 1 or 2")?;
        check(
            self.functional == "fluid" || self.functional == "solid",
            "functional must be fluid or solid",
        )?;
        check(self.levels >= 1, "levels must be at least 1")?;
        check((0.0..=1.0).contains(&self.decoupler.tau), "tau must lie in [0, 1]")?;
        check(self.decoupler.outer_tol > 0.0, "tol must be positive")?;
        check(self.decoupler.gmres_tol > 0.0, "gmres_tol must be positive")?;
        Ok(())
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

/// Parses a configuration file; every key is optional and defaults to the
/// baseline model parameters.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: content.to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "experiment" => {
                cfg.experiment = match value {
                    "primal" => ExperimentKind::Primal,
                    "decoupler-compare" => ExperimentKind::DecouplerCompare,
                    "convergence" => ExperimentKind::Convergence,
                    "adaptive" => ExperimentKind::Adaptive,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.into(),
                            message: format!(
                                "unknown experiment `{other}` (primal, decoupler-compare, convergence, adaptive)"
                            ),
                        })
                    }
                }
            }
            "nu" => cfg.physical.nu = parse_value(line, key, value)?,
            "beta" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.into(),
                        message: "expected a comma pair, e.g. `2, 0`".into(),
                    });
                }
                cfg.physical.beta = [
                    parse_value(line, key, parts[0])?,
                    parse_value(line, key, parts[1])?,
                ];
            }
            "lambda" => cfg.physical.lambda = parse_value(line, key, value)?,
            "delta" => cfg.physical.delta = parse_value(line, key, value)?,
            "gamma" => cfg.physical.gamma = parse_value(line, key, value)?,
            "h" => cfg.physical.h = parse_value(line, key, value)?,
            "t_end" => cfg.t_end = parse_value(line, key, value)?,
            "n_macro" => cfg.n_macro = parse_value(line, key, value)?,
            "m_micro" => cfg.m_micro = parse_value(line, key, value)?,
            "l_micro" => cfg.l_micro = parse_value(line, key, value)?,
            "config" => cfg.config_id = parse_value(line, key, value)?,
            "functional" => cfg.functional = value.to_string(),
            "method" => {
                cfg.decoupler.method = match value {
                    "relaxation" => DecouplingMethod::Relaxation,
                    "shooting" => DecouplingMethod::Shooting,
                    "monolithic" => DecouplingMethod::Monolithic,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.into(),
                            message: format!(
                                "unknown method `{other}` (relaxation, shooting, monolithic)"
                            ),
                        })
                    }
                }
            }
            "tau" => cfg.decoupler.tau = parse_value(line, key, value)?,
            "tol" => cfg.decoupler.outer_tol = parse_value(line, key, value)?,
            "max_outer" => cfg.decoupler.max_outer = parse_value(line, key, value)?,
            "gmres_tol" => cfg.decoupler.gmres_tol = parse_value(line, key, value)?,
            "levels" => cfg.levels = parse_value(line, key, value)?,
            "adaptive_steps" => cfg.adaptive_steps = parse_value(line, key, value)?,
            "seed" => cfg.seed = parse_value(line, key, value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_model_defaults() {
        let cfg = parse_config_str("experiment = primal\n").unwrap();
        assert_eq!(cfg.physical.nu, 0.001);
        assert_eq!(cfg.physical.beta, [2.0, 0.0]);
        assert_eq!(cfg.physical.lambda, 1000.0);
        assert_eq!(cfg.physical.delta, 0.1);
        assert_eq!(cfg.physical.gamma, 1000.0);
        assert_eq!(cfg.config_id, 1);
    }

    #[test]
    fn constraint_violations_are_rejected() {
        assert!(matches!(
            parse_config_str("nu = -1\n"),
            Err(ConfigError::Constraint(_))
        ));
        assert!(matches!(
            parse_config_str("m_micro = 0\n"),
            Err(ConfigError::Constraint(_))
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config_str("# fine\nnonsense_key = 3\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "nonsense_key");
            }
            other => panic!("unexpected error {other}"),
        }
        let err = parse_config_str("t_end = fast\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 1, .. }));
        let err = parse_config_str("just words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Malformed { line: 1, .. }));
    }

    #[test]
    fn vectors_parse_as_comma_pairs() {
        let cfg = parse_config_str("beta = 1.5, -0.25\n").unwrap();
        assert_eq!(cfg.physical.beta, [1.5, -0.25]);
    }
}
