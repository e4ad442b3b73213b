//! Study plans from plain-text `key=value` configuration.
//!
//! Tokens are separated by whitespace or newlines and `#` starts a comment:
//!
//! ```text
//! example=1 levels=4,16,64 krule=h2
//! tfinal=1   # final time
//! ```
//!
//! Defaults: `nu=1`, `tfinal=1`, `krule=h2`, `example=1`, `mode=twogrid`,
//! `levels=4,8,16,32`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::mms::Example;
use crate::par::Execution;
use crate::twogrid::{Mode, SimulationConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Time step as a function of the fine mesh width `h = 1/n_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStepRule {
    /// `k = h^2`
    H2,
    /// `k = h`
    H,
    Fixed(f64),
}

impl TimeStepRule {
    pub fn step(self, n_fine: usize) -> f64 {
        let h = 1.0 / n_fine as f64;
        match self {
            TimeStepRule::H2 => h * h,
            TimeStepRule::H => h,
            TimeStepRule::Fixed(k) => k,
        }
    }
}

impl FromStr for TimeStepRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h2" => Ok(TimeStepRule::H2),
            "h" => Ok(TimeStepRule::H),
            _ => {
                let v = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| format!("unknown time step rule '{s}' (expected h2, h or fixed:<value>)"))?;
                let k: f64 = v.parse().map_err(|_| format!("invalid fixed time step '{v}'"))?;
                if k > 0.0 && k.is_finite() {
                    Ok(TimeStepRule::Fixed(k))
                } else {
                    Err(format!("time step must be positive, got {v}"))
                }
            }
        }
    }
}

impl fmt::Display for TimeStepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeStepRule::H2 => write!(f, "h2"),
            TimeStepRule::H => write!(f, "h"),
            TimeStepRule::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

pub fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "twogrid" => Ok(Mode::TwoGrid),
        "onegrid" => Ok(Mode::OneGrid),
        _ => Err(format!("unknown mode '{s}' (expected twogrid or onegrid)")),
    }
}

pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid level '{t}'")))
        .collect()
}

/// Coarse subdivisions paired with `n_fine`: the nearest integer to
/// `sqrt(n_fine)`, at least 2 and at most `n_fine`.
pub fn coarse_for(n_fine: usize) -> usize {
    ((n_fine as f64).sqrt().round() as usize).max(2).min(n_fine)
}

/// One rung of a study ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    pub n_coarse: usize,
    pub n_fine: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub example: Example,
    /// Fine subdivisions, strictly increasing.
    pub levels: Vec<usize>,
    pub krule: TimeStepRule,
    pub t_final: f64,
    pub nu: f64,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub exec: Execution,
}

impl Default for StudyPlan {
    fn default() -> Self {
        Self {
            example: Example::Polynomial,
            levels: vec![4, 8, 16, 32],
            krule: TimeStepRule::H2,
            t_final: 1.0,
            nu: 1.0,
            mode: Mode::TwoGrid,
            out: None,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            exec: Execution::default(),
        }
    }
}

impl StudyPlan {
    /// Sets one key; used for both config files and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("invalid number '{v}' for {key}"));
        match key {
            "example" => self.example = value.parse()?,
            "levels" => self.levels = parse_levels(value)?,
            "krule" => self.krule = value.parse()?,
            "tfinal" => self.t_final = num(value)?,
            "nu" => self.nu = num(value)?,
            "mode" => self.mode = parse_mode(value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "newton_tol" => self.newton_tol = num(value)?,
            "newton_max_iter" => {
                self.newton_max_iter = value.parse().map_err(|_| format!("invalid iteration count '{value}'"))?
            }
            "exec" => {
                self.exec = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(format!("unknown execution '{value}' (expected parallel or sequential)")),
                }
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// The `(n_H, n_h, k)` ladder after validation.
    pub fn level_specs(&self) -> Result<Vec<LevelSpec>, ConfigError> {
        if self.levels.is_empty() {
            return Err(ConfigError::Invalid("no levels given".into()));
        }
        if self.levels[0] == 0 {
            return Err(ConfigError::Invalid("levels must be positive".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid("levels must be strictly increasing".into()));
        }
        let specs: Vec<LevelSpec> = self
            .levels
            .iter()
            .map(|&n| LevelSpec {
                n_coarse: if self.mode == Mode::OneGrid { n } else { coarse_for(n) },
                n_fine: n,
                dt: self.krule.step(n),
            })
            .collect();
        for s in &specs {
            self.simulation_config(s).validate().map_err(|e| ConfigError::Invalid(format!("level n_h={}: {e}", s.n_fine)))?;
        }
        Ok(specs)
    }

    pub fn simulation_config(&self, spec: &LevelSpec) -> SimulationConfig {
        SimulationConfig {
            nu: self.nu,
            t_final: self.t_final,
            dt: spec.dt,
            n_coarse: spec.n_coarse,
            n_fine: spec.n_fine,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            mode: self.mode,
            exec: self.exec,
        }
    }
}

/// Parses a configuration text on top of the defaults.
pub fn parse_config(text: &str) -> Result<StudyPlan, ConfigError> {
    let mut plan = StudyPlan::default();
    apply_config(&mut plan, text)?;
    plan.level_specs()?;
    Ok(plan)
}

/// Applies the settings of `text` to `plan` without final validation.
pub fn apply_config(plan: &mut StudyPlan, text: &str) -> Result<(), ConfigError> {
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        for token in content.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line, message: format!("expected key=value, got '{token}'") })?;
            plan.set(key.trim(), value.trim()).map_err(|message| ConfigError::Parse { line, message })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let plan = parse_config("").unwrap();
        assert_eq!(plan, StudyPlan::default());
        assert_eq!(plan.nu, 1.0);
        assert_eq!(plan.t_final, 1.0);
        assert_eq!(plan.krule, TimeStepRule::H2);
        assert_eq!(plan.example, Example::Polynomial);
        assert_eq!(plan.mode, Mode::TwoGrid);
    }

    #[test]
    fn square_pairing_ladder() {
        let plan = parse_config("example=1 levels=4,16,64 krule=h2").unwrap();
        let specs = plan.level_specs().unwrap();
        let got: Vec<_> = specs.iter().map(|s| (s.n_coarse, s.n_fine, s.dt)).collect();
        assert_eq!(got, vec![(2, 4, 1.0 / 16.0), (4, 16, 1.0 / 256.0), (8, 64, 1.0 / 4096.0)]);
    }

    #[test]
    fn default_ladder_pairing() {
        let specs = StudyPlan::default().level_specs().unwrap();
        let coarse: Vec<_> = specs.iter().map(|s| s.n_coarse).collect();
        assert_eq!(coarse, vec![2, 3, 4, 6]);
        assert_eq!(coarse_for(1), 1);
        assert_eq!(coarse_for(2), 2);
    }

    #[test]
    fn bogus_rule_rejected() {
        assert!(matches!(parse_config("krule=bogus"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(parse_config("krule=fixed:-1").is_err());
        assert_eq!("fixed:0.25".parse::<TimeStepRule>().unwrap(), TimeStepRule::Fixed(0.25));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("# header\nexample=1\n\ncolour=blue\n").unwrap_err();
        assert_eq!(err, ConfigError::Parse { line: 4, message: "unknown key 'colour'".into() });
        assert!(matches!(parse_config("nu=1\nlevels\n"), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn comments_and_multiline() {
        let plan = parse_config("example=2   # trig\nmode=onegrid\ntfinal=0.5 krule=h\nlevels=2,4").unwrap();
        assert_eq!(plan.example, Example::Trigonometric);
        assert_eq!(plan.mode, Mode::OneGrid);
        assert_eq!(plan.t_final, 0.5);
        assert_eq!(plan.level_specs().unwrap()[0].n_coarse, 2);
    }

    #[test]
    fn constraint_violations() {
        assert!(matches!(parse_config("krule=fixed:0.3"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("levels=8,4"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("levels=4,4"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config("nu=0"), Err(ConfigError::Invalid(_))));
    }
}
