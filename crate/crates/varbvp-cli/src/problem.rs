//! Problem description files and their merge with command-line flags.
//!
//! The file is TOML with top-level keys `model`, `q1`, `q2`, `q0`, `v0`,
//! `h`, `steps`, a `[parameters]` table of model parameters, and a `[solver]`
//! section mirroring the solver configuration. Command-line flags override
//! file values field by field.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;
use varbvp::{make_builtin, quartic_test_model, Error, LagrangianModel, Result, SolverConfig};

use crate::{ModelArgs, SolverArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub model: Option<String>,
    pub parameters: Option<BTreeMap<String, f64>>,
    pub q1: Option<Vec<f64>>,
    pub q2: Option<Vec<f64>>,
    pub q0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub solver: Option<SolverSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub n: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub continuation_steps: Option<usize>,
    pub max_bisections: Option<usize>,
    pub damping_factor: Option<f64>,
    pub max_backtracks: Option<usize>,
    pub cond_threshold: Option<f64>,
    pub v_max: Option<f64>,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read problem file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("problem file {}: {e}", path.display())))
    }
}

/// Everything a subcommand may need, after merging file and flags.
pub struct ProblemSetup {
    pub model: LagrangianModel,
    pub config: SolverConfig,
    file: ProblemFile,
}

impl ProblemSetup {
    pub fn build(model_args: &ModelArgs, solver_args: &SolverArgs) -> Result<Self> {
        let file = match &model_args.problem {
            Some(path) => ProblemFile::load(path)?,
            None => ProblemFile::default(),
        };

        let name = model_args
            .model
            .clone()
            .or_else(|| file.model.clone())
            .ok_or_else(|| {
                Error::InvalidConfig("no model given (--model or problem file)".into())
            })?;

        let mut parameters = file.parameters.clone().unwrap_or_default();
        if let Some(dim) = model_args.dim {
            parameters.insert("n".into(), dim as f64);
        }
        if let Some(omega) = model_args.omega {
            parameters.insert("omega".into(), omega);
        }
        for entry in &model_args.params {
            let (key, value) = entry.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("--param expects KEY=VALUE, got '{entry}'"))
            })?;
            let value: f64 = value.parse().map_err(|_| {
                Error::InvalidConfig(format!("--param {key}: '{value}' is not a number"))
            })?;
            parameters.insert(key.trim().to_string(), value);
        }

        let model = if name == "quartic" {
            if !parameters.is_empty() {
                return Err(Error::InvalidConfig(
                    "the quartic test model takes no parameters".into(),
                ));
            }
            quartic_test_model()
        } else {
            make_builtin(&name, &parameters)?
        };

        let mut config = SolverConfig::default();
        if let Some(section) = &file.solver {
            apply_section(&mut config, section);
        }
        apply_flags(&mut config, solver_args);
        config.validate()?;

        Ok(Self {
            model,
            config,
            file,
        })
    }

    /// A vector argument: flag wins, then the named file key.
    pub fn vector(&self, flag: &Option<String>, key: &str) -> Result<DVector<f64>> {
        if let Some(text) = flag {
            return parse_vector(text);
        }
        let from_file = match key {
            "q1" => &self.file.q1,
            "q2" => &self.file.q2,
            "q0" => &self.file.q0,
            "v0" => &self.file.v0,
            other => panic!("unknown problem vector key {other}"),
        };
        match from_file {
            Some(values) if !values.is_empty() => Ok(DVector::from_vec(values.clone())),
            _ => Err(Error::InvalidConfig(format!(
                "missing '{key}' (flag or problem file)"
            ))),
        }
    }

    pub fn duration(&self, flag: Option<f64>) -> Result<f64> {
        flag.or(self.file.h)
            .ok_or_else(|| Error::InvalidConfig("missing duration 'h'".into()))
    }

    pub fn steps(&self, flag: Option<usize>) -> Result<usize> {
        flag.or(self.file.steps)
            .ok_or_else(|| Error::InvalidConfig("missing step count 'steps'".into()))
    }
}

fn apply_section(config: &mut SolverConfig, section: &SolverSection) {
    if let Some(v) = section.n {
        config.n_sub = v;
    }
    if let Some(v) = section.tol {
        config.tol = v;
    }
    if let Some(v) = section.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = section.continuation_steps {
        config.continuation_steps = v;
    }
    if let Some(v) = section.max_bisections {
        config.max_bisections = v;
    }
    if let Some(v) = section.damping_factor {
        config.damping_factor = v;
    }
    if let Some(v) = section.max_backtracks {
        config.max_backtracks = v;
    }
    if let Some(v) = section.cond_threshold {
        config.cond_threshold = v;
    }
    if let Some(v) = section.v_max {
        config.v_max = v;
    }
}

fn apply_flags(config: &mut SolverConfig, args: &SolverArgs) {
    if let Some(v) = args.n_sub {
        config.n_sub = v;
    }
    if let Some(v) = args.tol {
        config.tol = v;
    }
    if let Some(v) = args.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = args.continuation_steps {
        config.continuation_steps = v;
    }
    if let Some(v) = args.max_bisections {
        config.max_bisections = v;
    }
    if let Some(v) = args.damping_factor {
        config.damping_factor = v;
    }
    if let Some(v) = args.max_backtracks {
        config.max_backtracks = v;
    }
    if let Some(v) = args.cond_threshold {
        config.cond_threshold = v;
    }
    if let Some(v) = args.v_max {
        config.v_max = v;
    }
}

/// Comma-separated vector components.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let values = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("'{part}' is not a number in '{text}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Error::InvalidConfig("empty vector".into()));
    }
    Ok(DVector::from_vec(values))
}
