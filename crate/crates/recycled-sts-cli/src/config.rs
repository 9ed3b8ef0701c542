//! Flat key/value experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys:
//!
//! ```text
//! experiment    mse | coverage_asymptotic | coverage_recycled   (required)
//! model         registered model name                           (required)
//! theta0        comma-separated numbers, length p               (required)
//! N             comma-separated individual counts (grid rows)   (required)
//! n             comma-separated observation counts (grid cols)  (required)
//! sigma         observation-noise standard deviation            (required)
//! lambda        random-effect standard deviation                (required)
//! error_noise   truncated_normal | normal | laplace     (default truncated_normal)
//! effect_noise  truncated_normal | normal | laplace     (default truncated_normal)
//! t_min, t_max  design-time interval                     (default 0, 8)
//! M_rep         replications per cell                           (required)
//! paper_M_rep   replications under --paper-scale                (optional)
//! B             bootstrap replicates (coverage_recycled)        (required there)
//! paper_B       bootstrap replicates under --paper-scale        (optional)
//! inner_weights, outer_weights   weight schemes (coverage_recycled)
//! ci_level      coverage target                          (default 0.95)
//! ci_method     basic_studentized | percentile    (default basic_studentized)
//! seed          run seed                                        (required)
//! ```
//!
//! Unknown keys are rejected by name. The grid is the cartesian product of
//! `N` and `n`, row-major in `N`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use recycled_sts::recycle::{CiMethod, RecycleConfig};
use recycled_sts::simulate::{CoverageMode, NoiseKind, SimDesign};
use recycled_sts::weights::WeightScheme;

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Mse,
    CoverageAsymptotic,
    CoverageRecycled,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub experiment: ExperimentKind,
    pub base: SimDesign,
    pub grid: Vec<(usize, usize)>,
    pub m_rep: usize,
    pub paper_m_rep: Option<usize>,
    pub bootstrap: Option<RecycleConfig>,
    pub paper_b: Option<usize>,
}

impl SimConfig {
    /// Replication count honoring --paper-scale.
    pub fn m_rep(&self, paper_scale: bool) -> usize {
        if paper_scale {
            self.paper_m_rep.unwrap_or(self.m_rep)
        } else {
            self.m_rep
        }
    }

    /// Coverage mode honoring --paper-scale.
    pub fn coverage_mode(&self, paper_scale: bool) -> Option<CoverageMode> {
        match self.experiment {
            ExperimentKind::Mse => None,
            ExperimentKind::CoverageAsymptotic => Some(CoverageMode::Asymptotic),
            ExperimentKind::CoverageRecycled => {
                let mut cfg = self.bootstrap.clone().expect("validated");
                if paper_scale {
                    if let Some(b) = self.paper_b {
                        cfg.replicates = b;
                    }
                }
                Some(CoverageMode::Recycled(cfg))
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<SimConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|msg| AppError::Input(format!("{}: {msg}", path.display())))
}

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "model",
    "theta0",
    "N",
    "n",
    "sigma",
    "lambda",
    "error_noise",
    "effect_noise",
    "t_min",
    "t_max",
    "M_rep",
    "paper_M_rep",
    "B",
    "paper_B",
    "inner_weights",
    "outer_weights",
    "ci_level",
    "ci_method",
    "seed",
];

pub fn parse_config(text: &str) -> Result<SimConfig, String> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(format!("line {}: unknown key `{key}`", i + 1));
        }
        if kv.insert(key, value).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", i + 1));
        }
    }

    let required = |key: &str| -> Result<&str, String> {
        kv.get(key)
            .copied()
            .ok_or_else(|| format!("missing required key `{key}`"))
    };
    let parse_f64 = |key: &str, v: &str| -> Result<f64, String> {
        v.parse::<f64>()
            .map_err(|_| format!("key `{key}`: `{v}` is not a number"))
    };
    let parse_usize_list = |key: &str, v: &str| -> Result<Vec<usize>, String> {
        v.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("key `{key}`: `{}` is not a positive integer", tok.trim()))
            })
            .collect()
    };

    let experiment = match required("experiment")? {
        "mse" => ExperimentKind::Mse,
        "coverage_asymptotic" => ExperimentKind::CoverageAsymptotic,
        "coverage_recycled" => ExperimentKind::CoverageRecycled,
        other => {
            return Err(format!(
                "key `experiment`: unknown value `{other}` (mse, coverage_asymptotic or coverage_recycled)"
            ))
        }
    };

    let theta0: Vec<f64> = required("theta0")?
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("key `theta0`: `{}` is not a number", tok.trim()))
        })
        .collect::<Result<_, _>>()?;
    let n_grid = parse_usize_list("N", required("N")?)?;
    let obs_grid = parse_usize_list("n", required("n")?)?;
    if n_grid.is_empty() || obs_grid.is_empty() {
        return Err("keys `N` and `n` must list at least one value".to_string());
    }
    let mut grid = Vec::with_capacity(n_grid.len() * obs_grid.len());
    for &big_n in &n_grid {
        for &small_n in &obs_grid {
            grid.push((big_n, small_n));
        }
    }

    let noise = |key: &str, default: NoiseKind| -> Result<NoiseKind, String> {
        match kv.get(key) {
            Some(v) => v.parse::<NoiseKind>().map_err(|e| format!("key `{key}`: {e}")),
            None => Ok(default),
        }
    };
    let t_min = match kv.get("t_min") {
        Some(v) => parse_f64("t_min", v)?,
        None => 0.0,
    };
    let t_max = match kv.get("t_max") {
        Some(v) => parse_f64("t_max", v)?,
        None => 8.0,
    };
    let m_rep = required("M_rep")?
        .parse::<usize>()
        .map_err(|_| "key `M_rep`: not a positive integer".to_string())?;
    let paper_m_rep = match kv.get("paper_M_rep") {
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|_| "key `paper_M_rep`: not a positive integer".to_string())?,
        ),
        None => None,
    };
    let seed = required("seed")?
        .parse::<u64>()
        .map_err(|_| "key `seed`: not a nonnegative integer".to_string())?;

    let base = SimDesign {
        model: required("model")?.to_string(),
        theta0: DVector::from_vec(theta0),
        n_individuals: grid[0].0,
        n_obs: grid[0].1,
        sigma: parse_f64("sigma", required("sigma")?)?,
        lambda: parse_f64("lambda", required("lambda")?)?,
        error_kind: noise("error_noise", NoiseKind::TruncatedNormal)?,
        effect_kind: noise("effect_noise", NoiseKind::TruncatedNormal)?,
        t_range: (t_min, t_max),
        m_rep,
        seed,
    };
    base.validate().map_err(|e| e.to_string())?;

    let bootstrap = if experiment == ExperimentKind::CoverageRecycled {
        let b = required("B")?
            .parse::<usize>()
            .map_err(|_| "key `B`: not a positive integer".to_string())?;
        let scheme = |key: &str| -> Result<WeightScheme, String> {
            required(key)?
                .parse::<WeightScheme>()
                .map_err(|e| format!("key `{key}`: {e}"))
        };
        let ci_level = match kv.get("ci_level") {
            Some(v) => parse_f64("ci_level", v)?,
            None => 0.95,
        };
        let ci_method = match kv.get("ci_method") {
            Some(v) => v
                .parse::<CiMethod>()
                .map_err(|e| format!("key `ci_method`: {e}"))?,
            None => CiMethod::BasicStudentized,
        };
        let cfg = RecycleConfig {
            replicates: b,
            inner: scheme("inner_weights")?,
            outer: scheme("outer_weights")?,
            ci_level,
            ci_method,
            debug_unit_weights: false,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Some(cfg)
    } else {
        None
    };
    let paper_b = match kv.get("paper_B") {
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|_| "key `paper_B`: not a positive integer".to_string())?,
        ),
        None => None,
    };

    Ok(SimConfig {
        experiment,
        base,
        grid,
        m_rep,
        paper_m_rep,
        bootstrap,
        paper_b,
    })
}
