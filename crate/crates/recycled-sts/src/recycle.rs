//! The two-layer recycled bootstrap of the two-stage estimator.
//!
//! Each replicate re-solves every individual's least-squares problem under
//! fresh inner weights (warm-started at the individual's Stage I estimate,
//! around which the resampling theory expands) and re-averages the refitted
//! estimates under an independent outer weight vector:
//! `theta_star = (1/N) sum_i u_i theta_star_i`.
//!
//! Confidence intervals come from the replicate distribution of the
//! studentized pivot `(theta_star - ubar * theta_sts) / tau_N`, where
//! `tau_N` is the outer scheme's exact coordinate standard deviation and
//! `ubar` is that replicate's outer-weight mean. For sum-constrained
//! schemes (multinomial, dirichlet) `ubar` is identically 1 and the pivot
//! reduces to the plain `(theta_star - theta_sts) / tau_N`; for i.i.d.
//! exponential weights the correction removes the weight-mean drift that
//! would otherwise leak the magnitude of `theta_sts` into the interval
//! width. Replicates are independent work items keyed by
//! (seed, replicate, attempt), so runs are reproducible under any
//! scheduling.

use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::exec::*;
use crate::model::Model;
use crate::nls::fit_wls;
use crate::rng::{domain, id_key, stream};
use crate::stats::{ks_distance, quantile_sorted, standard_normal_cdf};
use crate::sts::{HierDataset, StsFit};
use crate::weights::{draw_weights, tau_sq, WeightScheme};

/// Interval construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    /// Basic (reflected) bootstrap on the studentized pivot.
    BasicStudentized,
    /// Percentile interval of the studentized, re-centered replicates.
    Percentile,
}

impl CiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CiMethod::BasicStudentized => "basic_studentized",
            CiMethod::Percentile => "percentile",
        }
    }
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic_studentized" | "basic-studentized" => Ok(CiMethod::BasicStudentized),
            "percentile" => Ok(CiMethod::Percentile),
            other => Err(Error::InvalidArgument(format!(
                "unknown CI method `{other}` (expected basic_studentized or percentile)"
            ))),
        }
    }
}

/// Bootstrap configuration.
#[derive(Debug, Clone)]
pub struct RecycleConfig {
    /// Replicate count B.
    pub replicates: usize,
    /// Inner (Stage I*) weight scheme, drawn at size n_i per individual.
    pub inner: WeightScheme,
    /// Outer (Stage II*) weight scheme, drawn at size N.
    pub outer: WeightScheme,
    pub ci_level: f64,
    pub ci_method: CiMethod,
    /// Test hook: force every weight to the constant 1, which must
    /// reproduce the base estimate exactly.
    pub debug_unit_weights: bool,
}

impl Default for RecycleConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            inner: WeightScheme::Dirichlet,
            outer: WeightScheme::Dirichlet,
            ci_level: 0.95,
            ci_method: CiMethod::BasicStudentized,
            debug_unit_weights: false,
        }
    }
}

impl RecycleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least 100 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

/// One bootstrap replicate: the recycled estimate and the mean of the outer
/// weights that produced it.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub theta_star: DVector<f64>,
    pub outer_mean: f64,
}

/// A complete bootstrap run.
#[derive(Debug, Clone)]
pub struct RecycleRun {
    /// Surviving replicates with their replicate indices, ascending.
    pub replicates: Vec<(u32, Replicate)>,
    /// The point estimate recycled around.
    pub theta_sts: DVector<f64>,
    /// Outer-scheme standard deviation at size N, used for studentization.
    pub tau_n: f64,
    /// Number of converged individuals entering each replicate.
    pub n_individuals: usize,
    /// Per-coordinate (lo, hi) at `ci_level`.
    pub intervals: Vec<(f64, f64)>,
    pub drop_count: usize,
    /// Set when more than 20% of replicates were dropped.
    pub unreliable: bool,
    pub ci_level: f64,
    pub ci_method: CiMethod,
}

/// Runs one replicate: inner refits under fresh weights, then the weighted
/// re-average. Streams are keyed by (seed, replicate, attempt, individual
/// id), so results do not depend on individual storage order.
fn replicate_attempt(
    model: &dyn Model,
    dataset: &HierDataset,
    base: &StsFit,
    cfg: &RecycleConfig,
    seed: u64,
    replicate: u64,
    attempt: u64,
) -> Result<Replicate> {
    let p = model.dim();
    let n_conv = base.converged_idx.len();
    if n_conv < 2 {
        return Err(Error::EstimationFailure(
            "recycling needs at least 2 converged individuals".to_string(),
        ));
    }

    let mut theta_stars: Vec<DVector<f64>> = Vec::with_capacity(n_conv);
    for &i in &base.converged_idx {
        let data = &dataset.individuals[i];
        let mut rng = stream(
            seed,
            &[domain::INNER_WEIGHTS, replicate, attempt, id_key(&data.id)],
        );
        let w = if cfg.debug_unit_weights {
            vec![1.0; data.len()]
        } else {
            draw_weights(cfg.inner, data.len(), &mut rng)?
        };
        let warm = &base.fits[i].as_ref().expect("converged").theta;
        let fit = fit_wls(model, data, &w, warm.as_slice(), &base.options)?;
        if !fit.converged {
            return Err(Error::EstimationFailure(format!(
                "inner refit for `{}` did not converge",
                data.id
            )));
        }
        theta_stars.push(fit.theta);
    }

    let mut rng = stream(seed, &[domain::OUTER_WEIGHTS, replicate, attempt]);
    let u = if cfg.debug_unit_weights {
        vec![1.0; n_conv]
    } else {
        draw_weights(cfg.outer, n_conv, &mut rng)?
    };

    let mut theta_star = DVector::zeros(p);
    for (k, th) in theta_stars.iter().enumerate() {
        theta_star.axpy(u[k], th, 1.0);
    }
    theta_star /= n_conv as f64;
    let outer_mean = u.iter().sum::<f64>() / n_conv as f64;
    Ok(Replicate {
        theta_star,
        outer_mean,
    })
}

/// One recycled replicate (first attempt; the bootstrap driver handles
/// retries on failure).
pub fn recycle_once(
    model: &dyn Model,
    dataset: &HierDataset,
    base: &StsFit,
    cfg: &RecycleConfig,
    seed: u64,
    replicate: u64,
) -> Result<Replicate> {
    replicate_attempt(model, dataset, base, cfg, seed, replicate, 0)
}

/// Runs B replicates, retrying each failed replicate with up to 3 fresh
/// weight draws before counting it as dropped.
pub fn recycle_bootstrap(
    model: &dyn Model,
    dataset: &HierDataset,
    base: &StsFit,
    cfg: &RecycleConfig,
    seed: u64,
) -> Result<RecycleRun> {
    cfg.validate()?;
    let b = cfg.replicates;

    let outcomes: Vec<Option<Replicate>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            (0..4u64)
                .find_map(|attempt| {
                    replicate_attempt(model, dataset, base, cfg, seed, rep, attempt).ok()
                })
        })
        .collect();

    let replicates: Vec<(u32, Replicate)> = outcomes
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i as u32, r)))
        .collect();
    let drop_count = b - replicates.len();
    let unreliable = 5 * drop_count > b;

    let n_conv = base.converged_idx.len();
    let tau_n = tau_sq(cfg.outer, n_conv).sqrt();
    let mut run = RecycleRun {
        replicates,
        theta_sts: base.theta_sts.clone(),
        tau_n,
        n_individuals: n_conv,
        intervals: Vec::new(),
        drop_count,
        unreliable,
        ci_level: cfg.ci_level,
        ci_method: cfg.ci_method,
    };
    run.intervals = build_ci(&run, cfg.ci_level)?;
    Ok(run)
}

/// Per-coordinate intervals at `level` from the stored replicates, using
/// the run's CI method.
pub fn build_ci(run: &RecycleRun, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ci level must lie in (0, 1), got {level}"
        )));
    }
    if run.replicates.len() < 100 {
        return Err(Error::InsufficientReplicates {
            needed: 100,
            available: run.replicates.len(),
        });
    }
    let p = run.theta_sts.len();
    let mut intervals = Vec::with_capacity(p);
    let mut pivots = Vec::with_capacity(run.replicates.len());
    for c in 0..p {
        pivots.clear();
        for (_, rep) in &run.replicates {
            pivots.push((rep.theta_star[c] - rep.outer_mean * run.theta_sts[c]) / run.tau_n);
        }
        pivots.sort_unstable_by(|a, b| a.total_cmp(b));
        let q_lo = quantile_sorted(&pivots, (1.0 - level) / 2.0);
        let q_hi = quantile_sorted(&pivots, (1.0 + level) / 2.0);
        let (lo, hi) = match run.ci_method {
            CiMethod::BasicStudentized => (run.theta_sts[c] - q_hi, run.theta_sts[c] - q_lo),
            CiMethod::Percentile => (run.theta_sts[c] + q_lo, run.theta_sts[c] + q_hi),
        };
        debug_assert!(lo <= hi);
        intervals.push((lo, hi));
    }
    Ok(intervals)
}

/// Kolmogorov-Smirnov distance between the studentized replicate pivots
/// `sqrt(N) (theta_star - theta_sts) / (lambda_hat tau_N)` and the standard
/// normal. Defined for p = 1 runs.
pub fn ks_to_normal(run: &RecycleRun, lambda_hat: f64) -> Result<f64> {
    if run.theta_sts.len() != 1 {
        return Err(Error::InvalidArgument(
            "ks_to_normal is defined for scalar-parameter runs".to_string(),
        ));
    }
    if lambda_hat.is_nan() || lambda_hat <= 0.0 {
        return Err(Error::InvalidArgument(
            "ks_to_normal needs lambda_hat > 0".to_string(),
        ));
    }
    if run.replicates.is_empty() {
        return Err(Error::InsufficientReplicates {
            needed: 1,
            available: 0,
        });
    }
    let scale = (run.n_individuals as f64).sqrt() / (lambda_hat * run.tau_n);
    let pivots: Vec<f64> = run
        .replicates
        .iter()
        .map(|(_, rep)| scale * (rep.theta_star[0] - run.theta_sts[0]))
        .collect();
    Ok(ks_distance(&pivots, standard_normal_cdf))
}
