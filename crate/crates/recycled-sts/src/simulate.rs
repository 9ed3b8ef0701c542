//! Data generation under the hierarchical model and the Monte Carlo
//! experiment drivers.
//!
//! A simulated dataset draws design times uniformly from `t_range`, a
//! random effect vector `b_i` per individual at scale `lambda`, and
//! observation noise at scale `sigma`, then records
//! `y_ij = f(t_ij; theta0 + b_i) + eps_ij`. Experiments repeat
//! generate-then-fit over a grid of (N, n) cells and reduce the replicates
//! into MSE, coverage and interval-length summaries. Replicates are keyed
//! by (seed, cell, replicate), so the reports are identical under parallel
//! and sequential execution and reproducible bitwise from the seed.
//!
//! Stage I starts at `theta0 + 0.1` per coordinate, a fixed documented rule
//! recorded in every report.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Open01, StandardNormal, Uniform};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exec::*;
use crate::model::{by_name, Model};
use crate::nls::{FitOptions, IndividualData};
use crate::recycle::{recycle_bootstrap, RecycleConfig};
use crate::rng::{derive, domain, stream};
use crate::stats::{ks_distance, ks_two_sample, standard_normal_cdf};
use crate::sts::{fit_sts, HierDataset, InitialGuess, StsFit};

/// Fixed Stage I initialization offset added to theta0 in simulations.
pub const INIT_OFFSET: f64 = 0.1;

/// Normal quantile used by the asymptotic 95% interval, as printed in the
/// reference experiments.
pub const ASYMPTOTIC_Z: f64 = 1.96;

/// Truncation point (in standard deviations) of the truncated normal kind.
pub const TRUNCATION: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    TruncatedNormal,
    Normal,
    Laplace,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::TruncatedNormal => "truncated_normal",
            NoiseKind::Normal => "normal",
            NoiseKind::Laplace => "laplace",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated_normal" => Ok(NoiseKind::TruncatedNormal),
            "normal" => Ok(NoiseKind::Normal),
            "laplace" => Ok(NoiseKind::Laplace),
            other => Err(Error::InvalidArgument(format!(
                "unknown noise kind `{other}` (expected truncated_normal, normal or laplace)"
            ))),
        }
    }
}

/// A mean-zero noise distribution with standard deviation `scale`.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
}

/// Standard deviation of the standard normal truncated to
/// [-TRUNCATION, TRUNCATION]; samples are rescaled by it so the
/// post-truncation variance hits the target exactly.
pub fn truncated_unit_sd() -> f64 {
    static SD: OnceLock<f64> = OnceLock::new();
    *SD.get_or_init(|| {
        let n = Normal::standard();
        let mass = 2.0 * n.cdf(TRUNCATION) - 1.0;
        (1.0 - 2.0 * TRUNCATION * n.pdf(TRUNCATION) / mass).sqrt()
    })
}

/// Draws `count` i.i.d. samples with mean 0 and variance `scale^2`.
pub fn sample_noise(spec: &NoiseSpec, count: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if spec.scale.is_nan() || spec.scale <= 0.0 || !spec.scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise scale must be positive and finite, got {}",
            spec.scale
        )));
    }
    let out = match spec.kind {
        NoiseKind::Normal => (0..count)
            .map(|_| spec.scale * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        NoiseKind::Laplace => {
            // Inverse CDF with scale parameter b = scale / sqrt(2), so the
            // variance 2 b^2 equals scale^2.
            let b = spec.scale / std::f64::consts::SQRT_2;
            (0..count)
                .map(|_| {
                    let u: f64 = rng.sample(Open01);
                    if u < 0.5 {
                        b * (2.0 * u).ln()
                    } else {
                        -b * (2.0 * (1.0 - u)).ln()
                    }
                })
                .collect()
        }
        NoiseKind::TruncatedNormal => {
            let factor = spec.scale / truncated_unit_sd();
            (0..count)
                .map(|_| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= TRUNCATION {
                        break factor * z;
                    }
                })
                .collect()
        }
    };
    Ok(out)
}

/// One simulation scenario.
#[derive(Debug, Clone)]
pub struct SimDesign {
    /// Registered model name.
    pub model: String,
    pub theta0: DVector<f64>,
    /// N, the number of individuals.
    pub n_individuals: usize,
    /// n, the common per-individual observation count.
    pub n_obs: usize,
    /// Observation-noise standard deviation.
    pub sigma: f64,
    /// Random-effect standard deviation.
    pub lambda: f64,
    pub error_kind: NoiseKind,
    pub effect_kind: NoiseKind,
    /// Design times are drawn uniformly from this interval per replicate.
    pub t_range: (f64, f64),
    /// Default replication count for experiments driven by this design.
    pub m_rep: usize,
    pub seed: u64,
}

impl SimDesign {
    /// Resolves the model and checks the design invariants.
    pub fn validate(&self) -> Result<&'static dyn Model> {
        let model = by_name(&self.model)?;
        let p = model.dim();
        if self.theta0.len() != p {
            return Err(Error::DimensionMismatch {
                context: "design theta0",
                expected: p,
                actual: self.theta0.len(),
            });
        }
        if self.n_individuals < 2 {
            return Err(Error::InvalidArgument(
                "design needs N >= 2 individuals".to_string(),
            ));
        }
        if self.n_obs <= p {
            return Err(Error::InvalidArgument(format!(
                "design needs n > p = {p}, got n = {}",
                self.n_obs
            )));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 || self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(
                "sigma and lambda must be nonnegative".to_string(),
            ));
        }
        if self.t_range.0.is_nan() || self.t_range.1.is_nan() || self.t_range.0 >= self.t_range.1 || self.t_range.0 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid time range [{}, {}]",
                self.t_range.0, self.t_range.1
            )));
        }
        if self.m_rep == 0 {
            return Err(Error::InvalidArgument("m_rep must be positive".to_string()));
        }
        Ok(model)
    }

    /// The same design with a different (N, n) cell.
    pub fn with_cell(&self, n_individuals: usize, n_obs: usize) -> SimDesign {
        SimDesign {
            n_individuals,
            n_obs,
            ..self.clone()
        }
    }

    /// The fixed Stage I starting point: theta0 + 0.1 per coordinate.
    pub fn init_guess(&self) -> DVector<f64> {
        self.theta0.map(|v| v + INIT_OFFSET)
    }

    fn error_noise(&self) -> NoiseSpec {
        NoiseSpec {
            kind: self.error_kind,
            scale: self.sigma,
        }
    }

    fn effect_noise(&self) -> NoiseSpec {
        NoiseSpec {
            kind: self.effect_kind,
            scale: self.lambda,
        }
    }
}

/// Per-individual truth retained for diagnostics.
#[derive(Debug, Clone)]
pub struct TruthRecord {
    pub theta_i: Vec<DVector<f64>>,
    pub b_i: Vec<DVector<f64>>,
}

/// Generates one dataset under the design. Zero sigma or lambda produce
/// exactly noise-free observations or effects.
pub fn gen_dataset(design: &SimDesign, rng: &mut impl Rng) -> Result<(HierDataset, TruthRecord)> {
    let model = design.validate()?;
    let p = model.dim();
    let time = Uniform::new(design.t_range.0, design.t_range.1)
        .map_err(|e| Error::InvalidArgument(format!("time range: {e}")))?;

    let mut individuals = Vec::with_capacity(design.n_individuals);
    let mut truth = TruthRecord {
        theta_i: Vec::with_capacity(design.n_individuals),
        b_i: Vec::with_capacity(design.n_individuals),
    };
    for i in 0..design.n_individuals {
        let id = format!("i{:05}", i + 1);
        let x: Vec<f64> = (0..design.n_obs).map(|_| rng.sample(time)).collect();
        let b = if design.lambda > 0.0 {
            DVector::from_vec(sample_noise(&design.effect_noise(), p, rng)?)
        } else {
            DVector::zeros(p)
        };
        let theta_i = &design.theta0 + &b;
        let eps = if design.sigma > 0.0 {
            sample_noise(&design.error_noise(), design.n_obs, rng)?
        } else {
            vec![0.0; design.n_obs]
        };
        let y: Vec<f64> = x
            .iter()
            .zip(&eps)
            .map(|(&t, &e)| model.eval(theta_i.as_slice(), t) + e)
            .collect();
        individuals.push(IndividualData::new(id, x, y)?);
        truth.theta_i.push(theta_i);
        truth.b_i.push(b);
    }
    Ok((HierDataset::new(individuals)?, truth))
}

/// One grid cell's summary.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub n_individuals: usize,
    pub n_obs: usize,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_ci_length: Option<f64>,
    /// Share of replicates dropped (fit or bootstrap failure).
    pub drop_rate: f64,
}

impl CellReport {
    /// Cells losing more than 20% of replicates are flagged.
    pub fn flagged(&self) -> bool {
        self.drop_rate > 0.2
    }
}

/// A full experiment report.
#[derive(Debug, Clone)]
pub struct SimReport {
    /// `mse`, `coverage_asymptotic` or `coverage_recycled`.
    pub mode: String,
    pub cells: Vec<CellReport>,
    pub m_rep: usize,
    pub seed: u64,
    pub model: String,
    pub sigma: f64,
    pub lambda: f64,
    pub error_kind: NoiseKind,
    pub effect_kind: NoiseKind,
    pub init_offset: f64,
    /// Hash of the canonical run description; identical inputs produce
    /// identical hashes and bitwise-identical reports.
    pub config_hash: u64,
}

fn config_hash(base: &SimDesign, grid: &[(usize, usize)], m_rep: usize, mode: &str) -> u64 {
    let mut desc = format!(
        "mode={mode};model={};theta0={:?};sigma={};lambda={};error={};effect={};t=[{},{}];m_rep={m_rep};seed={}",
        base.model,
        base.theta0.as_slice(),
        base.sigma,
        base.lambda,
        base.error_kind,
        base.effect_kind,
        base.t_range.0,
        base.t_range.1,
        base.seed,
    );
    for (n_ind, n_obs) in grid {
        desc.push_str(&format!(";cell={n_ind}x{n_obs}"));
    }
    crate::rng::id_key(&desc)
}

/// Confidence-interval mode for coverage experiments.
#[derive(Debug, Clone)]
pub enum CoverageMode {
    /// `theta_sts +- 1.96 lambda_hat / sqrt(N)` with the uncorrected
    /// `lambda_hat^2 = sum (theta_hat_i - theta_sts)^2 / (N - 1)`.
    Asymptotic,
    /// Bootstrap intervals from `recycle_bootstrap` under this
    /// configuration.
    Recycled(RecycleConfig),
}

impl CoverageMode {
    fn name(&self) -> String {
        match self {
            CoverageMode::Asymptotic => "coverage_asymptotic".to_string(),
            CoverageMode::Recycled(cfg) => format!(
                "coverage_recycled({},{},B={})",
                cfg.inner, cfg.outer, cfg.replicates
            ),
        }
    }
}

fn replicate_fit(
    design: &SimDesign,
    model: &'static dyn Model,
    cell: u64,
    rep: u64,
) -> Result<(HierDataset, StsFit)> {
    let mut rng = stream(design.seed, &[domain::DATASET, cell, rep]);
    let (ds, _) = gen_dataset(design, &mut rng)?;
    let inits = InitialGuess::Shared(design.init_guess());
    let fit = fit_sts(model, &ds, &inits, &FitOptions::default())?;
    Ok((ds, fit))
}

/// Monte Carlo mean of `|theta_sts - theta0|^2` per grid cell.
pub fn run_mse_experiment(
    grid: &[(usize, usize)],
    base: &SimDesign,
    m_rep: usize,
) -> Result<SimReport> {
    base.validate()?;
    if grid.is_empty() || m_rep == 0 {
        return Err(Error::InvalidArgument(
            "empty grid or zero replication count".to_string(),
        ));
    }
    let mut cells = Vec::with_capacity(grid.len());
    for (cell_idx, &(n_ind, n_obs)) in grid.iter().enumerate() {
        let design = base.with_cell(n_ind, n_obs);
        let model = design.validate()?;
        let outcomes: Vec<Option<f64>> = (0..m_rep as u64)
            .into_par_iter()
            .map(|rep| {
                let (_, fit) = replicate_fit(&design, model, cell_idx as u64, rep).ok()?;
                Some((&fit.theta_sts - &design.theta0).norm_squared())
            })
            .collect();
        let kept: Vec<f64> = outcomes.iter().filter_map(|o| *o).collect();
        let drop_rate = 1.0 - kept.len() as f64 / m_rep as f64;
        let mse = (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64);
        cells.push(CellReport {
            n_individuals: n_ind,
            n_obs,
            mse,
            coverage: None,
            mean_ci_length: None,
            drop_rate,
        });
    }
    Ok(SimReport {
        mode: "mse".to_string(),
        cells,
        m_rep,
        seed: base.seed,
        model: base.model.clone(),
        sigma: base.sigma,
        lambda: base.lambda,
        error_kind: base.error_kind,
        effect_kind: base.effect_kind,
        init_offset: INIT_OFFSET,
        config_hash: config_hash(base, grid, m_rep, "mse"),
    })
}

/// Coverage fraction and mean interval length per grid cell, for scalar
/// parameter designs (p = 1).
pub fn run_coverage_experiment(
    grid: &[(usize, usize)],
    base: &SimDesign,
    m_rep: usize,
    mode: &CoverageMode,
) -> Result<SimReport> {
    let model = base.validate()?;
    if model.dim() != 1 {
        return Err(Error::InvalidArgument(
            "coverage experiments use scalar-parameter designs (p = 1)".to_string(),
        ));
    }
    if grid.is_empty() || m_rep == 0 {
        return Err(Error::InvalidArgument(
            "empty grid or zero replication count".to_string(),
        ));
    }
    if let CoverageMode::Recycled(cfg) = mode {
        cfg.validate()?;
    }
    let theta0 = base.theta0[0];

    let mut cells = Vec::with_capacity(grid.len());
    for (cell_idx, &(n_ind, n_obs)) in grid.iter().enumerate() {
        let design = base.with_cell(n_ind, n_obs);
        let model = design.validate()?;
        let outcomes: Vec<Option<(bool, f64)>> = (0..m_rep as u64)
            .into_par_iter()
            .map(|rep| {
                let (ds, fit) = replicate_fit(&design, model, cell_idx as u64, rep).ok()?;
                match mode {
                    CoverageMode::Asymptotic => {
                        let lambda_hat = fit.lambda_hat_sq_uncorrected?.max(0.0).sqrt();
                        let half =
                            ASYMPTOTIC_Z * lambda_hat / (fit.n_converged() as f64).sqrt();
                        let covered = (fit.theta_sts[0] - theta0).abs() <= half;
                        Some((covered, 2.0 * half))
                    }
                    CoverageMode::Recycled(cfg) => {
                        let boot_seed =
                            derive(design.seed, &[domain::BOOTSTRAP, cell_idx as u64, rep]);
                        let run = recycle_bootstrap(model, &ds, &fit, cfg, boot_seed).ok()?;
                        let (lo, hi) = run.intervals[0];
                        Some((lo <= theta0 && theta0 <= hi, hi - lo))
                    }
                }
            })
            .collect();
        let kept: Vec<(bool, f64)> = outcomes.iter().filter_map(|o| *o).collect();
        let drop_rate = 1.0 - kept.len() as f64 / m_rep as f64;
        let coverage = (!kept.is_empty())
            .then(|| kept.iter().filter(|(c, _)| *c).count() as f64 / kept.len() as f64);
        let mean_len = (!kept.is_empty())
            .then(|| kept.iter().map(|(_, l)| *l).sum::<f64>() / kept.len() as f64);
        cells.push(CellReport {
            n_individuals: n_ind,
            n_obs,
            mse: None,
            coverage,
            mean_ci_length: mean_len,
            drop_rate,
        });
    }
    Ok(SimReport {
        mode: mode.name(),
        cells,
        m_rep,
        seed: base.seed,
        model: base.model.clone(),
        sigma: base.sigma,
        lambda: base.lambda,
        error_kind: base.error_kind,
        effect_kind: base.effect_kind,
        init_offset: INIT_OFFSET,
        config_hash: config_hash(base, grid, m_rep, &mode.name()),
    })
}

/// Distribution diagnostics for the central limit behaviour of the
/// estimator and its recycled version.
#[derive(Debug, Clone)]
pub struct CltDiagnostics {
    /// KS distance of `sqrt(N) (theta_sts - theta0) / lambda` from the
    /// standard normal, over `r` simulation replicates.
    pub ks_rn: f64,
    /// KS distance of the studentized recycled pivots (true lambda) from
    /// the standard normal, over `r` bootstrap replicates of one dataset.
    pub ks_rstar: f64,
    /// Two-sample KS distance between the two pivot samples.
    pub ks_two_sample: f64,
}

/// Runs the CLT diagnostics at the design's (N, n) with `r` replicates on
/// each side. The bootstrap side uses Dirichlet weights at both stages.
pub fn diagnose_clt(design: &SimDesign, r: usize) -> Result<CltDiagnostics> {
    let model = design.validate()?;
    if model.dim() != 1 {
        return Err(Error::InvalidArgument(
            "CLT diagnostics use scalar-parameter designs (p = 1)".to_string(),
        ));
    }
    if design.lambda.is_nan() || design.lambda <= 0.0 {
        return Err(Error::InvalidArgument(
            "CLT diagnostics need lambda > 0 (the pivot divides by lambda)".to_string(),
        ));
    }
    if r < 100 {
        return Err(Error::InvalidArgument(
            "CLT diagnostics need at least 100 replicates".to_string(),
        ));
    }
    let theta0 = design.theta0[0];

    let rn: Vec<f64> = (0..r as u64)
        .into_par_iter()
        .map(|rep| {
            let (_, fit) = replicate_fit(design, model, u64::MAX, rep).ok()?;
            Some((fit.n_converged() as f64).sqrt() * (fit.theta_sts[0] - theta0) / design.lambda)
        })
        .collect::<Vec<Option<f64>>>()
        .into_iter()
        .flatten()
        .collect();
    if rn.len() < r / 2 {
        return Err(Error::EstimationFailure(
            "more than half of the CLT replicates failed".to_string(),
        ));
    }
    let ks_rn = ks_distance(&rn, standard_normal_cdf);

    // Recycled pivots from the first replicate's dataset.
    let (ds0, fit0) = replicate_fit(design, model, u64::MAX, 0)
        .map_err(|e| Error::EstimationFailure(format!("reference dataset fit failed: {e}")))?;
    let cfg = RecycleConfig {
        replicates: r,
        ..RecycleConfig::default()
    };
    let boot_seed = derive(design.seed, &[domain::CLT, 0]);
    let run = recycle_bootstrap(model, &ds0, &fit0, &cfg, boot_seed)?;
    let scale = (run.n_individuals as f64).sqrt() / (design.lambda * run.tau_n);
    let rstar: Vec<f64> = run
        .replicates
        .iter()
        .map(|(_, rep)| scale * (rep.theta_star[0] - run.theta_sts[0]))
        .collect();
    let ks_rstar = ks_distance(&rstar, standard_normal_cdf);
    let ks_two = ks_two_sample(&rn, &rstar);

    Ok(CltDiagnostics {
        ks_rn,
        ks_rstar,
        ks_two_sample: ks_two,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design_p1() -> SimDesign {
        SimDesign {
            model: "singleexp1".to_string(),
            theta0: DVector::from_element(1, 0.8),
            n_individuals: 10,
            n_obs: 12,
            sigma: 0.1,
            lambda: 0.1,
            error_kind: NoiseKind::TruncatedNormal,
            effect_kind: NoiseKind::TruncatedNormal,
            t_range: (0.0, 8.0),
            m_rep: 10,
            seed: 7,
        }
    }

    #[test]
    fn noise_moments() {
        let mut rng = stream(1, &[domain::WEIGHT_CHECK, 40]);
        let n = 1_000_000;
        for (kind, scale, var_tol) in [
            (NoiseKind::Laplace, 1.0, 0.01),
            (NoiseKind::Normal, 0.5, 0.002),
            (NoiseKind::TruncatedNormal, 0.3, 0.002),
        ] {
            let spec = NoiseSpec { kind, scale };
            let xs = sample_noise(&spec, n, &mut rng).unwrap();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 * scale / (n as f64).sqrt() * 3.0, "{kind} mean {mean}");
            assert!(
                (var - scale * scale).abs() < var_tol,
                "{kind} var {var} target {}",
                scale * scale
            );
        }
    }

    #[test]
    fn truncated_support_bound() {
        let mut rng = stream(2, &[domain::WEIGHT_CHECK, 41]);
        let scale = 0.7;
        let spec = NoiseSpec {
            kind: NoiseKind::TruncatedNormal,
            scale,
        };
        let bound = TRUNCATION * scale / truncated_unit_sd();
        let xs = sample_noise(&spec, 200_000, &mut rng).unwrap();
        assert!(xs.iter().all(|x| x.abs() <= bound));
        // The bound is tight: some samples land beyond the naive 4*scale.
        assert!(xs.iter().any(|x| x.abs() > 0.99 * bound * 0.9));
    }

    #[test]
    fn truncated_unit_sd_value() {
        // 1 - 8 phi(4) / (2 Phi(4) - 1), computed independently:
        // phi(4) = exp(-8)/sqrt(2 pi) = 1.3383022576488537e-4
        // 2 Phi(4) - 1 = 0.9999366575163338
        let expected = (1.0 - 8.0 * 1.3383022576488537e-4 / 0.9999366575163338f64).sqrt();
        assert_relative_eq!(truncated_unit_sd(), expected, epsilon = 1e-12);
    }

    #[test]
    fn invalid_scale_rejected() {
        let mut rng = stream(3, &[domain::WEIGHT_CHECK, 42]);
        for scale in [0.0, -1.0, f64::NAN] {
            let spec = NoiseSpec {
                kind: NoiseKind::Normal,
                scale,
            };
            assert!(sample_noise(&spec, 10, &mut rng).is_err());
        }
    }

    #[test]
    fn zero_lambda_gives_exact_theta0() {
        let mut d = design_p1();
        d.lambda = 0.0;
        let mut rng = stream(d.seed, &[domain::DATASET, 0, 0]);
        let (_, truth) = gen_dataset(&d, &mut rng).unwrap();
        for th in &truth.theta_i {
            assert_eq!(th[0], 0.8);
        }
    }

    #[test]
    fn zero_sigma_fits_recover_theta_i() {
        let mut d = design_p1();
        d.sigma = 0.0;
        let model = by_name(&d.model).unwrap();
        let mut rng = stream(d.seed, &[domain::DATASET, 0, 1]);
        let (ds, truth) = gen_dataset(&d, &mut rng).unwrap();
        let fit = fit_sts(
            model,
            &ds,
            &InitialGuess::Shared(d.init_guess()),
            &FitOptions::default(),
        )
        .unwrap();
        for (i, th) in truth.theta_i.iter().enumerate() {
            let est = fit.theta_hat(i).unwrap();
            assert_relative_eq!(est[0], th[0], epsilon = 1e-8);
        }
    }

    #[test]
    fn fixed_seed_reproduces_dataset() {
        let d = design_p1();
        let mut r1 = stream(d.seed, &[domain::DATASET, 0, 2]);
        let mut r2 = stream(d.seed, &[domain::DATASET, 0, 2]);
        let (a, _) = gen_dataset(&d, &mut r1).unwrap();
        let (b, _) = gen_dataset(&d, &mut r2).unwrap();
        for (da, db) in a.individuals.iter().zip(&b.individuals) {
            assert_eq!(da.id, db.id);
            assert_eq!(da.x, db.x);
            assert_eq!(da.y, db.y);
        }
    }

    #[test]
    fn mse_experiment_shape_and_determinism() {
        let d = design_p1();
        let grid = [(5usize, 8usize), (8, 10)];
        let a = run_mse_experiment(&grid, &d, 6).unwrap();
        let b = run_mse_experiment(&grid, &d, 6).unwrap();
        assert_eq!(a.cells.len(), 2);
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.mse.unwrap().to_bits(), cb.mse.unwrap().to_bits());
            assert!(ca.mse.unwrap() >= 0.0);
            assert!(ca.coverage.is_none());
        }
        assert_eq!(a.config_hash, b.config_hash);
    }

    #[test]
    fn coverage_requires_p1() {
        let d = SimDesign {
            model: "biexp4".to_string(),
            theta0: DVector::from_column_slice(&[1.0, 0.8, -0.5, -1.0]),
            ..design_p1()
        };
        let err = run_coverage_experiment(&[(5, 8)], &d, 4, &CoverageMode::Asymptotic).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn asymptotic_coverage_basic_run() {
        let d = design_p1();
        let report =
            run_coverage_experiment(&[(8, 10)], &d, 12, &CoverageMode::Asymptotic).unwrap();
        let cell = &report.cells[0];
        let cov = cell.coverage.unwrap();
        assert!((0.0..=1.0).contains(&cov));
        assert!(cell.mean_ci_length.unwrap() > 0.0);
        assert!(cell.mse.is_none());
    }

    #[test]
    fn diagnose_clt_rejects_zero_lambda() {
        let mut d = design_p1();
        d.lambda = 0.0;
        assert!(matches!(
            diagnose_clt(&d, 200),
            Err(Error::InvalidArgument(_))
        ));
    }
}
