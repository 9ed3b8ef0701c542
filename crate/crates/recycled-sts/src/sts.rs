//! The standard two-stage estimator.
//!
//! Stage I fits each individual by (unweighted) nonlinear least squares and
//! pools the residual sums into the within-individual variance estimate
//! `sigma_sq_m = sum_i Q_i(theta_hat_i) / (M - pN)`. Stage II averages the
//! per-individual estimates into the population estimate, accumulates the
//! between-individual scatter matrix `S2` (a plain sum of outer products,
//! consumed in that unnormalized form by the pencil correction), and shrinks
//! it into the between-individual covariance estimate
//! `D_hat = S2 - min(nu_hat, sigma_sq_m) * Sigma_N_hat`, where `nu_hat` is
//! the smallest generalized eigenvalue of the pencil `(S2, Sigma_N_hat)`.
//!
//! Individuals whose Stage I fit fails to converge are excluded from every
//! Stage II quantity, with N and M reduced accordingly and the drop count
//! reported. All cross-individual reductions run in a canonical id-sorted
//! order, so results are invariant to storage order of the individuals.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::*;
use crate::model::Model;
use crate::nls::{fit_wls, FitOptions, FitResult, IndividualData};

/// A sample of N individuals with repeated observations.
#[derive(Debug, Clone)]
pub struct HierDataset {
    pub individuals: Vec<IndividualData>,
}

impl HierDataset {
    pub fn new(individuals: Vec<IndividualData>) -> Result<Self> {
        if individuals.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 individuals, got {}",
                individuals.len()
            )));
        }
        let mut ids: Vec<&str> = individuals.iter().map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "individual ids must be unique".to_string(),
            ));
        }
        Ok(Self { individuals })
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    /// Total observation count M.
    pub fn total_observations(&self) -> usize {
        self.individuals.iter().map(|d| d.len()).sum()
    }

    /// Indices of individuals in id-sorted order; reductions iterate in this
    /// order so that results do not depend on storage order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.individuals.len()).collect();
        idx.sort_by(|&a, &b| self.individuals[a].id.cmp(&self.individuals[b].id));
        idx
    }
}

/// Starting values for Stage I.
#[derive(Debug, Clone)]
pub enum InitialGuess {
    /// One start broadcast to every individual.
    Shared(DVector<f64>),
    /// One start per individual, in dataset order.
    PerIndividual(Vec<DVector<f64>>),
}

impl InitialGuess {
    fn validate(&self, n_individuals: usize, p: usize) -> Result<()> {
        match self {
            InitialGuess::Shared(v) => {
                if v.len() != p {
                    return Err(Error::DimensionMismatch {
                        context: "shared initial guess",
                        expected: p,
                        actual: v.len(),
                    });
                }
            }
            InitialGuess::PerIndividual(vs) => {
                if vs.len() != n_individuals {
                    return Err(Error::DimensionMismatch {
                        context: "per-individual initial guesses",
                        expected: n_individuals,
                        actual: vs.len(),
                    });
                }
                for v in vs {
                    if v.len() != p {
                        return Err(Error::DimensionMismatch {
                            context: "initial guess",
                            expected: p,
                            actual: v.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn get(&self, i: usize) -> &DVector<f64> {
        match self {
            InitialGuess::Shared(v) => v,
            InitialGuess::PerIndividual(vs) => &vs[i],
        }
    }
}

/// Stage I output: per-individual fits and the pooled variance estimate.
#[derive(Debug, Clone)]
pub struct StageOne {
    /// One entry per individual in dataset order; `None` records a hard
    /// solver error (treated like non-convergence by the drop policy).
    pub fits: Vec<Option<FitResult>>,
    /// Converged individuals in canonical id-sorted order.
    pub converged_idx: Vec<usize>,
    /// Pooled within-individual variance over converged individuals.
    pub sigma_sq_m: f64,
    pub dropped: usize,
}

/// Per-individual NLS fits plus the pooled within-individual variance.
pub fn stage_one(
    model: &dyn Model,
    dataset: &HierDataset,
    inits: &InitialGuess,
    opts: &FitOptions,
) -> Result<StageOne> {
    let p = model.dim();
    let n_ind = dataset.n_individuals();
    inits.validate(n_ind, p)?;
    for d in &dataset.individuals {
        if d.len() <= p {
            return Err(Error::InvalidArgument(format!(
                "individual `{}` has n = {} observations; Stage I needs n > p = {p}",
                d.id,
                d.len()
            )));
        }
    }
    if dataset.total_observations() <= p * n_ind {
        return Err(Error::InvalidArgument(
            "total observations must exceed p * N".to_string(),
        ));
    }

    let fits: Vec<Option<FitResult>> = (0..n_ind)
        .into_par_iter()
        .map(|i| {
            let data = &dataset.individuals[i];
            let weights = vec![1.0; data.len()];
            fit_wls(model, data, &weights, inits.get(i).as_slice(), opts).ok()
        })
        .collect();

    let mut converged_idx: Vec<usize> = dataset
        .canonical_order()
        .into_iter()
        .filter(|&i| matches!(&fits[i], Some(f) if f.converged))
        .collect();
    converged_idx.shrink_to_fit();
    let n_conv = converged_idx.len();
    if n_conv < 2 {
        return Err(Error::EstimationFailure(format!(
            "only {n_conv} of {n_ind} individuals converged"
        )));
    }

    let m_conv: usize = converged_idx
        .iter()
        .map(|&i| dataset.individuals[i].len())
        .sum();
    let denom = (m_conv - p * n_conv) as f64;
    let q_total: f64 = converged_idx
        .iter()
        .map(|&i| fits[i].as_ref().expect("converged").q_min)
        .sum();
    let sigma_sq_m = q_total / denom;

    Ok(StageOne {
        dropped: n_ind - n_conv,
        fits,
        converged_idx,
        sigma_sq_m,
    })
}

/// Stage II aggregates.
#[derive(Debug, Clone)]
pub struct StageTwo {
    pub theta_sts: DVector<f64>,
    /// Between-individual scatter, the unnormalized sum of outer products.
    pub s2: DMatrix<f64>,
    /// `S2 / N`, the variance estimate for `theta_sts`.
    pub var_theta_sts: DMatrix<f64>,
    /// `sum (theta_hat_i - theta_sts)^2 / (N - 1)`; populated when p = 1.
    pub lambda_hat_sq_uncorrected: Option<f64>,
}

/// Population mean and scatter of the converged Stage I estimates.
pub fn stage_two(stage: &StageOne, p: usize) -> Result<StageTwo> {
    let n_conv = stage.converged_idx.len();
    if n_conv < 2 {
        return Err(Error::EstimationFailure(
            "stage two needs at least 2 converged individuals".to_string(),
        ));
    }
    let nf = n_conv as f64;

    let mut theta_sts = DVector::zeros(p);
    for &i in &stage.converged_idx {
        theta_sts += &stage.fits[i].as_ref().expect("converged").theta;
    }
    theta_sts /= nf;

    let mut s2 = DMatrix::zeros(p, p);
    for &i in &stage.converged_idx {
        let dev = &stage.fits[i].as_ref().expect("converged").theta - &theta_sts;
        s2 += &dev * dev.transpose();
    }

    let var_theta_sts = &s2 / nf;
    let lambda_hat_sq_uncorrected = (p == 1).then(|| s2[(0, 0)] / (nf - 1.0));

    Ok(StageTwo {
        theta_sts,
        s2,
        var_theta_sts,
        lambda_hat_sq_uncorrected,
    })
}

/// Per-individual information matrix
/// `Sigma_n(theta) = [ (1/n) sum_j grad f_j grad f_j^t ]^{-1}`.
pub fn sigma_matrix(model: &dyn Model, theta: &[f64], xs: &[f64]) -> Result<DMatrix<f64>> {
    let p = model.dim();
    if theta.len() != p {
        return Err(Error::DimensionMismatch {
            context: "sigma_matrix parameter vector",
            expected: p,
            actual: theta.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::InvalidArgument(
            "sigma_matrix needs at least one design point".to_string(),
        ));
    }
    let mut info = DMatrix::zeros(p, p);
    let mut grad = vec![0.0; p];
    for &x in xs {
        model.jacobian(theta, x, &mut grad);
        for a in 0..p {
            for b in 0..p {
                info[(a, b)] += grad[a] * grad[b];
            }
        }
    }
    info /= xs.len() as f64;
    let chol = Cholesky::new(info).ok_or_else(|| {
        Error::SingularDesign("average gradient outer product is not positive definite".to_string())
    })?;
    Ok(chol.inverse())
}

/// The pencil correction: `nu_hat` is the smallest generalized eigenvalue of
/// `(s2, sigma_n_hat)` and `d_hat = s2 - min(nu_hat, sigma_sq_m) * sigma_n_hat`.
///
/// The pencil is reduced by the Cholesky factor of `sigma_n_hat`
/// (`L^{-1} s2 L^{-t}`), whose ordinary eigenvalues are the generalized ones.
pub fn estimate_d(
    s2: &DMatrix<f64>,
    sigma_n_hat: &DMatrix<f64>,
    sigma_sq_m: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let p = s2.nrows();
    if s2.ncols() != p || sigma_n_hat.nrows() != p || sigma_n_hat.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "pencil matrices",
            expected: p,
            actual: sigma_n_hat.nrows(),
        });
    }
    let chol = Cholesky::new(sigma_n_hat.clone()).ok_or_else(|| {
        Error::SingularDesign("Sigma_N_hat is not positive definite".to_string())
    })?;
    let l = chol.l();
    let half = l
        .solve_lower_triangular(s2)
        .ok_or_else(|| Error::SingularDesign("Cholesky factor not invertible".to_string()))?;
    let reduced = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::SingularDesign("Cholesky factor not invertible".to_string()))?;
    let symmetric = (&reduced + reduced.transpose()) * 0.5;
    let eigen = symmetric.symmetric_eigen();
    let nu_hat = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);

    let d_hat = s2 - sigma_n_hat * nu_hat.min(sigma_sq_m);
    let d_hat = (&d_hat + d_hat.transpose()) * 0.5;
    Ok((nu_hat, d_hat))
}

/// The full two-stage fit.
#[derive(Debug, Clone)]
pub struct StsFit {
    /// Stage I results in dataset order; `None` records a hard solver error.
    pub fits: Vec<Option<FitResult>>,
    /// Converged individuals in canonical id-sorted order.
    pub converged_idx: Vec<usize>,
    pub theta_sts: DVector<f64>,
    pub sigma_sq_m: f64,
    /// Unnormalized between-individual scatter (sum of outer products).
    pub s2: DMatrix<f64>,
    /// Average of per-individual `Sigma_n(theta_hat_i)` over converged
    /// individuals, each at its own design points.
    pub sigma_n_hat: DMatrix<f64>,
    pub nu_hat: f64,
    pub d_hat: DMatrix<f64>,
    pub var_theta_sts: DMatrix<f64>,
    pub lambda_hat_sq_uncorrected: Option<f64>,
    pub dropped: usize,
    /// Solver options used for Stage I; bootstrap refits reuse them.
    pub options: FitOptions,
}

impl StsFit {
    pub fn n_converged(&self) -> usize {
        self.converged_idx.len()
    }

    pub fn theta_hat(&self, i: usize) -> Option<&DVector<f64>> {
        self.fits[i].as_ref().map(|f| &f.theta)
    }
}

/// Runs Stage I, Stage II and the pencil correction.
pub fn fit_sts(
    model: &dyn Model,
    dataset: &HierDataset,
    inits: &InitialGuess,
    opts: &FitOptions,
) -> Result<StsFit> {
    let p = model.dim();
    let stage1 = stage_one(model, dataset, inits, opts)?;
    let stage2 = stage_two(&stage1, p)?;

    let mut sigma_n_hat = DMatrix::zeros(p, p);
    for &i in &stage1.converged_idx {
        let theta = &stage1.fits[i].as_ref().expect("converged").theta;
        sigma_n_hat += sigma_matrix(model, theta.as_slice(), &dataset.individuals[i].x)?;
    }
    sigma_n_hat /= stage1.converged_idx.len() as f64;

    let (nu_hat, d_hat) = estimate_d(&stage2.s2, &sigma_n_hat, stage1.sigma_sq_m)?;

    Ok(StsFit {
        fits: stage1.fits,
        converged_idx: stage1.converged_idx,
        theta_sts: stage2.theta_sts,
        sigma_sq_m: stage1.sigma_sq_m,
        s2: stage2.s2,
        sigma_n_hat,
        nu_hat,
        d_hat,
        var_theta_sts: stage2.var_theta_sts,
        lambda_hat_sq_uncorrected: stage2.lambda_hat_sq_uncorrected,
        dropped: stage1.dropped,
        options: opts.clone(),
    })
}
