//! Random-weight schemes for the recycled bootstrap.
//!
//! All schemes produce exchangeable nonnegative weights with unit mean,
//! finite coordinate variance `tau_sq` and vanishing cross-correlations,
//! which is what the resampling theory requires of them. Three canonical
//! members are shipped:
//!
//! - `multinomial`: counts of n draws over n equiprobable cells (the
//!   classical resampling bootstrap); sums to n exactly.
//! - `dirichlet`: n times a flat Dirichlet vector (the Bayesian bootstrap);
//!   sums to n exactly.
//! - `exponential`: i.i.d. unit-mean exponentials; the sum is free.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Multinomial,
    Dirichlet,
    Exponential,
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            WeightScheme::Multinomial => "multinomial",
            WeightScheme::Dirichlet => "dirichlet",
            WeightScheme::Exponential => "exponential",
        }
    }

    pub const ALL: [WeightScheme; 3] = [
        WeightScheme::Multinomial,
        WeightScheme::Dirichlet,
        WeightScheme::Exponential,
    ];
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(WeightScheme::Multinomial),
            "dirichlet" => Ok(WeightScheme::Dirichlet),
            "exponential" => Ok(WeightScheme::Exponential),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// Draws one weight vector of length `n`.
pub fn draw_weights(scheme: WeightScheme, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "weight vector length must be positive".to_string(),
        ));
    }
    let w = match scheme {
        WeightScheme::Multinomial => {
            let mut counts = vec![0.0f64; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1.0;
            }
            counts
        }
        WeightScheme::Dirichlet => {
            let mut e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = e.iter().sum();
            let scale = n as f64 / total;
            for v in &mut e {
                *v *= scale;
            }
            e
        }
        WeightScheme::Exponential => (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect(),
    };
    Ok(w)
}

/// Exact coordinate variance of the scheme at size `n`:
/// multinomial `(n-1)/n`, dirichlet `(n-1)/(n+1)`, exponential `1`.
pub fn tau_sq(scheme: WeightScheme, n: usize) -> f64 {
    let nf = n as f64;
    match scheme {
        WeightScheme::Multinomial => (nf - 1.0) / nf,
        WeightScheme::Dirichlet => (nf - 1.0) / (nf + 1.0),
        WeightScheme::Exponential => 1.0,
    }
}

/// Exact cross-correlation target `E(W_i W_j)` of the standardized weights.
/// Sum-constrained schemes share `-1/(n-1)`; i.i.d. exponentials are
/// uncorrelated.
pub fn cross_moment_target(scheme: WeightScheme, n: usize) -> f64 {
    match scheme {
        WeightScheme::Multinomial | WeightScheme::Dirichlet => -1.0 / (n as f64 - 1.0),
        WeightScheme::Exponential => 0.0,
    }
}

/// One empirical moment condition with its pass/fail flag.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub name: &'static str,
    pub empirical: f64,
    /// Target value; `None` means the condition only requires finiteness.
    pub target: Option<f64>,
    /// Acceptance half-width (3 Monte Carlo standard errors, plus the
    /// documented small-n allowance where noted).
    pub tolerance: f64,
    pub pass: bool,
}

/// Diagnostic report for the moment conditions the resampling theory
/// places on a weight scheme.
#[derive(Debug, Clone)]
pub struct AssumptionWReport {
    pub scheme_name: String,
    pub n: usize,
    pub draws: usize,
    pub checks: Vec<MomentCheck>,
}

impl AssumptionWReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for AssumptionWReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "weight scheme `{}` at n = {}, {} draws",
            self.scheme_name, self.n, self.draws
        )?;
        writeln!(
            f,
            "{:<14} {:>14} {:>14} {:>12}  flag",
            "moment", "empirical", "target", "tolerance"
        )?;
        for c in &self.checks {
            let target = match c.target {
                Some(t) => format!("{t:.6}"),
                None => "finite".to_string(),
            };
            writeln!(
                f,
                "{:<14} {:>14.6} {:>14} {:>12.2e}  {}",
                c.name,
                c.empirical,
                target,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Empirically checks the moment conditions for a shipped scheme.
///
/// Requires at least 10^4 draws so the 3-standard-error tolerances are
/// meaningful.
pub fn check_assumption_w(
    scheme: WeightScheme,
    n: usize,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<AssumptionWReport> {
    check_moments(
        scheme.name(),
        n,
        draws,
        tau_sq(scheme, n),
        cross_moment_target(scheme, n),
        |n, rng| draw_weights(scheme, n, rng),
        rng,
    )
}

/// Generic moment checker; exposed so tests can aim it at a deliberately
/// broken generator.
pub fn check_moments<R: Rng, G: FnMut(usize, &mut R) -> Result<Vec<f64>>>(
    scheme_name: &str,
    n: usize,
    draws: usize,
    tau_sq_target: f64,
    cross_target: f64,
    mut gen: G,
    rng: &mut R,
) -> Result<AssumptionWReport> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "moment diagnostics need n >= 2".to_string(),
        ));
    }
    if draws < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "moment diagnostics need at least 10^4 draws, got {draws}"
        )));
    }
    let tau = tau_sq_target.sqrt();
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);

    // Per-draw statistics; their across-draw spread yields the Monte Carlo
    // standard errors.
    let mut acc = [Accumulator::default(); 5];
    for _ in 0..draws {
        let w = gen(n, rng)?;
        let mut sum_w = 0.0;
        let mut sum_dev2 = 0.0;
        let mut sum_std = 0.0;
        let mut sum_std2 = 0.0;
        let mut sum_std4 = 0.0;
        for &wi in &w {
            let dev = wi - 1.0;
            sum_w += wi;
            sum_dev2 += dev * dev;
            let s = dev / tau;
            sum_std += s;
            sum_std2 += s * s;
            sum_std4 += s * s * s * s;
        }
        acc[0].push(sum_w / nf);
        acc[1].push(sum_dev2 / nf);
        acc[2].push((sum_std * sum_std - sum_std2) / pairs);
        acc[3].push((sum_std2 * sum_std2 - sum_std4) / pairs);
        acc[4].push(sum_std4 / nf);
    }

    let three_se = |a: &Accumulator| 3.0 * a.std_error();
    let small_n_allowance = 15.0 / nf;

    let mean_tol = three_se(&acc[0]);
    let var_tol = three_se(&acc[1]);
    let cross_tol = three_se(&acc[2]);
    let second_cross_tol = three_se(&acc[3]) + small_n_allowance;
    let checks = vec![
        MomentCheck {
            name: "mean",
            empirical: acc[0].mean(),
            target: Some(1.0),
            tolerance: mean_tol,
            pass: (acc[0].mean() - 1.0).abs() <= mean_tol,
        },
        MomentCheck {
            name: "variance",
            empirical: acc[1].mean(),
            target: Some(tau_sq_target),
            tolerance: var_tol,
            pass: (acc[1].mean() - tau_sq_target).abs() <= var_tol,
        },
        MomentCheck {
            name: "E(WiWj)",
            empirical: acc[2].mean(),
            target: Some(cross_target),
            tolerance: cross_tol,
            pass: (acc[2].mean() - cross_target).abs() <= cross_tol,
        },
        MomentCheck {
            name: "E(Wi2Wj2)",
            empirical: acc[3].mean(),
            target: Some(1.0),
            tolerance: second_cross_tol,
            pass: (acc[3].mean() - 1.0).abs() <= second_cross_tol,
        },
        MomentCheck {
            name: "E(Wi4)",
            empirical: acc[4].mean(),
            target: None,
            tolerance: f64::INFINITY,
            pass: acc[4].mean().is_finite(),
        },
    ];
    Ok(AssumptionWReport {
        scheme_name: scheme_name.to_string(),
        n,
        draws,
        checks,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    count: f64,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.count
    }

    fn std_error(&self) -> f64 {
        let var = (self.sum_sq / self.count - self.mean() * self.mean()).max(0.0);
        (var / self.count).sqrt()
    }
}
