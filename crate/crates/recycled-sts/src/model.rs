//! Nonlinear mean functions f(t; theta) with analytic Jacobians.
//!
//! The predictor is scalar time `t >= 0`; every experiment in this crate
//! uses time as the lone covariate. Analytic Jacobians are mandatory for
//! shipped models (finite differences exist only as a test oracle), since a
//! single bootstrap study performs on the order of 10^5 refits.

use crate::error::{Error, Result};

/// A nonlinear regression mean function with analytic parameter gradient.
///
/// Implementations are immutable and freely shared across fit workers.
pub trait Model: Sync + Send {
    /// Name used in config files and CLI flags.
    fn name(&self) -> &'static str;

    /// Parameter dimension p.
    fn dim(&self) -> usize;

    /// f(t; theta). `theta` must have length `dim()`.
    fn eval(&self, theta: &[f64], t: f64) -> f64;

    /// Gradient of f in theta, written into `grad` (length `dim()`).
    fn jacobian(&self, theta: &[f64], t: f64, grad: &mut [f64]);

    /// Per-parameter safeguard box for the optimizer, if any.
    fn bounds(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

/// Two-compartment biexponential decay in log-parameters:
///
/// `f(t; theta) = exp(theta1) exp(-exp(theta2) t) + exp(theta3) exp(-exp(theta4) t)`
///
/// The log re-parameterization keeps the kinetic rate constants positive for
/// any real theta. Parameters are boxed to [-10, 10] per coordinate as an
/// overflow guard on exp.
#[derive(Debug, Clone, Copy)]
pub struct Biexponential4;

const BIEXP4_LO: [f64; 4] = [-10.0; 4];
const BIEXP4_HI: [f64; 4] = [10.0; 4];

impl Model for Biexponential4 {
    fn name(&self) -> &'static str {
        "biexp4"
    }

    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, theta: &[f64], t: f64) -> f64 {
        let a = theta[0].exp();
        let k1 = theta[1].exp();
        let b = theta[2].exp();
        let k2 = theta[3].exp();
        a * (-k1 * t).exp() + b * (-k2 * t).exp()
    }

    fn jacobian(&self, theta: &[f64], t: f64, grad: &mut [f64]) {
        let k1 = theta[1].exp();
        let k2 = theta[3].exp();
        let term1 = theta[0].exp() * (-k1 * t).exp();
        let term2 = theta[2].exp() * (-k2 * t).exp();
        grad[0] = term1;
        grad[1] = -t * k1 * term1;
        grad[2] = term2;
        grad[3] = -t * k2 * term2;
    }

    fn bounds(&self) -> Option<(&[f64], &[f64])> {
        Some((&BIEXP4_LO, &BIEXP4_HI))
    }
}

/// The biexponential model with theta1, theta3, theta4 frozen at the
/// simulation truth (1, -0.5, -1) and only theta2 free, so p = 1.
///
/// Evaluation delegates to [`Biexponential4`] on the embedded parameter
/// vector, so the two models agree bitwise where they overlap.
#[derive(Debug, Clone, Copy)]
pub struct SingleExp1;

const SINGLEEXP1_LO: [f64; 1] = [-10.0];
const SINGLEEXP1_HI: [f64; 1] = [10.0];

impl SingleExp1 {
    fn embed(theta2: f64) -> [f64; 4] {
        [1.0, theta2, -0.5, -1.0]
    }
}

impl Model for SingleExp1 {
    fn name(&self) -> &'static str {
        "singleexp1"
    }

    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, theta: &[f64], t: f64) -> f64 {
        Biexponential4.eval(&Self::embed(theta[0]), t)
    }

    fn jacobian(&self, theta: &[f64], t: f64, grad: &mut [f64]) {
        let mut full = [0.0; 4];
        Biexponential4.jacobian(&Self::embed(theta[0]), t, &mut full);
        grad[0] = full[1];
    }

    fn bounds(&self) -> Option<(&[f64], &[f64])> {
        Some((&SINGLEEXP1_LO, &SINGLEEXP1_HI))
    }
}

/// Straight line through the origin, `f(t; theta) = theta * t`.
///
/// The weighted least-squares solution has the closed form
/// `theta_hat = sum(w t y) / sum(w t^2)`, which makes this model the
/// calibration reference for solver fixtures.
#[derive(Debug, Clone, Copy)]
pub struct Linear1;

impl Model for Linear1 {
    fn name(&self) -> &'static str {
        "linear1"
    }

    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, theta: &[f64], t: f64) -> f64 {
        theta[0] * t
    }

    fn jacobian(&self, _theta: &[f64], t: f64, grad: &mut [f64]) {
        grad[0] = t;
    }
}

/// Looks a model up by its CLI/config name.
pub fn by_name(name: &str) -> Result<&'static dyn Model> {
    match name {
        "biexp4" => Ok(&Biexponential4),
        "singleexp1" => Ok(&SingleExp1),
        "linear1" => Ok(&Linear1),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// All registered models.
pub fn registry() -> [&'static dyn Model; 3] {
    [&Biexponential4, &SingleExp1, &Linear1]
}

fn check_theta(model: &dyn Model, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "model parameter vector",
            expected: model.dim(),
            actual: theta.len(),
        });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite parameter vector for model `{}`",
            model.name()
        )));
    }
    Ok(())
}

/// Validated evaluation of f(t; theta).
pub fn eval_model(model: &dyn Model, theta: &[f64], t: f64) -> Result<f64> {
    check_theta(model, theta)?;
    let v = model.eval(theta, t);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "model `{}` at t = {t}",
            model.name()
        )));
    }
    Ok(v)
}

/// Validated evaluation of the parameter gradient of f.
pub fn eval_jacobian(model: &dyn Model, theta: &[f64], t: f64) -> Result<Vec<f64>> {
    check_theta(model, theta)?;
    let mut grad = vec![0.0; model.dim()];
    model.jacobian(theta, t, &mut grad);
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "model `{}` gradient at t = {t}",
            model.name()
        )));
    }
    Ok(grad)
}

/// Central finite differences of `eval`, the test oracle for analytic
/// Jacobians.
pub fn finite_difference_jacobian(model: &dyn Model, theta: &[f64], t: f64, h: f64) -> Vec<f64> {
    let p = model.dim();
    let mut grad = vec![0.0; p];
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    for k in 0..p {
        plus[k] = theta[k] + h;
        minus[k] = theta[k] - h;
        grad[k] = (model.eval(&plus, t) - model.eval(&minus, t)) / (2.0 * h);
        plus[k] = theta[k];
        minus[k] = theta[k];
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn biexp4_at_zero_is_sum_of_amplitudes() {
        let theta = [1.0, 0.8, -0.5, -1.0];
        let v = eval_model(&Biexponential4, &theta, 0.0).unwrap();
        assert_relative_eq!(v, 1.0f64.exp() + (-0.5f64).exp(), epsilon = 1e-14);
        // 50-digit reference: 3.3248124881716786589640870063438429511991652291871
        assert_relative_eq!(v, 3.324812488171679, epsilon = 1e-14);
    }

    #[test]
    fn biexp4_symmetric_zero_theta() {
        let v = eval_model(&Biexponential4, &[0.0; 4], 1.0).unwrap();
        assert_relative_eq!(v, 2.0 * (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn biexp4_matches_high_precision_reference() {
        // Reference computed with 50-digit arithmetic:
        // f(2; (1, 0.8, -0.5, -1)) =
        // 0.32232544743772398127701055721824407786620398544559
        let v = eval_model(&Biexponential4, &[1.0, 0.8, -0.5, -1.0], 2.0).unwrap();
        assert_relative_eq!(v, 0.322325447437723981, epsilon = 1e-12);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn biexp4_jacobian_reference_and_t0_zeros() {
        let theta = [1.0, 0.8, -0.5, -1.0];
        let g0 = eval_jacobian(&Biexponential4, &theta, 0.0).unwrap();
        assert_eq!(g0[1], 0.0);
        assert_eq!(g0[3], 0.0);

        // 50-digit references at t = 1.
        let g = eval_jacobian(&Biexponential4, &theta, 1.0).unwrap();
        assert_relative_eq!(g[0], 0.293598841383083200, epsilon = 1e-13);
        assert_relative_eq!(g[1], -0.653416238056019707, epsilon = 1e-13);
        assert_relative_eq!(g[2], 0.419840903284643086, epsilon = 1e-13);
        assert_relative_eq!(g[3], -0.154450836881268062, epsilon = 1e-13);
    }

    #[test]
    fn biexp4_decays_to_zero() {
        let theta = [1.0, 0.8, -0.5, -1.0];
        let mut last = f64::INFINITY;
        for t in [0.0, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0] {
            let v = Biexponential4.eval(&theta, t);
            assert!(v >= 0.0 && v < last);
            last = v;
        }
        assert!(Biexponential4.eval(&theta, 200.0) < 1e-12);
    }

    #[test]
    fn singleexp1_agrees_with_embedded_biexp4() {
        for &theta2 in &[-2.0, -0.3, 0.8, 1.7] {
            for &t in &[0.0, 0.5, 1.0, 3.0, 7.5] {
                let a = SingleExp1.eval(&[theta2], t);
                let b = Biexponential4.eval(&[1.0, theta2, -0.5, -1.0], t);
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    /// Relative agreement at 1e-6, with an absolute floor of 3e-9 for
    /// components the central difference cannot resolve (its rounding noise
    /// is about eps * |f| / h).
    fn fd_agrees(analytic: f64, fd: f64) -> bool {
        let gap = (analytic - fd).abs();
        gap <= 1e-6 * analytic.abs().max(fd.abs()) || gap <= 3e-9
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = stream(7, &[domain::WEIGHT_CHECK, 0]);
        for model in registry() {
            let p = model.dim();
            for _ in 0..100 {
                let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
                let t: f64 = rng.random_range(0.0..8.0);
                let analytic = eval_jacobian(model, &theta, t).unwrap();
                let fd = finite_difference_jacobian(model, &theta, t, 1e-6);
                for k in 0..p {
                    assert!(
                        fd_agrees(analytic[k], fd[k]),
                        "{} component {k} at theta={theta:?}, t={t}: {} vs {}",
                        model.name(),
                        analytic[k],
                        fd[k]
                    );
                }
            }
        }
    }

    #[test]
    fn singleexp1_fd_at_example_point() {
        let g = eval_jacobian(&SingleExp1, &[0.8], 3.0).unwrap();
        let fd = finite_difference_jacobian(&SingleExp1, &[0.8], 3.0, 1e-6);
        assert!((g[0] - fd[0]).abs() <= 1e-6 * g[0].abs().max(fd[0].abs()));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = eval_model(&Biexponential4, &[1.0, 2.0], 0.5).unwrap_err();
        assert!(matches!(err, crate::Error::DimensionMismatch { .. }));
        let err = eval_model(&Biexponential4, &[f64::NAN, 0.0, 0.0, 0.0], 0.5).unwrap_err();
        assert!(matches!(err, crate::Error::InvalidArgument(_)));
    }

    #[test]
    fn unknown_model_name_is_rejected() {
        assert!(by_name("biexp4").is_ok());
        assert!(by_name("singleexp1").is_ok());
        assert!(matches!(by_name("foo"), Err(crate::Error::UnknownModel(_))));
    }
}
