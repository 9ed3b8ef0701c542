//! Standard two-stage (STS) estimation for hierarchical nonlinear regression
//! models, together with a random-weight ("recycled") bootstrap of the
//! population estimates and a Monte Carlo harness for MSE and
//! confidence-interval coverage experiments.
//!
//! The model is `y_ij = f(x_ij; theta_i) + eps_ij` for individuals
//! `i = 1..N`, each observed `n_i` times, where `theta_i = theta_0 + b_i`
//! splits into a fixed population parameter and a mean-zero random effect.
//! Estimation proceeds in two stages: a per-individual nonlinear least
//! squares fit, then averaging across individuals. The recycled bootstrap
//! re-solves the per-individual problems under exchangeable mean-one random
//! weights and re-averages under a second, independent weight vector, which
//! approximates the sampling distribution of the population estimate without
//! distributional assumptions on the error terms or the random effects.
//!
//! Modules:
//! - [`model`]: nonlinear mean functions with analytic Jacobians.
//! - [`nls`]: weighted Levenberg-Marquardt least squares for one individual.
//! - [`weights`]: random-weight schemes (multinomial, Dirichlet, exponential).
//! - [`sts`]: the two-stage estimator and its variance components.
//! - [`recycle`]: the two-layer recycled bootstrap and interval construction.
//! - [`simulate`]: data generation and the Monte Carlo experiment drivers.
//! - [`report`]: CSV / SVG rendering of experiment reports.
//!
//! With the default `parallel` feature, individual fits, bootstrap
//! replicates and Monte Carlo replications fan out over rayon. Every random
//! draw comes from a stream keyed by (seed, indices), so parallel and
//! sequential runs produce bitwise-identical results.

pub mod error;
pub mod exec;
pub mod model;
pub mod nls;
pub mod recycle;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod sts;
pub mod weights;

pub use error::{Error, Result};
