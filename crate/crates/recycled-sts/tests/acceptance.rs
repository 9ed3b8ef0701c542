//! Acceptance suite: end-to-end checks of the estimator, the recycled
//! bootstrap and the Monte Carlo harness against pinned numeric bands.
//!
//! Every check prints one `acceptance <name>: PASS/FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`) and then asserts. Bands
//! and tolerances are fixed here, not tuned at run time. The heavy checks
//! take a few minutes on a laptop; they parallelize over all cores.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use recycled_sts::model::{by_name, eval_jacobian, finite_difference_jacobian, registry};
use recycled_sts::nls::{fit_wls, FitOptions, IndividualData};
use recycled_sts::recycle::{recycle_bootstrap, CiMethod, RecycleConfig};
use recycled_sts::rng::{domain, stream};
use recycled_sts::simulate::{
    diagnose_clt, run_coverage_experiment, run_mse_experiment, CoverageMode, NoiseKind, SimDesign,
};
use recycled_sts::sts::{estimate_d, fit_sts, HierDataset, InitialGuess};
use recycled_sts::weights::{draw_weights, WeightScheme};

fn report(name: &str, pass: bool, details: &str) -> bool {
    println!(
        "acceptance {name}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn biexp_design(sigma: f64, lambda: f64, seed: u64) -> SimDesign {
    SimDesign {
        model: "biexp4".to_string(),
        theta0: DVector::from_column_slice(&[1.0, 0.8, -0.5, -1.0]),
        n_individuals: 15,
        n_obs: 15,
        sigma,
        lambda,
        error_kind: NoiseKind::TruncatedNormal,
        effect_kind: NoiseKind::TruncatedNormal,
        t_range: (0.0, 8.0),
        m_rep: 200,
        seed,
    }
}

fn p1_design(sigma: f64, lambda: f64, seed: u64) -> SimDesign {
    SimDesign {
        model: "singleexp1".to_string(),
        theta0: DVector::from_element(1, 0.8),
        n_individuals: 50,
        n_obs: 50,
        sigma,
        lambda,
        error_kind: NoiseKind::TruncatedNormal,
        effect_kind: NoiseKind::TruncatedNormal,
        t_range: (0.0, 8.0),
        m_rep: 500,
        seed,
    }
}

/// MSE endpoints at (15,15) and (50,50): truncated-normal noise,
/// sigma = lambda = 0.1, M_rep = 200, fixed seed. Anchors 0.86616 and
/// 0.02097; bands [0.5, 1.3] and [0.012, 0.032].
#[test]
fn criterion_1_mse_endpoints() {
    let d = biexp_design(0.1, 0.1, 20240801);
    let rep = run_mse_experiment(&[(15, 15), (50, 50)], &d, 200).unwrap();
    let m15 = rep.cells[0].mse.unwrap();
    let m50 = rep.cells[1].mse.unwrap();
    let pass_15 = (0.5..=1.3).contains(&m15);
    let pass_50 = (0.012..=0.032).contains(&m50);
    let ok15 = report(
        "criterion 1a (MSE 15x15 in [0.5, 1.3])",
        pass_15,
        &format!("measured {m15:.5}"),
    );
    let ok50 = report(
        "criterion 1b (MSE 50x50 in [0.012, 0.032])",
        pass_50,
        &format!("measured {m50:.5}"),
    );
    assert!(
        ok15 && ok50,
        "MSE endpoints: (15,15) = {m15:.5} (band [0.5, 1.3]), (50,50) = {m50:.5} (band [0.012, 0.032])"
    );
}

/// Non-consistency signature: sigma = 0.05, lambda = 1, N = 50 fixed,
/// M_rep = 200 — MSE at n = 200 is at least 0.6x MSE at n = 50.
#[test]
fn criterion_2_flat_rows() {
    let d = biexp_design(0.05, 1.0, 20240802);
    let rep = run_mse_experiment(&[(50, 50), (50, 200)], &d, 200).unwrap();
    let m50 = rep.cells[0].mse.unwrap();
    let m200 = rep.cells[1].mse.unwrap();
    let pass = m200 >= 0.6 * m50;
    let ok = report(
        "criterion 2 (flat MSE rows: MSE(n=200) >= 0.6 MSE(n=50))",
        pass,
        &format!("MSE(50) = {m50:.5}, MSE(200) = {m200:.5}, ratio {:.3}", m200 / m50),
    );
    assert!(ok);
}

/// Asymptotic coverage: sigma = lambda = 0.5, M_rep = 500 — coverage at
/// (50,50) in [0.92, 0.98] and coverage at (200,15) <= 0.85.
#[test]
fn criterion_3_asymptotic_coverage() {
    let d = p1_design(0.5, 0.5, 20240803);
    let rep =
        run_coverage_experiment(&[(50, 50), (200, 15)], &d, 500, &CoverageMode::Asymptotic)
            .unwrap();
    let c50 = rep.cells[0].coverage.unwrap();
    let c200 = rep.cells[1].coverage.unwrap();
    let pass_50 = (0.92..=0.98).contains(&c50);
    let pass_200 = c200 <= 0.85;
    let ok50 = report(
        "criterion 3a (coverage 50x50 in [0.92, 0.98])",
        pass_50,
        &format!("measured {c50:.3}"),
    );
    let ok200 = report(
        "criterion 3b (coverage 200x15 <= 0.85)",
        pass_200,
        &format!("measured {c200:.3}"),
    );
    assert!(
        ok50 && ok200,
        "asymptotic coverage: (50,50) = {c50:.3} (band [0.92, 0.98]), (200,15) = {c200:.3} (need <= 0.85)"
    );
}

/// Recycled coverage with multinomial weights: sigma = lambda = 1,
/// N = 30, n = 50, M_rep = 300, B = 500 — coverage in [0.90, 0.99] and
/// mean CI length in [0.7, 1.0].
#[test]
fn criterion_4_recycled_multinomial() {
    let d = p1_design(1.0, 1.0, 20240804);
    let cfg = RecycleConfig {
        replicates: 500,
        inner: WeightScheme::Multinomial,
        outer: WeightScheme::Multinomial,
        ci_level: 0.95,
        ci_method: CiMethod::BasicStudentized,
        debug_unit_weights: false,
    };
    let rep = run_coverage_experiment(&[(30, 50)], &d, 300, &CoverageMode::Recycled(cfg)).unwrap();
    let cov = rep.cells[0].coverage.unwrap();
    let len = rep.cells[0].mean_ci_length.unwrap();
    let pass_cov = (0.90..=0.99).contains(&cov);
    let pass_len = (0.7..=1.0).contains(&len);
    let ok_cov = report(
        "criterion 4a (multinomial coverage 30x50 in [0.90, 0.99])",
        pass_cov,
        &format!("measured {cov:.3}"),
    );
    let ok_len = report(
        "criterion 4b (multinomial mean length 30x50 in [0.7, 1.0])",
        pass_len,
        &format!("measured {len:.3}"),
    );
    assert!(
        ok_cov && ok_len,
        "recycled multinomial: coverage {cov:.3} (band [0.90, 0.99]), length {len:.3} (band [0.7, 1.0])"
    );
}

/// Dirichlet and exponential weights are operationally equivalent at
/// (50,50): coverage differs by <= 0.04 and mean lengths by <= 0.05.
#[test]
fn criterion_5_dirichlet_exponential_equivalence() {
    let d = p1_design(1.0, 1.0, 20240805);
    let mut results = Vec::new();
    for scheme in [WeightScheme::Dirichlet, WeightScheme::Exponential] {
        let cfg = RecycleConfig {
            replicates: 500,
            inner: scheme,
            outer: scheme,
            ci_level: 0.95,
            ci_method: CiMethod::BasicStudentized,
            debug_unit_weights: false,
        };
        let rep =
            run_coverage_experiment(&[(50, 50)], &d, 300, &CoverageMode::Recycled(cfg)).unwrap();
        results.push((
            rep.cells[0].coverage.unwrap(),
            rep.cells[0].mean_ci_length.unwrap(),
        ));
    }
    let dcov = (results[0].0 - results[1].0).abs();
    let dlen = (results[0].1 - results[1].1).abs();
    let pass = dcov <= 0.04 && dlen <= 0.05;
    let ok = report(
        "criterion 5 (dirichlet vs exponential at 50x50)",
        pass,
        &format!(
            "dirichlet ({:.3}, {:.3}) vs exponential ({:.3}, {:.3}): |dcov| {dcov:.3} <= 0.04, |dlen| {dlen:.3} <= 0.05",
            results[0].0, results[0].1, results[1].0, results[1].1
        ),
    );
    assert!(ok);
}

/// CLT property suite: KS(R_N, Phi) <= 0.05 at N = n = 200,
/// sigma = lambda = 0.1, R = 2000; two-sample KS between studentized
/// recycled replicates and the Monte Carlo R_N distribution <= 0.1 at
/// N = n = 100.
#[test]
fn criterion_6_clt_property_suite() {
    let mut d = p1_design(0.1, 0.1, 20240806);
    d.n_individuals = 200;
    d.n_obs = 200;
    let diag200 = diagnose_clt(&d, 2000).unwrap();
    let pass_rn = diag200.ks_rn <= 0.05;
    let ok_rn = report(
        "criterion 6a (KS(R_N, Phi) <= 0.05 at 200x200)",
        pass_rn,
        &format!("measured {:.4}", diag200.ks_rn),
    );

    let mut d = p1_design(0.1, 0.1, 20240807);
    d.n_individuals = 100;
    d.n_obs = 100;
    let diag100 = diagnose_clt(&d, 2000).unwrap();
    let pass_two = diag100.ks_two_sample <= 0.1;
    let ok_two = report(
        "criterion 6b (two-sample KS recycled vs sampling <= 0.1 at 100x100)",
        pass_two,
        &format!("measured {:.4}", diag100.ks_two_sample),
    );
    assert!(
        ok_rn && ok_two,
        "CLT suite: KS(R_N) = {:.4} (need <= 0.05), two-sample KS = {:.4} (need <= 0.1)",
        diag200.ks_rn,
        diag100.ks_two_sample
    );
}

/// Determinant sign-scan oracle for the smallest generalized eigenvalue of
/// the pencil (s2, sigma); independent of the Cholesky-reduction route.
fn nu_by_det_scan(s2: &DMatrix<f64>, sig: &DMatrix<f64>) -> f64 {
    let upper = (sig.clone().try_inverse().unwrap() * s2).trace() + 1.0;
    let det_at = |nu: f64| (s2 - sig * nu).determinant();
    let grid = 20_000;
    let mut prev = det_at(0.0);
    if prev.abs() < 1e-300 {
        return 0.0;
    }
    for g in 1..=grid {
        let nu = upper * g as f64 / grid as f64;
        let cur = det_at(nu);
        if prev.signum() != cur.signum() || cur == 0.0 {
            let (mut lo, mut hi) = (upper * (g - 1) as f64 / grid as f64, nu);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if det_at(mid).signum() == prev.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        prev = cur;
    }
    f64::NAN
}

/// Oracle equivalences: pencil eigenvalue vs determinant scan (1e-8 over
/// 100 random 2x2/3x3 pencils), weighted NLS vs closed-form weighted LS on
/// linear models (1e-10), analytic vs finite-difference Jacobians (1e-6).
#[test]
fn criterion_7_oracle_equivalences() {
    // Generalized eigenvalue vs determinant scan.
    let mut rng = stream(20240808, &[domain::WEIGHT_CHECK, 1]);
    let mut max_gap = 0.0f64;
    for trial in 0..100 {
        let p = if trial % 2 == 0 { 2 } else { 3 };
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let s2 = &a * a.transpose();
        let sig = &b * b.transpose() + DMatrix::identity(p, p) * 0.3;
        let (nu, _) = estimate_d(&s2, &sig, f64::INFINITY).unwrap();
        let oracle = nu_by_det_scan(&s2, &sig);
        max_gap = max_gap.max((nu - oracle).abs() / (1.0 + oracle.abs()));
    }
    let pass_nu = max_gap <= 1e-8;
    let ok_nu = report(
        "criterion 7a (pencil eigenvalue vs det-scan oracle <= 1e-8)",
        pass_nu,
        &format!("max relative gap {max_gap:.2e} over 100 pencils"),
    );

    // Weighted NLS vs closed-form weighted LS on the linear model.
    let linear = by_name("linear1").unwrap();
    let mut max_lin = 0.0f64;
    for trial in 0..50 {
        let n = 6 + trial % 5;
        let x: Vec<f64> = (0..n).map(|j| 0.3 + j as f64 * 0.9).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|t| 1.4 * t + rng.random_range(-0.5..0.5))
            .collect();
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_range(0.0..1.0) < 0.2 {
                    0.0
                } else {
                    rng.random_range(0.1..2.0)
                }
            })
            .collect();
        if w.iter().all(|v| *v == 0.0) {
            continue;
        }
        let data = IndividualData::new(format!("t{trial}"), x.clone(), y.clone()).unwrap();
        let fit = fit_wls(linear, &data, &w, &[0.0], &FitOptions::default()).unwrap();
        let num: f64 = (0..n).map(|j| w[j] * x[j] * y[j]).sum();
        let den: f64 = (0..n).map(|j| w[j] * x[j] * x[j]).sum();
        let oracle = num / den;
        max_lin = max_lin.max((fit.theta[0] - oracle).abs() / (1.0 + oracle.abs()));
    }
    let pass_lin = max_lin <= 1e-10;
    let ok_lin = report(
        "criterion 7b (weighted NLS vs closed-form LS <= 1e-10)",
        pass_lin,
        &format!("max relative gap {max_lin:.2e}"),
    );

    // Analytic Jacobians vs central finite differences.
    let mut max_jac = 0.0f64;
    for model in registry() {
        let p = model.dim();
        for _ in 0..100 {
            let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: f64 = rng.random_range(0.0..8.0);
            let analytic = eval_jacobian(model, &theta, t).unwrap();
            let fd = finite_difference_jacobian(model, &theta, t, 1e-6);
            for k in 0..p {
                let scale = analytic[k].abs().max(fd[k].abs());
                if scale > 1e-3 {
                    max_jac = max_jac.max((analytic[k] - fd[k]).abs() / scale);
                }
            }
        }
    }
    let pass_jac = max_jac <= 1e-6;
    let ok_jac = report(
        "criterion 7c (analytic vs finite-difference Jacobians <= 1e-6)",
        pass_jac,
        &format!("max relative gap {max_jac:.2e}"),
    );
    assert!(ok_nu && ok_lin && ok_jac);
}

/// Exact identities: theta_sts is the mean of the per-individual
/// estimates; degenerate unit weights reproduce theta_sts; weight draws
/// satisfy their sum constraints; same-seed runs are bitwise identical.
#[test]
fn criterion_8_exact_identities() {
    // Small noisy dataset.
    let model = by_name("singleexp1").unwrap();
    let mut individuals = Vec::new();
    for i in 0..6 {
        let x: Vec<f64> = (0..9).map(|j| 0.4 + 0.85 * j as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, &t)| model.eval(&[0.8], t) + 0.05 * ((i * 7 + j) as f64 * 1.3).sin())
            .collect();
        individuals.push(IndividualData::new(format!("i{i:02}"), x, y).unwrap());
    }
    let ds = HierDataset::new(individuals).unwrap();
    let init = InitialGuess::Shared(DVector::from_element(1, 0.9));
    let fit = fit_sts(model, &ds, &init, &FitOptions::default()).unwrap();

    let mean: f64 = fit
        .converged_idx
        .iter()
        .map(|&i| fit.fits[i].as_ref().unwrap().theta[0])
        .sum::<f64>()
        / fit.n_converged() as f64;
    let pass_mean = fit.theta_sts[0].to_bits() == mean.to_bits();
    let ok_mean = report(
        "criterion 8a (theta_sts = mean of theta_hat_i, exact)",
        pass_mean,
        &format!("theta_sts {:.12}", fit.theta_sts[0]),
    );

    // Degenerate unit weights reproduce theta_sts exactly, per coordinate.
    let cfg = RecycleConfig {
        replicates: 100,
        debug_unit_weights: true,
        ..RecycleConfig::default()
    };
    let run = recycle_bootstrap(model, &ds, &fit, &cfg, 5).unwrap();
    let pass_unit = run
        .replicates
        .iter()
        .all(|(_, r)| r.theta_star[0].to_bits() == fit.theta_sts[0].to_bits());
    let ok_unit = report(
        "criterion 8b (unit weights give theta_star = theta_sts, exact)",
        pass_unit,
        &format!("{} replicates", run.replicates.len()),
    );

    // Sum constraints.
    let mut rng = stream(20240809, &[domain::WEIGHT_CHECK, 2]);
    let mut pass_sum = true;
    for n in [2usize, 7, 50, 333] {
        let wm = draw_weights(WeightScheme::Multinomial, n, &mut rng).unwrap();
        pass_sum &= wm.iter().sum::<f64>() == n as f64;
        let wd = draw_weights(WeightScheme::Dirichlet, n, &mut rng).unwrap();
        pass_sum &= (wd.iter().sum::<f64>() - n as f64).abs() <= 1e-12 * n as f64;
    }
    let ok_sum = report(
        "criterion 8c (multinomial/dirichlet sum constraints)",
        pass_sum,
        "multinomial exact, dirichlet to 1e-12",
    );

    // Bitwise reproducibility of a full bootstrap run.
    let cfg = RecycleConfig {
        replicates: 150,
        inner: WeightScheme::Multinomial,
        outer: WeightScheme::Exponential,
        ..RecycleConfig::default()
    };
    let a = recycle_bootstrap(model, &ds, &fit, &cfg, 99).unwrap();
    let b = recycle_bootstrap(model, &ds, &fit, &cfg, 99).unwrap();
    let pass_bits = a.replicates.len() == b.replicates.len()
        && a.replicates.iter().zip(&b.replicates).all(|((ia, ra), (ib, rb))| {
            ia == ib && ra.theta_star[0].to_bits() == rb.theta_star[0].to_bits()
        })
        && a.intervals == b.intervals;

    // And of a small simulation report.
    let d = p1_design(0.3, 0.3, 20240810);
    let r1 = run_mse_experiment(&[(5, 8), (8, 10)], &d, 10).unwrap();
    let r2 = run_mse_experiment(&[(5, 8), (8, 10)], &d, 10).unwrap();
    let pass_rep = r1
        .cells
        .iter()
        .zip(&r2.cells)
        .all(|(c1, c2)| c1.mse.unwrap().to_bits() == c2.mse.unwrap().to_bits());
    let ok_bits = report(
        "criterion 8d (same-seed runs bitwise identical)",
        pass_bits && pass_rep,
        "bootstrap replicate matrix and simulation report",
    );

    assert!(ok_mean && ok_unit && ok_sum && ok_bits);
}
