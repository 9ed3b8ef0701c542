//! Subcommand implementations and shared output rendering.

pub mod check_weights;
pub mod fit;
pub mod recycle;
pub mod simulate;

use std::fmt::Write as _;
use std::path::Path;

use recycled_sts::report::sig6;
use recycled_sts::sts::StsFit;

use crate::AppError;

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::Input(format!("{}: {e}", dir.display())))?;
    Ok(())
}

pub(crate) fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), AppError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Per-individual estimates table, dataset order.
pub(crate) fn individual_estimates_csv(
    ids: &[&str],
    fit: &StsFit,
    p: usize,
) -> String {
    let mut out = String::from("id,converged,iterations,q_min,gradient_norm");
    for k in 1..=p {
        let _ = write!(out, ",theta_{k}");
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        match &fit.fits[i] {
            Some(f) => {
                let _ = write!(
                    out,
                    "{id},{},{},{},{}",
                    f.converged,
                    f.iterations,
                    sig6(f.q_min),
                    sig6(f.gradient_norm)
                );
                for k in 0..p {
                    let _ = write!(out, ",{}", sig6(f.theta[k]));
                }
            }
            None => {
                let _ = write!(out, "{id},error,,,");
                for _ in 0..p {
                    out.push(',');
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Long-format population summary: quantity,row,col,value.
pub(crate) fn summary_csv(fit: &StsFit, p: usize) -> String {
    let mut out = String::from("quantity,row,col,value\n");
    let scalar = |name: &str, v: f64, out: &mut String| {
        let _ = writeln!(out, "{name},0,0,{}", sig6(v));
    };
    for k in 0..p {
        let _ = writeln!(out, "theta_sts,{k},0,{}", sig6(fit.theta_sts[k]));
    }
    scalar("sigma_sq_m", fit.sigma_sq_m, &mut out);
    scalar("nu_hat", fit.nu_hat, &mut out);
    for (name, m) in [
        ("s2", &fit.s2),
        ("sigma_n_hat", &fit.sigma_n_hat),
        ("d_hat", &fit.d_hat),
        ("var_theta_sts", &fit.var_theta_sts),
    ] {
        for r in 0..p {
            for c in 0..p {
                let _ = writeln!(out, "{name},{r},{c},{}", sig6(m[(r, c)]));
            }
        }
    }
    if let Some(l2) = fit.lambda_hat_sq_uncorrected {
        scalar("lambda_hat_sq_uncorrected", l2, &mut out);
    }
    let _ = writeln!(out, "n_converged,0,0,{}", fit.n_converged());
    let _ = writeln!(out, "dropped,0,0,{}", fit.dropped);
    out
}

/// Human-readable population summary.
pub(crate) fn summary_text(fit: &StsFit, p: usize, model: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model: {model}");
    let _ = writeln!(
        out,
        "individuals: {} converged, {} dropped",
        fit.n_converged(),
        fit.dropped
    );
    let theta: Vec<String> = (0..p).map(|k| sig6(fit.theta_sts[k])).collect();
    let _ = writeln!(out, "theta_sts: [{}]", theta.join(", "));
    let _ = writeln!(out, "sigma_sq_m: {}", sig6(fit.sigma_sq_m));
    let _ = writeln!(out, "nu_hat: {}", sig6(fit.nu_hat));
    if let Some(l2) = fit.lambda_hat_sq_uncorrected {
        let _ = writeln!(out, "lambda_hat_sq (uncorrected): {}", sig6(l2));
    }
    for (name, m) in [("S2", &fit.s2), ("D_hat", &fit.d_hat)] {
        let _ = writeln!(out, "{name}:");
        for r in 0..p {
            let row: Vec<String> = (0..p).map(|c| sig6(m[(r, c)])).collect();
            let _ = writeln!(out, "  [{}]", row.join(", "));
        }
    }
    out
}
