//! `recycle`: fit, then the recycled bootstrap and interval construction.

use std::fmt::Write as _;
use std::time::Instant;

use recycled_sts::recycle::{ks_to_normal, recycle_bootstrap, RecycleConfig, RecycleRun};
use recycled_sts::report::sig6;

use crate::commands::fit::fit_from_args;
use crate::commands::{ensure_dir, individual_estimates_csv, summary_csv, summary_text, write_file};
use crate::manifest::{hash_bytes, RunManifest};
use crate::{AppError, RecycleArgs};

fn replicates_csv(run: &RecycleRun, p: usize) -> String {
    let mut out = String::from("replicate,outer_mean");
    for k in 1..=p {
        let _ = write!(out, ",theta_{k}");
    }
    out.push('\n');
    for (idx, rep) in &run.replicates {
        let _ = write!(out, "{idx},{}", sig6(rep.outer_mean));
        for k in 0..p {
            let _ = write!(out, ",{}", sig6(rep.theta_star[k]));
        }
        out.push('\n');
    }
    out
}

fn intervals_csv(run: &RecycleRun) -> String {
    let mut out = String::from("coordinate,lo,hi,level,method,tau_n\n");
    for (c, (lo, hi)) in run.intervals.iter().enumerate() {
        let _ = writeln!(
            out,
            "{c},{},{},{},{},{}",
            sig6(*lo),
            sig6(*hi),
            run.ci_level,
            run.ci_method.name(),
            sig6(run.tau_n)
        );
    }
    out
}

pub fn run(args: &RecycleArgs) -> Result<(), AppError> {
    let start = Instant::now();
    let cfg = RecycleConfig {
        replicates: args.replicates,
        inner: args.inner_weights.parse()?,
        outer: args.outer_weights.parse()?,
        ci_level: args.ci_level,
        ci_method: args
            .ci_method
            .parse()
            .map_err(|e: recycled_sts::Error| AppError::Input(e.to_string()))?,
        debug_unit_weights: args.debug_unit_weights,
    };
    cfg.validate()?;

    let outcome = fit_from_args(&args.fit)?;
    let p = outcome.model.dim();
    let run = recycle_bootstrap(
        outcome.model,
        &outcome.dataset,
        &outcome.fit,
        &cfg,
        args.seed,
    )?;

    ensure_dir(&args.fit.out)?;
    let ids: Vec<&str> = outcome
        .dataset
        .individuals
        .iter()
        .map(|d| d.id.as_str())
        .collect();
    write_file(
        &args.fit.out,
        "individual_estimates.csv",
        &individual_estimates_csv(&ids, &outcome.fit, p),
    )?;
    write_file(&args.fit.out, "summary.csv", &summary_csv(&outcome.fit, p))?;
    write_file(
        &args.fit.out,
        "summary.txt",
        &summary_text(&outcome.fit, p, &args.fit.model),
    )?;
    write_file(&args.fit.out, "replicates.csv", &replicates_csv(&run, p))?;
    write_file(&args.fit.out, "intervals.csv", &intervals_csv(&run))?;

    let mut diagnostics = String::from("name,value\n");
    let _ = writeln!(diagnostics, "surviving_replicates,{}", run.replicates.len());
    let _ = writeln!(diagnostics, "drop_count,{}", run.drop_count);
    let _ = writeln!(diagnostics, "unreliable,{}", run.unreliable);
    if p == 1 {
        if let Some(l2) = outcome.fit.lambda_hat_sq_uncorrected {
            if l2 > 0.0 {
                let ks = ks_to_normal(&run, l2.sqrt())?;
                let _ = writeln!(diagnostics, "ks_to_normal,{}", sig6(ks));
            }
        }
    }
    write_file(&args.fit.out, "diagnostics.csv", &diagnostics)?;

    for (c, (lo, hi)) in run.intervals.iter().enumerate() {
        println!(
            "theta_{}: {} [{}, {}] ({}% {})",
            c + 1,
            sig6(run.theta_sts[c]),
            sig6(*lo),
            sig6(*hi),
            args.ci_level * 100.0,
            run.ci_method.name()
        );
    }
    if run.unreliable {
        eprintln!(
            "warning: {} of {} replicates dropped; run flagged unreliable",
            run.drop_count, args.replicates
        );
    }

    let digest = format!(
        "{:016x};B={};inner={};outer={};level={};method={};seed={};unit={}",
        outcome.config_hash,
        args.replicates,
        args.inner_weights,
        args.outer_weights,
        args.ci_level,
        args.ci_method,
        args.seed,
        args.debug_unit_weights
    );
    let mut manifest = RunManifest::new(hash_bytes(digest.as_bytes()), args.seed);
    manifest
        .drop_counts
        .insert("individuals".to_string(), outcome.fit.dropped as u64);
    manifest
        .drop_counts
        .insert("replicates".to_string(), run.drop_count as u64);
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.fit.out)?;
    Ok(())
}
