//! `fit`: two-stage estimation of a dataset file.

use std::time::Instant;

use nalgebra::DVector;
use recycled_sts::model::by_name;
use recycled_sts::nls::FitOptions;
use recycled_sts::sts::{fit_sts, HierDataset, InitialGuess, StsFit};

use crate::commands::{ensure_dir, individual_estimates_csv, summary_csv, summary_text, write_file};
use crate::dataset::load_dataset;
use crate::manifest::{hash_bytes, RunManifest};
use crate::{parse_number_list, AppError, FitArgs};

pub(crate) struct FitOutcome {
    pub dataset: HierDataset,
    pub fit: StsFit,
    pub config_hash: u64,
    pub model: &'static dyn recycled_sts::model::Model,
}

pub(crate) fn fit_from_args(args: &FitArgs) -> Result<FitOutcome, AppError> {
    let model = by_name(&args.model)?;
    let p = model.dim();
    let init = parse_number_list(&args.init, "--init")?;
    if init.len() != p {
        return Err(AppError::Input(format!(
            "--init must have {p} values for model `{}`, got {}",
            args.model,
            init.len()
        )));
    }
    let dataset = load_dataset(&args.data)?;
    for d in &dataset.individuals {
        if d.len() <= p {
            return Err(AppError::Input(format!(
                "individual `{}` has {} rows; need more than p = {p}",
                d.id,
                d.len()
            )));
        }
    }
    let opts = FitOptions {
        max_iterations: args.max_iterations,
        multistart_count: args.multistart,
        ..FitOptions::default()
    };
    let fit = fit_sts(
        model,
        &dataset,
        &InitialGuess::Shared(DVector::from_vec(init.clone())),
        &opts,
    )?;

    let raw = std::fs::read(&args.data)
        .map_err(|e| AppError::Input(format!("{}: {e}", args.data.display())))?;
    let mut digest = raw;
    digest.extend_from_slice(
        format!(
            ";model={};init={};max_iterations={};multistart={}",
            args.model, args.init, args.max_iterations, args.multistart
        )
        .as_bytes(),
    );
    Ok(FitOutcome {
        dataset,
        fit,
        config_hash: hash_bytes(&digest),
        model,
    })
}

pub fn run(args: &FitArgs) -> Result<(), AppError> {
    let start = Instant::now();
    let outcome = fit_from_args(args)?;
    let p = outcome.model.dim();
    ensure_dir(&args.out)?;

    let ids: Vec<&str> = outcome
        .dataset
        .individuals
        .iter()
        .map(|d| d.id.as_str())
        .collect();
    write_file(
        &args.out,
        "individual_estimates.csv",
        &individual_estimates_csv(&ids, &outcome.fit, p),
    )?;
    write_file(&args.out, "summary.csv", &summary_csv(&outcome.fit, p))?;
    let text = summary_text(&outcome.fit, p, &args.model);
    write_file(&args.out, "summary.txt", &text)?;
    print!("{text}");

    let mut manifest = RunManifest::new(outcome.config_hash, 0);
    manifest
        .drop_counts
        .insert("individuals".to_string(), outcome.fit.dropped as u64);
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}
