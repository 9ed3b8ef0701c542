//! `simulate`: Monte Carlo experiments from a config file.

use std::time::Instant;

use recycled_sts::report::{report_to_csv, svg_line_chart, Metric};
use recycled_sts::simulate::{run_coverage_experiment, run_mse_experiment};

use crate::commands::{ensure_dir, write_file};
use crate::config::load_config;
use crate::manifest::RunManifest;
use crate::{AppError, SimulateArgs};

pub fn run(args: &SimulateArgs) -> Result<(), AppError> {
    let start = Instant::now();
    let cfg = load_config(&args.config)?;
    let m_rep = cfg.m_rep(args.paper_scale);

    let report = match cfg.coverage_mode(args.paper_scale) {
        None => run_mse_experiment(&cfg.grid, &cfg.base, m_rep)?,
        Some(mode) => run_coverage_experiment(&cfg.grid, &cfg.base, m_rep, &mode)?,
    };

    ensure_dir(&args.out)?;
    let csv = report_to_csv(&report);
    write_file(&args.out, "report.csv", &csv)?;
    for metric in Metric::ALL {
        if let Some(svg) = svg_line_chart(&report, metric) {
            write_file(&args.out, &format!("{}.svg", metric.name()), &svg)?;
        }
    }
    print!("{csv}");

    let mut manifest = RunManifest::new(report.config_hash, report.seed);
    manifest.m_rep = Some(m_rep);
    manifest.drop_counts = report
        .cells
        .iter()
        .map(|c| {
            (
                format!("cell_N{}_n{}", c.n_individuals, c.n_obs),
                (c.drop_rate * m_rep as f64).round() as u64,
            )
        })
        .collect();
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;

    for cell in &report.cells {
        if cell.flagged() {
            eprintln!(
                "warning: cell (N={}, n={}) dropped {:.0}% of replicates",
                cell.n_individuals,
                cell.n_obs,
                cell.drop_rate * 100.0
            );
        }
    }
    Ok(())
}
