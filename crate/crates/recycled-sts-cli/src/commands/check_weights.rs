//! `check-weights`: empirical moment diagnostics for a weight scheme.

use recycled_sts::rng::{domain, stream};
use recycled_sts::weights::{check_assumption_w, WeightScheme};

use crate::{AppError, CheckWeightsArgs};

pub fn run(args: &CheckWeightsArgs) -> Result<(), AppError> {
    let scheme: WeightScheme = args.weights.parse()?;
    let mut rng = stream(args.seed, &[domain::WEIGHT_CHECK]);
    let report = check_assumption_w(scheme, args.n, args.draws, &mut rng)?;
    print!("{report}");
    if !report.all_pass() {
        eprintln!("warning: at least one moment condition failed its tolerance");
    }
    Ok(())
}
