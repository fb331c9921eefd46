//! Experiment runner for the `weakkam` library: TOML configs, pipeline
//! stages and reproducible CSV/JSON artifacts.

pub mod config;
pub mod pipeline;

use config::ConfigError;

/// Exit status for an error: 2 for configuration problems, 3 for numerical
/// failures, 4 for I/O, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<weakkam::Error>() {
            use weakkam::Error::*;
            return match e {
                InvalidArgument(_) | DimensionMismatch { .. } => 2,
                NonFinite(_) | Stranded(_) | Degenerate(_) | NoConvergence { .. } | NotDominated { .. } => 3,
                Io(_) | Csv(_) | Json(_) | Parse(_) => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return 4;
        }
    }
    1
}
