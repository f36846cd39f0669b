//! CSV output for sweep results.
//!
//! One row per cell in sweep order. Floats use Rust's shortest round-trip
//! formatting, and wall time is left out, so identical configs give
//! identical bytes. Optional columns are empty when not applicable.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::sweep::SweepResult;
use super::HarnessError;

pub const CSV_HEADER: [&str; 14] = [
    "scheme",
    "snr_linear",
    "d",
    "N",
    "seed_group",
    "reps",
    "gap_median",
    "gap_mean",
    "gap_iqr",
    "bias_norm",
    "alpha_hat_sq",
    "avg_power",
    "decode_err_rate",
    "bound_overlay",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the table to any sink.
pub fn write_csv<W: Write>(result: &SweepResult, sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for c in &result.cells {
        w.write_record([
            c.scheme.to_string(),
            c.snr.to_string(),
            c.dim.to_string(),
            c.budget.to_string(),
            result.seed.to_string(),
            c.reps.to_string(),
            c.gap_median.to_string(),
            c.gap_mean.to_string(),
            c.gap_iqr.to_string(),
            c.bias_norm.to_string(),
            c.alpha_hat_sq.to_string(),
            // Codes that skip the channel spend no power.
            c.avg_power.unwrap_or(0.0).to_string(),
            opt(c.decode_err_rate),
            opt(c.bound_overlay),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(result, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::Csv {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })
}
