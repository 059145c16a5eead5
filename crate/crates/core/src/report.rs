//! Plot-ready CSV tables in µm / ms units.
//!
//! Numbers use Rust's shortest round-trip formatting, so every value parses
//! back to the same `f64`. Unbounded CRLB values are written as `inf`.

use std::io::{self, Write};

use crate::harness::{CrlbPoint, SweepSummary};

pub const CRLB_CURVE_HEADER: &str = "d_um,t_ms,crlb_um2";
pub const MSE_SWEEP_HEADER: &str = "sweep_value,protocol,mse_um2,bias_um,var_um2,stderr_um2,n_corrections,n_cointoss";
pub const CRLB_SWEEP_HEADER: &str = "sweep_value,crlb_m1_um2,crlb_full_um2";

const UM: f64 = 1e6;
const UM2: f64 = 1e12;
const MS: f64 = 1e3;

pub fn write_crlb_curve<W: Write>(mut out: W, rows: &[CrlbPoint]) -> io::Result<()> {
    writeln!(out, "{CRLB_CURVE_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.d * UM, r.t * MS, r.crlb * UM2)?;
    }
    Ok(())
}

/// `sweep_value` is written in the sweep's CLI unit via `sweep_scale`
/// (1e6 for distances in µm, 1e3 for flows in mm/s).
pub fn write_mse_sweep<W: Write>(mut out: W, summaries: &[SweepSummary], sweep_scale: f64) -> io::Result<()> {
    writeln!(out, "{MSE_SWEEP_HEADER}")?;
    for s in summaries {
        for p in &s.per_protocol {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.sweep_value * sweep_scale,
                p.label,
                p.mse * UM2,
                p.bias * UM,
                p.variance * UM2,
                p.mse_stderr * UM2,
                p.tally.corrected,
                p.tally.coin_toss
            )?;
        }
    }
    Ok(())
}

pub fn write_crlb_sweep<W: Write>(mut out: W, summaries: &[SweepSummary], sweep_scale: f64) -> io::Result<()> {
    writeln!(out, "{CRLB_SWEEP_HEADER}")?;
    for s in summaries {
        writeln!(out, "{},{},{}", s.sweep_value * sweep_scale, s.crlb_m1 * UM2, s.crlb_full * UM2)?;
    }
    Ok(())
}
