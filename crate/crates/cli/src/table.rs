//! Table emission in aligned text or CSV form.

use std::io::{self, Write};

use stokes_cascade::LevelReport;

use crate::args::OutputFormat;

pub const CSV_HEADER: &str = "level,h,N_dof,err_u,rate_u,err_p,rate_p,iters,final_residual";

/// Writes the reports. The first printed row has empty rate fields. CSV
/// carries full float precision; text prints errors to 7 significant digits
/// and rates to 2 decimals.
pub fn emit_table(
    reports: &[LevelReport],
    format: OutputFormat,
    w: &mut impl Write,
) -> io::Result<()> {
    match format {
        OutputFormat::Csv => emit_csv(reports, w),
        OutputFormat::Text => emit_text(reports, w),
    }
}

fn rate_field(rate: Option<f64>, first_row: bool) -> Option<f64> {
    if first_row {
        None
    } else {
        rate
    }
}

fn emit_csv(reports: &[LevelReport], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for (i, r) in reports.iter().enumerate() {
        let fmt_rate = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.k,
            r.h_k,
            r.n_k,
            r.err_u,
            fmt_rate(rate_field(r.rate_u, i == 0)),
            r.err_p,
            fmt_rate(rate_field(r.rate_p, i == 0)),
            r.iterations,
            r.final_residual,
        )?;
    }
    Ok(())
}

fn emit_text(reports: &[LevelReport], w: &mut impl Write) -> io::Result<()> {
    writeln!(
        w,
        "{:>5} {:>12} {:>9} {:>13} {:>7} {:>13} {:>7} {:>6} {:>15}",
        "level", "h", "N_dof", "err_u", "rate_u", "err_p", "rate_p", "iters", "final_residual"
    )?;
    for (i, r) in reports.iter().enumerate() {
        let rate = |v: Option<f64>| match rate_field(v, i == 0) {
            Some(x) => format!("{x:.2}"),
            None => String::new(),
        };
        writeln!(
            w,
            "{:>5} {:>12.5e} {:>9} {:>13.6e} {:>7} {:>13.6e} {:>7} {:>6} {:>15.2e}",
            r.k,
            r.h_k,
            r.n_k,
            r.err_u,
            rate(r.rate_u),
            r.err_p,
            rate(r.rate_p),
            r.iterations,
            r.final_residual,
        )?;
    }
    Ok(())
}

/// Parses a table previously written in CSV form.
pub fn parse_csv(text: &str) -> Result<Vec<LevelReport>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => return Err(format!("unexpected header: {other:?}")),
    }
    let mut reports = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(format!("line {}: expected 9 fields", lineno + 2));
        }
        let num = |s: &str| -> Result<f64, String> {
            s.parse().map_err(|e| format!("line {}: {e}", lineno + 2))
        };
        let opt_num = |s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        reports.push(LevelReport {
            k: fields[0].parse().map_err(|e| format!("line {}: {e}", lineno + 2))?,
            h_k: num(fields[1])?,
            n_k: fields[2].parse().map_err(|e| format!("line {}: {e}", lineno + 2))?,
            err_u: num(fields[3])?,
            rate_u: opt_num(fields[4])?,
            err_p: num(fields[5])?,
            rate_p: opt_num(fields[6])?,
            iterations: fields[7].parse().map_err(|e| format!("line {}: {e}", lineno + 2))?,
            final_residual: num(fields[8])?,
            hit_cap: false,
        });
    }
    Ok(reports)
}
