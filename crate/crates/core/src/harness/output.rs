use std::io::{self, Write};

use super::experiment::MsdTrace;

pub const CSV_HEADER: &str = "iter,msd_dlms_nl_db,msd_dlms_clean_db,msd_sonec_fd_db,msd_sonec_sd_db,msd_sonec_comb_db,msd_b_fd_db,msd_b_sd_db,crb_omega_db,crb_b_db,upper_bound_db";

/// C-style `%g`: six significant digits, trailing zeros removed, exponent
/// form outside `1e-4 <= |x| < 1e6`.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn field(column: Option<&[f64]>, i: usize) -> String {
    column.map(|c| format_g(c[i])).unwrap_or_default()
}

/// Header plus one row per iteration; absent columns are left empty.
pub fn write_csv<W: Write>(trace: &MsdTrace, mut w: W) -> io::Result<()> {
    w.write_all(CSV_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    let constant = |v: Option<f64>| v.map(format_g).unwrap_or_default();
    let (crb_w, crb_b, bound) = (
        constant(trace.crb_omega_db),
        constant(trace.crb_b_db),
        constant(trace.upper_bound_db),
    );
    for i in 0..trace.n_iters {
        let row = [
            (i + 1).to_string(),
            field(trace.dlms_nl.as_deref(), i),
            field(trace.dlms_clean.as_deref(), i),
            field(trace.sonec_fd.as_deref(), i),
            field(trace.sonec_sd.as_deref(), i),
            field(trace.sonec_comb.as_deref(), i),
            field(trace.b_fd.as_deref(), i),
            field(trace.b_sd.as_deref(), i),
            crb_w.clone(),
            crb_b.clone(),
            bound.clone(),
        ];
        w.write_all(row.join(",").as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
