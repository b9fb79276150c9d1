//! Number formatting and small CSV helpers.
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same `f64`, so rerunning a computation gives byte-identical files.

use std::fmt::Write;

/// Shortest round-trip decimal for `x`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Join already formatted fields into one CSV line (no trailing newline).
pub fn row<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(f.as_ref());
    }
    out
}

/// Render a table with a header line and one line per row.
pub fn table(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(header.len() + 1 + rows.len() * 32);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", row(r));
    }
    out
}
