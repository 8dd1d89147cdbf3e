//! Plain-text output helpers shared by the harness and the library writers.

use std::io::Write;

use crate::domain::Point;
use crate::error::Result;

/// Shortest text that round-trips: 17 significant digits in scientific form.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One point per line, coordinates comma-separated.
pub fn write_points_csv<W: Write>(points: &[Point], header: &str, mut w: W) -> Result<()> {
    if !header.is_empty() {
        writeln!(w, "# {header}")?;
    }
    for x in points {
        let row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Parses the output of [`write_points_csv`], skipping `#` lines.
pub fn read_points_csv(text: &str) -> std::result::Result<Vec<Point>, String> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", k + 1)))
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let pts = vec![vec![0.1, -1.0 / 3.0], vec![std::f64::consts::PI, 1e-300]];
        let mut buf = Vec::new();
        write_points_csv(&pts, "x", &mut buf).unwrap();
        let back = read_points_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn non_finite_values() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!("-inf".parse::<f64>().unwrap(), f64::NEG_INFINITY);
    }
}
