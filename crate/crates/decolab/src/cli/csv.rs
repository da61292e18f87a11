//! CSV emitters: RFC-4180-style, '.' decimal separator, 17 significant
//! digits so reloaded values reproduce the stored doubles bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::CoherenceSeries;
use crate::error::Result;
use crate::model::DensityMatrix;

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One snapshot: header + n^2 rows of (i, j, x_i, x_j, re, im).
pub fn write_snapshot(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,x_i,x_j,re,im")?;
    let xs = rho.grid.points();
    for i in 0..rho.grid.n {
        for j in 0..rho.grid.n {
            let v = rho.values[(i, j)];
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i,
                j,
                fmt_f64(xs[i]),
                fmt_f64(xs[j]),
                fmt_f64(v.re),
                fmt_f64(v.im)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-column (t, magnitude) series.
pub fn write_series(path: &Path, series: &CoherenceSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,magnitude")?;
    for (t, m) in series.times.iter().zip(&series.magnitudes) {
        writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*m))?;
    }
    w.flush()?;
    Ok(())
}

/// Reload a two-column series written by [`write_series`].
pub fn read_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let t: f64 = parts.next().unwrap_or("").parse().map_err(|e| {
            crate::error::Error::ConfigSyntax(format!("bad csv number: {e}"))
        })?;
        let m: f64 = parts.next().unwrap_or("").parse().map_err(|e| {
            crate::error::Error::ConfigSyntax(format!("bad csv number: {e}"))
        })?;
        out.push((t, m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Axis;

    #[test]
    fn series_round_trips_bit_exactly() {
        let series = CoherenceSeries {
            separation: 2.0,
            basis: Axis::Position,
            times: vec![0.0, 0.1, 0.2, 1.0 / 3.0],
            magnitudes: vec![1.0, 0.857_432_1, 1e-7, std::f64::consts::PI / 11.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_series(&path, &series).unwrap();
        let back = read_series(&path).unwrap();
        for (k, (t, m)) in back.iter().enumerate() {
            assert_eq!(t.to_bits(), series.times[k].to_bits());
            assert_eq!(m.to_bits(), series.magnitudes[k].to_bits());
        }
    }
}
