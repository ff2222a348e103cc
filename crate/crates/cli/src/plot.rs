//! gnuplot script emission for sweep CSVs.
//!
//! Each `(n, δ)` series becomes an inline datablock. Rows with a
//! non-positive raw rate are written as blank lines so the curve breaks
//! there on the logarithmic axis.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::sweep::SWEEP_HEADER;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("sweep CSV has no data rows")]
    Empty,
    #[error("unexpected sweep CSV header: {0}")]
    Header(String),
    #[error("malformed sweep CSV row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct SeriesKey {
    players: usize,
    delta_bits: u64,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T, PlotError> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PlotError::Row { row, reason: format!("bad {}", SWEEP_HEADER[i]) })
}

fn series_title(players: usize, delta: f64, many_deltas: bool) -> String {
    if many_deltas {
        format!("n = {players}, delta = {delta:e}")
    } else {
        format!("n = {players}")
    }
}

/// Builds a self-contained gnuplot script from sweep CSV text.
pub fn emit_plot_script(csv_text: &str, title: &str) -> Result<String, PlotError> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(PlotError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut series: BTreeMap<SeriesKey, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let length: f64 = field(&rec, 0, row)?;
        let players: usize = field(&rec, 1, row)?;
        let delta: f64 = field(&rec, 2, row)?;
        let rate: f64 = field(&rec, 6, row)?;
        let key = SeriesKey { players, delta_bits: delta.to_bits() };
        series.entry(key).or_default().push((length, rate));
    }
    if series.is_empty() {
        return Err(PlotError::Empty);
    }
    let many_deltas = series.keys().map(|k| k.delta_bits).collect::<std::collections::BTreeSet<_>>().len() > 1;

    let mut s = String::new();
    writeln!(s, "set title \"{title}\"").unwrap();
    writeln!(s, "set xlabel \"fiber length (km)\"").unwrap();
    writeln!(s, "set ylabel \"secret key rate (bits/pulse)\"").unwrap();
    writeln!(s, "set logscale y").unwrap();
    writeln!(s, "set format y \"10^{{%L}}\"").unwrap();
    writeln!(s, "set key top right").unwrap();
    writeln!(s, "set grid").unwrap();
    let mut plots = Vec::new();
    for (i, (key, points)) in series.iter().enumerate() {
        let name = format!("$s{i}");
        writeln!(s, "{name} << EOD").unwrap();
        for &(l, r) in points {
            if r > 0.0 {
                writeln!(s, "{l} {r}").unwrap();
            } else {
                writeln!(s).unwrap();
            }
        }
        writeln!(s, "EOD").unwrap();
        let delta = f64::from_bits(key.delta_bits);
        plots.push(format!("{name} using 1:2 with lines title \"{}\"", series_title(key.players, delta, many_deltas)));
    }
    writeln!(s, "plot {}", plots.join(", \\\n     ")).unwrap();
    Ok(s)
}
