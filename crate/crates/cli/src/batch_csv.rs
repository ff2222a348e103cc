//! Batch CSV: one row per pulse,
//! `pulse_id, x_1, p_1, …, x_n, p_n, x_d, p_d, x_d_norm, p_d_norm`.
//!
//! Floats are written in Rust's shortest round-trip form, so a read-back
//! batch is bit-identical to the simulated one.

use std::io::{Read, Write};

use cvqss_core::montecarlo::{Outcomes, QuadratureTable, TrialBatch};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BatchCsvError {
    #[error("bad batch header: {0}")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("batch has no rows")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn header(players: usize) -> Vec<String> {
    let mut h = vec!["pulse_id".to_string()];
    for k in 1..=players {
        h.push(format!("x_{k}"));
        h.push(format!("p_{k}"));
    }
    h.extend(["x_d", "p_d", "x_d_norm", "p_d_norm"].map(String::from));
    h
}

pub fn write_batch<W: Write>(batch: &TrialBatch, out: W) -> Result<(), csv::Error> {
    let n = batch.players();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n))?;
    let cols: Vec<(&[f64], &[f64])> = (1..=n).map(|k| batch.symbols.player(k)).collect();
    let mut rec = Vec::with_capacity(2 * n + 5);
    for i in 0..batch.pulses() {
        rec.clear();
        rec.push((batch.first_pulse() + i as u64).to_string());
        for (x, p) in &cols {
            rec.push(x[i].to_string());
            rec.push(p[i].to_string());
        }
        for v in [batch.dealer.x[i], batch.dealer.p[i], batch.normalized.x[i], batch.normalized.p[i]] {
            rec.push(v.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Calibration data that the CSV does not carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeta {
    pub seed: u64,
    pub v_a: f64,
    pub n0: f64,
    pub eta_d: f64,
}

pub fn read_batch<R: Read>(input: R, meta: BatchMeta) -> Result<TrialBatch, BatchCsvError> {
    let mut r = csv::Reader::from_reader(input);
    let head: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if head.len() < 7 || !(head.len() - 5).is_multiple_of(2) {
        return Err(BatchCsvError::Header(head.join(",")));
    }
    let n = (head.len() - 5) / 2;
    if head != header(n) {
        return Err(BatchCsvError::Header(head.join(",")));
    }
    let (mut xs, mut ps) = (vec![Vec::new(); n], vec![Vec::new(); n]);
    let mut dealer = Outcomes::default();
    let mut normalized = Outcomes::default();
    let mut first_pulse = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let num = |j: usize| -> Result<f64, BatchCsvError> {
            rec[j].parse().map_err(|_| BatchCsvError::Row { row, reason: format!("bad value in column {}", head[j]) })
        };
        let id: u64 = rec[0].parse().map_err(|_| BatchCsvError::Row { row, reason: "bad pulse_id".into() })?;
        let start = *first_pulse.get_or_insert(id);
        if id != start + i as u64 {
            return Err(BatchCsvError::Row { row, reason: "pulse ids are not consecutive".into() });
        }
        for k in 0..n {
            xs[k].push(num(1 + 2 * k)?);
            ps[k].push(num(2 + 2 * k)?);
        }
        let base = 1 + 2 * n;
        dealer.x.push(num(base)?);
        dealer.p.push(num(base + 1)?);
        normalized.x.push(num(base + 2)?);
        normalized.p.push(num(base + 3)?);
    }
    let first_pulse = first_pulse.ok_or(BatchCsvError::Empty)?;
    Ok(TrialBatch {
        seed: meta.seed,
        v_a: meta.v_a,
        n0: meta.n0,
        eta_d: meta.eta_d,
        symbols: QuadratureTable::from_columns(first_pulse, xs, ps),
        injected_noise: None,
        dealer,
        normalized,
    })
}
