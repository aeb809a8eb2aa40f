//! CSV tables: per-epoch training metrics and sweep records. Floats are
//! written in shortest round-trip form, so reading back is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use sipcore::eval::MetricRecord;
use sipcore::train::EpochMetrics;

use crate::error::{LabError, Result};

pub const METRICS_HEADER: [&str; 6] = ["epoch", "train_loss", "val_loss", "val_nmse_db", "lr", "seed"];
pub const SWEEP_HEADER: [&str; 8] = [
    "scheme",
    "snr_db",
    "velocity_kmh",
    "nmse_db",
    "symbol_mse",
    "ser",
    "ber",
    "samples",
];

/// Row-at-a-time metrics log, flushed after every epoch.
pub struct MetricsLog<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsLog<File> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        MetricsLog::new(file)
    }
}

impl<W: Write> MetricsLog<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(METRICS_HEADER)?;
        inner.flush().map_err(|e| LabError::io("metrics log", e))?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, m: &EpochMetrics) -> Result<()> {
        self.inner.write_record([
            m.epoch.to_string(),
            m.train_loss.to_string(),
            m.val_loss.to_string(),
            m.val_nmse_db.to_string(),
            m.lr.to_string(),
            m.seed.to_string(),
        ])?;
        self.inner.flush().map_err(|e| LabError::io("metrics log", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| LabError::format(format!("metrics log: {e}")))
    }
}

pub fn write_sweep(w: impl Write, rows: &[MetricRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            r.scheme.clone(),
            r.snr_db.to_string(),
            r.velocity_kmh.to_string(),
            r.nmse_db.to_string(),
            r.symbol_mse.to_string(),
            r.ser.to_string(),
            r.ber.to_string(),
            r.samples.to_string(),
        ])?;
    }
    out.flush().map_err(|e| LabError::io("sweep table", e))
}

pub fn save_sweep(path: &Path, rows: &[MetricRecord]) -> Result<()> {
    write_sweep(File::create(path).map_err(|e| LabError::io(path, e))?, rows)
}

/// Parses a table with the exact `header`, mapping each row through `row`.
fn read_table<T>(
    r: impl Read,
    what: &str,
    header: &[&'static str],
    row: impl Fn(&dyn Fn(usize) -> Result<Field>) -> Result<T>,
) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let got = rd
        .headers()
        .map_err(|e| LabError::format(format!("{what} line 1: {e}")))?
        .clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(LabError::format(format!(
            "{what} line 1: header {:?}, expected {}",
            got.iter().collect::<Vec<_>>(),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            LabError::format(format!("{what} line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| -> Result<Field> {
            rec.get(i)
                .map(|s| Field { text: s.to_string(), line, column: header[i], what: what.to_string() })
                .ok_or_else(|| LabError::format(format!("{what} line {line}: missing column {}", header[i])))
        };
        out.push(row(&get)?);
    }
    Ok(out)
}

struct Field {
    text: String,
    line: u64,
    column: &'static str,
    what: String,
}

impl Field {
    fn parse<T: FromStr>(&self) -> Result<T> {
        self.text.parse().map_err(|_| {
            LabError::format(format!(
                "{} line {}: cannot parse {} = {:?}",
                self.what, self.line, self.column, self.text
            ))
        })
    }
}

pub fn read_sweep(r: impl Read) -> Result<Vec<MetricRecord>> {
    read_table(r, "sweep table", &SWEEP_HEADER, |f| {
        Ok(MetricRecord {
            scheme: f(0)?.text,
            snr_db: f(1)?.parse()?,
            velocity_kmh: f(2)?.parse()?,
            nmse_db: f(3)?.parse()?,
            symbol_mse: f(4)?.parse()?,
            ser: f(5)?.parse()?,
            ber: f(6)?.parse()?,
            samples: f(7)?.parse()?,
        })
    })
}

pub fn load_sweep(path: &Path) -> Result<Vec<MetricRecord>> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    read_sweep(file).map_err(|e| match e {
        LabError::Format(m) => LabError::format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_metrics(r: impl Read) -> Result<Vec<EpochMetrics>> {
    read_table(r, "metrics log", &METRICS_HEADER, |f| {
        Ok(EpochMetrics {
            epoch: f(0)?.parse()?,
            train_loss: f(1)?.parse()?,
            val_loss: f(2)?.parse()?,
            val_nmse_db: f(3)?.parse()?,
            lr: f(4)?.parse()?,
            seed: f(5)?.parse()?,
        })
    })
}
