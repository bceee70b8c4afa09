//! File formats: JSON-lines datasets, JSON weight arrays, JSON configs and
//! CSV tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gumbel_crf::WeightVector;
use crate::losses::{Dataset, Sample};
use crate::spaces::StructureFamily;

/// Reads one `{"x": "0110…", "y": [..]}` object per line. Blank lines are
/// skipped. The family is taken from the caller since lines do not carry it.
pub fn read_dataset(path: &Path, family: StructureFamily) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        samples.push(sample);
    }
    Dataset::new(family, samples)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for sample in data.samples() {
        serde_json::to_writer(&mut w, sample)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<WeightVector> {
    read_json(path)
}

pub fn write_weights(path: &Path, w: &WeightVector) -> Result<()> {
    write_json(path, w)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes rows with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
