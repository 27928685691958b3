//! Chain files.
//!
//! JSON: `{"states": [...], "matrix": [[...], ...]}`.
//! CSV: a header of state labels followed by one row of probabilities per
//! state. Both formats write floats in shortest round-trip form, so a chain
//! survives a write/read cycle bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{StateSpace, StochasticMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainFormat {
    Json,
    Csv,
}

impl ChainFormat {
    /// Guesses from the file extension; anything but `.csv` is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ChainFormat::Csv,
            _ => ChainFormat::Json,
        }
    }
}

impl std::str::FromStr for ChainFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ChainFormat::Json),
            "csv" => Ok(ChainFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ChainFile {
    states: Vec<String>,
    matrix: Vec<Vec<f64>>,
}

pub fn chain_to_json(p: &StochasticMatrix) -> serde_json::Value {
    serde_json::to_value(ChainFile { states: p.space().labels().to_vec(), matrix: p.to_rows() })
        .expect("chain serializes")
}

pub fn chain_from_json(text: &str) -> Result<StochasticMatrix> {
    let file: ChainFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    StochasticMatrix::new(StateSpace::new(file.states)?, &file.matrix)
}

pub fn chain_to_csv(p: &StochasticMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(p.space().labels()).expect("write to memory");
    for row in p.to_rows() {
        w.write_record(row.iter().map(|v| v.to_string())).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 output")
}

pub fn chain_from_csv(text: &str) -> Result<StochasticMatrix> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let parse = |e: csv::Error| Error::Parse(e.to_string());
    let states: Vec<String> = r.headers().map_err(parse)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(parse)?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: {f:?} is not a number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() != states.len() {
        return Err(Error::Parse(format!("{} labels but {} rows", states.len(), rows.len())));
    }
    StochasticMatrix::new(StateSpace::new(states)?, &rows)
}

pub fn read_chain(path: &Path, format: Option<ChainFormat>) -> Result<StochasticMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match format.unwrap_or_else(|| ChainFormat::from_path(path)) {
        ChainFormat::Json => chain_from_json(&text),
        ChainFormat::Csv => chain_from_csv(&text),
    }
}

pub fn write_chain(path: &Path, p: &StochasticMatrix, format: Option<ChainFormat>) -> Result<()> {
    let text = match format.unwrap_or_else(|| ChainFormat::from_path(path)) {
        ChainFormat::Json => serde_json::to_string_pretty(&chain_to_json(p)).expect("json"),
        ChainFormat::Csv => chain_to_csv(p),
    };
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    #[test]
    fn json_round_trip_is_exact() {
        let p = generators::pagerank(&[("a", "b"), ("b", "c"), ("c", "a"), ("a", "c")], 0.85).unwrap();
        let text = chain_to_json(&p).to_string();
        let back = chain_from_json(&text).unwrap();
        assert_eq!(back.to_rows(), p.to_rows());
        assert_eq!(back.space().labels(), p.space().labels());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = generators::lazy_hypercube(3).unwrap();
        let back = chain_from_csv(&chain_to_csv(&p)).unwrap();
        assert_eq!(back.to_rows(), p.to_rows());
        assert_eq!(back.space().labels()[5], "101");
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(chain_from_csv("a,b\n0.5,x\n0.5,0.5\n"), Err(Error::Parse(_))));
        assert!(matches!(chain_from_csv("a,b\n0.5,0.5\n"), Err(Error::Parse(_))));
        assert!(matches!(chain_from_json("{\"states\": [\"a\"]}"), Err(Error::Parse(_))));
        assert!(matches!(
            chain_from_csv("a,b\n0.5,0.6\n0.5,0.5\n"),
            Err(Error::RowSumOutOfTolerance { .. })
        ));
        assert_eq!(ChainFormat::from_path(Path::new("x.CSV")), ChainFormat::Csv);
    }
}
