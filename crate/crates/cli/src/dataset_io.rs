//! Curve datasets on disk.
//!
//! JSONL holds one record per line:
//!
//! ```text
//! {"id":"c00000","ap":{"layers":4.0},"hp":{"learning_rate":0.01},"curve":[0.12,0.31],"horizon":2,"orientation":"higher_is_better"}
//! ```
//!
//! CSV uses the header `id,orientation,horizon,ap.<key>...,hp.<key>...,y1..yT`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use curvestop_core::curve::{ConfigDescriptor, LearningCurve, MetricOrientation};
use curvestop_core::dataset::{CurveDataset, CurveRecord};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(format!("unknown dataset format `{other}` (expected jsonl or csv)")),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Jsonl => "jsonl",
            DatasetFormat::Csv => "csv",
        })
    }
}

/// One JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRecord {
    pub id: String,
    pub ap: BTreeMap<String, f64>,
    pub hp: BTreeMap<String, f64>,
    pub curve: Vec<f64>,
    pub horizon: usize,
    pub orientation: MetricOrientation,
}

impl WireRecord {
    pub fn from_record(r: &CurveRecord, orientation: MetricOrientation) -> Self {
        WireRecord {
            id: r.id().to_string(),
            ap: r.config.ap.clone(),
            hp: r.config.hp.clone(),
            curve: r.curve.values().to_vec(),
            horizon: r.curve.horizon(),
            orientation,
        }
    }
}

fn line_err(line: usize, msg: impl fmt::Display) -> CliError {
    CliError::validation(format!("line {line}: {msg}"))
}

/// Collects per-line records into a dataset, checking the cross-record
/// invariants with line numbers.
fn assemble(rows: Vec<(usize, WireRecord)>) -> Result<CurveDataset> {
    let Some((_, first)) = rows.first() else {
        return Err(CliError::validation("dataset has no records"));
    };
    let orientation = first.orientation;
    let horizon = first.horizon;
    let mut records = Vec::with_capacity(rows.len());
    for (line, w) in rows {
        if w.orientation != orientation {
            return Err(line_err(line, format!("record `{}` has orientation {}, expected {orientation}", w.id, w.orientation)));
        }
        if w.curve.len() != w.horizon {
            return Err(line_err(
                line,
                format!("record `{}` has {} of {} epochs", w.id, w.curve.len(), w.horizon),
            ));
        }
        if w.horizon != horizon {
            return Err(line_err(line, format!("record `{}` has horizon {}, expected {horizon}", w.id, w.horizon)));
        }
        if let Some(v) = w.curve.iter().find(|v| !orientation.is_valid_raw(**v)) {
            return Err(line_err(line, format!("record `{}` has out-of-range value {v} for {orientation}", w.id)));
        }
        let curve = LearningCurve::new(w.id.clone(), w.curve).map_err(|e| line_err(line, format!("record `{}`: {e}", w.id)))?;
        records.push((line, CurveRecord { config: ConfigDescriptor::new(w.ap, w.hp), curve }));
    }
    // Key sets and ids are checked by the dataset itself; map failures back
    // to a line by re-checking incrementally.
    let lines: Vec<usize> = records.iter().map(|(l, _)| *l).collect();
    let records: Vec<CurveRecord> = records.into_iter().map(|(_, r)| r).collect();
    CurveDataset::new(orientation, records.clone()).map_err(|e| {
        let bad = (1..=records.len())
            .find(|&n| CurveDataset::new(orientation, records[..n].to_vec()).is_err())
            .map(|n| lines[n - 1]);
        match bad {
            Some(line) => line_err(line, e),
            None => CliError::validation(e.to_string()),
        }
    })
}

pub fn parse_jsonl(text: &str) -> Result<CurveDataset> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w: WireRecord = serde_json::from_str(line).map_err(|e| line_err(i + 1, e))?;
        rows.push((i + 1, w));
    }
    assemble(rows)
}

pub fn to_jsonl(dataset: &CurveDataset) -> Result<String> {
    let mut out = String::new();
    for r in dataset.records() {
        let line = serde_json::to_string(&WireRecord::from_record(r, dataset.orientation()))
            .map_err(|e| CliError::runtime(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<CurveDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| line_err(1, e))?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "id" || header[1] != "orientation" || header[2] != "horizon" {
        return Err(line_err(1, "header must start with id,orientation,horizon"));
    }
    enum Col {
        Ap(String),
        Hp(String),
        Y(usize),
    }
    let mut cols = Vec::new();
    for h in &header[3..] {
        let col = if let Some(k) = h.strip_prefix("ap.") {
            Col::Ap(k.to_string())
        } else if let Some(k) = h.strip_prefix("hp.") {
            Col::Hp(k.to_string())
        } else if let Some(t) = h.strip_prefix('y').and_then(|t| t.parse::<usize>().ok()) {
            Col::Y(t)
        } else {
            return Err(line_err(1, format!("unrecognized column `{h}`")));
        };
        cols.push(col);
    }
    let epochs: Vec<usize> = cols.iter().filter_map(|c| if let Col::Y(t) = c { Some(*t) } else { None }).collect();
    if epochs.iter().enumerate().any(|(i, t)| *t != i + 1) {
        return Err(line_err(1, "curve columns must be y1..yT in order"));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| line_err(line, e))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize, name: &str| -> Result<f64> {
            field(j).trim().parse::<f64>().map_err(|_| line_err(line, format!("column {name}: `{}` is not a number", field(j))))
        };
        let id = field(0).to_string();
        let orientation: MetricOrientation =
            field(1).parse().map_err(|e| line_err(line, format!("record `{id}`: {e}")))?;
        let horizon: usize = field(2).trim().parse().map_err(|_| line_err(line, format!("record `{id}`: bad horizon `{}`", field(2))))?;
        let (mut ap, mut hp, mut curve) = (BTreeMap::new(), BTreeMap::new(), Vec::new());
        for (j, col) in cols.iter().enumerate() {
            let j = j + 3;
            match col {
                Col::Ap(k) => {
                    ap.insert(k.clone(), num(j, &header[j])?);
                }
                Col::Hp(k) => {
                    hp.insert(k.clone(), num(j, &header[j])?);
                }
                // shorter curves leave trailing cells empty
                Col::Y(_) if field(j).trim().is_empty() => {}
                Col::Y(_) => curve.push(num(j, &header[j])?),
            }
        }
        rows.push((line, WireRecord { id, ap, hp, curve, horizon, orientation }));
    }
    assemble(rows)
}

pub fn to_csv(dataset: &CurveDataset) -> Result<String> {
    let keys = dataset.keys();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "orientation".to_string(), "horizon".to_string()];
    header.extend(keys.ap.iter().map(|k| format!("ap.{k}")));
    header.extend(keys.hp.iter().map(|k| format!("hp.{k}")));
    header.extend((1..=dataset.horizon()).map(|t| format!("y{t}")));
    let csv_err = |e: csv::Error| CliError::runtime(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in dataset.records() {
        let mut row = vec![r.id().to_string(), dataset.orientation().to_string(), dataset.horizon().to_string()];
        row.extend(keys.ap.iter().map(|k| r.config.ap[k].to_string()));
        row.extend(keys.hp.iter().map(|k| r.config.hp[k].to_string()));
        row.extend(r.curve.values().iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::runtime(e.to_string()))
}

pub fn encode(dataset: &CurveDataset, format: DatasetFormat) -> Result<String> {
    match format {
        DatasetFormat::Jsonl => to_jsonl(dataset),
        DatasetFormat::Csv => to_csv(dataset),
    }
}

pub fn decode(text: &str, format: DatasetFormat) -> Result<CurveDataset> {
    match format {
        DatasetFormat::Jsonl => parse_jsonl(text),
        DatasetFormat::Csv => parse_csv(text),
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<CurveDataset> {
    let text = fsio::read_to_string(path)?;
    decode(&text, format).map_err(|e| match e {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_dataset(path: &Path, dataset: &CurveDataset, format: DatasetFormat) -> Result<()> {
    fsio::write_atomic(path, encode(dataset, format)?.as_bytes())
}
