use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Row, RunResult};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "algo",
    "env",
    "params_json",
    "seed",
    "episode",
    "return",
    "value_exact",
    "regret_cum",
];

/// Scientific notation with 17 significant digits, enough to round-trip
/// every `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn emit_csv(result: &RunResult, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &result.rows {
        writer
            .write_record([
                row.algo.as_str(),
                row.env.as_str(),
                row.params_json.as_str(),
                &row.seed.to_string(),
                &row.episode.to_string(),
                &format_float(row.episode_return),
                &format_float(row.value_exact),
                &format_float(row.regret_cum),
            ])
            .map_err(csv_err)?;
    }
    let mut inner = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<RunResult> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidInput(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |field: &str| {
            Error::InvalidInput(format!(
                "{}: row {}: cannot parse {field}",
                path.display(),
                line + 2
            ))
        };
        let float = |i: usize, name: &str| record[i].parse::<f64>().map_err(|_| bad(name));
        rows.push(Row {
            algo: record[0].to_string(),
            env: record[1].to_string(),
            params_json: record[2].to_string(),
            seed: record[3].parse().map_err(|_| bad("seed"))?,
            episode: record[4].parse().map_err(|_| bad("episode"))?,
            episode_return: float(5, "return")?,
            value_exact: float(6, "value_exact")?,
            regret_cum: float(7, "regret_cum")?,
        });
    }
    Ok(RunResult { rows })
}
