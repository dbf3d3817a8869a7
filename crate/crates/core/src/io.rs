//! Delimited-text tables with a metadata header.
//!
//! Every table starts with comment lines:
//!
//! ```text
//! # amp-retrain table v1: <kind>
//! # <key>: <value>            (zero or more, e.g. `config: {...}`)
//! col_a<TAB>col_b
//! 1<TAB>2
//! ```
//!
//! Readers skip blank lines and any further `#` lines. Input logit files may
//! omit the metadata and may use commas instead of tabs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::bayesmix::LogitRecord;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "amp-retrain table v1";

/// A parsed table. Rows keep their 1-based line numbers for error messages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub kind: Option<String>,
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Table {
            kind: Some(kind.to_string()),
            meta: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        let line = self.rows.len() + 1;
        self.rows.push((line, row));
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing column '{name}'"),
            })
    }

    /// Parsed config JSON from the `config` metadata entry.
    pub fn config(&self) -> Result<serde_json::Value> {
        let raw = self.meta.get("config").ok_or_else(|| Error::Parse {
            line: 0,
            msg: "table has no embedded config".into(),
        })?;
        Ok(serde_json::from_str(raw)?)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.kind {
            Some(kind) => writeln!(out, "# {SCHEMA_VERSION}: {kind}").unwrap(),
            None => writeln!(out, "# {SCHEMA_VERSION}").unwrap(),
        }
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        writeln!(out, "{}", self.columns.join("\t")).unwrap();
        for (_, row) in &self.rows {
            writeln!(out, "{}", row.join("\t")).unwrap();
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.render().as_bytes())?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = Table::default();
        let mut delimiter = '\t';
        let mut header_seen = false;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                if header_seen {
                    continue;
                }
                if let Some(kind) = rest.strip_prefix(SCHEMA_VERSION) {
                    let kind = kind.trim_start_matches(':').trim();
                    if !kind.is_empty() {
                        table.kind = Some(kind.to_string());
                    }
                } else if let Some((k, v)) = rest.split_once(": ") {
                    table.meta.insert(k.trim().to_string(), v.to_string());
                }
                continue;
            }
            if !header_seen {
                if !line.contains('\t') && line.contains(',') {
                    delimiter = ',';
                }
                table.columns = line
                    .split(delimiter)
                    .map(|c| c.trim().to_string())
                    .collect();
                header_seen = true;
                continue;
            }
            let cells: Vec<String> = line
                .split(delimiter)
                .map(|c| c.trim().to_string())
                .collect();
            if cells.len() != table.columns.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "expected {} fields, found {}",
                        table.columns.len(),
                        cells.len()
                    ),
                });
            }
            table.rows.push((line_no, cells));
        }
        if !header_seen {
            return Err(Error::Parse {
                line: 0,
                msg: "missing column header line".into(),
            });
        }
        Ok(table)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Table::read(std::io::BufReader::new(file))
    }
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn parse_f64(cell: &str, line: usize, what: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} '{cell}' as a number"),
    })
}

fn parse_label(cell: &str, line: usize) -> Result<f64> {
    let v = parse_f64(cell, line, "label")?;
    if v == 1.0 || v == -1.0 {
        Ok(v)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("label must be +1 or -1, got '{cell}'"),
        })
    }
}

/// Reads (id, z, yhat) records. The `id` column is optional.
pub fn read_logits<R: BufRead>(reader: R) -> Result<Vec<LogitRecord>> {
    let table = Table::read(reader)?;
    let id_col = table.columns.iter().position(|c| c == "id");
    let z_col = table.column("z")?;
    let y_col = table.column("yhat")?;
    table
        .rows
        .iter()
        .map(|(line, cells)| {
            let z = parse_f64(&cells[z_col], *line, "logit")?;
            if !z.is_finite() {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("logit '{}' is not finite", cells[z_col]),
                });
            }
            Ok(LogitRecord {
                id: id_col.map(|c| cells[c].clone()),
                z,
                yhat: parse_label(&cells[y_col], *line)?,
            })
        })
        .collect()
}

pub fn read_logits_file(path: &Path) -> Result<Vec<LogitRecord>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_logits(std::io::BufReader::new(file))
}

pub fn logits_table(records: &[LogitRecord]) -> Table {
    let mut t = Table::new("logits", &["id", "z", "yhat"]);
    for (i, r) in records.iter().enumerate() {
        let id = r.id.clone().unwrap_or_else(|| i.to_string());
        t.push(vec![id, fmt_f64(r.z), fmt_f64(r.yhat)]);
    }
    t
}

/// Targets as (id, target); records without an id get their row index.
pub fn targets_table(targets: &[(Option<String>, f64)], config_json: &str) -> Table {
    let mut t = Table::new("targets", &["id", "target"]).with_meta("config", config_json);
    for (i, (id, g)) in targets.iter().enumerate() {
        t.push(vec![
            id.clone().unwrap_or_else(|| i.to_string()),
            fmt_f64(*g),
        ]);
    }
    t
}

/// Labelled design matrix with its ground-truth direction, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub x: Array2<f64>,
    pub y_true: Array1<f64>,
    pub y_noisy: Array1<f64>,
    pub signal: Array1<f64>,
}

/// Columns y_true, y_noisy, x0..x{d-1}; the signal vector goes in the
/// `signal` metadata entry as a JSON array.
pub fn dataset_table(kind: &str, data: &DatasetFile, config_json: &str) -> Table {
    let d = data.x.ncols();
    let mut cols = vec!["y_true".to_string(), "y_noisy".to_string()];
    cols.extend((0..d).map(|j| format!("x{j}")));
    let signal: Vec<f64> = data.signal.to_vec();
    let mut t = Table {
        kind: Some(kind.to_string()),
        meta: BTreeMap::new(),
        columns: cols,
        rows: Vec::with_capacity(data.x.nrows()),
    }
    .with_meta("config", config_json)
    .with_meta("signal", serde_json::to_string(&signal).unwrap());
    for (i, row) in data.x.outer_iter().enumerate() {
        let mut cells = vec![fmt_f64(data.y_true[i]), fmt_f64(data.y_noisy[i])];
        cells.extend(row.iter().map(|&v| fmt_f64(v)));
        t.push(cells);
    }
    t
}

pub fn dataset_from_table(table: &Table) -> Result<DatasetFile> {
    let raw = table.meta.get("signal").ok_or_else(|| Error::Parse {
        line: 0,
        msg: "dataset file has no 'signal' entry".into(),
    })?;
    let signal: Vec<f64> = serde_json::from_str(raw)?;
    let d = signal.len();
    if table.columns.len() != d + 2 {
        return Err(Error::Parse {
            line: 0,
            msg: format!(
                "expected {} columns for d = {d}, found {}",
                d + 2,
                table.columns.len()
            ),
        });
    }
    let n = table.rows.len();
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y_true = Array1::<f64>::zeros(n);
    let mut y_noisy = Array1::<f64>::zeros(n);
    for (i, (line, cells)) in table.rows.iter().enumerate() {
        y_true[i] = parse_label(&cells[0], *line)?;
        y_noisy[i] = parse_label(&cells[1], *line)?;
        for j in 0..d {
            x[(i, j)] = parse_f64(&cells[j + 2], *line, "feature")?;
        }
    }
    Ok(DatasetFile {
        x,
        y_true,
        y_noisy,
        signal: Array1::from(signal),
    })
}
