use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::run::RESULT_COLUMNS;
use crate::Failure;

/// One joined row: TEL per scheduler at a given size.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinedRow {
    pub n: usize,
    pub tel: BTreeMap<String, u128>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    pub schedulers: Vec<String>,
    pub rows: Vec<JoinedRow>,
}

fn read_rows(path: &Path) -> Result<Vec<(String, usize, Option<u128>)>, Failure> {
    let bad = |msg: String| Failure::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Failure::Runtime(format!("{}: {e}", path.display())),
        _ => bad(e.to_string()),
    })?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let base = &RESULT_COLUMNS[..RESULT_COLUMNS.len() - 1];
    if names != base && names != RESULT_COLUMNS {
        return Err(bad(format!(
            "schema mismatch: expected columns {}, found {}",
            RESULT_COLUMNS.join(","),
            names.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let n = record[1]
            .parse()
            .map_err(|_| bad(format!("line {line}: n is not an integer")))?;
        let tel = match &record[2] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(format!("line {line}: tel is not an integer")))?),
        };
        rows.push((record[0].to_string(), n, tel));
    }
    Ok(rows)
}

/// Joins result files on `(scheduler, n)`; rows without a TEL (failed
/// cells) are skipped.
pub fn compare(files: &[PathBuf], baseline: &str) -> Result<Comparison, Failure> {
    let mut cells: BTreeMap<(usize, String), u128> = BTreeMap::new();
    let mut schedulers = BTreeSet::new();
    for path in files {
        for (scheduler, n, tel) in read_rows(path)? {
            let Some(tel) = tel else { continue };
            schedulers.insert(scheduler.clone());
            if cells.insert((n, scheduler.clone()), tel).is_some() {
                return Err(Failure::Config(format!(
                    "duplicate row for {scheduler} at n={n} ({})",
                    path.display()
                )));
            }
        }
    }
    if !schedulers.contains(baseline) {
        return Err(Failure::Config(format!(
            "baseline {baseline:?} not found; available: {}",
            schedulers.iter().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut rows: BTreeMap<usize, JoinedRow> = BTreeMap::new();
    for ((n, scheduler), tel) in cells {
        rows.entry(n)
            .or_insert_with(|| JoinedRow {
                n,
                tel: BTreeMap::new(),
            })
            .tel
            .insert(scheduler, tel);
    }
    Ok(Comparison {
        baseline: baseline.to_string(),
        schedulers: schedulers.into_iter().collect(),
        rows: rows.into_values().collect(),
    })
}

impl Comparison {
    fn others(&self) -> impl Iterator<Item = &String> {
        self.schedulers.iter().filter(move |s| **s != self.baseline)
    }

    /// `TEL(scheduler) / TEL(baseline)` at one row.
    pub fn ratio(&self, row: &JoinedRow, scheduler: &str) -> Option<f64> {
        let base = *row.tel.get(&self.baseline)?;
        let tel = *row.tel.get(scheduler)?;
        Some(tel as f64 / base as f64)
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["n".to_string()];
        h.extend(self.schedulers.iter().cloned());
        h.extend(self.others().map(|s| format!("{s}/{}", self.baseline)));
        h
    }

    fn cells(&self, row: &JoinedRow) -> Vec<String> {
        let mut out = vec![row.n.to_string()];
        for s in &self.schedulers {
            out.push(row.tel.get(s).map(u128::to_string).unwrap_or_default());
        }
        for s in self.others() {
            out.push(self.ratio(row, s).map(|r| format!("{r:.4}")).unwrap_or_default());
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let header = self.header();
        let mut md = String::new();
        let _ = writeln!(md, "| {} |", header.join(" | "));
        let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
        for row in &self.rows {
            let _ = writeln!(md, "| {} |", self.cells(row).join(" | "));
        }
        md
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), Failure> {
        let err = |e: csv::Error| Failure::Runtime(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(self.header()).map_err(err)?;
        for row in &self.rows {
            w.write_record(self.cells(row)).map_err(err)?;
        }
        w.flush().map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
    }
}
