//! CSV reading and writing. Output files start with one `#` provenance line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::connectome::GridParcellation;
use crate::error::{Error, Result};
use crate::solver::TrainingSet;

/// Connectome rows read from CSV, labels when a label column was present.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectomeTable {
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
    pub p: usize,
}

impl ConnectomeTable {
    pub fn into_training_set(self) -> Result<TrainingSet> {
        let labels = self.labels.ok_or_else(|| Error::Config("data has no label column".into()))?;
        TrainingSet::from_rows(&self.rows, labels, self.p)
    }
}

fn is_triangular(m: usize) -> bool {
    let d = ((1.0 + (1.0 + 8.0 * m as f64).sqrt()) / 2.0).round() as usize;
    d * (d - 1) / 2 == m
}

/// Reads one subject per row. A header row is optional; a leading label
/// column is recognised by a `label` header, or without a header by the
/// column count (`expected_p + 1`, or one more than a triangular number).
pub fn read_connectomes(path: &Path, expected_p: Option<usize>) -> Result<ConnectomeTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = Vec::new();
    for r in reader.records() {
        records.push(r?);
    }
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));

    let mut header: Option<Vec<String>> = None;
    if let Some(first) = records.first() {
        if first.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(first.iter().map(str::to_string).collect());
            records.remove(0);
        }
    }
    let ncols = match (&header, records.first()) {
        (Some(h), _) => h.len(),
        (None, Some(r)) => r.len(),
        (None, None) => return Err(bad("no header and no rows".into())),
    };
    let labeled = match &header {
        Some(h) => h[0].eq_ignore_ascii_case("label"),
        None => match expected_p {
            Some(p) => ncols == p + 1,
            None => !is_triangular(ncols) && is_triangular(ncols - 1),
        },
    };
    let p = if labeled { ncols - 1 } else { ncols };
    if let Some(expect) = expected_p {
        if p != expect {
            return Err(bad(format!("{p} feature columns, expected {expect}")));
        }
    }

    let mut rows = Vec::with_capacity(records.len());
    let mut labels = labeled.then(Vec::new);
    for (i, rec) in records.iter().enumerate() {
        let values: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("row {}: '{f}' is not a number", i + 1))))
            .collect::<Result<_>>()?;
        match labels.as_mut() {
            Some(l) => {
                if values[0] != 1.0 && values[0] != -1.0 {
                    return Err(bad(format!("row {}: label {} is not -1/+1", i + 1, values[0])));
                }
                l.push(values[0]);
                rows.push(values[1..].to_vec());
            }
            None => rows.push(values),
        }
    }
    Ok(ConnectomeTable { rows, labels, p })
}

/// Buffered writer that emits the provenance comment first.
pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, comment: &str) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{comment}")?;
        Ok(Self { inner: csv::Writer::from_writer(file) })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Header names `label, e<a>_<b>, ...` in feature order.
pub fn edge_header(parc: &GridParcellation) -> Result<Vec<String>> {
    let mut header = vec!["label".to_string()];
    for j in 0..parc.feature_dim() {
        let (a, b) = parc.edge_nodes(j)?;
        header.push(format!("e{a}_{b}"));
    }
    Ok(header)
}

pub fn write_dataset(path: &Path, comment: &str, parc: &GridParcellation, data: &TrainingSet) -> Result<()> {
    let mut out = CsvOut::create(path, comment)?;
    out.row(edge_header(parc)?)?;
    for i in 0..data.n() {
        let row = data.x.row(i);
        out.row(std::iter::once(format_label(data.y[i])).chain(row.iter().map(|v| v.to_string())))?;
    }
    out.finish()
}

pub fn format_label(y: f64) -> String {
    if y > 0.0 { "1" } else { "-1" }.to_string()
}

/// `corner` header cell, then one column per `cols`, one row per `rows`.
pub fn write_matrix(
    path: &Path,
    comment: &str,
    corner: &str,
    rows: &[f64],
    cols: &[f64],
    values: &[Vec<f64>],
) -> Result<()> {
    let mut out = CsvOut::create(path, comment)?;
    out.row(std::iter::once(corner.to_string()).chain(cols.iter().map(|c| c.to_string())))?;
    for (r, vals) in rows.iter().zip(values) {
        out.row(std::iter::once(r.to_string()).chain(vals.iter().map(|v| v.to_string())))?;
    }
    out.finish()
}
