use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use super::{build_sorted_stream, GraphError, NodeIndex, TemporalGraph, Transaction};

/// Column names of the transaction CSV. Remappable from the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub src: String,
    pub dst: String,
    pub time: String,
    pub amount: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            src: "src".into(),
            dst: "dst".into(),
            time: "time".into(),
            amount: "amount".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows: usize,
    pub self_transfers: usize,
}

#[derive(Debug, Clone)]
pub struct RawTransactions {
    pub node_ids: NodeIndex,
    pub transactions: Vec<Transaction>,
    pub report: LoadReport,
}

fn open(path: &Path) -> Result<File, GraphError> {
    File::open(path).map_err(|source| GraphError::Io { path: path.display().to_string(), source })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, GraphError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| GraphError::MissingColumn(name.to_owned()))
}

fn csv_err(row: usize, e: csv::Error) -> GraphError {
    GraphError::MalformedRow { row, field: "<record>".into(), reason: e.to_string() }
}

pub fn load_transactions(path: &Path, schema: &ColumnSchema) -> Result<RawTransactions, GraphError> {
    read_transactions(open(path)?, schema)
}

/// Parses a transaction CSV. Rows are numbered from 1 (first data row).
pub fn read_transactions<R: Read>(reader: R, schema: &ColumnSchema) -> Result<RawTransactions, GraphError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(0, e))?.clone();
    let (ci_src, ci_dst, ci_time, ci_amt) = (
        column(&headers, &schema.src)?,
        column(&headers, &schema.dst)?,
        column(&headers, &schema.time)?,
        column(&headers, &schema.amount)?,
    );

    let mut node_ids = NodeIndex::new();
    let mut rows = Vec::new();
    let mut n_rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        n_rows += 1;
        let field = |ci: usize, name: &str| {
            rec.get(ci).ok_or_else(|| GraphError::MalformedRow {
                row,
                field: name.to_owned(),
                reason: "missing value".into(),
            })
        };
        let src = field(ci_src, &schema.src)?;
        let dst = field(ci_dst, &schema.dst)?;
        if src.is_empty() || dst.is_empty() {
            return Err(GraphError::MalformedRow { row, field: "address".into(), reason: "empty address".into() });
        }
        let time_raw = field(ci_time, &schema.time)?;
        let time: i64 = time_raw
            .parse()
            .ok()
            .filter(|t| *t >= 0)
            .ok_or_else(|| GraphError::BadTimestamp { row, value: time_raw.to_owned() })?;
        let amt_raw = field(ci_amt, &schema.amount)?;
        let amount: f64 = amt_raw.parse().map_err(|_| GraphError::MalformedRow {
            row,
            field: schema.amount.clone(),
            reason: format!("not a number: `{amt_raw}`"),
        })?;
        if !amount.is_finite() {
            return Err(GraphError::MalformedRow { row, field: schema.amount.clone(), reason: "non-finite".into() });
        }
        if amount < 0.0 {
            return Err(GraphError::NegativeAmount { row });
        }
        if src == dst {
            rows.push((u32::MAX, u32::MAX, time, amount));
            continue;
        }
        let s = node_ids.intern(src);
        let d = node_ids.intern(dst);
        rows.push((s, d, time, amount));
    }
    let (transactions, self_transfers) = build_sorted_stream(rows);
    Ok(RawTransactions {
        node_ids,
        transactions,
        report: LoadReport { rows: n_rows, self_transfers },
    })
}

pub fn write_transactions<W: Write>(writer: W, graph: &TemporalGraph) -> Result<(), GraphError> {
    let io = |e: csv::Error| GraphError::Io {
        path: "<writer>".into(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["src", "dst", "time", "amount"]).map_err(io)?;
    for e in &graph.edges {
        w.write_record([
            graph.node_ids.address(e.src),
            graph.node_ids.address(e.dst),
            &e.time.to_string(),
            &e.amount.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|source| GraphError::Io { path: "<writer>".into(), source })
}

pub fn load_labels(path: &Path) -> Result<Vec<(String, bool)>, GraphError> {
    read_labels(open(path)?)
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<(String, bool)>, GraphError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(0, e))?.clone();
    let ci_addr = column(&headers, "address")?;
    let ci_label = column(&headers, "label")?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let addr = rec.get(ci_addr).unwrap_or_default().to_owned();
        let value = rec.get(ci_label).unwrap_or_default();
        let y = match value {
            "0" => false,
            "1" => true,
            other => return Err(GraphError::BadLabel { row, value: other.to_owned() }),
        };
        out.push((addr, y));
    }
    Ok(out)
}

/// Writes `address,label` for every labeled node.
pub fn write_labels<W: Write>(writer: W, graph: &TemporalGraph) -> Result<(), GraphError> {
    let io = |e: csv::Error| GraphError::Io { path: "<writer>".into(), source: std::io::Error::other(e.to_string()) };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["address", "label"]).map_err(io)?;
    for (i, l) in graph.labels.iter().enumerate() {
        if let Some(y) = l {
            w.write_record([graph.node_ids.address(i as u32), if *y { "1" } else { "0" }])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|source| GraphError::Io { path: "<writer>".into(), source })
}

/// Reads an `address,f0,...,f{d-1}` override. Nodes absent from the file get
/// zero rows; unknown addresses are an error.
pub fn load_feature_override(path: &Path, graph: &TemporalGraph) -> Result<Array2<f64>, GraphError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_err(0, e))?.clone();
    if headers.get(0) != Some("address") || headers.len() < 2 {
        return Err(GraphError::BadFeatures("header must be address,f0,...".into()));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(GraphError::BadFeatures(format!("column {} should be f{j}, found `{h}`", j + 1)));
        }
    }
    let d = headers.len() - 1;
    let mut x = Array2::zeros((graph.num_nodes, d));
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let addr = rec.get(0).unwrap_or_default();
        let id = graph
            .node_ids
            .get(addr)
            .ok_or_else(|| GraphError::BadFeatures(format!("row {row}: unknown address `{addr}`")))?;
        for j in 0..d {
            let raw = rec.get(j + 1).unwrap_or_default();
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| GraphError::BadFeatures(format!("row {row}: bad value `{raw}` in f{j}")))?;
            x[[id as usize, j]] = v;
        }
    }
    Ok(x)
}
