//! Resource trace files.
//!
//! A trace is a CSV with the header
//! `title,wei_per_hr,mips,usd_per_gb,ram_gb,bw_mbps,cpu_cores`, one
//! instance type per row. The price column is read as an exact decimal.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use smartson_core::{MatchError, MoneyAmount, MoneyError, ResourceSpec};
use thiserror::Error;

pub const HEADER: [&str; 7] = [
    "title",
    "wei_per_hr",
    "mips",
    "usd_per_gb",
    "ram_gb",
    "bw_mbps",
    "cpu_cores",
];

const BUNDLED: &str = include_str!("../data/trace.csv");

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("trace header must be `{}`, found `{found}`", HEADER.join(","))]
    Header { found: String },
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("line {line}: price: {source}")]
    Price { line: u64, source: MoneyError },
    #[error("line {line}: {source}")]
    Resource { line: u64, source: MatchError },
    #[error("line {line}: duplicate title {title:?}")]
    Duplicate { line: u64, title: String },
    #[error("trace has no rows")]
    Empty,
}

#[derive(Debug, Deserialize)]
struct Row {
    title: String,
    wei_per_hr: String,
    mips: f64,
    usd_per_gb: f64,
    ram_gb: f64,
    bw_mbps: f64,
    cpu_cores: f64,
}

/// The 34-row EC2 trace shipped with the crate.
pub fn bundled_trace() -> Vec<ResourceSpec> {
    parse_trace(BUNDLED.as_bytes()).expect("bundled trace is valid")
}

pub fn bundled_trace_csv() -> &'static str {
    BUNDLED
}

pub fn load_trace(path: &Path) -> Result<Vec<ResourceSpec>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(file)
}

pub fn parse_trace<R: Read>(reader: R) -> Result<Vec<ResourceSpec>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|source| TraceError::Csv { line: 1, source })?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(TraceError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out: Vec<ResourceSpec> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|source| {
            let line = source.position().map_or(0, |p| p.line());
            TraceError::Csv { line, source }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&header))
            .map_err(|source| TraceError::Csv { line, source })?;
        let price: MoneyAmount = row
            .wei_per_hr
            .parse()
            .map_err(|source| TraceError::Price { line, source })?;
        let spec = ResourceSpec::new(
            row.title,
            price,
            row.mips,
            row.usd_per_gb,
            row.ram_gb,
            row.bw_mbps,
            row.cpu_cores,
        )
        .map_err(|source| TraceError::Resource { line, source })?;
        if out.iter().any(|r| r.title == spec.title) {
            return Err(TraceError::Duplicate {
                line,
                title: spec.title,
            });
        }
        out.push(spec);
    }
    if out.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_trace_has_every_row() {
        let t = bundled_trace();
        assert_eq!(t.len(), 34);
        assert_eq!(t[0].title, "t3a.nano");
        assert_eq!(t[0].price.to_string(), "0.004700000000000000");
        let last = t.last().unwrap();
        assert_eq!(
            (last.title.as_str(), last.mips, last.cpu_cores),
            ("m5d.xlarge", 317900.0, 4.0)
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_header = "name,wei_per_hr,mips,usd_per_gb,ram_gb,bw_mbps,cpu_cores\n";
        assert!(matches!(
            parse_trace(bad_header.as_bytes()),
            Err(TraceError::Header { .. })
        ));

        let csv = format!("{}\nok,0.1,1,1,1,1,1\nbad,0.1,x,1,1,1,1\n", HEADER.join(","));
        match parse_trace(csv.as_bytes()) {
            Err(TraceError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }

        let csv = format!("{}\nneg,0.1,-1,1,1,1,1\n", HEADER.join(","));
        assert!(matches!(
            parse_trace(csv.as_bytes()),
            Err(TraceError::Resource { line: 2, .. })
        ));

        let csv = format!("{}\np,0.1234567890123456789,1,1,1,1,1\n", HEADER.join(","));
        assert!(matches!(
            parse_trace(csv.as_bytes()),
            Err(TraceError::Price { line: 2, .. })
        ));

        let csv = format!("{}\na,0.1,1,1,1,1,1\na,0.2,1,1,1,1,1\n", HEADER.join(","));
        assert!(matches!(
            parse_trace(csv.as_bytes()),
            Err(TraceError::Duplicate { line: 3, .. })
        ));

        let csv = format!("{}\n", HEADER.join(","));
        assert!(matches!(parse_trace(csv.as_bytes()), Err(TraceError::Empty)));
    }
}
