//! Report artifacts.
//!
//! Every writer returns a `String` so output can be compared byte for byte;
//! [`emit_report`] writes them into a directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use smartson_core::harness::{balance_series, BalanceSeries};
use smartson_core::platform::LogEntry;
use smartson_core::{Ledger, SimulationReport};

pub const EPOCHS_HEADER: &str = "epoch,requested,winner,offered,wei,contract_fee";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
}

/// One row per completed trade, money with trailing zeros trimmed.
pub fn epochs_csv(report: &SimulationReport) -> String {
    let mut out = format!("{EPOCHS_HEADER}\n");
    for r in &report.records {
        out.push_str(&csv_line(&[
            r.epoch.to_string(),
            r.requested.clone(),
            r.winner.clone(),
            r.offered.clone(),
            r.amount.trimmed().to_string(),
            r.contract_fee.trimmed().to_string(),
        ]));
    }
    out
}

/// Provider balances after each epoch, one column per provider.
pub fn balances_csv(series: &[BalanceSeries]) -> String {
    let mut header = vec!["epoch".to_string()];
    header.extend(series.iter().map(|s| s.provider.clone()));
    let mut out = csv_line(&header);
    let len = series.first().map_or(0, |s| s.values.len());
    for k in 0..len {
        let mut row = vec![k.to_string()];
        row.extend(series.iter().map(|s| s.values[k].trimmed().to_string()));
        out.push_str(&csv_line(&row));
    }
    out
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn report_json(report: &SimulationReport) -> String {
    pretty(report)
}

pub fn balances_json(series: &[BalanceSeries]) -> String {
    pretty(&series)
}

#[derive(Serialize)]
struct LedgerDump {
    accounts: BTreeMap<String, String>,
    current_block: u64,
}

/// Accounts (hex id → balance with 18 fractional digits) and the block
/// height.
pub fn ledger_json(ledger: &Ledger) -> String {
    let dump = LedgerDump {
        accounts: ledger.accounts().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        current_block: ledger.current_block(),
    };
    pretty(&dump)
}

/// One JSON object per delivered message copy.
pub fn messages_jsonl(log: &[LogEntry]) -> String {
    let mut out = String::new();
    for entry in log {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        writeln!(out, "{line}").expect("writing to a String");
    }
    out
}

/// Writes the artifacts for `format` plus `ledger.json` and
/// `messages.jsonl`; returns the paths written.
pub fn emit_report(
    report: &SimulationReport,
    ledger: &Ledger,
    log: &[LogEntry],
    format: Format,
    dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let series = balance_series(report);
    let mut files: Vec<(&str, String)> = match format {
        Format::Csv => vec![
            ("epochs.csv", epochs_csv(report)),
            ("balances.csv", balances_csv(&series)),
        ],
        Format::Json => vec![
            ("report.json", report_json(report)),
            ("balances.json", balances_json(&series)),
        ],
    };
    files.push(("ledger.json", ledger_json(ledger)));
    files.push(("messages.jsonl", messages_jsonl(log)));
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
