//! Ledger CSV emission: fixed header, floats at 12 significant digits,
//! flags as 0/1, LF line endings, trailing newline.

use regretlab_core::simulator::RunLedger;
use std::fmt::Write as _;
use thiserror::Error;

pub const CSV_HEADER: &str = "episode,episode_regret,cum_regret,optimism_ok,strong_optimism_ok,clip_ok_general,clip_ok_alpha,half_clip_ok,clip_bound_general";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv header mismatch: {0}")]
    BadHeader(String),
    #[error("csv row {row}: {msg}")]
    BadRow { row: usize, msg: String },
}

/// 12 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.11e}")
}

fn flag(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

pub fn ledger_to_csv(ledger: &RunLedger) -> String {
    let mut out = String::with_capacity(ledger.records.len() * 96 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &ledger.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.episode,
            format_float(r.episode_regret),
            format_float(r.cum_regret),
            flag(r.optimism_ok),
            flag(r.strong_optimism_ok),
            flag(r.clip_ok_general),
            flag(r.clip_ok_alpha),
            flag(r.half_clip_ok),
            format_float(r.clip_bound_general),
        )
        .expect("string write");
    }
    out
}

/// One parsed CSV row; used for round-trip checks and downstream reads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsvRow {
    pub episode: usize,
    pub episode_regret: f64,
    pub cum_regret: f64,
    pub optimism_ok: bool,
    pub strong_optimism_ok: bool,
    pub clip_ok_general: bool,
    pub clip_ok_alpha: bool,
    pub half_clip_ok: bool,
    pub clip_bound_general: f64,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != CSV_HEADER {
        return Err(CsvError::BadHeader(header.to_string()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(CsvError::BadRow { row, msg: format!("{} fields", fields.len()) });
        }
        let f = |j: usize| -> Result<f64, CsvError> {
            fields[j]
                .parse()
                .map_err(|e| CsvError::BadRow { row, msg: format!("field {j}: {e}") })
        };
        let b = |j: usize| -> Result<bool, CsvError> {
            match fields[j] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(CsvError::BadRow { row, msg: format!("flag field {j}: {other}") }),
            }
        };
        rows.push(CsvRow {
            episode: fields[0]
                .parse()
                .map_err(|e| CsvError::BadRow { row, msg: format!("episode: {e}") })?,
            episode_regret: f(1)?,
            cum_regret: f(2)?,
            optimism_ok: b(3)?,
            strong_optimism_ok: b(4)?,
            clip_ok_general: b(5)?,
            clip_ok_alpha: b(6)?,
            half_clip_ok: b(7)?,
            clip_bound_general: f(8)?,
        });
    }
    Ok(rows)
}
