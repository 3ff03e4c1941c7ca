//! Machine-readable result tables. Each row is reproducible from the config
//! and seed recorded alongside it; the emitted file starts with a metadata
//! record (config hash, base seed, tool version) so a figure can be rebuilt
//! from the file alone.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

use crate::model::SystemConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::JsonLines),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

/// One experiment outcome: a single (seed, sweep value) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub sweep_value: f64,
    pub status: String,
    pub total_power_db: Option<f64>,
    pub per_user_power_db: Vec<f64>,
    pub weighted_objective: Option<f64>,
    pub dual_objective: Option<f64>,
    pub duality_gap: Option<f64>,
    pub iterations: usize,
    pub empirical_sinr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seed0: u64,
    pub trials: usize,
    pub version: String,
}

impl Metadata {
    pub fn new(config: &SystemConfig, seed0: u64, trials: usize) -> Self {
        Self {
            config_hash: config_hash(config),
            seed0,
            trials,
            version: TOOL_VERSION.to_string(),
        }
    }
}

/// FNV-1a over the config's canonical text form.
pub fn config_hash(config: &SystemConfig) -> String {
    let mut text = String::new();
    let _ = write!(
        text,
        "M={} K={} N={:?} L={} gamma={:?} w={:?} sigma2={} eps={} iters={}",
        config.m,
        config.k,
        config.n,
        config.l,
        config.gamma,
        config.w,
        config.sigma2,
        config.epsilon,
        config.max_iters
    );
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot emit an empty result table")]
    EmptyTable,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results: {0}")]
    Parse(String),
}

const CSV_HEADER: &[&str] = &[
    "experiment",
    "seed",
    "sweep_value",
    "status",
    "total_power_db",
    "per_user_power_db",
    "weighted_objective",
    "dual_objective",
    "duality_gap",
    "iterations",
    "empirical_sinr_db",
];

/// Six significant digits, plain decimal exponent notation.
fn fmt6(v: f64) -> String {
    format!("{v:.5e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|&x| fmt6(x)).collect::<Vec<_>>().join(";")
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Write the table to `writer` in the chosen format, metadata record first.
pub fn write_results<W: Write>(
    rows: &[ResultRow],
    meta: &Metadata,
    format: OutputFormat,
    writer: &mut W,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(
                writer,
                "# config_hash={} seed0={} trials={} version={}",
                meta.config_hash, meta.seed0, meta.trials, meta.version
            )?;
            writeln!(writer, "{}", CSV_HEADER.join(","))?;
            for row in rows {
                let fields = [
                    csv_quote(&row.experiment),
                    row.seed.to_string(),
                    fmt6(row.sweep_value),
                    row.status.clone(),
                    fmt_opt(row.total_power_db),
                    csv_quote(&fmt_vec(&row.per_user_power_db)),
                    fmt_opt(row.weighted_objective),
                    fmt_opt(row.dual_objective),
                    fmt_opt(row.duality_gap),
                    row.iterations.to_string(),
                    csv_quote(&fmt_vec(&row.empirical_sinr_db)),
                ];
                writeln!(writer, "{}", fields.join(","))?;
            }
        }
        OutputFormat::JsonLines => {
            writeln!(writer, "{}", serde_json::to_string(meta)?)?;
            for row in rows {
                writeln!(writer, "{}", serde_json::to_string(row)?)?;
            }
        }
    }
    Ok(())
}

/// Write the table to a file, surfacing IO errors with the path attached.
pub fn emit_results(
    rows: &[ResultRow],
    meta: &Metadata,
    format: OutputFormat,
    path: &Path,
) -> Result<(), ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    let io = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut writer = std::io::BufWriter::new(file);
    write_results(rows, meta, format, &mut writer).map_err(io)?;
    writer.flush().map_err(io)
}

/// Parse a table previously produced by [`write_results`].
pub fn parse_results<R: BufRead>(
    format: OutputFormat,
    reader: R,
) -> Result<(Metadata, Vec<ResultRow>), ReportError> {
    let mut lines = reader.lines();
    let bad = |msg: &str| ReportError::Parse(msg.to_string());
    match format {
        OutputFormat::Csv => {
            let meta_line = lines
                .next()
                .ok_or_else(|| bad("missing metadata line"))?
                .map_err(|e| bad(&e.to_string()))?;
            let meta = parse_csv_metadata(&meta_line)?;
            let header = lines
                .next()
                .ok_or_else(|| bad("missing header line"))?
                .map_err(|e| bad(&e.to_string()))?;
            if header != CSV_HEADER.join(",") {
                return Err(bad("unexpected header"));
            }
            let mut rows = Vec::new();
            for line in lines {
                let line = line.map_err(|e| bad(&e.to_string()))?;
                if line.is_empty() {
                    continue;
                }
                rows.push(parse_csv_row(&line)?);
            }
            Ok((meta, rows))
        }
        OutputFormat::JsonLines => {
            let meta_line = lines
                .next()
                .ok_or_else(|| bad("missing metadata line"))?
                .map_err(|e| bad(&e.to_string()))?;
            let meta: Metadata =
                serde_json::from_str(&meta_line).map_err(|e| bad(&e.to_string()))?;
            let mut rows = Vec::new();
            for line in lines {
                let line = line.map_err(|e| bad(&e.to_string()))?;
                if line.is_empty() {
                    continue;
                }
                rows.push(serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?);
            }
            Ok((meta, rows))
        }
    }
}

fn parse_csv_metadata(line: &str) -> Result<Metadata, ReportError> {
    let bad = || ReportError::Parse(format!("bad metadata line: {line}"));
    let body = line.strip_prefix("# ").ok_or_else(bad)?;
    let mut meta = Metadata {
        config_hash: String::new(),
        seed0: 0,
        trials: 0,
        version: String::new(),
    };
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        match k {
            "config_hash" => meta.config_hash = v.to_string(),
            "seed0" => meta.seed0 = v.parse().map_err(|_| bad())?,
            "trials" => meta.trials = v.parse().map_err(|_| bad())?,
            "version" => meta.version = v.to_string(),
            _ => return Err(bad()),
        }
    }
    Ok(meta)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

fn parse_csv_row(line: &str) -> Result<ResultRow, ReportError> {
    let fields = split_csv_line(line);
    if fields.len() != CSV_HEADER.len() {
        return Err(ReportError::Parse(format!(
            "expected {} fields, got {}",
            CSV_HEADER.len(),
            fields.len()
        )));
    }
    let num = |s: &str| -> Result<f64, ReportError> {
        s.parse()
            .map_err(|_| ReportError::Parse(format!("bad number {s:?}")))
    };
    let opt = |s: &str| -> Result<Option<f64>, ReportError> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let vec = |s: &str| -> Result<Vec<f64>, ReportError> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(';').map(num).collect()
    };
    Ok(ResultRow {
        experiment: fields[0].clone(),
        seed: fields[1]
            .parse()
            .map_err(|_| ReportError::Parse("bad seed".into()))?,
        sweep_value: num(&fields[2])?,
        status: fields[3].clone(),
        total_power_db: opt(&fields[4])?,
        per_user_power_db: vec(&fields[5])?,
        weighted_objective: opt(&fields[6])?,
        dual_objective: opt(&fields[7])?,
        duality_gap: opt(&fields[8])?,
        iterations: fields[9]
            .parse()
            .map_err(|_| ReportError::Parse("bad iterations".into()))?,
        empirical_sinr_db: vec(&fields[10])?,
    })
}
