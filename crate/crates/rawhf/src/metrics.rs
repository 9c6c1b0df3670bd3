//! Evaluation metrics over run records: workload execution time, loading
//! time, per-query time, attribute-access and attribute-load fractions, and
//! the report files the CLI emits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::catalog::{Catalog, WorkloadQuery};
use crate::error::{Error, Result};
use crate::exec::{QueryRunRecord, Route};
use crate::orr::PartitionPlan;
use crate::value::Row;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Serial,
    Parallel,
}

/// Workload execution time. Serial runs compose loading and query time;
/// parallel runs are measured as the wall-clock span of the whole phase.
pub fn compute_wet(
    mode: ExecutionMode,
    dlt_seconds: f64,
    qet_seconds: f64,
    wall_span_seconds: Option<f64>,
) -> Result<f64> {
    match mode {
        ExecutionMode::Serial => Ok(dlt_seconds + qet_seconds),
        ExecutionMode::Parallel => wall_span_seconds
            .ok_or_else(|| Error::Config("parallel WET requires a measured wall span".into())),
    }
}

/// Fraction of schema attributes the workload touches. The attribute
/// universe is every attribute of the tables the workload references.
pub fn compute_faa(catalog: &Catalog, workload: &[WorkloadQuery]) -> Result<f64> {
    if workload.is_empty() {
        return Ok(0.0);
    }
    let mut accessed = BTreeSet::new();
    let mut tables = BTreeSet::new();
    for q in workload {
        accessed.extend(q.accessed_attributes(catalog));
        for inst in &q.table_instances {
            tables.insert(inst.table.clone());
        }
    }
    let mut total = 0usize;
    for t in &tables {
        total += catalog.table_by_name(t)?.schema.attributes.len();
    }
    if total == 0 {
        return Err(Error::Schema("referenced tables have no attributes".into()));
    }
    Ok(accessed.len() as f64 / total as f64)
}

/// Fraction of schema attributes the plan loads. The universe is every
/// attribute of the tables the plan mentions.
pub fn compute_fal(catalog: &Catalog, plan: &PartitionPlan) -> Result<f64> {
    let mut tables = BTreeSet::new();
    for (t, _) in plan.sq_raw.iter().chain(plan.cq_db.iter()).chain(plan.covered_attrs.iter()) {
        tables.insert(t.clone());
    }
    if tables.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0usize;
    for t in &tables {
        total += catalog.table_by_name(t)?.schema.attributes.len();
    }
    if total == 0 {
        return Err(Error::Schema("planned tables have no attributes".into()));
    }
    let loaded: BTreeSet<_> = plan.covered_attrs.iter().collect();
    Ok(loaded.len() as f64 / total as f64)
}

/// Order-insensitive digest of a result set: rows are canonically encoded,
/// sorted, and hashed. Two strategies returning the same multiset of rows
/// produce the same checksum.
pub fn result_checksum(rows: &[Row]) -> String {
    let mut encoded: Vec<Vec<u8>> = rows
        .iter()
        .map(|row| {
            let mut buf = Vec::new();
            for v in row {
                v.encode_canonical(&mut buf);
            }
            buf
        })
        .collect();
    encoded.sort_unstable();
    let mut hasher = Sha256::new();
    for row in &encoded {
        hasher.update((row.len() as u64).to_le_bytes());
        hasher.update(row);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").unwrap();
    }
    out
}

/// One query's line in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryReportRow {
    pub record: QueryRunRecord,
    pub checksum: String,
}

/// Everything a workload run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadReport {
    pub strategy: String,
    pub dlt_seconds: f64,
    /// Sum of per-query execution times.
    pub qet_seconds: f64,
    pub wet_seconds: f64,
    pub faa: f64,
    pub fal: f64,
    pub cpu_seconds: f64,
    pub peak_rss_bytes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub db_size_bytes: u64,
    pub queries: Vec<QueryReportRow>,
}

const CSV_HEADER: &str = "row,strategy,q_id,qet_seconds,grant_bytes,spill_bytes,rows_out,\
                          input_rows,routes,checksum,wet_seconds,dlt_seconds,faa,fal,\
                          cpu_seconds,peak_rss_bytes,bytes_read,bytes_written,db_size_bytes";

fn routes_field(record: &QueryRunRecord) -> String {
    let mut parts = Vec::new();
    for ((t, a), route) in &record.route {
        let tag = match route {
            Route::Loaded => "loaded",
            Route::Raw => "raw",
        };
        parts.push(format!("{t}.{a}={tag}"));
    }
    parts.join(";")
}

fn parse_routes(field: &str) -> Result<std::collections::BTreeMap<(String, String), Route>> {
    let mut out = std::collections::BTreeMap::new();
    if field.is_empty() {
        return Ok(out);
    }
    for part in field.split(';') {
        let (key, tag) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse { msg: format!("bad route '{part}'"), pos: 0 })?;
        let (t, a) = key
            .split_once('.')
            .ok_or_else(|| Error::Parse { msg: format!("bad route key '{key}'"), pos: 0 })?;
        let route = match tag {
            "loaded" => Route::Loaded,
            "raw" => Route::Raw,
            other => {
                return Err(Error::Parse { msg: format!("bad route tag '{other}'"), pos: 0 })
            }
        };
        out.insert((t.to_string(), a.to_string()), route);
    }
    Ok(out)
}

impl WorkloadReport {
    /// One row per query plus a summary row, in a fixed column set.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for q in &self.queries {
            let r = &q.record;
            writeln!(
                out,
                "query,{},{},{:.6},{},{},{},{},{},{},,,,,,,,,",
                self.strategy,
                r.q_id,
                r.qet_seconds,
                r.work_mem_granted,
                r.spill_bytes,
                r.rows_out,
                r.input_row_count,
                routes_field(r),
                q.checksum
            )
            .unwrap();
        }
        writeln!(
            out,
            "summary,{},,{:.6},,,,,,,{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            self.strategy,
            self.qet_seconds,
            self.wet_seconds,
            self.dlt_seconds,
            self.faa,
            self.fal,
            self.cpu_seconds,
            self.peak_rss_bytes,
            self.bytes_read,
            self.bytes_written,
            self.db_size_bytes
        )
        .unwrap();
        out
    }

    pub fn parse_csv(text: &str) -> Result<WorkloadReport> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != CSV_HEADER {
            return Err(Error::Parse { msg: "unrecognized report header".into(), pos: 0 });
        }
        let mut report = WorkloadReport {
            strategy: String::new(),
            dlt_seconds: 0.0,
            qet_seconds: 0.0,
            wet_seconds: 0.0,
            faa: 0.0,
            fal: 0.0,
            cpu_seconds: 0.0,
            peak_rss_bytes: 0,
            bytes_read: 0,
            bytes_written: 0,
            db_size_bytes: 0,
            queries: Vec::new(),
        };
        let mut saw_summary = false;
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                msg: format!("report line {}: {msg}", lineno + 2),
                pos: 0,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 19 {
                return Err(err(format!("expected 19 fields, found {}", f.len())));
            }
            let num =
                |s: &str| -> Result<f64> { s.parse().map_err(|e| err(format!("{e}: '{s}'"))) };
            let int =
                |s: &str| -> Result<u64> { s.parse().map_err(|e| err(format!("{e}: '{s}'"))) };
            match f[0] {
                "query" => {
                    report.queries.push(QueryReportRow {
                        record: QueryRunRecord {
                            q_id: int(f[2])?,
                            qet_seconds: num(f[3])?,
                            work_mem_granted: int(f[4])?,
                            spill_bytes: int(f[5])?,
                            rows_out: int(f[6])?,
                            route: parse_routes(f[8])?,
                            input_row_count: int(f[7])?,
                        },
                        checksum: f[9].to_string(),
                    });
                }
                "summary" => {
                    saw_summary = true;
                    report.strategy = f[1].to_string();
                    report.qet_seconds = num(f[3])?;
                    report.wet_seconds = num(f[10])?;
                    report.dlt_seconds = num(f[11])?;
                    report.faa = num(f[12])?;
                    report.fal = num(f[13])?;
                    report.cpu_seconds = num(f[14])?;
                    report.peak_rss_bytes = int(f[15])?;
                    report.bytes_read = int(f[16])?;
                    report.bytes_written = int(f[17])?;
                    report.db_size_bytes = int(f[18])?;
                }
                other => return Err(err(format!("unknown row kind '{other}'"))),
            }
        }
        if !saw_summary {
            return Err(Error::Parse { msg: "report has no summary row".into(), pos: 0 });
        }
        Ok(report)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<WorkloadReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WorkloadReport::parse_csv(&text)
    }

    /// Human-readable table for terminals.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "strategy: {}", self.strategy).unwrap();
        writeln!(
            out,
            "{:>5} {:>12} {:>14} {:>12} {:>10} {:>10}  {}",
            "q_id", "qet_s", "grant_bytes", "spill_bytes", "rows_out", "input", "routes"
        )
        .unwrap();
        for q in &self.queries {
            let r = &q.record;
            writeln!(
                out,
                "{:>5} {:>12.4} {:>14} {:>12} {:>10} {:>10}  {}",
                r.q_id,
                r.qet_seconds,
                r.work_mem_granted,
                r.spill_bytes,
                r.rows_out,
                r.input_row_count,
                routes_field(r)
            )
            .unwrap();
        }
        writeln!(out, "---").unwrap();
        writeln!(
            out,
            "wet={:.4}s dlt={:.4}s qet={:.4}s faa={:.3} fal={:.3}",
            self.wet_seconds, self.dlt_seconds, self.qet_seconds, self.faa, self.fal
        )
        .unwrap();
        writeln!(
            out,
            "cpu={:.2}s peak_rss={} read={} written={} db_size={}",
            self.cpu_seconds,
            self.peak_rss_bytes,
            self.bytes_read,
            self.bytes_written,
            self.db_size_bytes
        )
        .unwrap();
        out
    }
}
