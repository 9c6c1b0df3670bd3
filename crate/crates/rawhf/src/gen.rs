//! Synthetic dataset and workload generation.
//!
//! Two shapes: a broad table (hundreds of columns, a small share of which
//! the complex queries touch) and a narrow three-column table whose
//! workload is dominated by long self-join chains. Both are seeded and
//! byte-deterministic, so generated fixtures can be checked into test
//! expectations.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Paths produced by one generation run.
#[derive(Debug, Clone)]
pub struct GenOut {
    pub table: String,
    pub schema_path: PathBuf,
    pub csv_path: PathBuf,
    pub workload_path: PathBuf,
    pub rows: u64,
    pub columns: usize,
}

/// Broad-table spec: `columns` attributes, of which roughly
/// `cq_attr_share` are touched by the complex half of the workload.
#[derive(Debug, Clone)]
pub struct BroadSpec {
    pub columns: usize,
    pub rows: u64,
    pub cq_attr_share: f64,
    pub queries: usize,
    pub seed: u64,
}

impl Default for BroadSpec {
    fn default() -> BroadSpec {
        BroadSpec { columns: 500, rows: 100_000, cq_attr_share: 0.07, queries: 12, seed: 42 }
    }
}

/// Narrow-table spec: a three-column `(s, p, o)` table and a workload of
/// `queries` chain queries with `joins` joins each.
#[derive(Debug, Clone)]
pub struct NarrowSpec {
    pub rows: u64,
    pub queries: usize,
    pub joins: usize,
    /// Distinct values in the `p` column.
    pub predicates: u64,
    pub seed: u64,
}

impl Default for NarrowSpec {
    fn default() -> NarrowSpec {
        NarrowSpec { rows: 150_000, queries: 9, joins: 5, predicates: 16, seed: 42 }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum ColKind {
    Int,
    Float,
    Text,
}

/// Column type pattern for the broad table: mostly integers with periodic
/// float and text columns, so loading costs are realistic while join keys
/// stay integer.
fn broad_kind(col: usize) -> ColKind {
    if col % 11 == 5 {
        ColKind::Text
    } else if col % 7 == 3 {
        ColKind::Float
    } else {
        ColKind::Int
    }
}

fn attr_name(col: usize) -> String {
    format!("a{col:03}")
}

/// Generates the broad dataset: schema, CSV data, and a workload whose
/// complex queries touch a fixed pool of attributes (~`cq_attr_share` of
/// the schema) while simple queries roam the rest.
pub fn gen_broad(dir: &Path, spec: &BroadSpec) -> Result<GenOut> {
    if spec.columns < 12 || spec.queries < 2 {
        return Err(Error::Config("broad spec needs ≥12 columns and ≥2 queries".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let table = "broad";

    // Schema file.
    let schema_path = dir.join("broad.schema");
    let mut schema_text = format!("TABLE {table}\n");
    for c in 0..spec.columns {
        let (ty, width) = match broad_kind(c) {
            ColKind::Int => ("int64", 8.0),
            ColKind::Float => ("float64", 8.0),
            ColKind::Text => ("text", 6.0),
        };
        writeln!(schema_text, "{} {ty} {width}", attr_name(c)).unwrap();
    }
    std::fs::write(&schema_path, schema_text).map_err(|e| Error::io(&schema_path, e))?;

    // Data file. Integers are uniform in 0..1000 so `< 10` predicates keep
    // roughly 1% and self-join keys fan out at rows/1000.
    let csv_path = dir.join("broad.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let mut line = String::with_capacity(spec.columns * 6);
    for _ in 0..spec.rows {
        line.clear();
        for c in 0..spec.columns {
            if c > 0 {
                line.push(',');
            }
            match broad_kind(c) {
                ColKind::Int => write!(line, "{}", rng.random_range(0..1000)).unwrap(),
                ColKind::Float => {
                    write!(line, "{:.2}", rng.random_range(0.0..1000.0)).unwrap()
                }
                ColKind::Text => write!(line, "w{:04}", rng.random_range(0..1000)).unwrap(),
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    // Attribute pool for complex queries: integer columns only (join keys
    // must hash-match), size pinned to the requested share of the schema.
    let cq_count = spec.queries / 2;
    let int_cols: Vec<usize> =
        (0..spec.columns).filter(|&c| broad_kind(c) == ColKind::Int).collect();
    let mut pool_size = ((spec.columns as f64) * spec.cq_attr_share).round() as usize;
    pool_size = pool_size.clamp(2 * cq_count, int_cols.len());
    let mut pool = int_cols.clone();
    pool.shuffle(&mut rng);
    pool.truncate(pool_size);

    let mut workload = String::from("# generated broad workload\n");
    let mut q_id = 0u64;
    // Complex queries: self-joins over round-robin slices of the pool, so
    // the union of their attributes is exactly the pool.
    for i in 0..cq_count {
        q_id += 1;
        let slice: Vec<usize> = pool.iter().copied().skip(i).step_by(cq_count).collect();
        let key = attr_name(slice[0]);
        let filt = attr_name(slice[1 % slice.len()]);
        let selects: Vec<String> =
            slice.iter().map(|&c| format!("x.{}", attr_name(c))).collect();
        let freq = rng.random_range(1..=5);
        let sql = if i % 3 == 2 {
            format!(
                "SELECT COUNT(*), SUM(x.{key}) FROM {table} x, {table} y \
                 WHERE x.{key} = y.{key} AND y.{filt} < 10 AND x.{filt} < 10"
            )
        } else {
            format!(
                "SELECT {} FROM {table} x, {table} y \
                 WHERE x.{key} = y.{key} AND y.{filt} < 10 AND x.{filt} < 10",
                selects.join(", ")
            )
        };
        writeln!(workload, "Q{q_id} freq={freq}: {sql}").unwrap();
    }
    // Simple queries: scan attributes outside the pool; the first one also
    // touches a pool attribute so the partitions genuinely overlap.
    let mut rest: Vec<usize> = (0..spec.columns).filter(|c| !pool.contains(c)).collect();
    rest.shuffle(&mut rng);
    let sq_count = spec.queries - cq_count;
    for i in 0..sq_count {
        q_id += 1;
        let take = 3.min(rest.len() / sq_count.max(1)).max(1);
        let mut attrs: Vec<usize> =
            rest.iter().copied().skip(i).step_by(sq_count).take(take).collect();
        if i == 0 {
            attrs.push(pool[0]);
        }
        let selects: Vec<String> = attrs.iter().map(|&c| attr_name(c)).collect();
        let filt = attrs
            .iter()
            .copied()
            .find(|&c| broad_kind(c) == ColKind::Int)
            .map(attr_name)
            .unwrap_or_else(|| attr_name(pool[0]));
        let freq = rng.random_range(1..=5);
        writeln!(
            workload,
            "Q{q_id} freq={freq}: SELECT {} FROM {table} WHERE {filt} < 50",
            selects.join(", ")
        )
        .unwrap();
    }
    let workload_path = dir.join("broad.workload");
    std::fs::write(&workload_path, workload).map_err(|e| Error::io(&workload_path, e))?;

    Ok(GenOut {
        table: table.into(),
        schema_path,
        csv_path,
        workload_path,
        rows: spec.rows,
        columns: spec.columns,
    })
}

/// Generates the narrow dataset: RDF-style `(s, p, o)` triples. `s` is a
/// dense entity IRI and `o` names a uniformly random entity, so unfiltered
/// chain joins preserve cardinality. The workload is `queries` chain queries
/// of `joins` self-joins each.
pub fn gen_narrow(dir: &Path, spec: &NarrowSpec) -> Result<GenOut> {
    if spec.joins < 1 || spec.queries < 1 {
        return Err(Error::Config("narrow spec needs ≥1 join and ≥1 query".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let table = "lod";
    let ns = "http://lod.example";

    let schema_path = dir.join("lod.schema");
    std::fs::write(
        &schema_path,
        format!("TABLE {table}\ns text 26\np text 22\no text 26\n"),
    )
    .map_err(|e| Error::io(&schema_path, e))?;

    let csv_path = dir.join("lod.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let mut line = String::new();
    for s in 0..spec.rows {
        line.clear();
        let p = rng.random_range(0..spec.predicates);
        let o = rng.random_range(0..spec.rows);
        writeln!(line, "{ns}/e{s:07},{ns}/p{p:02},{ns}/e{o:07}").unwrap();
        w.write_all(line.as_bytes()).map_err(|e| Error::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let mut workload = String::from("# generated narrow workload\n");
    for q in 0..spec.queries {
        let q_id = q as u64 + 1;
        let n = spec.joins;
        let mut from = Vec::new();
        let mut conds = Vec::new();
        for i in 0..=n {
            from.push(format!("{table} t{i}"));
            if i > 0 {
                conds.push(format!("t{}.o = t{i}.s", i - 1));
            }
        }
        // Vary the aggregated instance so statements differ while costs
        // stay comparable. Every attribute is touched, so the whole narrow
        // table is workload-relevant.
        let probe = q % (n + 1);
        let sql = format!(
            "SELECT COUNT(*), MIN(t{probe}.s), MAX(t{probe}.p), MAX(t{n}.o) FROM {} WHERE {}",
            from.join(", "),
            conds.join(" AND ")
        );
        let freq = rng.random_range(1..=3);
        writeln!(workload, "Q{q_id} freq={freq}: {sql}").unwrap();
    }
    let workload_path = dir.join("lod.workload");
    std::fs::write(&workload_path, workload).map_err(|e| Error::io(&workload_path, e))?;

    Ok(GenOut {
        table: table.into(),
        schema_path,
        csv_path,
        workload_path,
        rows: spec.rows,
        columns: 3,
    })
}
