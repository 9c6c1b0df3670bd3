//! Table schemas, raw-file registrations, and workload parsing.
//!
//! The catalog is built once during registration and read-only afterwards.
//! Attribute sizes reported here are planning estimates
//! (`row_count * avg_width_bytes`), the cost unit the partition planner
//! budgets against.

pub mod sql;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::csvio::{self, CsvOptions};
use crate::error::{Error, Result};
use crate::value::ValueType;

pub use sql::{
    AggFunc, AttrRef, CmpOp, Comparison, EquiJoin, SelectItem, TableInstance, WorkloadQuery,
};

/// Number of joins in a query: one less than its table-instance count, so
/// self-joins count once per extra instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct JoinCount(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDef {
    pub name: String,
    pub value_type: ValueType,
    pub avg_width_bytes: f64,
}

/// A table declaration: name plus ordered attribute list.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub table_name: String,
    pub attributes: Vec<AttributeDef>,
}

impl Schema {
    pub fn new(table_name: impl Into<String>) -> Schema {
        Schema { table_name: table_name.into(), attributes: Vec::new() }
    }

    pub fn attr(mut self, name: &str, ty: ValueType, width: f64) -> Schema {
        self.attributes.push(AttributeDef {
            name: name.to_string(),
            value_type: ty,
            avg_width_bytes: width,
        });
        self
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    fn validate(&self) -> Result<()> {
        if self.table_name.is_empty() {
            return Err(Error::Schema("empty table name".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate attribute '{}' in table '{}'",
                    a.name, self.table_name
                )));
            }
            if a.avg_width_bytes <= 0.0 {
                return Err(Error::Schema(format!(
                    "attribute '{}.{}' has nonpositive width",
                    self.table_name, a.name
                )));
            }
        }
        Ok(())
    }
}

/// Handle for a registered table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TableId(pub usize);

#[derive(Debug, Clone)]
pub struct TableEntry {
    pub id: TableId,
    pub schema: Schema,
    pub raw_path: PathBuf,
    pub row_count: u64,
}

/// Schema dictionary plus raw-file registrations.
#[derive(Debug, Default)]
pub struct Catalog {
    tables: Vec<TableEntry>,
    by_name: HashMap<String, TableId>,
    pub csv: CsvOptions,
}

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    pub fn with_csv(csv: CsvOptions) -> Catalog {
        Catalog { csv, ..Catalog::default() }
    }

    /// Registers a raw CSV file under a schema. The file is scanned once to
    /// count rows and verify that every row matches the schema arity.
    pub fn register_table(&mut self, schema: Schema, raw_file: &Path) -> Result<TableId> {
        schema.validate()?;
        if self.by_name.contains_key(&schema.table_name) {
            return Err(Error::Schema(format!(
                "table '{}' already registered",
                schema.table_name
            )));
        }
        let row_count = csvio::count_rows_checked(raw_file, schema.attributes.len(), self.csv)?;
        self.insert(schema, raw_file.to_path_buf(), row_count)
    }

    /// Registers a table with a previously verified row count (used when
    /// reloading a persisted catalog).
    fn insert(&mut self, schema: Schema, raw_path: PathBuf, row_count: u64) -> Result<TableId> {
        let id = TableId(self.tables.len());
        self.by_name.insert(schema.table_name.clone(), id);
        self.tables.push(TableEntry { id, schema, raw_path, row_count });
        Ok(id)
    }

    pub fn table(&self, id: TableId) -> &TableEntry {
        &self.tables[id.0]
    }

    pub fn table_by_name(&self, name: &str) -> Result<&TableEntry> {
        self.by_name
            .get(name)
            .map(|id| &self.tables[id.0])
            .ok_or_else(|| Error::Lookup { kind: "table", name: name.to_string() })
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableEntry> {
        self.tables.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Planning size of one attribute in bytes: `row_count * avg_width`,
    /// rounded up.
    pub fn attribute_size(&self, table: &str, attribute: &str) -> Result<u64> {
        let entry = self.table_by_name(table)?;
        let idx = entry.schema.attr_index(attribute).ok_or_else(|| Error::Lookup {
            kind: "attribute",
            name: format!("{table}.{attribute}"),
        })?;
        let width = entry.schema.attributes[idx].avg_width_bytes;
        Ok((entry.row_count as f64 * width).ceil() as u64)
    }

    /// Parses one SQL statement against this catalog. `q_id` and `frequency`
    /// come from the workload file, not the statement.
    pub fn parse_query(&self, sql_text: &str, q_id: u64, frequency: u64) -> Result<WorkloadQuery> {
        sql::parse(self, sql_text, q_id, frequency)
    }

    /// Parses a workload file: one query per line, optional
    /// `Q<id> [freq=<n>]:` prefix, `#` comments ignored.
    pub fn parse_workload(&self, text: &str) -> Result<Vec<WorkloadQuery>> {
        let mut queries = Vec::new();
        let mut next_id = 1u64;
        let mut seen = std::collections::HashSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (q_id, frequency, sql) = split_workload_line(line, next_id)?;
            if !seen.insert(q_id) {
                return Err(Error::Parse {
                    msg: format!("duplicate query id Q{q_id}"),
                    pos: 0,
                });
            }
            queries.push(self.parse_query(sql, q_id, frequency)?);
            next_id = q_id + 1;
        }
        Ok(queries)
    }

    /// Serializes the registrations so a later process can reload them
    /// without re-scanning the raw files.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tables {
            writeln!(out, "TABLE {}", t.schema.table_name).unwrap();
            writeln!(out, "PATH {}", t.raw_path.display()).unwrap();
            writeln!(out, "ROWS {}", t.row_count).unwrap();
            for a in &t.schema.attributes {
                writeln!(out, "{} {} {}", a.name, a.value_type, a.avg_width_bytes).unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, csv: CsvOptions) -> Result<Catalog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut catalog = Catalog::with_csv(csv);
        for block in parse_schema_blocks(&text)? {
            let (raw_path, row_count) = match (block.path, block.rows) {
                (Some(p), Some(r)) => (p, r),
                _ => {
                    return Err(Error::Schema(format!(
                        "catalog entry for '{}' missing PATH/ROWS",
                        block.schema.table_name
                    )))
                }
            };
            block.schema.validate()?;
            catalog.insert(block.schema, raw_path, row_count)?;
        }
        Ok(catalog)
    }
}

fn split_workload_line(line: &str, default_id: u64) -> Result<(u64, u64, &str)> {
    // Try the "Q<id> [freq=<n>]:" prefix; anything else is a bare statement.
    let bytes = line.as_bytes();
    if bytes[0].eq_ignore_ascii_case(&b'Q') {
        let digits: usize = bytes[1..].iter().take_while(|b| b.is_ascii_digit()).count();
        if digits > 0 {
            let rest = &line[1 + digits..];
            let trimmed = rest.trim_start();
            if let Some(stmt) = trimmed.strip_prefix(':') {
                let q_id = line[1..1 + digits].parse().unwrap();
                return Ok((q_id, 1, stmt.trim_start()));
            }
            if let Some(freq_part) = trimmed.strip_prefix("freq=") {
                let fd = freq_part.bytes().take_while(|b| b.is_ascii_digit()).count();
                let after = freq_part[fd..].trim_start();
                if fd > 0 {
                    if let Some(stmt) = after.strip_prefix(':') {
                        let q_id = line[1..1 + digits].parse().unwrap();
                        let freq: u64 = freq_part[..fd].parse().unwrap();
                        if freq == 0 {
                            return Err(Error::Parse { msg: "freq must be positive".into(), pos: 0 });
                        }
                        return Ok((q_id, freq, stmt.trim_start()));
                    }
                }
                return Err(Error::Parse {
                    msg: format!("malformed workload prefix in '{line}'"),
                    pos: 0,
                });
            }
        }
    }
    Ok((default_id, 1, line))
}

struct SchemaBlock {
    schema: Schema,
    path: Option<PathBuf>,
    rows: Option<u64>,
}

fn parse_schema_blocks(text: &str) -> Result<Vec<SchemaBlock>> {
    let mut blocks: Vec<SchemaBlock> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { msg: format!("line {}: {msg}", lineno + 1), pos: 0 };
        if let Some(name) = line.strip_prefix("TABLE ") {
            blocks.push(SchemaBlock {
                schema: Schema::new(name.trim()),
                path: None,
                rows: None,
            });
            continue;
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| err("attribute line before any TABLE".into()))?;
        if let Some(p) = line.strip_prefix("PATH ") {
            block.path = Some(PathBuf::from(p.trim()));
            continue;
        }
        if let Some(r) = line.strip_prefix("ROWS ") {
            block.rows =
                Some(r.trim().parse().map_err(|e| err(format!("bad row count: {e}")))?);
            continue;
        }
        let mut parts = line.split_whitespace();
        let (name, ty, width) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(t), Some(w), None) => (n, t, w),
            _ => return Err(err(format!("expected 'attr type width', got '{line}'"))),
        };
        block.schema.attributes.push(AttributeDef {
            name: name.to_string(),
            value_type: ValueType::parse_name(ty)?,
            avg_width_bytes: width.parse().map_err(|e| err(format!("bad width: {e}")))?,
        });
    }
    Ok(blocks)
}

/// Parses a schema file ("TABLE name" then "attr type width" lines) into
/// plain schemas, ignoring any PATH/ROWS directives.
pub fn parse_schema_file(text: &str) -> Result<Vec<Schema>> {
    Ok(parse_schema_blocks(text)?.into_iter().map(|b| b.schema).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn three_col() -> Schema {
        Schema::new("t")
            .attr("a", ValueType::Int64, 8.0)
            .attr("b", ValueType::Int64, 8.0)
            .attr("c", ValueType::Text, 4.0)
    }

    #[test]
    fn register_counts_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..10).map(|i| format!("{i},{},x{i}\n", i * 2)).collect();
        let path = write_csv(&dir, "t.csv", &rows);
        let mut cat = Catalog::new();
        let id = cat.register_table(three_col(), &path).unwrap();
        assert_eq!(cat.table(id).row_count, 10);
    }

    #[test]
    fn register_rejects_arity_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "t.csv", "1,2,x\n3,4\n");
        let mut cat = Catalog::new();
        let err = cat.register_table(three_col(), &path).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn register_missing_file_is_io_error() {
        let mut cat = Catalog::new();
        let err = cat
            .register_table(three_col(), Path::new("/nonexistent/t.csv"))
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn broad_schema_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let mut schema = Schema::new("broad");
        for i in 0..509 {
            schema = schema.attr(&format!("c{i}"), ValueType::Int64, 8.0);
        }
        let row: Vec<String> = (0..509).map(|i| i.to_string()).collect();
        let path = write_csv(&dir, "b.csv", &format!("{}\n", row.join(",")));
        let mut cat = Catalog::new();
        let id = cat.register_table(schema, &path).unwrap();
        assert_eq!(cat.table(id).schema.attributes.len(), 509);
        assert_eq!(cat.table(id).row_count, 1);
    }

    #[test]
    fn attribute_size_is_rows_times_width() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..1000).map(|i| format!("{i},{i},x\n")).collect();
        let path = write_csv(&dir, "t.csv", &rows);
        let mut cat = Catalog::new();
        cat.register_table(three_col(), &path).unwrap();
        assert_eq!(cat.attribute_size("t", "a").unwrap(), 8000);
        assert_eq!(cat.attribute_size("t", "c").unwrap(), 4000);
        assert!(cat.attribute_size("t", "zz").is_err());
    }

    #[test]
    fn attribute_size_zero_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "t.csv", "");
        let mut cat = Catalog::new();
        cat.register_table(three_col(), &path).unwrap();
        assert_eq!(cat.attribute_size("t", "c").unwrap(), 0);
    }

    #[test]
    fn attribute_size_additive_over_query_attrs() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..50).map(|i| format!("{i},{i},x\n")).collect();
        let path = write_csv(&dir, "t.csv", &rows);
        let mut cat = Catalog::new();
        cat.register_table(three_col(), &path).unwrap();
        let q = cat.parse_query("SELECT a, b FROM t WHERE c = 'x'", 1, 1).unwrap();
        let total: u64 = q
            .accessed_attributes(&cat)
            .iter()
            .map(|(t, a)| cat.attribute_size(t, a).unwrap())
            .sum();
        let by_hand = cat.attribute_size("t", "a").unwrap()
            + cat.attribute_size("t", "b").unwrap()
            + cat.attribute_size("t", "c").unwrap();
        assert_eq!(total, by_hand);
    }

    #[test]
    fn catalog_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..7).map(|i| format!("{i},{i},x\n")).collect();
        let path = write_csv(&dir, "t.csv", &rows);
        let mut cat = Catalog::new();
        cat.register_table(three_col(), &path).unwrap();
        let saved = dir.path().join("catalog.txt");
        cat.save(&saved).unwrap();
        let loaded = Catalog::load(&saved, CsvOptions::default()).unwrap();
        let t = loaded.table_by_name("t").unwrap();
        assert_eq!(t.row_count, 7);
        assert_eq!(t.schema, three_col());
        assert_eq!(t.raw_path, path);
    }

    #[test]
    fn workload_file_prefixes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "t.csv", "1,2,x\n");
        let mut cat = Catalog::new();
        cat.register_table(three_col(), &path).unwrap();
        let text = "# comment\n\
                    SELECT a FROM t\n\
                    Q5 freq=3: SELECT b FROM t\n\
                    SELECT c FROM t\n";
        let ws = cat.parse_workload(text).unwrap();
        assert_eq!(ws.len(), 3);
        assert_eq!((ws[0].q_id, ws[0].frequency), (1, 1));
        assert_eq!((ws[1].q_id, ws[1].frequency), (5, 3));
        assert_eq!((ws[2].q_id, ws[2].frequency), (6, 1));
    }

    #[test]
    fn workload_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "t.csv", "1,2,x\n");
        let mut cat = Catalog::new();
        cat.register_table(three_col(), &path).unwrap();
        let text = "Q2: SELECT a FROM t\nQ2: SELECT b FROM t\n";
        assert!(cat.parse_workload(text).is_err());
    }
}
