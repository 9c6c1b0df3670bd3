//! Columnar loaded store: a COPY-style bulk loader plus persistent
//! per-column binary files.
//!
//! Layout per column file: magic `RHF1`, a one-byte type tag, a u64
//! little-endian row count, then the payload. Numerics are packed 8-byte
//! little-endian values; text is a `(rows + 1)`-entry u32 offset array
//! followed by a byte heap. A load commits by writing `*.tmp` files and
//! renaming them into place, then rewriting the manifest, so readers never
//! observe a partial column.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::Instant;

use crate::catalog::{Catalog, TableId};
use crate::csvio::{self, decode_field, FieldWalker, RawFile};
use crate::error::{Error, Result};
use crate::value::{CmpOp, ColumnData, Value, ValueType};

const MAGIC: &[u8; 4] = b"RHF1";

fn type_tag(ty: ValueType) -> u8 {
    match ty {
        ValueType::Int64 => 0,
        ValueType::Float64 => 1,
        ValueType::Text => 2,
    }
}

fn tag_type(tag: u8) -> Result<ValueType> {
    match tag {
        0 => Ok(ValueType::Int64),
        1 => Ok(ValueType::Float64),
        2 => Ok(ValueType::Text),
        other => Err(Error::Schema(format!("bad column type tag {other:#x}"))),
    }
}

/// `attr op literal` filter against a loaded column, by attribute name.
#[derive(Debug, Clone, PartialEq)]
pub struct AttrPredicate {
    pub attr: String,
    pub op: CmpOp,
    pub literal: Value,
}

/// Receipt for one bulk load.
#[derive(Debug, Clone)]
pub struct LoadReceipt {
    pub table: String,
    pub attributes: BTreeSet<String>,
    pub rows: u64,
    pub dlt_seconds: f64,
    pub bytes_written: u64,
}

/// Result of a loaded-store scan.
#[derive(Debug)]
pub struct StoreScanResult {
    /// Projected columns keyed by attribute name; all the same length.
    pub columns: BTreeMap<String, ColumnData>,
    pub rows_matched: u64,
}

/// The loaded store rooted at one data directory.
pub struct ColStore {
    data_dir: PathBuf,
    /// (table, attribute) → row count, mirroring the manifest.
    loaded: RwLock<BTreeMap<(String, String), u64>>,
}

impl ColStore {
    /// Opens (or initializes) a store. An existing manifest is reloaded.
    pub fn open(data_dir: &Path) -> Result<ColStore> {
        std::fs::create_dir_all(data_dir).map_err(|e| Error::io(data_dir, e))?;
        let mut loaded = BTreeMap::new();
        let manifest = data_dir.join("manifest.txt");
        if manifest.exists() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut parts = line.split_whitespace();
                match (parts.next(), parts.next(), parts.next(), parts.next()) {
                    (Some(t), Some(a), Some(r), None) => {
                        let rows = r.parse().map_err(|e| {
                            Error::Parse {
                                msg: format!("manifest line {}: bad row count: {e}", lineno + 1),
                                pos: 0,
                            }
                        })?;
                        loaded.insert((t.to_string(), a.to_string()), rows);
                    }
                    _ => {
                        return Err(Error::Parse {
                            msg: format!("manifest line {}: expected 'table attr rows'", lineno + 1),
                            pos: 0,
                        })
                    }
                }
            }
        }
        Ok(ColStore { data_dir: data_dir.to_path_buf(), loaded: RwLock::new(loaded) })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn column_path(&self, table: &str, attr: &str) -> PathBuf {
        self.data_dir.join(table).join(format!("{attr}.col"))
    }

    pub fn is_loaded(&self, table: &str, attr: &str) -> bool {
        self.loaded
            .read()
            .unwrap()
            .contains_key(&(table.to_string(), attr.to_string()))
    }

    /// Attributes of one table currently loaded.
    pub fn loaded_attrs(&self, table: &str) -> BTreeSet<String> {
        self.loaded
            .read()
            .unwrap()
            .keys()
            .filter(|(t, _)| t == table)
            .map(|(_, a)| a.clone())
            .collect()
    }

    /// Every (table, attribute) pair currently loaded.
    pub fn loaded_pairs(&self) -> Vec<(String, String)> {
        self.loaded.read().unwrap().keys().cloned().collect()
    }

    fn rewrite_manifest(&self, loaded: &BTreeMap<(String, String), u64>) -> Result<()> {
        let manifest = self.data_dir.join("manifest.txt");
        let tmp = self.data_dir.join("manifest.txt.tmp");
        let mut text = String::new();
        for ((t, a), rows) in loaded {
            text.push_str(&format!("{t} {a} {rows}\n"));
        }
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &manifest).map_err(|e| Error::io(&manifest, e))
    }

    /// Bulk-loads the named attributes of a table from its raw CSV file in a
    /// single pass. Reloading an attribute replaces its column file.
    pub fn load_columns(
        &self,
        catalog: &Catalog,
        table: TableId,
        attrs: &BTreeSet<String>,
    ) -> Result<LoadReceipt> {
        let started = Instant::now();
        let entry = catalog.table(table);
        let table_name = entry.schema.table_name.clone();
        if attrs.is_empty() {
            return Ok(LoadReceipt {
                table: table_name,
                attributes: BTreeSet::new(),
                rows: 0,
                dlt_seconds: started.elapsed().as_secs_f64(),
                bytes_written: 0,
            });
        }

        // attr name → column index, ascending by index for the row walk
        let mut cols: Vec<(usize, &str)> = Vec::with_capacity(attrs.len());
        for attr in attrs {
            let idx = entry.schema.attr_index(attr).ok_or_else(|| Error::Lookup {
                kind: "attribute",
                name: format!("{table_name}.{attr}"),
            })?;
            cols.push((idx, attr.as_str()));
        }
        cols.sort_unstable();

        let file = RawFile::map(&entry.raw_path)?;
        let bytes = file.bytes();
        let quoted = file.detect_quoted();
        let mut data: Vec<ColumnData> = cols
            .iter()
            .map(|(idx, _)| {
                ColumnData::with_capacity(
                    entry.schema.attributes[*idx].value_type,
                    entry.row_count as usize,
                )
            })
            .collect();

        let mut rows = 0u64;
        for (line, s, e) in csvio::row_spans(bytes, catalog.csv) {
            let row = &bytes[s..e];
            let mut walker = FieldWalker::new(row, quoted);
            let mut at = 0usize;
            let mut span = walker.next();
            for (slot, (idx, attr)) in cols.iter().enumerate() {
                while at < *idx {
                    span = walker.next();
                    at += 1;
                }
                let (fs, fe) = span.ok_or_else(|| Error::Row {
                    line,
                    msg: format!("column '{attr}': row has fewer than {} fields", idx + 1),
                })?;
                let text = decode_field(&row[fs..fe]);
                data[slot].push_field(&text).map_err(|e| Error::Row {
                    line,
                    msg: format!("column '{attr}': {e}"),
                })?;
            }
            rows += 1;
        }

        // Encode and commit: tmp files first, renames only after every
        // column encoded and written.
        let table_dir = self.data_dir.join(&table_name);
        std::fs::create_dir_all(&table_dir).map_err(|e| Error::io(&table_dir, e))?;
        let mut tmp_paths: Vec<(PathBuf, PathBuf)> = Vec::new();
        let mut bytes_written = 0u64;
        let mut write_err = None;
        for (slot, (_, attr)) in cols.iter().enumerate() {
            let final_path = self.column_path(&table_name, attr);
            let tmp = final_path.with_extension("col.tmp");
            let written = encode_column(&data[slot]).and_then(|bytes| {
                std::fs::write(&tmp, &bytes)
                    .map_err(|e| Error::io(&tmp, e))
                    .map(|()| bytes.len() as u64)
            });
            match written {
                Ok(n) => {
                    bytes_written += n;
                    tmp_paths.push((tmp, final_path));
                }
                Err(err) => {
                    write_err = Some(err);
                    break;
                }
            }
        }
        if let Some(err) = write_err {
            for (tmp, _) in &tmp_paths {
                let _ = std::fs::remove_file(tmp);
            }
            return Err(err);
        }
        for (tmp, final_path) in &tmp_paths {
            std::fs::rename(tmp, final_path).map_err(|e| Error::io(final_path, e))?;
        }

        let mut loaded = self.loaded.write().unwrap();
        for (_, attr) in &cols {
            loaded.insert((table_name.clone(), attr.to_string()), rows);
        }
        self.rewrite_manifest(&loaded)?;
        drop(loaded);

        Ok(LoadReceipt {
            table: table_name,
            attributes: attrs.clone(),
            rows,
            dlt_seconds: started.elapsed().as_secs_f64(),
            bytes_written,
        })
    }

    /// Reads one loaded column in full.
    pub fn read_column(&self, table: &str, attr: &str) -> Result<ColumnData> {
        if !self.is_loaded(table, attr) {
            return Err(Error::Routing(format!(
                "attribute '{table}.{attr}' is not loaded; use the in-situ or hybrid path"
            )));
        }
        let path = self.column_path(table, attr);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        decode_column(&bytes)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    /// Scans loaded columns of one table: projection onto `attrs`, filtered
    /// by `predicates`. Every referenced attribute must be loaded.
    pub fn scan_columns(
        &self,
        table: &str,
        attrs: &[String],
        predicates: &[AttrPredicate],
    ) -> Result<StoreScanResult> {
        let mut needed: BTreeSet<&str> = attrs.iter().map(|s| s.as_str()).collect();
        needed.extend(predicates.iter().map(|p| p.attr.as_str()));
        let mut cols: BTreeMap<&str, ColumnData> = BTreeMap::new();
        for attr in needed {
            cols.insert(attr, self.read_column(table, attr)?);
        }
        let n = cols.values().next().map(|c| c.len()).unwrap_or(0);
        if cols.values().any(|c| c.len() != n) {
            return Err(Error::Schema(format!(
                "loaded columns of '{table}' disagree on row count"
            )));
        }

        let mut keep = vec![true; n];
        for p in predicates {
            let col = &cols[p.attr.as_str()];
            for (i, k) in keep.iter_mut().enumerate() {
                if *k {
                    *k = col.get(i).satisfies(p.op, &p.literal)?;
                }
            }
        }
        let rows_matched = keep.iter().filter(|k| **k).count() as u64;
        let all = predicates.is_empty();
        let columns = attrs
            .iter()
            .map(|a| {
                let col = &cols[a.as_str()];
                (a.clone(), if all { col.clone() } else { col.filter(&keep) })
            })
            .collect();
        Ok(StoreScanResult { columns, rows_matched })
    }

    /// Total size in bytes of the column files persisted for one table.
    /// On-disk size of one loaded column.
    pub fn column_size(&self, table: &str, attr: &str) -> Result<u64> {
        if !self.is_loaded(table, attr) {
            return Err(Error::Lookup { kind: "column", name: format!("{table}.{attr}") });
        }
        let path = self.column_path(table, attr);
        Ok(std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len())
    }

    pub fn db_size(&self, table: &str) -> Result<u64> {
        let mut total = 0u64;
        for attr in self.loaded_attrs(table) {
            let path = self.column_path(table, &attr);
            total += std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
        }
        Ok(total)
    }

    /// Total size across all tables.
    pub fn db_size_total(&self) -> Result<u64> {
        let tables: BTreeSet<String> =
            self.loaded.read().unwrap().keys().map(|(t, _)| t.clone()).collect();
        let mut total = 0;
        for t in tables {
            total += self.db_size(&t)?;
        }
        Ok(total)
    }
}

fn encode_column(data: &ColumnData) -> Result<Vec<u8>> {
    let rows = data.len() as u64;
    let mut out = Vec::with_capacity(13 + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(type_tag(data.value_type()));
    out.extend_from_slice(&rows.to_le_bytes());
    match data {
        ColumnData::Int(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        ColumnData::Float(v) => {
            for x in v {
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        ColumnData::Text(v) => {
            let heap_len: usize = v.iter().map(|s| s.len()).sum();
            if heap_len > u32::MAX as usize {
                return Err(Error::Execution("text column exceeds 4GiB heap".into()));
            }
            let mut off = 0u32;
            out.extend_from_slice(&off.to_le_bytes());
            for s in v {
                off += s.len() as u32;
                out.extend_from_slice(&off.to_le_bytes());
            }
            for s in v {
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    Ok(out)
}

fn decode_column(bytes: &[u8]) -> Result<ColumnData> {
    let bad = |msg: &str| Error::Schema(format!("bad column file: {msg}"));
    if bytes.len() < 13 || &bytes[..4] != MAGIC {
        return Err(bad("missing RHF1 magic"));
    }
    let ty = tag_type(bytes[4])?;
    let rows = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let payload = &bytes[13..];
    match ty {
        ValueType::Int64 => {
            if payload.len() != rows * 8 {
                return Err(bad("int64 payload length mismatch"));
            }
            Ok(ColumnData::Int(
                payload.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
            ))
        }
        ValueType::Float64 => {
            if payload.len() != rows * 8 {
                return Err(bad("float64 payload length mismatch"));
            }
            Ok(ColumnData::Float(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                    .collect(),
            ))
        }
        ValueType::Text => {
            let table_len = (rows + 1) * 4;
            if payload.len() < table_len {
                return Err(bad("text offset table truncated"));
            }
            let offsets: Vec<u32> = payload[..table_len]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let heap = &payload[table_len..];
            if offsets[rows] as usize != heap.len() {
                return Err(bad("text heap length mismatch"));
            }
            let mut out = Vec::with_capacity(rows);
            for w in offsets.windows(2) {
                let (s, e) = (w[0] as usize, w[1] as usize);
                if s > e || e > heap.len() {
                    return Err(bad("text offsets not monotone"));
                }
                out.push(
                    std::str::from_utf8(&heap[s..e])
                        .map_err(|e| bad(&format!("non-UTF-8 text: {e}")))?
                        .to_string(),
                );
            }
            Ok(ColumnData::Text(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Schema;
    use crate::insitu::full_reparse_column;
    use std::path::PathBuf;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    fn wide_catalog(dir: &tempfile::TempDir, rows: usize) -> (Catalog, TableId) {
        let mut schema = Schema::new("w");
        for i in 0..20 {
            schema = schema.attr(&format!("c{i}"), ValueType::Int64, 8.0);
        }
        let mut content = String::new();
        for r in 0..rows {
            let row: Vec<String> = (0..20).map(|c| (r * 20 + c).to_string()).collect();
            content.push_str(&row.join(","));
            content.push('\n');
        }
        let path = write_file(dir, "w.csv", &content);
        let mut cat = Catalog::new();
        let id = cat.register_table(schema, &path).unwrap();
        (cat, id)
    }

    fn attrs(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_projection_of_wide_table() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 1000);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        let receipt = store.load_columns(&cat, id, &attrs(&["c3", "c17"])).unwrap();
        assert_eq!(receipt.rows, 1000);
        assert_eq!(receipt.attributes.len(), 2);
        assert!(dir.path().join("db/w/c3.col").exists());
        assert!(dir.path().join("db/w/c17.col").exists());
        assert!(!dir.path().join("db/w/c0.col").exists());
        assert!(store.is_loaded("w", "c3"));
        assert!(!store.is_loaded("w", "c0"));
    }

    #[test]
    fn empty_load_is_a_noop() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 10);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        let receipt = store.load_columns(&cat, id, &BTreeSet::new()).unwrap();
        assert_eq!(receipt.rows, 0);
        assert_eq!(receipt.bytes_written, 0);
        assert!(receipt.dlt_seconds < 0.5);
        assert_eq!(store.db_size("w").unwrap(), 0);
    }

    #[test]
    fn loaded_values_match_raw_scan() {
        let dir = tempfile::tempdir().unwrap();
        let content = "1,1.5,alpha\n2,-0.25,\"quoted,comma\"\n3,1e-3,''\n";
        let path = write_file(&dir, "m.csv", content);
        let schema = Schema::new("m")
            .attr("i", ValueType::Int64, 8.0)
            .attr("f", ValueType::Float64, 8.0)
            .attr("t", ValueType::Text, 8.0);
        let mut cat = Catalog::new();
        let id = cat.register_table(schema, &path).unwrap();
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        store.load_columns(&cat, id, &attrs(&["i", "f", "t"])).unwrap();
        for (attr, col) in [("i", 0), ("f", 1), ("t", 2)] {
            assert_eq!(
                store.read_column("m", attr).unwrap(),
                full_reparse_column(&cat, id, col).unwrap(),
                "column {attr}"
            );
        }
    }

    #[test]
    fn loaded_values_match_raw_scan_100k() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::new();
        for i in 0..100_000i64 {
            content.push_str(&format!("{},{}\n", i * 7 % 1000, (i as f64) * 0.125));
        }
        let path = write_file(&dir, "big.csv", &content);
        let schema = Schema::new("big")
            .attr("k", ValueType::Int64, 4.0)
            .attr("v", ValueType::Float64, 8.0);
        let mut cat = Catalog::new();
        let id = cat.register_table(schema, &path).unwrap();
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        let receipt = store.load_columns(&cat, id, &attrs(&["k", "v"])).unwrap();
        assert_eq!(receipt.rows, 100_000);
        assert_eq!(
            store.read_column("big", "k").unwrap(),
            full_reparse_column(&cat, id, 0).unwrap()
        );
        assert_eq!(
            store.read_column("big", "v").unwrap(),
            full_reparse_column(&cat, id, 1).unwrap()
        );
    }

    #[test]
    fn scan_requires_loaded_attrs() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 10);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        store.load_columns(&cat, id, &attrs(&["c1"])).unwrap();
        let err = store
            .scan_columns("w", &["c1".into(), "c2".into()], &[])
            .unwrap_err();
        assert!(matches!(err, Error::Routing(_)), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn scan_filters_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 100);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        store.load_columns(&cat, id, &attrs(&["c0", "c1"])).unwrap();
        // c0 of row r is r*20
        let r = store
            .scan_columns(
                "w",
                &["c1".into()],
                &[AttrPredicate { attr: "c0".into(), op: CmpOp::Ge, literal: Value::Int(1960) }],
            )
            .unwrap();
        assert_eq!(r.rows_matched, 2);
        assert_eq!(r.columns["c1"], ColumnData::Int(vec![98 * 20 + 1, 99 * 20 + 1]));

        let all = store.scan_columns("w", &["c0".into()], &[]).unwrap();
        assert_eq!(all.rows_matched, 100);
    }

    #[test]
    fn reload_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 50);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        store.load_columns(&cat, id, &attrs(&["c2"])).unwrap();
        let first = std::fs::read(dir.path().join("db/w/c2.col")).unwrap();
        store.load_columns(&cat, id, &attrs(&["c2"])).unwrap();
        let second = std::fs::read(dir.path().join("db/w/c2.col")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn db_size_additive_and_bounded_below() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 200);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        assert_eq!(store.db_size("w").unwrap(), 0);
        store.load_columns(&cat, id, &attrs(&["c0"])).unwrap();
        let one = store.db_size("w").unwrap();
        assert!(one >= 8 * 200);
        store.load_columns(&cat, id, &attrs(&["c1", "c2"])).unwrap();
        let three = store.db_size("w").unwrap();
        assert_eq!(three, 3 * one);
    }

    #[test]
    fn manifest_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 10);
        let db = dir.path().join("db");
        {
            let store = ColStore::open(&db).unwrap();
            store.load_columns(&cat, id, &attrs(&["c5"])).unwrap();
        }
        let store = ColStore::open(&db).unwrap();
        assert!(store.is_loaded("w", "c5"));
        assert_eq!(store.read_column("w", "c5").unwrap().len(), 10);
    }

    #[test]
    fn load_error_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.csv", "1,a\n2,b\n");
        let schema = Schema::new("t")
            .attr("x", ValueType::Int64, 8.0)
            .attr("y", ValueType::Text, 1.0);
        let mut cat = Catalog::new();
        let id = cat.register_table(schema, &path).unwrap();
        // corrupt the file after registration so the load hits a bad int
        std::fs::write(&path, "1,a\noops,b\n").unwrap();
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        let err = store.load_columns(&cat, id, &attrs(&["x"])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("'x'"), "{msg}");
        // failed load leaves nothing behind
        assert!(!store.is_loaded("t", "x"));
        assert!(!dir.path().join("db/t/x.col").exists());
        assert!(!dir.path().join("db/t/x.col.tmp").exists());
    }

    #[test]
    fn header_layout_is_frozen() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.csv", "7\n-1\n");
        let schema = Schema::new("t").attr("x", ValueType::Int64, 8.0);
        let mut cat = Catalog::new();
        let id = cat.register_table(schema, &path).unwrap();
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        store.load_columns(&cat, id, &attrs(&["x"])).unwrap();
        let bytes = std::fs::read(dir.path().join("db/t/x.col")).unwrap();
        assert_eq!(&bytes[..4], b"RHF1");
        assert_eq!(bytes[4], 0);
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 2);
        assert_eq!(i64::from_le_bytes(bytes[13..21].try_into().unwrap()), 7);
        assert_eq!(i64::from_le_bytes(bytes[21..29].try_into().unwrap()), -1);
        assert_eq!(bytes.len(), 29);
    }

    #[test]
    fn corrupt_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, id) = wide_catalog(&dir, 10);
        let store = ColStore::open(&dir.path().join("db")).unwrap();
        store.load_columns(&cat, id, &attrs(&["c0"])).unwrap();
        let path = dir.path().join("db/w/c0.col");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = store.read_column("w", "c0").unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn text_round_trip_exact() {
        let col = ColumnData::Text(vec!["".into(), "a,b".into(), "héllo".into(), "".into()]);
        let bytes = encode_column(&col).unwrap();
        assert_eq!(decode_column(&bytes).unwrap(), col);
        let floats = ColumnData::Float(vec![0.1, -0.0, f64::MIN_POSITIVE]);
        let bytes = encode_column(&floats).unwrap();
        assert_eq!(decode_column(&bytes).unwrap(), floats);
    }
}
