//! In-situ scans over raw CSV with cached positional maps.
//!
//! A scan parses the raw file directly, but records row starts and the
//! intra-row offsets of every column it touches. Later scans jump straight
//! to the fields they need instead of re-walking each row, so a warm scan
//! examines strictly fewer bytes than a cold one. Maps are cached per table
//! under a byte budget with LRU eviction; eviction only costs time, never
//! correctness.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use crate::catalog::{Catalog, TableId};
use crate::csvio::{self, decode_field, FieldWalker, RawFile};
use crate::error::{Error, Result};
use crate::value::{CmpOp, ColumnData, Value};

/// `column op literal` filter against one column of a table, by index.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPredicate {
    pub column: usize,
    pub op: CmpOp,
    pub literal: Value,
}

/// What to do with a row that fails to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    /// Surface a row-level error naming the line.
    #[default]
    Fail,
    /// Drop the row and count it in `rows_skipped`.
    Skip,
}

/// Sentinel for a field offset that could not be determined (malformed row
/// under [`MalformedPolicy::Skip`], or a row whose walk jumped past the
/// column).
const NO_OFFSET: u32 = u32::MAX;

/// While a cold walk passes unmapped columns, every multiple of this stride
/// gets its offsets recorded too, so later scans start near any column.
const ANCHOR_STRIDE: usize = 8;

/// Cached byte positions for one table's raw file.
#[derive(Debug)]
pub struct PositionalMap {
    pub table: TableId,
    /// Byte offset of each data-row start, strictly increasing.
    pub row_offsets: Arc<Vec<u64>>,
    /// Byte length of each row, CR/LF excluded.
    pub row_lens: Arc<Vec<u32>>,
    /// Whether the file contains a quote character; fixes the field-walker
    /// dialect without rescanning the file.
    pub quoted: bool,
    /// Row-relative field start offsets, only for columns accessed so far.
    pub field_offsets: BTreeMap<usize, Arc<Vec<u32>>>,
    /// Length of the file the map was built from; a size change invalidates
    /// the map.
    pub file_len: u64,
}

impl PositionalMap {
    pub fn bytes_resident(&self) -> u64 {
        let rows = self.row_offsets.len() as u64 * 8 + self.row_lens.len() as u64 * 4;
        let fields: u64 = self.field_offsets.values().map(|v| v.len() as u64 * 4).sum();
        rows + fields
    }
}

/// Output of one raw scan.
#[derive(Debug)]
pub struct RawScanResult {
    /// Projected columns keyed by column index; all the same length.
    pub columns: BTreeMap<usize, ColumnData>,
    /// Data rows visited (matching or not).
    pub rows_scanned: u64,
    /// Rows that satisfied the predicate conjunction.
    pub rows_matched: u64,
    /// Malformed rows dropped under [`MalformedPolicy::Skip`].
    pub rows_skipped: u64,
    /// True iff no positional map existed for the table when the scan began.
    pub map_was_cold: bool,
    /// Raw bytes examined to locate and slice fields. Warm scans examine
    /// fewer bytes than cold scans over the same attribute set.
    pub bytes_parsed: u64,
}

struct CacheEntry {
    map: Arc<PositionalMap>,
    last_used: u64,
}

#[derive(Default)]
struct Cache {
    entries: HashMap<TableId, CacheEntry>,
    clock: u64,
}

impl Cache {
    fn resident(&self) -> u64 {
        self.entries.values().map(|e| e.map.bytes_resident()).sum()
    }

    /// Drops least-recently-used maps until resident ≤ budget.
    fn enforce(&mut self, budget: u64) -> u64 {
        let mut freed = 0;
        while self.resident() > budget {
            let victim = self
                .entries
                .iter()
                .min_by_key(|(_, e)| e.last_used)
                .map(|(t, _)| *t)
                .expect("nonzero resident implies an entry");
            freed += self.entries.remove(&victim).unwrap().map.bytes_resident();
        }
        freed
    }
}

/// The in-situ scan engine: raw-file access plus the positional-map cache.
pub struct InsituEngine {
    cache: RwLock<Cache>,
    map_budget_bytes: u64,
    policy: MalformedPolicy,
}

impl InsituEngine {
    pub fn new(map_budget_bytes: u64, policy: MalformedPolicy) -> InsituEngine {
        InsituEngine { cache: RwLock::new(Cache::default()), map_budget_bytes, policy }
    }

    /// Current positional map for a table, if cached.
    pub fn map_snapshot(&self, table: TableId) -> Option<Arc<PositionalMap>> {
        self.cache.read().unwrap().entries.get(&table).map(|e| e.map.clone())
    }

    pub fn resident_bytes(&self) -> u64 {
        self.cache.read().unwrap().resident()
    }

    /// Evicts least-recently-used maps until resident bytes ≤ `budget_bytes`;
    /// returns bytes freed.
    pub fn evict_maps(&self, budget_bytes: u64) -> u64 {
        self.cache.write().unwrap().enforce(budget_bytes)
    }

    fn checkout(&self, table: TableId, file_len: u64) -> Option<Arc<PositionalMap>> {
        let mut cache = self.cache.write().unwrap();
        cache.clock += 1;
        let clock = cache.clock;
        match cache.entries.get_mut(&table) {
            Some(e) if e.map.file_len == file_len => {
                e.last_used = clock;
                Some(e.map.clone())
            }
            Some(_) => {
                // file changed underneath the map
                cache.entries.remove(&table);
                None
            }
            None => None,
        }
    }

    /// Publishes map extensions, merging with any concurrent extension of
    /// the same table. Readers always see a complete map.
    #[allow(clippy::too_many_arguments)]
    fn publish(
        &self,
        table: TableId,
        file_len: u64,
        row_offsets: Arc<Vec<u64>>,
        row_lens: Arc<Vec<u32>>,
        quoted: bool,
        new_cols: Vec<(usize, Arc<Vec<u32>>)>,
    ) {
        let mut cache = self.cache.write().unwrap();
        cache.clock += 1;
        let clock = cache.clock;
        let mut map = match cache.entries.get(&table) {
            Some(e) if e.map.file_len == file_len => PositionalMap {
                table,
                row_offsets: e.map.row_offsets.clone(),
                row_lens: e.map.row_lens.clone(),
                quoted: e.map.quoted,
                field_offsets: e.map.field_offsets.clone(),
                file_len,
            },
            _ => PositionalMap {
                table,
                row_offsets,
                row_lens,
                quoted,
                field_offsets: BTreeMap::new(),
                file_len,
            },
        };
        for (col, offsets) in new_cols {
            map.field_offsets.entry(col).or_insert(offsets);
        }
        cache.entries.insert(table, CacheEntry { map: Arc::new(map), last_used: clock });
        cache.enforce(self.map_budget_bytes);
    }

    /// Scans a table's raw file, returning rows that satisfy all
    /// `predicates`, projected onto `columns` (column indices). Builds or
    /// extends the table's positional map as a side effect.
    pub fn scan_raw(
        &self,
        catalog: &Catalog,
        table: TableId,
        columns: &[usize],
        predicates: &[ColumnPredicate],
    ) -> Result<RawScanResult> {
        let entry = catalog.table(table);
        let schema = &entry.schema;
        let arity = schema.attributes.len();
        for &c in columns.iter().chain(predicates.iter().map(|p| &p.column)) {
            if c >= arity {
                return Err(Error::Execution(format!(
                    "column index {c} out of range for table '{}'",
                    schema.table_name
                )));
            }
        }

        let file = RawFile::map(&entry.raw_path)?;
        let bytes = file.bytes();
        let file_len = bytes.len() as u64;
        let old_map = self.checkout(table, file_len);
        let map_was_cold = old_map.is_none();
        let mut bytes_parsed = 0u64;

        // Row spans: reuse the cached ones or discover them with a newline
        // scan (whose cost is the whole file).
        let (row_offsets, row_lens, quoted): (Arc<Vec<u64>>, Arc<Vec<u32>>, bool) = match &old_map
        {
            Some(m) => (m.row_offsets.clone(), m.row_lens.clone(), m.quoted),
            None => {
                bytes_parsed += file_len;
                let mut starts = Vec::new();
                let mut lens = Vec::new();
                for (_, s, e) in csvio::row_spans(bytes, catalog.csv) {
                    starts.push(s as u64);
                    lens.push((e - s) as u32);
                }
                (Arc::new(starts), Arc::new(lens), file.detect_quoted())
            }
        };
        let n_rows = row_offsets.len();
        let header_lines = if catalog.csv.has_header { 1 } else { 0 };

        // Required columns, ascending; those absent from the map get built.
        let mut required: Vec<usize> = columns
            .iter()
            .copied()
            .chain(predicates.iter().map(|p| p.column))
            .collect();
        required.sort_unstable();
        required.dedup();
        let build_cols: Vec<usize> = required
            .iter()
            .copied()
            .filter(|c| old_map.as_ref().is_none_or(|m| !m.field_offsets.contains_key(c)))
            .collect();
        let mut building: BTreeMap<usize, Vec<u32>> =
            build_cols.iter().map(|&c| (c, Vec::with_capacity(n_rows))).collect();
        // Stride anchors along the stretch the walk will cover anyway.
        if let Some(&walk_max) = build_cols.last() {
            for c in (ANCHOR_STRIDE..walk_max).step_by(ANCHOR_STRIDE) {
                if old_map.as_ref().is_none_or(|m| !m.field_offsets.contains_key(&c)) {
                    building.entry(c).or_insert_with(|| Vec::with_capacity(n_rows));
                }
            }
        }

        // Predicates grouped per column, evaluated in ascending column order.
        let mut pred_cols: Vec<usize> = predicates.iter().map(|p| p.column).collect();
        pred_cols.sort_unstable();
        pred_cols.dedup();

        let mut out: BTreeMap<usize, ColumnData> = columns
            .iter()
            .map(|&c| {
                (c, ColumnData::with_capacity(schema.attributes[c].value_type, n_rows / 4))
            })
            .collect();
        let mut rows_matched = 0u64;
        let mut rows_skipped = 0u64;

        // Per-row span stash for columns discovered this scan.
        let mut spans: Vec<(usize, u32, u32)> = Vec::with_capacity(build_cols.len());

        'rows: for (i, &row_start) in row_offsets.iter().enumerate() {
            let row_start = row_start as usize;
            let row = &bytes[row_start..row_start + row_lens[i] as usize];
            let line = i + 1 + header_lines;
            spans.clear();

            // Discover offsets for columns the map lacks, walking forward.
            if !build_cols.is_empty() {
                let mut cur_col = 0usize;
                let mut cur_off = 0usize;
                for &col in &build_cols {
                    // jump to the nearest mapped anchor between here and col
                    if let Some(m) = &old_map {
                        if let Some((&c, offs)) =
                            m.field_offsets.range(cur_col + 1..=col).next_back()
                        {
                            let off = offs[i];
                            if off != NO_OFFSET {
                                cur_col = c;
                                cur_off = off as usize;
                            }
                        }
                    }
                    let mut ok = true;
                    while cur_col < col {
                        match FieldWalker::at(row, cur_off, quoted).next() {
                            Some((s, e)) if e < row.len() => {
                                bytes_parsed += (e - s + 1) as u64;
                                cur_off = e + 1;
                                cur_col += 1;
                                if cur_col % ANCHOR_STRIDE == 0 {
                                    if let Some(v) = building.get_mut(&cur_col) {
                                        if v.len() == i {
                                            v.push(cur_off as u32);
                                        }
                                    }
                                }
                            }
                            _ => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if !ok {
                        // short row: record sentinels for the rest
                        match self.policy {
                            MalformedPolicy::Fail => {
                                return Err(Error::Row {
                                    line,
                                    msg: format!(
                                        "{}: row has fewer than {} fields",
                                        entry.raw_path.display(),
                                        col + 1
                                    ),
                                })
                            }
                            MalformedPolicy::Skip => {
                                for v in building.values_mut() {
                                    if v.len() == i {
                                        v.push(NO_OFFSET);
                                    }
                                }
                                rows_skipped += 1;
                                continue 'rows;
                            }
                        }
                    }
                    let (s, e) = FieldWalker::at(row, cur_off, quoted)
                        .next()
                        .expect("offset within row");
                    bytes_parsed += (e - s) as u64;
                    let v = building.get_mut(&col).unwrap();
                    if v.len() == i {
                        v.push(s as u32);
                    }
                    spans.push((col, s as u32, e as u32));
                }
                // Anchors the walk jumped past get sentinels to stay aligned.
                for v in building.values_mut() {
                    if v.len() == i {
                        v.push(NO_OFFSET);
                    }
                }
            }

            // All required offsets are now known; slice a field by column.
            let field = |col: usize, bytes_parsed: &mut u64| -> Result<(usize, usize)> {
                if let Some(&(_, s, e)) = spans.iter().find(|(c, _, _)| *c == col) {
                    return Ok((s as usize, e as usize));
                }
                let offs = &old_map.as_ref().expect("col is mapped").field_offsets[&col];
                let s = offs[i];
                if s == NO_OFFSET {
                    return Err(Error::Row {
                        line,
                        msg: format!("{}: row previously unparsable", entry.raw_path.display()),
                    });
                }
                let (s, e) =
                    FieldWalker::at(row, s as usize, quoted).next().expect("mapped offset");
                *bytes_parsed += (e - s) as u64;
                Ok((s, e))
            };

            // Evaluate the predicate conjunction, one column at a time.
            let mut parsed: Vec<(usize, Value)> = Vec::new();
            for &col in &pred_cols {
                let (s, e) = match field(col, &mut bytes_parsed) {
                    Ok(span) => span,
                    Err(err) => match self.policy {
                        MalformedPolicy::Fail => return Err(err),
                        MalformedPolicy::Skip => {
                            rows_skipped += 1;
                            continue 'rows;
                        }
                    },
                };
                let text = decode_field(&row[s..e]);
                let v = match Value::parse_field(schema.attributes[col].value_type, &text) {
                    Ok(v) => v,
                    Err(err) => match self.policy {
                        MalformedPolicy::Fail => {
                            return Err(Error::Row { line, msg: err.to_string() })
                        }
                        MalformedPolicy::Skip => {
                            rows_skipped += 1;
                            continue 'rows;
                        }
                    },
                };
                for p in predicates.iter().filter(|p| p.column == col) {
                    if !v.satisfies(p.op, &p.literal)? {
                        continue 'rows;
                    }
                }
                parsed.push((col, v));
            }

            // Project. On a mid-row failure under Skip, roll back any values
            // already pushed for this row.
            let mut row_error: Option<Error> = None;
            for (&col, data) in out.iter_mut() {
                if let Some((_, v)) = parsed.iter().find(|(c, _)| *c == col) {
                    match (data, v) {
                        (ColumnData::Int(vec), Value::Int(x)) => vec.push(*x),
                        (ColumnData::Float(vec), Value::Float(x)) => vec.push(*x),
                        (ColumnData::Text(vec), Value::Text(x)) => vec.push(x.clone()),
                        _ => unreachable!("column type fixed by schema"),
                    }
                    continue;
                }
                match field(col, &mut bytes_parsed) {
                    Ok((s, e)) => {
                        let text = decode_field(&row[s..e]);
                        if let Err(err) = data.push_field(&text) {
                            row_error = Some(Error::Row { line, msg: err.to_string() });
                            break;
                        }
                    }
                    Err(err) => {
                        row_error = Some(err);
                        break;
                    }
                }
            }
            if let Some(err) = row_error {
                match self.policy {
                    MalformedPolicy::Fail => return Err(err),
                    MalformedPolicy::Skip => {
                        rows_skipped += 1;
                        for d in out.values_mut() {
                            d.truncate(rows_matched as usize);
                        }
                        continue 'rows;
                    }
                }
            }
            rows_matched += 1;
        }

        if map_was_cold || !building.is_empty() {
            self.publish(
                table,
                file_len,
                row_offsets.clone(),
                row_lens.clone(),
                quoted,
                building.into_iter().map(|(c, v)| (c, Arc::new(v))).collect(),
            );
        }

        Ok(RawScanResult {
            columns: out,
            rows_scanned: n_rows as u64,
            rows_matched,
            rows_skipped,
            map_was_cold,
            bytes_parsed,
        })
    }
}

/// Engine with an effectively unbounded map budget, for callers that manage
/// eviction themselves.
impl Default for InsituEngine {
    fn default() -> InsituEngine {
        InsituEngine::new(u64::MAX, MalformedPolicy::Fail)
    }
}

/// Reads one column of a table by full reparse, bypassing all caching. The
/// equivalence oracle for `scan_raw`; also used by the loader tests.
pub fn full_reparse_column(catalog: &Catalog, table: TableId, column: usize) -> Result<ColumnData> {
    let entry = catalog.table(table);
    let ty = entry.schema.attributes[column].value_type;
    let file = RawFile::map(&entry.raw_path)?;
    let bytes = file.bytes();
    let quoted = file.detect_quoted();
    let mut out = ColumnData::with_capacity(ty, 0);
    for (line, s, e) in csvio::row_spans(bytes, catalog.csv) {
        let row = &bytes[s..e];
        let (fs, fe) = FieldWalker::new(row, quoted)
            .nth(column)
            .ok_or_else(|| Error::Row { line, msg: "short row".into() })?;
        out.push_field(&decode_field(&row[fs..fe]))?;
    }
    Ok(out)
}

const _: fn(&InsituEngine) -> &(dyn Send + Sync) = |e| e;
