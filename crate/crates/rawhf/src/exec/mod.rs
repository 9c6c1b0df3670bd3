//! Hybrid query executor.
//!
//! Each attribute access routes to the loaded store when the column is
//! present there and to the in-situ scanner otherwise, so a single query may
//! join across formats. Equi-joins run through the spill-aware grace hash
//! join in [`join`], governed by a per-query work-memory grant.

pub mod join;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use crate::catalog::{
    AggFunc, Catalog, Comparison, EquiJoin, SelectItem, WorkloadQuery,
};
use crate::colstore::{AttrPredicate, ColStore};
use crate::error::{Error, Result};
use crate::insitu::{ColumnPredicate, InsituEngine};
use crate::muar::WORK_MEM_FLOOR_BYTES;
use crate::value::{Row, Value, ValueType};

pub use join::{estimate_build_bytes, hash_join, JoinOutcome, PER_ROW_OVERHEAD_BYTES};

/// Work memory granted to one query execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkMemGrant {
    pub bytes: u64,
}

/// Which storage path served an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Loaded,
    Raw,
}

/// Everything observable about one query execution besides its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRunRecord {
    pub q_id: u64,
    pub qet_seconds: f64,
    pub work_mem_granted: u64,
    pub spill_bytes: u64,
    pub rows_out: u64,
    /// (table, attribute) → storage path used.
    pub route: BTreeMap<(String, String), Route>,
    /// Rows entering the join pipeline, summed over table instances after
    /// per-instance filtering.
    pub input_row_count: u64,
}

/// Hybrid executor over one catalog and its two storage engines.
pub struct Executor<'a> {
    pub catalog: &'a Catalog,
    pub insitu: &'a InsituEngine,
    pub store: &'a ColStore,
    /// Root for per-query spill directories (`<tmp_dir>/q<id>/`).
    pub tmp_dir: PathBuf,
}

struct InstanceData {
    /// Materialized rows, one value per entry of `cols`.
    rows: Vec<Row>,
    /// Table column indices present in each row, ascending.
    cols: Vec<usize>,
}

impl Executor<'_> {
    /// Runs one query under a work-memory grant.
    pub fn execute(
        &self,
        q: &WorkloadQuery,
        grant: WorkMemGrant,
    ) -> Result<(Vec<Row>, QueryRunRecord)> {
        if grant.bytes < WORK_MEM_FLOOR_BYTES {
            return Err(Error::Config(format!(
                "work-mem grant {} below the {} byte floor",
                grant.bytes, WORK_MEM_FLOOR_BYTES
            )));
        }
        let started = Instant::now();

        // Joins and same-instance equality filters both require matching
        // key types; check before touching any data.
        for j in &q.equi_joins {
            let lt = self.attr_type(q, &j.left);
            let rt = self.attr_type(q, &j.right);
            if lt != rt {
                return Err(Error::Execution(format!(
                    "join key types differ: {} is {lt}, {} is {rt}",
                    self.attr_display(q, &j.left),
                    self.attr_display(q, &j.right),
                )));
            }
        }

        let mut route = BTreeMap::new();
        let mut instances = Vec::with_capacity(q.table_instances.len());
        for i in 0..q.table_instances.len() {
            instances.push(self.scan_instance(q, i, &mut route)?);
        }
        let input_row_count: u64 = instances.iter().map(|d| d.rows.len() as u64).sum();

        // Left-deep join pipeline in FROM order. The layout of a joined row
        // is the concatenation of per-instance column lists.
        let layouts: Vec<Vec<usize>> = instances.iter().map(|d| d.cols.clone()).collect();
        let pos = |instance: usize, column: usize| -> usize {
            let offset: usize = layouts[..instance].iter().map(|l| l.len()).sum();
            offset
                + layouts[instance]
                    .binary_search(&column)
                    .expect("accessed column is in the instance layout")
        };

        let spill_dir = self.tmp_dir.join(format!("q{}", q.q_id));
        let mut spill_bytes = 0u64;
        let mut it = instances.into_iter();
        let mut joined = it.next().expect("queries have at least one table").rows;
        for (k, right) in it.enumerate() {
            let k = k + 1;
            let local = |column: usize| -> usize {
                layouts[k].binary_search(&column).expect("column in layout")
            };
            let mut keys = Vec::new();
            for j in &q.equi_joins {
                let (a, b) = (&j.left, &j.right);
                let step = a.instance.max(b.instance);
                if step != k || a.instance == b.instance {
                    continue;
                }
                if a.instance == k {
                    keys.push((pos(b.instance, b.column), local(a.column)));
                } else {
                    keys.push((pos(a.instance, a.column), local(b.column)));
                }
            }
            let out = join::hash_join(joined, right.rows, &keys, grant, &spill_dir)?;
            joined = out.rows;
            spill_bytes += out.spill_bytes;
        }
        let _ = std::fs::remove_dir_all(&spill_dir);

        // Project or aggregate.
        let result: Vec<Row> = if let Some(_aggs) = q.aggregates() {
            let specs: Vec<(AggFunc, Option<usize>)> = q
                .select
                .iter()
                .map(|item| match item {
                    SelectItem::Aggregate(f, arg) => {
                        (*f, arg.as_ref().map(|r| pos(r.instance, r.column)))
                    }
                    SelectItem::Attr(_) => unreachable!("parser rejects mixed select"),
                })
                .collect();
            aggregate(&specs, &joined)?.into_iter().collect()
        } else {
            let positions: Vec<usize> = q
                .select
                .iter()
                .map(|item| match item {
                    SelectItem::Attr(r) => pos(r.instance, r.column),
                    SelectItem::Aggregate(..) => unreachable!("parser rejects mixed select"),
                })
                .collect();
            joined
                .iter()
                .map(|row| positions.iter().map(|&p| row[p].clone()).collect())
                .collect()
        };

        let record = QueryRunRecord {
            q_id: q.q_id,
            qet_seconds: started.elapsed().as_secs_f64(),
            work_mem_granted: grant.bytes,
            spill_bytes,
            rows_out: result.len() as u64,
            route,
            input_row_count,
        };
        Ok((result, record))
    }

    fn attr_type(&self, q: &WorkloadQuery, r: &crate::catalog::AttrRef) -> ValueType {
        let t = q.table_instances[r.instance].table_id;
        self.catalog.table(t).schema.attributes[r.column].value_type
    }

    fn attr_display(&self, q: &WorkloadQuery, r: &crate::catalog::AttrRef) -> String {
        format!("{}.{}", q.table_instances[r.instance].alias, r.name)
    }

    /// Scans one table instance, applying its single-instance predicates and
    /// same-instance equality conditions. Chooses the storage route per
    /// attribute.
    fn scan_instance(
        &self,
        q: &WorkloadQuery,
        instance: usize,
        route: &mut BTreeMap<(String, String), Route>,
    ) -> Result<InstanceData> {
        let inst = &q.table_instances[instance];
        let entry = self.catalog.table(inst.table_id);
        let schema = &entry.schema;
        let table = schema.table_name.as_str();
        let cols: Vec<usize> = q.instance_columns(instance).into_iter().collect();

        let preds: Vec<&Comparison> =
            q.predicates.iter().filter(|p| p.attr.instance == instance).collect();
        let self_eqs: Vec<&EquiJoin> = q
            .equi_joins
            .iter()
            .filter(|j| j.left.instance == instance && j.right.instance == instance)
            .collect();

        if cols.is_empty() {
            // COUNT(*)-style access: no attribute is touched, the row count
            // comes from registration.
            return Ok(InstanceData {
                rows: vec![Row::new(); entry.row_count as usize],
                cols,
            });
        }

        let name_of = |c: usize| schema.attributes[c].name.clone();
        let loaded: Vec<usize> =
            cols.iter().copied().filter(|&c| self.store.is_loaded(table, &name_of(c))).collect();
        let raw: Vec<usize> =
            cols.iter().copied().filter(|&c| !loaded.contains(&c)).collect();
        for &c in &loaded {
            route.insert((table.to_string(), name_of(c)), Route::Loaded);
        }
        for &c in &raw {
            route.insert((table.to_string(), name_of(c)), Route::Raw);
        }

        let col_slot = |c: usize| cols.binary_search(&c).expect("col in instance set");
        let mut rows: Vec<Row>;
        if raw.is_empty() {
            // all loaded: push the filter down to the store
            let attr_names: Vec<String> = cols.iter().map(|&c| name_of(c)).collect();
            let store_preds: Vec<AttrPredicate> = preds
                .iter()
                .map(|p| AttrPredicate {
                    attr: name_of(p.attr.column),
                    op: p.op,
                    literal: p.literal.clone(),
                })
                .collect();
            let scan = self.store.scan_columns(table, &attr_names, &store_preds)?;
            let n = scan.rows_matched as usize;
            rows = Vec::with_capacity(n);
            let data: Vec<&crate::value::ColumnData> =
                attr_names.iter().map(|a| &scan.columns[a]).collect();
            for i in 0..n {
                rows.push(data.iter().map(|c| c.get(i)).collect());
            }
        } else if loaded.is_empty() {
            // all raw: push the filter down to the scanner
            let scan_preds: Vec<ColumnPredicate> = preds
                .iter()
                .map(|p| ColumnPredicate {
                    column: p.attr.column,
                    op: p.op,
                    literal: p.literal.clone(),
                })
                .collect();
            let scan = self.insitu.scan_raw(self.catalog, inst.table_id, &cols, &scan_preds)?;
            let n = scan.rows_matched as usize;
            rows = Vec::with_capacity(n);
            let data: Vec<&crate::value::ColumnData> =
                cols.iter().map(|c| &scan.columns[c]).collect();
            for i in 0..n {
                rows.push(data.iter().map(|c| c.get(i)).collect());
            }
        } else {
            // mixed: fetch both routes unfiltered, zip by row position, and
            // filter here. Row order is the raw-file order on both paths.
            let attr_names: Vec<String> = loaded.iter().map(|&c| name_of(c)).collect();
            let loaded_scan = self.store.scan_columns(table, &attr_names, &[])?;
            let raw_scan = self.insitu.scan_raw(self.catalog, inst.table_id, &raw, &[])?;
            if loaded_scan.rows_matched != raw_scan.rows_matched {
                return Err(Error::Execution(format!(
                    "table '{table}': loaded store has {} rows but the raw path produced {}; \
                     reload the table",
                    loaded_scan.rows_matched, raw_scan.rows_matched
                )));
            }
            let n = loaded_scan.rows_matched as usize;
            let per_col: Vec<&crate::value::ColumnData> = cols
                .iter()
                .map(|&c| {
                    if let Ok(slot) = loaded.binary_search(&c) {
                        &loaded_scan.columns[&attr_names[slot]]
                    } else {
                        &raw_scan.columns[&c]
                    }
                })
                .collect();
            rows = Vec::with_capacity(n);
            'rows: for i in 0..n {
                let row: Row = per_col.iter().map(|c| c.get(i)).collect();
                for p in &preds {
                    if !row[col_slot(p.attr.column)].satisfies(p.op, &p.literal)? {
                        continue 'rows;
                    }
                }
                rows.push(row);
            }
        }

        if !self_eqs.is_empty() {
            for j in &self_eqs {
                let lt = self.attr_type(q, &j.left);
                let rt = self.attr_type(q, &j.right);
                if lt != rt {
                    return Err(Error::Execution(format!(
                        "equality condition types differ: {} is {lt}, {} is {rt}",
                        self.attr_display(q, &j.left),
                        self.attr_display(q, &j.right),
                    )));
                }
            }
            let mut kept = Vec::with_capacity(rows.len());
            'filter: for row in rows {
                for j in &self_eqs {
                    let l = &row[col_slot(j.left.column)];
                    let r = &row[col_slot(j.right.column)];
                    if l.compare(r)? != std::cmp::Ordering::Equal {
                        continue 'filter;
                    }
                }
                kept.push(row);
            }
            rows = kept;
        }

        Ok(InstanceData { rows, cols })
    }
}

/// Computes aggregate outputs over the final row set. Returns `None` (an
/// empty result) when the input is empty and a non-COUNT aggregate is
/// present, since there is no null value to report.
fn aggregate(specs: &[(AggFunc, Option<usize>)], rows: &[Row]) -> Result<Option<Row>> {
    if rows.is_empty() && specs.iter().any(|(f, _)| *f != AggFunc::Count) {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(specs.len());
    for (func, arg) in specs {
        let value = match (func, arg) {
            (AggFunc::Count, _) => Value::Int(rows.len() as i64),
            (f, Some(p)) => {
                let column = rows.iter().map(|r| &r[*p]);
                match f {
                    AggFunc::Sum => sum_values(column.clone())?,
                    AggFunc::Avg => {
                        let n = rows.len() as f64;
                        match sum_values(column.clone())? {
                            Value::Int(s) => Value::Float(s as f64 / n),
                            Value::Float(s) => Value::Float(s / n),
                            _ => unreachable!("sum is numeric"),
                        }
                    }
                    AggFunc::Min | AggFunc::Max => {
                        let mut best: Option<&Value> = None;
                        for v in column.clone() {
                            best = Some(match best {
                                None => v,
                                Some(b) => {
                                    let ord = v.compare(b)?;
                                    let take = if *f == AggFunc::Min {
                                        ord == std::cmp::Ordering::Less
                                    } else {
                                        ord == std::cmp::Ordering::Greater
                                    };
                                    if take {
                                        v
                                    } else {
                                        b
                                    }
                                }
                            });
                        }
                        best.expect("nonempty input").clone()
                    }
                    AggFunc::Count => unreachable!("handled above"),
                }
            }
            (f, None) => {
                return Err(Error::Execution(format!("{}() requires an attribute", f.name())))
            }
        };
        out.push(value);
    }
    Ok(Some(out))
}

fn sum_values<'a>(values: impl Iterator<Item = &'a Value>) -> Result<Value> {
    let mut int_sum = 0i64;
    let mut float_sum = 0.0f64;
    let mut is_float = false;
    for v in values {
        match v {
            Value::Int(x) => {
                if is_float {
                    float_sum += *x as f64;
                } else {
                    int_sum = int_sum.checked_add(*x).ok_or_else(|| {
                        Error::Execution("integer overflow in SUM".into())
                    })?;
                }
            }
            Value::Float(x) => {
                if !is_float {
                    is_float = true;
                    float_sum = int_sum as f64;
                }
                float_sum += x;
            }
            Value::Text(_) => {
                return Err(Error::Execution("SUM over a text attribute".into()))
            }
        }
    }
    Ok(if is_float { Value::Float(float_sum) } else { Value::Int(int_sum) })
}
