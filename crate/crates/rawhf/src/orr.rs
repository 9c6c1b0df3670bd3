//! Partition planning: decide which attributes the loader moves into the
//! column store and which stay raw.
//!
//! The planner runs three phases. [`qci`] types every query by its
//! table-instance count, [`gra`] unions attribute sets per type, and [`qc`]
//! walks complex queries in frequency order admitting their attributes into
//! the covered list while a storage budget holds out. Queries whose
//! attributes do not fit are recorded as partially covered and can be
//! retried under later budget tranches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::catalog::{Catalog, WorkloadQuery};
use crate::error::{Error, Result};

/// A planned attribute: `(table name, attribute name)`.
pub type AttrKey = (String, String);

/// Effectively unbounded storage budget.
pub const UNLIMITED_BUDGET: u64 = u64::MAX;

/// Query classification: 0 = simple (single table instance), 1 = complex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTypeTable {
    entries: BTreeMap<u64, u8>,
}

impl QueryTypeTable {
    pub fn get(&self, q_id: u64) -> Option<u8> {
        self.entries.get(&q_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u8)> + '_ {
        self.entries.iter().map(|(q, t)| (*q, *t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Classifies each query: type 1 when it names two or more table instances
/// (self-joins count per instance), else type 0.
pub fn qci(workload: &[WorkloadQuery]) -> QueryTypeTable {
    let entries = workload
        .iter()
        .map(|q| (q.q_id, u8::from(q.is_complex())))
        .collect();
    QueryTypeTable { entries }
}

/// Groups attributes by query type: simple queries contribute to the raw
/// partition, complex queries to the load candidates, and the overlap is
/// replicated on both sides.
pub fn gra(
    catalog: &Catalog,
    workload: &[WorkloadQuery],
    qt: &QueryTypeTable,
) -> Result<(BTreeSet<AttrKey>, BTreeSet<AttrKey>, BTreeSet<AttrKey>)> {
    let mut sq_raw = BTreeSet::new();
    let mut cq_db = BTreeSet::new();
    for q in workload {
        let ty = qt.get(q.q_id).ok_or_else(|| Error::Lookup {
            kind: "query type",
            name: format!("Q{}", q.q_id),
        })?;
        let attrs = q.accessed_attributes(catalog);
        if ty == 1 {
            cq_db.extend(attrs);
        } else {
            sq_raw.extend(attrs);
        }
    }
    let cap = sq_raw.intersection(&cq_db).cloned().collect();
    Ok((sq_raw, cq_db, cap))
}

/// Mutable state threaded through [`qc`] calls, one per budget tranche.
#[derive(Debug, Clone, Default)]
pub struct QcState {
    /// Attributes admitted to the store, in admission order.
    pub covered_attrs: Vec<AttrKey>,
    /// Queries whose attributes are all covered.
    pub covered_queries: Vec<u64>,
    /// Queries left with at least one uncovered attribute.
    pub partially_covered: Vec<u64>,
    /// Bytes admitted so far, over all tranches.
    pub bytes_used: u64,
}

impl QcState {
    fn contains(&self, key: &AttrKey) -> bool {
        self.covered_attrs.iter().any(|k| k == key)
    }
}

/// One refinement pass: admits each query's attributes when the whole query
/// fits the remaining budget, otherwise marks it partially covered.
/// `queries` must already be in processing order.
pub fn qc(
    catalog: &Catalog,
    queries: &[&WorkloadQuery],
    budget_bytes: u64,
    state: &mut QcState,
) -> Result<()> {
    let mut remaining = budget_bytes;
    for q in queries {
        let attrs: Vec<AttrKey> = q.accessed_attributes(catalog).into_iter().collect();
        let uncovered: Vec<&AttrKey> =
            attrs.iter().filter(|k| !state.contains(k)).collect();
        if uncovered.is_empty() {
            // Fully covered already (or the query touches no attributes):
            // nothing to admit, so the budget test does not apply.
            state.covered_queries.push(q.q_id);
            continue;
        }
        let mut total: u64 = 0;
        for (t, a) in &attrs {
            total = total.saturating_add(catalog.attribute_size(t, a)?);
        }
        if total >= remaining {
            state.partially_covered.push(q.q_id);
            continue;
        }
        // Each remaining attribute is retried against the budget on its own,
        // then as a batch; with nonnegative sizes neither test can fail once
        // the whole query fit, but the steps stay observable.
        let mut batch = Vec::new();
        let mut batch_bytes: u64 = 0;
        for key in &uncovered {
            let size = catalog.attribute_size(&key.0, &key.1)?;
            if size < remaining {
                batch.push((*key).clone());
                batch_bytes = batch_bytes.saturating_add(size);
            }
        }
        if batch.len() == uncovered.len() && batch_bytes < remaining {
            state.covered_attrs.extend(batch);
            remaining -= batch_bytes;
            state.bytes_used = state.bytes_used.saturating_add(batch_bytes);
            state.covered_queries.push(q.q_id);
        } else {
            state.partially_covered.push(q.q_id);
        }
    }
    Ok(())
}

/// The loader's contract: which attributes go where.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    /// Attributes only simple queries touch; stay raw.
    pub sq_raw: BTreeSet<AttrKey>,
    /// Attributes complex queries touch; load candidates.
    pub cq_db: BTreeSet<AttrKey>,
    /// Overlap of the two: loaded and also served raw.
    pub cap: BTreeSet<AttrKey>,
    /// Attributes the budget admitted, in admission order. This is the load
    /// list.
    pub covered_attrs: Vec<AttrKey>,
    /// Queries whose attributes are all admitted.
    pub covered_queries: Vec<u64>,
    /// Queries with at least one attribute left out.
    pub partially_covered: Vec<u64>,
    /// Load candidates the budget excluded.
    pub remaining_attrs: BTreeSet<AttrKey>,
    /// Total budget across tranches.
    pub budget_bytes: u64,
    /// Estimated bytes of the admitted attributes.
    pub bytes_used: u64,
}

/// Runs the full planning pipeline over a workload.
///
/// Complex queries are processed most-frequent first (ties by ascending
/// query id). Each entry of `budgets` opens one refinement pass over the
/// queries still uncovered; a single unlimited tranche admits everything.
pub fn plan(
    catalog: &Catalog,
    workload: &[WorkloadQuery],
    budgets: &[u64],
) -> Result<PartitionPlan> {
    let qt = qci(workload);
    let (sq_raw, cq_db, cap) = gra(catalog, workload, &qt)?;

    let mut ordered: Vec<&WorkloadQuery> =
        workload.iter().filter(|q| q.is_complex()).collect();
    ordered.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.q_id.cmp(&b.q_id)));

    let budgets = if budgets.is_empty() { &[UNLIMITED_BUDGET][..] } else { budgets };
    let mut state = QcState::default();
    let mut pending = ordered;
    let mut budget_total: u64 = 0;
    for (i, &b) in budgets.iter().enumerate() {
        budget_total = budget_total.saturating_add(b);
        qc(catalog, &pending, b, &mut state)?;
        if state.partially_covered.is_empty() || i + 1 == budgets.len() {
            break;
        }
        // Later tranches retry only the queries the last pass left behind.
        let retry: BTreeSet<u64> = state.partially_covered.iter().copied().collect();
        pending.retain(|q| retry.contains(&q.q_id));
        state.partially_covered.clear();
    }

    let covered_set: BTreeSet<&AttrKey> = state.covered_attrs.iter().collect();
    let remaining_attrs =
        cq_db.iter().filter(|k| !covered_set.contains(k)).cloned().collect();
    Ok(PartitionPlan {
        sq_raw,
        cq_db,
        cap,
        covered_attrs: state.covered_attrs,
        covered_queries: state.covered_queries,
        partially_covered: state.partially_covered,
        remaining_attrs,
        budget_bytes: budget_total,
        bytes_used: state.bytes_used,
    })
}

impl PartitionPlan {
    /// Attributes the loader should move, grouped by table.
    pub fn load_sets(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (t, a) in &self.covered_attrs {
            out.entry(t.clone()).or_default().insert(a.clone());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "[META]").unwrap();
        writeln!(out, "budget_bytes={}", self.budget_bytes).unwrap();
        writeln!(out, "bytes_used={}", self.bytes_used).unwrap();
        let attr_section = |out: &mut String, name: &str, items: &mut dyn Iterator<Item = &AttrKey>| {
            writeln!(out, "[{name}]").unwrap();
            for (t, a) in items {
                writeln!(out, "{t} {a}").unwrap();
            }
        };
        attr_section(&mut out, "SQ-RAW", &mut self.sq_raw.iter());
        attr_section(&mut out, "CQ-DB", &mut self.cq_db.iter());
        attr_section(&mut out, "CAP", &mut self.cap.iter());
        attr_section(&mut out, "COVERED", &mut self.covered_attrs.iter());
        writeln!(out, "[COVERED-QUERIES]").unwrap();
        for q in &self.covered_queries {
            writeln!(out, "{q}").unwrap();
        }
        writeln!(out, "[PCQ]").unwrap();
        for q in &self.partially_covered {
            writeln!(out, "{q}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<PartitionPlan> {
        let mut plan = PartitionPlan {
            sq_raw: BTreeSet::new(),
            cq_db: BTreeSet::new(),
            cap: BTreeSet::new(),
            covered_attrs: Vec::new(),
            covered_queries: Vec::new(),
            partially_covered: Vec::new(),
            remaining_attrs: BTreeSet::new(),
            budget_bytes: 0,
            bytes_used: 0,
        };
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                msg: format!("plan line {}: {msg}", lineno + 1),
                pos: 0,
            };
            if line.starts_with('[') && line.ends_with(']') {
                let name = &line[1..line.len() - 1];
                match name {
                    "META" | "SQ-RAW" | "CQ-DB" | "CAP" | "COVERED" | "COVERED-QUERIES"
                    | "PCQ" => section = Some(name.to_string()),
                    other => return Err(err(format!("unknown section [{other}]"))),
                }
                continue;
            }
            match section.as_deref() {
                None => return Err(err("item before any section header".into())),
                Some("META") => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
                    let value: u64 = value
                        .trim()
                        .parse()
                        .map_err(|e| err(format!("bad value for {key}: {e}")))?;
                    match key.trim() {
                        "budget_bytes" => plan.budget_bytes = value,
                        "bytes_used" => plan.bytes_used = value,
                        other => return Err(err(format!("unknown meta key '{other}'"))),
                    }
                }
                Some("COVERED-QUERIES") | Some("PCQ") => {
                    let q: u64 =
                        line.parse().map_err(|e| err(format!("bad query id: {e}")))?;
                    if section.as_deref() == Some("PCQ") {
                        plan.partially_covered.push(q);
                    } else {
                        plan.covered_queries.push(q);
                    }
                }
                Some(attrs) => {
                    let mut parts = line.split_whitespace();
                    let key = match (parts.next(), parts.next(), parts.next()) {
                        (Some(t), Some(a), None) => (t.to_string(), a.to_string()),
                        _ => return Err(err(format!("expected 'table attr', got '{line}'"))),
                    };
                    match attrs {
                        "SQ-RAW" => {
                            plan.sq_raw.insert(key);
                        }
                        "CQ-DB" => {
                            plan.cq_db.insert(key);
                        }
                        "CAP" => {
                            plan.cap.insert(key);
                        }
                        "COVERED" => plan.covered_attrs.push(key),
                        _ => unreachable!("section names are validated above"),
                    }
                }
            }
        }
        let covered_set: BTreeSet<&AttrKey> = plan.covered_attrs.iter().collect();
        plan.remaining_attrs =
            plan.cq_db.iter().filter(|k| !covered_set.contains(k)).cloned().collect();
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PartitionPlan> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PartitionPlan::parse(&text)
    }
}
