//! Availability-gated scheduling with sized work-memory grants.
//!
//! Before each dispatch the scheduler polls the monitor until the machine
//! clears minimum availability on all three axes, then sizes the query's
//! work memory: first runs from the availability formula, repeat runs from
//! the previous grant plus observed spill scaled by row growth. Dispatched
//! queries run as concurrent tasks up to a core-count ceiling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::catalog::WorkloadQuery;
use crate::error::{Error, Result};
use crate::exec::{Executor, QueryRunRecord, WorkMemGrant};
use crate::metrics::result_checksum;
use crate::rmon::{MachineSpec, Monitor, ResourceSnapshot};
use crate::value::Row;

/// Smallest work-memory grant the executor accepts: 4 MiB, the engine
/// default when no scheduler sizes the grant.
pub const WORK_MEM_FLOOR_BYTES: u64 = 4 * 1024 * 1024;

/// Share of currently free RAM a single grant may claim.
pub const RAM_CAP_FRACTION: f64 = 0.9;

/// Availability thresholds a snapshot must clear before dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimumResources {
    pub cpu_free_pct_min: f64,
    pub ram_free_frac_min: f64,
    pub io_busy_pct_max: f64,
}

impl Default for MinimumResources {
    fn default() -> MinimumResources {
        MinimumResources {
            cpu_free_pct_min: 25.0,
            ram_free_frac_min: 0.05,
            io_busy_pct_max: 90.0,
        }
    }
}

impl MinimumResources {
    pub fn satisfied_by(&self, snap: &ResourceSnapshot) -> bool {
        snap.cpu_free_pct >= self.cpu_free_pct_min
            && snap.ram_free_frac >= self.ram_free_frac_min
            && snap.io_busy_pct <= self.io_busy_pct_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantSource {
    Formula,
    Repeat,
}

impl GrantSource {
    pub fn name(&self) -> &'static str {
        match self {
            GrantSource::Formula => "formula",
            GrantSource::Repeat => "repeat",
        }
    }
}

/// A sized work-memory grant and how it was derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkMemDecision {
    pub q_id: u64,
    /// Raw formula output before any clamping.
    pub formula_bytes: f64,
    pub granted_bytes: u64,
    /// True when the free-RAM cap bound the grant.
    pub capped: bool,
    pub source: GrantSource,
}

fn clamp_grant(q_id: u64, formula_bytes: f64, snap: &ResourceSnapshot, machine: &MachineSpec, source: GrantSource) -> WorkMemDecision {
    let cap = RAM_CAP_FRACTION * snap.ram_free_frac * machine.total_ram_bytes as f64;
    let capped = formula_bytes > cap;
    let bounded = if capped { cap } else { formula_bytes };
    let granted_bytes = (bounded.max(WORK_MEM_FLOOR_BYTES as f64)) as u64;
    WorkMemDecision { q_id, formula_bytes, granted_bytes, capped, source }
}

/// Sizes a first-run grant from live availability.
///
/// With free-core count `P_C = cpu_free_pct / (100 / cores)` (kept
/// fractional, floored at 1), the grant is
/// `(ram_free_frac / P_C) × (total_ram / cores) × (join_count / 4)`,
/// clamped to at least the 4 MiB floor and at most 90% of free RAM.
pub fn wm_query(
    snap: &ResourceSnapshot,
    query: &WorkloadQuery,
    machine: &MachineSpec,
) -> WorkMemDecision {
    let cores = machine.cpu_cores.max(1) as f64;
    let p_c = (snap.cpu_free_pct / (100.0 / cores)).max(1.0);
    let j_c = query.join_count().0 as f64;
    let formula_bytes =
        (snap.ram_free_frac / p_c) * (machine.total_ram_bytes as f64 / cores) * (j_c / 4.0);
    clamp_grant(query.q_id, formula_bytes, snap, machine, GrantSource::Formula)
}

/// What the coordinator remembers about a completed run.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub decision: WorkMemDecision,
    pub record: QueryRunRecord,
    /// Sum of catalog row counts over the query's table instances when the
    /// run happened; lets repeat runs scale by table growth.
    pub catalog_rows: u64,
}

/// Completed-run history by query id.
#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    entries: BTreeMap<u64, HistoryEntry>,
}

impl RunHistory {
    pub fn get(&self, q_id: u64) -> Option<&HistoryEntry> {
        self.entries.get(&q_id)
    }

    pub fn insert(&mut self, entry: HistoryEntry) {
        self.entries.insert(entry.record.q_id, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sizes a repeat-run grant: previous grant plus previous spill, scaled by
/// the current-to-previous row ratio, under the same floor and cap.
pub fn wm_repeat(
    entry: &HistoryEntry,
    current_rows: u64,
    snap: &ResourceSnapshot,
    machine: &MachineSpec,
) -> WorkMemDecision {
    let prev_rows = entry.record.input_row_count;
    let ratio = if prev_rows == 0 {
        1.0
    } else {
        current_rows as f64 / prev_rows as f64
    };
    let base = entry.decision.granted_bytes.saturating_add(entry.record.spill_bytes) as f64;
    clamp_grant(entry.record.q_id, base * ratio, snap, machine, GrantSource::Repeat)
}

/// One dispatch, as written to the scheduling log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchDecision {
    pub q_id: u64,
    /// Time spent blocked on the availability gate.
    pub wait_ms: u64,
    pub decision: WorkMemDecision,
}

#[derive(Debug, Default)]
pub struct ScheduleOutcome {
    /// Per-query records, in dispatch order.
    pub records: Vec<QueryRunRecord>,
    /// Result checksums by query id.
    pub checksums: BTreeMap<u64, String>,
    /// Full result rows, only when the scheduler was asked to keep them.
    pub results: BTreeMap<u64, Vec<Row>>,
    pub decisions: Vec<DispatchDecision>,
    /// Wall span from the first dispatch decision to the last completion.
    pub wet_seconds: f64,
}

/// Coordinates gated dispatch over one executor.
pub struct Scheduler<'a> {
    pub executor: &'a Executor<'a>,
    pub monitor: &'a Monitor,
    pub machine: MachineSpec,
    pub min_rr: MinimumResources,
    pub history: RunHistory,
    /// Concurrent-dispatch ceiling; defaults to the core count.
    pub max_concurrent: usize,
    /// Appended with one line per dispatch when set.
    pub log_path: Option<PathBuf>,
    /// Keep full result rows in the outcome (tests); checksums are always
    /// kept.
    pub keep_results: bool,
}

impl<'a> Scheduler<'a> {
    pub fn new(executor: &'a Executor<'a>, monitor: &'a Monitor, machine: MachineSpec) -> Scheduler<'a> {
        Scheduler {
            executor,
            monitor,
            machine,
            min_rr: MinimumResources::default(),
            history: RunHistory::default(),
            max_concurrent: machine.cpu_cores.max(1) as usize,
            log_path: None,
            keep_results: false,
        }
    }

    /// Current row estimate for a repeat run: the previous post-filter input
    /// scaled by catalog row growth since that run.
    fn current_rows_estimate(&self, q: &WorkloadQuery, entry: &HistoryEntry) -> u64 {
        let now: u64 = q
            .table_instances
            .iter()
            .map(|i| self.executor.catalog.table(i.table_id).row_count)
            .sum();
        if entry.catalog_rows == 0 {
            return entry.record.input_row_count;
        }
        let ratio = now as f64 / entry.catalog_rows as f64;
        (entry.record.input_row_count as f64 * ratio).round() as u64
    }

    /// Runs the workload in order, gating each dispatch on availability.
    /// `timeout_s` bounds each query's gate wait.
    pub fn schedule_workload(
        &mut self,
        workload: &[WorkloadQuery],
        timeout_s: f64,
    ) -> Result<ScheduleOutcome> {
        let started = Instant::now();
        let mut outcome = ScheduleOutcome::default();
        let mut log = String::new();
        let mut dispatch_order: Vec<u64> = Vec::new();
        let mut by_id: BTreeMap<u64, QueryRunRecord> = BTreeMap::new();
        let mut first_error: Option<Error> = None;

        type Completion = (u64, WorkMemDecision, Result<(Vec<Row>, String, QueryRunRecord)>);
        let (tx, rx) = mpsc::channel::<Completion>();
        let keep_results = self.keep_results;

        std::thread::scope(|scope| {
            let mut in_flight = 0usize;
            'dispatch: for q in workload {
                while in_flight >= self.max_concurrent {
                    let done = rx.recv().expect("worker channel closed");
                    in_flight -= 1;
                    if let Err(e) = self.complete(done, &mut outcome, &mut by_id) {
                        first_error.get_or_insert(e);
                        break 'dispatch;
                    }
                }
                let wait_started = Instant::now();
                let snapshot = loop {
                    let snap = match self.monitor.current_availability() {
                        Ok(s) => s,
                        Err(e) => {
                            first_error.get_or_insert(e);
                            break 'dispatch;
                        }
                    };
                    if self.min_rr.satisfied_by(&snap) {
                        break snap;
                    }
                    if wait_started.elapsed().as_secs_f64() >= timeout_s {
                        first_error.get_or_insert(Error::Timeout(format!(
                            "Q{} blocked on resources for more than {timeout_s}s \
                             (cpu_free {:.1} ram_free {:.2} io_busy {:.1})",
                            q.q_id, snap.cpu_free_pct, snap.ram_free_frac, snap.io_busy_pct
                        )));
                        break 'dispatch;
                    }
                    std::thread::sleep(Duration::from_millis(100));
                };
                debug_assert!(self.min_rr.satisfied_by(&snapshot));
                let decision = match self.history.get(q.q_id) {
                    Some(entry) => {
                        let rows = self.current_rows_estimate(q, entry);
                        wm_repeat(entry, rows, &snapshot, &self.machine)
                    }
                    None => wm_query(&snapshot, q, &self.machine),
                };
                let wait_ms = wait_started.elapsed().as_millis() as u64;
                writeln!(
                    log,
                    "{} q{} wait_ms={} grant={} source={} capped={}",
                    snapshot.timestamp_ms,
                    q.q_id,
                    wait_ms,
                    decision.granted_bytes,
                    decision.source.name(),
                    decision.capped
                )
                .unwrap();
                outcome.decisions.push(DispatchDecision { q_id: q.q_id, wait_ms, decision });
                dispatch_order.push(q.q_id);

                let tx = tx.clone();
                let executor = self.executor;
                scope.spawn(move || {
                    let grant = WorkMemGrant { bytes: decision.granted_bytes };
                    let sent = executor.execute(q, grant).map(|(rows, record)| {
                        let checksum = result_checksum(&rows);
                        let kept = if keep_results { rows } else { Vec::new() };
                        (kept, checksum, record)
                    });
                    let _ = tx.send((q.q_id, decision, sent));
                });
                in_flight += 1;
            }
            while in_flight > 0 {
                let done = rx.recv().expect("worker channel closed");
                in_flight -= 1;
                if let Err(e) = self.complete(done, &mut outcome, &mut by_id) {
                    first_error.get_or_insert(e);
                }
            }
        });

        if let Some(path) = &self.log_path {
            use std::io::Write;
            let mut file = std::fs::OpenOptions::new()
                .append(true)
                .create(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            file.write_all(log.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        outcome.records =
            dispatch_order.iter().filter_map(|q| by_id.remove(q)).collect();
        outcome.wet_seconds = started.elapsed().as_secs_f64();
        Ok(outcome)
    }

    fn complete(
        &mut self,
        (q_id, decision, result): (u64, WorkMemDecision, Result<(Vec<Row>, String, QueryRunRecord)>),
        outcome: &mut ScheduleOutcome,
        by_id: &mut BTreeMap<u64, QueryRunRecord>,
    ) -> Result<()> {
        let (rows, checksum, record) = result?;
        outcome.checksums.insert(q_id, checksum);
        if self.keep_results {
            outcome.results.insert(q_id, rows);
        }
        self.history.insert(HistoryEntry {
            decision,
            record: record.clone(),
            catalog_rows: self.catalog_rows_for(q_id, &record),
        });
        by_id.insert(q_id, record);
        Ok(())
    }

    fn catalog_rows_for(&self, _q_id: u64, record: &QueryRunRecord) -> u64 {
        // The record's route lists each table touched; instances of the same
        // table share a row count, so summing per route table is enough for
        // the growth ratio.
        let tables: std::collections::BTreeSet<&String> =
            record.route.keys().map(|(t, _)| t).collect();
        let mut total = 0u64;
        for t in tables {
            if let Ok(entry) = self.executor.catalog.table_by_name(t) {
                total += entry.row_count;
            }
        }
        total
    }
}
