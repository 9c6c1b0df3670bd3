//! Strategy drivers: run one workload end to end and produce a report.
//!
//! Four strategies share a catalog and raw files but differ in what they
//! load and how they dispatch:
//!
//! * `dbms-full`: load every attribute of every referenced table, then run
//!   queries serially at the default work-memory grant.
//! * `insitu`: load nothing; every query scans raw files.
//! * `orr`: plan partitions, load the covered attributes, run serially.
//! * `rawhf`: plan, then overlap loading with the simple queries and
//!   schedule everything through availability-gated sized grants.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::catalog::{Catalog, WorkloadQuery};
use crate::colstore::ColStore;
use crate::config::{RunConfig, Strategy};
use crate::error::Result;
use crate::exec::{Executor, QueryRunRecord, Route, WorkMemGrant};
use crate::insitu::{InsituEngine, MalformedPolicy};
use crate::metrics::{
    compute_faa, compute_fal, compute_wet, result_checksum, ExecutionMode, QueryReportRow,
    WorkloadReport,
};
use crate::muar::{Scheduler, WORK_MEM_FLOOR_BYTES};
use crate::orr::{self, PartitionPlan};
use crate::rmon::{
    process_cpu_seconds, process_io_bytes, process_peak_rss_bytes, MachineSpec, Monitor,
    MonitorSource, SyntheticScript, TaskDelta,
};
use crate::value::Row;

/// Attributes per bulk-load call; bounds loader memory on wide tables.
pub const LOAD_BATCH_ATTRS: usize = 64;

/// Positional-map cache budget as a fraction of machine RAM.
pub const MAP_BUDGET_RAM_FRACTION: f64 = 0.25;

/// Everything a run produces beyond the report: the plan (when the strategy
/// planned), result checksums, and optionally the rows themselves.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: WorkloadReport,
    pub plan: Option<PartitionPlan>,
    pub checksums: BTreeMap<u64, String>,
    /// Populated only when the config asked to keep results.
    pub results: BTreeMap<u64, Vec<Row>>,
}

/// Runs `workload` under the configured strategy. The store directory and
/// spill space are namespaced per strategy so comparisons do not interfere.
pub fn run_workload(
    cfg: &RunConfig,
    catalog: &Catalog,
    workload: &[WorkloadQuery],
) -> Result<RunOutcome> {
    let strategy = cfg.strategy;
    let machine = match cfg.machine {
        Some(m) => m,
        None => MachineSpec::detect()?,
    };
    let store_dir = cfg.data_dir.join(format!("db-{}", strategy.name()));
    let store = ColStore::open(&store_dir)?;
    let map_budget = (machine.total_ram_bytes as f64 * MAP_BUDGET_RAM_FRACTION) as u64;
    let insitu = InsituEngine::new(map_budget, MalformedPolicy::Fail);
    let tmp_dir = cfg.tmp_dir().join(strategy.name());
    let executor = Executor { catalog, insitu: &insitu, store: &store, tmp_dir };

    let cpu_before = process_cpu_seconds();
    let io_before = process_io_bytes();

    let phase = match strategy {
        Strategy::Insitu => {
            let (records, checksums, results) =
                serial_phase(&executor, workload, cfg.keep_results, None)?;
            Phase { dlt: 0.0, bytes_written: 0, plan: None, records, checksums, results, span: None }
        }
        Strategy::DbmsFull => {
            let mut dlt = 0.0;
            let mut written = 0;
            for table in referenced_tables(workload) {
                let entry = catalog.table_by_name(&table)?;
                let attrs: BTreeSet<String> =
                    entry.schema.attributes.iter().map(|a| a.name.clone()).collect();
                let (d, w) = batched_load(catalog, &store, &table, &attrs)?;
                dlt += d;
                written += w;
            }
            let (records, checksums, results) =
                serial_phase(&executor, workload, cfg.keep_results, None)?;
            Phase { dlt, bytes_written: written, plan: None, records, checksums, results, span: None }
        }
        Strategy::Orr => {
            let plan = orr::plan(catalog, workload, &cfg.budgets)?;
            let mut dlt = 0.0;
            let mut written = 0;
            for (table, attrs) in plan.load_sets() {
                let (d, w) = batched_load(catalog, &store, &table, &attrs)?;
                dlt += d;
                written += w;
            }
            let (records, checksums, results) =
                serial_phase(&executor, workload, cfg.keep_results, None)?;
            Phase { dlt, bytes_written: written, plan: Some(plan), records, checksums, results, span: None }
        }
        Strategy::Rawhf => rawhf_phase(cfg, catalog, &store, &executor, machine, workload)?,
    };

    let cpu_seconds = process_cpu_seconds() - cpu_before;
    let (bytes_read, bytes_written) = match (io_before, process_io_bytes()) {
        (Some((r0, w0)), Some((r1, w1))) => (r1.saturating_sub(r0), w1.saturating_sub(w0)),
        _ => (estimate_reads(catalog, &store, workload, &phase.records), phase.bytes_written),
    };

    let qet_seconds: f64 = phase.records.iter().map(|r| r.qet_seconds).sum();
    let wet_seconds = match phase.span {
        Some(span) => compute_wet(ExecutionMode::Parallel, phase.dlt, qet_seconds, Some(span))?,
        None => compute_wet(ExecutionMode::Serial, phase.dlt, qet_seconds, None)?,
    };
    let faa = compute_faa(catalog, workload)?;
    let fal = match &phase.plan {
        Some(plan) => compute_fal(catalog, plan)?,
        None => fal_from_store(catalog, workload, &store)?,
    };
    let mut db_size_bytes = 0;
    for table in referenced_tables(workload) {
        db_size_bytes += store.db_size(&table)?;
    }

    let queries = phase
        .records
        .iter()
        .map(|r| QueryReportRow {
            record: r.clone(),
            checksum: phase.checksums.get(&r.q_id).cloned().unwrap_or_default(),
        })
        .collect();
    let report = WorkloadReport {
        strategy: strategy.name().to_string(),
        dlt_seconds: phase.dlt,
        qet_seconds,
        wet_seconds,
        faa,
        fal,
        cpu_seconds,
        peak_rss_bytes: process_peak_rss_bytes(),
        bytes_read,
        bytes_written,
        db_size_bytes,
        queries,
    };
    Ok(RunOutcome { report, plan: phase.plan, checksums: phase.checksums, results: phase.results })
}

struct Phase {
    dlt: f64,
    bytes_written: u64,
    plan: Option<PartitionPlan>,
    records: Vec<QueryRunRecord>,
    checksums: BTreeMap<u64, String>,
    results: BTreeMap<u64, Vec<Row>>,
    /// Wall span for overlapped runs; serial strategies leave it unset.
    span: Option<f64>,
}

/// Plans, then overlaps loading with the simple queries: the load thread
/// works through the covered attributes while simple queries (raw-only by
/// construction) are scheduled; complex queries follow once loading ends.
fn rawhf_phase(
    cfg: &RunConfig,
    catalog: &Catalog,
    store: &ColStore,
    executor: &Executor<'_>,
    machine: MachineSpec,
    workload: &[WorkloadQuery],
) -> Result<Phase> {
    let plan = orr::plan(catalog, workload, &cfg.budgets)?;
    let load_sets = plan.load_sets();

    let sink = cfg.data_dir.join("usage-rawhf.csv");
    let source = match &cfg.synthetic_monitor {
        Some(path) => MonitorSource::Synthetic(SyntheticScript::load(path)?),
        None if cfg.monitor_enabled => MonitorSource::Os,
        // Constant abundance: sized grants still flow, but nothing samples.
        None => MonitorSource::Synthetic(SyntheticScript::new(vec![(0, 100.0, 0.9, 0.0)])?),
    };
    let monitor = Monitor::new(cfg.monitor_interval_s, &sink, source)?;
    monitor.start()?;

    let mut scheduler = Scheduler::new(executor, &monitor, machine);
    scheduler.min_rr = cfg.min_rr;
    scheduler.keep_results = cfg.keep_results;
    scheduler.log_path = Some(cfg.data_dir.join("schedule-rawhf.log"));

    let simple: Vec<WorkloadQuery> =
        workload.iter().filter(|q| !q.is_complex()).cloned().collect();
    let complex: Vec<WorkloadQuery> =
        workload.iter().filter(|q| q.is_complex()).cloned().collect();

    let span_start = Instant::now();
    let (load_result, sched_result) = std::thread::scope(|scope| {
        let loader = scope.spawn(|| -> Result<(f64, u64)> {
            let mut dlt = 0.0;
            let mut written = 0;
            for (table, attrs) in &load_sets {
                let (d, w) = batched_load(catalog, store, table, attrs)?;
                dlt += d;
                written += w;
            }
            Ok((dlt, written))
        });
        let first = scheduler.schedule_workload(&simple, cfg.timeout_s);
        let load_result = loader.join().expect("load thread panicked");
        let sched_result = first.and_then(|a| {
            scheduler.schedule_workload(&complex, cfg.timeout_s).map(|b| (a, b))
        });
        (load_result, sched_result)
    });
    let (dlt, bytes_written) = load_result?;
    let (first, second) = sched_result?;
    let span = span_start.elapsed().as_secs_f64();
    monitor.stop()?;

    let mut records = first.records;
    records.extend(second.records);
    let mut checksums = first.checksums;
    checksums.extend(second.checksums);
    let mut results = first.results;
    results.extend(second.results);
    account_to_monitor(catalog, store, workload, &records, &monitor);
    Ok(Phase { dlt, bytes_written, plan: Some(plan), records, checksums, results, span: Some(span) })
}

/// Loads one table's attributes in bounded batches; returns total load time
/// and bytes written.
pub fn batched_load(
    catalog: &Catalog,
    store: &ColStore,
    table: &str,
    attrs: &BTreeSet<String>,
) -> Result<(f64, u64)> {
    let id = catalog.table_by_name(table)?.id;
    let names: Vec<&String> = attrs.iter().collect();
    let mut dlt = 0.0;
    let mut written = 0;
    for chunk in names.chunks(LOAD_BATCH_ATTRS) {
        let batch: BTreeSet<String> = chunk.iter().map(|s| (*s).clone()).collect();
        let receipt = store.load_columns(catalog, id, &batch)?;
        dlt += receipt.dlt_seconds;
        written += receipt.bytes_written;
    }
    Ok((dlt, written))
}

/// Tables referenced by any query, each once.
pub fn referenced_tables(workload: &[WorkloadQuery]) -> BTreeSet<String> {
    workload
        .iter()
        .flat_map(|q| q.table_instances.iter().map(|t| t.table.clone()))
        .collect()
}

/// Runs queries in workload order at the default grant.
fn serial_phase(
    executor: &Executor<'_>,
    workload: &[WorkloadQuery],
    keep_results: bool,
    monitor: Option<&Monitor>,
) -> Result<(Vec<QueryRunRecord>, BTreeMap<u64, String>, BTreeMap<u64, Vec<Row>>)> {
    let mut records = Vec::new();
    let mut checksums = BTreeMap::new();
    let mut results = BTreeMap::new();
    let grant = WorkMemGrant { bytes: WORK_MEM_FLOOR_BYTES };
    for q in workload {
        let (rows, record) = executor.execute(q, grant)?;
        checksums.insert(q.q_id, result_checksum(&rows));
        if keep_results {
            results.insert(q.q_id, rows);
        }
        records.push(record);
    }
    if let Some(m) = monitor {
        account_to_monitor(executor.catalog, executor.store, workload, &records, m);
    }
    Ok((records, checksums, results))
}

/// Attributes per-query usage to monitor tasks: estimated read volume plus
/// actual spill writes. Accounting is advisory; errors are ignored.
fn account_to_monitor(
    catalog: &Catalog,
    store: &ColStore,
    workload: &[WorkloadQuery],
    records: &[QueryRunRecord],
    monitor: &Monitor,
) {
    let by_id: BTreeMap<u64, &WorkloadQuery> = workload.iter().map(|q| (q.q_id, q)).collect();
    for record in records {
        let task = format!("q{}", record.q_id);
        monitor.register_task(&task);
        let read = by_id
            .get(&record.q_id)
            .map(|q| record_read_estimate(catalog, store, q, record))
            .unwrap_or(0);
        let delta = TaskDelta {
            cpu_pct: 0.0,
            rss_bytes: record.work_mem_granted,
            read_bytes: read,
            write_bytes: record.spill_bytes,
        };
        let _ = monitor.account_task(&task, delta);
    }
}

/// Estimated bytes a query read: per table instance, the raw file when any
/// attribute routed raw, plus each loaded column file.
fn record_read_estimate(
    catalog: &Catalog,
    store: &ColStore,
    query: &WorkloadQuery,
    record: &QueryRunRecord,
) -> u64 {
    let mut per_table: BTreeMap<&str, (bool, u64)> = BTreeMap::new();
    for ((table, attr), route) in &record.route {
        let slot = per_table.entry(table.as_str()).or_default();
        match route {
            Route::Raw => slot.0 = true,
            Route::Loaded => slot.1 += store.column_size(table, attr).unwrap_or(0),
        }
    }
    let mut total = 0u64;
    for inst in &query.table_instances {
        let Some((any_raw, loaded)) = per_table.get(inst.table.as_str()) else { continue };
        if *any_raw {
            if let Ok(entry) = catalog.table_by_name(&inst.table) {
                total += std::fs::metadata(&entry.raw_path).map(|m| m.len()).unwrap_or(0);
            }
        }
        total += loaded;
    }
    total
}

/// Fallback read estimate when process counters are unavailable.
fn estimate_reads(
    catalog: &Catalog,
    store: &ColStore,
    workload: &[WorkloadQuery],
    records: &[QueryRunRecord],
) -> u64 {
    let by_id: BTreeMap<u64, &WorkloadQuery> = workload.iter().map(|q| (q.q_id, q)).collect();
    records
        .iter()
        .filter_map(|r| by_id.get(&r.q_id).map(|q| record_read_estimate(catalog, store, q, r)))
        .sum()
}

/// Loaded fraction measured from the store itself: loaded attributes of the
/// referenced tables over all their attributes.
fn fal_from_store(catalog: &Catalog, workload: &[WorkloadQuery], store: &ColStore) -> Result<f64> {
    let tables = referenced_tables(workload);
    let mut total = 0u64;
    let mut loaded = 0u64;
    for t in &tables {
        let entry = catalog.table_by_name(t)?;
        total += entry.schema.attributes.len() as u64;
        loaded += store.loaded_attrs(t).len() as u64;
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(loaded as f64 / total as f64)
}
