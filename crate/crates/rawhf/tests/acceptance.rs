//! Acceptance gate: one pass/fail line per criterion, exit nonzero on any
//! failure. Criteria with measured ratios print the numbers they saw.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use rawhf::catalog::{parse_schema_file, Catalog, Schema, WorkloadQuery};
use rawhf::colstore::ColStore;
use rawhf::config::{RunConfig, Strategy};
use rawhf::driver;
use rawhf::exec::{hash_join, Executor, QueryRunRecord, WorkMemGrant};
use rawhf::gen::{gen_broad, gen_narrow, BroadSpec, NarrowSpec};
use rawhf::insitu::{InsituEngine, MalformedPolicy};
use rawhf::metrics::{compute_faa, compute_fal, result_checksum};
use rawhf::muar::{
    wm_query, wm_repeat, GrantSource, HistoryEntry, MinimumResources, Scheduler,
    WORK_MEM_FLOOR_BYTES,
};
use rawhf::orr::{self, PartitionPlan, UNLIMITED_BUDGET};
use rawhf::rmon::{MachineSpec, Monitor, MonitorSource, ResourceSnapshot, SyntheticScript};
use rawhf::value::{Row, Value, ValueType};

const MB: u64 = 1 << 20;

type Check = Result<String, String>;

fn main() {
    let total = Instant::now();
    let mut failures = 0u32;
    let mut broad: Option<Result<BroadResults, String>> = None;

    let criteria: Vec<(u32, &str)> = vec![
        (1, "path equivalence across routings"),
        (2, "partition planner matches straight-line oracle"),
        (3, "query classification reference pattern"),
        (4, "work-memory formula arithmetic"),
        (5, "repeat-run grant estimation"),
        (6, "spill behavior under small and large grants"),
        (7, "broad dataset: hybrid vs full-load WET"),
        (8, "narrow dataset: sized grants vs default memory"),
        (9, "attribute access and load fractions"),
        (10, "scheduler availability gating"),
        (11, "monitor overhead on broad WET"),
    ];

    // ACCEPT_ONLY=6,8 runs a subset while iterating; the gate is the full run.
    let only: Option<Vec<u32>> = std::env::var("ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());

    for (n, label) in criteria {
        if let Some(only) = &only {
            if !only.contains(&n) {
                continue;
            }
        }
        let started = Instant::now();
        let outcome = match n {
            1 => c1_path_equivalence(),
            2 => c2_planner_oracle(),
            3 => c3_classification_pattern(),
            4 => c4_formula_arithmetic(),
            5 => c5_repeat_estimation(),
            6 => c6_spill_behavior(),
            7 => broad_result(&mut broad, |b| {
                let rawhf = median(&b.monitored_wets);
                let ratio = rawhf / b.dbms_wet;
                if ratio <= 0.5 {
                    Ok(format!(
                        "hybrid {rawhf:.2}s vs full-load {:.2}s (ratio {ratio:.3})",
                        b.dbms_wet
                    ))
                } else {
                    Err(format!(
                        "ratio {ratio:.3} > 0.5 (hybrid {rawhf:.2}s, full-load {:.2}s)",
                        b.dbms_wet
                    ))
                }
            }),
            8 => c8_narrow_wet(),
            9 => c9_fractions(),
            10 => c10_gating(),
            11 => broad_result(&mut broad, |b| {
                // Each measurement of the change is one back-to-back on/off
                // pair; the median over pairs cancels the box's slow drift,
                // which dwarfs the monitor's cost on a shared host.
                let deltas: Vec<f64> = b
                    .monitored_wets
                    .iter()
                    .zip(&b.unmonitored_wets)
                    .map(|(on, off)| (on - off) / off)
                    .collect();
                let change = median(&deltas).abs();
                let shown: Vec<String> =
                    deltas.iter().map(|d| format!("{:+.1}%", d * 100.0)).collect();
                if change <= 0.05 {
                    Ok(format!("median paired change {:.1}% ({})", change * 100.0, shown.join(", ")))
                } else {
                    Err(format!(
                        "median paired change {:.1}% > 5% ({})",
                        change * 100.0,
                        shown.join(", ")
                    ))
                }
            }),
            _ => unreachable!(),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({secs:.1}s) - {label}: {detail}"),
            Err(reason) => {
                failures += 1;
                println!("criterion {n}: FAIL ({secs:.1}s) - {label}: {reason}");
            }
        }
    }

    println!("acceptance: {} criteria failed, {:.1}s total", failures, total.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn errstr<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Relaxed thresholds for live runs: this box's only core is busy running
/// the workload itself, so the CPU and IO gates would block the producer.
fn live_min_rr() -> MinimumResources {
    MinimumResources { cpu_free_pct_min: 0.0, ram_free_frac_min: 0.02, io_busy_pct_max: 100.0 }
}

// --- criterion 1: path equivalence -----------------------------------------

struct C1Attr {
    name: &'static str,
    ty: ValueType,
    /// Integer domain bound for literals and join selectivity; 0 for
    /// non-integer attributes.
    domain: i64,
}

struct C1Table {
    name: &'static str,
    rows: usize,
    attrs: &'static [C1Attr],
}

const C1_TABLES: &[C1Table] = &[
    C1Table {
        name: "t0",
        rows: 1200,
        attrs: &[
            C1Attr { name: "k0", ty: ValueType::Int64, domain: 60 },
            C1Attr { name: "k1", ty: ValueType::Int64, domain: 40 },
            C1Attr { name: "v0", ty: ValueType::Int64, domain: 1000 },
            C1Attr { name: "v1", ty: ValueType::Float64, domain: 0 },
            C1Attr { name: "s0", ty: ValueType::Text, domain: 0 },
        ],
    },
    C1Table {
        name: "t1",
        rows: 700,
        attrs: &[
            C1Attr { name: "k0", ty: ValueType::Int64, domain: 60 },
            C1Attr { name: "v0", ty: ValueType::Int64, domain: 500 },
            C1Attr { name: "s0", ty: ValueType::Text, domain: 0 },
        ],
    },
    C1Table {
        name: "t2",
        rows: 300,
        attrs: &[
            C1Attr { name: "k1", ty: ValueType::Int64, domain: 40 },
            C1Attr { name: "v2", ty: ValueType::Float64, domain: 0 },
        ],
    },
];

fn c1_write_fixture(dir: &Path, rng: &mut ChaCha8Rng) -> Result<Catalog, String> {
    let mut catalog = Catalog::new();
    for t in C1_TABLES {
        let mut csv = String::new();
        for _ in 0..t.rows {
            let mut fields = Vec::new();
            for a in t.attrs {
                match a.ty {
                    ValueType::Int64 => fields.push(rng.random_range(0..a.domain).to_string()),
                    ValueType::Float64 => {
                        fields.push(format!("{:.2}", rng.random_range(0..5000) as f64 / 7.0))
                    }
                    ValueType::Text => fields.push(format!("w{:02}", rng.random_range(0..10))),
                }
            }
            csv.push_str(&fields.join(","));
            csv.push('\n');
        }
        let path = dir.join(format!("{}.csv", t.name));
        std::fs::write(&path, csv).map_err(errstr)?;
        let mut schema = Schema::new(t.name);
        for a in t.attrs {
            schema = schema.attr(a.name, a.ty, 8.0);
        }
        catalog.register_table(schema, &path).map_err(errstr)?;
    }
    Ok(catalog)
}

fn c1_random_sql(rng: &mut ChaCha8Rng) -> String {
    let n_inst = rng.random_range(1..=3);
    let tables: Vec<&C1Table> =
        (0..n_inst).map(|_| &C1_TABLES[rng.random_range(0..C1_TABLES.len())]).collect();
    let alias = |i: usize| format!("x{i}");

    let int_attr = |rng: &mut ChaCha8Rng, t: &C1Table| -> &'static C1Attr {
        loop {
            let a = &t.attrs[rng.random_range(0..t.attrs.len())];
            if a.ty == ValueType::Int64 {
                return a;
            }
        }
    };

    let mut where_parts: Vec<String> = Vec::new();
    for i in 1..n_inst {
        let left = int_attr(rng, tables[i - 1]);
        let right = int_attr(rng, tables[i]);
        where_parts.push(format!("{}.{} = {}.{}", alias(i - 1), left.name, alias(i), right.name));
    }
    for _ in 0..rng.random_range(0..=2) {
        let i = rng.random_range(0..n_inst);
        let a = &tables[i].attrs[rng.random_range(0..tables[i].attrs.len())];
        let op = match a.ty {
            ValueType::Text => ["=", "!="][rng.random_range(0..2)],
            _ => ["<", "<=", "=", ">=", ">", "!="][rng.random_range(0..6)],
        };
        let lit = match a.ty {
            ValueType::Int64 => rng.random_range(0..a.domain.max(1)).to_string(),
            ValueType::Float64 => format!("{:.2}", rng.random_range(0..700) as f64 / 1.0),
            ValueType::Text => format!("'w{:02}'", rng.random_range(0..10)),
        };
        where_parts.push(format!("{}.{} {op} {lit}", alias(i), a.name));
    }

    let select = if rng.random_bool(0.3) {
        let mut items = vec!["COUNT(*)".to_string()];
        if rng.random_bool(0.7) {
            let i = rng.random_range(0..n_inst);
            let a = int_attr(rng, tables[i]);
            let f = ["SUM", "MIN", "MAX", "AVG"][rng.random_range(0..4)];
            items.push(format!("{f}({}.{})", alias(i), a.name));
        }
        items.join(", ")
    } else {
        let mut items = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let i = rng.random_range(0..n_inst);
            let a = &tables[i].attrs[rng.random_range(0..tables[i].attrs.len())];
            items.push(format!("{}.{}", alias(i), a.name));
        }
        items.join(", ")
    };

    let from = tables
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{} {}", t.name, alias(i)))
        .collect::<Vec<_>>()
        .join(", ");
    if where_parts.is_empty() {
        format!("SELECT {select} FROM {from}")
    } else {
        format!("SELECT {select} FROM {from} WHERE {}", where_parts.join(" AND "))
    }
}

fn c1_path_equivalence() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let catalog = c1_write_fixture(dir.path(), &mut rng)?;

    // Four routings: nothing loaded, everything, a random split, and its
    // complement.
    let mut split_a: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut split_b: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut all: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for t in C1_TABLES {
        for a in t.attrs {
            all.entry(t.name.into()).or_default().insert(a.name.into());
            if rng.random_bool(0.5) {
                split_a.entry(t.name.into()).or_default().insert(a.name.into());
            } else {
                split_b.entry(t.name.into()).or_default().insert(a.name.into());
            }
        }
    }
    let configs: Vec<BTreeMap<String, BTreeSet<String>>> =
        vec![BTreeMap::new(), all, split_a, split_b];

    let insitu = InsituEngine::new(256 * MB, MalformedPolicy::Fail);
    let mut stores = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let store = ColStore::open(&dir.path().join(format!("store{i}"))).map_err(errstr)?;
        for (table, attrs) in cfg {
            let id = catalog.table_by_name(table).map_err(errstr)?.id;
            store.load_columns(&catalog, id, attrs).map_err(errstr)?;
        }
        stores.push(store);
    }
    let executors: Vec<Executor<'_>> = stores
        .iter()
        .enumerate()
        .map(|(i, store)| Executor {
            catalog: &catalog,
            insitu: &insitu,
            store,
            tmp_dir: dir.path().join(format!("tmp{i}")),
        })
        .collect();

    let grant = WorkMemGrant { bytes: WORK_MEM_FLOOR_BYTES };
    let queries = 120;
    for qn in 0..queries {
        let sql = c1_random_sql(&mut rng);
        let q = catalog.parse_query(&sql, qn, 1).map_err(|e| format!("{sql}: {e}"))?;
        let mut sums: Vec<String> = Vec::new();
        for ex in &executors {
            let (rows, _) = ex.execute(&q, grant).map_err(|e| format!("{sql}: {e}"))?;
            sums.push(result_checksum(&rows));
        }
        if sums.iter().any(|s| s != &sums[0]) {
            return Err(format!("checksum divergence on query {qn}: {sql}"));
        }
    }
    Ok(format!("{queries} random queries identical across 4 routings"))
}

// --- criterion 2: planner vs straight-line oracle ---------------------------

struct OracleQuery {
    q_id: u64,
    frequency: u64,
    complex: bool,
    attrs: BTreeSet<usize>,
}

/// Independent single-pass restatement of the partitioning algorithm used to
/// cross-check the planner.
fn oracle_plan(
    queries: &[OracleQuery],
    sizes: &[u64],
    budget: u64,
) -> (BTreeSet<usize>, BTreeSet<u64>, BTreeSet<u64>, u64) {
    let mut complex: Vec<&OracleQuery> = queries.iter().filter(|q| q.complex).collect();
    complex.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.q_id.cmp(&b.q_id)));

    let mut ca_l: BTreeSet<usize> = BTreeSet::new();
    let mut covered: BTreeSet<u64> = BTreeSet::new();
    let mut pcq: BTreeSet<u64> = BTreeSet::new();
    let mut used = 0u64;
    for q in complex {
        let uncovered: Vec<usize> = q.attrs.iter().copied().filter(|a| !ca_l.contains(a)).collect();
        if uncovered.is_empty() {
            covered.insert(q.q_id);
            continue;
        }
        let total: u64 = q.attrs.iter().map(|&a| sizes[a]).sum();
        if total >= budget.saturating_sub(used) {
            pcq.insert(q.q_id);
            continue;
        }
        for a in uncovered {
            used += sizes[a];
            ca_l.insert(a);
        }
        covered.insert(q.q_id);
    }
    (ca_l, covered, pcq, used)
}

fn c2_planner_oracle() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let seeds = 520u64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_attrs = rng.random_range(4..=20usize);
        let sizes: Vec<u64> = (0..n_attrs).map(|_| rng.random_range(1..=9u64)).collect();

        let mut schema = Schema::new("t");
        for (i, &s) in sizes.iter().enumerate() {
            schema = schema.attr(&format!("a{i:02}"), ValueType::Int64, s as f64);
        }
        let csv_path = dir.path().join(format!("t{seed}.csv"));
        std::fs::write(&csv_path, format!("{}\n", vec!["0"; n_attrs].join(",")))
            .map_err(errstr)?;
        let mut catalog = Catalog::new();
        catalog.register_table(schema, &csv_path).map_err(errstr)?;

        let mut oq: Vec<OracleQuery> = Vec::new();
        let mut workload: Vec<WorkloadQuery> = Vec::new();
        for j in 0..rng.random_range(1..=12u64) {
            let q_id = j + 1;
            let complex = rng.random_bool(0.75);
            let k = rng.random_range(1..=n_attrs.min(6));
            let mut idx: Vec<usize> = (0..n_attrs).collect();
            idx.shuffle(&mut rng);
            let attrs: BTreeSet<usize> = idx.into_iter().take(k).collect();
            let frequency = rng.random_range(1..=9u64);

            let names: Vec<String> = attrs.iter().map(|i| format!("a{i:02}")).collect();
            let select: Vec<String> = names.iter().map(|n| format!("t0.{n}")).collect();
            let sql = if complex {
                let ja = &names[0];
                let jb = names.last().unwrap();
                format!(
                    "SELECT {} FROM t t0, t t1 WHERE t0.{ja} = t1.{jb}",
                    select.join(", ")
                )
            } else {
                format!("SELECT {} FROM t t0", select.join(", "))
            };
            workload.push(catalog.parse_query(&sql, q_id, frequency).map_err(errstr)?);
            oq.push(OracleQuery { q_id, frequency, complex, attrs });
        }

        let total_size: u64 = sizes.iter().sum();
        let budget = match rng.random_range(0..5) {
            0 => 0,
            1 => rng.random_range(1..=12),
            2 => rng.random_range(1..=total_size.max(2)),
            3 => total_size * 2 + 5,
            _ => UNLIMITED_BUDGET,
        };

        let plan = orr::plan(&catalog, &workload, &[budget]).map_err(errstr)?;
        let (ca_l, covered, pcq, used) = oracle_plan(&oq, &sizes, budget);

        let plan_attrs: BTreeSet<usize> = plan
            .covered_attrs
            .iter()
            .map(|(_, a)| a[1..].parse::<usize>().unwrap())
            .collect();
        let plan_covered: BTreeSet<u64> = plan.covered_queries.iter().copied().collect();
        let plan_pcq: BTreeSet<u64> = plan.partially_covered.iter().copied().collect();
        if plan_attrs != ca_l
            || plan_covered != covered
            || plan_pcq != pcq
            || plan.bytes_used != used
        {
            return Err(format!(
                "seed {seed}: planner (attrs {:?}, covered {:?}, pcq {:?}, used {}) vs oracle (attrs {:?}, covered {:?}, pcq {:?}, used {})",
                plan_attrs, plan_covered, plan_pcq, plan.bytes_used,
                ca_l, covered, pcq, used
            ));
        }
        let sum_sizes: u64 = ca_l.iter().map(|&a| sizes[a]).sum();
        if sum_sizes != used || used > budget {
            return Err(format!("seed {seed}: budget safety violated ({used} of {budget})"));
        }
    }
    Ok(format!("{seeds} seeds exact, budget safety held"))
}

// --- criterion 3: classification pattern ------------------------------------

fn c3_classification_pattern() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "1,2\n").map_err(errstr)?;
    let mut catalog = Catalog::new();
    let schema = Schema::new("t")
        .attr("a", ValueType::Int64, 8.0)
        .attr("b", ValueType::Int64, 8.0);
    catalog.register_table(schema, &csv).map_err(errstr)?;

    let ids = [1u64, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12];
    let instances = [2usize, 1, 2, 1, 2, 1, 1, 2, 1, 2, 2];
    let expected = [1u8, 0, 1, 0, 1, 0, 0, 1, 0, 1, 1];
    let mut workload = Vec::new();
    for (&q_id, &n) in ids.iter().zip(&instances) {
        let sql = if n == 2 {
            "SELECT t0.a FROM t t0, t t1 WHERE t0.a = t1.b"
        } else {
            "SELECT t0.a FROM t t0"
        };
        workload.push(catalog.parse_query(sql, q_id, 1).map_err(errstr)?);
    }
    let qt = orr::qci(&workload);
    let got: Vec<u8> = ids.iter().map(|id| qt.get(*id).unwrap()).collect();
    if got == expected {
        Ok(format!("pattern {:?} reproduced", expected))
    } else {
        Err(format!("expected {:?}, got {:?}", expected, got))
    }
}

// --- criterion 4: formula arithmetic ----------------------------------------

fn c4_formula_arithmetic() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "1\n").map_err(errstr)?;
    let mut catalog = Catalog::new();
    catalog
        .register_table(Schema::new("t").attr("a", ValueType::Int64, 8.0), &csv)
        .map_err(errstr)?;
    let query_with = |n: usize| -> Result<WorkloadQuery, String> {
        let from: Vec<String> = (0..n).map(|i| format!("t x{i}")).collect();
        catalog
            .parse_query(&format!("SELECT x0.a FROM {}", from.join(", ")), 1, 1)
            .map_err(errstr)
    };

    let machine = MachineSpec { total_ram_bytes: 16384 * MB, cpu_cores: 4 };
    let snap = |cpu: f64, ram: f64| ResourceSnapshot {
        cpu_free_pct: cpu,
        ram_free_frac: ram,
        io_busy_pct: 0.0,
        timestamp_ms: 0,
    };

    // Five instances: four joins.
    let d = wm_query(&snap(100.0, 0.5), &query_with(5)?, &machine);
    if d.granted_bytes != 512 * MB || d.capped || d.source != GrantSource::Formula {
        return Err(format!("reference case granted {} (capped {})", d.granted_bytes, d.capped));
    }

    // No joins: the formula is zero and the floor binds.
    let d0 = wm_query(&snap(100.0, 0.5), &query_with(1)?, &machine);
    if d0.granted_bytes != WORK_MEM_FLOOR_BYTES {
        return Err(format!("floor case granted {}", d0.granted_bytes));
    }

    // Sixteen joins at full free RAM: the 90% cap binds exactly.
    let d16 = wm_query(&snap(25.0, 1.0), &query_with(17)?, &machine);
    let cap = (0.9 * 1.0 * (machine.total_ram_bytes as f64)) as u64;
    if d16.granted_bytes != cap || !d16.capped {
        return Err(format!("cap case granted {} (expected {cap})", d16.granted_bytes));
    }
    Ok("512MB reference, 4MiB floor, and 90% cap all exact".into())
}

// --- criterion 5: repeat-run estimation -------------------------------------

fn c5_repeat_estimation() -> Check {
    let gb: u64 = 1 << 30;
    let machine = MachineSpec { total_ram_bytes: 64 * gb, cpu_cores: 4 };
    let snap = ResourceSnapshot {
        cpu_free_pct: 100.0,
        ram_free_frac: 0.9,
        io_busy_pct: 0.0,
        timestamp_ms: 0,
    };

    // Arithmetic: 1.8GB grant + 8.8GB spill at unchanged rows -> 10.6GB.
    let prev_grant = 18 * gb / 10;
    let prev_spill = 88 * gb / 10;
    let record = QueryRunRecord {
        q_id: 7,
        qet_seconds: 1.0,
        work_mem_granted: prev_grant,
        spill_bytes: prev_spill,
        rows_out: 10,
        route: BTreeMap::new(),
        input_row_count: 50_000,
    };
    let entry = HistoryEntry {
        decision: rawhf::muar::WorkMemDecision {
            q_id: 7,
            formula_bytes: prev_grant as f64,
            granted_bytes: prev_grant,
            capped: false,
            source: GrantSource::Formula,
        },
        record,
        catalog_rows: 50_000,
    };
    let d = wm_repeat(&entry, 50_000, &snap, &machine);
    if d.granted_bytes != prev_grant + prev_spill || d.granted_bytes != 106 * gb / 10 {
        return Err(format!("expected {} bytes, got {}", 106 * gb / 10, d.granted_bytes));
    }

    // Live two-run benchmark: the floor grant spills, the repeat grant does
    // not, and outputs match.
    let dir = tempfile::tempdir().map_err(errstr)?;
    let rows = 200_000usize;
    let mut a = String::new();
    let mut b = String::new();
    for i in 0..rows {
        a.push_str(&format!("{}\n", i));
        b.push_str(&format!("{},{}\n", i, i % 97));
    }
    std::fs::write(dir.path().join("big_a.csv"), a).map_err(errstr)?;
    std::fs::write(dir.path().join("big_b.csv"), b).map_err(errstr)?;
    let mut catalog = Catalog::new();
    catalog
        .register_table(
            Schema::new("big_a").attr("k", ValueType::Int64, 8.0),
            &dir.path().join("big_a.csv"),
        )
        .map_err(errstr)?;
    catalog
        .register_table(
            Schema::new("big_b").attr("k", ValueType::Int64, 8.0).attr("v", ValueType::Int64, 8.0),
            &dir.path().join("big_b.csv"),
        )
        .map_err(errstr)?;
    let insitu = InsituEngine::new(256 * MB, MalformedPolicy::Fail);
    let store = ColStore::open(&dir.path().join("db")).map_err(errstr)?;
    let executor =
        Executor { catalog: &catalog, insitu: &insitu, store: &store, tmp_dir: dir.path().join("tmp") };
    let q = catalog
        .parse_query("SELECT a.k, b.v FROM big_a a, big_b b WHERE a.k = b.k", 1, 1)
        .map_err(errstr)?;

    // Scarce RAM drives the formula below the floor.
    let poor = ResourceSnapshot {
        cpu_free_pct: 100.0,
        ram_free_frac: 0.0001,
        io_busy_pct: 0.0,
        timestamp_ms: 0,
    };
    let d1 = wm_query(&poor, &q, &machine);
    if d1.granted_bytes != WORK_MEM_FLOOR_BYTES {
        return Err(format!("first run expected the floor, got {}", d1.granted_bytes));
    }
    let (rows1, r1) =
        executor.execute(&q, WorkMemGrant { bytes: d1.granted_bytes }).map_err(errstr)?;
    if r1.spill_bytes == 0 {
        return Err("first run did not spill".into());
    }

    let catalog_rows = 2 * rows as u64;
    let entry = HistoryEntry { decision: d1, record: r1.clone(), catalog_rows };
    let d2 = wm_repeat(&entry, r1.input_row_count, &snap, &machine);
    if d2.granted_bytes != d1.granted_bytes + r1.spill_bytes {
        return Err(format!("repeat grant {} != grant+spill", d2.granted_bytes));
    }
    let (rows2, r2) =
        executor.execute(&q, WorkMemGrant { bytes: d2.granted_bytes }).map_err(errstr)?;
    if r2.spill_bytes != 0 {
        return Err(format!("second run still spilled {} bytes", r2.spill_bytes));
    }
    if result_checksum(&rows1) != result_checksum(&rows2) {
        return Err("outputs differ between runs".into());
    }
    Ok(format!(
        "10.6GB arithmetic exact; live rerun grant {} avoided {} spilled bytes",
        d2.granted_bytes, r1.spill_bytes
    ))
}

// --- criterion 6: spill behavior --------------------------------------------

fn c6_spill_behavior() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let n = 2_000_000usize;
    let make = |mul: i64| -> Vec<Row> {
        (0..n)
            .map(|i| {
                vec![
                    Value::Int(i as i64),
                    Value::Int((i as i64 * mul) % 1000),
                    Value::Text(format!("payload-{i:016}-{i:08}")),
                ]
            })
            .collect()
    };
    let left = make(7);
    let right = make(13);

    let mut runs: BTreeMap<u64, (Vec<f64>, u64, String)> = BTreeMap::new();
    for (g, grant) in [(8 * MB, "small"), (256 * MB, "large")] {
        let mut times = Vec::new();
        let mut spill = 0;
        let mut sum = String::new();
        for run in 0..3 {
            let spill_dir = dir.path().join(format!("{grant}{run}"));
            // Clone outside the timed region: input duplication is test
            // bookkeeping, not part of either join path.
            let (l, r) = (left.clone(), right.clone());
            let started = Instant::now();
            let out = hash_join(l, r, &[(0, 0)], WorkMemGrant { bytes: g }, &spill_dir)
                .map_err(errstr)?;
            times.push(started.elapsed().as_secs_f64());
            spill = out.spill_bytes;
            sum = result_checksum(&out.rows);
        }
        runs.insert(g, (times, spill, sum));
    }
    let (small_times, small_spill, small_sum) = &runs[&(8 * MB)];
    let (large_times, large_spill, large_sum) = &runs[&(256 * MB)];
    if *small_spill == 0 {
        return Err("8MB grant did not spill".into());
    }
    if *large_spill != 0 {
        return Err(format!("128MB grant spilled {} bytes", large_spill));
    }
    if small_sum != large_sum {
        return Err("outputs differ between grants".into());
    }
    let (ms, ml) = (median(small_times), median(large_times));
    if ml >= ms {
        return Err(format!("large-grant median {ml:.2}s not below small-grant {ms:.2}s"));
    }
    Ok(format!(
        "spilled {}MB at 8MB grant; medians {ms:.2}s (spill) vs {ml:.2}s (in-memory)",
        small_spill / MB
    ))
}

// --- criteria 7 and 11: broad dataset ---------------------------------------

struct BroadResults {
    dbms_wet: f64,
    monitored_wets: Vec<f64>,
    unmonitored_wets: Vec<f64>,
    _dir: tempfile::TempDir,
}

fn broad_result(
    cache: &mut Option<Result<BroadResults, String>>,
    judge: impl Fn(&BroadResults) -> Check,
) -> Check {
    if cache.is_none() {
        *cache = Some(broad_experiments());
    }
    match cache.as_ref().unwrap() {
        Ok(b) => judge(b),
        Err(e) => Err(e.clone()),
    }
}

fn run_with(cfg: &RunConfig, catalog: &Catalog, workload: &[WorkloadQuery]) -> Result<driver::RunOutcome, String> {
    driver::run_workload(cfg, catalog, workload).map_err(errstr)
}

fn broad_experiments() -> Result<BroadResults, String> {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let spec = BroadSpec::default();
    let out = gen_broad(&dir.path().join("gen"), &spec).map_err(errstr)?;
    let schema_text = std::fs::read_to_string(&out.schema_path).map_err(errstr)?;
    let mut catalog = Catalog::new();
    for schema in parse_schema_file(&schema_text).map_err(errstr)? {
        catalog.register_table(schema, &out.csv_path).map_err(errstr)?;
    }
    let workload_text = std::fs::read_to_string(&out.workload_path).map_err(errstr)?;
    let workload = catalog.parse_workload(&workload_text).map_err(errstr)?;

    let base = RunConfig {
        data_dir: dir.path().join("data"),
        min_rr: live_min_rr(),
        monitor_interval_s: 1.0,
        ..RunConfig::default()
    };

    let dbms_cfg = RunConfig { strategy: Strategy::DbmsFull, monitor_enabled: false, ..base.clone() };
    let first_dbms = run_with(&dbms_cfg, &catalog, &workload)?;
    if first_dbms.report.fal != 1.0 {
        return Err("full-load run did not load everything".into());
    }

    let monitored_cfg = RunConfig { strategy: Strategy::Rawhf, monitor_enabled: true, ..base.clone() };
    let unmonitored_cfg = RunConfig { strategy: Strategy::Rawhf, monitor_enabled: false, ..base };

    // Warm both arms twice: the box takes a few runs to reach a steady
    // page-cache and allocator state, and the first hybrid run also checks
    // result parity against the full-load strategy.
    let warm = run_with(&unmonitored_cfg, &catalog, &workload)?;
    if warm.checksums != first_dbms.checksums {
        return Err("hybrid results diverge from full-load results".into());
    }
    run_with(&monitored_cfg, &catalog, &workload)?;
    run_with(&unmonitored_cfg, &catalog, &workload)?;
    run_with(&monitored_cfg, &catalog, &workload)?;

    // Record the hybrid arms as back-to-back pairs in alternating order, so
    // slow drift cannot favor one arm and nothing heavier than the runs' own
    // column loads lands between timed measurements.
    let mut monitored = Vec::new();
    let mut unmonitored = Vec::new();
    for i in 0..3 {
        let off_first = i % 2 == 0;
        let (first, second) =
            if off_first { (&unmonitored_cfg, &monitored_cfg) } else { (&monitored_cfg, &unmonitored_cfg) };
        settle();
        let x = run_with(first, &catalog, &workload)?.report.wet_seconds;
        settle();
        let y = run_with(second, &catalog, &workload)?.report.wet_seconds;
        let (off, on) = if off_first { (x, y) } else { (y, x) };
        unmonitored.push(off);
        monitored.push(on);
    }

    // Full-load medians come last: each of these writes every column back to
    // the store, and that writeback must not land inside a hybrid pair.
    let mut dbms = Vec::new();
    for _ in 0..3 {
        settle();
        dbms.push(run_with(&dbms_cfg, &catalog, &workload)?.report.wet_seconds);
    }

    Ok(BroadResults {
        dbms_wet: median(&dbms),
        monitored_wets: monitored,
        unmonitored_wets: unmonitored,
        _dir: dir,
    })
}

/// Flushes dirty pages and settles the box so one run's writeback does not
/// land in the next run's timing window.
fn settle() {
    let _ = std::process::Command::new("sync").status();
    std::thread::sleep(std::time::Duration::from_millis(300));
}

// --- criterion 8: narrow dataset --------------------------------------------

fn c8_narrow_wet() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let spec = NarrowSpec { rows: 300_000, ..NarrowSpec::default() };
    let out = gen_narrow(&dir.path().join("gen"), &spec).map_err(errstr)?;
    let schema_text = std::fs::read_to_string(&out.schema_path).map_err(errstr)?;
    let mut catalog = Catalog::new();
    for schema in parse_schema_file(&schema_text).map_err(errstr)? {
        catalog.register_table(schema, &out.csv_path).map_err(errstr)?;
    }
    let workload_text = std::fs::read_to_string(&out.workload_path).map_err(errstr)?;
    let workload = catalog.parse_workload(&workload_text).map_err(errstr)?;
    let joins = workload.iter().filter(|q| q.table_instances.len() >= 3).count();
    if joins < 8 {
        return Err(format!("workload has only {joins} multi-join queries"));
    }

    let base = RunConfig {
        data_dir: dir.path().join("data"),
        min_rr: live_min_rr(),
        monitor_enabled: false,
        ..RunConfig::default()
    };
    let serial_cfg = RunConfig { strategy: Strategy::Orr, ..base.clone() };
    let sized_cfg = RunConfig { strategy: Strategy::Rawhf, ..base };

    // Warm caches, then interleave measured runs.
    let warm = run_with(&serial_cfg, &catalog, &workload)?;
    let mut serial = Vec::new();
    let mut sized = Vec::new();
    for _ in 0..3 {
        let s = run_with(&serial_cfg, &catalog, &workload)?;
        let r = run_with(&sized_cfg, &catalog, &workload)?;
        if s.checksums != warm.checksums || r.checksums != warm.checksums {
            return Err("results diverge between strategies".into());
        }
        // The serial arm must actually be paying for spills.
        if s.report.queries.iter().all(|q| q.record.spill_bytes == 0) {
            return Err("serial default-memory runs never spilled".into());
        }
        if r.report.queries.iter().any(|q| q.record.spill_bytes > 0) {
            return Err("sized-grant runs spilled".into());
        }
        serial.push(s.report.wet_seconds);
        sized.push(r.report.wet_seconds);
    }
    let (mseq, mpar) = (median(&serial), median(&sized));
    let ratio = mpar / mseq;
    if ratio <= 0.6 {
        Ok(format!("sized {mpar:.2}s vs default-memory {mseq:.2}s (ratio {ratio:.3})"))
    } else {
        let cores = MachineSpec::detect().map(|m| m.cpu_cores).unwrap_or(0);
        Err(format!(
            "ratio {ratio:.3} > 0.6 (sized {mpar:.2}s, default {mseq:.2}s; host has {cores} \
             core(s), dispatch ceiling {cores}, so cross-query parallelism contributes \
             nothing below 2 cores and only spill avoidance remains)"
        ))
    }
}

// --- criterion 9: access and load fractions ---------------------------------

fn c9_fractions() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    // 509 attributes across two tables.
    let wide_cols = 500usize;
    let mut schema = Schema::new("wide");
    for i in 0..wide_cols {
        schema = schema.attr(&format!("b{i:03}"), ValueType::Int64, 4.0);
    }
    let wide_csv = dir.path().join("wide.csv");
    std::fs::write(&wide_csv, format!("{}\n", vec!["0"; wide_cols].join(","))).map_err(errstr)?;
    let mut catalog = Catalog::new();
    catalog.register_table(schema, &wide_csv).map_err(errstr)?;
    let mut side = Schema::new("side");
    for i in 0..9 {
        side = side.attr(&format!("c{i}"), ValueType::Int64, 4.0);
    }
    let side_csv = dir.path().join("side.csv");
    std::fs::write(&side_csv, format!("{}\n", vec!["0"; 9].join(","))).map_err(errstr)?;
    catalog.register_table(side, &side_csv).map_err(errstr)?;

    // 54 distinct accessed attributes: 45 + (5 + 4).
    let mut sel1 = String::new();
    for i in 0..45 {
        if i > 0 {
            sel1.push_str(", ");
        }
        write!(sel1, "t.b{i:03}").unwrap();
    }
    let q1 = catalog.parse_query(&format!("SELECT {sel1} FROM wide t"), 1, 1).map_err(errstr)?;
    let mut sel2 = String::new();
    for i in 45..50 {
        write!(sel2, "t.b{i:03}, ").unwrap();
    }
    sel2.push_str("s.c0, s.c1, s.c2, s.c3");
    let q2 = catalog
        .parse_query(
            &format!("SELECT {sel2} FROM wide t, side s WHERE t.b045 = s.c0"),
            2,
            1,
        )
        .map_err(errstr)?;
    let workload = vec![q1, q2];

    let faa = compute_faa(&catalog, &workload).map_err(errstr)?;

    // 34 loaded attributes against the same 509-attribute universe.
    let covered: Vec<(String, String)> =
        (0..34).map(|i| ("wide".to_string(), format!("b{i:03}"))).collect();
    let mut cq_db: BTreeSet<(String, String)> = covered.iter().cloned().collect();
    cq_db.insert(("side".to_string(), "c0".to_string()));
    let remaining: BTreeSet<(String, String)> =
        cq_db.iter().filter(|a| !covered.contains(a)).cloned().collect();
    let plan = PartitionPlan {
        sq_raw: BTreeSet::new(),
        cq_db,
        cap: BTreeSet::new(),
        covered_attrs: covered,
        covered_queries: Vec::new(),
        partially_covered: Vec::new(),
        remaining_attrs: remaining,
        budget_bytes: UNLIMITED_BUDGET,
        bytes_used: 0,
    };
    let fal = compute_fal(&catalog, &plan).map_err(errstr)?;

    let faa3 = (faa * 1000.0).round() / 1000.0;
    let fal3 = (fal * 1000.0).round() / 1000.0;
    if faa3 != 0.106 {
        return Err(format!("faa {faa} rounds to {faa3}, expected 0.106"));
    }
    if fal3 != 0.067 {
        return Err(format!("fal {fal} rounds to {fal3}, expected 0.067"));
    }
    Ok(format!("faa {faa:.4} -> 0.106, fal {fal:.4} -> 0.067"))
}

// --- criterion 10: scheduler gating ------------------------------------------

fn c10_gating() -> Check {
    let dir = tempfile::tempdir().map_err(errstr)?;
    let csv = dir.path().join("t.csv");
    let mut text = String::new();
    for i in 0..100 {
        text.push_str(&format!("{i}\n"));
    }
    std::fs::write(&csv, text).map_err(errstr)?;
    let mut catalog = Catalog::new();
    catalog
        .register_table(Schema::new("t").attr("a", ValueType::Int64, 8.0), &csv)
        .map_err(errstr)?;
    let insitu = InsituEngine::new(64 * MB, MalformedPolicy::Fail);
    let store = ColStore::open(&dir.path().join("db")).map_err(errstr)?;
    let executor =
        Executor { catalog: &catalog, insitu: &insitu, store: &store, tmp_dir: dir.path().join("tmp") };
    let q = catalog.parse_query("SELECT t0.a FROM t t0", 1, 1).map_err(errstr)?;
    let machine = MachineSpec { total_ram_bytes: 16 << 30, cpu_cores: 4 };

    // Denied for 0.5s, then granted.
    let script = SyntheticScript::new(vec![
        (0, 0.0, 0.01, 100.0),
        (500, 100.0, 0.9, 0.0),
    ])
    .map_err(errstr)?;
    let monitor = Monitor::new(0.1, &dir.path().join("m1.csv"), MonitorSource::Synthetic(script))
        .map_err(errstr)?;
    monitor.start().map_err(errstr)?;
    let mut scheduler = Scheduler::new(&executor, &monitor, machine);
    let outcome = scheduler.schedule_workload(std::slice::from_ref(&q), 10.0).map_err(errstr)?;
    monitor.stop().map_err(errstr)?;
    let wait = outcome.decisions[0].wait_ms;
    if !(500..=700).contains(&wait) {
        return Err(format!("first dispatch waited {wait}ms, outside [500,700]"));
    }

    // Never sufficient: the per-query timeout fires.
    let script = SyntheticScript::new(vec![(0, 0.0, 0.01, 100.0)]).map_err(errstr)?;
    let monitor = Monitor::new(0.1, &dir.path().join("m2.csv"), MonitorSource::Synthetic(script))
        .map_err(errstr)?;
    monitor.start().map_err(errstr)?;
    let mut scheduler = Scheduler::new(&executor, &monitor, machine);
    let err = match scheduler.schedule_workload(std::slice::from_ref(&q), 1.0) {
        Ok(_) => return Err("starved schedule unexpectedly succeeded".into()),
        Err(e) => e,
    };
    monitor.stop().map_err(errstr)?;
    if err.exit_code() != 5 {
        return Err(format!("expected timeout exit code 5, got {}", err.exit_code()));
    }
    Ok(format!("first dispatch at {wait}ms; starvation timed out with exit code 5"))
}
