//! Command-line front end: register data, plan partitions, load columns,
//! run workloads under a chosen strategy, generate datasets, and print
//! reports. The binary is a thin wrapper over [`main_from_args`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::catalog::{parse_schema_file, Catalog};
use crate::colstore::ColStore;
use crate::config::RunConfig;
use crate::csvio::CsvOptions;
use crate::driver;
use crate::error::{Error, Result};
use crate::gen::{self, BroadSpec, NarrowSpec};
use crate::metrics::WorkloadReport;
use crate::orr::{self, PartitionPlan};

#[derive(Debug, Parser)]
#[command(name = "rawhf", version, about = "Hybrid raw-data query framework")]
pub struct Cli {
    /// Config file; flags below override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// dbms-full, insitu, orr, or rawhf.
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// Comma-separated storage budget tranches in bytes; `unlimited` allowed.
    #[arg(long, global = true)]
    pub budget: Option<String>,
    /// Monitor sampling interval in seconds.
    #[arg(long, global = true)]
    pub monitor_interval: Option<f64>,
    /// Scripted availability source (offset_ms,cpu,ram,io lines).
    #[arg(long, global = true)]
    pub synthetic_monitor: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register tables: a schema file plus one CSV per table it defines.
    Register {
        #[arg(long)]
        schema: PathBuf,
        /// Raw CSV path; repeat for multi-table schema files, in order.
        #[arg(long = "csv", required = true)]
        csv: Vec<PathBuf>,
    },
    /// Plan partitions for a workload under the configured budgets.
    Plan {
        #[arg(long)]
        workload: PathBuf,
        /// Where to write the plan file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bulk-load columns into the store, from a plan file or an explicit list.
    Load {
        /// Plan file whose covered attributes should be loaded.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        table: Option<String>,
        /// Comma-separated attribute names; requires --table.
        #[arg(long)]
        attrs: Option<String>,
    },
    /// Run a workload under the configured strategy and write a report.
    Run {
        #[arg(long)]
        workload: PathBuf,
        /// Report CSV path; defaults to <data_dir>/report-<strategy>.csv.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic dataset and workload.
    Gen {
        #[command(subcommand)]
        shape: GenShape,
    },
    /// Print a saved report as a text table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenShape {
    /// Wide table: many attributes, few of them shared by complex queries.
    Broad {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        rows: Option<u64>,
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        /// Fraction of the schema granted to complex-query attributes.
        #[arg(long)]
        cq_share: Option<f64>,
    },
    /// Narrow (s,p,o) table with chain-join workload.
    Narrow {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        rows: Option<u64>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        joins: Option<usize>,
        #[arg(long)]
        predicates: Option<u64>,
    },
}

/// Parses argv, runs the command, and maps errors to exit codes. The binary
/// calls this.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints help/version on stdout with success.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Merges the config file (if any) with flag overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = dir.clone();
    }
    if let Some(s) = &cli.strategy {
        cfg.apply("run", "strategy", s)?;
    }
    if let Some(b) = &cli.budget {
        cfg.apply("run", "budget", b)?;
    }
    if let Some(i) = cli.monitor_interval {
        cfg.monitor_interval_s = i;
    }
    if let Some(p) = &cli.synthetic_monitor {
        cfg.synthetic_monitor = Some(p.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn catalog_path(cfg: &RunConfig) -> PathBuf {
    cfg.data_dir.join("catalog.txt")
}

fn load_catalog(cfg: &RunConfig) -> Result<Catalog> {
    Catalog::load(&catalog_path(cfg), CsvOptions { has_header: cfg.csv_has_header })
}

fn read_workload(catalog: &Catalog, path: &Path) -> Result<Vec<crate::catalog::WorkloadQuery>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    catalog.parse_workload(&text)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Register { schema, csv } => cmd_register(&cfg, schema, csv),
        Command::Plan { workload, out } => cmd_plan(&cfg, workload, out),
        Command::Load { plan, table, attrs } => {
            cmd_load(&cfg, plan.as_deref(), table.as_deref(), attrs.as_deref())
        }
        Command::Run { workload, report } => cmd_run(&cfg, workload, report.as_deref()),
        Command::Gen { shape } => cmd_gen(&cfg, shape),
        Command::Report { input } => cmd_report(input),
    }
}

fn cmd_register(cfg: &RunConfig, schema_file: &Path, csv_files: &[PathBuf]) -> Result<()> {
    std::fs::create_dir_all(&cfg.data_dir).map_err(|e| Error::io(&cfg.data_dir, e))?;
    let text = std::fs::read_to_string(schema_file).map_err(|e| Error::io(schema_file, e))?;
    let schemas = parse_schema_file(&text)?;
    if schemas.len() != csv_files.len() {
        return Err(Error::Config(format!(
            "schema file defines {} table(s) but {} --csv path(s) given",
            schemas.len(),
            csv_files.len()
        )));
    }
    let path = catalog_path(cfg);
    let mut catalog = if path.exists() {
        load_catalog(cfg)?
    } else {
        Catalog::with_csv(CsvOptions { has_header: cfg.csv_has_header })
    };
    for (schema, csv) in schemas.into_iter().zip(csv_files) {
        let name = schema.table_name.clone();
        let id = catalog.register_table(schema, csv)?;
        let entry = catalog.table(id);
        println!("registered {name}: {} rows from {}", entry.row_count, csv.display());
    }
    catalog.save(&path)?;
    Ok(())
}

fn cmd_plan(cfg: &RunConfig, workload_file: &Path, out: &Path) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let workload = read_workload(&catalog, workload_file)?;
    let plan = orr::plan(&catalog, &workload, &cfg.budgets)?;
    plan.save(out)?;
    println!(
        "plan: {} attribute(s) covered, {} byte(s) used, {} of {} quer(ies) fully covered, {} partially",
        plan.covered_attrs.len(),
        plan.bytes_used,
        plan.covered_queries.len(),
        workload.len(),
        plan.partially_covered.len()
    );
    Ok(())
}

fn cmd_load(
    cfg: &RunConfig,
    plan: Option<&Path>,
    table: Option<&str>,
    attrs: Option<&str>,
) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let store_dir = cfg.data_dir.join(format!("db-{}", cfg.strategy.name()));
    let store = ColStore::open(&store_dir)?;
    let mut total_dlt = 0.0;
    let mut total_bytes = 0u64;
    match (plan, table) {
        (Some(plan_path), None) => {
            let plan = PartitionPlan::load(plan_path)?;
            for (table, attrs) in plan.load_sets() {
                let (d, b) = driver::batched_load(&catalog, &store, &table, &attrs)?;
                total_dlt += d;
                total_bytes += b;
                println!("loaded {table}: {} attribute(s)", attrs.len());
            }
        }
        (None, Some(table)) => {
            let names: BTreeSet<String> = attrs
                .ok_or_else(|| Error::Config("--table requires --attrs".into()))?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if names.is_empty() {
                return Err(Error::Config("empty --attrs list".into()));
            }
            let (d, b) = driver::batched_load(&catalog, &store, table, &names)?;
            total_dlt += d;
            total_bytes += b;
            println!("loaded {table}: {} attribute(s)", names.len());
        }
        _ => {
            return Err(Error::Config(
                "load needs exactly one of --plan or --table (with --attrs)".into(),
            ))
        }
    }
    println!("load: {total_bytes} byte(s) written in {total_dlt:.3}s");
    Ok(())
}

fn cmd_run(cfg: &RunConfig, workload_file: &Path, report_path: Option<&Path>) -> Result<()> {
    let catalog = load_catalog(cfg)?;
    let workload = read_workload(&catalog, workload_file)?;
    let outcome = driver::run_workload(cfg, &catalog, &workload)?;
    let default_path = cfg.data_dir.join(format!("report-{}.csv", cfg.strategy.name()));
    let path = report_path.unwrap_or(&default_path);
    outcome.report.save_csv(path)?;
    print!("{}", outcome.report.to_text_table());
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_gen(cfg: &RunConfig, shape: &GenShape) -> Result<()> {
    let out = match shape {
        GenShape::Broad { out_dir, rows, columns, queries, cq_share } => {
            let mut spec = BroadSpec { seed: cfg.seed, ..BroadSpec::default() };
            if let Some(r) = rows {
                spec.rows = *r;
            }
            if let Some(c) = columns {
                spec.columns = *c;
            }
            if let Some(q) = queries {
                spec.queries = *q;
            }
            if let Some(s) = cq_share {
                spec.cq_attr_share = *s;
            }
            gen::gen_broad(out_dir, &spec)?
        }
        GenShape::Narrow { out_dir, rows, queries, joins, predicates } => {
            let mut spec = NarrowSpec { seed: cfg.seed, ..NarrowSpec::default() };
            if let Some(r) = rows {
                spec.rows = *r;
            }
            if let Some(q) = queries {
                spec.queries = *q;
            }
            if let Some(j) = joins {
                spec.joins = *j;
            }
            if let Some(p) = predicates {
                spec.predicates = *p;
            }
            gen::gen_narrow(out_dir, &spec)?
        }
    };
    println!(
        "generated {}: {} rows x {} columns\n  schema:   {}\n  data:     {}\n  workload: {}",
        out.table,
        out.rows,
        out.columns,
        out.schema_path.display(),
        out.csv_path.display(),
        out.workload_path.display()
    );
    Ok(())
}

fn cmd_report(input: &Path) -> Result<()> {
    let report = WorkloadReport::load_csv(input)?;
    print!("{}", report.to_text_table());
    Ok(())
}
