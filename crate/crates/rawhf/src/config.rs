//! Run configuration: a flat `key = value` file with bracketed sections,
//! merged under command-line overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::muar::MinimumResources;
use crate::orr::UNLIMITED_BUDGET;
use crate::rmon::MachineSpec;

/// Workload execution strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Load every attribute, then run queries serially with default memory.
    DbmsFull,
    /// No loading; every query runs over the raw files.
    Insitu,
    /// Plan partitions, load the covered attributes, run serially.
    Orr,
    /// Plan, load, and schedule with availability-gated sized grants.
    Rawhf,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::DbmsFull => "dbms-full",
            Strategy::Insitu => "insitu",
            Strategy::Orr => "orr",
            Strategy::Rawhf => "rawhf",
        }
    }

    pub const ALL: [Strategy; 4] =
        [Strategy::DbmsFull, Strategy::Insitu, Strategy::Orr, Strategy::Rawhf];
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "dbms-full" => Ok(Strategy::DbmsFull),
            "insitu" => Ok(Strategy::Insitu),
            "orr" => Ok(Strategy::Orr),
            "rawhf" => Ok(Strategy::Rawhf),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected dbms-full, insitu, orr, or rawhf)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a workload run needs beyond the workload itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    /// Spill and scratch space; defaults to `<data_dir>/tmp`.
    pub tmp_dir: Option<PathBuf>,
    pub strategy: Strategy,
    /// Storage budget tranches for planning.
    pub budgets: Vec<u64>,
    /// Machine facts override; detected when absent.
    pub machine: Option<MachineSpec>,
    pub monitor_interval_s: f64,
    /// When false, runs use a constant abundant availability source and no
    /// sampler thread.
    pub monitor_enabled: bool,
    pub min_rr: MinimumResources,
    /// Scripted availability source; overrides the OS sampler.
    pub synthetic_monitor: Option<PathBuf>,
    pub csv_has_header: bool,
    pub seed: u64,
    /// Per-query gate-wait bound for scheduled runs.
    pub timeout_s: f64,
    /// Keep full result rows in memory (tests and small runs only).
    pub keep_results: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            data_dir: PathBuf::from("rawhf-data"),
            tmp_dir: None,
            strategy: Strategy::Rawhf,
            budgets: vec![UNLIMITED_BUDGET],
            machine: None,
            monitor_interval_s: 1.0,
            monitor_enabled: true,
            min_rr: MinimumResources::default(),
            synthetic_monitor: None,
            csv_has_header: false,
            seed: 42,
            timeout_s: 600.0,
            keep_results: false,
        }
    }
}

impl RunConfig {
    pub fn tmp_dir(&self) -> PathBuf {
        self.tmp_dir.clone().unwrap_or_else(|| self.data_dir.join("tmp"))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    /// Parses a config file into defaults-plus-overrides. Keys outside any
    /// section belong to `[run]`.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = "run".to_string();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Config(format!("config line {}: {msg}", lineno + 1));
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                match section.as_str() {
                    "run" | "machine" | "min_rr" | "csv" => {}
                    other => return Err(err(format!("unknown section [{other}]"))),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            cfg.apply(&section, key.trim(), value.trim())
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Applies one setting; the same entry point serves file entries and
    /// flag overrides.
    pub fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str, e: String| Error::Config(format!("bad {what} '{value}': {e}"));
        let f64v = |what: &str| -> Result<f64> {
            value.parse().map_err(|e: std::num::ParseFloatError| bad(what, e.to_string()))
        };
        let u64v = |what: &str| -> Result<u64> {
            value.parse().map_err(|e: std::num::ParseIntError| bad(what, e.to_string()))
        };
        let boolv = |what: &str| -> Result<bool> {
            match value {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                _ => Err(bad(what, "expected true/false".into())),
            }
        };
        match (section, key) {
            ("run", "data_dir") => self.data_dir = PathBuf::from(value),
            ("run", "tmp_dir") => self.tmp_dir = Some(PathBuf::from(value)),
            ("run", "strategy") => self.strategy = value.parse()?,
            ("run", "budget") => self.budgets = parse_budget_list(value)?,
            ("run", "monitor_interval") => self.monitor_interval_s = f64v("interval")?,
            ("run", "monitor") => self.monitor_enabled = boolv("monitor flag")?,
            ("run", "synthetic_monitor") => {
                self.synthetic_monitor = Some(PathBuf::from(value))
            }
            ("run", "seed") => self.seed = u64v("seed")?,
            ("run", "timeout") => self.timeout_s = f64v("timeout")?,
            ("run", "keep_results") => self.keep_results = boolv("keep_results")?,
            ("machine", "total_ram_bytes") => {
                let ram = u64v("total_ram_bytes")?;
                let cores = self.machine.map(|m| m.cpu_cores).unwrap_or(1);
                self.machine = Some(MachineSpec { total_ram_bytes: ram, cpu_cores: cores });
            }
            ("machine", "cpu_cores") => {
                let cores = u64v("cpu_cores")? as u32;
                let ram = self.machine.map(|m| m.total_ram_bytes).unwrap_or(0);
                self.machine = Some(MachineSpec { total_ram_bytes: ram, cpu_cores: cores });
            }
            ("min_rr", "cpu_free_pct_min") => self.min_rr.cpu_free_pct_min = f64v("threshold")?,
            ("min_rr", "ram_free_frac_min") => {
                self.min_rr.ram_free_frac_min = f64v("threshold")?
            }
            ("min_rr", "io_busy_pct_max") => self.min_rr.io_busy_pct_max = f64v("threshold")?,
            ("csv", "has_header") => self.csv_has_header = boolv("has_header")?,
            (s, k) => {
                return Err(Error::Config(format!("unknown setting {s}.{k}")));
            }
        }
        Ok(())
    }
}

/// Budgets: comma-separated byte counts; `unlimited` is accepted.
pub fn parse_budget_list(value: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.eq_ignore_ascii_case("unlimited") {
            out.push(UNLIMITED_BUDGET);
        } else {
            out.push(
                part.parse()
                    .map_err(|e| Error::Config(format!("bad budget '{part}': {e}")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty budget list".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_sane() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.strategy, Strategy::Rawhf);
        assert_eq!(cfg.budgets, vec![UNLIMITED_BUDGET]);
        assert_eq!(cfg.tmp_dir(), PathBuf::from("rawhf-data/tmp"));
        assert!(cfg.monitor_enabled);
    }

    #[test]
    fn full_file_parses() {
        let text = "
            # comment
            strategy = orr
            data_dir = /x/data
            tmp_dir = /x/tmp
            budget = 1000, 2000, unlimited
            monitor_interval = 0.5
            monitor = off
            seed = 7
            timeout = 30
            [machine]
            total_ram_bytes = 1073741824
            cpu_cores = 2
            [min_rr]
            cpu_free_pct_min = 10
            ram_free_frac_min = 0.2
            io_busy_pct_max = 50
            [csv]
            has_header = true
        ";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.strategy, Strategy::Orr);
        assert_eq!(cfg.data_dir, PathBuf::from("/x/data"));
        assert_eq!(cfg.tmp_dir(), PathBuf::from("/x/tmp"));
        assert_eq!(cfg.budgets, vec![1000, 2000, UNLIMITED_BUDGET]);
        assert_eq!(cfg.monitor_interval_s, 0.5);
        assert!(!cfg.monitor_enabled);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.timeout_s, 30.0);
        let m = cfg.machine.unwrap();
        assert_eq!(m.total_ram_bytes, 1 << 30);
        assert_eq!(m.cpu_cores, 2);
        assert_eq!(cfg.min_rr.cpu_free_pct_min, 10.0);
        assert!(cfg.csv_has_header);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("postgres".parse::<Strategy>().is_err());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(RunConfig::parse("[what]\n").is_err());
        assert!(RunConfig::parse("nope = 1\n").is_err());
        assert!(RunConfig::parse("[machine]\nstrategy = orr\n").is_err());
        assert!(RunConfig::parse("strategy is orr\n").is_err());
        assert!(RunConfig::parse("budget = -4\n").is_err());
    }

    #[test]
    fn flag_overrides_reuse_apply() {
        let mut cfg = RunConfig::parse("strategy = insitu\n").unwrap();
        cfg.apply("run", "strategy", "rawhf").unwrap();
        cfg.apply("run", "budget", "512").unwrap();
        assert_eq!(cfg.strategy, Strategy::Rawhf);
        assert_eq!(cfg.budgets, vec![512]);
    }
}
