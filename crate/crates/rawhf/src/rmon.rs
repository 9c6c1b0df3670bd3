//! Resource monitoring: a background sampler that keeps a live availability
//! snapshot for the scheduler and appends per-task usage rows to a CSV sink.
//!
//! Two sources exist. The OS source reads the kernel's process-statistics
//! files and is what production runs use. The synthetic source replays a
//! scripted list of snapshots and makes scheduler gating deterministic in
//! tests; its reads are computed from the script and the elapsed clock, so
//! they do not depend on sampler tick alignment.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

/// Live availability across the whole machine. `cpu_free_pct` is normalized
/// so 100 means every core is idle; `ram_free_frac` is a 0..1 fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceSnapshot {
    pub cpu_free_pct: f64,
    pub ram_free_frac: f64,
    pub io_busy_pct: f64,
    pub timestamp_ms: u64,
}

/// Fixed facts about the machine the scheduler sizes grants against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineSpec {
    pub total_ram_bytes: u64,
    pub cpu_cores: u32,
}

impl MachineSpec {
    /// Reads totals from the running system.
    pub fn detect() -> Result<MachineSpec> {
        let meminfo = std::fs::read_to_string("/proc/meminfo")
            .map_err(|e| Error::io(Path::new("/proc/meminfo"), e))?;
        let total_ram_bytes = parse_meminfo_kb(&meminfo, "MemTotal:")
            .ok_or_else(|| Error::Monitor("MemTotal missing from /proc/meminfo".into()))?
            * 1024;
        let cpu_cores = std::thread::available_parallelism()
            .map_err(|e| Error::Monitor(format!("core count unavailable: {e}")))?
            .get() as u32;
        Ok(MachineSpec { total_ram_bytes, cpu_cores })
    }
}

/// One accounting step for a task. `read_bytes`/`write_bytes` are deltas to
/// add; `cpu_pct` and `rss_bytes` replace the previous gauge values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TaskDelta {
    pub cpu_pct: f64,
    pub rss_bytes: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

/// Accumulated usage for one task, as written to the sink.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TaskTotals {
    pub cpu_pct: f64,
    pub rss_bytes: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

/// Scripted availability: `(offset_ms, snapshot values)` entries; the value
/// in force at elapsed time `t` is the last entry with offset ≤ t.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScript {
    entries: Vec<(u64, f64, f64, f64)>,
}

impl SyntheticScript {
    pub fn new(mut entries: Vec<(u64, f64, f64, f64)>) -> Result<SyntheticScript> {
        if entries.is_empty() {
            return Err(Error::Config("synthetic monitor script is empty".into()));
        }
        entries.sort_by_key(|e| e.0);
        Ok(SyntheticScript { entries })
    }

    /// Parses `offset_ms,cpu_free_pct,ram_free_frac,io_busy_pct` lines.
    pub fn parse(text: &str) -> Result<SyntheticScript> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                msg: format!("monitor script line {}: {msg}", lineno + 1),
                pos: 0,
            };
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", parts.len())));
            }
            let offset: u64 =
                parts[0].parse().map_err(|e| err(format!("bad offset: {e}")))?;
            let nums: Vec<f64> = parts[1..]
                .iter()
                .map(|p| p.parse().map_err(|e| err(format!("bad number '{p}': {e}"))))
                .collect::<Result<_>>()?;
            entries.push((offset, nums[0], nums[1], nums[2]));
        }
        SyntheticScript::new(entries)
    }

    pub fn load(path: &Path) -> Result<SyntheticScript> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SyntheticScript::parse(&text)
    }

    fn at(&self, elapsed_ms: u64) -> (f64, f64, f64) {
        let mut current = &self.entries[0];
        for e in &self.entries {
            if e.0 <= elapsed_ms {
                current = e;
            } else {
                break;
            }
        }
        (current.1, current.2, current.3)
    }
}

#[derive(Debug, Clone)]
pub enum MonitorSource {
    Os,
    Synthetic(SyntheticScript),
}

#[derive(Default)]
struct TaskState {
    totals: TaskTotals,
    dirty: bool,
}

struct Shared {
    snapshot: RwLock<Option<ResourceSnapshot>>,
    tasks: Mutex<BTreeMap<String, TaskState>>,
    sink: Mutex<BufWriter<File>>,
    stop: AtomicBool,
    updates: AtomicU64,
    last_timestamp_ms: AtomicU64,
}

impl Shared {
    fn now_ms(&self) -> u64 {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or(Duration::ZERO)
            .as_millis() as u64;
        // Wall clocks may step backwards; snapshot timestamps must not.
        self.last_timestamp_ms.fetch_max(now, Ordering::Relaxed).max(now)
    }

    fn publish(&self, cpu_free_pct: f64, ram_free_frac: f64, io_busy_pct: f64) {
        let snap = ResourceSnapshot {
            cpu_free_pct: cpu_free_pct.clamp(0.0, 100.0),
            ram_free_frac: ram_free_frac.clamp(0.0, 1.0),
            io_busy_pct: io_busy_pct.clamp(0.0, 100.0),
            timestamp_ms: self.now_ms(),
        };
        *self.snapshot.write().expect("snapshot lock") = Some(snap);
        self.updates.fetch_add(1, Ordering::Relaxed);
    }

    /// Appends one row per task touched since the last flush.
    fn flush_tasks(&self) -> Result<()> {
        let mut tasks = self.tasks.lock().expect("tasks lock");
        let dirty: Vec<(String, TaskTotals)> = tasks
            .iter_mut()
            .filter(|(_, s)| s.dirty)
            .map(|(id, s)| {
                s.dirty = false;
                (id.clone(), s.totals)
            })
            .collect();
        drop(tasks);
        if dirty.is_empty() {
            return Ok(());
        }
        let ts = self.now_ms();
        let mut sink = self.sink.lock().expect("sink lock");
        for (id, t) in dirty {
            writeln!(
                sink,
                "{ts},{id},{:.2},{},{},{}",
                t.cpu_pct, t.rss_bytes, t.read_bytes, t.write_bytes
            )
            .map_err(|e| Error::Monitor(format!("sink write failed: {e}")))?;
        }
        sink.flush().map_err(|e| Error::Monitor(format!("sink flush failed: {e}")))?;
        Ok(())
    }
}

/// Handle to the sampler. Dropping it stops the background thread.
pub struct Monitor {
    shared: Arc<Shared>,
    source: MonitorSource,
    interval: Duration,
    started_at: Instant,
    thread: Mutex<Option<JoinHandle<()>>>,
    running: AtomicBool,
}

impl Monitor {
    /// Opens the sink (appending; header written when the file is empty) and
    /// validates the sampling interval. The sampler does not run until
    /// [`Monitor::start`].
    pub fn new(interval_seconds: f64, sink: &Path, source: MonitorSource) -> Result<Monitor> {
        if !(0.1..=10.0).contains(&interval_seconds) {
            return Err(Error::Config(format!(
                "monitor interval {interval_seconds}s outside 0.1..=10s"
            )));
        }
        let file = OpenOptions::new()
            .append(true)
            .create(true)
            .open(sink)
            .map_err(|e| Error::io(sink, e))?;
        let empty = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
        let mut writer = BufWriter::new(file);
        if empty {
            writeln!(writer, "timestamp_ms,task_id,cpu_pct,rss_bytes,read_bytes,write_bytes")
                .map_err(|e| Error::io(sink, e))?;
            writer.flush().map_err(|e| Error::io(sink, e))?;
        }
        Ok(Monitor {
            shared: Arc::new(Shared {
                snapshot: RwLock::new(None),
                tasks: Mutex::new(BTreeMap::new()),
                sink: Mutex::new(writer),
                stop: AtomicBool::new(false),
                updates: AtomicU64::new(0),
                last_timestamp_ms: AtomicU64::new(0),
            }),
            source,
            interval: Duration::from_secs_f64(interval_seconds),
            started_at: Instant::now(),
            thread: Mutex::new(None),
            running: AtomicBool::new(false),
        })
    }

    /// Spawns the sampler. Errors if it is already running.
    pub fn start(&self) -> Result<()> {
        if self.running.swap(true, Ordering::SeqCst) {
            return Err(Error::Monitor("monitor already running".into()));
        }
        // Publish an initial snapshot synchronously so reads never race the
        // first tick.
        let mut os_state = match &self.source {
            MonitorSource::Os => {
                let mut state = OsSampler::new()?;
                std::thread::sleep(Duration::from_millis(20));
                let (c, r, i) = state.sample()?;
                self.shared.publish(c, r, i);
                Some(state)
            }
            MonitorSource::Synthetic(script) => {
                let (c, r, i) = script.at(self.elapsed_ms());
                self.shared.publish(c, r, i);
                None
            }
        };
        let shared = Arc::clone(&self.shared);
        let source = self.source.clone();
        let interval = self.interval;
        let started_at = self.started_at;
        let handle = std::thread::Builder::new()
            .name("rmon-sampler".into())
            .spawn(move || loop {
                std::thread::sleep(interval);
                if shared.stop.load(Ordering::SeqCst) {
                    let _ = shared.flush_tasks();
                    return;
                }
                match (&source, os_state.as_mut()) {
                    (MonitorSource::Os, Some(state)) => {
                        if let Ok((c, r, i)) = state.sample() {
                            shared.publish(c, r, i);
                        }
                    }
                    (MonitorSource::Synthetic(script), _) => {
                        let elapsed = started_at.elapsed().as_millis() as u64;
                        let (c, r, i) = script.at(elapsed);
                        shared.publish(c, r, i);
                    }
                    _ => {}
                }
                let _ = shared.flush_tasks();
            })
            .map_err(|e| Error::Monitor(format!("sampler spawn failed: {e}")))?;
        *self.thread.lock().expect("thread lock") = Some(handle);
        Ok(())
    }

    fn elapsed_ms(&self) -> u64 {
        self.started_at.elapsed().as_millis() as u64
    }

    /// Latest availability. Synthetic reads are computed from the script at
    /// the current elapsed time, so they are exact regardless of tick
    /// phase; OS reads return the sampler's last published snapshot.
    pub fn current_availability(&self) -> Result<ResourceSnapshot> {
        if let MonitorSource::Synthetic(script) = &self.source {
            let (c, r, i) = script.at(self.elapsed_ms());
            return Ok(ResourceSnapshot {
                cpu_free_pct: c,
                ram_free_frac: r,
                io_busy_pct: i,
                timestamp_ms: self.shared.now_ms(),
            });
        }
        self.shared
            .snapshot
            .read()
            .expect("snapshot lock")
            .ok_or_else(|| Error::Monitor("monitor not started".into()))
    }

    /// Count of snapshot publications so far.
    pub fn updates(&self) -> u64 {
        self.shared.updates.load(Ordering::Relaxed)
    }

    pub fn register_task(&self, task_id: &str) {
        self.shared
            .tasks
            .lock()
            .expect("tasks lock")
            .entry(task_id.to_string())
            .or_default();
    }

    /// Accumulates usage for a registered task; the row reaches the sink on
    /// the next sampler flush (or on stop).
    pub fn account_task(&self, task_id: &str, delta: TaskDelta) -> Result<TaskTotals> {
        let mut tasks = self.shared.tasks.lock().expect("tasks lock");
        let state = tasks
            .get_mut(task_id)
            .ok_or_else(|| Error::Monitor(format!("unknown task '{task_id}'")))?;
        state.totals.cpu_pct = delta.cpu_pct;
        state.totals.rss_bytes = delta.rss_bytes.max(state.totals.rss_bytes);
        state.totals.read_bytes += delta.read_bytes;
        state.totals.write_bytes += delta.write_bytes;
        state.dirty = true;
        Ok(state.totals)
    }

    pub fn task_totals(&self, task_id: &str) -> Option<TaskTotals> {
        self.shared.tasks.lock().expect("tasks lock").get(task_id).map(|s| s.totals)
    }

    /// Stops the sampler and flushes pending rows. Safe to call more than
    /// once.
    pub fn stop(&self) -> Result<()> {
        self.shared.stop.store(true, Ordering::SeqCst);
        let handle = self.thread.lock().expect("thread lock").take();
        if let Some(h) = handle {
            let _ = h.join();
        }
        self.shared.flush_tasks()
    }

    #[cfg(test)]
    fn publish_for_test(&self, cpu: f64, ram: f64, io: f64) {
        self.shared.publish(cpu, ram, io);
    }
}

impl Drop for Monitor {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Starts OS-sourced monitoring at the given interval, appending task rows
/// to `sink`.
pub fn start_monitor(interval_seconds: f64, sink: &Path) -> Result<Monitor> {
    let monitor = Monitor::new(interval_seconds, sink, MonitorSource::Os)?;
    monitor.start()?;
    Ok(monitor)
}

/// Delta-based sampler over the kernel statistics files.
struct OsSampler {
    prev_cpu: (u64, u64), // (idle incl. iowait, total)
    prev_disk: BTreeMap<String, u64>,
    prev_at: Instant,
}

impl OsSampler {
    fn new() -> Result<OsSampler> {
        Ok(OsSampler {
            prev_cpu: read_cpu_counters()?,
            prev_disk: read_disk_io_ms().unwrap_or_default(),
            prev_at: Instant::now(),
        })
    }

    fn sample(&mut self) -> Result<(f64, f64, f64)> {
        let cpu = read_cpu_counters()?;
        let elapsed_ms = self.prev_at.elapsed().as_millis().max(1) as f64;
        let d_idle = cpu.0.saturating_sub(self.prev_cpu.0) as f64;
        let d_total = cpu.1.saturating_sub(self.prev_cpu.1) as f64;
        let cpu_free = if d_total > 0.0 { 100.0 * d_idle / d_total } else { 100.0 };
        self.prev_cpu = cpu;

        let ram_free = read_ram_free_frac()?;

        let disk = read_disk_io_ms().unwrap_or_default();
        let mut io_busy = 0.0f64;
        for (dev, ms) in &disk {
            if let Some(prev) = self.prev_disk.get(dev) {
                let busy = 100.0 * ms.saturating_sub(*prev) as f64 / elapsed_ms;
                io_busy = io_busy.max(busy);
            }
        }
        self.prev_disk = disk;
        self.prev_at = Instant::now();
        Ok((cpu_free, ram_free, io_busy))
    }
}

fn read_cpu_counters() -> Result<(u64, u64)> {
    let stat = std::fs::read_to_string("/proc/stat")
        .map_err(|e| Error::io(Path::new("/proc/stat"), e))?;
    let line = stat
        .lines()
        .find(|l| l.starts_with("cpu "))
        .ok_or_else(|| Error::Monitor("no cpu line in /proc/stat".into()))?;
    let fields: Vec<u64> =
        line.split_whitespace().skip(1).filter_map(|f| f.parse().ok()).collect();
    if fields.len() < 5 {
        return Err(Error::Monitor("short cpu line in /proc/stat".into()));
    }
    let idle = fields[3] + fields[4]; // idle + iowait
    let total: u64 = fields.iter().sum();
    Ok((idle, total))
}

fn read_ram_free_frac() -> Result<f64> {
    let meminfo = std::fs::read_to_string("/proc/meminfo")
        .map_err(|e| Error::io(Path::new("/proc/meminfo"), e))?;
    let total = parse_meminfo_kb(&meminfo, "MemTotal:")
        .ok_or_else(|| Error::Monitor("MemTotal missing".into()))?;
    let avail = parse_meminfo_kb(&meminfo, "MemAvailable:")
        .or_else(|| parse_meminfo_kb(&meminfo, "MemFree:"))
        .ok_or_else(|| Error::Monitor("MemAvailable missing".into()))?;
    Ok(avail as f64 / total.max(1) as f64)
}

fn parse_meminfo_kb(meminfo: &str, key: &str) -> Option<u64> {
    meminfo
        .lines()
        .find(|l| l.starts_with(key))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

/// Milliseconds each device has spent doing I/O (field 10 of diskstats).
fn read_disk_io_ms() -> Option<BTreeMap<String, u64>> {
    let stats = std::fs::read_to_string("/proc/diskstats").ok()?;
    let mut out = BTreeMap::new();
    for line in stats.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 13 {
            continue;
        }
        let name = fields[2];
        if name.starts_with("loop") || name.starts_with("ram") {
            continue;
        }
        if let Ok(ms) = fields[12].parse::<u64>() {
            out.insert(name.to_string(), ms);
        }
    }
    Some(out)
}

/// CPU seconds (user + system) consumed by this process.
pub fn process_cpu_seconds() -> f64 {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) };
    if rc != 0 {
        return 0.0;
    }
    let usage = unsafe { usage.assume_init() };
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
    tv(usage.ru_utime) + tv(usage.ru_stime)
}

/// Peak resident set size of this process.
pub fn process_peak_rss_bytes() -> u64 {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) };
    if rc != 0 {
        return 0;
    }
    let usage = unsafe { usage.assume_init() };
    (usage.ru_maxrss as u64) * 1024 // reported in kilobytes on Linux
}

/// Cumulative (read, write) bytes this process has requested from the I/O
/// layer, when the kernel exposes them.
pub fn process_io_bytes() -> Option<(u64, u64)> {
    let io = std::fs::read_to_string("/proc/self/io").ok()?;
    let field = |key: &str| -> Option<u64> {
        io.lines().find(|l| l.starts_with(key))?.split_whitespace().nth(1)?.parse().ok()
    };
    Some((field("rchar:")?, field("wchar:")?))
}
