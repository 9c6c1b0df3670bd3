//! Spill-aware grace hash join.
//!
//! If the estimated build side fits the work-memory grant, the join runs
//! fully in memory (partitioned in memory first once the build side outgrows
//! cache). Otherwise both inputs are hash-partitioned into
//! `F = ceil(build_bytes / grant)` spill files and each partition is joined
//! independently, trading memory for disk writes. Either way the output is
//! the same multiset.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::value::{Row, Value};

use super::WorkMemGrant;

/// Fixed per-row overhead added to payload bytes in build-size estimates.
pub const PER_ROW_OVERHEAD_BYTES: u64 = 16;

/// Estimated in-memory size of a build side of `rows` rows whose key plus
/// payload average `payload_width` bytes.
pub fn estimate_build_bytes(rows: u64, payload_width: u64) -> u64 {
    rows * (payload_width + PER_ROW_OVERHEAD_BYTES)
}

/// Same estimate computed from actual rows.
pub fn estimate_rows_bytes(rows: &[Row]) -> u64 {
    rows.iter()
        .map(|r| {
            PER_ROW_OVERHEAD_BYTES
                + r.iter().map(|v| v.payload_bytes() as u64).sum::<u64>()
        })
        .sum()
}

#[derive(Debug)]
pub struct JoinOutcome {
    pub rows: Vec<Row>,
    pub spill_bytes: u64,
}

fn key_bytes(row: &Row, positions: &[usize], out: &mut Vec<u8>) {
    out.clear();
    for &p in positions {
        row[p].encode_canonical(out);
    }
}

fn encode_row(row: &Row, out: &mut Vec<u8>) {
    out.extend_from_slice(&(row.len() as u32).to_le_bytes());
    for v in row {
        v.encode_canonical(out);
    }
}

fn decode_row(bytes: &[u8]) -> Result<(Row, usize)> {
    let n = u32::from_le_bytes(
        bytes
            .get(..4)
            .ok_or_else(|| Error::Execution("truncated spill row".into()))?
            .try_into()
            .unwrap(),
    ) as usize;
    let mut at = 4;
    let mut row = Vec::with_capacity(n);
    for _ in 0..n {
        let (v, used) = Value::decode_canonical(&bytes[at..])?;
        row.push(v);
        at += used;
    }
    Ok((row, at))
}

const HASH_FOLD: u64 = 0x51_7c_c1_b7_27_22_0a_95;
const SEED_BUCKET: u64 = 0x24_3f_6a_88_85_a3_08_d3;
const SEED_PARTITION: u64 = 0x9e_37_79_b9_7f_4a_7c_15;

/// Multiply-rotate hash over the canonical key bytes. Deterministic, so
/// partition assignment is stable within a join. The final xor-shift folds
/// the multiply's high-bit entropy back down: bucket selection masks low
/// bits, which would otherwise only see the key's constant type tags.
fn key_hash(bytes: &[u8], seed: u64) -> u64 {
    let mut h = seed;
    let mut chunks = bytes.chunks_exact(8);
    for c in &mut chunks {
        h = (h.rotate_left(5) ^ u64::from_le_bytes(c.try_into().unwrap()))
            .wrapping_mul(HASH_FOLD);
    }
    let rem = chunks.remainder();
    if !rem.is_empty() {
        let mut tail = 0u64;
        for (i, b) in rem.iter().enumerate() {
            tail |= u64::from(*b) << (8 * i);
        }
        h = (h.rotate_left(5) ^ tail).wrapping_mul(HASH_FOLD);
    }
    h ^ (h >> 32)
}

fn partition_of(key: &[u8], partitions: u64) -> usize {
    // Seeded differently from the bucket hash so the keys routed to one
    // partition still spread across that partition's buckets.
    (key_hash(key, SEED_PARTITION) % partitions) as usize
}

/// Build-side estimate above which the in-memory path partitions both inputs
/// first, keeping each chained table small enough to stay cache-resident.
const IN_MEM_PARTITION_TARGET: u64 = 8 << 20;

/// Per-partition key material for one join input: row indices, key hashes,
/// and the encoded keys packed into an arena. Built in one sequential pass
/// over the rows; the join phase then only touches rows again at emission.
struct KeyedRows {
    sel: Vec<Vec<u32>>,
    hashes: Vec<Vec<u64>>,
    arena: Vec<Vec<u8>>,
    /// Prefix ends into `arena`, with a leading 0: key `i` of partition `p`
    /// is `arena[p][end[p][i]..end[p][i + 1]]`.
    end: Vec<Vec<usize>>,
}

fn key_rows(rows: &[Row], kpos: &[usize], partitions: u64) -> KeyedRows {
    let np = partitions as usize;
    let reserve = rows.len() / np + 1;
    let mut keyed = KeyedRows {
        sel: (0..np).map(|_| Vec::with_capacity(reserve)).collect(),
        hashes: (0..np).map(|_| Vec::with_capacity(reserve)).collect(),
        arena: (0..np).map(|_| Vec::new()).collect(),
        end: (0..np).map(|_| vec![0]).collect(),
    };
    let mut key = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        key_bytes(row, kpos, &mut key);
        let p = if np == 1 { 0 } else { partition_of(&key, partitions) };
        keyed.sel[p].push(i as u32);
        keyed.hashes[p].push(key_hash(&key, SEED_BUCKET));
        keyed.arena[p].extend_from_slice(&key);
        keyed.end[p].push(keyed.arena[p].len());
    }
    keyed
}

/// Joins partition `k` of the keyed build side against partition `k` of the
/// keyed probe side, appending to `out`. `build_is_left` controls
/// concatenation order so the output row is always `left ++ right`.
///
/// The build table is a chained hash table over the partition's key arena:
/// no per-row key allocation, and probes touch only the hash array until a
/// full hash match demands a byte comparison.
#[allow(clippy::too_many_arguments)]
fn join_partition(
    build: &[Row],
    keyed_build: &KeyedRows,
    probe: &[Row],
    keyed_probe: &KeyedRows,
    k: usize,
    build_is_left: bool,
    out: &mut Vec<Row>,
) {
    let (sel, hashes, arena, end) = (
        &keyed_build.sel[k],
        &keyed_build.hashes[k],
        &keyed_build.arena[k],
        &keyed_build.end[k],
    );
    let n = sel.len();
    debug_assert!(n < u32::MAX as usize);
    let buckets = (n * 2).next_power_of_two().max(16);
    let mask = (buckets - 1) as u64;
    let mut head = vec![u32::MAX; buckets];
    let mut next = vec![u32::MAX; n];
    // Reverse insertion so each chain yields build rows in input order.
    for i in (0..n).rev() {
        let b = (hashes[i] & mask) as usize;
        next[i] = head[b];
        head[b] = i as u32;
    }

    let probe_end = &keyed_probe.end[k];
    let probe_arena = &keyed_probe.arena[k];
    for (j, &pi) in keyed_probe.sel[k].iter().enumerate() {
        let h = keyed_probe.hashes[k][j];
        let key = &probe_arena[probe_end[j]..probe_end[j + 1]];
        let mut slot = head[(h & mask) as usize];
        while slot != u32::MAX {
            let i = slot as usize;
            if hashes[i] == h && arena[end[i]..end[i + 1]] == *key {
                let build_row = &build[sel[i] as usize];
                let probe_row = &probe[pi as usize];
                let mut joined = Vec::with_capacity(build_row.len() + probe_row.len());
                if build_is_left {
                    joined.extend(build_row.iter().cloned());
                    joined.extend(probe_row.iter().cloned());
                } else {
                    joined.extend(probe_row.iter().cloned());
                    joined.extend(build_row.iter().cloned());
                }
                out.push(joined);
            }
            slot = next[i];
        }
    }
}

/// Equi-joins `left` and `right` on the given key-position pairs, returning
/// `left ++ right` rows. With no keys the join degenerates to a cross
/// product. Spills to `spill_dir/part<k>.spill` when the build side exceeds
/// the grant; spill files are removed before returning.
pub fn hash_join(
    left: Vec<Row>,
    right: Vec<Row>,
    keys: &[(usize, usize)],
    grant: WorkMemGrant,
    spill_dir: &Path,
) -> Result<JoinOutcome> {
    if left.is_empty() || right.is_empty() {
        return Ok(JoinOutcome { rows: Vec::new(), spill_bytes: 0 });
    }
    if keys.is_empty() {
        let mut rows = Vec::with_capacity(left.len() * right.len());
        for l in &left {
            for r in &right {
                let mut joined = Vec::with_capacity(l.len() + r.len());
                joined.extend(l.iter().cloned());
                joined.extend(r.iter().cloned());
                rows.push(joined);
            }
        }
        return Ok(JoinOutcome { rows, spill_bytes: 0 });
    }

    let left_key: Vec<usize> = keys.iter().map(|(l, _)| *l).collect();
    let right_key: Vec<usize> = keys.iter().map(|(_, r)| *r).collect();

    // Smaller estimated input builds.
    let (est_left, est_right) = (estimate_rows_bytes(&left), estimate_rows_bytes(&right));
    let build_is_left = est_left <= est_right;
    let (build, probe, build_key, probe_key, est_build) = if build_is_left {
        (left, right, left_key, right_key, est_left)
    } else {
        (right, left, right_key, left_key, est_right)
    };

    let mut out = Vec::new();
    if est_build <= grant.bytes {
        let parts = if est_build > 2 * IN_MEM_PARTITION_TARGET {
            est_build.div_ceil(IN_MEM_PARTITION_TARGET)
        } else {
            1
        };
        let keyed_build = key_rows(&build, &build_key, parts);
        let keyed_probe = key_rows(&probe, &probe_key, parts);
        for k in 0..parts as usize {
            join_partition(&build, &keyed_build, &probe, &keyed_probe, k, build_is_left, &mut out);
        }
        return Ok(JoinOutcome { rows: out, spill_bytes: 0 });
    }

    // Grace path: partition both sides to disk, then join partition-wise.
    let partitions = est_build.div_ceil(grant.bytes).max(2);
    std::fs::create_dir_all(spill_dir).map_err(|e| Error::io(spill_dir, e))?;
    let part_path = |k: u64| spill_dir.join(format!("part{k}.spill"));
    let mut writers: Vec<std::io::BufWriter<std::fs::File>> = (0..partitions)
        .map(|k| {
            let p = part_path(k);
            std::fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(&p, e))
        })
        .collect::<Result<_>>()?;

    let mut spill_bytes = 0u64;
    let mut key = Vec::new();
    let mut rec = Vec::new();
    for (side, rows, kpos) in [(0u8, &build, &build_key), (1u8, &probe, &probe_key)] {
        for row in rows.iter() {
            key_bytes(row, kpos, &mut key);
            let k = partition_of(&key, partitions);
            rec.clear();
            encode_row(row, &mut rec);
            let w = &mut writers[k];
            let header = [&[side][..], &(rec.len() as u32).to_le_bytes()].concat();
            w.write_all(&header).and_then(|()| w.write_all(&rec)).map_err(|e| {
                Error::io(&part_path(k as u64), e)
            })?;
            spill_bytes += (header.len() + rec.len()) as u64;
        }
    }
    for w in &mut writers {
        w.flush().map_err(|e| Error::Execution(format!("spill flush: {e}")))?;
    }
    drop(writers);

    for k in 0..partitions {
        let path = part_path(k);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut part_build = Vec::new();
        let mut part_probe = Vec::new();
        let mut at = 0;
        while at < bytes.len() {
            let side = bytes[at];
            let len = u32::from_le_bytes(bytes[at + 1..at + 5].try_into().unwrap()) as usize;
            let (row, used) = decode_row(&bytes[at + 5..at + 5 + len])?;
            debug_assert_eq!(used, len);
            at += 5 + len;
            match side {
                0 => part_build.push(row),
                _ => part_probe.push(row),
            }
        }
        let keyed_build = key_rows(&part_build, &build_key, 1);
        let keyed_probe = key_rows(&part_probe, &probe_key, 1);
        join_partition(
            &part_build, &keyed_build, &part_probe, &keyed_probe, 0, build_is_left, &mut out,
        );
        let _ = std::fs::remove_file(&path);
    }

    Ok(JoinOutcome { rows: out, spill_bytes })
}
