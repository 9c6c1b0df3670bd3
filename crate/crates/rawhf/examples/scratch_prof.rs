use std::time::Instant;

use rawhf::value::{Row, Value};

const HASH_FOLD: u64 = 0x51_7c_c1_b7_27_22_0a_95;
const SEED_BUCKET: u64 = 0x24_3f_6a_88_85_a3_08_d3;

fn key_hash(bytes: &[u8], seed: u64) -> u64 {
    let mut h = seed;
    let mut chunks = bytes.chunks_exact(8);
    for c in &mut chunks {
        h = (h.rotate_left(5) ^ u64::from_le_bytes(c.try_into().unwrap())).wrapping_mul(HASH_FOLD);
    }
    let rem = chunks.remainder();
    if !rem.is_empty() {
        let mut tail = 0u64;
        for (i, b) in rem.iter().enumerate() {
            tail |= u64::from(*b) << (8 * i);
        }
        h = (h.rotate_left(5) ^ tail).wrapping_mul(HASH_FOLD);
    }
    h
}

fn key_bytes(row: &Row, positions: &[usize], out: &mut Vec<u8>) {
    out.clear();
    for &p in positions {
        row[p].encode_canonical(out);
    }
}

fn main() {
    let n = 2_000_000usize;
    let make = |mul: i64| -> Vec<Row> {
        (0..n).map(|i| vec![Value::Int(i as i64), Value::Int((i as i64 * mul) % 1000)]).collect()
    };
    let build = make(7);
    let probe = make(13);
    let kpos = [0usize];

    let mut key = Vec::new();
    let mut arena: Vec<u8> = Vec::with_capacity(n * 12);
    let mut key_end: Vec<usize> = Vec::with_capacity(n + 1);
    key_end.push(0);
    let mut hashes: Vec<u64> = Vec::with_capacity(n);
    for r in &build {
        key_bytes(r, &kpos, &mut key);
        arena.extend_from_slice(&key);
        key_end.push(arena.len());
        hashes.push(key_hash(&key, SEED_BUCKET));
    }
    let buckets = (n * 2).next_power_of_two().max(16);
    let mask = (buckets - 1) as u64;
    let mut head = vec![u32::MAX; buckets];
    let mut next = vec![u32::MAX; n];
    for i in (0..n).rev() {
        let b = (hashes[i] & mask) as usize;
        next[i] = head[b];
        head[b] = i as u32;
    }

    // chain stats
    let mut lens = vec![0u32; 64];
    let mut occupied = 0usize;
    for b in 0..buckets {
        let mut l = 0;
        let mut s = head[b];
        while s != u32::MAX {
            l += 1;
            s = next[s as usize];
        }
        if l > 0 {
            occupied += 1;
        }
        lens[l.min(63) as usize] += 1;
    }
    eprintln!("buckets {buckets} occupied {occupied} len-histogram[0..8] {:?}", &lens[..8]);

    // D1: encode+hash+head only
    let t = Instant::now();
    let mut acc = 0u64;
    for r in &probe {
        key_bytes(r, &kpos, &mut key);
        let h = key_hash(&key, SEED_BUCKET);
        acc ^= head[(h & mask) as usize] as u64;
    }
    eprintln!("D1 head-only: {:.3}s (acc {acc})", t.elapsed().as_secs_f64());

    // D2: walk chain, hash compare only
    let t = Instant::now();
    let mut matches = 0usize;
    for r in &probe {
        key_bytes(r, &kpos, &mut key);
        let h = key_hash(&key, SEED_BUCKET);
        let mut slot = head[(h & mask) as usize];
        while slot != u32::MAX {
            let i = slot as usize;
            if hashes[i] == h {
                matches += 1;
            }
            slot = next[i];
        }
    }
    eprintln!("D2 hash-cmp: {:.3}s (matches {matches})", t.elapsed().as_secs_f64());

    // D3: + arena byte compare
    let t = Instant::now();
    let mut matches = 0usize;
    for r in &probe {
        key_bytes(r, &kpos, &mut key);
        let h = key_hash(&key, SEED_BUCKET);
        let mut slot = head[(h & mask) as usize];
        while slot != u32::MAX {
            let i = slot as usize;
            if hashes[i] == h && arena[key_end[i]..key_end[i + 1]] == key[..] {
                matches += 1;
            }
            slot = next[i];
        }
    }
    eprintln!("D3 full: {:.3}s (matches {matches})", t.elapsed().as_secs_f64());
}
