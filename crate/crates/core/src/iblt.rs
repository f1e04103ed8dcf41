//! Invertible Bloom Lookup Table with XOR accumulators.
//!
//! Each cell holds two XOR accumulators: one over the keys hashed to it and
//! one over their checksums. The table is split into `r` equal subtables and
//! hash function `h_j` maps a key to one cell of subtable `j`, so every key
//! occupies `r` distinct cells. Insertion and deletion are the same XOR
//! toggle.
//!
//! A cell is pure when its key accumulator is a non-zero key whose checksum
//! equals the checksum accumulator and which hashes back to that cell.
//! Recovery repeatedly extracts pure cells; viewed as a hypergraph (cells are
//! vertices, keys are edges) this is peeling to the 2-core, and it succeeds
//! iff the 2-core is empty.

use std::io::Read;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyWidth {
    Bits32,
    Bits64,
}

impl KeyWidth {
    pub fn bits(self) -> u32 {
        match self {
            KeyWidth::Bits32 => 32,
            KeyWidth::Bits64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(KeyWidth::Bits32),
            64 => Ok(KeyWidth::Bits64),
            _ => Err(Error::InvalidParameter(format!(
                "key width must be 32 or 64, got {bits}"
            ))),
        }
    }

    fn bytes(self) -> usize {
        self.bits() as usize / 8
    }
}

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Table geometry and the seeded hash family `h_1..h_r` plus `checkSum`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashSpec {
    m: usize,
    r: usize,
    key_width: KeyWidth,
    hash_seed: u64,
    seeds: Vec<u64>,
    checksum_seed: u64,
}

impl HashSpec {
    pub fn new(m: usize, r: usize, hash_seed: u64, key_width: KeyWidth) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidParameter(format!("r must be at least 2, got {r}")));
        }
        if m == 0 || m % r != 0 {
            return Err(Error::NotDivisible {
                what: "m",
                value: m,
                r,
            });
        }
        // Seeds are successive SplitMix64 outputs; the last one keys the
        // checksum so it is independent of the cell hashes.
        let mut state = hash_seed;
        let mut next = || {
            state = state.wrapping_add(GOLDEN_GAMMA);
            mix64(state)
        };
        let seeds = (0..r).map(|_| next()).collect();
        let checksum_seed = next();
        Ok(HashSpec {
            m,
            r,
            key_width,
            hash_seed,
            seeds,
            checksum_seed,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn key_width(&self) -> KeyWidth {
        self.key_width
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn subtable_size(&self) -> usize {
        self.m / self.r
    }

    pub fn subtable_range(&self, j: usize) -> std::ops::Range<usize> {
        let s = self.subtable_size();
        j * s..(j + 1) * s
    }

    /// Offset of `key` inside subtable `j`.
    fn slot(&self, j: usize, key: u64) -> usize {
        let h = mix64(key.wrapping_add(self.seeds[j]));
        ((h as u128 * self.subtable_size() as u128) >> 64) as usize
    }

    /// Global cell index `h_j(key)`, always inside subtable `j`.
    pub fn cell_index(&self, j: usize, key: u64) -> usize {
        j * self.subtable_size() + self.slot(j, key)
    }

    pub fn checksum(&self, key: u64) -> u64 {
        mix64(key ^ self.checksum_seed).wrapping_add(1)
    }

    fn check_key(&self, key: u64) -> Result<()> {
        if key == 0 {
            return Err(Error::ZeroKey);
        }
        if self.key_width == KeyWidth::Bits32 && key > u32::MAX as u64 {
            return Err(Error::KeyTooWide { key, width: 32 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IbltCell {
    pub key_acc: u64,
    pub check_acc: u64,
}

impl IbltCell {
    pub fn is_empty(&self) -> bool {
        self.key_acc == 0 && self.check_acc == 0
    }

    fn toggle(&mut self, key: u64, check: u64) {
        self.key_acc ^= key;
        self.check_acc ^= check;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Iblt {
    spec: HashSpec,
    cells: Vec<IbltCell>,
}

/// Outcome of a recovery run. The table itself is left untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryResult {
    /// Keys in the order they were extracted.
    pub recovered: Vec<u64>,
    /// True iff every cell was zero when recovery stopped.
    pub complete: bool,
    /// Keys recovered per subround (parallel recovery only), up to the last
    /// subround that recovered anything.
    pub trace: Vec<usize>,
    /// Rounds up to and including the last productive one (0 for serial).
    pub rounds_used: usize,
    /// Flattened index of the last productive subround (0 for serial).
    pub subrounds_used: usize,
    /// Key deletions applied to the table during recovery.
    pub deletions: usize,
}

impl RecoveryResult {
    pub fn recovered_sorted(&self) -> Vec<u64> {
        let mut v = self.recovered.clone();
        v.sort_unstable();
        v
    }
}

const HEADER_LEN: usize = 8 + 4 + 4 + 8;

impl Iblt {
    pub fn new(m: usize, r: usize, hash_seed: u64, key_width: KeyWidth) -> Result<Self> {
        let spec = HashSpec::new(m, r, hash_seed, key_width)?;
        Ok(Iblt {
            cells: vec![IbltCell::default(); m],
            spec,
        })
    }

    pub fn spec(&self) -> &HashSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[IbltCell] {
        &self.cells
    }

    pub fn subtable(&self, j: usize) -> &[IbltCell] {
        &self.cells[self.spec.subtable_range(j)]
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(IbltCell::is_empty)
    }

    /// Whether cell `index` holds exactly one key (up to checksum collisions).
    pub fn is_pure(&self, index: usize) -> bool {
        let cell = &self.cells[index];
        cell.key_acc != 0
            && cell.check_acc == self.spec.checksum(cell.key_acc)
            && self.spec.cell_index(index / self.spec.subtable_size(), cell.key_acc) == index
    }

    fn toggle(&mut self, key: u64) {
        let check = self.spec.checksum(key);
        for j in 0..self.spec.r {
            let i = self.spec.cell_index(j, key);
            self.cells[i].toggle(key, check);
        }
    }

    pub fn insert(&mut self, key: u64) -> Result<()> {
        self.spec.check_key(key)?;
        self.toggle(key);
        Ok(())
    }

    pub fn delete(&mut self, key: u64) -> Result<()> {
        self.insert(key)
    }

    /// Toggles many keys at once, one worker per subtable. Cells of
    /// different subtables never alias, and XOR commutes, so the result is
    /// identical to toggling the keys one by one.
    pub fn insert_all(&mut self, keys: &[u64]) -> Result<()> {
        for &k in keys {
            self.spec.check_key(k)?;
        }
        self.toggle_all(keys);
        Ok(())
    }

    fn toggle_all(&mut self, keys: &[u64]) {
        let spec = &self.spec;
        let checks: Vec<u64> = keys.iter().map(|&k| spec.checksum(k)).collect();
        self.cells
            .par_chunks_mut(spec.subtable_size())
            .enumerate()
            .for_each(|(j, sub)| {
                for (&key, &check) in keys.iter().zip(&checks) {
                    sub[spec.slot(j, key)].toggle(key, check);
                }
            });
    }

    /// Serial recovery driven by a queue of candidate pure cells.
    pub fn recover(&self) -> RecoveryResult {
        let mut table = self.clone();
        let mut queue: std::collections::VecDeque<usize> =
            (0..table.cells.len()).filter(|&i| table.is_pure(i)).collect();
        let mut recovered = Vec::new();
        while let Some(i) = queue.pop_front() {
            if !table.is_pure(i) {
                continue;
            }
            let key = table.cells[i].key_acc;
            table.toggle(key);
            recovered.push(key);
            for j in 0..table.spec.r {
                let c = table.spec.cell_index(j, key);
                if table.is_pure(c) {
                    queue.push_back(c);
                }
            }
        }
        RecoveryResult {
            deletions: recovered.len(),
            recovered,
            complete: table.is_empty(),
            trace: Vec::new(),
            rounds_used: 0,
            subrounds_used: 0,
        }
    }

    /// Round-based recovery. Each round visits the subtables in order; in
    /// subround `j` every pure cell of subtable `j` (as of the start of the
    /// subround) is extracted and its key deleted from all `r` subtables.
    /// A key has a single cell in subtable `j`, so no key is deleted twice.
    /// Stops after a round that recovers nothing.
    pub fn recover_parallel(&self) -> RecoveryResult {
        let mut table = self.clone();
        let r = table.spec.r;
        let mut recovered = Vec::new();
        let mut trace = Vec::new();
        let mut last_active = 0;
        let mut deletions = 0;
        loop {
            let mut round_total = 0;
            for j in 0..r {
                let range = table.spec.subtable_range(j);
                let offset = range.start;
                let t = &table;
                let keys: Vec<u64> = t.cells[range]
                    .par_iter()
                    .enumerate()
                    .filter(|&(i, _)| t.is_pure(offset + i))
                    .map(|(_, c)| c.key_acc)
                    .collect();
                table.toggle_all(&keys);
                deletions += keys.len();
                round_total += keys.len();
                trace.push(keys.len());
                if !keys.is_empty() {
                    last_active = trace.len();
                }
                recovered.extend(keys);
            }
            if round_total == 0 {
                break;
            }
        }
        trace.truncate(last_active);
        RecoveryResult {
            recovered,
            complete: table.is_empty(),
            trace,
            rounds_used: last_active.div_ceil(r),
            subrounds_used: last_active,
            deletions,
        }
    }

    /// Cell-wise XOR of two tables with identical geometry and hashing: the
    /// table of the symmetric difference of their key sets.
    pub fn symmetric_difference(&self, other: &Iblt) -> Result<Iblt> {
        if self.spec != other.spec {
            return Err(Error::ShapeMismatch);
        }
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| IbltCell {
                key_acc: a.key_acc ^ b.key_acc,
                check_acc: a.check_acc ^ b.check_acc,
            })
            .collect();
        Ok(Iblt {
            spec: self.spec.clone(),
            cells,
        })
    }

    /// Flat little-endian layout: `m: u64, r: u32, key_width: u32,
    /// hash_seed: u64`, then per cell `key_acc` (`key_width` bits) and
    /// `check_acc` (64 bits).
    pub fn to_bytes(&self) -> Vec<u8> {
        let kb = self.spec.key_width.bytes();
        let mut out = Vec::with_capacity(HEADER_LEN + self.cells.len() * (kb + 8));
        out.extend_from_slice(&(self.spec.m as u64).to_le_bytes());
        out.extend_from_slice(&(self.spec.r as u32).to_le_bytes());
        out.extend_from_slice(&self.spec.key_width.bits().to_le_bytes());
        out.extend_from_slice(&self.spec.hash_seed.to_le_bytes());
        for c in &self.cells {
            out.extend_from_slice(&c.key_acc.to_le_bytes()[..kb]);
            out.extend_from_slice(&c.check_acc.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = bytes;
        let u64_field = |rd: &mut &[u8], len: usize| -> Result<u64> {
            let mut buf = [0u8; 8];
            rd.read_exact(&mut buf[..len])
                .map_err(|_| Error::Format("truncated IBLT image".into()))?;
            Ok(u64::from_le_bytes(buf))
        };
        let m = u64_field(&mut rd, 8)? as usize;
        let r = u64_field(&mut rd, 4)? as usize;
        let width = KeyWidth::from_bits(u64_field(&mut rd, 4)? as u32)?;
        let seed = u64_field(&mut rd, 8)?;
        let kb = width.bytes();
        let expected = m.checked_mul(kb + 8);
        if expected != Some(rd.len()) {
            return Err(Error::Format(format!(
                "{m} cells do not match {} payload bytes",
                rd.len()
            )));
        }
        let mut table = Iblt::new(m, r, seed, width)?;
        for cell in &mut table.cells {
            cell.key_acc = u64_field(&mut rd, kb)?;
            cell.check_acc = u64_field(&mut rd, 8)?;
        }
        Ok(table)
    }
}

/// The hypergraph of a key set: one vertex per cell, one edge
/// `(h_1(x), ..., h_r(x))` per key, partitioned by subtable.
pub fn to_hypergraph(items: &[u64], spec: &HashSpec) -> Result<Hypergraph> {
    let mut edges = Vec::with_capacity(items.len() * spec.r);
    for &x in items {
        for j in 0..spec.r {
            edges.push(spec.cell_index(j, x) as VertexId);
        }
    }
    Hypergraph::from_edges(spec.m, spec.r, edges, true)
}
