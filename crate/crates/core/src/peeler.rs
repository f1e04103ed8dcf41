//! Peeling a hypergraph down to its k-core.
//!
//! Three schedules are implemented. They differ in how many steps they take,
//! never in the residual: the k-core does not depend on removal order.
//!
//! * [`peel_serial`] removes one low-degree vertex at a time from a queue.
//! * [`peel_parallel`] runs synchronous rounds; a round removes every vertex
//!   whose degree at the start of the round is below `k`.
//! * [`peel_subtables`] splits each round into `r` subrounds, one per vertex
//!   class of a partitioned graph; later subrounds see earlier removals.
//!
//! The round-based schedules are driven by a frontier (only vertices whose
//! degree just dropped below `k` are examined), and the `*_reference`
//! functions recompute every degree from scratch each step. Both must
//! produce identical traces.
//!
//! Counting convention: the final scan that finds nothing to remove is not a
//! round. Isolated vertices are removed in round 1 like any other vertex of
//! degree below `k`, so a graph with `n > 0` always takes at least one round.

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeelVariant {
    Serial,
    ParallelRounds,
    SubtableSubrounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelTrace {
    pub k: u32,
    pub variant: PeelVariant,
    /// Surviving vertices after each step: one removal for the serial
    /// schedule, one round or subround otherwise.
    pub per_step_survivors: Vec<usize>,
    /// Rounds that removed at least one vertex. For the serial schedule this
    /// is the number of single-vertex steps.
    pub rounds: usize,
    /// Flattened index of the last subround that removed anything
    /// (subtable schedule only, otherwise 0).
    pub subrounds: usize,
    /// Vertices in removal order; ties within a round are by vertex id.
    pub removal_order: Vec<VertexId>,
    /// Sorted vertex ids of the k-core.
    pub residual_vertices: Vec<VertexId>,
    /// Sorted indices of the edges of the k-core.
    pub residual_edges: Vec<usize>,
}

impl PeelTrace {
    /// A trial fails when the k-core is non-empty.
    pub fn failed(&self) -> bool {
        !self.residual_vertices.is_empty()
    }
}

/// Vertex-to-edge incidence lists in CSR layout.
struct Incidence {
    offsets: Vec<usize>,
    edge_ids: Vec<u32>,
}

impl Incidence {
    fn build(h: &Hypergraph) -> Self {
        let deg = h.degrees();
        let mut offsets = Vec::with_capacity(h.n() + 1);
        offsets.push(0);
        let mut acc = 0usize;
        for &d in &deg {
            acc += d as usize;
            offsets.push(acc);
        }
        let mut fill = offsets.clone();
        let mut edge_ids = vec![0u32; acc];
        for (e, verts) in h.edges().enumerate() {
            for &v in verts {
                edge_ids[fill[v as usize]] = e as u32;
                fill[v as usize] += 1;
            }
        }
        Incidence { offsets, edge_ids }
    }
}

/// Live-edge degree bookkeeping shared by all schedules.
struct PeelState<'a> {
    h: &'a Hypergraph,
    inc: Incidence,
    k: u32,
    degree: Vec<u32>,
    removed: Vec<bool>,
    edge_alive: Vec<bool>,
    survivors: usize,
    removal_order: Vec<VertexId>,
}

impl<'a> PeelState<'a> {
    fn new(h: &'a Hypergraph, k: u32) -> Self {
        PeelState {
            h,
            inc: Incidence::build(h),
            k,
            degree: h.degrees(),
            removed: vec![false; h.n()],
            edge_alive: vec![true; h.edge_count()],
            survivors: h.n(),
            removal_order: Vec::new(),
        }
    }

    fn low_degree(&self) -> Vec<VertexId> {
        (0..self.h.n() as VertexId)
            .filter(|&v| self.degree[v as usize] < self.k)
            .collect()
    }

    /// Marks `v` removed and kills its live edges. Every surviving vertex
    /// whose degree falls from `k` to `k - 1` is passed to `on_low`; this
    /// happens at most once per vertex.
    fn remove(&mut self, v: VertexId, mut on_low: impl FnMut(VertexId)) {
        debug_assert!(!self.removed[v as usize]);
        self.removed[v as usize] = true;
        self.survivors -= 1;
        self.removal_order.push(v);
        let (lo, hi) = (
            self.inc.offsets[v as usize],
            self.inc.offsets[v as usize + 1],
        );
        for slot in lo..hi {
            let e = self.inc.edge_ids[slot] as usize;
            if !std::mem::replace(&mut self.edge_alive[e], false) {
                continue;
            }
            for &u in self.h.edge(e) {
                let d = &mut self.degree[u as usize];
                *d -= 1;
                if *d + 1 == self.k && !self.removed[u as usize] {
                    on_low(u);
                }
            }
        }
    }

    fn finish(
        self,
        variant: PeelVariant,
        per_step_survivors: Vec<usize>,
        rounds: usize,
        subrounds: usize,
    ) -> PeelTrace {
        let residual_vertices = (0..self.h.n() as VertexId)
            .filter(|&v| !self.removed[v as usize])
            .collect();
        let residual_edges = self
            .edge_alive
            .iter()
            .enumerate()
            .filter_map(|(e, &alive)| alive.then_some(e))
            .collect();
        PeelTrace {
            k: self.k,
            variant,
            per_step_survivors,
            rounds,
            subrounds,
            removal_order: self.removal_order,
            residual_vertices,
            residual_edges,
        }
    }
}

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

/// Queue-driven greedy peeling, one vertex per step.
pub fn peel_serial(h: &Hypergraph, k: u32) -> Result<PeelTrace> {
    check_k(k)?;
    let mut state = PeelState::new(h, k);
    let mut queue: std::collections::VecDeque<VertexId> = state.low_degree().into();
    let mut survivors = Vec::new();
    while let Some(v) = queue.pop_front() {
        state.remove(v, |u| queue.push_back(u));
        survivors.push(state.survivors);
    }
    let steps = survivors.len();
    Ok(state.finish(PeelVariant::Serial, survivors, steps, 0))
}

/// Synchronous round-based peeling.
pub fn peel_parallel(h: &Hypergraph, k: u32) -> Result<PeelTrace> {
    check_k(k)?;
    let mut state = PeelState::new(h, k);
    let mut frontier = state.low_degree();
    let mut survivors = Vec::new();
    while !frontier.is_empty() {
        // The whole frontier leaves before any degree is updated.
        for &v in &frontier {
            state.removed[v as usize] = true;
        }
        let mut next = Vec::new();
        for &v in &frontier {
            state.removed[v as usize] = false;
            state.remove(v, |u| next.push(u));
        }
        survivors.push(state.survivors);
        next.sort_unstable();
        frontier = next;
    }
    let rounds = survivors.len();
    Ok(state.finish(PeelVariant::ParallelRounds, survivors, rounds, 0))
}

/// Round-based peeling in `r` subrounds per round, one per vertex class.
pub fn peel_subtables(h: &Hypergraph, k: u32) -> Result<PeelTrace> {
    check_k(k)?;
    if !h.is_partitioned() {
        return Err(Error::MissingPartition);
    }
    let r = h.r();
    let mut state = PeelState::new(h, k);
    let mut pending: Vec<Vec<VertexId>> = vec![Vec::new(); r];
    for v in state.low_degree() {
        pending[h.class_of(v)].push(v);
    }
    let mut survivors = Vec::new();
    let mut last_active = 0;
    while pending.iter().any(|p| !p.is_empty()) {
        for class in 0..r {
            let mut batch = std::mem::take(&mut pending[class]);
            batch.sort_unstable();
            if !batch.is_empty() {
                for &v in &batch {
                    state.removed[v as usize] = true;
                }
                for &v in &batch {
                    state.removed[v as usize] = false;
                    state.remove(v, |u| pending[h.class_of(u)].push(u));
                }
                last_active = survivors.len() + 1;
            }
            survivors.push(state.survivors);
        }
    }
    survivors.truncate(last_active);
    let rounds = last_active.div_ceil(r);
    Ok(state.finish(
        PeelVariant::SubtableSubrounds,
        survivors,
        rounds,
        last_active,
    ))
}

pub fn peel(h: &Hypergraph, k: u32, variant: PeelVariant) -> Result<PeelTrace> {
    match variant {
        PeelVariant::Serial => peel_serial(h, k),
        PeelVariant::ParallelRounds => peel_parallel(h, k),
        PeelVariant::SubtableSubrounds => peel_subtables(h, k),
    }
}

/// Degrees of live vertices recomputed from the live edge set.
fn live_degrees(h: &Hypergraph, edge_alive: &[bool]) -> Vec<u32> {
    let mut deg = vec![0u32; h.n()];
    for (e, verts) in h.edges().enumerate() {
        if edge_alive[e] {
            for &v in verts {
                deg[v as usize] += 1;
            }
        }
    }
    deg
}

/// Applies one synchronous step to the vertices selected by `eligible`,
/// recomputing all degrees first. Returns the removed vertices.
fn reference_step(
    h: &Hypergraph,
    k: u32,
    removed: &mut [bool],
    edge_alive: &mut [bool],
    eligible: impl Fn(VertexId) -> bool,
) -> Vec<VertexId> {
    let deg = live_degrees(h, edge_alive);
    let batch: Vec<VertexId> = (0..h.n() as VertexId)
        .filter(|&v| !removed[v as usize] && eligible(v) && deg[v as usize] < k)
        .collect();
    for &v in &batch {
        removed[v as usize] = true;
    }
    for (e, verts) in h.edges().enumerate() {
        if edge_alive[e] && verts.iter().any(|&v| removed[v as usize]) {
            edge_alive[e] = false;
        }
    }
    batch
}

fn reference_trace(
    h: &Hypergraph,
    k: u32,
    variant: PeelVariant,
    survivors: Vec<usize>,
    rounds: usize,
    subrounds: usize,
    removal_order: Vec<VertexId>,
    removed: &[bool],
    edge_alive: &[bool],
) -> PeelTrace {
    PeelTrace {
        k,
        variant,
        per_step_survivors: survivors,
        rounds,
        subrounds,
        removal_order,
        residual_vertices: (0..h.n() as VertexId)
            .filter(|&v| !removed[v as usize])
            .collect(),
        residual_edges: (0..h.edge_count()).filter(|&e| edge_alive[e]).collect(),
    }
}

/// Full-scan implementation of [`peel_parallel`] for differential testing.
pub fn peel_parallel_reference(h: &Hypergraph, k: u32) -> Result<PeelTrace> {
    check_k(k)?;
    let mut removed = vec![false; h.n()];
    let mut edge_alive = vec![true; h.edge_count()];
    let mut order = Vec::new();
    let mut survivors = Vec::new();
    let mut alive = h.n();
    loop {
        let batch = reference_step(h, k, &mut removed, &mut edge_alive, |_| true);
        if batch.is_empty() {
            break;
        }
        alive -= batch.len();
        survivors.push(alive);
        order.extend(batch);
    }
    let rounds = survivors.len();
    Ok(reference_trace(
        h,
        k,
        PeelVariant::ParallelRounds,
        survivors,
        rounds,
        0,
        order,
        &removed,
        &edge_alive,
    ))
}

/// Full-scan implementation of [`peel_subtables`] for differential testing.
pub fn peel_subtables_reference(h: &Hypergraph, k: u32) -> Result<PeelTrace> {
    check_k(k)?;
    if !h.is_partitioned() {
        return Err(Error::MissingPartition);
    }
    let r = h.r();
    let mut removed = vec![false; h.n()];
    let mut edge_alive = vec![true; h.edge_count()];
    let mut order = Vec::new();
    let mut survivors = Vec::new();
    let mut alive = h.n();
    let mut last_active = 0;
    loop {
        let mut round_removed = 0;
        for class in 0..r {
            let batch = reference_step(h, k, &mut removed, &mut edge_alive, |v| {
                h.class_of(v) == class
            });
            if !batch.is_empty() {
                last_active = survivors.len() + 1;
            }
            round_removed += batch.len();
            alive -= batch.len();
            survivors.push(alive);
            order.extend(batch);
        }
        if round_removed == 0 {
            break;
        }
    }
    survivors.truncate(last_active);
    Ok(reference_trace(
        h,
        k,
        PeelVariant::SubtableSubrounds,
        survivors,
        last_active.div_ceil(r),
        last_active,
        order,
        &removed,
        &edge_alive,
    ))
}

/// True iff `vertex_set` is exactly the k-core of `h`: every member has at
/// least `k` edges lying entirely inside the set, and no larger set has that
/// property (checked against a fresh serial peel of the whole graph).
pub fn verify_kcore(h: &Hypergraph, k: u32, vertex_set: &[VertexId]) -> bool {
    let mut inside = vec![false; h.n()];
    for &v in vertex_set {
        match inside.get_mut(v as usize) {
            Some(slot) => *slot = true,
            None => return false,
        }
    }
    let mut induced = vec![0u32; h.n()];
    for e in h.edges() {
        if e.iter().all(|&v| inside[v as usize]) {
            for &v in e {
                induced[v as usize] += 1;
            }
        }
    }
    if vertex_set.iter().any(|&v| induced[v as usize] < k) {
        return false;
    }
    let Ok(core) = peel_serial(h, k.max(1)) else {
        return false;
    };
    let mut set: Vec<VertexId> = vertex_set.to_vec();
    set.sort_unstable();
    set.dedup();
    set == core.residual_vertices
}
