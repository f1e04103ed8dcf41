//! Random r-uniform hypergraphs.
//!
//! Two generators are provided: the uniform model, where every edge is an
//! r-subset of `[0, n)` drawn uniformly, and the partitioned model, where the
//! vertices are split into `r` contiguous classes of size `n / r` and each edge
//! takes exactly one vertex from every class (the hypergraph an IBLT with `r`
//! subtables induces).
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so an edge list
//! is a pure function of the generator inputs.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type VertexId = u32;

/// How duplicate edges are handled by [`generate_uniform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeMode {
    /// Edges are drawn independently; the same vertex set may repeat, as in
    /// hashing applications.
    #[default]
    WithReplacement,
    /// Duplicate vertex sets are rejected and redrawn.
    DistinctEdges,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    r: usize,
    /// Flat edge storage, `r` vertex ids per edge.
    edges: Vec<VertexId>,
    partitioned: bool,
}

impl Hypergraph {
    /// Builds a hypergraph from a flat edge list, validating every invariant.
    pub fn from_edges(
        n: usize,
        r: usize,
        edges: Vec<VertexId>,
        partitioned: bool,
    ) -> Result<Self> {
        check_arity(n, r)?;
        if n > VertexId::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "n = {n} exceeds the vertex id range"
            )));
        }
        if partitioned && n % r != 0 {
            return Err(Error::NotDivisible {
                what: "n",
                value: n,
                r,
            });
        }
        if edges.len() % r != 0 {
            return Err(Error::Format(format!(
                "{} vertex ids do not split into {r}-edges",
                edges.len()
            )));
        }
        let h = Hypergraph {
            n,
            r,
            edges,
            partitioned,
        };
        for (index, e) in h.edges().enumerate() {
            if let Some(&v) = e.iter().find(|&&v| v as usize >= n) {
                return Err(Error::InvalidEdge {
                    index,
                    reason: format!("vertex {v} out of range"),
                });
            }
            for (i, a) in e.iter().enumerate() {
                if e[i + 1..].contains(a) {
                    return Err(Error::InvalidEdge {
                        index,
                        reason: format!("vertex {a} repeated"),
                    });
                }
            }
            if partitioned {
                let mut seen = vec![false; r];
                for &v in e {
                    let class = h.class_of(v);
                    if std::mem::replace(&mut seen[class], true) {
                        return Err(Error::InvalidEdge {
                            index,
                            reason: format!("two vertices in class {class}"),
                        });
                    }
                }
            }
        }
        Ok(h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len() / self.r
    }

    pub fn edge(&self, index: usize) -> &[VertexId] {
        &self.edges[index * self.r..(index + 1) * self.r]
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = &[VertexId]> + '_ {
        self.edges.chunks_exact(self.r)
    }

    pub fn is_partitioned(&self) -> bool {
        self.partitioned
    }

    /// Size of each vertex class. Only meaningful for partitioned graphs.
    pub fn class_size(&self) -> usize {
        self.n / self.r
    }

    /// Partition class of `v`; class `j` is the range `[j * n/r, (j+1) * n/r)`.
    pub fn class_of(&self, v: VertexId) -> usize {
        v as usize / self.class_size()
    }

    pub fn class_range(&self, class: usize) -> std::ops::Range<usize> {
        let s = self.class_size();
        class * s..(class + 1) * s
    }

    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.n];
        for &v in &self.edges {
            deg[v as usize] += 1;
        }
        deg
    }

    /// Writes the edge-list format: a header `n r m partitioned` followed by
    /// one space-separated edge per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {} {}",
            self.n,
            self.r,
            self.edge_count(),
            u8::from(self.partitioned)
        )?;
        let mut line = String::new();
        for e in self.edges() {
            line.clear();
            for (i, v) in e.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("missing header line".into()))??;
        let fields: Vec<usize> = parse_fields(&header)?;
        let [n, r, m, partitioned] = fields[..] else {
            return Err(Error::Format(format!(
                "header needs 4 fields, got {}",
                fields.len()
            )));
        };
        if partitioned > 1 {
            return Err(Error::Format(format!(
                "partitioned flag must be 0 or 1, got {partitioned}"
            )));
        }
        check_arity(n, r)?;
        let mut edges = Vec::with_capacity(m * r);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ids: Vec<usize> = parse_fields(&line)?;
            if ids.len() != r {
                return Err(Error::Format(format!(
                    "edge line has {} ids, expected {r}",
                    ids.len()
                )));
            }
            edges.extend(ids.into_iter().map(|v| v as VertexId));
        }
        if edges.len() != m * r {
            return Err(Error::Format(format!(
                "header promises {m} edges, found {}",
                edges.len() / r
            )));
        }
        Hypergraph::from_edges(n, r, edges, partitioned == 1)
    }
}

fn parse_fields(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|f| {
            f.parse()
                .map_err(|_| Error::Format(format!("not an integer: {f:?}")))
        })
        .collect()
}

fn check_arity(n: usize, r: usize) -> Result<()> {
    if r < 2 || n < r {
        return Err(Error::InvalidArity { n, r });
    }
    Ok(())
}

/// `C(n, r)`, saturating at `u128::MAX`.
fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Floyd's algorithm: `r` distinct ids from `[0, n)`, each r-subset equally likely.
/// The result is sorted.
fn sample_distinct<R: Rng>(rng: &mut R, n: usize, r: usize, out: &mut Vec<VertexId>) {
    out.clear();
    for j in n - r..n {
        let t = rng.random_range(0..=j) as VertexId;
        if out.contains(&t) {
            out.push(j as VertexId);
        } else {
            out.push(t);
        }
    }
    out.sort_unstable();
}

/// `m` edges, each a uniform r-subset of `[0, n)`.
pub fn generate_uniform(
    n: usize,
    m: usize,
    r: usize,
    mode: EdgeMode,
    seed: u64,
) -> Result<Hypergraph> {
    check_arity(n, r)?;
    if n > VertexId::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "n = {n} exceeds the vertex id range"
        )));
    }
    if mode == EdgeMode::DistinctEdges && m as u128 > binomial(n, r) {
        return Err(Error::InfeasibleDistinct { n, r, m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * r);
    let mut scratch = Vec::with_capacity(r);
    match mode {
        EdgeMode::WithReplacement => {
            for _ in 0..m {
                sample_distinct(&mut rng, n, r, &mut scratch);
                edges.extend_from_slice(&scratch);
            }
        }
        EdgeMode::DistinctEdges => {
            let mut seen: HashSet<Vec<VertexId>> = HashSet::with_capacity(m);
            while seen.len() < m {
                sample_distinct(&mut rng, n, r, &mut scratch);
                if seen.insert(scratch.clone()) {
                    edges.extend_from_slice(&scratch);
                }
            }
        }
    }
    Ok(Hypergraph {
        n,
        r,
        edges,
        partitioned: false,
    })
}

/// `m` edges with one uniform vertex drawn from each of the `r` classes.
pub fn generate_partitioned(n: usize, m: usize, r: usize, seed: u64) -> Result<Hypergraph> {
    check_arity(n, r)?;
    if n % r != 0 {
        return Err(Error::NotDivisible {
            what: "n",
            value: n,
            r,
        });
    }
    if n > VertexId::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "n = {n} exceeds the vertex id range"
        )));
    }
    let class_size = n / r;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * r);
    for _ in 0..m {
        for class in 0..r {
            let v = class * class_size + rng.random_range(0..class_size);
            edges.push(v as VertexId);
        }
    }
    Ok(Hypergraph {
        n,
        r,
        edges,
        partitioned: true,
    })
}

/// Maps each degree to the number of vertices having it.
pub fn degree_histogram(h: &Hypergraph) -> BTreeMap<u32, usize> {
    let mut hist = BTreeMap::new();
    for d in h.degrees() {
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

/// Edge count `ceil(c * n)` used throughout the experiments.
pub fn edge_count_for_density(n: usize, c: f64) -> usize {
    (c * n as f64).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_uniform_graph() {
        for mode in [EdgeMode::WithReplacement, EdgeMode::DistinctEdges] {
            let h = generate_uniform(10, 0, 3, mode, 1).unwrap();
            assert_eq!(h.edge_count(), 0);
            assert!(h.degrees().iter().all(|&d| d == 0));
            assert_eq!(degree_histogram(&h), BTreeMap::from([(0, 10)]));
        }
    }

    #[test]
    fn degree_sum_large() {
        let h = generate_uniform(1_000_000, 700_000, 4, EdgeMode::WithReplacement, 7).unwrap();
        let sum: u64 = h.degrees().iter().map(|&d| d as u64).sum();
        assert_eq!(sum, 2_800_000);
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(
            generate_uniform(10, 5, 1, EdgeMode::WithReplacement, 0),
            Err(Error::InvalidArity { .. })
        ));
        assert!(matches!(
            generate_uniform(2, 5, 3, EdgeMode::WithReplacement, 0),
            Err(Error::InvalidArity { .. })
        ));
    }

    #[test]
    fn distinct_infeasible() {
        // C(5, 3) = 10
        assert!(generate_uniform(5, 10, 3, EdgeMode::DistinctEdges, 0).is_ok());
        assert!(matches!(
            generate_uniform(5, 11, 3, EdgeMode::DistinctEdges, 0),
            Err(Error::InfeasibleDistinct { .. })
        ));
    }

    #[test]
    fn distinct_edges_are_distinct() {
        let h = generate_uniform(6, 20, 3, EdgeMode::DistinctEdges, 9).unwrap();
        let set: HashSet<&[VertexId]> = h.edges().collect();
        assert_eq!(set.len(), 20);
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 3), 10);
        assert_eq!(binomial(10_000, 4), 416_416_712_497_500);
        assert_eq!(binomial(4, 4), 1);
    }

    #[test]
    fn partitioned_small() {
        let h = generate_partitioned(8, 0, 4, 1).unwrap();
        assert!(h.is_partitioned());
        assert_eq!(h.class_size(), 2);
        assert_eq!(h.class_range(3), 6..8);
        assert!(matches!(
            generate_partitioned(10, 3, 4, 1),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn partitioned_class_degree_sums() {
        let h = generate_partitioned(12, 200, 3, 5).unwrap();
        let deg = h.degrees();
        for class in 0..3 {
            let s: u32 = deg[h.class_range(class)].iter().sum();
            assert_eq!(s, 200);
        }
    }

    #[test]
    fn partitioned_one_vertex_per_class() {
        let h = generate_partitioned(1_000_000, 700_000, 4, 3).unwrap();
        for e in h.edges() {
            for (j, &v) in e.iter().enumerate() {
                assert_eq!(h.class_of(v), j);
            }
        }
    }

    #[test]
    fn single_edge_histogram() {
        let h = Hypergraph::from_edges(3, 3, vec![0, 1, 2], false).unwrap();
        assert_eq!(degree_histogram(&h), BTreeMap::from([(1, 3)]));
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert!(Hypergraph::from_edges(4, 3, vec![0, 1, 4], false).is_err());
        assert!(Hypergraph::from_edges(4, 3, vec![0, 1, 1], false).is_err());
        assert!(Hypergraph::from_edges(4, 2, vec![0, 1], true).is_err());
        assert!(Hypergraph::from_edges(4, 2, vec![0, 2], true).is_ok());
    }

    #[test]
    fn edge_list_round_trip() {
        let h = generate_partitioned(12, 30, 3, 2).unwrap();
        let mut buf = Vec::new();
        h.write_edge_list(&mut buf).unwrap();
        assert!(buf.starts_with(b"12 3 30 1\n"));
        let back = Hypergraph::read_edge_list(&buf[..]).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn edge_list_rejects_truncation() {
        let text = "5 3 2 0\n0 1 2\n";
        assert!(matches!(
            Hypergraph::read_edge_list(text.as_bytes()),
            Err(Error::Format(_))
        ));
    }
}
