//! Sensor-network graphs and combination weights.
//!
//! Nodes are 0-based in memory and 1-based in the edge-list file format.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::ModelError;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Undirected connected graph with self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    n_nodes: usize,
    adjacency: Vec<bool>,
    neighborhoods: Vec<Vec<usize>>,
}

impl NetworkTopology {
    /// Builds a topology from undirected edges (0-based). Self-loops are
    /// added automatically; duplicate and reversed edges are merged.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, ModelError> {
        if n_nodes == 0 {
            return Err(ModelError::invalid("n_nodes", "must be positive"));
        }
        let mut adjacency = vec![false; n_nodes * n_nodes];
        for k in 0..n_nodes {
            adjacency[k * n_nodes + k] = true;
        }
        for &(l, k) in edges {
            if l >= n_nodes || k >= n_nodes {
                return Err(ModelError::Topology(format!(
                    "edge ({}, {}) references a node outside 1..={n_nodes}",
                    l + 1,
                    k + 1
                )));
            }
            adjacency[l * n_nodes + k] = true;
            adjacency[k * n_nodes + l] = true;
        }
        let topo = Self::from_adjacency_unchecked(n_nodes, adjacency);
        if !topo.is_connected() {
            return Err(ModelError::Connectivity {
                n_nodes,
                attempts: 1,
            });
        }
        Ok(topo)
    }

    fn from_adjacency_unchecked(n_nodes: usize, adjacency: Vec<bool>) -> Self {
        let neighborhoods = (0..n_nodes)
            .map(|k| {
                (0..n_nodes)
                    .filter(|&l| adjacency[l * n_nodes + k])
                    .collect()
            })
            .collect();
        NetworkTopology {
            n_nodes,
            adjacency,
            neighborhoods,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn is_adjacent(&self, l: usize, k: usize) -> bool {
        self.adjacency[l * self.n_nodes + k]
    }

    /// Sorted neighborhood of `k`, including `k` itself.
    pub fn neighborhood(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    pub fn neighborhoods(&self) -> &[Vec<usize>] {
        &self.neighborhoods
    }

    /// Neighbor count excluding self.
    pub fn degree(&self, k: usize) -> usize {
        self.neighborhoods[k].len() - 1
    }

    pub fn mean_degree(&self) -> f64 {
        (0..self.n_nodes).map(|k| self.degree(k)).sum::<usize>() as f64 / self.n_nodes as f64
    }

    /// Undirected edges `(l, k)` with `l < k`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for l in 0..self.n_nodes {
            for k in l + 1..self.n_nodes {
                if self.is_adjacent(l, k) {
                    out.push((l, k));
                }
            }
        }
        out
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighborhoods[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_nodes
    }

    /// Writes the edge-list format: a `# n_nodes N` header followed by one
    /// 1-based `l k` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# n_nodes {}", self.n_nodes)?;
        for (l, k) in self.edges() {
            writeln!(w, "{} {}", l + 1, k + 1)?;
        }
        Ok(())
    }

    /// Parses the edge-list format. Without a header the node count is the
    /// largest index seen.
    pub fn read_edge_list<R: BufRead>(r: R) -> Result<Self, ModelError> {
        let mut n_header = None;
        let mut edges = Vec::new();
        let mut max_idx = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ModelError::Topology(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                if parts.next() == Some("n_nodes") {
                    let n = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| {
                            ModelError::Topology(format!("line {}: bad n_nodes header", lineno + 1))
                        })?;
                    n_header = Some(n);
                }
                continue;
            }
            let parse = |s: Option<&str>| -> Result<usize, ModelError> {
                s.and_then(|s| s.parse::<usize>().ok())
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| {
                        ModelError::Topology(format!(
                            "line {}: expected two 1-based node indices, got `{line}`",
                            lineno + 1
                        ))
                    })
            };
            let mut parts = line.split_whitespace();
            let l = parse(parts.next())?;
            let k = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(ModelError::Topology(format!(
                    "line {}: trailing fields",
                    lineno + 1
                )));
            }
            max_idx = max_idx.max(l).max(k);
            edges.push((l - 1, k - 1));
        }
        let n = n_header.unwrap_or(max_idx);
        Self::from_edges(n, &edges)
    }
}

impl fmt::Display for NetworkTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} nodes, {} edges, mean degree {:.2}",
            self.n_nodes,
            self.edges().len(),
            self.mean_degree()
        )
    }
}

const MAX_ATTEMPTS: usize = 64;

/// Random connected graph: a random spanning tree plus uniformly chosen extra
/// edges until the mean degree (excluding self) reaches `target_degree`.
pub fn build_random_topology(
    n_nodes: usize,
    target_degree: usize,
    seed: u64,
) -> Result<NetworkTopology, ModelError> {
    if n_nodes == 0 {
        return Err(ModelError::invalid("n_nodes", "must be positive"));
    }
    if n_nodes == 1 {
        return NetworkTopology::from_edges(1, &[]);
    }
    if target_degree == 0 || target_degree >= n_nodes {
        return Err(ModelError::invalid(
            "target_degree",
            format!("must satisfy 1 <= degree < n_nodes ({n_nodes}), got {target_degree}"),
        ));
    }
    let max_edges = n_nodes * (n_nodes - 1) / 2;
    let target_edges = (n_nodes * target_degree)
        .div_ceil(2)
        .clamp(n_nodes - 1, max_edges);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    for _ in 0..MAX_ATTEMPTS {
        let mut order: Vec<usize> = (0..n_nodes).collect();
        order.shuffle(&mut rng);
        let mut adjacency = vec![false; n_nodes * n_nodes];
        let link = |a: &mut Vec<bool>, l: usize, k: usize| {
            a[l * n_nodes + k] = true;
            a[k * n_nodes + l] = true;
        };
        for k in 0..n_nodes {
            link(&mut adjacency, k, k);
        }
        for i in 1..n_nodes {
            let parent = order[rng.random_range(0..i)];
            link(&mut adjacency, order[i], parent);
        }
        let mut candidates: Vec<(usize, usize)> = (0..n_nodes)
            .flat_map(|l| (l + 1..n_nodes).map(move |k| (l, k)))
            .filter(|&(l, k)| !adjacency[l * n_nodes + k])
            .collect();
        candidates.shuffle(&mut rng);
        for &(l, k) in candidates.iter().take(target_edges - (n_nodes - 1)) {
            link(&mut adjacency, l, k);
        }
        let topo = NetworkTopology::from_adjacency_unchecked(n_nodes, adjacency);
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(ModelError::Connectivity {
        n_nodes,
        attempts: MAX_ATTEMPTS,
    })
}

/// Combination weights `a[l][k]` (combination step) and `c[l][k]`
/// (adaptation step); column `k` holds the weights node `k` applies.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrices<T> {
    pub a: Matrix<T>,
    pub c: Matrix<T>,
}

impl<T: Real> CombinationMatrices<T> {
    pub fn n_nodes(&self) -> usize {
        self.a.rows()
    }

    pub fn cast<U: Real>(&self) -> CombinationMatrices<U> {
        CombinationMatrices {
            a: self.a.cast(),
            c: self.c.cast(),
        }
    }
}

/// Uniform policy: every neighbor of `k` (itself included) gets `1/|N_k|`.
pub fn uniform_weights<T: Real>(topology: &NetworkTopology) -> CombinationMatrices<T> {
    let n = topology.n_nodes();
    let mut a = Matrix::zeros(n, n);
    for k in 0..n {
        let nb = topology.neighborhood(k);
        let w = T::one() / T::lit(nb.len() as f64);
        for &l in nb {
            a[(l, k)] = w;
        }
    }
    CombinationMatrices { c: a.clone(), a }
}

/// Which of the two weight matrices an issue refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMatrix {
    A,
    C,
}

impl fmt::Display for WeightMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMatrix::A => "a",
            WeightMatrix::C => "c",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    DimensionMismatch {
        matrix: WeightMatrix,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    Negative {
        matrix: WeightMatrix,
        l: usize,
        k: usize,
        value: f64,
    },
    OffSupport {
        matrix: WeightMatrix,
        l: usize,
        k: usize,
        value: f64,
    },
    ColumnSum {
        matrix: WeightMatrix,
        k: usize,
        sum: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::DimensionMismatch {
                matrix,
                rows,
                cols,
                expected,
            } => write!(
                f,
                "{matrix}: shape {rows}x{cols}, expected {expected}x{expected}"
            ),
            ValidationIssue::Negative {
                matrix,
                l,
                k,
                value,
            } => {
                write!(f, "{matrix}[{}][{}] = {value} is negative", l + 1, k + 1)
            }
            ValidationIssue::OffSupport {
                matrix,
                l,
                k,
                value,
            } => write!(
                f,
                "{matrix}[{}][{}] = {value} but {} is not a neighbor of {}",
                l + 1,
                k + 1,
                l + 1,
                k + 1
            ),
            ValidationIssue::ColumnSum { matrix, k, sum } => {
                write!(f, "column {} of {matrix} sums to {sum}", k + 1)
            }
        }
    }
}

/// Every invariant violation found; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

const COLUMN_SUM_TOL: f64 = 1e-12;

pub fn validate<T: Real>(
    matrices: &CombinationMatrices<T>,
    topology: &NetworkTopology,
) -> ValidationReport {
    let n = topology.n_nodes();
    let mut issues = Vec::new();
    for (which, m) in [
        (WeightMatrix::A, &matrices.a),
        (WeightMatrix::C, &matrices.c),
    ] {
        if m.rows() != n || m.cols() != n {
            issues.push(ValidationIssue::DimensionMismatch {
                matrix: which,
                rows: m.rows(),
                cols: m.cols(),
                expected: n,
            });
            continue;
        }
        for k in 0..n {
            let mut sum = 0.0;
            for l in 0..n {
                let v = m[(l, k)].to_f64_lossy();
                if v < 0.0 {
                    issues.push(ValidationIssue::Negative {
                        matrix: which,
                        l,
                        k,
                        value: v,
                    });
                }
                if v != 0.0 && !topology.is_adjacent(l, k) {
                    issues.push(ValidationIssue::OffSupport {
                        matrix: which,
                        l,
                        k,
                        value: v,
                    });
                }
                sum += v;
            }
            if !((sum - 1.0).abs() <= COLUMN_SUM_TOL) {
                issues.push(ValidationIssue::ColumnSum {
                    matrix: which,
                    k,
                    sum,
                });
            }
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_clamps_degree() {
        let t = build_random_topology(1, 99, 7).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.neighborhood(0), &[0]);
    }

    #[test]
    fn two_nodes_are_adjacent() {
        let t = build_random_topology(2, 1, 0).unwrap();
        assert_eq!(t.neighborhood(0), &[0, 1]);
        assert_eq!(t.neighborhood(1), &[0, 1]);
    }

    #[test]
    fn sixteen_nodes_connected() {
        let t = build_random_topology(16, 4, 42).unwrap();
        assert!(t.is_connected());
        assert!((0..16).all(|k| t.neighborhood(k).len() >= 2));
        assert!((t.mean_degree() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_random_topology(0, 1, 0).is_err());
        assert!(build_random_topology(5, 5, 0).is_err());
        assert!(build_random_topology(5, 0, 0).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let a = build_random_topology(12, 3, 99).unwrap();
        let b = build_random_topology(12, 3, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_weights_values() {
        let t = build_random_topology(16, 4, 42).unwrap();
        let w = uniform_weights::<f64>(&t);
        for k in 0..16 {
            let nb = t.neighborhood(k);
            for &l in nb {
                assert_eq!(w.a[(l, k)], 1.0 / nb.len() as f64);
            }
        }
        assert!(validate(&w, &t).is_valid());

        let single = build_random_topology(1, 1, 0).unwrap();
        assert_eq!(uniform_weights::<f64>(&single).a[(0, 0)], 1.0);

        let star = NetworkTopology::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let ws = uniform_weights::<f64>(&star);
        assert!((0..4).all(|l| ws.c[(l, 0)] == 0.25));
    }

    #[test]
    fn validate_reports_negative_entry() {
        let t = build_random_topology(6, 2, 1).unwrap();
        let mut w = uniform_weights::<f64>(&t);
        let l = t.neighborhood(3)[0];
        w.a[(l, 3)] = -0.1;
        let r = validate(&w, &t);
        assert!(r.issues.iter().any(|i| matches!(i,
            ValidationIssue::Negative { matrix: WeightMatrix::A, l: ll, k: 3, .. } if *ll == l)));
    }

    #[test]
    fn validate_reports_column_sum() {
        let t = NetworkTopology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut w = uniform_weights::<f64>(&t);
        // column 0 has support {0, 1}: 0.5 + 0.4 = 0.9
        w.c[(1, 0)] = 0.4;
        let r = validate(&w, &t);
        assert_eq!(
            r.issues,
            vec![ValidationIssue::ColumnSum {
                matrix: WeightMatrix::C,
                k: 0,
                sum: 0.9
            }]
        );
    }

    #[test]
    fn validate_reports_off_support() {
        let t = NetworkTopology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut w = uniform_weights::<f64>(&t);
        w.a[(2, 0)] = 0.25;
        w.a[(0, 0)] = 0.25;
        let r = validate(&w, &t);
        assert!(r
            .issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::OffSupport { l: 2, k: 0, .. })));
    }

    #[test]
    fn validate_reports_dimension_mismatch() {
        let t = NetworkTopology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut w = uniform_weights::<f64>(&t);
        w.a = Matrix::identity(2);
        assert!(matches!(
            validate(&w, &t).issues[0],
            ValidationIssue::DimensionMismatch { expected: 3, .. }
        ));
    }

    #[test]
    fn edge_list_roundtrip() {
        let t = build_random_topology(10, 3, 5).unwrap();
        let mut buf = Vec::new();
        t.write_edge_list(&mut buf).unwrap();
        let back = NetworkTopology::read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn edge_list_rejects_disconnected_and_garbage() {
        let disconnected = "# n_nodes 4\n1 2\n3 4\n";
        assert!(matches!(
            NetworkTopology::read_edge_list(disconnected.as_bytes()),
            Err(ModelError::Connectivity { .. })
        ));
        assert!(NetworkTopology::read_edge_list("1 x\n".as_bytes()).is_err());
        assert!(NetworkTopology::read_edge_list("0 1\n".as_bytes()).is_err());
    }
}
