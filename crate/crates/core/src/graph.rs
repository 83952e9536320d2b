//! Finite weighted graphs, cemetery augmentation, Laplacians, and the
//! weighted spanning-tree determinant.
//!
//! Vertices are dense indices `0..n`. When a cemetery is present it sits at
//! index `n` of the augmented vertex set.

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("weight table must be symmetric with zero diagonal")]
    BadWeights,
    #[error("graph is not connected on its positive-weight edges")]
    Disconnected,
    #[error("cemetery needs at least one positive pinning weight")]
    NoPinning,
    #[error("graph too large for brute-force enumeration (n = {0})")]
    TooLarge(usize),
    #[error("invalid graph description: {0}")]
    Parse(String),
}

/// Finite symmetric weight table over vertices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: DMatrix<f64>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut w = DMatrix::zeros(n, n);
        for &(i, j, wij) in edges {
            if i == j || i >= n || j >= n || !(wij >= 0.0) || !wij.is_finite() {
                return Err(GraphError::BadWeights);
            }
            w[(i, j)] = wij;
            w[(j, i)] = wij;
        }
        let g = Self { n, weights: w };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    /// Single vertex, no edges.
    pub fn singleton() -> Self {
        Self {
            n: 1,
            weights: DMatrix::zeros(1, 1),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Edges with positive weight, each listed once with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.weights[(i, j)] > 0.0 {
                    out.push((i, j, self.weights[(i, j)]));
                }
            }
        }
        out
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..self.n {
                if !seen[j] && self.weights[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Graph Laplacian: row sums zero, off-diagonal `-W[i][j]`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut m = -self.weights.clone();
        for i in 0..self.n {
            m[(i, i)] = (0..self.n).map(|j| self.weights[(i, j)]).sum();
        }
        m
    }
}

/// A weighted graph plus a cemetery vertex with pinning weights.
///
/// The cemetery is index `n` of the augmented set; `pinning[i]` is the weight
/// of the edge from vertex `i` to the cemetery.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    inner: WeightedGraph,
    pinning: Vec<f64>,
}

impl AugmentedGraph {
    pub fn new(inner: WeightedGraph, pinning: Vec<f64>) -> Result<Self, GraphError> {
        if pinning.len() != inner.n() || pinning.iter().any(|&h| !(h >= 0.0) || !h.is_finite()) {
            return Err(GraphError::BadWeights);
        }
        if !pinning.iter().any(|&h| h > 0.0) {
            return Err(GraphError::NoPinning);
        }
        Ok(Self { inner, pinning })
    }

    /// Constant pinning weight `h` at every vertex.
    pub fn with_mass(inner: WeightedGraph, h: f64) -> Result<Self, GraphError> {
        let n = inner.n();
        Self::new(inner, vec![h; n])
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.inner
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    /// Index of the cemetery in the augmented vertex set.
    pub fn cemetery(&self) -> usize {
        self.inner.n()
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    /// Weight in the augmented table; index `n` is the cemetery.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        match (i == n, j == n) {
            (false, false) => self.inner.weight(i, j),
            (true, false) => self.pinning[j],
            (false, true) => self.pinning[i],
            (true, true) => 0.0,
        }
    }

    /// Edges of the augmented graph, cemetery edges included.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = self.inner.edges();
        let n = self.n();
        for i in 0..n {
            if self.pinning[i] > 0.0 {
                out.push((i, n, self.pinning[i]));
            }
        }
        out
    }

    /// The augmented graph as a plain weighted graph on `n + 1` vertices.
    pub fn flatten(&self) -> WeightedGraph {
        WeightedGraph::new(self.n() + 1, &self.edges()).expect("augmented graph is connected")
    }

    /// Laplacian over the augmented vertex set; the restriction to the first
    /// `n` rows and columns equals `laplacian + diag(pinning)`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.flatten().laplacian()
    }
}

/// Sum over spanning trees of `prod W[i][j] e^{u_i + u_j}` by a Laplacian
/// cofactor (matrix-tree theorem). `delete` picks the removed row/column.
pub fn tree_determinant_at(
    g: &WeightedGraph,
    u: &[f64],
    delete: usize,
) -> Result<f64, GraphError> {
    let n = g.n();
    assert_eq!(u.len(), n);
    assert!(delete < n);
    if n == 1 {
        return Ok(1.0);
    }
    let mut lap = DMatrix::zeros(n, n);
    for (i, j, w) in g.edges() {
        let we = w * (u[i] + u[j]).exp();
        lap[(i, j)] -= we;
        lap[(j, i)] -= we;
        lap[(i, i)] += we;
        lap[(j, j)] += we;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != delete).collect();
    let minor = lap.select_rows(keep.iter()).select_columns(keep.iter());
    let det = minor.lu().determinant();
    if det <= 0.0 {
        return Err(GraphError::Disconnected);
    }
    Ok(det)
}

/// Spanning-tree determinant `D(W, u)`, cofactor at row/column 0.
pub fn tree_determinant(g: &WeightedGraph, u: &[f64]) -> Result<f64, GraphError> {
    tree_determinant_at(g, u, 0)
}

/// Exact spanning-tree sum by enumerating edge subsets. Oracle for
/// `tree_determinant`; guarded to small graphs.
pub fn spanning_tree_bruteforce(g: &WeightedGraph, u: &[f64]) -> Result<f64, GraphError> {
    let n = g.n();
    if n > 8 {
        return Err(GraphError::TooLarge(n));
    }
    if n == 1 {
        return Ok(1.0);
    }
    let edges = g.edges();
    let m = edges.len();
    let mut total = 0.0;
    // All (n-1)-subsets of edges; keep those forming a spanning tree.
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut acyclic = true;
        let mut weight = 1.0;
        for (e, &(i, j, w)) in edges.iter().enumerate() {
            if mask & (1 << e) == 0 {
                continue;
            }
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                acyclic = false;
                break;
            }
            parent[ri] = rj;
            weight *= w * (u[i] + u[j]).exp();
        }
        if acyclic {
            total += weight;
        }
    }
    if total <= 0.0 {
        return Err(GraphError::Disconnected);
    }
    Ok(total)
}

#[derive(Deserialize)]
struct GraphDoc {
    vertices: usize,
    #[serde(default)]
    edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    h: Option<f64>,
    #[serde(default)]
    cemetery_weights: Option<Vec<f64>>,
}

/// Parse a graph description from JSON:
/// `{"vertices": n, "edges": [[i,j,w],...], "h": scalar}` or
/// `{"vertices": n, "edges": [...], "cemetery_weights": [...]}`.
///
/// Returns the base graph and, when pinning data is present, the augmented
/// graph.
pub fn parse_graph_json(text: &str) -> Result<(WeightedGraph, Option<AugmentedGraph>), GraphError> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let base = if doc.vertices == 1 && doc.edges.is_empty() {
        WeightedGraph::singleton()
    } else {
        WeightedGraph::new(doc.vertices, &doc.edges)?
    };
    let aug = match (doc.h, doc.cemetery_weights) {
        (Some(_), Some(_)) => {
            return Err(GraphError::Parse(
                "give either \"h\" or \"cemetery_weights\", not both".into(),
            ))
        }
        (Some(h), None) => Some(AugmentedGraph::with_mass(base.clone(), h)?),
        (None, Some(ws)) => Some(AugmentedGraph::new(base.clone(), ws)?),
        (None, None) => None,
    };
    Ok((base, aug))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laplacian_two_vertices() {
        let g = WeightedGraph::new(2, &[(0, 1, 2.0)]).unwrap();
        let l = g.laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
    }

    #[test]
    fn laplacian_singleton() {
        let g = WeightedGraph::singleton();
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(1, 1, &[0.0]));
    }

    #[test]
    fn laplacian_triangle() {
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let l = g.laplacian();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 } else { -1.0 };
                assert_eq!(l[(i, j)], want);
            }
        }
    }

    #[test]
    fn augmented_restriction_identity() {
        // one vertex, h = 1
        let a = AugmentedGraph::with_mass(WeightedGraph::singleton(), 1.0).unwrap();
        assert_eq!(a.laplacian()[(0, 0)], 1.0);

        // two vertices, W = 1, h = 0.5
        let g = WeightedGraph::new(2, &[(0, 1, 1.0)]).unwrap();
        let a = AugmentedGraph::with_mass(g, 0.5).unwrap();
        let l = a.laplacian();
        assert_eq!(l[(0, 0)], 1.5);
        assert_eq!(l[(0, 1)], -1.0);
        assert_eq!(l[(1, 1)], 1.5);

        // random 4-vertex graph: restriction equals laplacian + diag(pinning)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let edges: Vec<(usize, usize, f64)> = vec![
            (0, 1, rng.gen_range(0.1..3.0)),
            (1, 2, rng.gen_range(0.1..3.0)),
            (2, 3, rng.gen_range(0.1..3.0)),
            (0, 3, rng.gen_range(0.1..3.0)),
        ];
        let g = WeightedGraph::new(4, &edges).unwrap();
        let pin: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0)).collect();
        let a = AugmentedGraph::new(g.clone(), pin.clone()).unwrap();
        let full = a.laplacian();
        let base = g.laplacian();
        for i in 0..4 {
            for j in 0..4 {
                let want = base[(i, j)] + if i == j { pin[i] } else { 0.0 };
                assert_relative_eq!(full[(i, j)], want, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn tree_determinant_examples() {
        let g = WeightedGraph::new(2, &[(0, 1, 2.0)]).unwrap();
        assert_relative_eq!(tree_determinant(&g, &[0.0, 0.0]).unwrap(), 2.0);

        let tri = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let brute = spanning_tree_bruteforce(&tri, &[0.0; 3]).unwrap();
        assert_relative_eq!(brute, 3.0, max_relative = 1e-12);
        assert_relative_eq!(tree_determinant(&tri, &[0.0; 3]).unwrap(), brute);

        // path a-b-c, u_b = ln 2
        let path = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let u = [0.0, 2.0f64.ln(), 0.0];
        assert_relative_eq!(tree_determinant(&path, &u).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(spanning_tree_bruteforce(&path, &u).unwrap(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn tree_determinant_matches_bruteforce_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 2..=6usize {
            for _ in 0..20 {
                // random connected graph: random spanning tree plus extras
                let mut edges = Vec::new();
                for j in 1..n {
                    let i = rng.gen_range(0..j);
                    edges.push((i, j, rng.gen_range(0.05..3.0)));
                }
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.gen_bool(0.3) && !edges.iter().any(|&(a, b, _)| (a, b) == (i, j)) {
                            edges.push((i, j, rng.gen_range(0.05..3.0)));
                        }
                    }
                }
                let g = WeightedGraph::new(n, &edges).unwrap();
                let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let fast = tree_determinant(&g, &u).unwrap();
                let brute = spanning_tree_bruteforce(&g, &u).unwrap();
                assert_relative_eq!(fast, brute, max_relative = 1e-12);
                // cofactor-choice invariance
                for d in 1..n {
                    let alt = tree_determinant_at(&g, &u, d).unwrap();
                    assert_relative_eq!(alt, brute, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn disconnected_rejected() {
        assert!(matches!(
            WeightedGraph::new(3, &[(0, 1, 1.0)]),
            Err(GraphError::Disconnected)
        ));
    }

    #[test]
    fn json_roundtrip() {
        let (g, aug) =
            parse_graph_json(r#"{"vertices": 2, "edges": [[0,1,1.0]], "h": 0.5}"#).unwrap();
        assert_eq!(g.n(), 2);
        let aug = aug.unwrap();
        assert_eq!(aug.pinning(), &[0.5, 0.5]);
        assert!(parse_graph_json(r#"{"vertices": 2}"#).is_err());
        let (_, aug) = parse_graph_json(
            r#"{"vertices": 2, "edges": [[0,1,2.0]], "cemetery_weights": [1.0, 0.0]}"#,
        )
        .unwrap();
        assert_eq!(aug.unwrap().weight(1, 2), 0.0);
    }
}
