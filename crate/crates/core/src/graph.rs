//! Processor graphs, their unweighted Laplacians and spectral bounds.
//!
//! A [`Graph`] is undirected, simple and connected. Random instances come
//! from [`generate_random_graph`], which draws a uniform random spanning tree
//! (Aldous–Broder walk on the complete graph) and then adds the remaining
//! edges uniformly without replacement, so every draw is connected.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected, connected, simple graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    seed: Option<u64>,
}

/// On-disk form: `{"n": .., "edges": [[i, j], ..], "seed": ..}` with `i < j`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    seed: Option<u64>,
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        let edges = file.edges.into_iter().map(|[i, j]| (i, j)).collect();
        let mut g = Graph::new(file.n, edges)?;
        g.seed = file.seed;
        Ok(g)
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        GraphFile {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            seed: g.seed,
        }
    }
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicates,
    /// out-of-range endpoints and disconnected inputs.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range for n={n}")));
            }
            let e = (i.min(j), i.max(j));
            if !set.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({},{})", e.0, e.1)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        let g = Graph { n, edges, adjacency, seed: None };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect())
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::new(n, edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((0, n - 1));
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Parent pointers of a BFS tree rooted at 0 (`None` for the root).
    pub fn bfs_tree(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.n];
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Draws a connected graph with exactly `n` nodes and `m` edges.
///
/// Deterministic for a fixed `seed`.
pub fn generate_random_graph(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Config(format!("random graph needs n >= 2, got {n}")));
    }
    let max_edges = n * (n - 1) / 2;
    if m < n - 1 || m > max_edges {
        return Err(Error::Config(format!(
            "edge count {m} infeasible for {n} nodes (need {} <= m <= {max_edges})",
            n - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Aldous-Broder on K_n: the first-entry edges of a random walk form a
    // uniform spanning tree.
    let mut tree = BTreeSet::new();
    let mut visited = vec![false; n];
    let mut current = rng.random_range(0..n);
    visited[current] = true;
    let mut remaining = n - 1;
    while remaining > 0 {
        let mut next = rng.random_range(0..n - 1);
        if next >= current {
            next += 1;
        }
        if !visited[next] {
            visited[next] = true;
            tree.insert((current.min(next), current.max(next)));
            remaining -= 1;
        }
        current = next;
    }

    let extra = m - (n - 1);
    let mut edges: Vec<_> = tree.iter().copied().collect();
    if extra > 0 {
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !tree.contains(e))
            .collect();
        let mut picked = index::sample(&mut rng, candidates.len(), extra).into_vec();
        picked.sort_unstable();
        edges.extend(picked.into_iter().map(|k| candidates[k]));
    }
    let mut g = Graph::new(n, edges)?;
    g.seed = Some(seed);
    Ok(g)
}

/// Dense unweighted graph Laplacian `L = diag(d) - A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Quadratic form `xᵀ L x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }
}

pub fn laplacian(g: &Graph) -> Laplacian {
    let n = g.n();
    let mut matrix = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        matrix[(i, j)] = -1.0;
        matrix[(j, i)] = -1.0;
        matrix[(i, i)] += 1.0;
        matrix[(j, j)] += 1.0;
    }
    Laplacian { matrix }
}

/// Algebraic connectivity and spectral radius of a Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    pub mu2: f64,
    pub mu_n: f64,
}

impl SpectralInfo {
    /// `mu_n / mu2`, the condition number of `L` restricted to `1⊥`.
    pub fn condition(&self) -> f64 {
        self.mu_n / self.mu2
    }
}

pub fn spectral_info(l: &Laplacian) -> Result<SpectralInfo> {
    let eig = SymmetricEigen::new(l.matrix.clone());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let mu_n = *values.last().expect("non-empty Laplacian");
    let mu2 = values[1];
    if mu2 <= 1e-9 * mu_n.max(1.0) {
        return Err(Error::Disconnected { mu2 });
    }
    Ok(SpectralInfo { mu2, mu_n })
}
