//! Undirected communication graphs and their Laplacians.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    IndexOutOfRange(usize, usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("graph not connected")]
    NotConnected,
}

/// Named topologies that can be declared in a scenario instead of an edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Ring,
    Complete,
    Path,
}

impl Topology {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ring" => Some(Self::Ring),
            "complete" => Some(Self::Complete),
            "path" => Some(Self::Path),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ring => "ring",
            Self::Complete => "complete",
            Self::Path => "path",
        }
    }

    /// Edge list of this topology on `n` nodes.
    ///
    /// A ring on two nodes collapses to a single edge; on one node it is empty.
    pub fn edges(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            Self::Ring if n >= 3 => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            Self::Ring | Self::Path => (1..n).map(|i| (i - 1, i)).collect(),
            Self::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
        }
    }
}

/// Undirected simple graph on nodes `0..n`.
///
/// Edges are stored as ordered pairs `(i, j)` with `i < j`, so adjacency is
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::IndexOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &set {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            neighbors,
        })
    }

    pub fn from_topology(topology: Topology, n: usize) -> Result<Self, GraphError> {
        Self::new(n, &topology.edges(n))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// `L = D̄ − A`, with `D̄` the diagonal degree matrix.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.adjacency();
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as f64;
        }
        l
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == self.n
    }

    pub fn ensure_connected(&self) -> Result<(), GraphError> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(GraphError::NotConnected)
        }
    }

    /// Ascending eigenvalues of the Laplacian.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut values: Vec<f64> = SymmetricEigen::new(self.laplacian())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Algebraic connectivity: the second-smallest Laplacian eigenvalue.
    ///
    /// A single-node graph has no second eigenvalue; it is reported as 0.
    pub fn fiedler_value(&self) -> Result<f64, GraphError> {
        self.ensure_connected()?;
        Ok(self.laplacian_spectrum().get(1).copied().unwrap_or(0.0))
    }
}
