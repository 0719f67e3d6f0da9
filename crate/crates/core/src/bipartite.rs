//! Bipartite connectivity graphs between present latents (rows/children)
//! and previous-step variables (columns/parents): actions for `M^a`,
//! past latents for `M^z`.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    /// Child count (rows).
    pub rows: usize,
    /// Parent count (columns).
    pub cols: usize,
    /// `adj[i][j] = 1` iff parent `j` points to child `i`.
    pub adj: Vec<Vec<u8>>,
}

impl BipartiteGraph {
    pub fn new(adj: Vec<Vec<u8>>) -> Result<Self> {
        let rows = adj.len();
        let cols = adj.first().map_or(0, |r| r.len());
        for (i, r) in adj.iter().enumerate() {
            if r.len() != cols {
                return Err(CoreError::Contract(format!(
                    "ragged adjacency: row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            if let Some(bad) = r.iter().find(|&&v| v > 1) {
                return Err(CoreError::Contract(format!("adjacency entry {bad} is not 0/1")));
            }
        }
        Ok(BipartiteGraph { rows, cols, adj })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        BipartiteGraph { rows, cols, adj: vec![vec![0; cols]; rows] }
    }

    pub fn identity(n: usize) -> Self {
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            g.adj[i][i] = 1;
        }
        g
    }

    pub fn complete(rows: usize, cols: usize) -> Self {
        BipartiteGraph { rows, cols, adj: vec![vec![1; cols]; rows] }
    }

    pub fn has_edge(&self, child: usize, parent: usize) -> bool {
        self.adj[child][parent] == 1
    }

    /// Parents of child `i`: the support of row `i`.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.cols).filter(|&j| self.adj[i][j] == 1).collect()
    }

    /// Children of parent `j`: the support of column `j`.
    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.adj[i][j] == 1).collect()
    }

    /// Edge set as (child, parent) pairs in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.adj[i][j] == 1 {
                    e.push((i, j));
                }
            }
        }
        e
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().flatten().filter(|&&v| v == 1).count()
    }
}
