//! Per-omics sample-similarity graphs: cosine similarity thresholded at δ.

use crate::data::OmicsMatrix;
use crate::error::GraphError;

type Result<T> = std::result::Result<T, GraphError>;

/// Binary symmetric edge matrix over samples. The diagonal is always set:
/// a sample's self-similarity is 1, which clears any threshold δ ≤ 1, and
/// attention needs the self edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGraph {
    n: usize,
    adj: Vec<bool>, // n×n row-major
}

/// Threshold configuration; the similarity cut δ defaults to 0.05.
#[derive(Debug, Clone, Copy)]
pub struct GraphConfig {
    pub threshold: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { threshold: 0.05 }
    }
}

impl SampleGraph {
    pub fn from_adjacency(n: usize, adj: Vec<bool>) -> Self {
        assert_eq!(adj.len(), n * n);
        Self { n, adj }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Row-major adjacency mask, usable directly by masked softmax.
    pub fn mask(&self) -> &[bool] {
        &self.adj
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.adj[i * self.n + j]).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }
}

/// Cosine similarity of two nonzero vectors, in [−1, 1].
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GraphError::LengthMismatch(x.len(), y.len()));
    }
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Err(GraphError::ZeroVector);
    }
    Ok(dot / (nx.sqrt() * ny.sqrt()))
}

/// Builds the thresholded similarity graph: an edge where cosine ≥ δ,
/// symmetric, diagonal set.
pub fn build_graph(matrix: &OmicsMatrix, config: &GraphConfig) -> Result<SampleGraph> {
    let n = matrix.n_samples();
    check_nonzero_rows(matrix)?;
    let mut adj = vec![false; n * n];
    for i in 0..n {
        adj[i * n + i] = true;
        for j in (i + 1)..n {
            let s = cosine_similarity(matrix.row(i), matrix.row(j))?;
            if s >= config.threshold {
                adj[i * n + j] = true;
                adj[j * n + i] = true;
            }
        }
    }
    Ok(SampleGraph { n, adj })
}

/// Inductive-mode graph over all samples: train–train edges as usual, test
/// nodes attach to train nodes by the same threshold, and test–test edges are
/// excluded so no test sample influences another.
pub fn build_graph_inductive(
    matrix: &OmicsMatrix,
    train: &[usize],
    config: &GraphConfig,
) -> Result<SampleGraph> {
    let n = matrix.n_samples();
    check_nonzero_rows(matrix)?;
    let mut is_train = vec![false; n];
    for &i in train {
        is_train[i] = true;
    }
    let mut adj = vec![false; n * n];
    for i in 0..n {
        adj[i * n + i] = true;
        for j in (i + 1)..n {
            if !is_train[i] && !is_train[j] {
                continue;
            }
            let s = cosine_similarity(matrix.row(i), matrix.row(j))?;
            if s >= config.threshold {
                adj[i * n + j] = true;
                adj[j * n + i] = true;
            }
        }
    }
    Ok(SampleGraph { n, adj })
}

fn check_nonzero_rows(matrix: &OmicsMatrix) -> Result<()> {
    for i in 0..matrix.n_samples() {
        if matrix.row(i).iter().all(|&v| v == 0.0) {
            return Err(GraphError::ZeroSampleVector {
                id: matrix.sample_ids[i].clone(),
            });
        }
    }
    Ok(())
}
