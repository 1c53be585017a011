//! Coupled canonical-system networks: coupling graphs, block Laplacians,
//! heterogeneous parameters, and sparse inhibition.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;
use crate::linalg::{symmetric_part, sym_eigenvalues_desc};

mod coupled;
mod inhibition;

pub use coupled::{
    coupled_canonical_field, sync_error, CoupledCanonicalField, CpgNetworkField,
    HeterogeneousParams,
};
pub use inhibition::{
    check_sparse_inhibition_support, inhibition_threshold_estimate, weighted_inhibition_field,
    InhibitionRule, WeightedInhibitionField,
};

/// Whether edges are bidirectional with per-edge gains, or directional with
/// one shared symmetric gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// `K_ij = K_ji` with `(K_ij)_s > 0`; edges act on both endpoints.
    Symmetric,
    /// Each edge `(i, j)` means node `i` listens to node `j`; all edges share
    /// one gain `K = Kᵀ > 0`.
    Directed,
}

/// One coupling edge. In symmetric mode the stored orientation is `i < j`
/// and the phase offset obeys `φ_ji = -φ_ij`.
#[derive(Debug, Clone)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub gain: DMatrix<f64>,
    pub phase_offset: f64,
}

/// A coupling graph over `N` nodes of a common state dimension.
#[derive(Debug, Clone)]
pub struct CouplingGraph {
    n_nodes: usize,
    node_dim: usize,
    mode: CouplingMode,
    edges: Vec<Edge>,
}

impl CouplingGraph {
    /// Builds a symmetric-mode graph. Edges may be listed in either
    /// orientation; listing both orientations of one edge requires equal
    /// gains and negated offsets, otherwise validation fails.
    pub fn symmetric(
        n_nodes: usize,
        node_dim: usize,
        edges: Vec<Edge>,
    ) -> Result<Self, CoreError> {
        if n_nodes == 0 || node_dim == 0 {
            return Err(CoreError::InvalidParameter(
                "graph needs at least one node and a positive node dimension".into(),
            ));
        }
        let mut normalized: Vec<Edge> = Vec::new();
        for e in edges {
            if e.i >= n_nodes || e.j >= n_nodes || e.i == e.j {
                return Err(CoreError::InvalidParameter(format!(
                    "edge ({}, {}) is out of range or a self-loop",
                    e.i, e.j
                )));
            }
            if e.gain.nrows() != node_dim || e.gain.ncols() != node_dim {
                return Err(CoreError::DimensionMismatch(format!(
                    "edge ({}, {}) gain is {}x{}, expected {node_dim}x{node_dim}",
                    e.i,
                    e.j,
                    e.gain.nrows(),
                    e.gain.ncols()
                )));
            }
            let gain_s = symmetric_part(&e.gain);
            let min_eig = *sym_eigenvalues_desc(&gain_s).last().unwrap();
            if !(min_eig > 0.0) {
                return Err(CoreError::InvalidParameter(format!(
                    "edge ({}, {}): symmetric part of the gain is not positive definite",
                    e.i, e.j
                )));
            }
            let (i, j, gain, phase) = if e.i < e.j {
                (e.i, e.j, e.gain, e.phase_offset)
            } else {
                (e.j, e.i, e.gain, -e.phase_offset)
            };
            if let Some(existing) = normalized.iter().find(|x| x.i == i && x.j == j) {
                let same_gain = (&existing.gain - &gain).amax() == 0.0;
                let same_phase = (existing.phase_offset - phase).abs() < 1e-15;
                if !same_gain || !same_phase {
                    return Err(CoreError::InvalidParameter(format!(
                        "edge ({i}, {j}) listed twice with asymmetric gain or offset"
                    )));
                }
                continue;
            }
            normalized.push(Edge {
                i,
                j,
                gain,
                phase_offset: phase,
            });
        }
        Ok(Self {
            n_nodes,
            node_dim,
            mode: CouplingMode::Symmetric,
            edges: normalized,
        })
    }

    /// Directed graph with one shared gain `K = Kᵀ > 0`. Edge `(i, j)`
    /// couples `K (x_j - x_i)` into node `i` only.
    pub fn directed(
        n_nodes: usize,
        node_dim: usize,
        gain: DMatrix<f64>,
        listens: Vec<(usize, usize)>,
    ) -> Result<Self, CoreError> {
        if gain.nrows() != node_dim || gain.ncols() != node_dim {
            return Err(CoreError::DimensionMismatch(
                "shared gain does not match the node dimension".into(),
            ));
        }
        if (&gain - gain.transpose()).amax() > 1e-12 * (1.0 + gain.amax()) {
            return Err(CoreError::InvalidParameter(
                "directed mode requires a symmetric shared gain".into(),
            ));
        }
        let min_eig = *sym_eigenvalues_desc(&gain).last().unwrap();
        if !(min_eig > 0.0) {
            return Err(CoreError::InvalidParameter(
                "directed mode requires a positive definite shared gain".into(),
            ));
        }
        let mut edges = Vec::new();
        for (i, j) in listens {
            if i >= n_nodes || j >= n_nodes || i == j {
                return Err(CoreError::InvalidParameter(format!(
                    "edge ({i}, {j}) is out of range or a self-loop"
                )));
            }
            edges.push(Edge {
                i,
                j,
                gain: gain.clone(),
                phase_offset: 0.0,
            });
        }
        Ok(Self {
            n_nodes,
            node_dim,
            mode: CouplingMode::Directed,
            edges,
        })
    }

    /// All-to-all symmetric coupling with one shared gain and zero offsets.
    pub fn all_to_all(n_nodes: usize, gain: DMatrix<f64>) -> Result<Self, CoreError> {
        let node_dim = gain.nrows();
        let mut edges = Vec::new();
        for i in 0..n_nodes {
            for j in (i + 1)..n_nodes {
                edges.push(Edge {
                    i,
                    j,
                    gain: gain.clone(),
                    phase_offset: 0.0,
                });
            }
        }
        Self::symmetric(n_nodes, node_dim, edges)
    }

    /// All-to-all coupling with offsets derived from absolute node phases:
    /// `φ_ij = ψ_j - ψ_i`.
    pub fn all_to_all_with_phases(
        n_nodes: usize,
        gain: DMatrix<f64>,
        node_phases: &[f64],
    ) -> Result<Self, CoreError> {
        if node_phases.len() != n_nodes {
            return Err(CoreError::DimensionMismatch(
                "one phase per node required".into(),
            ));
        }
        let node_dim = gain.nrows();
        let mut edges = Vec::new();
        for i in 0..n_nodes {
            for j in (i + 1)..n_nodes {
                edges.push(Edge {
                    i,
                    j,
                    gain: gain.clone(),
                    phase_offset: node_phases[j] - node_phases[i],
                });
            }
        }
        Self::symmetric(n_nodes, node_dim, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_phase_offsets(&self) -> bool {
        self.edges.iter().any(|e| e.phase_offset != 0.0)
    }

    /// Connectivity of the underlying undirected graph.
    pub fn connected(&self) -> bool {
        if self.n_nodes == 1 {
            return true;
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for e in &self.edges {
                for (a, b) in [(e.i, e.j), (e.j, e.i)] {
                    if a == u && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Whether every node is reachable from `source` along influence edges.
    /// Edge `(i, j)` means `i` listens to `j`, so influence flows `j → i`.
    pub fn all_reachable_from(&self, source: usize) -> bool {
        if source >= self.n_nodes {
            return false;
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![source];
        seen[source] = true;
        while let Some(u) = stack.pop() {
            for e in &self.edges {
                let influenced = match self.mode {
                    CouplingMode::Directed => {
                        if e.j == u {
                            Some(e.i)
                        } else {
                            None
                        }
                    }
                    CouplingMode::Symmetric => {
                        if e.j == u {
                            Some(e.i)
                        } else if e.i == u {
                            Some(e.j)
                        } else {
                            None
                        }
                    }
                };
                if let Some(v) = influenced {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// The assembled block Laplacian `L` with its symmetric part `L_K`,
/// spectrum, and a sync-complement basis.
#[derive(Debug, Clone)]
pub struct BlockLaplacian {
    n_nodes: usize,
    node_dim: usize,
    matrix: DMatrix<f64>,
    sym: DMatrix<f64>,
    eigenvalues_desc: Vec<f64>,
    sync_complement: DMatrix<f64>,
    connected: bool,
}

/// Assembles the block Laplacian of a coupling graph, so that the coupled
/// dynamics read `ẋ = F_x(x) - Lx` (zero phase offsets). Eigenvalues of the
/// symmetric part are reported in non-increasing order.
pub fn assemble_block_laplacian(graph: &CouplingGraph) -> Result<BlockLaplacian, CoreError> {
    let n = graph.node_dim;
    let nn = graph.n_nodes * n;
    let mut l = DMatrix::zeros(nn, nn);
    let mut add_block = |row: usize, col: usize, m: &DMatrix<f64>, sign: f64| {
        for p in 0..n {
            for q in 0..n {
                l[(row * n + p, col * n + q)] += sign * m[(p, q)];
            }
        }
    };
    for e in &graph.edges {
        match graph.mode {
            CouplingMode::Symmetric => {
                add_block(e.i, e.i, &e.gain, 1.0);
                add_block(e.i, e.j, &e.gain, -1.0);
                add_block(e.j, e.j, &e.gain, 1.0);
                add_block(e.j, e.i, &e.gain, -1.0);
            }
            CouplingMode::Directed => {
                add_block(e.i, e.i, &e.gain, 1.0);
                add_block(e.i, e.j, &e.gain, -1.0);
            }
        }
    }
    let sym = symmetric_part(&l);
    let eigenvalues_desc = sym_eigenvalues_desc(&sym);
    let sync_complement = sync_complement_basis(graph.n_nodes, n);
    Ok(BlockLaplacian {
        n_nodes: graph.n_nodes,
        node_dim: n,
        matrix: l,
        sym,
        eigenvalues_desc,
        sync_complement,
        connected: graph.connected(),
    })
}

/// Orthonormal rows spanning the complement of the synchronization subspace
/// `{1 ⊗ v}` in `R^{nN}`, built by Gram-Schmidt over the standard basis.
fn sync_complement_basis(n_nodes: usize, node_dim: usize) -> DMatrix<f64> {
    let nn = n_nodes * node_dim;
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(nn - node_dim);
    let mut sync: Vec<DVector<f64>> = Vec::with_capacity(node_dim);
    for k in 0..node_dim {
        let mut v = DVector::zeros(nn);
        for i in 0..n_nodes {
            v[i * node_dim + k] = 1.0;
        }
        sync.push(v / (n_nodes as f64).sqrt());
    }
    for idx in 0..nn {
        let mut v = DVector::zeros(nn);
        v[idx] = 1.0;
        for s in &sync {
            let c = s.dot(&v);
            v -= s * c;
        }
        for r in &rows {
            let c = r.dot(&v);
            v -= r * c;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            rows.push(v / norm);
        }
        if rows.len() == nn - node_dim {
            break;
        }
    }
    let mut m = DMatrix::zeros(rows.len(), nn);
    for (r, row) in rows.iter().enumerate() {
        for c in 0..nn {
            m[(r, c)] = row[c];
        }
    }
    m
}

impl BlockLaplacian {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Symmetric part `L_K`.
    pub fn sym(&self) -> &DMatrix<f64> {
        &self.sym
    }

    /// Eigenvalues of `L_K` in non-increasing order.
    pub fn eigenvalues_desc(&self) -> &[f64] {
        &self.eigenvalues_desc
    }

    /// `λ_k(L_K)` with 1-based `k` and non-increasing ordering.
    pub fn eigenvalue_desc(&self, k: usize) -> Result<f64, CoreError> {
        if k == 0 || k > self.eigenvalues_desc.len() {
            return Err(CoreError::InvalidParameter(format!(
                "eigenvalue index {k} out of range 1..={}",
                self.eigenvalues_desc.len()
            )));
        }
        Ok(self.eigenvalues_desc[k - 1])
    }

    /// Number of eigenvalues below `tol` relative to the largest.
    pub fn kernel_dim(&self, tol: f64) -> usize {
        let scale = self.eigenvalues_desc.first().copied().unwrap_or(0.0).max(1.0);
        self.eigenvalues_desc
            .iter()
            .filter(|&&v| v.abs() <= tol * scale)
            .count()
    }

    pub fn connected(&self) -> bool {
        self.connected
    }

    /// Orthonormal sync-complement basis `V` (rows).
    pub fn sync_complement(&self) -> &DMatrix<f64> {
        &self.sync_complement
    }

    /// `V L_K Vᵀ`: the Laplacian restricted to the sync complement.
    pub fn projected_sym(&self) -> DMatrix<f64> {
        &self.sync_complement * &self.sym * self.sync_complement.transpose()
    }
}
