//! The thin branched strip `X_eps`: width-`eps` rectangles along the edges,
//! glued to `eps`-scaled plus-shaped vertex blocks, with its Neumann
//! Laplacian, the identification with the metric graph, and the
//! convergence sweep.
//!
//! Tubes keep their full length `l_e`; the blocks are attached at the tube
//! ends and share the end cross-section nodes. Every cell has transverse
//! side `h_b = eps / (n_t - 1)`, and the longitudinal step is the same `h_b`
//! rounded per edge, so cells are nearly square for every `eps`.

mod block;
mod checks;
mod pair;
mod sweep;

pub use block::{PlusBlock, MAX_DEGREE, SLOTS};
pub use checks::{minmax_check, trace_constant_check, MinMaxReport, TraceReport};
pub use pair::{
    ab_operators, build_identification, defect_norm, que_2_defect, AbReport, FatPair,
};
pub use sweep::{fit_slope, run_sweep, SweepOptions, SweepResult, SweepRow};

use crate::error::{Error, Result};
use crate::linalg::{check_weights, CsrMatrix};
use crate::metric_graph::{edge_steps, MetricGraph};
use crate::operators::Resolvent;
use block::add_cell;

/// Discretised Neumann Laplacian on the fattened graph.
#[derive(Debug, Clone)]
pub struct FatGraphModel {
    graph: MetricGraph,
    eps: f64,
    n_t: usize,
    hb: f64,
    steps: Vec<usize>,
    blocks: Vec<PlusBlock>,
    block_offset: Vec<usize>,
    /// Arm slot used at the initial and terminal end of each edge.
    slots: Vec<(usize, usize)>,
    tube_offset: Vec<usize>,
    stiffness: CsrMatrix,
    laplacian: CsrMatrix,
    weights: Vec<f64>,
    block_mass: Vec<f64>,
}

/// Builds the fattened model of `graph` at width `eps` with `n_t` nodes per
/// cross-section. Requires `eps <= l_0 / 4`, `n_t >= 4` and vertex degrees
/// at most 4.
pub fn assemble_manifold_laplacian(graph: &MetricGraph, eps: f64, n_t: usize) -> Result<FatGraphModel> {
    let l0 = graph.min_length();
    if !(eps > 0.0 && eps <= l0 / 4.0) {
        return Err(Error::Contract(format!(
            "eps = {eps} must satisfy 0 < eps <= l_0/4 = {}",
            l0 / 4.0
        )));
    }
    if n_t < 4 {
        return Err(Error::Contract(format!("n_t = {n_t} must be at least 4")));
    }
    let n = n_t - 1;
    let hb = eps / n as f64;

    let mut blocks = Vec::with_capacity(graph.num_vertices());
    let mut block_offset = Vec::with_capacity(graph.num_vertices());
    let mut next = 0;
    for v in 0..graph.num_vertices() {
        let b = PlusBlock::new(graph.degree(v), n).map_err(|e| {
            e.context(format!("vertex {:?}", graph.vertices()[v]))
        })?;
        block_offset.push(next);
        next += b.num_nodes();
        blocks.push(b);
    }
    let mut used = vec![0usize; graph.num_vertices()];
    let mut slots = Vec::with_capacity(graph.num_edges());
    let steps: Vec<usize> = graph.edges().iter().map(|e| edge_steps(e.length, hb)).collect();
    let mut tube_offset = Vec::with_capacity(graph.num_edges());
    for e in 0..graph.num_edges() {
        let (a, b) = graph.ends(e);
        let sa = used[a];
        used[a] += 1;
        let sb = used[b];
        used[b] += 1;
        slots.push((sa, sb));
        tube_offset.push(next);
        next += (steps[e] - 1) * n_t;
    }
    let dim = next;

    let mut model = FatGraphModel {
        graph: graph.clone(),
        eps,
        n_t,
        hb,
        steps,
        blocks,
        block_offset,
        slots,
        tube_offset,
        stiffness: CsrMatrix::zeros(dim, dim),
        laplacian: CsrMatrix::zeros(dim, dim),
        weights: Vec::new(),
        block_mass: Vec::new(),
    };

    let mut k = Vec::new();
    let mut w = vec![0.0; dim];
    for (v, block) in model.blocks.iter().enumerate() {
        for &c in block.cells() {
            let corners = block.cell_corners(c).map(|p| p + model.block_offset[v]);
            add_cell(corners, hb, hb, &mut k, &mut w);
        }
    }
    let block_mass = w.clone();
    for e in 0..graph.num_edges() {
        let he = model.edge_step(e);
        for i in 0..model.steps[e] {
            for j in 0..n {
                let corners = [
                    model.tube_node(e, i, j),
                    model.tube_node(e, i + 1, j),
                    model.tube_node(e, i, j + 1),
                    model.tube_node(e, i + 1, j + 1),
                ];
                add_cell(corners, he, hb, &mut k, &mut w);
            }
        }
    }
    check_weights(&w, "fat graph model")?;
    let stiffness = CsrMatrix::from_triplets(dim, dim, &k)?;
    let inv: Vec<f64> = w.iter().map(|w| 1.0 / w).collect();
    model.laplacian = stiffness.scale_rows(&inv);
    model.stiffness = stiffness;
    model.weights = w;
    model.block_mass = block_mass;
    Ok(model)
}

impl FatGraphModel {
    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Transverse step `eps / (n_t - 1)`, also the target longitudinal step.
    pub fn hb(&self) -> f64 {
        self.hb
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn steps(&self, e: usize) -> usize {
        self.steps[e]
    }

    pub fn edge_step(&self, e: usize) -> f64 {
        self.graph.length(e) / self.steps[e] as f64
    }

    /// Largest longitudinal step over all edges.
    pub fn h_long(&self) -> f64 {
        (0..self.graph.num_edges())
            .map(|e| self.edge_step(e))
            .fold(0.0, f64::max)
    }

    pub fn block(&self, v: usize) -> &PlusBlock {
        &self.blocks[v]
    }

    /// Global index of block node `(a, b)` of vertex `v`.
    pub fn block_node(&self, v: usize, a: usize, b: usize) -> Option<usize> {
        self.blocks[v].local(a, b).map(|p| p + self.block_offset[v])
    }

    /// Global indices of all nodes of the block at `v`.
    pub fn block_nodes(&self, v: usize) -> std::ops::Range<usize> {
        self.block_offset[v]..self.block_offset[v] + self.blocks[v].num_nodes()
    }

    /// Arm slots `(initial, terminal)` of edge `e`.
    pub fn slots(&self, e: usize) -> (usize, usize) {
        self.slots[e]
    }

    /// Node at longitudinal index `i` (`0..=N_e`) and transverse index `j`
    /// (`0..n_t`) of tube `e`. The end cross-sections are block face nodes.
    pub fn tube_node(&self, e: usize, i: usize, j: usize) -> usize {
        let (from, to) = self.graph.ends(e);
        let (sa, sb) = self.slots[e];
        if i == 0 {
            self.blocks[from].face_node(sa, j) + self.block_offset[from]
        } else if i == self.steps[e] {
            self.blocks[to].face_node(sb, j) + self.block_offset[to]
        } else {
            self.tube_offset[e] + (i - 1) * self.n_t + j
        }
    }

    /// Cross-section nodes where edge `e` meets its initial (`terminal =
    /// false`) or terminal vertex.
    pub fn junction(&self, e: usize, terminal: bool) -> Vec<usize> {
        let i = if terminal { self.steps[e] } else { 0 };
        (0..self.n_t).map(|j| self.tube_node(e, i, j)).collect()
    }

    /// All junction nodes of vertex `v`.
    pub fn junction_nodes(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for e in 0..self.graph.num_edges() {
            let (a, b) = self.graph.ends(e);
            if a == v {
                out.extend(self.junction(e, false));
            }
            if b == v {
                out.extend(self.junction(e, true));
            }
        }
        out
    }

    /// Trapezoid weights of one cross-section; they sum to `eps`.
    pub fn transverse_weights(&self) -> Vec<f64> {
        let n = self.n_t - 1;
        (0..=n)
            .map(|j| if j == 0 || j == n { 0.5 * self.hb } else { self.hb })
            .collect()
    }

    /// Area of the block at `v`: `(1 + deg v) eps^2`.
    pub fn block_area(&self, v: usize) -> f64 {
        (1 + self.graph.degree(v)) as f64 * self.eps * self.eps
    }

    /// `sum_e l_e eps + sum_v (1 + deg v) eps^2`.
    pub fn expected_volume(&self) -> f64 {
        self.graph.total_length() * self.eps
            + (0..self.graph.num_vertices()).map(|v| self.block_area(v)).sum::<f64>()
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Part of each node's lumped mass coming from block cells.
    pub fn block_mass(&self) -> &[f64] {
        &self.block_mass
    }

    pub fn resolvent(&self) -> Result<Resolvent> {
        Resolvent::new(self.laplacian.clone(), self.weights.clone())
    }
}
