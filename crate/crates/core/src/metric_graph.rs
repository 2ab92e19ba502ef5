//! Metric graphs and the finite-element Kirchhoff Laplacian.
//!
//! Each edge `e` is the interval `[0, l_e]`, discretised with `N_e` equal
//! steps. Vertex values are shared between all incident edges, which imposes
//! continuity; the sum-of-derivatives condition is the natural boundary
//! condition of the weak form and needs no extra stencil.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_weights, CsrMatrix};
use crate::operators::{lowest_eigenvalues, EigOptions, Resolvent};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub length: f64,
}

#[derive(Deserialize)]
struct RawGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
}

/// A finite metric graph. Edges run from `from` (at `s = 0`) to `to`
/// (at `s = length`); loops are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct MetricGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    #[serde(skip)]
    ends: Vec<(usize, usize)>,
}

impl TryFrom<RawGraph> for MetricGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        Self::new(raw.vertices, raw.edges)
    }
}

impl MetricGraph {
    pub fn new(vertices: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Validation("graph has no edges".into()));
        }
        let mut index = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.as_str(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vertex id {v:?}")));
            }
        }
        let mut ends = Vec::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| {
                    Error::Validation(format!("edge {k} references unknown vertex {id:?}"))
                })
            };
            ends.push((lookup(&e.from)?, lookup(&e.to)?));
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(Error::Validation(format!(
                    "edge {k} has length {}, must be positive",
                    e.length
                )));
            }
        }
        let graph = Self {
            vertices,
            edges,
            ends,
        };
        if let Some(v) = (0..graph.vertices.len()).find(|&v| graph.degree(v) == 0) {
            return Err(Error::Validation(format!(
                "vertex {:?} has no incident edge",
                graph.vertices[v]
            )));
        }
        Ok(graph)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("graph: {e}")))
    }

    /// Star with `degree` edges of the given length, oriented away from
    /// the centre `"c"`.
    pub fn star(degree: usize, length: f64) -> Result<Self> {
        let mut vertices = vec!["c".to_string()];
        let mut edges = Vec::new();
        for i in 0..degree {
            vertices.push(format!("p{i}"));
            edges.push(Edge {
                from: "c".into(),
                to: format!("p{i}"),
                length,
            });
        }
        Self::new(vertices, edges)
    }

    /// Star with individual edge lengths.
    pub fn star_with_lengths(lengths: &[f64]) -> Result<Self> {
        let mut vertices = vec!["c".to_string()];
        let mut edges = Vec::new();
        for (i, &length) in lengths.iter().enumerate() {
            vertices.push(format!("p{i}"));
            edges.push(Edge {
                from: "c".into(),
                to: format!("p{i}"),
                length,
            });
        }
        Self::new(vertices, edges)
    }

    pub fn interval(length: f64) -> Result<Self> {
        Self::star(1, length)
    }

    /// A single loop edge at one vertex.
    pub fn circle(length: f64) -> Result<Self> {
        Self::new(
            vec!["v".into()],
            vec![Edge {
                from: "v".into(),
                to: "v".into(),
                length,
            }],
        )
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Vertex indices `(from, to)` of edge `e`.
    pub fn ends(&self, e: usize) -> (usize, usize) {
        self.ends[e]
    }

    pub fn length(&self, e: usize) -> f64 {
        self.edges[e].length
    }

    /// Number of edge ends at `v`; a loop counts twice.
    pub fn degree(&self, v: usize) -> usize {
        self.ends
            .iter()
            .map(|&(a, b)| usize::from(a == v) + usize::from(b == v))
            .sum()
    }

    /// Shortest edge length `l_0`.
    pub fn min_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }
}

/// Number of steps used for an edge of the given length at target step `h`.
/// Shared by the graph and the fattened model so their grids coincide.
pub fn edge_steps(length: f64, h: f64) -> usize {
    ((length / h).round() as usize).max(1)
}

/// Discretised Kirchhoff Laplacian with mass-lumped weights.
#[derive(Debug, Clone)]
pub struct GraphModel {
    graph: MetricGraph,
    h: f64,
    steps: Vec<usize>,
    offsets: Vec<usize>,
    stiffness: CsrMatrix,
    laplacian: CsrMatrix,
    weights: Vec<f64>,
}

impl GraphModel {
    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    /// Requested step.
    pub fn h(&self) -> f64 {
        self.h
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

    /// Node index of grid point `i` (`0..=N_e`) on edge `e`.
    pub fn node(&self, e: usize, i: usize) -> usize {
        let (from, to) = self.graph.ends(e);
        match i {
            0 => from,
            i if i == self.steps[e] => to,
            i => self.offsets[e] + i - 1,
        }
    }

    /// `-Delta` in weak form: the symmetric stiffness matrix `K`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// `Delta = M^{-1} K`, self-adjoint in the weighted inner product.
    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn resolvent(&self) -> Result<Resolvent> {
        Resolvent::new(self.laplacian.clone(), self.weights.clone())
    }

    /// Second-order one-sided derivative `f'_e(v)` at an end of edge `e`,
    /// with the sign convention `f'_e(v) = -f'_e(0)` at the initial vertex
    /// and `f'_e(v) = f'_e(l_e)` at the terminal one.
    pub fn end_derivative(&self, f: &[f64], e: usize, terminal: bool) -> f64 {
        let n = self.steps[e];
        let h = self.edge_step(e);
        let at = |i: usize| f[self.node(e, if terminal { n - i } else { i })];
        if n >= 2 {
            (3.0 * at(0) - 4.0 * at(1) + at(2)) / (2.0 * h)
        } else {
            (at(0) - at(1)) / h
        }
    }

    /// Kirchhoff flux `sum_{e in E_v} f'_e(v)` at every vertex.
    pub fn vertex_flux(&self, f: &[f64]) -> Vec<f64> {
        let mut flux = vec![0.0; self.graph.num_vertices()];
        for e in 0..self.graph.num_edges() {
            let (a, b) = self.graph.ends(e);
            flux[a] += self.end_derivative(f, e, false);
            flux[b] += self.end_derivative(f, e, true);
        }
        flux
    }
}

/// Assembles the piecewise-linear, mass-lumped Kirchhoff Laplacian.
/// Requires `h <= l_0 / 4`.
pub fn assemble_graph_laplacian(graph: &MetricGraph, h: f64) -> Result<GraphModel> {
    let l0 = graph.min_length();
    if !(h > 0.0 && h <= l0 / 4.0) {
        return Err(Error::Contract(format!(
            "step h = {h} must satisfy 0 < h <= l_0/4 = {}",
            l0 / 4.0
        )));
    }
    let steps: Vec<usize> = graph.edges().iter().map(|e| edge_steps(e.length, h)).collect();
    let mut offsets = Vec::with_capacity(steps.len());
    let mut next = graph.num_vertices();
    for &n in &steps {
        offsets.push(next);
        next += n - 1;
    }
    let dim = next;
    let mut model = GraphModel {
        graph: graph.clone(),
        h,
        steps,
        offsets,
        stiffness: CsrMatrix::zeros(dim, dim),
        laplacian: CsrMatrix::zeros(dim, dim),
        weights: Vec::new(),
    };

    let edges: Vec<usize> = (0..graph.num_edges()).collect();
    let blocks = par::map(&edges, |&e| {
        let he = model.edge_step(e);
        let mut k = Vec::with_capacity(4 * model.steps[e]);
        let mut m = Vec::with_capacity(2 * model.steps[e]);
        for i in 0..model.steps[e] {
            let (a, b) = (model.node(e, i), model.node(e, i + 1));
            let c = 1.0 / he;
            k.extend([(a, a, c), (b, b, c), (a, b, -c), (b, a, -c)]);
            m.extend([(a, 0.5 * he), (b, 0.5 * he)]);
        }
        (k, m)
    });
    let mut triplets = Vec::new();
    let mut weights = vec![0.0; dim];
    for (k, m) in blocks {
        triplets.extend(k);
        for (i, w) in m {
            weights[i] += w;
        }
    }
    check_weights(&weights, "graph model")?;
    let stiffness = CsrMatrix::from_triplets(dim, dim, &triplets)?;
    let inv: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
    model.laplacian = stiffness.scale_rows(&inv);
    model.stiffness = stiffness;
    model.weights = weights;
    Ok(model)
}

/// Smallest `k` eigenvalues of the discrete Kirchhoff Laplacian, ascending.
pub fn graph_spectrum(model: &GraphModel, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > model.dim() / 2 {
        return Err(Error::Contract(format!(
            "k = {k} must lie in 1..={} (half the dimension)",
            model.dim() / 2
        )));
    }
    lowest_eigenvalues(&model.laplacian, &model.weights, k, &EigOptions::default())
}
