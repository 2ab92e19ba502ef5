//! Distances between self-adjoint operators acting in different Hilbert
//! spaces, quasi-unitary equivalence certificates, and a desk-scale
//! experiment for Neumann Laplacians on thin branched strips converging to
//! the Kirchhoff Laplacian of a metric graph.
//!
//! All Hilbert spaces are finite-dimensional and carry a diagonal
//! (quadrature) inner product `<x, y> = sum_i w_i x_i y_i`. Every norm and
//! adjoint in the crate is taken with respect to those weights.

pub mod distances;
pub mod error;
pub mod fat_graph;
pub mod io;
pub mod linalg;
pub mod metric_graph;
pub mod operators;
pub mod par;

pub use distances::{
    compose_pairs, d_hausdorff_spec, d_spec, d_uni_equal_dim, eigenvalue_pairing,
    functional_transfer, heat_defect, phi, que_certify, symmetrize_pair, EigenPair, HeatDefect,
    QueReport, SpecDistance, UniDistance,
};
pub use error::{Error, Result};
pub use fat_graph::{
    ab_operators, assemble_manifold_laplacian, build_identification, defect_norm, minmax_check,
    que_2_defect, run_sweep, trace_constant_check, AbReport, FatGraphModel, FatPair,
    MinMaxReport, SweepOptions, SweepResult, SweepRow, TraceReport,
};
pub use linalg::{CsrMatrix, Matrix};
pub use metric_graph::{assemble_graph_laplacian, graph_spectrum, GraphModel, MetricGraph};
pub use operators::{
    eig_sym, op_norm, resolvent_apply, weighted_adjoint, EigenSequence, HermOperator,
    IdentificationPair, LinearMap, OperatorKind, PowerOptions, Resolvent, WeightedOperator,
};
