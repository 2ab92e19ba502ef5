//! The identification `J_eps` between the graph and the strip, the
//! sandwiched resolvent defect and its factorisation.

use serde::Serialize;

use super::FatGraphModel;
use crate::error::{Error, Result, ResultExt};
use crate::linalg::{axpy, sub, CsrMatrix, Matrix};
use crate::metric_graph::{assemble_graph_laplacian, GraphModel, MetricGraph};
use crate::operators::{
    adjoint_matvec, op_norm, FnMap, IdentificationPair, PowerOptions, Resolvent,
    WeightedOperator,
};

/// Builds `J_eps`. A graph value at an interior grid point is spread over
/// the matching tube cross-section with the value `eps^{-1/2}`. A vertex
/// value goes to the junction cross-sections of its block, scaled so that
/// `J* J = I` holds exactly in the lumped inner products; the remaining
/// block nodes get zero. `J' = J*`.
pub fn build_identification(gm: &GraphModel, fm: &FatGraphModel) -> Result<IdentificationPair> {
    let graph = gm.graph();
    if graph != fm.graph() {
        return Err(Error::Contract("graph and strip are built over different graphs".into()));
    }
    for e in 0..graph.num_edges() {
        if gm.steps(e) != fm.steps(e) {
            return Err(Error::Contract(format!(
                "edge {e}: graph grid has {} steps, strip grid {}",
                gm.steps(e),
                fm.steps(e)
            )));
        }
    }
    let scale = fm.eps().powf(-0.5);
    let mut t = Vec::new();
    for e in 0..graph.num_edges() {
        for i in 1..fm.steps(e) {
            for j in 0..fm.n_t() {
                t.push((fm.tube_node(e, i, j), gm.node(e, i), scale));
            }
        }
    }
    let w = fm.weights();
    for v in 0..graph.num_vertices() {
        let nodes = fm.junction_nodes(v);
        let mass: f64 = nodes.iter().map(|&p| w[p]).sum();
        let c = (gm.weights()[v] * fm.eps() / mass).sqrt();
        t.extend(nodes.into_iter().map(|p| (p, v, c * scale)));
    }
    let j = CsrMatrix::from_triplets(fm.dim(), gm.dim(), &t)?;
    Ok(IdentificationPair::adjoint_pair(j))
}

/// Graph model, strip model, identification and both resolvents at one
/// `eps`.
#[derive(Debug, Clone)]
pub struct FatPair {
    pub gm: GraphModel,
    pub fm: FatGraphModel,
    pub pair: IdentificationPair,
    r0: Resolvent,
    r_eps: Resolvent,
}

impl FatPair {
    /// Builds both models on matching grids: the graph step equals the
    /// transverse step `eps / (n_t - 1)` of the strip.
    pub fn new(graph: &MetricGraph, eps: f64, n_t: usize) -> Result<Self> {
        let fm = super::assemble_manifold_laplacian(graph, eps, n_t)?;
        let gm = assemble_graph_laplacian(graph, fm.hb())?;
        let pair = build_identification(&gm, &fm)?;
        Ok(Self {
            r0: gm.resolvent()?,
            r_eps: fm.resolvent()?,
            gm,
            fm,
            pair,
        })
    }

    pub fn eps(&self) -> f64 {
        self.fm.eps()
    }

    pub fn r0(&self) -> &Resolvent {
        &self.r0
    }

    pub fn r_eps(&self) -> &Resolvent {
        &self.r_eps
    }

    pub fn j(&self) -> &Matrix {
        &self.pair.j
    }

    pub fn apply_j(&self, f: &[f64]) -> Vec<f64> {
        self.pair.j.matvec(f)
    }

    pub fn apply_jstar(&self, u: &[f64]) -> Vec<f64> {
        adjoint_matvec(&self.pair.j, self.gm.weights(), self.fm.weights(), u)
    }

    /// `max |J* J f - f| / max |f|` over the given vectors.
    pub fn jstar_j_error(&self, samples: &[Vec<f64>]) -> f64 {
        samples
            .iter()
            .map(|f| {
                let back = self.apply_jstar(&self.apply_j(f));
                let err = back.iter().zip(f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                err / f.iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `D g = R_eps J g - J R_0 g`.
    fn defect(&self, g: &[f64]) -> Result<Vec<f64>> {
        let a = self.r_eps.apply(&self.apply_j(g)).context(|| self.solve_ctx("R_eps J g"))?;
        let b = self.apply_j(&self.r0.apply(g).context(|| self.solve_ctx("R_0 g"))?);
        Ok(sub(&a, &b))
    }

    /// `D* w = J* R_eps w - R_0 J* w`.
    fn defect_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        let a = self.apply_jstar(&self.r_eps.apply(w).context(|| self.solve_ctx("R_eps w"))?);
        let b = self.r0.apply(&self.apply_jstar(w)).context(|| self.solve_ctx("R_0 J* w"))?;
        Ok(sub(&a, &b))
    }

    fn solve_ctx(&self, what: &str) -> String {
        format!("eps = {}: resolvent solve for {what}", self.eps())
    }
}

/// `||R_eps J - J R_0||` between the weighted spaces.
pub fn defect_norm(fp: &FatPair, opts: &PowerOptions) -> Result<f64> {
    let map = FnMap::new(
        fp.gm.weights(),
        fp.fm.weights(),
        |g| fp.defect(g),
        |w| fp.defect_adjoint(w),
    );
    op_norm(&map, opts)
}

/// `delta_eps = ||(I - J J*) R_eps||`.
pub fn que_2_defect(fp: &FatPair, opts: &PowerOptions) -> Result<f64> {
    let project_out = |u: &[f64]| sub(u, &fp.apply_j(&fp.apply_jstar(u)));
    let map = FnMap::new(
        fp.fm.weights(),
        fp.fm.weights(),
        |w| Ok(project_out(&fp.r_eps.apply(w)?)),
        |w| fp.r_eps.apply(&project_out(w)),
    );
    op_norm(&map, opts)
}

/// Norms of the four factors of the resolvent defect and how well the
/// factorisation reproduces it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AbReport {
    pub defect: f64,
    /// `||A_eps||: L2(X_eps) -> V_max`
    pub a_eps: f64,
    /// `||B_eps||: L2(X_eps) -> V` with the prefactor `eps^{1/2} / deg v`.
    pub b_eps: f64,
    /// `||B_eps||` with the prefactor `eps^{-1/2} / deg v`, the scaling
    /// under which the factorisation holds for the physical strip.
    pub b_eps_flux: f64,
    pub a0: f64,
    pub b0: f64,
    /// `||D - (-A_eps* B_0 + B~_eps* A_0)|| / ||D||` with `B~_eps = B_eps / eps`.
    pub residual: f64,
    /// The same residual with `B_eps` itself.
    pub residual_literal: f64,
}

/// Sparse row functionals that turn `u = R_eps w` or `f = R_0 g` into the
/// vertex data of the factorisation.
struct Factors {
    /// Cross-section average minus block average, times `eps^{1/2}`; one
    /// row per edge end.
    f: Matrix,
    /// `eps^{1/2} / deg v` times the block integral of `Delta_eps u`.
    g: Matrix,
    /// One-sided derivative `f'_e(v)`; one row per edge end.
    d: Matrix,
    /// Vertex evaluation.
    ev: Matrix,
    /// `deg v`, the weights of `V`.
    deg: Vec<f64>,
    /// Unit weights of `V_max`.
    ones: Vec<f64>,
}

fn factors(fp: &FatPair) -> Result<Factors> {
    let (gm, fm) = (&fp.gm, &fp.fm);
    let graph = gm.graph();
    let eps = fm.eps();
    let root = eps.sqrt();
    let tau = fm.transverse_weights();
    let omega = fm.block_mass();
    let w = fm.weights();

    let mut ends = Vec::new();
    for e in 0..graph.num_edges() {
        let (a, b) = graph.ends(e);
        ends.push((a, e, false));
        ends.push((b, e, true));
    }
    let mut ft = Vec::new();
    let mut dt = Vec::new();
    for (row, &(v, e, terminal)) in ends.iter().enumerate() {
        for (j, p) in fm.junction(e, terminal).into_iter().enumerate() {
            ft.push((row, p, root * tau[j] / eps));
        }
        let area = fm.block_area(v);
        for p in fm.block_nodes(v) {
            ft.push((row, p, -root * omega[p] / area));
        }
        let n = gm.steps(e);
        let h = gm.edge_step(e);
        let at = |i: usize| gm.node(e, if terminal { n - i } else { i });
        for (i, c) in [(0, 3.0), (1, -4.0), (2, 1.0)] {
            dt.push((row, at(i), c / (2.0 * h)));
        }
    }
    let mut gt = Vec::new();
    let mut et = Vec::new();
    let k = fm.stiffness();
    for v in 0..graph.num_vertices() {
        let c = root / graph.degree(v) as f64;
        for p in fm.block_nodes(v) {
            for (q, kv) in k.row(p) {
                gt.push((v, q, c * omega[p] / w[p] * kv));
            }
        }
        et.push((v, v, 1.0));
    }
    let (nv, nm) = (graph.num_vertices(), ends.len());
    Ok(Factors {
        f: Matrix::Sparse(CsrMatrix::from_triplets(nm, fm.dim(), &ft)?),
        g: Matrix::Sparse(CsrMatrix::from_triplets(nv, fm.dim(), &gt)?),
        d: Matrix::Sparse(CsrMatrix::from_triplets(nm, gm.dim(), &dt)?),
        ev: Matrix::Sparse(CsrMatrix::from_triplets(nv, gm.dim(), &et)?),
        deg: (0..nv).map(|v| graph.degree(v) as f64).collect(),
        ones: vec![1.0; nm],
    })
}

/// Norms of `A_eps`, `B_eps`, `A_0`, `B_0` and the relative residual of the
/// factorisation `R_eps J - J R_0 = -A_eps* B_0 + B_eps* A_0`.
pub fn ab_operators(fp: &FatPair, opts: &PowerOptions) -> Result<AbReport> {
    let fs = factors(fp)?;
    let (w0, we) = (fp.gm.weights(), fp.fm.weights());
    let (r0, re) = (fp.r0(), fp.r_eps());
    let eps = fp.eps();

    // X = L * R for a row functional L: X* = R L*.
    let a_eps = op_norm(
        &FnMap::new(
            we,
            &fs.ones,
            |w| Ok(fs.f.matvec(&re.apply(w)?)),
            |y| re.apply(&adjoint_matvec(&fs.f, we, &fs.ones, y)),
        ),
        opts,
    )?;
    let b_eps = op_norm(
        &FnMap::new(
            we,
            &fs.deg,
            |w| Ok(fs.g.matvec(&re.apply(w)?)),
            |y| re.apply(&adjoint_matvec(&fs.g, we, &fs.deg, y)),
        ),
        opts,
    )?;
    let a0 = op_norm(
        &FnMap::new(
            w0,
            &fs.deg,
            |g| Ok(fs.ev.matvec(&r0.apply(g)?)),
            |y| r0.apply(&adjoint_matvec(&fs.ev, w0, &fs.deg, y)),
        ),
        opts,
    )?;
    let b0 = op_norm(
        &FnMap::new(
            w0,
            &fs.ones,
            |g| Ok(fs.d.matvec(&r0.apply(g)?)),
            |y| r0.apply(&adjoint_matvec(&fs.d, w0, &fs.ones, y)),
        ),
        opts,
    )?;
    let defect = defect_norm(fp, opts)?;

    // E g = R_eps (J g + F* D f - s G* Ev f) - J f with f = R_0 g.
    // E* w = (J* + D* F - s Ev* G) u - R_0 J* w with u = R_eps w, where the
    // middle terms act on f-space through R_0.
    let residual = |s: f64| -> Result<f64> {
        let map = FnMap::new(
            w0,
            we,
            |g| {
                let f = r0.apply(g)?;
                let mut x = fp.apply_j(g);
                axpy(1.0, &adjoint_matvec(&fs.f, we, &fs.ones, &fs.d.matvec(&f)), &mut x);
                axpy(-s, &adjoint_matvec(&fs.g, we, &fs.deg, &fs.ev.matvec(&f)), &mut x);
                Ok(sub(&re.apply(&x)?, &fp.apply_j(&f)))
            },
            |w| {
                let u = re.apply(w)?;
                let mut y = adjoint_matvec(&fs.d, w0, &fs.ones, &fs.f.matvec(&u));
                axpy(-s, &adjoint_matvec(&fs.ev, w0, &fs.deg, &fs.g.matvec(&u)), &mut y);
                let mut out = fp.apply_jstar(&u);
                axpy(1.0, &r0.apply(&y)?, &mut out);
                Ok(sub(&out, &r0.apply(&fp.apply_jstar(w))?))
            },
        );
        Ok(op_norm(&map, opts)? / defect)
    };
    Ok(AbReport {
        defect,
        a_eps,
        b_eps,
        b_eps_flux: b_eps / eps,
        a0,
        b0,
        residual: residual(1.0 / eps)?,
        residual_literal: residual(1.0)?,
    })
}
