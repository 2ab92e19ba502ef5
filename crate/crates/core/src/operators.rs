//! Validated operator and spectrum types, weighted adjoints, symmetric
//! eigendecomposition, resolvent solves and matrix-free operator norms.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, check_weights, wdot, wnorm, CsrMatrix, Matrix};
use crate::par;

/// Tolerance for spectral validation of operators and sequences.
pub const SPECTRUM_TOL: f64 = 1e-9;
/// Relative tolerance for the weighted symmetry check `W M = (W M)^T`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Non-increasing eigenvalue sequence with values in `(0, 1]`.
///
/// Sequences of different length are compared after padding the shorter
/// one with zeros, which stands in for the truncated tail `mu_k -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSequence {
    values: Vec<f64>,
    tail_threshold: f64,
}

impl EigenSequence {
    pub fn new(values: Vec<f64>, tail_threshold: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("eigen sequence must be non-empty".into()));
        }
        if !(tail_threshold >= 0.0 && tail_threshold.is_finite()) {
            return Err(Error::Validation(format!(
                "tail threshold must be finite and >= 0, got {tail_threshold}"
            )));
        }
        for (k, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Validation(format!(
                    "value {k} = {v} lies outside (0, 1]"
                )));
            }
            if k > 0 && v > values[k - 1] {
                return Err(Error::Validation(format!(
                    "sequence increases at index {k}: {} < {v}",
                    values[k - 1]
                )));
            }
        }
        Ok(Self {
            values,
            tail_threshold,
        })
    }

    /// Sorts raw eigenvalues into a sequence. Values within
    /// [`SPECTRUM_TOL`] above 1 are clamped to 1; anything non-positive is
    /// rejected since the operator would not be injective.
    pub fn from_eigenvalues(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        for v in values.iter_mut() {
            if *v > 1.0 && *v <= 1.0 + SPECTRUM_TOL {
                *v = 1.0;
            }
        }
        Self::new(values, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tail_threshold(&self) -> f64 {
        self.tail_threshold
    }

    pub fn with_tail_threshold(mut self, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Validation(format!("invalid tail threshold {t}")));
        }
        self.tail_threshold = t;
        Ok(self)
    }

    /// Value at `k`, or 0 past the stored truncation.
    pub fn padded(&self, k: usize) -> f64 {
        self.values.get(k).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// A resolvent-type operator: self-adjoint, injective, spectrum in (0, 1].
    Resolvent,
    /// A non-negative self-adjoint operator `Delta`.
    Laplacian,
}

/// A finite-dimensional operator, self-adjoint with respect to the diagonal
/// inner product given by `weights`.
#[derive(Debug, Clone)]
pub struct HermOperator {
    matrix: Matrix,
    weights: Vec<f64>,
    kind: OperatorKind,
}

impl HermOperator {
    /// Validates shape, weights and weighted symmetry. When
    /// `validate_spectrum` is set, a full eigendecomposition also checks the
    /// spectrum: `(0, 1]` for resolvents, `>= 0` for Laplacians.
    pub fn new(
        matrix: Matrix,
        weights: Vec<f64>,
        kind: OperatorKind,
        validate_spectrum: bool,
    ) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::Shape(format!(
                "operator matrix must be square and non-empty, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        if weights.len() != n {
            return Err(Error::Shape(format!(
                "{} weights for a {n}-dimensional operator",
                weights.len()
            )));
        }
        check_weights(&weights, "operator")?;
        check_weighted_symmetry(&matrix, &weights)?;
        let op = Self {
            matrix,
            weights,
            kind,
        };
        if validate_spectrum {
            let eig = eig_sym(&op)?;
            let (max, min) = (eig.values[0], *eig.values.last().unwrap());
            match kind {
                OperatorKind::Resolvent => {
                    if !(min > 0.0) || max > 1.0 + SPECTRUM_TOL {
                        return Err(Error::Validation(format!(
                            "resolvent spectrum [{min:e}, {max:e}] not inside (0, 1]"
                        )));
                    }
                }
                OperatorKind::Laplacian => {
                    if min < -SPECTRUM_TOL * max.abs().max(1.0) {
                        return Err(Error::Validation(format!(
                            "Laplacian has negative eigenvalue {min:e}"
                        )));
                    }
                }
            }
        }
        Ok(op)
    }

    /// Resolvent with unit weights, spectrum checked.
    pub fn resolvent(matrix: impl Into<Matrix>) -> Result<Self> {
        let matrix = matrix.into();
        let n = matrix.nrows();
        Self::new(matrix, vec![1.0; n], OperatorKind::Resolvent, true)
    }

    pub fn from_diagonal(values: &[f64], kind: OperatorKind) -> Result<Self> {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values));
        Self::new(Matrix::Dense(m), vec![1.0; values.len()], kind, true)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Turns a Laplacian `Delta` into the dense resolvent `(Delta + 1)^{-1}`
    /// through its eigendecomposition. Resolvents are returned unchanged.
    pub fn to_resolvent(&self) -> Result<HermOperator> {
        match self.kind {
            OperatorKind::Resolvent => Ok(self.clone()),
            OperatorKind::Laplacian => {
                let eig = eig_sym(self)?;
                let f: Vec<f64> = eig.values.iter().map(|&l| 1.0 / (1.0 + l.max(0.0))).collect();
                let m = eig.reconstruct(&f, &self.weights);
                Self::new(
                    Matrix::Dense(m),
                    self.weights.clone(),
                    OperatorKind::Resolvent,
                    false,
                )
            }
        }
    }
}

fn check_weighted_symmetry(m: &Matrix, w: &[f64]) -> Result<()> {
    let entries: Vec<(usize, usize, f64)> = match m {
        Matrix::Dense(d) => (0..d.nrows())
            .flat_map(|r| (0..d.ncols()).map(move |c| (r, c, d[(r, c)])))
            .collect(),
        Matrix::Sparse(s) => s.triplets(),
    };
    let scale = entries
        .iter()
        .map(|&(r, _, v)| (w[r] * v).abs())
        .fold(0.0, f64::max);
    if !scale.is_finite() {
        return Err(Error::Validation("operator has non-finite entries".into()));
    }
    let get = |r: usize, c: usize| match m {
        Matrix::Dense(d) => d[(r, c)],
        Matrix::Sparse(s) => s.get(r, c),
    };
    for &(r, c, v) in &entries {
        if r < c || get(c, r) != 0.0 || v != 0.0 {
            let a = w[r] * v;
            let b = w[c] * get(c, r);
            if (a - b).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Validation(format!(
                    "operator is not self-adjoint in the weighted inner product at ({r}, {c}): {a:e} vs {b:e}"
                )));
            }
        }
    }
    Ok(())
}

/// A self-adjoint operator on a weighted space, applied matrix-free.
pub trait WeightedOperator: Sync {
    fn dim(&self) -> usize {
        self.weights().len()
    }
    fn weights(&self) -> &[f64];
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl WeightedOperator for HermOperator {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "vector of length {} for a {}-dimensional operator",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.matrix.matvec(x))
    }
}

/// `(Delta + 1)^{-1}` for a sparse non-negative `Delta`, applied by
/// conjugate gradients. Never formed densely.
#[derive(Debug, Clone)]
pub struct Resolvent {
    laplacian: CsrMatrix,
    weights: Vec<f64>,
    cg: CgOptions,
}

impl Resolvent {
    pub fn new(laplacian: CsrMatrix, weights: Vec<f64>) -> Result<Self> {
        if laplacian.nrows() != laplacian.ncols() || laplacian.nrows() != weights.len() {
            return Err(Error::Shape(format!(
                "{}x{} Laplacian with {} weights",
                laplacian.nrows(),
                laplacian.ncols(),
                weights.len()
            )));
        }
        check_weights(&weights, "resolvent")?;
        Ok(Self {
            laplacian,
            weights,
            cg: CgOptions::default(),
        })
    }

    pub fn with_cg(mut self, cg: CgOptions) -> Self {
        self.cg = cg;
        self
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }
}

impl WeightedOperator for Resolvent {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        resolvent_apply_with(&self.laplacian, &self.weights, x, &self.cg)
    }
}

/// Identification operators `J: H -> H~` and `J': H~ -> H`. A missing `J'`
/// means the weighted adjoint `J*`.
#[derive(Debug, Clone)]
pub struct IdentificationPair {
    pub j: Matrix,
    pub jprime: Option<Matrix>,
}

impl IdentificationPair {
    pub fn new(j: impl Into<Matrix>, jprime: Option<Matrix>) -> Result<Self> {
        let j = j.into();
        if let Some(jp) = &jprime {
            if jp.nrows() != j.ncols() || jp.ncols() != j.nrows() {
                return Err(Error::Shape(format!(
                    "J is {}x{} but J' is {}x{}",
                    j.nrows(),
                    j.ncols(),
                    jp.nrows(),
                    jp.ncols()
                )));
            }
        }
        Ok(Self { j, jprime })
    }

    /// `J` with `J' = J*`.
    pub fn adjoint_pair(j: impl Into<Matrix>) -> Self {
        Self {
            j: j.into(),
            jprime: None,
        }
    }

    pub fn source_dim(&self) -> usize {
        self.j.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.j.nrows()
    }

    pub(crate) fn check_against(&self, source_dim: usize, target_dim: usize) -> Result<()> {
        if self.source_dim() != source_dim || self.target_dim() != target_dim {
            return Err(Error::Shape(format!(
                "J is {}x{} but the operators need {target_dim}x{source_dim}",
                self.target_dim(),
                self.source_dim()
            )));
        }
        Ok(())
    }
}

/// A linear map between weighted spaces with its weighted adjoint.
pub trait LinearMap: Sync {
    fn weights_in(&self) -> &[f64];
    fn weights_out(&self) -> &[f64];
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;
}

/// A [`LinearMap`] backed by closures.
pub struct FnMap<'a, F, G> {
    w_in: &'a [f64],
    w_out: &'a [f64],
    forward: F,
    adjoint: G,
}

impl<'a, F, G> FnMap<'a, F, G>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    pub fn new(w_in: &'a [f64], w_out: &'a [f64], forward: F, adjoint: G) -> Self {
        Self {
            w_in,
            w_out,
            forward,
            adjoint,
        }
    }
}

impl<F, G> LinearMap for FnMap<'_, F, G>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn weights_in(&self) -> &[f64] {
        self.w_in
    }
    fn weights_out(&self) -> &[f64] {
        self.w_out
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.forward)(x)
    }
    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        (self.adjoint)(y)
    }
}

/// A matrix between weighted spaces; the adjoint is `W_in^{-1} A^T W_out`.
pub struct MatrixMap<'a> {
    m: &'a Matrix,
    w_in: &'a [f64],
    w_out: &'a [f64],
}

impl<'a> MatrixMap<'a> {
    pub fn new(m: &'a Matrix, w_in: &'a [f64], w_out: &'a [f64]) -> Result<Self> {
        if m.ncols() != w_in.len() || m.nrows() != w_out.len() {
            return Err(Error::Shape(format!(
                "{}x{} matrix between spaces of dimension {} and {}",
                m.nrows(),
                m.ncols(),
                w_in.len(),
                w_out.len()
            )));
        }
        Ok(Self { m, w_in, w_out })
    }
}

impl LinearMap for MatrixMap<'_> {
    fn weights_in(&self) -> &[f64] {
        self.w_in
    }
    fn weights_out(&self) -> &[f64] {
        self.w_out
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.m.matvec(x))
    }
    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(adjoint_matvec(self.m, self.w_in, self.w_out, y))
    }
}

/// `W_in^{-1} A^T W_out y`.
pub(crate) fn adjoint_matvec(m: &Matrix, w_in: &[f64], w_out: &[f64], y: &[f64]) -> Vec<f64> {
    let wy: Vec<f64> = y.iter().zip(w_out).map(|(y, w)| y * w).collect();
    let mut out = m.tr_matvec(&wy);
    out.iter_mut().zip(w_in).for_each(|(o, w)| *o /= w);
    out
}

/// Weighted adjoint `A* = W_s^{-1} A^T W_t` of a map from the source space
/// (weights `w_source`) into the target space (weights `w_target`).
pub fn weighted_adjoint(a: &DMatrix<f64>, w_source: &[f64], w_target: &[f64]) -> Result<DMatrix<f64>> {
    if a.ncols() != w_source.len() || a.nrows() != w_target.len() {
        return Err(Error::Shape(format!(
            "{}x{} map with {} source and {} target weights",
            a.nrows(),
            a.ncols(),
            w_source.len(),
            w_target.len()
        )));
    }
    check_weights(w_source, "source")?;
    check_weights(w_target, "target")?;
    Ok(DMatrix::from_fn(a.ncols(), a.nrows(), |i, j| {
        a[(j, i)] * w_target[j] / w_source[i]
    }))
}

/// Weighted adjoint of a dense or sparse map; sparse stays sparse.
pub fn weighted_adjoint_matrix(m: &Matrix, w_source: &[f64], w_target: &[f64]) -> Result<Matrix> {
    match m {
        Matrix::Dense(d) => Ok(Matrix::Dense(weighted_adjoint(d, w_source, w_target)?)),
        Matrix::Sparse(s) => {
            if s.ncols() != w_source.len() || s.nrows() != w_target.len() {
                return Err(Error::Shape(format!(
                    "{}x{} map with {} source and {} target weights",
                    s.nrows(),
                    s.ncols(),
                    w_source.len(),
                    w_target.len()
                )));
            }
            check_weights(w_source, "source")?;
            check_weights(w_target, "target")?;
            let t: Vec<_> = s
                .triplets()
                .into_iter()
                .map(|(r, c, v)| (c, r, v * w_target[r] / w_source[c]))
                .collect();
            Ok(Matrix::Sparse(CsrMatrix::from_triplets(s.ncols(), s.nrows(), &t)?))
        }
    }
}

/// Exact weighted operator norm of a dense map, via the singular values of
/// `W_out^{1/2} M W_in^{-1/2}`.
pub fn dense_op_norm(m: &DMatrix<f64>, w_in: &[f64], w_out: &[f64]) -> Result<f64> {
    if m.ncols() != w_in.len() || m.nrows() != w_out.len() {
        return Err(Error::Shape(format!(
            "{}x{} matrix between spaces of dimension {} and {}",
            m.nrows(),
            m.ncols(),
            w_in.len(),
            w_out.len()
        )));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let s = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        m[(r, c)] * (w_out[r] / w_in[c]).sqrt()
    });
    let max_iter = 100 * m.nrows().max(m.ncols()).max(10);
    let svd = nalgebra::SVD::try_new(s, false, false, f64::EPSILON, max_iter).ok_or(
        Error::NoConvergence {
            solver: "singular value decomposition",
            iterations: max_iter,
            residual: f64::NAN,
        },
    )?;
    Ok(svd.singular_values.max())
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub seed: u64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Relative tolerance of the adjoint-consistency test.
    pub adjoint_tol: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            rel_tol: 1e-6,
            max_iter: 500,
            adjoint_tol: 1e-8,
        }
    }
}

impl PowerOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

pub(crate) fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Checks `<A x, y>_out = <x, A* y>_in` on one random pair.
pub fn check_adjoint(map: &dyn LinearMap, rng: &mut ChaCha8Rng, tol: f64) -> Result<()> {
    let (w_in, w_out) = (map.weights_in(), map.weights_out());
    let x = random_vector(rng, w_in.len());
    let y = random_vector(rng, w_out.len());
    let ax = map.apply(&x)?;
    let aty = map.apply_adjoint(&y)?;
    if ax.len() != w_out.len() || aty.len() != w_in.len() {
        return Err(Error::Contract(format!(
            "map callbacks returned vectors of length {} and {}, expected {} and {}",
            ax.len(),
            aty.len(),
            w_out.len(),
            w_in.len()
        )));
    }
    let lhs = wdot(w_out, &ax, &y);
    let rhs = wdot(w_in, &x, &aty);
    let (nx, ny) = (wnorm(w_in, &x), wnorm(w_out, &y));
    let scale = nx * ny * (1.0f64).max(wnorm(w_out, &ax) / nx).max(wnorm(w_in, &aty) / ny);
    if (lhs - rhs).abs() > tol * scale {
        return Err(Error::Contract(format!(
            "adjoint callback inconsistent: <Ax,y> = {lhs:e}, <x,A*y> = {rhs:e}"
        )));
    }
    Ok(())
}

/// Weighted operator norm of a black-box map by power iteration on `A*A`.
///
/// Stops once the estimate changes by less than `rel_tol` (relative) or
/// after `max_iter` steps. The start vector is drawn from `seed`.
pub fn op_norm(map: &dyn LinearMap, opts: &PowerOptions) -> Result<f64> {
    let w_in = map.weights_in();
    let w_out = map.weights_out();
    if w_in.is_empty() || w_out.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    check_adjoint(map, &mut rng, opts.adjoint_tol)?;

    let mut x = random_vector(&mut rng, w_in.len());
    let nx = wnorm(w_in, &x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut estimate = 0.0;
    for _ in 0..opts.max_iter {
        let y = map.apply(&x)?;
        let ny = wnorm(w_out, &y);
        if ny == 0.0 {
            return Ok(estimate);
        }
        let z = map.apply_adjoint(&y)?;
        let nz = wnorm(w_in, &z);
        // ||A* y|| / ||y|| >= ||A x|| for unit x, and both approach ||A||.
        let next = nz / ny;
        if nz == 0.0 {
            return Ok(ny);
        }
        x = z.into_iter().map(|v| v / nz).collect();
        let done = (next - estimate).abs() <= opts.rel_tol * next;
        estimate = next;
        if done {
            break;
        }
    }
    Ok(estimate)
}

/// Eigendecomposition with respect to the weighted inner product.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// Columns are eigenvectors, orthonormal in the weighted inner product.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// The spectrum as an [`EigenSequence`]; fails if it leaves `(0, 1]`.
    pub fn sequence(&self) -> Result<EigenSequence> {
        EigenSequence::from_eigenvalues(self.values.clone())
    }

    /// `V diag(f) V* `, the functional calculus applied to the eigenvalues.
    pub fn reconstruct(&self, f: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut scaled = self.vectors.clone();
        for (k, &fk) in f.iter().enumerate() {
            scaled.column_mut(k).scale_mut(fk);
        }
        let mut vt_w = self.vectors.transpose();
        for c in 0..n {
            vt_w.column_mut(c).scale_mut(weights[c]);
        }
        scaled * vt_w
    }
}

/// Full eigendecomposition of `M` in the `W`-inner product, computed from
/// the symmetric matrix `W^{1/2} M W^{-1/2}`.
pub fn eig_sym(op: &HermOperator) -> Result<SymEigen> {
    let n = op.dim();
    let m = op.matrix.to_dense();
    let sqrt_w: Vec<f64> = op.weights.iter().map(|w| w.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |r, c| sqrt_w[r] * m[(r, c)] / sqrt_w[c]);
    let st = s.transpose();
    s = (s + st) * 0.5;
    let max_iter = 100 * n.max(10);
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, max_iter).ok_or(Error::NoConvergence {
        solver: "symmetric QR eigensolver",
        iterations: max_iter,
        residual: f64::NAN,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])] / sqrt_w[r]);
    Ok(SymEigen { values, vectors })
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// Iteration cap; `None` means ten times the dimension.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

/// Solves `(Delta + 1) u = rhs` by conjugate gradients in the weighted inner
/// product, i.e. applies the resolvent `(Delta + 1)^{-1}`.
pub fn resolvent_apply(laplacian: &CsrMatrix, weights: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    resolvent_apply_with(laplacian, weights, rhs, &CgOptions::default())
}

pub fn resolvent_apply_with(
    laplacian: &CsrMatrix,
    weights: &[f64],
    rhs: &[f64],
    opts: &CgOptions,
) -> Result<Vec<f64>> {
    let n = weights.len();
    if laplacian.nrows() != n || laplacian.ncols() != n || rhs.len() != n {
        return Err(Error::Shape(format!(
            "{}x{} Laplacian, {n} weights, right-hand side of length {}",
            laplacian.nrows(),
            laplacian.ncols(),
            rhs.len()
        )));
    }
    let shifted = |p: &[f64]| {
        let mut q = laplacian.matvec(p);
        axpy(1.0, p, &mut q);
        q
    };
    let mut u = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut rr = wdot(weights, &r, &r);
    let bnorm = rr.sqrt();
    if bnorm == 0.0 {
        return Ok(u);
    }
    let target = opts.rel_tol * bnorm;
    let max_iter = opts.max_iter.unwrap_or(10 * n);
    let mut p = r.clone();
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(u);
        }
        let ap = shifted(&p);
        let alpha = rr / wdot(weights, &p, &ap);
        axpy(alpha, &p, &mut u);
        axpy(-alpha, &ap, &mut r);
        let rr_next = wdot(weights, &r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
    }
    if rr.sqrt() <= target {
        return Ok(u);
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradients",
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub seed: u64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Problems up to this dimension are solved densely.
    pub dense_limit: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            rel_tol: 1e-12,
            max_iter: 1000,
            dense_limit: 400,
        }
    }
}

/// Smallest `k` eigenvalues (ascending) of a sparse non-negative `Delta`,
/// self-adjoint in the `weights` inner product.
///
/// Small problems are solved densely. Larger ones use block subspace
/// iteration with Rayleigh-Ritz on the resolvent `(Delta + 1)^{-1}`, whose
/// top eigenvalues `1 / (1 + lambda)` are well separated. The block is
/// wider than `k` so degenerate eigenvalues are resolved with their
/// multiplicity.
pub fn lowest_eigenvalues(
    laplacian: &CsrMatrix,
    weights: &[f64],
    k: usize,
    opts: &EigOptions,
) -> Result<Vec<f64>> {
    let n = weights.len();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("cannot take {k} eigenvalues of a {n}-dimensional operator")));
    }
    if n <= opts.dense_limit {
        let op = HermOperator::new(
            Matrix::Sparse(laplacian.clone()),
            weights.to_vec(),
            OperatorKind::Laplacian,
            false,
        )?;
        let eig = eig_sym(&op)?;
        return Ok(eig.values.iter().rev().take(k).copied().collect());
    }
    let resolvent = Resolvent::new(laplacian.clone(), weights.to_vec())?;
    let theta = top_eigenvalues(&resolvent, k, opts)?;
    Ok(theta.iter().map(|t| 1.0 / t - 1.0).collect())
}

/// Largest `k` eigenvalues (descending) of a positive self-adjoint operator.
pub fn top_eigenvalues(op: &dyn WeightedOperator, k: usize, opts: &EigOptions) -> Result<Vec<f64>> {
    let n = op.dim();
    let w = op.weights();
    let p = (2 * k + 4).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = (0..p).map(|_| random_vector(&mut rng, n)).collect();
    orthonormalize(&mut basis, w, &mut rng);

    let mut previous: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let images = par::map(&basis, |q| op.apply(q));
        let images: Vec<Vec<f64>> = images.into_iter().collect::<Result<_>>()?;
        let h = DMatrix::from_fn(p, p, |i, j| {
            0.5 * (wdot(w, &basis[i], &images[j]) + wdot(w, &basis[j], &images[i]))
        });
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 100 * p.max(10)).ok_or(
            Error::NoConvergence {
                solver: "Rayleigh-Ritz eigensolver",
                iterations: 100 * p.max(10),
                residual: f64::NAN,
            },
        )?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let ritz: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

        // Next basis: R applied to the Ritz vectors, i.e. images * S.
        basis = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (j, img) in images.iter().enumerate() {
                    axpy(eig.eigenvectors[(j, c)], img, &mut v);
                }
                v
            })
            .collect();
        orthonormalize(&mut basis, w, &mut rng);

        if let Some(prev) = &previous {
            change = (0..k)
                .map(|i| (ritz[i] - prev[i]).abs() / ritz[i].abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if change <= opts.rel_tol {
                return Ok(ritz[..k].to_vec());
            }
        }
        previous = Some(ritz);
    }
    Err(Error::NoConvergence {
        solver: "subspace iteration",
        iterations: opts.max_iter,
        residual: change,
    })
}

/// Weighted modified Gram-Schmidt with one re-orthogonalisation pass.
/// Collapsed vectors are replaced by fresh random directions.
fn orthonormalize(basis: &mut [Vec<f64>], w: &[f64], rng: &mut ChaCha8Rng) {
    for i in 0..basis.len() {
        for attempt in 0..4 {
            let before = wnorm(w, &basis[i]);
            for _ in 0..2 {
                for j in 0..i {
                    let (head, tail) = basis.split_at_mut(i);
                    let c = wdot(w, &head[j], &tail[0]);
                    axpy(-c, &head[j], &mut tail[0]);
                }
            }
            let after = wnorm(w, &basis[i]);
            if after > 1e-10 * before && after > 0.0 {
                basis[i].iter_mut().for_each(|v| *v /= after);
                break;
            }
            assert!(attempt < 3, "could not extend an orthonormal basis");
            basis[i] = random_vector(rng, w.len());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        let top = SymmetricEigen::new(s.clone()).eigenvalues.max();
        s / (top * 1.01)
    }

    /// Number of eigenvalues of a symmetric matrix below `x`, via Sylvester
    /// inertia of `M - x I` (signs of the LDL^T pivots).
    fn count_below(m: &DMatrix<f64>, x: f64) -> usize {
        let n = m.nrows();
        let mut a = m - DMatrix::identity(n, n) * x;
        let mut negatives = 0;
        for k in 0..n {
            let d = a[(k, k)];
            if d < 0.0 {
                negatives += 1;
            }
            for i in k + 1..n {
                let l = a[(i, k)] / d;
                for j in k + 1..n {
                    a[(i, j)] -= l * a[(k, j)];
                }
            }
        }
        negatives
    }

    /// Eigenvalues by bisection on the characteristic polynomial's sign
    /// changes (counted through inertia).
    fn bisection_eigenvalues(m: &DMatrix<f64>, lo: f64, hi: f64) -> Vec<f64> {
        (0..m.nrows())
            .map(|k| {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if count_below(m, mid) > k {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }

    #[test]
    fn eig_sym_identity_and_diagonal() {
        let id = HermOperator::resolvent(DMatrix::<f64>::identity(4, 4)).unwrap();
        let eig = eig_sym(&id).unwrap();
        assert!(eig.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let d = HermOperator::from_diagonal(&[0.25, 0.5], OperatorKind::Resolvent).unwrap();
        let eig = eig_sym(&d).unwrap();
        assert_relative_eq!(eig.values[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(eig.values[1], 0.25, epsilon = 1e-15);
        assert_relative_eq!(eig.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(eig.vectors[(0, 1)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn eig_sym_matches_bisection_oracle() {
        let m = random_spd(5, 3);
        let oracle = bisection_eigenvalues(&m, 0.0, 1.0);
        let op = HermOperator::resolvent(m).unwrap();
        let mut values = eig_sym(&op).unwrap().values;
        values.reverse();
        for (a, b) in values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn eig_sym_weighted_orthonormal() {
        // M = W^{-1} S is self-adjoint in the W inner product.
        let s = random_spd(6, 11);
        let w = [0.5, 1.0, 2.0, 0.25, 3.0, 1.5];
        let m = DMatrix::from_fn(6, 6, |r, c| s[(r, c)] / w[r]);
        let op = HermOperator::new(Matrix::Dense(m.clone()), w.to_vec(), OperatorKind::Laplacian, true)
            .unwrap();
        let eig = eig_sym(&op).unwrap();
        let wm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&w));
        let gram = eig.vectors.transpose() * &wm * &eig.vectors;
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-12);
        for k in 0..6 {
            let v = eig.vectors.column(k);
            assert!((&m * v - v * eig.values[k]).amax() < 1e-12);
        }
    }

    #[test]
    fn non_self_adjoint_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.5]);
        assert!(matches!(
            HermOperator::new(Matrix::Dense(m), vec![1.0, 1.0], OperatorKind::Resolvent, false),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn resolvent_spectrum_validated() {
        assert!(HermOperator::from_diagonal(&[1.5, 0.5], OperatorKind::Resolvent).is_err());
        assert!(HermOperator::from_diagonal(&[0.0, 0.5], OperatorKind::Resolvent).is_err());
        assert!(HermOperator::from_diagonal(&[1.0 + 1e-12, 0.5], OperatorKind::Resolvent).is_ok());
        assert!(HermOperator::from_diagonal(&[-0.1, 0.5], OperatorKind::Laplacian).is_err());
    }

    #[test]
    fn eigen_sequence_invariants() {
        assert!(EigenSequence::new(vec![0.5, 0.7], 0.0).is_err());
        assert!(EigenSequence::new(vec![1.0, 0.0], 0.0).is_err());
        assert!(EigenSequence::new(vec![], 0.0).is_err());
        let s = EigenSequence::from_eigenvalues(vec![0.2, 1.0 + 1e-12, 0.5]).unwrap();
        assert_eq!(s.values(), &[1.0, 0.5, 0.2]);
        assert_eq!(s.padded(7), 0.0);
    }

    #[test]
    fn weighted_adjoint_cases() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(weighted_adjoint(&a, &[1.0; 3], &[1.0; 2]).unwrap(), a.transpose());
        let id = DMatrix::<f64>::identity(3, 3);
        let w = [0.3, 2.0, 7.0];
        assert!((weighted_adjoint(&id, &w, &w).unwrap() - &id).amax() < 1e-15);
        assert!(matches!(
            weighted_adjoint(&a, &[1.0, 0.0, 1.0], &[1.0; 2]),
            Err(Error::Validation(_))
        ));
        assert!(weighted_adjoint(&a, &[1.0; 2], &[1.0; 2]).is_err());
    }

    #[test]
    fn weighted_adjoint_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let ws: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..3.0)).collect();
        let wt: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..3.0)).collect();
        let at = weighted_adjoint(&a, &ws, &wt).unwrap();
        for _ in 0..20 {
            let x = nalgebra::DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
            let y = nalgebra::DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = wdot(&wt, (&a * &x).as_slice(), y.as_slice());
            let rhs = wdot(&ws, x.as_slice(), (&at * &y).as_slice());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn op_norm_simple_cases() {
        let zero = Matrix::Dense(DMatrix::zeros(3, 2));
        let map = MatrixMap::new(&zero, &[1.0; 2], &[1.0; 3]).unwrap();
        assert_eq!(op_norm(&map, &PowerOptions::default()).unwrap(), 0.0);

        let d = Matrix::Dense(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[0.3, 0.9])));
        let map = MatrixMap::new(&d, &[1.0; 2], &[1.0; 2]).unwrap();
        assert_relative_eq!(op_norm(&map, &PowerOptions::default()).unwrap(), 0.9, max_relative = 1e-6);
    }

    #[test]
    fn op_norm_matches_dense_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: DMatrix<f64> = DMatrix::from_fn(50, 80, |_, _| rng.gen_range(-1.0f64..1.0));
        let oracle = SymmetricEigen::new(a.transpose() * &a).eigenvalues.max().sqrt();
        let m = Matrix::Dense(a);
        let map = MatrixMap::new(&m, &[1.0; 80], &[1.0; 50]).unwrap();
        let opts = PowerOptions {
            rel_tol: 1e-12,
            max_iter: 20_000,
            ..PowerOptions::default()
        };
        let est = op_norm(&map, &opts).unwrap();
        assert!((est - oracle).abs() / oracle < 1e-5, "{est} vs {oracle}");
    }

    #[test]
    fn op_norm_rejects_inconsistent_adjoint() {
        let w = [1.0, 2.0];
        let map = FnMap::new(
            &w,
            &w,
            |x: &[f64]| Ok(vec![x[0] + x[1], x[1]]),
            |y: &[f64]| Ok(y.to_vec()),
        );
        assert!(matches!(op_norm(&map, &PowerOptions::default()), Err(Error::Contract(_))));
    }

    fn neumann_1d(n: usize) -> (CsrMatrix, Vec<f64>) {
        let h = 1.0 / (n - 1) as f64;
        let mut t = Vec::new();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            for (a, b, v) in [(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)] {
                t.push((a, b, v / h));
            }
            w[i] += h / 2.0;
            w[i + 1] += h / 2.0;
        }
        let k = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let inv: Vec<f64> = w.iter().map(|w| 1.0 / w).collect();
        (k.scale_rows(&inv), w)
    }

    #[test]
    fn resolvent_apply_cases() {
        let zero = CsrMatrix::zeros(3, 3);
        let rhs = [1.0, -2.0, 0.5];
        let u = resolvent_apply(&zero, &[1.0; 3], &rhs).unwrap();
        assert!(u.iter().zip(&rhs).all(|(a, b)| (a - b).abs() < 1e-14));

        let d = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let u = resolvent_apply(&d, &[1.0; 2], &[2.0, 4.0]).unwrap();
        assert_relative_eq!(u[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(u[1], 1.0, epsilon = 1e-12);

        let (lap, w) = neumann_1d(100);
        let u = resolvent_apply(&lap, &w, &vec![1.0; 100]).unwrap();
        assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn resolvent_residual_invariant() {
        let (lap, w) = neumann_1d(200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rhs = random_vector(&mut rng, 200);
        let u = resolvent_apply(&lap, &w, &rhs).unwrap();
        let mut res = lap.matvec(&u);
        axpy(1.0, &u, &mut res);
        axpy(-1.0, &rhs, &mut res);
        assert!(wnorm(&w, &res) <= 1e-9 * wnorm(&w, &rhs));
    }

    #[test]
    fn resolvent_iteration_cap_reported() {
        let (lap, w) = neumann_1d(200);
        let rhs: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let opts = CgOptions {
            rel_tol: 1e-14,
            max_iter: Some(3),
        };
        match resolvent_apply_with(&lap, &w, &rhs, &opts) {
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn lowest_eigenvalues_neumann_interval() {
        let (lap, w) = neumann_1d(801);
        let h = 1.0 / 800.0;
        let opts = EigOptions::default();
        let ev = lowest_eigenvalues(&lap, &w, 4, &opts).unwrap();
        for (k, l) in ev.iter().enumerate() {
            // Exact eigenvalues of the lumped three-point scheme.
            let exact = 4.0 / (h * h) * (k as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2);
            assert!((l - exact).abs() < 1e-8 * exact.max(1.0), "{k}: {l} vs {exact}");
        }
    }
}
