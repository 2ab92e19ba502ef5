//! Distances between self-adjoint operators on different spaces and the
//! quasi-unitary-equivalence certificate algebra.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sub, Matrix};
use crate::operators::{
    adjoint_matvec, dense_op_norm, eig_sym, op_norm, weighted_adjoint_matrix, EigenSequence,
    FnMap, HermOperator, IdentificationPair, OperatorKind, PowerOptions, Resolvent,
    WeightedOperator,
};
use crate::par;

/// Result of [`d_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecDistance {
    pub value: f64,
    /// Index `k` (0-based) at which the maximum is attained.
    pub index: usize,
    /// True when the sequences had different lengths and the shorter one
    /// was padded with zeros.
    pub padded: bool,
    /// Larger of the two tail thresholds, to judge the truncation error.
    pub tail_threshold: f64,
}

/// `max_k |mu_k - nu_k|` over the zero-padded sequences.
pub fn d_spec(mu: &EigenSequence, nu: &EigenSequence) -> SpecDistance {
    let n = mu.len().max(nu.len());
    let (mut value, mut index) = (0.0, 0);
    for k in 0..n {
        let d = (mu.padded(k) - nu.padded(k)).abs();
        if d > value {
            value = d;
            index = k;
        }
    }
    SpecDistance {
        value,
        index,
        padded: mu.len() != nu.len(),
        tail_threshold: mu.tail_threshold().max(nu.tail_threshold()),
    }
}

/// Hausdorff distance between the value sets; multiplicities are ignored.
pub fn d_hausdorff_spec(mu: &EigenSequence, nu: &EigenSequence) -> f64 {
    directed_hausdorff(mu.values(), nu.values()).max(directed_hausdorff(nu.values(), mu.values()))
}

/// `sup_{x in a} min_{y in b} |x - y|` for `b` sorted non-increasing.
fn directed_hausdorff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .map(|&x| {
            let i = b.partition_point(|&y| y > x);
            let above = i.checked_sub(1).map_or(f64::INFINITY, |j| b[j] - x);
            let below = b.get(i).map_or(f64::INFINITY, |&y| x - y);
            above.min(below)
        })
        .fold(0.0, f64::max)
}

/// Result of [`d_uni_equal_dim`].
#[derive(Debug, Clone)]
pub struct UniDistance {
    pub value: f64,
    /// Unitary `U: H_a -> H_b` mapping the eigenbasis of `a` onto that of `b`.
    pub unitary: DMatrix<f64>,
    /// `||b - U a U*||`, recomputed; equals `value` up to rounding.
    pub achieved: f64,
}

/// Unitary distance in equal finite dimension. This is the distance of the
/// sorted spectra, attained by the eigenbasis-matching unitary; by Weyl's
/// inequality no unitary does better.
pub fn d_uni_equal_dim(a: &HermOperator, b: &HermOperator) -> Result<UniDistance> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!(
            "unitary distance needs equal dimensions, got {} and {}; compare padded spectra with d_spec instead",
            a.dim(),
            b.dim()
        )));
    }
    let (ea, eb) = (eig_sym(a)?, eig_sym(b)?);
    let value = ea
        .values
        .iter()
        .zip(&eb.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut psi_t_wa = ea.vectors.transpose();
    for c in 0..a.dim() {
        psi_t_wa.column_mut(c).scale_mut(a.weights()[c]);
    }
    let unitary = &eb.vectors * psi_t_wa;
    let achieved = conjugation_distance(a, b, &unitary)?;
    Ok(UniDistance {
        value,
        unitary,
        achieved,
    })
}

/// `||b - U a U*||` in the weighted norm of `b`'s space.
pub fn conjugation_distance(a: &HermOperator, b: &HermOperator, u: &DMatrix<f64>) -> Result<f64> {
    let ustar = crate::operators::weighted_adjoint(u, a.weights(), b.weights())?;
    let diff = b.matrix().to_dense() - u * a.matrix().to_dense() * ustar;
    dense_op_norm(&diff, b.weights(), b.weights())
}

/// The seven norms of a quasi-unitary-equivalence certificate and the
/// resulting error `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueReport {
    pub norm_j: f64,
    pub norm_jprime: f64,
    pub norm_jstar_minus_jprime: f64,
    /// `||(I - J'J) R||`
    pub defect_source: f64,
    /// `||(I - JJ') R~||`
    pub defect_target: f64,
    /// `||J R - R~ J||`
    pub intertwine_fwd: f64,
    /// `||J' R~ - R J'||`
    pub intertwine_bwd: f64,
    pub delta: f64,
}

impl QueReport {
    #[allow(clippy::too_many_arguments)]
    pub fn from_norms(
        norm_j: f64,
        norm_jprime: f64,
        norm_jstar_minus_jprime: f64,
        defect_source: f64,
        defect_target: f64,
        intertwine_fwd: f64,
        intertwine_bwd: f64,
    ) -> Self {
        let delta = [
            norm_j - 1.0,
            norm_jprime - 1.0,
            norm_jstar_minus_jprime,
            defect_source,
            defect_target,
            intertwine_fwd,
            intertwine_bwd,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        Self {
            norm_j,
            norm_jprime,
            norm_jstar_minus_jprime,
            defect_source,
            defect_target,
            intertwine_fwd,
            intertwine_bwd,
            delta,
        }
    }
}

fn as_resolvent(op: &HermOperator) -> Result<Box<dyn WeightedOperator>> {
    match (op.kind(), op.matrix()) {
        (OperatorKind::Resolvent, _) => Ok(Box::new(op.clone())),
        (OperatorKind::Laplacian, Matrix::Sparse(l)) => {
            Ok(Box::new(Resolvent::new(l.clone(), op.weights().to_vec())?))
        }
        (OperatorKind::Laplacian, Matrix::Dense(_)) => Ok(Box::new(op.to_resolvent()?)),
    }
}

/// Certifies `(R, R~)` with the identification pair. Laplacians are turned
/// into resolvents first (matrix-free when sparse). Every norm is a
/// power-iteration estimate.
pub fn que_certify(
    r: &HermOperator,
    rt: &HermOperator,
    pair: &IdentificationPair,
    opts: &PowerOptions,
) -> Result<QueReport> {
    let (r, rt) = (as_resolvent(r)?, as_resolvent(rt)?);
    que_certify_with(r.as_ref(), rt.as_ref(), pair, opts)
}

/// [`que_certify`] for matrix-free resolvents.
pub fn que_certify_with(
    r: &dyn WeightedOperator,
    rt: &dyn WeightedOperator,
    pair: &IdentificationPair,
    opts: &PowerOptions,
) -> Result<QueReport> {
    pair.check_against(r.dim(), rt.dim())?;
    let (w, wt) = (r.weights(), rt.weights());
    let j = &pair.j;
    // J, J', and their adjoints, all matrix-free.
    let j_fwd = |x: &[f64]| j.matvec(x);
    let j_adj = |y: &[f64]| adjoint_matvec(j, w, wt, y);
    let jp_fwd = |y: &[f64]| match &pair.jprime {
        Some(jp) => jp.matvec(y),
        None => j_adj(y),
    };
    let jp_adj = |x: &[f64]| match &pair.jprime {
        Some(jp) => adjoint_matvec(jp, wt, w, x),
        None => j_fwd(x),
    };

    let norm = |k: usize| -> Result<f64> {
        match k {
            0 => op_norm(&FnMap::new(w, wt, |x| Ok(j_fwd(x)), |y| Ok(j_adj(y))), opts),
            1 => op_norm(&FnMap::new(wt, w, |y| Ok(jp_fwd(y)), |x| Ok(jp_adj(x))), opts),
            2 => match &pair.jprime {
                None => Ok(0.0),
                Some(_) => op_norm(
                    &FnMap::new(
                        wt,
                        w,
                        |y| Ok(sub(&jp_fwd(y), &j_adj(y))),
                        |x| Ok(sub(&jp_adj(x), &j_fwd(x))),
                    ),
                    opts,
                ),
            },
            3 => op_norm(
                &FnMap::new(
                    w,
                    w,
                    |x| {
                        let u = r.apply(x)?;
                        Ok(sub(&u, &jp_fwd(&j_fwd(&u))))
                    },
                    |y| r.apply(&sub(y, &j_adj(&jp_adj(y)))),
                ),
                opts,
            ),
            4 => op_norm(
                &FnMap::new(
                    wt,
                    wt,
                    |y| {
                        let v = rt.apply(y)?;
                        Ok(sub(&v, &j_fwd(&jp_fwd(&v))))
                    },
                    |x| rt.apply(&sub(x, &jp_adj(&j_adj(x)))),
                ),
                opts,
            ),
            5 => op_norm(
                &FnMap::new(
                    w,
                    wt,
                    |x| Ok(sub(&j_fwd(&r.apply(x)?), &rt.apply(&j_fwd(x))?)),
                    |y| Ok(sub(&r.apply(&j_adj(y))?, &j_adj(&rt.apply(y)?))),
                ),
                opts,
            ),
            _ => op_norm(
                &FnMap::new(
                    wt,
                    w,
                    |y| Ok(sub(&jp_fwd(&rt.apply(y)?), &r.apply(&jp_fwd(y))?)),
                    |x| Ok(sub(&rt.apply(&jp_adj(x))?, &jp_adj(&r.apply(x)?))),
                ),
                opts,
            ),
        }
    };
    let n: Vec<f64> = par::map_range(7, norm).into_iter().collect::<Result<_>>()?;
    Ok(QueReport::from_norms(n[0], n[1], n[2], n[3], n[4], n[5], n[6]))
}

/// Recertifies with `J' := J*`. For a valid certificate with error
/// `delta <= 1` the new error is at most `3 delta`.
pub fn symmetrize_pair(
    r: &HermOperator,
    rt: &HermOperator,
    pair: &IdentificationPair,
    delta: f64,
    opts: &PowerOptions,
) -> Result<QueReport> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Contract(format!(
            "symmetrization needs delta in [0, 1], got {delta}"
        )));
    }
    let sym = IdentificationPair::adjoint_pair(pair.j.clone());
    que_certify(r, rt, &sym, opts)
}

/// Triangle function `Phi(a, b) = 3(a+b) + (a+b)^2 + 2ab + (a+b)^3 + a^2 b^2`.
pub fn phi(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Contract(format!("phi needs a, b >= 0, got ({a}, {b})")));
    }
    let (s, p) = (a + b, a * b);
    Ok(3.0 * s + s * s + 2.0 * p + s * s * s + p * p)
}

/// Certificate for `(r1, r3)` from certificates `(r1, r2)` and `(r2, r3)`,
/// using `J13 = J23 J12` and `J31 = J21 J32`.
pub fn compose_pairs(
    pair12: &IdentificationPair,
    pair23: &IdentificationPair,
    r1: &HermOperator,
    r2: &HermOperator,
    r3: &HermOperator,
    opts: &PowerOptions,
) -> Result<QueReport> {
    pair12.check_against(r1.dim(), r2.dim())?;
    pair23.check_against(r2.dim(), r3.dim())?;
    let j13 = pair23.j.matmul(&pair12.j)?;
    let j31 = match (&pair12.jprime, &pair23.jprime) {
        (None, None) => None,
        (jp12, jp23) => {
            let j21 = match jp12 {
                Some(m) => m.clone(),
                None => weighted_adjoint_matrix(&pair12.j, r1.weights(), r2.weights())?,
            };
            let j32 = match jp23 {
                Some(m) => m.clone(),
                None => weighted_adjoint_matrix(&pair23.j, r2.weights(), r3.weights())?,
            };
            Some(j21.matmul(&j32)?)
        }
    };
    que_certify(r1, r3, &IdentificationPair::new(j13, j31)?, opts)
}

/// Result of [`heat_defect`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HeatDefect {
    /// `||exp(-t Delta~) - J exp(-t Delta) J'||`
    pub norm: f64,
    /// `(16/t + 5) delta`
    pub bound: f64,
    pub delta: f64,
}

/// Largest dimension handled by the dense heat-semigroup evaluation.
pub const HEAT_DIM_CAP: usize = 2000;

/// Compares the heat operators of two Laplacians through the pair. The
/// certificate error `delta` is recomputed from the resolvents.
pub fn heat_defect(
    delta0: &HermOperator,
    delta1: &HermOperator,
    pair: &IdentificationPair,
    t: f64,
    opts: &PowerOptions,
) -> Result<HeatDefect> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Contract(format!("heat time must be positive, got {t}")));
    }
    if delta0.dim() > HEAT_DIM_CAP || delta1.dim() > HEAT_DIM_CAP {
        return Err(Error::Feasibility(format!(
            "dense heat evaluation is capped at dimension {HEAT_DIM_CAP}, got {} and {}",
            delta0.dim(),
            delta1.dim()
        )));
    }
    for op in [delta0, delta1] {
        if op.kind() != OperatorKind::Laplacian {
            return Err(Error::Contract("heat_defect expects Laplacians".into()));
        }
    }
    pair.check_against(delta0.dim(), delta1.dim())?;
    let heat = |op: &HermOperator| -> Result<DMatrix<f64>> {
        let eig = eig_sym(op)?;
        let f: Vec<f64> = eig.values.iter().map(|&l| (-t * l).exp()).collect();
        Ok(eig.reconstruct(&f, op.weights()))
    };
    let (e0, e1) = (heat(delta0)?, heat(delta1)?);
    let j = pair.j.to_dense();
    let jp = match &pair.jprime {
        Some(m) => m.to_dense(),
        None => crate::operators::weighted_adjoint(&j, delta0.weights(), delta1.weights())?,
    };
    let diff = e1 - &j * e0 * jp;
    let norm = dense_op_norm(&diff, delta1.weights(), delta1.weights())?;
    let delta = que_certify(delta0, delta1, pair, opts)?.delta;
    Ok(HeatDefect {
        norm,
        bound: (16.0 / t + 5.0) * delta,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenPair {
    pub mu: f64,
    pub mu_tilde: f64,
    pub gap: f64,
    /// Gap exceeds `10 delta`. A reporting heuristic, not a bound.
    pub flagged: bool,
}

/// Matches the sorted spectra index by index and reports the gaps.
pub fn eigenvalue_pairing(r: &HermOperator, rt: &HermOperator, delta: f64) -> Result<Vec<EigenPair>> {
    let (a, b) = (eig_sym(r)?.values, eig_sym(rt)?.values);
    Ok(a.iter()
        .zip(&b)
        .map(|(&mu, &mu_tilde)| {
            let gap = (mu - mu_tilde).abs();
            EigenPair {
                mu,
                mu_tilde,
                gap,
                flagged: gap > 10.0 * delta,
            }
        })
        .collect())
}

/// Measures `||phi(R~) J - J phi(R)||` for a user-supplied function, with
/// `phi` evaluated on the eigenvalues. No bound is claimed.
pub fn functional_transfer(
    r: &HermOperator,
    rt: &HermOperator,
    j: &Matrix,
    phi: impl Fn(f64) -> f64,
) -> Result<f64> {
    if j.ncols() != r.dim() || j.nrows() != rt.dim() {
        return Err(Error::Shape(format!(
            "J is {}x{} but the operators need {}x{}",
            j.nrows(),
            j.ncols(),
            rt.dim(),
            r.dim()
        )));
    }
    let apply = |op: &HermOperator| -> Result<DMatrix<f64>> {
        let eig = eig_sym(op)?;
        let f: Vec<f64> = eig.values.iter().map(|&l| phi(l)).collect();
        Ok(eig.reconstruct(&f, op.weights()))
    };
    let j = j.to_dense();
    let diff = apply(rt)? * &j - &j * apply(r)?;
    dense_op_norm(&diff, r.weights(), rt.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(v: Vec<f64>) -> EigenSequence {
        EigenSequence::new(v, 0.0).unwrap()
    }

    fn diag(v: &[f64]) -> HermOperator {
        HermOperator::from_diagonal(v, OperatorKind::Resolvent).unwrap()
    }

    #[test]
    fn d_spec_harmonic_sequences() {
        let (n, m) = (3.0, 7.0);
        let a = seq((1..=1000).map(|k| 1.0 / (k as f64 * n)).collect());
        let b = seq((1..=1000).map(|k| 1.0 / (k as f64 * m)).collect());
        let d = d_spec(&a, &b);
        assert!((d.value - (1.0 / n - 1.0 / m)).abs() < 1e-15);
        assert_eq!(d.index, 0);

        let a = seq((1..=100).map(|k| 1.0 / k as f64).collect());
        let b = seq((1..=100).map(|k| 0.5 / k as f64).collect());
        let d = d_spec(&a, &b);
        assert_eq!((d.value, d.index), (0.5, 0));
        assert_eq!(d_spec(&a, &a).value, 0.0);
    }

    #[test]
    fn d_spec_pads_shorter_sequence() {
        let d = d_spec(&seq(vec![1.0, 0.5, 0.25]), &seq(vec![1.0]));
        assert_eq!((d.value, d.index, d.padded), (0.5, 1, true));
    }

    #[test]
    fn hausdorff_ignores_multiplicity() {
        let a = seq(vec![1.0, 1.0, 0.5]);
        let b = seq(vec![1.0, 0.5, 0.5]);
        assert_eq!(d_hausdorff_spec(&a, &b), 0.0);
        assert!(d_spec(&a, &b).value > 0.0);
        let a = seq(vec![1.0, 0.5]);
        let b = seq(vec![0.9]);
        assert!((d_hausdorff_spec(&a, &b) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn d_uni_diagonal_pair_matches_rotation_grid() {
        let a = diag(&[0.9, 0.4]);
        let b = diag(&[0.8, 0.5]);
        let d = d_uni_equal_dim(&a, &b).unwrap();
        assert!((d.value - 0.1).abs() < 1e-14);
        assert!((d.achieved - d.value).abs() < 1e-12);
        let mut best = f64::INFINITY;
        for i in 0..10_000 {
            let th = std::f64::consts::PI * i as f64 / 10_000.0;
            let (c, s) = (th.cos(), th.sin());
            let u = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            best = best.min(conjugation_distance(&a, &b, &u).unwrap());
        }
        assert!((best - d.value).abs() < 1e-3);
    }

    #[test]
    fn d_uni_requires_equal_dim() {
        assert!(matches!(
            d_uni_equal_dim(&diag(&[0.5]), &diag(&[0.5, 0.2])),
            Err(Error::Contract(_))
        ));
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn unitary_certificate_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = diag(&[0.9, 0.6, 0.3, 0.1]);
        let u = random_orthogonal(4, &mut rng);
        let rt_m = &u * r.matrix().to_dense() * u.transpose();
        let rt_m = (&rt_m + rt_m.transpose()) * 0.5;
        let rt = HermOperator::resolvent(rt_m).unwrap();
        let pair = IdentificationPair::new(u.clone(), Some(Matrix::Dense(u.transpose()))).unwrap();
        let rep = que_certify(&r, &rt, &pair, &PowerOptions::default()).unwrap();
        assert!(rep.delta < 1e-8, "{rep:?}");
        assert!(d_uni_equal_dim(&r, &rt).unwrap().value < 1e-12);
    }

    #[test]
    fn zero_identification_gives_resolvent_norms() {
        let r = diag(&[0.7, 0.2]);
        let rt = diag(&[0.4, 0.3, 0.1]);
        let pair = IdentificationPair::adjoint_pair(DMatrix::zeros(3, 2));
        let rep = que_certify(&r, &rt, &pair, &PowerOptions::default()).unwrap();
        assert!((rep.delta - 0.7).abs() < 1e-6);
        assert!((rep.defect_source - 0.7).abs() < 1e-6);
        assert!((rep.defect_target - 0.4).abs() < 1e-6);
    }

    #[test]
    fn identity_pair_measures_perturbation() {
        let r = diag(&[0.8, 0.5, 0.2]);
        let rt = diag(&[0.81, 0.5, 0.2]);
        let pair = IdentificationPair::adjoint_pair(DMatrix::<f64>::identity(3, 3));
        let rep = que_certify(&r, &rt, &pair, &PowerOptions::default()).unwrap();
        assert!((rep.delta - 0.01).abs() < 1e-8, "{rep:?}");
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0, 0.0).unwrap(), 0.0);
        assert!((phi(0.1, 0.1).unwrap() - 0.6681).abs() < 1e-12);
        assert!(phi(-0.1, 0.0).is_err());
        assert!((phi(0.02, 0.02).unwrap() - 0.122_464_16).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_rejects_large_delta() {
        let r = diag(&[0.5]);
        let pair = IdentificationPair::adjoint_pair(DMatrix::<f64>::identity(1, 1));
        assert!(symmetrize_pair(&r, &r, &pair, 1.5, &PowerOptions::default()).is_err());
        let rep = symmetrize_pair(&r, &r, &pair, 0.0, &PowerOptions::default()).unwrap();
        assert!(rep.delta < 1e-12);
    }

    #[test]
    fn heat_defect_preconditions() {
        let l = HermOperator::from_diagonal(&[0.0, 1.0], OperatorKind::Laplacian).unwrap();
        let pair = IdentificationPair::adjoint_pair(DMatrix::<f64>::identity(2, 2));
        let opts = PowerOptions::default();
        assert!(matches!(heat_defect(&l, &l, &pair, 0.0, &opts), Err(Error::Contract(_))));
        let h = heat_defect(&l, &l, &pair, 1.0, &opts).unwrap();
        assert!(h.norm < 1e-14 && h.bound < 1e-12);
    }

    #[test]
    fn pairing_uniform_shift() {
        let r = diag(&[0.9, 0.5, 0.1]);
        let rt = diag(&[0.901, 0.501, 0.101]);
        let pairs = eigenvalue_pairing(&r, &rt, 0.001).unwrap();
        assert!(pairs.iter().all(|p| (p.gap - 0.001).abs() < 1e-12 && !p.flagged));
    }

    #[test]
    fn functional_transfer_identity_pair() {
        let r = diag(&[0.9, 0.5]);
        let j = Matrix::Dense(DMatrix::identity(2, 2));
        let v = functional_transfer(&r, &r, &j, |x| x * x).unwrap();
        assert!(v < 1e-15);
    }
}
