#![allow(dead_code)]

use nalgebra::DMatrix;
use opdist::{HermOperator, IdentificationPair, Matrix, OperatorKind};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Haar-ish random orthogonal matrix from a QR factorisation.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0f64..1.0));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DMatrix::from_diagonal(&r.diagonal().map(|d| if d < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// `Q diag(values) Q^T` with unit weights.
pub fn conjugated(values: &[f64], q: &DMatrix<f64>, kind: OperatorKind) -> HermOperator {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values));
    let m = q * d * q.transpose();
    let m = (&m + m.transpose()) * 0.5;
    HermOperator::new(Matrix::Dense(m), vec![1.0; values.len()], kind, false).unwrap()
}

/// Random resolvent spectrum in `[lo, 1]`.
pub fn random_spectrum(n: usize, lo: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=1.0)).collect()
}

pub fn random_resolvent(n: usize, rng: &mut ChaCha8Rng) -> HermOperator {
    let values = random_spectrum(n, 0.05, rng);
    let q = random_orthogonal(n, rng);
    conjugated(&values, &q, OperatorKind::Resolvent)
}

/// A resolvent pair `(R, R~ = U R U^T + small)` with `J = U` perturbed, so
/// that the certificate error is small but nonzero.
pub fn near_unitary_pair(
    n: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (HermOperator, HermOperator, IdentificationPair) {
    let lap: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..20.0)).collect();
    let q = random_orthogonal(n, rng);
    let u = random_orthogonal(n, rng);
    let perturbed: Vec<f64> = lap.iter().map(|l| l * (1.0 + noise * rng.gen_range(-1.0..1.0))).collect();
    let r = conjugated(&lap.iter().map(|l| 1.0 / (1.0 + l)).collect::<Vec<_>>(), &q, OperatorKind::Resolvent);
    let rt = conjugated(
        &perturbed.iter().map(|l| 1.0 / (1.0 + l)).collect::<Vec<_>>(),
        &(&u * &q),
        OperatorKind::Resolvent,
    );
    let j = u.map(|x| x * (1.0 + noise * rng.gen_range(-1.0..1.0)));
    (r, rt, IdentificationPair::new(Matrix::Dense(j), None).unwrap())
}

/// Laplacian pair in the same arrangement as [`near_unitary_pair`].
pub fn near_unitary_laplacians(
    n: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (HermOperator, HermOperator, IdentificationPair) {
    let lap: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..20.0)).collect();
    let q = random_orthogonal(n, rng);
    let u = random_orthogonal(n, rng);
    let perturbed: Vec<f64> = lap.iter().map(|l| l * (1.0 + noise * rng.gen_range(-1.0..1.0))).collect();
    let d0 = conjugated(&lap, &q, OperatorKind::Laplacian);
    let d1 = conjugated(&perturbed, &(&u * &q), OperatorKind::Laplacian);
    let j = u.map(|x| x * (1.0 + noise * rng.gen_range(-1.0..1.0)));
    (d0, d1, IdentificationPair::new(Matrix::Dense(j), None).unwrap())
}

/// Square roots `k` of the Kirchhoff eigenvalues of a star whose edges have
/// Neumann ends, up to `k_max`, sorted, with multiplicity.
///
/// Eigenfunctions are `A_i cos(k (l_i - s))` with `s` measured from the
/// centre. Either the centre value vanishes, which needs `cos(k l_i) = 0` on
/// at least two edges, or `sum_i tan(k l_i) = 0`, solved by bisection
/// between consecutive poles.
pub fn star_wavenumbers(lengths: &[f64], k_max: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut poles: Vec<f64> = vec![];
    for &l in lengths {
        let mut m = 0;
        loop {
            let p = (m as f64 + 0.5) * std::f64::consts::PI / l;
            if p > k_max {
                break;
            }
            poles.push(p);
            m += 1;
        }
    }
    poles.sort_by(f64::total_cmp);
    poles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    // Centre value zero: a pole shared by `c` edges carries `c - 1`
    // eigenfunctions.
    for &p in &poles {
        let c = lengths
            .iter()
            .filter(|&&l| {
                let m = p * l / std::f64::consts::PI - 0.5;
                (m - m.round()).abs() < 1e-9
            })
            .count();
        out.extend(std::iter::repeat_n(p, c.saturating_sub(1)));
    }

    // Secular roots: `sum tan(k l_i)` increases between poles from -inf to
    // +inf, so each gap holds exactly one root.
    let f = |k: f64| lengths.iter().map(|l| (k * l).tan()).sum::<f64>();
    let mut edges = vec![0.0];
    edges.extend(&poles);
    for w in edges.windows(2) {
        // Below the first pole `f > 0`: only the constant, already counted.
        let (mut a, mut b) = (w[0] + 1e-12, w[1] - 1e-12);
        if f(a) > 0.0 || f(b) < 0.0 {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        out.push(0.5 * (a + b));
    }
    out.sort_by(f64::total_cmp);
    out
}

pub fn star_eigenvalues(lengths: &[f64], count: usize) -> Vec<f64> {
    let mut kmax = 10.0;
    loop {
        let ks = star_wavenumbers(lengths, kmax);
        if ks.len() > count + 2 {
            return ks[..count].iter().map(|k| k * k).collect();
        }
        kmax *= 2.0;
    }
}
