//! Numerical checks of the two inequalities behind the vertex estimates:
//! the one-dimensional Sobolev trace estimate and the Neumann min-max
//! (Poincare) estimate on a vertex block, chained into the bound on
//! cross-section versus block averages.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{FatGraphModel, PlusBlock};
use crate::error::{Error, Result};
use crate::linalg::{wdot, CsrMatrix};
use crate::operators::WeightedOperator;

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub ell0: f64,
    /// `coth(l_0 / 2)`, the constant under test.
    pub constant: f64,
    /// `coth(l_0)`, attained by `cosh(l_0 - s)`.
    pub sharp_constant: f64,
    pub trials: usize,
    pub passed: usize,
    /// Largest `|f(0)|^2 / (C (||f||^2 + ||f'||^2))` over the random trials.
    pub max_ratio: f64,
    /// The ratio for `f = 1`.
    pub constant_function_ratio: f64,
    /// The ratio for the interpolant of `cosh(l_0 - s)`.
    pub extremal_ratio: f64,
    /// The same, measured against `coth(l_0)`.
    pub extremal_ratio_sharp: f64,
}

/// `|f(0)|^2 / (||f||^2 + ||f'||^2)` for the piecewise-linear interpolant
/// of `values` on a uniform grid of step `h`, with exact integrals.
fn trace_quotient(values: &[f64], h: f64) -> f64 {
    let (mut l2, mut h1) = (0.0, 0.0);
    for w in values.windows(2) {
        let (a, b) = (w[0], w[1]);
        l2 += h * (a * a + a * b + b * b) / 3.0;
        h1 += (b - a) * (b - a) / h;
    }
    let denom = l2 + h1;
    if denom == 0.0 {
        0.0
    } else {
        values[0] * values[0] / denom
    }
}

/// Tests `|f(0)|^2 <= coth(l_0/2) (||f||^2 + ||f'||^2)` on `trials` random
/// piecewise-linear functions over `[0, l_0]` with `grid` points, and
/// evaluates the near-extremal `cosh(l_0 - s)`.
pub fn trace_constant_check(ell0: f64, trials: usize, grid: usize, seed: u64) -> Result<TraceReport> {
    if !(ell0 > 0.0 && ell0.is_finite()) {
        return Err(Error::Contract(format!("l_0 must be positive, got {ell0}")));
    }
    if grid < 2 {
        return Err(Error::Contract("trace check needs at least 2 grid points".into()));
    }
    let constant = 1.0 / (0.5 * ell0).tanh();
    let sharp_constant = 1.0 / ell0.tanh();
    let h = ell0 / (grid - 1) as f64;
    let s: Vec<f64> = (0..grid).map(|i| i as f64 * h).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut passed, mut max_ratio) = (0, 0.0f64);
    for t in 0..trials {
        let values: Vec<f64> = match t % 3 {
            // Low-frequency trigonometric data.
            0 => {
                let coef: Vec<(f64, f64)> = (0..8)
                    .map(|k| {
                        let d = 1.0 / (1.0 + k as f64);
                        (rng.gen_range(-d..d), rng.gen_range(-d..d))
                    })
                    .collect();
                s.iter()
                    .map(|&x| {
                        coef.iter()
                            .enumerate()
                            .map(|(k, (a, b))| {
                                let arg = k as f64 * std::f64::consts::PI * x / ell0;
                                a * arg.cos() + b * arg.sin()
                            })
                            .sum()
                    })
                    .collect()
            }
            // Exponential profiles, close to the extremal family.
            1 => {
                let alpha = rng.gen_range(0.0..3.0);
                let c = rng.gen_range(-0.5..0.5);
                s.iter().map(|&x| (alpha * (ell0 - x)).cosh() + c).collect()
            }
            _ => s.iter().map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let ratio = trace_quotient(&values, h) / constant;
        max_ratio = max_ratio.max(ratio);
        if ratio <= 1.0 {
            passed += 1;
        }
    }
    let extremal: Vec<f64> = s.iter().map(|&x| (ell0 - x).cosh()).collect();
    let q = trace_quotient(&extremal, h);
    Ok(TraceReport {
        ell0,
        constant,
        sharp_constant,
        trials,
        passed,
        max_ratio,
        constant_function_ratio: trace_quotient(&vec![1.0; grid], h) / constant,
        extremal_ratio: q / constant,
        extremal_ratio_sharp: q / sharp_constant,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinMaxReport {
    /// `lambda_2(X_v)` of the unit-scale block for each degree present.
    pub lambda2: BTreeMap<usize, f64>,
    pub trials: usize,
    pub poincare_passed: usize,
    /// Smallest `(rhs - lhs) / rhs` of the Poincare inequality.
    pub min_slack: f64,
    /// `lambda_2 ||u - avg u||^2 / ||grad u||^2` for the second
    /// eigenfunction, worst over degrees (equality expected).
    pub eigen_ratio: f64,
    /// Both sides vanish for constants.
    pub constant_ok: bool,
    pub chain_trials: usize,
    pub chain_passed: usize,
    /// Largest lhs / rhs of the average-difference bound over vertices and
    /// trials.
    pub chain_max_ratio: f64,
}

/// `||u - avg u||^2` and `||grad u||^2` on a block.
fn poincare_sides(k: &CsrMatrix, w: &[f64], u: &[f64]) -> (f64, f64) {
    let area: f64 = w.iter().sum();
    let avg = wdot(w, u, &vec![1.0; u.len()]) / area;
    let centred: Vec<f64> = u.iter().map(|x| x - avg).collect();
    (wdot(w, &centred, &centred), wdot(&vec![1.0; u.len()], u, &k.matvec(u)))
}

/// Verifies the Poincare inequality `||u - avg u||^2 <= ||grad u||^2 /
/// lambda_2` on the unit-scale blocks of `fm`, its equality case, and the
/// averaged trace bound
/// `eps sum_e |avg_e u - avg_v u|^2 <= eps coth(1/2) (1/lambda_2 + 1) ||grad u||^2_{X_v,eps}`
/// on random data over the strip.
pub fn minmax_check(fm: &FatGraphModel, trials: usize, seed: u64) -> Result<MinMaxReport> {
    let graph = fm.graph();
    let n = fm.n_t() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda2 = BTreeMap::new();
    let (mut poincare_passed, mut min_slack) = (0, f64::INFINITY);
    let mut eigen_ratio = 1.0f64;
    let mut constant_ok = true;
    let degrees: std::collections::BTreeSet<usize> =
        (0..graph.num_vertices()).map(|v| graph.degree(v)).collect();
    for &d in &degrees {
        let block = PlusBlock::new(d, n)?;
        let (l2, phi2) = block.lambda2()?;
        lambda2.insert(d, l2);
        let (k, w) = block.assemble(1.0 / n as f64);
        let m = block.num_nodes();

        let (lhs, rhs) = poincare_sides(&k, &w, &phi2);
        let ratio = l2 * lhs / rhs;
        if (ratio - 1.0).abs() > (eigen_ratio - 1.0).abs() {
            eigen_ratio = ratio;
        }
        let (lhs, rhs) = poincare_sides(&k, &w, &vec![1.0; m]);
        constant_ok &= lhs < 1e-24 && rhs.abs() < 1e-20;

        for t in 0..trials {
            let u: Vec<f64> = if t % 2 == 0 {
                (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()
            } else {
                let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                block
                    .points()
                    .iter()
                    .map(|&(x, y)| {
                        let (x, y) = (x as f64 / n as f64, y as f64 / n as f64);
                        a * x + b * y + c * x * y + (x * y).sin() * rng.gen_range(-0.1..0.1)
                    })
                    .collect()
            };
            let (lhs, grad) = poincare_sides(&k, &w, &u);
            let rhs = grad / l2;
            let slack = if rhs > 0.0 { (rhs - lhs) / rhs } else { 0.0 };
            min_slack = min_slack.min(slack);
            if lhs <= rhs * (1.0 + 1e-12) {
                poincare_passed += 1;
            }
        }
    }

    let (chain_passed, chain_max_ratio) = average_chain(fm, &lambda2, trials, &mut rng)?;
    Ok(MinMaxReport {
        lambda2,
        trials,
        poincare_passed,
        min_slack,
        eigen_ratio,
        constant_ok,
        chain_trials: trials,
        chain_passed,
        chain_max_ratio,
    })
}

fn average_chain(
    fm: &FatGraphModel,
    lambda2: &BTreeMap<usize, f64>,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64)> {
    let graph = fm.graph();
    let eps = fm.eps();
    let tau = fm.transverse_weights();
    let omega = fm.block_mass();
    let collar = 1.0 / 0.5f64.tanh();
    let resolvent = fm.resolvent()?;

    // Block-only stiffness of each vertex, in global indices.
    let block_energy: Vec<CsrMatrix> = (0..graph.num_vertices())
        .map(|v| {
            let (k, _) = fm.block(v).assemble(fm.hb());
            let off = fm.block_nodes(v).start;
            let t: Vec<_> = k.triplets().into_iter().map(|(r, c, x)| (r + off, c + off, x)).collect();
            CsrMatrix::from_triplets(fm.dim(), fm.dim(), &t)
        })
        .collect::<Result<_>>()?;

    let (mut passed, mut worst) = (0, 0.0f64);
    for t in 0..trials {
        let noise: Vec<f64> = (0..fm.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = if t % 2 == 0 { noise } else { resolvent.apply(&noise)? };
        let mut ok = true;
        for v in 0..graph.num_vertices() {
            let nodes = fm.block_nodes(v);
            let avg_v: f64 = nodes.clone().map(|p| omega[p] * u[p]).sum::<f64>() / fm.block_area(v);
            let mut lhs = 0.0;
            for e in 0..graph.num_edges() {
                let (a, b) = graph.ends(e);
                for (end, terminal) in [(a, false), (b, true)] {
                    if end == v {
                        let avg_e: f64 = fm
                            .junction(e, terminal)
                            .iter()
                            .zip(&tau)
                            .map(|(&p, t)| t * u[p])
                            .sum::<f64>()
                            / eps;
                        lhs += (avg_e - avg_v).powi(2);
                    }
                }
            }
            lhs *= eps;
            let grad = wdot(&vec![1.0; fm.dim()], &u, &block_energy[v].matvec(&u));
            let rhs = eps * collar * (1.0 / lambda2[&graph.degree(v)] + 1.0) * grad;
            if rhs > 0.0 {
                worst = worst.max(lhs / rhs);
            }
            ok &= lhs <= rhs * (1.0 + 1e-12) + 1e-300;
        }
        if ok {
            passed += 1;
        }
    }
    Ok((passed, worst))
}
