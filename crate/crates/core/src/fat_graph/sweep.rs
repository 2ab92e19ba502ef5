//! The `eps`-sweep: one row of measurements per strip width, plus log-log
//! slope fits.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ab_operators, que_2_defect, FatPair, PlusBlock};
use crate::distances::que_certify_with;
use crate::error::{Error, Result};
use crate::metric_graph::MetricGraph;
use crate::operators::{lowest_eigenvalues, EigOptions, PowerOptions};
use crate::par;

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub n_t: usize,
    /// Number of eigenvalues compared per row.
    pub k: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n_t: 6,
            k: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub defect_norm: f64,
    pub a_eps: f64,
    pub b_eps: f64,
    pub a0: f64,
    pub b0: f64,
    /// Certified error of `(R_0, R_eps, J, J*)`.
    pub delta: f64,
    /// `|lambda_k(Delta_eps) - lambda_k(Delta_0)|`, `k = 1..`.
    pub eig_gaps: Vec<f64>,
    pub h_long: f64,
    pub dim_eps: usize,
    pub dim_graph: usize,
    /// `||(I - J J*) R_eps||`
    pub delta_eps: f64,
    pub b_eps_flux: f64,
    pub factorization_residual: f64,
    pub factorization_residual_literal: f64,
    pub jstar_j_error: f64,
    pub eig_graph: Vec<f64>,
    pub eig_eps: Vec<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(eps: f64, k: usize, err: &Error) -> Self {
        Self {
            eps,
            defect_norm: f64::NAN,
            a_eps: f64::NAN,
            b_eps: f64::NAN,
            a0: f64::NAN,
            b0: f64::NAN,
            delta: f64::NAN,
            eig_gaps: vec![f64::NAN; k],
            h_long: f64::NAN,
            dim_eps: 0,
            dim_graph: 0,
            delta_eps: f64::NAN,
            b_eps_flux: f64::NAN,
            factorization_residual: f64::NAN,
            factorization_residual_literal: f64::NAN,
            jstar_j_error: f64::NAN,
            eig_graph: vec![f64::NAN; k],
            eig_eps: vec![f64::NAN; k],
            error: Some(err.to_string()),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub n_t: usize,
    pub k: usize,
    pub seed: u64,
    /// Shortest edge length.
    pub ell0: f64,
    /// Smallest `lambda_2(X_v)` over the unit-scale vertex blocks.
    pub lambda2: f64,
    /// `max_v vol(X_v) / deg v`.
    pub c_vol: f64,
    /// Rows by descending `eps`.
    pub rows: Vec<SweepRow>,
}

/// Least-squares slope of `log y` against `log eps` over the points with
/// finite `y > 1e-12`; `None` when fewer than two remain.
pub fn fit_slope(eps: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(y)
        .filter(|(e, v)| **e > 0.0 && v.is_finite() && **v > 1e-12)
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

impl SweepResult {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(SweepRow::ok)
    }

    fn column(&self, f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Fitted log-log slopes of every measured column.
    pub fn slopes(&self) -> Vec<(String, Option<f64>)> {
        let eps = self.column(|r| r.eps);
        let mut out = vec![];
        let mut push = |name: &str, f: &dyn Fn(&SweepRow) -> f64| {
            out.push((name.to_string(), fit_slope(&eps, &self.column(f))));
        };
        push("defect_norm", &|r| r.defect_norm);
        push("a_eps", &|r| r.a_eps);
        push("b_eps", &|r| r.b_eps);
        push("a0", &|r| r.a0);
        push("b0", &|r| r.b0);
        push("delta", &|r| r.delta);
        push("delta_eps", &|r| r.delta_eps);
        for k in 0..self.k {
            push(&format!("eig_gap_{}", k + 1), &|r| r.eig_gaps[k]);
        }
        out
    }

    pub fn slope(&self, name: &str) -> Option<f64> {
        self.slopes().into_iter().find(|(n, _)| n == name).and_then(|(_, s)| s)
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("eps,defect_norm,a_eps,b_eps,a0,b0,delta");
        for k in 1..=self.k {
            write!(h, ",eig_gap_{k}").unwrap();
        }
        h.push_str(",h_long,dim_eps");
        h
    }

    /// CSV with shortest round-trip scientific notation for every float.
    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for r in &self.rows {
            write!(
                s,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.eps, r.defect_norm, r.a_eps, r.b_eps, r.a0, r.b0, r.delta
            )
            .unwrap();
            for g in &r.eig_gaps {
                write!(s, ",{g:e}").unwrap();
            }
            if r.ok() {
                writeln!(s, ",{:e},{}", r.h_long, r.dim_eps).unwrap();
            } else {
                writeln!(s, ",NaN,NaN").unwrap();
            }
        }
        s
    }
}

fn sweep_row(graph: &MetricGraph, eps: f64, opts: &SweepOptions) -> Result<SweepRow> {
    let fp = FatPair::new(graph, eps, opts.n_t)?;
    let po = PowerOptions::seeded(opts.seed);
    let ab = ab_operators(&fp, &po)?;
    let delta_eps = que_2_defect(&fp, &po)?;
    let cert = que_certify_with(fp.r0(), fp.r_eps(), &fp.pair, &po)?;

    let eo = EigOptions {
        seed: opts.seed,
        ..EigOptions::default()
    };
    let eig_graph = lowest_eigenvalues(fp.gm.laplacian(), fp.gm.weights(), opts.k, &eo)?;
    let eig_eps = lowest_eigenvalues(fp.fm.laplacian(), fp.fm.weights(), opts.k, &eo)?;
    let eig_gaps = eig_graph.iter().zip(&eig_eps).map(|(a, b)| (a - b).abs()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..fp.gm.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Ok(SweepRow {
        eps,
        defect_norm: ab.defect,
        a_eps: ab.a_eps,
        b_eps: ab.b_eps,
        a0: ab.a0,
        b0: ab.b0,
        delta: cert.delta,
        eig_gaps,
        h_long: fp.fm.h_long(),
        dim_eps: fp.fm.dim(),
        dim_graph: fp.gm.dim(),
        delta_eps,
        b_eps_flux: ab.b_eps_flux,
        factorization_residual: ab.residual,
        factorization_residual_literal: ab.residual_literal,
        jstar_j_error: fp.jstar_j_error(&samples),
        eig_graph,
        eig_eps,
        error: None,
    })
}

/// Runs one row per `eps` (in parallel when enabled). A failing row is
/// recorded with NaN entries and its error; the other rows still run.
pub fn run_sweep(graph: &MetricGraph, eps: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    if eps.is_empty() {
        return Err(Error::Contract("sweep needs at least one eps".into()));
    }
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Contract(format!("invalid eps {bad}")));
    }
    if opts.k == 0 {
        return Err(Error::Contract("sweep needs k >= 1".into()));
    }
    let n = opts.n_t.max(2) - 1;
    let mut lambda2 = f64::INFINITY;
    let mut c_vol = 0.0f64;
    for v in 0..graph.num_vertices() {
        let d = graph.degree(v);
        let block = PlusBlock::new(d, n)?;
        lambda2 = lambda2.min(block.lambda2()?.0);
        c_vol = c_vol.max((1 + d) as f64 / d as f64);
    }
    let mut sorted = eps.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rows = par::map(&sorted, |&e| {
        sweep_row(graph, e, opts)
            .unwrap_or_else(|err| SweepRow::failed(e, opts.k, &err.context(format!("eps = {e}"))))
    });
    Ok(SweepResult {
        n_t: opts.n_t,
        k: opts.k,
        seed: opts.seed,
        ell0: graph.min_length(),
        lambda2,
        c_vol,
        rows,
    })
}
