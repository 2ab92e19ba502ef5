//! Plus-shaped vertex blocks and the rectangle-cell assembly shared with the
//! tubes.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::operators::{eig_sym, HermOperator, OperatorKind};
use crate::linalg::Matrix;

/// Largest vertex degree the plus geometry supports.
pub const MAX_DEGREE: usize = 4;

/// Arm slots in assignment order: east, north, west, south.
pub const SLOTS: [&str; 4] = ["E", "N", "W", "S"];

/// A plus-shaped block on a `3n x 3n` cell grid: the centre square of
/// `n x n` cells plus one `n x n` arm per attached edge. Grid points are
/// `(a, b)` with `0 <= a, b <= 3n`.
#[derive(Debug, Clone)]
pub struct PlusBlock {
    n: usize,
    degree: usize,
    /// Local node index of each grid point, row-major in `(a, b)`.
    index: Vec<Option<usize>>,
    points: Vec<(usize, usize)>,
    cells: Vec<(usize, usize)>,
}

impl PlusBlock {
    pub fn new(degree: usize, n: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::Feasibility(format!(
                "plus-block geometry supports degree 1..={MAX_DEGREE}, got {degree}"
            )));
        }
        if n == 0 {
            return Err(Error::Contract("block needs at least one cell per arm".into()));
        }
        let side = 3 * n;
        let inside = |ca: usize, cb: usize| {
            let band = |c: usize| (n..2 * n).contains(&c);
            if band(ca) && band(cb) {
                return true;
            }
            let slot = if ca >= 2 * n && band(cb) {
                0
            } else if band(ca) && cb >= 2 * n {
                1
            } else if ca < n && band(cb) {
                2
            } else if band(ca) && cb < n {
                3
            } else {
                return false;
            };
            slot < degree
        };
        let mut cells = Vec::new();
        let mut used = vec![false; (side + 1) * (side + 1)];
        for cb in 0..side {
            for ca in 0..side {
                if inside(ca, cb) {
                    cells.push((ca, cb));
                    for (a, b) in [(ca, cb), (ca + 1, cb), (ca, cb + 1), (ca + 1, cb + 1)] {
                        used[b * (side + 1) + a] = true;
                    }
                }
            }
        }
        let mut index = vec![None; used.len()];
        let mut points = Vec::new();
        for (k, &u) in used.iter().enumerate() {
            if u {
                index[k] = Some(points.len());
                points.push((k % (side + 1), k / (side + 1)));
            }
        }
        Ok(Self {
            n,
            degree,
            index,
            points,
            cells,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_nodes(&self) -> usize {
        self.points.len()
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn local(&self, a: usize, b: usize) -> Option<usize> {
        let side = 3 * self.n;
        if a > side || b > side {
            return None;
        }
        self.index[b * (side + 1) + a]
    }

    /// Grid point `j` (`0..=n`) on the outer face of arm `slot`.
    pub fn face_point(&self, slot: usize, j: usize) -> (usize, usize) {
        let n = self.n;
        match slot {
            0 => (3 * n, n + j),
            1 => (n + j, 3 * n),
            2 => (0, n + j),
            _ => (n + j, 0),
        }
    }

    pub fn face_node(&self, slot: usize, j: usize) -> usize {
        let (a, b) = self.face_point(slot, j);
        self.local(a, b).expect("face of an existing arm")
    }

    /// Corner nodes `[lower-left, lower-right, upper-left, upper-right]`.
    pub fn cell_corners(&self, (ca, cb): (usize, usize)) -> [usize; 4] {
        let at = |a, b| self.local(a, b).expect("cell corner");
        [at(ca, cb), at(ca + 1, cb), at(ca, cb + 1), at(ca + 1, cb + 1)]
    }

    /// Stand-alone Neumann Laplacian of the block with cells of side `h`:
    /// stiffness triplets and lumped weights.
    pub fn assemble(&self, h: f64) -> (CsrMatrix, Vec<f64>) {
        let mut k = Vec::new();
        let mut w = vec![0.0; self.num_nodes()];
        for &c in &self.cells {
            add_cell(self.cell_corners(c), h, h, &mut k, &mut w);
        }
        let m = self.num_nodes();
        (CsrMatrix::from_triplets(m, m, &k).expect("local indices"), w)
    }

    /// Second Neumann eigenvalue `lambda_2` of the unit-scale block
    /// (arm width 1) and its eigenvector.
    pub fn lambda2(&self) -> Result<(f64, Vec<f64>)> {
        let (k, w) = self.assemble(1.0 / self.n as f64);
        let inv: Vec<f64> = w.iter().map(|w| 1.0 / w).collect();
        let op = HermOperator::new(
            Matrix::Sparse(k.scale_rows(&inv)),
            w,
            OperatorKind::Laplacian,
            false,
        )?;
        let eig = eig_sym(&op)?;
        let m = op.dim();
        if m < 2 {
            return Err(Error::Contract("block has a single node".into()));
        }
        Ok((eig.values[m - 2], eig.vectors.column(m - 2).iter().copied().collect()))
    }
}

/// Adds the 5-point contributions of one `hx x hy` rectangle: each cell
/// edge couples its endpoints, and each corner receives a quarter of the
/// area as lumped mass.
pub(crate) fn add_cell(
    [ll, lr, ul, ur]: [usize; 4],
    hx: f64,
    hy: f64,
    k: &mut Vec<(usize, usize, f64)>,
    w: &mut [f64],
) {
    let horizontal = hy / (2.0 * hx);
    let vertical = hx / (2.0 * hy);
    for (p, q, c) in [
        (ll, lr, horizontal),
        (ul, ur, horizontal),
        (ll, ul, vertical),
        (lr, ur, vertical),
    ] {
        k.extend([(p, p, c), (q, q, c), (p, q, -c), (q, p, -c)]);
    }
    for p in [ll, lr, ul, ur] {
        w[p] += 0.25 * hx * hy;
    }
}
