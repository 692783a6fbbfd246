//! Dense real matrices and the handful of primitives the rest of the crate
//! needs: element-wise products, LU solves with partial pivoting, the
//! infinity norm, and the Perron root of nonnegative matrices.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::graph::{tarjan_scc, Digraph};

/// Relative pivot threshold: a pivot below `PIVOT_TOLERANCE * ||a||_inf`
/// is treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Diagonal shift applied during power iteration so that periodic
/// nonnegative matrices have a unique dominant eigenvalue.
pub const POWER_SHIFT: f64 = 1e-3;
pub const POWER_MAX_ITERATIONS: usize = 100_000;
pub const POWER_TOLERANCE: f64 = 1e-12;

const NODA_MAX_ITERATIONS: usize = 100;
/// Relative gap between the Collatz-Wielandt bounds at which the Perron
/// root is accepted.
const NODA_TOLERANCE: f64 = 1e-14;

/// Row-major dense matrix with finite entries and at least one row and column.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(
            rows > 0 && cols > 0,
            "matrix must have at least one row and column"
        );
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// The all-ones matrix, identity element of the Hadamard product.
    pub fn ones(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![1.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from nested rows, rejecting ragged, empty or
    /// non-finite input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::Dimension("matrix has no rows".into()));
        }
        let n_cols = rows[0].as_ref().len();
        if n_cols == 0 {
            return Err(Error::Dimension("matrix has no columns".into()));
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("entry ({i}, {j}) is not finite")));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Principal submatrix on the given index set, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(idx.len(), idx.len(), |a, b| self[(idx[a], idx[b])])
    }

    /// Reorders rows and columns so that entry `(a, b)` of the result is
    /// `self[(perm[a], perm[b])]`.
    pub fn permuted(&self, perm: &[usize]) -> Matrix {
        assert_eq!(perm.len(), self.rows);
        self.submatrix(perm)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.rows).map(|i| self.row(i)))
            .finish()
    }
}

/// Element-wise product `a ∘ b`.
pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Dimension(format!(
            "hadamard of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &Matrix) -> f64 {
    (0..a.rows)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// LU factorization with row pivoting, `P a = L U`, stored compactly.
///
/// Factor once and call [`Lu::solve`] for each right-hand side.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "cannot factor a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let threshold = PIVOT_TOLERANCE * inf_norm(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::Singular {
                    pivot: k,
                    magnitude: pivot,
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let diag = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / diag;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension(format!(
                "right-hand side of length {} for a {n}x{n} system",
                b.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(u, v)| u * v)
                .sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }
}

/// Solves `a x = b`.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(Error::Dimension(format!(
            "right-hand side of length {} for {} rows",
            b.len(),
            a.rows
        )));
    }
    Lu::factor(a)?.solve(b)
}

/// Perron root of a nonnegative square matrix.
///
/// Vertices outside every cycle are trimmed first (they only contribute
/// zero eigenvalues), and the remaining core is split into strongly
/// connected blocks whose roots are computed separately. Each block is
/// warmed up by power iteration on `B + εI` and then polished by Noda's
/// shifted inverse iteration, which stops once the Collatz-Wielandt bounds
/// `min (Bx)_i/x_i <= ρ <= max (Bx)_i/x_i` agree to working precision.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius of a {}x{} matrix",
            a.rows, a.cols
        )));
    }
    if !a.is_nonnegative() {
        return Err(Error::Domain(
            "spectral radius requires a nonnegative matrix".into(),
        ));
    }

    let core = cyclic_core(a);
    if core.is_empty() {
        return Ok(0.0);
    }
    let b = a.submatrix(&core);
    let g = Digraph::from_edges(
        b.rows,
        (0..b.rows)
            .flat_map(|i| (0..b.rows).map(move |j| (i, j)))
            .filter(|&(i, j)| b[(i, j)] > 0.0),
    );
    let mut rho: f64 = 0.0;
    for block in tarjan_scc(&g) {
        let c = b.submatrix(&block);
        // Singletons without a self-loop are acyclic.
        if c.rows == 1 {
            rho = rho.max(c[(0, 0)]);
        } else {
            rho = rho.max(irreducible_radius(&c)?);
        }
    }
    Ok(rho)
}

/// Perron root of an irreducible nonnegative matrix of order at least two.
fn irreducible_radius(b: &Matrix) -> Result<f64> {
    let n = b.rows;
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut previous = f64::NAN;
    for _ in 0..POWER_MAX_ITERATIONS {
        let mut y = b.mul_vec(&x)?;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += POWER_SHIFT * xi;
        }
        let rayleigh: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if (rayleigh - previous).abs() < POWER_TOLERANCE {
            break;
        }
        previous = rayleigh;
    }

    for _ in 0..NODA_MAX_ITERATIONS {
        let bx = b.mul_vec(&x)?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (num, den) in bx.iter().zip(&x) {
            let r = num / den;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !(lo.is_finite() && hi.is_finite()) {
            break;
        }
        if hi - lo <= NODA_TOLERANCE * hi {
            return Ok(0.5 * (lo + hi));
        }
        // hi >= ρ, so σI - B is a nonsingular M-matrix unless hi == ρ.
        let mut shifted = b.scale(-1.0);
        for i in 0..n {
            shifted[(i, i)] += hi;
        }
        let y = match Lu::factor(&shifted).and_then(|lu| lu.solve(&x)) {
            Ok(y) => y,
            Err(Error::Singular { .. }) => return Ok(hi),
            Err(e) => return Err(e),
        };
        let norm = vec_inf_norm(&y);
        if !(norm > 0.0 && norm.is_finite()) {
            return Ok(hi);
        }
        x = y.iter().map(|v| v.abs() / norm).collect();
        if x.contains(&0.0) {
            break;
        }
    }
    Err(Error::IterationLimit {
        iterations: POWER_MAX_ITERATIONS + NODA_MAX_ITERATIONS,
    })
}

/// Indices surviving repeated removal of vertices with no incoming or no
/// outgoing edge inside the surviving set.
fn cyclic_core(a: &Matrix) -> Vec<usize> {
    let n = a.rows;
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for v in 0..n {
            if !alive[v] {
                continue;
            }
            let has_out = (0..n).any(|k| alive[k] && a[(v, k)] > 0.0);
            let has_in = (0..n).any(|k| alive[k] && a[(k, v)] > 0.0);
            if !(has_out && has_in) {
                alive[v] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&v| alive[v]).collect()
}
