//! Dense vectors and symmetric matrices.
//!
//! Sized for per-neuron parameter dimensions (d up to a few hundred), so the
//! eigensolver is a plain cyclic Jacobi sweep over a full `d × d` buffer.

use std::fmt;

use crate::error::{Error, Result};

/// Relative off-diagonal norm at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Dense symmetric matrix in row-major storage.
///
/// Every constructor produces an exactly symmetric buffer and every mutator
/// writes `(i, j)` and `(j, i)` together, so `A[i][j] == A[j][i]` bitwise.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds from the upper triangle: `f(i, j)` is called for `i <= j` only.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from full rows, rejecting anything not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: r.len(),
                    context: "SymMatrix::from_rows row length",
                });
            }
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric at ({i}, {j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        Ok(SymMatrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Symmetrizes an arbitrary square matrix as `(A + Aᵀ)/2`.
    pub fn symmetrize(n: usize, full: &[f64]) -> Self {
        assert_eq!(full.len(), n * n, "symmetrize: buffer is not n×n");
        Self::from_upper_fn(n, |i, j| 0.5 * (full[i * n + j] + full[j * n + i]))
    }

    /// Outer product `alpha * u uᵀ`.
    pub fn outer(alpha: f64, u: &[f64]) -> Self {
        Self::from_upper_fn(u.len(), |i, j| alpha * u[i] * u[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &SymMatrix) {
        assert_eq!(self.n, other.n, "add_scaled: dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "mat_vec: dimension mismatch");
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ A v`
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mat_vec(v))
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymMatrix[")?;
        for i in 0..self.n {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{:?}", self.row(i))?;
        }
        f.write_str("]")
    }
}

/// An eigenvalue with its unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Full eigendecomposition of a symmetric matrix, ascending by eigenvalue.
///
/// Eigenvectors are unit norm with their first non-negligible component
/// positive. Ties in eigenvalue keep the order of the diagonal slot the
/// Jacobi iteration converged them into, so output is a pure function of the
/// input bits.
pub fn eig_sym(a: &SymMatrix) -> Result<Vec<EigenPair>> {
    if !a.is_finite() {
        return Err(Error::NonFinite("eig_sym input"));
    }
    let n = a.dim();
    let mut m = a.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&m, n) <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, n, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]).then(i.cmp(&j)));

    Ok(order
        .into_iter()
        .map(|k| {
            let mut vector: Vec<f64> = (0..n).map(|i| v[i * n + k]).collect();
            let nrm = norm2(&vector);
            vector.iter_mut().for_each(|x| *x /= nrm);
            fix_sign(&mut vector);
            EigenPair {
                value: m[k * n + k],
                vector,
            }
        })
        .collect())
}

/// Smallest eigenpair; the same pair as `eig_sym(a)?[0]`.
pub fn min_eigenpair(a: &SymMatrix) -> Result<EigenPair> {
    if a.dim() == 0 {
        return Err(Error::InvalidArgument("min_eigenpair of a 0×0 matrix".into()));
    }
    Ok(eig_sym(a)?.swap_remove(0))
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[i * n + j] * m[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation `A ← PᵀAP`, `V ← VP` annihilating `A[p][q]`.
fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let (akp, akq) = (m[k * n + p], m[k * n + q]);
        m[k * n + p] = c * akp - s * akq;
        m[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (m[p * n + k], m[q * n + k]);
        m[p * n + k] = c * apk - s * aqk;
        m[q * n + k] = s * apk + c * aqk;
    }
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
    for k in 0..n {
        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
        v[k * n + p] = c * vkp - s * vkq;
        v[k * n + q] = s * vkp + c * vkq;
    }
}

fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
