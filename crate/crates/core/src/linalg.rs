//! Dense complex linear algebra on top of `faer`.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, solve};
use faer::perm::PermRef;
use faer::{Accum, Conj, Mat, MatMut, MatRef, Par};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn par() -> Par {
    faer::get_global_parallelism()
}

/// Sets the parallelism used by every dense kernel in this crate.
pub fn set_threads(threads: usize) {
    let p = if threads <= 1 {
        Par::Seq
    } else {
        Par::rayon(threads)
    };
    faer::set_global_parallelism(p);
}

pub fn identity(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// `a · b`.
pub fn mul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let mut out = CMat::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a, b, ONE, par());
    out
}

/// `dst += alpha · a · b`.
pub fn mul_acc(dst: MatMut<'_, C64>, a: MatRef<'_, C64>, b: MatRef<'_, C64>, alpha: C64) {
    faer::linalg::matmul::matmul(dst, Accum::Add, a, b, alpha, par());
}

/// `a · x` for a plain vector.
pub fn matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len(), "matvec dimension mismatch");
    let xm = MatRef::from_column_major_slice(x, x.len(), 1);
    let mut out = vec![ZERO; a.nrows()];
    let om = MatMut::from_column_major_slice_mut(&mut out, a.nrows(), 1);
    faer::linalg::matmul::matmul(om, Accum::Replace, a, xm, ONE, par());
    out
}

pub fn column_vec(v: &[C64]) -> CMat {
    CMat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn col_to_vec(m: MatRef<'_, C64>, j: usize) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn max_abs(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

pub fn mat_max_abs(m: MatRef<'_, C64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

/// Maximum absolute column sum.
pub fn norm1(m: MatRef<'_, C64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Copies the sub-block with the given row and column index lists.
pub fn gather(m: MatRef<'_, C64>, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Partial-pivoting LU factorization stored in place.
pub struct DenseLu {
    lu: CMat,
    fwd: Vec<usize>,
    inv: Vec<usize>,
    norm1: f64,
}

impl std::fmt::Debug for DenseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseLu")
            .field("dim", &self.dim())
            .field("norm1", &self.norm1)
            .finish()
    }
}

impl DenseLu {
    /// Factors `a`, consuming it. `context` names the system in errors.
    pub fn new(a: CMat, context: &str) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Partition(format!(
                "{context}: cannot factor a {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let norm1 = norm1(a.as_ref());
        if !norm1.is_finite() {
            return Err(Error::Conditioning {
                context: format!("{context}: non-finite entries"),
                estimate: f64::INFINITY,
            });
        }
        let mut lu = a;
        let mut fwd = vec![0usize; n];
        let mut inv = vec![0usize; n];
        let p = par();
        let mut buf = MemBuffer::new(factor::lu_in_place_scratch::<usize, C64>(
            n,
            n,
            p,
            Default::default(),
        ));
        factor::lu_in_place(
            lu.as_mut(),
            &mut fwd,
            &mut inv,
            p,
            MemStack::new(&mut buf),
            Default::default(),
        );
        let dmax = (0..n).map(|i| lu[(i, i)].norm()).fold(0.0, f64::max);
        let dmin = (0..n).map(|i| lu[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if n > 0 && (!(dmin > dmax * 1e-300) || !dmax.is_finite()) {
            return Err(Error::Conditioning {
                context: context.to_string(),
                estimate: f64::INFINITY,
            });
        }
        Ok(Self {
            lu,
            fwd,
            inv,
            norm1,
        })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    fn perm(&self) -> PermRef<'_, usize> {
        PermRef::new_checked(&self.fwd, &self.inv, self.dim())
    }

    /// Overwrites `rhs` with `A⁻¹ rhs`.
    pub fn solve_in_place(&self, rhs: MatMut<'_, C64>) {
        let p = par();
        let mut buf = MemBuffer::new(solve::solve_in_place_scratch::<usize, C64>(
            self.dim(),
            rhs.ncols(),
            p,
        ));
        solve::solve_in_place(
            self.lu.as_ref(),
            self.lu.as_ref(),
            self.perm(),
            rhs,
            p,
            MemStack::new(&mut buf),
        );
    }

    /// Overwrites `rhs` with `A⁻ᴴ rhs`.
    pub fn solve_adjoint_in_place(&self, rhs: MatMut<'_, C64>) {
        let p = par();
        let mut buf = MemBuffer::new(solve::solve_transpose_in_place_scratch::<usize, C64>(
            self.dim(),
            rhs.ncols(),
            p,
        ));
        solve::solve_transpose_in_place_with_conj(
            self.lu.as_ref(),
            self.lu.as_ref(),
            self.perm(),
            Conj::Yes,
            rhs,
            p,
            MemStack::new(&mut buf),
        );
    }

    pub fn solve(&self, rhs: MatRef<'_, C64>) -> CMat {
        let mut x = rhs.to_owned();
        self.solve_in_place(x.as_mut());
        x
    }

    pub fn solve_vec(&self, rhs: &[C64]) -> Vec<C64> {
        let mut x = rhs.to_vec();
        let n = x.len();
        self.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }

    pub fn inverse(&self) -> CMat {
        let mut x = identity(self.dim());
        self.solve_in_place(x.as_mut());
        x
    }

    /// Exact 1-norm condition number through the explicit inverse.
    pub fn cond1_exact(&self) -> f64 {
        self.norm1 * norm1(self.inverse().as_ref())
    }

    /// Hager–Higham estimate of the 1-norm condition number.
    pub fn cond1_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            let y_norm: f64 = y.iter().map(|v| v.norm()).sum();
            if !y_norm.is_finite() {
                return f64::INFINITY;
            }
            if y_norm <= est {
                break;
            }
            est = y_norm;
            let mut xi: Vec<C64> = y
                .iter()
                .map(|v| if v.norm() > 0.0 { v / v.norm() } else { ONE })
                .collect();
            self.solve_adjoint_in_place(MatMut::from_column_major_slice_mut(&mut xi, n, 1));
            let (jmax, zmax) = xi
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: C64 = xi.iter().zip(&x).map(|(z, xv)| z.conj() * xv).sum();
            if zmax <= ztx.re {
                break;
            }
            x = vec![ZERO; n];
            x[jmax] = ONE;
        }
        // Higham's alternating-sign safeguard.
        let mut alt: Vec<C64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let nn = alt.len();
        self.solve_in_place(MatMut::from_column_major_slice_mut(&mut alt, nn, 1));
        let alt_est = 2.0 * alt.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        self.norm1 * est.max(alt_est)
    }
}
