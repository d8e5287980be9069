//! Dense complex matrix/tensor algebra: Kronecker and Khatri-Rao products,
//! vec/unvec, diagonalization, mode-n unfoldings, SVD pseudo-inverse, and
//! CP (rank-decomposed) tensor reconstruction.
//!
//! Conventions, fixed once and used everywhere:
//!
//! * Matrices are [`nalgebra::DMatrix`] over `Complex64`, stored
//!   **column-major**. `vec` stacks columns; `unvec` undoes it.
//! * `kron(a, b)` uses the standard ordering: block `(i, j)` of the result
//!   is `a[(i, j)] * b`, so the first factor indexes slowly.
//! * A third-order tensor with dims `(d1, d2, d3)` stores entry `(i, j, k)`
//!   at linear offset `i + d1*(j + d2*k)` (first mode fastest).
//! * Mode-n unfoldings place mode `n` on the rows and order the remaining
//!   modes with the *earlier* one varying fastest:
//!   mode 1 -> `(d1, d2*d3)` with column `j + k*d2`,
//!   mode 2 -> `(d2, d1*d3)` with column `i + k*d1`,
//!   mode 3 -> `(d3, d1*d2)` with column `i + j*d1`.
//!
//! With these choices a CP tensor built from factors `A (d1 x r)`,
//! `B (d2 x r)`, `F (r x d3)` satisfies, as exact matrix identities,
//!
//! ```text
//! [T](1) = A (Fᵀ ⋄ B)ᵀ,   [T](2) = B (Fᵀ ⋄ A)ᵀ,   [T](3) = Fᵀ (B ⋄ A)ᵀ,
//! ```
//!
//! which is what turns the alternating factor updates into plain matrix
//! least-squares problems with no index permutations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative singular-value cutoff for [`pinv`]: values below
/// `DEFAULT_PINV_TOL * sigma_max` are treated as zero.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Kronecker product `a (x) b`.
///
/// Result has dims `(a.rows*b.rows, a.cols*b.cols)`; block `(i, j)` equals
/// `a[(i, j)] * b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of two column vectors; entry `i*b.len() + j` is `a[i]*b[j]`.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let (la, lb) = (a.len(), b.len());
    CVec::from_fn(la * lb, |idx, _| a[idx / lb] * b[idx % lb])
}

/// Khatri-Rao (column-wise Kronecker) product: column `j` of the result is
/// `kron(a_col_j, b_col_j)`.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.ncols() != b.ncols() {
        return Err(Error::ColumnMismatch {
            left: a.ncols(),
            right: b.ncols(),
        });
    }
    let (ra, rb, c) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = CMat::zeros(ra * rb, c);
    for j in 0..c {
        for ia in 0..ra {
            let s = a[(ia, j)];
            for ib in 0..rb {
                out[(ia * rb + ib, j)] = s * b[(ib, j)];
            }
        }
    }
    Ok(out)
}

/// Stack the columns of `m` into a single column vector.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`]: reshape a length `rows*cols` vector into a matrix,
/// filling column by column.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            got: v.len(),
        });
    }
    Ok(CMat::from_column_slice(rows, cols, v.as_slice()))
}

/// Square diagonal matrix with `v` on the diagonal.
pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// Diagonal matrix built from row `j` of `b`.
pub fn diag_row(b: &CMat, j: usize) -> Result<CMat> {
    if j >= b.nrows() {
        return Err(Error::IndexOutOfRange {
            index: j,
            limit: b.nrows(),
        });
    }
    Ok(CMat::from_diagonal(&b.row(j).transpose()))
}

/// Frobenius norm of a matrix.
pub fn fro_norm(m: &CMat) -> f64 {
    m.norm()
}

/// Thin singular value decomposition `m = u * diag(sv) * v^H` with the
/// singular values in descending order.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: CMat,
    pub sv: Vec<f64>,
    pub v: CMat,
}

/// Thin SVD of a complex matrix.
pub fn thin_svd(m: &CMat) -> Result<ThinSvd> {
    if m.is_empty() {
        return Err(Error::DimMismatch("svd of empty matrix".into()));
    }
    let fm = faer::Mat::<Complex64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = faer::linalg::solvers::Svd::new_thin(fm.as_ref()).map_err(|_| Error::SvdFailure)?;
    let p = svd.S().dim();
    let u = CMat::from_fn(m.nrows(), p, |i, j| svd.U()[(i, j)]);
    let v = CMat::from_fn(m.ncols(), p, |i, j| svd.V()[(i, j)]);
    let sv = (0..p).map(|i| svd.S()[i].re).collect();
    Ok(ThinSvd { u, sv, v })
}

/// Singular values of a matrix, descending.
pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    Ok(thin_svd(m)?.sv)
}

/// Moore-Penrose pseudo-inverse via SVD.
///
/// Singular values below `tol * sigma_max` are treated as zero, so the
/// routine is rank-revealing and well defined for any rectangular input.
pub fn pinv(m: &CMat, tol: f64) -> Result<CMat> {
    let ThinSvd { u, sv, mut v } = thin_svd(m)?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol.abs() * smax;

    // pinv = V S^+ U^H, assembled as (V scaled by 1/sigma) * U^H.
    for (r, &s) in sv.iter().enumerate() {
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        v.column_mut(r).scale_mut(inv);
    }
    Ok(v * u.adjoint())
}

/// Dense third-order complex tensor with the fixed layout described in the
/// module docs: entry `(i, j, k)` lives at `i + d1*(j + d2*k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Self {
            dims: (d1, d2, d3),
            data: vec![Complex64::new(0.0, 0.0); d1 * d2 * d3],
        }
    }

    /// Build from a linearized entry vector in the fixed layout.
    pub fn from_data(dims: (usize, usize, usize), data: Vec<Complex64>) -> Result<Self> {
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: Complex64) {
        let off = self.offset(i, j, k);
        self.data[off] = value;
    }

    /// Frontal slice `k`: the `d1 x d2` matrix `T[.., .., k]`.
    pub fn frontal_slice(&self, k: usize) -> Result<CMat> {
        let (d1, d2, d3) = self.dims;
        if k >= d3 {
            return Err(Error::IndexOutOfRange { index: k, limit: d3 });
        }
        let start = d1 * d2 * k;
        Ok(CMat::from_column_slice(d1, d2, &self.data[start..start + d1 * d2]))
    }

    /// Mode-n unfolding (n in {1, 2, 3}) with the column orderings from the
    /// module docs.
    pub fn unfold(&self, mode: usize) -> Result<CMat> {
        let (d1, d2, d3) = self.dims;
        match mode {
            // Layout makes mode 1 a plain reshape.
            1 => Ok(CMat::from_column_slice(d1, d2 * d3, &self.data)),
            2 => {
                let mut out = CMat::zeros(d2, d1 * d3);
                for k in 0..d3 {
                    for j in 0..d2 {
                        for i in 0..d1 {
                            out[(j, i + k * d1)] = self.data[self.offset(i, j, k)];
                        }
                    }
                }
                Ok(out)
            }
            3 => {
                let mut out = CMat::zeros(d3, d1 * d2);
                for k in 0..d3 {
                    for j in 0..d2 {
                        for i in 0..d1 {
                            out[(k, i + j * d1)] = self.data[self.offset(i, j, k)];
                        }
                    }
                }
                Ok(out)
            }
            m => Err(Error::InvalidMode(m)),
        }
    }

    /// Inverse of [`Tensor3::unfold`] for the given target dims.
    pub fn fold(m: &CMat, mode: usize, dims: (usize, usize, usize)) -> Result<Tensor3> {
        let (d1, d2, d3) = dims;
        let expect = match mode {
            1 => (d1, d2 * d3),
            2 => (d2, d1 * d3),
            3 => (d3, d1 * d2),
            other => return Err(Error::InvalidMode(other)),
        };
        if (m.nrows(), m.ncols()) != expect {
            return Err(Error::DimMismatch(format!(
                "fold mode {} expects {}x{}, got {}x{}",
                mode,
                expect.0,
                expect.1,
                m.nrows(),
                m.ncols()
            )));
        }
        let mut t = Tensor3::zeros(d1, d2, d3);
        match mode {
            1 => t.data.copy_from_slice(m.as_slice()),
            2 => {
                for k in 0..d3 {
                    for j in 0..d2 {
                        for i in 0..d1 {
                            let off = t.offset(i, j, k);
                            t.data[off] = m[(j, i + k * d1)];
                        }
                    }
                }
            }
            3 => {
                for k in 0..d3 {
                    for j in 0..d2 {
                        for i in 0..d1 {
                            let off = t.offset(i, j, k);
                            t.data[off] = m[(k, i + j * d1)];
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(t)
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Entry-wise difference `self - other`.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(format!(
                "tensor dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            data,
        })
    }

    /// Scale every entry by a real factor.
    pub fn scaled(&self, factor: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }
}

/// Factor matrices of a rank-`r` CP model: `a` is `d1 x r`, `b` is `d2 x r`,
/// and `f` is `r x d3` (block coefficients sit on the rows of `f`).
#[derive(Clone, Debug)]
pub struct CpFactors {
    pub a: CMat,
    pub b: CMat,
    pub f: CMat,
}

impl CpFactors {
    pub fn new(a: CMat, b: CMat, f: CMat) -> Result<Self> {
        if a.ncols() != b.ncols() || a.ncols() != f.nrows() {
            return Err(Error::DimMismatch(format!(
                "coupled CP dimension disagrees: a has {} cols, b has {} cols, f has {} rows",
                a.ncols(),
                b.ncols(),
                f.nrows()
            )));
        }
        Ok(Self { a, b, f })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.nrows(), self.b.nrows(), self.f.ncols())
    }
}

/// Reconstruct the dense tensor of a CP model:
/// entry `(i, j, k) = sum_r a[(i,r)] * b[(j,r)] * f[(r,k)]`.
pub fn cp_build(factors: &CpFactors) -> Result<Tensor3> {
    let (d1, d2, d3) = factors.dims();
    // [T](1) = A (Fᵀ ⋄ B)ᵀ, then fold the reshape back.
    let kr = khatri_rao(&factors.f.transpose(), &factors.b)?;
    let mode1 = &factors.a * kr.transpose();
    Tensor3::fold(&mode1, 1, (d1, d2, d3))
}
