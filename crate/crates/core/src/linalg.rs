//! Small dense helpers on top of nalgebra for Hermitian matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Cx = Complex64;
pub type CMat = DMatrix<Cx>;
pub type CVec = DVector<Cx>;

pub const LN2: f64 = std::f64::consts::LN_2;

pub fn cx(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

/// `(m + mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cx(0.5, 0.0)
}

/// Cholesky factor of the Hermitian part of `m`, `None` unless it is
/// positive definite. The complex factorisation happily takes square roots
/// of negative pivots, so the diagonal of the factor is checked.
pub fn hpd_cholesky(m: &CMat) -> Option<nalgebra::Cholesky<Cx, nalgebra::Dyn>> {
    let chol = hermitian_part(m).cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(chol)
}

/// log2 det of a Hermitian positive-definite matrix, via Cholesky.
pub fn log2_det_hpd(m: &CMat) -> Result<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "log-det of {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    let chol =
        hpd_cholesky(m).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..n {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc / LN2)
}

/// `(log2 det m, m⁻¹)` from one factorisation.
pub fn log2_det_and_inv_hpd(m: &CMat) -> Result<(f64, CMat)> {
    let chol =
        hpd_cholesky(m).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let ld = 2.0 * (0..m.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() / LN2;
    Ok((ld, hermitian_part(&chol.inverse())))
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn inv_hpd(m: &CMat) -> Result<CMat> {
    let chol =
        hpd_cholesky(m).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    Ok(hermitian_part(&chol.inverse()))
}

/// Solve `m x = b` for Hermitian positive-definite `m`.
pub fn solve_hpd(m: &CMat, b: &CVec) -> Result<CVec> {
    let chol =
        hpd_cholesky(m).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Hermitian matrix with its eigenvalues clipped from below at `floor`.
pub fn floor_eigenvalues(m: &CMat, floor: f64) -> CMat {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let lam = lam.max(floor);
        let col = eig.eigenvectors.column(j);
        out += (&col * col.adjoint()) * cx(lam, 0.0);
    }
    hermitian_part(&out)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    let eig = hermitian_part(m).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// In-place Cholesky of `a − floor·I` on the lower triangle of the
/// column-major `n×n` buffer `a`; false on the first non-positive pivot.
fn lower_cholesky_above(a: &mut [Cx], n: usize, floor: f64) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j].re - floor;
        for k in 0..j {
            d -= a[k * n + j].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = cx(d, 0.0);
        for i in j + 1..n {
            let mut v = a[j * n + i];
            for k in 0..j {
                v -= a[k * n + i] * a[k * n + j].conj();
            }
            a[j * n + i] = v / d;
        }
    }
    true
}

/// Whether every eigenvalue of Hermitian `m` exceeds `floor`.
pub fn eigenvalues_above(m: &CMat, floor: f64) -> bool {
    let n = m.nrows();
    let mut a: Vec<Cx> = hermitian_part(m).as_slice().to_vec();
    lower_cholesky_above(&mut a, n, floor)
}

/// [`eigenvalues_above`] for the matrix packed in `x` by [`hvec`].
pub fn hvec_eigenvalues_above(x: &[f64], n: usize, floor: f64) -> bool {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = vec![Cx::new(0.0, 0.0); n * n];
    for i in 0..n {
        a[i * n + i] = cx(x[i], 0.0);
    }
    let mut k = n;
    for j in 0..n {
        for i in (j + 1)..n {
            a[j * n + i] = cx(s * x[k], s * x[k + 1]);
            k += 2;
        }
    }
    lower_cholesky_above(&mut a, n, floor)
}

/// `vᴴ m v`, real part.
pub fn quad_form(m: &CMat, v: &CVec) -> f64 {
    v.dotc(&(m * v)).re
}

/// Real trace of a square matrix.
pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// `tr(a b)` real part, for Hermitian `a`, `b`.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Number of real parameters of an `n x n` Hermitian matrix.
pub fn hvec_len(n: usize) -> usize {
    n * n
}

/// Packs a Hermitian matrix as `n²` reals: diagonal first, then
/// `√2·Re`, `√2·Im` of the strictly lower triangle, so the Euclidean norm
/// of the vector equals the Frobenius norm of the matrix.
pub fn hvec(m: &CMat, out: &mut [f64]) {
    let n = m.nrows();
    debug_assert_eq!(out.len(), n * n);
    let s = std::f64::consts::SQRT_2;
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    let mut k = n;
    for j in 0..n {
        for i in (j + 1)..n {
            let z = m[(i, j)];
            out[k] = s * z.re;
            out[k + 1] = s * z.im;
            k += 2;
        }
    }
}

/// Inverse of [`hvec`].
pub fn hunvec(x: &[f64], n: usize) -> CMat {
    debug_assert_eq!(x.len(), n * n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = cx(x[i], 0.0);
    }
    let mut k = n;
    for j in 0..n {
        for i in (j + 1)..n {
            let z = cx(s * x[k], s * x[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// `m · diag(d)`.
pub fn scale_cols(m: &CMat, d: &[Cx]) -> CMat {
    let mut out = m.clone();
    for (j, &s) in d.iter().enumerate() {
        for v in out.column_mut(j).iter_mut() {
            *v *= s;
        }
    }
    out
}

/// `diag(d) · m`.
pub fn scale_rows(d: &[Cx], m: &CMat) -> CMat {
    let mut out = m.clone();
    for (i, &s) in d.iter().enumerate() {
        for v in out.row_mut(i).iter_mut() {
            *v *= s;
        }
    }
    out
}

/// Principal square root of a real symmetric PSD matrix, eigenvalues
/// floored at `floor` first.
pub fn sqrt_psd_real(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let lam = eig.eigenvalues[j].max(floor).sqrt();
        let col = eig.eigenvectors.column(j);
        out += &col * col.transpose() * lam;
    }
    out
}

/// `cI` as a complex matrix.
pub fn scaled_identity(n: usize, c: f64) -> CMat {
    CMat::identity(n, n) * cx(c, 0.0)
}
