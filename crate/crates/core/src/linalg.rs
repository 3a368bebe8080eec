//! SVD-based helpers shared by the factorization routines.

use nalgebra::{SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Entries with magnitude at or below this are treated as zero when
/// choosing a column's sign.
pub const SIGN_TOL: f64 = 1e-12;

/// Column aspect ratio above which left singular vectors are computed from
/// an orthogonal factorization of the transpose followed by a small SVD.
const WIDE_RATIO: usize = 2;

/// Left singular vectors with singular values in descending order.
#[derive(Debug, Clone)]
pub struct LeftSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
}

/// Pseudo-inverse cutoff: `max(rows, cols) · σ_max · 2^-52`.
pub fn pinv_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

/// Makes the first entry of every column with magnitude above
/// [`SIGN_TOL`] nonnegative. Returns the applied signs.
pub fn fix_signs(u: &mut Matrix) -> Vec<f64> {
    let mut signs = vec![1.0; u.ncols()];
    for (c, s) in signs.iter_mut().enumerate() {
        let mut col = u.column_mut(c);
        if let Some(first) = col.iter().find(|v| v.abs() > SIGN_TOL) {
            if *first < 0.0 {
                col.neg_mut();
                *s = -1.0;
            }
        }
    }
    signs
}

/// Leading `min(rows, cols)` left singular vectors of `x`, sorted by
/// descending singular value (ties keep the lower column index), with the
/// sign convention of [`fix_signs`] applied.
///
/// Wide inputs go through `xᵀ = QR`, `x = Rᵀ Qᵀ`, so only the small
/// `rows × rows` factor `Rᵀ` is decomposed.
pub fn left_singular(x: &Matrix) -> Result<LeftSvd> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return Ok(LeftSvd {
            u: Matrix::zeros(rows, 0),
            sigma: Vec::new(),
        });
    }
    if cols > WIDE_RATIO * rows {
        let qr = x.transpose().qr();
        let rt = qr.r().transpose();
        left_singular_direct(&rt)
    } else {
        left_singular_direct(x)
    }
}

/// Left singular vectors from a direct SVD of `x`, for cross-checking the
/// wide path.
pub fn left_singular_direct(x: &Matrix) -> Result<LeftSvd> {
    let svd = SVD::try_new(x.clone(), true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut sorted = Matrix::zeros(u.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &u.column(src));
    }
    fix_signs(&mut sorted);
    Ok(LeftSvd {
        u: sorted,
        sigma: order.iter().map(|&i| svd.singular_values[i]).collect(),
    })
}

/// Orthonormal basis for the column space of `x` with `k` columns: its
/// `k` leading left singular vectors.
pub fn leading_left(x: &Matrix, k: usize) -> Result<Matrix> {
    let svd = left_singular(x)?;
    let k = k.min(svd.u.ncols());
    Ok(svd.u.columns(0, k).into_owned())
}

/// Moore-Penrose pseudo-inverse with the [`pinv_cutoff`] rule.
pub fn pinv(a: &Matrix) -> Result<Matrix> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    if cols > WIDE_RATIO * rows {
        // a = Rᵀ Qᵀ, pinv(a) = Q pinv(Rᵀ)
        let qr = a.transpose().qr();
        let q = qr.q();
        let rt = qr.r().transpose();
        let small = pinv_svd(&rt, rows, cols)?;
        return Ok(q * small);
    }
    if rows > WIDE_RATIO * cols {
        // a = Q R, pinv(a) = pinv(R) Qᵀ
        let qr = a.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let small = pinv_svd(&r, rows, cols)?;
        return Ok(small * q.transpose());
    }
    pinv_svd(a, rows, cols)
}

fn pinv_svd(a: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge in pseudo-inverse".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = pinv_cutoff(rows, cols, smax);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += (vt.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    Ok(out)
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix. Eigenvalues
/// at or below `n · λ_max · 2^-52` are treated as zero.
pub fn psd_pinv(g: &Matrix) -> Result<Matrix> {
    let n = g.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite Gram matrix".into()));
    }
    let eig = SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = pinv_cutoff(n, n, lmax);
    let mut out = Matrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut && l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (v / l) * v.transpose();
        }
    }
    Ok(out)
}

/// Largest deviation of `uᵀu` from the identity.
pub fn orthonormality_error(u: &Matrix) -> f64 {
    let g = u.transpose() * u;
    let mut worst: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Largest principal angle (radians) between the column spans of `a` and
/// `b`, measured through the sine so small angles stay accurate.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape("subspaces live in different spaces".into()));
    }
    let qa = leading_left(a, a.ncols())?;
    let qb = leading_left(b, b.ncols())?;
    if qa.ncols() != qb.ncols() {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    if qb.ncols() == 0 {
        return Ok(0.0);
    }
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let s = SVD::try_new(resid, false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge in principal angles".into()))?;
    let smax = s.singular_values.iter().cloned().fold(0.0, f64::max);
    Ok(smax.min(1.0).asin())
}

/// Horizontal concatenation.
pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(Error::Shape("hstack blocks differ in row count".into()));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.columns_mut(off, b.ncols()).copy_from(*b);
        off += b.ncols();
    }
    Ok(out)
}

/// Vertical concatenation.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::Shape("vstack blocks differ in column count".into()));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.rows_mut(off, b.nrows()).copy_from(*b);
        off += b.nrows();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_matrix, rng};

    #[test]
    fn wide_path_matches_direct_svd() {
        let mut r = rng(21);
        for &(rows, cols) in &[(3, 40), (5, 11), (8, 200)] {
            let x = rand_matrix(&mut r, rows, cols);
            let a = left_singular(&x).unwrap();
            let b = left_singular_direct(&x).unwrap();
            for (s1, s2) in a.sigma.iter().zip(&b.sigma) {
                assert!((s1 - s2).abs() <= 1e-10 * b.sigma[0]);
            }
            assert!((&a.u - &b.u).abs().max() <= 1e-8, "{rows}x{cols}");
        }
    }

    #[test]
    fn singular_values_sorted_and_signs_fixed() {
        let mut r = rng(22);
        let x = rand_matrix(&mut r, 6, 4);
        let s = left_singular(&x).unwrap();
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        for c in 0..s.u.ncols() {
            let first = s.u.column(c).iter().find(|v| v.abs() > SIGN_TOL).copied().unwrap();
            assert!(first >= 0.0);
        }
        assert!(orthonormality_error(&s.u) < 1e-12);
    }

    #[test]
    fn pinv_properties_all_shapes() {
        let mut r = rng(23);
        for &(rows, cols) in &[(3, 10), (10, 3), (4, 5)] {
            let a = rand_matrix(&mut r, rows, cols);
            let p = pinv(&a).unwrap();
            assert!((&a * &p * &a - &a).abs().max() < 1e-10);
            assert!((&p * &a * &p - &p).abs().max() < 1e-10);
        }
        // rank deficient: duplicate row
        let mut a = rand_matrix(&mut r, 4, 6);
        let row = a.row(0).into_owned();
        a.set_row(1, &row);
        let p = pinv(&a).unwrap();
        assert!((&a * &p * &a - &a).abs().max() < 1e-10);
        let g = &a * a.transpose();
        let pg = psd_pinv(&g).unwrap();
        assert!((&g * &pg * &g - &g).abs().max() < 1e-8);
    }

    #[test]
    fn principal_angles() {
        let mut r = rng(24);
        let a = rand_matrix(&mut r, 6, 2);
        let mix = rand_matrix(&mut r, 2, 2);
        assert!(max_principal_angle(&a, &(&a * mix)).unwrap() < 1e-12);
        let e = Matrix::identity(4, 4);
        let angle = max_principal_angle(&e.columns(0, 1).into_owned(), &e.columns(1, 1).into_owned()).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
