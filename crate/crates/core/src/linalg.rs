//! SVD, QR and spectrum utilities. Matrices are nalgebra types; SVDs run
//! through LAPACK.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ShapeBuilder};
use ndarray_linalg::{JobSvd, SVDDC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::instrument;

/// Singular values below this fraction of the largest one count as zero
/// in entropy computations.
pub const ENTROPY_CUTOFF: f64 = 1e-14;

/// Singular values at or below this fraction of the largest one are
/// treated as rounding noise by rank counts and exact truncations.
pub const NUMERICAL_ZERO: f64 = 1e-13;

/// Non-increasing sequence of non-negative singular values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    /// Sorts `values` descending. Negative or non-finite values are rejected.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numeric(
                "spectrum entries must be finite and >= 0".into(),
            ));
        }
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    /// Sum of squares of the values discarded when keeping `rank`.
    pub fn tail_sq(&self, rank: usize) -> f64 {
        self.0.iter().skip(rank).map(|s| s * s).sum()
    }

    pub fn nonzero_count(&self) -> usize {
        let floor = NUMERICAL_ZERO * self.largest();
        self.0.iter().filter(|&&s| s > floor).count()
    }

    /// Smallest rank whose discarded tail has norm at most `budget` (may be 0).
    pub fn min_rank_within(&self, budget: f64) -> usize {
        let budget_sq = budget * budget;
        let mut tail = 0.0;
        // Walk from the smallest value upward while the tail still fits.
        for r in (0..self.0.len()).rev() {
            let next = tail + self.0[r] * self.0[r];
            if next > budget_sq {
                return r + 1;
            }
            tail = next;
        }
        0
    }

    /// Exponential of the Shannon entropy of `sigma_i / sum(sigma)`.
    pub fn effective_rank(&self) -> Result<f64> {
        let top = self.largest();
        if top <= 0.0 {
            return invalid("effective rank of an all-zero spectrum");
        }
        let cutoff = ENTROPY_CUTOFF * top;
        let kept: Vec<f64> = self.0.iter().copied().filter(|&s| s > cutoff).collect();
        let total: f64 = kept.iter().sum();
        let h: f64 = kept
            .iter()
            .map(|&s| {
                let p = s / total;
                -p * p.ln()
            })
            .sum();
        Ok(h.exp().clamp(1.0, kept.len() as f64))
    }
}

pub fn effective_rank(s: &Spectrum) -> Result<f64> {
    s.effective_rank()
}

/// Result of a truncated SVD: `m ≈ left * diag(kept) * right`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `rows x rank`, orthonormal columns.
    pub left: DMatrix<f64>,
    /// `rank x cols`, orthonormal rows.
    pub right: DMatrix<f64>,
    /// Full spectrum of the input.
    pub spectrum: Spectrum,
    pub rank: usize,
    pub discarded_sq: f64,
}

impl TruncatedSvd {
    pub fn kept(&self) -> &[f64] {
        &self.spectrum.values()[..self.rank]
    }

    /// `diag(kept) * right`.
    pub fn weighted_right(&self) -> DMatrix<f64> {
        let mut r = self.right.clone();
        for (i, s) in self.kept().iter().enumerate() {
            r.row_mut(i).scale_mut(*s);
        }
        r
    }

    /// `left * diag(kept)`.
    pub fn weighted_left(&self) -> DMatrix<f64> {
        let mut l = self.left.clone();
        for (i, s) in self.kept().iter().enumerate() {
            l.column_mut(i).scale_mut(*s);
        }
        l
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix contains non-finite entries".into()));
    }
    Ok(())
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_vec((m.nrows(), m.ncols()).f(), m.as_slice().to_vec())
        .expect("shape matches")
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Relative residual above which a LAPACK factorization is rejected.
const LAPACK_CHECK_TOL: f64 = 1e-10;

/// Thin SVD `m = u * diag(s) * vt` with `s` descending.
///
/// The LAPACK result is checked for reconstruction and orthogonality and
/// recomputed with nalgebra when the check fails. Some OpenBLAS kernels
/// return wrong singular vectors for strongly rank-deficient inputs.
fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    check_finite(m)?;
    instrument::bump(instrument::Counter::Svd);
    if let Some((u, s, vt)) = lapack_svd(m) {
        if factorization_holds(m, &u, &s, &vt) {
            return Ok((u, s, vt));
        }
    }
    fallback_svd(m)
}

/// Wide inputs are factored through their transpose, which LAPACK handles
/// markedly faster.
fn lapack_svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if m.ncols() > m.nrows() {
        let (u, s, vt) = to_ndarray(&m.transpose()).svddc(JobSvd::Some).ok()?;
        return Some((
            to_dmatrix(&vt?).transpose(),
            s.to_vec(),
            to_dmatrix(&u?).transpose(),
        ));
    }
    let (u, s, vt) = to_ndarray(m).svddc(JobSvd::Some).ok()?;
    Some((to_dmatrix(&u?), s.to_vec(), to_dmatrix(&vt?)))
}

/// Randomized check of `m = u * diag(s) * vt` and of the orthonormality of
/// `u` and `vt`, using fixed probe vectors.
fn factorization_holds(m: &DMatrix<f64>, u: &DMatrix<f64>, s: &[f64], vt: &DMatrix<f64>) -> bool {
    let (rows, cols) = m.shape();
    let k = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut probe = |n: usize| DVector::<f64>::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let x = probe(cols);
    let vx = vt * &x;
    let svx = DVector::from_fn(k, |i, _| s[i] * vx[i]);
    let residual = (u * svx - m * &x).norm() / (scale * x.norm());
    let y = probe(k);
    let u_defect = (u.transpose() * (u * &y) - &y).norm() / y.norm();
    let v_defect = (vt * (vt.transpose() * &y) - &y).norm() / y.norm();
    let tol = LAPACK_CHECK_TOL * ((rows.max(cols)) as f64).sqrt();
    residual <= tol && u_defect <= tol && v_defect <= tol
}

/// One-sided Jacobi SVD, used when the LAPACK result fails verification.
/// Slower than LAPACK but accurate on rank-deficient inputs, where
/// nalgebra's bidiagonal SVD also returns wrong vectors.
fn fallback_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if m.ncols() > m.nrows() {
        let (u, s, vt) = fallback_svd(&m.transpose())?;
        return Ok((vt.transpose(), s, u.transpose()));
    }
    let (u, s, vt) = if m.nrows() > 2 * m.ncols() {
        let (q, r) = qr_orthonormalize(m)?;
        let (u, s, vt) = jacobi_svd(&r);
        (q * u, s, vt)
    } else {
        jacobi_svd(m)
    };
    if factorization_holds(m, &u, &s, &vt) {
        Ok((u, s, vt))
    } else {
        Err(Error::Numeric("SVD failed verification".into()))
    }
}

/// Hestenes one-sided Jacobi on a matrix with at least as many rows as
/// columns. Zero singular values get left vectors from an orthonormal
/// completion.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    const MAX_SWEEPS: usize = 80;
    let (rows, n) = a.shape();
    let scale = a.amax();
    if scale == 0.0 {
        let u = complete_orthonormal(DMatrix::zeros(rows, 0), n);
        return (u, vec![0.0; n], DMatrix::identity(n, n));
    }
    let mut w = a / scale;
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * (rows as f64);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - sn * y;
                        mat[(i, q)] = sn * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let top = norms[order[0]];
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&j| norms[j] > top * f64::EPSILON * 1e-3)
        .collect();
    let mut u = DMatrix::zeros(rows, kept.len());
    for (k, &j) in kept.iter().enumerate() {
        u.set_column(k, &(w.column(j) / norms[j]));
    }
    let u = complete_orthonormal(u, n);
    let s: Vec<f64> = order
        .iter()
        .map(|&j| {
            if kept.contains(&j) {
                norms[j] * scale
            } else {
                0.0
            }
        })
        .collect();
    let mut vt = DMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        vt.set_row(k, &v.column(j).transpose());
    }
    // Dropped columns follow the kept ones in `order`, so rows of `vt`
    // line up with the completed columns of `u`.
    (u, s, vt)
}

/// Extends orthonormal columns to `width` columns by Gram-Schmidt over the
/// coordinate vectors.
fn complete_orthonormal(u: DMatrix<f64>, width: usize) -> DMatrix<f64> {
    let rows = u.nrows();
    let mut cols: Vec<DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
    let project_out = |cols: &[DVector<f64>], e: usize| {
        let mut x = DVector::<f64>::zeros(rows);
        x[e] = 1.0;
        for _ in 0..2 {
            for c in cols {
                let d = c.dot(&x);
                x.axpy(-d, c, 1.0);
            }
        }
        x
    };
    while cols.len() < width.min(rows) {
        let best = (0..rows)
            .map(|e| project_out(&cols, e))
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("rows > 0");
        let norm = best.norm();
        cols.push(best / norm);
    }
    DMatrix::from_columns(&cols)
}

/// Keeps the minimal rank whose discarded energy fits in `budget`
/// (further capped by `max_rank`), never below rank 1.
pub fn truncated_svd(
    m: &DMatrix<f64>,
    budget: f64,
    max_rank: Option<usize>,
) -> Result<TruncatedSvd> {
    if !(budget >= 0.0) {
        return invalid("truncation budget must be >= 0");
    }
    let (u, s, vt) = thin_svd(m)?;
    let spectrum = Spectrum::new(s.iter().map(|v| v.max(0.0)).collect())?;
    let mut rank = spectrum.min_rank_within(budget);
    if let Some(cap) = max_rank {
        rank = rank.min(cap);
    }
    rank = rank.clamp(1, spectrum.len().max(1));
    let mut left = u.columns(0, rank).into_owned();
    let mut right = vt.rows(0, rank).into_owned();
    // Deterministic sign: largest-magnitude entry of each left vector is >= 0.
    for k in 0..rank {
        let col = left.column(k);
        let mut best = 0usize;
        for i in 0..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            left.column_mut(k).neg_mut();
            right.row_mut(k).neg_mut();
        }
    }
    let discarded_sq = spectrum.tail_sq(rank);
    Ok(TruncatedSvd {
        left,
        right,
        spectrum,
        rank,
        discarded_sq,
    })
}

/// Singular values only. The LAPACK values are accepted when their
/// squares sum to the squared Frobenius norm.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Spectrum> {
    check_finite(m)?;
    instrument::bump(instrument::Counter::Svd);
    let tall = if m.ncols() > m.nrows() {
        m.transpose()
    } else {
        m.clone()
    };
    let lapack = to_ndarray(&tall)
        .svddc(JobSvd::None)
        .ok()
        .map(|(_, s, _)| s.to_vec());
    let norm_sq = m.norm_squared();
    let values = match lapack {
        Some(s)
            if (s.iter().map(|v| v * v).sum::<f64>() - norm_sq).abs()
                <= LAPACK_CHECK_TOL * norm_sq =>
        {
            s
        }
        _ => fallback_svd(m)?.1,
    };
    Spectrum::new(values.iter().map(|v| v.max(0.0)).collect())
}

/// Thin QR with a non-negative diagonal in the triangular factor.
///
/// Columns are scaled to unit max-magnitude before the factorization and
/// the scales are folded back into `r`, so columns whose entries are all
/// tiny do not lose their Householder reflection to underflow.
pub fn qr_orthonormalize(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return invalid("QR of an empty matrix");
    }
    check_finite(m)?;
    instrument::bump(instrument::Counter::Qr);
    let scales: Vec<f64> = m
        .column_iter()
        .map(|c| c.amax())
        .map(|a| if a > 0.0 { a } else { 1.0 })
        .collect();
    let mut scaled = m.clone();
    for (j, &a) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(a);
    }
    let qr = scaled.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for (j, &a) in scales.iter().enumerate() {
        r.column_mut(j).scale_mut(a);
    }
    for k in 0..r.nrows().min(r.ncols()) {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }
    Ok((q, r))
}
