//! Dense complex Hermitian linear algebra used throughout the crate.
//!
//! Everything here works on `nalgebra` dense matrices over `Complex64`.
//! Hermitian inputs are always symmetrized before an eigensolve.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigenvalue floor used wherever a PSD decision is made.
pub const DEFAULT_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Square complex matrix with `H = H*` enforced by symmetrization.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Symmetrizes `m` as `(m + m*)/2`. Fails on non-square or non-finite input.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !all_finite(&m) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self::symmetrized(m))
    }

    pub(crate) fn symmetrized(m: CMatrix) -> Self {
        let adj = m.adjoint();
        Self((m + adj).scale(0.5))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        Self::new(CMatrix::from_fn(dim, dim, f))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Eigenvalues in ascending order with matching unit eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        let n = self.dim();
        if n == 0 {
            return (Vec::new(), CMatrix::zeros(0, 0));
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
        (values, vectors)
    }
}

/// Outcome of a PSD test.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    /// Unit eigenvector for `min_eigenvalue`.
    pub witness: CVector,
}

pub fn psd_check(h: &HermitianMatrix, tol: f64) -> Result<PsdReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {tol}")));
    }
    if h.dim() == 0 {
        return Ok(PsdReport {
            is_psd: true,
            min_eigenvalue: 0.0,
            witness: CVector::zeros(0),
        });
    }
    let (values, vectors) = h.eigen();
    let min_eigenvalue = values[0];
    Ok(PsdReport {
        is_psd: min_eigenvalue >= -tol,
        min_eigenvalue,
        witness: vectors.column(0).into_owned(),
    })
}

/// Factor a PSD Gram matrix as `F F*` with `F` of numerical-rank width.
///
/// Eigenvalues `<= tol * max(1, lambda_max)` are dropped.
pub fn gram_factor(gram: &HermitianMatrix, tol: f64) -> Result<CMatrix> {
    let report = psd_check(gram, tol)?;
    if !report.is_psd {
        return Err(Error::NotPositiveKernel(Box::new(report)));
    }
    let (values, vectors) = gram.eigen();
    let n = gram.dim();
    let top = values.last().copied().unwrap_or(0.0);
    let cut = tol * top.max(1.0);
    // Largest eigenvalues first so the factor columns are ordered by weight.
    let kept: Vec<usize> = (0..n).rev().filter(|&k| values[k] > cut).collect();
    Ok(CMatrix::from_fn(n, kept.len(), |i, c| {
        vectors[(i, kept[c])] * values[kept[c]].sqrt()
    }))
}

/// Eigenvalue-clipped projection onto the PSD cone (Frobenius-nearest).
pub fn nearest_psd(h: &HermitianMatrix) -> HermitianMatrix {
    let n = h.dim();
    if n == 0 {
        return h.clone();
    }
    let (values, vectors) = h.eigen();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (&v * v.adjoint()).scale(lambda);
    }
    HermitianMatrix::symmetrized(out)
}

/// Unitary `U` with `U d_k = r_k` for paired columns of `domain` and `range`.
///
/// Both matrices are `dim x k`; the Gram matrices `D*D` and `R*R` must agree
/// within `tol`. Spans and their complements are orthonormalized by pivoted
/// Gram-Schmidt (largest remaining norm, ties by lowest index).
pub fn unitary_completion(domain: &CMatrix, range: &CMatrix, tol: f64) -> Result<CMatrix> {
    if domain.shape() != range.shape() {
        return Err(Error::InvalidInput(format!(
            "domain is {:?} but range is {:?}",
            domain.shape(),
            range.shape()
        )));
    }
    if !all_finite(domain) || !all_finite(range) {
        return Err(Error::InvalidInput("non-finite vector entry".into()));
    }
    let dim = domain.nrows();
    let gram_d = domain.adjoint() * domain;
    let gram_r = range.adjoint() * range;
    let mismatch = max_abs(&(gram_d - gram_r));
    if mismatch > tol {
        return Err(Error::NotIsometric { mismatch });
    }

    let scale = (0..domain.ncols())
        .map(|c| domain.column(c).norm())
        .fold(0.0_f64, f64::max);
    let rank_tol = 1e-10 * scale.max(1.0);
    let (q_dom, pivots) = pivoted_orthonormalize(domain, rank_tol);
    let rank = pivots.len();

    // D_J = Q_D T with T = Q_D* D_J invertible; the isometry sends Q_D to R_J T^{-1}.
    let d_j = select_columns(domain, &pivots);
    let r_j = select_columns(range, &pivots);
    let q_rng = if rank == 0 {
        CMatrix::zeros(dim, 0)
    } else {
        let t = q_dom.adjoint() * &d_j;
        let t_inv = t
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("singular span coefficient matrix".into()))?;
        polar_orthonormalize(&(r_j * t_inv))
    };

    let full_dom = complete_basis(&q_dom);
    let full_rng = complete_basis(&q_rng);
    Ok(full_rng * full_dom.adjoint())
}

/// Pivoted modified Gram-Schmidt; returns the orthonormal basis and the
/// chosen column indices in pivot order.
fn pivoted_orthonormalize(cols: &CMatrix, rank_tol: f64) -> (CMatrix, Vec<usize>) {
    let dim = cols.nrows();
    let mut work = cols.clone();
    let mut chosen = vec![false; cols.ncols()];
    let mut basis: Vec<CVector> = Vec::new();
    let mut pivots = Vec::new();
    while basis.len() < dim {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..work.ncols() {
            if chosen[c] {
                continue;
            }
            let norm = work.column(c).norm();
            if best.is_none_or(|(_, b)| norm > b) {
                best = Some((c, norm));
            }
        }
        let Some((c, norm)) = best else { break };
        if norm <= rank_tol {
            break;
        }
        chosen[c] = true;
        pivots.push(c);
        let mut q = work.column(c).into_owned();
        // Second pass restores orthogonality lost to cancellation.
        for b in &basis {
            let proj = b.dotc(&q);
            q -= b * proj;
        }
        let qn = q.norm();
        q /= Complex64::new(qn, 0.0);
        for k in 0..work.ncols() {
            if chosen[k] {
                continue;
            }
            let proj = q.dotc(&work.column(k));
            let mut col = work.column_mut(k);
            col -= &q * proj;
        }
        basis.push(q);
    }
    let mut out = CMatrix::zeros(dim, basis.len());
    for (k, b) in basis.iter().enumerate() {
        out.set_column(k, b);
    }
    (out, pivots)
}

/// Extends orthonormal columns `q` to a full orthonormal basis using the
/// standard basis as candidates.
fn complete_basis(q: &CMatrix) -> CMatrix {
    let dim = q.nrows();
    let k = q.ncols();
    // Project the standard basis off span(q) twice, then pick the complement
    // by pivoted Gram-Schmidt so the given columns stay first and in order.
    let mut rest = identity(dim);
    for _ in 0..2 {
        rest -= q * (q.adjoint() * &rest);
    }
    let (comp, _) = pivoted_orthonormalize(&rest, 1e-8);
    let mut full = CMatrix::zeros(dim, k + comp.ncols());
    full.view_mut((0, 0), (dim, k)).copy_from(q);
    full.view_mut((0, k), (dim, comp.ncols())).copy_from(&comp);
    full
}

/// Nearest matrix with orthonormal columns (polar factor).
fn polar_orthonormalize(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V*");
    u * v_t
}

fn select_columns(m: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), idx.len(), |i, c| m[(i, idx[c])])
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Block-diagonal direct sum.
pub fn direct_sum(blocks: &[CMatrix]) -> CMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Largest of `||U*U - I||_max` and `||UU* - I||_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    let id = identity(n);
    let left = max_abs(&(u.adjoint() * u - &id));
    let right = max_abs(&(u * u.adjoint() - &id));
    left.max(right)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn real(rows: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_row_iterator(rows, data.len() / rows, data.iter().map(|&x| c(x)))
    }

    #[test]
    fn identity_is_psd_with_unit_min_eigenvalue() {
        let h = HermitianMatrix::new(identity(2)).unwrap();
        let r = psd_check(&h, 1e-9).unwrap();
        assert!(r.is_psd);
        assert!((r.min_eigenvalue - 1.0).abs() < 1e-14);
        assert!((r.witness.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn all_ones_has_zero_min_eigenvalue() {
        let h = HermitianMatrix::new(real(2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        let r = psd_check(&h, 1e-9).unwrap();
        assert!(r.is_psd);
        assert!(r.min_eigenvalue.abs() < 1e-14);
    }

    #[test]
    fn constrained_witness_matrix_is_not_psd() {
        let h = HermitianMatrix::new(real(2, &[0.5, 0.75, 0.75, 29.0 / 32.0])).unwrap();
        let r = psd_check(&h, 1e-9).unwrap();
        assert!(!r.is_psd);
        // Rayleigh quotient at the witness equals the min eigenvalue.
        let q = (r.witness.adjoint() * h.as_matrix() * &r.witness)[(0, 0)].re;
        assert!((q - r.min_eigenvalue).abs() < 1e-14);
        let trace: f64 = 0.5 + 29.0 / 32.0;
        let det = -7.0 / 64.0;
        let expected = 0.5 * (trace - (trace * trace - 4.0 * det).sqrt());
        assert!((r.min_eigenvalue - expected).abs() < 1e-14);
    }

    #[test]
    fn non_finite_entries_rejected() {
        let m = real(1, &[f64::NAN]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn negative_tolerance_rejected() {
        let h = HermitianMatrix::new(identity(1)).unwrap();
        assert!(psd_check(&h, -1.0).is_err());
    }

    #[test]
    fn gram_factor_of_two_by_two() {
        let k = HermitianMatrix::new(real(2, &[2.0, 1.0, 1.0, 1.0])).unwrap();
        let f = gram_factor(&k, 1e-12).unwrap();
        let back = &f * f.adjoint();
        assert!(max_abs(&(back - k.as_matrix())) < 1e-10);
    }

    #[test]
    fn gram_factor_of_zero_is_empty() {
        let k = HermitianMatrix::new(CMatrix::zeros(3, 3)).unwrap();
        let f = gram_factor(&k, 1e-9).unwrap();
        assert_eq!(f.shape(), (3, 0));
    }

    #[test]
    fn gram_factor_rejects_indefinite() {
        let k = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]);
        match gram_factor(&k, 1e-9) {
            Err(Error::NotPositiveKernel(r)) => assert!((r.min_eigenvalue + 1.0).abs() < 1e-14),
            other => panic!("expected NotPositiveKernel, got {other:?}"),
        }
    }

    #[test]
    fn clipping_examples() {
        let p = nearest_psd(&HermitianMatrix::from_real_diagonal(&[1.0, -1.0]));
        assert!(max_abs(&(p.as_matrix() - real(2, &[1.0, 0.0, 0.0, 0.0]))) < 1e-15);

        let swap = HermitianMatrix::new(real(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let p = nearest_psd(&swap);
        assert!(max_abs(&(p.as_matrix() - real(2, &[0.5, 0.5, 0.5, 0.5]))) < 1e-14);

        let psd = HermitianMatrix::new(real(2, &[2.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(max_abs(&(nearest_psd(&psd).into_matrix() - psd.as_matrix())) < 1e-12);
    }

    #[test]
    fn empty_completion_is_identity() {
        let u = unitary_completion(&CMatrix::zeros(2, 0), &CMatrix::zeros(2, 0), 1e-9).unwrap();
        assert!(max_abs(&(u - identity(2))) < 1e-15);
    }

    #[test]
    fn completion_maps_e1_to_e2() {
        let d = real(2, &[1.0, 0.0]);
        let r = real(2, &[0.0, 1.0]);
        let u = unitary_completion(&d, &r, 1e-9).unwrap();
        assert!(max_abs(&(&u * &d - &r)) < 1e-14);
        assert!(unitarity_defect(&u) < 1e-14);
    }

    #[test]
    fn completion_rejects_non_isometric_pairs() {
        let d = real(2, &[1.0, 0.0]);
        let r = real(2, &[0.0, 2.0]);
        assert!(matches!(
            unitary_completion(&d, &r, 1e-9),
            Err(Error::NotIsometric { .. })
        ));
        assert!(matches!(
            unitary_completion(&d, &real(3, &[1.0, 0.0, 0.0]), 1e-9),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn kron_and_direct_sum_shapes() {
        let a = real(2, &[1.0, 2.0, 3.0, 4.0]);
        let b = identity(3);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k[(4, 1)], c(3.0));
        let s = direct_sum(&[a.clone(), identity(1)]);
        assert_eq!(s.shape(), (3, 3));
        assert_eq!(s[(2, 2)], c(1.0));
        assert_eq!(s[(0, 2)], c(0.0));
    }
}
