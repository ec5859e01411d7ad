//! Test functions: coordinate functions on the disk and polydisk, tabulated
//! functions, and the constrained extreme family `S = (F + I)^{-1}(F - I)`
//! where `F(z) = sum_r (t_r + z)/(t_r - z) W_r` is the Herglotz function of a
//! finitely supported quantum probability measure with vanishing first moment.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, identity, max_abs, op_norm, CMatrix, HermitianMatrix};
use crate::Point;

const SUM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const MOMENT_TOL: f64 = 1e-8;
/// Radius used for boundary values at 1.
pub const BOUNDARY_RADIUS: f64 = 1.0 - 1e-6;

/// Finitely supported positive matrix measure `sum_r W_r delta_{t_r}` on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumMeasure {
    points: Vec<Complex64>,
    weights: Vec<CMatrix>,
}

impl QuantumMeasure {
    /// Checks unimodular distinct points, PSD weights and total mass `I_N`.
    pub fn new(points: Vec<Complex64>, weights: Vec<CMatrix>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "measure needs matching non-empty points/weights, got {} and {}",
                points.len(),
                weights.len()
            )));
        }
        check_circle_points(&points)?;
        let n_dim = weights[0].nrows();
        let mut total = CMatrix::zeros(n_dim, n_dim);
        for (r, w) in weights.iter().enumerate() {
            if w.shape() != (n_dim, n_dim) || n_dim == 0 {
                return Err(Error::InvalidInput(format!("weight {r} has shape {:?}", w.shape())));
            }
            if max_abs(&(w - w.adjoint())) > PSD_TOL {
                return Err(Error::InvalidInput(format!("weight {r} is not Hermitian")));
            }
            let report = linalg::psd_check(&HermitianMatrix::new(w.clone())?, PSD_TOL)?;
            if !report.is_psd {
                return Err(Error::InvalidInput(format!(
                    "weight {r} is not PSD (min eigenvalue {:.3e})",
                    report.min_eigenvalue
                )));
            }
            total += w;
        }
        let defect = max_abs(&(total - identity(n_dim)));
        if defect > SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to I only within {defect:.3e}"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Scalar measure `(delta_1 + delta_{-1})/2` (and `I_N/2` weights in size `N`).
    pub fn antipodal(n_dim: usize) -> Self {
        let half = identity(n_dim).scale(0.5);
        Self {
            points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            weights: vec![half.clone(), half],
        }
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn weights(&self) -> &[CMatrix] {
        &self.weights
    }

    /// Block size `N`.
    pub fn dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn support_size(&self) -> usize {
        self.points.len()
    }

    /// `(sum Re(t_r) W_r, sum Im(t_r) W_r)`.
    pub fn moments(&self) -> (CMatrix, CMatrix) {
        let n = self.dim();
        let mut re = CMatrix::zeros(n, n);
        let mut im = CMatrix::zeros(n, n);
        for (t, w) in self.points.iter().zip(&self.weights) {
            re += w.scale(t.re);
            im += w.scale(t.im);
        }
        (re, im)
    }

    /// Largest entry of the two first-moment matrices.
    pub fn moment_defect(&self) -> f64 {
        let (re, im) = self.moments();
        max_abs(&re).max(max_abs(&im))
    }

    pub fn is_constrained(&self) -> bool {
        self.moment_defect() <= MOMENT_TOL
    }

    /// Support size within `1..=3N`.
    pub fn is_extreme_candidate(&self) -> bool {
        (1..=3 * self.dim()).contains(&self.support_size())
    }

    /// `F(z) = sum_r (t_r + z)/(t_r - z) W_r`.
    pub fn herglotz_eval(&self, z: Complex64) -> Result<CMatrix> {
        if !(z.norm() <= 1.0) {
            return Err(Error::InvalidInput(format!("|z| > 1 for z = {z}")));
        }
        let n = self.dim();
        let mut f = CMatrix::zeros(n, n);
        for (t, w) in self.points.iter().zip(&self.weights) {
            let den = t - z;
            if den.norm() < 1e-300 {
                return Err(Error::InvalidInput(format!("z = {z} is a support point")));
            }
            f += w * ((t + z) / den);
        }
        Ok(f)
    }

    /// Cayley transform `S(z) = (F(z) + I)^{-1}(F(z) - I)`.
    pub fn cayley_to_schur(&self, z: Complex64) -> Result<CMatrix> {
        let f = self.herglotz_eval(z)?;
        cayley(&f)
    }

    /// Boundary value at 1: the radial value at [`BOUNDARY_RADIUS`], which
    /// must be unitary within 1e-4, replaced by its unitary polar factor.
    pub fn boundary_value_at_one(&self) -> Result<CMatrix> {
        let s1 = self.cayley_to_schur(Complex64::new(BOUNDARY_RADIUS, 0.0))?;
        let defect = max_abs(&(&s1 * s1.adjoint() - identity(self.dim())));
        if defect > 1e-4 {
            return Err(Error::NormalizationFailure { defect });
        }
        let svd = s1.svd(true, true);
        Ok(svd.u.expect("requested U") * svd.v_t.expect("requested V*"))
    }

    /// `S(z) S(1)*`, the representative with value `I` at 1.
    pub fn normalize_at_one(&self, z: Complex64) -> Result<CMatrix> {
        let s1 = self.boundary_value_at_one()?;
        Ok(self.cayley_to_schur(z)? * s1.adjoint())
    }

    /// Full invariant check including the moment constraints.
    pub fn check_constrained(&self) -> Result<()> {
        let defect = self.moment_defect();
        if defect > MOMENT_TOL {
            return Err(Error::InvalidInput(format!(
                "first moment does not vanish (defect {defect:.3e})"
            )));
        }
        Ok(())
    }
}

fn cayley(f: &CMatrix) -> Result<CMatrix> {
    let n = f.nrows();
    let id = identity(n);
    let lu = (f + &id).lu();
    lu.solve(&(f - &id))
        .ok_or_else(|| Error::NumericalFailure("F + I is singular".into()))
}

fn check_circle_points(points: &[Complex64]) -> Result<()> {
    for (r, t) in points.iter().enumerate() {
        if !t.re.is_finite() || !t.im.is_finite() || (t.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("point {r} = {t} is not unimodular")));
        }
        for s in &points[..r] {
            if (t - s).norm() < 1e-12 {
                return Err(Error::InvalidInput(format!("point {t} is repeated")));
            }
        }
    }
    Ok(())
}

/// A contractive matrix-valued function on the disk or polydisk.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `z -> z_index` (1x1).
    Coordinate { index: usize },
    /// `S_{t,w}` built from an extreme constrained measure.
    ConstrainedExtreme(QuantumMeasure),
    /// Values known only at finitely many points.
    Tabulated { nodes: Vec<Point>, values: Vec<CMatrix> },
}

impl TestFunction {
    pub fn disk() -> Self {
        TestFunction::Coordinate { index: 0 }
    }

    /// Output block size.
    pub fn output_dim(&self) -> usize {
        match self {
            TestFunction::Coordinate { .. } => 1,
            TestFunction::ConstrainedExtreme(mu) => mu.dim(),
            TestFunction::Tabulated { values, .. } => values.first().map_or(1, |v| v.nrows()),
        }
    }

    pub fn coordinate_index(&self) -> Option<usize> {
        match self {
            TestFunction::Coordinate { index } => Some(*index),
            _ => None,
        }
    }

    /// Raw evaluation, no contractivity check.
    pub fn eval(&self, z: &Point) -> Result<CMatrix> {
        match self {
            TestFunction::Coordinate { index } => {
                let c = z.coords().get(*index).ok_or_else(|| {
                    Error::InvalidInput(format!("point {z} has no coordinate {index}"))
                })?;
                Ok(CMatrix::from_element(1, 1, *c))
            }
            TestFunction::ConstrainedExtreme(mu) => {
                if z.dim() != 1 {
                    return Err(Error::InvalidInput(format!(
                        "constrained test function needs a disk point, got {z}"
                    )));
                }
                mu.cayley_to_schur(z.z())
            }
            TestFunction::Tabulated { nodes, values } => nodes
                .iter()
                .position(|p| {
                    p.dim() == z.dim()
                        && p.coords().iter().zip(z.coords()).all(|(a, b)| (a - b).norm() < 1e-12)
                })
                .map(|k| values[k].clone())
                .ok_or_else(|| Error::InvalidInput(format!("no tabulated value at {z}"))),
        }
    }

    /// Evaluation enforcing `||psi(z)|| < 1`.
    pub fn eval_strict(&self, z: &Point) -> Result<CMatrix> {
        let v = self.eval(z)?;
        let norm = op_norm(&v);
        if !(norm < 1.0) {
            return Err(Error::TestAxiom { at: z.to_string(), norm });
        }
        Ok(v)
    }
}

/// Disk family `{z}`.
pub fn disk_family() -> Vec<TestFunction> {
    vec![TestFunction::disk()]
}

/// Polydisk family `{z_1, ..., z_d}`.
pub fn polydisk_family(d: usize) -> Vec<TestFunction> {
    (0..d).map(|index| TestFunction::Coordinate { index }).collect()
}

pub fn constrained_family(measures: Vec<QuantumMeasure>) -> Vec<TestFunction> {
    measures.into_iter().map(TestFunction::ConstrainedExtreme).collect()
}

/// Evaluates every member of the family at `z`: the discretized `E(z)`.
pub fn eval_family(family: &[TestFunction], z: &Point) -> Result<Vec<CMatrix>> {
    family.iter().map(|psi| psi.eval_strict(z)).collect()
}

#[derive(Debug, Clone)]
pub struct BarycentricOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Plateau when the residual improves by less than `plateau_rel` (relative)
    /// over `plateau_window` iterations.
    pub plateau_window: usize,
    pub plateau_rel: f64,
}

impl Default for BarycentricOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-9,
            plateau_window: 500,
            plateau_rel: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub enum BarycentricOutcome {
    Feasible {
        measure: QuantumMeasure,
        residual: f64,
        iterations: usize,
    },
    Infeasible {
        residual: f64,
        iterations: usize,
    },
}

impl BarycentricOutcome {
    pub fn measure(&self) -> Option<&QuantumMeasure> {
        match self {
            BarycentricOutcome::Feasible { measure, .. } => Some(measure),
            BarycentricOutcome::Infeasible { .. } => None,
        }
    }
}

/// Linear map `w -> (sum w_r, sum Re(t_r) w_r, sum Im(t_r) w_r)` and its pseudo-inverse.
struct MomentMap {
    phi: DMatrix<f64>,
    phi_pinv: DMatrix<f64>,
}

impl MomentMap {
    fn new(points: &[Complex64]) -> Self {
        let n = points.len();
        let phi = DMatrix::from_fn(3, n, |row, r| match row {
            0 => 1.0,
            1 => points[r].re,
            _ => points[r].im,
        });
        let phi_pinv = phi
            .clone()
            .pseudo_inverse(1e-13)
            .expect("pseudo-inverse with non-negative epsilon");
        Self { phi, phi_pinv }
    }

    /// Projects each matrix entry's weight vector onto `phi w = target`.
    fn project(&self, weights: &mut [CMatrix]) {
        let n_dim = weights[0].nrows();
        let n = weights.len();
        for a in 0..n_dim {
            for b in 0..n_dim {
                let target = if a == b { 1.0 } else { 0.0 };
                for part in 0..2 {
                    let x = DVector::from_fn(n, |r, _| {
                        let v = weights[r][(a, b)];
                        if part == 0 { v.re } else { v.im }
                    });
                    let mut res = &self.phi * &x;
                    if part == 0 {
                        res[0] -= target;
                    }
                    let corr = &self.phi_pinv * res;
                    for r in 0..n {
                        let v = &mut weights[r][(a, b)];
                        if part == 0 {
                            v.re -= corr[r];
                        } else {
                            v.im -= corr[r];
                        }
                    }
                }
            }
        }
    }

    fn residual(&self, weights: &[CMatrix]) -> f64 {
        let n_dim = weights[0].nrows();
        let mut worst = 0.0_f64;
        for a in 0..n_dim {
            for b in 0..n_dim {
                let target = if a == b { 1.0 } else { 0.0 };
                let mut acc = [Complex64::new(0.0, 0.0); 3];
                for (r, w) in weights.iter().enumerate() {
                    for (row, slot) in acc.iter_mut().enumerate() {
                        *slot += w[(a, b)] * self.phi[(row, r)];
                    }
                }
                acc[0] -= Complex64::new(target, 0.0);
                for v in acc {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }
}

/// Matrix barycentric coordinates of the origin for unimodular points.
///
/// Dykstra's alternating projections between the PSD product cone and the
/// affine set `{sum W = I, sum Re(t) W = 0, sum Im(t) W = 0}` from `W_r = I/n`.
pub fn solve_barycentric(
    points: &[Complex64],
    n_dim: usize,
    opts: &BarycentricOptions,
) -> Result<BarycentricOutcome> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    if n_dim == 0 {
        return Err(Error::InvalidInput("block size must be positive".into()));
    }
    check_circle_points(points)?;
    let n = points.len();
    let map = MomentMap::new(points);

    let mut x: Vec<CMatrix> = vec![identity(n_dim).scale(1.0 / n as f64); n];
    let mut p: Vec<CMatrix> = vec![CMatrix::zeros(n_dim, n_dim); n];
    let mut history: Vec<f64> = Vec::with_capacity(opts.max_iters.min(1 << 16));
    let mut residual = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        let mut y = Vec::with_capacity(n);
        for r in 0..n {
            let shifted = HermitianMatrix::symmetrized(&x[r] + &p[r]);
            let proj = linalg::nearest_psd(&shifted).into_matrix();
            p[r] = shifted.as_matrix() - &proj;
            y.push(proj);
        }
        residual = map.residual(&y);
        x = y.clone();
        map.project(&mut x);

        if residual <= opts.tol {
            let weights = finalize_weights(&x, &y);
            let measure = QuantumMeasure::new(points.to_vec(), weights)?;
            return Ok(BarycentricOutcome::Feasible {
                measure,
                residual,
                iterations: iter,
            });
        }
        history.push(residual);
        if history.len() > opts.plateau_window {
            let old = history[history.len() - 1 - opts.plateau_window];
            if old - residual <= opts.plateau_rel * old {
                return Ok(BarycentricOutcome::Infeasible {
                    residual,
                    iterations: iter,
                });
            }
        }
    }
    Ok(BarycentricOutcome::Infeasible {
        residual,
        iterations: opts.max_iters,
    })
}

/// Prefers the affine-exact iterate when it is PSD to within rounding;
/// otherwise renormalizes the PSD iterate by `S^{-1/2} W_r S^{-1/2}`, `S = sum W_r`.
fn finalize_weights(affine: &[CMatrix], cone: &[CMatrix]) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(affine.len());
    for w in affine {
        let h = HermitianMatrix::symmetrized(w.clone());
        let (values, _) = h.eigen();
        if values.first().copied().unwrap_or(0.0) < -PSD_TOL * 0.5 {
            return renormalize(cone);
        }
        out.push(linalg::nearest_psd(&h).into_matrix());
    }
    out
}

fn renormalize(weights: &[CMatrix]) -> Vec<CMatrix> {
    let n_dim = weights[0].nrows();
    let total = weights.iter().fold(CMatrix::zeros(n_dim, n_dim), |acc, w| acc + w);
    let (values, vectors) = HermitianMatrix::symmetrized(total).eigen();
    let inv_sqrt = CMatrix::from_fn(n_dim, n_dim, |i, j| {
        (0..n_dim)
            .map(|k| vectors[(i, k)] * vectors[(j, k)].conj() / values[k].sqrt())
            .sum()
    });
    weights
        .iter()
        .map(|w| HermitianMatrix::symmetrized(&inv_sqrt * w * &inv_sqrt).into_matrix())
        .collect()
}

/// Result of the weak-independence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeakIndependence {
    pub independent: bool,
    pub nullity: usize,
}

/// Real-linear map from Hermitian perturbations supported on the weight
/// ranges to the three moment matrices.
struct PerturbationSystem {
    /// Orthonormal range basis of each weight.
    bases: Vec<CMatrix>,
    /// Real parameter count per weight.
    sizes: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl PerturbationSystem {
    fn new(mu: &QuantumMeasure, tol: f64) -> Self {
        let n_dim = mu.dim();
        let mut bases = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut sizes = Vec::new();
        for (t, w) in mu.points.iter().zip(&mu.weights) {
            let h = HermitianMatrix::symmetrized(w.clone());
            let (values, vectors) = h.eigen();
            let top = values.last().copied().unwrap_or(0.0);
            let keep: Vec<usize> = (0..n_dim).filter(|&k| values[k] > tol * top.max(1.0)).collect();
            let basis = CMatrix::from_fn(n_dim, keep.len(), |i, c| vectors[(i, keep[c])]);
            let k = keep.len();
            for e in hermitian_basis(k) {
                let t_mat = &basis * e * basis.adjoint();
                let mut col = hermitian_params(&t_mat);
                col.extend(hermitian_params(&t_mat.scale(t.re)));
                col.extend(hermitian_params(&t_mat.scale(t.im)));
                columns.push(col);
            }
            sizes.push(k * k);
            bases.push(basis);
        }
        let rows = 3 * n_dim * n_dim;
        let matrix = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
        Self { bases, sizes, matrix }
    }

    /// Orthonormal basis of the null space (as columns).
    fn null_space(&self) -> DMatrix<f64> {
        let cols = self.matrix.ncols();
        if cols == 0 {
            return DMatrix::zeros(0, 0);
        }
        let gram = self.matrix.transpose() * &self.matrix;
        let eig = SymmetricEigen::new(gram);
        let scale = eig.eigenvalues.iter().copied().fold(1.0, f64::max);
        let null: Vec<usize> = (0..cols)
            .filter(|&k| eig.eigenvalues[k] <= 1e-18 * scale.max(1.0) + 1e-20)
            .collect();
        DMatrix::from_fn(cols, null.len(), |i, c| eig.eigenvectors[(i, null[c])])
    }

    fn nullity(&self) -> usize {
        let cols = self.matrix.ncols();
        if cols == 0 {
            return 0;
        }
        let sv = self.matrix.clone().singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max);
        let rank = sv.iter().filter(|&&s| s > 1e-9 * top.max(1.0)).count();
        cols - rank
    }

    /// Hermitian perturbations `T_r` for a null-space parameter vector.
    fn perturbations(&self, params: &[f64]) -> Vec<CMatrix> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.bases.len());
        for (basis, &size) in self.bases.iter().zip(&self.sizes) {
            let k = basis.ncols();
            let mut inner = CMatrix::zeros(k, k);
            for (e, &c) in hermitian_basis(k).iter().zip(&params[offset..offset + size]) {
                inner += e.scale(c);
            }
            offset += size;
            out.push(basis * inner * basis.adjoint());
        }
        out
    }
}

/// Real basis of `k x k` Hermitian matrices.
fn hermitian_basis(k: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        let mut e = CMatrix::zeros(k, k);
        e[(i, i)] = Complex64::new(1.0, 0.0);
        out.push(e);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..k {
        for j in i + 1..k {
            let mut re = CMatrix::zeros(k, k);
            re[(i, j)] = Complex64::new(s, 0.0);
            re[(j, i)] = Complex64::new(s, 0.0);
            out.push(re);
            let mut im = CMatrix::zeros(k, k);
            im[(i, j)] = Complex64::new(0.0, s);
            im[(j, i)] = Complex64::new(0.0, -s);
            out.push(im);
        }
    }
    out
}

/// `N^2` real coordinates of a Hermitian matrix.
fn hermitian_params(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

/// Triviality of `{T_r Hermitian, Ran T_r in Ran W_r, sum T_r = sum Re(t_r) T_r = sum Im(t_r) T_r = 0}`.
pub fn weak_independence_check(mu: &QuantumMeasure) -> WeakIndependence {
    let nullity = PerturbationSystem::new(mu, 1e-9).nullity();
    WeakIndependence {
        independent: nullity == 0,
        nullity,
    }
}

/// Moves a feasible measure along null directions of the perturbation
/// system until the weights are weakly independent.
pub fn reduce_to_extreme(mu: &QuantumMeasure) -> Result<QuantumMeasure> {
    let mut points = mu.points.clone();
    let mut weights = mu.weights.clone();
    let n_dim = mu.dim();
    for _ in 0..(4 * points.len() * n_dim * n_dim + 4) {
        let current = QuantumMeasure {
            points: points.clone(),
            weights: weights.clone(),
        };
        let system = PerturbationSystem::new(&current, 1e-9);
        let null = system.null_space();
        if null.ncols() == 0 {
            return QuantumMeasure::new(points, weights);
        }
        let params: Vec<f64> = null.column(0).iter().copied().collect();
        let dirs = system.perturbations(&params);
        let (up, down) = step_limits(&weights, &dirs);
        let step = if up.is_finite() { up } else { -down };
        if !step.is_finite() {
            return Err(Error::NumericalFailure("unbounded extreme-point reduction".into()));
        }
        let mut next_points = Vec::new();
        let mut next_weights = Vec::new();
        for (r, (w, d)) in weights.iter().zip(&dirs).enumerate() {
            let moved = HermitianMatrix::symmetrized(w + d.scale(step));
            let (values, vectors) = moved.eigen();
            let top = values.last().copied().unwrap_or(0.0);
            // Snap eigenvalues the step drove to zero.
            let mut cleaned = CMatrix::zeros(n_dim, n_dim);
            for (k, &lambda) in values.iter().enumerate() {
                if lambda > 1e-11 * top.max(1.0) {
                    let v = vectors.column(k);
                    cleaned += (&v * v.adjoint()).scale(lambda);
                }
            }
            if cleaned.trace().re > 1e-12 {
                next_points.push(points[r]);
                next_weights.push(cleaned);
            }
        }
        // Restore the total mass lost to snapping.
        let total: CMatrix = next_weights.iter().fold(CMatrix::zeros(n_dim, n_dim), |acc, w| acc + w);
        let defect = max_abs(&(total - identity(n_dim)));
        if defect > 1e-9 {
            return Err(Error::NumericalFailure(format!(
                "mass drifted by {defect:.3e} during reduction"
            )));
        }
        points = next_points;
        weights = next_weights;
    }
    Err(Error::NumericalFailure("extreme-point reduction did not terminate".into()))
}

/// Largest `s >= 0` with `W_r + s T_r >= 0` for all `r`, and likewise for `-T`.
fn step_limits(weights: &[CMatrix], dirs: &[CMatrix]) -> (f64, f64) {
    let mut up = f64::INFINITY;
    let mut down = f64::INFINITY;
    for (w, d) in weights.iter().zip(dirs) {
        let h = HermitianMatrix::symmetrized(w.clone());
        let (values, vectors) = h.eigen();
        let top = values.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..values.len())
            .filter(|&k| values[k] > 1e-9 * top.max(1.0))
            .collect();
        if keep.is_empty() {
            continue;
        }
        // Whitened direction L^{-1/2} V* T V L^{-1/2} on the range of W.
        let k = keep.len();
        let basis = CMatrix::from_fn(w.nrows(), k, |i, c| vectors[(i, keep[c])]);
        let inner = basis.adjoint() * d * &basis;
        let white = CMatrix::from_fn(k, k, |i, j| {
            inner[(i, j)] / (values[keep[i]] * values[keep[j]]).sqrt()
        });
        let (ev, _) = HermitianMatrix::symmetrized(white).eigen();
        let lo = ev[0];
        let hi = ev[k - 1];
        if lo < -1e-14 {
            up = up.min(-1.0 / lo);
        }
        if hi > 1e-14 {
            down = down.min(1.0 / hi);
        }
    }
    (up, down)
}

#[derive(Debug, Clone)]
pub struct SamplerOptions {
    pub max_attempts: usize,
    pub barycentric: BarycentricOptions,
    /// Reduce feasible non-extreme weights to an extreme point instead of rejecting.
    pub reduce: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            max_attempts: 1000,
            barycentric: BarycentricOptions::default(),
            reduce: true,
        }
    }
}

/// Rejection sampler for extreme constrained measures of block size `n_dim`.
///
/// Draws `2..=3N` seeded points on the circle, solves for barycentric weights
/// and accepts when the weights are weakly independent.
pub fn sample_extreme_measure(n_dim: usize, seed: u64, opts: &SamplerOptions) -> Result<QuantumMeasure> {
    if n_dim == 0 {
        return Err(Error::InvalidInput("block size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..opts.max_attempts {
        let n = rng.random_range(2..=3 * n_dim);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        angles.sort_by(f64::total_cmp);
        if angles.windows(2).any(|w| w[1] - w[0] < 1e-6) || 2.0 * PI - angles[n - 1] + angles[0] < 1e-6 {
            continue;
        }
        let points: Vec<Complex64> = angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
        let outcome = solve_barycentric(&points, n_dim, &opts.barycentric)?;
        let Some(mu) = outcome.measure() else { continue };
        let mu = if opts.reduce { reduce_to_extreme(mu)? } else { mu.clone() };
        if mu.is_extreme_candidate() && mu.is_constrained() && weak_independence_check(&mu).independent {
            return Ok(mu);
        }
    }
    Err(Error::SamplingFailure {
        attempts: opts.max_attempts,
    })
}

/// `count` extreme measures with per-index seeds `seed + k`, skipping
/// measures whose test kernel duplicates an earlier one.
pub fn sample_extreme_family(
    n_dim: usize,
    count: usize,
    seed: u64,
    include_antipodal: bool,
    opts: &SamplerOptions,
) -> Result<Vec<QuantumMeasure>> {
    let mut out: Vec<QuantumMeasure> = Vec::with_capacity(count);
    if include_antipodal && count > 0 {
        out.push(QuantumMeasure::antipodal(n_dim));
    }
    let mut k = 0u64;
    while out.len() < count {
        let mu = sample_extreme_measure(n_dim, seed.wrapping_add(k), opts)?;
        k += 1;
        if !out.iter().any(|other| same_test_kernel(other, &mu, 1e-9)) {
            out.push(mu);
        }
        if k > 100 * count as u64 + 100 {
            return Err(Error::SamplingFailure { attempts: k as usize });
        }
    }
    Ok(out)
}

/// Whether `I - S(z)S(w)*` agrees for two measures on a fixed probe grid.
pub fn same_test_kernel(a: &QuantumMeasure, b: &QuantumMeasure, tol: f64) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let probes: Vec<Complex64> = (0..6)
        .map(|k| Complex64::from_polar(0.3 + 0.1 * (k % 3) as f64, 0.7 * k as f64 + 0.2))
        .collect();
    let eval = |mu: &QuantumMeasure| -> Option<Vec<CMatrix>> {
        probes.iter().map(|&z| mu.cayley_to_schur(z).ok()).collect()
    };
    let (Some(sa), Some(sb)) = (eval(a), eval(b)) else {
        return false;
    };
    for i in 0..probes.len() {
        for j in 0..probes.len() {
            let ka = &sa[i] * sa[j].adjoint();
            let kb = &sb[i] * sb[j].adjoint();
            if max_abs(&(ka - kb)) > tol {
                return false;
            }
        }
    }
    true
}
