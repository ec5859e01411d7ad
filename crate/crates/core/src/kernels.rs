//! Finite kernels, Pick matrices and the positivity tests built on them.
//!
//! The central object is the form
//! `sum_{i,j} tr(X_j^* (M^2 I - S_j^* S_i) X_i K_ij)`, quantified over all
//! coefficient functions `X`. It is positive for every `X` exactly when the
//! block matrix with `(i, j)` block `conj(K_ij) (x) (M^2 I - S_i^* S_j)` is PSD,
//! where row `(i, c, u)` corresponds to entry `X_i[u, c]` (column-stacked).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    self, identity, kron, max_abs, CMatrix, CVector, HermitianMatrix, PsdReport, DEFAULT_TOL,
};
use crate::testfns::TestFunction;
use crate::Point;

/// Values `K(z_i, z_j)` of a matrix kernel on a finite node set.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    nodes: Vec<Point>,
    block_dim: usize,
    /// Row-major `n x n` table of `block_dim x block_dim` blocks.
    values: Vec<CMatrix>,
}

impl FiniteKernel {
    pub fn new(nodes: Vec<Point>, block_dim: usize, values: Vec<CMatrix>) -> Result<Self> {
        let n = nodes.len();
        if values.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "kernel on {n} nodes needs {} blocks, got {}",
                n * n,
                values.len()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if v.shape() != (block_dim, block_dim) {
                return Err(Error::InvalidInput(format!("block {k} has shape {:?}", v.shape())));
            }
            if !linalg::all_finite(v) {
                return Err(Error::InvalidInput(format!("block {k} is not finite")));
            }
        }
        for i in 0..n {
            for j in 0..=i {
                let asym = max_abs(&(&values[i * n + j] - values[j * n + i].adjoint()));
                if asym > 1e-10 {
                    return Err(Error::InvalidInput(format!(
                        "K(z_{i}, z_{j}) != K(z_{j}, z_{i})^* (defect {asym:.3e})"
                    )));
                }
            }
        }
        Ok(Self { nodes, block_dim, values })
    }

    pub fn from_fn(
        nodes: Vec<Point>,
        block_dim: usize,
        mut f: impl FnMut(&Point, &Point) -> CMatrix,
    ) -> Result<Self> {
        let values = nodes
            .iter()
            .flat_map(|z| nodes.iter().map(|w| (z, w)).collect::<Vec<_>>())
            .map(|(z, w)| f(z, w))
            .collect();
        Self::new(nodes, block_dim, values)
    }

    /// Szegő kernel `1/(1 - z conj(w))` on disk nodes.
    pub fn szego(nodes: Vec<Point>) -> Result<Self> {
        Self::product_szego(nodes)
    }

    /// `prod_k 1/(1 - z_k conj(w_k))`; the Szegő kernel when `d = 1`.
    pub fn product_szego(nodes: Vec<Point>) -> Result<Self> {
        check_open_polydisk(&nodes)?;
        Self::from_fn(nodes, 1, |z, w| {
            let v = z
                .coords()
                .iter()
                .zip(w.coords())
                .map(|(a, b)| 1.0 / (1.0 - a * b.conj()))
                .product::<Complex64>();
            CMatrix::from_element(1, 1, v)
        })
    }

    /// Constant kernel `K(z, w) = value`.
    pub fn constant(nodes: Vec<Point>, value: CMatrix) -> Result<Self> {
        let d = value.nrows();
        Self::from_fn(nodes, d, |_, _| value.clone())
    }

    /// `K(z, w) = (alpha + z beta)(alpha + w beta)^* + z^2 conj(w)^2 / (1 - z conj(w)) I_N`.
    pub fn constrained_generating(nodes: Vec<Point>, alpha: &CVector, beta: &CVector) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(Error::InvalidInput("alpha and beta must be non-empty of equal length".into()));
        }
        check_open_polydisk(&nodes)?;
        let n_dim = alpha.len();
        Self::from_fn(nodes, n_dim, |z, w| {
            let (z, w) = (z.z(), w.z());
            let left = alpha + beta * z;
            let right = alpha + beta * w;
            let tail = z * z * (w * w).conj() / (1.0 - z * w.conj());
            left * right.adjoint() + identity(n_dim) * tail
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn value(&self, i: usize, j: usize) -> &CMatrix {
        &self.values[i * self.nodes.len() + j]
    }

    /// Assembled `nN x nN` block Gram matrix.
    pub fn gram(&self) -> HermitianMatrix {
        let n = self.nodes.len();
        let d = self.block_dim;
        HermitianMatrix::symmetrized(CMatrix::from_fn(n * d, n * d, |r, c| {
            self.value(r / d, c / d)[(r % d, c % d)]
        }))
    }

    pub fn is_positive(&self, tol: f64) -> Result<bool> {
        Ok(linalg::psd_check(&self.gram(), tol)?.is_psd)
    }

    /// `H(z_i)` with `K(z_i, z_j) = H(z_i) H(z_j)^*`, inner width = numerical rank.
    pub fn kolmogorov_factor(&self, tol: f64) -> Result<Vec<CMatrix>> {
        let f = linalg::gram_factor(&self.gram(), tol)?;
        let d = self.block_dim;
        Ok((0..self.nodes.len())
            .map(|i| f.rows(i * d, d).into_owned())
            .collect())
    }
}

fn check_open_polydisk(nodes: &[Point]) -> Result<()> {
    for (i, z) in nodes.iter().enumerate() {
        if !z.is_finite() || z.dim() == 0 {
            return Err(Error::InvalidInput(format!("node {i} is not a finite point")));
        }
        if !(z.sup_norm() < 1.0) {
            return Err(Error::InvalidInput(format!("node {i} = {z} is not in the open (poly)disk")));
        }
    }
    Ok(())
}

/// Which function class an interpolation problem asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemClass {
    ClassicalDisk,
    /// Bounded disk functions with vanishing derivative at 0.
    ConstrainedH1,
    Polydisk { dim: usize },
    Custom,
}

/// Nodes `z_i` and target values `S_0(z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationProblem {
    nodes: Vec<Point>,
    values: Vec<CMatrix>,
    class: ProblemClass,
}

impl InterpolationProblem {
    pub fn new(nodes: Vec<Point>, values: Vec<CMatrix>, class: ProblemClass) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("problem has no nodes".into()));
        }
        if nodes.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        check_open_polydisk(&nodes)?;
        let dim = nodes[0].dim();
        if nodes.iter().any(|z| z.dim() != dim) {
            return Err(Error::InvalidInput("nodes have mixed dimensions".into()));
        }
        let expected_dim = match class {
            ProblemClass::ClassicalDisk | ProblemClass::ConstrainedH1 => Some(1),
            ProblemClass::Polydisk { dim } => Some(dim),
            ProblemClass::Custom => None,
        };
        if let Some(d) = expected_dim {
            if d != dim {
                return Err(Error::InvalidInput(format!(
                    "class expects {d}-dimensional nodes, got {dim}"
                )));
            }
        }
        for i in 0..nodes.len() {
            for j in 0..i {
                let gap = nodes[i]
                    .coords()
                    .iter()
                    .zip(nodes[j].coords())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                if gap < 1e-12 {
                    return Err(Error::InvalidInput(format!("nodes {j} and {i} coincide")));
                }
            }
        }
        let shape = values[0].shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::InvalidInput("empty value matrix".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if v.shape() != shape {
                return Err(Error::InvalidInput(format!("value {i} has shape {:?}", v.shape())));
            }
            if !linalg::all_finite(v) {
                return Err(Error::InvalidInput(format!("value {i} is not finite")));
            }
        }
        Ok(Self { nodes, values, class })
    }

    /// Scalar data on the disk.
    pub fn scalar(nodes: &[Complex64], values: &[Complex64], class: ProblemClass) -> Result<Self> {
        Self::new(
            nodes.iter().map(|&z| Point::scalar(z)).collect(),
            values.iter().map(|&v| CMatrix::from_element(1, 1, v)).collect(),
            class,
        )
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn class(&self) -> ProblemClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Output dimension (rows of each value).
    pub fn output_dim(&self) -> usize {
        self.values[0].nrows()
    }

    /// Input dimension (columns of each value).
    pub fn input_dim(&self) -> usize {
        self.values[0].ncols()
    }
}

/// Block matrix `((I - S_i S_j^*) / (1 - z_i conj(z_j)))_{i,j}`.
pub fn dbr_pick_matrix(problem: &InterpolationProblem) -> Result<HermitianMatrix> {
    if problem.nodes[0].dim() != 1 {
        return Err(Error::InvalidInput("Pick matrix needs disk nodes".into()));
    }
    let n = problem.len();
    let d = problem.output_dim();
    let mut out = CMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            let (zi, zj) = (problem.nodes[i].z(), problem.nodes[j].z());
            let block = (identity(d) - &problem.values[i] * problem.values[j].adjoint())
                / (1.0 - zi * zj.conj());
            out.view_mut((i * d, j * d), (d, d)).copy_from(&block);
        }
    }
    HermitianMatrix::new(out)
}

/// Matrix of the form `sum tr(X_j^*(m_sq I - S_j^* S_i) X_i K_ij)` in the
/// column-stacked coordinates of `(X_1, ..., X_n)`.
pub fn multiplier_form_matrix(
    kernel: &FiniteKernel,
    values: &[CMatrix],
    m_sq: f64,
) -> Result<HermitianMatrix> {
    let n = kernel.len();
    if values.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} values for a kernel on {n} nodes",
            values.len()
        )));
    }
    let d_u = values.first().map_or(0, |v| v.ncols());
    if values.iter().any(|v| v.ncols() != d_u || v.nrows() != values[0].nrows()) {
        return Err(Error::InvalidInput("multiplier values have mixed shapes".into()));
    }
    let e = kernel.block_dim();
    let blk = e * d_u;
    let mut out = CMatrix::zeros(n * blk, n * blk);
    for i in 0..n {
        for j in 0..n {
            let coupling = identity(d_u).scale(m_sq) - values[i].adjoint() * &values[j];
            let conj_k = kernel.value(i, j).map(|z| z.conj());
            out.view_mut((i * blk, j * blk), (blk, blk)).copy_from(&kron(&conj_k, &coupling));
        }
    }
    HermitianMatrix::new(out)
}

/// Reshapes a form-matrix vector into `X_i` (`d_u x block_dim`) per node.
pub fn vector_to_coefficients(x: &CVector, nodes: usize, block_dim: usize, d_u: usize) -> Vec<CMatrix> {
    let blk = block_dim * d_u;
    (0..nodes)
        .map(|i| CMatrix::from_fn(d_u, block_dim, |u, c| x[i * blk + c * d_u + u]))
        .collect()
}

/// Whether right multiplication by `psi` is contractive on `H(K)`.
pub fn admissibility_check(kernel: &FiniteKernel, psi: &TestFunction, tol: f64) -> Result<PsdReport> {
    let values = kernel
        .nodes()
        .iter()
        .map(|z| psi.eval_strict(z))
        .collect::<Result<Vec<_>>>()?;
    let form = multiplier_form_matrix(kernel, &values, 1.0)?;
    linalg::psd_check(&form, tol)
}

/// Whether `||R_S|| <= bound` on `H(K)` for sampled multiplier values.
pub fn multiplier_norm_bound(
    kernel: &FiniteKernel,
    values: &[CMatrix],
    bound: f64,
    tol: f64,
) -> Result<PsdReport> {
    if !(bound > 0.0) {
        return Err(Error::InvalidInput(format!("norm bound must be positive, got {bound}")));
    }
    let form = multiplier_form_matrix(kernel, values, bound * bound)?;
    linalg::psd_check(&form, tol)
}

/// Scalar kernel matrix `k_ij = tr(Y_j^*(I - S_j^* S_i) Y_i K_ij)`.
pub fn pick_kernel_matrix(kernel: &FiniteKernel, values: &[CMatrix], y: &[CMatrix]) -> Result<HermitianMatrix> {
    let n = kernel.len();
    if values.len() != n || y.len() != n {
        return Err(Error::InvalidInput("values/Y do not match the kernel nodes".into()));
    }
    let d_u = values[0].ncols();
    for yi in y {
        if yi.shape() != (d_u, kernel.block_dim()) {
            return Err(Error::InvalidInput(format!(
                "Y has shape {:?}, expected {:?}",
                yi.shape(),
                (d_u, kernel.block_dim())
            )));
        }
    }
    HermitianMatrix::from_fn(n, |i, j| {
        let coupling = identity(d_u) - values[j].adjoint() * &values[i];
        (y[j].adjoint() * coupling * &y[i] * kernel.value(i, j)).trace()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Infeasible,
    Undecided,
}

/// A failing positivity test.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Generating-kernel parameters, for the constrained check.
    pub alpha: Option<CVector>,
    pub beta: Option<CVector>,
    /// Index into the supplied kernel family, for the generic check.
    pub kernel_index: Option<usize>,
    pub y: Vec<CMatrix>,
    pub nodes: Vec<Point>,
    pub pick: HermitianMatrix,
    pub report: PsdReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub samples_used: usize,
    /// Smallest eigenvalue over every form evaluated.
    pub min_eig_seen: f64,
    /// Set when no test was run (empty kernel family).
    pub vacuous: bool,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub sphere_samples: usize,
    /// Extra random `Y` draws per kernel (matrix case only).
    pub y_samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            sphere_samples: 1000,
            y_samples: 0,
            seed: 0,
            tol: DEFAULT_TOL,
        }
    }
}

/// Classical disk check: PSD-ness of the de Branges–Rovnyak Pick matrix.
pub fn classical_pick_check(problem: &InterpolationProblem, tol: f64) -> Result<CheckReport> {
    let pick = dbr_pick_matrix(problem)?;
    let report = linalg::psd_check(&pick, tol)?;
    let min = report.min_eigenvalue;
    let witness = (!report.is_psd).then(|| Witness {
        alpha: None,
        beta: None,
        kernel_index: None,
        y: Vec::new(),
        nodes: problem.nodes.clone(),
        pick: pick.clone(),
        report: report.clone(),
    });
    Ok(CheckReport {
        verdict: if report.is_psd { Verdict::Feasible } else { Verdict::Infeasible },
        witness,
        samples_used: 1,
        min_eig_seen: min,
        vacuous: false,
    })
}

/// Outcome of testing one kernel against the data.
struct KernelTest {
    min_eig: f64,
    failure: Option<(Vec<CMatrix>, HermitianMatrix, PsdReport)>,
}

/// Positivity of `k_{Y,S,K}` for all `Y`: exact through the assembled form,
/// with the failing `Y` read off the form's witness.
fn test_kernel(
    kernel: &FiniteKernel,
    values: &[CMatrix],
    extra_y: &[Vec<CMatrix>],
    tol: f64,
) -> Result<KernelTest> {
    let n = kernel.len();
    let d_u = values[0].ncols();
    let e = kernel.block_dim();
    if d_u == 1 && e == 1 {
        // Scalar: Y only rescales rows and columns.
        let y = vec![CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)); n];
        let pick = pick_kernel_matrix(kernel, values, &y)?;
        let report = linalg::psd_check(&pick, tol)?;
        let min_eig = report.min_eigenvalue;
        let failure = (!report.is_psd).then_some((y, pick, report));
        return Ok(KernelTest { min_eig, failure });
    }
    let form = multiplier_form_matrix(kernel, values, 1.0)?;
    let form_report = linalg::psd_check(&form, tol)?;
    let mut min_eig = form_report.min_eigenvalue;
    let mut candidates: Vec<Vec<CMatrix>> = Vec::new();
    if !form_report.is_psd {
        candidates.push(vector_to_coefficients(&form_report.witness, n, e, d_u));
    }
    candidates.extend(extra_y.iter().cloned());
    for y in candidates {
        let pick = pick_kernel_matrix(kernel, values, &y)?;
        let report = linalg::psd_check(&pick, tol)?;
        min_eig = min_eig.min(report.min_eigenvalue);
        if !report.is_psd {
            return Ok(KernelTest {
                min_eig,
                failure: Some((y, pick, report)),
            });
        }
    }
    Ok(KernelTest { min_eig, failure: None })
}

fn random_y(rng: &mut ChaCha8Rng, n: usize, rows: usize, cols: usize) -> Vec<CMatrix> {
    (0..n)
        .map(|_| {
            CMatrix::from_fn(rows, cols, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
        })
        .collect()
}

/// Unit vectors `(alpha, beta)` in `C^{2N}`: a real grid at `pi/12` spacing
/// starting from the diagonal direction `theta = pi/4`, a Fibonacci grid over
/// the Hopf sphere when `N = 1`, then seeded uniform draws.
pub fn sphere_samples(n_dim: usize, count: usize, seed: u64) -> Vec<(CVector, CVector)> {
    let mut out = Vec::new();
    for k in 0..12 {
        let theta = PI / 4.0 + k as f64 * PI / 12.0;
        for a in 0..n_dim {
            for b in 0..n_dim {
                let mut alpha = CVector::zeros(n_dim);
                let mut beta = CVector::zeros(n_dim);
                alpha[a] = Complex64::new(theta.cos(), 0.0);
                beta[b] = Complex64::new(theta.sin(), 0.0);
                out.push((alpha, beta));
            }
        }
    }
    let remaining = count.saturating_sub(out.len());
    if n_dim == 1 && remaining > 0 {
        // (cos(t/2), e^{i phi} sin(t/2)) covers the sphere up to a global phase.
        let fib = remaining / 2;
        let golden = PI * (3.0 - 5.0_f64.sqrt());
        for k in 0..fib {
            let h = 1.0 - 2.0 * (k as f64 + 0.5) / fib as f64;
            let t = h.clamp(-1.0, 1.0).acos();
            let phi = golden * k as f64;
            out.push((
                CVector::from_element(1, Complex64::new((t / 2.0).cos(), 0.0)),
                CVector::from_element(1, Complex64::from_polar((t / 2.0).sin(), phi)),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let mut v: Vec<Complex64> = (0..2 * n_dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= norm);
        out.push((
            CVector::from_column_slice(&v[..n_dim]),
            CVector::from_column_slice(&v[n_dim..]),
        ));
    }
    out
}

/// Dual check for the constrained class through the generating kernels `K^{alpha,beta}`.
///
/// Sampled in `(alpha, beta)`; the verdict `Feasible` means every sample passed.
pub fn constrained_np_check(problem: &InterpolationProblem, opts: &CheckOptions) -> Result<CheckReport> {
    if problem.class != ProblemClass::ConstrainedH1 {
        return Err(Error::InvalidInput(format!(
            "constrained check needs class constrained-h1, got {:?}",
            problem.class
        )));
    }
    let n_dim = problem.output_dim();
    if problem.input_dim() != n_dim {
        return Err(Error::InvalidInput("constrained check needs square values".into()));
    }
    let samples = sphere_samples(n_dim, opts.sphere_samples, opts.seed);
    let n = problem.len();
    let results: Vec<Result<(f64, Option<Witness>)>> = samples
        .par_iter()
        .enumerate()
        .map(|(idx, (alpha, beta))| {
            let kernel = FiniteKernel::constrained_generating(problem.nodes.clone(), alpha, beta)?;
            let extra = if n_dim > 1 && opts.y_samples > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                (0..opts.y_samples).map(|_| random_y(&mut rng, n, n_dim, n_dim)).collect()
            } else {
                Vec::new()
            };
            let test = test_kernel(&kernel, &problem.values, &extra, opts.tol)?;
            let witness = test.failure.map(|(y, pick, report)| Witness {
                alpha: Some(alpha.clone()),
                beta: Some(beta.clone()),
                kernel_index: None,
                y,
                nodes: problem.nodes.clone(),
                pick,
                report,
            });
            Ok((test.min_eig, witness))
        })
        .collect();
    summarize(results, samples.len())
}

/// Dual check against a supplied set of (generating) admissible kernels.
pub fn generic_dual_check(
    problem: &InterpolationProblem,
    kernels: &[FiniteKernel],
    opts: &CheckOptions,
) -> Result<CheckReport> {
    if kernels.is_empty() {
        return Ok(CheckReport {
            verdict: Verdict::Feasible,
            witness: None,
            samples_used: 0,
            min_eig_seen: f64::INFINITY,
            vacuous: true,
        });
    }
    for (k, kernel) in kernels.iter().enumerate() {
        let matches = kernel.len() == problem.len()
            && kernel.nodes().iter().zip(&problem.nodes).all(|(a, b)| {
                a.dim() == b.dim() && a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).norm() < 1e-12)
            });
        if !matches {
            return Err(Error::InvalidInput(format!("kernel {k} is not on the problem nodes")));
        }
    }
    let n = problem.len();
    let d_u = problem.input_dim();
    let results: Vec<Result<(f64, Option<Witness>)>> = kernels
        .par_iter()
        .enumerate()
        .map(|(idx, kernel)| {
            let extra = if (d_u > 1 || kernel.block_dim() > 1) && opts.y_samples > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(idx as u64));
                (0..opts.y_samples)
                    .map(|_| random_y(&mut rng, n, d_u, kernel.block_dim()))
                    .collect()
            } else {
                Vec::new()
            };
            let test = test_kernel(kernel, &problem.values, &extra, opts.tol)?;
            let witness = test.failure.map(|(y, pick, report)| Witness {
                alpha: None,
                beta: None,
                kernel_index: Some(idx),
                y,
                nodes: problem.nodes.clone(),
                pick,
                report,
            });
            Ok((test.min_eig, witness))
        })
        .collect();
    summarize(results, kernels.len())
}

/// Lowest-index failure wins so the report does not depend on scheduling.
fn summarize(results: Vec<Result<(f64, Option<Witness>)>>, samples_used: usize) -> Result<CheckReport> {
    let mut min_eig_seen = f64::INFINITY;
    let mut witness = None;
    for r in results {
        let (min, w) = r?;
        min_eig_seen = min_eig_seen.min(min);
        if witness.is_none() {
            witness = w;
        }
    }
    Ok(CheckReport {
        verdict: if witness.is_some() { Verdict::Infeasible } else { Verdict::Feasible },
        witness,
        samples_used,
        min_eig_seen,
        vacuous: false,
    })
}

/// The `(1/sqrt 2, 1/sqrt 2)` direction of the scalar generating family.
pub fn diagonal_direction() -> (CVector, CVector) {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    (CVector::from_element(1, s), CVector::from_element(1, s))
}
