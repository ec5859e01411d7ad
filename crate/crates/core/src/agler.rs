//! Discretized Agler decompositions.
//!
//! Given samples `S(z_i)` and a finite test family `psi_1..psi_M`, find PSD
//! Gram matrices `W^(m)`, indexed by `(node i, output row a, test-function
//! column p)`, with
//!
//! ```text
//! I - S(z_i) S(z_j)^* [a, b] = sum_m sum_{p,q} W^(m)[(i,a,p), (j,b,q)] * Delta^m_ij[p, q]
//! Delta^m_ij = I - psi_m(z_i) psi_m(z_j)^*
//! ```
//!
//! Factoring `W^(m) = F F^*` gives `H_m(z_i)` with columns indexed by
//! `(copy k, p)`, so the identity reads
//! `I - S(z)S(w)^* = sum_m H_m(z) (I_r (x) Delta^m(z, w)) H_m(w)^*`.
//!
//! The feasibility problem is solved by Dykstra's alternating projections
//! between the PSD product cone and the affine solution set. Every constraint
//! row touches its own set of Gram entries, so the affine projection is exact
//! and separable. On a residual plateau the last projection step yields a
//! separating functional, which is reported once it passes validation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::InterpolationProblem;
use crate::linalg::{self, identity, op_norm, CMatrix, CVector, HermitianMatrix};
use crate::testfns::TestFunction;
use crate::Point;

#[derive(Debug, Clone)]
pub struct DecompositionOptions {
    pub max_iters: usize,
    /// Feasibility threshold on the max block-norm residual.
    pub tol: f64,
    pub plateau_window: usize,
    pub plateau_rel: f64,
    /// Relative eigenvalue cut when factoring the Gram matrices.
    pub factor_tol: f64,
    /// Minimum copy count per test function (zero columns pad the factor).
    pub multiplicity: Option<usize>,
    /// Run the factorization polish every this many iterations (0 disables).
    pub polish_every: usize,
    /// Rank-one cone generators sampled when validating separation evidence.
    pub evidence_samples: usize,
    pub seed: u64,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-7,
            plateau_window: 500,
            plateau_rel: 1e-12,
            factor_tol: 1e-13,
            multiplicity: None,
            polish_every: 1000,
            evidence_samples: 1000,
            seed: 0,
        }
    }
}

/// Nodes, square samples `S(z_i)` and the test family.
#[derive(Debug, Clone)]
pub struct DecompositionProblem {
    nodes: Vec<Point>,
    samples: Vec<CMatrix>,
    family: Vec<TestFunction>,
    /// `Delta^m_ij`, indexed `[m][i * n + j]`.
    deltas: Vec<Vec<CMatrix>>,
}

impl DecompositionProblem {
    pub fn new(nodes: Vec<Point>, samples: Vec<CMatrix>, family: Vec<TestFunction>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("decomposition needs at least one node".into()));
        }
        if family.is_empty() {
            return Err(Error::InvalidInput("decomposition needs at least one test function".into()));
        }
        if nodes.len() != samples.len() {
            return Err(Error::InvalidInput(format!(
                "{} nodes but {} samples",
                nodes.len(),
                samples.len()
            )));
        }
        let n_out = samples[0].nrows();
        if n_out == 0 || samples.iter().any(|s| s.shape() != (n_out, n_out)) {
            return Err(Error::InvalidInput("samples must be square of one size".into()));
        }
        if samples.iter().any(|s| !linalg::all_finite(s)) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        let psi = family
            .iter()
            .map(|f| nodes.iter().map(|z| f.eval_strict(z)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        for (m, vals) in psi.iter().enumerate() {
            let d = family[m].output_dim();
            if vals.iter().any(|v| v.shape() != (d, d)) {
                return Err(Error::InvalidInput(format!("test function {m} is not square-valued")));
            }
        }
        let n = nodes.len();
        let deltas = psi
            .iter()
            .map(|vals| {
                (0..n * n)
                    .map(|k| identity(vals[0].nrows()) - &vals[k / n] * vals[k % n].adjoint())
                    .collect()
            })
            .collect();
        Ok(Self {
            nodes,
            samples,
            family,
            deltas,
        })
    }

    pub fn from_interpolation(problem: &InterpolationProblem, family: Vec<TestFunction>) -> Result<Self> {
        Self::new(problem.nodes().to_vec(), problem.values().to_vec(), family)
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn samples(&self) -> &[CMatrix] {
        &self.samples
    }

    pub fn family(&self) -> &[TestFunction] {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Output block size `N`.
    pub fn block_dim(&self) -> usize {
        self.samples[0].nrows()
    }

    /// Side length `n * N * d_m` of the Gram variable for test function `m`.
    pub fn gram_size(&self, m: usize) -> usize {
        self.len() * self.block_dim() * self.family[m].output_dim()
    }

    fn delta(&self, m: usize, i: usize, j: usize) -> &CMatrix {
        &self.deltas[m][i * self.len() + j]
    }

    /// Squared norm of constraint row `(i, *, j, *)`: `sum_m ||Delta^m_ij||_F^2`.
    fn row_norms(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..self.family.len())
                    .map(|m| self.delta(m, i, j).norm_squared())
                    .sum();
            }
        }
        out
    }

    /// Linear reconstruction `L(W)` as an `nN x nN` block matrix.
    pub fn reconstruct(&self, grams: &[CMatrix]) -> Result<CMatrix> {
        if grams.len() != self.family.len() {
            return Err(Error::InvalidInput(format!(
                "{} Gram matrices for {} test functions",
                grams.len(),
                self.family.len()
            )));
        }
        let n = self.len();
        let big_n = self.block_dim();
        let mut out = CMatrix::zeros(n * big_n, n * big_n);
        for (m, w) in grams.iter().enumerate() {
            let d = self.family[m].output_dim();
            let s = self.gram_size(m);
            if w.shape() != (s, s) {
                return Err(Error::InvalidInput(format!(
                    "Gram {m} has shape {:?}, expected {s}x{s}",
                    w.shape()
                )));
            }
            for i in 0..n {
                for j in 0..n {
                    let delta = self.delta(m, i, j);
                    for a in 0..big_n {
                        for b in 0..big_n {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for p in 0..d {
                                for q in 0..d {
                                    acc += w[((i * big_n + a) * d + p, (j * big_n + b) * d + q)] * delta[(p, q)];
                                }
                            }
                            out[(i * big_n + a, j * big_n + b)] += acc;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Adjoint map: `G^(m)[(i,a,p),(j,b,q)] = conj(Delta^m_ij[p,q]) * lambda[(i,a),(j,b)]`.
    fn adjoint(&self, lambda: &CMatrix) -> Vec<CMatrix> {
        let n = self.len();
        let big_n = self.block_dim();
        (0..self.family.len())
            .map(|m| {
                let d = self.family[m].output_dim();
                let s = self.gram_size(m);
                let mut g = CMatrix::zeros(s, s);
                for i in 0..n {
                    for j in 0..n {
                        let delta = self.delta(m, i, j);
                        for a in 0..big_n {
                            for b in 0..big_n {
                                let l = lambda[(i * big_n + a, j * big_n + b)];
                                for p in 0..d {
                                    for q in 0..d {
                                        g[((i * big_n + a) * d + p, (j * big_n + b) * d + q)] =
                                            delta[(p, q)].conj() * l;
                                    }
                                }
                            }
                        }
                    }
                }
                g
            })
            .collect()
    }
}

/// `I - S(z_i) S(z_j)^*` as an `nN x nN` block matrix.
pub fn target_kernel(problem: &DecompositionProblem) -> HermitianMatrix {
    let n = problem.len();
    let d = problem.block_dim();
    let mut out = CMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            let block = identity(d) - &problem.samples[i] * problem.samples[j].adjoint();
            out.view_mut((i * d, j * d), (d, d)).copy_from(&block);
        }
    }
    HermitianMatrix::symmetrized(out)
}

/// Max over node pairs of the spectral norm of the `(i, j)` block.
fn max_block_norm(m: &CMatrix, n: usize, d: usize) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let block = m.view((i * d, j * d), (d, d)).into_owned();
            worst = worst.max(op_norm(&block));
        }
    }
    worst
}

/// PSD Gram variables and extracted factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AglerDecomposition {
    pub grams: Vec<HermitianMatrix>,
    /// `H_m(z_i)`, indexed `[m][i]`, each `N x (r_m d_m)`.
    pub factors: Vec<Vec<CMatrix>>,
    pub multiplicities: Vec<usize>,
    pub residual: f64,
    pub iterations: usize,
}

impl AglerDecomposition {
    /// Factors every Gram matrix; the copy count is the numerical rank,
    /// raised to `min_copies` with zero columns.
    pub fn from_grams(
        problem: &DecompositionProblem,
        grams: Vec<HermitianMatrix>,
        factor_tol: f64,
        min_copies: Option<usize>,
        iterations: usize,
    ) -> Result<Self> {
        let n = problem.len();
        let big_n = problem.block_dim();
        let mut factors = Vec::with_capacity(grams.len());
        let mut multiplicities = Vec::with_capacity(grams.len());
        for (m, w) in grams.iter().enumerate() {
            let d = problem.family[m].output_dim();
            let clipped = linalg::nearest_psd(w);
            let f = linalg::gram_factor(&clipped, factor_tol)?;
            let copies = f.ncols().max(min_copies.unwrap_or(0));
            let per_node = (0..n)
                .map(|i| {
                    CMatrix::from_fn(big_n, copies * d, |a, col| {
                        let (k, p) = (col / d, col % d);
                        if k < f.ncols() {
                            f[((i * big_n + a) * d + p, k)]
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                })
                .collect();
            factors.push(per_node);
            multiplicities.push(copies);
        }
        let mut out = Self {
            grams,
            factors,
            multiplicities,
            residual: 0.0,
            iterations,
        };
        out.residual = verify_decomposition(&out, problem)?;
        Ok(out)
    }

    /// `sum_p W^(m)[(i,a,p),(j,b,p)]`: the kernel attached to test function `m`.
    pub fn kernel_block(&self, problem: &DecompositionProblem, m: usize, i: usize, j: usize) -> CMatrix {
        let big_n = problem.block_dim();
        let d = problem.family[m].output_dim();
        let w = self.grams[m].as_matrix();
        CMatrix::from_fn(big_n, big_n, |a, b| {
            (0..d).map(|p| w[((i * big_n + a) * d + p, (j * big_n + b) * d + p)]).sum()
        })
    }

    /// Residual of the factored form `sum_m H_m(z_i)(I (x) Delta)H_m(z_j)^*`.
    pub fn factor_residual(&self, problem: &DecompositionProblem) -> f64 {
        let n = problem.len();
        let target = target_kernel(problem);
        let big_n = problem.block_dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = CMatrix::zeros(big_n, big_n);
                for (m, hs) in self.factors.iter().enumerate() {
                    let r = self.multiplicities[m];
                    let coupling = linalg::kron(&identity(r), problem.delta(m, i, j));
                    acc += &hs[i] * coupling * hs[j].adjoint();
                }
                let want = target.as_matrix().view((i * big_n, j * big_n), (big_n, big_n));
                worst = worst.max(op_norm(&(acc - want)));
            }
        }
        worst
    }
}

/// Separating functional `Phi(X) = Re sum conj(L_ij) . X_ij` with
/// `Phi >= 0` on the decomposition cone and `Phi(target) = -margin < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationEvidence {
    /// Coefficient blocks `L_ij`, row-major over node pairs.
    pub coefficients: Vec<CMatrix>,
    pub margin: f64,
    /// Smallest value of `Phi` over the sampled rank-one generators.
    pub min_generator_value: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl SeparationEvidence {
    /// `Phi` applied to an `nN x nN` block matrix.
    pub fn apply(&self, x: &CMatrix, n: usize, d: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let l = &self.coefficients[i * n + j];
                for a in 0..d {
                    for b in 0..d {
                        acc += (l[(a, b)].conj() * x[(i * d + a, j * d + b)]).re;
                    }
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub enum DecompositionOutcome {
    Feasible(AglerDecomposition),
    Infeasible(SeparationEvidence),
}

/// Affine projection data; `row_norms[i*n + j] = ||row (i,*,j,*)||^2`.
struct AffineMap<'a> {
    problem: &'a DecompositionProblem,
    target: CMatrix,
    row_norms: Vec<f64>,
}

impl<'a> AffineMap<'a> {
    fn new(problem: &'a DecompositionProblem) -> Self {
        Self {
            problem,
            target: target_kernel(problem).into_matrix(),
            row_norms: problem.row_norms(),
        }
    }

    /// `lambda = (L(W) - T) ./ row_norms` and the residual `L(W) - T`.
    fn multiplier(&self, grams: &[CMatrix]) -> Result<(CMatrix, CMatrix)> {
        let residual = self.problem.reconstruct(grams)? - &self.target;
        let n = self.problem.len();
        let d = self.problem.block_dim();
        let lambda = CMatrix::from_fn(n * d, n * d, |r, c| residual[(r, c)] / self.row_norms[(r / d) * n + c / d]);
        Ok((lambda, residual))
    }

    fn project(&self, grams: &[CMatrix], lambda: &CMatrix) -> Vec<CMatrix> {
        self.problem
            .adjoint(lambda)
            .into_iter()
            .zip(grams)
            .map(|(g, w)| HermitianMatrix::symmetrized(w - g).into_matrix())
            .collect()
    }
}

/// Solves the discretized decomposition. `Err(Undecided)` when the
/// iteration budget runs out before convergence or a validated plateau.
pub fn solve_decomposition(
    problem: &DecompositionProblem,
    opts: &DecompositionOptions,
) -> Result<DecompositionOutcome> {
    let n = problem.len();
    let d = problem.block_dim();
    let map = AffineMap::new(problem);
    let zeros: Vec<CMatrix> = (0..problem.family.len())
        .map(|m| CMatrix::zeros(problem.gram_size(m), problem.gram_size(m)))
        .collect();
    let (lambda0, _) = map.multiplier(&zeros)?;
    let mut x = map.project(&zeros, &lambda0);
    let mut p = zeros.clone();
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        let mut y = Vec::with_capacity(x.len());
        for (xm, pm) in x.iter().zip(p.iter_mut()) {
            let shifted = HermitianMatrix::symmetrized(xm + &*pm);
            let proj = linalg::nearest_psd(&shifted).into_matrix();
            *pm = shifted.as_matrix() - &proj;
            y.push(proj);
        }
        let (lambda, raw) = map.multiplier(&y)?;
        residual = max_block_norm(&raw, n, d);
        trace.push(residual);
        if residual <= opts.tol {
            // Tighten a feasible point before factoring; realization accuracy
            // degrades with the square root of the residual.
            let y = match polish(&map, &y, POLISH_TARGET) {
                Some((w, r)) if r < residual => w,
                _ => y,
            };
            return feasible(problem, y, opts, iter);
        }
        if opts.polish_every > 0 && iter % opts.polish_every == 0 {
            if let Some((w, r)) = polish(&map, &y, POLISH_TARGET) {
                if r <= opts.tol {
                    return feasible(problem, w, opts, iter);
                }
            }
        }
        if trace.len() > opts.plateau_window {
            let old = trace[trace.len() - 1 - opts.plateau_window];
            if old - residual <= opts.plateau_rel * old {
                if let Some((w, r)) = polish(&map, &y, POLISH_TARGET) {
                    if r <= opts.tol {
                        return feasible(problem, w, opts, iter);
                    }
                }
                return match separation_evidence(&map, y, opts, iter)? {
                    Some(ev) => Ok(DecompositionOutcome::Infeasible(ev)),
                    None => Err(Error::Undecided {
                        iterations: iter,
                        residual,
                        trace,
                    }),
                };
            }
        }
        x = map.project(&y, &lambda);
    }
    Err(Error::Undecided {
        iterations: opts.max_iters,
        residual,
        trace,
    })
}

fn feasible(
    problem: &DecompositionProblem,
    y: Vec<CMatrix>,
    opts: &DecompositionOptions,
    iterations: usize,
) -> Result<DecompositionOutcome> {
    let grams = y.into_iter().map(HermitianMatrix::symmetrized).collect();
    let dec = AglerDecomposition::from_grams(problem, grams, opts.factor_tol, opts.multiplicity, iterations)?;
    Ok(DecompositionOutcome::Feasible(dec))
}

/// Internal residual the factorization polish aims for.
const POLISH_TARGET: f64 = 1e-13;

/// Real inner product `Re tr(A^* B)` summed over blocks.
fn real_dot(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Levenberg-Marquardt on `W^(m) = F_m F_m^*`, starting from the range of
/// the PSD iterate. Every iterate is PSD by construction. Returns the grams
/// and their max block residual when the polish improved on the start.
///
/// The Jacobian `J(dF) = L(dF F^* + F dF^*)` has adjoint `J^T(R) = 2 L^*(R) F`
/// for Hermitian `R`, so each step solves `(J J^T + mu) x = -r` by conjugate
/// gradients in residual space and moves along `J^T x`.
fn polish(map: &AffineMap<'_>, start: &[CMatrix], target: f64) -> Option<(Vec<CMatrix>, f64)> {
    let problem = map.problem;
    let (n, d) = (problem.len(), problem.block_dim());
    let lambda_max = start
        .iter()
        .map(|w| linalg::op_norm(w))
        .fold(0.0_f64, f64::max);
    if !(lambda_max > 0.0) {
        return None;
    }
    let mut f: Vec<CMatrix> = start
        .iter()
        .map(|w| {
            let (values, vectors) = HermitianMatrix::symmetrized(w.clone()).eigen();
            let keep: Vec<usize> = (0..values.len())
                .rev()
                .filter(|&k| values[k] > 1e-12 * lambda_max)
                .collect();
            CMatrix::from_fn(w.nrows(), keep.len(), |r, c| vectors[(r, keep[c])] * values[keep[c]].sqrt())
        })
        .collect();

    let grams = |f: &[CMatrix]| -> Vec<CMatrix> { f.iter().map(|fm| fm * fm.adjoint()).collect() };
    let residual_of = |f: &[CMatrix]| -> Option<CMatrix> {
        let r = problem.reconstruct(&grams(f)).ok()? - &map.target;
        Some(HermitianMatrix::symmetrized(r).into_matrix())
    };
    let jt = |f: &[CMatrix], r: &CMatrix| -> Vec<CMatrix> {
        problem
            .adjoint(r)
            .iter()
            .zip(f)
            .map(|(g, fm)| (g * fm).scale(2.0))
            .collect()
    };
    let jac = |f: &[CMatrix], df: &[CMatrix]| -> Option<CMatrix> {
        let dw: Vec<CMatrix> = f
            .iter()
            .zip(df)
            .map(|(fm, dm)| {
                let t = dm * fm.adjoint();
                &t + t.adjoint()
            })
            .collect();
        problem.reconstruct(&dw).ok()
    };

    let start_r = residual_of(&f)?;
    let start_res = max_block_norm(&start_r, n, d);
    let mut r = start_r;
    let mut norm = r.norm();
    let mut mu = norm;
    let dim = r.len();
    for _ in 0..60 {
        if max_block_norm(&r, n, d) <= target {
            break;
        }
        // CG on (J J^T + mu) x = -r.
        let apply = |x: &CMatrix| -> Option<CMatrix> { Some(jac(&f, &jt(&f, x))? + x.scale(mu)) };
        let rhs = -r.clone();
        let mut x = CMatrix::zeros(r.nrows(), r.ncols());
        let mut res = rhs.clone();
        let mut dir = res.clone();
        let mut rr = real_dot(&res, &res);
        let stop = 1e-30_f64.max(1e-24 * rr);
        for _ in 0..(2 * dim + 10) {
            if rr <= stop {
                break;
            }
            let ad = apply(&dir)?;
            let denom = real_dot(&dir, &ad);
            if !(denom > 0.0) {
                break;
            }
            let alpha = rr / denom;
            x += dir.scale(alpha);
            res -= ad.scale(alpha);
            let rr_new = real_dot(&res, &res);
            dir = &res + dir.scale(rr_new / rr);
            rr = rr_new;
        }
        let step = jt(&f, &x);
        let candidate: Vec<CMatrix> = f.iter().zip(&step).map(|(fm, sm)| fm + sm).collect();
        let cand_r = residual_of(&candidate)?;
        let cand_norm = cand_r.norm();
        if cand_norm < norm {
            f = candidate;
            r = cand_r;
            norm = cand_norm;
            mu = (mu / 4.0).min(norm);
        } else {
            mu *= 8.0;
            if mu > 1e8 * (1.0 + lambda_max) {
                break;
            }
        }
    }
    let res = max_block_norm(&r, n, d);
    (res < start_res).then(|| (grams(&f), res))
}

/// Polishes the gap with plain alternating projections, then builds and
/// validates the functional from the last affine step.
fn separation_evidence(
    map: &AffineMap<'_>,
    mut y: Vec<CMatrix>,
    opts: &DecompositionOptions,
    iterations: usize,
) -> Result<Option<SeparationEvidence>> {
    let problem = map.problem;
    let n = problem.len();
    let d = problem.block_dim();
    let mut lambda = CMatrix::zeros(0, 0);
    let mut residual = f64::INFINITY;
    let mut prev_gap = f64::INFINITY;
    for _ in 0..20_000 {
        let (l, raw) = map.multiplier(&y)?;
        residual = max_block_norm(&raw, n, d);
        let x = map.project(&y, &l);
        lambda = l;
        let next: Vec<CMatrix> = x
            .iter()
            .map(|xm| linalg::nearest_psd(&HermitianMatrix::symmetrized(xm.clone())).into_matrix())
            .collect();
        let gap: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        y = next;
        if (prev_gap - gap).abs() <= 1e-15 * gap.max(1e-300) {
            break;
        }
        prev_gap = gap;
    }
    let (lambda_final, _) = map.multiplier(&y)?;
    let lambda = if lambda_final.norm() > 0.0 { lambda_final } else { lambda };
    let generators = problem.adjoint(&lambda);
    let scale: f64 = generators.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if !(scale > 0.0) {
        return Ok(None);
    }
    let lambda = lambda.unscale(scale);
    let generators: Vec<CMatrix> = generators.into_iter().map(|g| g.unscale(scale)).collect();
    let coefficients: Vec<CMatrix> = (0..n * n)
        .map(|k| lambda.view(((k / n) * d, (k % n) * d), (d, d)).into_owned())
        .collect();
    let mut ev = SeparationEvidence {
        coefficients,
        margin: 0.0,
        min_generator_value: f64::INFINITY,
        residual,
        iterations,
    };
    ev.margin = -ev.apply(&map.target, n, d);

    let mut min_eig = f64::INFINITY;
    for g in &generators {
        let (values, _) = HermitianMatrix::symmetrized(g.clone()).eigen();
        min_eig = min_eig.min(values.first().copied().unwrap_or(0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.evidence_samples {
        for g in &generators {
            let u = CVector::from_fn(g.nrows(), |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let u = u.unscale(u.norm().max(1e-300));
            let value = (u.adjoint() * g * &u)[(0, 0)].re;
            ev.min_generator_value = ev.min_generator_value.min(value);
        }
    }
    let valid = ev.margin > 1e-10 && min_eig >= -1e-8 && ev.min_generator_value >= -1e-8;
    Ok(valid.then_some(ev))
}

/// Max block-norm reconstruction error; fails if some `W^(m)` is not PSD.
pub fn verify_decomposition(dec: &AglerDecomposition, problem: &DecompositionProblem) -> Result<f64> {
    for (m, w) in dec.grams.iter().enumerate() {
        let report = linalg::psd_check(w, linalg::DEFAULT_TOL)?;
        if !report.is_psd {
            return Err(Error::InvalidInput(format!(
                "Gram {m} is not PSD (min eigenvalue {:.3e})",
                report.min_eigenvalue
            )));
        }
    }
    let grams: Vec<CMatrix> = dec.grams.iter().map(|g| g.as_matrix().clone()).collect();
    let diff = problem.reconstruct(&grams)? - target_kernel(problem).as_matrix();
    Ok(max_block_norm(&diff, problem.len(), problem.block_dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfns::{disk_family, polydisk_family, QuantumMeasure};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_problem(zs: &[Complex64], s: impl Fn(Complex64) -> Complex64, family: Vec<TestFunction>) -> DecompositionProblem {
        DecompositionProblem::new(
            zs.iter().map(|&z| Point::scalar(z)).collect(),
            zs.iter().map(|&z| CMatrix::from_element(1, 1, s(z))).collect(),
            family,
        )
        .unwrap()
    }

    #[test]
    fn target_examples() {
        let p = scalar_problem(&[c(0.0, 0.0), c(0.5, 0.0)], |_| c(0.0, 0.0), disk_family());
        assert!(linalg::max_abs(&(target_kernel(&p).into_matrix() - CMatrix::from_element(2, 2, c(1.0, 0.0)))) < 1e-15);

        let p = scalar_problem(&[c(0.0, 0.0), c(0.5, 0.0)], |z| z, disk_family());
        let t = target_kernel(&p).into_matrix();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.75, 0.0)]);
        assert!(linalg::max_abs(&(t - expected)) < 1e-15);

        let u = CMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let p = DecompositionProblem::new(vec![Point::real(0.1), Point::real(-0.3)], vec![u.clone(), u], disk_family()).unwrap();
        assert!(linalg::max_abs(target_kernel(&p).as_matrix()) < 1e-15);
    }

    #[test]
    fn forced_scalar_decomposition_for_z_squared() {
        let zs = [c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.5)];
        let p = scalar_problem(&zs, |z| z * z, disk_family());
        let out = solve_decomposition(&p, &DecompositionOptions::default()).unwrap();
        let DecompositionOutcome::Feasible(dec) = out else { panic!("expected feasible") };
        assert!(dec.residual <= 1e-7);
        for i in 0..3 {
            for j in 0..3 {
                let k = dec.kernel_block(&p, 0, i, j)[(0, 0)];
                assert!((k - (1.0 + zs[i] * zs[j].conj())).norm() < 1e-6);
            }
        }
        assert!(dec.factor_residual(&p) < 1e-7);
    }

    #[test]
    fn coordinate_against_z_squared_family_is_separated() {
        let zs = [c(0.0, 0.0), c(0.5, 0.0)];
        let fam = vec![TestFunction::ConstrainedExtreme(QuantumMeasure::antipodal(1))];
        let p = scalar_problem(&zs, |z| z, fam);
        let out = solve_decomposition(&p, &DecompositionOptions::default()).unwrap();
        let DecompositionOutcome::Infeasible(ev) = out else { panic!("expected infeasible") };
        assert!(ev.margin > 0.0);
        assert!(ev.min_generator_value >= -1e-8);
        let t = target_kernel(&p).into_matrix();
        assert!(ev.apply(&t, 2, 1) < 0.0);
    }

    #[test]
    fn verify_examples() {
        // Andô decomposition of 1 - z1 z2 conj(w1 w2) with K1 = 1, K2 = z1 conj(w1).
        let pts: Vec<Point> = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]
            .iter()
            .map(|&(a, b)| Point(vec![c(a, 0.0), c(b, 0.0)]))
            .collect();
        let samples = pts.iter().map(|z| CMatrix::from_element(1, 1, z.coords()[0] * z.coords()[1])).collect();
        let p = DecompositionProblem::new(pts.clone(), samples, polydisk_family(2)).unwrap();
        let k1 = CMatrix::from_element(4, 4, c(1.0, 0.0));
        let k2 = CMatrix::from_fn(4, 4, |i, j| pts[i].coords()[0] * pts[j].coords()[0].conj());
        let grams = vec![HermitianMatrix::new(k1.clone()).unwrap(), HermitianMatrix::new(k2.clone()).unwrap()];
        let dec = AglerDecomposition::from_grams(&p, grams, 1e-13, None, 0).unwrap();
        assert!(dec.residual <= 1e-12);

        let mut bumped = k1.clone();
        bumped[(1, 1)] += c(1e-6, 0.0);
        let pert = AglerDecomposition {
            grams: vec![HermitianMatrix::new(bumped).unwrap(), HermitianMatrix::new(k2).unwrap()],
            ..dec.clone()
        };
        let r = verify_decomposition(&pert, &p).unwrap();
        assert!((1e-7..=1e-5).contains(&r), "residual {r}");

        let zero_p = scalar_problem(&[c(0.0, 0.0), c(0.5, 0.0)], |_| c(0.0, 0.0), disk_family());
        let zero = AglerDecomposition {
            grams: vec![HermitianMatrix::new(CMatrix::zeros(2, 2)).unwrap()],
            factors: vec![vec![CMatrix::zeros(1, 0); 2]],
            multiplicities: vec![0],
            residual: 0.0,
            iterations: 0,
        };
        assert!((verify_decomposition(&zero, &zero_p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_iteration_budget_is_undecided() {
        let pts: Vec<Point> = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]
            .iter()
            .map(|&(a, b)| Point(vec![c(a, 0.0), c(b, 0.0)]))
            .collect();
        let samples = pts.iter().map(|z| CMatrix::from_element(1, 1, z.coords()[0] * z.coords()[1])).collect();
        let p = DecompositionProblem::new(pts, samples, polydisk_family(2)).unwrap();
        let opts = DecompositionOptions { max_iters: 1, ..Default::default() };
        assert!(matches!(solve_decomposition(&p, &opts), Err(Error::Undecided { .. })));
    }

    #[test]
    fn problem_validation() {
        assert!(DecompositionProblem::new(vec![], vec![], disk_family()).is_err());
        assert!(DecompositionProblem::new(vec![Point::real(0.1)], vec![CMatrix::zeros(1, 1)], vec![]).is_err());
        assert!(matches!(
            DecompositionProblem::new(vec![Point::real(1.0)], vec![CMatrix::zeros(1, 1)], disk_family()),
            Err(Error::TestAxiom { .. })
        ));
        assert!(DecompositionProblem::new(vec![Point::real(0.1)], vec![CMatrix::zeros(1, 2)], disk_family()).is_err());
    }
}
