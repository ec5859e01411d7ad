//! Unitary colligations from Agler decompositions.
//!
//! The state space is `X = (+)_m C^{r_m} (x) C^{d_m}` and the test functions
//! act through `R(z) = (+)_m I_{r_m} (x) psi_m(z)`. A colligation
//! `U = [A B; C D]` on `X (+) C^N` has transfer function
//! `S(z) = D + C (I - R(z) A)^{-1} R(z) B`.

use num_complex::Complex64;

use crate::agler::{AglerDecomposition, DecompositionProblem};
use crate::error::{Error, Result};
use crate::linalg::{self, identity, op_norm, CMatrix};
use crate::testfns::TestFunction;
use crate::Point;

/// Resolvents worse conditioned than this are refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub function: TestFunction,
    pub multiplicity: usize,
}

impl Sector {
    pub fn state_dim(&self) -> usize {
        self.multiplicity * self.function.output_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Colligation {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub d: CMatrix,
    pub sectors: Vec<Sector>,
    /// Interpolation data the colligation was built from, if any.
    pub nodes: Vec<Point>,
    pub samples: Vec<CMatrix>,
}

impl Colligation {
    /// Checks block shapes against the sector table.
    pub fn new(a: CMatrix, b: CMatrix, c: CMatrix, d: CMatrix, sectors: Vec<Sector>) -> Result<Self> {
        let x: usize = sectors.iter().map(Sector::state_dim).sum();
        let n = d.nrows();
        if d.shape() != (n, n) || a.shape() != (x, x) || b.shape() != (x, n) || c.shape() != (n, x) {
            return Err(Error::InvalidInput(format!(
                "colligation blocks A{:?} B{:?} C{:?} D{:?} do not fit state dimension {x}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        for m in [&a, &b, &c, &d] {
            if !linalg::all_finite(m) {
                return Err(Error::InvalidInput("non-finite colligation entry".into()));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            sectors,
            nodes: Vec::new(),
            samples: Vec::new(),
        })
    }

    pub fn with_data(mut self, nodes: Vec<Point>, samples: Vec<CMatrix>) -> Result<Self> {
        if nodes.len() != samples.len() || samples.iter().any(|s| s.shape() != self.d.shape()) {
            return Err(Error::InvalidInput("attached samples do not match the colligation".into()));
        }
        self.nodes = nodes;
        self.samples = samples;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn io_dim(&self) -> usize {
        self.d.nrows()
    }

    /// Number of coordinates the sectors read.
    pub fn input_dim(&self) -> usize {
        if let Some(z) = self.nodes.first() {
            return z.dim();
        }
        self.sectors
            .iter()
            .map(|s| s.function.coordinate_index().map_or(1, |k| k + 1))
            .max()
            .unwrap_or(1)
    }

    /// The assembled `[A B; C D]`.
    pub fn unitary(&self) -> CMatrix {
        let x = self.state_dim();
        let n = self.io_dim();
        let mut u = CMatrix::zeros(x + n, x + n);
        u.view_mut((0, 0), (x, x)).copy_from(&self.a);
        u.view_mut((0, x), (x, n)).copy_from(&self.b);
        u.view_mut((x, 0), (n, x)).copy_from(&self.c);
        u.view_mut((x, x), (n, n)).copy_from(&self.d);
        u
    }
}

/// `(+)_m I_{r_m} (x) psi_m(z)`.
pub fn rho_eval(sectors: &[Sector], z: &Point) -> Result<CMatrix> {
    let blocks = sectors
        .iter()
        .filter(|s| s.multiplicity > 0)
        .map(|s| Ok(linalg::kron(&identity(s.multiplicity), &s.function.eval(z)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::direct_sum(&blocks))
}

/// `(I - R(z) A)^{-1}`, refusing near-singular resolvents.
fn resolvent(col: &Colligation, r: &CMatrix) -> Result<CMatrix> {
    let m = identity(col.state_dim()) - r * &col.a;
    let cond = linalg::condition_number(&m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::NumericalFailure(format!("resolvent condition number {cond:.3e}")));
    }
    m.try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular resolvent".into()))
}

pub fn transfer_eval(col: &Colligation, z: &Point) -> Result<CMatrix> {
    if col.state_dim() == 0 {
        return Ok(col.d.clone());
    }
    let r = rho_eval(&col.sectors, z)?;
    let inv = resolvent(col, &r)?;
    Ok(&col.d + &col.c * inv * r * &col.b)
}

/// `H(z) = C (I - R(z) A)^{-1}`, the realized factor.
pub fn realized_factor(col: &Colligation, z: &Point) -> Result<CMatrix> {
    if col.state_dim() == 0 {
        return Ok(CMatrix::zeros(col.io_dim(), 0));
    }
    let r = rho_eval(&col.sectors, z)?;
    Ok(&col.c * resolvent(col, &r)?)
}

/// Block norm of `I - S(z)S(w)^* - H(z)(I - R(z)R(w)^*)H(w)^*`.
pub fn toshow_defect(col: &Colligation, z: &Point, w: &Point) -> Result<f64> {
    let n = col.io_dim();
    let (sz, sw) = (transfer_eval(col, z)?, transfer_eval(col, w)?);
    let lhs = identity(n) - &sz * sw.adjoint();
    if col.state_dim() == 0 {
        return Ok(op_norm(&lhs));
    }
    let (hz, hw) = (realized_factor(col, z)?, realized_factor(col, w)?);
    let (rz, rw) = (rho_eval(&col.sectors, z)?, rho_eval(&col.sectors, w)?);
    let rhs = hz * (identity(col.state_dim()) - rz * rw.adjoint()) * hw.adjoint();
    Ok(op_norm(&(lhs - rhs)))
}

/// Builds the colligation whose adjoint carries
/// `[R(w)^* H(w)^* e_b; e_b]` to `[H(w)^* e_b; S(w)^* e_b]` for all nodes `w`
/// and basis vectors `e_b`.
pub fn lurking_isometry(dec: &AglerDecomposition, problem: &DecompositionProblem) -> Result<Colligation> {
    let n = problem.len();
    let big_n = problem.block_dim();
    if dec.factors.len() != problem.family().len() || dec.multiplicities.len() != problem.family().len() {
        return Err(Error::InvalidInput("decomposition does not match the test family".into()));
    }
    let sectors: Vec<Sector> = problem
        .family()
        .iter()
        .zip(&dec.multiplicities)
        .map(|(f, &r)| Sector {
            function: f.clone(),
            multiplicity: r,
        })
        .collect();
    let x: usize = sectors.iter().map(Sector::state_dim).sum();
    for (m, hs) in dec.factors.iter().enumerate() {
        if hs.len() != n || hs.iter().any(|h| h.shape() != (big_n, sectors[m].state_dim())) {
            return Err(Error::InvalidInput(format!("factor {m} has the wrong shape")));
        }
    }

    let mut domain = CMatrix::zeros(x + big_n, n * big_n);
    let mut range = CMatrix::zeros(x + big_n, n * big_n);
    for (i, w) in problem.nodes().iter().enumerate() {
        let nonempty: Vec<CMatrix> = dec
            .factors
            .iter()
            .zip(&sectors)
            .filter(|(_, s)| s.multiplicity > 0)
            .map(|(hs, _)| hs[i].clone())
            .collect();
        let h = if nonempty.is_empty() {
            CMatrix::zeros(big_n, 0)
        } else {
            let cols = nonempty.iter().map(|h| h.ncols()).sum();
            let mut h = CMatrix::zeros(big_n, cols);
            let mut off = 0;
            for block in &nonempty {
                h.view_mut((0, off), (big_n, block.ncols())).copy_from(block);
                off += block.ncols();
            }
            h
        };
        let r = rho_eval(&sectors, w)?;
        let h_adj = h.adjoint();
        let rh = r.adjoint() * &h_adj;
        let s_adj = problem.samples()[i].adjoint();
        for b in 0..big_n {
            let col = i * big_n + b;
            domain.view_mut((0, col), (x, 1)).copy_from(&rh.column(b));
            domain[(x + b, col)] = Complex64::new(1.0, 0.0);
            range.view_mut((0, col), (x, 1)).copy_from(&h_adj.column(b));
            range.view_mut((x, col), (big_n, 1)).copy_from(&s_adj.column(b));
        }
    }

    let tol = 100.0 * dec.residual + 1e-10;
    let v = linalg::unitary_completion(&domain, &range, tol).map_err(|e| match e {
        Error::NotIsometric { mismatch } => Error::InconsistentDecomposition { mismatch },
        other => other,
    })?;
    let u = v.adjoint();
    let col = Colligation::new(
        u.view((0, 0), (x, x)).into_owned(),
        u.view((0, x), (x, big_n)).into_owned(),
        u.view((x, 0), (big_n, x)).into_owned(),
        u.view((x, x), (big_n, big_n)).into_owned(),
        sectors,
    )?;
    col.with_data(problem.nodes().to_vec(), problem.samples().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub node_errors: Vec<f64>,
    pub max_error: f64,
    pub unitarity_defect: f64,
    /// Largest spectral radius of `R(z) A` over the probe grid.
    pub spectral_radius: f64,
    /// Largest resolvent condition number over the probe grid.
    pub max_condition: f64,
}

/// Deterministic interior probe points: `count` points with every
/// coordinate of modulus at most 0.95.
pub fn probe_points(dim: usize, count: usize) -> Vec<Point> {
    let golden = 0.5 * (5.0_f64.sqrt() - 1.0);
    (0..count)
        .map(|k| {
            let coords = (0..dim)
                .map(|c| {
                    let t = (k as f64 + 0.5) / count as f64;
                    let r = 0.95 * ((t + 0.37 * c as f64).fract()).sqrt();
                    let angle = std::f64::consts::TAU * ((k as f64 * golden + 0.21 * c as f64).fract());
                    Complex64::from_polar(r, angle)
                })
                .collect();
            Point(coords)
        })
        .collect()
}

fn spectral_radius(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    match nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 10_000) {
        Some(schur) => {
            let (_, t) = schur.unpack();
            t.diagonal().iter().map(|v| v.norm()).fold(0.0, f64::max)
        }
        None => op_norm(m),
    }
}

pub fn verify_colligation(col: &Colligation) -> TransferReport {
    let unitarity_defect = linalg::unitarity_defect(&col.unitary());
    let node_errors: Vec<f64> = col
        .nodes
        .iter()
        .zip(&col.samples)
        .map(|(z, s)| transfer_eval(col, z).map_or(f64::INFINITY, |v| op_norm(&(v - s))))
        .collect();
    let max_error = node_errors.iter().copied().fold(0.0, f64::max);
    let mut radius = 0.0_f64;
    let mut max_condition = 1.0_f64;
    if col.state_dim() > 0 {
        for z in probe_points(col.input_dim(), 100) {
            let Ok(r) = rho_eval(&col.sectors, &z) else { continue };
            let ra = &r * &col.a;
            radius = radius.max(spectral_radius(&ra));
            let cond = linalg::condition_number(&(identity(col.state_dim()) - ra));
            max_condition = max_condition.max(if cond.is_finite() { cond } else { f64::MAX });
        }
    }
    TransferReport {
        node_errors,
        max_error,
        unitarity_defect,
        spectral_radius: radius,
        max_condition,
    }
}

/// A scalar polynomial `sum_k c_k z^{alpha_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(Complex64, Vec<usize>)>,
}

impl Polynomial {
    pub fn monomial(exponents: Vec<usize>) -> Self {
        Self {
            terms: vec![(Complex64::new(1.0, 0.0), exponents)],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.terms.iter().map(|(_, e)| e.len()).max().unwrap_or(0)
    }

    /// Substitutes a commuting tuple.
    pub fn eval_operators(&self, tuple: &[CMatrix]) -> CMatrix {
        let h = tuple.first().map_or(1, |t| t.nrows());
        let mut out = CMatrix::zeros(h, h);
        for (coef, exps) in &self.terms {
            let mut term = identity(h);
            for (k, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    term *= &tuple[k];
                }
            }
            out += term * *coef;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub enum VonNeumannTarget<'a> {
    Colligation(&'a Colligation),
    Polynomial(&'a Polynomial),
}

/// `||S(T)||` for a commuting tuple of strict contractions.
pub fn von_neumann_test(target: VonNeumannTarget<'_>, tuple: &[CMatrix], tol: f64) -> Result<f64> {
    let h = tuple.first().map(|t| t.nrows()).unwrap_or(0);
    if tuple.is_empty() || tuple.iter().any(|t| t.shape() != (h, h) || !linalg::all_finite(t)) {
        return Err(Error::InvalidInput("tuple must be non-empty square matrices of one size".into()));
    }
    for (k, t) in tuple.iter().enumerate() {
        let norm = op_norm(t);
        if norm > 1.0 - 1e-6 {
            return Err(Error::InvalidInput(format!("T_{k} has norm {norm}, not a strict contraction")));
        }
    }
    for i in 0..tuple.len() {
        for j in i + 1..tuple.len() {
            let comm = op_norm(&(&tuple[i] * &tuple[j] - &tuple[j] * &tuple[i]));
            if comm > tol.max(1e-10) {
                return Err(Error::InvalidInput(format!("T_{i} and T_{j} do not commute ({comm:.3e})")));
            }
        }
    }
    match target {
        VonNeumannTarget::Polynomial(p) => {
            if p.num_vars() > tuple.len() {
                return Err(Error::InvalidInput("polynomial needs more variables than given".into()));
            }
            Ok(op_norm(&p.eval_operators(tuple)))
        }
        VonNeumannTarget::Colligation(col) => {
            let mut coords = Vec::with_capacity(col.state_dim());
            for s in &col.sectors {
                let Some(k) = s.function.coordinate_index() else {
                    return Err(Error::Unsupported(
                        "operator substitution is defined only for coordinate test functions".into(),
                    ));
                };
                if k >= tuple.len() {
                    return Err(Error::InvalidInput(format!("sector reads coordinate {k} beyond the tuple")));
                }
                coords.extend(std::iter::repeat_n(k, s.multiplicity));
            }
            let n = col.io_dim();
            let eye_h = identity(h);
            let d = linalg::kron(&col.d, &eye_h);
            if coords.is_empty() {
                return Ok(op_norm(&d));
            }
            let x = coords.len();
            let mut z = CMatrix::zeros(x * h, x * h);
            for (s, &k) in coords.iter().enumerate() {
                z.view_mut((s * h, s * h), (h, h)).copy_from(&tuple[k]);
            }
            let a = linalg::kron(&col.a, &eye_h);
            let b = linalg::kron(&col.b, &eye_h);
            let c = linalg::kron(&col.c, &eye_h);
            let m = identity(x * h) - &z * a;
            let inv = m
                .try_inverse()
                .ok_or_else(|| Error::NumericalFailure("singular operator resolvent".into()))?;
            let value = d + c * inv * z * b;
            debug_assert_eq!(value.nrows(), n * h);
            Ok(op_norm(&value))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agler::{solve_decomposition, DecompositionOptions, DecompositionOutcome};
    use crate::testfns::{disk_family, polydisk_family, QuantumMeasure};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(v: Complex64) -> CMatrix {
        CMatrix::from_element(1, 1, v)
    }

    fn solve(zs: &[Complex64], s: impl Fn(Complex64) -> Complex64) -> (DecompositionProblem, AglerDecomposition) {
        let p = DecompositionProblem::new(
            zs.iter().map(|&z| Point::scalar(z)).collect(),
            zs.iter().map(|&z| scalar(s(z))).collect(),
            disk_family(),
        )
        .unwrap();
        match solve_decomposition(&p, &DecompositionOptions::default()).unwrap() {
            DecompositionOutcome::Feasible(dec) => (p, dec),
            DecompositionOutcome::Infeasible(_) => panic!("expected feasible"),
        }
    }

    #[test]
    fn rho_examples() {
        let s = vec![Sector { function: TestFunction::disk(), multiplicity: 2 }];
        let r = rho_eval(&s, &Point::real(0.3)).unwrap();
        assert!(linalg::max_abs(&(r - identity(2).scale(0.3))) < 1e-15);

        let s: Vec<Sector> = polydisk_family(2)
            .into_iter()
            .map(|f| Sector { function: f, multiplicity: 1 })
            .collect();
        let r = rho_eval(&s, &Point(vec![c(0.5, 0.0), c(0.0, 1.0 / 3.0)])).unwrap();
        assert!((r[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((r[(1, 1)] - c(0.0, 1.0 / 3.0)).norm() < 1e-15);
        assert!(r[(0, 1)].norm() < 1e-15);

        let s = vec![Sector {
            function: TestFunction::ConstrainedExtreme(QuantumMeasure::antipodal(1)),
            multiplicity: 1,
        }];
        let r = rho_eval(&s, &Point::real(0.5)).unwrap();
        assert!((r[(0, 0)] - c(0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn shift_realization() {
        let (p, dec) = solve(&[c(0.0, 0.0), c(0.5, 0.0)], |z| z);
        let col = lurking_isometry(&dec, &p).unwrap();
        assert_eq!(col.state_dim(), 1);
        assert!(col.a[(0, 0)].norm() < 1e-8);
        assert!(col.d[(0, 0)].norm() < 1e-8);
        assert!((col.b[(0, 0)] * col.c[(0, 0)] - 1.0).norm() < 1e-8);
        let v = transfer_eval(&col, &Point::scalar(c(0.2, 0.4))).unwrap();
        assert!((v[(0, 0)] - c(0.2, 0.4)).norm() < 1e-8);
    }

    #[test]
    fn z_squared_realization() {
        let (p, dec) = solve(&[c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.5)], |z| z * z);
        let col = lurking_isometry(&dec, &p).unwrap();
        assert_eq!(col.state_dim(), 2);
        let v = transfer_eval(&col, &Point::real(0.5)).unwrap();
        assert!((v[(0, 0)] - 0.25).norm() < 1e-10);
        let report = verify_colligation(&col);
        assert!(report.max_error <= 1e-10, "{report:?}");
        assert!(report.unitarity_defect <= 1e-12, "{report:?}");
        assert!(report.spectral_radius < 1.0);
        let z0 = transfer_eval(&col, &Point::real(0.0)).unwrap();
        assert!(linalg::max_abs(&(z0 - &col.d)) < 1e-15);

        let probes = probe_points(1, 100);
        for z in &probes {
            assert!(op_norm(&transfer_eval(&col, z).unwrap()) <= 1.0 + 1e-9);
        }
        for pair in probes.windows(2) {
            assert!(toshow_defect(&col, &pair[0], &pair[1]).unwrap() <= 1e-8);
        }

        let mut bumped = col.clone();
        bumped.a[(0, 1)] += c(1e-4, 0.0);
        let defect = verify_colligation(&bumped).unitarity_defect;
        assert!((0.5e-4..=2e-4).contains(&defect), "defect {defect}");
    }

    #[test]
    fn constant_unitary_has_empty_state() {
        let u0 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let p = DecompositionProblem::new(
            vec![Point::real(0.0), Point::real(0.5)],
            vec![u0.clone(), u0.clone()],
            disk_family(),
        )
        .unwrap();
        let dec = AglerDecomposition {
            grams: vec![crate::HermitianMatrix::new(CMatrix::zeros(4, 4)).unwrap()],
            factors: vec![vec![CMatrix::zeros(2, 0); 2]],
            multiplicities: vec![0],
            residual: 0.0,
            iterations: 0,
        };
        let col = lurking_isometry(&dec, &p).unwrap();
        assert_eq!(col.state_dim(), 0);
        assert!(linalg::max_abs(&(&col.d - &u0)) < 1e-12);
        assert!(verify_colligation(&col).unitarity_defect <= 1e-12);
    }

    #[test]
    fn inconsistent_decomposition_is_rejected() {
        let (p, mut dec) = solve(&[c(0.0, 0.0), c(0.5, 0.0)], |z| z);
        dec.factors[0][1] *= c(2.0, 0.0);
        assert!(matches!(lurking_isometry(&dec, &p), Err(Error::InconsistentDecomposition { .. })));
    }

    #[test]
    fn von_neumann_examples() {
        let t = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.9, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let z2 = Polynomial::monomial(vec![2]);
        assert!(von_neumann_test(VonNeumannTarget::Polynomial(&z2), &[t.clone()], 1e-10).unwrap() < 1e-15);
        let z = Polynomial::monomial(vec![1]);
        let norm = von_neumann_test(VonNeumannTarget::Polynomial(&z), &[t.clone()], 1e-10).unwrap();
        assert!((norm - 0.9).abs() < 1e-12);

        let proj = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]).scale(0.7);
        let z1z2 = Polynomial::monomial(vec![1, 1]);
        let norm = von_neumann_test(VonNeumannTarget::Polynomial(&z1z2), &[proj.clone(), proj], 1e-10).unwrap();
        assert!((norm - 0.49).abs() < 1e-12);

        let (p, dec) = solve(&[c(0.0, 0.0), c(0.5, 0.0), c(0.0, 0.5)], |z| z * z);
        let col = lurking_isometry(&dec, &p).unwrap();
        let norm = von_neumann_test(VonNeumannTarget::Colligation(&col), &[t.clone()], 1e-10).unwrap();
        assert!(norm < 1e-8);

        let s = t.transpose();
        assert!(matches!(
            von_neumann_test(VonNeumannTarget::Polynomial(&z1z2), &[t.clone(), s], 1e-10),
            Err(Error::InvalidInput(_))
        ));
        assert!(von_neumann_test(VonNeumannTarget::Polynomial(&z), &[identity(2)], 1e-10).is_err());

        let mut constrained = col.clone();
        constrained.sectors[0].function = TestFunction::ConstrainedExtreme(QuantumMeasure::antipodal(1));
        assert!(matches!(
            von_neumann_test(VonNeumannTarget::Colligation(&constrained), &[t], 1e-10),
            Err(Error::Unsupported(_))
        ));
    }
}
