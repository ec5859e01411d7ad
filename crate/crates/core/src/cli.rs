//! JSON schemas and the `agler` command-line surface.
//!
//! Complex numbers are `[re, im]`; matrices are row-major nested arrays of
//! complex numbers. Every file carries `schema_version = "1"`.
//!
//! Exit codes: 0 feasible / ok, 2 infeasible, 3 undecided, 64 bad input,
//! 65 inconsistent artifact, 66 missing input file, 1 anything else.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agler::{
    self, AglerDecomposition, DecompositionOptions, DecompositionOutcome, DecompositionProblem, SeparationEvidence,
};
use crate::error::Error;
use crate::kernels::{
    self, CheckOptions, CheckReport, FiniteKernel, InterpolationProblem, ProblemClass, Verdict, Witness,
};
use crate::linalg::{self, CMatrix, HermitianMatrix};
use crate::realize::{self, Colligation, Sector, TransferReport};
use crate::testfns::{self, QuantumMeasure, SamplerOptions, TestFunction};
use crate::Point;

pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_UNDECIDED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;

/// Stored and recomputed residuals must agree this closely on reload.
pub const RELOAD_TOL: f64 = 1e-12;

pub type ComplexWire = [f64; 2];
pub type MatrixWire = Vec<Vec<ComplexWire>>;

/// A disk point `[re, im]` or a polydisk point `[[re, im], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointWire {
    Scalar(ComplexWire),
    Tuple(Vec<ComplexWire>),
}

/// A scalar value `[re, im]` or a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueWire {
    Scalar(ComplexWire),
    Matrix(MatrixWire),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClassWire {
    Disk,
    Constrained,
    Polydisk,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Coordinate functions `z_1..z_d`.
    Coordinates,
    /// The single antipodal constrained test function `z^2 I`.
    Antipodal,
    /// Sampled extreme constrained test functions.
    Constrained,
    /// Test functions listed in the file.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionWire {
    Coordinate { index: usize },
    Constrained { points: Vec<ComplexWire>, weights: Vec<MatrixWire> },
    Tabulated { nodes: Vec<PointWire>, values: Vec<ValueWire> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub include_antipodal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<TestFunctionWire>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptionsWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SolverOptionsWire {
    fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: String,
    pub class: ClassWire,
    /// Polydisk dimension; inferred from the nodes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub nodes: Vec<PointWire>,
    pub values: Vec<ValueWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    /// Admissible kernels for the generic dual check, each `nN x nN`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<MatrixWire>>,
    #[serde(default, skip_serializing_if = "SolverOptionsWire::is_empty")]
    pub options: SolverOptionsWire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub residuals: BTreeMap<String, f64>,
    /// Seconds since the Unix epoch; the only field allowed to differ between reruns.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<ComplexWire>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<ComplexWire>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_index: Option<usize>,
    pub y: Vec<MatrixWire>,
    pub pick: MatrixWire,
    pub min_eigenvalue: f64,
    pub eigenvector: Vec<ComplexWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceWire {
    /// Coefficient blocks `L_ij`, row-major over node pairs.
    pub coefficients: Vec<MatrixWire>,
    pub margin: f64,
    pub min_generator_value: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionWire {
    pub grams: Vec<MatrixWire>,
    /// `H_m(z_i)`, indexed `[m][i]`.
    pub factors: Vec<Vec<MatrixWire>>,
    pub multiplicities: Vec<usize>,
    pub residual: f64,
    pub iterations: usize,
}

/// The resolved data a decomposition refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedProblemWire {
    pub nodes: Vec<PointWire>,
    pub values: Vec<MatrixWire>,
    pub family: Vec<TestFunctionWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorWire {
    pub function: TestFunctionWire,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColligationWire {
    pub a: MatrixWire,
    pub b: MatrixWire,
    pub c: MatrixWire,
    pub d: MatrixWire,
    pub sectors: Vec<SectorWire>,
    pub nodes: Vec<PointWire>,
    pub samples: Vec<MatrixWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReportWire {
    pub node_errors: Vec<f64>,
    pub max_error: f64,
    pub unitarity_defect: f64,
    pub spectral_radius: f64,
    pub max_condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Feasible,
    Infeasible,
    Undecided,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Feasible => EXIT_OK,
            Status::Infeasible => EXIT_INFEASIBLE,
            Status::Undecided => EXIT_UNDECIDED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckArtifact {
    pub schema_version: String,
    pub kind: String,
    pub status: Status,
    pub method: String,
    pub samples_used: usize,
    /// Smallest eigenvalue over the tested Pick matrices (absent when none was tested).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_eig_seen: Option<f64>,
    pub vacuous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionArtifact {
    pub schema_version: String,
    pub kind: String,
    pub status: Status,
    pub problem: ResolvedProblemWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceWire>,
    /// Residual history of an undecided run, sampled every 100 iterations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColligationArtifact {
    pub schema_version: String,
    pub kind: String,
    pub colligation: ColligationWire,
    pub report: TransferReportWire,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureWire {
    pub points: Vec<ComplexWire>,
    pub weights: Vec<MatrixWire>,
    pub moment_defect: f64,
    pub weakly_independent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionArtifact {
    pub schema_version: String,
    pub kind: String,
    pub measures: Vec<MeasureWire>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub point: PointWire,
    pub value: MatrixWire,
    pub rho_norm: f64,
    pub condition: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub schema_version: String,
    pub kind: String,
    pub values: Vec<EvalEntry>,
}

// ---------------------------------------------------------------------------
// Wire conversions

pub fn complex_to_wire(z: Complex64) -> ComplexWire {
    [z.re, z.im]
}

pub fn complex_from_wire(w: ComplexWire) -> Result<Complex64, Error> {
    if !(w[0].is_finite() && w[1].is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite number {w:?}")));
    }
    Ok(Complex64::new(w[0], w[1]))
}

pub fn matrix_to_wire(m: &CMatrix) -> MatrixWire {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| complex_to_wire(m[(i, j)])).collect())
        .collect()
}

/// Rows of equal length; an empty list is `0 x 0` and `[[]]`-style rows give `r x 0`.
pub fn matrix_from_wire(w: &MatrixWire) -> Result<CMatrix, Error> {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if w.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("ragged matrix rows".into()));
    }
    let mut m = CMatrix::zeros(rows, cols);
    for (i, row) in w.iter().enumerate() {
        for (j, &z) in row.iter().enumerate() {
            m[(i, j)] = complex_from_wire(z)?;
        }
    }
    Ok(m)
}

/// Like [`matrix_from_wire`] with a known shape; empty matrices lose their
/// row count in JSON (`[]`), so any empty input is accepted for an empty shape.
fn matrix_from_wire_shaped(w: &MatrixWire, rows: usize, cols: usize) -> Result<CMatrix, Error> {
    let m = matrix_from_wire(w)?;
    if m.shape() == (rows, cols) {
        Ok(m)
    } else if rows * cols == 0 && m.is_empty() {
        Ok(CMatrix::zeros(rows, cols))
    } else {
        Err(Error::InvalidInput(format!(
            "matrix has shape {:?}, expected {rows}x{cols}",
            m.shape()
        )))
    }
}

pub fn point_to_wire(p: &Point) -> PointWire {
    if p.dim() == 1 {
        PointWire::Scalar(complex_to_wire(p.z()))
    } else {
        PointWire::Tuple(p.coords().iter().map(|&z| complex_to_wire(z)).collect())
    }
}

pub fn point_from_wire(w: &PointWire) -> Result<Point, Error> {
    match w {
        PointWire::Scalar(z) => Ok(Point::scalar(complex_from_wire(*z)?)),
        PointWire::Tuple(zs) => {
            if zs.is_empty() {
                return Err(Error::InvalidInput("point with no coordinates".into()));
            }
            Ok(Point(zs.iter().map(|&z| complex_from_wire(z)).collect::<Result<_, _>>()?))
        }
    }
}

pub fn value_from_wire(w: &ValueWire) -> Result<CMatrix, Error> {
    match w {
        ValueWire::Scalar(z) => Ok(CMatrix::from_element(1, 1, complex_from_wire(*z)?)),
        ValueWire::Matrix(m) => matrix_from_wire(m),
    }
}

pub fn test_function_to_wire(f: &TestFunction) -> TestFunctionWire {
    match f {
        TestFunction::Coordinate { index } => TestFunctionWire::Coordinate { index: *index },
        TestFunction::ConstrainedExtreme(mu) => TestFunctionWire::Constrained {
            points: mu.points().iter().map(|&t| complex_to_wire(t)).collect(),
            weights: mu.weights().iter().map(matrix_to_wire).collect(),
        },
        TestFunction::Tabulated { nodes, values } => TestFunctionWire::Tabulated {
            nodes: nodes.iter().map(point_to_wire).collect(),
            values: values.iter().map(|v| ValueWire::Matrix(matrix_to_wire(v))).collect(),
        },
    }
}

pub fn test_function_from_wire(w: &TestFunctionWire) -> Result<TestFunction, Error> {
    match w {
        TestFunctionWire::Coordinate { index } => Ok(TestFunction::Coordinate { index: *index }),
        TestFunctionWire::Constrained { points, weights } => {
            let points = points.iter().map(|&t| complex_from_wire(t)).collect::<Result<_, _>>()?;
            let weights = weights.iter().map(matrix_from_wire).collect::<Result<_, _>>()?;
            Ok(TestFunction::ConstrainedExtreme(QuantumMeasure::new(points, weights)?))
        }
        TestFunctionWire::Tabulated { nodes, values } => {
            if nodes.len() != values.len() || nodes.is_empty() {
                return Err(Error::InvalidInput("tabulated test function needs matching nodes and values".into()));
            }
            Ok(TestFunction::Tabulated {
                nodes: nodes.iter().map(point_from_wire).collect::<Result<_, _>>()?,
                values: values.iter().map(value_from_wire).collect::<Result<_, _>>()?,
            })
        }
    }
}

fn evidence_to_wire(ev: &SeparationEvidence) -> EvidenceWire {
    EvidenceWire {
        coefficients: ev.coefficients.iter().map(matrix_to_wire).collect(),
        margin: ev.margin,
        min_generator_value: ev.min_generator_value,
        residual: ev.residual,
        iterations: ev.iterations,
    }
}

fn witness_to_wire(w: &Witness) -> WitnessWire {
    let vec = |v: &crate::CVector| v.iter().map(|&z| complex_to_wire(z)).collect();
    WitnessWire {
        alpha: w.alpha.as_ref().map(vec),
        beta: w.beta.as_ref().map(vec),
        kernel_index: w.kernel_index,
        y: w.y.iter().map(matrix_to_wire).collect(),
        pick: matrix_to_wire(w.pick.as_matrix()),
        min_eigenvalue: w.report.min_eigenvalue,
        eigenvector: vec(&w.report.witness),
    }
}

pub fn decomposition_to_wire(dec: &AglerDecomposition) -> DecompositionWire {
    DecompositionWire {
        grams: dec.grams.iter().map(|g| matrix_to_wire(g.as_matrix())).collect(),
        factors: dec
            .factors
            .iter()
            .map(|hs| hs.iter().map(matrix_to_wire).collect())
            .collect(),
        multiplicities: dec.multiplicities.clone(),
        residual: dec.residual,
        iterations: dec.iterations,
    }
}

pub fn decomposition_from_wire(w: &DecompositionWire, problem: &DecompositionProblem) -> Result<AglerDecomposition, Error> {
    let family = problem.family();
    if w.grams.len() != family.len() || w.factors.len() != family.len() || w.multiplicities.len() != family.len() {
        return Err(Error::InvalidInput("decomposition does not match the family size".into()));
    }
    let grams = w
        .grams
        .iter()
        .map(|g| HermitianMatrix::new(matrix_from_wire(g)?))
        .collect::<Result<Vec<_>, _>>()?;
    let mut factors = Vec::with_capacity(family.len());
    for (m, hs) in w.factors.iter().enumerate() {
        if hs.len() != problem.len() {
            return Err(Error::InvalidInput(format!("factor list {m} does not cover every node")));
        }
        let cols = w.multiplicities[m] * family[m].output_dim();
        factors.push(
            hs.iter()
                .map(|h| matrix_from_wire_shaped(h, problem.block_dim(), cols))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(AglerDecomposition {
        grams,
        factors,
        multiplicities: w.multiplicities.clone(),
        residual: w.residual,
        iterations: w.iterations,
    })
}

pub fn resolved_problem_to_wire(p: &DecompositionProblem) -> ResolvedProblemWire {
    ResolvedProblemWire {
        nodes: p.nodes().iter().map(point_to_wire).collect(),
        values: p.samples().iter().map(matrix_to_wire).collect(),
        family: p.family().iter().map(test_function_to_wire).collect(),
    }
}

pub fn resolved_problem_from_wire(w: &ResolvedProblemWire) -> Result<DecompositionProblem, Error> {
    DecompositionProblem::new(
        w.nodes.iter().map(point_from_wire).collect::<Result<_, _>>()?,
        w.values.iter().map(matrix_from_wire).collect::<Result<_, _>>()?,
        w.family.iter().map(test_function_from_wire).collect::<Result<_, _>>()?,
    )
}

pub fn colligation_to_wire(col: &Colligation) -> ColligationWire {
    ColligationWire {
        a: matrix_to_wire(&col.a),
        b: matrix_to_wire(&col.b),
        c: matrix_to_wire(&col.c),
        d: matrix_to_wire(&col.d),
        sectors: col
            .sectors
            .iter()
            .map(|s| SectorWire {
                function: test_function_to_wire(&s.function),
                multiplicity: s.multiplicity,
            })
            .collect(),
        nodes: col.nodes.iter().map(point_to_wire).collect(),
        samples: col.samples.iter().map(matrix_to_wire).collect(),
    }
}

pub fn colligation_from_wire(w: &ColligationWire) -> Result<Colligation, Error> {
    let sectors = w
        .sectors
        .iter()
        .map(|s| {
            Ok(Sector {
                function: test_function_from_wire(&s.function)?,
                multiplicity: s.multiplicity,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let x: usize = sectors.iter().map(Sector::state_dim).sum();
    let d = matrix_from_wire(&w.d)?;
    let n = d.nrows();
    let col = Colligation::new(
        matrix_from_wire_shaped(&w.a, x, x)?,
        matrix_from_wire_shaped(&w.b, x, n)?,
        matrix_from_wire_shaped(&w.c, n, x)?,
        d,
        sectors,
    )?;
    col.with_data(
        w.nodes.iter().map(point_from_wire).collect::<Result<_, _>>()?,
        w.samples.iter().map(matrix_from_wire).collect::<Result<_, _>>()?,
    )
}

fn report_to_wire(r: &TransferReport) -> TransferReportWire {
    TransferReportWire {
        node_errors: r.node_errors.clone(),
        max_error: r.max_error,
        unitarity_defect: r.unitarity_defect,
        spectral_radius: r.spectral_radius,
        max_condition: r.max_condition,
    }
}

fn measure_to_wire(mu: &QuantumMeasure) -> MeasureWire {
    MeasureWire {
        points: mu.points().iter().map(|&t| complex_to_wire(t)).collect(),
        weights: mu.weights().iter().map(matrix_to_wire).collect(),
        moment_defect: mu.moment_defect(),
        weakly_independent: testfns::weak_independence_check(mu).independent,
    }
}

// ---------------------------------------------------------------------------
// Problem files

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let file: ProblemFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {:?}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn nodes(&self) -> Result<Vec<Point>, Error> {
        self.nodes.iter().map(point_from_wire).collect()
    }

    pub fn values(&self) -> Result<Vec<CMatrix>, Error> {
        self.values.iter().map(value_from_wire).collect()
    }

    pub fn problem_class(&self) -> Result<ProblemClass, Error> {
        Ok(match self.class {
            ClassWire::Disk => ProblemClass::ClassicalDisk,
            ClassWire::Constrained => ProblemClass::ConstrainedH1,
            ClassWire::Polydisk => {
                let dim = match self.dim {
                    Some(d) => d,
                    None => self.nodes()?.first().map_or(1, Point::dim),
                };
                ProblemClass::Polydisk { dim }
            }
            ClassWire::Custom => ProblemClass::Custom,
        })
    }

    pub fn interpolation_problem(&self) -> Result<InterpolationProblem, Error> {
        InterpolationProblem::new(self.nodes()?, self.values()?, self.problem_class()?)
    }
}

/// Command-line overrides shared by `check` and `decompose`.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// Feasibility / PSD tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sphere samples for `check`; family size for sampled constrained families.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Extra random Y draws per kernel (matrix-valued checks).
    #[arg(long)]
    pub y_samples: Option<usize>,
    /// Minimum copy count per test function in the decomposition.
    #[arg(long)]
    pub multiplicity: Option<usize>,
    /// Iteration cap for the decomposition solver.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Test family, overriding the file.
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    /// Write the artifact here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Options after merging flags over file options over defaults.
#[derive(Debug, Clone)]
struct Resolved {
    seed: u64,
    check: CheckOptions,
    decomposition: DecompositionOptions,
    family_count: Option<usize>,
}

fn resolve(file: &ProblemFile, flags: &SolverFlags) -> Resolved {
    let o = &file.options;
    let seed = flags.seed.or(o.seed).unwrap_or(0);
    let defaults = CheckOptions::default();
    let check = CheckOptions {
        sphere_samples: flags.samples.or(o.sphere_samples).unwrap_or(defaults.sphere_samples),
        y_samples: flags.y_samples.or(o.y_samples).unwrap_or(defaults.y_samples),
        seed,
        tol: flags.tol.or(o.tol).unwrap_or(defaults.tol),
    };
    let d_defaults = DecompositionOptions::default();
    let decomposition = DecompositionOptions {
        max_iters: flags.max_iters.or(o.max_iters).unwrap_or(d_defaults.max_iters),
        tol: flags.tol.or(o.tol).unwrap_or(d_defaults.tol),
        multiplicity: flags.multiplicity.or(o.multiplicity),
        seed,
        ..d_defaults
    };
    Resolved {
        seed,
        check,
        decomposition,
        family_count: flags.samples,
    }
}

/// Builds the test family from the file, the `--family` override and the class default.
fn build_family(file: &ProblemFile, flags: &SolverFlags, resolved: &Resolved, problem: &InterpolationProblem) -> Result<Vec<TestFunction>, Error> {
    let spec = file.family.clone();
    let kind = flags.family.or(spec.as_ref().map(|s| s.kind)).unwrap_or(match file.class {
        ClassWire::Disk | ClassWire::Polydisk => FamilyKind::Coordinates,
        ClassWire::Constrained => FamilyKind::Constrained,
        ClassWire::Custom => FamilyKind::Explicit,
    });
    let n_out = problem.output_dim();
    match kind {
        FamilyKind::Coordinates => Ok(testfns::polydisk_family(problem.nodes()[0].dim())),
        FamilyKind::Antipodal => Ok(vec![TestFunction::ConstrainedExtreme(QuantumMeasure::antipodal(n_out))]),
        FamilyKind::Constrained => {
            let count = resolved
                .family_count
                .or(spec.as_ref().and_then(|s| s.count))
                .unwrap_or(8);
            let seed = flags.seed.or(spec.as_ref().and_then(|s| s.seed)).unwrap_or(resolved.seed);
            let include = spec.as_ref().is_none_or(|s| s.include_antipodal || s.kind != FamilyKind::Constrained);
            let measures = testfns::sample_extreme_family(n_out, count, seed, include, &SamplerOptions::default())?;
            Ok(testfns::constrained_family(measures))
        }
        FamilyKind::Explicit => {
            let functions = spec
                .and_then(|s| s.functions)
                .ok_or_else(|| Error::InvalidInput("explicit family needs a `functions` list".into()))?;
            functions.iter().map(test_function_from_wire).collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Debug, Parser)]
#[command(name = "agler", version, about = "Pick-type interpolation checks, Agler decompositions and realizations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide an interpolation problem through kernel positivity tests.
    Check {
        input: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Solve the discretized Agler decomposition.
    Decompose {
        input: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Build a unitary colligation from a decomposition artifact.
    Realize {
        input: PathBuf,
        /// Largest accepted node reconstruction error.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a realized transfer function.
    Eval {
        input: PathBuf,
        /// Points as `0.3`, `[re, im]` or `[[re, im], ...]`.
        #[arg(required = true, allow_hyphen_values = true)]
        points: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample extreme constrained test functions.
    Testfn {
        /// Block size N.
        #[arg(long = "n", short = 'n')]
        n_dim: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        include_antipodal: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::TestAxiom { .. } | Error::Json(_) | Error::Unsupported(_) => EXIT_USAGE,
            Error::InconsistentDecomposition { .. } | Error::NotIsometric { .. } => EXIT_DATA,
            Error::Undecided { .. } | Error::SamplingFailure { .. } => EXIT_UNDECIDED,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_NO_INPUT,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

/// Runs a parsed command; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Check { input, flags } => cmd_check(&input, &flags),
        Command::Decompose { input, flags } => cmd_decompose(&input, &flags),
        Command::Realize { input, tol, out } => cmd_realize(&input, tol, out.as_deref()),
        Command::Eval { input, points, out } => cmd_eval(&input, &points, out.as_deref()),
        Command::Testfn {
            n_dim,
            count,
            seed,
            include_antipodal,
            out,
        } => cmd_testfn(n_dim, count, seed, include_antipodal, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn read_input(path: &Path) -> Result<(String, String), CliError> {
    let bytes = fs::read(path).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::NotFound { EXIT_NO_INPUT } else { EXIT_FAILURE };
        CliError::new(code, format!("{}: {e}", path.display()))
    })?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| CliError::new(EXIT_USAGE, format!("{}: not UTF-8", path.display())))?;
    Ok((text, hash))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::new(
            EXIT_USAGE,
            format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()),
        )
    })
}

fn check_schema(version: &str, kind: &str, want: &str) -> Result<(), CliError> {
    if version != SCHEMA_VERSION {
        return Err(CliError::new(EXIT_USAGE, format!("unsupported schema_version {version:?}")));
    }
    if kind != want {
        return Err(CliError::new(EXIT_USAGE, format!("expected a {want} artifact, got {kind:?}")));
    }
    Ok(())
}

fn provenance(hash: String, seed: u64, residuals: BTreeMap<String, f64>) -> Provenance {
    Provenance {
        input_sha256: hash,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        residuals,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

/// Writes `text` atomically (temp file in the same directory, then rename),
/// or prints it when no path is given.
pub fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    let Some(path) = out else {
        let mut stdout = std::io::stdout().lock();
        return match writeln!(stdout, "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                Err(CliError::new(EXIT_FAILURE, format!("stdout: {e}")))
            }
            _ => Ok(()),
        };
    };
    let fail = |e: std::io::Error| CliError::new(EXIT_FAILURE, format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(fail)?;
    file.write_all(text.as_bytes()).map_err(fail)?;
    file.write_all(b"\n").map_err(fail)?;
    file.sync_all().map_err(fail)?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        fail(e)
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifacts always serialize")
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn cmd_check(input: &Path, flags: &SolverFlags) -> Result<i32, CliError> {
    let (text, hash) = read_input(input)?;
    let file: ProblemFile = parse_json(&text, input)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::new(EXIT_USAGE, format!("unsupported schema_version {:?}", file.schema_version)));
    }
    let resolved = resolve(&file, flags);
    let problem = file.interpolation_problem()?;
    let mut residuals = BTreeMap::new();

    let (status, method, report, evidence, residual): (Status, &str, Option<CheckReport>, Option<EvidenceWire>, Option<f64>) =
        match file.class {
            ClassWire::Disk if file.family.is_none() && flags.family.is_none() => {
                let r = kernels::classical_pick_check(&problem, resolved.check.tol)?;
                (verdict_status(r.verdict), "pick", Some(r), None, None)
            }
            ClassWire::Constrained if file.family.is_none() && flags.family.is_none() => {
                let r = kernels::constrained_np_check(&problem, &resolved.check)?;
                (verdict_status(r.verdict), "constrained", Some(r), None, None)
            }
            ClassWire::Custom if file.kernels.is_some() => {
                let nodes = problem.nodes().to_vec();
                let n = nodes.len();
                let list = file
                    .kernels
                    .as_ref()
                    .expect("checked above")
                    .iter()
                    .map(|w| {
                        let m = matrix_from_wire(w)?;
                        if m.nrows() != m.ncols() || n == 0 || m.nrows() % n != 0 {
                            return Err(Error::InvalidInput("kernel must be a square nN x nN block matrix".into()));
                        }
                        let d = m.nrows() / n;
                        let blocks = (0..n * n)
                            .map(|k| m.view(((k / n) * d, (k % n) * d), (d, d)).into_owned())
                            .collect();
                        FiniteKernel::new(nodes.clone(), d, blocks)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let r = kernels::generic_dual_check(&problem, &list, &resolved.check)?;
                (verdict_status(r.verdict), "generic", Some(r), None, None)
            }
            _ => {
                let family = build_family(&file, flags, &resolved, &problem)?;
                let dp = DecompositionProblem::from_interpolation(&problem, family)?;
                match agler::solve_decomposition(&dp, &resolved.decomposition) {
                    Ok(DecompositionOutcome::Feasible(dec)) => {
                        residuals.insert("decomposition".into(), dec.residual);
                        (Status::Feasible, "decomposition", None, None, Some(dec.residual))
                    }
                    Ok(DecompositionOutcome::Infeasible(ev)) => {
                        (Status::Infeasible, "decomposition", None, Some(evidence_to_wire(&ev)), Some(ev.residual))
                    }
                    Err(Error::Undecided { residual, .. }) => {
                        (Status::Undecided, "decomposition", None, None, finite(residual))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };

    if let Some(r) = &report {
        if r.min_eig_seen.is_finite() {
            residuals.insert("min_eig_seen".into(), r.min_eig_seen);
        }
    }
    let artifact = CheckArtifact {
        schema_version: SCHEMA_VERSION.into(),
        kind: "check".into(),
        status,
        method: method.into(),
        samples_used: report.as_ref().map_or(0, |r| r.samples_used),
        min_eig_seen: report.as_ref().and_then(|r| finite(r.min_eig_seen)),
        vacuous: report.as_ref().is_some_and(|r| r.vacuous),
        witness: report.as_ref().and_then(|r| r.witness.as_ref()).map(witness_to_wire),
        evidence,
        residual,
        provenance: provenance(hash, resolved.seed, residuals),
    };
    emit(&to_json(&artifact), flags.out.as_deref())?;
    eprintln!("check: {status:?} via {method}");
    Ok(status.exit_code())
}

fn verdict_status(v: Verdict) -> Status {
    match v {
        Verdict::Feasible => Status::Feasible,
        Verdict::Infeasible => Status::Infeasible,
        Verdict::Undecided => Status::Undecided,
    }
}

pub fn cmd_decompose(input: &Path, flags: &SolverFlags) -> Result<i32, CliError> {
    let (text, hash) = read_input(input)?;
    let file: ProblemFile = parse_json(&text, input)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::new(EXIT_USAGE, format!("unsupported schema_version {:?}", file.schema_version)));
    }
    let resolved = resolve(&file, flags);
    let problem = file.interpolation_problem()?;
    let family = build_family(&file, flags, &resolved, &problem)?;
    let dp = DecompositionProblem::from_interpolation(&problem, family)?;
    let mut residuals = BTreeMap::new();
    let mut artifact = DecompositionArtifact {
        schema_version: SCHEMA_VERSION.into(),
        kind: "decomposition".into(),
        status: Status::Undecided,
        problem: resolved_problem_to_wire(&dp),
        decomposition: None,
        evidence: None,
        trace: Vec::new(),
        provenance: provenance(hash, resolved.seed, BTreeMap::new()),
    };
    match agler::solve_decomposition(&dp, &resolved.decomposition) {
        Ok(DecompositionOutcome::Feasible(dec)) => {
            residuals.insert("reconstruction".into(), dec.residual);
            residuals.insert("factor".into(), dec.factor_residual(&dp));
            artifact.status = Status::Feasible;
            artifact.decomposition = Some(decomposition_to_wire(&dec));
        }
        Ok(DecompositionOutcome::Infeasible(ev)) => {
            residuals.insert("reconstruction".into(), ev.residual);
            residuals.insert("margin".into(), ev.margin);
            artifact.status = Status::Infeasible;
            artifact.evidence = Some(evidence_to_wire(&ev));
        }
        Err(Error::Undecided { residual, trace, .. }) => {
            if let Some(r) = finite(residual) {
                residuals.insert("reconstruction".into(), r);
            }
            artifact.trace = trace.iter().step_by(100).copied().collect();
        }
        Err(e) => return Err(e.into()),
    }
    artifact.provenance.residuals = residuals;
    let text = to_json(&artifact);
    let reloaded: DecompositionArtifact = serde_json::from_str(&text).map_err(Error::from)?;
    verify_decomposition_artifact(&reloaded)?;
    emit(&text, flags.out.as_deref())?;
    eprintln!(
        "decompose: {:?} (residual {:?})",
        artifact.status,
        artifact.provenance.residuals.get("reconstruction")
    );
    Ok(artifact.status.exit_code())
}

/// Rebuilds the decomposition and checks the stored residual.
pub fn verify_decomposition_artifact(a: &DecompositionArtifact) -> Result<Option<(DecompositionProblem, AglerDecomposition)>, CliError> {
    check_schema(&a.schema_version, &a.kind, "decomposition")?;
    let inconsistent = |e: Error| CliError::new(EXIT_DATA, format!("inconsistent decomposition artifact: {e}"));
    let dp = resolved_problem_from_wire(&a.problem).map_err(inconsistent)?;
    let Some(w) = &a.decomposition else {
        return Ok(None);
    };
    let dec = decomposition_from_wire(w, &dp).map_err(inconsistent)?;
    let residual = agler::verify_decomposition(&dec, &dp).map_err(inconsistent)?;
    if !((residual - w.residual).abs() <= RELOAD_TOL) {
        return Err(CliError::new(
            EXIT_DATA,
            format!("stored residual {:e} but recomputed {residual:e}", w.residual),
        ));
    }
    if let Some(&stored) = a.provenance.residuals.get("factor") {
        let recomputed = dec.factor_residual(&dp);
        if !((recomputed - stored).abs() <= RELOAD_TOL) {
            return Err(CliError::new(
                EXIT_DATA,
                format!("stored factor residual {stored:e} but recomputed {recomputed:e}"),
            ));
        }
    }
    Ok(Some((dp, dec)))
}

pub fn cmd_realize(input: &Path, tol: f64, out: Option<&Path>) -> Result<i32, CliError> {
    let (text, hash) = read_input(input)?;
    let artifact: DecompositionArtifact = parse_json(&text, input)?;
    let Some((dp, dec)) = verify_decomposition_artifact(&artifact)? else {
        return Err(CliError::new(
            EXIT_DATA,
            format!("artifact holds no decomposition (status {:?})", artifact.status),
        ));
    };
    let col = realize::lurking_isometry(&dec, &dp).map_err(|e| match e {
        Error::InconsistentDecomposition { .. } | Error::NotIsometric { .. } => CliError::new(EXIT_DATA, e.to_string()),
        other => other.into(),
    })?;
    let report = realize::verify_colligation(&col);
    if !(report.max_error <= tol) {
        return Err(CliError::new(
            EXIT_DATA,
            format!("node reconstruction error {:e} exceeds {tol:e}", report.max_error),
        ));
    }
    let mut residuals = BTreeMap::new();
    residuals.insert("max_node_error".into(), report.max_error);
    residuals.insert("unitarity_defect".into(), report.unitarity_defect);
    residuals.insert("decomposition".into(), dec.residual);
    let out_artifact = ColligationArtifact {
        schema_version: SCHEMA_VERSION.into(),
        kind: "colligation".into(),
        colligation: colligation_to_wire(&col),
        report: report_to_wire(&report),
        provenance: provenance(hash, artifact.provenance.seed, residuals),
    };
    let text = to_json(&out_artifact);
    let reloaded: ColligationArtifact = serde_json::from_str(&text).map_err(Error::from)?;
    verify_colligation_artifact(&reloaded)?;
    emit(&text, out)?;
    eprintln!(
        "realize: state dimension {}, node error {:.3e}, unitarity defect {:.3e}",
        col.state_dim(),
        report.max_error,
        report.unitarity_defect
    );
    Ok(EXIT_OK)
}

/// Rebuilds the colligation and checks the stored report.
pub fn verify_colligation_artifact(a: &ColligationArtifact) -> Result<Colligation, CliError> {
    check_schema(&a.schema_version, &a.kind, "colligation")?;
    let col = colligation_from_wire(&a.colligation)
        .map_err(|e| CliError::new(EXIT_DATA, format!("inconsistent colligation artifact: {e}")))?;
    let report = realize::verify_colligation(&col);
    let close = |x: f64, y: f64| (x - y).abs() <= RELOAD_TOL;
    if !close(report.max_error, a.report.max_error) || !close(report.unitarity_defect, a.report.unitarity_defect) {
        return Err(CliError::new(
            EXIT_DATA,
            format!(
                "stored report (error {:e}, defect {:e}) does not match recomputed (error {:e}, defect {:e})",
                a.report.max_error, a.report.unitarity_defect, report.max_error, report.unitarity_defect
            ),
        ));
    }
    Ok(col)
}

/// `0.3`, `[re, im]` or `[[re, im], ...]`.
pub fn parse_point(s: &str) -> Result<Point, Error> {
    if let Ok(x) = s.trim().parse::<f64>() {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite point {s}")));
        }
        return Ok(Point::real(x));
    }
    let w: PointWire = serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("bad point {s:?}: {e}")))?;
    point_from_wire(&w)
}

/// Resolvents conditioned worse than this get a warning.
pub const EVAL_WARN_CONDITION: f64 = 1e8;

pub fn cmd_eval(input: &Path, points: &[String], out: Option<&Path>) -> Result<i32, CliError> {
    let (text, _) = read_input(input)?;
    let artifact: ColligationArtifact = parse_json(&text, input)?;
    let col = verify_colligation_artifact(&artifact)?;
    let points = points.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>, _>>()?;
    let mut values = Vec::with_capacity(points.len());
    for z in &points {
        let r = realize::rho_eval(&col.sectors, z)?;
        let rho_norm = linalg::op_norm(&r);
        let condition = if col.state_dim() == 0 {
            1.0
        } else {
            linalg::condition_number(&(linalg::identity(col.state_dim()) - &r * &col.a))
        };
        let mut warning = None;
        if rho_norm > 1.0 - 1e-6 {
            warning = Some(format!("point {z} is at or beyond the boundary (|rho(E(z))| = {rho_norm})"));
        } else if !(condition <= EVAL_WARN_CONDITION) {
            warning = Some(format!("resolvent at {z} is ill-conditioned ({condition:.3e})"));
        }
        if let Some(w) = &warning {
            eprintln!("warning: {w}");
        }
        let value = realize::transfer_eval(&col, z)?;
        values.push(EvalEntry {
            point: point_to_wire(z),
            value: matrix_to_wire(&value),
            rho_norm,
            condition: if condition.is_finite() { condition } else { f64::MAX },
            warning,
        });
    }
    let output = EvalOutput {
        schema_version: SCHEMA_VERSION.into(),
        kind: "values".into(),
        values,
    };
    emit(&to_json(&output), out)?;
    Ok(EXIT_OK)
}

pub fn cmd_testfn(n_dim: usize, count: usize, seed: u64, include_antipodal: bool, out: Option<&Path>) -> Result<i32, CliError> {
    if n_dim == 0 {
        return Err(CliError::new(EXIT_USAGE, "block size N must be at least 1"));
    }
    let measures = testfns::sample_extreme_family(n_dim, count, seed, include_antipodal, &SamplerOptions::default())?;
    let mut hasher = Sha256::new();
    hasher.update(format!("testfn n={n_dim} count={count} seed={seed} antipodal={include_antipodal}"));
    let artifact = TestFunctionArtifact {
        schema_version: SCHEMA_VERSION.into(),
        kind: "testfn".into(),
        measures: measures.iter().map(measure_to_wire).collect(),
        provenance: provenance(hex::encode(hasher.finalize()), seed, BTreeMap::new()),
    };
    emit(&to_json(&artifact), out)?;
    Ok(EXIT_OK)
}
