mod common;

use common::*;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use schur_agler::agler::{
    solve_decomposition, verify_decomposition, AglerDecomposition, DecompositionOptions, DecompositionOutcome,
    DecompositionProblem,
};
use schur_agler::kernels::{
    admissibility_check, classical_pick_check, multiplier_form_matrix, pick_kernel_matrix, vector_to_coefficients,
    FiniteKernel, InterpolationProblem, ProblemClass, Verdict,
};
use schur_agler::linalg::{self, nearest_psd, op_norm, unitary_completion, CMatrix, CVector, HermitianMatrix};
use schur_agler::realize::{lurking_isometry, probe_points, toshow_defect, transfer_eval, verify_colligation};
use schur_agler::testfns::{
    disk_family, polydisk_family, sample_extreme_measure, SamplerOptions, TestFunction,
};
use schur_agler::{Complex64, Point};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn random_hermitian(seed: u64, dim: usize) -> HermitianMatrix {
    let mut r = rng(seed);
    let m = random_matrix(&mut r, dim, dim);
    HermitianMatrix::new((&m + m.adjoint()).scale(0.5)).unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn kolmogorov_factor_reproduces_kernel(seed in any::<u64>(), n in 1usize..5, block in 1usize..3, rank in 1usize..4) {
        let mut r = rng(seed);
        let nodes = points(&random_disk_points(&mut r, n, 0.9));
        let k = random_kernel(&mut r, nodes, block, rank);
        let f = k.kolmogorov_factor(1e-12).unwrap();
        let scale = linalg::max_abs(k.gram().as_matrix()).max(1.0);
        for i in 0..n {
            for j in 0..n {
                let err = linalg::max_abs(&(&f[i] * f[j].adjoint() - k.value(i, j)));
                prop_assert!(err <= 1e-9 * scale, "block ({i},{j}) off by {err}");
            }
        }
    }

    #[test]
    fn nearest_psd_is_idempotent_and_nonexpansive(seed in any::<u64>(), dim in 1usize..7) {
        let a = random_hermitian(seed, dim);
        let b = random_hermitian(seed.wrapping_add(1), dim);
        let pa = nearest_psd(&a);
        let again = nearest_psd(&pa);
        prop_assert!(linalg::max_abs(&(again.as_matrix() - pa.as_matrix())) <= 1e-12 * (1.0 + op_norm(a.as_matrix())));
        prop_assert!(linalg::psd_check(&pa, 1e-12).unwrap().is_psd);
        let pb = nearest_psd(&b);
        let lhs = (pa.as_matrix() - pb.as_matrix()).norm();
        let rhs = (a.as_matrix() - b.as_matrix()).norm();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn unitary_completion_carries_domain_to_range(seed in any::<u64>(), dim in 2usize..7, k in 1usize..7, dup in any::<bool>()) {
        let mut r = rng(seed);
        let k = k.min(dim + 1);
        let mut domain = random_matrix(&mut r, dim, k);
        if dup && k > 1 {
            let first = domain.column(0).into_owned() * c(0.5, -1.0);
            domain.set_column(k - 1, &first);
        }
        let v = random_unitary(&mut r, dim);
        let range = &v * &domain;
        let u = unitary_completion(&domain, &range, 1e-9).unwrap();
        prop_assert!(linalg::unitarity_defect(&u) <= 1e-10);
        let scale = linalg::max_abs(&domain).max(1.0);
        prop_assert!(linalg::max_abs(&(&u * &domain - &range)) <= 1e-9 * scale);
    }

    #[test]
    fn form_matrix_agrees_with_direct_form(seed in any::<u64>(), n in 1usize..5, block in 1usize..4, d_u in 1usize..4) {
        let mut r = rng(seed);
        let nodes = points(&random_disk_points(&mut r, n, 0.9));
        let k = random_kernel(&mut r, nodes, block, 2);
        let psi: Vec<CMatrix> = (0..n).map(|_| random_contraction(&mut r, d_u, 0.9)).collect();
        let form = multiplier_form_matrix(&k, &psi, 1.0).unwrap();
        let x = CVector::from_fn(n * block * d_u, |_, _| gaussian(&mut r));
        let coeffs = vector_to_coefficients(&x, n, block, d_u);
        let quad = (x.adjoint() * form.as_matrix() * &x)[(0, 0)].re;
        let direct = direct_form(&k, &psi, &coeffs);
        prop_assert!((quad - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn pick_verdict_is_phase_invariant(seed in any::<u64>(), n in 2usize..5, phase in 0.0f64..6.28) {
        let mut r = rng(seed);
        let zs = random_disk_points(&mut r, n, 0.9);
        let ws: Vec<Complex64> = (0..n).map(|_| gaussian(&mut r) * 0.4).collect();
        let rotated: Vec<Complex64> = ws.iter().map(|w| w * Complex64::from_polar(1.0, phase)).collect();
        let a = classical_pick_check(&InterpolationProblem::scalar(&zs, &ws, ProblemClass::ClassicalDisk).unwrap(), 1e-9).unwrap();
        let b = classical_pick_check(&InterpolationProblem::scalar(&zs, &rotated, ProblemClass::ClassicalDisk).unwrap(), 1e-9).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert!((a.min_eig_seen - b.min_eig_seen).abs() <= 1e-10);
    }

    #[test]
    fn scalar_pick_positivity_ignores_nonzero_y(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let zs = random_disk_points(&mut r, n, 0.9);
        let nodes = points(&zs);
        let k = FiniteKernel::szego(nodes).unwrap();
        let values: Vec<CMatrix> = (0..n).map(|_| CMatrix::from_element(1, 1, gaussian(&mut r) * 0.5)).collect();
        let ones = vec![CMatrix::from_element(1, 1, c(1.0, 0.0)); n];
        let ys: Vec<CMatrix> = (0..n).map(|_| CMatrix::from_element(1, 1, gaussian(&mut r) + c(0.1, 0.0))).collect();
        let base = linalg::psd_check(&pick_kernel_matrix(&k, &values, &ones).unwrap(), 1e-10).unwrap();
        let scaled = linalg::psd_check(&pick_kernel_matrix(&k, &values, &ys).unwrap(), 1e-10).unwrap();
        prop_assert_eq!(base.is_psd, scaled.is_psd);
    }

    #[test]
    fn admissibility_witness_is_negative(seed in any::<u64>(), n in 1usize..5, block in 1usize..3) {
        let mut r = rng(seed);
        let nodes = points(&random_disk_points(&mut r, n, 0.9));
        let k = random_kernel(&mut r, nodes.clone(), block, 2);
        let psi = TestFunction::disk();
        let report = admissibility_check(&k, &psi, 1e-9).unwrap();
        if !report.is_psd {
            let vals: Vec<CMatrix> = nodes.iter().map(|z| psi.eval(z).unwrap()).collect();
            let x = vector_to_coefficients(&report.witness, n, block, 1);
            prop_assert!(direct_form(&k, &vals, &x) <= -0.5e-9);
        }
    }

    #[test]
    fn reconstruction_is_linear(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pts: Vec<Point> = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]
            .iter()
            .map(|&(a, b)| Point(vec![c(a, 0.0), c(b, 0.0)]))
            .collect();
        let samples = pts.iter().map(|z| CMatrix::from_element(1, 1, z.coords()[0] * z.coords()[1])).collect();
        let p = DecompositionProblem::new(pts, samples, polydisk_family(2)).unwrap();
        let mut draw = || -> Vec<CMatrix> {
            (0..2).map(|_| { let h = random_matrix(&mut r, 4, 3); &h * h.adjoint() }).collect()
        };
        let (w1, w2) = (draw(), draw());
        let mid: Vec<CMatrix> = w1.iter().zip(&w2).map(|(a, b)| (a + b).scale(0.5)).collect();
        let lhs = p.reconstruct(&mid).unwrap();
        let rhs = (p.reconstruct(&w1).unwrap() + p.reconstruct(&w2).unwrap()).scale(0.5);
        prop_assert!(linalg::max_abs(&(lhs - rhs)) <= 1e-12 * (1.0 + linalg::max_abs(&mid[0])));
    }

    #[test]
    fn sampled_test_functions_vanish_to_second_order(seed in any::<u64>()) {
        let mu = sample_extreme_measure(1, seed, &SamplerOptions::default()).unwrap();
        prop_assert!(mu.is_constrained());
        let s0 = mu.cayley_to_schur(c(0.0, 0.0)).unwrap();
        prop_assert!(linalg::max_abs(&s0) <= 1e-10);
        let mut r = rng(seed);
        for z in random_disk_points(&mut r, 5, 0.95) {
            prop_assert!(op_norm(&mu.cayley_to_schur(z).unwrap()) <= 1.0 + 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(config(10))]

    #[test]
    fn realized_monomials_round_trip(seed in any::<u64>(), power in 1u32..4, n in 2usize..5) {
        let mut r = rng(seed);
        let zs = random_disk_points(&mut r, n, 0.8);
        let coef = Complex64::from_polar(0.9, 1.3);
        let p = DecompositionProblem::new(
            points(&zs),
            zs.iter().map(|z| CMatrix::from_element(1, 1, coef * z.powu(power))).collect(),
            disk_family(),
        ).unwrap();
        let DecompositionOutcome::Feasible(dec) = solve_decomposition(&p, &DecompositionOptions::default()).unwrap() else {
            return Err(TestCaseError::fail("monomial data must be decomposable"));
        };
        prop_assert!(dec.grams.iter().all(|g| linalg::psd_check(g, 1e-9).unwrap().is_psd));
        let col = lurking_isometry(&dec, &p).unwrap();
        let report = verify_colligation(&col);
        prop_assert!(report.max_error <= 100.0 * dec.residual + 1e-8, "{report:?}");
        prop_assert!(report.unitarity_defect <= 1e-10);
        let probes = probe_points(1, 100);
        for z in &probes {
            prop_assert!(op_norm(&transfer_eval(&col, z).unwrap()) <= 1.0 + 1e-9);
        }
        for pair in probes.chunks(2).take(10) {
            prop_assert!(toshow_defect(&col, &pair[0], &pair[1]).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn verify_rejects_non_psd_grams() {
    let p = DecompositionProblem::new(
        points(&[c(0.0, 0.0), c(0.5, 0.0)]),
        vec![CMatrix::zeros(1, 1); 2],
        disk_family(),
    )
    .unwrap();
    let bad = HermitianMatrix::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]))).unwrap();
    let dec = AglerDecomposition {
        grams: vec![bad],
        factors: vec![vec![CMatrix::zeros(1, 0); 2]],
        multiplicities: vec![0],
        residual: 0.0,
        iterations: 0,
    };
    assert!(verify_decomposition(&dec, &p).is_err());
    assert_eq!(
        classical_pick_check(&InterpolationProblem::scalar(&[c(0.0, 0.0)], &[c(0.0, 0.0)], ProblemClass::ClassicalDisk).unwrap(), 1e-9)
            .unwrap()
            .verdict,
        Verdict::Feasible
    );
}
