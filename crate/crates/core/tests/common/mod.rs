#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schur_agler::kernels::FiniteKernel;
use schur_agler::linalg::{op_norm, CMatrix};
use schur_agler::Point;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    random_matrix(rng, n, n).qr().q()
}

/// Random matrix rescaled to operator norm `norm`.
pub fn random_contraction(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> CMatrix {
    let m = random_matrix(rng, n, n);
    let s = op_norm(&m);
    m.scale(norm / s)
}

/// Disk points with modulus at most `radius`, pairwise at least 0.05 apart.
pub fn random_disk_points(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::with_capacity(n);
    while out.len() < n {
        let z = Complex64::from_polar(radius * rng.random::<f64>().sqrt(), std::f64::consts::TAU * rng.random::<f64>());
        if out.iter().all(|w| (w - z).norm() > 0.05) {
            out.push(z);
        }
    }
    out
}

pub fn points(zs: &[Complex64]) -> Vec<Point> {
    zs.iter().map(|&z| Point::scalar(z)).collect()
}

/// Random positive block kernel `K_ij = H_i H_j^*` on the given nodes.
pub fn random_kernel(rng: &mut ChaCha8Rng, nodes: Vec<Point>, block: usize, rank: usize) -> FiniteKernel {
    let n = nodes.len();
    let h: Vec<CMatrix> = (0..n).map(|_| random_matrix(rng, block, rank)).collect();
    let values = (0..n * n).map(|k| &h[k / n] * h[k % n].adjoint()).collect();
    FiniteKernel::new(nodes, block, values).unwrap()
}

/// `Re sum_ij tr(X_j^* (I - psi_j^* psi_i) X_i K_ij)`, straight from the definition.
pub fn direct_form(kernel: &FiniteKernel, psi: &[CMatrix], x: &[CMatrix]) -> f64 {
    let n = kernel.len();
    let mut acc = c(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let d_u = psi[i].ncols();
            let coupling = CMatrix::identity(d_u, d_u) - psi[j].adjoint() * &psi[i];
            acc += (x[j].adjoint() * coupling * &x[i] * kernel.value(i, j)).trace();
        }
    }
    acc.re
}
