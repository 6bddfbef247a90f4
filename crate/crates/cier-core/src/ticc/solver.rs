//! Toeplitz-constrained sparse inverse-covariance estimation via ADMM.
//!
//! Solves, per cluster,
//!   minimize  -logdet(T) + tr(S T) + lambda * ||T||_1,offdiag
//! subject to T being symmetric block-Toeplitz with d x d blocks, by
//! alternating a closed-form eigenvalue update with a block-averaging
//! projection plus soft thresholding.

use nalgebra::DMatrix;

pub(crate) struct AdmmOutcome {
    pub precision: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub ridge_added: f64,
}

/// Euclidean projection onto the symmetric block-Toeplitz subspace: blocks at
/// equal sub/super-diagonal offsets are replaced by their average, with the
/// offset-0 average symmetrized.
pub(crate) fn project_block_toeplitz(m: &DMatrix<f64>, d: usize, w: usize) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut out = DMatrix::zeros(d * w, d * w);
    for offset in 0..w {
        let count = (w - offset) as f64;
        let mut avg = DMatrix::zeros(d, d);
        for i in 0..w - offset {
            avg += sym.view((i * d, (i + offset) * d), (d, d));
        }
        avg /= count;
        if offset == 0 {
            avg = (&avg + avg.transpose()) * 0.5;
        }
        let avg_t = avg.transpose();
        for i in 0..w - offset {
            out.view_mut((i * d, (i + offset) * d), (d, d)).copy_from(&avg);
            out.view_mut(((i + offset) * d, i * d), (d, d)).copy_from(&avg_t);
        }
    }
    out
}

/// Maximum deviation between blocks that the Toeplitz constraint requires to
/// be equal (including the symmetry pairing).
pub fn toeplitz_deviation(m: &DMatrix<f64>, d: usize, w: usize) -> f64 {
    let proj = project_block_toeplitz(m, d, w);
    (m - proj).amax()
}

fn soft_threshold_offdiag(m: &mut DMatrix<f64>, kappa: f64) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = m[(i, j)];
                m[(i, j)] = v.signum() * (v.abs() - kappa).max(0.0);
            }
        }
    }
}

/// Adds an escalating ridge until a Cholesky factorization succeeds. The
/// ridge shifts the whole diagonal, which preserves the block-Toeplitz
/// structure.
pub(crate) fn ensure_positive_definite(mut m: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = m.nrows();
    let mut total = 0.0;
    let mut ridge = 1e-6;
    loop {
        if m.clone().cholesky().is_some() {
            return (m, total);
        }
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        total += ridge;
        ridge *= 10.0;
        assert!(total < 1e6, "cannot regularize to positive definite");
    }
}

pub(crate) fn toeplitz_glasso(
    s: &DMatrix<f64>,
    d: usize,
    w: usize,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> AdmmOutcome {
    let n = d * w;
    let rho = 1.0;
    let mut z = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iters.max(1) {
        iterations = it + 1;
        // Theta-update: rho*T - T^-1 = rho*(Z - U) - S, solved in the
        // eigenbasis of the right-hand side.
        let rhs = {
            let m = (&z - &u) * rho - s;
            (&m + m.transpose()) * 0.5
        };
        let eig = rhs.symmetric_eigen();
        let vals = eig.eigenvalues.map(|l| (l + (l * l + 4.0 * rho).sqrt()) / (2.0 * rho));
        let theta = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();

        // Z-update: project onto the constraint set, then shrink.
        let z_prev = z.clone();
        let mut v = project_block_toeplitz(&(&theta + &u), d, w);
        soft_threshold_offdiag(&mut v, lambda / rho);
        z = v;

        u += &theta - &z;

        let primal = (&theta - &z).norm();
        let dual = (&z - &z_prev).norm() * rho;
        if primal < tol * n as f64 && dual < tol * n as f64 {
            converged = true;
            break;
        }
    }
    let (precision, ridge_added) = ensure_positive_definite(z);
    AdmmOutcome {
        precision,
        converged,
        iterations,
        ridge_added,
    }
}
