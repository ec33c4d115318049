//! Dense reference for the fast solver.
//!
//! Builds `S` and the BCCB matrix `H` explicitly and solves the normal
//! equations `(H^H S^H S H + 2 tau I) x = H^H S^H y + 2 tau x_prior` by
//! Cholesky. Only for small grids.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::KernelChoice;
use crate::solver::{FsrSolver, PriorMode, SolverConfig};
use crate::spectral::{inverse_fft, FourierEngine};
use crate::volume::{ComplexVolume, Decimation, Grid3};

/// Largest HR voxel count the dense path accepts.
pub const DENSE_LIMIT: usize = 4096;

pub struct DenseOperators {
    pub hr: Grid3,
    pub lr: Grid3,
    pub d: Decimation,
    /// `N_l x N_h` 0/1 selection matrix.
    pub s: DMatrix<f64>,
    /// `N_h x N_h` circular convolution matrix.
    pub h: DMatrix<Complex64>,
    // rows of H picked by S, i.e. the matrix S H
    sh: DMatrix<Complex64>,
}

fn guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::SizeGuard { voxels: n, limit: DENSE_LIMIT })
    } else {
        Ok(())
    }
}

pub fn build_dense(hr: Grid3, cfg: &SolverConfig) -> Result<DenseOperators> {
    guard(hr.len())?;
    let lr = hr.decimated(cfg.d)?;
    let spectrum = cfg.kernel.spectrum(&hr, cfg.d)?;
    let nh = hr.len();

    // Impulse response h with F(h * x) = spectrum . F x under the unitary DFT.
    let impulse = inverse_fft(&ComplexVolume::new(hr, spectrum.values().to_vec())?)
        .scaled(Complex64::new(1.0 / (nh as f64).sqrt(), 0.0));
    let [m, n, s] = hr.dims();
    let h = DMatrix::from_fn(nh, nh, |r, c| {
        let (ri, rj, rk) = hr.coords(r);
        let (ci, cj, ck) = hr.coords(c);
        impulse.get((ri + m - ci) % m, (rj + n - cj) % n, (rk + s - ck) % s)
    });

    let [dr, dc, ds] = cfg.d.rates();
    let mut sel = DMatrix::<f64>::zeros(lr.len(), nh);
    let mut picked = Vec::with_capacity(lr.len());
    for k in 0..lr.s() {
        for j in 0..lr.n() {
            for i in 0..lr.m() {
                let col = hr.index(i * dr, j * dc, k * ds);
                sel[(lr.index(i, j, k), col)] = 1.0;
                picked.push(col);
            }
        }
    }
    let sh = DMatrix::from_fn(lr.len(), nh, |r, c| h[(picked[r], c)]);
    Ok(DenseOperators { hr, lr, d: cfg.d, s: sel, h, sh })
}

fn to_vector(x: &ComplexVolume) -> DVector<Complex64> {
    DVector::from_column_slice(x.data())
}

impl DenseOperators {
    pub fn sh(&self) -> &DMatrix<Complex64> {
        &self.sh
    }

    /// `S H x` by dense matrix-vector product.
    pub fn apply_sh(&self, x: &ComplexVolume) -> Result<ComplexVolume> {
        self.hr.ensure_same(x.grid(), "dense apply_SH")?;
        let out = &self.sh * to_vector(x);
        ComplexVolume::new(self.lr, out.as_slice().to_vec())
    }

    /// `H^H S^H S H + 2 tau I`.
    pub fn system_matrix(&self, tau: f64) -> DMatrix<Complex64> {
        let mut a = self.sh.adjoint() * &self.sh;
        for i in 0..a.nrows() {
            a[(i, i)] += Complex64::new(2.0 * tau, 0.0);
        }
        a
    }
}

/// Direct solution of the Tikhonov normal equations.
pub fn dense_solve(y: &ComplexVolume, prior: &ComplexVolume, ops: &DenseOperators, tau: f64) -> Result<ComplexVolume> {
    guard(ops.hr.len())?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param(format!("tau must be > 0, got {tau}")));
    }
    ops.lr.ensure_same(y.grid(), "dense_solve data")?;
    ops.hr.ensure_same(prior.grid(), "dense_solve prior")?;
    let a = ops.system_matrix(tau);
    let rhs = ops.sh.adjoint() * to_vector(y) + to_vector(prior) * Complex64::new(2.0 * tau, 0.0);
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Factorization("system matrix is not positive definite".into()))?;
    let x = chol.solve(&rhs);
    ComplexVolume::new(ops.hr, x.as_slice().to_vec())
}

/// One row of the oracle comparison matrix.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub hr: Grid3,
    pub d: Decimation,
    pub kernel: KernelChoice,
    pub tau: f64,
    /// `||x_fast - x_dense|| / ||x_dense||`
    pub rel_error: f64,
}

pub const ORACLE_GRIDS: [[usize; 3]; 4] = [[4, 4, 4], [6, 6, 6], [8, 8, 8], [8, 6, 4]];
pub const ORACLE_RATES: [[usize; 3]; 3] = [[2, 1, 1], [2, 2, 1], [2, 2, 2]];
pub const ORACLE_TAUS: [f64; 3] = [1e-3, 0.05, 1.0];

/// Every grid x rate pair with the ideal and matched Gaussian kernels at each oracle tau.
pub fn oracle_matrix(grids: &[[usize; 3]], rates: &[[usize; 3]]) -> Result<Vec<(Grid3, Decimation, KernelChoice, f64)>> {
    let mut cases = Vec::new();
    for g in grids {
        let grid = Grid3::cube(g[0], g[1], g[2])?;
        for r in rates {
            let d = Decimation::new(r[0], r[1], r[2])?;
            d.check_divides(&grid)?;
            for kernel in [KernelChoice::Ideal, KernelChoice::gaussian_matched(d)] {
                for tau in ORACLE_TAUS {
                    cases.push((grid, d, kernel, tau));
                }
            }
        }
    }
    Ok(cases)
}

/// The standard comparison: 4 grids x 3 rates x 2 kernels x 3 taus.
pub fn default_oracle_matrix() -> Vec<(Grid3, Decimation, KernelChoice, f64)> {
    oracle_matrix(&ORACLE_GRIDS, &ORACLE_RATES).expect("static oracle matrix")
}

/// Runs fast and dense solvers on a random instance of one configuration.
pub fn compare_case(
    hr: Grid3,
    d: Decimation,
    kernel: KernelChoice,
    tau: f64,
    seed: u64,
    break_constant: bool,
) -> Result<OracleCase> {
    let cfg = SolverConfig::new(tau, kernel, d, PriorMode::Trilinear)?;
    let lr = hr.decimated(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = ComplexVolume::new(
        lr,
        (0..lr.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
    )?;
    let mut solver = FsrSolver::new(hr, &cfg)?;
    if break_constant {
        solver = solver.with_broken_constant();
    }
    let mut engine = FourierEngine::new();
    let prior = solver.build_prior(&mut engine, &y)?;
    let (fast, _) = solver.solve_with_prior(&mut engine, &y, &prior)?;
    let ops = build_dense(hr, &cfg)?;
    let dense = dense_solve(&y, &prior, &ops, tau)?;
    let rel_error = fast.distance(&dense)? / dense.norm();
    Ok(OracleCase { hr, d, kernel, tau, rel_error })
}

/// Pass threshold on the fast-vs-dense relative error.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub cases: Vec<OracleCase>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Compares fast and dense solutions over `cases`, one random instance each.
pub fn run_oracle_matrix(
    cases: &[(Grid3, Decimation, KernelChoice, f64)],
    seed: u64,
    break_constant: bool,
) -> Result<OracleCheck> {
    let results = cases
        .iter()
        .enumerate()
        .map(|(i, &(hr, d, kernel, tau))| compare_case(hr, d, kernel, tau, seed.wrapping_add(i as u64), break_constant))
        .collect::<Result<Vec<_>>>()?;
    let max_rel_error = results.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    let passed = results.iter().all(|c| c.rel_error <= ORACLE_TOLERANCE);
    Ok(OracleCheck { cases: results, max_rel_error, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::forward_fft;

    fn cfg(d: Decimation, kernel: KernelChoice) -> SolverConfig {
        SolverConfig::new(0.05, kernel, d, PriorMode::Trilinear).unwrap()
    }

    fn random_volume(grid: Grid3, seed: u64) -> ComplexVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexVolume::new(grid, data).unwrap()
    }

    #[test]
    fn trivial_operators() {
        let hr = Grid3::cube(3, 2, 2).unwrap();
        let ops = build_dense(hr, &cfg(Decimation::IDENTITY, KernelChoice::Identity)).unwrap();
        assert_eq!(ops.s, DMatrix::identity(12, 12));
        assert!((ops.h.clone() - DMatrix::<Complex64>::identity(12, 12)).norm() < 1e-14);
    }

    #[test]
    fn selection_structure() {
        let hr = Grid3::cube(6, 4, 2).unwrap();
        let d = Decimation::new(3, 2, 1).unwrap();
        let ops = build_dense(hr, &cfg(d, KernelChoice::Ideal)).unwrap();
        for r in 0..ops.s.nrows() {
            assert_eq!(ops.s.row(r).iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(ops.s.row(r).sum(), 1.0);
        }
        let sst = &ops.s * ops.s.transpose();
        assert_eq!(sst, DMatrix::identity(ops.lr.len(), ops.lr.len()));
        let sts = ops.s.transpose() * &ops.s;
        assert_eq!(sts.trace(), ops.lr.len() as f64);
        for r in 0..sts.nrows() {
            for c in 0..sts.ncols() {
                if r != c {
                    assert_eq!(sts[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn h_is_diagonalised_by_the_dft() {
        let hr = Grid3::cube(4, 3, 2).unwrap();
        let d = Decimation::new(2, 1, 1).unwrap();
        for kernel in [KernelChoice::Ideal, KernelChoice::Gaussian { fwhm: [1.7, 1.2, 0.9] }] {
            let c = cfg(d, kernel);
            let ops = build_dense(hr, &c).unwrap();
            let spec = kernel.spectrum(&hr, d).unwrap();
            // columns of F: F e_c computed with the fast transform
            let n = hr.len();
            let mut fmat = DMatrix::<Complex64>::zeros(n, n);
            for col in 0..n {
                let mut e = vec![Complex64::default(); n];
                e[col] = Complex64::new(1.0, 0.0);
                let fe = forward_fft(&ComplexVolume::new(hr, e).unwrap());
                fmat.set_column(col, &DVector::from_column_slice(fe.data()));
            }
            let diag = DMatrix::from_diagonal(&DVector::from_column_slice(spec.values()));
            let rebuilt = fmat.adjoint() * diag * &fmat;
            let err = (&rebuilt - &ops.h).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn dense_matches_fast_apply() {
        let hr = Grid3::cube(6, 4, 4).unwrap();
        let d = Decimation::new(2, 2, 2).unwrap();
        for kernel in [KernelChoice::Ideal, KernelChoice::gaussian_matched(d)] {
            let ops = build_dense(hr, &cfg(d, kernel)).unwrap();
            let x = random_volume(hr, 3);
            let dense = ops.apply_sh(&x).unwrap();
            let fast = crate::forward::apply_sh(&x, &crate::forward::DegradationConfig::noiseless(d, kernel)).unwrap();
            assert!(fast.distance(&dense).unwrap() / dense.norm() < 1e-10);
        }
    }

    #[test]
    fn system_is_hpd_with_floor_two_tau() {
        let hr = Grid3::cube(4, 4, 2).unwrap();
        let d = Decimation::new(2, 2, 1).unwrap();
        let tau = 0.05;
        let ops = build_dense(hr, &cfg(d, KernelChoice::gaussian_matched(d))).unwrap();
        let a = ops.system_matrix(tau);
        assert!((&a - a.adjoint()).norm() < 1e-12);
        let eig = a.symmetric_eigenvalues();
        assert!(eig.iter().all(|l| *l >= 2.0 * tau - 1e-12));
    }

    #[test]
    fn dense_solution_properties() {
        let hr = Grid3::cube(4, 4, 4).unwrap();
        let d = Decimation::new(2, 2, 2).unwrap();
        let ops = build_dense(hr, &cfg(d, KernelChoice::Ideal)).unwrap();
        let y = random_volume(ops.lr, 1);
        let prior = random_volume(hr, 2);
        let tau = 0.05;
        let x = dense_solve(&y, &prior, &ops, tau).unwrap();
        let a = ops.system_matrix(tau);
        let rhs = ops.sh().adjoint() * to_vector(&y) + to_vector(&prior) * Complex64::new(2.0 * tau, 0.0);
        let resid = (&a * to_vector(&x) - &rhs).norm() / rhs.norm();
        assert!(resid < 1e-10);

        let far = dense_solve(&y, &prior, &ops, 1e8).unwrap();
        assert!(far.distance(&prior).unwrap() / prior.norm() < 1e-6);
        assert!(dense_solve(&y, &prior, &ops, 0.0).is_err());
    }

    #[test]
    fn matches_fast_solver_8cubed() {
        let hr = Grid3::cube(8, 8, 8).unwrap();
        let d = Decimation::new(2, 2, 2).unwrap();
        let case = compare_case(hr, d, KernelChoice::Ideal, 0.05, 42, false).unwrap();
        assert!(case.rel_error <= 1e-8, "{}", case.rel_error);
    }

    #[test]
    fn size_guard() {
        let hr = Grid3::cube(17, 16, 16).unwrap();
        match build_dense(hr, &cfg(Decimation::IDENTITY, KernelChoice::Identity)) {
            Err(Error::SizeGuard { voxels, .. }) => assert_eq!(voxels, 17 * 16 * 16),
            Err(e) => panic!("wrong error {e}"),
            Ok(_) => panic!("guard did not trigger"),
        }
    }
}
