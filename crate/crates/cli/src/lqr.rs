//! Quadratic comparison candidate from the linearized closed loop: finite
//! difference Jacobians at the equilibrium, then an LQR Riccati solution by
//! Kleinman iteration started from a Bass stabilizing gain.

use anyhow::{bail, ensure, Context};
use nalgebra::{DMatrix, DVector};
use polyc_core::envs::{ControlSystem, EpisodeClock};
use polyc_core::lyapunov::QuadraticCandidate;

const FD_STEP: f64 = 1e-5;
const MAX_KLEINMAN_ITERS: usize = 100;

/// Continuous-time `x' = A x + B a` around the equilibrium, in policy-action coordinates.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Central differences of one discrete step, turned into rates by `(J - I) / dt`.
pub fn linearize(env: &dyn ControlSystem, clock: &EpisodeClock) -> anyhow::Result<Linearization> {
    let spec = env.spec();
    let (n, m, dt) = (spec.state_dim, spec.action_dim, spec.dt);
    let x0 = &spec.equilibrium;
    let u0 = &spec.equilibrium_action;
    let next = |x: &[f64], a: &[f64]| -> anyhow::Result<Vec<f64>> {
        Ok(env.step(clock, x, &env.control(a))?.state)
    };
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let (mut xp, mut xm) = (x0.clone(), x0.clone());
        xp[j] += FD_STEP;
        xm[j] -= FD_STEP;
        let (fp, fm) = (next(&xp, u0)?, next(&xm, u0)?);
        for i in 0..n {
            let jac = (fp[i] - fm[i]) / (2.0 * FD_STEP);
            a[(i, j)] = (jac - f64::from(u8::from(i == j))) / dt;
        }
    }
    let mut b = DMatrix::zeros(n, m);
    for j in 0..m {
        let (mut up, mut um) = (u0.clone(), u0.clone());
        up[j] += FD_STEP;
        um[j] -= FD_STEP;
        let (fp, fm) = (next(x0, &up)?, next(x0, &um)?);
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * FD_STEP) / dt;
        }
    }
    ensure!(a.iter().chain(b.iter()).all(|v| v.is_finite()), "linearization produced non-finite entries");
    Ok(Linearization { a, b })
}

/// Solves `M X + X M^T = C` through its Kronecker form.
pub fn solve_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> anyhow::Result<DMatrix<f64>> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let system = eye.kronecker(m) + m.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .context("Lyapunov equation is singular (eigenvalues of M pair to zero)")?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Gain with `A - B K` Hurwitz: `K = B^T Z^{-1}` where
/// `(A + mu I) Z + Z (A + mu I)^T = 2 B B^T` and `mu` exceeds every `-Re(lambda(A))`.
pub fn bass_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> anyhow::Result<DMatrix<f64>> {
    let n = a.nrows();
    let mu = a.norm() + 1.0;
    let shifted = a + DMatrix::<f64>::identity(n, n) * mu;
    let z = solve_lyapunov(&shifted, &(b * b.transpose() * 2.0))?;
    let z_inv = z
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .context("pair (A, B) is not stabilizable: controllability Gramian is not positive definite")?;
    Ok(b.transpose() * z_inv)
}

#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
}

/// Policy iteration on the continuous algebraic Riccati equation
/// `A^T P + P A - P B R^{-1} B^T P + Q = 0`.
pub fn kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: DMatrix<f64>,
) -> anyhow::Result<LqrSolution> {
    let r_inv = r.clone().try_inverse().context("R must be invertible")?;
    let mut k = k0;
    for iter in 1..=MAX_KLEINMAN_ITERS {
        let closed = a - b * &k;
        if !is_hurwitz(&closed) {
            bail!("Kleinman iteration {iter}: closed loop is not Hurwitz");
        }
        let cost = q + k.transpose() * r * &k;
        let p = solve_lyapunov(&closed.transpose(), &(-cost))?;
        let k_next = &r_inv * b.transpose() * &p;
        let change = (&k_next - &k).norm();
        k = k_next;
        if change <= 1e-10 * (1.0 + k.norm()) {
            return Ok(LqrSolution { p, k, iterations: iter });
        }
    }
    bail!("Kleinman iteration did not converge in {MAX_KLEINMAN_ITERS} steps")
}

pub fn riccati_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let r_inv = r.clone().try_inverse().expect("invertible R");
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

/// `V(x) = (x - x_eq)^T P (x - x_eq)` for the LQR solution with `Q = I`, `R = I`.
pub fn lqr_candidate(env: &dyn ControlSystem, clock: &EpisodeClock) -> anyhow::Result<QuadraticCandidate> {
    let lin = linearize(env, clock)?;
    let (n, m) = (lin.a.nrows(), lin.b.ncols());
    let q = DMatrix::<f64>::identity(n, n);
    let r = DMatrix::<f64>::identity(m, m);
    let k0 = if is_hurwitz(&lin.a) {
        DMatrix::zeros(m, n)
    } else {
        bass_gain(&lin.a, &lin.b)?
    };
    let sol = kleinman(&lin.a, &lin.b, &q, &r, k0)?;
    let p = (0..n).map(|i| (0..n).map(|j| sol.p[(i, j)]).collect()).collect();
    Ok(QuadraticCandidate {
        p,
        center: Some(env.spec().equilibrium.clone()),
    })
}
