//! Fixed-level Schur complement iterations: Uzawa, Uzawa gradient, and Uzawa
//! conjugate gradient.
//!
//! All three share the same step skeleton and differ only in how the
//! relaxation parameter is chosen. Pressure-space inner products are `Mp`
//! inner products, so residual norms agree with the continuous L2 norm. The
//! Schur complement is applied operator-style: one velocity solve and one
//! mass solve per application, never materialized. The constant pressure
//! spans the kernel of the mixed form under full Dirichlet data; every
//! residual and direction is projected `Mp`-orthogonal to it.

use thiserror::Error;

use crate::fem::StokesDiscretization;
use crate::sparse::{axpy, dot, LinAlgError, SpdSolver};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("zero or negative curvature in the Schur direction; inf-sup failure or constant-pressure leakage")]
    ZeroCurvature,
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
}

/// Which one-step process advances the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Fixed relaxation parameter; must lie in (0, 2/M^2).
    Uzawa { alpha0: f64 },
    /// Steepest descent on the Schur system.
    UzawaGradient,
    /// Conjugate gradients on the Schur system.
    UzawaConjugateGradient,
}

/// State of one fixed-level iteration. After `initial_step` the fields hold
/// `(u_1, p_0, q_1)` with `j = 1`; each `step` advances to
/// `(u_{j+1}, p_j, q_{j+1})` and increments `j`.
#[derive(Debug, Clone)]
pub struct IterState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Search direction, maintained by the conjugate gradient step.
    pub d: Vec<f64>,
    pub j: u32,
    pub alpha: f64,
    pub beta: f64,
}

/// One level's solver context: the discretization plus factorized velocity
/// and pressure-mass operators. Building it costs the factorizations once;
/// each iteration afterwards costs one velocity solve.
pub struct SchurContext<'a> {
    pub disc: &'a StokesDiscretization,
    a_solver: SpdSolver<'a>,
    mp_solver: SpdSolver<'a>,
}

impl<'a> SchurContext<'a> {
    pub fn new(disc: &'a StokesDiscretization) -> Result<Self, SolverError> {
        Ok(SchurContext {
            disc,
            a_solver: SpdSolver::new(&disc.a)?,
            mp_solver: SpdSolver::new(&disc.mp)?,
        })
    }

    /// Removes the constant-pressure component in the Mp inner product.
    pub fn project_mean_zero(&self, q: &mut [f64]) {
        let mean = dot(q, &self.disc.mp_one).expect("pressure length") / self.disc.volume;
        for v in q.iter_mut() {
            *v -= mean;
        }
    }

    /// L2 norm of a pressure vector: (q^T Mp q)^(1/2).
    pub fn mp_norm(&self, q: &[f64]) -> f64 {
        let mq = self.disc.mp.matvec(q).expect("pressure length");
        dot(q, &mq).unwrap().max(0.0).sqrt()
    }

    pub fn mp_inner(&self, q: &[f64], r: &[f64]) -> f64 {
        let mr = self.disc.mp.matvec(r).expect("pressure length");
        dot(q, &mr).unwrap()
    }

    /// The residual estimator driving the level change: ||q_j||.
    pub fn residual_norm(&self, state: &IterState) -> f64 {
        self.mp_norm(&state.q)
    }

    /// Constraint residual of a velocity iterate: solves
    /// `Mp q = B u - g`, then projects out the constant.
    fn constraint_residual(&self, u: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut rhs = self.disc.b.matvec(u)?;
        for (r, g) in rhs.iter_mut().zip(&self.disc.g_vec) {
            *r -= g;
        }
        let mut q = self.mp_solver.solve(&rhs)?;
        self.project_mean_zero(&mut q);
        Ok(q)
    }

    /// First step shared by all solvers: solve the velocity equation at the
    /// given pressure guess and form the constraint residual.
    pub fn initial_step(&self, p0: &[f64]) -> Result<IterState, SolverError> {
        let mut p = p0.to_vec();
        self.project_mean_zero(&mut p);
        let btp = self.disc.b.matvec_transpose(&p)?;
        let rhs: Vec<f64> = self
            .disc
            .f_vec
            .iter()
            .zip(&btp)
            .map(|(f, b)| f - b)
            .collect();
        let u = self.a_solver.solve(&rhs)?;
        let q = self.constraint_residual(&u)?;
        Ok(IterState {
            u,
            d: q.clone(),
            q,
            p,
            j: 1,
            alpha: 0.0,
            beta: 0.0,
        })
    }

    /// S_h q in the Mp representation: with `w = A^{-1} B^T q`,
    /// solve `Mp r = B w` and project. Self-adjoint in the Mp inner product.
    pub fn apply_schur(&self, q: &[f64]) -> Result<Vec<f64>, SolverError> {
        let btq = self.disc.b.matvec_transpose(q)?;
        let w = self.a_solver.solve(&btq)?;
        let bw = self.disc.b.matvec(&w)?;
        let mut r = self.mp_solver.solve(&bw)?;
        self.project_mean_zero(&mut r);
        Ok(r)
    }

    /// Executes exactly one iteration of the chosen solver.
    pub fn step(&self, state: &mut IterState, kind: SolverKind) -> Result<(), SolverError> {
        let dir: &[f64] = match kind {
            SolverKind::UzawaConjugateGradient => &state.d,
            _ => &state.q,
        };
        // velocity correction: a(h, v) = -b(v, dir)
        let bt_dir = self.disc.b.matvec_transpose(dir)?;
        let mut h = self.a_solver.solve(&bt_dir)?;
        for v in h.iter_mut() {
            *v = -*v;
        }
        // (dir, q)_{S_h} = -b(h, q), reusing the computed correction
        let bh = self.disc.b.matvec(&h)?;
        let curvature = -dot(&bh, &state.q)?;
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(SolverError::ZeroCurvature);
        }
        let q_norm2 = self.mp_inner(&state.q, &state.q);
        let alpha = match kind {
            SolverKind::Uzawa { alpha0 } => alpha0,
            _ => {
                if curvature <= 1e-300 {
                    return Err(SolverError::ZeroCurvature);
                }
                q_norm2 / curvature
            }
        };
        if !alpha.is_finite() {
            return Err(SolverError::ZeroCurvature);
        }

        let dir = dir.to_vec();
        axpy(alpha, &dir, &mut state.p);
        axpy(alpha, &h, &mut state.u);
        let q_new = self.constraint_residual(&state.u)?;
        if let SolverKind::UzawaConjugateGradient = kind {
            let q_new_norm2 = self.mp_inner(&q_new, &q_new);
            let beta = q_new_norm2 / q_norm2.max(1e-300);
            for (d, qn) in state.d.iter_mut().zip(&q_new) {
                *d = qn + beta * *d;
            }
            state.beta = beta;
        }
        state.q = q_new;
        state.alpha = alpha;
        state.j += 1;
        Ok(())
    }

    /// Extreme singular values (m_h, M_h) of the mixed form: square roots of
    /// the extreme eigenvalues of S_h on mean-zero pressures. Estimated by a
    /// Lanczos iteration in the Mp inner product from a deterministic index
    /// ramp start (the constant vector is the kernel and would project to
    /// zero), to a relative tolerance of 1e-6.
    pub fn estimate_spectrum(&self) -> Result<(f64, f64), SolverError> {
        let n = self.disc.dofs.n_pressure;
        let max_dim = 200.min(n.saturating_sub(1)).max(1);
        let rel_tol = 1e-6;

        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        let mut v: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        self.project_mean_zero(&mut v);
        let norm = self.mp_norm(&v);
        if norm == 0.0 {
            return Err(LinAlgError::ConvergenceFailure(0).into());
        }
        for x in v.iter_mut() {
            *x /= norm;
        }

        let mut prev: Option<(f64, f64)> = None;
        loop {
            let mut w = self.apply_schur(&v)?;
            let alpha = self.mp_inner(&w, &v);
            alphas.push(alpha);
            basis.push(v.clone());
            // full reorthogonalization in the Mp inner product
            for u in &basis {
                let c = self.mp_inner(&w, u);
                axpy(-c, u, &mut w);
            }
            for u in &basis {
                let c = self.mp_inner(&w, u);
                axpy(-c, u, &mut w);
            }
            self.project_mean_zero(&mut w);
            let beta = self.mp_norm(&w);

            let (lo, hi) = tridiag_extreme_eigenvalues(&alphas, &betas);
            let converged = prev.is_some_and(|(plo, phi)| {
                (lo - plo).abs() <= rel_tol * lo.abs().max(1e-300)
                    && (hi - phi).abs() <= rel_tol * hi.abs().max(1e-300)
            });
            if beta <= 1e-13 || (converged && alphas.len() >= 6) {
                if lo <= 0.0 {
                    return Err(LinAlgError::ConvergenceFailure(alphas.len()).into());
                }
                return Ok((lo.sqrt(), hi.sqrt()));
            }
            if alphas.len() >= max_dim {
                if beta <= 1e-8 || converged {
                    return Ok((lo.max(0.0).sqrt(), hi.max(0.0).sqrt()));
                }
                return Err(LinAlgError::ConvergenceFailure(alphas.len()).into());
            }
            betas.push(beta);
            for x in w.iter_mut() {
                *x /= beta;
            }
            v = w;
            prev = Some((lo, hi));
        }
    }

    /// Solves the decoupled Schur system `S_h p_h = B A^{-1} f - g` by
    /// conjugate gradients to 1e-12, then recovers the velocity.
    pub fn solve_schur_direct(&self) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let p0 = vec![0.0; self.disc.dofs.n_pressure];
        let mut state = self.initial_step(&p0)?;
        let scale = self.residual_norm(&state).max(1.0);
        let cap = 4 * self.disc.dofs.n_pressure + 200;
        let mut iterations = 0;
        while self.residual_norm(&state) > 1e-12 * scale {
            self.step(&mut state, SolverKind::UzawaConjugateGradient)?;
            iterations += 1;
            if iterations > cap {
                return Err(LinAlgError::Stagnation(iterations).into());
            }
        }
        Ok((state.u, state.p))
    }
}

/// Extreme eigenvalues of the symmetric tridiagonal matrix with diagonal
/// `alphas` and off-diagonal `betas`, by bisection on Sturm sequence counts.
fn tridiag_extreme_eigenvalues(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let n = alphas.len();
    debug_assert_eq!(betas.len() + 1, n);
    if n == 1 {
        return (alphas[0], alphas[0]);
    }
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { betas[i - 1].abs() } else { 0.0 }
            + if i < n - 1 { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
    }
    let count_below = |x: f64| -> usize {
        // number of eigenvalues strictly below x
        let mut count = 0;
        let mut d = alphas[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let denom = if d.abs() < 1e-300 {
                1e-300_f64.copysign(if d == 0.0 { 1.0 } else { d })
            } else {
                d
            };
            d = alphas[i] - x - betas[i - 1] * betas[i - 1] / denom;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let bisect = |target: usize, mut a: f64, mut b: f64| -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if count_below(mid) > target {
                b = mid;
            } else {
                a = mid;
            }
            if (b - a) <= 1e-14 * b.abs().max(a.abs()).max(1e-300) {
                break;
            }
        }
        0.5 * (a + b)
    };
    let smallest = bisect(0, lo - 1e-12, hi + 1e-12);
    let largest = bisect(n - 1, lo - 1e-12, hi + 1e-12);
    (smallest, largest)
}
