//! Dense reference kernels for small instances.
//!
//! Everything here exists so the sparse/iterative paths can be checked against
//! an independent implementation: dense Cholesky block elimination for the
//! saddle point solution, and a Jacobi eigenvalue sweep for the Schur
//! complement spectrum. None of it touches the sparse solver code paths.

use crate::sparse::{LinAlgError, SparseMatrix};

/// Hard cap on total dofs (velocity + pressure) for the dense oracle.
pub const DENSE_ORACLE_CAP: usize = 2000;

/// In-place lower Cholesky factorization of a row-major dense SPD matrix.
pub fn cholesky_factor(a: &mut [f64], n: usize) -> Result<(), LinAlgError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(LinAlgError::NotSpd);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // zero the strict upper triangle so the factor is unambiguous
    for i in 0..n {
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves L L^T x = b given the factor from [`cholesky_factor`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// One-shot dense SPD solve (factor + solve).
pub fn solve_spd_dense(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
    let mut l = a.to_vec();
    cholesky_factor(&mut l, n)?;
    Ok(cholesky_solve(&l, n, b))
}

/// Eigenvalues of a symmetric dense matrix by cyclic Jacobi rotations,
/// returned in ascending order.
pub fn sym_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    sym_eigen(a, n).into_iter().map(|(lambda, _)| lambda).collect()
}

/// Eigen decomposition of a symmetric dense matrix by cyclic Jacobi
/// rotations: (eigenvalue, eigenvector) pairs in ascending order.
pub fn sym_eigen(a: &[f64], n: usize) -> Vec<(f64, Vec<f64>)> {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            (
                m[j * n + j],
                (0..n).map(|i| v[i * n + j]).collect::<Vec<f64>>(),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs
}

/// Reference solution of the discrete saddle point system by dense block
/// elimination. The pressure is returned with zero mean in the `Mp` inner
/// product. Intended as ground truth for solver tests; rejects systems with
/// more than [`DENSE_ORACLE_CAP`] total dofs.
pub fn dense_oracle_solve(
    a: &SparseMatrix,
    b: &SparseMatrix,
    mp: &SparseMatrix,
    f_vec: &[f64],
    g_vec: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LinAlgError> {
    let n_v = a.n_rows();
    let n_p = b.n_rows();
    if n_v + n_p > DENSE_ORACLE_CAP {
        return Err(LinAlgError::TooLarge(n_v + n_p, DENSE_ORACLE_CAP));
    }
    let oracle = DenseOracle::build(a, b, mp, f_vec, g_vec)?;
    Ok((oracle.u_h, oracle.p_h))
}

/// Dense Schur complement data for one small discretization.
pub struct DenseOracle {
    pub n_v: usize,
    pub n_p: usize,
    /// Exact discrete solution pair.
    pub u_h: Vec<f64>,
    pub p_h: Vec<f64>,
    /// Extreme singular values of the mixed form: sqrt of the extreme
    /// nonzero eigenvalues of the Schur complement.
    pub m_h: f64,
    pub big_m_h: f64,
    /// Dense B A^{-1} B^T (the Schur complement as a coefficient matrix).
    pub s_mat: Vec<f64>,
    /// Generalized eigenpairs of S q = lambda Mp q, ascending; the first is
    /// the constant-pressure kernel.
    pub eigen: Vec<(f64, Vec<f64>)>,
    a_factor: Vec<f64>,
    mp_factor: Vec<f64>,
    mp_dense: Vec<f64>,
    mp_one: Vec<f64>,
    volume: f64,
    b_dense: Vec<f64>,
}

impl DenseOracle {
    pub fn build(
        a: &SparseMatrix,
        b: &SparseMatrix,
        mp: &SparseMatrix,
        f_vec: &[f64],
        g_vec: &[f64],
    ) -> Result<Self, LinAlgError> {
        let n_v = a.n_rows();
        let n_p = b.n_rows();
        if n_v + n_p > DENSE_ORACLE_CAP {
            return Err(LinAlgError::TooLarge(n_v + n_p, DENSE_ORACLE_CAP));
        }
        let mut a_factor = a.to_dense();
        cholesky_factor(&mut a_factor, n_v)?;
        let b_dense = b.to_dense();
        let mp_dense = mp.to_dense();
        let mut mp_factor = mp_dense.clone();
        cholesky_factor(&mut mp_factor, n_p)?;
        let mp_one: Vec<f64> = (0..n_p)
            .map(|i| (0..n_p).map(|j| mp_dense[i * n_p + j]).sum())
            .collect();
        let volume: f64 = mp_one.iter().sum();

        // S = B A^{-1} B^T, one velocity solve per pressure dof.
        let mut s_mat = vec![0.0; n_p * n_p];
        for j in 0..n_p {
            let bt_col: Vec<f64> = (0..n_v).map(|i| b_dense[j * n_v + i]).collect();
            let w = cholesky_solve(&a_factor, n_v, &bt_col);
            for i in 0..n_p {
                let mut s = 0.0;
                for k in 0..n_v {
                    s += b_dense[i * n_v + k] * w[k];
                }
                s_mat[i * n_p + j] = s;
            }
        }
        // symmetrize roundoff
        for i in 0..n_p {
            for j in i + 1..n_p {
                let v = 0.5 * (s_mat[i * n_p + j] + s_mat[j * n_p + i]);
                s_mat[i * n_p + j] = v;
                s_mat[j * n_p + i] = v;
            }
        }

        // rhs = B A^{-1} f - g
        let a_inv_f = cholesky_solve(&a_factor, n_v, f_vec);
        let mut rhs = vec![0.0; n_p];
        for i in 0..n_p {
            let mut s = 0.0;
            for k in 0..n_v {
                s += b_dense[i * n_v + k] * a_inv_f[k];
            }
            rhs[i] = s - g_vec[i];
        }

        // The constant pressure spans the kernel of S; shift it away with a
        // rank-one term that is invisible on the complement of the kernel.
        let mut s_shift = s_mat.clone();
        let shift = {
            let diag_scale: f64 =
                (0..n_p).map(|i| s_mat[i * n_p + i]).sum::<f64>() / n_p as f64;
            diag_scale.max(1e-30) / (volume * volume)
        };
        for i in 0..n_p {
            for j in 0..n_p {
                s_shift[i * n_p + j] += shift * mp_one[i] * mp_one[j];
            }
        }
        let mut p_h = solve_spd_dense(&s_shift, n_p, &rhs)?;
        // project to zero Mp-mean
        let mean = crate::sparse::dot(&p_h, &mp_one).unwrap() / volume;
        for v in p_h.iter_mut() {
            *v -= mean;
        }

        // u = A^{-1}(f - B^T p)
        let mut f_minus = f_vec.to_vec();
        for i in 0..n_p {
            for k in 0..n_v {
                f_minus[k] -= b_dense[i * n_v + k] * p_h[i];
            }
        }
        let u_h = cholesky_solve(&a_factor, n_v, &f_minus);

        // Generalized spectrum of S q = lambda Mp q via the Cholesky congruence
        // C = L^{-1} S L^{-T}; its smallest eigenvalue is the kernel's zero.
        let c = {
            let mut c = vec![0.0; n_p * n_p];
            // columns of L^{-T}: solve L^T y = e_j, then S y, then L^{-1}
            for j in 0..n_p {
                // y = L^{-T} e_j  (back substitution)
                let mut y = vec![0.0; n_p];
                y[j] = 1.0;
                for i in (0..n_p).rev() {
                    let mut s = y[i];
                    for k in i + 1..n_p {
                        s -= mp_factor[k * n_p + i] * y[k];
                    }
                    y[i] = s / mp_factor[i * n_p + i];
                }
                let mut sy = vec![0.0; n_p];
                for i in 0..n_p {
                    let mut s = 0.0;
                    for k in 0..n_p {
                        s += s_mat[i * n_p + k] * y[k];
                    }
                    sy[i] = s;
                }
                // z = L^{-1} (S y)  (forward substitution)
                for i in 0..n_p {
                    let mut s = sy[i];
                    for k in 0..i {
                        s -= mp_factor[i * n_p + k] * sy[k];
                    }
                    sy[i] = s / mp_factor[i * n_p + i];
                }
                for i in 0..n_p {
                    c[i * n_p + j] = sy[i];
                }
            }
            for i in 0..n_p {
                for j in i + 1..n_p {
                    let v = 0.5 * (c[i * n_p + j] + c[j * n_p + i]);
                    c[i * n_p + j] = v;
                    c[j * n_p + i] = v;
                }
            }
            c
        };
        let eigen: Vec<(f64, Vec<f64>)> = sym_eigen(&c, n_p)
            .into_iter()
            .map(|(lambda, y)| {
                // map back to a generalized eigenvector: q = L^{-T} y
                let mut q = y;
                for i in (0..n_p).rev() {
                    let mut s = q[i];
                    for k in i + 1..n_p {
                        s -= mp_factor[k * n_p + i] * q[k];
                    }
                    q[i] = s / mp_factor[i * n_p + i];
                }
                (lambda, q)
            })
            .collect();
        // eigen[0] ~ 0 is the constant-pressure kernel
        let m_h = eigen[1].0.max(0.0).sqrt();
        let big_m_h = eigen[n_p - 1].0.max(0.0).sqrt();

        Ok(DenseOracle {
            n_v,
            n_p,
            u_h,
            p_h,
            m_h,
            big_m_h,
            s_mat,
            eigen,
            a_factor,
            mp_factor,
            mp_dense,
            mp_one,
            volume,
            b_dense,
        })
    }

    pub fn from_disc(disc: &crate::fem::StokesDiscretization) -> Result<Self, LinAlgError> {
        Self::build(&disc.a, &disc.b, &disc.mp, &disc.f_vec, &disc.g_vec)
    }

    /// S_h q in the Mp representation: Mp^{-1} B A^{-1} B^T q, mean-zero.
    pub fn apply_schur(&self, q: &[f64]) -> Vec<f64> {
        let n_p = self.n_p;
        let mut sq = vec![0.0; n_p];
        for i in 0..n_p {
            let mut s = 0.0;
            for k in 0..n_p {
                s += self.s_mat[i * n_p + k] * q[k];
            }
            sq[i] = s;
        }
        let mut r = cholesky_solve(&self.mp_factor, n_p, &sq);
        let mean = crate::sparse::dot(&r, &self.mp_one).unwrap() / self.volume;
        for v in r.iter_mut() {
            *v -= mean;
        }
        r
    }

    /// A^{-1} B^T q (dense path).
    pub fn a_inv_bt(&self, q: &[f64]) -> Vec<f64> {
        let mut btq = vec![0.0; self.n_v];
        for i in 0..self.n_p {
            for k in 0..self.n_v {
                btq[k] += self.b_dense[i * self.n_v + k] * q[i];
            }
        }
        cholesky_solve(&self.a_factor, self.n_v, &btq)
    }

    /// || q ||_{S_h} = (q^T B A^{-1} B^T q)^{1/2}.
    pub fn schur_norm(&self, q: &[f64]) -> f64 {
        let n_p = self.n_p;
        let mut s = 0.0;
        for i in 0..n_p {
            for k in 0..n_p {
                s += q[i] * self.s_mat[i * n_p + k] * q[k];
            }
        }
        s.max(0.0).sqrt()
    }

    /// L2 (Mp) norm of a pressure coefficient vector.
    pub fn mp_norm(&self, q: &[f64]) -> f64 {
        let n_p = self.n_p;
        let mut s = 0.0;
        for i in 0..n_p {
            for k in 0..n_p {
                s += q[i] * self.mp_dense[i * n_p + k] * q[k];
            }
        }
        s.max(0.0).sqrt()
    }
}
