//! The cascadic multilevel driver.
//!
//! Runs the chosen level solver until the residual estimator drops below the
//! level-change threshold, prolongates the final pressure to the next level
//! through the nested-space embedding, and never returns to a coarse level.

use thiserror::Error;

use crate::fem::{assemble_stokes, energy_error, l2_pressure_error, ElementPair};
use crate::mesh::{build_initial_mesh, mesh_size, refine, Domain, Mesh, RefinementRule};
use crate::solution::ManufacturedSolution;
use crate::solvers::{SchurContext, SolverKind};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("prolongation hierarchy mismatch: {0}")]
    HierarchyMismatch(String),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Assembly(#[from] crate::fem::AssemblyError),
    #[error(transparent)]
    Solver(#[from] crate::solvers::SolverError),
}

/// Whether the level-change threshold scales with the mesh size or with the
/// scalar-Laplacian dof count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complexity {
    MeshSize,
    DofCount,
}

#[derive(Debug, Clone)]
pub struct CascadeConfig {
    pub domain: Domain,
    pub pair: ElementPair,
    pub refinement: RefinementRule,
    pub solver: SolverKind,
    /// Finest level k_max.
    pub levels: u32,
    /// First level on which iterations run.
    pub start_level: u32,
    pub c_lc: f64,
    /// Expected rate exponent s in the level-change condition.
    pub s: f64,
    pub complexity: Complexity,
    pub max_iters_per_level: u32,
}

impl CascadeConfig {
    pub fn new(
        domain: Domain,
        pair: ElementPair,
        refinement: RefinementRule,
        solver: SolverKind,
        levels: u32,
        c_lc: f64,
        s: f64,
        complexity: Complexity,
    ) -> Self {
        CascadeConfig {
            domain,
            pair,
            refinement,
            solver,
            levels,
            start_level: 1,
            c_lc,
            s,
            complexity,
            max_iters_per_level: 500,
        }
    }

    /// Square domain, P2-P0 pair, uniform refinement, first-order level
    /// change `||q|| <= h_k / 32`.
    pub fn preset_square_p2p0() -> Self {
        let mut cfg = CascadeConfig::new(
            Domain::UnitSquare,
            ElementPair::P2P0,
            RefinementRule::Uniform,
            SolverKind::UzawaConjugateGradient,
            8,
            1.0 / 32.0,
            1.0,
            Complexity::MeshSize,
        );
        cfg.start_level = 4;
        cfg
    }

    /// Square domain, Taylor-Hood pair, uniform refinement, second-order
    /// level change `||q|| <= h_k^2 / 128`.
    pub fn preset_square_taylor_hood() -> Self {
        let mut cfg = CascadeConfig::new(
            Domain::UnitSquare,
            ElementPair::TaylorHood,
            RefinementRule::Uniform,
            SolverKind::UzawaConjugateGradient,
            8,
            1.0 / 128.0,
            2.0,
            Complexity::MeshSize,
        );
        cfg.start_level = 4;
        cfg
    }

    /// L-shaped domain, Taylor-Hood pair, uniform refinement; the singular
    /// velocity limits the rate, so the level change tracks the dof count:
    /// `||q|| <= N_k^(-1/3) / 8`.
    pub fn preset_lshape_uniform() -> Self {
        let mut cfg = CascadeConfig::new(
            Domain::LShape,
            ElementPair::TaylorHood,
            RefinementRule::Uniform,
            SolverKind::UzawaConjugateGradient,
            8,
            1.0 / 8.0,
            1.0 / 3.0,
            Complexity::DofCount,
        );
        cfg.start_level = 4;
        cfg
    }

    /// L-shaped domain, Taylor-Hood pair, refinement graded toward the
    /// re-entrant corner with ratio 1/8, level change `||q|| <= N_k^(-1) / 8`.
    pub fn preset_lshape_graded() -> Self {
        let mut cfg = CascadeConfig::new(
            Domain::LShape,
            ElementPair::TaylorHood,
            RefinementRule::Graded {
                kappa: 0.125,
                singular_point: [0.0, 0.0],
            },
            SolverKind::UzawaConjugateGradient,
            9,
            1.0 / 8.0,
            1.0,
            Complexity::DofCount,
        );
        cfg.start_level = 4;
        cfg
    }

    fn validate(&self) -> Result<(), CascadeError> {
        if !(self.c_lc > 0.0) {
            return Err(CascadeError::InvalidConfig("C_lc must be positive".into()));
        }
        if !(self.s > 0.0) {
            return Err(CascadeError::InvalidConfig(
                "rate exponent s must be positive".into(),
            ));
        }
        if self.start_level < 1 || self.levels < self.start_level {
            return Err(CascadeError::InvalidConfig(
                "levels must satisfy k_max >= start_level >= 1".into(),
            ));
        }
        if let RefinementRule::Graded { kappa, .. } = self.refinement {
            if !(kappa > 0.0 && kappa <= 1.0) {
                return Err(CascadeError::InvalidConfig(
                    "graded ratio kappa must lie in (0, 1]".into(),
                ));
            }
        }
        if let SolverKind::Uzawa { alpha0 } = self.solver {
            if !(alpha0 > 0.0) {
                return Err(CascadeError::InvalidConfig(
                    "Uzawa relaxation alpha0 must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-level outcome: the row type of the experiment tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub k: u32,
    pub h_k: f64,
    /// Scalar Laplacian dof count N_k.
    pub n_k: usize,
    /// Solver steps taken on this level (the first solve of the level is the
    /// shared initial step, not counted).
    pub iterations: u32,
    pub err_u: f64,
    pub err_p: f64,
    pub rate_u: Option<f64>,
    pub rate_p: Option<f64>,
    pub final_residual: f64,
    /// Set when the iteration cap fired before the level-change criterion.
    pub hit_cap: bool,
}

/// The level-change threshold: `C_lc h_k^s` or `C_lc N_k^(-s)`.
pub fn level_change_threshold(cfg: &CascadeConfig, h_k: f64, n_k: usize) -> f64 {
    match cfg.complexity {
        Complexity::MeshSize => cfg.c_lc * h_k.powf(cfg.s),
        Complexity::DofCount => cfg.c_lc * (n_k as f64).powf(-cfg.s),
    }
}

/// Embeds a coarse pressure into the next (nested) level's pressure space.
///
/// P0 pressures are copied to the four children of each parent triangle;
/// P1 pressures keep their vertex values and fill each split-point vertex by
/// interpolating along the parent edge at the recorded split ratio. The
/// result is projected to zero mean on the fine level (a no-op up to
/// rounding, since the embedding preserves the integral).
pub fn prolong_pressure(
    p: &[f64],
    pair: ElementPair,
    coarse: &Mesh,
    fine: &Mesh,
) -> Result<Vec<f64>, CascadeError> {
    let parents = fine.parent_triangle.as_ref().ok_or_else(|| {
        CascadeError::HierarchyMismatch("fine mesh carries no parent links".into())
    })?;
    if fine.level != coarse.level + 1 || fine.n_triangles() != 4 * coarse.n_triangles() {
        return Err(CascadeError::HierarchyMismatch(format!(
            "fine level {} with {} triangles is not one refinement of coarse level {} with {}",
            fine.level,
            fine.n_triangles(),
            coarse.level,
            coarse.n_triangles()
        )));
    }
    let mut out = match pair {
        ElementPair::P2P0 => {
            if p.len() != coarse.n_triangles() {
                return Err(CascadeError::HierarchyMismatch(
                    "pressure vector does not match the coarse triangle count".into(),
                ));
            }
            parents.iter().map(|&parent| p[parent]).collect::<Vec<f64>>()
        }
        ElementPair::TaylorHood => {
            if p.len() != coarse.n_vertices() {
                return Err(CascadeError::HierarchyMismatch(
                    "pressure vector does not match the coarse vertex count".into(),
                ));
            }
            let mut out = vec![0.0; fine.n_vertices()];
            out[..p.len()].copy_from_slice(p);
            for (&(a, b), split) in &fine.edge_midpoints {
                out[split.vertex] = (1.0 - split.ratio) * p[a] + split.ratio * p[b];
            }
            out
        }
    };
    // mean-zero projection in the fine Mp inner product, via triangle areas
    let (integral, volume) = pressure_integral(&out, pair, fine);
    let mean = integral / volume;
    for v in out.iter_mut() {
        *v -= mean;
    }
    Ok(out)
}

fn pressure_integral(p: &[f64], pair: ElementPair, mesh: &Mesh) -> (f64, f64) {
    let mut integral = 0.0;
    let mut volume = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.triangle_area(t);
        volume += area;
        integral += match pair {
            ElementPair::P2P0 => area * p[t],
            ElementPair::TaylorHood => {
                let [a, b, c] = mesh.triangles[t];
                area * (p[a] + p[b] + p[c]) / 3.0
            }
        };
    }
    (integral, volume)
}

/// Runs the full cascade and reports one row per iterated level.
pub fn run_cascade(
    cfg: &CascadeConfig,
    ms: &ManufacturedSolution,
) -> Result<Vec<LevelReport>, CascadeError> {
    cfg.validate()?;

    let mut mesh = build_initial_mesh(cfg.domain);
    for _ in 1..cfg.start_level {
        mesh = refine(&mesh, cfg.refinement)?;
    }

    let mut reports = Vec::new();
    let mut carried_pressure: Option<Vec<f64>> = None;
    let mut coarse_mesh: Option<Mesh> = None;

    for k in cfg.start_level..=cfg.levels {
        let disc = assemble_stokes(&mesh, cfg.pair, ms)?;
        let ctx = SchurContext::new(&disc)?;

        if k == cfg.start_level {
            if let SolverKind::Uzawa { alpha0 } = cfg.solver {
                // assumption (A2): the fixed relaxation must sit inside the
                // stability window measured on the coarsest iterated level
                let (_, big_m) = ctx.estimate_spectrum()?;
                let limit = 2.0 / (big_m * big_m);
                if alpha0 >= limit {
                    return Err(CascadeError::InvalidConfig(format!(
                        "Uzawa alpha0 = {alpha0} outside (0, {limit:.6}) = (0, 2/M^2)"
                    )));
                }
            }
        }

        let p0 = match carried_pressure.take() {
            Some(p) => prolong_pressure(
                &p,
                cfg.pair,
                coarse_mesh.as_ref().expect("coarse mesh kept"),
                &mesh,
            )?,
            None => vec![0.0; disc.dofs.n_pressure],
        };

        let h_k = mesh_size(&mesh);
        let n_k = disc.dofs.n_free_scalar;
        let threshold = level_change_threshold(cfg, h_k, n_k);

        let mut state = ctx.initial_step(&p0)?;
        let mut iterations = 0u32;
        while ctx.residual_norm(&state) > threshold && iterations < cfg.max_iters_per_level {
            ctx.step(&mut state, cfg.solver)?;
            iterations += 1;
        }
        let final_residual = ctx.residual_norm(&state);
        let hit_cap = final_residual > threshold;

        reports.push(LevelReport {
            k,
            h_k,
            n_k,
            iterations,
            err_u: energy_error(&state.u, &disc, ms),
            err_p: l2_pressure_error(&state.p, &disc, ms),
            rate_u: None,
            rate_p: None,
            final_residual,
            hit_cap,
        });

        carried_pressure = Some(state.p);
        if k < cfg.levels {
            let fine = refine(&mesh, cfg.refinement)?;
            coarse_mesh = Some(std::mem::replace(&mut mesh, fine));
        }
    }

    compute_rates(&mut reports, cfg.complexity);
    Ok(reports)
}

/// Fills the rate columns. Mesh-size mode: `log2(e_{k-1} / e_k)`, matching a
/// halving h per level. Dof-count mode: the h-convention rate
/// `2 log(e_{k-1} / e_k) / log(N_k / N_{k-1})`, which reduces to the same
/// number on uniform hierarchies where N quadruples per level.
pub fn compute_rates(reports: &mut [LevelReport], complexity: Complexity) {
    for i in 1..reports.len() {
        let (prev, cur) = (reports[i - 1].clone(), &mut reports[i]);
        let rate = |e_prev: f64, e_cur: f64| -> Option<f64> {
            if e_prev <= 0.0 || e_cur <= 0.0 {
                return None;
            }
            Some(match complexity {
                Complexity::MeshSize => (e_prev / e_cur).log2(),
                Complexity::DofCount => {
                    2.0 * (e_prev / e_cur).ln() / (cur.n_k as f64 / prev.n_k as f64).ln()
                }
            })
        };
        cur.rate_u = rate(prev.err_u, cur.err_u);
        cur.rate_p = rate(prev.err_p, cur.err_p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solution::builtin_solution;

    fn table2_config(solver: SolverKind, levels: u32) -> CascadeConfig {
        CascadeConfig::new(
            Domain::UnitSquare,
            ElementPair::TaylorHood,
            RefinementRule::Uniform,
            solver,
            levels,
            1.0 / 16.0,
            2.0,
            Complexity::MeshSize,
        )
    }

    #[test]
    fn threshold_values_from_table_captions() {
        let cfg1 = CascadeConfig::new(
            Domain::UnitSquare,
            ElementPair::P2P0,
            RefinementRule::Uniform,
            SolverKind::UzawaGradient,
            8,
            1.0 / 16.0,
            1.0,
            Complexity::MeshSize,
        );
        assert_eq!(level_change_threshold(&cfg1, 2f64.powi(-4), 0), 1.0 / 256.0);

        let cfg2 = table2_config(SolverKind::UzawaGradient, 8);
        assert_eq!(
            level_change_threshold(&cfg2, 2f64.powi(-4), 0),
            2f64.powi(-12)
        );

        let cfg4 = CascadeConfig::new(
            Domain::LShape,
            ElementPair::TaylorHood,
            RefinementRule::Graded {
                kappa: 0.125,
                singular_point: [0.0, 0.0],
            },
            SolverKind::UzawaGradient,
            9,
            1.0 / 8.0,
            1.0,
            Complexity::DofCount,
        );
        assert!((level_change_threshold(&cfg4, 0.0, 1000) - 1.25e-4).abs() < 1e-19);
    }

    #[test]
    fn prolongation_embeds_p0_exactly() {
        let coarse = build_initial_mesh(Domain::UnitSquare);
        let fine = refine(&coarse, RefinementRule::Uniform).unwrap();
        // mean-zero coarse pressure
        let p = vec![0.5, -0.5, 0.5, -0.5];
        let fine_p = prolong_pressure(&p, ElementPair::P2P0, &coarse, &fine).unwrap();
        let parents = fine.parent_triangle.as_ref().unwrap();
        for (child, &parent) in parents.iter().enumerate() {
            assert!((fine_p[child] - p[parent]).abs() < 1e-15);
        }
        let zero = vec![0.0; 4];
        let fine_zero = prolong_pressure(&zero, ElementPair::P2P0, &coarse, &fine).unwrap();
        assert!(fine_zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prolongation_is_exact_for_p1_including_graded_splits() {
        let coarse = build_initial_mesh(Domain::LShape);
        let rule = RefinementRule::Graded {
            kappa: 0.125,
            singular_point: [0.0, 0.0],
        };
        let fine = refine(&coarse, rule).unwrap();
        // a linear function lies in the coarse and fine P1 spaces; its
        // prolongation must reproduce its fine nodal values exactly
        let f = |p: [f64; 2]| 0.7 * p[0] - 1.3 * p[1];
        let mut coarse_p: Vec<f64> = coarse.vertices.iter().map(|&v| f(v)).collect();
        // remove the mean so the projection is a no-op
        let (integral, volume) = super::pressure_integral(
            &coarse_p,
            ElementPair::TaylorHood,
            &coarse,
        );
        coarse_p.iter_mut().for_each(|v| *v -= integral / volume);
        let fine_p =
            prolong_pressure(&coarse_p, ElementPair::TaylorHood, &coarse, &fine).unwrap();
        for (v, &pos) in fine_p.iter().zip(fine.vertices.iter()) {
            let want = f(pos) - integral / volume;
            assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        }
    }

    #[test]
    fn prolongation_requires_parent_links() {
        let coarse = build_initial_mesh(Domain::UnitSquare);
        let other = build_initial_mesh(Domain::UnitSquare);
        let p = vec![0.0; 4];
        assert!(matches!(
            prolong_pressure(&p, ElementPair::P2P0, &coarse, &other),
            Err(CascadeError::HierarchyMismatch(_))
        ));
    }

    #[test]
    fn rates_from_halving_and_quartering() {
        let mut reports: Vec<LevelReport> = (0..3)
            .map(|i| LevelReport {
                k: i + 1,
                h_k: 0.5f64.powi(i as i32),
                n_k: 4usize.pow(i + 1),
                iterations: 1,
                err_u: 0.5f64.powi(i as i32),
                err_p: 0.25f64.powi(i as i32),
                rate_u: None,
                rate_p: None,
                final_residual: 0.0,
                hit_cap: false,
            })
            .collect();
        compute_rates(&mut reports, Complexity::MeshSize);
        assert!(reports[0].rate_u.is_none());
        assert!((reports[1].rate_u.unwrap() - 1.0).abs() < 1e-12);
        assert!((reports[2].rate_p.unwrap() - 2.0).abs() < 1e-12);

        // dof-count mode with N quadrupling matches the h-based rate
        compute_rates(&mut reports, Complexity::DofCount);
        assert!((reports[1].rate_u.unwrap() - 1.0).abs() < 1e-12);
        assert!((reports[2].rate_p.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = table2_config(SolverKind::UzawaGradient, 4);
        cfg.c_lc = 0.0;
        let ms = builtin_solution(Domain::UnitSquare);
        assert!(matches!(
            run_cascade(&cfg, &ms),
            Err(CascadeError::InvalidConfig(_))
        ));
        let mut cfg = table2_config(SolverKind::UzawaGradient, 4);
        cfg.s = -1.0;
        assert!(matches!(
            run_cascade(&cfg, &ms),
            Err(CascadeError::InvalidConfig(_))
        ));
        let cfg = table2_config(SolverKind::Uzawa { alpha0: 50.0 }, 4);
        assert!(matches!(
            run_cascade(&cfg, &ms),
            Err(CascadeError::InvalidConfig(_))
        ));
    }

    #[test]
    fn degenerate_single_level_run_matches_direct_solve() {
        // one level, threshold tiny: the cascade reduces to solve_schur_direct
        let ms = builtin_solution(Domain::UnitSquare);
        let mut cfg = table2_config(SolverKind::UzawaConjugateGradient, 2);
        cfg.start_level = 2;
        cfg.c_lc = 4e-12;
        cfg.s = 1.0;
        let reports = run_cascade(&cfg, &ms).unwrap();
        assert_eq!(reports.len(), 1);
        let report = &reports[0];
        assert!(!report.hit_cap);

        let mut mesh = build_initial_mesh(Domain::UnitSquare);
        mesh = refine(&mesh, RefinementRule::Uniform).unwrap();
        let disc = assemble_stokes(&mesh, ElementPair::TaylorHood, &ms).unwrap();
        let (u, p) = crate::dense::dense_oracle_solve(
            &disc.a,
            &disc.b,
            &disc.mp,
            &disc.f_vec,
            &disc.g_vec,
        )
        .unwrap();
        let err_u = crate::fem::energy_error(&u, &disc, &ms);
        let err_p = crate::fem::l2_pressure_error(&p, &disc, &ms);
        assert!((report.err_u - err_u).abs() < 1e-8, "{} vs {err_u}", report.err_u);
        assert!((report.err_p - err_p).abs() < 1e-8, "{} vs {err_p}", report.err_p);
    }

    #[test]
    fn cascade_exit_contract_holds() {
        let ms = builtin_solution(Domain::UnitSquare);
        let cfg = table2_config(SolverKind::UzawaConjugateGradient, 4);
        let reports = run_cascade(&cfg, &ms).unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            assert!(!r.hit_cap);
            let threshold = level_change_threshold(&cfg, r.h_k, r.n_k);
            assert!(r.final_residual <= threshold);
        }
        // h halves per level
        for w in reports.windows(2) {
            assert!((w[1].h_k - w[0].h_k / 2.0).abs() < 1e-15);
        }
    }
}
