//! Cascadic multilevel solvers for the Stokes saddle point system.
//!
//! The library builds nested Union Jack triangulations, assembles stable
//! mixed discretizations (P2-P0 and Taylor-Hood), runs Uzawa-type Schur
//! complement iterations on each level, and moves to the next level once the
//! constraint residual drops below the expected discretization error.

pub mod cascade;
pub mod dense;
pub mod fem;
pub mod mesh;
pub mod quadrature;
pub mod solution;
pub mod solvers;
pub mod sparse;

pub use cascade::{
    compute_rates, level_change_threshold, prolong_pressure, run_cascade, CascadeConfig,
    CascadeError, Complexity, LevelReport,
};
pub use fem::{
    assemble_stokes, build_dofs, energy_error, l2_pressure_error, AssemblyError, DofSpace,
    ElementPair, StokesDiscretization,
};
pub use mesh::{build_initial_mesh, mesh_size, refine, Domain, Mesh, MeshError, RefinementRule};
pub use solution::{builtin_solution, ManufacturedSolution};
pub use solvers::{IterState, SchurContext, SolverError, SolverKind};
pub use sparse::{dot, spd_solve, LinAlgError, SparseMatrix, SpdSolver};
