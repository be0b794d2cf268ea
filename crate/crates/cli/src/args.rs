//! Flag parsing and preset resolution.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use stokes_cascade::{CascadeConfig, Complexity, RefinementRule, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    /// Unit square, P2-P0 pair, uniform refinement.
    SquareP2p0,
    /// Unit square, Taylor-Hood pair, uniform refinement.
    SquareTh,
    /// L-shape, Taylor-Hood pair, uniform refinement.
    LshapeUniform,
    /// L-shape, Taylor-Hood pair, refinement graded toward the corner.
    LshapeGraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverName {
    Uzawa,
    Ug,
    Ucg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComplexityName {
    /// Threshold scales with the mesh size h.
    H,
    /// Threshold scales with the dof count N.
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
}

/// Runs one cascadic multilevel Stokes experiment and prints its
/// per-level convergence table.
#[derive(Debug, Parser)]
#[command(name = "stokes-cascade", version, about)]
pub struct Cli {
    /// Experiment preset fixing domain, element pair and level-change rule.
    #[arg(long, value_enum)]
    pub preset: PresetName,

    /// Level solver.
    #[arg(long, value_enum, default_value = "ucg")]
    pub solver: SolverName,

    /// Relaxation parameter for the fixed-step solver (default 0.8 for
    /// P2-P0, 1.0 for Taylor-Hood).
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Level-change constant C_lc.
    #[arg(long)]
    pub clc: Option<f64>,

    /// Level-change rate exponent s.
    #[arg(long)]
    pub s: Option<f64>,

    /// Level-change complexity measure: h (mesh size) or n (dof count).
    #[arg(long, value_enum)]
    pub complexity: Option<ComplexityName>,

    /// Grading ratio toward the corner; 1 reproduces uniform refinement.
    #[arg(long)]
    pub kappa: Option<f64>,

    /// Finest level.
    #[arg(long)]
    pub levels: Option<u32>,

    /// First level shown in the output.
    #[arg(long, default_value_t = 4)]
    pub print_from: u32,

    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,

    /// Write the table to a file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Write the finest mesh as plain text (debug aid).
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct OutputOptions {
    pub print_from: u32,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub dump_mesh: Option<PathBuf>,
}

impl Cli {
    /// Applies flag overrides on top of the preset defaults.
    pub fn resolve(&self) -> Result<(CascadeConfig, OutputOptions), String> {
        let mut cfg = match self.preset {
            PresetName::SquareP2p0 => CascadeConfig::preset_square_p2p0(),
            PresetName::SquareTh => CascadeConfig::preset_square_taylor_hood(),
            PresetName::LshapeUniform => CascadeConfig::preset_lshape_uniform(),
            PresetName::LshapeGraded => CascadeConfig::preset_lshape_graded(),
        };

        cfg.solver = match self.solver {
            SolverName::Uzawa => {
                let default_alpha = match cfg.pair {
                    stokes_cascade::ElementPair::P2P0 => 0.8,
                    stokes_cascade::ElementPair::TaylorHood => 1.0,
                };
                SolverKind::Uzawa {
                    alpha0: self.alpha.unwrap_or(default_alpha),
                }
            }
            SolverName::Ug => SolverKind::UzawaGradient,
            SolverName::Ucg => SolverKind::UzawaConjugateGradient,
        };
        if self.alpha.is_some() && self.solver != SolverName::Uzawa {
            return Err("--alpha only applies to --solver uzawa".into());
        }

        if let Some(clc) = self.clc {
            if clc <= 0.0 {
                return Err("--clc must be positive".into());
            }
            cfg.c_lc = clc;
        }
        if let Some(s) = self.s {
            if s <= 0.0 {
                return Err("--s must be positive".into());
            }
            cfg.s = s;
        }
        if let Some(mode) = self.complexity {
            cfg.complexity = match mode {
                ComplexityName::H => Complexity::MeshSize,
                ComplexityName::N => Complexity::DofCount,
            };
        }
        if let Some(kappa) = self.kappa {
            if !(kappa > 0.0 && kappa <= 1.0) {
                return Err("--kappa must lie in (0, 1]".into());
            }
            // the singular corner is the origin on both domains
            cfg.refinement = RefinementRule::Graded {
                kappa,
                singular_point: [0.0, 0.0],
            };
        }
        if let Some(levels) = self.levels {
            if levels < 1 {
                return Err("--levels must be at least 1".into());
            }
            cfg.levels = levels;
            cfg.start_level = cfg.start_level.min(levels);
        }

        Ok((
            cfg,
            OutputOptions {
                print_from: self.print_from,
                format: self.format,
                output: self.output.clone(),
                dump_mesh: self.dump_mesh.clone(),
            },
        ))
    }
}
