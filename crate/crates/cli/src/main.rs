use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use stokes_cascade::{build_initial_mesh, builtin_solution, refine, run_cascade};
use stokes_cascade_cli::{emit_table, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, out) = match cli.resolve() {
        Ok(resolved) => resolved,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };

    let ms = builtin_solution(cfg.domain);
    let reports = match run_cascade(&cfg, &ms) {
        Ok(reports) => reports,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::FAILURE;
        }
    };

    if let Some(path) = &out.dump_mesh {
        if let Err(err) = dump_finest_mesh(&cfg, path) {
            eprintln!("error: cannot dump mesh: {err}");
            return ExitCode::FAILURE;
        }
    }

    let printed: Vec<_> = reports
        .iter()
        .filter(|r| r.k >= out.print_from)
        .cloned()
        .collect();
    let printed = if printed.is_empty() { reports.clone() } else { printed };

    let result = match &out.output {
        Some(path) => std::fs::File::create(path)
            .and_then(|mut f| emit_table(&printed, out.format, &mut f)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit_table(&printed, out.format, &mut lock).and_then(|()| lock.flush())
        }
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        return ExitCode::FAILURE;
    }

    if reports.iter().any(|r| r.hit_cap) {
        eprintln!("warning: iteration cap reached before the level-change criterion");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn dump_finest_mesh(
    cfg: &stokes_cascade::CascadeConfig,
    path: &std::path::Path,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut mesh = build_initial_mesh(cfg.domain);
    for _ in 1..cfg.levels {
        mesh = refine(&mesh, cfg.refinement)?;
    }
    let mut file = std::fs::File::create(path)?;
    mesh.write_text(&mut file)?;
    Ok(())
}
