use std::process::ExitCode;

use clap::Parser;

use dbf_cli::{init_run_log, resolve_config, run_converge, run_solve, Cli, CliError, Command, CONVERGENCE_CSV};

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = resolve_config(&args)?;
            init_run_log(&cfg.output_dir)?;
            let summary = run_solve(&cfg)?;
            for c in &summary.cycles {
                println!(
                    "cycle {}: {} cells, {} dofs, {} Newton iterations, {} FGMRES iterations",
                    c.cycle,
                    c.active_cells,
                    c.dofs(),
                    c.newton.iterations,
                    c.newton.fgmres_total()
                );
            }
            for p in &summary.written {
                println!("wrote {}", p.display());
            }
        }
        Command::Converge(args) => {
            init_run_log(&args.output_dir)?;
            let rows = run_converge(&args)?;
            for r in &rows {
                println!("{} dofs: L2_u {:.3e}  H1_u {:.3e}  L2_p {:.3e}", r.dofs, r.errors.l2_u, r.errors.h1_u, r.errors.l2_p);
            }
            println!("wrote {}", args.output_dir.join(CONVERGENCE_CSV).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dbf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
