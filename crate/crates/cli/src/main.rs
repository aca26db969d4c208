use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gwg_cli::cases::{self, Case};
use gwg_cli::run::{self, Check, RunConfig};
use gwg_cli::verify;
use gwg_core::mesh::Diagonal;
use gwg_core::ElementConfig;

#[derive(Parser)]
#[command(name = "gwg", version, about = "Generalized weak Galerkin solver for stationary Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error table over a mesh series for a case with a known solution.
    Convergence(Common),
    /// Single solve with VTK output.
    Solve(Common),
    /// Built-in consistency checks of the discrete operators and solver.
    Verify {
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagonalArg {
    Forward,
    Backward,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "1")]
    case: Case,
    /// Degrees `k,j,l,m,n`.
    #[arg(long, value_parser = parse_element)]
    element: Option<[usize; 5]>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Pressure jump weight; defaults to 0 when n <= j and 1 otherwise.
    #[arg(long)]
    mu: Option<f64>,
    /// Number of mesh levels of the series.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Gmsh mesh file replacing the built-in mesh.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Compare against reference rates and fail on mismatch.
    #[arg(long)]
    check: bool,
    /// Write the global system in Matrix Market format.
    #[arg(long)]
    dump_matrix: bool,
    /// Divisions per side of the cavity mesh.
    #[arg(long, default_value_t = cases::CAVITY_N)]
    n: usize,
    #[arg(long, value_enum, default_value = "backward")]
    diagonal: DiagonalArg,
}

fn parse_element(s: &str) -> Result<[usize; 5], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad degree {p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<usize>| format!("expected 5 degrees k,j,l,m,n, got {}", v.len()))
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut element = match self.element {
            Some([k, j, l, m, n]) => ElementConfig::new(k, j, l, m, n),
            None => run::default_element(self.case),
        };
        if let Some(g) = self.gamma {
            element = element.with_gamma(g);
        }
        if let Some(b) = self.beta {
            element = element.with_beta(b);
        }
        if let Some(mu) = self.mu {
            element = element.with_mu(mu);
        }
        element.validate()?;
        if element.mu == 0.0 && element.n > element.j {
            bail!(
                "element {element} with mu = 0 is outside the stabilizer-free regime: the pressure degree n = {} \
                 must satisfy n <= j = {}; pass --mu with a positive value",
                element.n,
                element.j
            );
        }
        let mut cfg = RunConfig::new(self.case, element);
        cfg.levels = self.levels;
        cfg.mesh_path = self.mesh.clone();
        cfg.out_dir = self.out.clone();
        cfg.check = self.check;
        cfg.dump_matrix = self.dump_matrix;
        cfg.cavity_n = self.n;
        cfg.diagonal = match self.diagonal {
            DiagonalArg::Forward => Diagonal::Forward,
            DiagonalArg::Backward => Diagonal::Backward,
        };
        Ok(cfg)
    }
}

fn report(checks: &[Check]) -> bool {
    for c in checks {
        println!("{c}");
    }
    checks.iter().all(|c| c.passed)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GWG_THREADS") {
        let n: usize = v.parse().with_context(|| format!("GWG_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Convergence(args) => {
            let cfg = args.config()?;
            if !cfg.case.has_exact_solution() {
                bail!("case {} has no exact solution; use `gwg solve`", cfg.case.name());
            }
            println!("case {}, element {}, mu = {}", cfg.case.name(), cfg.element, cfg.element.mu);
            let out = run::cmd_convergence(&cfg)?;
            print!("{}", out.table);
            for l in &out.levels {
                println!(
                    "{}: {} unknowns, {} factor entries, {} regularized pivots, residual {:.1e}, factor {:.2}s, total {:.2}s",
                    l.mesh_label,
                    l.stats.unknowns,
                    l.stats.nnz_factor,
                    l.stats.regularized_pivots,
                    l.stats.relative_residual,
                    l.stats.factor_seconds,
                    l.seconds
                );
            }
            println!("wrote {}", out.csv_path.display());
            Ok(report(&out.checks))
        }
        Command::Solve(args) => {
            let cfg = args.config()?;
            println!("case {}, element {}", cfg.case.name(), cfg.element);
            let out = run::cmd_solve(&cfg)?;
            println!(
                "{} unknowns, {} factor entries, residual {:.1e}",
                out.unknowns, out.stats.nnz_factor, out.stats.relative_residual
            );
            println!("wrote {}", out.vtk_path.display());
            Ok(report(&out.checks))
        }
        Command::Verify { draws, seed } => Ok(report(&verify::run_all(draws, seed)?)),
    }
}
