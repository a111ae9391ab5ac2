mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ncmodsym_core::{Error, Report, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "ncmodsym", version, about = "Iterated Mellin transforms and noncommutative modular symbols")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

/// Run settings; flags override `--config`, which overrides the defaults.
#[derive(Args, Debug, Clone)]
struct Flags {
    /// Truncation depth D
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Number of q-expansion coefficients
    #[arg(long, global = true)]
    nmax: Option<usize>,
    /// Gauss-Legendre nodes per quadrature piece
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// RK4 steps per unit of hyperbolic length
    #[arg(long, global = true)]
    steps: Option<f64>,
    /// Rays to i inf start at this multiple of the largest period
    #[arg(long, global = true)]
    height: Option<f64>,
    /// Override every check tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Directory for cached q-expansions
    #[arg(long, global = true, env = "NCMODSYM_CACHE")]
    cache_dir: Option<PathBuf>,
    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Total Mellin transform J_{i inf}^0 of a family
    Mellin(commands::FamilyArgs),
    /// Functional equation and split independence of the total Mellin transform
    CheckFunceq(commands::FamilyArgs),
    /// Group-likeness of J_{i inf}^z
    CheckShuffle(commands::ShuffleArgs),
    /// Hecke relation for the level-11 newform
    CheckHecke(commands::HeckeArgs),
    /// Eichler-Shimura relations for Delta z^{s-1} dz, s = 1..11
    CheckEs(commands::EsArgs),
    /// Cocycle law for random SL_2(Z) pairs
    CheckCocycle(commands::CocycleArgs),
    /// Multiple Dirichlet series L(z; ...; j) with a tail bound
    DirichletEval(commands::DirichletArgs),
    /// Product formula for multiple Dirichlet series on random data
    ShuffleCheck(commands::ProductArgs),
    /// Series, L-function and quadrature engines on vertical rays (cost grows like nmax^depth)
    Thm32Check(commands::Thm32Args),
    /// Continued-fraction decomposition of J_{i inf}^a
    CfDecompose(commands::CfArgs),
    /// Drinfeld associator from the KZ family
    Assoc(commands::AssocArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Mellin(_) => "mellin",
            Command::CheckFunceq(_) => "check-funceq",
            Command::CheckShuffle(_) => "check-shuffle",
            Command::CheckHecke(_) => "check-hecke",
            Command::CheckEs(_) => "check-es",
            Command::CheckCocycle(_) => "check-cocycle",
            Command::DirichletEval(_) => "dirichlet-eval",
            Command::ShuffleCheck(_) => "shuffle-check",
            Command::Thm32Check(_) => "thm32-check",
            Command::CfDecompose(_) => "cf-decompose",
            Command::Assoc(_) => "assoc",
        }
    }

    /// Defaults that differ from [`RunConfig::default`].
    fn defaults(&self) -> RunConfig {
        let mut c = RunConfig::default();
        match self {
            Command::CheckHecke(_) => c.n_max = 400,
            Command::Mellin(a) | Command::CheckFunceq(a) if a.family == "11a" => c.n_max = 200,
            Command::Assoc(_) => c.depth = 4,
            _ => {}
        }
        c
    }
}

fn build_config(cmd: &Command, f: &Flags) -> anyhow::Result<RunConfig> {
    let mut c = cmd.defaults();
    if let Some(path) = &f.config {
        c.load_config(path)?;
    }
    macro_rules! over {
        ($($field:ident => $target:ident),*) => {
            $(if let Some(v) = f.$field.clone() { c.$target = v; })*
        };
    }
    over!(depth => depth, nmax => n_max, nodes => nodes, steps => steps, height => height);
    if f.tol.is_some() {
        c.tol = f.tol;
    }
    if f.cache_dir.is_some() {
        c.cache_dir = f.cache_dir.clone();
    }
    if f.out.is_some() {
        c.out = f.out.clone();
    }
    c.validate()?;
    Ok(c)
}

/// Errors caused by the request rather than by the numerics.
fn is_usage_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(
            Error::Invalid(_) | Error::DepthTooLarge { .. } | Error::NotInUpperHalfPlane(_) | Error::Dimension { .. } | Error::NotStable(_)
        )
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match build_config(&cli.command, &cli.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let mut report = match commands::run(&cli.command, &cfg) {
        Ok(r) => r,
        Err(e) if is_usage_error(&e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
        Err(e) => {
            let mut r = Report::new(cli.command.name());
            r.check(format!("error: {e:#}"), f64::NAN, 0.0);
            r
        }
    };
    report.input("config", &cfg);
    report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    for line in report.summary_lines() {
        eprintln!("{line}");
    }
    let json = report.to_json_string();
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => println!("{json}"),
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
