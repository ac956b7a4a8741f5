use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use symqm::experiment::{hamiltonian_presets, run_experiment, validate_config, Experiment, ExperimentConfig};
use symqm::fgword::{kernel_library, Word};

/// Worker cap read from the environment.
const WORKERS_ENV: &str = "SYMQM_WORKERS";

#[derive(Parser)]
#[command(name = "symqm", version, about = "Quasi-morphism and fragmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print one line per problem.
    Validate { config: PathBuf },
    /// List experiment presets and named Hamiltonians.
    ListPresets,
    /// List the counting kernels of the library.
    ListKernels,
}

fn init_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("{WORKERS_ENV}={v:?} is not a worker count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(config: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match out {
        Some(dir) => cfg.with_output_dir(dir),
        None => cfg,
    };
    eprintln!("running {} (seed {}, config {})", cfg.experiment, cfg.seed, &cfg.hash[..12]);
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match report.write(&cfg.output_dir) {
        Ok(paths) => {
            for p in paths.iter().filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "txt")).take(3) {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    for p in &report.predicates {
        println!("{} {}: {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.detail);
    }
    for n in &report.notes {
        println!("note {n}");
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} predicate(s) failed", report.failures().len());
        ExitCode::FAILURE
    }
}

fn validate(config: PathBuf) -> ExitCode {
    match validate_config(&config) {
        Ok(d) if d.is_empty() => {
            println!("{}: ok", config.display());
            ExitCode::SUCCESS
        }
        Ok(diags) => {
            for d in diags {
                println!("{d}");
            }
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn list_presets() {
    println!("experiments:");
    for e in Experiment::ALL {
        println!("  {:<22} {}", e.name(), e.summary());
        if !e.default_kernels().is_empty() {
            println!("  {:<22}   kernels: {}", "", e.default_kernels().join(", "));
        }
        if !e.default_hamiltonians().is_empty() {
            println!("  {:<22}   hamiltonians: {}", "", e.default_hamiltonians().join(", "));
        }
    }
    println!("hamiltonians:");
    for (spec, about) in hamiltonian_presets() {
        println!("  {:<22} {about}", spec.name);
    }
}

fn list_kernels() {
    let c = Word::commutator();
    for k in kernel_library() {
        let terms: Vec<String> = k.terms().iter().map(|(w, x)| format!("({w}, {x})")).collect();
        println!("  {:<8} {{{}}}  mu([a,b]) = {}", k.name, terms.join(", "), k.eval(&c));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Validate { config } => validate(config),
        Command::ListPresets => {
            list_presets();
            ExitCode::SUCCESS
        }
        Command::ListKernels => {
            list_kernels();
            ExitCode::SUCCESS
        }
    }
}
