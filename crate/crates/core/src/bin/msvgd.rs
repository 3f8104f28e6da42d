use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msvgd::dynamics::RunStatus;
use msvgd::harness::{
    check_axes, column_names, compare_records, execute, load_config_with, particles_csv,
    run_experiment, write_outputs, write_particles, ConfigOverrides, RunConfig, RunRecord,
    TargetSpec, COMPARISON_FILE,
};
use msvgd::{Error, Result};

/// Stein variational gradient descent with matrix-valued kernels.
#[derive(Parser)]
#[command(name = "msvgd", version)]
struct Cli {
    /// Output directory, replacing the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, replacing the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config and write its particle and metrics files.
    Run { config: PathBuf },
    /// Run several configs that share a target and seed, and tabulate them.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Draw from a target's reference sampler as a particle file. The target
    /// is a kind name or a JSON target object.
    Sample { target: String, n: usize, seed: u64 },
}

fn summary(record: &RunRecord) -> String {
    let mut s = format!(
        "{} on {}: {} after {} iterations\n",
        record.config.method.name(),
        record.config.target.name(),
        match &record.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Converged { iteration } => format!("converged at {iteration}"),
            RunStatus::Aborted { iteration, .. } => format!("aborted at {iteration}"),
        },
        record.iterations_run
    );
    for row in &record.metrics {
        if let Some((name, v)) = row.headline() {
            s.push_str(&format!("  iter {:>5}  {name} {v:.6e}\n", row.iteration));
        }
    }
    s
}

fn run(cli: &Cli, config: &Path) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        output_dir: cli.out.clone(),
    };
    let config = load_config_with(config, &overrides)?;
    let record = run_experiment(&config)?;
    if !cli.quiet {
        print!("{}", summary(&record));
        println!("outputs in {}", config.output_dir.display());
    }
    Ok(())
}

fn compare(cli: &Cli, paths: &[PathBuf]) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        output_dir: None,
    };
    let mut configs: Vec<RunConfig> = paths
        .iter()
        .map(|p| load_config_with(p, &overrides))
        .collect::<Result<_>>()?;
    let names = column_names(&configs.iter().collect::<Vec<_>>());
    let table_dir = match &cli.out {
        Some(out) => {
            for (c, name) in configs.iter_mut().zip(&names) {
                c.output_dir = out.join(name);
            }
            out.clone()
        }
        None => configs[0]
            .output_dir
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };
    check_axes(&configs.iter().collect::<Vec<_>>())?;
    let mut records = Vec::with_capacity(configs.len());
    for c in &configs {
        let record = execute(c)?;
        write_outputs(&record, &c.output_dir)?;
        records.push(record);
    }
    let table = compare_records(&records)?;
    std::fs::create_dir_all(&table_dir).map_err(|e| Error::Io {
        path: table_dir.clone(),
        source: e,
    })?;
    let path = table_dir.join(COMPARISON_FILE);
    table.write(&path)?;
    if !cli.quiet {
        println!(
            "{} per checkpoint, written to {}",
            table.metric,
            path.display()
        );
        print!("{}", table.to_csv());
    }
    if let Some(r) = records.iter().find(|r| r.partial) {
        if let RunStatus::Aborted { iteration, message } = &r.status {
            return Err(Error::Numerical {
                iteration: *iteration,
                message: format!("{} aborted: {message}", r.config.method.name()),
            });
        }
    }
    Ok(())
}

fn sample(cli: &Cli, target: &str, n: usize, seed: u64) -> Result<()> {
    let seed = cli.seed.unwrap_or(seed);
    let spec = TargetSpec::parse(target)?;
    let (model, _) = spec.build()?;
    let set = model.reference_sample(n, seed)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = dir.join(format!("sample_{}_n{n}_seed{seed}.csv", spec.name()));
            write_particles(&path, 0, &set)?;
            if !cli.quiet {
                println!("wrote {n} draws to {}", path.display());
            }
        }
        None => print!("{}", particles_csv(0, &set)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Compare { configs } => compare(&cli, configs),
        Command::Sample { target, n, seed } => sample(&cli, target, *n, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
