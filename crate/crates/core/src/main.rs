use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sdpp::experiment::{self, ExperimentConfig};

/// Differentially private push-pull optimization experiments.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// TOML configuration file; missing keys take preset values.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Named preset.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Run without privacy noise.
    #[arg(long)]
    noise_free: bool,

    /// Master seed for the instance, initialization and noise.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Monte-Carlo replicas per privacy level.
    #[arg(long, value_name = "M")]
    replicas: Option<usize>,

    /// Iterations per run.
    #[arg(long, value_name = "K")]
    horizon: Option<usize>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Only emit the analysis report (no Monte-Carlo simulation).
    #[arg(long, conflicts_with = "compare_baseline")]
    analyze_only: bool,

    /// Run plain push-pull alongside and write comparison.csv.
    #[arg(long)]
    compare_baseline: bool,
}

impl Cli {
    fn config(&self) -> sdpp::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::ridge5(),
        };
        if self.noise_free {
            cfg.noise_free = true;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.replicas {
            cfg.replicas = m;
        }
        if let Some(k) = self.horizon {
            cfg.horizon = k;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> sdpp::Result<()> {
    let cfg = cli.config()?;
    if cli.analyze_only {
        let entries = experiment::run_analysis_only(&cfg)?;
        for entry in &entries {
            let label = entry.epsilon.map_or("noise-free".to_string(), |e| format!("eps = {e}"));
            match (&entry.report, &entry.error) {
                (Some(r), _) => println!(
                    "{label}: rho(A) = {:.12}, eta_max = {:e}, steady bound = {}",
                    r.rho_a(),
                    r.stepsize.eta_max,
                    r.steady
                        .as_ref()
                        .map_or_else(|| "unavailable".to_string(), |s| format!("{:e}", s.z[0]))
                ),
                (None, Some(e)) => println!("{label}: analysis unavailable: {e}"),
                (None, None) => {}
            }
        }
    } else if cli.compare_baseline {
        let cmp = experiment::compare_baseline(&cfg)?;
        println!("noise-free final residual: {:e}", cmp.noise_free_final);
        if let (Some(f), Some(p)) = (cmp.noisy_final, cmp.noisy_plateau) {
            println!("noisy final residual:      {f:e} (plateau {p:e})");
        }
        println!("baseline final residual:   {:e}", cmp.baseline_final);
    } else {
        let summary = experiment::run_experiment(&cfg)?;
        println!("gradient bound C = {:e}", summary.gradient_bound);
        println!("noise-free final residual = {:e}", summary.noise_free_final_residual);
        for stat in summary.plateaus() {
            println!(
                "eps = {}: theta = {:e}, plateau = {:e} +/- {:e} (M = {})",
                stat.epsilon, stat.theta_bar, stat.mean, stat.standard_error, stat.replicas
            );
        }
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
