use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lram::config::parse_stages;
use lram::error::has_errors;
use lram::{run, validate, CliError, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "lram", version, about = "Topology optimization, homogenization and transmission loss of resonant metamaterial cells")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check a config and its inputs without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        stage: Option<String>,
    },
    /// Level-set optimization of the unit cell.
    Optimize(Common),
    /// Effective properties of the optimized (or given) level set.
    Homogenize(Common),
    /// Effective-medium and Bloch dispersion.
    Dispersion(Common),
    /// Transmission loss of the homogenized panel.
    Transmission(Common),
    /// Run the stages listed in the config, or in --stage.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Comma-separated stage list.
        #[arg(long)]
        stage: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshot_every: Option<usize>,
}

fn load(path: &std::path::Path) -> Result<PipelineConfig, CliError> {
    PipelineConfig::load(path).map_err(CliError::Config)
}

fn with_stage(mut cfg: PipelineConfig, stage: Option<&str>) -> Result<PipelineConfig, CliError> {
    if let Some(s) = stage {
        cfg.stages = parse_stages(s).map_err(|m| CliError::Config(vec![lram::Diagnostic::error(format!("--stage: {m}"))]))?;
    }
    Ok(cfg)
}

/// Stages for a single-stage verb: the stage plus whatever it depends on.
fn stages_for(verb: Stage, cfg: &PipelineConfig) -> Vec<Stage> {
    let mut out = Vec::new();
    if verb == Stage::Optimize || cfg.phi_file.is_none() {
        out.push(Stage::Optimize);
    }
    if verb != Stage::Optimize {
        out.push(Stage::Homogenize);
    }
    if matches!(verb, Stage::Dispersion | Stage::Transmission) {
        out.push(verb);
    }
    out
}

fn execute(common: Common, stages: impl FnOnce(&PipelineConfig) -> Result<Vec<Stage>, CliError>) -> Result<(), CliError> {
    let mut cfg = load(&common.config)?;
    cfg.stages = stages(&cfg)?;
    if let Some(out) = common.out {
        // Relative to the working directory, unlike paths inside the config.
        cfg.out_dir = std::env::current_dir().map(|d| d.join(&out)).unwrap_or(out);
    }
    if let Some(n) = common.snapshot_every {
        if n == 0 {
            return Err(CliError::Config(vec![lram::Diagnostic::error("--snapshot-every must be at least 1")]));
        }
        cfg.snapshot_every = n;
    }
    let report = run(&cfg, &mut |msg| eprintln!("{msg}"))?;
    eprintln!("wrote {} files to {}", report.files.len() + 1, cfg.out_path().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.verb {
        Verb::Validate { config, stage } => (|| {
            let cfg = with_stage(load(&config)?, stage.as_deref())?;
            let diags = validate(&cfg);
            for d in &diags {
                println!("{d}");
            }
            if has_errors(&diags) {
                return Err(CliError::Config(Vec::new()));
            }
            println!("ok");
            Ok(())
        })(),
        Verb::Optimize(c) => execute(c, |cfg| Ok(stages_for(Stage::Optimize, cfg))),
        Verb::Homogenize(c) => execute(c, |cfg| Ok(stages_for(Stage::Homogenize, cfg))),
        Verb::Dispersion(c) => execute(c, |cfg| Ok(stages_for(Stage::Dispersion, cfg))),
        Verb::Transmission(c) => execute(c, |cfg| Ok(stages_for(Stage::Transmission, cfg))),
        Verb::Pipeline { common, stage } => execute(common, |cfg| Ok(with_stage(cfg.clone(), stage.as_deref())?.stages)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(diags)) => {
            for d in &diags {
                eprintln!("{d}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
