use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use frac_gelfand::persist::{self, ConfigBuilder, ExperimentConfig, ZeroCache};

/// Spectral solver and verification suite for (-Δ)^s u = λ f(u) on the unit ball.
#[derive(Debug, Parser)]
#[command(name = "frac-gelfand", version)]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    keys: Keys,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Continue the branch over the amplitude grid; writes branch.csv and summary.json.
    Branch,
    /// Run the verification checks; writes verify.json.
    Verify,
    /// Bracket λ* by fold detection and by bisection; writes lambda_star.json.
    LambdaStar,
    /// Print the critical dimension and decay bound over an (n, s) grid; writes table.csv.
    Table,
    /// Extremal solution, K-refinement and regularity report; writes extremal.json.
    Extremal,
}

/// One flag per config key.
#[derive(Debug, Args)]
struct Keys {
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    s: Option<String>,
    /// exp, power:p or table:path
    #[arg(long, global = true)]
    f: Option<String>,
    #[arg(long, global = true)]
    modes: Option<String>,
    #[arg(long, global = true)]
    quad_order: Option<String>,
    #[arg(long, global = true)]
    t_max: Option<String>,
    #[arg(long, global = true)]
    t_steps: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Comma-separated check names; empty for none.
    #[arg(long, global = true)]
    checks: Option<String>,
    #[arg(long, global = true)]
    newton_tol: Option<String>,
    #[arg(long, global = true)]
    newton_max_iter: Option<String>,
    #[arg(long, global = true)]
    monotone_tol: Option<String>,
    #[arg(long, global = true)]
    monotone_max_iter: Option<String>,
    #[arg(long, global = true)]
    blowup: Option<String>,
    #[arg(long, global = true)]
    eig_tol: Option<String>,
    #[arg(long, global = true)]
    bracket_tol: Option<String>,
    #[arg(long, global = true)]
    filter_order: Option<String>,
    #[arg(long, global = true)]
    perturb_mu2: Option<String>,
    #[arg(long, global = true)]
    riesz_points: Option<String>,
}

impl Keys {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("n", &self.n),
            ("s", &self.s),
            ("f", &self.f),
            ("modes", &self.modes),
            ("quad_order", &self.quad_order),
            ("t_max", &self.t_max),
            ("t_steps", &self.t_steps),
            ("out_dir", &self.out_dir),
            ("seed", &self.seed),
            ("checks", &self.checks),
            ("newton_tol", &self.newton_tol),
            ("newton_max_iter", &self.newton_max_iter),
            ("monotone_tol", &self.monotone_tol),
            ("monotone_max_iter", &self.monotone_max_iter),
            ("blowup", &self.blowup),
            ("eig_tol", &self.eig_tol),
            ("bracket_tol", &self.bracket_tol),
            ("filter_order", &self.filter_order),
            ("perturb_mu2", &self.perturb_mu2),
            ("riesz_points", &self.riesz_points),
        ]
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut builder = ConfigBuilder::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        builder.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for (key, value) in cli.keys.pairs() {
        if let Some(v) = value {
            builder.set(key, v.clone())?;
        }
    }
    Ok(builder.build()?)
}

/// `Ok(true)` when everything requested succeeded.
fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    if let Command::Table = cli.command {
        print!("{}", persist::run_table(&cfg)?);
        return Ok(true);
    }
    let mut cache = ZeroCache::from_env()?;
    let ok = match cli.command {
        Command::Branch => {
            let run = persist::run_branch(&cfg, &mut cache)?;
            println!("{}", serde_json::to_string_pretty(&run.summary)?);
            run.summary["failures"].as_array().is_some_and(|f| f.is_empty())
        }
        Command::Verify => {
            let report = persist::run_verify(&cfg, &mut cache)?;
            for c in &report.checks {
                let margin = c.margin.map_or("-".to_string(), |m| format!("{m:.3e}"));
                println!("{:<32} {:<8} {:>11}  {}", c.name, c.status, margin, c.detail);
            }
            report.all_passed
        }
        Command::LambdaStar => {
            let out = persist::run_lambda_star(&cfg, &mut cache)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            out["consistent"].as_bool().unwrap_or(false)
        }
        Command::Extremal => {
            let out = persist::run_extremal(&cfg, &mut cache)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            true
        }
        Command::Table => unreachable!(),
    };
    cache.save()?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
