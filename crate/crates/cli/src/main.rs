use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use crl_core::metrics::{dump_rollouts, evaluate, norm_field, write_norm_field};
use crl_core::runner::{self, checkpoint, LogRow, OUT_ROOT_VAR};
use crl_core::RunConfig;

#[derive(Parser)]
#[command(
    name = "crl-lab",
    version,
    about = "Train and inspect goal-reaching agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run training; outputs go to $CRL_LAB_OUT/<run_name> (default root: runs).
    Train {
        config: PathBuf,
        /// Extra `key=value` overrides applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write here instead of under the output root.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Evaluate a checkpoint's mean-action policy on the target goal.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the goal-representation norm field as x,y,norm rows.
    Normfield {
        checkpoint: PathBuf,
        config: PathBuf,
        out: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Write mean-action rollouts, one row per visited state.
    Rollouts {
        checkpoint: PathBuf,
        config: PathBuf,
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    RunConfig::load_with(path, overrides)
        .with_context(|| format!("loading config {}", path.display()))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            overrides,
            out,
            quiet,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let out_dir = out.unwrap_or_else(|| {
                let root = std::env::var_os(OUT_ROOT_VAR)
                    .map_or_else(|| PathBuf::from("runs"), PathBuf::from);
                root.join(cfg.run_name())
            });
            let report = runner::run_with(&cfg, &out_dir, |row: &LogRow| {
                if !quiet {
                    eprintln!(
                        "step {:>8}  episode {:>6}  success {:.3}  critic {:.4}  actor {:.4}  alpha {:.4}  cells {}",
                        row.env_step,
                        row.episode,
                        row.eval_success_rate,
                        row.critic_loss,
                        row.actor_loss,
                        row.alpha,
                        row.unique_cells
                    );
                }
            })
            .with_context(|| format!("training run in {}", out_dir.display()))?;
            println!(
                "final success rate {:.3} over {} episodes; outputs in {}",
                report.final_eval.success_rate,
                report.final_eval.episodes,
                out_dir.display()
            );
        }
        Command::Eval {
            checkpoint: dir,
            config,
            episodes,
            seed,
        } => {
            let cfg = load_config(&config, &[])?;
            let spec = cfg.env_spec()?;
            let ckpt = checkpoint::load(&dir)?;
            let report = evaluate(
                &ckpt.policy,
                &spec,
                episodes.unwrap_or(cfg.eval_episodes),
                seed.unwrap_or(cfg.eval_seed),
            )?;
            println!(
                "success_rate = {}\nsuccesses = {}\nepisodes = {}\nseed = {}",
                report.success_rate, report.successes, report.episodes, report.seed
            );
        }
        Command::Normfield {
            checkpoint: dir,
            config,
            out,
            resolution,
        } => {
            let cfg = load_config(&config, &[])?;
            let spec = cfg.env_spec()?;
            let ckpt = checkpoint::load(&dir)?;
            let critic = ckpt
                .critic
                .context("checkpoint has no contrastive critic (norm fields need one)")?;
            let field = norm_field(
                &critic,
                &spec,
                resolution.unwrap_or(cfg.norm_field_resolution),
            )?;
            write_norm_field(&out, &field)?;
        }
        Command::Rollouts {
            checkpoint: dir,
            config,
            out,
            episodes,
            seed,
        } => {
            let cfg = load_config(&config, &[])?;
            let spec = cfg.env_spec()?;
            let ckpt = checkpoint::load(&dir)?;
            dump_rollouts(
                &ckpt.policy,
                &spec,
                episodes.unwrap_or(cfg.rollout_episodes),
                seed.unwrap_or(cfg.eval_seed),
                &out,
            )?;
        }
    }
    Ok(())
}
