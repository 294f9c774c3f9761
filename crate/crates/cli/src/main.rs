//! `hmrl` command-line runner.
//!
//! Every command writes into an output directory (`--out-dir`, or the
//! `HMRL_OUT_DIR` environment variable). Exit codes: 0 on success, 1 when a
//! run fails or verification finds a violation, 2 for invalid input.

mod manifest;
mod task_file;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hmrl::analysis::{
    evaluate, evaluation_csv, potential_heatmap, potential_table, to_tabular, verify_consistency, verify_shaping,
    ConsistencyReport,
};
use hmrl::checkpoint;
use hmrl::envs::{catalog_by_name, sample_task, Facing, Task, TaskSpec};
use hmrl::metaloop::{
    finetune, finetune_csv, metrics_header, metrics_row, train_with, FinetuneOptions, MetaModel, RunConfig,
    ShapingModule, TrainOptions,
};

use manifest::Manifest;
use task_file::TaskFile;

#[derive(Parser)]
#[command(name = "hmrl", version, about = "Meta reward shaping experiments on gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "HMRL_OUT_DIR")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train from a TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Start the potential at zero and never update it.
        #[arg(long)]
        zero_potential: bool,
    },
    /// Fine-tune (or, with --direct, only evaluate) a checkpoint on one task.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task file: `env` and `seed`, optionally `start` and `goal`.
        #[arg(long)]
        task: PathBuf,
        #[command(flatten)]
        out: OutDir,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zero gradient steps: evaluate the meta model as trained.
        #[arg(long)]
        direct: bool,
        /// Keep the potential fixed (default from the run configuration).
        #[arg(long, conflicts_with = "no_freeze")]
        freeze: bool,
        /// Keep updating the potential.
        #[arg(long)]
        no_freeze: bool,
        /// Start from a newly initialized policy sized for the task.
        #[arg(long)]
        fresh_policy: bool,
        /// Train on the original rewards only.
        #[arg(long)]
        no_shaping: bool,
        /// Episodes per gradient step (default: the run's `m`).
        #[arg(long)]
        rollouts: Option<usize>,
        /// Policy learning rate (default: the run's `alpha`).
        #[arg(long)]
        lr: Option<f64>,
        /// Evaluation episodes after fine-tuning.
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Check policy invariance under the checkpoint's shaping on exact MDPs.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated catalog or environment names.
        #[arg(long, value_delimiter = ',')]
        envs: Vec<String>,
        /// Tasks per environment.
        #[arg(long, default_value_t = 4)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
        /// Adds a reward term that is not potential based.
        #[arg(long, hide = true)]
        inject_non_potential: bool,
    },
    /// Write the potential over every walkable cell of a task as CSV.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the meta policy on sampled tasks.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        tasks: usize,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Catalog to draw tasks from (default: the run's catalog).
        #[arg(long)]
        catalog: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Input the user can fix; reported with exit code 2.
#[derive(Debug)]
struct BadInput(String);

impl std::fmt::Display for BadInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

/// Verification ran and found violations.
#[derive(Debug)]
struct Violations(usize);

impl std::fmt::Display for Violations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} task(s) failed the consistency check", self.0)
    }
}

impl std::error::Error for Violations {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    BadInput(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<BadInput>().is_some() {
        return 2;
    }
    match err.downcast_ref::<hmrl::Error>() {
        Some(hmrl::Error::Config(_) | hmrl::Error::Usage(_) | hmrl::Error::Checkpoint(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Train {
            config,
            out,
            zero_potential,
        } => cmd_train(&config, &out.out_dir, zero_potential),
        Command::Finetune {
            checkpoint,
            task,
            out,
            steps,
            seed,
            direct,
            freeze,
            no_freeze,
            fresh_policy,
            no_shaping,
            rollouts,
            lr,
            episodes,
        } => {
            let (cfg, model) = load_checkpoint(&checkpoint)?;
            let mut opts = FinetuneOptions::from_config(&cfg, if direct { 0 } else { steps }, seed);
            if freeze {
                opts.freeze = true;
            }
            if no_freeze {
                opts.freeze = false;
            }
            opts.fresh_policy = fresh_policy;
            opts.use_shaping = !no_shaping && model.shaping().is_some();
            if let Some(r) = rollouts {
                opts.rollouts = r;
            }
            if let Some(lr) = lr {
                opts.lr = lr;
            }
            cmd_finetune(&cfg, &model, &task, &out.out_dir, &opts, episodes)
        }
        Command::Verify {
            checkpoint,
            envs,
            tasks,
            seed,
            out,
            inject_non_potential,
        } => cmd_verify(&checkpoint, &envs, tasks, seed, &out.out_dir, inject_non_potential),
        Command::Heatmap { checkpoint, task, out } => cmd_heatmap(&checkpoint, &task, &out),
        Command::Eval {
            checkpoint,
            tasks,
            episodes,
            seed,
            catalog,
            out,
        } => cmd_eval(&checkpoint, tasks, episodes, seed, catalog.as_deref(), &out),
    }
}

fn load_checkpoint(path: &Path) -> anyhow::Result<(RunConfig, MetaModel)> {
    Ok(checkpoint::load(path)?)
}

fn make_dirs(out: &Path) -> anyhow::Result<()> {
    for sub in ["checkpoints", "reports"] {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.join(sub).display()))?;
    }
    Ok(())
}

fn cmd_train(config: &Path, out: &Path, zero_potential: bool) -> anyhow::Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = RunConfig::from_toml(&text)?;
    make_dirs(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let mut manifest = Manifest::start("train", &cfg);
    manifest.metrics = Some("metrics.csv".into());
    manifest.write(out)?;

    let env_names: Vec<String> = cfg.catalog()?.into_iter().map(|e| e.name).collect();
    let mut metrics = fs::File::create(out.join("metrics.csv"))?;
    writeln!(metrics, "{}", metrics_header(&env_names))?;
    let mut timings = fs::File::create(out.join("timings.csv"))?;
    writeln!(timings, "iteration,elapsed_seconds")?;
    manifest.extra.push("timings.csv".into());

    let started = Instant::now();
    let every = cfg.run.checkpoint_every;
    let mut saved = Vec::new();
    let result = train_with(&cfg, TrainOptions { zero_potential }, |model, row| {
        let io = |e: std::io::Error| hmrl::Error::Io(e);
        writeln!(metrics, "{}", metrics_row(row, &env_names)).map_err(io)?;
        writeln!(timings, "{},{:.3}", row.iteration, started.elapsed().as_secs_f64()).map_err(io)?;
        if every > 0 && row.iteration % every == 0 {
            let name = format!("checkpoints/iter-{:06}.ckpt", row.iteration);
            checkpoint::save(&out.join(&name), &cfg, model)?;
            saved.push(name);
        }
        Ok(())
    });
    manifest.checkpoints = saved;
    match result {
        Ok(outcome) => {
            let name = "checkpoints/final.ckpt".to_string();
            checkpoint::save(&out.join(&name), &cfg, &outcome.model)?;
            manifest.checkpoints.push(name);
            manifest.finish(out)?;
            Ok(())
        }
        Err(e) => {
            manifest.fail(out, &e.to_string())?;
            Err(e.into())
        }
    }
}

fn load_task(path: &Path) -> anyhow::Result<Task> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = TaskFile::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    file.build().map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn cmd_finetune(
    cfg: &RunConfig,
    model: &MetaModel,
    task_path: &Path,
    out: &Path,
    opts: &FinetuneOptions,
    episodes: usize,
) -> anyhow::Result<()> {
    let task = load_task(task_path)?;
    make_dirs(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    fs::write(out.join("task.json"), serde_json::to_string_pretty(task.spec())?)?;
    let mut manifest = Manifest::start("finetune", cfg);
    manifest.seed = opts.seed;
    manifest.metrics = Some("metrics.csv".into());
    manifest.write(out)?;

    let result = (|| -> anyhow::Result<()> {
        let outcome = finetune(model, &task, cfg, opts)?;
        fs::write(out.join("metrics.csv"), finetune_csv(&outcome.log))?;
        let tuned = MetaModel {
            method: model.method,
            policy: outcome.policy.clone(),
            theta: outcome.theta.clone(),
            inner_lr: if opts.fresh_policy { None } else { model.inner_lr.clone() },
            shaping: match (&outcome.shaping, &model.shaping) {
                (Some(s), _) => Some(ShapingModule::new(s.clone(), cfg.networks.shaping_lr)),
                (None, kept) => kept.clone(),
            },
            iteration: model.iteration,
        };
        let mut tuned_cfg = cfg.clone();
        tuned_cfg.networks.obs_width = Some(tuned.policy.input_dim);
        let cfg_for_ckpt = if opts.fresh_policy { &tuned_cfg } else { cfg };
        checkpoint::save(&out.join("checkpoints/final.ckpt"), cfg_for_ckpt, &tuned)?;
        manifest.checkpoints.push("checkpoints/final.ckpt".into());
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let summary = evaluate(&outcome.policy, &outcome.theta, &[task.spec().clone()], episodes, &mut rng)?;
        fs::write(out.join("reports/evaluation.csv"), evaluation_csv(&summary))?;
        manifest.extra.push("reports/evaluation.csv".into());
        Ok(())
    })();
    match result {
        Ok(()) => Ok(manifest.finish(out)?),
        Err(e) => {
            manifest.fail(out, &format!("{e:#}"))?;
            Err(e)
        }
    }
}

/// Catalog environments named by `selectors`, without duplicates.
fn select_envs(selectors: &[String]) -> anyhow::Result<Vec<hmrl::envs::EnvSpec>> {
    let mut envs: Vec<hmrl::envs::EnvSpec> = Vec::new();
    for s in selectors.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let found = catalog_by_name(s).ok_or_else(|| bad(format!("unknown environment or catalog `{s}`")))?;
        for e in found {
            if !envs.contains(&e) {
                envs.push(e);
            }
        }
    }
    if envs.is_empty() {
        bail!(bad("no environments selected (use --envs)"));
    }
    Ok(envs)
}

fn cmd_verify(
    ckpt: &Path,
    selectors: &[String],
    tasks: usize,
    seed: u64,
    out: &Path,
    inject: bool,
) -> anyhow::Result<()> {
    let envs = select_envs(selectors)?;
    if tasks == 0 {
        bail!(bad("--tasks must be at least 1"));
    }
    let (cfg, model) = load_checkpoint(ckpt)?;
    let shaping = model
        .shaping()
        .ok_or_else(|| bad(format!("a {} checkpoint has no shaping to verify", model.method.name())))?;
    fs::create_dir_all(out.join("reports"))?;
    let gamma = cfg.algorithm.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut entries = Vec::new();
    let mut failed = 0;
    for env in &envs {
        for _ in 0..tasks {
            let task = Task::new(sample_task(&mut rng, env)?)?;
            let mdp = to_tabular(&task, gamma)?;
            let phi = potential_table(&mdp, &task, shaping)?;
            let report: ConsistencyReport = if inject {
                // A bonus for leaving the start state is not a potential
                // difference, so the start value no longer shifts by −φ.
                let spec = task.spec();
                let start = mdp
                    .index_of(spec.start, spec.start_facing)
                    .or_else(|| mdp.index_of(spec.start, Facing::North))
                    .context("start state missing from the tabular model")?;
                verify_shaping(&mdp, &phi, |s, _, t| {
                    let potential = gamma * if mdp.terminal[t] { 0.0 } else { phi[t] } - phi[s];
                    potential + if s == start && t != start { 5.0 } else { 0.0 }
                })?
            } else {
                verify_consistency(&mdp, &phi)?
            };
            text.push_str(&format!("{}\n{}", task.spec().label(), report.to_text()));
            if !report.passed {
                failed += 1;
            }
            entries.push(serde_json::json!({
                "task": task.spec().label(),
                "report": report,
            }));
        }
    }
    let summary = serde_json::json!({
        "passed": failed == 0,
        "tasks": entries.len(),
        "failed": failed,
        "results": entries,
    });
    fs::write(out.join("reports/consistency.txt"), text)?;
    fs::write(
        out.join("reports/consistency.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    if failed > 0 {
        bail!(Violations(failed));
    }
    println!("{} task(s) verified", entries.len());
    Ok(())
}

fn cmd_heatmap(ckpt: &Path, task_path: &Path, out: &Path) -> anyhow::Result<()> {
    let (_, model) = load_checkpoint(ckpt)?;
    let shaping = model
        .shaping()
        .ok_or_else(|| bad(format!("a {} checkpoint has no potential", model.method.name())))?;
    let task = load_task(task_path)?;
    let map = potential_heatmap(&task, shaping)?;
    fs::write(out, map.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn cmd_eval(
    ckpt: &Path,
    tasks: usize,
    episodes: usize,
    seed: u64,
    catalog: Option<&str>,
    out: &Path,
) -> anyhow::Result<()> {
    if tasks == 0 {
        bail!(bad("--tasks must be at least 1"));
    }
    let (cfg, model) = load_checkpoint(ckpt)?;
    let envs = match catalog {
        Some(name) => catalog_by_name(name).ok_or_else(|| bad(format!("unknown catalog `{name}`")))?,
        None => cfg.catalog()?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<TaskSpec> = (0..tasks)
        .map(|i| sample_task(&mut rng, &envs[i % envs.len()]))
        .collect::<Result<_, _>>()?;
    for s in &specs {
        let need = s.env.observation_len();
        if need > model.policy.input_dim {
            bail!(bad(format!(
                "`{}` observes {need} values but the policy accepts {}",
                s.env.name, model.policy.input_dim
            )));
        }
    }
    let summary = evaluate(&model.policy, &model.theta, &specs, episodes, &mut rng)?;
    fs::write(out, evaluation_csv(&summary)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
