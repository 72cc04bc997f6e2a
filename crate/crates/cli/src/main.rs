//! Command-line driver for the hierarchical recommender: synthetic data
//! generation, training, online/offline evaluation, parameter sweeps,
//! and plot-data export. Every command is reproducible from its config
//! file, seed, and input files; output files are written atomically.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hrlrec_core::catalog::{generate_catalog, Catalog};
use hrlrec_core::checkpoint::{load_checkpoint, save_checkpoint};
use hrlrec_core::env::{
    generate_logs, read_logs, train_simulator, write_logs, LogPolicy, SimTrainConfig,
};
use hrlrec_core::eval::{
    offline_test, online_test, run_baseline, run_sweep, write_sweep_csvs, ArmKind, EvalCfg,
    SweepParam,
};
use hrlrec_core::rng::{stream_rng, Stream};
use hrlrec_core::trainer::{run_training, TrainConfig, TrainTrace};

#[derive(Parser)]
#[command(
    name = "hrlrec",
    about = "Hierarchical two-agent recommender: train and evaluate against a synthetic session environment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic item catalog file.
    GenCatalog {
        /// Output catalog path.
        #[arg(long)]
        catalog: PathBuf,
        /// Optional config supplying n_items / n_clusters / embed_dim / item_noise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Root seed (overrides the config seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Roll out logged sessions under a fixed behavior policy.
    GenLogs {
        #[arg(long)]
        catalog: PathBuf,
        /// Output log path.
        #[arg(long)]
        logs: PathBuf,
        /// Number of sessions to generate.
        #[arg(long, default_value_t = 1000)]
        sessions: usize,
        /// Steps per session.
        #[arg(long = "session-length", default_value_t = 30)]
        session_length: usize,
        /// Behavior policy: random | greedy.
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the feedback simulator on logged sessions and report
    /// held-out accuracy.
    TrainSimulator {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        logs: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one arm and write its trace, session summaries, and
    /// checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Catalog file; generated from the config when absent.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Arm: hrl-mg | hrl | ddpg | dnn (dnn emits reports only).
        #[arg(long, default_value = "hrl-mg")]
        arm: String,
    },
    /// Online test of a trained checkpoint: live sessions, no noise,
    /// no goals, no updates.
    EvalOnline {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of evaluation sessions.
        #[arg(long)]
        sessions: Option<usize>,
        /// Session length: the short (50) or long (300) setting.
        #[arg(long = "session-length", value_parser = parse_session_length)]
        session_length: Option<usize>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Offline rerank test of a trained checkpoint against logged
    /// sessions (MAP, NDCG@20, NDCG@40).
    EvalOffline {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        logs: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Sensitivity sweep over alpha or M: one trained arm per
    /// (value, seed), plot-ready CSVs per metric.
    Sweep {
        /// Swept parameter: alpha | M.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. "0,0.5,1".
        #[arg(long)]
        values: String,
        /// Comma-separated seeds (at least 3), e.g. "1,2,3".
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Worker threads for arm fan-out.
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
    /// Convert a training trace CSV into per-figure (x, y) series files.
    ExportPlots {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
}

fn parse_session_length(s: &str) -> std::result::Result<usize, String> {
    match s {
        "50" => Ok(50),
        "300" => Ok(300),
        other => Err(format!("session-length must be 50 or 300, got {other}")),
    }
}

/// Write through a temp file in the target directory, then rename, so
/// a failed run never leaves a partial output.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    write(&tmp)?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_or_generate_catalog(path: &Option<PathBuf>, cfg: &TrainConfig) -> Result<Catalog> {
    match path {
        Some(p) => Catalog::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(generate_catalog(
            cfg.n_items,
            cfg.embed_dim,
            cfg.n_clusters,
            cfg.item_noise,
            &mut stream_rng(cfg.seed, Stream::Catalog),
        )?),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad value '{t}'"))
        })
        .collect()
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed '{t}'"))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCatalog {
            catalog,
            config,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let cat = generate_catalog(
                cfg.n_items,
                cfg.embed_dim,
                cfg.n_clusters,
                cfg.item_noise,
                &mut stream_rng(cfg.seed, Stream::Catalog),
            )?;
            write_atomic(&catalog, |p| Ok(cat.save(p)?))?;
            println!(
                "wrote catalog: {} items, dim {}, {} clusters -> {}",
                cfg.n_items,
                cfg.embed_dim,
                cfg.n_clusters,
                catalog.display()
            );
        }
        Command::GenLogs {
            catalog,
            logs,
            sessions,
            session_length,
            policy,
            config,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let cat = Catalog::load(&catalog)?;
            let policy = LogPolicy::parse(&policy)?;
            let records = generate_logs(
                sessions,
                session_length,
                &cat,
                policy,
                cfg.user_params(),
                cfg.seed,
            )?;
            let events: usize = records.iter().map(|r| r.events.len()).sum();
            write_atomic(&logs, |p| Ok(write_logs(p, &records)?))?;
            println!(
                "wrote {} sessions ({events} events) -> {}",
                records.len(),
                logs.display()
            );
        }
        Command::TrainSimulator {
            catalog,
            logs,
            out_dir,
            config,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            ensure_out_dir(&out_dir)?;
            let cat = Catalog::load(&catalog)?;
            let records = read_logs(&logs)?;
            let sim_cfg = SimTrainConfig {
                dims: cfg.dims(),
                n_window: cfg.n_window,
                ..SimTrainConfig::default()
            };
            let (_, report) = train_simulator(
                &records,
                &cat,
                &sim_cfg,
                &mut stream_rng(cfg.seed, Stream::InitSimulator),
            )?;
            let text = format!(
                "{{\"holdout_accuracy\": {}, \"precision_skip\": {}, \"precision_click\": {}, \"precision_order\": {}, \"degenerate\": {}, \"n_train\": {}, \"n_holdout\": {}}}\n",
                report.holdout_accuracy,
                fmt_opt(report.per_class_precision[0]),
                fmt_opt(report.per_class_precision[1]),
                fmt_opt(report.per_class_precision[2]),
                report.degenerate,
                report.n_train,
                report.n_holdout,
            );
            let out = out_dir.join("simulator_report.txt");
            write_atomic(&out, |p| Ok(std::fs::write(p, &text)?))?;
            print!("{text}");
        }
        Command::Train {
            config,
            seed,
            catalog,
            out_dir,
            arm,
        } => {
            let cfg = load_config(&config, seed)?;
            let arm = ArmKind::parse(&arm)?;
            ensure_out_dir(&out_dir)?;
            let cat = load_or_generate_catalog(&catalog, &cfg)?;

            let mut arm_cfg = cfg.clone();
            arm.apply(&mut arm_cfg);
            write_atomic(&out_dir.join("config_used.cfg"), |p| {
                Ok(arm_cfg.save(p)?)
            })?;

            match arm {
                ArmKind::Dnn => {
                    let out = run_baseline(arm, &cfg, &cat)?;
                    write_trace(&out.trace, &out_dir)?;
                    write_atomic(&out_dir.join("online_report.csv"), |p| {
                        Ok(out.online.write_csv(p)?)
                    })?;
                    write_atomic(&out_dir.join("online_summary.txt"), |p| {
                        Ok(std::fs::write(p, out.online.summary_text())?)
                    })?;
                    println!(
                        "arm dnn: mean reward {:.3}, clicks {:.2}, orders {:.2} (no checkpoint for this arm)",
                        out.online.mean_reward(),
                        out.online.mean_clicks(),
                        out.online.mean_orders()
                    );
                }
                _ => {
                    let out = run_training(&arm_cfg, &cat)?;
                    write_trace(&out.trace, &out_dir)?;
                    let ckpt = out_dir.join("model.ckpt");
                    write_atomic(&ckpt, |p| {
                        Ok(save_checkpoint(
                            p,
                            &out.low,
                            out.high.as_ref(),
                            arm_cfg.dims(),
                            arm_cfg.n_window,
                        )?)
                    })?;
                    let total_reward: f64 =
                        out.trace.sessions.iter().map(|s| s.reward).sum();
                    println!(
                        "arm {}: {} sessions, cumulative training reward {:.1} -> {}",
                        arm.as_str(),
                        out.trace.sessions.len(),
                        total_reward,
                        ckpt.display()
                    );
                }
            }
        }
        Command::EvalOnline {
            checkpoint,
            catalog,
            config,
            seed,
            sessions,
            session_length,
            out_dir,
        } => {
            let mut cfg = load_config(&config, seed)?;
            if let Some(n) = sessions {
                cfg.eval_sessions = n;
            }
            if let Some(len) = session_length {
                cfg.eval_len = len;
            }
            ensure_out_dir(&out_dir)?;
            let cat = load_or_generate_catalog(&catalog, &cfg)?;
            let (low, _high, meta) = load_checkpoint(&checkpoint)?;
            if meta.dims.embed_dim != cat.dim() {
                bail!(
                    "checkpoint embed_dim {} does not match catalog dim {}",
                    meta.dims.embed_dim,
                    cat.dim()
                );
            }
            let mut eval_cfg = EvalCfg::from_train(&cfg);
            eval_cfg.n_window = meta.n_window;
            eval_cfg.bound = meta.bound();
            eval_cfg.embed_dim = meta.dims.embed_dim;
            let report = online_test(&low.actor, &cat, &eval_cfg, cfg.seed)?;
            write_atomic(&out_dir.join("online_report.csv"), |p| {
                Ok(report.write_csv(p)?)
            })?;
            write_atomic(&out_dir.join("online_summary.txt"), |p| {
                Ok(std::fs::write(p, report.summary_text())?)
            })?;
            print!("{}", report.summary_text());
        }
        Command::EvalOffline {
            checkpoint,
            catalog,
            logs,
            out_dir,
        } => {
            ensure_out_dir(&out_dir)?;
            let cat = Catalog::load(&catalog)?;
            let records = read_logs(&logs)?;
            let (low, _high, meta) = load_checkpoint(&checkpoint)?;
            let (report, per_session) =
                offline_test(&low.actor, &records, &cat, meta.n_window, meta.bound())?;
            write_atomic(&out_dir.join("offline_report.csv"), |p| {
                Ok(report.write_csv(p, &per_session)?)
            })?;
            write_atomic(&out_dir.join("offline_summary.txt"), |p| {
                Ok(std::fs::write(p, report.summary_text())?)
            })?;
            print!("{}", report.summary_text());
        }
        Command::Sweep {
            param,
            values,
            seeds,
            config,
            catalog,
            out_dir,
            workers,
        } => {
            let cfg = load_config(&config, None)?;
            let param = SweepParam::parse(&param)?;
            let values = parse_f64_list(&values)?;
            let seeds = parse_u64_list(&seeds)?;
            ensure_out_dir(&out_dir)?;
            let cat = load_or_generate_catalog(&catalog, &cfg)?;
            let arms = run_sweep(param, &values, &seeds, &cfg, &cat, workers)?;
            let paths = write_sweep_csvs(param, &arms, &out_dir)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::ExportPlots { trace, out_dir } => {
            ensure_out_dir(&out_dir)?;
            let steps = TrainTrace::read_steps_csv(&trace)?;
            export_plots(&steps, &out_dir)?;
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "null".into())
}

fn write_trace(trace: &TrainTrace, out_dir: &Path) -> Result<()> {
    write_atomic(&out_dir.join("trace.csv"), |p| {
        Ok(trace.write_steps_csv(p)?)
    })?;
    write_atomic(&out_dir.join("sessions.csv"), |p| {
        Ok(trace.write_sessions_csv(p)?)
    })?;
    Ok(())
}

/// Per-figure (x, y) series derived from a step trace: per-session
/// reward/clicks/orders curves and the per-step critic loss.
fn export_plots(steps: &[hrlrec_core::trainer::StepRecord], out_dir: &Path) -> Result<()> {
    use hrlrec_core::env::Feedback;
    use std::fmt::Write as _;

    let mut per_session: Vec<(u32, f64, u32, u32)> = Vec::new();
    for s in steps {
        if per_session.last().map(|p| p.0) != Some(s.session) {
            per_session.push((s.session, 0.0, 0, 0));
        }
        let last = per_session.last_mut().unwrap();
        last.1 += s.r_ex;
        match s.feedback {
            Feedback::Click => last.2 += 1,
            Feedback::Order => {
                last.2 += 1;
                last.3 += 1;
            }
            _ => {}
        }
    }

    let mut reward = String::from("session,reward\n");
    let mut clicks = String::from("session,clicks\n");
    let mut orders = String::from("session,orders\n");
    for (sid, r, c, o) in &per_session {
        let _ = writeln!(reward, "{sid},{r}");
        let _ = writeln!(clicks, "{sid},{c}");
        let _ = writeln!(orders, "{sid},{o}");
    }
    let mut loss = String::from("step,lc_loss\n");
    for (i, s) in steps.iter().enumerate().filter(|(_, s)| s.updated) {
        let _ = writeln!(loss, "{i},{}", s.lc_loss);
    }

    for (name, body) in [
        ("session_reward.csv", reward),
        ("session_clicks.csv", clicks),
        ("session_orders.csv", orders),
        ("critic_loss.csv", loss),
    ] {
        write_atomic(&out_dir.join(name), |p| Ok(std::fs::write(p, &body)?))?;
        println!("wrote {}", out_dir.join(name).display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
