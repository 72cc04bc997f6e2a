//! Parameter-sensitivity sweeps over the internal-reward weight α and
//! the goal count M: one trained-and-evaluated arm per (value, seed),
//! fanned out across worker threads, with plot-ready CSV output
//! (cumulative reward, clicks, orders — one file per panel).

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::catalog::Catalog;
use crate::error::{CoreError, Result};
use crate::eval::online::{online_test, EvalCfg, OnlineReport};
use crate::trainer::{run_training, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    NumGoals,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<SweepParam> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "m" | "M" | "num_goals" => Ok(SweepParam::NumGoals),
            other => Err(CoreError::InvalidParameter(format!(
                "unknown sweep parameter '{other}' (expected alpha or M)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::NumGoals => "m",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepArm {
    pub value: f64,
    pub seed: u64,
    pub online: OnlineReport,
    /// The per-step recommended item ids of the training run.
    pub items: Vec<u64>,
}

fn arm_config(param: SweepParam, value: f64, seed: u64, base: &TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    match param {
        SweepParam::Alpha => {
            if value < 0.0 {
                return Err(CoreError::InvalidParameter(format!(
                    "alpha must be >= 0, got {value}"
                )));
            }
            cfg.alpha = value;
        }
        SweepParam::NumGoals => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CoreError::InvalidParameter(format!(
                    "M must be a positive integer, got {value}"
                )));
            }
            cfg.num_goals = value as usize;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run the full grid. Requires at least 2 values and 3 seeds. Arms run
/// in parallel worker threads; results are ordered by (value, seed).
pub fn run_sweep(
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
    base: &TrainConfig,
    catalog: &Catalog,
    workers: usize,
) -> Result<Vec<SweepArm>> {
    if values.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "sweep needs at least 2 values".into(),
        ));
    }
    if seeds.len() < 3 {
        return Err(CoreError::InvalidParameter(
            "sweep needs at least 3 seeds".into(),
        ));
    }
    let grid: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    // Validate every arm config up front so failures happen before any
    // training time is spent.
    for &(v, s) in &grid {
        arm_config(param, v, s, base)?;
    }

    let workers = workers.max(1);
    let mut slots: Vec<Option<Result<SweepArm>>> = Vec::new();
    slots.resize_with(grid.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);

    std::thread::scope(|scope| {
        let grid = &grid;
        let next = &next;
        let results = &results;
        for _ in 0..workers.min(grid.len()) {
            scope.spawn(move || loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= grid.len() {
                    break;
                }
                let (value, seed) = grid[i];
                let out = (|| {
                    let cfg = arm_config(param, value, seed, base)?;
                    let trained = run_training(&cfg, catalog)?;
                    let online =
                        online_test(&trained.low.actor, catalog, &EvalCfg::from_train(&cfg), seed)?;
                    Ok(SweepArm {
                        value,
                        seed,
                        online,
                        items: trained.trace.steps.iter().map(|s| s.item_id).collect(),
                    })
                })();
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    slots
        .into_iter()
        .map(|r| r.expect("every arm visited"))
        .collect()
}

/// Write the three plot panels: `sweep_<param>_{reward,clicks,orders}.csv`,
/// each with exactly one row per (value, seed).
pub fn write_sweep_csvs(
    param: SweepParam,
    arms: &[SweepArm],
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for (metric, extract) in [
        ("reward", (|a: &SweepArm| a.online.mean_reward()) as fn(&SweepArm) -> f64),
        ("clicks", |a| a.online.mean_clicks()),
        ("orders", |a| a.online.mean_orders()),
    ] {
        let path = out_dir.join(format!("sweep_{}_{metric}.csv", param.as_str()));
        let file = std::fs::File::create(&path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| CoreError::io(path.display().to_string(), e);
        writeln!(w, "{},seed,{metric}", param.as_str()).map_err(io_err)?;
        for arm in arms {
            writeln!(w, "{},{},{}", arm.value, arm.seed, extract(arm)).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_catalog;
    use crate::rng::{stream_rng, Stream};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            embed_dim: 5,
            n_window: 3,
            gru_hidden: 2,
            state_dim: 5,
            eval_hidden: 3,
            period: 4,
            num_goals: 2,
            low_batch: 4,
            high_batch: 2,
            warmup_min: 6,
            sessions: 2,
            session_len: 10,
            n_items: 30,
            n_clusters: 3,
            leave_base: 0.0,
            eval_sessions: 2,
            eval_len: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sweep_grid_is_complete_and_csvs_have_expected_rows() {
        let cfg = tiny_cfg();
        let cat = generate_catalog(30, 5, 3, 0.2, &mut stream_rng(7, Stream::Catalog)).unwrap();
        let arms = run_sweep(
            SweepParam::Alpha,
            &[0.0, 0.5],
            &[1, 2, 3],
            &cfg,
            &cat,
            2,
        )
        .unwrap();
        assert_eq!(arms.len(), 6);

        let dir = tempfile::tempdir().unwrap();
        let paths = write_sweep_csvs(SweepParam::Alpha, &arms, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            let text = std::fs::read_to_string(p).unwrap();
            assert_eq!(text.lines().count(), 1 + 6, "{}", text);
        }
    }

    #[test]
    fn sweep_validates_inputs() {
        let cfg = tiny_cfg();
        let cat = generate_catalog(30, 5, 3, 0.2, &mut stream_rng(7, Stream::Catalog)).unwrap();
        assert!(run_sweep(SweepParam::Alpha, &[0.5], &[1, 2, 3], &cfg, &cat, 1).is_err());
        assert!(run_sweep(SweepParam::Alpha, &[0.0, 0.5], &[1, 2], &cfg, &cat, 1).is_err());
        assert!(run_sweep(SweepParam::NumGoals, &[1.5, 2.0], &[1, 2, 3], &cfg, &cat, 1).is_err());
    }
}
