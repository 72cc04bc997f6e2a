// Temporary sizing experiments; removed before release.

use hrlrec_core::catalog::{generate_catalog, Catalog};
use hrlrec_core::eval::online::{run_online_sessions, EvalCfg};
use hrlrec_core::eval::{run_baseline, ArmKind};
use hrlrec_core::numerics::{OptimKind, Tensor1};
use hrlrec_core::rng::{stream_rng, Stream};
use hrlrec_core::trainer::TrainConfig;
use rand::Rng;

fn c5_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        gru_hidden: 16,
        eval_hidden: 64,
        optimizer: OptimKind::Adam,
        actor_lr: 1e-3,
        critic_lr: 2e-3,
        low_batch: 32,
        high_batch: 8,
        warmup_min: 200,
        update_every: 1,
        sessions: 200,
        session_len: 60,
        eval_sessions: 10,
        eval_len: 300,
        seed,
        ..TrainConfig::default()
    }
}

fn shared_catalog(base: &TrainConfig) -> Catalog {
    generate_catalog(
        base.n_items,
        base.embed_dim,
        base.n_clusters,
        base.item_noise,
        &mut stream_rng(7777, Stream::Catalog),
    )
    .unwrap()
}

#[test]
#[ignore]
fn heuristic_ceiling_reference() {
    let base = c5_cfg(0);
    let catalog = shared_catalog(&base);
    for seed in [11u64, 12, 13] {
        let cfg = EvalCfg::from_train(&c5_cfg(seed));
        let mut rng = stream_rng(seed, Stream::DnnPolicy);
        let report = run_online_sessions(&catalog, &cfg, seed, |state, active, cat| {
            let clicks = state.click_refs(cat);
            if clicks.is_empty() {
                let k = rng.random_range(0..active.len());
                let idx = active.indices().nth(k).unwrap();
                active.remove(idx);
                return Ok(idx);
            }
            let mut mean = Tensor1::zeros(cat.dim());
            for c in &clicks {
                mean.add_assign(c);
            }
            let mut best = (f64::NEG_INFINITY, 0u32);
            for idx in active.indices() {
                let s = mean.dot(cat.unit(idx)).unwrap();
                if s > best.0 {
                    best = (s, idx);
                }
            }
            active.remove(best.1);
            Ok(best.1)
        })
        .unwrap();
        println!(
            "click-mean seed {seed}: reward {:7.2} clicks {:6.2} orders {:5.2} mean steps {:.0}",
            report.mean_reward(),
            report.mean_clicks(),
            report.mean_orders(),
            report.sessions.iter().map(|s| s.steps as f64).sum::<f64>() / 10.0
        );
    }
}

#[test]
#[ignore]
fn ddpg_learning_probe() {
    let base = c5_cfg(11);
    let catalog = shared_catalog(&base);
    for (label, cfg) in [
        ("H16 ue1", base.clone()),
        (
            "H8 ue1",
            TrainConfig {
                gru_hidden: 8,
                ..base.clone()
            },
        ),
    ] {
        let t0 = std::time::Instant::now();
        let out = run_baseline(ArmKind::Ddpg, &cfg, &catalog).unwrap();
        let n = out.trace.sessions.len();
        let early: f64 = out.trace.sessions[..20]
            .iter()
            .map(|s| s.reward)
            .sum::<f64>()
            / 20.0;
        let late: f64 = out.trace.sessions[n - 20..]
            .iter()
            .map(|s| s.reward)
            .sum::<f64>()
            / 20.0;
        println!(
            "{label}: train reward first20 {early:6.2} last20 {late:6.2} | eval reward {:7.2} clicks {:6.2} orders {:5.2} | {:5.1}s",
            out.online.mean_reward(),
            out.online.mean_clicks(),
            out.online.mean_orders(),
            t0.elapsed().as_secs_f64()
        );
    }
}

#[test]
#[ignore]
fn arm_comparison_probe() {
    let base = c5_cfg(0);
    let catalog = shared_catalog(&base);

    let seeds: Vec<u64> = (11..=13).collect();
    let arms = [ArmKind::HrlMg, ArmKind::Hrl, ArmKind::Ddpg, ArmKind::Dnn];
    let grid: Vec<(u64, ArmKind)> = seeds
        .iter()
        .flat_map(|&s| arms.iter().map(move |&a| (s, a)))
        .collect();

    let mut slots: Vec<Option<(u64, ArmKind, f64, f64, f64, f64)>> = vec![None; grid.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        let (grid, next, results) = (&grid, &next, &results);
        let catalog = &catalog;
        for _ in 0..2 {
            scope.spawn(move || loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= grid.len() {
                    break;
                }
                let (seed, arm) = grid[i];
                let t0 = std::time::Instant::now();
                let out = run_baseline(arm, &c5_cfg(seed), catalog).unwrap();
                results.lock().unwrap()[i] = Some((
                    seed,
                    arm,
                    out.online.mean_reward(),
                    out.online.mean_clicks(),
                    out.online.mean_orders(),
                    t0.elapsed().as_secs_f64(),
                ));
            });
        }
    });

    println!("seed arm      reward  clicks orders secs");
    for r in slots.iter().flatten() {
        let (seed, arm, rw, c, o, secs) = r;
        println!("{seed:4} {:7} {rw:7.2} {c:6.2} {o:6.2} {secs:5.1}", arm.as_str());
    }
    for seed in &seeds {
        let get = |kind: ArmKind| {
            slots
                .iter()
                .flatten()
                .find(|r| r.0 == *seed && r.1 == kind)
                .map(|r| (r.2, r.4))
                .unwrap()
        };
        let (mg, mg_o) = get(ArmKind::HrlMg);
        let (hrl, hrl_o) = get(ArmKind::Hrl);
        let (ddpg, _) = get(ArmKind::Ddpg);
        let (dnn, _) = get(ArmKind::Dnn);
        println!(
            "seed {seed}: mg>ddpg {} | ddpg>dnn {} | mg_orders>=hrl_orders {} ({mg:.1} vs {hrl:.1} vs {ddpg:.1} vs {dnn:.1}; orders {mg_o:.1} vs {hrl_o:.1})",
            mg > ddpg,
            ddpg > dnn,
            mg_o >= hrl_o
        );
    }
}

#[test]
#[ignore]
fn simulator_accuracy_probe() {
    use hrlrec_core::env::{generate_logs, train_simulator, LogPolicy, SimTrainConfig, UserParams};
    use hrlrec_core::heads::NetDims;

    // Criterion-6 candidate setup: d=16 catalog, sharp single-taste user.
    let dim = 16;
    let catalog =
        generate_catalog(400, dim, 8, 0.08, &mut stream_rng(606, Stream::Catalog)).unwrap();
    let sharp = UserParams {
        kappa_click: 8.0,
        kappa_order: 8.0,
        order_taste_noise: 0.0,
        leave_base: 0.0,
        ..UserParams::default()
    };
    let t0 = std::time::Instant::now();
    let logs = generate_logs(
        5000,
        20,
        &catalog,
        LogPolicy::HeuristicGreedy { epsilon: 0.3 },
        sharp,
        61,
    )
    .unwrap();
    let n_events: usize = logs.iter().map(|r| r.events.len()).sum();
    let mut counts = [0usize; 3];
    for r in &logs {
        for e in &r.events {
            if let Some(c) = e.feedback.class() {
                counts[c] += 1;
            }
        }
    }
    println!(
        "logs: {n_events} events, skip/click/order = {counts:?} ({:.0}s)",
        t0.elapsed().as_secs_f64()
    );

    let cfg = SimTrainConfig {
        dims: NetDims {
            embed_dim: dim,
            gru_hidden: 8,
            state_dim: dim,
            eval_hidden: 64,
        },
        n_window: 10,
        epochs: 3,
        batch_size: 32,
        lr: 2e-3,
        holdout_frac: 0.1,
    };
    let t1 = std::time::Instant::now();
    let (_, report) =
        train_simulator(&logs, &catalog, &cfg, &mut stream_rng(62, Stream::InitSimulator)).unwrap();
    println!(
        "simulator: holdout acc {:.4} (majority {:.4}), precision {:?}, n_train {}, n_holdout {} ({:.0}s)",
        report.holdout_accuracy,
        counts.iter().max().unwrap().clone() as f64 / n_events as f64,
        report.per_class_precision,
        report.n_train,
        report.n_holdout,
        t1.elapsed().as_secs_f64()
    );
}
