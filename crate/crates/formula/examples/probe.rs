//! Temporary timing/behavior probe. Not part of the deliverable.

use std::time::Instant;

use formula::nn_cbf::{
    sign_agreement, stage1_pretrain, stage2_finetune, MlpParams, SampleSpace, TrainConfig,
};
use formula::scenario;
use formula::sim::{self, compute_metrics, ControllerKind, SimOptions};

fn load_probe_model() -> MlpParams {
    let p2 = std::path::Path::new("/tmp/probe_model2.json");
    let p1 = std::path::Path::new("/tmp/probe_model.json");
    formula::nn_cbf::load_model(if p2.exists() { p2 } else { p1 }).unwrap()
}

fn rollout_probe(name: &str, kind: ControllerKind, model: Option<&MlpParams>, seed: u64) {
    let sc = scenario::by_name(name, seed).unwrap();
    let opts = SimOptions::default();
    let t = Instant::now();
    let log = sim::run(&sc, kind, model, &opts).unwrap();
    let m = compute_metrics(&log, &sc).unwrap();
    println!(
        "{name}/{kind}/seed{seed}: wall {:.2}s steps {} safety {:.4} err {:.4} mind {:.3} done {} errs {}",
        t.elapsed().as_secs_f64(),
        log.rows.len() / log.n_robots(),
        m.safety_rate,
        m.avg_formation_error,
        m.avg_min_distance,
        m.completion,
        log.errors.len()
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("train");

    match mode {
        "sweep" => {
            for (dyn_frac, r_lo) in [(0.0, 0.25), (0.1, 0.25), (0.0, 0.15), (0.1, 0.15), (0.05, 0.15)] {
                let space = SampleSpace { radius_range: [r_lo, 0.45], ..SampleSpace::default() };
                let cfg = TrainConfig {
                    epochs_stage1: 160,
                    dynamics_fraction: dyn_frac,
                    ..TrainConfig::default()
                };
                let run = stage1_pretrain(&cfg, &space, 42).unwrap();
                let agree = sign_agreement(&run.params, &space, 10_000, 999);
                // Zero-set radial bias over random obstacles incl. robot-sized.
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5150);
                let mut all = Vec::new();
                let mut robot_all = Vec::new();
                for trial in 0..80 {
                    let radius = if trial % 2 == 0 { 0.2 } else { rng.random_range(0.25..0.45) };
                    let obs = formula::barrier::Obstacle::new(
                        rng.random_range(-4.0..4.0),
                        rng.random_range(-1.8..1.8),
                        radius,
                    );
                    let keep_out = space.barrier.inflated_radius(&obs);
                    for k in 0..16 {
                        let ang = k as f64 / 16.0 * std::f64::consts::TAU;
                        let dir = [ang.cos(), ang.sin()];
                        let h_at = |d: f64| {
                            formula::nn_cbf::forward(
                                &run.params,
                                [obs.cx + d * dir[0], obs.cy + d * dir[1]],
                                &obs,
                            )
                        };
                        let (mut lo, mut hi) = (keep_out - 0.4, keep_out + 0.4);
                        if h_at(lo) >= 0.0 || h_at(hi) <= 0.0 {
                            continue;
                        }
                        for _ in 0..40 {
                            let mid = 0.5 * (lo + hi);
                            if h_at(mid) < 0.0 { lo = mid; } else { hi = mid; }
                        }
                        let err = 0.5 * (lo + hi) - keep_out;
                        if trial % 2 == 0 { robot_all.push(err); } else { all.push(err); }
                    }
                }
                let stat = |v: &mut Vec<f64>| {
                    v.sort_by(f64::total_cmp);
                    let n = v.len();
                    (n, v.iter().sum::<f64>() / n as f64, v[n / 10], v[9 * n / 10])
                };
                let (n_o, m_o, p10_o, p90_o) = stat(&mut all);
                let (n_r, m_r, p10_r, p90_r) = stat(&mut robot_all);
                println!(
                    "dyn {dyn_frac:.2} r_lo {r_lo:.2}: agree {agree:.4} | obs bias n{n_o} mean {m_o:+.4} [{p10_o:+.4},{p90_o:+.4}] | robot bias n{n_r} mean {m_r:+.4} [{p10_r:+.4},{p90_r:+.4}]"
                );
            }
        }
        "train" => {
            let cfg = TrainConfig::default();
            let space = SampleSpace::default();
            let t = Instant::now();
            let run = stage1_pretrain(&cfg, &space, 42).unwrap();
            println!("stage1 ({} epochs): {:.1}s", cfg.epochs_stage1, t.elapsed().as_secs_f64());
            let agree = sign_agreement(&run.params, &space, 10_000, 999);
            println!("agreement on 10k held-out: {agree}");
            std::fs::write(
                "/tmp/probe_model.json",
                formula::nn_cbf::model_to_json_string(&run.params).unwrap(),
            )
            .unwrap();
        }
        "rollout" => {
            let params = load_probe_model();
            for kind in ControllerKind::all() {
                let model = (kind == ControllerKind::Proposed).then_some(&params);
                rollout_probe("clutter-4f", kind, model, 0);
            }
        }
        "stage2" => {
            let params =
                formula::nn_cbf::load_model(std::path::Path::new("/tmp/probe_model.json")).unwrap();
            let cfg = TrainConfig::default();
            let space = SampleSpace::default();
            let opts = SimOptions::default();
            let t = Instant::now();
            let mut harvest = Vec::new();
            for seed in 0..3u64 {
                let sc = scenario::by_name("clutter-4f", seed).unwrap();
                let (_, h) =
                    sim::run_with_harvest(&sc, ControllerKind::Proposed, Some(&params), &opts)
                        .unwrap();
                harvest.extend(h);
            }
            println!("harvest: {} samples in {:.1}s", harvest.len(), t.elapsed().as_secs_f64());
            let t = Instant::now();
            let run2 = stage2_finetune(&params, &cfg, &space, &harvest, 7).unwrap();
            println!("stage2: {:.1}s", t.elapsed().as_secs_f64());
            let a1 = sign_agreement(&params, &space, 10_000, 999);
            let a2 = sign_agreement(&run2.params, &space, 10_000, 999);
            println!("agreement stage1 {a1} stage2 {a2} (degradation {})", a1 - a2);
            std::fs::write(
                "/tmp/probe_model2.json",
                formula::nn_cbf::model_to_json_string(&run2.params).unwrap(),
            )
            .unwrap();
        }
        "c78" => {
            let params = load_probe_model();
            let opts = SimOptions::default();

            // Criterion 7 shape: intersection with and without resolver.
            let sc = scenario::by_name("intersection-4", 0).unwrap();
            let t = Instant::now();
            let log = sim::run(&sc, ControllerKind::Proposed, Some(&params), &opts).unwrap();
            let m = compute_metrics(&log, &sc).unwrap();
            println!(
                "intersection resolver=on: wall {:.2}s safety {:.4} done {} triggers {}",
                t.elapsed().as_secs_f64(),
                m.safety_rate,
                m.completion,
                log.deadlock_triggers
            );
            let opts_off = SimOptions { resolver_enabled: false, ..opts };
            let log2 = sim::run(&sc, ControllerKind::Proposed, Some(&params), &opts_off).unwrap();
            let m2 = compute_metrics(&log2, &sc).unwrap();
            let stalls: Vec<f64> = (0..4).map(|r| log2.longest_stall(r, 0.05)).collect();
            println!(
                "intersection resolver=off: safety {:.4} done {} stalls {:?}",
                m2.safety_rate, m2.completion, stalls
            );

            // Criterion 8 shape: corridor convergence during cruise.
            let sc = scenario::by_name("corridor-2f", 0).unwrap();
            let log = sim::run(&sc, ControllerKind::Proposed, Some(&params), &opts).unwrap();
            // For each follower: first time from which j_clf < 1e-4 and e_norm < 1e-2.
            for robot in 0..2 {
                let mut hit: Option<f64> = None;
                for row in log.rows.iter().filter(|r| r.robot == robot) {
                    if row.j_clf < 1e-4 && row.e_norm < 1e-2 {
                        hit = Some(row.time);
                        break;
                    }
                }
                let min_e = log
                    .rows
                    .iter()
                    .filter(|r| r.robot == robot)
                    .map(|r| r.e_norm)
                    .fold(f64::INFINITY, f64::min);
                let min_j = log
                    .rows
                    .iter()
                    .filter(|r| r.robot == robot)
                    .map(|r| r.j_clf)
                    .fold(f64::INFINITY, f64::min);
                println!("corridor follower {robot}: first-hit {hit:?} min_e {min_e:.5} min_j {min_j:.7}");
            }
        }
        "c8" => {
            // Per-step trace of follower 0 on corridor with proposed.
            let params = load_probe_model();
            let opts = SimOptions::default();
            let sc = scenario::by_name("corridor-2f", 0).unwrap();
            let log = sim::run(&sc, ControllerKind::Proposed, Some(&params), &opts).unwrap();
            for row in log.rows.iter().filter(|r| r.robot == 0).step_by(20) {
                println!(
                    "t {:5.2} e {:.5} j {:.7} v {:.3}",
                    row.time, row.e_norm, row.j_clf, row.state.v
                );
            }
        }
        "size8" => {
            let params = load_probe_model();
            for kind in ControllerKind::all() {
                let model = (kind == ControllerKind::Proposed).then_some(&params);
                rollout_probe("clutter-8f", kind, model, 0);
            }
            for kind in ControllerKind::all() {
                let model = (kind == ControllerKind::Proposed).then_some(&params);
                rollout_probe("triangle-2f", kind, model, 0);
            }
        }
        "levelset" => {
            let params = load_probe_model();
            let space = SampleSpace::default();
            let cfg = space.barrier;
            let eval_obs = |obs: &formula::barrier::Obstacle, label: &str| {
                let keep_out = cfg.inflated_radius(obs);
                let mut errs = Vec::new();
                for k in 0..64 {
                    let ang = k as f64 / 64.0 * std::f64::consts::TAU;
                    let dir = [ang.cos(), ang.sin()];
                    // Bisect h=0 along the ray between keep_out-0.4 and keep_out+0.4.
                    let h_at = |d: f64| {
                        formula::nn_cbf::forward(
                            &params,
                            [obs.cx + d * dir[0], obs.cy + d * dir[1]],
                            obs,
                        )
                    };
                    let (mut lo, mut hi) = (keep_out - 0.4, keep_out + 0.4);
                    if h_at(lo) >= 0.0 || h_at(hi) <= 0.0 {
                        continue; // no crossing in window
                    }
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        if h_at(mid) < 0.0 { lo = mid; } else { hi = mid; }
                    }
                    errs.push(0.5 * (lo + hi) - keep_out);
                }
                let n = errs.len().max(1) as f64;
                let mean = errs.iter().sum::<f64>() / n;
                let min = errs.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                println!("{label}: crossings {} mean {mean:+.4} min {min:+.4} max {max:+.4}", errs.len());
            };
            let sc = scenario::by_name("clutter-4f", 0).unwrap();
            for (i, obs) in sc.obstacles.iter().enumerate() {
                eval_obs(obs, &format!("clutter-4f obs{i} r={:.2} at ({:+.2},{:+.2})", obs.radius, obs.cx, obs.cy));
            }
            // Global bias over random obstacles.
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5150);
            let mut all = Vec::new();
            for _ in 0..60 {
                use rand::Rng;
                let obs = formula::barrier::Obstacle::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-1.8..1.8),
                    rng.random_range(0.25..0.45),
                );
                let keep_out = cfg.inflated_radius(&obs);
                for k in 0..16 {
                    let ang = k as f64 / 16.0 * std::f64::consts::TAU;
                    let dir = [ang.cos(), ang.sin()];
                    let h_at = |d: f64| formula::nn_cbf::forward(&params, [obs.cx + d * dir[0], obs.cy + d * dir[1]], &obs);
                    let (mut lo, mut hi) = (keep_out - 0.4, keep_out + 0.4);
                    if h_at(lo) >= 0.0 || h_at(hi) <= 0.0 { continue; }
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        if h_at(mid) < 0.0 { lo = mid; } else { hi = mid; }
                    }
                    all.push(0.5 * (lo + hi) - keep_out);
                }
            }
            all.sort_by(f64::total_cmp);
            let n = all.len();
            println!(
                "global: n {} mean {:+.4} p10 {:+.4} p50 {:+.4} p90 {:+.4}",
                n,
                all.iter().sum::<f64>() / n as f64,
                all[n / 10],
                all[n / 2],
                all[9 * n / 10]
            );
        }
        "rates" => {
            let params = load_probe_model();
            let name = args.get(2).map(String::as_str).unwrap_or("clutter-4f");
            let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
            let sc = scenario::by_name(name, seed).unwrap();
            let opts = SimOptions::default();
            for kind in ControllerKind::all() {
                let model = (kind == ControllerKind::Proposed).then_some(&params);
                let log = sim::run(&sc, kind, model, &opts).unwrap();
                let n_robots = log.n_robots();
                let steps = log.rows.len() / n_robots;
                let r_rob = log.r_rob;
                let mut per_step = Vec::with_capacity(steps);
                let mut obs_min_acc = 0.0f64;
                let mut pair_min_acc = 0.0f64;
                for s_idx in 0..steps {
                    let chunk = &log.rows[s_idx * n_robots..(s_idx + 1) * n_robots];
                    let mut obs_min = f64::INFINITY;
                    let mut pair_min = f64::INFINITY;
                    for r in chunk {
                        for ob in &sc.obstacles {
                            obs_min = obs_min.min(ob.surface_distance(r.state.position(), r_rob));
                        }
                    }
                    for (i, a) in chunk.iter().enumerate() {
                        for b in &chunk[i + 1..] {
                            let d = ((a.state.px - b.state.px).powi(2)
                                + (a.state.py - b.state.py).powi(2))
                            .sqrt();
                            pair_min = pair_min.min(d - 2.0 * r_rob);
                        }
                    }
                    per_step.push(obs_min.min(pair_min));
                    obs_min_acc += obs_min.min(5.0);
                    pair_min_acc += pair_min;
                }
                let rate = |thr: f64| {
                    per_step.iter().filter(|&&d| d >= thr).count() as f64 / steps as f64
                };
                let total_stall: f64 =
                    (0..n_robots).map(|r| log.longest_stall(r, 0.05)).fold(0.0, f64::max);
                let e_sum: f64 = log
                    .rows
                    .iter()
                    .filter(|r| r.role == sim::Role::Follower)
                    .map(|r| r.e_norm)
                    .sum();
                let e_count =
                    log.rows.iter().filter(|r| r.role == sim::Role::Follower).count();
                println!(
                    "{name}/{seed}/{kind}: r25 {:.3} r30 {:.3} r35 {:.3} | e_avg {:.3} | obs-min {:.3} pair-min {:.3} | stall {:.1}s | err {} trig {}",
                    rate(0.25),
                    rate(0.30),
                    rate(0.35),
                    e_sum / e_count as f64,
                    obs_min_acc / steps as f64,
                    pair_min_acc / steps as f64,
                    total_stall,
                    log.errors.len(),
                    log.deadlock_triggers
                );
            }
        }
        "mpctrace" => {
            let name = args.get(2).map(String::as_str).unwrap_or("clutter-4f");
            let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
            let sc = scenario::by_name(name, seed).unwrap();
            let opts = SimOptions::default();
            let log = sim::run(&sc, ControllerKind::MpcCbf, None, &opts).unwrap();
            let n_robots = log.n_robots();
            let steps = log.rows.len() / n_robots;
            println!("obstacles:");
            for ob in &sc.obstacles {
                println!("  ({:+.2},{:+.2}) r {:.2}", ob.cx, ob.cy, ob.radius);
            }
            for s_idx in (0..steps).step_by(20) {
                let chunk = &log.rows[s_idx * n_robots..(s_idx + 1) * n_robots];
                print!("t {:5.1}", chunk[0].time);
                for r in chunk {
                    let mut obs_min = f64::INFINITY;
                    for ob in &sc.obstacles {
                        obs_min = obs_min.min(ob.surface_distance(r.state.position(), log.r_rob));
                    }
                    print!(
                        " | {}:({:+.2},{:+.2}) v{:.2} d{:.2} e{:.2}",
                        r.robot, r.state.px, r.state.py, r.state.v, obs_min, r.e_norm
                    );
                }
                println!();
            }
        }
        "wedge" => {
            use formula::baselines::{MpcCbf, MpcCbfConfig};
            let sc = scenario::by_name("clutter-4f", 1).unwrap();
            let x0 = formula::dynamics::RobotState::new(-2.34, 1.32, 0.0, 0.0);
            let xhat0 = formula::dynamics::RobotState::new(1.12, 1.2, 0.0, 0.5);
            let xhat_dot = [0.5, 0.0, 0.0, 0.0];
            let _ = MpcCbfConfig::new(0.15);
            let _: Option<MpcCbf> = None;
            let limits = formula::dynamics::Limits::default();
            let barrier_cfg = formula::barrier::BarrierConfig::default();
            let (q, r, alpha, weight) = ([10.0, 10.0, 1.0, 1.0], [1.0, 1.0], 1.0, 1e3);
            for plan_dt in [0.15, 0.2, 0.25, 0.3, 0.35] {
            println!("== plan dt {plan_dt} ==");
            let n = 10usize;
            let obstacles = sc.obstacles.clone();
            let eval = |u: &[f64]| -> (f64, f64, [f64; 2]) {
                let mut states = vec![x0];
                for k in 0..n {
                    let uk = formula::dynamics::ControlInput::new(u[2 * k], u[2 * k + 1]);
                    states.push(
                        formula::dynamics::step(&states[k], &uk, plan_dt, &limits).unwrap(),
                    );
                }
                let mut value = 0.0;
                for k in 1..=n {
                    let xhat_k = formula::dynamics::RobotState::new(
                        xhat0.px + k as f64 * plan_dt * xhat_dot[0],
                        xhat0.py + k as f64 * plan_dt * xhat_dot[1],
                        xhat0.theta,
                        xhat0.v,
                    );
                    let e = formula::formation::tracking_error(&states[k], &xhat_k).0;
                    for c in 0..4 {
                        value += q[c] * e[c] * e[c] * plan_dt;
                    }
                }
                for k in 0..n {
                    value += (r[0] * u[2 * k] * u[2 * k] + r[1] * u[2 * k + 1] * u[2 * k + 1])
                        * plan_dt;
                }
                let mut pen = 0.0;
                let decay = 1.0 - alpha * plan_dt;
                for k in 0..n {
                    for obs in &obstacles {
                        let hk =
                            formula::barrier::value(states[k].position(), obs, &barrier_cfg);
                        let hk1 = formula::barrier::value(
                            states[k + 1].position(),
                            obs,
                            &barrier_cfg,
                        );
                        let viol = decay * hk - hk1;
                        if viol > 0.0 {
                            pen += weight * viol;
                        }
                    }
                }
                let end = states[n].position();
                (value + pen, pen, end)
            };

            let parked = vec![0.0; 2 * n];
            let mut arc = Vec::new();
            for _ in 0..n {
                arc.extend_from_slice(&[1.0, -1.0]);
            }
            let pivot_w = (std::f64::consts::FRAC_PI_2 / (n as f64 / 2.0 * plan_dt)).min(2.0);
            let mut pivot = Vec::new();
            let mut pivot_l = Vec::new();
            for k in 0..n {
                if k < n / 2 {
                    pivot.extend_from_slice(&[0.0, -pivot_w]);
                    pivot_l.extend_from_slice(&[0.0, pivot_w]);
                } else {
                    pivot.extend_from_slice(&[1.5, 0.0]);
                    pivot_l.extend_from_slice(&[1.5, 0.0]);
                }
            }
            for (label, u) in [
                ("parked", parked),
                ("arc-right", arc),
                ("pivot-right", pivot),
                ("pivot-left", pivot_l),
            ]
            {
                let (v, pen, end) = eval(&u);
                println!(
                    "{label:12} raw value {v:9.2} penalty {pen:8.2} end ({:+.2},{:+.2})",
                    end[0], end[1]
                );
                // Refine with finite-difference gradients.
                let mut uu = u.clone();
                let lower: Vec<f64> = (0..n).flat_map(|_| [limits.a_min, limits.omega_min]).collect();
                let upper: Vec<f64> = (0..n).flat_map(|_| [limits.a_max, limits.omega_max]).collect();
                let res = formula::solver::minimize_box(
                    &mut uu,
                    &lower,
                    &upper,
                    &formula::solver::DescentConfig { max_iters: 2000, ..Default::default() },
                    |u, grad| {
                        if let Some(g) = grad {
                            let h = 1e-6;
                            let mut up = u.to_vec();
                            for i in 0..u.len() {
                                up[i] = u[i] + h;
                                let fp = eval(&up).0;
                                up[i] = u[i] - h;
                                let fm = eval(&up).0;
                                up[i] = u[i];
                                g[i] = (fp - fm) / (2.0 * h);
                            }
                        }
                        eval(u).0
                    },
                );
                let (v, pen, end) = eval(&uu);
                println!(
                    "  refined ({:4} its) value {v:9.2} penalty {pen:8.2} end ({:+.2},{:+.2}) first a {:+.2} w {:+.2}",
                    res.iterations, end[0], end[1], uu[0], uu[1]
                );
            }
            }
        }
        other => panic!("unknown probe mode {other}"),
    }
}
// Appended probe: learned zero-set radial error around obstacles.
