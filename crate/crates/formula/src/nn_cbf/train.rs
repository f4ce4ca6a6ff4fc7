//! Two-stage training of the barrier network.
//!
//! *Stage 1* pre-trains against the analytic squared-distance barrier: the
//! sampler mixes uniform workspace states with states concentrated in a
//! shell around each obstacle's inflated boundary (50/50), labels them by
//! the analytic sign, attaches the analytic value as a regression target,
//! and marks a fraction of safe samples as dynamics samples with reference
//! velocities drawn uniformly from the speed disc.
//!
//! *Stage 2* drops the regression anchor and fine-tunes on states actually
//! visited by closed-loop rollouts (plus near-boundary jitter of those
//! states), adding the filter-deviation term so the learned gradient field
//! stops fighting the nominal controller where it does not need to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::barrier::{self, BarrierConfig, Obstacle};

use super::adam::{Adam, AdamConfig};
use super::loss::{add_control_reg_terms, param_gradient, CbfLossConfig, CbfSample};
use super::mlp::{forward, MlpParams, PARAM_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },
    #[error("no harvested samples to fine-tune on")]
    NoHarvestData,
}

/// All knobs of both training stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: CbfLossConfig,
    /// Weight of the filter-deviation term in stage 2.
    pub control_reg_weight: f64,
    pub adam: AdamConfig,
    pub batch: usize,
    pub epochs_stage1: usize,
    pub batches_per_epoch: usize,
    pub epochs_stage2: usize,
    /// Fraction of eligible stage-1 samples promoted to dynamics samples.
    pub dynamics_fraction: f64,
    /// Fraction of each stage's final steps whose iterates are averaged
    /// into the returned parameters (0 disables averaging). Constant-rate
    /// Adam leaves the iterates jittering around the optimum; the tail
    /// average is much more stable than whichever iterate happens to come
    /// last.
    pub tail_average_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: CbfLossConfig::default(),
            control_reg_weight: 0.1,
            adam: AdamConfig::default(),
            batch: 512,
            epochs_stage1: 160,
            batches_per_epoch: 50,
            epochs_stage2: 3,
            dynamics_fraction: 0.05,
            tail_average_fraction: 0.25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch == 0 {
            return Err(TrainError::InvalidConfig("batch must be positive"));
        }
        if self.batches_per_epoch == 0 {
            return Err(TrainError::InvalidConfig("batches_per_epoch must be positive"));
        }
        if !(self.loss.margin > 0.0) {
            return Err(TrainError::InvalidConfig("margin must be positive"));
        }
        if !(0.0..=1.0).contains(&self.dynamics_fraction) {
            return Err(TrainError::InvalidConfig("dynamics_fraction must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.tail_average_fraction) {
            return Err(TrainError::InvalidConfig("tail_average_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Geometric domain the sampler draws robot/obstacle pairs from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpace {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub radius_range: [f64; 2],
    pub barrier: BarrierConfig,
    /// Speed-disc radius for sampled reference velocities.
    pub v_max: f64,
    /// Half-width of the boundary shell around the inflated radius.
    pub shell_width: f64,
}

impl Default for SampleSpace {
    fn default() -> Self {
        Self {
            x_range: [-5.0, 5.0],
            y_range: [-2.25, 2.25],
            // Covers scenario obstacles (0.25..0.45) and, crucially, other
            // robots seen as entities of radius r_rob = 0.2: evaluating the
            // network outside its training radius range extrapolates, and
            // the robot-robot boundary lands several centimetres inside the
            // true keep-out circle.
            radius_range: [0.15, 0.45],
            barrier: BarrierConfig::default(),
            v_max: 1.5,
            shell_width: 0.3,
        }
    }
}

impl SampleSpace {
    fn sample_obstacle<R: Rng>(&self, rng: &mut R) -> Obstacle {
        Obstacle::new(
            rng.random_range(self.x_range[0]..self.x_range[1]),
            rng.random_range(self.y_range[0]..self.y_range[1]),
            rng.random_range(self.radius_range[0]..self.radius_range[1]),
        )
    }

    /// One robot/obstacle pair: half uniform over the workspace, half in
    /// the shell straddling the obstacle's inflated boundary.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> ([f64; 2], Obstacle) {
        let obs = self.sample_obstacle(rng);
        let p = if rng.random_range(0.0..1.0) < 0.5 {
            [
                rng.random_range(self.x_range[0]..self.x_range[1]),
                rng.random_range(self.y_range[0]..self.y_range[1]),
            ]
        } else {
            let keep_out = self.barrier.inflated_radius(&obs);
            let d = (keep_out + rng.random_range(-self.shell_width..self.shell_width)).max(0.05);
            let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            [obs.cx + d * ang.cos(), obs.cy + d * ang.sin()]
        };
        (p, obs)
    }

    /// Velocity drawn uniformly from the disc of radius `v_max`.
    pub fn sample_velocity<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let r = self.v_max * rng.random_range(0.0f64..1.0).sqrt();
        let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        [r * ang.cos(), r * ang.sin()]
    }

    fn teacher_value(&self, p: [f64; 2], obs: &Obstacle) -> f64 {
        barrier::value(p, obs, &self.barrier)
    }
}

/// Trained parameters plus the per-batch loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub params: MlpParams,
    pub loss_curve: Vec<f64>,
}

/// Accumulates parameter iterates over the tail of an optimisation run.
struct TailAverager {
    start: usize,
    sum: Vec<f64>,
    count: usize,
}

impl TailAverager {
    fn new(total_steps: usize, fraction: f64) -> Self {
        let window = ((total_steps as f64 * fraction).round() as usize).min(total_steps);
        Self { start: total_steps - window, sum: vec![0.0; PARAM_COUNT], count: 0 }
    }

    fn observe(&mut self, step: usize, params: &MlpParams) {
        if step >= self.start {
            for (acc, p) in self.sum.iter_mut().zip(params.as_flat()) {
                *acc += p;
            }
            self.count += 1;
        }
    }

    /// The averaged tail, or the supplied final iterate when the window
    /// was empty.
    fn finish(self, last: MlpParams) -> MlpParams {
        if self.count == 0 {
            return last;
        }
        let inv = 1.0 / self.count as f64;
        MlpParams::from_flat(self.sum.into_iter().map(|s| s * inv).collect())
            .expect("parameter length is preserved")
    }
}

fn stage1_batch(
    space: &SampleSpace,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<CbfSample>,
) {
    out.clear();
    while out.len() < cfg.batch {
        let (p, obs) = space.sample_pair(rng);
        let h_true = space.teacher_value(p, &obs);
        let safe = h_true >= 0.0;
        // Dynamics samples come from the safe set only (including its side
        // of the boundary shell): the decrease condition is required to be
        // satisfiable where the robot is allowed to be, and asking for it at
        // unsafe states pushes the zero level set inward, directly fighting
        // the unsafe hinge.
        let sample = if safe && rng.random_range(0.0..1.0) < cfg.dynamics_fraction {
            CbfSample::dynamics(p, obs, space.sample_velocity(rng))
        } else if safe {
            CbfSample::safe(p, obs)
        } else {
            CbfSample::unsafe_at(p, obs)
        };
        out.push(sample.with_target(h_true));
    }
}

/// Stage 1: random initialisation, then Adam over freshly sampled batches
/// of teacher-labelled data.
pub fn stage1_pretrain(
    cfg: &TrainConfig,
    space: &SampleSpace,
    seed: u64,
) -> Result<TrainRun, TrainError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::random(&mut rng);
    let mut adam = Adam::new(cfg.adam, PARAM_COUNT);
    let mut batch = Vec::with_capacity(cfg.batch);
    let total_steps = cfg.epochs_stage1 * cfg.batches_per_epoch;
    let mut loss_curve = Vec::with_capacity(total_steps);
    let mut avg = TailAverager::new(total_steps, cfg.tail_average_fraction);

    for epoch in 0..cfg.epochs_stage1 {
        for b in 0..cfg.batches_per_epoch {
            let step = epoch * cfg.batches_per_epoch + b;
            stage1_batch(space, cfg, &mut rng, &mut batch);
            let (grad, loss) = param_gradient(&params, &batch, &cfg.loss);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step });
            }
            adam.step(&mut params, &grad);
            avg.observe(step, &params);
            loss_curve.push(loss / cfg.batch as f64);
        }
    }
    Ok(TrainRun { params: avg.finish(params), loss_curve })
}

/// One robot/obstacle exposure collected from a closed-loop rollout, with
/// the nominal planar velocity the controller wanted at that instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestSample {
    pub p: [f64; 2],
    pub obs: Obstacle,
    pub u_ref: [f64; 2],
}

/// Stage 2: fine-tune on harvested exposures. Each exposure yields a
/// classification sample, a dynamics sample carrying the harvested nominal
/// velocity (safe states only), and two jittered classification samples
/// near the visited state; the filter-deviation term is added with weight
/// `control_reg_weight`. Labels come from the analytic teacher, but no
/// regression anchor is used.
pub fn stage2_finetune(
    start: &MlpParams,
    cfg: &TrainConfig,
    space: &SampleSpace,
    harvest: &[HarvestSample],
    seed: u64,
) -> Result<TrainRun, TrainError> {
    cfg.validate()?;
    if harvest.is_empty() {
        return Err(TrainError::NoHarvestData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5347_3262);

    // Expand the harvest into a training pool.
    let mut pool: Vec<CbfSample> = Vec::with_capacity(harvest.len() * 4);
    for ex in harvest {
        let h_true = space.teacher_value(ex.p, &ex.obs);
        if h_true >= 0.0 {
            pool.push(CbfSample::dynamics(ex.p, ex.obs, ex.u_ref));
            pool.push(CbfSample::safe(ex.p, ex.obs));
        } else {
            pool.push(CbfSample::unsafe_at(ex.p, ex.obs));
        }
        for _ in 0..2 {
            let r = (space.shell_width + 0.05) * rng.random_range(0.0f64..1.0).sqrt();
            let ang = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let q = [ex.p[0] + r * ang.cos(), ex.p[1] + r * ang.sin()];
            let hq = space.teacher_value(q, &ex.obs);
            pool.push(if hq >= 0.0 {
                CbfSample::safe(q, ex.obs)
            } else {
                CbfSample::unsafe_at(q, ex.obs)
            });
        }
    }

    let mut params = start.clone();
    let mut adam = Adam::new(cfg.adam, PARAM_COUNT);
    let mut loss_curve = Vec::new();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch);
    let batches_per_epoch = pool.len().div_ceil(cfg.batch);
    let total_steps = cfg.epochs_stage2 * batches_per_epoch;
    let mut avg = TailAverager::new(total_steps, cfg.tail_average_fraction);
    let mut step = 0usize;

    for _ in 0..cfg.epochs_stage2 {
        // Fisher-Yates reshuffle per epoch, seeded.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut cursor = 0;
        while cursor < order.len() {
            batch.clear();
            let end = (cursor + cfg.batch).min(order.len());
            batch.extend(order[cursor..end].iter().map(|&i| pool[i]));
            cursor = end;

            let (mut grad, hinge_loss) = param_gradient(&params, &batch, &cfg.loss);
            let reg_loss = add_control_reg_terms(
                &params,
                &batch,
                cfg.loss.alpha,
                cfg.control_reg_weight,
                Some(&mut grad),
            );
            let loss = hinge_loss + reg_loss;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step });
            }
            adam.step(&mut params, &grad);
            avg.observe(step, &params);
            step += 1;
            loss_curve.push(loss / batch.len() as f64);
        }
    }
    Ok(TrainRun { params: avg.finish(params), loss_curve })
}

/// Fraction of freshly sampled pairs whose predicted sign matches the
/// analytic teacher (`h >= 0` counts as safe on both sides).
pub fn sign_agreement(params: &MlpParams, space: &SampleSpace, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0usize;
    for _ in 0..n {
        let (p, obs) = space.sample_pair(&mut rng);
        let truth = space.teacher_value(p, &obs) >= 0.0;
        let pred = forward(params, p, &obs) >= 0.0;
        if truth == pred {
            agree += 1;
        }
    }
    agree as f64 / n as f64
}

/// Root-mean-square error against the analytic teacher on fresh samples.
pub fn regression_rmse(params: &MlpParams, space: &SampleSpace, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n {
        let (p, obs) = space.sample_pair(&mut rng);
        let r = forward(params, p, &obs) - space.teacher_value(p, &obs);
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}
