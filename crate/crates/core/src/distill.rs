//! One-step distillation guided by a frozen 2-rectified flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{standard_normal, Pair, PairDataset};
use crate::error::{check_dim, Error, Result};
use crate::nn::{
    one_step_regression, AdamConfig, AdamState, EmaState, GradTape, Row, VelocityField,
};
use crate::solvers::{two_step_euler, Velocity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TwoStepVariant {
    /// Both Euler steps use the frozen flow.
    TeacherFirst,
    /// The first step uses the (detached) student's own one-step velocity.
    #[default]
    StudentFirstSg,
}

fn default_eps() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    #[serde(default = "default_true")]
    pub use_two_step: bool,
    #[serde(default)]
    pub variant: TwoStepVariant,
    /// `t` for the two-step term is drawn uniformly from `[eps, 1 - eps]`.
    #[serde(default = "default_eps")]
    pub t_eps: f64,
    pub iters: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_ratio: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            use_two_step: true,
            variant: TwoStepVariant::StudentFirstSg,
            t_eps: default_eps(),
            iters: 10_000,
            batch_size: 256,
            lr: 1e-3,
            ema_ratio: 0.999,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_eps > 0.0 && self.t_eps < 0.5) {
            return Err(Error::contract(format!(
                "t_eps {} outside (0, 0.5)",
                self.t_eps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be positive"));
        }
        Ok(())
    }
}

/// Mean `‖(x1 - v(x1, 1)) - target‖²` over precomputed pairs.
pub fn distill_loss(student: &VelocityField, pairs: &[Pair]) -> Result<GradTape> {
    one_step_regression(
        student,
        pairs.iter().map(|p| Row {
            x: p.x1.clone(),
            t: 1.0,
            target: p.x0.clone(),
        }),
    )
}

/// Two-step Euler regularizer on fresh noise; gradients flow only through the
/// student's one-step output.
pub fn two_step_loss(
    student: &VelocityField,
    frozen: &VelocityField,
    x1s: &[Vec<f64>],
    ts: &[f64],
    variant: TwoStepVariant,
    t_eps: f64,
) -> Result<GradTape> {
    two_step_loss_detached(student, student, frozen, x1s, ts, variant, t_eps)
}

/// [`two_step_loss`] with the stop-gradient path evaluated on `detached`
/// instead of `student`. With `detached == student` the two agree exactly.
pub fn two_step_loss_detached(
    student: &VelocityField,
    detached: &VelocityField,
    frozen: &VelocityField,
    x1s: &[Vec<f64>],
    ts: &[f64],
    variant: TwoStepVariant,
    t_eps: f64,
) -> Result<GradTape> {
    check_dim(x1s.len(), ts.len())?;
    check_dim(student.dim(), frozen.dim())?;
    if let Some(t) = ts.iter().find(|&&t| !(t >= t_eps && t <= 1.0 - t_eps)) {
        return Err(Error::contract(format!(
            "two-step t = {t} outside [{t_eps}, {}]",
            1.0 - t_eps
        )));
    }
    let rows = x1s
        .iter()
        .zip(ts)
        .map(|(x1, &t)| {
            check_dim(student.dim(), x1.len())?;
            let target = match variant {
                TwoStepVariant::TeacherFirst => two_step_euler(frozen, x1, t)?,
                TwoStepVariant::StudentFirstSg => {
                    let s = detached.velocity(x1, 1.0);
                    let xt: Vec<f64> = x1.iter().zip(&s).map(|(x, v)| x - (1.0 - t) * v).collect();
                    let vt = frozen.velocity(&xt, t);
                    x1.iter()
                        .zip(s.iter().zip(&vt))
                        .map(|(x, (a, b))| x - (a + t * (b - a)))
                        .collect()
                }
            };
            Ok(Row {
                x: x1.clone(),
                t: 1.0,
                target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    one_step_regression(student, rows)
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    /// EMA weights of the one-step student.
    pub field: VelocityField,
    pub raw: VelocityField,
    pub distill_losses: Vec<f64>,
    pub two_step_losses: Vec<f64>,
}

/// Student starts as a copy of the 2-flow.
pub fn flow_guided_distill(
    two_flow: &VelocityField,
    pairs: &PairDataset,
    config: &DistillConfig,
) -> Result<DistillOutcome> {
    flow_guided_distill_from(two_flow.clone(), two_flow, pairs, config)
}

/// Per iteration: a pair batch gives the distillation term; fresh noise and
/// `t` give the two-step term; Adam steps on their sum.
pub fn flow_guided_distill_from(
    student: VelocityField,
    two_flow: &VelocityField,
    pairs: &PairDataset,
    config: &DistillConfig,
) -> Result<DistillOutcome> {
    config.validate()?;
    if student.spec() != two_flow.spec() {
        return Err(Error::contract(
            "student architecture must match the 2-flow to copy its weights",
        ));
    }
    check_dim(two_flow.dim(), pairs.dim)?;
    if pairs.is_empty() && config.iters > 0 {
        return Err(Error::contract("distillation needs at least one pair"));
    }
    let dim = two_flow.dim();
    let mut field = student;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), field.param_count());
    let mut ema = EmaState::new(config.ema_ratio, &field)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fresh_rng = ChaCha8Rng::seed_from_u64(config.seed);
    fresh_rng.set_stream(1);
    let mut distill_losses = Vec::with_capacity(config.iters as usize);
    let mut two_step_losses = Vec::new();
    let span = 1.0 - 2.0 * config.t_eps;

    for k in 0..config.iters {
        let batch: Vec<Pair> = (0..config.batch_size)
            .map(|_| pairs.pairs[rng.random_range(0..pairs.len())].clone())
            .collect();
        let mut grads = distill_loss(&field, &batch)?;
        distill_losses.push(grads.loss);
        if config.use_two_step {
            let x1s: Vec<Vec<f64>> = (0..config.batch_size)
                .map(|_| standard_normal(&mut fresh_rng, dim))
                .collect();
            let ts: Vec<f64> = (0..config.batch_size)
                .map(|_| config.t_eps + span * fresh_rng.random::<f64>())
                .collect();
            let reg = two_step_loss(&field, two_flow, &x1s, &ts, config.variant, config.t_eps)?;
            two_step_losses.push(reg.loss);
            grads = grads.combine(&reg)?;
        }
        if !grads.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: k as usize,
            });
        }
        adam.step(&mut field, &grads)?;
        ema.update(field.weights())?;
    }
    Ok(DistillOutcome {
        field: ema.to_field(&field)?,
        raw: field,
        distill_losses,
        two_step_losses,
    })
}
