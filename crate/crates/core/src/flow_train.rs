//! Rectified-flow, reflow, and annealed-reflow objectives plus the training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{standard_normal, Pair, PairDataset, ToyDistribution};
use crate::error::{check_dim, Error, Result};
use crate::nn::{
    velocity_regression, AdamConfig, AdamState, EmaState, GradTape, Row, VelocityField,
};
use crate::schedules::{blend_noise, BetaSchedule};

/// Rows of `(x0, x1, t)`; the interpolant is `x_t = (1 - t) x0 + t x1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainBatch {
    pub x0: Vec<Vec<f64>>,
    pub x1: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        check_dim(self.len(), self.x0.len())?;
        check_dim(self.len(), self.x1.len())?;
        for (a, b) in self.x0.iter().zip(&self.x1) {
            check_dim(dim, a.len())?;
            check_dim(dim, b.len())?;
        }
        if let Some(t) = self.t.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::contract(format!("t = {t} outside [0, 1]")));
        }
        Ok(())
    }
}

fn interpolant(x0: &[f64], x1: &[f64], t: f64) -> Vec<f64> {
    x0.iter()
        .zip(x1)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect()
}

fn displacement(x0: &[f64], x1: &[f64]) -> Vec<f64> {
    x1.iter().zip(x0).map(|(b, a)| b - a).collect()
}

fn straight_line_loss(
    field: &VelocityField,
    x0: &[Vec<f64>],
    x1: &[Vec<f64>],
    t: &[f64],
) -> Result<GradTape> {
    let rows = x0.iter().zip(x1).zip(t).map(|((a, b), &t)| Row {
        x: interpolant(a, b, t),
        t,
        target: displacement(a, b),
    });
    velocity_regression(field, rows)
}

/// Mean `‖v(x_t, t) - (x1 - x0)‖²` over independently drawn `x0` (data) and `x1` (noise).
pub fn rf_loss(field: &VelocityField, batch: &TrainBatch) -> Result<GradTape> {
    batch.validate(field.dim())?;
    straight_line_loss(field, &batch.x0, &batch.x1, &batch.t)
}

/// Same objective as [`rf_loss`] on teacher-coupled pairs `(x̂0, x1)`.
pub fn reflow_loss(field: &VelocityField, batch: &TrainBatch) -> Result<GradTape> {
    batch.validate(field.dim())?;
    straight_line_loss(field, &batch.x0, &batch.x1, &batch.t)
}

/// Reflow on pairs whose noise end is blended with fresh noise:
/// `x1^β = sqrt(1 - β²) x1 + β x1'` replaces `x1` in both the interpolant and the target.
pub fn annealing_reflow_loss(
    field: &VelocityField,
    batch: &TrainBatch,
    fresh_noise: &[Vec<f64>],
    beta: f64,
) -> Result<GradTape> {
    batch.validate(field.dim())?;
    check_dim(batch.len(), fresh_noise.len())?;
    let blended = batch
        .x1
        .iter()
        .zip(fresh_noise)
        .map(|(a, b)| blend_noise(a, b, beta))
        .collect::<Result<Vec<_>>>()?;
    straight_line_loss(field, &batch.x0, &blended, &batch.t)
}

/// A linear map `R` with `R·R = I` and `Rᵀ R = I`, e.g. a reflection or coordinate swap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Involution {
    matrix: Vec<Vec<f64>>,
}

impl Involution {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let d = matrix.len();
        if d == 0 || matrix.iter().any(|r| r.len() != d) {
            return Err(Error::contract(
                "involution must be a non-empty square matrix",
            ));
        }
        for i in 0..d {
            for j in 0..d {
                let id = if i == j { 1.0 } else { 0.0 };
                let sq: f64 = (0..d).map(|k| matrix[i][k] * matrix[k][j]).sum();
                let gram: f64 = (0..d).map(|k| matrix[k][i] * matrix[k][j]).sum();
                if (sq - id).abs() > 1e-12 || (gram - id).abs() > 1e-12 {
                    return Err(Error::contract("matrix is not an orthogonal involution"));
                }
            }
        }
        Ok(Involution { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        let matrix = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Involution { matrix }
    }

    /// Flip of coordinate `axis`.
    pub fn reflection(dim: usize, axis: usize) -> Self {
        let mut r = Self::identity(dim);
        r.matrix[axis][axis] = -1.0;
        r
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Involution {
    type Error = Error;

    fn try_from(m: Vec<Vec<f64>>) -> Result<Self> {
        Involution::new(m)
    }
}

impl From<Involution> for Vec<Vec<f64>> {
    fn from(r: Involution) -> Self {
        r.matrix
    }
}

/// Appends `(R x1, R x̂0)` for every pair; the original rows keep their order.
pub fn augment_pairs(pairs: &PairDataset, r: &Involution) -> Result<PairDataset> {
    check_dim(pairs.dim, r.dim())?;
    let mut out = pairs.pairs.clone();
    out.extend(pairs.pairs.iter().map(|p| Pair {
        x1: r.apply(&p.x1),
        x0: r.apply(&p.x0),
    }));
    let mut provenance = pairs.provenance.clone();
    provenance.augmented = true;
    PairDataset::new(pairs.dim, out, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iters: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_ratio: f64,
    pub seed: u64,
    /// Invoke the checkpoint callback every this many iterations (0 disables).
    #[serde(default)]
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 20_000,
            batch_size: 256,
            lr: 1e-3,
            ema_ratio: 0.999,
            seed: 0,
            log_every: 0,
        }
    }
}

/// What the trainer regresses on.
#[derive(Debug, Clone, Copy)]
pub enum TrainSource<'a> {
    /// 1-rectified flow: independent data and noise draws.
    Data(&'a ToyDistribution),
    /// Teacher pairs. `None` trains plain reflow; `Some` anneals with fresh noise.
    Pairs {
        pairs: &'a PairDataset,
        schedule: Option<BetaSchedule>,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// EMA weights.
    pub field: VelocityField,
    /// Raw optimizer weights.
    pub raw: VelocityField,
    pub losses: Vec<f64>,
}

/// Adam + EMA over `config.iters` iterations, one fresh batch per iteration.
///
/// Batch rows, their `t`, and data draws come from one RNG stream; the fresh
/// noise for annealing comes from a second stream, so a `constant(0)` schedule
/// reproduces plain reflow bit for bit.
pub fn train_flow<F>(
    config: &TrainConfig,
    init: VelocityField,
    source: TrainSource<'_>,
    mut on_checkpoint: F,
) -> Result<TrainOutcome>
where
    F: FnMut(u64, &VelocityField) -> Result<()>,
{
    if config.batch_size == 0 {
        return Err(Error::contract("batch_size must be positive"));
    }
    let dim = init.dim();
    match source {
        TrainSource::Data(dist) => {
            dist.validate()?;
            check_dim(dim, dist.dim)?;
        }
        TrainSource::Pairs { pairs, schedule } => {
            check_dim(dim, pairs.dim)?;
            if pairs.is_empty() && config.iters > 0 {
                return Err(Error::contract("cannot train on an empty pair dataset"));
            }
            if let Some(s) = schedule {
                s.validate()?;
            }
        }
    }
    let mut field = init;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), field.param_count());
    let mut ema = EmaState::new(config.ema_ratio, &field)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    let mut losses = Vec::with_capacity(config.iters as usize);

    for k in 0..config.iters {
        let mut batch = TrainBatch::default();
        let grads = match source {
            TrainSource::Data(dist) => {
                for _ in 0..config.batch_size {
                    batch.x0.push(dist.sample_one(&mut rng));
                    batch.x1.push(standard_normal(&mut rng, dim));
                    batch.t.push(rng.random());
                }
                rf_loss(&field, &batch)?
            }
            TrainSource::Pairs { pairs, schedule } => {
                for _ in 0..config.batch_size {
                    let p = &pairs.pairs[rng.random_range(0..pairs.len())];
                    batch.x0.push(p.x0.clone());
                    batch.x1.push(p.x1.clone());
                    batch.t.push(rng.random());
                }
                match schedule {
                    None => reflow_loss(&field, &batch)?,
                    Some(s) => {
                        let fresh: Vec<_> = (0..config.batch_size)
                            .map(|_| standard_normal(&mut noise_rng, dim))
                            .collect();
                        annealing_reflow_loss(&field, &batch, &fresh, s.beta_at(k))?
                    }
                }
            }
        };
        if !grads.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: k as usize,
            });
        }
        adam.step(&mut field, &grads)?;
        ema.update(field.weights())?;
        losses.push(grads.loss);
        if config.log_every > 0 && (k + 1) % config.log_every == 0 {
            on_checkpoint(k + 1, &ema.to_field(&field)?)?;
        }
    }
    Ok(TrainOutcome {
        field: ema.to_field(&field)?,
        raw: field,
        losses,
    })
}

/// Linear anneal reaching zero after three quarters of the run.
pub fn default_schedule(iters: u64) -> BetaSchedule {
    BetaSchedule::Linear {
        horizon: (iters * 3 / 4).max(1),
    }
}
