//! One-file JSON configuration for the end-to-end pipeline.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_io::ToyDistribution;
use crate::distill::{DistillConfig, TwoStepVariant};
use crate::error::{Error, Result};
use crate::flow_train::{default_schedule, Involution, TrainConfig};
use crate::metrics::{
    EvalProtocol, DEFAULT_PROJECTIONS, DEFAULT_STRAIGHTNESS_SAMPLES, DEFAULT_STRAIGHTNESS_STEPS,
};
use crate::nn::{hex_digest, MlpSpec};
use crate::schedules::BetaSchedule;
use crate::solvers::SolverSpec;

fn default_batch_size() -> usize {
    256
}

fn default_lr() -> f64 {
    1e-3
}

fn default_ema() -> f64 {
    0.999
}

fn default_teacher_solver() -> SolverSpec {
    SolverSpec::rk45(1e-3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsSection {
    pub count: usize,
    #[serde(default = "default_teacher_solver")]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentSection {
    #[serde(default)]
    pub enabled: bool,
    /// Defaults to flipping the first coordinate.
    #[serde(default)]
    pub involution: Option<Involution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSection {
    /// Size of the distillation pair set; defaults to `pairs.count`.
    #[serde(default)]
    pub pairs: Option<usize>,
    /// Defaults to the reflow `iters`.
    #[serde(default)]
    pub iters: Option<u64>,
    #[serde(default = "default_true")]
    pub use_two_step: bool,
    #[serde(default)]
    pub variant: TwoStepVariant,
    #[serde(default = "default_eps")]
    pub t_eps: f64,
}

fn default_true() -> bool {
    true
}

fn default_eps() -> f64 {
    0.01
}

impl Default for DistillSection {
    fn default() -> Self {
        DistillSection {
            pairs: None,
            iters: None,
            use_two_step: true,
            variant: TwoStepVariant::default(),
            t_eps: default_eps(),
        }
    }
}

fn default_eval_solvers() -> Vec<SolverSpec> {
    vec![
        SolverSpec::Euler { steps: 1 },
        SolverSpec::Euler { steps: 2 },
        SolverSpec::Euler { steps: 10 },
        SolverSpec::rk45(1e-3),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default = "default_eval_samples")]
    pub n_samples: usize,
    #[serde(default = "default_eval_solvers")]
    pub solvers: Vec<SolverSpec>,
    #[serde(default = "default_straightness_samples")]
    pub straightness_samples: usize,
    #[serde(default = "default_straightness_steps")]
    pub straightness_steps: usize,
    #[serde(default = "default_projections")]
    pub projections: usize,
}

fn default_eval_samples() -> usize {
    2000
}

fn default_straightness_samples() -> usize {
    DEFAULT_STRAIGHTNESS_SAMPLES
}

fn default_straightness_steps() -> usize {
    DEFAULT_STRAIGHTNESS_STEPS
}

fn default_projections() -> usize {
    DEFAULT_PROJECTIONS
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_samples: default_eval_samples(),
            solvers: default_eval_solvers(),
            straightness_samples: DEFAULT_STRAIGHTNESS_SAMPLES,
            straightness_steps: DEFAULT_STRAIGHTNESS_STEPS,
            projections: DEFAULT_PROJECTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub data: ToyDistribution,
    pub teacher: MlpSpec,
    pub student: MlpSpec,
    /// Reflow schedule; linear over the first three quarters of `iters` when absent.
    #[serde(default)]
    pub schedule: Option<BetaSchedule>,
    /// Reflow iterations.
    pub iters: u64,
    /// Teacher iterations; defaults to `iters`.
    #[serde(default)]
    pub teacher_iters: Option<u64>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_ema")]
    pub ema_ratio: f64,
    pub pairs: PairsSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub distill: DistillSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Stage seeds are fixed offsets from the run seed.
pub mod seed_offset {
    pub const TEACHER: u64 = 0;
    pub const REFLOW_PAIRS: u64 = 1;
    pub const REFLOW: u64 = 2;
    pub const DISTILL_PAIRS: u64 = 3;
    pub const DISTILL: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const REFERENCE: u64 = 6;
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.teacher.validate()?;
        self.student.validate()?;
        for spec in [&self.teacher, &self.student] {
            if spec.in_dim != self.data.dim {
                return Err(Error::DimMismatch {
                    expected: self.data.dim,
                    got: spec.in_dim,
                });
            }
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        self.pairs.solver.validate()?;
        if let Some(r) = &self.augment.involution {
            if r.dim() != self.data.dim {
                return Err(Error::DimMismatch {
                    expected: self.data.dim,
                    got: r.dim(),
                });
            }
        }
        for s in &self.eval.solvers {
            s.validate()?;
        }
        self.distill_config(0).validate()
    }

    /// sha256 of the canonical JSON re-serialization.
    pub fn hash(&self) -> String {
        hex_digest(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn resolved_schedule(&self) -> BetaSchedule {
        self.schedule
            .unwrap_or_else(|| default_schedule(self.iters))
    }

    pub fn involution(&self) -> Involution {
        self.augment
            .involution
            .clone()
            .unwrap_or_else(|| Involution::reflection(self.data.dim, 0))
    }

    pub fn teacher_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iters: self.teacher_iters.unwrap_or(self.iters),
            batch_size: self.batch_size,
            lr: self.lr,
            ema_ratio: self.ema_ratio,
            seed: seed.wrapping_add(seed_offset::TEACHER),
            log_every: 0,
        }
    }

    pub fn reflow_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iters: self.iters,
            batch_size: self.batch_size,
            lr: self.lr,
            ema_ratio: self.ema_ratio,
            seed: seed.wrapping_add(seed_offset::REFLOW),
            log_every: 0,
        }
    }

    pub fn distill_config(&self, seed: u64) -> DistillConfig {
        DistillConfig {
            use_two_step: self.distill.use_two_step,
            variant: self.distill.variant,
            t_eps: self.distill.t_eps,
            iters: self.distill.iters.unwrap_or(self.iters),
            batch_size: self.batch_size,
            lr: self.lr,
            ema_ratio: self.ema_ratio,
            seed: seed.wrapping_add(seed_offset::DISTILL),
        }
    }

    pub fn eval_protocol(&self, seed: u64) -> EvalProtocol {
        EvalProtocol {
            n_samples: self.eval.n_samples,
            straightness_samples: self.eval.straightness_samples,
            straightness_steps: self.eval.straightness_steps,
            projections: self.eval.projections,
            seed: seed.wrapping_add(seed_offset::EVAL),
        }
    }
}
