//! Python bindings: velocity fields, solvers, schedules, metrics, pair files,
//! and the training / distillation entry points.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use slimflow::config::PipelineConfig;
use slimflow::data_io::{self, PairDataset, ToyDistribution};
use slimflow::distill::{flow_guided_distill, DistillConfig, TwoStepVariant};
use slimflow::flow_train::{self, Involution, TrainConfig, TrainSource};
use slimflow::metrics;
use slimflow::nn::{Activation, Checkpoint, MlpSpec, VelocityField};
use slimflow::schedules::{self, BetaSchedule};
use slimflow::solvers::SolverSpec;
use slimflow::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::DimMismatch { .. } | Error::Contract(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    match name {
        "silu" => Ok(Activation::Silu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(PyValueError::new_err(format!(
            "unknown activation {other:?}"
        ))),
    }
}

/// Builds a solver from a short name: `euler`, `heun`, `rk45` or `two-step`.
pub fn solver_spec(name: &str, steps: usize, rtol: f64, t_mid: f64) -> PyResult<SolverSpec> {
    let spec = match name {
        "euler" => SolverSpec::Euler { steps },
        "heun" => SolverSpec::Heun { steps },
        "rk45" => SolverSpec::rk45(rtol),
        "two-step" | "two_step" => SolverSpec::TwoStep { t_mid },
        other => return Err(PyValueError::new_err(format!("unknown solver {other:?}"))),
    };
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

/// Builds a beta schedule; unused parameters are ignored.
pub fn schedule(kind: &str, horizon: u64, k_step: u64, beta0: f64) -> PyResult<BetaSchedule> {
    let s = match kind {
        "constant" => BetaSchedule::Constant { beta0 },
        "linear" => BetaSchedule::Linear { horizon },
        "exponential" => BetaSchedule::Exponential { k_step },
        "cosine_half" => BetaSchedule::CosineHalf { k_step },
        "cosine_full" => BetaSchedule::CosineFull { k_step },
        other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    };
    s.validate().map_err(to_py)?;
    Ok(s)
}

#[pyclass(name = "VelocityField", module = "slimflow_py", from_py_object)]
#[derive(Clone)]
pub struct PyVelocityField {
    pub inner: VelocityField,
}

#[pymethods]
impl PyVelocityField {
    #[new]
    #[pyo3(signature = (in_dim, hidden, time_embed_dim=16, activation="silu", seed=0))]
    pub fn new(
        in_dim: usize,
        hidden: Vec<usize>,
        time_embed_dim: usize,
        activation: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = MlpSpec {
            in_dim,
            hidden,
            time_embed_dim,
            activation: parse_activation(activation)?,
        };
        Ok(PyVelocityField {
            inner: VelocityField::new(spec, seed).map_err(to_py)?,
        })
    }

    /// A field whose output is `c` everywhere (zero weights, output bias `c`).
    #[staticmethod]
    #[pyo3(signature = (c, hidden, time_embed_dim=16))]
    pub fn constant(c: Vec<f64>, hidden: Vec<usize>, time_embed_dim: usize) -> PyResult<Self> {
        let spec = MlpSpec {
            in_dim: c.len(),
            hidden,
            time_embed_dim,
            activation: Activation::Silu,
        };
        Ok(PyVelocityField {
            inner: VelocityField::constant(spec, &c).map_err(to_py)?,
        })
    }

    /// Loads a checkpoint, preferring its EMA weights.
    #[staticmethod]
    pub fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(to_py)?;
        Ok(PyVelocityField {
            inner: ckpt.inference_field().map_err(to_py)?,
        })
    }

    pub fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::new(self.inner.clone())
            .save(path)
            .map_err(to_py)
    }

    pub fn forward(&self, x: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        self.inner.forward(&x, t).map_err(to_py)
    }

    #[getter]
    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    pub fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// `(params, macs)` of one forward pass.
    pub fn params_macs(&self) -> (usize, usize) {
        self.inner.spec().count_params_macs()
    }

    #[getter]
    pub fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    pub fn hash(&self) -> String {
        Checkpoint::new(self.inner.clone()).hash()
    }

    fn __repr__(&self) -> String {
        let spec = self.inner.spec();
        format!(
            "VelocityField(in_dim={}, hidden={:?}, params={})",
            spec.in_dim,
            spec.hidden,
            self.inner.param_count()
        )
    }
}

#[pyclass(name = "PairDataset", module = "slimflow_py", from_py_object)]
#[derive(Clone)]
pub struct PyPairDataset {
    pub inner: PairDataset,
}

#[pymethods]
impl PyPairDataset {
    #[staticmethod]
    pub fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyPairDataset {
            inner: data_io::load_pairs(path).map_err(to_py)?,
        })
    }

    pub fn save(&self, path: PathBuf) -> PyResult<()> {
        data_io::save_pairs(&self.inner, path).map_err(to_py)
    }

    #[getter]
    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Noise side of every pair.
    #[getter]
    pub fn x1(&self) -> Vec<Vec<f64>> {
        self.inner.pairs.iter().map(|p| p.x1.clone()).collect()
    }

    /// Generated endpoint of every pair.
    #[getter]
    pub fn x0(&self) -> Vec<Vec<f64>> {
        self.inner.endpoints()
    }

    /// Provenance sidecar as a JSON string.
    #[getter]
    pub fn provenance(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.provenance).map_err(json_err)
    }

    /// Appends `R x` copies of every pair; `matrix` defaults to flipping the first coordinate.
    #[pyo3(signature = (matrix=None))]
    pub fn augmented(&self, matrix: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let r = match matrix {
            Some(m) => Involution::new(m).map_err(to_py)?,
            None => Involution::reflection(self.inner.dim, 0),
        };
        Ok(PyPairDataset {
            inner: flow_train::augment_pairs(&self.inner, &r).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (field, x1, solver="rk45", steps=100, rtol=1e-3, t_mid=0.5))]
fn solve(
    field: &PyVelocityField,
    x1: Vec<f64>,
    solver: &str,
    steps: usize,
    rtol: f64,
    t_mid: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let tr = solver_spec(solver, steps, rtol, t_mid)?
        .solve(&field.inner, &x1)
        .map_err(to_py)?;
    Ok((tr.times, tr.states, tr.nfe))
}

#[pyfunction]
#[pyo3(signature = (field, x1s, solver="rk45", steps=100, rtol=1e-3, t_mid=0.5))]
fn sample(
    field: &PyVelocityField,
    x1s: Vec<Vec<f64>>,
    solver: &str,
    steps: usize,
    rtol: f64,
    t_mid: f64,
) -> PyResult<Vec<Vec<f64>>> {
    solver_spec(solver, steps, rtol, t_mid)?
        .sample(&field.inner, &x1s)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (kind, k, horizon=1, k_step=1, beta0=0.0))]
fn beta_at(kind: &str, k: u64, horizon: u64, k_step: u64, beta0: f64) -> PyResult<f64> {
    Ok(schedules::beta_at(
        &schedule(kind, horizon, k_step, beta0)?,
        k,
    ))
}

#[pyfunction]
fn blend_noise(x1: Vec<f64>, x1_prime: Vec<f64>, beta: f64) -> PyResult<Vec<f64>> {
    schedules::blend_noise(&x1, &x1_prime, beta).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (field, n_samples=256, n_steps=100, seed=0))]
fn straightness(
    field: &PyVelocityField,
    n_samples: usize,
    n_steps: usize,
    seed: u64,
) -> PyResult<f64> {
    metrics::straightness(&field.inner, n_samples, n_steps, seed).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, n_projections=128, seed=0))]
fn sliced_w2(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, n_projections: usize, seed: u64) -> PyResult<f64> {
    metrics::sliced_w2(&a, &b, n_projections, seed).map_err(to_py)
}

/// Draws from a toy distribution given as JSON, e.g. `{"distribution": "std_normal", "dim": 2}`.
#[pyfunction]
#[pyo3(signature = (distribution, n, seed=0))]
fn sample_data(distribution: &str, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let dist: ToyDistribution = serde_json::from_str(distribution).map_err(json_err)?;
    data_io::sample_data(&dist, n, seed).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (dim, n, seed=0))]
fn sample_noise(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    data_io::sample_noise(dim, n, seed)
}

#[pyfunction]
#[pyo3(signature = (teacher, n, solver="rk45", steps=100, rtol=1e-3, t_mid=0.5, seed=0))]
fn generate_pairs(
    teacher: &PyVelocityField,
    n: usize,
    solver: &str,
    steps: usize,
    rtol: f64,
    t_mid: f64,
    seed: u64,
) -> PyResult<PyPairDataset> {
    let spec = solver_spec(solver, steps, rtol, t_mid)?;
    Ok(PyPairDataset {
        inner: data_io::generate_pairs(&teacher.inner, n, &spec, seed).map_err(to_py)?,
    })
}

/// Trains `init` as a 1-rectified flow on a JSON-described distribution; returns the EMA field.
#[pyfunction]
#[pyo3(signature = (init, distribution, iters, batch_size=256, lr=1e-3, ema_ratio=0.999, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_teacher(
    py: Python<'_>,
    init: &PyVelocityField,
    distribution: &str,
    iters: u64,
    batch_size: usize,
    lr: f64,
    ema_ratio: f64,
    seed: u64,
) -> PyResult<PyVelocityField> {
    let dist: ToyDistribution = serde_json::from_str(distribution).map_err(json_err)?;
    let cfg = TrainConfig {
        iters,
        batch_size,
        lr,
        ema_ratio,
        seed,
        log_every: 0,
    };
    let init = init.inner.clone();
    let out = py
        .detach(|| flow_train::train_flow(&cfg, init, TrainSource::Data(&dist), |_, _| Ok(())))
        .map_err(to_py)?;
    Ok(PyVelocityField { inner: out.field })
}

/// Reflow on teacher pairs. `schedule=None` is plain (cold) reflow.
#[pyfunction]
#[pyo3(signature = (init, pairs, iters, schedule=Some("linear"), horizon=None, k_step=None, beta0=0.0, batch_size=256, lr=1e-3, ema_ratio=0.999, seed=0))]
#[allow(clippy::too_many_arguments)]
fn reflow(
    py: Python<'_>,
    init: &PyVelocityField,
    pairs: &PyPairDataset,
    iters: u64,
    schedule: Option<&str>,
    horizon: Option<u64>,
    k_step: Option<u64>,
    beta0: f64,
    batch_size: usize,
    lr: f64,
    ema_ratio: f64,
    seed: u64,
) -> PyResult<PyVelocityField> {
    let sched = match schedule {
        Some(kind) => Some(crate::schedule(
            kind,
            horizon.unwrap_or((iters * 3 / 4).max(1)),
            k_step.unwrap_or((iters / 4).max(1)),
            beta0,
        )?),
        None => None,
    };
    let cfg = TrainConfig {
        iters,
        batch_size,
        lr,
        ema_ratio,
        seed,
        log_every: 0,
    };
    let init = init.inner.clone();
    let source = TrainSource::Pairs {
        pairs: &pairs.inner,
        schedule: sched,
    };
    let out = py
        .detach(|| flow_train::train_flow(&cfg, init, source, |_, _| Ok(())))
        .map_err(to_py)?;
    Ok(PyVelocityField { inner: out.field })
}

/// One-step distillation starting from the 2-flow's weights; returns the EMA student.
#[pyfunction]
#[pyo3(signature = (two_flow, pairs, iters, use_two_step=true, variant="sg", t_eps=0.01, batch_size=256, lr=1e-3, ema_ratio=0.999, seed=0))]
#[allow(clippy::too_many_arguments)]
fn distill(
    py: Python<'_>,
    two_flow: &PyVelocityField,
    pairs: &PyPairDataset,
    iters: u64,
    use_two_step: bool,
    variant: &str,
    t_eps: f64,
    batch_size: usize,
    lr: f64,
    ema_ratio: f64,
    seed: u64,
) -> PyResult<PyVelocityField> {
    let variant = match variant {
        "sg" => TwoStepVariant::StudentFirstSg,
        "teacher" => TwoStepVariant::TeacherFirst,
        other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
    };
    let cfg = DistillConfig {
        use_two_step,
        variant,
        t_eps,
        iters,
        batch_size,
        lr,
        ema_ratio,
        seed,
    };
    let out = py
        .detach(|| flow_guided_distill(&two_flow.inner, &pairs.inner, &cfg))
        .map_err(to_py)?;
    Ok(PyVelocityField { inner: out.field })
}

/// Runs the full pipeline from a JSON config file into `out_dir`.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed=None))]
fn run_pipeline(
    py: Python<'_>,
    config: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> PyResult<()> {
    let cfg = PipelineConfig::load(config).map_err(to_py)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    py.detach(|| slimflow::cli::run_pipeline(&cfg, seed, &out_dir))
        .map_err(to_py)
}

#[pymodule]
pub fn slimflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVelocityField>()?;
    m.add_class::<PyPairDataset>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(beta_at, m)?)?;
    m.add_function(wrap_pyfunction!(blend_noise, m)?)?;
    m.add_function(wrap_pyfunction!(straightness, m)?)?;
    m.add_function(wrap_pyfunction!(sliced_w2, m)?)?;
    m.add_function(wrap_pyfunction!(sample_data, m)?)?;
    m.add_function(wrap_pyfunction!(sample_noise, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(train_teacher, m)?)?;
    m.add_function(wrap_pyfunction!(reflow, m)?)?;
    m.add_function(wrap_pyfunction!(distill, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
