//! `slimflow` command line: one subcommand per pipeline stage plus `pipeline`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{seed_offset, PipelineConfig};
use crate::data_io::{
    generate_pairs, load_pairs, sample_data, sample_noise, save_pairs, PairDataset, ToyDistribution,
};
use crate::distill::{flow_guided_distill, DistillConfig, TwoStepVariant};
use crate::error::{Error, Result};
use crate::flow_train::{augment_pairs, train_flow, TrainConfig, TrainOutcome, TrainSource};
use crate::metrics::{nfe_sweep, straightness, write_reports_csv, EvalProtocol, EvalReport};
use crate::nn::{hex_digest, Checkpoint, VelocityField};
use crate::schedules::BetaSchedule;
use crate::solvers::SolverSpec;

pub const SEED_ENV: &str = "SLIMFLOW_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "slimflow",
    version,
    about = "Teacher flow -> annealed reflow -> one-step distillation on toy data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a 1-rectified-flow teacher on the configured data distribution.
    TrainTeacher(TrainTeacherArgs),
    /// Integrate seeded noise through a checkpoint and save (noise, endpoint) pairs.
    GenPairs(GenPairsArgs),
    /// Train a student on teacher pairs, annealed unless --cold.
    Reflow(ReflowArgs),
    /// One-step distillation of a 2-rectified flow.
    Distill(DistillArgs),
    /// Straightness / sliced-W2 / NFE report as CSV.
    Eval(EvalArgs),
    /// Run every stage from one config file.
    Pipeline(PipelineArgs),
    /// Dump sampled trajectories as CSV.
    PlotData(PlotDataArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
enum SolverKind {
    Euler,
    Heun,
    Rk45,
    TwoStep,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolverArgs {
    /// Solver family; eval accepts a comma-separated list.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rk45")]
    solver: Vec<SolverKind>,
    /// Function evaluations for euler/heun; a list sweeps several.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    nfe: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    rtol: f64,
    #[arg(long, default_value_t = 0.5)]
    t_mid: f64,
}

impl SolverArgs {
    /// Heun with N steps costs 2N - 1 evaluations, so `--nfe` is rounded up to the next odd count.
    fn specs(&self) -> Vec<SolverSpec> {
        let mut out = Vec::new();
        for kind in &self.solver {
            match kind {
                SolverKind::Euler => {
                    out.extend(self.nfe.iter().map(|&n| SolverSpec::Euler { steps: n }))
                }
                SolverKind::Heun => out.extend(self.nfe.iter().map(|&n| SolverSpec::Heun {
                    steps: (n + 1).div_ceil(2).max(1),
                })),
                SolverKind::Rk45 => out.push(SolverSpec::rk45(self.rtol)),
                SolverKind::TwoStep => out.push(SolverSpec::TwoStep { t_mid: self.t_mid }),
            }
        }
        out
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainTeacherArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct GenPairsArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
enum ScheduleKind {
    Constant,
    Linear,
    Exponential,
    CosineHalf,
    CosineFull,
}

#[derive(Args, Debug, Serialize)]
struct ReflowArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Supplies the student architecture and optimizer settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config schedule.
    #[arg(long, value_enum)]
    schedule: Option<ScheduleKind>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    k_step: Option<u64>,
    #[arg(long)]
    beta0: Option<f64>,
    /// Plain reflow: no fresh-noise blending.
    #[arg(long, conflicts_with = "schedule")]
    cold: bool,
    /// Double the pairs with the config's involution.
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    iters: Option<u64>,
    /// Log EMA straightness to stderr every this many iterations.
    #[arg(long, default_value_t = 0)]
    log_every: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
enum Switch {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
enum VariantArg {
    Sg,
    Teacher,
}

#[derive(Args, Debug, Serialize)]
struct DistillArgs {
    /// 2-rectified-flow checkpoint; the student starts from its weights.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_enum, default_value = "on")]
    two_step: Switch,
    #[arg(long, value_enum, default_value = "sg")]
    variant: VariantArg,
    #[arg(long)]
    out: PathBuf,
    /// Optional source of iters / batch_size / lr / ema_ratio / t_eps.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Reference data comes from the config's distribution (standard normal otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    n_samples: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct PlotDataArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::TrainTeacher(a) => train_teacher_cmd(a),
        Command::GenPairs(a) => gen_pairs_cmd(a),
        Command::Reflow(a) => reflow_cmd(a),
        Command::Distill(a) => distill_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
        Command::PlotData(a) => plot_data_cmd(a),
    }
}

/// Explicit flag, then the config file, then `SLIMFLOW_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Contract(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn log_run(stage: &str, hash: &str, seed: u64) {
    eprintln!("[slimflow] {stage}: config {hash} seed {seed}");
}

fn args_hash<T: Serialize>(args: &T) -> String {
    hex_digest(serde_json::to_string(args).unwrap_or_default().as_bytes())
}

fn load_field(path: &Path) -> Result<VelocityField> {
    Checkpoint::load(path)?.inference_field()
}

fn trained_checkpoint(outcome: &TrainOutcome) -> Checkpoint {
    Checkpoint {
        field: outcome.raw.clone(),
        ema: Some(outcome.field.weights().to_vec()),
    }
}

fn create_out(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn train_teacher(cfg: &PipelineConfig, train: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let init = VelocityField::new(cfg.teacher.clone(), seed.wrapping_add(seed_offset::TEACHER))?;
    train_flow(train, init, TrainSource::Data(&cfg.data), |_, _| Ok(()))
}

fn train_teacher_cmd(a: TrainTeacherArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    log_run("train-teacher", &cfg.hash(), seed);
    let mut train = cfg.teacher_train_config(seed);
    if let Some(iters) = a.iters {
        train.iters = iters;
    }
    let outcome = train_teacher(&cfg, &train, seed)?;
    trained_checkpoint(&outcome).save(&a.out)
}

fn gen_pairs_cmd(a: GenPairsArgs) -> Result<()> {
    let seed = resolve_seed(a.seed, None)?;
    log_run("gen-pairs", &args_hash(&a), seed);
    let solver = single_solver(&a.solver)?;
    let teacher = load_field(&a.teacher)?;
    let ds = generate_pairs(&teacher, a.n, &solver, seed)?;
    if !ds.provenance.skipped.is_empty() {
        eprintln!(
            "[slimflow] skipped {} of {} samples",
            ds.provenance.skipped.len(),
            a.n
        );
    }
    save_pairs(&ds, &a.out)
}

fn single_solver(args: &SolverArgs) -> Result<SolverSpec> {
    match args.specs().as_slice() {
        [one] => Ok(*one),
        _ => Err(Error::contract(
            "exactly one solver (and one --nfe) is expected here",
        )),
    }
}

fn reflow_schedule(a: &ReflowArgs, cfg: &PipelineConfig, iters: u64) -> Option<BetaSchedule> {
    if a.cold {
        return None;
    }
    let quarter = (iters / 4).max(1);
    Some(match a.schedule {
        None => cfg.resolved_schedule(),
        Some(ScheduleKind::Constant) => BetaSchedule::Constant {
            beta0: a.beta0.unwrap_or(0.0),
        },
        Some(ScheduleKind::Linear) => BetaSchedule::Linear {
            horizon: a.horizon.unwrap_or((iters * 3 / 4).max(1)),
        },
        Some(ScheduleKind::Exponential) => BetaSchedule::Exponential {
            k_step: a.k_step.unwrap_or(quarter),
        },
        Some(ScheduleKind::CosineHalf) => BetaSchedule::CosineHalf {
            k_step: a.k_step.unwrap_or(quarter),
        },
        Some(ScheduleKind::CosineFull) => BetaSchedule::CosineFull {
            k_step: a.k_step.unwrap_or(quarter),
        },
    })
}

fn reflow_cmd(a: ReflowArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    log_run("reflow", &cfg.hash(), seed);
    let mut train = cfg.reflow_train_config(seed);
    if let Some(iters) = a.iters {
        train.iters = iters;
    }
    train.log_every = a.log_every;
    let mut pairs = load_pairs(&a.pairs)?;
    if a.augment {
        pairs = augment_pairs(&pairs, &cfg.involution())?;
    }
    let schedule = reflow_schedule(&a, &cfg, train.iters);
    if let Some(s) = &schedule {
        s.validate()?;
    }
    let outcome = reflow(&cfg, &train, &pairs, schedule, seed, |k, f| {
        let s = straightness(f, 256, 100, seed)?;
        eprintln!("[slimflow] iter {k}: straightness {s:.6}");
        Ok(())
    })?;
    trained_checkpoint(&outcome).save(&a.out)
}

fn reflow<F>(
    cfg: &PipelineConfig,
    train: &TrainConfig,
    pairs: &PairDataset,
    schedule: Option<BetaSchedule>,
    seed: u64,
    on_checkpoint: F,
) -> Result<TrainOutcome>
where
    F: FnMut(u64, &VelocityField) -> Result<()>,
{
    let init = VelocityField::new(cfg.student.clone(), seed.wrapping_add(seed_offset::REFLOW))?;
    train_flow(
        train,
        init,
        TrainSource::Pairs { pairs, schedule },
        on_checkpoint,
    )
}

fn distill_cmd(a: DistillArgs) -> Result<()> {
    let cfg = a.config.as_deref().map(PipelineConfig::load).transpose()?;
    let seed = resolve_seed(a.seed, cfg.as_ref().and_then(|c| c.seed))?;
    let hash = cfg
        .as_ref()
        .map_or_else(|| args_hash(&a), PipelineConfig::hash);
    log_run("distill", &hash, seed);
    let mut dc = match &cfg {
        Some(c) => c.distill_config(seed),
        None => DistillConfig {
            seed: seed.wrapping_add(seed_offset::DISTILL),
            ..Default::default()
        },
    };
    dc.use_two_step = a.two_step == Switch::On;
    dc.variant = match a.variant {
        VariantArg::Sg => TwoStepVariant::StudentFirstSg,
        VariantArg::Teacher => TwoStepVariant::TeacherFirst,
    };
    if let Some(iters) = a.iters {
        dc.iters = iters;
    }
    let two_flow = load_field(&a.from)?;
    let pairs = load_pairs(&a.pairs)?;
    let outcome = flow_guided_distill(&two_flow, &pairs, &dc)?;
    Checkpoint {
        field: outcome.raw,
        ema: Some(outcome.field.weights().to_vec()),
    }
    .save(&a.out)
}

fn reference_samples(dist: &ToyDistribution, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    sample_data(dist, n, seed.wrapping_add(seed_offset::REFERENCE))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let cfg = a.config.as_deref().map(PipelineConfig::load).transpose()?;
    let seed = resolve_seed(a.seed, cfg.as_ref().and_then(|c| c.seed))?;
    log_run("eval", &args_hash(&a), seed);
    let solvers = a.solver.specs();
    let mut protocol = match &cfg {
        Some(c) => c.eval_protocol(seed),
        None => EvalProtocol {
            seed: seed.wrapping_add(seed_offset::EVAL),
            ..Default::default()
        },
    };
    protocol.n_samples = a.n_samples;
    let mut rows: Vec<(String, Vec<EvalReport>)> = Vec::new();
    for path in &a.checkpoint {
        let field = load_field(path)?;
        let dist = match &cfg {
            Some(c) => c.data.clone(),
            None => ToyDistribution::std_normal(field.dim()),
        };
        let reference = reference_samples(&dist, a.n_samples, seed)?;
        rows.push((
            path.display().to_string(),
            nfe_sweep(&field, &solvers, &reference, &protocol)?,
        ));
    }
    match &a.out {
        Some(path) => {
            let mut w = create_out(path)?;
            write_rows(&mut w, &rows)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))
        }
        None => write_rows(&mut io::stdout().lock(), &rows).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn write_rows<W: Write>(w: &mut W, rows: &[(String, Vec<EvalReport>)]) -> io::Result<()> {
    for (i, (name, reports)) in rows.iter().enumerate() {
        write_reports_csv(w, name, reports, i == 0)?;
    }
    Ok(())
}

/// Files written by [`run_pipeline`], relative to the output directory.
pub mod artifacts {
    pub const TEACHER: &str = "teacher.ckpt";
    pub const REFLOW_PAIRS: &str = "reflow_pairs.bin";
    pub const TWO_FLOW: &str = "two_flow.ckpt";
    pub const DISTILL_PAIRS: &str = "distill_pairs.bin";
    pub const ONE_STEP: &str = "one_step.ckpt";
    pub const NAIVE_ONE_STEP: &str = "naive_one_step.ckpt";
    pub const EVAL_CSV: &str = "eval.csv";
}

/// Teacher -> pairs -> annealed reflow -> pairs -> distillation (with and
/// without the two-step term) -> evaluation of all four checkpoints.
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64, out_dir: &Path) -> Result<()> {
    use artifacts::*;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stage = |name: &str| eprintln!("[slimflow] pipeline: {name}");

    stage("teacher");
    let teacher = train_teacher(cfg, &cfg.teacher_train_config(seed), seed)?;
    trained_checkpoint(&teacher).save(out_dir.join(TEACHER))?;

    stage("reflow pairs");
    let mut pairs = generate_pairs(
        &teacher.field,
        cfg.pairs.count,
        &cfg.pairs.solver,
        seed.wrapping_add(seed_offset::REFLOW_PAIRS),
    )?;
    save_pairs(&pairs, out_dir.join(REFLOW_PAIRS))?;
    if cfg.augment.enabled {
        pairs = augment_pairs(&pairs, &cfg.involution())?;
    }

    stage("annealed reflow");
    let two_flow = reflow(
        cfg,
        &cfg.reflow_train_config(seed),
        &pairs,
        Some(cfg.resolved_schedule()),
        seed,
        |_, _| Ok(()),
    )?;
    trained_checkpoint(&two_flow).save(out_dir.join(TWO_FLOW))?;

    stage("distillation pairs");
    let n_distill = cfg.distill.pairs.unwrap_or(cfg.pairs.count);
    let dpairs = generate_pairs(
        &two_flow.field,
        n_distill,
        &cfg.pairs.solver,
        seed.wrapping_add(seed_offset::DISTILL_PAIRS),
    )?;
    save_pairs(&dpairs, out_dir.join(DISTILL_PAIRS))?;

    stage("distillation");
    let dc = cfg.distill_config(seed);
    let guided = flow_guided_distill(&two_flow.field, &dpairs, &dc)?;
    Checkpoint {
        field: guided.raw,
        ema: Some(guided.field.weights().to_vec()),
    }
    .save(out_dir.join(ONE_STEP))?;
    let naive = flow_guided_distill(
        &two_flow.field,
        &dpairs,
        &DistillConfig {
            use_two_step: false,
            ..dc
        },
    )?;
    Checkpoint {
        field: naive.raw,
        ema: Some(naive.field.weights().to_vec()),
    }
    .save(out_dir.join(NAIVE_ONE_STEP))?;

    stage("eval");
    let protocol = cfg.eval_protocol(seed);
    let reference = reference_samples(&cfg.data, protocol.n_samples, seed)?;
    let mut rows = Vec::new();
    for (name, field) in [
        (TEACHER, &teacher.field),
        (TWO_FLOW, &two_flow.field),
        (ONE_STEP, &guided.field),
        (NAIVE_ONE_STEP, &naive.field),
    ] {
        rows.push((
            name.to_string(),
            nfe_sweep(field, &cfg.eval.solvers, &reference, &protocol)?,
        ));
    }
    let csv = out_dir.join(EVAL_CSV);
    let mut w = create_out(&csv)?;
    write_rows(&mut w, &rows)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&csv, e))
}

fn pipeline_cmd(a: PipelineArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    log_run("pipeline", &cfg.hash(), seed);
    run_pipeline(&cfg, seed, &a.out_dir)
}

fn plot_data_cmd(a: PlotDataArgs) -> Result<()> {
    let seed = resolve_seed(a.seed, None)?;
    log_run("plot-data", &args_hash(&a), seed);
    let solver = single_solver(&a.solver)?;
    let field = load_field(&a.checkpoint)?;
    let noise = sample_noise(field.dim(), a.n, seed);
    let trajectories = noise
        .iter()
        .map(|x1| solver.solve(&field, x1))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(path) => Box::new(create_out(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut write = || -> io::Result<()> {
        let coords: Vec<String> = (0..field.dim()).map(|j| format!("x{j}")).collect();
        writeln!(out, "sample,step,t,{}", coords.join(","))?;
        for (i, tr) in trajectories.iter().enumerate() {
            for (k, (t, x)) in tr.times.iter().zip(&tr.states).enumerate() {
                let vals: Vec<String> = x.iter().map(f64::to_string).collect();
                writeln!(out, "{i},{k},{t},{}", vals.join(","))?;
            }
        }
        out.flush()
    };
    write().map_err(|e| {
        Error::io(
            a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>")),
            e,
        )
    })
}
