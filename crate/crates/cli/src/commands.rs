use std::path::{Path, PathBuf};

use rayon::prelude::*;

use cwc_core::nn::train::{checkpoint_tensors, model_from_tensors, write_log};
use cwc_core::nn::{
    self, accuracy, gaussian_blobs, BlobSpec, Dataset, LambdaSchedule, ModelParams, TrainOutcome,
};
use cwc_core::pipeline::{compress_model, CompressMode, CompressSettings, Compressed};
use cwc_core::tensor_io::{self, Tensor, TensorData};
use cwc_core::theory::verify_theory;

use crate::config::{check_k, check_sparsity, parse_mode, RunConfig, DEFAULT_K};
use crate::report::{emit, write_atomic, Format, ReportRow};
use crate::CliError;

const SCHEDULE_TENSOR: &str = "train.lambda_schedule";

pub struct Trained {
    pub outcome: TrainOutcome,
}

fn build_model(
    cfg: &RunConfig,
    train: &Dataset,
    eval: &Dataset,
    seed: u64,
) -> Result<ModelParams, CliError> {
    let mut dims = vec![train.dim];
    dims.extend(cfg.hidden());
    dims.push(train.classes.max(eval.classes));
    ModelParams::init(&dims, cfg.bias.unwrap_or(true), cfg.activation()?, seed)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn train_one(
    cfg: &RunConfig,
    train: &Dataset,
    eval: &Dataset,
    schedule: LambdaSchedule,
    seed: u64,
) -> Result<Trained, CliError> {
    let tc = cfg.train_config(schedule, seed)?;
    let model = build_model(cfg, train, eval, seed)?;
    let outcome =
        nn::train(model, train, eval, &tc).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Trained { outcome })
}

fn save_checkpoint(
    path: &Path,
    model: &ModelParams,
    schedule: LambdaSchedule,
) -> Result<(), CliError> {
    let mut tensors = checkpoint_tensors(model);
    tensors.push(Tensor::new(
        SCHEDULE_TENSOR,
        vec![2],
        TensorData::F64(vec![schedule.initial, schedule.per_epoch_increment]),
    ));
    let bytes =
        tensor_io::encode_tensors(&tensors).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn load_checkpoint(path: &Path) -> Result<(ModelParams, Option<LambdaSchedule>), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    let tensors = tensor_io::read_tensors(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let model = model_from_tensors(&tensors)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let schedule = tensor_io::find(&tensors, SCHEDULE_TENSOR)
        .ok()
        .and_then(|t| match &t.data {
            TensorData::F64(v) if v.len() == 2 => Some(LambdaSchedule {
                initial: v[0],
                per_epoch_increment: v[1],
            }),
            _ => None,
        });
    Ok((model, schedule))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let checkpoint = cfg.checkpoint.as_ref().ok_or_else(|| {
        CliError::Usage("no checkpoint output path (`checkpoint` key or --checkpoint)".into())
    })?;
    let (train, eval) = cfg.datasets()?;
    let schedule = cfg.schedule();
    schedule
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let t = train_one(cfg, &train, &eval, schedule, cfg.seed.unwrap_or(0))?;

    let mut log = Vec::new();
    write_log(&mut log, &t.outcome.log).expect("writing to memory");
    match &cfg.log {
        Some(p) => write_atomic(p, &log)?,
        None => print!("{}", String::from_utf8_lossy(&log)),
    }
    save_checkpoint(checkpoint, &t.outcome.model, schedule)?;
    if let Some(last) = t.outcome.log.last() {
        eprintln!(
            "trained {} epochs: eval_acc={} comp_loss={} -> {}",
            last.epoch + 1,
            last.eval_acc,
            last.comp_loss,
            checkpoint.display()
        );
    }
    Ok(())
}

/// Settings of one compression cell.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub sparsity: f64,
    pub k: usize,
    pub mode: CompressMode,
    pub seed: u64,
}

fn empty_row(schedule: Option<LambdaSchedule>, cell: &Cell) -> ReportRow {
    ReportRow {
        lambda: schedule.map(|s| s.initial),
        lambda_increment: schedule.map(|s| s.per_epoch_increment),
        seed: cell.seed,
        sparsity: cell.sparsity,
        k: cell.k,
        mode: cell.mode.name().to_string(),
        ratio: None,
        entropy_bits: None,
        total_bytes: None,
        mask_bytes: None,
        label_bytes: None,
        centroid_bytes: None,
        baseline_bytes: None,
        eval_acc: None,
        status: "error",
        error: String::new(),
    }
}

fn failed_row(schedule: Option<LambdaSchedule>, cell: &Cell, error: String) -> ReportRow {
    ReportRow {
        error,
        ..empty_row(schedule, cell)
    }
}

fn compress_cell(
    model: &ModelParams,
    schedule: Option<LambdaSchedule>,
    eval: Option<&Dataset>,
    cell: &Cell,
) -> (ReportRow, Option<Compressed>) {
    let settings = CompressSettings {
        seed: cell.seed,
        ..CompressSettings::new(cell.sparsity, cell.k, cell.mode)
    };
    match compress_model(model, &settings) {
        Err(e) => (failed_row(schedule, cell, e.to_string()), None),
        Ok((c, rebuilt)) => {
            let r = &c.report;
            let row = ReportRow {
                ratio: Some(r.ratio),
                entropy_bits: r.entropy_bits,
                total_bytes: Some(r.total_size),
                mask_bytes: Some(r.stream_sizes.mask),
                label_bytes: Some(r.stream_sizes.labels),
                centroid_bytes: Some(r.stream_sizes.centroids),
                baseline_bytes: Some(r.baseline_size),
                eval_acc: eval.map(|d| accuracy(&rebuilt, d)),
                status: "ok",
                ..empty_row(schedule, cell)
            };
            (row, Some(c))
        }
    }
}

pub struct CompressArgs {
    pub checkpoint: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub format: Format,
}

pub fn compress(cfg: &RunConfig, args: &CompressArgs) -> Result<(), CliError> {
    let path = args
        .checkpoint
        .as_ref()
        .or(cfg.checkpoint.as_ref())
        .ok_or_else(|| CliError::Usage("no checkpoint given".into()))?;
    let sparsity = check_sparsity(cfg.sparsity.ok_or_else(|| {
        CliError::Usage("no sparsity given (`sparsity` key or --sparsity)".into())
    })?)?;
    let cell = Cell {
        sparsity,
        k: check_k(cfg.k.unwrap_or(DEFAULT_K))?,
        mode: parse_mode(cfg.mode.as_deref().unwrap_or("masked"))?,
        seed: cfg.seed.unwrap_or(0),
    };
    let eval = match &args.eval_data {
        Some(p) => Some(crate::config::load_data(p)?),
        None => cfg.eval_set()?,
    };
    let (model, schedule) = load_checkpoint(path)?;
    let (row, compressed) = compress_cell(&model, schedule, eval.as_ref(), &cell);
    let Some(c) = compressed else {
        return Err(CliError::Runtime(row.error));
    };
    if let Some(out) = &cfg.artifact {
        let bytes = c
            .artifact
            .to_bytes()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_atomic(out, &bytes)?;
    }
    emit(&[row], args.format, cfg.report.as_deref())
}

pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub sparsities: Vec<f64>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub modes: Vec<CompressMode>,
}

impl SweepGrid {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        fn pick<T: Clone>(grid: &Option<Vec<T>>, single: Option<T>, default: Option<T>) -> Vec<T> {
            match (single, grid) {
                (Some(v), _) => vec![v],
                (None, Some(g)) => g.clone(),
                (None, None) => default.into_iter().collect(),
            }
        }
        let grid = SweepGrid {
            lambdas: pick(&cfg.lambda_grid, cfg.lambda, Some(0.0)),
            sparsities: pick(&cfg.sparsity_grid, cfg.sparsity, None),
            ks: pick(&cfg.k_grid, cfg.k, Some(DEFAULT_K)),
            seeds: pick(&cfg.seeds, cfg.seed, Some(0)),
            modes: pick(&cfg.modes, cfg.mode.clone(), Some("masked".to_string()))
                .iter()
                .map(|m| parse_mode(m))
                .collect::<Result<_, _>>()?,
        };
        for (name, empty) in [
            ("lambda_grid", grid.lambdas.is_empty()),
            ("sparsity_grid", grid.sparsities.is_empty()),
            ("k_grid", grid.ks.is_empty()),
            ("seeds", grid.seeds.is_empty()),
            ("modes", grid.modes.is_empty()),
        ] {
            if empty {
                return Err(CliError::Usage(format!("`{name}` is empty")));
            }
        }
        for &s in &grid.sparsities {
            check_sparsity(s)?;
        }
        for &k in &grid.ks {
            check_k(k)?;
        }
        for &l in &grid.lambdas {
            if !(l.is_finite() && l >= 0.0) {
                return Err(CliError::Usage(format!(
                    "lambda {l} must be finite and >= 0"
                )));
            }
        }
        Ok(grid)
    }
}

/// Trains one model per `(lambda, seed)` and compresses it at every
/// `(sparsity, k, mode)`; rows come out in grid order.
pub fn sweep(cfg: &RunConfig, format: Format) -> Result<(), CliError> {
    let grid = SweepGrid::from_config(cfg)?;
    let (train, eval) = cfg.datasets()?;
    let increment = cfg.lambda_increment.unwrap_or(0.0);
    cfg.train_config(LambdaSchedule::constant(0.0), 0)?;

    let runs: Vec<(f64, u64)> = grid
        .lambdas
        .iter()
        .flat_map(|&l| grid.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let trained: Vec<Result<Trained, CliError>> = runs
        .par_iter()
        .map(|&(lambda, seed)| {
            let schedule = LambdaSchedule {
                initial: lambda,
                per_epoch_increment: increment,
            };
            let t = train_one(cfg, &train, &eval, schedule, seed)?;
            if let Some(dir) = &cfg.checkpoint_dir {
                save_checkpoint(
                    &dir.join(format!("lambda{lambda}_seed{seed}.cwt")),
                    &t.outcome.model,
                    schedule,
                )?;
            }
            Ok(t)
        })
        .collect();

    let mut cells = Vec::new();
    for (run, t) in runs.iter().zip(&trained) {
        for &sparsity in &grid.sparsities {
            for &k in &grid.ks {
                for &mode in &grid.modes {
                    cells.push((
                        *run,
                        t,
                        Cell {
                            sparsity,
                            k,
                            mode,
                            seed: run.1,
                        },
                    ));
                }
            }
        }
    }
    let rows: Vec<ReportRow> = cells
        .par_iter()
        .map(|((lambda, _), t, cell)| {
            let schedule = LambdaSchedule {
                initial: *lambda,
                per_epoch_increment: increment,
            };
            match t {
                Ok(t) => compress_cell(&t.outcome.model, Some(schedule), Some(&eval), cell).0,
                Err(e) => failed_row(
                    Some(schedule),
                    cell,
                    format!("training failed: {}", e.message()),
                ),
            }
        })
        .collect();
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} sweep cells failed; see the error column",
            rows.len()
        );
    }
    emit(&rows, format, cfg.report.as_deref())
}

pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let dimension = cfg.dimension.unwrap_or(64);
    let trials = cfg.trials.unwrap_or(100);
    let seed = cfg.seed.unwrap_or(0);
    let s = verify_theory(dimension, trials, seed).map_err(|e| match e {
        cwc_core::TheoryError::Argument(m) => CliError::Usage(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    let seeds = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
    println!("dimension={dimension}");
    println!("trials={trials}");
    println!("seed={seed}");
    println!("converged={}", s.converged);
    println!("descent_failures={}", s.descent_failures.len());
    println!("sqrt_n_failures={}", s.sqrt_n_failures.len());
    println!("perturbation_checks={}", s.perturbation_checks);
    println!("perturbation_failures={}", s.perturbation_failures.len());
    println!("result={}", if s.passed() { "pass" } else { "fail" });
    if s.passed() {
        return Ok(());
    }
    let mut msg = String::from("theory verification failed");
    for (what, v) in [
        ("descent", &s.descent_failures),
        ("sqrt_n", &s.sqrt_n_failures),
        ("perturbation", &s.perturbation_failures),
    ] {
        if !v.is_empty() {
            msg.push_str(&format!("; {what} seeds: {}", seeds(v)));
        }
    }
    Err(CliError::Verification(msg))
}

pub fn gen_data(out: &Path, samples: usize, seed: u64) -> Result<(), CliError> {
    let spec = BlobSpec {
        samples,
        ..nn::desk::BLOBS
    };
    let data = gaussian_blobs(spec, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    data.save(out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}
