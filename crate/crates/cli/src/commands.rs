use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::Serialize;

use toll::data::{load_delimited_with, load_idx_head, Dataset};
use toll::lindyn::{
    contour_grid, empirical_covariance, integrate_ae_flow_sampled, reflected_gaussian_sample, sym_eig,
    train_linear_ae, write_contour_csv, LinearAeState,
};
use toll::nn::random_suite;
use toll::rng::{derive_seed, seeded_rng};
use toll::trainer::{
    gaussian_toy_dataset, prepare_and_train, protocol_label, run_experiment, score_split, tune_beta, Checkpoint,
};
use toll::{Error, Matrix};

use crate::config::{parse_experiment, DatasetLocator, Experiment, Settings};
use crate::{Cli, Command};

pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("max relative error {0:.3e} exceeds {GRADCHECK_THRESHOLD:e}")]
    GradCheck(f64),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::GradCheck(_) => "gradcheck",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// One line of `results.jsonl`.
#[derive(Debug, Serialize)]
struct ResultRecord<'a> {
    dataset: &'a str,
    normal_class: &'a str,
    seed: u64,
    metric_name: &'a str,
    value: f64,
}

#[derive(Debug, Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    version: &'a str,
    timestamp_unix: u64,
    config: Option<String>,
    overrides: &'a [String],
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(n) = cli.seeds {
        settings.set("seeds", n.to_string());
    }
    if let Some(c) = cli.normal_class {
        settings.set("normal_class", c.to_string());
    }
    std::fs::create_dir_all(&cli.out)?;
    write_run_info(cli)?;
    match cli.command {
        Command::Train => train(&settings, &cli.out),
        Command::Benchmark => benchmark(&settings, &cli.out),
        Command::Dynamics => dynamics(&settings, &cli.out),
        Command::Contour => contour(&settings, &cli.out),
        Command::Gradcheck => gradcheck(&settings),
    }
}

/// Timestamp and version live here so the result files stay byte-identical
/// across reruns.
fn write_run_info(cli: &Cli) -> CliResult<()> {
    let info = RunInfo {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: cli.config.as_ref().map(|p| p.display().to_string()),
        overrides: &cli.overrides,
    };
    let text = serde_json::to_string_pretty(&info).map_err(std::io::Error::other)?;
    std::fs::write(cli.out.join("run_info.json"), text + "\n")?;
    Ok(())
}

fn create(out: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn load_dataset(loc: &DatasetLocator, seed: u64) -> CliResult<Dataset> {
    Ok(match loc {
        DatasetLocator::Delimited { path, options } => load_delimited_with(path, options)?,
        DatasetLocator::Mnist { dir, limit } => load_idx_head(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
            *limit,
        )?,
        DatasetLocator::GaussianToy {
            normals,
            anomalies,
            radius,
            stds,
        } => gaussian_toy_dataset(*stds, *radius, *normals, *anomalies, seed)?,
    })
}

/// Replaces β by the validation-best entry of `beta_grid`, if one is given.
fn maybe_tune(exp: &mut Experiment, ds: &Dataset) -> CliResult<()> {
    if exp.beta_grid.is_empty() {
        return Ok(());
    }
    let (beta, trials) = tune_beta(&exp.train, ds, &exp.split, &exp.beta_grid)?;
    for (b, v) in &trials {
        println!("beta {b}: validation {v:.4}");
    }
    println!("selected beta {beta}");
    exp.train.toll.beta = beta;
    Ok(())
}

fn write_results(out: &Path, records: &[ResultRecord]) -> CliResult<()> {
    let mut f = create(out, "results.jsonl")?;
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(std::io::Error::other)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

fn results_table(records: &[ResultRecord], footer: Option<String>) -> String {
    let mut t = String::new();
    let dw = records.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
    let cw = records.iter().map(|r| r.normal_class.len()).max().unwrap_or(0).max(12);
    let _ = writeln!(t, "{:<dw$}  {:<cw$}  {:>8}  {:>6}  {:>8}", "dataset", "normal_class", "metric", "seed", "value");
    for r in records {
        let _ = writeln!(
            t,
            "{:<dw$}  {:<cw$}  {:>8}  {:>6}  {:>8.4}",
            r.dataset, r.normal_class, r.metric_name, r.seed, r.value
        );
    }
    if let Some(f) = footer {
        let _ = writeln!(t, "{f}");
    }
    t
}

fn write_history(out: &Path, history: &[Checkpoint]) -> CliResult<()> {
    let mut f = create(out, "history.csv")?;
    writeln!(f, "batch_index,loss_total,loss_rec,loss_norm,val_metric")?;
    for c in history {
        let l = &c.train_loss;
        let v = c.val_metric.map_or_else(String::new, |v| v.to_string());
        writeln!(f, "{},{},{},{},{v}", c.batch_index, l.total, l.reconstruction, l.latent_norm)?;
    }
    f.flush()?;
    Ok(())
}

fn train(settings: &Settings, out: &Path) -> CliResult<()> {
    let mut exp = parse_experiment(settings)?;
    let ds = load_dataset(&exp.dataset, exp.train.seed)?;
    maybe_tune(&mut exp, &ds)?;
    let (split, model) = prepare_and_train(&exp.train, &ds, &exp.split)?;
    let value = exp.train.test_metric.evaluate(&score_split(&model, &split.test)?)?;
    write_history(out, &model.history)?;
    let normal_class = protocol_label(&exp.split.protocol);
    let metric_name = exp.train.test_metric.name();
    let records = [ResultRecord {
        dataset: &ds.source_name,
        normal_class: &normal_class,
        seed: exp.train.seed,
        metric_name: &metric_name,
        value,
    }];
    write_results(out, &records)?;
    let best = model.best();
    let table = results_table(
        &records,
        Some(format!(
            "best checkpoint at batch {} (validation {})",
            best.batch_index,
            best.val_metric.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
        )),
    );
    std::fs::write(out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn benchmark(settings: &Settings, out: &Path) -> CliResult<()> {
    let mut exp = parse_experiment(settings)?;
    let ds = load_dataset(&exp.dataset, exp.train.seed)?;
    maybe_tune(&mut exp, &ds)?;
    let seeds: Vec<u64> = (1..=settings.seed_count()? as u64).collect();
    let res = run_experiment(&exp.train, &ds, &exp.split, &seeds)?;
    let records: Vec<ResultRecord> = res
        .per_seed
        .iter()
        .map(|s| ResultRecord {
            dataset: &res.dataset,
            normal_class: &res.normal_class,
            seed: s.seed,
            metric_name: &res.metric_name,
            value: s.value,
        })
        .collect();
    write_results(out, &records)?;
    let table = results_table(
        &records,
        Some(format!(
            "mean ± std: {:.4} ± {:.4} over {} seeds (beta {})",
            res.summary.mean,
            res.summary.std,
            seeds.len(),
            exp.train.toll.beta
        )),
    );
    std::fs::write(out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}

/// Reflected Gaussian sample and its covariance (samples as columns).
fn lab_covariance(settings: &Settings, seed: u64) -> CliResult<toll::lindyn::CovMatrix> {
    let stds = settings.stds()?;
    if stds.len() > 16 {
        return Err(Error::Config("key \"stds\": at most 16 dimensions".into()).into());
    }
    let samples: usize = settings.get("samples")?;
    let draws = (samples >> stds.len()).max(1);
    let x = reflected_gaussian_sample(&stds, draws, seed);
    Ok(empirical_covariance(&x.transpose())?)
}

fn dynamics(settings: &Settings, out: &Path) -> CliResult<()> {
    let seed: u64 = settings.get("seed")?;
    let s = lab_covariance(settings, derive_seed(seed, 0))?;
    let m = s.dim();
    let d: usize = settings.get("bottleneck")?;
    let beta: f64 = settings.get("beta")?;
    let mut rng = seeded_rng(derive_seed(seed, 1));
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let b = 1.0 / (fan_in as f64).sqrt();
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-b..=b)).collect())
    };
    let w1 = uniform(d, m, m)?;
    let w2 = uniform(m, d, d)?;
    let state = LinearAeState::new(w1, w2, beta)?;
    let traj = integrate_ae_flow_sampled(
        &state,
        &s,
        settings.get("t_end")?,
        settings.get("dt")?,
        settings.get("sample_every")?,
    )?;
    let mut f = create(out, "trajectory.csv")?;
    traj.write_csv(&mut f)?;
    f.flush()?;
    let first = traj.losses[0];
    let last = traj.losses[traj.losses.len() - 1];
    println!("loss {:.6e} -> {:.6e} over {} samples", first.total, last.total, traj.losses.len());
    if beta == 0.0 && d <= m {
        let eig = sym_eig(s.matrix())?;
        let gap = traj.last().reconstruction_map().sub(&eig.top_projector(d))?.frobenius_norm();
        println!("distance of W2W1 to the top-{d} projector: {gap:.3e}");
    }
    Ok(())
}

fn contour(settings: &Settings, out: &Path) -> CliResult<()> {
    let seed: u64 = settings.get("seed")?;
    let s = lab_covariance(settings, derive_seed(seed, 0))?;
    if s.dim() != 2 {
        return Err(Error::Config("key \"stds\": contour needs exactly two dimensions".into()).into());
    }
    let beta: f64 = settings.get("beta")?;
    let st = train_linear_ae(
        &s,
        settings.get("bottleneck")?,
        beta,
        settings.get("lin_lr")?,
        settings.get("lin_steps")?,
        derive_seed(seed, 1),
    )?;
    let points = contour_grid(&st.w1, &st.w2, beta, settings.contour_bounds()?, settings.get("resolution")?)?;
    let mut f = create(out, "contour.csv")?;
    write_contour_csv(&points, &mut f)?;
    f.flush()?;
    println!("encoder rows: {:?}", (0..st.w1.rows()).map(|r| st.w1.row(r).to_vec()).collect::<Vec<_>>());
    println!("{} grid points written", points.len());
    Ok(())
}

fn gradcheck(settings: &Settings) -> CliResult<()> {
    let cases: usize = settings.get("gradcheck_cases")?;
    let results = random_suite(cases, settings.get("seed")?, settings.get("gradcheck_h")?)?;
    let mut worst = 0.0f64;
    for (i, (case, report)) in results.iter().enumerate() {
        println!(
            "case {i:>3}: {} layers, {} checks, max relative error {:.3e}",
            case.specs.len(),
            report.checked,
            report.max_relative_error
        );
        worst = worst.max(report.max_relative_error);
    }
    println!("max relative error {worst:.3e} over {cases} networks");
    if worst > GRADCHECK_THRESHOLD {
        return Err(CliError::GradCheck(worst));
    }
    Ok(())
}
