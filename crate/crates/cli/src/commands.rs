use crate::artifact::ModelArtifact;
use crate::config::{Config, Mode, Overrides, Task};
use crate::data::{ingest_csv, read_features, Dataset};
use crate::error::{CliError, Result};
use gp_grief::basis::GriefBasis;
use gp_grief::inference::{
    default_p_type2, init_hypers, mala_sample, optimize_type2, ChainConfig, Prior, Type2Config,
};
use gp_grief::model::{lml, orthogonalize, precompute, ModelState};
use gp_grief::studies::{demo_data, precondition_study, reconstruction_study, rmse, DemoConfig};
use nalgebra::DVector;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Default number of eigenfunctions for the reweighted (type-I) model.
pub const DEFAULT_P_TYPE1: usize = 1000;

pub fn run(task: Task, flags: &Overrides) -> Result<()> {
    let cfg = Config::resolve(flags, task)?;
    match task {
        Task::Train => cmd_train(&cfg),
        Task::Sample => cmd_sample(&cfg),
        Task::Predict => cmd_predict(&cfg),
        Task::Reconstruct => cmd_reconstruct(&cfg),
        Task::Precondition => cmd_precondition(&cfg),
        Task::Demo => cmd_demo(&cfg),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("{what} path is required")))
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

/// Caps `p` at the number of grid points `mbar^d`.
fn cap_p(p: usize, mbar: usize, d: usize) -> usize {
    let log_m = d as f64 * (mbar as f64).ln();
    if log_m < (p as f64).ln() {
        let m = mbar.pow(d as u32);
        log::warn!("p = {p} exceeds the {m} grid points; using p = {m}");
        m
    } else {
        p
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub mode: Mode,
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub dropped_rows: usize,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    pub sigma2: f64,
    /// Log marginal likelihood of the standardized targets.
    pub lml: f64,
    pub test_rmse: Option<f64>,
}

/// Initializes from an exact GP, then fits the basis: type-II optimization of
/// the base hyperparameters, or a fixed basis orthogonalized on the data with
/// weights at the prior mode.
pub fn fit_model(ds: &Dataset, cfg: &Config) -> Result<(ModelArtifact, f64)> {
    let init = init_hypers(&ds.x, &ds.y, cfg.seed)?;
    let d = ds.d();
    let mbar = vec![cfg.mbar; d];
    let (hypers, functions, transform, stats, state, value) = match cfg.mode {
        Mode::Grief2 => {
            let p = cap_p(cfg.p.unwrap_or_else(|| default_p_type2(ds.n())), cfg.mbar, d);
            let mut t2 = Type2Config::new(mbar, p);
            t2.seed = cfg.seed;
            t2.restarts = cfg.restarts;
            let fit = optimize_type2(&ds.x, &ds.y, &init.hypers, &t2)?;
            let stats = precompute(&fit.basis.phi, &ds.y)?;
            let state = ModelState::unit(p, fit.hypers.sigma2)?;
            (fit.hypers, fit.basis.functions, None, stats, state, fit.lml)
        }
        Mode::Grief1 => {
            let p = cap_p(cfg.p.unwrap_or(DEFAULT_P_TYPE1), cfg.mbar, d);
            let basis = GriefBasis::fit(&ds.x, &init.hypers.kernel()?, &mbar, p)?;
            let (t, stats) = orthogonalize(&basis.phi, &ds.y)?;
            let k = t.effective_p();
            if k < p {
                log::info!("basis has numerical rank {k} of {p} on the training data");
            }
            let state = ModelState::new(DVector::from_element(k, cfg.w_prior.mode), init.hypers.sigma2)?;
            let value = lml(&stats, &state)?;
            (init.hypers, basis.functions, Some(t), stats, state, value)
        }
    };
    let artifact = ModelArtifact {
        mode: cfg.mode,
        hypers,
        functions,
        transform,
        stats,
        state,
        samples: None,
        standardization: ds.standardization.clone(),
        feature_names: ds.feature_names.clone(),
        target_name: ds.target_name.clone(),
    };
    Ok((artifact, value))
}

/// Draws the weights and noise by MALA; the noise prior's mode is the noise
/// the model was fitted with.
pub fn sample_model(mut artifact: ModelArtifact, cfg: &Config) -> Result<ModelArtifact> {
    if artifact.mode == Mode::Grief2 {
        log::warn!("sampling the weights of a type-II model; its statistics are not orthogonalized");
    }
    let w_prior = Prior::log_normal(cfg.w_prior.mode, cfg.w_prior.variance)?;
    let s_prior = Prior::log_normal(artifact.hypers.sigma2, cfg.sigma2_prior_variance)?;
    let chain = ChainConfig {
        total_iters: cfg.iters,
        burn_in: cfg.burn,
        thin: cfg.thin,
        step_size: cfg.step_size,
        ..Default::default()
    };
    let samples = mala_sample(&artifact.stats, w_prior, s_prior, &chain, cfg.seed)?;
    artifact.samples = Some(samples);
    Ok(artifact)
}

fn test_rmse(artifact: &ModelArtifact, cfg: &Config) -> Result<Option<f64>> {
    let Some(path) = &cfg.test_data else {
        return Ok(None);
    };
    let target = cfg.target.clone().unwrap_or_else(|| artifact.target_name.clone());
    let (x, y) = read_features(path, cfg.header, artifact.d(), Some(&target))?;
    let y = y.ok_or_else(|| CliError::input(path, format!("no target column '{target}'")))?;
    Ok(Some(rmse(&artifact.predict(&x)?.mean, &y)))
}

fn cmd_train(cfg: &Config) -> Result<()> {
    let ds = ingest_csv(required(&cfg.data, "data")?, cfg.target.as_deref(), cfg.header)?;
    let (artifact, value) = fit_model(&ds, cfg)?;
    artifact.save(required(&cfg.out, "out")?)?;
    print_json(&TrainSummary {
        mode: cfg.mode,
        n: ds.n(),
        d: ds.d(),
        p: artifact.stats.p(),
        dropped_rows: ds.dropped_rows,
        lengthscales: artifact.hypers.lengthscales.clone(),
        variance: artifact.hypers.variance,
        sigma2: artifact.state.sigma2,
        lml: value,
        test_rmse: test_rmse(&artifact, cfg)?,
    });
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SampleSummary {
    draws: usize,
    acceptance_rate: f64,
    step_size: f64,
    test_rmse: Option<f64>,
}

fn cmd_sample(cfg: &Config) -> Result<()> {
    let artifact = match &cfg.model {
        Some(path) => ModelArtifact::load(path)?,
        None => {
            let ds = ingest_csv(required(&cfg.data, "data")?, cfg.target.as_deref(), cfg.header)?;
            let fit_cfg = Config {
                mode: Mode::Grief1,
                ..cfg.clone()
            };
            fit_model(&ds, &fit_cfg)?.0
        }
    };
    let artifact = sample_model(artifact, cfg)?;
    artifact.save(required(&cfg.out, "out")?)?;
    let s = artifact.samples.as_ref().expect("just sampled");
    print_json(&SampleSummary {
        draws: s.draws.len(),
        acceptance_rate: s.acceptance_rate,
        step_size: s.step_size,
        test_rmse: test_rmse(&artifact, cfg)?,
    });
    Ok(())
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::input(path, e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::input(path, e.to_string())
}

fn cmd_predict(cfg: &Config) -> Result<()> {
    let artifact = ModelArtifact::load(required(&cfg.model, "model")?)?;
    let data = required(&cfg.data, "data")?;
    let target = cfg.target.clone().unwrap_or_else(|| artifact.target_name.clone());
    let (x, y) = read_features(data, cfg.header, artifact.d(), Some(&target))?;
    let pred = artifact.predict(&x)?;
    let out = required(&cfg.out, "out")?;
    let mut w = create(out)?;
    w.write_record(["mean", "variance"]).map_err(csv_err(out))?;
    for (m, v) in pred.mean.iter().zip(pred.var.iter()) {
        w.write_record([m.to_string(), v.to_string()]).map_err(csv_err(out))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    #[derive(Serialize)]
    struct PredictSummary {
        n: usize,
        rmse: Option<f64>,
    }
    print_json(&PredictSummary {
        n: x.nrows(),
        rmse: y.map(|y| rmse(&pred.mean, &y)),
    });
    Ok(())
}

/// Writes to the file when given, else to stdout.
fn table_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn cmd_reconstruct(cfg: &Config) -> Result<()> {
    let mut rc = cfg.reconstruct.clone();
    rc.seed = cfg.seed.wrapping_add(rc.seed);
    let rows = reconstruction_study(&rc)?;
    let label = cfg.out.as_deref().unwrap_or(Path::new("stdout"));
    let mut w = table_writer(cfg.out.as_deref())?;
    w.write_record(["p", "block", "grief", "randomized_mean", "randomized_std", "lower_bound"])
        .map_err(csv_err(label))?;
    for r in &rows {
        let block = match r.block {
            gp_grief::studies::Block::Train => "train",
            gp_grief::studies::Block::Joint => "joint",
        };
        w.write_record([
            r.p.to_string(),
            block.to_string(),
            r.grief.to_string(),
            r.randomized_mean.to_string(),
            r.randomized_std.to_string(),
            r.lower_bound.to_string(),
        ])
        .map_err(csv_err(label))?;
    }
    w.flush().map_err(|e| CliError::io(label, e))
}

/// `counts.csv` becomes `counts_residuals.csv`.
fn residuals_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "precondition".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_residuals.csv"))
}

fn cmd_precondition(cfg: &Config) -> Result<()> {
    let mut pc = cfg.precondition.clone();
    pc.seeds = pc.seeds.iter().map(|s| cfg.seed.wrapping_add(*s)).collect();
    let runs = precondition_study(&pc)?;
    let label = cfg.out.as_deref().unwrap_or(Path::new("stdout"));
    let mut w = table_writer(cfg.out.as_deref())?;
    w.write_record([
        "seed",
        "plain_iterations",
        "plain_converged",
        "preconditioned_iterations",
        "preconditioned_converged",
    ])
    .map_err(csv_err(label))?;
    for r in &runs {
        w.write_record([
            r.seed.to_string(),
            r.plain.iterations.to_string(),
            r.plain.converged.to_string(),
            r.preconditioned.iterations.to_string(),
            r.preconditioned.converged.to_string(),
        ])
        .map_err(csv_err(label))?;
    }
    w.flush().map_err(|e| CliError::io(label, e))?;
    if let Some(out) = &cfg.out {
        let path = residuals_path(out);
        let mut w = create(&path)?;
        w.write_record(["seed", "method", "iteration", "residual"]).map_err(csv_err(&path))?;
        for r in &runs {
            for (method, res) in [("plain", &r.plain), ("preconditioned", &r.preconditioned)] {
                for (k, v) in res.residuals.iter().enumerate() {
                    w.write_record([r.seed.to_string(), method.to_string(), k.to_string(), v.to_string()])
                        .map_err(csv_err(&path))?;
                }
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    let plain: Vec<usize> = runs.iter().map(|r| r.plain.iterations).collect();
    let pre: Vec<usize> = runs.iter().map(|r| r.preconditioned.iterations).collect();
    eprintln!(
        "median iterations: plain {}, preconditioned {}",
        gp_grief::studies::median_usize(&plain),
        gp_grief::studies::median_usize(&pre)
    );
    Ok(())
}

/// Writes the noisy 2D sine-product training set, a noise-free test grid and
/// a config that trains on them with a 5 x 5 grid and 4 eigenfunctions.
fn cmd_demo(cfg: &Config) -> Result<()> {
    let dir = required(&cfg.out, "out")?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let demo = DemoConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    let data = demo_data(&demo);
    for (name, x, y) in [
        ("train.csv", &data.x_train, &data.y_train),
        ("test.csv", &data.x_test, &data.f_test),
    ] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        w.write_record(["x1", "x2", "y"]).map_err(csv_err(&path))?;
        for i in 0..x.nrows() {
            w.write_record([x[(i, 0)].to_string(), x[(i, 1)].to_string(), y[i].to_string()])
                .map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    let run = serde_json::json!({
        "seed": cfg.seed,
        "data": "train.csv",
        "test_data": "test.csv",
        "target": "y",
        "mode": "grief2",
        "mbar": demo.mbar,
        "p": demo.p,
        "out": "model.bin",
    });
    let path = dir.join("demo.json");
    let text = serde_json::to_string_pretty(&run).expect("config serializes");
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    println!("{}", path.display());
    Ok(())
}
