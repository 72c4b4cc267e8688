//! Run configuration: built-in defaults, then a JSON file, then command-line
//! flags, each layer overriding the one before.

use crate::error::{CliError, Result};
use gp_grief::studies::{PrecondConfig, ReconstructionConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Nyström kernel, base hyperparameters fitted by marginal likelihood.
    Grief2,
    /// Reweighted kernel, weights and noise integrated out by MCMC.
    Grief1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Train,
    Sample,
    Predict,
    Reconstruct,
    Precondition,
    Demo,
}

/// Log-normal prior given by its mode and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mode: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: Option<PathBuf>,
    /// Held-out CSV scored after training.
    pub test_data: Option<PathBuf>,
    /// Existing model file (predict, or sample from a trained GRIEF-I model).
    pub model: Option<PathBuf>,
    pub target: Option<String>,
    pub header: bool,
    pub mode: Mode,
    /// Grid points per input dimension.
    pub mbar: usize,
    /// Number of eigenfunctions; the mode's default when absent.
    pub p: Option<usize>,
    pub iters: usize,
    pub burn: usize,
    pub thin: usize,
    pub step_size: f64,
    pub w_prior: PriorSpec,
    /// Variance of the noise prior, whose mode is the initialized noise.
    pub sigma2_prior_variance: f64,
    /// Extra perturbed starts for type-II optimization.
    pub restarts: usize,
    pub out: Option<PathBuf>,
    pub reconstruct: ReconstructionConfig,
    pub precondition: PrecondConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            test_data: None,
            model: None,
            target: None,
            header: true,
            mode: Mode::Grief2,
            mbar: 10,
            p: None,
            iters: 10_000,
            burn: 1_000,
            thin: 50,
            step_size: 0.1,
            w_prior: PriorSpec {
                mode: 1.0,
                variance: 100.0,
            },
            sigma2_prior_variance: 0.04,
            restarts: 3,
            out: None,
            reconstruct: ReconstructionConfig::default(),
            precondition: PrecondConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the config value alone.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// JSON configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input CSV
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Target column name (or 0-based index with --no-header)
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// The CSV files have no header row
    #[arg(long, global = true)]
    pub no_header: bool,
    /// Grid points per input dimension
    #[arg(long, global = true)]
    pub mbar: Option<usize>,
    /// Number of eigenfunctions
    #[arg(long, global = true)]
    pub p: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Total MCMC iterations
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Burn-in iterations
    #[arg(long, global = true)]
    pub burn: Option<usize>,
    /// Keep every thin-th post-burn-in draw
    #[arg(long, global = true)]
    pub thin: Option<usize>,
    /// Output file (or directory for demo)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Trained model file
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Held-out CSV scored after training
    #[arg(long, global = true)]
    pub test_data: Option<PathBuf>,
    /// Solver tolerance for the preconditioning study
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

impl Config {
    /// Reads a JSON config. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Config =
            serde_json::from_str(&text).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.test_data, &mut cfg.model, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Defaults, then `--config`, then the remaining flags.
    pub fn resolve(flags: &Overrides, task: Task) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        cfg.apply(flags, task);
        cfg.validate(task)?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Overrides, task: Task) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &f.$field {
                    self.$field = v.clone();
                }
            };
        }
        set!(seed);
        set!(mode);
        set!(iters);
        set!(burn);
        set!(thin);
        for (flag, slot) in [
            (&f.data, &mut self.data),
            (&f.test_data, &mut self.test_data),
            (&f.model, &mut self.model),
            (&f.out, &mut self.out),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if f.target.is_some() {
            self.target.clone_from(&f.target);
        }
        if f.no_header {
            self.header = false;
        }
        // Grid size and p address whichever study the task runs.
        match task {
            Task::Reconstruct => {
                if let Some(m) = f.mbar {
                    self.reconstruct.mbar = m;
                }
                if let Some(p) = f.p {
                    self.reconstruct.ps = vec![p];
                }
            }
            Task::Precondition => {
                if let Some(m) = f.mbar {
                    self.precondition.mbar = m;
                }
                if let Some(p) = f.p {
                    self.precondition.p = p;
                }
                if let Some(t) = f.tol {
                    self.precondition.tol = t;
                }
            }
            _ => {
                if let Some(m) = f.mbar {
                    self.mbar = m;
                }
                if f.p.is_some() {
                    self.p = f.p;
                }
            }
        }
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self, task: Task) -> Result<()> {
        let mut errs = Vec::new();
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match task {
            Task::Train | Task::Sample | Task::Predict => {
                if self.mbar < 2 {
                    errs.push(format!("mbar must be at least 2, got {}", self.mbar));
                }
                if self.p == Some(0) {
                    errs.push("p must be at least 1".into());
                }
            }
            _ => {}
        }
        let needs_data = match task {
            Task::Train | Task::Predict => true,
            Task::Sample => self.model.is_none(),
            _ => false,
        };
        if needs_data && self.data.is_none() {
            errs.push("data: an input CSV is required (or model, when sampling)".into());
        }
        if task == Task::Predict && self.model.is_none() {
            errs.push("model: a trained model file is required".into());
        }
        let needs_out = matches!(task, Task::Train | Task::Sample | Task::Predict | Task::Demo);
        if needs_out && self.out.is_none() {
            errs.push("out: an output path is required".into());
        }
        if task == Task::Sample {
            if self.thin == 0 {
                errs.push("thin must be at least 1".into());
            }
            if self.burn >= self.iters {
                errs.push(format!("burn ({}) must be below iters ({})", self.burn, self.iters));
            }
            if !positive(self.step_size) {
                errs.push(format!("step_size must be positive, got {}", self.step_size));
            }
            if !positive(self.w_prior.mode) || !positive(self.w_prior.variance) {
                errs.push("w_prior mode and variance must be positive".into());
            }
            if !positive(self.sigma2_prior_variance) {
                errs.push("sigma2_prior_variance must be positive".into());
            }
        }
        if task == Task::Reconstruct {
            let r = &self.reconstruct;
            if r.d == 0 || r.n_train == 0 || r.n_test == 0 {
                errs.push("reconstruct: d, n_train and n_test must be at least 1".into());
            }
            if r.mbar < 2 {
                errs.push(format!("reconstruct.mbar must be at least 2, got {}", r.mbar));
            }
            if r.ps.is_empty() || r.ps.iter().any(|&p| p == 0 || p > r.n_train) {
                errs.push(format!("reconstruct.ps must be non-empty with 1 <= p <= n_train ({})", r.n_train));
            }
            if r.seeds == 0 {
                errs.push("reconstruct.seeds must be at least 1".into());
            }
            if !positive(r.lengthscale) {
                errs.push("reconstruct.lengthscale must be positive".into());
            }
        }
        if task == Task::Precondition {
            let c = &self.precondition;
            if c.n == 0 || c.d == 0 || c.p == 0 || c.max_iters == 0 {
                errs.push("precondition: n, d, p and max_iters must be at least 1".into());
            }
            if c.mbar < 2 {
                errs.push(format!("precondition.mbar must be at least 2, got {}", c.mbar));
            }
            if c.seeds.is_empty() {
                errs.push("precondition.seeds must not be empty".into());
            }
            if !positive(c.sigma2) || !positive(c.lengthscale) {
                errs.push("precondition: sigma2 and lengthscale must be positive".into());
            }
            if !(c.tol >= 0.0 && c.tol.is_finite()) {
                errs.push(format!("precondition.tol must be non-negative, got {}", c.tol));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }
}
