use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{DatasetSpec, Preset};
use crate::error::{Error, Result};
use crate::inner::InnerConfig;
use crate::solver::{default_init, Mode, SolverConfig};

/// A preset name (`"A"` .. `"D"`) or a full dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetChoice {
    Preset(Preset),
    Custom(DatasetSpec),
}

impl Default for DatasetChoice {
    fn default() -> Self {
        DatasetChoice::Preset(Preset::A)
    }
}

impl DatasetChoice {
    /// The dataset drawn with `seed`; a custom spec's own seed is replaced.
    pub fn spec(&self, seed: u64) -> DatasetSpec {
        match self {
            DatasetChoice::Preset(p) => DatasetSpec::preset(*p, seed),
            DatasetChoice::Custom(spec) => DatasetSpec {
                seed,
                ..spec.clone()
            },
        }
    }

    pub fn nx(&self) -> usize {
        match self {
            DatasetChoice::Preset(_) => 9,
            DatasetChoice::Custom(spec) => spec.nx,
        }
    }
}

/// Serializable solver settings; the starting point is always the default
/// one for the dataset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub mode: Mode,
    pub lambda_a: f64,
    pub lambda_p: f64,
    pub theta_a: f64,
    pub theta_p: f64,
    pub epsilon: f64,
    pub max_outer: usize,
    pub vartheta: f64,
    pub xi: f64,
    pub inner_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let inner = InnerConfig::default();
        Self {
            mode: Mode::Dglasso,
            lambda_a: 5.0,
            lambda_p: 8.0,
            theta_a: 1.0,
            theta_p: 1.0,
            epsilon: 1e-3,
            max_outer: 50,
            vartheta: inner.vartheta,
            xi: inner.xi,
            inner_max_iter: inner.max_iter,
        }
    }
}

impl SolverSettings {
    pub fn solver_config(&self, nx: usize) -> SolverConfig {
        let (init_a, init_p) = default_init(nx);
        SolverConfig {
            lambda_a: self.lambda_a,
            lambda_p: self.lambda_p,
            theta_a: self.theta_a,
            theta_p: self.theta_p,
            epsilon: self.epsilon,
            max_outer: self.max_outer,
            inner: InnerConfig {
                vartheta: self.vartheta,
                xi: self.xi,
                max_iter: self.inner_max_iter,
            },
            mode: self.mode,
            init_a,
            init_p,
        }
    }

    pub fn with_mode(&self, mode: Mode, lambda_a: f64, lambda_p: f64) -> Self {
        Self {
            mode,
            lambda_a,
            lambda_p,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    CnmseFilter,
    RmseA,
    TestNegloglik,
}

impl SelectionMetric {
    pub fn extract(self, report: &crate::metrics::MetricsReport) -> f64 {
        match self {
            SelectionMetric::CnmseFilter => report.cnmse_filter,
            SelectionMetric::RmseA => report.rmse_a,
            SelectionMetric::TestNegloglik => report.test_negloglik,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub lambda_a_values: Vec<f64>,
    pub lambda_p_values: Vec<f64>,
    pub runs: usize,
    pub selection_metric: SelectionMetric,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lambda_a_values: vec![1.0, 5.0, 8.0, 10.0],
            lambda_p_values: vec![1.0, 5.0, 8.0, 10.0],
            runs: 5,
            selection_metric: SelectionMetric::CnmseFilter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub datasets: Vec<Preset>,
    pub seeds: usize,
    /// Tune the penalties per dataset on the grid before benchmarking.
    pub tune: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            datasets: Preset::all().to_vec(),
            seeds: 50,
            tune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetChoice,
    pub solver: SolverSettings,
    pub grid: Option<GridConfig>,
    pub benchmark: BenchmarkConfig,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetChoice::default(),
            solver: SolverSettings::default(),
            grid: None,
            benchmark: BenchmarkConfig::default(),
            output_dir: "out".into(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetChoice::Custom(spec) = &self.dataset {
            spec.validate()?;
        }
        self.solver.solver_config(self.dataset.nx()).validate()?;
        if let Some(grid) = &self.grid {
            if grid.lambda_a_values.is_empty() || grid.lambda_p_values.is_empty() {
                return Err(Error::InvalidConfig("grid axes must be nonempty".into()));
            }
            if grid.runs == 0 {
                return Err(Error::InvalidConfig("grid runs must be at least 1".into()));
            }
        }
        if self.benchmark.seeds == 0 {
            return Err(Error::InvalidConfig("benchmark seeds must be at least 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the configuration without its output path.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir.clear();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of run `i` under master seed `master`.
pub fn run_seed(master: u64, i: usize) -> u64 {
    master.wrapping_add(i as u64)
}
