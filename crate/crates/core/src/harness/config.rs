//! TOML experiment configuration.
//!
//! ```toml
//! name = "eot-demo"
//! seeds = [1, 2, 3]
//! repeats = 1
//! output_dir = "out/eot-demo"
//!
//! [problem]
//! kind = "eot"
//! epsilon = 0.05
//! row_marginal = { kind = "uniform", size = 50 }
//! col_marginal = { kind = "gaussian", size = 50, mean = 0.7, sigma = 0.1 }
//! cost = { kind = "random_uniform" }
//!
//! [[solvers]]
//! kind = "ron"
//! model = "rpc"
//! rank = 100
//!
//! [[solvers]]
//! kind = "sinkhorn"
//! ```
//!
//! Relative file paths are resolved against the config file's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::generators::{
    consistent_rhs, gaussian_marginal, gaussian_rhs, grid_l1_cost, normalize_marginal, random_cost,
    sv_profile_matrix, uniform_marginal, SvProfile,
};
use super::matrix_market::read_matrix_market;
use crate::objectives::{DesignMatrix, EotDual, LeastSquares};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write measured wall time into traces; off by default so traces are
    /// byte-identical across runs.
    #[serde(default)]
    pub record_wall_time: bool,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solvers: Vec<SolverSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Eot {
        row_marginal: MarginalSource,
        col_marginal: MarginalSource,
        cost: CostSource,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        /// Initial value of every dual potential.
        #[serde(default)]
        init_value: f64,
    },
    LeastSquares {
        matrix: MatrixSource,
        #[serde(default)]
        rhs: RhsSource,
    },
}

fn default_epsilon() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSource {
    Uniform { size: usize },
    Gaussian { size: usize, mean: f64, sigma: f64 },
    /// Nonnegative values (e.g. grayscale pixels) in a CSV file, normalized
    /// to sum 1.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSource {
    RandomUniform,
    GridL1 {
        height: usize,
        width: usize,
        #[serde(default = "yes")]
        normalize: bool,
    },
    File { path: PathBuf },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSource {
    SvProfile { rows: usize, cols: usize, profile: String },
    MatrixMarket { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSource {
    /// `b = A x` with a standard-normal `x`.
    #[default]
    Consistent,
    Gaussian,
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Ron,
    Sinkhorn,
    GradientDescent,
    Kaczmarz,
    Cgls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rpc,
    ExactDense,
    ScaledIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Fixed,
    RonIdentity,
}

/// One solver entry. Which optional fields apply depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub kind: SolverKind,
    #[serde(default)]
    pub name: Option<String>,
    /// Gradient-norm tolerance for EOT, `½‖Ax − b‖²` tolerance for least
    /// squares. Defaults to 1e-8 and 1e-6 respectively.
    #[serde(default)]
    pub tol: Option<f64>,
    /// Iterations; epochs for Kaczmarz.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub rank: Option<usize>,
    /// Gradient Lipschitz constant (scaled identity, gradient descent).
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Defaults to the objective's suggestion at the starting point.
    #[serde(default)]
    pub lipschitz_hessian: Option<f64>,
    #[serde(default)]
    pub step: Option<StepKind>,
    #[serde(default = "yes")]
    pub assert_lemmas: bool,
}

fn default_max_iters() -> usize {
    1000
}

impl SolverSpec {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            name: None,
            tol: None,
            max_iters: default_max_iters(),
            model: None,
            rank: None,
            lipschitz: None,
            lipschitz_hessian: None,
            step: None,
            assert_lemmas: true,
        }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match self.kind {
            SolverKind::Ron => match self.model {
                Some(ModelKind::Rpc) => format!("ron-rpc-k{}", self.rank.unwrap_or(0)),
                Some(ModelKind::ExactDense) => "ron-exact".into(),
                Some(ModelKind::ScaledIdentity) => "ron-identity".into(),
                None => "ron".into(),
            },
            SolverKind::Sinkhorn => "sinkhorn".into(),
            SolverKind::GradientDescent => "gradient-descent".into(),
            SolverKind::Kaczmarz => "kaczmarz".into(),
            SolverKind::Cgls => "cgls".into(),
        }
    }

    /// Whether repeats of this solver draw different random numbers.
    pub fn is_stochastic(&self) -> bool {
        match self.kind {
            SolverKind::Kaczmarz => true,
            SolverKind::Ron => self.model == Some(ModelKind::Rpc),
            _ => false,
        }
    }
}

impl ProblemSpec {
    pub fn is_eot(&self) -> bool {
        matches!(self, ProblemSpec::Eot { .. })
    }

    /// Name of the error metric traces are judged by.
    pub fn metric(&self) -> &'static str {
        if self.is_eot() {
            "grad_norm"
        } else {
            "ls_error"
        }
    }

    pub fn default_tol(&self) -> f64 {
        if self.is_eot() {
            1e-8
        } else {
            1e-6
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| config_err(format!("{}: {e}", origin.display())))?;
        let base = origin.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.problem {
            ProblemSpec::Eot {
                row_marginal,
                col_marginal,
                cost,
                ..
            } => {
                for m in [row_marginal, col_marginal] {
                    if let MarginalSource::File { path } = m {
                        fix(path);
                    }
                }
                if let CostSource::File { path } = cost {
                    fix(path);
                }
            }
            ProblemSpec::LeastSquares { matrix, rhs } => {
                if let MatrixSource::MatrixMarket { path } = matrix {
                    fix(path);
                }
                if let RhsSource::File { path } = rhs {
                    fix(path);
                }
            }
        }
    }

    /// Checks everything that can be checked without building the problem.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(config_err("name must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds must list at least one seed"));
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(config_err(format!("seed {s} is listed twice")));
            }
        }
        if self.repeats == 0 {
            return Err(config_err("repeats must be >= 1"));
        }
        self.validate_problem()?;
        let mut names = HashSet::new();
        for (i, s) in self.solvers.iter().enumerate() {
            self.validate_solver(s).map_err(|m| config_err(format!("solvers[{i}] ({}): {m}", s.label())))?;
            if !names.insert(s.label()) {
                return Err(config_err(format!(
                    "solvers[{i}]: duplicate solver name '{}'; set distinct `name`s",
                    s.label()
                )));
            }
        }
        Ok(())
    }

    fn validate_problem(&self) -> Result<()> {
        let need_file = |p: &Path| -> Result<()> {
            if p.is_file() {
                Ok(())
            } else {
                Err(config_err(format!("referenced file {} does not exist", p.display())))
            }
        };
        match &self.problem {
            ProblemSpec::Eot {
                row_marginal,
                col_marginal,
                cost,
                epsilon,
                init_value,
            } => {
                if !(*epsilon > 0.0) || !epsilon.is_finite() {
                    return Err(config_err(format!("problem.epsilon must be positive, got {epsilon}")));
                }
                if !init_value.is_finite() {
                    return Err(config_err("problem.init_value must be finite"));
                }
                for (side, m) in [("row_marginal", row_marginal), ("col_marginal", col_marginal)] {
                    match m {
                        MarginalSource::Uniform { size } | MarginalSource::Gaussian { size, .. } if *size == 0 => {
                            return Err(config_err(format!("problem.{side}.size must be >= 1")))
                        }
                        MarginalSource::Gaussian { mean, sigma, .. } if !(*sigma > 0.0) || !(0.0..=1.0).contains(mean) => {
                            return Err(config_err(format!(
                                "problem.{side}: need sigma > 0 and mean in [0, 1]"
                            )))
                        }
                        MarginalSource::File { path } => need_file(path)?,
                        _ => {}
                    }
                }
                match cost {
                    CostSource::File { path } => need_file(path)?,
                    CostSource::GridL1 { height, width, .. } => {
                        if *height == 0 || *width == 0 {
                            return Err(config_err("problem.cost grid dimensions must be >= 1"));
                        }
                        let n = height * width;
                        for (side, m) in [("row_marginal", row_marginal), ("col_marginal", col_marginal)] {
                            if let MarginalSource::Uniform { size } | MarginalSource::Gaussian { size, .. } = m {
                                if *size != n {
                                    return Err(config_err(format!(
                                        "problem.{side}.size = {size} but the {height}x{width} grid has {n} cells"
                                    )));
                                }
                            }
                        }
                    }
                    CostSource::RandomUniform => {}
                }
            }
            ProblemSpec::LeastSquares { matrix, rhs } => {
                match matrix {
                    MatrixSource::SvProfile { rows, cols, profile } => {
                        SvProfile::parse(profile).map_err(|e| config_err(format!("problem.matrix: {e}")))?;
                        if *cols == 0 || rows < cols {
                            return Err(config_err(format!(
                                "problem.matrix needs rows >= cols >= 1, got {rows} x {cols}"
                            )));
                        }
                    }
                    MatrixSource::MatrixMarket { path } => need_file(path)?,
                }
                if let RhsSource::File { path } = rhs {
                    need_file(path)?;
                }
            }
        }
        Ok(())
    }

    fn validate_solver(&self, s: &SolverSpec) -> std::result::Result<(), String> {
        let eot = self.problem.is_eot();
        if let Some(t) = s.tol {
            if !(t >= 0.0) {
                return Err(format!("tol must be >= 0, got {t}"));
            }
        }
        let positive = |v: Option<f64>, what: &str| -> std::result::Result<(), String> {
            match v {
                Some(x) if x > 0.0 && x.is_finite() => Ok(()),
                Some(x) => Err(format!("{what} must be positive, got {x}")),
                None => Err(format!("{what} is required")),
            }
        };
        if let Some(lh) = s.lipschitz_hessian {
            if !(lh >= 0.0) || !lh.is_finite() {
                return Err(format!("lipschitz_hessian must be >= 0, got {lh}"));
            }
        }
        match s.kind {
            SolverKind::Ron => match s.model {
                None => return Err("ron needs model = \"rpc\", \"exact_dense\" or \"scaled_identity\"".into()),
                Some(ModelKind::Rpc) => match s.rank {
                    Some(k) if k >= 1 => {}
                    _ => return Err("model rpc needs rank >= 1".into()),
                },
                Some(ModelKind::ScaledIdentity) => positive(s.lipschitz, "lipschitz")?,
                Some(ModelKind::ExactDense) => {}
            },
            SolverKind::Sinkhorn if !eot => return Err("sinkhorn only applies to eot problems".into()),
            SolverKind::Kaczmarz | SolverKind::Cgls if eot => {
                return Err("kaczmarz and cgls only apply to least_squares problems".into())
            }
            SolverKind::GradientDescent => {
                positive(s.lipschitz, "lipschitz")?;
                if s.step.is_none() {
                    return Err("gradient_descent needs step = \"fixed\" or \"ron_identity\"".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A built problem instance together with its starting point.
#[derive(Debug)]
pub enum Problem {
    Eot { dual: EotDual, theta0: DVector<f64> },
    LeastSquares { ls: LeastSquares, x0: DVector<f64> },
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Problem::Eot { theta0, .. } => theta0.len(),
            Problem::LeastSquares { x0, .. } => x0.len(),
        }
    }
}

/// Reads every number in a headerless CSV file, row by row.
pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 1, format!("{other:?}")),
        })?;
    let mut values = Vec::new();
    let mut ncols = 0usize;
    let mut nrows = 0usize;
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if nrows == 0 {
            ncols = rec.len();
        }
        for tok in rec.iter() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, line, format!("invalid number '{tok}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite value '{tok}'")));
            }
            values.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(Error::parse(path, 1, "empty file"));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

/// Writes a headerless CSV, one matrix row per line, with shortest
/// round-trip float formatting.
pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    super::trace::write_atomic(path, out.as_bytes())
}

/// Writes a vector as one value per line.
pub fn write_csv_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let out: String = v.iter().map(|x| format!("{x:?}\n")).collect();
    super::trace::write_atomic(path, out.as_bytes())
}

/// Reads a vector stored as one value per line or one comma-separated row.
pub fn read_csv_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_csv_matrix(path)?;
    let flat: Vec<f64> = m.transpose().iter().copied().collect();
    Ok(DVector::from_vec(flat))
}

fn build_marginal(src: &MarginalSource) -> Result<DVector<f64>> {
    match src {
        MarginalSource::Uniform { size } => uniform_marginal(*size),
        MarginalSource::Gaussian { size, mean, sigma } => gaussian_marginal(*size, *mean, *sigma),
        MarginalSource::File { path } => normalize_marginal(read_csv_vector(path)?),
    }
}

/// Builds the instance for `seed`. Random pieces are drawn from
/// `derive_seed(seed, PROBLEM_STREAM)`.
pub fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<Problem> {
    let problem_seed = rng::derive_seed(seed, rng::PROBLEM_STREAM);
    match spec {
        ProblemSpec::Eot {
            row_marginal,
            col_marginal,
            cost,
            epsilon,
            init_value,
        } => {
            let r = build_marginal(row_marginal)?;
            let c = build_marginal(col_marginal)?;
            let cost = match cost {
                CostSource::RandomUniform => random_cost(r.len(), c.len(), problem_seed),
                CostSource::GridL1 { height, width, normalize } => grid_l1_cost(*height, *width, *normalize)?,
                CostSource::File { path } => read_csv_matrix(path)?,
            };
            let dual = EotDual::new(r, c, &cost, *epsilon)?;
            let theta0 = DVector::from_element(dual.rows() + dual.cols(), *init_value);
            Ok(Problem::Eot { dual, theta0 })
        }
        ProblemSpec::LeastSquares { matrix, rhs } => {
            let a: DesignMatrix = match matrix {
                MatrixSource::SvProfile { rows, cols, profile } => {
                    let profile = SvProfile::parse(profile)?;
                    DesignMatrix::Dense(sv_profile_matrix(*rows, *cols, &profile, problem_seed)?)
                }
                MatrixSource::MatrixMarket { path } => read_matrix_market(path)?,
            };
            let rhs_seed = rng::derive_seed(problem_seed, 1);
            let b = match rhs {
                RhsSource::Consistent => consistent_rhs(&a, rhs_seed),
                RhsSource::Gaussian => gaussian_rhs(a.nrows(), rhs_seed),
                RhsSource::File { path } => read_csv_vector(path)?,
            };
            let d = a.ncols();
            let ls = LeastSquares::new(a, b)?;
            Ok(Problem::LeastSquares { ls, x0: DVector::zeros(d) })
        }
    }
}
