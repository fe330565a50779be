//! File formats and the commands behind the `jmls` binary.
//!
//! Matrices inside model records are row-major flat arrays; the transition
//! matrix `T` is a column-major flat array. Indices written to files are
//! one-based. Floats are written in shortest round-trip form, so reading a
//! file back reproduces every finite value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{log_grid, summarize, PosteriorSummary, QuantitySummary, SummaryOptions};
use crate::benchmarks::uninformative_prior;
use crate::conjugate::{MniwHyper, PriorHyper};
use crate::distributions::standard_normal_vector;
use crate::gibbs::{run_particle_gibbs, Chain, GibbsConfig};
use crate::model::{
    simulate, validate_params, Dataset, HybridPrior, JmlsParams, ModelMatrices, PriorComponent,
};
use crate::rng::stream;
use crate::smoother::Trajectory;

/// Failure of a CLI command, split by exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad arguments, configuration or input files (exit code 2).
    Usage(String),
    /// The computation itself failed (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn write_out(path: &Path, contents: &[u8]) -> CliResult<()> {
    write_atomic(path, contents)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(
    rows: usize,
    cols: usize,
    v: &[f64],
    what: &str,
) -> std::result::Result<DMatrix<f64>, String> {
    if v.len() != rows * cols {
        return Err(format!(
            "{what} has {} entries, expected {rows}x{cols}",
            v.len()
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
}

impl ModelRecord {
    fn from_model(m: &ModelMatrices) -> Self {
        Self {
            a: row_major(&m.a),
            b: row_major(&m.b),
            c: row_major(&m.c),
            d: row_major(&m.d),
            q: row_major(&m.q),
            r: row_major(&m.r),
            s: row_major(&m.s),
        }
    }

    fn to_model(
        &self,
        nx: usize,
        nu: usize,
        ny: usize,
        index: usize,
    ) -> std::result::Result<ModelMatrices, String> {
        let name = |b: &str| format!("model {index} {b}");
        // Construct directly so Q and R round-trip bit-exactly.
        let m = ModelMatrices {
            a: from_row_major(nx, nx, &self.a, &name("A"))?,
            b: from_row_major(nx, nu, &self.b, &name("B"))?,
            c: from_row_major(ny, nx, &self.c, &name("C"))?,
            d: from_row_major(ny, nu, &self.d, &name("D"))?,
            q: from_row_major(nx, nx, &self.q, &name("Q"))?,
            r: from_row_major(ny, ny, &self.r, &name("R"))?,
            s: from_row_major(nx, ny, &self.s, &name("S"))?,
        };
        Ok(m)
    }

    /// Infers `(n_x, n_u, n_y)` from the array lengths.
    fn dims(&self) -> Option<(usize, usize, usize)> {
        let nx = exact_sqrt(self.a.len())?;
        let ny = exact_sqrt(self.r.len())?;
        if nx == 0 || ny == 0 || self.b.len() % nx != 0 {
            return None;
        }
        Some((nx, self.b.len() / nx, ny))
    }
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Parameter file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub m: usize,
    /// Column-major.
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub models: Vec<ModelRecord>,
}

impl ParamsFile {
    pub fn from_params(p: &JmlsParams) -> Self {
        Self {
            n_x: p.n_x(),
            n_u: p.n_u(),
            n_y: p.n_y(),
            m: p.num_models(),
            t: p.transition.as_slice().to_vec(),
            models: p.models.iter().map(ModelRecord::from_model).collect(),
        }
    }

    pub fn to_params(&self) -> std::result::Result<JmlsParams, String> {
        if self.m == 0 || self.models.len() != self.m {
            return Err(format!(
                "m = {} but {} models are listed",
                self.m,
                self.models.len()
            ));
        }
        if self.t.len() != self.m * self.m {
            return Err(format!(
                "T has {} entries, expected {}",
                self.t.len(),
                self.m * self.m
            ));
        }
        let models = self
            .models
            .iter()
            .enumerate()
            .map(|(i, r)| r.to_model(self.n_x, self.n_u, self.n_y, i + 1))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        JmlsParams::new(models, DMatrix::from_column_slice(self.m, self.m, &self.t))
            .map_err(|e| e.to_string())
    }
}

pub fn params_to_json(p: &JmlsParams) -> String {
    serde_json::to_string_pretty(&ParamsFile::from_params(p)).expect("parameters serialise") + "\n"
}

pub fn params_from_json(text: &str) -> std::result::Result<JmlsParams, String> {
    let file: ParamsFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    file.to_params()
}

/// Reads and validates a parameter file.
pub fn read_params(path: &Path) -> CliResult<JmlsParams> {
    let text = read_input(path)?;
    let params = params_from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let violations = validate_params(&params);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(usage(format!(
            "{}: invalid parameters: {}",
            path.display(),
            text.join("; ")
        )));
    }
    Ok(params)
}

/// One line of `chain.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRecord {
    pub iter: usize,
    /// Column-major.
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    pub models: Vec<ModelRecord>,
}

impl ChainRecord {
    pub fn new(iteration: usize, theta: &JmlsParams) -> Self {
        Self {
            iter: iteration,
            t: theta.transition.as_slice().to_vec(),
            models: theta.models.iter().map(ModelRecord::from_model).collect(),
        }
    }

    /// Rebuilds the parameters, inferring dimensions from array lengths.
    pub fn to_params(&self) -> std::result::Result<JmlsParams, String> {
        let first = self.models.first().ok_or("record has no models")?;
        let (nx, nu, ny) = first.dims().ok_or("cannot infer dimensions")?;
        ParamsFile {
            n_x: nx,
            n_u: nu,
            n_y: ny,
            m: self.models.len(),
            t: self.t.clone(),
            models: self.models.clone(),
        }
        .to_params()
    }
}

pub fn chain_to_jsonl(chain: &Chain) -> String {
    let mut out = String::new();
    for s in &chain.samples {
        out.push_str(
            &serde_json::to_string(&ChainRecord::new(s.iteration, &s.theta))
                .expect("record serialises"),
        );
        out.push('\n');
    }
    out
}

/// Parsed chain file: the samples in file order and the number of
/// non-empty lines that could not be parsed.
pub struct ChainFile {
    pub samples: Vec<(usize, JmlsParams)>,
    pub malformed: usize,
}

pub fn parse_chain(text: &str) -> ChainFile {
    let mut samples = Vec::new();
    let mut malformed = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed = serde_json::from_str::<ChainRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.to_params().map(|p| (r.iter, p)));
        match parsed {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::warn!("skipping malformed chain record: {e}");
                malformed += 1;
            }
        }
    }
    ChainFile { samples, malformed }
}

/// `data.csv`: header `k,u_1..u_{n_u},y_1..y_{n_y}`, `k` from 1.
pub fn data_to_csv(data: &Dataset) -> String {
    let mut out = String::from("k");
    for i in 1..=data.n_u() {
        write!(out, ",u_{i}").unwrap();
    }
    for i in 1..=data.n_y() {
        write!(out, ",y_{i}").unwrap();
    }
    out.push('\n');
    for k in 0..data.len() {
        write!(out, "{}", k + 1).unwrap();
        for v in data.u[k].iter().chain(data.y[k].iter()) {
            write!(out, ",{}", fmt_f64(*v)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn data_from_csv(text: &str) -> std::result::Result<Dataset, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or("data file is empty")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"k") {
        return Err("data header must start with k".into());
    }
    let nu = cols.iter().filter(|c| c.starts_with("u_")).count();
    let ny = cols.iter().filter(|c| c.starts_with("y_")).count();
    let expected: Vec<String> = std::iter::once("k".to_string())
        .chain((1..=nu).map(|i| format!("u_{i}")))
        .chain((1..=ny).map(|i| format!("y_{i}")))
        .collect();
    if ny == 0 || cols != expected {
        return Err(format!("data header must be {}", expected.join(",")));
    }
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(format!(
                "line {}: expected {} fields",
                line_no + 1,
                cols.len()
            ));
        }
        let k: usize = fields[0]
            .parse()
            .map_err(|_| format!("line {}: bad step index", line_no + 1))?;
        if k != u.len() + 1 {
            return Err(format!(
                "line {}: step index {k} out of sequence",
                line_no + 1
            ));
        }
        let vals = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| format!("line {}: bad number {f:?}", line_no + 1))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        u.push(DVector::from_column_slice(&vals[..nu]));
        y.push(DVector::from_column_slice(&vals[nu..]));
    }
    Dataset::new(u, y).map_err(|e| e.to_string())
}

/// `trajectory.csv`: `k,z,x_1..x_{n_x}` with one-based `k` and `z`.
pub fn trajectory_to_csv(x: &[DVector<f64>], z: &[usize]) -> String {
    let nx = x.first().map_or(0, |v| v.len());
    let mut out = String::from("k,z");
    for i in 1..=nx {
        write!(out, ",x_{i}").unwrap();
    }
    out.push('\n');
    for (k, (xk, zk)) in x.iter().zip(z).enumerate() {
        write!(out, "{},{}", k + 1, zk + 1).unwrap();
        for v in xk.iter() {
            write!(out, ",{}", fmt_f64(*v)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Conjugate prior file: per model `M`, `V`, `Lambda` (row-major) and
/// `nu`; `alpha` column-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub models: Vec<PriorModelRecord>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorModelRecord {
    #[serde(rename = "M")]
    pub mean: Vec<f64>,
    #[serde(rename = "V")]
    pub col_cov: Vec<f64>,
    #[serde(rename = "Lambda")]
    pub scale: Vec<f64>,
    pub nu: f64,
}

impl PriorFile {
    pub fn from_prior(p: &PriorHyper) -> Self {
        Self {
            models: p
                .models
                .iter()
                .map(|h| PriorModelRecord {
                    mean: row_major(&h.mean),
                    col_cov: row_major(&h.col_cov),
                    scale: row_major(&h.scale),
                    nu: h.dof,
                })
                .collect(),
            alpha: p.alpha.as_slice().to_vec(),
        }
    }

    pub fn to_prior(
        &self,
        n_x: usize,
        n_u: usize,
        n_y: usize,
    ) -> std::result::Result<PriorHyper, String> {
        let m = self.models.len();
        if self.alpha.len() != m * m {
            return Err(format!(
                "alpha has {} entries, expected {}",
                self.alpha.len(),
                m * m
            ));
        }
        let (rows, cols) = (n_y + n_x, n_x + n_u);
        let models = self
            .models
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(MniwHyper {
                    mean: from_row_major(rows, cols, &r.mean, &format!("prior model {} M", i + 1))?,
                    col_cov: from_row_major(
                        cols,
                        cols,
                        &r.col_cov,
                        &format!("prior model {} V", i + 1),
                    )?,
                    scale: from_row_major(
                        rows,
                        rows,
                        &r.scale,
                        &format!("prior model {} Lambda", i + 1),
                    )?,
                    dof: r.nu,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let prior = PriorHyper {
            models,
            alpha: DMatrix::from_column_slice(m, m, &self.alpha),
        };
        prior.validate(n_x, n_u, n_y).map_err(|e| e.to_string())?;
        Ok(prior)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePriorFile {
    pub components: Vec<StatePriorComponent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePriorComponent {
    /// One-based mode index.
    pub model: usize,
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major.
    pub cov: Vec<f64>,
}

impl StatePriorFile {
    fn to_prior(&self, m: usize, n_x: usize) -> std::result::Result<HybridPrior, String> {
        let mut per_model = vec![Vec::new(); m];
        for (i, c) in self.components.iter().enumerate() {
            if c.model == 0 || c.model > m {
                return Err(format!(
                    "state prior component {} names model {}",
                    i + 1,
                    c.model
                ));
            }
            if c.mean.len() != n_x {
                return Err(format!(
                    "state prior component {} mean has {} entries",
                    i + 1,
                    c.mean.len()
                ));
            }
            per_model[c.model - 1].push(PriorComponent {
                weight: c.weight,
                mean: DVector::from_column_slice(&c.mean),
                cov: from_row_major(n_x, n_x, &c.cov, "state prior covariance")?,
            });
        }
        let prior = HybridPrior { per_model };
        prior.validate(m, n_x).map_err(|e| e.to_string())?;
        Ok(prior)
    }
}

fn default_thin() -> usize {
    1
}

/// `identify` configuration. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub output: PathBuf,
    pub n_x: usize,
    pub m: usize,
    pub iterations: usize,
    /// Defaults to 10% of `iterations`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub max_components: usize,
    pub seed: u64,
    /// Conjugate prior file; the broad default prior when absent.
    #[serde(default)]
    pub prior: Option<PathBuf>,
    /// Parameter file used as `θ¹`; a prior draw when absent.
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[serde(default)]
    pub state_prior: Option<StatePriorFile>,
    #[serde(default)]
    pub store_trajectories: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_input(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &PathBuf| {
            if p.is_relative() {
                base.join(p)
            } else {
                p.clone()
            }
        };
        cfg.data = resolve(&cfg.data);
        cfg.output = resolve(&cfg.output);
        cfg.prior = cfg.prior.as_ref().map(resolve);
        cfg.init = cfg.init.as_ref().map(resolve);
        Ok(cfg)
    }
}

/// Everything `identify` needs, loaded and checked.
pub struct IdentifyJob {
    pub config: GibbsConfig,
    pub data: Dataset,
    pub output: PathBuf,
    pub n_x: usize,
}

pub fn prepare_identify(cfg: &RunConfig, seed_override: Option<u64>) -> CliResult<IdentifyJob> {
    for p in std::iter::once(&cfg.data)
        .chain(cfg.prior.iter())
        .chain(cfg.init.iter())
    {
        if !p.exists() {
            return Err(usage(format!("{} does not exist", p.display())));
        }
    }
    let data = data_from_csv(&read_input(&cfg.data)?)
        .map_err(|e| usage(format!("{}: {e}", cfg.data.display())))?;
    let (n_x, m) = (cfg.n_x, cfg.m);
    if n_x == 0 || m == 0 {
        return Err(usage("n_x and m must be positive"));
    }
    let (n_u, n_y) = (data.n_u(), data.n_y());
    let prior = match &cfg.prior {
        Some(p) => {
            let file: PriorFile = serde_json::from_str(&read_input(p)?)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?;
            file.to_prior(n_x, n_u, n_y)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => uninformative_prior(m, n_x, n_u, n_y),
    };
    if prior.models.len() != m {
        return Err(usage(format!(
            "prior has {} models but m = {m}",
            prior.models.len()
        )));
    }
    let init_theta = match &cfg.init {
        Some(p) => {
            let theta = read_params(p)?;
            if theta.num_models() != m
                || theta.n_x() != n_x
                || theta.n_u() != n_u
                || theta.n_y() != n_y
            {
                return Err(usage(format!(
                    "{}: dimensions do not match the configuration",
                    p.display()
                )));
            }
            Some(theta)
        }
        None => None,
    };
    let state_prior = match &cfg.state_prior {
        Some(s) => s
            .to_prior(m, n_x)
            .map_err(|e| usage(format!("state prior: {e}")))?,
        None => HybridPrior::diffuse(m, n_x),
    };
    let config = GibbsConfig {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in.unwrap_or(cfg.iterations / 10),
        thin: cfg.thin,
        max_components: cfg.max_components,
        seed: seed_override.unwrap_or(cfg.seed),
        init_theta,
        prior,
        state_prior,
        store_trajectories: cfg.store_trajectories,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(IdentifyJob {
        config,
        data,
        output: cfg.output.clone(),
        n_x,
    })
}

/// `jmls identify`: runs the sampler and writes `chain.jsonl`,
/// `loglik.csv`, `last_trajectory.csv`, `run_meta.json` and, when
/// requested, `trajectories.jsonl`. A failed run still writes whatever was
/// completed together with the error.
pub fn run_identify(config_path: &Path, seed_override: Option<u64>) -> CliResult<()> {
    let cfg = RunConfig::load(config_path)?;
    let job = prepare_identify(&cfg, seed_override)?;
    let start = Instant::now();
    let outcome = run_particle_gibbs(&job.config, &job.data);
    let elapsed = start.elapsed().as_secs_f64();
    let (chain, failure) = match outcome {
        Ok(chain) => (chain, None),
        Err(e) => {
            let msg = e.to_string();
            (*e.partial, Some((e.iteration, msg)))
        }
    };
    write_chain_outputs(&job, &chain, elapsed, failure.as_ref())?;
    match failure {
        Some((_, msg)) => Err(runtime(msg)),
        None => Ok(()),
    }
}

fn write_chain_outputs(
    job: &IdentifyJob,
    chain: &Chain,
    elapsed: f64,
    failure: Option<&(usize, String)>,
) -> CliResult<()> {
    let out = &job.output;
    write_out(&out.join("chain.jsonl"), chain_to_jsonl(chain).as_bytes())?;

    let mut ll = String::from("iter,loglik\n");
    for (i, v) in chain.log_likelihood.iter().enumerate() {
        writeln!(ll, "{},{}", i + 1, fmt_f64(*v)).unwrap();
    }
    write_out(&out.join("loglik.csv"), ll.as_bytes())?;

    if let Some(t) = &chain.last_trajectory {
        write_out(
            &out.join("last_trajectory.csv"),
            trajectory_to_csv(&t.x, &t.z).as_bytes(),
        )?;
    }
    if job.config.store_trajectories {
        let mut lines = String::new();
        for (s, t) in chain.samples.iter().zip(&chain.trajectories) {
            lines.push_str(&trajectory_record(s.iteration, t));
            lines.push('\n');
        }
        write_out(&out.join("trajectories.jsonl"), lines.as_bytes())?;
    }

    let c = &job.config;
    let meta = json!({
        "seed": c.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "rng": "chacha8, stream 0 for initialisation and stream l for iteration l",
        "n_x": job.n_x,
        "n_u": job.data.n_u(),
        "n_y": job.data.n_y(),
        "m": c.prior.models.len(),
        "N": job.data.len(),
        "iterations": c.iterations,
        "burn_in": c.burn_in,
        "thin": c.thin,
        "max_components": c.max_components,
        "initialisation": if c.init_theta.is_some() { "file" } else { "prior draw" },
        "completed_iterations": chain.accepted,
        "samples": chain.samples.len(),
        "elapsed_seconds": elapsed,
        "status": if failure.is_some() { "failed" } else { "ok" },
        "failed_iteration": failure.map(|f| f.0),
        "error": failure.map(|f| f.1.clone()),
        "resumable": false,
    });
    write_out(
        &out.join("run_meta.json"),
        (serde_json::to_string_pretty(&meta).unwrap() + "\n").as_bytes(),
    )
}

fn trajectory_record(iteration: usize, t: &Trajectory) -> String {
    let x: Vec<Vec<f64>> = t.x.iter().map(|v| v.iter().copied().collect()).collect();
    let z: Vec<usize> = t.z.iter().map(|z| z + 1).collect();
    serde_json::to_string(&json!({ "iter": iteration, "z": z, "x": x })).unwrap()
}

/// `jmls simulate`: inputs `u_k ~ N(0, I)`, `(x_1, z_1)` from the diffuse
/// state prior, all from stream 0 of `seed`.
pub fn run_simulate(params_path: &Path, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    if n == 0 {
        return Err(usage("N must be at least 1"));
    }
    let params = read_params(params_path)?;
    let (data, x, z) = simulate_dataset(&params, n, seed).map_err(|e| runtime(e.to_string()))?;
    write_out(&out.join("data.csv"), data_to_csv(&data).as_bytes())?;
    write_out(
        &out.join("trajectory.csv"),
        trajectory_to_csv(&x, &z).as_bytes(),
    )
}

/// The simulation behind `jmls simulate`.
pub fn simulate_dataset(
    params: &JmlsParams,
    n: usize,
    seed: u64,
) -> crate::Result<(Dataset, Vec<DVector<f64>>, Vec<usize>)> {
    let mut rng = stream(seed, 0);
    let u: Vec<DVector<f64>> = (0..n)
        .map(|_| standard_normal_vector(params.n_u(), &mut rng))
        .collect();
    let (x1, z1) = HybridPrior::diffuse(params.num_models(), params.n_x()).sample(&mut rng)?;
    let sim = simulate(params, &u, &x1, z1, &mut rng)?;
    Ok((Dataset::new(u, sim.y)?, sim.x, sim.z))
}

/// `jmls summarize`.
pub fn run_summarize(
    chain_path: &Path,
    truth_path: Option<&Path>,
    out: &Path,
    options: &SummaryOptions,
) -> CliResult<PosteriorSummary> {
    let text = read_input(chain_path)?;
    let parsed = parse_chain(&text);
    let total = parsed.samples.len() + parsed.malformed;
    if total == 0 {
        return Err(usage(format!(
            "{} contains no chain records",
            chain_path.display()
        )));
    }
    if parsed.malformed > 0 {
        log::warn!(
            "{} of {total} chain records were malformed and skipped",
            parsed.malformed
        );
    }
    if parsed.malformed as f64 > 0.01 * total as f64 {
        return Err(runtime(format!(
            "{} of {total} chain records are malformed (more than 1%)",
            parsed.malformed
        )));
    }
    let truth = truth_path.map(read_params).transpose()?;
    let samples: Vec<JmlsParams> = parsed.samples.into_iter().map(|(_, p)| p).collect();
    let summary = summarize(&samples, truth.as_ref(), options).map_err(|e| usage(e.to_string()))?;
    write_summary(&summary, out)?;
    Ok(summary)
}

fn summary_row(q: &QuantitySummary) -> String {
    [
        q.mean, q.sd, q.median, q.ci95.0, q.ci95.1, q.ci99.0, q.ci99.1,
    ]
    .iter()
    .map(|v| fmt_f64(*v))
    .collect::<Vec<_>>()
    .join(",")
}

pub fn write_summary(summary: &PosteriorSummary, out: &Path) -> CliResult<()> {
    for q in &summary.quantities {
        let mut csv = String::from("bin_left,bin_right,density\n");
        for (i, d) in q.histogram.density.iter().enumerate() {
            writeln!(
                csv,
                "{},{},{}",
                fmt_f64(q.histogram.edges[i]),
                fmt_f64(q.histogram.edges[i + 1]),
                fmt_f64(*d)
            )
            .unwrap();
        }
        write_out(
            &out.join("histograms").join(format!("{}.csv", q.name)),
            csv.as_bytes(),
        )?;
    }

    let mut csv = String::from("row,col,mean,sd,median,lo95,hi95,lo99,hi99\n");
    for q in summary.transition_marginals() {
        let idx: Vec<&str> = q.name.split('_').skip(1).collect();
        writeln!(csv, "{},{},{}", idx[0], idx[1], summary_row(q)).unwrap();
    }
    write_out(&out.join("transition_marginals.csv"), csv.as_bytes())?;

    let mut csv = String::from("quantity,mean,sd,median,lo95,hi95,lo99,hi99\n");
    for q in &summary.quantities {
        writeln!(csv, "{},{}", q.name, summary_row(q)).unwrap();
    }
    write_out(&out.join("summary.csv"), csv.as_bytes())?;

    let mut csv = String::from("model,output,input,freq,mean_mag,lo3sd,hi3sd\n");
    for e in &summary.bode {
        for k in 0..e.frequencies.len() {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                e.model + 1,
                e.output + 1,
                e.input + 1,
                fmt_f64(e.frequencies[k]),
                fmt_f64(e.mean_db[k]),
                fmt_f64(e.lo3sd[k]),
                fmt_f64(e.hi3sd[k])
            )
            .unwrap();
        }
    }
    write_out(&out.join("bode_envelope.csv"), csv.as_bytes())?;

    if let (Some(cov), Some(bcov)) = (&summary.coverage, &summary.bode_coverage) {
        let quantities: Vec<serde_json::Value> = cov
            .iter()
            .map(|c| {
                let q = summary
                    .quantity(&c.name)
                    .expect("coverage refers to a summarised quantity");
                json!({
                    "name": c.name,
                    "truth": c.truth,
                    "lo95": q.ci95.0, "hi95": q.ci95.1,
                    "lo99": q.ci99.0, "hi99": q.ci99.1,
                    "in95": c.in95,
                    "in99": c.in99,
                })
            })
            .collect();
        let bode: Vec<serde_json::Value> = bcov
            .iter()
            .map(|b| json!({ "model": b.model + 1, "output": b.output + 1, "input": b.input + 1, "fraction_inside": b.fraction }))
            .collect();
        let doc = json!({ "quantities": quantities, "bode": bode });
        write_out(
            &out.join("coverage.json"),
            (serde_json::to_string_pretty(&doc).unwrap() + "\n").as_bytes(),
        )?;
    }
    Ok(())
}

/// Summary options with the default 64-point grid.
pub fn summary_options(relabel: bool, bins: Option<usize>, grid_points: usize) -> SummaryOptions {
    SummaryOptions {
        relabel,
        bins,
        grid: log_grid(grid_points),
    }
}
