//! Command-line front end: batch campaigns, paired trim comparisons, constant
//! estimation and the plant catalog.
//!
//! Campaigns are configured by a TOML run spec; flags given on the command
//! line override the matching spec fields. Realization `r` runs with seed
//! `seed + r`, so a batch is reproducible from its spec alone.

pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{compare_trim, run_campaign, Algorithm, CampaignConfig, CampaignLog, GuardMode};
use crate::bounds::LipschitzSpec;
use crate::error::{Error, Result};
use crate::estimation::{
    consistency_repair, estimate_directional_from_model, estimate_lumped_from_model, fit_local_model,
    preset_from_physics, CheckMode, DerivativeSign, EstimateOptions, FitForm,
};
use crate::geometry::BoxDomain;
use crate::plants::{builtin_plants, plant_by_id, Func, Plant};

use io::{BatchSummary, Provenance, SpecFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Campaign batch configuration, read from TOML.
///
/// ```toml
/// plant = "p-quad"
/// algorithm = "ma"
/// guard = "lumped"
/// realizations = 20
/// seed = 1
/// max_iterations = 30
/// noise = true
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub plant: String,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_guard")]
    pub guard: GuardMode,
    /// Refine and trim measurements (`run` only; `compare-trim` runs both).
    #[serde(default)]
    pub trim: bool,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub max_iterations: Option<usize>,
    pub delta_e: Option<f64>,
    /// Defaults to off for `run` and on for `compare-trim`.
    pub noise: Option<bool>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub random_start: bool,
    pub eta: Option<f64>,
    pub solver_starts: Option<usize>,
    /// Spec files (as written by `estimate`) for each experimental
    /// constraint, relative to the run spec's directory.
    pub constraint_specs: Option<Vec<PathBuf>>,
    pub cost_spec: Option<PathBuf>,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Ca
}

fn default_guard() -> GuardMode {
    GuardMode::Lumped
}

fn one() -> usize {
    1
}

impl RunSpec {
    pub fn parse(text: &str) -> Result<RunSpec> {
        let spec: RunSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        plant_by_id(&self.plant)?;
        if self.realizations < 1 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Campaign settings for the realization with the given seed. `base_dir`
    /// resolves relative spec-file paths.
    pub fn campaign_config(&self, seed: u64, noise_default: bool, base_dir: &Path) -> Result<CampaignConfig> {
        let d = CampaignConfig::default();
        let load = |p: &PathBuf| -> Result<LipschitzSpec> { Ok(io::read_spec_file(&base_dir.join(p))?.spec) };
        let cfg = CampaignConfig {
            algorithm: self.algorithm,
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            delta_e: self.delta_e.unwrap_or(d.delta_e),
            guard: self.guard,
            noise: self.noise.unwrap_or(noise_default),
            sigma: self.sigma.unwrap_or(d.sigma),
            seed,
            alpha: self.alpha,
            trim: self.trim,
            random_start: self.random_start,
            eta: self.eta.unwrap_or(d.eta),
            solver_starts: self.solver_starts.unwrap_or(d.solver_starts),
            constraint_specs: self
                .constraint_specs
                .as_ref()
                .map(|v| v.iter().map(load).collect::<Result<Vec<_>>>())
                .transpose()?,
            cost_spec: self.cost_spec.as_ref().map(load).transpose()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "lipexp", version, about = "Lipschitz-guarded experimental optimization campaigns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a batch of campaigns and write the iterates table and summary.
    Run(BatchArgs),
    /// Run paired campaigns with and without trimming on identical noise.
    CompareTrim(BatchArgs),
    /// Estimate Lipschitz constants and write them as a spec file.
    Estimate(EstimateArgs),
    /// List the built-in plants.
    Plants,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// TOML run spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Realizations run concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Search a plant function's parametric model over the domain and parameter box.
    Model,
    /// Fit a local response surface to a measurement table and search it.
    Fit,
    /// Derivative signs and magnitudes known from physics.
    Physics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Linear,
    Quadratic,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Plant id (model method; also supplies the domain for physics).
    #[arg(long)]
    pub plant: Option<String>,
    /// Use the plant function's exact model instead of its parametric family.
    #[arg(long)]
    pub exact: bool,
    /// `cost`, or `g1`, `g2`, ... for experimental constraints.
    #[arg(long, default_value = "g1")]
    pub function: String,
    /// Measurement table `index,tag,u1..un,value,noise_lower,noise_upper`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub form: FormArg,
    /// Comma-separated derivative signs: nonneg, nonpos or free.
    #[arg(long, value_delimiter = ',')]
    pub signs: Vec<String>,
    /// Comma-separated magnitude bounds; `-` leaves a side unbounded.
    #[arg(long, value_delimiter = ',')]
    pub magnitudes: Vec<String>,
    /// Repair the estimate against the measurement table.
    #[arg(long)]
    pub repair: bool,
    /// Repair inflation step.
    #[arg(long, default_value_t = 0.1)]
    pub inflation: f64,
    /// Grid nodes per dimension for model searches.
    #[arg(long, default_value_t = 9)]
    pub grid: usize,
    /// Output directory; constants are written to `spec.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Exit code for an error: configuration problems are 2, everything else 3.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownId(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, false).map(|_| ()),
        Command::CompareTrim(a) => cmd_run(&a, true).map(|_| ()),
        Command::Estimate(a) => cmd_estimate(&a).map(|_| ()),
        Command::Plants => {
            print!("{}", plants_table());
            Ok(())
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn plants_table() -> String {
    let mut s = String::from("id\tn_u\tn_g\toptimal_cost\tdescription\n");
    for p in builtin_plants() {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.id,
            p.dim(),
            p.n_constraints(),
            p.optimal_cost,
            p.description
        ));
    }
    s
}

struct Batch {
    spec: RunSpec,
    base_dir: PathBuf,
    out: PathBuf,
    workers: usize,
}

fn load_batch(a: &BatchArgs) -> Result<Batch> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| Error::Config(format!("{}: {e}", a.spec.display())))?;
    let mut spec = RunSpec::parse(&text)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = a.realizations {
        spec.realizations = r;
    }
    if let Some(w) = a.workers {
        spec.workers = Some(w);
    }
    if let Some(o) = &a.out {
        spec.out = Some(o.clone());
    }
    spec.validate()?;
    let base_dir = a.spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = spec.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let workers = spec.workers.unwrap_or(1);
    Ok(Batch {
        spec,
        base_dir,
        out,
        workers,
    })
}

/// Runs `f` on every realization with at most `workers` threads, keeping
/// results in realization order.
fn in_parallel<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Runs the batch described by `a`. With `paired`, each realization runs
/// once without and once with trimming; Δφ_ave is reported per realization.
/// Returns the summary that was written.
pub fn cmd_run(a: &BatchArgs, paired: bool) -> Result<BatchSummary> {
    let b = load_batch(a)?;
    let plant = plant_by_id(&b.spec.plant)?;
    if paired {
        if b.spec.noise == Some(false) {
            return Err(Error::Config("compare-trim needs noise on".into()));
        }
        if b.spec.realizations < 2 {
            return Err(Error::Config("compare-trim needs at least 2 realizations".into()));
        }
    }
    let configs = (0..b.spec.realizations)
        .map(|r| b.spec.campaign_config(b.spec.seed.wrapping_add(r as u64), paired, &b.base_dir))
        .collect::<Result<Vec<_>>>()?;

    let (logs, deltas): (Vec<(usize, CampaignLog)>, Option<Vec<f64>>) = if paired {
        let pairs = in_parallel(configs.len(), b.workers, |r| compare_trim(plant, &configs[r]))?;
        let deltas = pairs.iter().map(|p| p.delta_phi_ave).collect();
        let logs = pairs
            .into_iter()
            .enumerate()
            .flat_map(|(r, p)| [(r, p.untrimmed), (r, p.trimmed)])
            .collect();
        (logs, Some(deltas))
    } else {
        let logs = in_parallel(configs.len(), b.workers, |r| run_campaign(plant, &configs[r]))?;
        (logs.into_iter().enumerate().collect(), None)
    };

    let refs: Vec<(usize, &CampaignLog)> = logs.iter().map(|(r, l)| (*r, l)).collect();
    let summary = BatchSummary::from_logs(plant, &refs, deltas.as_deref());
    write_outputs(&b.out, &io::iterates_csv(&refs)?, &io::summary_json(&summary)?)?;
    Ok(summary)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_outputs(out: &Path, iterates: &str, summary: &str) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    write_file(&out.join("iterates.csv"), iterates)?;
    write_file(&out.join("summary.json"), summary)
}

fn parse_function(plant: &Plant, name: &str) -> Result<Func> {
    if name == "cost" {
        return Ok(Func::Cost);
    }
    let j: usize = name
        .strip_prefix('g')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config(format!("function must be cost or g<j>, got {name:?}")))?;
    if j == 0 || j > plant.n_constraints() {
        return Err(Error::Config(format!("{} has no constraint {name}", plant.id)));
    }
    Ok(Func::Constraint(j - 1))
}

fn read_data(path: &Path) -> Result<Vec<crate::uncertainty::Measurement>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    io::read_measurements_csv(&text)
}

/// Builds the constants requested by `a`, optionally repairs them, and writes
/// `spec.json` into the output directory.
pub fn cmd_estimate(a: &EstimateArgs) -> Result<SpecFile> {
    let opts = EstimateOptions {
        grid_per_dim: a.grid,
        ..Default::default()
    };
    let data = a.data.as_deref().map(read_data).transpose()?;
    let mut provenance = Provenance {
        method: format!("{:?}", a.method).to_lowercase(),
        source: String::new(),
        grid_per_dim: None,
        fit_form: None,
        repaired: false,
        inflation: None,
        inflation_steps: 0,
    };
    let spec = match a.method {
        Method::Model => {
            let id = a.plant.as_deref().ok_or_else(|| Error::Config("model estimate needs --plant".into()))?;
            let plant = plant_by_id(id)?;
            let f = plant.function(parse_function(plant, &a.function)?);
            let model = if a.exact { f.exact_model() } else { f.model().clone() };
            provenance.source = format!("{id}:{}{}", a.function, if a.exact { " (exact)" } else { "" });
            provenance.grid_per_dim = Some(a.grid);
            let d = estimate_directional_from_model(&model, &plant.domain, &opts)?;
            let k = estimate_lumped_from_model(&model, &plant.domain, &opts)?;
            LipschitzSpec::directional(d).with_lumped(k)
        }
        Method::Fit => {
            let data = data.as_deref().ok_or_else(|| Error::Config("fit estimate needs --data".into()))?;
            let form = match a.form {
                FormArg::Linear => FitForm::Linear,
                FormArg::Quadratic => FitForm::Quadratic,
            };
            let model = fit_local_model(data, form)?;
            provenance.source = a.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            provenance.grid_per_dim = Some(a.grid);
            provenance.fit_form = Some(format!("{form:?}").to_lowercase());
            let domain = model.domain().clone();
            let d = estimate_directional_from_model(&model, &domain, &opts)?;
            let k = estimate_lumped_from_model(&model, &domain, &opts)?;
            LipschitzSpec::directional(d).with_lumped(k)
        }
        Method::Physics => {
            let signs = a
                .signs
                .iter()
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<DerivativeSign>>>()?;
            if signs.is_empty() {
                return Err(Error::Config("physics estimate needs --signs".into()));
            }
            let mags = if a.magnitudes.is_empty() {
                vec![None; signs.len()]
            } else {
                a.magnitudes
                    .iter()
                    .map(|m| match m.trim() {
                        "-" | "" => Ok(None),
                        v => v
                            .parse()
                            .map(Some)
                            .map_err(|_| Error::Config(format!("bad magnitude {v:?}"))),
                    })
                    .collect::<Result<Vec<Option<f64>>>>()?
            };
            let preset = preset_from_physics(&signs, &mags)?;
            let domain = match &a.plant {
                Some(id) => plant_by_id(id)?.domain.clone(),
                None => BoxDomain::unit(signs.len()),
            };
            provenance.source = a.plant.clone().unwrap_or_else(|| format!("unit box, n_u = {}", signs.len()));
            let d = preset.to_directional(&domain)?;
            let spec = LipschitzSpec::directional(d);
            let k = spec.effective_lumped()?;
            spec.with_lumped(k)
        }
    };
    let spec = if a.repair {
        let data = data.as_deref().ok_or_else(|| Error::Config("repair needs --data".into()))?;
        let mode = if data.iter().all(|m| m.noise_lower == 0.0 && m.noise_upper == 0.0) {
            CheckMode::Exact
        } else {
            CheckMode::Interval
        };
        let report = consistency_repair(&spec, data, a.inflation, mode)?;
        provenance.repaired = true;
        provenance.inflation = Some(a.inflation);
        provenance.inflation_steps = report.inflation_steps;
        report.repaired
    } else {
        spec
    };
    let file = SpecFile { provenance, spec };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    write_file(&a.out.join("spec.json"), &io::spec_json(&file)?)?;
    Ok(file)
}
