use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use curvestop_core::curve::{parse_key_values, ConfigDescriptor, FeatureSchema, MetricOrientation};
use curvestop_core::dataset::CurveDataset;
use curvestop_core::regression::{Backend, CvConfig};
use curvestop_core::scheduler::{
    run_hyperband_with, ConfigSampler, EpochOracle, FHyperband, FHyperbandParams, HyperbandParams, PredictorOptions,
    ReplayOracle, ReplaySampler, ResumeMode, RunLedger, RunOutcome, SyntheticOracle, SyntheticSampler,
};
use curvestop_core::search_sim::{self, SimulationConfig, SweepCell, SweepConfig};
use curvestop_core::seed;
use curvestop_core::srm::{fit_srm, SrmOptions};
use curvestop_core::stopping::{should_terminate, BestScores, TerminationPolicy};
use curvestop_core::synth::{self, GeneratorConfig, SyntheticSource};
use serde::Serialize;

use crate::advisor::{self, Advisor};
use crate::dataset_io::{load_dataset, save_dataset, DatasetFormat};
use crate::error::{CliError, Result};
use crate::fsio;
use crate::manifest::{self, load_manifest};
use crate::model_io::{load_model, save_model};
use crate::subprocess::{replay_worker, SubprocessOracle};

#[derive(Debug, Parser)]
#[command(name = "curvestop", version, about = "Predict final learning-curve values and stop hopeless training runs early")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a synthetic curve dataset and its manifest
    Gen(GenArgs),
    /// Fit a sequential regression model on a dataset
    Fit(FitArgs),
    /// Predict the final value of a partial curve
    Predict(PredictArgs),
    /// Prediction-quality experiments
    Eval(EvalArgs),
    /// Replay sequential search with early termination
    Simulate(SimulateArgs),
    /// Run Hyperband, optionally with early termination
    Hyperband(HyperbandArgs),
    /// Serve termination decisions over line-delimited JSON
    Advise(AdviseArgs),
    #[command(hide = true)]
    ReplayWorker(ReplayWorkerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Standard,
    HpDecoupled,
    HyperbandWorkload,
}

impl Preset {
    fn generator(self) -> GeneratorConfig {
        match self {
            Preset::Standard => synth::standard_benchmark(),
            Preset::HpDecoupled => synth::hp_decoupled_benchmark(),
            Preset::HyperbandWorkload => synth::hyperband_workload().with_count(1000),
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Curve dataset (JSONL or CSV)
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset format; guessed from the extension when omitted
    #[arg(long)]
    pub format: Option<DatasetFormat>,
}

impl DataArgs {
    fn load(&self) -> Result<CurveDataset> {
        load_dataset(&self.data, self.format.unwrap_or_else(|| DatasetFormat::from_path(&self.data)))
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Preset::Standard)]
    pub preset: Preset,
    /// Regenerate from an existing manifest instead of a preset
    #[arg(long, conflicts_with_all = ["preset", "count"])]
    pub from_manifest: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Overrides the preset's seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// Manifest path; defaults to `<out>.manifest.json`
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = Backend::NuSvrRbf)]
    pub backend: Backend,
    /// Fit only tau = ceil(fraction * T); every tau when omitted
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long, default_value_t = FeatureSchema::ALL)]
    pub schema: FeatureSchema,
    #[arg(long, default_value_t = 1000)]
    pub cv_budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, default_value_t = 0.99)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 1)]
    pub top_n: usize,
}

impl PolicyArgs {
    fn policy(&self) -> Result<TerminationPolicy> {
        let p = TerminationPolicy::new(self.delta)?.with_offset(self.offset).with_top_n(self.top_n);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Observed values, comma separated
    #[arg(long)]
    pub curve: String,
    /// Architecture parameters as k=v,...
    #[arg(long, default_value = "")]
    pub ap: String,
    /// Hyperparameters as k=v,...
    #[arg(long, default_value = "")]
    pub hp: String,
    /// Finished scores to compare against, comma separated raw values
    #[arg(long, default_value = "")]
    pub best: String,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalMode {
    Sweep,
    Ablation,
    Depth,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub mode: EvalMode,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub train_size: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Observed fractions for `sweep`, comma separated
    #[arg(long, default_value = "0.1,0.25,0.5,0.75")]
    pub fractions: String,
    /// Backends for `sweep`, comma separated
    #[arg(long, default_value = "nu_svr_rbf,last_seen_value")]
    pub backends: String,
    /// Backend for `ablation` and `depth`
    #[arg(long, default_value_t = Backend::NuSvrRbf)]
    pub backend: Backend,
    #[arg(long, default_value_t = FeatureSchema::ALL)]
    pub schema: FeatureSchema,
    /// Observed fraction for `ablation` and `depth`
    #[arg(long, default_value_t = 0.25)]
    pub fraction: f64,
    #[arg(long, default_value = "layers")]
    pub depth_key: String,
    #[arg(long, default_value_t = 10.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1000)]
    pub cv_budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub orderings: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = Backend::NuSvrRbf)]
    pub backend: Backend,
    #[arg(long, default_value_t = FeatureSchema::ALL)]
    pub schema: FeatureSchema,
    #[arg(long, default_value_t = 1000)]
    pub cv_budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OracleKind {
    Synthetic,
    Replay,
    Advisor,
}

#[derive(Debug, Args)]
pub struct HyperbandArgs {
    /// Maximum epochs per configuration
    #[arg(long = "R", default_value_t = 27)]
    pub max_resource: usize,
    #[arg(long, default_value_t = 3.0)]
    pub eta: f64,
    /// Enable early termination with learned predictors
    #[arg(long)]
    pub f: bool,
    #[arg(long, default_value_t = 0.95)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    /// Consecutive runs sharing predictors
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, value_enum, default_value_t = OracleKind::Synthetic)]
    pub oracle: OracleKind,
    /// Dataset for the replay and advisor oracles
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long, default_value_t = 50)]
    pub cv_budget: usize,
    /// Retrain promoted configurations from scratch
    #[arg(long)]
    pub restart: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdviseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Persisted best-score ledger; created when missing
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Listen on this TCP address instead of standard streams
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayWorkerArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let bytes = fsio::to_json_bytes(value)?;
    match out {
        Some(p) => fsio::write_atomic(p, &bytes),
        None => io::stdout().write_all(&bytes).map_err(|e| CliError::runtime(format!("stdout: {e}"))),
    }
}

fn split_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| CliError::validation(format!("bad {what} `{x}`: {e}"))))
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Gen(a) => gen(a),
        Cmd::Fit(a) => fit(a),
        Cmd::Predict(a) => predict(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Hyperband(a) => hyperband(a),
        Cmd::Advise(a) => advise(a),
        Cmd::ReplayWorker(a) => {
            let dataset = a.data.load()?;
            replay_worker(&dataset, io::stdin().lock(), io::stdout().lock())
        }
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let mut gen = match &a.from_manifest {
        Some(p) => load_manifest(p)?.generator,
        None => a.preset.generator(),
    };
    if let Some(c) = a.count {
        gen = gen.with_count(c);
    }
    if let Some(s) = a.seed {
        gen = gen.with_seed(s);
    }
    let (dataset, manifest) = manifest::generate(&gen)?;
    if let Some(p) = &a.from_manifest {
        let expected = load_manifest(p)?;
        if a.seed.is_none() && expected.sha256 != manifest.sha256 {
            return Err(CliError::runtime(format!(
                "regenerated checksum {} differs from manifest {}",
                manifest.sha256, expected.sha256
            )));
        }
    }
    let format = a.format.unwrap_or_else(|| DatasetFormat::from_path(&a.out));
    save_dataset(&a.out, &dataset, format)?;
    let manifest_path = a.manifest.unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    });
    fsio::write_json(&manifest_path, &manifest)
}

fn fit(a: FitArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let taus = match a.fraction {
        Some(f) => Some(vec![search_sim::tau_for_fraction(f, dataset.horizon())?]),
        None => None,
    };
    let opts = SrmOptions {
        backend: a.backend,
        cv: CvConfig::default().with_budget(a.cv_budget).with_seed(a.seed),
        schema: a.schema,
        taus,
        ..Default::default()
    };
    let model = fit_srm(&dataset, &opts)?;
    save_model(&a.out, &model)
}

#[derive(Serialize)]
struct PredictOutput {
    tau: usize,
    y_hat: f64,
    sigma: f64,
    probability: f64,
    reference: Option<f64>,
    action: curvestop_core::stopping::Action,
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let curve: Vec<f64> = split_list(&a.curve, "curve value")?;
    let config = ConfigDescriptor::new(parse_key_values(&a.ap)?, parse_key_values(&a.hp)?);
    let o = model.orientation();
    let best = BestScores::from_scores(split_list::<f64>(&a.best, "score")?.into_iter().map(|v| o.normalize(v)))?;
    let policy = a.policy.policy()?;
    let (y_hat, sigma) = model.predict_normalized(&config, &o.normalize_all(&curve))?;
    let d = should_terminate(&policy, y_hat, sigma, best.values())?;
    let out = PredictOutput {
        tau: curve.len(),
        y_hat: o.denormalize(y_hat),
        sigma,
        probability: d.probability,
        reference: d.reference.map(|r| o.denormalize(r)),
        action: d.action,
    };
    emit(a.out.as_deref(), &out)
}

fn cells_to_csv(cells: &[SweepCell]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let e = |e: csv::Error| CliError::runtime(e.to_string());
    w.write_record(["backend", "schema", "fraction", "tau", "mean_r2", "std", "std_err"]).map_err(e)?;
    for c in cells {
        w.write_record([
            c.backend.to_string(),
            c.schema.to_string(),
            c.fraction.to_string(),
            c.tau.to_string(),
            c.mean_r2.to_string(),
            c.std.to_string(),
            c.std_err.to_string(),
        ])
        .map_err(e)?;
    }
    w.into_inner().map_err(|e| CliError::runtime(e.to_string()))
}

fn eval(a: EvalArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let cfg = SweepConfig {
        train_size: a.train_size,
        repeats: a.repeats,
        cv: CvConfig::default().with_budget(a.cv_budget),
        schema: a.schema,
        seed: a.seed,
    };
    let cells = match a.mode {
        EvalMode::Sweep => {
            let fractions: Vec<f64> = split_list(&a.fractions, "fraction")?;
            let backends: Vec<Backend> = split_list(&a.backends, "backend")?;
            search_sim::prediction_sweep(&dataset, &cfg, &fractions, &backends)?
        }
        EvalMode::Ablation => {
            search_sim::ablation_eval(&dataset, &cfg, &FeatureSchema::ablation_subsets(), a.fraction, a.backend)?
        }
        EvalMode::Depth => {
            let tau = search_sim::tau_for_fraction(a.fraction, dataset.horizon())?;
            let cv = cfg.cv.with_seed(a.seed);
            let split = search_sim::depth_generalization_eval(&dataset, &a.depth_key, a.threshold, a.backend, a.schema, tau, &cv)?;
            if let Some(p) = &a.out_csv {
                let text = format!("train,test,r2\n{},{},{}\n", split.train, split.test, split.r2);
                fsio::write_atomic(p, text.as_bytes())?;
            }
            return emit(a.out_json.as_deref(), &split);
        }
    };
    if let Some(p) = &a.out_csv {
        fsio::write_atomic(p, &cells_to_csv(&cells)?)?;
    }
    emit(a.out_json.as_deref(), &cells)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let sim = SimulationConfig {
        orderings: a.orderings,
        burn_in: a.burn_in,
        policy: a.policy.policy()?,
        srm: SrmOptions {
            backend: a.backend,
            cv: CvConfig::default().with_budget(a.cv_budget),
            schema: a.schema,
            ..Default::default()
        },
        seed: a.seed,
    };
    let result = search_sim::simulate_sequential_search(&dataset, &sim)?;
    emit(a.out.as_deref(), &result)
}

#[derive(Serialize)]
struct HyperbandOutput {
    runs: Vec<RunSummary>,
    total_epochs: usize,
    epochs_saved: usize,
    ledger: RunLedger,
}

#[derive(Serialize)]
struct RunSummary {
    best_key: Option<u64>,
    best_config: Option<ConfigDescriptor>,
    /// Raw metric value.
    best_value: Option<f64>,
    epochs: usize,
}

fn hyperband(a: HyperbandArgs) -> Result<()> {
    let base = HyperbandParams::new(a.max_resource, a.eta)?;
    let resume = if a.restart { ResumeMode::Restart } else { ResumeMode::Resume };
    let dataset = match (a.oracle, &a.data) {
        (OracleKind::Synthetic, _) => None,
        (_, Some(p)) => Some(load_dataset(p, a.format.unwrap_or_else(|| DatasetFormat::from_path(p)))?),
        (_, None) => return Err(CliError::validation("--data is required for the replay and advisor oracles")),
    };
    if let Some(d) = &dataset {
        if d.horizon() < a.max_resource {
            return Err(CliError::validation(format!("dataset horizon {} is below R = {}", d.horizon(), a.max_resource)));
        }
    }
    let (mut oracle, mut sampler): (Box<dyn EpochOracle + '_>, Box<dyn ConfigSampler + '_>) = match a.oracle {
        OracleKind::Synthetic => {
            let mut gen = synth::hyperband_workload();
            if gen.family.horizon < a.max_resource {
                gen.family.horizon = a.max_resource;
            }
            let source = SyntheticSource::new(gen)?;
            (Box::new(SyntheticOracle::new(source.clone())), Box::new(SyntheticSampler::new(source)))
        }
        OracleKind::Replay => {
            let d = dataset.as_ref().expect("checked above");
            (Box::new(ReplayOracle::new(d)), Box::new(ReplaySampler::new(d)))
        }
        OracleKind::Advisor => {
            let d = dataset.as_ref().expect("checked above");
            let data = a.data.as_ref().expect("checked above");
            let exe = std::env::current_exe().map_err(|e| CliError::runtime(format!("cannot locate executable: {e}")))?;
            let mut cmd = Command::new(exe);
            cmd.arg("replay-worker").arg("--data").arg(data);
            if let Some(f) = a.format {
                cmd.arg("--format").arg(f.to_string());
            }
            (Box::new(SubprocessOracle::spawn(cmd, d.orientation())?), Box::new(ReplaySampler::new(d)))
        }
    };
    let orientation: MetricOrientation = oracle.orientation();
    let mut outcomes: Vec<RunOutcome> = Vec::new();
    if a.f {
        let mut params = FHyperbandParams::new(base);
        params.delta_threshold = a.delta;
        params.offset = a.offset;
        params.d = a.d;
        params.kappa = a.kappa;
        params.resume = resume;
        params.predictor = PredictorOptions { cv: CvConfig::default().with_budget(a.cv_budget), ..Default::default() };
        let mut fh = FHyperband::new(params, orientation)?;
        for run in 0..a.runs {
            outcomes.push(fh.run(oracle.as_mut(), sampler.as_mut(), seed::derive(a.seed, run as u64))?);
        }
    } else {
        for run in 0..a.runs {
            outcomes.push(run_hyperband_with(&base, oracle.as_mut(), sampler.as_mut(), seed::derive(a.seed, run as u64), resume)?);
        }
    }
    let runs = outcomes
        .iter()
        .map(|o| RunSummary {
            best_key: o.best.as_ref().map(|c| c.key),
            best_config: o.best.as_ref().map(|c| c.config.clone()),
            best_value: o.best_score.map(|s| orientation.denormalize(s)),
            epochs: o.ledger.total_epochs,
        })
        .collect();
    let mut ledger = RunLedger { resume, ..Default::default() };
    for o in outcomes {
        ledger.extend(o.ledger);
    }
    let out = HyperbandOutput { runs, total_epochs: ledger.total_epochs, epochs_saved: ledger.epochs_saved, ledger };
    emit(a.out.as_deref(), &out)
}

fn advise(a: AdviseArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let advisor = Advisor::new(model, a.policy.policy()?, a.ledger.clone())?;
    match &a.listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| CliError::runtime(format!("cannot listen on {addr}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::runtime(e.to_string()))?);
            advisor::serve_tcp(Arc::new(Mutex::new(advisor)), listener)
        }
        None => advisor::serve(&Mutex::new(advisor), BufReader::new(io::stdin().lock()), io::stdout().lock()),
    }
}
