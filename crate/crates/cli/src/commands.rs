use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tsp_indep::baselines::{
    baseline_decide, grid_statistics, product_grid, BaselineKind, BaselineRecord, BinningMode, GridSpec,
};
use tsp_indep::decision::{
    decide_independence, estimate_mi, schedule_at, DecisionRecord, DeltaRule, Schedule, ThresholdRule,
};
use tsp_indep::harness::{
    curve_from_records, detection_pmf, detection_times, write_pmf_csv, write_records_csv, BaselineBatch,
    BatchTest, DetectionRecord, Hypothesis, SizeGrid, TradeoffCurve, TspBatch,
};
use tsp_indep::infostat::nats_to_base;
use tsp_indep::models::ModelConfig;
use tsp_indep::partition::grow_full_tree;
use tsp_indep::Dataset;

use crate::output::{emit, ensure_dir, manifest, schema_line, write_atomic};
use crate::svg;

/// Invalid flag combination detected after parsing; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser, Debug)]
#[command(name = "tsp-indep", version, about = "Tree-structured partition independence test and MI estimator")]
pub struct Cli {
    /// Worker threads for Monte-Carlo trials.
    #[arg(long, global = true, env = "TSP_INDEP_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate mutual information (bits by default).
    Mi(MiArgs),
    /// Decide independence with the tree test or a binning baseline.
    Test(TestArgs),
    /// Trade-off curves M0(ε) vs M1(ε) over α or C.
    Sweep(SweepArgs),
    /// Detection-time records and their empirical pmfs.
    Detect(DetectArgs),
    /// Dump the full grown tree as JSON.
    Grow(GrowArgs),
    /// Dump a baseline product grid and its statistics as JSON.
    BaselineGrid(BaselineGridArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    GaussianMulti,
    StudentT,
    StudentTIndependent,
    RotatedMixture,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// CSV file with columns x1..xp, y1..yq.
    #[arg(long, requires_all = ["p", "q"], conflicts_with = "model")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Synthetic model to sample from instead of a file.
    #[arg(long, value_enum, requires_all = ["n", "seed"])]
    pub model: Option<ModelKind>,
    /// Correlation of the Gaussian and t models.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Target MI in bits; sets the correlation.
    #[arg(long, conflicts_with = "sigma")]
    pub target_mi: Option<f64>,
    /// Independent (X_i, Y_i) pairs.
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[arg(long, default_value_t = 2.0)]
    pub dof: f64,
    /// Rotation of the mixture model, radians.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn build_model(kind: ModelKind, strength: f64, pairs: usize, dof: f64) -> ModelConfig {
    match kind {
        ModelKind::Gaussian if pairs == 1 => ModelConfig::Gaussian { sigma: strength },
        ModelKind::Gaussian | ModelKind::GaussianMulti => ModelConfig::GaussianMulti { sigma: strength, pairs },
        ModelKind::StudentT => ModelConfig::StudentTElliptical { sigma: strength, dof },
        ModelKind::StudentTIndependent => ModelConfig::StudentTIndependent { dof },
        ModelKind::RotatedMixture => ModelConfig::RotatedMixture { theta: strength },
    }
}

impl InputArgs {
    fn model_config(&self) -> Result<Option<ModelConfig>> {
        let Some(kind) = self.model else {
            return Ok(None);
        };
        let strength = match kind {
            ModelKind::RotatedMixture => match self.theta {
                Some(t) => t,
                None => return usage("--model rotated-mixture needs --theta"),
            },
            ModelKind::StudentTIndependent => 0.0,
            _ => match (self.sigma, self.target_mi) {
                (Some(s), _) => s,
                (None, Some(t)) => tsp_indep::models::sigma_for_target_mi(t, self.pairs)?,
                (None, None) => return usage("this model needs --sigma or --target-mi"),
            },
        };
        let model = build_model(kind, strength, self.pairs, self.dof);
        model.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(Some(model))
    }

    fn load(&self) -> Result<Dataset> {
        if let Some(path) = &self.data {
            let (p, q) = (self.p.expect("clap requires p"), self.q.expect("clap requires q"));
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            return Dataset::read_csv(file, p, q).with_context(|| format!("reading {}", path.display()));
        }
        match self.model_config()? {
            Some(model) => Ok(model.sample(self.n.expect("clap requires n"), self.seed.expect("clap requires seed"))?),
            None => usage("give either --data FILE --p P --q Q or --model KIND --n N --seed S"),
        }
    }

    fn describe(&self) -> Result<Value> {
        Ok(match &self.data {
            Some(path) => json!({ "data": path, "p": self.p, "q": self.q }),
            None => json!({ "model": self.model_config()?, "n": self.n, "seed": self.seed }),
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    /// Scale of the cell floor b_n = w·n^{-l}.
    #[arg(long, default_value_t = 0.1)]
    pub w: f64,
    /// Decay exponent of b_n, in (0, 1/3).
    #[arg(long, default_value_t = 0.001)]
    pub l: f64,
    /// Regularization multiplier.
    #[arg(long, default_value_t = 1e-4)]
    pub alpha: f64,
    /// Fixed δ instead of exp(-n^{1/3}).
    #[arg(long)]
    pub delta: Option<f64>,
    /// a_n = scale / n.
    #[arg(long, default_value_t = 0.5)]
    pub a_scale: f64,
    /// Fixed threshold a_n in nats.
    #[arg(long, conflicts_with = "a_scale")]
    pub a_fixed: Option<f64>,
    /// Log base of the reported MI.
    #[arg(long, default_value_t = 2.0)]
    pub base: f64,
}

impl ScheduleArgs {
    fn schedule(&self) -> Result<Schedule> {
        let s = Schedule {
            w: self.w,
            l: self.l,
            alpha: self.alpha,
            delta_rule: match self.delta {
                Some(value) => DeltaRule::Fixed { value },
                None => DeltaRule::ExpCubeRoot,
            },
            a_rule: match self.a_fixed {
                Some(value) => ThresholdRule::Fixed { value },
                None => ThresholdRule::InverseN { scale: self.a_scale },
            },
            report_base: self.base,
        };
        s.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(s)
    }
}

#[derive(Args, Debug)]
pub struct MiArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Write the JSON record here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tsp,
    L1,
    Loglik,
    Chi2,
}

impl Method {
    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Self::Tsp => None,
            Self::L1 => Some(BaselineKind::L1),
            Self::Loglik => Some(BaselineKind::Loglik),
            Self::Chi2 => Some(BaselineKind::Chi2),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binning {
    Quantile,
    EqualWidth,
}

impl From<Binning> for BinningMode {
    fn from(b: Binning) -> Self {
        match b {
            Binning::Quantile => BinningMode::Quantile,
            Binning::EqualWidth => BinningMode::EqualWidth,
        }
    }
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, value_enum, default_value = "tsp")]
    pub method: Method,
    /// Bins per dimension grow as n^p_exp.
    #[arg(long, default_value_t = 0.2)]
    pub p_exp: f64,
    /// Baseline threshold multiplier.
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, value_enum, default_value = "quantile")]
    pub binning: Binning,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long, default_value_t = 10)]
    pub n_min: usize,
    #[arg(long, default_value_t = 100_000)]
    pub n_max: usize,
    #[arg(long, default_value_t = 30)]
    pub per_decade: usize,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Read the whole sweep configuration from JSON; other flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub model: ModelKind,
    /// Dependence strengths under H1 (correlation, or θ for the mixture).
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    pub strength: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[arg(long, default_value_t = 2.0)]
    pub dof: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "tsp")]
    pub method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0,1e-5,3e-5,1e-4,2e-4,4e-4,1e-3")]
    pub alphas: Vec<f64>,
    #[arg(long = "C", value_delimiter = ',', default_value = "0.7,0.85,1,1.2,1.46")]
    pub cs: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub w: f64,
    #[arg(long, default_value_t = 0.001)]
    pub l: f64,
    #[arg(long, default_value_t = 0.2)]
    pub p_exp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Skip the SVG plot.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Build records from forced decisions in a JSON fixture.
    #[arg(long, conflicts_with = "seed")]
    pub fixture: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 0.3)]
    pub strength: f64,
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[arg(long, default_value_t = 2.0)]
    pub dof: f64,
    #[arg(long, value_enum, default_value = "tsp")]
    pub method: Method,
    /// α values (tree test) or C values (baselines).
    #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-4,2e-4,1e-3")]
    pub parameters: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub w: f64,
    #[arg(long, default_value_t = 0.001)]
    pub l: f64,
    #[arg(long, default_value_t = 0.2)]
    pub p_exp: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct GrowArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Cell floor; defaults to the schedule's b_n.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub w: f64,
    #[arg(long, default_value_t = 0.001)]
    pub l: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselineGridArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Bins per dimension; defaults to floor(n^p_exp).
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub p_exp: f64,
    #[arg(long, value_enum, default_value = "quantile")]
    pub binning: Binning,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return usage("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Mi(a) => cmd_mi(a),
        Command::Test(a) => cmd_test(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Grow(a) => cmd_grow(a),
        Command::BaselineGrid(a) => cmd_baseline_grid(a),
    }
}

/// JSON object `record` plus schema and manifest keys.
fn tagged_json(schema: &str, hash: &str, record: impl Serialize) -> Result<String> {
    let mut value = serde_json::to_value(record)?;
    let obj = value.as_object_mut().context("record must be a JSON object")?;
    obj.insert("schema".into(), json!(format!("{}/{schema}/v1", crate::output::TOOL)));
    obj.insert("manifest".into(), json!(hash));
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn cmd_mi(a: MiArgs) -> Result<()> {
    let schedule = a.schedule.schedule()?;
    let config = json!({ "input": a.input.describe()?, "schedule": schedule });
    let (_, hash) = manifest("mi", &config)?;
    let data = a.input.load()?;
    let est = estimate_mi(&data, &schedule)?;
    let decision = decide_independence(&data, &schedule)?;
    let mut record = DecisionRecord::new(&data, &schedule, &decision);
    record.mi_reported = est.mi;
    emit(a.out.as_deref(), &tagged_json("mi", &hash, record)?)
}

fn cmd_test(a: TestArgs) -> Result<()> {
    let schedule = a.schedule.schedule()?;
    let spec = GridSpec {
        p_exp: a.p_exp,
        c: a.c,
        binning: a.binning.into(),
    };
    if a.method != Method::Tsp {
        spec.validate().map_err(|e| UsageError(e.to_string()))?;
    }
    let config = json!({
        "input": a.input.describe()?,
        "method": a.method,
        "schedule": schedule,
        "grid": spec,
    });
    let (_, hash) = manifest("test", &config)?;
    let data = a.input.load()?;
    let text = match a.method.baseline() {
        None => {
            let d = decide_independence(&data, &schedule)?;
            tagged_json("decision", &hash, DecisionRecord::new(&data, &schedule, &d))?
        }
        Some(kind) => {
            let d = baseline_decide(&data, &spec, kind)?;
            tagged_json("decision", &hash, BaselineRecord::new(&data, &spec, &d))?
        }
    };
    emit(a.out.as_deref(), &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub per_decade: usize,
}

impl GridConfig {
    fn from_args(g: &GridArgs) -> Self {
        Self {
            n_min: g.n_min,
            n_max: g.n_max,
            per_decade: g.per_decade,
        }
    }

    fn build(&self) -> Result<SizeGrid> {
        SizeGrid::log_spaced(self.n_min, self.n_max, self.per_decade).map_err(|e| UsageError(e.to_string()).into())
    }
}

/// Everything a sweep depends on; echoed in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub strengths: Vec<f64>,
    pub pairs: usize,
    pub dof: f64,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub cs: Vec<f64>,
    pub w: f64,
    pub l: f64,
    pub p_exp: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub grid: GridConfig,
    pub seed: u64,
}

fn batch_for(method: Method, w: f64, l: f64, p_exp: f64, alphas: &[f64], cs: &[f64]) -> Result<Box<dyn BatchTest>> {
    Ok(match method.baseline() {
        None => Box::new(TspBatch {
            schedule: Schedule::new(w, l, 0.0).map_err(|e| UsageError(e.to_string()))?,
            alphas: alphas.to_vec(),
        }),
        Some(kind) => {
            GridSpec::new(p_exp, 0.0).map_err(|e| UsageError(e.to_string()))?;
            Box::new(BaselineBatch {
                kind,
                p_exp,
                binning: BinningMode::Quantile,
                cs: cs.to_vec(),
            })
        }
    })
}

fn curves_csv(curves: &[TradeoffCurve], hash: &str) -> String {
    let mut out = schema_line("curves", hash);
    out.push_str("method,model,strength,parameter,M0,M1,epsilon,trials,n_max\n");
    for c in curves {
        for p in &c.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.method,
                c.model.kind_name(),
                c.model.strength(),
                p.parameter,
                p.m0,
                p.m1,
                c.epsilon,
                c.trials,
                c.n_max
            ));
        }
    }
    out
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| UsageError(format!("bad sweep config: {e}")))?
        }
        None => {
            let Some(seed) = a.seed else {
                return usage("sweep needs --seed");
            };
            SweepConfig {
                model: a.model,
                strengths: a.strength.clone(),
                pairs: a.pairs,
                dof: a.dof,
                methods: a.method.clone(),
                alphas: a.alphas.clone(),
                cs: a.cs.clone(),
                w: a.w,
                l: a.l,
                p_exp: a.p_exp,
                epsilon: a.epsilon,
                trials: a.trials,
                grid: GridConfig::from_args(&a.grid),
                seed,
            }
        }
    };
    let grid = config.grid.build()?;
    if config.strengths.is_empty() || config.methods.is_empty() {
        return usage("sweep needs at least one strength and one method");
    }
    let (manifest_json, hash) = manifest("sweep", &config)?;
    let mut curves = Vec::new();
    for &strength in &config.strengths {
        let model = build_model(config.model, strength, config.pairs, config.dof);
        model.validate().map_err(|e| UsageError(e.to_string()))?;
        for &method in &config.methods {
            let batch = batch_for(method, config.w, config.l, config.p_exp, &config.alphas, &config.cs)?;
            if batch.parameters().is_empty() {
                return usage(format!("no parameter values for method {method:?}"));
            }
            log::info!("sweep: {} strength {strength}", batch.method());
            let h0 = detection_times(&model, batch.as_ref(), &grid, config.trials, config.seed, Hypothesis::H0)?;
            let h1 = detection_times(&model, batch.as_ref(), &grid, config.trials, config.seed, Hypothesis::H1)?;
            curves.push(curve_from_records(batch.as_ref(), &model, &grid, config.epsilon, &h0, &h1)?);
        }
    }
    ensure_dir(&a.out_dir)?;
    write_atomic(&a.out_dir.join("manifest.json"), format!("{manifest_json}\n").as_bytes())?;
    write_atomic(&a.out_dir.join("curves.csv"), curves_csv(&curves, &hash).as_bytes())?;
    if !a.no_plot {
        let series: Vec<svg::Series> = curves
            .iter()
            .map(|c| svg::Series {
                label: format!("{} {}={}", c.method, c.model.kind_name(), c.model.strength()),
                points: c
                    .points
                    .iter()
                    .filter_map(|p| Some((p.m0.value()? as f64, p.m1.value()? as f64)))
                    .collect(),
            })
            .collect();
        let title = format!("Trade-off at ε = {} ({} trials)", config.epsilon, config.trials);
        let plot = svg::loglog(&title, "M0(ε)", "M1(ε)", &series);
        write_atomic(&a.out_dir.join("curves.svg"), plot.as_bytes())?;
    }
    Ok(())
}

/// Forced decisions for reproducible detection outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectFixture {
    pub grid: Vec<usize>,
    pub parameter: f64,
    /// Packed 0/1 decisions per trial under H0.
    pub h0: Vec<String>,
    pub h1: Vec<String>,
}

fn unpack(grid: &SizeGrid, h: Hypothesis, packed: &[String]) -> Result<Vec<DetectionRecord>> {
    packed
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let bits = s
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => usage(format!("fixture decisions must be 0/1, got {other:?}")),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DetectionRecord::from_decisions(t, t as u64, h, grid, bits)?)
        })
        .collect()
}

fn write_detection(
    dir: &Path,
    hash: &str,
    grid: &SizeGrid,
    parameters: &[f64],
    h0: &[Vec<DetectionRecord>],
    h1: &[Vec<DetectionRecord>],
) -> Result<()> {
    let mut groups: Vec<(f64, &[DetectionRecord])> = Vec::new();
    for (j, &p) in parameters.iter().enumerate() {
        groups.push((p, &h0[j]));
        groups.push((p, &h1[j]));
    }
    let mut records = schema_line("records", hash).into_bytes();
    write_records_csv(&groups, &mut records)?;
    write_atomic(&dir.join("records.csv"), &records)?;
    for (j, &p) in parameters.iter().enumerate() {
        let mut pmf = schema_line("pmf", hash).into_bytes();
        pmf.extend_from_slice(format!("# parameter: {p}\n").as_bytes());
        write_pmf_csv(&detection_pmf(&h0[j], grid), &detection_pmf(&h1[j], grid), &mut pmf)?;
        write_atomic(&dir.join(format!("pmf_{j}.csv")), &pmf)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DetectConfig {
    model: ModelConfig,
    method: Method,
    parameters: Vec<f64>,
    w: f64,
    l: f64,
    p_exp: f64,
    trials: usize,
    grid: GridConfig,
    seed: u64,
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    ensure_dir(&a.out_dir)?;
    if let Some(path) = &a.fixture {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let fixture: DetectFixture =
            serde_json::from_str(&text).map_err(|e| UsageError(format!("bad fixture: {e}")))?;
        let grid = SizeGrid::new(fixture.grid.clone())?;
        let (manifest_json, hash) = manifest("detect", &fixture)?;
        let h0 = vec![unpack(&grid, Hypothesis::H0, &fixture.h0)?];
        let h1 = vec![unpack(&grid, Hypothesis::H1, &fixture.h1)?];
        write_atomic(&a.out_dir.join("manifest.json"), format!("{manifest_json}\n").as_bytes())?;
        return write_detection(&a.out_dir, &hash, &grid, &[fixture.parameter], &h0, &h1);
    }
    let Some(seed) = a.seed else {
        return usage("detect needs --seed (or --fixture)");
    };
    let model = build_model(a.model, a.strength, a.pairs, a.dof);
    model.validate().map_err(|e| UsageError(e.to_string()))?;
    let config = DetectConfig {
        model,
        method: a.method,
        parameters: a.parameters.clone(),
        w: a.w,
        l: a.l,
        p_exp: a.p_exp,
        trials: a.trials,
        grid: GridConfig::from_args(&a.grid),
        seed,
    };
    let grid = config.grid.build()?;
    let (manifest_json, hash) = manifest("detect", &config)?;
    let batch = batch_for(a.method, a.w, a.l, a.p_exp, &a.parameters, &a.parameters)?;
    let h0 = detection_times(&model, batch.as_ref(), &grid, a.trials, seed, Hypothesis::H0)?;
    let h1 = detection_times(&model, batch.as_ref(), &grid, a.trials, seed, Hypothesis::H1)?;
    write_atomic(&a.out_dir.join("manifest.json"), format!("{manifest_json}\n").as_bytes())?;
    write_detection(&a.out_dir, &hash, &grid, &a.parameters, &h0, &h1)
}

fn cmd_grow(a: GrowArgs) -> Result<()> {
    let config = json!({ "input": a.input.describe()?, "b": a.b, "w": a.w, "l": a.l });
    let (_, hash) = manifest("grow", &config)?;
    let data = a.input.load()?;
    let b = match a.b {
        Some(b) => b,
        None => {
            let s = Schedule::new(a.w, a.l, 0.0).map_err(|e| UsageError(e.to_string()))?;
            schedule_at(&s, data.n())?.b
        }
    };
    let tree = grow_full_tree(&data, b).map_err(|e| UsageError(e.to_string()))?;
    emit(a.out.as_deref(), &tagged_json("tree", &hash, tree.to_json())?)
}

fn cmd_baseline_grid(a: BaselineGridArgs) -> Result<()> {
    let config = json!({
        "input": a.input.describe()?,
        "bins": a.bins,
        "p_exp": a.p_exp,
        "binning": BinningMode::from(a.binning),
    });
    let (_, hash) = manifest("baseline-grid", &config)?;
    let data = a.input.load()?;
    let m = match a.bins {
        Some(m) => m,
        None => GridSpec::new(a.p_exp, 0.0).map_err(|e| UsageError(e.to_string()))?.bins(data.n()),
    };
    let grid = product_grid(&data, m, a.binning.into()).map_err(|e| UsageError(e.to_string()))?;
    let stats = grid_statistics(&data, &grid)?;
    let record = json!({
        "bins": m,
        "edges": grid.edges,
        "x_cells": stats.x_cells,
        "y_cells": stats.y_cells,
        "l1": stats.l1,
        "loglik_nats": stats.loglik,
        "loglik_bits": nats_to_base(stats.loglik, 2.0),
        "chi2": stats.chi2,
    });
    emit(a.out.as_deref(), &tagged_json("baseline-grid", &hash, record)?)
}
