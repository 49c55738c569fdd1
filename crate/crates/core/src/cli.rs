//! Command-line front end. Every command prints a JSON envelope
//! `{command, parameters, results, units, seed}` or, with `--format csv`,
//! plot-ready comma-separated text.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::achievability::{
    design_test_channels, information_quantities, simulate, subset_info_check, SimReport, TestChannelDesign,
};
use crate::boundary::{rate_allocation, solve_p1, P1Solution, SolverOptions};
use crate::cost::{
    iterations_real, optimal_distortion_static, plan_static, plan_trace, signsgd_comparison, CostPlan, PerIteration,
};
use crate::error::Error;
use crate::model::{ConvergenceParams, LayerSpec, LayeredGaussianSpec, NoiseQuantRates, WeightVector};
use crate::numeric::{log_space, BITS_PER_NAT};
use crate::region::{
    corner_point, correlation_gain, distortion_of, independent_sum_rate, sum_rate_distortion, sum_rate_heterogeneous,
};
use crate::sgd::{
    make_problem_with_noise, run as run_sgd, sweep_csv, sweep_rho, NoiseInjection, SgdConfig, SgdRunResult, SweepRow,
};
use crate::stats::{estimate_stats, gaussian_fit, load_samples, load_trace, pearson, SampleStats};

/// Environment variable giving the directory for relative `--output` paths.
pub const OUT_DIR_ENV: &str = "GRADRATE_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Bits,
    Nats,
}

impl Units {
    /// Multiplier applied to a value in nats.
    pub fn factor(self) -> f64 {
        match self {
            Units::Bits => BITS_PER_NAT,
            Units::Nats => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutputEnvelope<T> {
    pub command: String,
    pub parameters: Value,
    pub results: T,
    pub units: Units,
    pub seed: Option<u64>,
}

#[derive(Parser, Debug)]
#[command(name = "gradrate", version, about = "Communication cost of gradient aggregation")]
struct Cli {
    /// Rate units for all reported rates and costs.
    #[arg(long, value_enum, default_value = "bits", global = true)]
    units: Units,
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,
    /// Write output here instead of standard output. Relative paths are
    /// placed under $GRADRATE_OUT_DIR when it is set.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sum-rate-distortion and independent-coding rate.
    Sumrate(SumrateArgs),
    /// Corner point of the rate region for a given ordering.
    Corner(CornerArgs),
    /// Weighted-sum boundary point of the rate region.
    Boundary(BoundaryArgs),
    /// Cost-weighted rate allocation.
    Allocate(AllocateArgs),
    /// Training cost plans.
    Plan(PlanArgs),
    /// SignSGD against the rate-distortion limits.
    Signsgd(SignsgdArgs),
    /// Monte Carlo check of the Gaussian test-channel scheme.
    SimulateCeo(SimulateCeoArgs),
    /// One distributed SGD run.
    SimulateSgd(SimulateSgdArgs),
    /// SGD runs over a grid of rho values.
    SweepRho(SweepRhoArgs),
    /// Gradient statistics from a trace or sample files.
    Stats(StatsArgs),
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("invalid number {t:?}")))
        .collect()
}

/// Per-layer worker values written `a,b;c,d`: layers separated by `;`,
/// workers by `,`.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct Layers(Vec<Vec<f64>>);

fn parse_layers(s: &str) -> Result<Layers, String> {
    s.split(';').map(parse_list).collect::<Result<_, _>>().map(Layers)
}

#[derive(Args, Debug, Serialize)]
struct SumrateArgs {
    #[arg(long)]
    sigma_x2: f64,
    /// Homogeneous noise variance (with --workers).
    #[arg(long, required_unless_present = "noise_var")]
    sigma_n2: Option<f64>,
    #[arg(long, required_unless_present = "noise_var")]
    workers: Option<usize>,
    /// Heterogeneous noise variances, one per worker.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["sigma_n2", "workers"])]
    noise_var: Option<Vec<f64>>,
    #[arg(long)]
    distortion: f64,
}

#[derive(Args, Debug, Serialize)]
struct SpecArgs {
    /// JSON file with `global_var` and `noise_var` (workers x layers).
    #[arg(long, conflicts_with_all = ["sigma_x2", "noise_var"])]
    spec: Option<PathBuf>,
    /// Global-gradient variance per layer.
    #[arg(long, value_delimiter = ',', required_unless_present = "spec")]
    sigma_x2: Option<Vec<f64>>,
    /// Noise variances: workers separated by `,`, layers by `;`.
    #[arg(long, value_parser = parse_layers, required_unless_present = "spec")]
    noise_var: Option<Layers>,
}

impl SpecArgs {
    fn build(&self) -> Result<LayeredGaussianSpec, Error> {
        if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            return serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            });
        }
        let global = self.sigma_x2.clone().unwrap_or_default();
        let layers = self.noise_var.clone().map(|l| l.0).unwrap_or_default();
        LayeredGaussianSpec::new(global, transpose(&layers)?)
    }
}

fn transpose(layers: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, Error> {
    let workers = layers.first().map_or(0, Vec::len);
    if layers.iter().any(|l| l.len() != workers) {
        return Err(Error::invalid("every layer needs the same number of workers"));
    }
    Ok((0..workers).map(|k| layers.iter().map(|l| l[k]).collect()).collect())
}

#[derive(Args, Debug, Serialize)]
struct CornerArgs {
    #[arg(long)]
    sigma_x2: f64,
    #[arg(long, value_delimiter = ',')]
    noise_var: Vec<f64>,
    /// Noise-quantization rates in nats, one per worker.
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    /// Worker indices from highest to lowest weight.
    #[arg(long, value_delimiter = ',', conflicts_with = "weights")]
    order: Option<Vec<usize>>,
    /// Weights; the order is derived by sorting them.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    /// Cap on solver steps per layer.
    #[arg(long, default_value_t = SolverOptions::default().max_inner_steps)]
    max_steps: usize,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            max_inner_steps: self.max_steps,
            ..SolverOptions::default()
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct BoundaryArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    distortion: f64,
}

#[derive(Args, Debug, Serialize)]
struct AllocateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Bandwidth cost per nat for each worker.
    #[arg(long, value_delimiter = ',')]
    costs: Vec<f64>,
    #[arg(long)]
    distortion: f64,
}

#[derive(Args, Debug, Serialize)]
struct PlanArgs {
    /// Squared distance from the initial point to the optimum, A^2.
    #[arg(long, default_value_t = 1.0)]
    radius_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    smoothness: f64,
    #[arg(long, default_value_t = 0.1)]
    target_gap: f64,
    /// Model dimension P.
    #[arg(long, default_value_t = 1)]
    model_dim: u64,
    #[arg(long)]
    workers: usize,
    #[arg(long, required_unless_present = "trace")]
    sigma_x2: Option<f64>,
    #[arg(long, required_unless_present = "trace")]
    sigma_n2: Option<f64>,
    /// Fixed distortion for a static plan.
    #[arg(long, conflicts_with_all = ["grid", "trace"])]
    distortion: Option<f64>,
    /// Log-spaced scan `lo,hi,n` for the cost-minimizing distortion.
    #[arg(long, value_delimiter = ',', conflicts_with = "trace")]
    grid: Option<Vec<f64>>,
    /// Trace file `iteration,sigma_x2,sigma_n2`.
    #[arg(long, requires = "rho")]
    trace: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SignsgdArgs {
    #[arg(long)]
    workers: usize,
    #[arg(long, required_unless_present = "trace")]
    sigma_x2: Option<f64>,
    #[arg(long, required_unless_present = "trace")]
    sigma_n2: Option<f64>,
    /// Compare at every entry of a trace instead.
    #[arg(long, conflicts_with_all = ["sigma_x2", "sigma_n2"])]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateCeoArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Noise-quantization rates in nats: workers by `,`, layers by `;`.
    #[arg(long, value_parser = parse_layers)]
    rates: Layers,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Serialize, Clone)]
struct SgdArgs {
    /// Model dimension P.
    #[arg(long, default_value_t = 50)]
    dim: usize,
    /// Data set size m.
    #[arg(long, default_value_t = 500)]
    data_size: usize,
    #[arg(long, default_value_t = 10.0)]
    condition: f64,
    /// Label noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 10)]
    workers: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Step size; defaults to 0.02 / smoothness.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Harmonic step decay horizon t0; the step at t is lr / (1 + t/t0).
    #[arg(long)]
    decay_horizon: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    target_gap: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: u64,
    /// Perturb each worker's gradient instead of the aggregate.
    #[arg(long)]
    per_worker_noise: bool,
    /// Seed of the synthetic problem; defaults to the run seed.
    #[arg(long)]
    problem_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateSgdArgs {
    #[command(flatten)]
    sgd: SgdArgs,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Omit the per-iteration loss history.
    #[arg(long)]
    no_history: bool,
}

#[derive(Args, Debug, Serialize)]
struct SweepRhoArgs {
    #[command(flatten)]
    sgd: SgdArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,10,100,1000")]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
}

#[derive(Args, Debug, Serialize)]
struct StatsArgs {
    #[arg(long, conflicts_with = "samples", required_unless_present = "samples")]
    trace: Option<PathBuf>,
    /// TOML header describing sample files.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

struct Output {
    command: &'static str,
    parameters: Value,
    results: Value,
    seed: Option<u64>,
    /// Replaces the generic CSV flattening.
    csv: Option<String>,
}

fn output<P: Serialize, R: Serialize>(
    command: &'static str,
    parameters: &P,
    results: &R,
    seed: Option<u64>,
) -> Result<Output, Error> {
    Ok(Output {
        command,
        parameters: to_value(parameters)?,
        results: to_value(results)?,
        seed,
        csv: None,
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Error> {
    serde_json::to_value(v).map_err(|e| Error::invalid(format!("serialization failed: {e}")))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

/// Multiplier applied to a value in bits.
fn bits_to(units: Units) -> f64 {
    match units {
        Units::Bits => 1.0,
        Units::Nats => 1.0 / BITS_PER_NAT,
    }
}

fn scale_vec(v: &[f64], f: f64) -> Vec<f64> {
    v.iter().map(|x| x * f).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SumrateResults {
    pub sum_rate: f64,
    pub independent_sum_rate: Option<f64>,
    pub correlation_gain: Option<f64>,
    pub min_distortion: f64,
    /// Heterogeneous case: optimal noise-quantization rates and precisions.
    pub noise_rates: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
}

fn cmd_sumrate(a: &SumrateArgs, units: Units) -> Result<Output, Error> {
    let f = units.factor();
    let results = if let Some(noise) = &a.noise_var {
        let layer = LayerSpec::new(a.sigma_x2, noise.clone())?;
        let wf = sum_rate_heterogeneous(&layer, a.distortion)?;
        SumrateResults {
            sum_rate: wf.sum_rate * f,
            independent_sum_rate: None,
            correlation_gain: None,
            min_distortion: layer.min_distortion(),
            noise_rates: Some(scale_vec(&wf.rates, f)),
            z: Some(wf.z),
        }
    } else {
        let (sn2, k) = (a.sigma_n2.unwrap_or(f64::NAN), a.workers.unwrap_or(0));
        SumrateResults {
            sum_rate: sum_rate_distortion(a.sigma_x2, sn2, k, a.distortion)? * f,
            independent_sum_rate: Some(independent_sum_rate(a.sigma_x2, sn2, k, a.distortion)? * f),
            correlation_gain: Some(correlation_gain(a.sigma_x2, sn2, k, a.distortion)? * f),
            min_distortion: LayerSpec::homogeneous(k, a.sigma_x2, sn2)?.min_distortion(),
            noise_rates: None,
            z: None,
        }
    };
    output("sumrate", a, &results, None)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CornerResults {
    pub order: Vec<usize>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub distortion: f64,
}

fn cmd_corner(a: &CornerArgs, units: Units) -> Result<Output, Error> {
    let layer = LayerSpec::new(a.sigma_x2, a.noise_var.clone())?;
    let order = match (&a.order, &a.weights) {
        (Some(o), _) => o.clone(),
        (None, Some(w)) => WeightVector::new(w.clone())?.descending_order(),
        (None, None) => (0..layer.workers()).collect(),
    };
    let rates = corner_point(&layer, &a.rates, &order)?;
    let f = units.factor();
    let results = CornerResults {
        sum_rate: rates.iter().sum::<f64>() * f,
        rates: scale_vec(&rates, f),
        distortion: distortion_of(&layer, &a.rates)?,
        order,
    };
    output("corner", a, &results, None)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundaryResults {
    pub z: Vec<Vec<f64>>,
    pub layer_distortions: Vec<f64>,
    pub noise_rates: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    pub rates_per_layer: Vec<Vec<f64>>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl BoundaryResults {
    fn new(sol: P1Solution, f: f64) -> Self {
        let scale_rows = |m: &[Vec<f64>]| m.iter().map(|r| scale_vec(r, f)).collect();
        Self {
            noise_rates: scale_rows(sol.noise_rates.matrix()),
            rates: scale_vec(&sol.rates.per_worker, f),
            rates_per_layer: sol
                .rates
                .per_worker_layer
                .as_deref()
                .map(scale_rows)
                .unwrap_or_default(),
            objective: sol.objective * f,
            z: sol.z,
            layer_distortions: sol.layer_distortions,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
        }
    }
}

fn cmd_boundary(a: &BoundaryArgs, units: Units) -> Result<Output, Error> {
    let spec = a.spec.build()?;
    let weights = match &a.weights {
        Some(w) => WeightVector::new(w.clone())?,
        None => WeightVector::equal(spec.workers()),
    };
    let sol = solve_p1(&spec, &weights, a.distortion, &a.solver.options())?;
    output("boundary", a, &BoundaryResults::new(sol, units.factor()), None)
}

fn cmd_allocate(a: &AllocateArgs, units: Units) -> Result<Output, Error> {
    let spec = a.spec.build()?;
    let costs = WeightVector::new(a.costs.clone())?;
    let sol = rate_allocation(&spec, &costs, a.distortion, &a.solver.options())?;
    output("allocate", a, &BoundaryResults::new(sol, units.factor()), None)
}

/// A cost plan with costs in the requested units.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanResults {
    pub iterations: u64,
    pub iterations_real: Option<f64>,
    pub distortion: PerIteration,
    pub per_iteration_cost: PerIteration,
    pub total_cost: Option<f64>,
    pub rho: Option<f64>,
    pub unbounded: bool,
    pub optimal_distortion: Option<f64>,
    pub grid_best: Option<f64>,
}

fn rescale(p: &PerIteration, f: f64) -> PerIteration {
    match p {
        PerIteration::Constant(v) => PerIteration::Constant(v * f),
        PerIteration::Series(v) => PerIteration::Series(scale_vec(v, f)),
        PerIteration::Unbounded => PerIteration::Unbounded,
    }
}

fn plan_results(plan: &CostPlan, units: Units) -> PlanResults {
    // Plans are computed in bits.
    let f = bits_to(units);
    PlanResults {
        iterations: plan.iterations,
        iterations_real: None,
        distortion: plan.distortion.clone(),
        per_iteration_cost: rescale(&plan.per_iteration_bits, f),
        total_cost: plan.total_bits.map(|t| t * f),
        rho: plan.rho,
        unbounded: plan.is_unbounded(),
        optimal_distortion: None,
        grid_best: None,
    }
}

fn cmd_plan(a: &PlanArgs, units: Units) -> Result<Output, Error> {
    let params = ConvergenceParams::new(a.radius_sq, a.smoothness, a.target_gap, a.model_dim)?;
    let results = if let Some(path) = &a.trace {
        let trace = load_trace(path)?;
        plan_results(
            &plan_trace(&params, a.workers, &trace, a.rho.unwrap_or(f64::NAN))?,
            units,
        )
    } else {
        let (sx2, sn2) = (a.sigma_x2.unwrap_or(f64::NAN), a.sigma_n2.unwrap_or(f64::NAN));
        if let Some(g) = &a.grid {
            let [lo, hi, n] = g[..] else {
                return Err(Error::invalid("--grid takes lo,hi,n"));
            };
            if !(lo > 0.0 && hi > lo && n >= 1.0) {
                return Err(Error::invalid("--grid needs 0 < lo < hi and n >= 1"));
            }
            let opt = optimal_distortion_static(&params, a.workers, sx2, sn2, &log_space(lo, hi, n as usize))?;
            let mut r = plan_results(&opt.plan, units);
            r.iterations_real = Some(iterations_real(&params, opt.distortion)?);
            r.optimal_distortion = Some(opt.distortion);
            r.grid_best = Some(opt.grid_best);
            r
        } else {
            let d = a
                .distortion
                .ok_or_else(|| Error::invalid("one of --distortion, --grid or --trace is required"))?;
            let mut r = plan_results(&plan_static(&params, a.workers, sx2, sn2, d)?, units);
            r.iterations_real = Some(iterations_real(&params, d)?);
            r
        }
    };
    output("plan", a, &results, None)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SignsgdRow {
    pub iteration: Option<u64>,
    pub signsgd_rate: f64,
    pub signsgd_distortion: f64,
    pub ideal_quant_rate: f64,
    pub r_sum: f64,
    pub r_in: f64,
}

fn signsgd_row(workers: usize, sx2: f64, sn2: f64, iteration: Option<u64>, units: Units) -> Result<SignsgdRow, Error> {
    let c = signsgd_comparison(workers, sx2, sn2)?;
    let f = bits_to(units);
    Ok(SignsgdRow {
        iteration,
        signsgd_rate: c.signsgd_bits_per_dim * f,
        signsgd_distortion: c.signsgd_distortion,
        ideal_quant_rate: c.ideal_quant_bits * f,
        r_sum: c.r_sum_bits * f,
        r_in: independent_sum_rate(sx2, sn2, workers, c.signsgd_distortion)? * units.factor(),
    })
}

fn cmd_signsgd(a: &SignsgdArgs, units: Units) -> Result<Output, Error> {
    if let Some(path) = &a.trace {
        let trace = load_trace(path)?;
        let rows: Vec<SignsgdRow> = trace
            .entries()
            .iter()
            .map(|e| signsgd_row(a.workers, e.sigma_x2, e.sigma_n2, Some(e.iteration), units))
            .collect::<Result<_, _>>()?;
        let mut out = output("signsgd", a, &rows, None)?;
        let mut csv = String::from("iteration,signsgd_rate,signsgd_distortion,ideal_quant_rate,r_sum,r_in\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration.unwrap_or(0),
                r.signsgd_rate,
                r.signsgd_distortion,
                r.ideal_quant_rate,
                r.r_sum,
                r.r_in
            ));
        }
        out.csv = Some(csv);
        return Ok(out);
    }
    let row = signsgd_row(
        a.workers,
        a.sigma_x2.unwrap_or(f64::NAN),
        a.sigma_n2.unwrap_or(f64::NAN),
        None,
        units,
    )?;
    output("signsgd", a, &row, None)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CeoLayerInfo {
    pub mutual_information: f64,
    pub cond_var_bound: f64,
    pub cond_var_actual: f64,
    pub subset_info_lhs: f64,
    pub subset_info_rhs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CeoResults {
    pub design: TestChannelDesign,
    pub report: SimReport,
    pub information: Vec<CeoLayerInfo>,
}

fn cmd_simulate_ceo(a: &SimulateCeoArgs, units: Units) -> Result<Output, Error> {
    let seed = resolve_seed(a.seed);
    let spec = a.spec.build()?;
    let rates = NoiseQuantRates::new(transpose(&a.rates.0)?)?;
    let design = design_test_channels(&spec, &rates)?;
    let report = simulate(&spec, &design, a.samples, seed)?;
    let mut information = Vec::new();
    for l in 0..spec.layers() {
        let layer = spec.layer(l);
        let q = information_quantities(&layer, &design.layer(l))?;
        let all: Vec<usize> = (0..spec.workers()).collect();
        let identity = subset_info_check(&layer, &rates.layer_row(l), &all)?;
        information.push(CeoLayerInfo {
            mutual_information: q.mi_x_xhat * units.factor(),
            cond_var_bound: q.cond_var_bound,
            cond_var_actual: q.cond_var_actual,
            subset_info_lhs: identity.lhs,
            subset_info_rhs: identity.rhs,
        });
    }
    let results = CeoResults {
        design,
        report,
        information,
    };
    output("simulate-ceo", a, &results, Some(seed))
}

fn sgd_setup(a: &SgdArgs, rho: f64, seed: u64) -> Result<(crate::sgd::SyntheticProblem, SgdConfig), Error> {
    let problem = make_problem_with_noise(
        a.dim,
        a.data_size,
        a.condition,
        a.label_noise,
        a.problem_seed.unwrap_or(seed),
    )?;
    let config = SgdConfig {
        workers: a.workers,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate.unwrap_or(0.02 / problem.smoothness()),
        decay_horizon: a.decay_horizon,
        rho,
        target_gap: a.target_gap,
        max_iters: a.max_iters,
        injection: if a.per_worker_noise {
            NoiseInjection::PerWorker
        } else {
            NoiseInjection::PostAggregate
        },
    };
    Ok((problem, config))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SgdResults {
    pub iterations_to_target: u64,
    /// Mean per-dimension sum rate; `None` when unbounded.
    pub avg_sum_rate: Option<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub rho: f64,
    pub smoothness: f64,
    pub optimum_loss: f64,
    pub radius_sq: f64,
    pub injected_noise_mean: f64,
    pub loss_history: Option<Vec<f64>>,
}

fn cmd_simulate_sgd(a: &SimulateSgdArgs, units: Units) -> Result<Output, Error> {
    let seed = resolve_seed(a.sgd.seed);
    let (problem, config) = sgd_setup(&a.sgd, a.rho, seed)?;
    let r: SgdRunResult = run_sgd(&problem, &config, seed)?;
    let f = bits_to(units);
    let results = SgdResults {
        iterations_to_target: r.iterations_to_target,
        avg_sum_rate: r.avg_sum_rate_bits.map(|v| v * f),
        converged: r.converged,
        diverged: r.diverged,
        rho: r.rho,
        smoothness: problem.smoothness(),
        optimum_loss: problem.optimum_loss(),
        radius_sq: problem.radius_sq(&nalgebra::DVector::zeros(problem.dim())),
        injected_noise_mean: r.injected_noise_mean,
        loss_history: (!a.no_history).then_some(r.loss_history),
    };
    output("simulate-sgd", a, &results, Some(seed))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepResults {
    pub rows: Vec<SweepRow>,
}

fn cmd_sweep_rho(a: &SweepRhoArgs, units: Units) -> Result<Output, Error> {
    let seed = resolve_seed(a.sgd.seed);
    let (problem, config) = sgd_setup(&a.sgd, 0.0, seed)?;
    let sweep = sweep_rho(&problem, &config, &a.rho, a.replicates, seed)?;
    let f = bits_to(units);
    let rows: Vec<SweepRow> = sweep
        .rows
        .iter()
        .map(|r| SweepRow {
            mean_rate_bits: r.mean_rate_bits.map(|v| v * f),
            ..r.clone()
        })
        .collect();
    let mut out = output("sweep-rho", a, &SweepResults { rows: rows.clone() }, Some(seed))?;
    let mut csv = sweep_csv(&rows);
    if units == Units::Nats {
        csv = csv.replacen("mean_rate_bits", "mean_rate_nats", 1);
    }
    out.csv = Some(csv);
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceSummary {
    pub entries: usize,
    pub first_iteration: u64,
    pub last_iteration: u64,
    pub mean_sigma_x2: f64,
    pub mean_sigma_n2: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleSummary {
    pub stats: SampleStats,
    pub pooled_sigma_n2: f64,
    pub global_fit_r_squared: f64,
    /// Pearson correlation of gradient noise between worker pairs.
    pub noise_correlation: Vec<Vec<f64>>,
}

fn cmd_stats(a: &StatsArgs) -> Result<Output, Error> {
    if let Some(path) = &a.trace {
        let trace = load_trace(path)?;
        let e = trace.entries();
        let n = e.len() as f64;
        let results = TraceSummary {
            entries: e.len(),
            first_iteration: e[0].iteration,
            last_iteration: e[e.len() - 1].iteration,
            mean_sigma_x2: e.iter().map(|t| t.sigma_x2).sum::<f64>() / n,
            mean_sigma_n2: e.iter().map(|t| t.sigma_n2).sum::<f64>() / n,
        };
        return output("stats", a, &results, None);
    }
    let path = a.samples.as_deref().unwrap_or(Path::new(""));
    let set = load_samples(path)?;
    let stats = estimate_stats(&set)?;
    let global: Vec<f64> = set.global.iter().copied().collect();
    let fit = gaussian_fit(&global, a.bins)?;
    let noise: Vec<Vec<f64>> = set
        .local
        .iter()
        .map(|m| m.iter().zip(set.global.iter()).map(|(y, x)| y - x).collect())
        .collect();
    let k = noise.len();
    let mut corr = vec![vec![f64::NAN; k]; k];
    for i in 0..k {
        for j in 0..k {
            corr[i][j] = pearson(&noise[i], &noise[j]).unwrap_or(f64::NAN);
        }
    }
    let results = SampleSummary {
        pooled_sigma_n2: stats.pooled_sigma_n2(),
        stats,
        global_fit_r_squared: fit.r_squared,
        noise_correlation: corr,
    };
    output("stats", a, &results, None)
}

/// Flattens a JSON value into `key,value` rows.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, rows)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, rows)),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn render(out: Output, cli: &Cli) -> Result<String, Error> {
    match cli.format {
        Format::Csv => Ok(out.csv.unwrap_or_else(|| {
            let mut rows = Vec::new();
            flatten("", &out.results, &mut rows);
            let mut s = String::from("key,value\n");
            for (k, v) in rows {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        })),
        Format::Json => {
            let env = OutputEnvelope {
                command: out.command.to_string(),
                parameters: out.parameters,
                results: out.results,
                units: cli.units,
                seed: out.seed,
            };
            let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::invalid(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleDistortion { .. } => EXIT_INFEASIBLE,
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

fn dispatch(cli: &Cli) -> Result<Output, Error> {
    let units = cli.units;
    match &cli.command {
        Command::Sumrate(a) => cmd_sumrate(a, units),
        Command::Corner(a) => cmd_corner(a, units),
        Command::Boundary(a) => cmd_boundary(a, units),
        Command::Allocate(a) => cmd_allocate(a, units),
        Command::Plan(a) => cmd_plan(a, units),
        Command::Signsgd(a) => cmd_signsgd(a, units),
        Command::SimulateCeo(a) => cmd_simulate_ceo(a, units),
        Command::SimulateSgd(a) => cmd_simulate_sgd(a, units),
        Command::SweepRho(a) => cmd_sweep_rho(a, units),
        Command::Stats(a) => cmd_stats(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = dispatch(&cli).and_then(|o| {
        let seed = o.seed;
        render(o, &cli).map(|s| (s, seed))
    });
    match result {
        Ok((text, seed)) => {
            if let Some(seed) = seed {
                let _ = writeln!(err, "seed: {seed}");
            }
            match &cli.output {
                Some(path) => {
                    let path = output_path(path);
                    if let Err(source) = std::fs::write(&path, text) {
                        let _ = writeln!(err, "error: {}", Error::Io { path, source });
                        return EXIT_USAGE;
                    }
                    let _ = writeln!(err, "wrote {}", path.display());
                }
                None => {
                    let _ = out.write_all(text.as_bytes());
                }
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
