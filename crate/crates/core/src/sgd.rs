//! Distributed mini-batch SGD on a synthetic least-squares problem with
//! injected estimator noise at distortion `D(t) = sigma_N^2(t)/K * (1 + rho)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_space, nats_to_bits, splitmix64, stream_id, stream_rng, CompensatedSum};

/// Least-squares objective `F(w) = ||A w - b||^2 / (2m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    design: DMatrix<f64>,
    /// Transposed design: column `i` is sample `i`.
    samples_by_column: DMatrix<f64>,
    targets: DVector<f64>,
    hessian: DMatrix<f64>,
    /// `A^T b / m`, so that the full gradient is `H w - c`.
    linear: DVector<f64>,
    optimum: DVector<f64>,
    smoothness: f64,
    optimum_loss: f64,
}

impl SyntheticProblem {
    pub fn from_data(design: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        let (m, p) = design.shape();
        if p == 0 || m < p {
            return Err(Error::invalid(format!("need samples >= dimension >= 1, got {m}x{p}")));
        }
        if targets.len() != m {
            return Err(Error::invalid(format!("expected {m} targets, got {}", targets.len())));
        }
        if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design and targets must be finite"));
        }
        let mf = m as f64;
        let hessian = design.transpose() * &design / mf;
        let linear = design.transpose() * &targets / mf;
        let smoothness = SymmetricEigen::new(hessian.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let optimum = design
            .clone()
            .svd(true, true)
            .solve(&targets, 1e-14)
            .map_err(|e| Error::invalid(format!("least-squares solve failed: {e}")))?;
        let residual = &design * &optimum - &targets;
        let optimum_loss = residual.norm_squared() / (2.0 * mf);
        Ok(Self {
            samples_by_column: design.transpose(),
            design,
            targets,
            hessian,
            linear,
            optimum,
            smoothness,
            optimum_loss,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn samples(&self) -> usize {
        self.design.nrows()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Largest eigenvalue of `A^T A / m`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn optimum_loss(&self) -> f64 {
        self.optimum_loss
    }

    pub fn optimum(&self) -> &DVector<f64> {
        &self.optimum
    }

    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        (&self.design * w - &self.targets).norm_squared() / (2.0 * self.samples() as f64)
    }

    /// `F(w) - F(w*)`, evaluated as a quadratic form about the optimum.
    pub fn gap(&self, w: &DVector<f64>) -> f64 {
        let d = w - &self.optimum;
        0.5 * d.dot(&(&self.hessian * &d))
    }

    pub fn full_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.hessian * w - &self.linear
    }

    /// `A^2 = ||w0 - w*||^2`.
    pub fn radius_sq(&self, w0: &DVector<f64>) -> f64 {
        (w0 - &self.optimum).norm_squared()
    }

    fn sample_gradient_into(&self, i: usize, w: &DVector<f64>, acc: &mut DVector<f64>, scale: f64) {
        let x = self.samples_by_column.column(i);
        let r = x.dot(w) - self.targets[i];
        acc.axpy(scale * r, &x, 1.0);
    }
}

/// Random least-squares instance whose Hessian `A^T A / m` has eigenvalues
/// log-spaced in `[1/condition_number, 1]`.
pub fn make_problem(dim: usize, samples: usize, condition_number: f64, seed: u64) -> Result<SyntheticProblem> {
    make_problem_with_noise(dim, samples, condition_number, 1.0, seed)
}

/// [`make_problem`] with label noise of standard deviation `noise_std`.
pub fn make_problem_with_noise(
    dim: usize,
    samples: usize,
    condition_number: f64,
    noise_std: f64,
    seed: u64,
) -> Result<SyntheticProblem> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!(
            "label noise must be finite and >= 0, got {noise_std}"
        )));
    }
    if dim == 0 || samples < dim {
        return Err(Error::invalid(format!(
            "need samples >= dimension >= 1, got m={samples}, P={dim}"
        )));
    }
    if !(condition_number >= 1.0 && condition_number.is_finite()) {
        return Err(Error::invalid(format!(
            "condition number must be >= 1, got {condition_number}"
        )));
    }
    let mut rng = stream_rng(seed, stream_id(3, 0, 0));
    let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = gauss(samples, dim).qr().q();
    let v = gauss(dim, dim).qr().q();
    let eig = if dim == 1 {
        vec![1.0]
    } else {
        let mut e = log_space(1.0 / condition_number, 1.0, dim);
        e[dim - 1] = 1.0;
        e
    };
    let singular = DMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        eig.iter().map(|l| (l * samples as f64).sqrt()),
    ));
    let design = u * singular * v.transpose();
    let w_star = gauss(dim, 1).column(0).into_owned();
    let noise = gauss(samples, 1).column(0) * noise_std;
    let targets = &design * w_star + noise;
    SyntheticProblem::from_data(design, targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseInjection {
    /// One perturbation of the aggregate with variance `sigma_N^2/K * rho`.
    PostAggregate,
    /// Each worker perturbs its own gradient with variance `sigma_N^2 * rho`.
    PerWorker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub workers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Harmonic decay horizon `t0`: step `t` uses `learning_rate / (1 + t/t0)`.
    /// `None` keeps the step constant.
    #[serde(default)]
    pub decay_horizon: Option<f64>,
    pub rho: f64,
    pub target_gap: f64,
    pub max_iters: u64,
    pub injection: NoiseInjection,
}

impl SgdConfig {
    pub fn step(&self, t: u64) -> f64 {
        match self.decay_horizon {
            Some(t0) => self.learning_rate / (1.0 + t as f64 / t0),
            None => self.learning_rate,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.batch_size == 0 {
            return Err(Error::invalid("workers and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(t0) = self.decay_horizon {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(Error::invalid(format!("decay horizon must be positive, got {t0}")));
            }
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.target_gap > 0.0) {
            return Err(Error::invalid("target gap must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdRunResult {
    pub iterations_to_target: u64,
    /// Mean per-dimension sum rate over the run, in bits; `None` when it is
    /// unbounded (`rho = 0`).
    pub avg_sum_rate_bits: Option<f64>,
    pub loss_history: Vec<f64>,
    pub rho: f64,
    pub converged: bool,
    pub diverged: bool,
    /// Mean and count of injected noise entries (aggregate level).
    pub injected_noise_mean: f64,
    pub injected_noise_var: f64,
    pub injected_entries: u64,
}

const SAMPLING_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Worker mini-batch gradients at `w`; `batch_size >= m` uses the full
/// data set deterministically.
fn local_gradients(
    problem: &SyntheticProblem,
    w: &DVector<f64>,
    config: &SgdConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let m = problem.samples();
    (0..config.workers)
        .map(|_| {
            if config.batch_size >= m {
                return problem.full_gradient(w);
            }
            let mut g = DVector::zeros(problem.dim());
            let scale = 1.0 / config.batch_size as f64;
            for _ in 0..config.batch_size {
                let i = rng.random_range(0..m);
                problem.sample_gradient_into(i, w, &mut g, scale);
            }
            g
        })
        .collect()
}

/// Unbiased per-entry variance of a worker's gradient about the full
/// gradient: across workers when `K >= 2`, against the exact gradient
/// otherwise.
fn gradient_noise_var(locals: &[DVector<f64>], mean: &DVector<f64>, full: &DVector<f64>) -> f64 {
    let p = mean.len() as f64;
    if locals.len() >= 2 {
        let mut ss = CompensatedSum::new();
        for g in locals {
            for (a, b) in g.iter().zip(mean.iter()) {
                ss.add((a - b) * (a - b));
            }
        }
        ss.value() / ((locals.len() - 1) as f64 * p)
    } else {
        (&locals[0] - full).norm_squared() / p
    }
}

fn entry_variance(g: &DVector<f64>) -> f64 {
    let p = g.len();
    if p < 2 {
        return g[0] * g[0];
    }
    let mean = g.mean();
    g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (p - 1) as f64
}

/// Per-dimension sum rate (nats) at `D = sigma_N^2/K (1 + rho)`.
fn iteration_rate(workers: usize, sigma_x2: f64, sigma_n2: f64, rho: f64) -> f64 {
    if rho == 0.0 || sigma_n2 == 0.0 {
        return f64::INFINITY;
    }
    let k = workers as f64;
    let d = sigma_n2 / k * (1.0 + rho);
    0.5 * k * (1.0 / rho).ln_1p() + 0.5 * (sigma_x2 / d).ln_1p()
}

/// Runs distributed SGD from `w = 0` until the optimality gap reaches the
/// target or the iteration cap.
pub fn run(problem: &SyntheticProblem, config: &SgdConfig, seed: u64) -> Result<SgdRunResult> {
    config.validate()?;
    let mut sampling = stream_rng(seed, stream_id(SAMPLING_STREAM, 0, 0));
    let mut noise = stream_rng(seed, stream_id(NOISE_STREAM, 0, 0));
    let k = config.workers as f64;
    let mut w = DVector::zeros(problem.dim());
    let initial_gap = problem.gap(&w);
    let mut history = vec![problem.loss(&w)];
    let mut rate = CompensatedSum::new();
    let mut injected = CompensatedSum::new();
    let mut injected_var = CompensatedSum::new();
    let mut injected_entries = 0u64;
    let mut steps = 0u64;
    let mut gap = initial_gap;
    let mut diverged = false;

    while gap > config.target_gap && steps < config.max_iters {
        let locals = local_gradients(problem, &w, config, &mut sampling);
        let full = problem.full_gradient(&w);
        let mut mean = DVector::zeros(problem.dim());
        for g in &locals {
            mean += g;
        }
        mean /= k;
        let sigma_n2 = gradient_noise_var(&locals, &mean, &full);
        let sigma_x2 = entry_variance(&full);
        rate.add(iteration_rate(config.workers, sigma_x2, sigma_n2, config.rho));

        let mut aggregate = mean;
        if config.rho > 0.0 && sigma_n2 > 0.0 {
            let var = sigma_n2 / k * config.rho;
            let perturbation: DVector<f64> = match config.injection {
                NoiseInjection::PostAggregate => {
                    let sd = var.sqrt();
                    DVector::from_fn(problem.dim(), |_, _| sd * noise.sample::<f64, _>(StandardNormal))
                }
                NoiseInjection::PerWorker => {
                    let sd = (sigma_n2 * config.rho).sqrt();
                    let mut sum = DVector::zeros(problem.dim());
                    for _ in 0..config.workers {
                        sum += DVector::from_fn(problem.dim(), |_, _| sd * noise.sample::<f64, _>(StandardNormal));
                    }
                    sum / k
                }
            };
            for v in perturbation.iter() {
                injected.add(*v);
                injected_var.add(var);
            }
            injected_entries += problem.dim() as u64;
            aggregate += perturbation;
        }

        w -= config.step(steps) * aggregate;
        steps += 1;
        gap = problem.gap(&w);
        history.push(gap + problem.optimum_loss());
        if !gap.is_finite() || gap > DIVERGENCE_FACTOR * initial_gap.max(f64::MIN_POSITIVE) {
            diverged = true;
            break;
        }
    }

    let converged = !diverged && gap <= config.target_gap;
    let avg = if steps == 0 {
        Some(0.0)
    } else {
        let r = rate.value() / steps as f64;
        r.is_finite().then(|| nats_to_bits(r))
    };
    let n = injected_entries.max(1) as f64;
    Ok(SgdRunResult {
        iterations_to_target: if converged { steps } else { config.max_iters },
        avg_sum_rate_bits: avg,
        loss_history: history,
        rho: config.rho,
        converged,
        diverged,
        injected_noise_mean: injected.value() / n,
        injected_noise_var: injected_var.value() / n,
        injected_entries,
    })
}

/// Plain distributed mini-batch SGD without statistics or perturbation.
/// Shares the sampling stream of [`run`], so a run at `rho = 0` follows the
/// same trajectory. Returns the iteration count and whether it converged.
pub fn minibatch_sgd_baseline(problem: &SyntheticProblem, config: &SgdConfig, seed: u64) -> Result<(u64, bool)> {
    config.validate()?;
    let mut sampling = stream_rng(seed, stream_id(SAMPLING_STREAM, 0, 0));
    let mut w = DVector::zeros(problem.dim());
    let initial = problem.gap(&w);
    let mut steps = 0;
    while problem.gap(&w) > config.target_gap && steps < config.max_iters {
        let locals = local_gradients(problem, &w, config, &mut sampling);
        let mut step = DVector::zeros(problem.dim());
        for g in &locals {
            step += g;
        }
        step /= config.workers as f64;
        w -= config.step(steps) * step;
        steps += 1;
        let gap = problem.gap(&w);
        if !gap.is_finite() || gap > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE) {
            return Ok((config.max_iters, false));
        }
    }
    let converged = problem.gap(&w) <= config.target_gap;
    Ok((if converged { steps } else { config.max_iters }, converged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub median_iterations: f64,
    /// `None` when unbounded.
    pub mean_rate_bits: Option<f64>,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// `runs[i][r]`: grid point `i`, replicate `r`.
    pub runs: Vec<Vec<SgdRunResult>>,
}

/// Seed of replicate `r`; shared by every grid point.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    splitmix64(seed ^ splitmix64(replicate as u64))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs `replicates` seeds at each `rho` in the grid. Replicate seeds are
/// common across grid points.
pub fn sweep_rho(
    problem: &SyntheticProblem,
    config: &SgdConfig,
    rho_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Sweep> {
    if rho_grid.is_empty() || replicates == 0 {
        return Err(Error::invalid("sweep needs a nonempty grid and at least one replicate"));
    }
    let jobs: Vec<(usize, usize)> = (0..rho_grid.len())
        .flat_map(|i| (0..replicates).map(move |r| (i, r)))
        .collect();
    let results: Vec<SgdRunResult> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let cfg = SgdConfig {
                rho: rho_grid[i],
                ..*config
            };
            run(problem, &cfg, replicate_seed(seed, r))
        })
        .collect::<Result<_>>()?;
    let runs: Vec<Vec<SgdRunResult>> = results.chunks(replicates).map(<[_]>::to_vec).collect();
    let rows = runs
        .iter()
        .zip(rho_grid)
        .map(|(rs, &rho)| {
            let mut iters: Vec<f64> = rs.iter().map(|r| r.iterations_to_target as f64).collect();
            let rates: Option<Vec<f64>> = rs.iter().map(|r| r.avg_sum_rate_bits).collect();
            SweepRow {
                rho,
                median_iterations: median(&mut iters),
                mean_rate_bits: rates.map(|v| v.iter().sum::<f64>() / v.len() as f64),
                converged_fraction: rs.iter().filter(|r| r.converged).count() as f64 / rs.len() as f64,
            }
        })
        .collect();
    Ok(Sweep { rows, runs })
}

pub const SWEEP_HEADER: &str = "rho,median_iterations,mean_rate_bits,converged_fraction";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let rate = r.mean_rate_bits.map_or_else(|| "inf".to_string(), |v| v.to_string());
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.rho, r.median_iterations, rate, r.converged_fraction
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(rho: f64) -> SgdConfig {
        SgdConfig {
            workers: 4,
            batch_size: 8,
            learning_rate: 0.5,
            decay_horizon: None,
            rho,
            target_gap: 0.05,
            max_iters: 5_000,
            injection: NoiseInjection::PostAggregate,
        }
    }

    #[test]
    fn trivial_problem() {
        let p = SyntheticProblem::from_data(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.0)).unwrap();
        assert_eq!(p.optimum_loss(), 0.0);
        assert!((p.smoothness() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectrum_is_controlled() {
        let p = make_problem(5, 40, 1.0, 3).unwrap();
        let eig = SymmetricEigen::new(p.design().transpose() * p.design() / 40.0).eigenvalues;
        assert!(eig.iter().all(|&e| (e - 1.0).abs() < 1e-10));
        let q = make_problem(6, 60, 100.0, 3).unwrap();
        assert!((q.smoothness() - 1.0).abs() < 1e-10);
        let eig = SymmetricEigen::new(q.design().transpose() * q.design() / 60.0).eigenvalues;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 0.01).abs() < 1e-10);
        assert_eq!(make_problem(6, 60, 100.0, 3).unwrap(), q);
        assert!(make_problem(5, 4, 1.0, 0).is_err());
    }

    #[test]
    fn gap_matches_loss_difference() {
        let p = make_problem(4, 30, 5.0, 1).unwrap();
        let w = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.5]);
        assert!((p.gap(&w) - (p.loss(&w) - p.optimum_loss())).abs() < 1e-10);
        let mut g = DVector::zeros(4);
        for i in 0..30 {
            p.sample_gradient_into(i, &w, &mut g, 1.0 / 30.0);
        }
        assert!((g - p.full_gradient(&w)).norm() < 1e-10);
    }

    #[test]
    fn full_batch_without_noise_is_gradient_descent() {
        let p = make_problem(5, 50, 10.0, 2).unwrap();
        let cfg = SgdConfig {
            batch_size: 50,
            learning_rate: 1.0 / p.smoothness(),
            target_gap: 1e-6,
            ..config(0.0)
        };
        let r = run(&p, &cfg, 0).unwrap();
        assert!(r.converged);
        assert!(r.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_rho_matches_baseline() {
        let p = make_problem(10, 100, 10.0, 4).unwrap();
        for seed in 0..3 {
            let r = run(&p, &config(0.0), seed).unwrap();
            let (iters, conv) = minibatch_sgd_baseline(&p, &config(0.0), seed).unwrap();
            assert_eq!(r.iterations_to_target, iters);
            assert_eq!(r.converged, conv);
            assert_eq!(r.avg_sum_rate_bits, None);
        }
    }

    #[test]
    fn huge_rho_fails_and_noise_is_centred() {
        let p = make_problem(10, 100, 10.0, 4).unwrap();
        let r = run(
            &p,
            &SgdConfig {
                max_iters: 500,
                ..config(1e6)
            },
            1,
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations_to_target, 500);
        let moderate = run(
            &p,
            &SgdConfig {
                max_iters: 500,
                ..config(10.0)
            },
            1,
        )
        .unwrap();
        let steps = (moderate.injected_entries / 10) as f64;
        let bound = 4.0 * (moderate.injected_noise_var / (steps * 10.0)).sqrt();
        assert!(moderate.injected_noise_mean.abs() <= bound);
    }

    #[test]
    fn decay_schedule_is_harmonic() {
        let cfg = SgdConfig {
            decay_horizon: Some(10.0),
            ..config(0.0)
        };
        assert_eq!(cfg.step(0), 0.5);
        assert_eq!(cfg.step(10), 0.25);
        assert_eq!(config(0.0).step(1000), 0.5);
        let bad = SgdConfig {
            decay_horizon: Some(0.0),
            ..config(0.0)
        };
        let p = make_problem(5, 50, 10.0, 2).unwrap();
        assert!(run(&p, &bad, 0).is_err());
    }

    #[test]
    fn decayed_rho_zero_matches_baseline() {
        let p = make_problem(10, 100, 10.0, 4).unwrap();
        let cfg = SgdConfig {
            decay_horizon: Some(50.0),
            ..config(0.0)
        };
        let r = run(&p, &cfg, 3).unwrap();
        assert_eq!(
            minibatch_sgd_baseline(&p, &cfg, 3).unwrap(),
            (r.iterations_to_target, r.converged)
        );
    }

    #[test]
    fn per_worker_injection_runs() {
        let p = make_problem(10, 100, 10.0, 4).unwrap();
        let cfg = SgdConfig {
            injection: NoiseInjection::PerWorker,
            ..config(1.0)
        };
        let a = run(&p, &cfg, 9).unwrap();
        assert_eq!(a, run(&p, &cfg, 9).unwrap());
        assert!(a.injected_entries > 0);
    }

    #[test]
    fn sweep_rates_decrease() {
        let p = make_problem(10, 100, 10.0, 4).unwrap();
        let s = sweep_rho(&p, &config(0.0), &[0.0, 1.0, 10.0, 100.0], 3, 5).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.rows[0].mean_rate_bits, None);
        let rates: Vec<f64> = s.rows[1..].iter().map(|r| r.mean_rate_bits.unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(s, sweep_rho(&p, &config(0.0), &[0.0, 1.0, 10.0, 100.0], 3, 5).unwrap());
        assert!(sweep_csv(&s.rows).starts_with(SWEEP_HEADER));
    }
}
