//! Iterations-to-target, per-iteration cost and total training cost.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConvergenceParams, GradientTrace};
use crate::numeric::{compensated_sum, nats_to_bits};
use crate::region::{independent_sum_rate, sum_rate_distortion};

/// Real-valued iteration count at which the SGD optimality-gap bound
/// `A sqrt(2D/T) + beta A^2 / T` equals the target gap.
pub fn iterations_real(params: &ConvergenceParams, distortion: f64) -> Result<f64> {
    if !(distortion >= 0.0 && distortion.is_finite()) {
        return Err(Error::invalid(format!(
            "distortion must be finite and >= 0, got {distortion}"
        )));
    }
    let eps = params.target_gap;
    if distortion == 0.0 {
        return Ok(params.smoothness * params.radius_sq / eps);
    }
    let a = distortion / (2.0 * eps * eps);
    let root = (a + params.smoothness / eps).sqrt() + a.sqrt();
    Ok(params.radius_sq * root * root)
}

/// Optimality-gap bound after `iterations` SGD steps with the tuned step size.
pub fn convergence_bound(params: &ConvergenceParams, distortion: f64, iterations: f64) -> f64 {
    let a = params.radius_sq.sqrt();
    a * (2.0 * distortion / iterations).sqrt() + params.smoothness * params.radius_sq / iterations
}

/// Smallest integer iteration count meeting the target gap.
pub fn iterations_required(params: &ConvergenceParams, distortion: f64) -> Result<u64> {
    let t = iterations_real(params, distortion)?.ceil().max(1.0);
    // Guard against the ceiling overshooting by one through rounding.
    let below = t - 1.0;
    if below >= 1.0 && convergence_bound(params, distortion, below) <= params.target_gap * (1.0 + 1e-12) {
        return Ok(below as u64);
    }
    Ok(t as u64)
}

/// Bits per iteration: `P` times the sum-rate-distortion function.
pub fn per_iteration_cost(
    params: &ConvergenceParams,
    workers: usize,
    sigma_x2: f64,
    sigma_n2: f64,
    distortion: f64,
) -> Result<f64> {
    let nats = sum_rate_distortion(sigma_x2, sigma_n2, workers, distortion)?;
    Ok(params.model_dim as f64 * nats_to_bits(nats))
}

/// Per-iteration values of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerIteration {
    /// The same value at every iteration.
    Constant(f64),
    Series(Vec<f64>),
    /// Error-free transmission: no finite rate achieves it.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPlan {
    pub distortion: PerIteration,
    pub iterations: u64,
    pub per_iteration_bits: PerIteration,
    /// `None` when the per-iteration cost is unbounded.
    pub total_bits: Option<f64>,
    pub rho: Option<f64>,
}

impl CostPlan {
    pub fn is_unbounded(&self) -> bool {
        self.total_bits.is_none()
    }
}

/// Plan with stationary gradient statistics: `T` from the convergence bound
/// and a constant per-iteration cost.
pub fn plan_static(
    params: &ConvergenceParams,
    workers: usize,
    sigma_x2: f64,
    sigma_n2: f64,
    distortion: f64,
) -> Result<CostPlan> {
    let cost = per_iteration_cost(params, workers, sigma_x2, sigma_n2, distortion)?;
    let iterations = iterations_required(params, distortion)?;
    Ok(CostPlan {
        distortion: PerIteration::Constant(distortion),
        iterations,
        per_iteration_bits: PerIteration::Constant(cost),
        total_bits: Some(iterations as f64 * cost),
        rho: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalDistortion {
    pub distortion: f64,
    /// Best point of the grid scan, before polishing.
    pub grid_best: f64,
    pub plan: CostPlan,
    /// Grid points that were feasible and scanned.
    pub grid_points: usize,
    /// Whether the local polish improved on the best grid point.
    pub refined: bool,
}

fn static_total(params: &ConvergenceParams, workers: usize, sx2: f64, sn2: f64, d: f64) -> f64 {
    plan_static(params, workers, sx2, sn2, d)
        .ok()
        .and_then(|p| p.total_bits)
        .unwrap_or(f64::INFINITY)
}

/// Minimizes the static total cost over `grid`, then polishes the best point
/// by golden-section search between its grid neighbours.
pub fn optimal_distortion_static(
    params: &ConvergenceParams,
    workers: usize,
    sigma_x2: f64,
    sigma_n2: f64,
    grid: &[f64],
) -> Result<OptimalDistortion> {
    let floor = sigma_n2 / workers.max(1) as f64;
    let mut feasible: Vec<f64> = grid.iter().copied().filter(|&d| d > floor && d.is_finite()).collect();
    if feasible.is_empty() {
        return Err(Error::InfeasibleDistortion {
            distortion: grid.iter().copied().fold(f64::NAN, f64::max),
            minimum: floor,
        });
    }
    feasible.sort_by(f64::total_cmp);
    feasible.dedup();

    let totals: Vec<f64> = feasible
        .iter()
        .map(|&d| static_total(params, workers, sigma_x2, sigma_n2, d))
        .collect();
    let best = (0..feasible.len())
        .min_by(|&a, &b| totals[a].total_cmp(&totals[b]))
        .unwrap_or(0);

    let lo = if best > 0 { feasible[best - 1] } else { feasible[best] };
    let hi = feasible.get(best + 1).copied().unwrap_or(feasible[best]);
    let mut d_star = feasible[best];
    let mut refined = false;
    if hi > lo {
        let f = |d: f64| static_total(params, workers, sigma_x2, sigma_n2, d);
        let d = golden_section(f, lo, hi, 1e-10 * hi);
        if f(d) < totals[best] {
            d_star = d;
            refined = true;
        }
    }
    Ok(OptimalDistortion {
        distortion: d_star,
        grid_best: feasible[best],
        plan: plan_static(params, workers, sigma_x2, sigma_n2, d_star)?,
        grid_points: feasible.len(),
        refined,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// Plan over a measured trace with `D(t) = sigma_N^2(t) / K * (1 + rho)`.
/// The trace length is the iteration count. `rho = 0` is reported as
/// unbounded.
pub fn plan_trace(params: &ConvergenceParams, workers: usize, trace: &GradientTrace, rho: f64) -> Result<CostPlan> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be finite and >= 0, got {rho}")));
    }
    if workers == 0 {
        return Err(Error::invalid("at least one worker is required"));
    }
    let k = workers as f64;
    let distortions: Vec<f64> = trace.entries().iter().map(|e| e.sigma_n2 / k * (1.0 + rho)).collect();
    let iterations = trace.len() as u64;
    if rho == 0.0 {
        return Ok(CostPlan {
            distortion: PerIteration::Series(distortions),
            iterations,
            per_iteration_bits: PerIteration::Unbounded,
            total_bits: None,
            rho: Some(rho),
        });
    }
    let bits: Vec<f64> = trace
        .entries()
        .iter()
        .zip(&distortions)
        .map(|(e, &d)| per_iteration_cost(params, workers, e.sigma_x2, e.sigma_n2, d))
        .collect::<Result<_>>()?;
    Ok(CostPlan {
        distortion: PerIteration::Series(distortions),
        iterations,
        total_bits: Some(compensated_sum(bits.iter().copied())),
        per_iteration_bits: PerIteration::Series(bits),
        rho: Some(rho),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignSgdComparison {
    pub signsgd_bits_per_dim: f64,
    pub signsgd_distortion: f64,
    pub ideal_quant_bits: f64,
    pub r_sum_bits: f64,
}

/// One-bit sign quantization with reconstruction `+-sqrt(2/pi) sigma`,
/// compared with the rate-distortion limits at the same distortion.
pub fn signsgd_comparison(workers: usize, sigma_x2: f64, sigma_n2: f64) -> Result<SignSgdComparison> {
    if workers == 0 {
        return Err(Error::invalid("at least one worker is required"));
    }
    for (name, v) in [("sigma_x2", sigma_x2), ("sigma_n2", sigma_n2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let k = workers as f64;
    let d = (sigma_n2 + (PI - 2.0) / PI * (sigma_n2 + sigma_x2)) / k;
    Ok(SignSgdComparison {
        signsgd_bits_per_dim: k,
        signsgd_distortion: d,
        ideal_quant_bits: 0.5 * k * (1.0 + PI / (PI - 2.0)).log2(),
        r_sum_bits: nats_to_bits(sum_rate_distortion(sigma_x2, sigma_n2, workers, d)?),
    })
}

/// Independent-coding rate at the SignSGD distortion, in bits.
pub fn signsgd_independent_bits(workers: usize, sigma_x2: f64, sigma_n2: f64) -> Result<f64> {
    let c = signsgd_comparison(workers, sigma_x2, sigma_n2)?;
    Ok(nats_to_bits(independent_sum_rate(
        sigma_x2,
        sigma_n2,
        workers,
        c.signsgd_distortion,
    )?))
}
