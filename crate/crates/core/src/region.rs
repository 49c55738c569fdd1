//! Rate-region mathematics for the unbiased Gaussian aggregation problem.
//!
//! For one layer with prior variance `sigma_x2`, noise variances `s_k` and a
//! distortion `D`, the region is the union over rate vectors `r` on the
//! surface `sum_k z_k = 1/D` (with `z_k = (1 - e^{-2 r_k}) / s_k`) of the
//! polyhedra
//!
//! ```text
//! sum_{k in A} R_k >= sum_{k in A} r_k + 1/2 ln(1/sigma_x2 + 1/D)
//!                                     - 1/2 ln(1/sigma_x2 + sum_{k not in A} z_k)
//! ```
//!
//! for every subset `A` of workers.

use serde::{Deserialize, Serialize};

use crate::boundary::{solve_p1, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{z_from_r, LayerSpec, LayeredGaussianSpec, RateAllocation, WeightVector};
use crate::numeric::rel_diff;

/// Tolerance used when checking that a rate row lies on the distortion surface.
pub const SURFACE_TOL: f64 = 1e-9;

/// Largest worker count for which all `2^K` subset constraints are enumerated.
pub const MAX_EXHAUSTIVE_WORKERS: usize = 20;

/// Right-hand side of the subset constraint for `subset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetBound {
    pub subset: Vec<usize>,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCheck {
    pub on_surface: bool,
    pub residual: f64,
}

/// `|sum_k z_k - 1/D| * D`; the row is on the surface when this is at most
/// [`SURFACE_TOL`]. `D = +inf` is accepted and matches only the all-zero row.
pub fn check_f_surface(layer: &LayerSpec, rates: &[f64], distortion: f64) -> Result<SurfaceCheck> {
    let z = layer.z_row(rates)?;
    let precision: f64 = z.iter().sum();
    let residual = if distortion.is_infinite() {
        precision
    } else {
        (precision - 1.0 / distortion).abs() * distortion
    };
    Ok(SurfaceCheck {
        on_surface: residual <= SURFACE_TOL,
        residual,
    })
}

fn validate_subset(subset: &[usize], workers: usize) -> Result<Vec<bool>> {
    if subset.is_empty() {
        return Err(Error::invalid("subset must be nonempty"));
    }
    let mut member = vec![false; workers];
    for &k in subset {
        if k >= workers {
            return Err(Error::invalid(format!("worker index {k} out of range 0..{workers}")));
        }
        if member[k] {
            return Err(Error::invalid(format!("worker index {k} repeated in subset")));
        }
        member[k] = true;
    }
    Ok(member)
}

fn bound_for_members(prior: f64, rates: &[f64], z: &[f64], distortion: f64, member: impl Fn(usize) -> bool) -> f64 {
    let mut in_rate = 0.0;
    let mut out_precision = 0.0;
    for k in 0..rates.len() {
        if member(k) {
            in_rate += rates[k];
        } else {
            out_precision += z[k];
        }
    }
    in_rate + 0.5 * (prior + 1.0 / distortion).ln() - 0.5 * (prior + out_precision).ln()
}

/// Lower bound on `sum_{k in subset} R_k` for the given noise-quantization
/// rates. The rate row must lie on the `distortion` surface.
pub fn subset_rate_bound(layer: &LayerSpec, rates: &[f64], distortion: f64, subset: &[usize]) -> Result<SubsetBound> {
    let member = validate_subset(subset, layer.workers())?;
    let z = surface_z(layer, rates, distortion)?;
    let bound = bound_for_members(layer.prior_precision(), rates, &z, distortion, |k| member[k]);
    let mut subset = subset.to_vec();
    subset.sort_unstable();
    Ok(SubsetBound { subset, bound })
}

fn surface_z(layer: &LayerSpec, rates: &[f64], distortion: f64) -> Result<Vec<f64>> {
    if !(distortion > 0.0) {
        return Err(Error::invalid(format!("distortion must be positive, got {distortion}")));
    }
    let check = check_f_surface(layer, rates, distortion)?;
    if !check.on_surface {
        return Err(Error::invalid(format!(
            "rates are not on the distortion surface for D = {distortion} (residual {:e})",
            check.residual
        )));
    }
    layer.z_row(rates)
}

/// The distortion whose surface passes through `rates`, `1 / sum_k z_k`.
pub fn distortion_of(layer: &LayerSpec, rates: &[f64]) -> Result<f64> {
    let precision: f64 = layer.z_row(rates)?.iter().sum();
    Ok(1.0 / precision)
}

fn check_permutation(order: &[usize], workers: usize) -> Result<()> {
    if order.len() != workers {
        return Err(Error::invalid(format!(
            "order has {} entries, expected {workers}",
            order.len()
        )));
    }
    let mut seen = vec![false; workers];
    for &k in order {
        if k >= workers || seen[k] {
            return Err(Error::invalid(format!("order {order:?} is not a permutation")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Vertex of the subset constraints selected by `order` (highest weight
/// first). Returned rates are indexed by original worker index.
pub fn corner_point(layer: &LayerSpec, rates: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    check_permutation(order, layer.workers())?;
    let z = layer.z_row(rates)?;
    Ok(corner_from_z(layer.prior_precision(), rates, &z, order))
}

pub(crate) fn corner_from_z(prior: f64, rates: &[f64], z: &[f64], order: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; rates.len()];
    let mut suffix = 0.0;
    for &k in order.iter().rev() {
        let below = prior + suffix;
        suffix += z[k];
        out[k] = rates[k] + 0.5 * ((prior + suffix) / below).ln();
    }
    out
}

/// Result of checking a corner point against every subset constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerCheck {
    /// Largest amount by which any checked constraint is violated (≤ 0 means all hold).
    pub max_violation: f64,
    /// Largest relative gap on the prefix sets of the ordering (equality expected).
    pub max_prefix_gap: f64,
    /// Relative gap between the corner's sum and the full-set bound.
    pub telescoping_gap: f64,
    pub subsets_checked: u64,
    pub exhaustive: bool,
}

/// Checks the corner for `order` against the subset constraints. All `2^K`
/// subsets are enumerated when `K <= MAX_EXHAUSTIVE_WORKERS`; above that only
/// the prefix sets are checked.
pub fn check_corner(layer: &LayerSpec, rates: &[f64], distortion: f64, order: &[usize]) -> Result<CornerCheck> {
    let z = surface_z(layer, rates, distortion)?;
    check_permutation(order, layer.workers())?;
    let prior = layer.prior_precision();
    let corner = corner_from_z(prior, rates, &z, order);
    let workers = layer.workers();

    let mut max_violation = f64::NEG_INFINITY;
    let mut subsets_checked = 0u64;
    let exhaustive = workers <= MAX_EXHAUSTIVE_WORKERS;
    if exhaustive {
        for mask in 1u64..(1u64 << workers) {
            let member = |k: usize| mask >> k & 1 == 1;
            let bound = bound_for_members(prior, rates, &z, distortion, member);
            let sum: f64 = (0..workers).filter(|&k| member(k)).map(|k| corner[k]).sum();
            max_violation = max_violation.max(bound - sum);
            subsets_checked += 1;
        }
    }

    let mut max_prefix_gap: f64 = 0.0;
    let mut in_prefix = vec![false; workers];
    for &k in order {
        in_prefix[k] = true;
        let bound = bound_for_members(prior, rates, &z, distortion, |i| in_prefix[i]);
        let sum: f64 = (0..workers).filter(|&i| in_prefix[i]).map(|i| corner[i]).sum();
        max_prefix_gap = max_prefix_gap.max(rel_diff(sum, bound));
        max_violation = max_violation.max(bound - sum);
        if !exhaustive {
            subsets_checked += 1;
        }
    }

    let full = bound_for_members(prior, rates, &z, distortion, |_| true);
    let total: f64 = corner.iter().sum();
    Ok(CornerCheck {
        max_violation,
        max_prefix_gap,
        telescoping_gap: rel_diff(total, full),
        subsets_checked,
        exhaustive,
    })
}

fn homogeneous_check(sigma_x2: f64, sigma_n2: f64, workers: usize, distortion: f64) -> Result<()> {
    if workers == 0 {
        return Err(Error::invalid("at least one worker is required"));
    }
    LayerSpec::homogeneous(workers, sigma_x2, sigma_n2)?.check_feasible(distortion)
}

/// Closed-form sum-rate-distortion function for homogeneous workers (nats):
/// `K/2 ln(1 + s/(K D - s)) + 1/2 ln(1 + sigma_x2/D)`.
pub fn sum_rate_distortion(sigma_x2: f64, sigma_n2: f64, workers: usize, distortion: f64) -> Result<f64> {
    homogeneous_check(sigma_x2, sigma_n2, workers, distortion)?;
    let k = workers as f64;
    Ok(0.5 * k * (sigma_n2 / (k * distortion - sigma_n2)).ln_1p() + 0.5 * (sigma_x2 / distortion).ln_1p())
}

/// Sum rate when each worker encodes its own observation without exploiting
/// inter-worker correlation (nats).
pub fn independent_sum_rate(sigma_x2: f64, sigma_n2: f64, workers: usize, distortion: f64) -> Result<f64> {
    homogeneous_check(sigma_x2, sigma_n2, workers, distortion)?;
    let k = workers as f64;
    Ok(0.5 * k * (sigma_n2 / (k * distortion - sigma_n2)).ln_1p() + 0.5 * k * (sigma_x2 / (k * distortion)).ln_1p())
}

/// `independent_sum_rate - sum_rate_distortion`, the rate saved by
/// distributed source coding (nats).
pub fn correlation_gain(sigma_x2: f64, sigma_n2: f64, workers: usize, distortion: f64) -> Result<f64> {
    homogeneous_check(sigma_x2, sigma_n2, workers, distortion)?;
    let k = workers as f64;
    Ok(0.5 * k * (sigma_x2 / (k * distortion)).ln_1p() - 0.5 * (sigma_x2 / distortion).ln_1p())
}

/// Minimum-sum-rate operating point for heterogeneous workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterFilling {
    pub z: Vec<f64>,
    pub rates: Vec<f64>,
    /// Water level `mu`: active workers satisfy `z_k = 1/s_k - mu`.
    pub level: f64,
    pub sum_rate: f64,
}

/// Minimizes `sum_k r_k` over the distortion surface and adds the decoder
/// term `1/2 ln(1 + sigma_x2/D)`.
///
/// Stationarity gives `s_k / (1 - s_k z_k) = 1/mu` on active workers, i.e.
/// `z_k = max(0, 1/s_k - mu)`. The active set is the largest prefix of
/// workers sorted by precision whose members stay above the level.
pub fn sum_rate_heterogeneous(layer: &LayerSpec, distortion: f64) -> Result<WaterFilling> {
    layer.check_feasible(distortion)?;
    let target = 1.0 / distortion;
    let precision: Vec<f64> = layer.noise_var().iter().map(|s| 1.0 / s).collect();
    let mut order: Vec<usize> = (0..precision.len()).collect();
    order.sort_by(|&a, &b| precision[b].total_cmp(&precision[a]));

    let mut level = 0.0;
    let mut prefix = 0.0;
    for (m, &k) in order.iter().enumerate() {
        prefix += precision[k];
        let candidate = (prefix - target) / (m + 1) as f64;
        if precision[k] > candidate {
            level = candidate;
        } else {
            break;
        }
    }

    let mut z = vec![0.0; precision.len()];
    let mut rates = vec![0.0; precision.len()];
    for (k, s) in layer.noise_var().iter().enumerate() {
        if precision[k] > level {
            z[k] = precision[k] - level;
            rates[k] = -0.5 * (s * level).ln();
        }
    }
    let sum_rate = rates.iter().sum::<f64>() + 0.5 * (layer.sigma_x2() / distortion).ln_1p();
    Ok(WaterFilling {
        z,
        rates,
        level,
        sum_rate,
    })
}

/// Outcome of the approximate membership test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    /// Smallest `alpha . R - min_{R' in region} alpha . R'` over the grid,
    /// with weights normalized to sum to one (nats).
    pub margin: f64,
    pub worst_weights: Vec<f64>,
    pub directions_checked: usize,
}

const MEMBERSHIP_TOL: f64 = 1e-9;
const MAX_DIRECTIONS: usize = 200_000;

/// Grid weight used for empty simplex coordinates; the grid stays in the open
/// simplex because the boundary solver needs positive weights.
const GRID_FLOOR: f64 = 0.05;

/// Simplex grid of positive weight vectors at the given resolution.
pub fn simplex_grid(workers: usize, resolution: usize) -> Result<Vec<Vec<f64>>> {
    if workers == 0 || resolution == 0 {
        return Err(Error::invalid("workers and grid resolution must be positive"));
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; workers];
    fn recurse(pos: usize, left: usize, counts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) -> bool {
        if out.len() > MAX_DIRECTIONS {
            return false;
        }
        if pos + 1 == counts.len() {
            counts[pos] = left;
            let raw: Vec<f64> = counts.iter().map(|&c| (c as f64).max(GRID_FLOOR)).collect();
            let total: f64 = raw.iter().sum();
            out.push(raw.iter().map(|w| w / total).collect());
            return true;
        }
        for c in 0..=left {
            counts[pos] = c;
            if !recurse(pos + 1, left - c, counts, out) {
                return false;
            }
        }
        true
    }
    if !recurse(0, resolution, &mut counts, &mut out) {
        return Err(Error::invalid(format!(
            "weight grid exceeds {MAX_DIRECTIONS} directions; lower the resolution"
        )));
    }
    Ok(out)
}

/// Approximate separation test: `R` is reported inside when, for every
/// sampled weight vector, `alpha . R` is at least the boundary optimum.
///
/// Rejections are exact certificates (a separating hyperplane was found);
/// acceptance only becomes exact as the grid is refined.
pub fn membership_test(
    spec: &LayeredGaussianSpec,
    allocation: &RateAllocation,
    distortion: f64,
    resolution: usize,
) -> Result<Membership> {
    spec.check_feasible(distortion)?;
    if allocation.per_worker.len() != spec.workers() {
        return Err(Error::invalid(format!(
            "allocation has {} workers, spec has {}",
            allocation.per_worker.len(),
            spec.workers()
        )));
    }
    let grid = simplex_grid(spec.workers(), resolution)?;
    let options = SolverOptions::default();
    let mut margin = f64::INFINITY;
    let mut worst = grid[0].clone();
    for alpha in &grid {
        let weights = WeightVector::new(alpha.clone())?;
        let optimum = solve_p1(spec, &weights, distortion, &options)?.objective;
        let value: f64 = alpha.iter().zip(&allocation.per_worker).map(|(a, r)| a * r).sum();
        let slack = value - optimum;
        if slack < margin {
            margin = slack;
            worst = alpha.clone();
        }
    }
    Ok(Membership {
        inside: margin >= -MEMBERSHIP_TOL,
        margin,
        worst_weights: worst,
        directions_checked: grid.len(),
    })
}

/// Noise-quantization rates from a z-row.
pub fn rates_from_z(layer: &LayerSpec, z: &[f64]) -> Result<Vec<f64>> {
    z.iter()
        .zip(layer.noise_var())
        .map(|(&z, &s)| crate::model::r_from_z(z, s))
        .collect()
}

/// z-row from noise-quantization rates.
pub fn z_from_rates(layer: &LayerSpec, rates: &[f64]) -> Vec<f64> {
    rates
        .iter()
        .zip(layer.noise_var())
        .map(|(&r, &s)| z_from_r(r, s))
        .collect()
}
