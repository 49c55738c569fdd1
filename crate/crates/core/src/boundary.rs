//! Weighted-sum rate minimization over the rate region.
//!
//! For weights sorted so that `alpha_1 >= ... >= alpha_K` the optimum over
//! the rate polyhedron of a fixed `r` is its corner point, which turns the
//! boundary problem into
//!
//! ```text
//! min  sum_l sum_k alpha_k [ -1/2 ln(1 - s_kl z_kl)
//!                            + 1/2 ln(1 + z_kl / (1/sigma_xl^2 + sum_{i>k} z_il)) ]
//! s.t. sum_k z_kl = 1/D_l,   sum_l D_l = D
//! ```
//!
//! Each layer is solved by an active-set Newton method on the hyperplane
//! `sum_k z_kl = 1/D_l`. The layer split is found by bisection on the common
//! marginal cost `-dV_l/dD_l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{r_from_z, LayerSpec, LayeredGaussianSpec, NoiseQuantRates, RateAllocation, WeightVector};
use crate::region::corner_from_z;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Cap on Newton / fallback steps per layer solve.
    pub max_inner_steps: usize,
    /// Certification threshold on the KKT residual.
    pub kkt_tol: f64,
    /// Relative tolerance on `sum_l D_l - D` in the layer split.
    pub split_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_inner_steps: 100_000,
            kkt_tol: 1e-6,
            split_tol: 1e-9,
        }
    }
}

/// A boundary point of the rate region together with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Solution {
    /// `z[k][l]`, original worker order.
    pub z: Vec<Vec<f64>>,
    pub layer_distortions: Vec<f64>,
    pub noise_rates: NoiseQuantRates,
    pub rates: RateAllocation,
    /// `sum_k alpha_k R_k` in nats.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

// Internal solves aim well below the public certification threshold.
const INNER_TARGET: f64 = 1e-13;

/// One layer in sorted-weight order.
struct LayerProblem {
    prior: f64,
    noise: Vec<f64>,
    alpha: Vec<f64>,
}

struct LayerSolution {
    z: Vec<f64>,
    multiplier: f64,
    iterations: usize,
}

impl LayerProblem {
    fn new(layer: &LayerSpec, weights: &[f64], order: &[usize]) -> Self {
        Self {
            prior: layer.prior_precision(),
            noise: order.iter().map(|&k| layer.noise_var()[k]).collect(),
            alpha: order.iter().map(|&k| weights[k]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.noise.len()
    }

    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().zip(&self.noise).all(|(&z, &s)| z >= 0.0 && s * z < 1.0)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        if !self.in_domain(z) {
            return f64::INFINITY;
        }
        let mut suffix = 0.0;
        let mut total = 0.0;
        for k in (0..self.len()).rev() {
            let quant = -0.5 * (-self.noise[k] * z[k]).ln_1p();
            let decode = 0.5 * (z[k] / (self.prior + suffix)).ln_1p();
            total += self.alpha[k] * (quant + decode);
            suffix += z[k];
        }
        total
    }

    /// Half inverse suffix precisions `h_m = 1 / (2 (c + S_m))`.
    fn half_inverse_suffix(&self, z: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.len()];
        let mut suffix = 0.0;
        for m in (0..self.len()).rev() {
            suffix += z[m];
            h[m] = 0.5 / (self.prior + suffix);
        }
        h
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let h = self.half_inverse_suffix(z);
        let mut g = vec![0.0; self.len()];
        let mut coupling = 0.0;
        let mut prev_alpha = 0.0;
        for j in 0..self.len() {
            coupling += (self.alpha[j] - prev_alpha) * h[j];
            prev_alpha = self.alpha[j];
            let s = self.noise[j];
            g[j] = self.alpha[j] * s / (2.0 * (1.0 - s * z[j])) + coupling;
        }
        g
    }

    /// Hessian restricted to directions with zero sum (the term in `S_1`
    /// is constant on the constraint and is dropped). Row-major `K x K`.
    fn hessian(&self, z: &[f64]) -> Vec<f64> {
        let n = self.len();
        let h = self.half_inverse_suffix(z);
        let mut cumulative = vec![0.0; n];
        let mut acc = 0.0;
        for m in 1..n {
            acc += (self.alpha[m - 1] - self.alpha[m]) * 2.0 * h[m] * h[m];
            cumulative[m] = acc;
        }
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                hess[i * n + j] = cumulative[i.min(j)];
            }
            let s = self.noise[i];
            let denom = 1.0 - s * z[i];
            hess[i * n + i] += self.alpha[i] * s * s / (2.0 * denom * denom);
        }
        hess
    }

    /// Starting point proportional to each worker's precision.
    fn initial_point(&self, target: f64) -> Vec<f64> {
        let total: f64 = self.noise.iter().map(|s| 1.0 / s).sum();
        self.noise.iter().map(|s| target / (s * total)).collect()
    }

    /// With `certify` set, a final residual above `kkt_tol` is an error;
    /// otherwise the best iterate is returned as is.
    fn solve(
        &self,
        target: f64,
        warm: Option<&[f64]>,
        options: &SolverOptions,
        certify: bool,
    ) -> Result<LayerSolution> {
        let mut z = match warm {
            Some(w) => {
                let scale = target / w.iter().sum::<f64>();
                let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
                if self.in_domain(&scaled) && scaled.iter().all(|v| v.is_finite()) {
                    scaled
                } else {
                    self.initial_point(target)
                }
            }
            None => self.initial_point(target),
        };
        let mut f = self.objective(&z);
        let mut best_residual = f64::INFINITY;
        let mut iterations = 0;

        while iterations < options.max_inner_steps {
            let g = self.gradient(&z);
            let residual = stationarity_residual(&z, &g);
            best_residual = best_residual.min(residual);
            if residual <= INNER_TARGET {
                break;
            }
            iterations += 1;

            let direction = self
                .newton_direction(&z, &g)
                .filter(|d| dot(&g, d) < 0.0)
                .unwrap_or_else(|| pairwise_direction(&z, &g));
            match self.line_search(&z, f, &g, &direction) {
                Some((next, f_next)) => {
                    let moved = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    z = next;
                    f = f_next;
                    restore_sum(&mut z, target, &self.noise);
                    if moved <= 1e-17 * target {
                        break;
                    }
                }
                None => break,
            }
        }

        let g = self.gradient(&z);
        let residual = stationarity_residual(&z, &g);
        best_residual = best_residual.min(residual);
        if certify && !(residual <= options.kkt_tol) {
            return Err(Error::NonConvergence {
                iterations,
                residual: best_residual,
            });
        }
        let multiplier = multiplier_estimate(&z, &g);
        Ok(LayerSolution {
            z,
            multiplier,
            iterations,
        })
    }

    /// Equality-constrained Newton step on the free coordinates. Coordinates
    /// pinned at zero are released when their gradient is below the current
    /// multiplier and re-pinned if the step would push them negative.
    fn newton_direction(&self, z: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        let hess = self.hessian(z);
        let mut free: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
        let (_, nu) = constrained_newton(&hess, g, &free, n)?;
        for j in 0..n {
            if z[j] == 0.0 && g[j] < nu {
                free[j] = true;
            }
        }
        for _ in 0..=n {
            let (d, _) = constrained_newton(&hess, g, &free, n)?;
            let mut blocked = false;
            for j in 0..n {
                if free[j] && z[j] == 0.0 && d[j] < 0.0 {
                    free[j] = false;
                    blocked = true;
                }
            }
            if !blocked {
                return Some(d);
            }
        }
        None
    }

    fn line_search(&self, z: &[f64], f0: f64, g: &[f64], d: &[f64]) -> Option<(Vec<f64>, f64)> {
        let slope = dot(g, d);
        if !(slope < 0.0) {
            return None;
        }
        // Largest step keeping z >= 0; stay a fraction away from s z = 1.
        let mut t_zero = f64::INFINITY;
        let mut hit = None;
        let mut t_upper = f64::INFINITY;
        for j in 0..z.len() {
            if d[j] < 0.0 {
                let t = z[j] / -d[j];
                if t < t_zero {
                    t_zero = t;
                    hit = Some(j);
                }
            } else if d[j] > 0.0 {
                t_upper = t_upper.min(0.99 * (1.0 / self.noise[j] - z[j]) / d[j]);
            }
        }
        let mut t = 1.0f64.min(t_zero).min(t_upper);
        let slack = 4.0 * f64::EPSILON * f0.abs();
        for _ in 0..80 {
            let mut next: Vec<f64> = z.iter().zip(d).map(|(a, b)| a + t * b).collect();
            if t == t_zero {
                if let Some(j) = hit {
                    next[j] = 0.0;
                }
            }
            for v in next.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let f_next = self.objective(&next);
            if f_next <= f0 + 1e-4 * t * slope + slack {
                return Some((next, f_next));
            }
            t *= 0.5;
        }
        None
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(max_{z_j > 0} g_j - min_j g_j) / max_j |g_j|`: zero exactly at a KKT
/// point of the sum-constrained problem.
fn stationarity_residual(z: &[f64], g: &[f64]) -> f64 {
    let max_pos = z
        .iter()
        .zip(g)
        .filter(|(&z, _)| z > 0.0)
        .map(|(_, &g)| g)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_all = g.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || max_pos == f64::NEG_INFINITY {
        return 0.0;
    }
    ((max_pos - min_all) / scale).max(0.0)
}

fn multiplier_estimate(z: &[f64], g: &[f64]) -> f64 {
    let (sum, count) = z
        .iter()
        .zip(g)
        .filter(|(&z, _)| z > 0.0)
        .fold((0.0, 0usize), |(s, c), (_, &g)| (s + g, c + 1));
    if count == 0 {
        g.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        sum / count as f64
    }
}

/// Steepest pairwise exchange: move mass from the active coordinate with the
/// largest gradient to the coordinate with the smallest.
fn pairwise_direction(z: &[f64], g: &[f64]) -> Vec<f64> {
    let mut from = None;
    let mut to = 0;
    for j in 0..z.len() {
        if z[j] > 0.0 && from.is_none_or(|i: usize| g[j] > g[i]) {
            from = Some(j);
        }
        if g[j] < g[to] {
            to = j;
        }
    }
    let mut d = vec![0.0; z.len()];
    if let Some(i) = from {
        if i != to {
            d[i] = -1.0;
            d[to] = 1.0;
        }
    }
    d
}

/// Solves `min g'd + 1/2 d'Hd  s.t. sum d = 0, d_j = 0 off the free set`.
/// Returns the direction and the multiplier of the sum constraint.
fn constrained_newton(hess: &[f64], g: &[f64], free: &[bool], n: usize) -> Option<(Vec<f64>, f64)> {
    let idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
    let m = idx.len();
    if m == 0 {
        return None;
    }
    let mut sub = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            sub[a * m + b] = hess[i * n + j];
        }
    }
    let chol = cholesky(&sub, m)?;
    let gf: Vec<f64> = idx.iter().map(|&j| g[j]).collect();
    let u = cholesky_solve(&chol, m, &gf);
    let v = cholesky_solve(&chol, m, &vec![1.0; m]);
    let nu = u.iter().sum::<f64>() / v.iter().sum::<f64>();
    let mut d = vec![0.0; n];
    for (a, &j) in idx.iter().enumerate() {
        d[j] = -(u[a] - nu * v[a]);
    }
    Some((d, nu))
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// Puts rounding drift in `sum z` back onto the largest coordinate.
fn restore_sum(z: &mut [f64], target: f64, noise: &[f64]) {
    let drift = target - z.iter().sum::<f64>();
    if drift == 0.0 {
        return;
    }
    if let Some((j, _)) = z.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        let v = z[j] + drift;
        if v >= 0.0 && noise[j] * v < 1.0 {
            z[j] = v;
        }
    }
}

fn validate_weights(spec: &LayeredGaussianSpec, weights: &WeightVector) -> Result<()> {
    if weights.len() != spec.workers() {
        return Err(Error::invalid(format!(
            "{} weights given for {} workers",
            weights.len(),
            spec.workers()
        )));
    }
    Ok(())
}

/// Per-layer solve at a fixed layer distortion, cached for the split search.
struct SplitState<'a> {
    problems: Vec<LayerProblem>,
    min_distortion: Vec<f64>,
    warm: Vec<Option<Vec<f64>>>,
    options: &'a SolverOptions,
    solves: usize,
}

impl SplitState<'_> {
    fn solve_at(&mut self, l: usize, distortion: f64, certify: bool) -> Result<LayerSolution> {
        let sol = self.problems[l].solve(1.0 / distortion, self.warm[l].as_deref(), self.options, certify)?;
        self.warm[l] = Some(sol.z.clone());
        self.solves += 1;
        Ok(sol)
    }

    /// Marginal cost `-dV_l/dD_l = nu_l / D_l^2`.
    fn marginal(&mut self, l: usize, distortion: f64) -> Result<f64> {
        let sol = self.solve_at(l, distortion, false)?;
        Ok(sol.multiplier / (distortion * distortion))
    }

    /// Layer distortion whose marginal cost equals `mu`, searched in
    /// `(dmin_l, dmin_l + slack]`.
    fn distortion_for(&mut self, l: usize, mu: f64, slack: f64) -> Result<f64> {
        let dmin = self.min_distortion[l];
        let upper = dmin + slack;
        if self.marginal(l, upper)? >= mu {
            return Ok(upper);
        }
        // log of the fraction of slack used
        let (mut lo, mut hi) = (-40.0f64, 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let d = dmin + slack * mid.exp();
            if self.marginal(l, d)? > mu {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(dmin + slack * (0.5 * (lo + hi)).exp())
    }

    fn total_for(&mut self, mu: f64, slack: f64) -> Result<(f64, Vec<f64>)> {
        let split: Vec<f64> = (0..self.problems.len())
            .map(|l| self.distortion_for(l, mu, slack))
            .collect::<Result<_>>()?;
        Ok((split.iter().sum(), split))
    }
}

fn layer_split(state: &mut SplitState<'_>, total: f64) -> Result<Vec<f64>> {
    let layers = state.problems.len();
    if layers == 1 {
        return Ok(vec![total]);
    }
    let slack = total - state.min_distortion.iter().sum::<f64>();
    let even: Vec<f64> = state.min_distortion.iter().map(|d| d + slack / layers as f64).collect();
    let mut mu0 = 0.0;
    for (l, &d) in even.iter().enumerate() {
        mu0 += state.marginal(l, d)?;
    }
    mu0 /= layers as f64;

    // Sum of layer distortions is decreasing in mu.
    let (mut lo, mut hi) = (mu0.ln(), mu0.ln());
    let mut guard = 0;
    while state.total_for(lo.exp(), slack)?.0 < total {
        lo -= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NonConvergence {
                iterations: guard,
                residual: f64::NAN,
            });
        }
    }
    while state.total_for(hi.exp(), slack)?.0 > total {
        hi += 2.0;
        guard += 1;
        if guard > 400 {
            return Err(Error::NonConvergence {
                iterations: guard,
                residual: f64::NAN,
            });
        }
    }
    let mut split = even;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (sum, s) = state.total_for(mid.exp(), slack)?;
        split = s;
        if ((sum - total) / total).abs() <= 0.01 * state.options.split_tol {
            break;
        }
        if sum > total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let sum: f64 = split.iter().sum();
    for d in split.iter_mut() {
        *d *= total / sum;
    }
    Ok(split)
}

/// Minimizes `sum_k alpha_k R_k` over the rate region at total distortion
/// `distortion`. Weights may be given in any order; they are sorted
/// internally and all outputs use the original worker order.
pub fn solve_p1(
    spec: &LayeredGaussianSpec,
    weights: &WeightVector,
    distortion: f64,
    options: &SolverOptions,
) -> Result<P1Solution> {
    validate_weights(spec, weights)?;
    spec.check_feasible(distortion)?;
    let order = weights.descending_order();
    let layers = spec.layer_specs();
    let mut state = SplitState {
        problems: layers
            .iter()
            .map(|layer| LayerProblem::new(layer, weights.as_slice(), &order))
            .collect(),
        min_distortion: layers.iter().map(LayerSpec::min_distortion).collect(),
        warm: vec![None; layers.len()],
        options,
        solves: 0,
    };
    let split = layer_split(&mut state, distortion)?;

    let workers = spec.workers();
    let mut z = vec![vec![0.0; layers.len()]; workers];
    let mut iterations = 0;
    for (l, &d) in split.iter().enumerate() {
        let sol = state.solve_at(l, d, true)?;
        iterations += sol.iterations;
        for (pos, &k) in order.iter().enumerate() {
            z[k][l] = sol.z[pos];
        }
    }
    iterations += state.solves;

    let candidate = assemble(spec, weights, &order, z, split)?;
    let kkt = kkt_residual(spec, weights, &candidate)?;
    if !(kkt <= options.kkt_tol) {
        return Err(Error::NonConvergence {
            iterations,
            residual: kkt,
        });
    }
    Ok(P1Solution {
        kkt_residual: kkt,
        iterations,
        ..candidate
    })
}

/// Cost-weighted rate allocation: identical to [`solve_p1`] with weights
/// read as bandwidth cost per nat for each worker.
pub fn rate_allocation(
    spec: &LayeredGaussianSpec,
    cost_per_nat: &WeightVector,
    distortion: f64,
    options: &SolverOptions,
) -> Result<P1Solution> {
    solve_p1(spec, cost_per_nat, distortion, options)
}

fn assemble(
    spec: &LayeredGaussianSpec,
    weights: &WeightVector,
    order: &[usize],
    z: Vec<Vec<f64>>,
    layer_distortions: Vec<f64>,
) -> Result<P1Solution> {
    let workers = spec.workers();
    let layers = spec.layers();
    let mut noise_rates = vec![vec![0.0; layers]; workers];
    let mut per_layer = vec![vec![0.0; layers]; workers];
    for l in 0..layers {
        let layer = spec.layer(l);
        let z_row: Vec<f64> = (0..workers).map(|k| z[k][l]).collect();
        let r_row: Vec<f64> = z_row
            .iter()
            .zip(layer.noise_var())
            .map(|(&z, &s)| r_from_z(z, s))
            .collect::<Result<_>>()?;
        let corner = corner_from_z(layer.prior_precision(), &r_row, &z_row, order);
        for k in 0..workers {
            noise_rates[k][l] = r_row[k];
            per_layer[k][l] = corner[k];
        }
    }
    let rates = RateAllocation::from_layers(per_layer);
    let objective = weights
        .as_slice()
        .iter()
        .zip(&rates.per_worker)
        .map(|(a, r)| a * r)
        .sum();
    Ok(P1Solution {
        z,
        layer_distortions,
        noise_rates: NoiseQuantRates::new(noise_rates)?,
        rates,
        objective,
        kkt_residual: f64::NAN,
        iterations: 0,
    })
}

/// Stationarity violation of a candidate: the largest per-layer projected
/// gradient gap and, for several layers, the relative spread of the marginal
/// costs `nu_l / D_l^2` that the optimal split equalizes.
pub fn kkt_residual(spec: &LayeredGaussianSpec, weights: &WeightVector, candidate: &P1Solution) -> Result<f64> {
    validate_weights(spec, weights)?;
    if candidate.z.len() != spec.workers()
        || candidate.layer_distortions.len() != spec.layers()
        || candidate.z.iter().any(|row| row.len() != spec.layers())
    {
        return Err(Error::invalid("candidate shape does not match the spec"));
    }
    let order = weights.descending_order();
    let mut worst: f64 = 0.0;
    let mut marginals = Vec::with_capacity(spec.layers());
    for l in 0..spec.layers() {
        let problem = LayerProblem::new(&spec.layer(l), weights.as_slice(), &order);
        let z: Vec<f64> = order.iter().map(|&k| candidate.z[k][l]).collect();
        if !problem.in_domain(&z) {
            return Ok(f64::INFINITY);
        }
        let g = problem.gradient(&z);
        worst = worst.max(stationarity_residual(&z, &g));
        let d = candidate.layer_distortions[l];
        marginals.push(multiplier_estimate(&z, &g) / (d * d));
    }
    if marginals.len() > 1 {
        let hi = marginals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = marginals.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max((hi - lo) / hi.abs());
    }
    Ok(worst)
}
