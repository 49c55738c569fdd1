//! Shared domain types.
//!
//! Every rate in this crate is measured in nats per source symbol. Variances
//! are in squared gradient units. Conversion to bits happens only at output
//! boundaries (see [`crate::numeric::nats_to_bits`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be positive and finite, got {v}")))
    }
}

/// Maps a noise-quantization rate to its precision contribution
/// `z = (1 - exp(-2r)) / noise_var`.
pub fn z_from_r(r: f64, noise_var: f64) -> f64 {
    -(-2.0 * r).exp_m1() / noise_var
}

/// Inverse of [`z_from_r`]; `z` must lie in `[0, 1/noise_var)`.
pub fn r_from_z(z: f64, noise_var: f64) -> Result<f64> {
    let sup = 1.0 / noise_var;
    if !(z >= 0.0 && z < sup) {
        return Err(Error::invalid(format!(
            "z = {z} outside [0, {sup}) for noise variance {noise_var}"
        )));
    }
    Ok(-0.5 * (-noise_var * z).ln_1p())
}

/// One layer of the Gaussian model: the global gradient variance and the
/// per-worker gradient-noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer")]
pub struct LayerSpec {
    sigma_x2: f64,
    noise_var: Vec<f64>,
}

#[derive(Deserialize)]
struct RawLayer {
    sigma_x2: f64,
    noise_var: Vec<f64>,
}

impl TryFrom<RawLayer> for LayerSpec {
    type Error = Error;
    fn try_from(raw: RawLayer) -> Result<Self> {
        LayerSpec::new(raw.sigma_x2, raw.noise_var)
    }
}

impl LayerSpec {
    pub fn new(sigma_x2: f64, noise_var: Vec<f64>) -> Result<Self> {
        check_positive("global gradient variance", sigma_x2)?;
        if noise_var.is_empty() {
            return Err(Error::invalid("at least one worker is required"));
        }
        for &v in &noise_var {
            check_positive("noise variance", v)?;
        }
        Ok(Self { sigma_x2, noise_var })
    }

    pub fn homogeneous(workers: usize, sigma_x2: f64, sigma_n2: f64) -> Result<Self> {
        Self::new(sigma_x2, vec![sigma_n2; workers])
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn noise_var(&self) -> &[f64] {
        &self.noise_var
    }

    pub fn workers(&self) -> usize {
        self.noise_var.len()
    }

    /// Precision of the global gradient prior, `1/sigma_x2`.
    pub fn prior_precision(&self) -> f64 {
        1.0 / self.sigma_x2
    }

    /// `(sum_k 1/noise_var_k)^-1`, the distortion reached when every worker
    /// forwards its observation losslessly.
    pub fn min_distortion(&self) -> f64 {
        1.0 / self.noise_var.iter().map(|v| 1.0 / v).sum::<f64>()
    }

    pub fn check_feasible(&self, distortion: f64) -> Result<()> {
        let minimum = self.min_distortion();
        if distortion.is_nan() || distortion <= minimum {
            return Err(Error::InfeasibleDistortion { distortion, minimum });
        }
        Ok(())
    }

    /// z-view of a row of noise-quantization rates.
    pub fn z_row(&self, rates: &[f64]) -> Result<Vec<f64>> {
        self.check_rate_row(rates)?;
        Ok(rates
            .iter()
            .zip(&self.noise_var)
            .map(|(&r, &s)| z_from_r(r, s))
            .collect())
    }

    pub(crate) fn check_rate_row(&self, rates: &[f64]) -> Result<()> {
        if rates.len() != self.workers() {
            return Err(Error::invalid(format!(
                "expected {} rates, got {}",
                self.workers(),
                rates.len()
            )));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::invalid(format!(
                "noise-quantization rates must be finite and nonnegative, got {r}"
            )));
        }
        Ok(())
    }
}

/// Multi-layer Gaussian model: `L` global variances and a `K x L` matrix of
/// noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct LayeredGaussianSpec {
    global_var: Vec<f64>,
    noise_var: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawSpec {
    global_var: Vec<f64>,
    noise_var: Vec<Vec<f64>>,
}

impl TryFrom<RawSpec> for LayeredGaussianSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        LayeredGaussianSpec::new(raw.global_var, raw.noise_var)
    }
}

impl LayeredGaussianSpec {
    /// `noise_var[k][l]` is the noise variance of worker `k` on layer `l`.
    pub fn new(global_var: Vec<f64>, noise_var: Vec<Vec<f64>>) -> Result<Self> {
        if global_var.is_empty() {
            return Err(Error::invalid("at least one layer is required"));
        }
        if noise_var.is_empty() {
            return Err(Error::invalid("at least one worker is required"));
        }
        for &v in &global_var {
            check_positive("global gradient variance", v)?;
        }
        for (k, row) in noise_var.iter().enumerate() {
            if row.len() != global_var.len() {
                return Err(Error::invalid(format!(
                    "worker {k} has {} noise variances, expected {}",
                    row.len(),
                    global_var.len()
                )));
            }
            for &v in row {
                check_positive("noise variance", v)?;
            }
        }
        Ok(Self { global_var, noise_var })
    }

    pub fn single_layer(sigma_x2: f64, noise_var: Vec<f64>) -> Result<Self> {
        Self::new(vec![sigma_x2], noise_var.into_iter().map(|v| vec![v]).collect())
    }

    pub fn homogeneous(workers: usize, layers: usize, sigma_x2: f64, sigma_n2: f64) -> Result<Self> {
        Self::new(vec![sigma_x2; layers], vec![vec![sigma_n2; layers]; workers])
    }

    pub fn workers(&self) -> usize {
        self.noise_var.len()
    }

    pub fn layers(&self) -> usize {
        self.global_var.len()
    }

    pub fn global_var(&self) -> &[f64] {
        &self.global_var
    }

    pub fn noise_var(&self, worker: usize, layer: usize) -> f64 {
        self.noise_var[worker][layer]
    }

    pub fn noise_matrix(&self) -> &[Vec<f64>] {
        &self.noise_var
    }

    pub fn layer(&self, l: usize) -> LayerSpec {
        LayerSpec {
            sigma_x2: self.global_var[l],
            noise_var: self.noise_var.iter().map(|row| row[l]).collect(),
        }
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        (0..self.layers()).map(|l| self.layer(l)).collect()
    }

    /// Sum over layers of the per-layer lossless-forwarding distortion.
    /// Any budget at or below this value is infeasible.
    pub fn min_distortion(&self) -> f64 {
        (0..self.layers()).map(|l| self.layer(l).min_distortion()).sum()
    }

    pub fn check_feasible(&self, distortion: f64) -> Result<()> {
        let minimum = self.min_distortion();
        if distortion.is_nan() || distortion <= minimum {
            return Err(Error::InfeasibleDistortion { distortion, minimum });
        }
        Ok(())
    }

    /// Returns a copy with workers reordered: worker `i` of the result is
    /// worker `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            global_var: self.global_var.clone(),
            noise_var: order.iter().map(|&k| self.noise_var[k].clone()).collect(),
        }
    }
}

/// Total distortion budget, optionally split across layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionBudget {
    total: f64,
    per_layer: Option<Vec<f64>>,
}

impl DistortionBudget {
    pub fn new(spec: &LayeredGaussianSpec, total: f64) -> Result<Self> {
        spec.check_feasible(total)?;
        Ok(Self { total, per_layer: None })
    }

    /// Budget with an explicit per-layer split; every layer must be feasible
    /// on its own and the parts must sum to the total.
    pub fn with_split(spec: &LayeredGaussianSpec, per_layer: Vec<f64>) -> Result<Self> {
        if per_layer.len() != spec.layers() {
            return Err(Error::invalid(format!(
                "expected {} per-layer distortions, got {}",
                spec.layers(),
                per_layer.len()
            )));
        }
        for (l, &d) in per_layer.iter().enumerate() {
            spec.layer(l).check_feasible(d)?;
        }
        let total: f64 = per_layer.iter().sum();
        spec.check_feasible(total)?;
        Ok(Self {
            total,
            per_layer: Some(per_layer),
        })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn per_layer(&self) -> Option<&[f64]> {
        self.per_layer.as_deref()
    }
}

/// `K x L` matrix of noise-quantization rates `r[k][l]` (nats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseQuantRates {
    rates: Vec<Vec<f64>>,
}

impl NoiseQuantRates {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let width = rates.first().map(Vec::len).unwrap_or(0);
        if rates.is_empty() || width == 0 {
            return Err(Error::invalid("rate matrix must be nonempty"));
        }
        for row in &rates {
            if row.len() != width {
                return Err(Error::invalid("rate matrix rows must have equal length"));
            }
            if let Some(r) = row.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
                return Err(Error::invalid(format!(
                    "noise-quantization rates must be finite and nonnegative, got {r}"
                )));
            }
        }
        Ok(Self { rates })
    }

    /// Builds a single-layer rate matrix from one rate per worker.
    pub fn single_layer(rates: Vec<f64>) -> Result<Self> {
        Self::new(rates.into_iter().map(|r| vec![r]).collect())
    }

    pub fn rate(&self, worker: usize, layer: usize) -> f64 {
        self.rates[worker][layer]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn layer_row(&self, l: usize) -> Vec<f64> {
        self.rates.iter().map(|row| row[l]).collect()
    }

    pub fn check_shape(&self, spec: &LayeredGaussianSpec) -> Result<()> {
        if self.rates.len() != spec.workers() || self.rates[0].len() != spec.layers() {
            return Err(Error::invalid(format!(
                "rate matrix is {}x{}, spec is {}x{}",
                self.rates.len(),
                self.rates[0].len(),
                spec.workers(),
                spec.layers()
            )));
        }
        Ok(())
    }

    /// The derived z-view, `z[k][l] in [0, 1/noise_var[k][l])`.
    pub fn z_matrix(&self, spec: &LayeredGaussianSpec) -> Result<Vec<Vec<f64>>> {
        self.check_shape(spec)?;
        Ok(self
            .rates
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .enumerate()
                    .map(|(l, &r)| z_from_r(r, spec.noise_var(k, l)))
                    .collect()
            })
            .collect())
    }
}

/// Per-worker communication rates (nats), optionally broken down per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub per_worker: Vec<f64>,
    pub per_worker_layer: Option<Vec<Vec<f64>>>,
}

impl RateAllocation {
    pub fn new(per_worker: Vec<f64>) -> Result<Self> {
        if let Some(r) = per_worker.iter().find(|r| !(**r >= 0.0) || r.is_nan()) {
            return Err(Error::invalid(format!("rates must be nonnegative, got {r}")));
        }
        Ok(Self {
            per_worker,
            per_worker_layer: None,
        })
    }

    /// Builds the allocation from a `K x L` breakdown; totals are row sums.
    pub fn from_layers(per_worker_layer: Vec<Vec<f64>>) -> Self {
        let per_worker = per_worker_layer.iter().map(|row| row.iter().sum()).collect();
        Self {
            per_worker,
            per_worker_layer: Some(per_worker_layer),
        }
    }

    pub fn sum(&self) -> f64 {
        self.per_worker.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            per_worker: self.per_worker.iter().map(|r| r * factor).collect(),
            per_worker_layer: self
                .per_worker_layer
                .as_ref()
                .map(|m| m.iter().map(|row| row.iter().map(|r| r * factor).collect()).collect()),
        }
    }
}

/// Positive per-worker weights (or bandwidth costs per nat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weight vector must be nonempty"));
        }
        for &w in &weights {
            check_positive("weight", w)?;
        }
        Ok(Self(weights))
    }

    pub fn equal(workers: usize) -> Self {
        Self(vec![1.0; workers])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Worker indices sorted by nonincreasing weight, ties by ascending index.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]));
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: u64,
    pub sigma_x2: f64,
    pub sigma_n2: f64,
}

/// Per-iteration gradient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientTrace {
    entries: Vec<TraceEntry>,
}

impl GradientTrace {
    pub fn new(entries: Vec<TraceEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("empty trace"));
        }
        for (i, e) in entries.iter().enumerate() {
            check_positive("sigma_x2", e.sigma_x2)?;
            check_positive("sigma_n2", e.sigma_n2)?;
            if i > 0 && e.iteration <= entries[i - 1].iteration {
                return Err(Error::invalid(format!(
                    "iterations must be strictly increasing ({} after {})",
                    e.iteration,
                    entries[i - 1].iteration
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Constants of the convex, smooth convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    /// `A^2`, squared radius of the feasible set around the initial point.
    pub radius_sq: f64,
    /// Smoothness constant `beta`.
    pub smoothness: f64,
    /// Target optimality gap `epsilon`.
    pub target_gap: f64,
    /// Model dimension `P`.
    pub model_dim: u64,
}

impl ConvergenceParams {
    pub fn new(radius_sq: f64, smoothness: f64, target_gap: f64, model_dim: u64) -> Result<Self> {
        check_positive("radius_sq", radius_sq)?;
        check_positive("smoothness", smoothness)?;
        check_positive("target_gap", target_gap)?;
        if model_dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        Ok(Self {
            radius_sq,
            smoothness,
            target_gap,
            model_dim,
        })
    }

    /// Step-size scale `gamma = A sqrt(2 / (D T))` and step `gamma / (beta + 1)`.
    pub fn step_size(&self, distortion: f64, iterations: f64) -> f64 {
        let gamma = self.radius_sq.sqrt() * (2.0 / (distortion * iterations)).sqrt();
        gamma / (self.smoothness + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn min_distortion_examples() {
        let s = LayeredGaussianSpec::homogeneous(10, 1, 1.0, 1.0).unwrap();
        assert!((s.min_distortion() - 0.1).abs() < 1e-15);

        let s = LayeredGaussianSpec::single_layer(1.0, vec![1.0, 2.0]).unwrap();
        assert!((s.min_distortion() - 2.0 / 3.0).abs() < 1e-15);

        let s = LayeredGaussianSpec::homogeneous(1, 2, 1.0, 1.0).unwrap();
        assert_eq!(s.min_distortion(), 2.0);
    }

    #[test]
    fn min_distortion_monotone() {
        let base = LayeredGaussianSpec::single_layer(1.0, vec![1.0, 2.0, 3.0]).unwrap();
        let less_noise = LayeredGaussianSpec::single_layer(1.0, vec![1.0, 1.5, 3.0]).unwrap();
        let more_workers = LayeredGaussianSpec::single_layer(1.0, vec![1.0, 2.0, 3.0, 9.0]).unwrap();
        assert!(less_noise.min_distortion() <= base.min_distortion());
        assert!(more_workers.min_distortion() <= base.min_distortion());
    }

    #[test]
    fn feasibility_gate_is_strict() {
        let s = LayeredGaussianSpec::homogeneous(10, 1, 1.0, 1.0).unwrap();
        let min = s.min_distortion();
        assert!(matches!(s.check_feasible(min), Err(Error::InfeasibleDistortion { .. })));
        assert!(s.check_feasible(min * (1.0 + 1e-12)).is_ok());
    }

    #[test]
    fn z_examples() {
        assert_eq!(z_from_r(0.0, 1.0), 0.0);
        let half_ln2 = 0.5 * std::f64::consts::LN_2;
        assert!((z_from_r(half_ln2, 1.0) - 0.5).abs() < 1e-15);
        assert!((r_from_z(0.5, 1.0).unwrap() - 0.346_573_590_279_972_6).abs() < 1e-15);
    }

    #[test]
    fn r_from_z_rejects_out_of_range() {
        assert!(r_from_z(-1e-9, 1.0).is_err());
        assert!(r_from_z(1.0, 1.0).is_err());
        assert!(r_from_z(0.5, 2.0).is_err());
        assert!(r_from_z(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn spec_rejects_bad_shapes() {
        assert!(LayeredGaussianSpec::new(vec![1.0, 1.0], vec![vec![1.0]]).is_err());
        assert!(LayeredGaussianSpec::new(vec![1.0], vec![vec![0.0]]).is_err());
        assert!(LayeredGaussianSpec::new(vec![f64::INFINITY], vec![vec![1.0]]).is_err());
        assert!(LayeredGaussianSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn split_budget_must_be_feasible_per_layer() {
        let s = LayeredGaussianSpec::homogeneous(2, 2, 1.0, 1.0).unwrap();
        assert!(DistortionBudget::with_split(&s, vec![0.4, 2.0]).is_err());
        let b = DistortionBudget::with_split(&s, vec![0.6, 2.0]).unwrap();
        assert!((b.total() - 2.6).abs() < 1e-15);
    }

    #[test]
    fn trace_validation() {
        let e = |t, x, n| TraceEntry {
            iteration: t,
            sigma_x2: x,
            sigma_n2: n,
        };
        assert!(GradientTrace::new(vec![]).is_err());
        assert!(GradientTrace::new(vec![e(2, 1.0, 1.0), e(2, 1.0, 1.0)]).is_err());
        assert!(GradientTrace::new(vec![e(1, 1.0, -1.0)]).is_err());
        assert!(GradientTrace::new(vec![e(1, 1.0, 1.0), e(3, 0.5, 1.0)]).is_ok());
    }

    #[test]
    fn descending_order_breaks_ties_by_index() {
        let w = WeightVector::new(vec![1.0, 3.0, 1.0, 3.0]).unwrap();
        assert_eq!(w.descending_order(), vec![1, 3, 0, 2]);
    }

    #[test]
    fn spec_deserialization_validates() {
        let ok: LayeredGaussianSpec =
            serde_json::from_str(r#"{"global_var":[1.0],"noise_var":[[1.0],[2.0]]}"#).unwrap();
        assert_eq!(ok.workers(), 2);
        let bad = serde_json::from_str::<LayeredGaussianSpec>(r#"{"global_var":[1.0],"noise_var":[[1.0, 2.0]]}"#);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn z_round_trip(frac in 0.0f64..0.999_999, noise in 1e-3f64..1e3) {
            let z = frac / noise;
            let back = z_from_r(r_from_z(z, noise).unwrap(), noise);
            prop_assert!((back - z).abs() <= 1e-12 * z.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn z_increasing_in_r(r in 0.0f64..20.0, dr in 1e-6f64..1.0, noise in 1e-3f64..1e3) {
            let a = z_from_r(r, noise);
            let b = z_from_r(r + dr, noise);
            prop_assert!(b >= a);
            prop_assert!(b <= 1.0 / noise);
        }
    }
}
