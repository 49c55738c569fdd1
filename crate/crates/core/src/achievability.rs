//! Gaussian test channels `U_k = Y_k + V_k` with the unbiased
//! weighted-average decoder, and Monte Carlo checks of their predicted
//! distortion.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerSpec, LayeredGaussianSpec, NoiseQuantRates};
use crate::numeric::{stream_id, stream_rng, CompensatedSum};

/// Samples drawn per independent stream. Fixed so that results do not
/// depend on the number of threads.
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestChannelDesign {
    /// `sigma_V^2` per worker and layer; `None` for a worker that sends
    /// nothing (zero rate).
    pub aux_noise_var: Vec<Vec<Option<f64>>>,
    pub decoder_weights: Vec<Vec<f64>>,
    pub predicted_distortion: Vec<f64>,
}

/// One layer of a [`TestChannelDesign`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesign {
    pub aux_noise_var: Vec<Option<f64>>,
    pub decoder_weights: Vec<f64>,
    pub predicted_distortion: f64,
}

impl TestChannelDesign {
    pub fn workers(&self) -> usize {
        self.decoder_weights.len()
    }

    pub fn layers(&self) -> usize {
        self.predicted_distortion.len()
    }

    pub fn layer(&self, l: usize) -> LayerDesign {
        LayerDesign {
            aux_noise_var: self.aux_noise_var.iter().map(|row| row[l]).collect(),
            decoder_weights: self.decoder_weights.iter().map(|row| row[l]).collect(),
            predicted_distortion: self.predicted_distortion[l],
        }
    }
}

/// `sigma_V^2 = sigma_N^2 / (e^{2r} - 1)`, or `None` when `r = 0`.
pub fn aux_noise_var(rate: f64, noise_var: f64) -> Option<f64> {
    if rate > 0.0 {
        Some(noise_var / (2.0 * rate).exp_m1())
    } else {
        None
    }
}

pub fn design_test_channels(spec: &LayeredGaussianSpec, rates: &NoiseQuantRates) -> Result<TestChannelDesign> {
    rates.check_shape(spec)?;
    let workers = spec.workers();
    let layers = spec.layers();
    let mut aux = vec![vec![None; layers]; workers];
    let mut weights = vec![vec![0.0; layers]; workers];
    let mut predicted = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut precision = vec![0.0; workers];
        for k in 0..workers {
            let s = spec.noise_var(k, l);
            let r = rates.rate(k, l);
            if let Some(v) = aux_noise_var(r, s) {
                aux[k][l] = Some(v);
                precision[k] = 1.0 / (s + v);
            }
        }
        let total: f64 = precision.iter().sum();
        if total == 0.0 {
            return Err(Error::invalid(format!(
                "layer {l}: every rate is zero, so no unbiased estimator exists"
            )));
        }
        for k in 0..workers {
            weights[k][l] = precision[k] / total;
        }
        predicted.push(1.0 / total);
    }
    Ok(TestChannelDesign {
        aux_noise_var: aux,
        decoder_weights: weights,
        predicted_distortion: predicted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub samples: u64,
    pub empirical_bias: Vec<f64>,
    pub empirical_mse: Vec<f64>,
    pub mse_std_err: Vec<f64>,
    /// OLS slope of the estimate regressed on the true value.
    pub conditional_var_slope: Vec<f64>,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    err: CompensatedSum,
    err2: CompensatedSum,
    err4: CompensatedSum,
    x: CompensatedSum,
    x2: CompensatedSum,
    est: CompensatedSum,
    x_est: CompensatedSum,
}

impl Moments {
    fn merge(&mut self, o: &Moments) {
        self.err.merge(&o.err);
        self.err2.merge(&o.err2);
        self.err4.merge(&o.err4);
        self.x.merge(&o.x);
        self.x2.merge(&o.x2);
        self.est.merge(&o.est);
        self.x_est.merge(&o.x_est);
    }
}

/// Standard deviations and decoder weights of one layer.
struct ChunkLayer<'a> {
    sigma_x: f64,
    noise_sd: &'a [f64],
    aux_sd: &'a [Option<f64>],
    weights: &'a [f64],
}

fn simulate_chunk(cl: &ChunkLayer, seed: u64, layer: usize, chunk: u64, count: u64) -> Moments {
    let ChunkLayer {
        sigma_x,
        noise_sd,
        aux_sd,
        weights,
    } = *cl;
    let mut x_rng = stream_rng(seed, stream_id(layer as u64, chunk, 0));
    let mut worker_rngs: Vec<_> = (0..weights.len())
        .map(|k| stream_rng(seed, stream_id(layer as u64, chunk, k as u64 + 1)))
        .collect();
    let mut m = Moments::default();
    for _ in 0..count {
        let x = sigma_x * x_rng.sample::<f64, _>(StandardNormal);
        let mut est = 0.0;
        for (k, rng) in worker_rngs.iter_mut().enumerate() {
            let Some(v) = aux_sd[k] else { continue };
            let n: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            est += weights[k] * (x + noise_sd[k] * n + v * u);
        }
        let e = est - x;
        let e2 = e * e;
        m.err.add(e);
        m.err2.add(e2);
        m.err4.add(e2 * e2);
        m.x.add(x);
        m.x2.add(x * x);
        m.est.add(est);
        m.x_est.add(x * est);
    }
    m
}

/// Draws `samples` independent realizations per layer and measures the
/// decoder's bias, MSE and regression slope.
pub fn simulate(spec: &LayeredGaussianSpec, design: &TestChannelDesign, samples: u64, seed: u64) -> Result<SimReport> {
    if samples < 2 {
        return Err(Error::invalid("at least two samples are required"));
    }
    if design.workers() != spec.workers() || design.layers() != spec.layers() {
        return Err(Error::invalid("design shape does not match the spec"));
    }
    let chunks = samples.div_ceil(CHUNK);
    let n = samples as f64;
    let mut report = SimReport {
        samples,
        empirical_bias: Vec::new(),
        empirical_mse: Vec::new(),
        mse_std_err: Vec::new(),
        conditional_var_slope: Vec::new(),
    };
    for l in 0..spec.layers() {
        let layer = design.layer(l);
        let sigma_x = spec.global_var()[l].sqrt();
        let noise_sd: Vec<f64> = (0..spec.workers()).map(|k| spec.noise_var(k, l).sqrt()).collect();
        let aux_sd: Vec<Option<f64>> = layer.aux_noise_var.iter().map(|v| v.map(f64::sqrt)).collect();
        let cl = ChunkLayer {
            sigma_x,
            noise_sd: &noise_sd,
            aux_sd: &aux_sd,
            weights: &layer.decoder_weights,
        };
        let parts: Vec<Moments> = (0..chunks)
            .into_par_iter()
            .map(|c| simulate_chunk(&cl, seed, l, c, CHUNK.min(samples - c * CHUNK)))
            .collect();
        let mut m = Moments::default();
        for p in &parts {
            m.merge(p);
        }
        let bias = m.err.value() / n;
        let mse = m.err2.value() / n;
        let var_e2 = (m.err4.value() / n - mse * mse).max(0.0) * n / (n - 1.0);
        let sxx = m.x2.value() - m.x.value() * m.x.value() / n;
        let sxy = m.x_est.value() - m.x.value() * m.est.value() / n;
        report.empirical_bias.push(bias);
        report.empirical_mse.push(mse);
        report.mse_std_err.push((var_e2 / n).sqrt());
        report.conditional_var_slope.push(sxy / sxx);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationQuantities {
    /// `I(X; X_hat)` in nats.
    pub mi_x_xhat: f64,
    /// `min_a E(X - a X_hat)^2`, the linear-estimation bound on the
    /// conditional variance.
    pub cond_var_bound: f64,
    /// Conditional variance of `X` given `X_hat` for the jointly Gaussian pair.
    pub cond_var_actual: f64,
}

/// Analytic information quantities of one layer of the scheme.
pub fn information_quantities(layer: &LayerSpec, design: &LayerDesign) -> Result<InformationQuantities> {
    if design.decoder_weights.len() != layer.workers() {
        return Err(Error::invalid("design does not match the layer"));
    }
    // Estimator noise variance from the decoder weights directly.
    let mut d = CompensatedSum::new();
    for ((&a, aux), &s) in design
        .decoder_weights
        .iter()
        .zip(&design.aux_noise_var)
        .zip(layer.noise_var())
    {
        if let Some(v) = aux {
            d.add(a * a * (s + v));
        }
    }
    let d = d.value();
    let sx2 = layer.sigma_x2();
    let a = sx2 / (sx2 + d);
    Ok(InformationQuantities {
        mi_x_xhat: 0.5 * ((sx2 + d) / d).ln(),
        cond_var_bound: (1.0 - a) * (1.0 - a) * sx2 + a * a * d,
        cond_var_actual: sx2 - sx2 * sx2 / (sx2 + d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetInfoCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares `(1/sigma_X^2) exp(2 I(X; U_A))` for the Gaussian test channels
/// with `1/sigma_X^2 + sum_{k in A} z_k`.
pub fn subset_info_check(layer: &LayerSpec, rates: &[f64], subset: &[usize]) -> Result<SubsetInfoCheck> {
    let z = layer.z_row(rates)?;
    let mut seen = vec![false; layer.workers()];
    for &k in subset {
        if k >= layer.workers() || seen[k] {
            return Err(Error::invalid(format!("invalid subset {subset:?}")));
        }
        seen[k] = true;
    }
    let prior = layer.prior_precision();
    let mut observed = 0.0;
    let mut rhs = prior;
    for &k in subset {
        let s = layer.noise_var()[k];
        if let Some(v) = aux_noise_var(rates[k], s) {
            observed += 1.0 / (s + v);
        }
        rhs += z[k];
    }
    let mi = 0.5 * (layer.sigma_x2() * observed).ln_1p();
    let lhs = prior * (2.0 * mi).exp();
    Ok(SubsetInfoCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}
