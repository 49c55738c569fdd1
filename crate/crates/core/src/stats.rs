//! Gradient statistics from exported samples and traces, and the
//! diagnostics behind the Gaussian and independence modelling assumptions.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradientTrace, LayeredGaussianSpec, TraceEntry};
use crate::numeric::CompensatedSum;

/// Gradient samples at one iteration: rows are samples, columns dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSampleSet {
    pub iteration: u64,
    pub global: DMatrix<f64>,
    pub local: Vec<DMatrix<f64>>,
    /// Contiguous column blocks forming the layers; sums to the column count.
    pub layer_sizes: Vec<usize>,
}

impl GradientSampleSet {
    pub fn new(
        iteration: u64,
        global: DMatrix<f64>,
        local: Vec<DMatrix<f64>>,
        layer_sizes: Option<Vec<usize>>,
    ) -> Result<Self> {
        if global.nrows() < 2 {
            return Err(Error::invalid("at least two samples are required"));
        }
        if global.ncols() == 0 {
            return Err(Error::invalid("samples must have at least one dimension"));
        }
        if local.is_empty() {
            return Err(Error::invalid("at least one worker is required"));
        }
        for (k, m) in local.iter().enumerate() {
            if m.shape() != global.shape() {
                return Err(Error::invalid(format!(
                    "worker {k} samples are {}x{}, global samples are {}x{}",
                    m.nrows(),
                    m.ncols(),
                    global.nrows(),
                    global.ncols()
                )));
            }
        }
        let layer_sizes = layer_sizes.unwrap_or_else(|| vec![global.ncols()]);
        if layer_sizes.contains(&0) || layer_sizes.iter().sum::<usize>() != global.ncols() {
            return Err(Error::invalid(format!(
                "layer sizes {layer_sizes:?} do not partition {} dimensions",
                global.ncols()
            )));
        }
        Ok(Self {
            iteration,
            global,
            local,
            layer_sizes,
        })
    }

    pub fn workers(&self) -> usize {
        self.local.len()
    }

    fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.layer_sizes
            .iter()
            .map(|&n| {
                start += n;
                start - n..start
            })
            .collect()
    }
}

/// Unbiased variance of pooled entries, mean subtracted.
pub fn pooled_variance<I: IntoIterator<Item = f64> + Clone>(values: I) -> Result<f64> {
    let (sum, n) = values
        .clone()
        .into_iter()
        .fold((CompensatedSum::new(), 0usize), |(mut s, n), v| {
            s.add(v);
            (s, n + 1)
        });
    if n < 2 {
        return Err(Error::invalid("variance needs at least two values"));
    }
    let mean = sum.value() / n as f64;
    let ss: CompensatedSum = values.into_iter().map(|v| (v - mean) * (v - mean)).collect();
    Ok(ss.value() / (n - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub sigma_x2: f64,
    pub sigma_n2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub iteration: u64,
    /// Pooled over all dimensions.
    pub sigma_x2: f64,
    pub sigma_n2: Vec<f64>,
    pub layers: Vec<LayerStats>,
}

impl SampleStats {
    /// Mean of the per-worker noise variances, for homogeneous planning.
    pub fn pooled_sigma_n2(&self) -> f64 {
        self.sigma_n2.iter().sum::<f64>() / self.sigma_n2.len() as f64
    }

    /// Per-layer model for the rate and allocation routines.
    pub fn layered_spec(&self) -> Result<LayeredGaussianSpec> {
        let global = self.layers.iter().map(|l| l.sigma_x2).collect();
        let workers = self.sigma_n2.len();
        let noise = (0..workers)
            .map(|k| self.layers.iter().map(|l| l.sigma_n2[k]).collect())
            .collect();
        LayeredGaussianSpec::new(global, noise)
    }
}

fn block_stats(set: &GradientSampleSet, cols: std::ops::Range<usize>) -> Result<LayerStats> {
    let g = set.global.columns(cols.start, cols.len());
    let sigma_x2 = pooled_variance(g.iter().copied())?;
    let sigma_n2 = set
        .local
        .iter()
        .map(|m| {
            let y = m.columns(cols.start, cols.len());
            pooled_variance(y.iter().zip(g.iter()).map(|(a, b)| a - b))
        })
        .collect::<Result<_>>()?;
    Ok(LayerStats { sigma_x2, sigma_n2 })
}

pub fn estimate_stats(set: &GradientSampleSet) -> Result<SampleStats> {
    let all = block_stats(set, 0..set.global.ncols())?;
    let layers = set
        .layer_ranges()
        .into_iter()
        .map(|r| block_stats(set, r))
        .collect::<Result<_>>()?;
    Ok(SampleStats {
        iteration: set.iteration,
        sigma_x2: all.sigma_x2,
        sigma_n2: all.sigma_n2,
        layers,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("pearson needs at least two points"));
    }
    let n = a.len() as f64;
    let ma = a.iter().copied().collect::<CompensatedSum>().value() / n;
    let mb = b.iter().copied().collect::<CompensatedSum>().value() / n;
    let mut sab = CompensatedSum::new();
    let mut saa = CompensatedSum::new();
    let mut sbb = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        sab.add((x - ma) * (y - mb));
        saa.add((x - ma) * (x - ma));
        sbb.add((y - mb) * (y - mb));
    }
    if saa.value() <= 0.0 || sbb.value() <= 0.0 {
        return Err(Error::invalid("pearson is undefined for a zero-variance series"));
    }
    Ok((sab.value() / (saa.value().sqrt() * sbb.value().sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub variance: f64,
    /// Squared correlation between histogram densities and the fitted
    /// normal density at the bin centres.
    pub r_squared: f64,
}

pub fn gaussian_fit(samples: &[f64], bin_count: usize) -> Result<GaussianFit> {
    if samples.len() < 10 {
        return Err(Error::invalid("gaussian fit needs at least 10 samples"));
    }
    if bin_count < 5 {
        return Err(Error::invalid("gaussian fit needs at least 5 bins"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().copied().collect::<CompensatedSum>().value() / n;
    let variance = pooled_variance(samples.iter().copied())?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(variance > 0.0) || !(hi > lo) {
        return Err(Error::invalid("gaussian fit is undefined for constant samples"));
    }
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0usize; bin_count];
    for &x in samples {
        let i = (((x - lo) / width) as usize).min(bin_count - 1);
        counts[i] += 1;
    }
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let norm = 1.0 / (2.0 * PI * variance).sqrt();
    let fitted: Vec<f64> = (0..bin_count)
        .map(|i| {
            let c = lo + (i as f64 + 0.5) * width;
            norm * (-(c - mean) * (c - mean) / (2.0 * variance)).exp()
        })
        .collect();
    let r = pearson(&density, &fitted)?;
    Ok(GaussianFit {
        mean,
        variance,
        r_squared: r * r,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

/// Reads a trace file with rows `iteration,sigma_x2,sigma_n2`. A header row
/// with those names is optional.
pub fn load_trace(path: &Path) -> Result<GradientTrace> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut entries: Vec<TraceEntry> = Vec::new();
    for (i, record) in csv_reader(&text).records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let row = record_line(&record, i + 1);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if entries.is_empty() && record.get(0) == Some("iteration") {
            let names: Vec<&str> = record.iter().collect();
            if names != ["iteration", "sigma_x2", "sigma_n2"] {
                return Err(parse_err(path, row, format!("unexpected header {names:?}")));
            }
            continue;
        }
        if record.len() != 3 {
            return Err(parse_err(
                path,
                row,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let iteration: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(path, row, format!("invalid iteration {:?}", &record[0])))?;
        let mut vars = [0.0; 2];
        for (j, name) in ["sigma_x2", "sigma_n2"].iter().enumerate() {
            let v: f64 = record[j + 1]
                .parse()
                .map_err(|_| parse_err(path, row, format!("invalid {name} {:?}", &record[j + 1])))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(parse_err(path, row, format!("{name} must be positive, got {v}")));
            }
            vars[j] = v;
        }
        if let Some(prev) = entries.last() {
            if iteration <= prev.iteration {
                return Err(parse_err(
                    path,
                    row,
                    format!("iteration {iteration} does not follow {}", prev.iteration),
                ));
            }
        }
        entries.push(TraceEntry {
            iteration,
            sigma_x2: vars[0],
            sigma_n2: vars[1],
        });
    }
    if entries.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "empty trace".into(),
        });
    }
    GradientTrace::new(entries)
}

pub fn write_trace(trace: &GradientTrace) -> String {
    let mut out = String::from("iteration,sigma_x2,sigma_n2\n");
    for e in trace.entries() {
        out.push_str(&format!("{},{},{}\n", e.iteration, e.sigma_x2, e.sigma_n2));
    }
    out
}

/// Reads a headerless numeric CSV matrix; `#` starts a comment line.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in csv_reader(&text).records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let row = record_line(&record, i + 1);
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(
                    path,
                    row,
                    format!("expected {c} columns, found {}", record.len()),
                ));
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, row, format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, row, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: "empty matrix".into(),
    })?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleHeader {
    iteration: u64,
    global: PathBuf,
    layer_sizes: Option<Vec<usize>>,
    #[serde(rename = "worker")]
    workers: Vec<WorkerEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkerEntry {
    index: usize,
    path: PathBuf,
}

/// Loads a sample set from a TOML header of the form
///
/// ```toml
/// iteration = 100
/// global = "global.csv"
/// layer_sizes = [30, 20]      # optional
///
/// [[worker]]
/// index = 0
/// path = "worker0.csv"
/// ```
///
/// Relative paths are resolved against the header's directory.
pub fn load_samples(header_path: &Path) -> Result<GradientSampleSet> {
    let text = fs::read_to_string(header_path).map_err(|e| io_err(header_path, e))?;
    let header: SampleHeader = toml::from_str(&text).map_err(|e| Error::Format {
        path: header_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = header_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let global = load_matrix(&resolve(&header.global))?;
    let k = header.workers.len();
    let mut local: Vec<Option<DMatrix<f64>>> = vec![None; k];
    for w in &header.workers {
        if w.index >= k || local[w.index].is_some() {
            return Err(Error::Format {
                path: header_path.to_path_buf(),
                message: format!("worker indices must be 0..{k}, each listed once (got {})", w.index),
            });
        }
        local[w.index] = Some(load_matrix(&resolve(&w.path))?);
    }
    let local = local.into_iter().flatten().collect();
    GradientSampleSet::new(header.iteration, global, local, header.layer_sizes).map_err(|e| Error::Format {
        path: header_path.to_path_buf(),
        message: e.to_string(),
    })
}
