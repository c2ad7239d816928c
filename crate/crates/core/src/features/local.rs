//! Local pattern features: shingle extraction, GMM dictionary learning by
//! EM, and Fisher Vector encoding of amplitude/phase series.
//!
//! A shingle is a contiguous length-`l` window of a real series; an
//! instance of length `n` yields `n − l + 1` of them per series. Shingles
//! are modeled as draws from a diagonal-covariance Gaussian mixture; an
//! instance is encoded as the average of its shingles' gradient
//! statistics with respect to the mixture means and deviations, carrying
//! the closed-form 1/√w_k information normalization. Gradients with
//! respect to the component weights are not part of the encoding.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureTag, FeatureVector};
use crate::iq::PolarSeries;

/// Which series a dictionary was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesTag {
    Amplitude,
    Phase,
}

/// Training provenance stored with every dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub data_description: String,
}

/// Variance floor per dimension; prevents component collapse on constant
/// shingles (noiseless phases are piecewise constant).
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// EM stops when the mean log-likelihood improves by less than this.
pub const EM_TOLERANCE: f64 = 1e-6;
/// EM iteration cap.
pub const EM_MAX_ITERS: usize = 200;
/// k-means++ seeding subsample cap.
pub const INIT_SUBSAMPLE: usize = 100_000;

/// A K-component diagonal-covariance GMM over length-`l` shingles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmDictionary {
    pub k: usize,
    pub l: usize,
    pub weights: Vec<f64>,
    /// K rows of length l, flattened row-major.
    pub means: Vec<f64>,
    /// K rows of length l, flattened row-major.
    pub variances: Vec<f64>,
    pub series_tag: SeriesTag,
    pub provenance: Provenance,
}

impl GmmDictionary {
    fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.l..(k + 1) * self.l]
    }

    fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.l..(k + 1) * self.l]
    }

    /// Log density of component k at `x`, without the mixing weight.
    pub fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        let mu = self.mean(k);
        let var = self.variance(k);
        let mut acc = 0.0;
        for d in 0..self.l {
            let diff = x[d] - mu[d];
            acc += (2.0 * std::f64::consts::PI * var[d]).ln() + diff * diff / var[d];
        }
        -0.5 * acc
    }

    /// Mean log-likelihood of a shingle set under this model.
    pub fn mean_log_likelihood(&self, shingles: &[&[f64]]) -> f64 {
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let total: f64 = shingles
            .iter()
            .map(|x| {
                let logs: Vec<f64> =
                    (0..self.k).map(|k| log_w[k] + self.component_log_density(k, x)).collect();
                log_sum_exp(&logs)
            })
            .sum();
        total / shingles.len() as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).map_err(io_err)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(io_err).map_err(Error::Io)
    }
}

fn io_err(e: serde_json::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}

/// All `n − l + 1` overlapping windows of a series, in order.
pub fn extract_shingles(series: &[f64], l: usize) -> Result<Vec<&[f64]>> {
    if l == 0 {
        return Err(Error::ConfigError("shingle length must be >= 1".into()));
    }
    if series.len() < l {
        return Err(Error::SeriesTooShort { n: series.len(), l });
    }
    Ok(series.windows(l).collect())
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    // terms below ~36 nats under the max vanish at f64 precision
    let sum: f64 =
        logs.iter().filter(|&&v| v - max >= -36.0).map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Precomputed per-component coefficients for the weighted log density:
/// log w_k + log p_k(x) = c_k + Σ_d (a_kd x_d² + b_kd x_d), which keeps
/// the E-step and encoding loops free of transcendental calls.
struct LogDensityTable {
    k: usize,
    l: usize,
    /// constant term for each component
    constants: Vec<f64>,
    /// quadratic coefficients, dimension-major so the component loop is stride-1
    quad: Vec<f64>,
    /// linear coefficients, dimension-major
    lin: Vec<f64>,
}

impl LogDensityTable {
    fn new(dict: &GmmDictionary) -> Self {
        let (k, l) = (dict.k, dict.l);
        let mut constants = Vec::with_capacity(k);
        let mut quad = vec![0.0; l * k];
        let mut lin = vec![0.0; l * k];
        for c in 0..k {
            let mu = dict.mean(c);
            let var = dict.variance(c);
            let mut constant = dict.weights[c].ln();
            for d in 0..l {
                constant -= 0.5 * ((2.0 * std::f64::consts::PI * var[d]).ln() + mu[d] * mu[d] / var[d]);
                quad[d * k + c] = -0.5 / var[d];
                lin[d * k + c] = mu[d] / var[d];
            }
            constants.push(constant);
        }
        LogDensityTable { k, l, constants, quad, lin }
    }

    /// Fill `logs[c] = log w_c + log p_c(x)` for all components.
    #[inline]
    fn weighted_log_densities(&self, x: &[f64], logs: &mut [f64]) {
        logs.copy_from_slice(&self.constants);
        for d in 0..self.l {
            let xd = x[d];
            let quad = &self.quad[d * self.k..(d + 1) * self.k];
            let lin = &self.lin[d * self.k..(d + 1) * self.k];
            for c in 0..self.k {
                logs[c] += (quad[c] * xd + lin[c]) * xd;
            }
        }
    }
}

/// Soft assignment γ of a shingle to each component (Σγ = 1), computed
/// in log-space so far-away components underflow gracefully.
pub fn posterior(dict: &GmmDictionary, shingle: &[f64]) -> Result<Vec<f64>> {
    if shingle.len() != dict.l {
        return Err(Error::DimensionMismatch { expected: dict.l, got: shingle.len() });
    }
    let logs: Vec<f64> = (0..dict.k)
        .map(|k| dict.weights[k].ln() + dict.component_log_density(k, shingle))
        .collect();
    let lse = log_sum_exp(&logs);
    let mut gamma: Vec<f64> = logs.iter().map(|v| (v - lse).exp()).collect();
    let sum: f64 = gamma.iter().sum();
    for g in &mut gamma {
        *g /= sum;
    }
    Ok(gamma)
}

/// Fisher Vector gradient statistics of one shingle: the ∇μ blocks for
/// k = 1..K followed by the ∇σ blocks, each scaled by γ_k/√w_k.
pub fn encode_shingle(dict: &GmmDictionary, shingle: &[f64]) -> Result<Vec<f64>> {
    let gamma = posterior(dict, shingle)?;
    let (k, l) = (dict.k, dict.l);
    let mut out = vec![0.0; 2 * l * k];
    for c in 0..k {
        let coef = gamma[c] / dict.weights[c].sqrt();
        let mu = dict.mean(c);
        let var = dict.variance(c);
        for d in 0..l {
            let diff = shingle[d] - mu[d];
            let sigma = var[d].sqrt();
            out[c * l + d] = coef * diff / var[d];
            out[l * k + c * l + d] = coef * (diff * diff / (var[d] * sigma) - 1.0 / sigma);
        }
    }
    Ok(out)
}

/// Fisher Vector of a whole instance: per series, the mean encoding over
/// its shingles; amplitude block first, total length 4lK.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    pub values: Vec<f64>,
}

impl FisherVector {
    pub fn into_feature(self) -> FeatureVector {
        FeatureVector { tag: FeatureTag::Fv, values: self.values }
    }
}

/// Mean shingle encoding of one series, fused accumulation.
fn encode_series(dict: &GmmDictionary, series: &[f64]) -> Result<Vec<f64>> {
    let shingles = extract_shingles(series, dict.l)?;
    let (k, l) = (dict.k, dict.l);
    let table = LogDensityTable::new(dict);
    let inv_sqrt_w: Vec<f64> = dict.weights.iter().map(|w| w.sqrt().recip()).collect();
    let mut acc = vec![0.0; 2 * l * k];
    let mut logs = vec![0.0; k];
    for x in &shingles {
        table.weighted_log_densities(x, &mut logs);
        let lse = log_sum_exp(&logs);
        for c in 0..k {
            // below ~36 nats the posterior is under one ulp
            if logs[c] - lse < -36.0 {
                continue;
            }
            let gamma = (logs[c] - lse).exp();
            let coef = gamma * inv_sqrt_w[c];
            let mu = dict.mean(c);
            let var = dict.variance(c);
            for d in 0..l {
                let diff = x[d] - mu[d];
                let sigma = var[d].sqrt();
                acc[c * l + d] += coef * diff / var[d];
                acc[l * k + c * l + d] += coef * (diff * diff / (var[d] * sigma) - 1.0 / sigma);
            }
        }
    }
    let scale = 1.0 / shingles.len() as f64;
    for a in &mut acc {
        *a *= scale;
    }
    Ok(acc)
}

/// Encode an instance against an (amplitude, phase) dictionary pair.
///
/// `improved_normalization` applies signed square root followed by unit
/// L2 scaling to the concatenated vector; default pipelines leave it off.
pub fn encode_instance_with(
    dict_amp: &GmmDictionary,
    dict_phase: &GmmDictionary,
    polar: &PolarSeries,
    improved_normalization: bool,
) -> Result<FisherVector> {
    if dict_amp.l != dict_phase.l || dict_amp.k != dict_phase.k {
        return Err(Error::ConfigError(
            "amplitude and phase dictionaries must share l and K".into(),
        ));
    }
    let mut values = encode_series(dict_amp, &polar.amplitude)?;
    values.extend(encode_series(dict_phase, &polar.phase)?);
    if improved_normalization {
        for v in &mut values {
            *v = v.signum() * v.abs().sqrt();
        }
        let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
    }
    Ok(FisherVector { values })
}

/// Encode with plain averaging (no post-normalization).
pub fn encode_instance(
    dict_amp: &GmmDictionary,
    dict_phase: &GmmDictionary,
    polar: &PolarSeries,
) -> Result<FisherVector> {
    encode_instance_with(dict_amp, dict_phase, polar, false)
}

// ---------------------------------------------------------------------------
// EM training
// ---------------------------------------------------------------------------

/// Per-iteration E-step accumulators.
struct EStep {
    log_likelihood: f64,
    resp_sum: Vec<f64>,     // K
    weighted_x: Vec<f64>,   // K*l
    weighted_x2: Vec<f64>,  // K*l
}

fn e_step(dict: &GmmDictionary, shingles: &[&[f64]]) -> EStep {
    let (k, l) = (dict.k, dict.l);
    let table = LogDensityTable::new(dict);
    // Fixed-size chunks with an ordered sequential reduce keep the sums
    // deterministic under any rayon schedule.
    const CHUNK: usize = 8192;
    let partials: Vec<EStep> = shingles
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = EStep {
                log_likelihood: 0.0,
                resp_sum: vec![0.0; k],
                weighted_x: vec![0.0; k * l],
                weighted_x2: vec![0.0; k * l],
            };
            let mut logs = vec![0.0; k];
            for x in chunk {
                table.weighted_log_densities(x, &mut logs);
                let lse = log_sum_exp(&logs);
                acc.log_likelihood += lse;
                for c in 0..k {
                    if logs[c] - lse < -36.0 {
                        continue;
                    }
                    let gamma = (logs[c] - lse).exp();
                    acc.resp_sum[c] += gamma;
                    for d in 0..l {
                        acc.weighted_x[c * l + d] += gamma * x[d];
                        acc.weighted_x2[c * l + d] += gamma * x[d] * x[d];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = EStep {
        log_likelihood: 0.0,
        resp_sum: vec![0.0; k],
        weighted_x: vec![0.0; k * l],
        weighted_x2: vec![0.0; k * l],
    };
    for p in partials {
        total.log_likelihood += p.log_likelihood;
        for c in 0..k {
            total.resp_sum[c] += p.resp_sum[c];
        }
        for i in 0..k * l {
            total.weighted_x[i] += p.weighted_x[i];
            total.weighted_x2[i] += p.weighted_x2[i];
        }
    }
    total
}

/// k-means++ center selection on a deterministic subsample.
fn kmeanspp_centers(shingles: &[&[f64]], k: usize, l: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let stride = (shingles.len() / INIT_SUBSAMPLE).max(1);
    let sample: Vec<&[f64]> = shingles.iter().step_by(stride).cloned().collect();

    let mut centers: Vec<f64> = Vec::with_capacity(k * l);
    let first = sample[rng.gen_range(0..sample.len())];
    centers.extend_from_slice(first);
    let mut dist2: Vec<f64> = sample
        .iter()
        .map(|x| sq_dist(x, &centers[0..l]))
        .collect();
    for _ in 1..k {
        let total: f64 = dist2.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateData(format!(
                "fewer than {k} distinct shingles available for initialization"
            )));
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = sample.len() - 1;
        for (i, &d) in dist2.iter().enumerate() {
            target -= d;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        let start = centers.len();
        centers.extend_from_slice(sample[chosen]);
        for (i, x) in sample.iter().enumerate() {
            let d = sq_dist(x, &centers[start..start + l]);
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }
    Ok(centers)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Outcome of one EM fit, with the per-iteration log-likelihood trace.
pub struct TrainedDictionary {
    pub dictionary: GmmDictionary,
    pub log_likelihood_trace: Vec<f64>,
}

/// Fit a diagonal-covariance GMM to shingles by EM. Deterministic given
/// the seed; the log-likelihood trace is non-decreasing up to numerical
/// slack.
pub fn train_dictionary(
    shingles: &[&[f64]],
    k: usize,
    seed: u64,
    series_tag: SeriesTag,
    data_description: &str,
) -> Result<TrainedDictionary> {
    if k == 0 {
        return Err(Error::ConfigError("dictionary size K must be >= 1".into()));
    }
    let l = match shingles.first() {
        Some(s) => s.len(),
        None => return Err(Error::DegenerateData("no shingles to train on".into())),
    };
    if shingles.iter().any(|s| s.len() != l) {
        return Err(Error::ConfigError("shingles have mixed lengths".into()));
    }
    if shingles.len() < k {
        return Err(Error::DegenerateData(format!(
            "{} shingles cannot support {k} components",
            shingles.len()
        )));
    }

    let n = shingles.len() as f64;
    // Global per-dimension variance for the initial spread.
    let mut mean = vec![0.0; l];
    for x in shingles {
        for d in 0..l {
            mean[d] += x[d];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut global_var = vec![0.0; l];
    for x in shingles {
        for d in 0..l {
            let diff = x[d] - mean[d];
            global_var[d] += diff * diff;
        }
    }
    for v in &mut global_var {
        *v = (*v / n).max(VARIANCE_FLOOR);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeanspp_centers(shingles, k, l, &mut rng)?;
    let mut dict = GmmDictionary {
        k,
        l,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: global_var.repeat(k),
        series_tag,
        provenance: Provenance { seed, data_description: data_description.to_string() },
    };

    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let stats = e_step(&dict, shingles);
        let ll = stats.log_likelihood / n;
        trace.push(ll);

        // M-step
        for c in 0..k {
            let nk = stats.resp_sum[c];
            if nk > 0.0 {
                dict.weights[c] = nk / n;
                for d in 0..l {
                    let m = stats.weighted_x[c * l + d] / nk;
                    dict.means[c * l + d] = m;
                    dict.variances[c * l + d] =
                        (stats.weighted_x2[c * l + d] / nk - m * m).max(VARIANCE_FLOOR);
                }
            } else {
                // dead component: keep its parameters, floor its weight
                dict.weights[c] = 1e-10;
            }
        }
        let wsum: f64 = dict.weights.iter().sum();
        for w in &mut dict.weights {
            *w /= wsum;
        }

        if ll - prev_ll < EM_TOLERANCE && prev_ll.is_finite() {
            break;
        }
        prev_ll = ll;
    }

    Ok(TrainedDictionary { dictionary: dict, log_likelihood_trace: trace })
}

/// Collect shingles from both series of a set of polar instances and train
/// the (amplitude, phase) dictionary pair.
pub fn train_dictionary_pair(
    polars: &[PolarSeries],
    l: usize,
    k: usize,
    seed: u64,
    data_description: &str,
) -> Result<(GmmDictionary, GmmDictionary)> {
    let amp_series: Vec<&[f64]> = polars.iter().map(|p| p.amplitude.as_slice()).collect();
    let phase_series: Vec<&[f64]> = polars.iter().map(|p| p.phase.as_slice()).collect();
    let amp_shingles: Vec<&[f64]> = amp_series
        .iter()
        .map(|s| extract_shingles(s, l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let phase_shingles: Vec<&[f64]> = phase_series
        .iter()
        .map(|s| extract_shingles(s, l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let amp = train_dictionary(&amp_shingles, k, seed, SeriesTag::Amplitude, data_description)?;
    let phase =
        train_dictionary(&phase_shingles, k, seed ^ 0x9e37_79b9, SeriesTag::Phase, data_description)?;
    Ok((amp.dictionary, phase.dictionary))
}

/// Save an (amplitude, phase) dictionary pair into a directory.
pub fn save_dictionary_pair(dir: &Path, amp: &GmmDictionary, phase: &GmmDictionary) -> Result<()> {
    fs::create_dir_all(dir)?;
    amp.save(&dir.join("amplitude.json"))?;
    phase.save(&dir.join("phase.json"))?;
    Ok(())
}

/// Load an (amplitude, phase) dictionary pair from a directory.
pub fn load_dictionary_pair(dir: &Path) -> Result<(GmmDictionary, GmmDictionary)> {
    Ok((GmmDictionary::load(&dir.join("amplitude.json"))?, GmmDictionary::load(&dir.join("phase.json"))?))
}
