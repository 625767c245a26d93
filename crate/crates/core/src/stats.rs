//! Distribution fits for cut-edge samples: a normal tail probability and
//! one-dimensional Gaussian mixtures chosen by BIC.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::substream;

pub const EM_TOL: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 500;
pub const EM_RESTARTS: usize = 5;
/// Component variances never drop below this fraction of the squared sample range.
pub const VARIANCE_FLOOR_FRACTION: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }
}

fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub n: usize,
    pub mean: f64,
    /// Maximum-likelihood (divide by n) variance.
    pub variance: f64,
    /// All samples equal; the fit is a point mass.
    pub degenerate: bool,
}

impl NormalFit {
    /// `P(X >= x)` under the fit: the chance of a plan cutting at least as
    /// many edges as the reference.
    pub fn p_value(&self, x: f64) -> f64 {
        if self.degenerate {
            return if x <= self.mean { 1.0 } else { 0.0 };
        }
        1.0 - std_normal_cdf((x - self.mean) / self.variance.sqrt())
    }
}

pub fn fit_normal(samples: &[f64]) -> Result<NormalFit> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let first = samples[0];
    Ok(NormalFit {
        n: samples.len(),
        mean,
        variance,
        degenerate: samples.iter().all(|&x| x == first),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Total log-likelihood of the fitted samples, in nats. Zero for
    /// models built from published parameters.
    pub log_likelihood: f64,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
    /// Some component sits at the variance floor.
    #[serde(default)]
    pub floor_active: bool,
}

impl GmmModel {
    /// A model from given parameters, e.g. a published table.
    pub fn from_parameters(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let m = GmmModel {
            weights,
            means,
            variances,
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            floor_active: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::InvalidParameter(
                "mixture needs matching non-empty weights, means and variances".into(),
            ));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(
                "mixture weights must be non-negative and variances positive".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (0..self.k())
            .map(|j| self.weights[j] * normal_ln_pdf(x, self.means[j], self.variances[j]).exp())
            .sum()
    }

    /// Components sorted by mean, as `(weight, mean, variance)`.
    pub fn components_by_mean(&self) -> Vec<(f64, f64, f64)> {
        let mut c: Vec<_> = (0..self.k())
            .map(|j| (self.weights[j], self.means[j], self.variances[j]))
            .collect();
        c.sort_by(|a, b| a.1.total_cmp(&b.1));
        c
    }
}

/// `sum_k w_k * Phi((x - mu_k) / sigma_k)`.
pub fn gmm_cdf(model: &GmmModel, x: f64) -> f64 {
    (0..model.k())
        .map(|j| model.weights[j] * std_normal_cdf((x - model.means[j]) / model.variances[j].sqrt()))
        .sum()
}

/// Sample value at fraction `q` of the sorted data, linearly interpolated.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 1-D k-means from the given centers; returns the starting mixture.
fn kmeans_init(data: &[f64], mut centers: Vec<f64>, floor: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = centers.len();
    let n = data.len() as f64;
    let overall_mean = data.iter().sum::<f64>() / n;
    let overall_var = (data.iter().map(|x| (x - overall_mean).powi(2)).sum::<f64>() / n).max(floor);
    let mut labels = vec![0usize; data.len()];
    for _ in 0..100 {
        for (l, &x) in labels.iter_mut().zip(data) {
            *l = (0..k)
                .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
                .unwrap();
        }
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (&l, &x) in labels.iter().zip(data) {
            sum[l] += x;
            cnt[l] += 1;
        }
        let mut moved = false;
        for j in 0..k {
            if cnt[j] > 0 {
                let c = sum[j] / cnt[j] as f64;
                moved |= c != centers[j];
                centers[j] = c;
            }
        }
        if !moved {
            break;
        }
    }
    let mut weights = vec![0.0; k];
    let mut variances = vec![0.0; k];
    for (&l, &x) in labels.iter().zip(data) {
        weights[l] += 1.0;
        variances[l] += (x - centers[l]).powi(2);
    }
    for j in 0..k {
        if weights[j] > 0.0 {
            variances[j] = (variances[j] / weights[j]).max(floor);
            weights[j] /= n;
        } else {
            // empty seed cluster: a broad component with a token share
            variances[j] = overall_var;
            weights[j] = 1.0 / n;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (weights, centers, variances)
}

/// A fit together with its per-iteration log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRun {
    pub model: GmmModel,
    pub trace: Vec<f64>,
}

fn em(data: &[f64], init: (Vec<f64>, Vec<f64>, Vec<f64>), floor: f64) -> EmRun {
    let (mut weights, mut means, mut variances) = init;
    let k = weights.len();
    let n = data.len();
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    // E step: fills `resp` and returns the log-likelihood
    let e_step = |w: &[f64], m: &[f64], v: &[f64], resp: &mut [f64]| {
        let offset: Vec<f64> = (0..k).map(|j| w[j].ln() - 0.5 * (LN_2PI + v[j].ln())).collect();
        let scale: Vec<f64> = v.iter().map(|v| -0.5 / v).collect();
        let mut ll = 0.0;
        for (x, r) in data.iter().zip(resp.chunks_exact_mut(k)) {
            let mut top = f64::NEG_INFINITY;
            for j in 0..k {
                let d = x - m[j];
                r[j] = offset[j] + scale[j] * d * d;
                top = top.max(r[j]);
            }
            let mut total = 0.0;
            for t in r.iter_mut() {
                *t = (*t - top).exp();
                total += *t;
            }
            for t in r.iter_mut() {
                *t /= total;
            }
            ll += top + total.ln();
        }
        ll
    };

    let mut nk = vec![0.0; k];
    let mut ll = e_step(&weights, &means, &variances, &mut resp);
    trace.push(ll);
    while iterations < EM_MAX_ITER {
        iterations += 1;
        nk.iter_mut().for_each(|v| *v = 0.0);
        let mut sx = vec![0.0; k];
        for (x, r) in data.iter().zip(resp.chunks_exact(k)) {
            for j in 0..k {
                nk[j] += r[j];
                sx[j] += r[j] * x;
            }
        }
        for j in 0..k {
            if nk[j] > 0.0 {
                means[j] = sx[j] / nk[j];
            }
        }
        let mut sd = vec![0.0; k];
        for (x, r) in data.iter().zip(resp.chunks_exact(k)) {
            for j in 0..k {
                let d = x - means[j];
                sd[j] += r[j] * d * d;
            }
        }
        for j in 0..k {
            if nk[j] <= 0.0 {
                weights[j] = 0.0;
                continue;
            }
            weights[j] = nk[j] / n as f64;
            variances[j] = (sd[j] / nk[j]).max(floor);
        }
        let next = e_step(&weights, &means, &variances, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < EM_TOL {
            converged = true;
            break;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let floor_active = variances.iter().any(|&v| v <= floor);
    EmRun {
        model: GmmModel {
            weights,
            means,
            variances,
            log_likelihood: ll,
            iterations,
            converged,
            floor_active,
        },
        trace,
    }
}

/// Best of [`EM_RESTARTS`] EM runs by final log-likelihood; ties go to the
/// earlier restart. Restart 0 seeds k-means at evenly spread quantiles, the
/// others jitter each quantile within its slot.
pub fn fit_gmm_traced(samples: &[f64], k: usize, seed: u64) -> Result<EmRun> {
    if k == 0 {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    if samples.len() < 2 * k {
        return Err(Error::InsufficientSamples {
            needed: 2 * k,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[sorted.len() - 1] - sorted[0];
    let floor = if range > 0.0 {
        VARIANCE_FLOOR_FRACTION * range * range
    } else {
        // a point mass: any positive floor keeps densities finite
        VARIANCE_FLOOR_FRACTION
    };

    let mut best: Option<EmRun> = None;
    // restarts whose k-means start coincides give the same EM run
    let mut tried: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in 0..EM_RESTARTS {
        let mut rng = substream(seed, "gmm", (k * EM_RESTARTS + r) as u64);
        let centers: Vec<f64> = (0..k)
            .map(|j| {
                let u = if r == 0 { 0.5 } else { rng.random::<f64>() };
                quantile_sorted(&sorted, (j as f64 + u) / k as f64)
            })
            .collect();
        let init = kmeans_init(samples, centers, floor);
        if tried.contains(&init) {
            continue;
        }
        tried.push(init.clone());
        let run = em(samples, init, floor);
        if best
            .as_ref()
            .is_none_or(|b| run.model.log_likelihood > b.model.log_likelihood)
        {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn fit_gmm(samples: &[f64], k: usize, seed: u64) -> Result<GmmModel> {
    fit_gmm_traced(samples, k, seed).map(|r| r.model)
}

/// `(3K - 1) ln n - 2 ln L` for a 1-D mixture of `k` components.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    (3 * k - 1) as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicPoint {
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicSelection {
    pub best_k: usize,
    pub curve: Vec<BicPoint>,
    pub models: Vec<GmmModel>,
}

impl BicSelection {
    pub fn best_model(&self) -> &GmmModel {
        &self.models[self.best_k - 1]
    }
}

/// Fits K = 1..=k_max and keeps the K with the lowest BIC (smallest K on ties).
pub fn select_k_bic(samples: &[f64], k_max: usize, seed: u64) -> Result<BicSelection> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    if samples.len() < 2 * k_max {
        return Err(Error::InsufficientSamples {
            needed: 2 * k_max,
            got: samples.len(),
        });
    }
    let mut curve = Vec::with_capacity(k_max);
    let mut models = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let m = fit_gmm(samples, k, seed)?;
        curve.push(BicPoint {
            k,
            bic: bic(m.log_likelihood, k, samples.len()),
            log_likelihood: m.log_likelihood,
        });
        models.push(m);
    }
    let best_k = curve
        .iter()
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.k.cmp(&b.k)))
        .map(|p| p.k)
        .unwrap();
    Ok(BicSelection { best_k, curve, models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub trace: Vec<f64>,
    pub running_mean: Vec<f64>,
}

/// Recorded values in order, skipping rejections, with their running mean.
pub fn trace_and_running_average(samples: &[Option<usize>]) -> Result<TraceSeries> {
    let trace: Vec<f64> = samples.iter().flatten().map(|&c| c as f64).collect();
    if trace.is_empty() {
        return Err(Error::EmptyInput("history has no recorded cut-edge values"));
    }
    let mut sum = 0.0;
    let running_mean = trace
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            sum += x;
            sum / (i + 1) as f64
        })
        .collect();
    Ok(TraceSeries { trace, running_mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Count scaled so the histogram integrates to one.
    pub density: f64,
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect()
}
