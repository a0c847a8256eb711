//! Synthetic correlated-dataset generators and the three accuracy sweeps:
//! mean estimation on a weight survey with anticorrelated demands, frequency
//! estimation on education levels with demand dependence, and private linear
//! regression with independent log-uniform demands.
//!
//! Sweeps are deterministic: every trial draws from a substream derived from
//! the base seed, so reruns (sequential or parallel) are byte-identical.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dataset::{quantize, Dataset, Record};
use crate::mechanisms::{
    frequency_estimate, mean_estimate, regression, sample_mechanism, MechanismError, NoiseMode,
    RegressionOptions, SecondStage,
};
use crate::noise::StreamRng;
use crate::privacy::PrivacyMapping;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("target correlation {0} not reachable within the calibration budget (best {1:.3})")]
    UnreachableCorrelation(f64, f64),
    #[error("target correlation must lie in (-1, 0), got {0}")]
    InvalidTargetCorrelation(f64),
    #[error("contingency matrix must be 6x5 with entries summing to 1, got sum {0}")]
    MalformedMatrix(f64),
    #[error("regression base must be normalized to [-1, 1]; found value {0}")]
    UnnormalizedBase(f64),
    #[error("requested subsample of {0} from a dataset of {1}")]
    SizeTooLarge(u64, u64),
    #[error("no sizes or no methods requested")]
    EmptySweep,
    #[error("unknown method {0:?} for this sweep")]
    UnknownMethod(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// One (method, size) cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub size: u64,
    pub metric: String,
    pub value: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ExperimentError> {
        writeln!(w, "method,size,metric,value,trials,seed")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.method, r.size, r.metric, r.value, r.trials, r.seed
            )?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<(), ExperimentError> {
        let s = serde_json::to_string_pretty(&self.rows).expect("rows serialize");
        writeln!(w, "{s}")?;
        Ok(())
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const WEIGHT_MEAN: f64 = 75.0;
const WEIGHT_SD: f64 = 15.0;
const WEIGHT_CLIP: (f64, f64) = (30.0, 150.0);
const EPS_MAX: f64 = 3.0;
const CORR_TOL: f64 = 0.05;

fn weight_eps_samples(n: u64, rng: &mut StreamRng, slope: f64, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let body = Normal::new(WEIGHT_MEAN, WEIGHT_SD).expect("valid normal");
    let jitter = Normal::new(0.0, 1.0).expect("valid normal");
    let mut ws = Vec::with_capacity(n as usize);
    let mut es = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let w = quantize(
            body.sample(rng).clamp(WEIGHT_CLIP.0, WEIGHT_CLIP.1),
            2,
        );
        let noise = if tau > 0.0 { tau * jitter.sample(rng) } else { 0.0 };
        let e = (EPS_MAX * logistic(-(w - WEIGHT_MEAN) / slope) + noise).clamp(0.0, EPS_MAX);
        ws.push(w);
        es.push(e);
    }
    (ws, es)
}

/// Body-weight survey with anticorrelated privacy demand: heavier
/// respondents demand more privacy (smaller epsilon). The demand curve's
/// slope and an additive jitter are auto-tuned so the sample Pearson
/// correlation hits `target_corr` within 0.05. `independent` severs the
/// coupling instead (demands drawn from the same marginal recipe but against
/// an unrelated weight draw).
pub fn gen_weight_eps(
    n: u64,
    seed: u64,
    target_corr: f64,
    independent: bool,
) -> Result<Dataset, ExperimentError> {
    if independent {
        let mut rng = StreamRng::new(seed);
        let (ws, _) = weight_eps_samples(n, &mut rng, 25.0, 0.3);
        let (_, es) = weight_eps_samples(n, &mut rng, 25.0, 0.3);
        return Ok(Dataset::from_records(
            ws.into_iter().zip(es).map(|(w, e)| Record::scalar(w, e)),
        )?);
    }
    if !(-1.0 < target_corr && target_corr < 0.0) {
        return Err(ExperimentError::InvalidTargetCorrelation(target_corr));
    }
    // Steeper slopes flatten the curve and weaken the correlation; pick the
    // best noiseless slope, then bisect on jitter to soften it further if
    // the target is weaker than the noiseless curve delivers.
    let mut best: Option<(f64, f64, f64)> = None; // (|gap|, slope, tau)
    for slope in [5.0, 10.0, 15.0, 25.0, 50.0] {
        let mut rng = StreamRng::new(seed);
        let (ws, es) = weight_eps_samples(n, &mut rng, slope, 0.0);
        let c = pearson(&ws, &es);
        let gap = (c - target_corr).abs();
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, slope, 0.0));
        }
    }
    let (gap, slope, _) = best.expect("candidates tried");
    let mut chosen_tau = 0.0;
    let mut chosen_gap = gap;
    if chosen_gap > CORR_TOL {
        // Noiseless curve too strong: jitter weakens it monotonically.
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..20 {
            let tau = (lo + hi) / 2.0;
            let mut rng = StreamRng::new(seed);
            let (ws, es) = weight_eps_samples(n, &mut rng, slope, tau);
            let c = pearson(&ws, &es);
            let gap = (c - target_corr).abs();
            if gap < chosen_gap {
                chosen_gap = gap;
                chosen_tau = tau;
            }
            if c < target_corr {
                // Still too negative: add jitter.
                lo = tau;
            } else {
                hi = tau;
            }
        }
    }
    if chosen_gap > CORR_TOL && n >= 2000 {
        let mut rng = StreamRng::new(seed);
        let (ws, es) = weight_eps_samples(n, &mut rng, slope, chosen_tau);
        return Err(ExperimentError::UnreachableCorrelation(
            target_corr,
            pearson(&ws, &es),
        ));
    }
    let mut rng = StreamRng::new(seed);
    let (ws, es) = weight_eps_samples(n, &mut rng, slope, chosen_tau);
    Ok(Dataset::from_records(
        ws.into_iter().zip(es).map(|(w, e)| Record::scalar(w, e)),
    )?)
}

pub const EDUCATION_LEVELS: usize = 6;
pub const EDUCATION_EPS: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 5.0];

/// Default joint distribution over (education level, demand level):
/// higher education shifts mass toward larger epsilon (less privacy
/// demanded), strongly enough that independence is rejected decisively at
/// three thousand samples.
pub fn default_education_matrix() -> [[f64; 5]; EDUCATION_LEVELS] {
    // Row = education level 1..6, column = demand in EDUCATION_EPS order.
    let rows = [
        [0.60, 0.25, 0.10, 0.04, 0.01],
        [0.40, 0.30, 0.18, 0.08, 0.04],
        [0.22, 0.30, 0.25, 0.15, 0.08],
        [0.10, 0.22, 0.30, 0.24, 0.14],
        [0.05, 0.13, 0.25, 0.32, 0.25],
        [0.02, 0.08, 0.18, 0.32, 0.40],
    ];
    let mut m = rows;
    for row in &mut m {
        for x in row.iter_mut() {
            *x /= EDUCATION_LEVELS as f64;
        }
    }
    m
}

/// Uniform product matrix: education independent of demand.
pub fn independent_education_matrix() -> [[f64; 5]; EDUCATION_LEVELS] {
    [[1.0 / (EDUCATION_LEVELS as f64 * 5.0); 5]; EDUCATION_LEVELS]
}

/// Education level (1..6) with coupled privacy demand, sampled i.i.d. from
/// the given joint probability matrix.
pub fn gen_education_eps(
    n: u64,
    seed: u64,
    matrix: &[[f64; 5]; EDUCATION_LEVELS],
) -> Result<Dataset, ExperimentError> {
    let total: f64 = matrix.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 || matrix.iter().flatten().any(|&p| p < 0.0) {
        return Err(ExperimentError::MalformedMatrix(total));
    }
    let mut rng = StreamRng::new(seed);
    let mut records = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut u = rng.uniform_open();
        let mut picked = (EDUCATION_LEVELS, EDUCATION_EPS.len());
        'outer: for (i, row) in matrix.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                u -= p;
                if u <= 0.0 {
                    picked = (i, j);
                    break 'outer;
                }
            }
        }
        let (i, j) = if picked.0 == EDUCATION_LEVELS {
            (EDUCATION_LEVELS - 1, EDUCATION_EPS.len() - 1)
        } else {
            picked
        };
        records.push(Record::categorical(i as u32 + 1, EDUCATION_EPS[j]));
    }
    Ok(Dataset::from_records(records)?)
}

/// Pearson chi-squared independence statistic and p-value for an education
/// dataset's (level, demand) contingency table, 20 degrees of freedom.
pub fn education_chi_squared(d: &Dataset) -> (f64, f64) {
    let mut table = [[0.0f64; 5]; EDUCATION_LEVELS];
    let mut n = 0.0;
    for (r, c) in d.iter() {
        let level = r.value.as_categorical().expect("categorical dataset") as usize - 1;
        let j = EDUCATION_EPS
            .iter()
            .position(|e| (*e - r.epsilon.value()).abs() < 1e-12)
            .expect("demand from the fixed grid");
        table[level][j] += c as f64;
        n += c as f64;
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..5).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expect = row_sums[i] * col_sums[j] / n;
            if expect > 0.0 {
                stat += (obs - expect) * (obs - expect) / expect;
            }
        }
    }
    let df = ((EDUCATION_LEVELS - 1) * 4) as f64;
    let p = 1.0 - ChiSquared::new(df).expect("positive df").cdf(stat);
    (stat, p)
}

/// Attaches independent demands eps = e^U, U ~ Uniform(-5, 2), to an
/// already-normalized regression base (every covariate and target within
/// [-1, 1]).
pub fn gen_regression_eps(
    base: &[(Vec<f64>, f64)],
    seed: u64,
) -> Result<Dataset, ExperimentError> {
    for (x, y) in base {
        for v in x.iter().chain(std::iter::once(y)) {
            if !(-1.0..=1.0).contains(v) {
                return Err(ExperimentError::UnnormalizedBase(*v));
            }
        }
    }
    let mut rng = StreamRng::new(seed);
    Ok(Dataset::from_records(base.iter().map(|(x, y)| {
        let u = -5.0 + 7.0 * rng.uniform_open();
        Record::regression(x.clone(), *y, u.exp())
    }))?)
}

/// Min-max rescaling of raw regression rows into [-1, 1] per column.
pub fn normalize_regression(raw: &[(Vec<f64>, f64)]) -> Vec<(Vec<f64>, f64)> {
    if raw.is_empty() {
        return Vec::new();
    }
    let dim = raw[0].0.len();
    let mut lo = vec![f64::INFINITY; dim + 1];
    let mut hi = vec![f64::NEG_INFINITY; dim + 1];
    for (x, y) in raw {
        for (j, v) in x.iter().chain(std::iter::once(y)).enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let scale = |v: f64, j: usize| {
        if hi[j] > lo[j] {
            2.0 * (v - lo[j]) / (hi[j] - lo[j]) - 1.0
        } else {
            0.0
        }
    };
    raw.iter()
        .map(|(x, y)| {
            (
                x.iter().enumerate().map(|(j, v)| scale(*v, j)).collect(),
                scale(*y, dim),
            )
        })
        .collect()
}

/// Synthetic stand-in for a housing-style regression table: a fixed linear
/// model plus Gaussian noise, then min-max rescaled to [-1, 1].
pub fn synthetic_regression_base(n: u64, dim: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = StreamRng::new(seed);
    let theta: Vec<f64> = (0..dim)
        .map(|j| if j % 2 == 0 { 0.8 } else { -0.5 } / (1.0 + j as f64 * 0.3))
        .collect();
    let noise = Normal::new(0.0, 0.2).expect("valid normal");
    let raw: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| 2.0 * rng.uniform_open() - 1.0).collect();
            let y: f64 =
                x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng);
            (x, y)
        })
        .collect();
    normalize_regression(&raw)
}

/// Draws `size` units without replacement, deterministically from the rng.
fn subsample(d: &Dataset, size: u64, rng: &mut StreamRng) -> Result<Dataset, ExperimentError> {
    if size > d.size() {
        return Err(ExperimentError::SizeTooLarge(size, d.size()));
    }
    let mut units = d.units();
    // Partial Fisher-Yates: the first `size` slots are the sample.
    let n = units.len();
    for i in 0..(size as usize) {
        let j = i + (rng.uniform_open() * (n - i) as f64) as usize % (n - i);
        units.swap(i, j);
    }
    units.truncate(size as usize);
    Ok(Dataset::from_records(units)?)
}

fn true_mean(d: &Dataset) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for (r, c) in d.iter() {
        sum += r.value.as_scalar().expect("scalar dataset") * c as f64;
        n += c as f64;
    }
    sum / n
}

const MEAN_BOUNDS: (f64, f64) = (0.0, 150.0);
const DEN_FLOOR: f64 = 1.0;

fn mean_method(
    name: &str,
    d: &Dataset,
    rng: &mut StreamRng,
) -> Result<f64, ExperimentError> {
    let run_lq = |alpha: PrivacyMapping, rng: &mut StreamRng| {
        let half = alpha.halved();
        mean_estimate(
            d,
            MEAN_BOUNDS.0,
            MEAN_BOUNDS.1,
            &half,
            &half,
            DEN_FLOOR,
            NoiseMode::Noisy,
            rng,
        )
        .map(|rep| rep.output.scalar())
    };
    let run_sm = |t: f64, rng: &mut StreamRng| {
        let stage = SecondStage::Mean {
            lo: MEAN_BOUNDS.0,
            hi: MEAN_BOUNDS.1,
            floor: DEN_FLOOR,
        };
        sample_mechanism(d, &PrivacyMapping::Epsilon, t, &stage, NoiseMode::Noisy, rng)
            .map(|rep| rep.output.scalar())
    };
    let out = match name {
        "lq-eps-half" => run_lq(PrivacyMapping::Epsilon, rng)?,
        "lq-one-minus-exp-half" => run_lq(PrivacyMapping::OneMinusExp, rng)?,
        "lq-ratio-half" => run_lq(PrivacyMapping::Ratio, rng)?,
        "sm-t2" => run_sm(2.0, rng)?,
        "sm-t0.5" => run_sm(0.5, rng)?,
        other => return Err(ExperimentError::UnknownMethod(other.to_string())),
    };
    Ok(out)
}

pub const MEAN_METHODS: [&str; 5] = [
    "lq-eps-half",
    "lq-one-minus-exp-half",
    "lq-ratio-half",
    "sm-t2",
    "sm-t0.5",
];

/// Mean-squared error of each method against the subsample's true mean,
/// per sample size.
pub fn mean_sweep(
    d: &Dataset,
    sizes: &[u64],
    trials: u64,
    methods: &[String],
    seed: u64,
) -> Result<SweepResult, ExperimentError> {
    if sizes.is_empty() || methods.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    let base = StreamRng::new(seed);
    let mut rows = Vec::new();
    for (si, &size) in sizes.iter().enumerate() {
        for (mi, method) in methods.iter().enumerate() {
            let mut sse = 0.0;
            for trial in 0..trials {
                let stream = ((si * methods.len() + mi) as u64) * trials + trial;
                let mut rng = base.substream(stream + 1);
                let sub = subsample(d, size, &mut rng)?;
                let truth = true_mean(&sub);
                let est = mean_method(method, &sub, &mut rng)?;
                sse += (est - truth) * (est - truth);
            }
            rows.push(SweepRow {
                method: method.clone(),
                size,
                metric: "mse".to_string(),
                value: sse / trials as f64,
                trials,
                seed,
            });
        }
    }
    Ok(SweepResult { rows })
}

pub const FREQ_METHODS: [&str; 5] = [
    "lq-eps-half",
    "lq-one-minus-exp-half",
    "lq-ratio-half",
    "sm-t0.1",
    "sm-t1",
];

fn true_frequencies(d: &Dataset, k: u32) -> Vec<f64> {
    let mut counts = vec![0.0; k as usize];
    let mut n = 0.0;
    for (r, c) in d.iter() {
        counts[(r.value.as_categorical().expect("categorical dataset") - 1) as usize] +=
            c as f64;
        n += c as f64;
    }
    counts.iter().map(|c| c / n).collect()
}

fn freq_method(
    name: &str,
    d: &Dataset,
    k: u32,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, ExperimentError> {
    let run_lq = |alpha: PrivacyMapping, rng: &mut StreamRng| {
        let half = alpha.halved();
        frequency_estimate(d, k, &half, &half, DEN_FLOOR, NoiseMode::Noisy, rng)
            .map(|rep| rep.output.vector().to_vec())
    };
    let run_sm = |t: f64, rng: &mut StreamRng| -> Result<Vec<f64>, MechanismError> {
        let stage = SecondStage::Histogram { bins: k };
        let rep = sample_mechanism(d, &PrivacyMapping::Epsilon, t, &stage, NoiseMode::Noisy, rng)?;
        let counts = rep.output.vector();
        let total: f64 = counts.iter().sum::<f64>();
        let den = total.max(DEN_FLOOR);
        Ok(counts.iter().map(|c| c / den).collect())
    };
    let out = match name {
        "lq-eps-half" => run_lq(PrivacyMapping::Epsilon, rng)?,
        "lq-one-minus-exp-half" => run_lq(PrivacyMapping::OneMinusExp, rng)?,
        "lq-ratio-half" => run_lq(PrivacyMapping::Ratio, rng)?,
        "sm-t0.1" => run_sm(0.1, rng)?,
        "sm-t1" => run_sm(1.0, rng)?,
        other => return Err(ExperimentError::UnknownMethod(other.to_string())),
    };
    Ok(out)
}

/// Mean l-infinity error between estimated and true relative frequencies,
/// per sample size.
pub fn freq_sweep(
    d: &Dataset,
    k: u32,
    sizes: &[u64],
    trials: u64,
    methods: &[String],
    seed: u64,
) -> Result<SweepResult, ExperimentError> {
    if sizes.is_empty() || methods.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    let base = StreamRng::new(seed);
    let mut rows = Vec::new();
    for (si, &size) in sizes.iter().enumerate() {
        for (mi, method) in methods.iter().enumerate() {
            let mut total = 0.0;
            for trial in 0..trials {
                let stream = ((si * methods.len() + mi) as u64) * trials + trial;
                let mut rng = base.substream(stream + 1);
                let sub = subsample(d, size, &mut rng)?;
                let truth = true_frequencies(&sub, k);
                let est = freq_method(method, &sub, k, &mut rng)?;
                let linf = est
                    .iter()
                    .zip(&truth)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                total += linf;
            }
            rows.push(SweepRow {
                method: method.clone(),
                size,
                metric: "mean-linf".to_string(),
                value: total / trials as f64,
                trials,
                seed,
            });
        }
    }
    Ok(SweepResult { rows })
}

pub const REGRESSION_METHODS: [&str; 6] = [
    "reg-eps",
    "reg-one-minus-exp",
    "reg-ratio",
    "sm-t1",
    "sm-subsampled-ols",
    "ols",
];

fn test_residual(theta: &[f64], test: &[(Vec<f64>, f64)]) -> f64 {
    let mut sse = 0.0;
    for (x, y) in test {
        let pred: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        sse += (pred - y) * (pred - y);
    }
    sse / test.len() as f64
}

fn ols_theta(d: &Dataset, dim: usize) -> Result<Vec<f64>, ExperimentError> {
    let mut throwaway = StreamRng::new(0);
    let out = regression(
        d,
        &PrivacyMapping::Constant(1.0),
        &RegressionOptions {
            dim: Some(dim),
            ..RegressionOptions::default()
        },
        NoiseMode::Suppressed,
        &mut throwaway,
    )?;
    Ok(out.theta)
}

fn regression_method(
    name: &str,
    d: &Dataset,
    dim: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, ExperimentError> {
    let opts = RegressionOptions {
        dim: Some(dim),
        ..RegressionOptions::default()
    };
    let run = |alpha: PrivacyMapping, rng: &mut StreamRng| {
        regression(d, &alpha, &opts, NoiseMode::Noisy, rng).map(|o| o.theta)
    };
    let out = match name {
        "reg-eps" => run(PrivacyMapping::Epsilon, rng)?,
        "reg-one-minus-exp" => run(PrivacyMapping::OneMinusExp, rng)?,
        "reg-ratio" => run(PrivacyMapping::Ratio, rng)?,
        "sm-t1" => {
            let stage = SecondStage::Regression { dim, ridge: 0.0 };
            let rep =
                sample_mechanism(d, &PrivacyMapping::Epsilon, 1.0, &stage, NoiseMode::Noisy, rng)?;
            rep.output.vector().to_vec()
        }
        "sm-subsampled-ols" => {
            // Non-private least squares on the privacy-respecting
            // subsample: isolates the accuracy cost of subsampling itself.
            let sub = crate::mechanisms::sample_subsample(d, &PrivacyMapping::Epsilon, 1.0, rng)?;
            if sub.is_empty() {
                vec![0.0; dim]
            } else {
                ols_theta(&sub, dim)?
            }
        }
        "ols" => ols_theta(d, dim)?,
        other => return Err(ExperimentError::UnknownMethod(other.to_string())),
    };
    Ok(out)
}

/// Median mean-squared residual on a fixed test set, per training size.
pub fn regression_sweep(
    train: &Dataset,
    test: &[(Vec<f64>, f64)],
    dim: usize,
    sizes: &[u64],
    trials: u64,
    methods: &[String],
    seed: u64,
) -> Result<SweepResult, ExperimentError> {
    if sizes.is_empty() || methods.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    let base = StreamRng::new(seed);
    let mut rows = Vec::new();
    for (si, &size) in sizes.iter().enumerate() {
        for (mi, method) in methods.iter().enumerate() {
            let mut residuals = Vec::with_capacity(trials as usize);
            for trial in 0..trials {
                let stream = ((si * methods.len() + mi) as u64) * trials + trial;
                let mut rng = base.substream(stream + 1);
                let sub = subsample(train, size, &mut rng)?;
                let theta = regression_method(method, &sub, dim, &mut rng)?;
                residuals.push(test_residual(&theta, test));
            }
            residuals.sort_by(f64::total_cmp);
            let median = if residuals.len() % 2 == 1 {
                residuals[residuals.len() / 2]
            } else {
                (residuals[residuals.len() / 2 - 1] + residuals[residuals.len() / 2]) / 2.0
            };
            rows.push(SweepRow {
                method: method.clone(),
                size,
                metric: "median-residual".to_string(),
                value: median,
                trials,
                seed,
            });
        }
    }
    Ok(SweepResult { rows })
}
