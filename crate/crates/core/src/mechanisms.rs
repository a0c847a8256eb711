//! The universal mechanisms: weighted linear queries, sum/count, mean,
//! frequency estimation, the subsample-then-run construction, and weighted
//! linear regression via perturbed normal equations.
//!
//! Every run is a pure function of (dataset, parameters, rng stream). Noise
//! can be suppressed for auditing, in which case the pre-noise internals are
//! exposed in the report; the default CLI paths never enable this.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::dataset::{DataValue, Dataset, Record};
use crate::noise::{laplace_sample, LaplaceScale, StreamRng};
use crate::privacy::{compose, PrivacyMapping};

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("record {0} has non-finite privacy weight; cap the mapping or drop the record")]
    NonFiniteWeight(String),
    #[error("query value {value} outside declared bounds [{lo}, {hi}]")]
    ValueOutOfBounds { value: f64, lo: f64, hi: f64 },
    #[error("record kind not accepted by this mechanism")]
    WrongKind,
    #[error("categorical label {label} outside 1..={k}")]
    LabelOutOfRange { label: u32, k: u32 },
    #[error("denominator floor must be positive, got {0}")]
    InvalidFloor(f64),
    #[error("threshold t must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("query bounds must satisfy lo <= hi, got [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("regression dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("regression dimension unknown: empty dataset and no declared dimension")]
    UnknownDimension,
    #[error("linear system unsolvable even with ridge fallback (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Whether additive noise is drawn. `Suppressed` is the audit mode: the
/// report exposes pre-noise internals and the output carries no noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Noisy,
    Suppressed,
}

impl NoiseMode {
    fn is_audit(self) -> bool {
        matches!(self, NoiseMode::Suppressed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Output {
    pub fn scalar(&self) -> f64 {
        match self {
            Output::Scalar(v) => *v,
            Output::Vector(_) => panic!("expected scalar output"),
        }
    }

    pub fn vector(&self) -> &[f64] {
        match self {
            Output::Scalar(_) => panic!("expected vector output"),
            Output::Vector(v) => v,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MechanismReport {
    pub output: Output,
    /// The mapping the run is certified against.
    pub spent: PrivacyMapping,
    /// Pre-noise statistic; present only when noise is suppressed.
    pub noiseless_part: Option<Output>,
    pub seed: u64,
}

/// A bounded query over data values. `func` returns `None` for value kinds
/// the query does not accept.
#[derive(Clone)]
pub struct QueryFunction {
    lo: f64,
    hi: f64,
    func: Arc<dyn Fn(&DataValue) -> Option<f64> + Send + Sync>,
}

impl QueryFunction {
    pub fn new(
        lo: f64,
        hi: f64,
        func: impl Fn(&DataValue) -> Option<f64> + Send + Sync + 'static,
    ) -> Result<Self, MechanismError> {
        if !(lo <= hi) {
            return Err(MechanismError::InvalidBounds { lo, hi });
        }
        Ok(QueryFunction {
            lo,
            hi,
            func: Arc::new(func),
        })
    }

    /// f(x) = x on scalar values bounded by [lo, hi].
    pub fn identity(lo: f64, hi: f64) -> Result<Self, MechanismError> {
        QueryFunction::new(lo, hi, |v| v.as_scalar())
    }

    /// f(x) = c on any scalar or categorical value.
    pub fn constant(c: f64) -> Self {
        QueryFunction::new(c, c, move |v| match v {
            DataValue::Regression { .. } => None,
            _ => Some(c),
        })
        .expect("degenerate bounds are valid")
    }

    /// Indicator of one categorical label.
    pub fn indicator(label: u32, k: u32) -> Result<Self, MechanismError> {
        QueryFunction::new(0.0, 1.0, move |v| {
            v.as_categorical().filter(|l| *l <= k).map(|l| {
                if l == label {
                    1.0
                } else {
                    0.0
                }
            })
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn eval(&self, v: &DataValue) -> Result<f64, MechanismError> {
        let fv = (self.func)(v).ok_or(MechanismError::WrongKind)?;
        if fv < self.lo || fv > self.hi {
            return Err(MechanismError::ValueOutOfBounds {
                value: fv,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(fv)
    }
}

impl std::fmt::Debug for QueryFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueryFunction")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish()
    }
}

fn finite_weight(alpha: &PrivacyMapping, r: &Record) -> Result<f64, MechanismError> {
    let w = alpha.weight(r);
    if !w.is_finite() {
        return Err(MechanismError::NonFiniteWeight(format!(
            "({}, {})",
            r.value, r.epsilon
        )));
    }
    Ok(w)
}

/// Pre-noise value of the weighted linear query.
fn linear_query_center(
    d: &Dataset,
    f: &QueryFunction,
    alpha: &PrivacyMapping,
) -> Result<f64, MechanismError> {
    let lo = f.lo();
    let mut acc = lo;
    for (r, c) in d.iter() {
        let w = finite_weight(alpha, r)?;
        let fv = f.eval(&r.value)?;
        acc += w * (fv - lo) * c as f64;
    }
    Ok(acc)
}

/// Weighted linear query: lo + sum alpha(x,eps) (f(x) - lo) h(x,eps) plus
/// Laplace(hi - lo) noise. Degenerate bounds (lo = hi) release the weighted
/// constant noiselessly.
pub fn linear_query(
    d: &Dataset,
    f: &QueryFunction,
    alpha: &PrivacyMapping,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<MechanismReport, MechanismError> {
    let center = if f.lo() == f.hi() {
        let mut acc = 0.0;
        for (r, c) in d.iter() {
            f.eval(&r.value)?;
            acc += finite_weight(alpha, r)? * c as f64;
        }
        acc * f.lo()
    } else {
        linear_query_center(d, f, alpha)?
    };
    let output = if mode.is_audit() || f.lo() == f.hi() {
        center
    } else {
        center + laplace_sample(rng, LaplaceScale::new(f.hi() - f.lo())?)
    };
    Ok(MechanismReport {
        output: Output::Scalar(output),
        spent: alpha.clone(),
        noiseless_part: mode.is_audit().then_some(Output::Scalar(center)),
        seed: rng.seed(),
    })
}

/// Sum estimation: the linear query with f(x) = x over [lo, hi].
pub fn sum_estimate(
    d: &Dataset,
    lo: f64,
    hi: f64,
    alpha: &PrivacyMapping,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<MechanismReport, MechanismError> {
    linear_query(d, &QueryFunction::identity(lo, hi)?, alpha, mode, rng)
}

/// Weighted size estimate: sum of alpha weights plus Laplace(1) noise.
pub fn count_estimate(
    d: &Dataset,
    alpha: &PrivacyMapping,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<MechanismReport, MechanismError> {
    let mut center = 0.0;
    for (r, c) in d.iter() {
        center += finite_weight(alpha, r)? * c as f64;
    }
    let output = if mode.is_audit() {
        center
    } else {
        center + laplace_sample(rng, LaplaceScale::new(1.0)?)
    };
    Ok(MechanismReport {
        output: Output::Scalar(output),
        spent: alpha.clone(),
        noiseless_part: mode.is_audit().then_some(Output::Scalar(center)),
        seed: rng.seed(),
    })
}

/// Pre-noise numerator and denominator of the ratio mean estimator.
pub(crate) fn mean_centers(
    d: &Dataset,
    lo: f64,
    hi: f64,
    a1: &PrivacyMapping,
    a2: &PrivacyMapping,
) -> Result<(f64, f64), MechanismError> {
    if !(lo < hi) {
        return Err(MechanismError::InvalidBounds { lo, hi });
    }
    let mut num = lo;
    let mut den = 0.0;
    for (r, c) in d.iter() {
        let x = r.value.as_scalar().ok_or(MechanismError::WrongKind)?;
        if x < lo || x > hi {
            return Err(MechanismError::ValueOutOfBounds { value: x, lo, hi });
        }
        num += finite_weight(a1, r)? * c as f64 * (x - lo);
        den += finite_weight(a2, r)? * c as f64;
    }
    Ok((num, den))
}

/// Ratio estimator for the mean: noisy weighted sum over noisy weighted
/// count, with the denominator floored (post-processing).
pub fn mean_estimate(
    d: &Dataset,
    lo: f64,
    hi: f64,
    a1: &PrivacyMapping,
    a2: &PrivacyMapping,
    floor: f64,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<MechanismReport, MechanismError> {
    if !(floor > 0.0) {
        return Err(MechanismError::InvalidFloor(floor));
    }
    let (num_c, den_c) = mean_centers(d, lo, hi, a1, a2)?;
    let (num, den) = if mode.is_audit() {
        (num_c, den_c)
    } else {
        (
            num_c + laplace_sample(rng, LaplaceScale::new(hi - lo)?),
            den_c + laplace_sample(rng, LaplaceScale::new(1.0)?),
        )
    };
    Ok(MechanismReport {
        output: Output::Scalar(num / den.max(floor)),
        spent: compose(a1.clone(), a2.clone()),
        noiseless_part: mode.is_audit().then_some(Output::Vector(vec![num_c, den_c])),
        seed: rng.seed(),
    })
}

/// Pre-noise per-bin weighted counts and weighted size.
pub(crate) fn frequency_centers(
    d: &Dataset,
    k: u32,
    a1: &PrivacyMapping,
    a2: &PrivacyMapping,
) -> Result<(Vec<f64>, f64), MechanismError> {
    let mut bins = vec![0.0; k as usize];
    let mut size = 0.0;
    for (r, c) in d.iter() {
        let label = r.value.as_categorical().ok_or(MechanismError::WrongKind)?;
        if label == 0 || label > k {
            return Err(MechanismError::LabelOutOfRange { label, k });
        }
        bins[(label - 1) as usize] += finite_weight(a1, r)? * c as f64;
        size += finite_weight(a2, r)? * c as f64;
    }
    Ok((bins, size))
}

/// Relative frequencies over k categories: per-bin weighted counts with
/// independent Laplace(1) noise, divided by a floored noisy size estimate.
pub fn frequency_estimate(
    d: &Dataset,
    k: u32,
    a1: &PrivacyMapping,
    a2: &PrivacyMapping,
    floor: f64,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<MechanismReport, MechanismError> {
    if !(floor > 0.0) {
        return Err(MechanismError::InvalidFloor(floor));
    }
    let (bin_c, size_c) = frequency_centers(d, k, a1, a2)?;
    let unit = LaplaceScale::new(1.0)?;
    let (bins, size) = if mode.is_audit() {
        (bin_c.clone(), size_c)
    } else {
        let noisy: Vec<f64> = bin_c
            .iter()
            .map(|c| c + laplace_sample(rng, unit))
            .collect();
        (noisy, size_c + laplace_sample(rng, unit))
    };
    let den = size.max(floor);
    let freqs: Vec<f64> = bins.iter().map(|n| n / den).collect();
    let mut internals = bin_c;
    internals.push(size_c);
    Ok(MechanismReport {
        output: Output::Vector(freqs),
        spent: compose(a1.clone(), a2.clone()),
        noiseless_part: mode.is_audit().then_some(Output::Vector(internals)),
        seed: rng.seed(),
    })
}

/// Keep probability of one record under the subsampling stage.
pub fn keep_probability(alpha: &PrivacyMapping, r: &Record, t: f64) -> f64 {
    let a = alpha.weight(r).min(t);
    ((a.exp() - 1.0) / (t.exp() - 1.0)).clamp(0.0, 1.0)
}

/// First stage of the subsample-then-run construction: each unit of count is
/// kept independently with probability (e^{min(alpha,t)} - 1) / (e^t - 1).
pub fn sample_subsample(
    d: &Dataset,
    alpha: &PrivacyMapping,
    t: f64,
    rng: &mut StreamRng,
) -> Result<Dataset, MechanismError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(MechanismError::InvalidThreshold(t));
    }
    let mut out = Vec::new();
    for (r, c) in d.iter() {
        let p = keep_probability(alpha, r, t);
        let kept = if p >= 1.0 {
            c as u64
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(c as u64, p)
                .expect("valid binomial parameters")
                .sample(rng)
        };
        if kept > 0 {
            out.push((r.clone(), kept as u32));
        }
    }
    Ok(Dataset::from_counts(out)?)
}

/// The homogeneous t-DP stage run on the subsample.
#[derive(Clone, Debug)]
pub enum SecondStage {
    /// Bounded sum with Laplace(max(|lo|,|hi|)/t) noise.
    Sum { lo: f64, hi: f64 },
    /// Size with Laplace(1/t) noise.
    Count,
    /// Ratio mean splitting t evenly between sum and count.
    Mean { lo: f64, hi: f64, floor: f64 },
    /// Per-bin counts with Laplace(1/t) noise each.
    Histogram { bins: u32 },
    /// Functional-mechanism regression with homogeneous weight 1 and
    /// Laplace((d^2+d)/t) per released entry.
    Regression { dim: usize, ridge: f64 },
}

impl SecondStage {
    fn run(
        &self,
        d: &Dataset,
        t: f64,
        mode: NoiseMode,
        rng: &mut StreamRng,
    ) -> Result<Output, MechanismError> {
        match self {
            SecondStage::Sum { lo, hi } => {
                let mut acc = 0.0;
                for (r, c) in d.iter() {
                    let x = r.value.as_scalar().ok_or(MechanismError::WrongKind)?;
                    if x < *lo || x > *hi {
                        return Err(MechanismError::ValueOutOfBounds {
                            value: x,
                            lo: *lo,
                            hi: *hi,
                        });
                    }
                    acc += x * c as f64;
                }
                let sens = lo.abs().max(hi.abs());
                if !mode.is_audit() && sens > 0.0 {
                    acc += laplace_sample(rng, LaplaceScale::new(sens / t)?);
                }
                Ok(Output::Scalar(acc))
            }
            SecondStage::Count => {
                let mut acc = d.size() as f64;
                if !mode.is_audit() {
                    acc += laplace_sample(rng, LaplaceScale::new(1.0 / t)?);
                }
                Ok(Output::Scalar(acc))
            }
            SecondStage::Mean { lo, hi, floor } => {
                if !(*floor > 0.0) {
                    return Err(MechanismError::InvalidFloor(*floor));
                }
                let half = t / 2.0;
                let sum = SecondStage::Sum { lo: *lo, hi: *hi }
                    .run(d, half, mode, rng)?
                    .scalar();
                let count = SecondStage::Count.run(d, half, mode, rng)?.scalar();
                Ok(Output::Scalar(sum / count.max(*floor)))
            }
            SecondStage::Histogram { bins } => {
                let k = *bins;
                let mut counts = vec![0.0; k as usize];
                for (r, c) in d.iter() {
                    let label = r.value.as_categorical().ok_or(MechanismError::WrongKind)?;
                    if label == 0 || label > k {
                        return Err(MechanismError::LabelOutOfRange { label, k });
                    }
                    counts[(label - 1) as usize] += c as f64;
                }
                if !mode.is_audit() {
                    let scale = LaplaceScale::new(1.0 / t)?;
                    for c in &mut counts {
                        *c += laplace_sample(rng, scale);
                    }
                }
                Ok(Output::Vector(counts))
            }
            SecondStage::Regression { dim, ridge } => {
                let opts = RegressionOptions {
                    ridge: *ridge,
                    dim: Some(*dim),
                    scale_divisor: t,
                    ..RegressionOptions::default()
                };
                let out = regression(d, &PrivacyMapping::Constant(1.0), &opts, mode, rng)?;
                Ok(Output::Vector(out.theta))
            }
        }
    }
}

/// Subsample-then-run: keep each record with the capped-weight probability,
/// then apply a homogeneous t-DP stage to the subsample. The run is
/// certified against min(alpha, t).
pub fn sample_mechanism(
    d: &Dataset,
    alpha: &PrivacyMapping,
    t: f64,
    stage: &SecondStage,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<MechanismReport, MechanismError> {
    let sub = sample_subsample(d, alpha, t, rng)?;
    let output = stage.run(&sub, t, mode, rng)?;
    Ok(MechanismReport {
        output,
        spent: PrivacyMapping::Min(Box::new(alpha.clone()), t),
        noiseless_part: None,
        seed: rng.seed(),
    })
}

#[derive(Clone, Debug)]
pub struct RegressionOptions {
    pub ridge: f64,
    /// Declared dimension; required when the dataset may be empty.
    pub dim: Option<usize>,
    /// Opt-in symmetrization of the perturbed Gram matrix. Off by default:
    /// the noise is sampled entrywise and the solved system is generally
    /// asymmetric.
    pub symmetrize: bool,
    /// Divides the per-entry Laplace scale (d^2+d); used by the t-DP stage.
    pub scale_divisor: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            ridge: 0.0,
            dim: None,
            symmetrize: false,
            scale_divisor: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegressionOutput {
    pub theta: Vec<f64>,
    /// Perturbed Gram matrix, exposed only in audit mode.
    pub gram: Option<DMatrix<f64>>,
    /// Perturbed moment vector, exposed only in audit mode.
    pub moment: Option<DVector<f64>>,
    pub condition: f64,
    pub ridge_fallback: bool,
    pub spent: PrivacyMapping,
    pub seed: u64,
}

pub(crate) struct RegressionMoments {
    pub gram: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub dim: usize,
}

/// Pre-noise weighted moments X^T W X and X^T W y.
pub(crate) fn regression_moments(
    d: &Dataset,
    alpha: &PrivacyMapping,
    declared_dim: Option<usize>,
) -> Result<RegressionMoments, MechanismError> {
    let dim = match declared_dim {
        Some(dim) => dim,
        None => match d.iter().next() {
            Some((
                Record {
                    value: DataValue::Regression { x, .. },
                    ..
                },
                _,
            )) => x.len(),
            Some(_) => return Err(MechanismError::WrongKind),
            None => return Err(MechanismError::UnknownDimension),
        },
    };
    if dim == 0 {
        return Err(MechanismError::UnknownDimension);
    }
    let mut gram = DMatrix::zeros(dim, dim);
    let mut moment = DVector::zeros(dim);
    for (r, c) in d.iter() {
        let (x, y) = match &r.value {
            DataValue::Regression { x, y } => (x, *y),
            _ => return Err(MechanismError::WrongKind),
        };
        if x.len() != dim {
            return Err(MechanismError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        for v in x.iter().chain(std::iter::once(&y)) {
            if !(-1.0..=1.0).contains(v) {
                return Err(MechanismError::ValueOutOfBounds {
                    value: *v,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        let w = finite_weight(alpha, r)? * c as f64;
        for i in 0..dim {
            for j in 0..dim {
                gram[(i, j)] += w * x[i] * x[j];
            }
            moment[i] += w * x[i] * y;
        }
    }
    Ok(RegressionMoments { gram, moment, dim })
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

const CONDITION_LIMIT: f64 = 1e12;
const RIDGE_FALLBACK: f64 = 1e-6;

fn solve_system(
    gram: &DMatrix<f64>,
    moment: &DVector<f64>,
    ridge: f64,
) -> (Option<DVector<f64>>, f64) {
    let dim = gram.nrows();
    let a = gram + DMatrix::identity(dim, dim) * ridge;
    let condition = condition_estimate(&a);
    let theta = a.lu().solve(moment);
    (theta, condition)
}

/// Weighted linear regression with entrywise Laplace-perturbed normal
/// equations: solve (X^T W X + N_A) theta = X^T W y + N_b with every noise
/// entry at scale d^2 + d. A ridge retry on an ill-conditioned perturbed
/// system is post-processing, so the spent mapping is alpha regardless.
pub fn regression(
    d: &Dataset,
    alpha: &PrivacyMapping,
    opts: &RegressionOptions,
    mode: NoiseMode,
    rng: &mut StreamRng,
) -> Result<RegressionOutput, MechanismError> {
    let RegressionMoments {
        mut gram,
        mut moment,
        dim,
    } = regression_moments(d, alpha, opts.dim)?;
    if !mode.is_audit() {
        let scale = LaplaceScale::new((dim * dim + dim) as f64 / opts.scale_divisor)?;
        for i in 0..dim {
            for j in 0..dim {
                gram[(i, j)] += laplace_sample(rng, scale);
            }
        }
        for i in 0..dim {
            moment[i] += laplace_sample(rng, scale);
        }
    }
    if opts.symmetrize {
        gram = (&gram + gram.transpose()) * 0.5;
    }

    let (mut theta, mut condition) = solve_system(&gram, &moment, opts.ridge);
    let mut ridge_fallback = false;
    if theta.is_none() || condition > CONDITION_LIMIT {
        let retry = opts.ridge.max(RIDGE_FALLBACK);
        let (t2, c2) = solve_system(&gram, &moment, retry);
        theta = t2;
        condition = c2;
        ridge_fallback = true;
    }
    let theta = theta.ok_or(MechanismError::Singular { condition })?;

    Ok(RegressionOutput {
        theta: theta.iter().copied().collect(),
        gram: mode.is_audit().then_some(gram),
        moment: mode.is_audit().then(|| moment.clone()),
        condition,
        ridge_fallback,
        spent: alpha.clone(),
        seed: rng.seed(),
    })
}
