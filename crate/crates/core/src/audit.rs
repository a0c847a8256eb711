//! Verifies that shipped mechanisms honor their claimed privacy bounds.
//!
//! Every release we ship is, pre-division, a vector of independent shifted
//! Laplace coordinates, so the log density ratio between two datasets is
//! available in closed form and can be maximized over a probe grid instead
//! of estimated. Divided or solved outputs (the mean's ratio, the regression
//! solve) are covered by the post-processing argument: auditing the
//! numerator/denominator or matrix/vector entries suffices.

use thiserror::Error;

use crate::dataset::{Dataset, Record};
use crate::mechanisms::{
    frequency_centers, keep_probability, linear_query, mean_centers, regression_moments,
    MechanismError, NoiseMode, QueryFunction, SecondStage,
};
use crate::noise::{laplace_cdf, laplace_log_density, LaplaceScale, StreamRng};
use crate::privacy::{compose, weighted_distance, PrivacyMapping};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("{0} has no analytic output density; audit its pre-division release instead (the division is post-processing)")]
    NoAnalyticDensity(String),
    #[error("releases have different coordinate counts: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("dataset of size {0} too large for subset enumeration (limit {1})")]
    TooLarge(u64, u64),
    #[error("second stage has no scalar analytic density for brute-force audit")]
    UnsupportedStage,
    #[error("prior odds must be positive, got {0}")]
    InvalidPriorOdds(f64),
    #[error("demo needs at least one record")]
    EmptyDemo,
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Outcome of one audit: the claimed bound, the observed worst log density
/// ratio over the probes, and whether the claim held.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AuditReport {
    pub mechanism: String,
    pub claimed: f64,
    pub observed: f64,
    pub margin: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub probe_description: String,
}

impl AuditReport {
    fn new(mechanism: String, claimed: f64, observed: f64, tolerance: f64, probes: String) -> Self {
        AuditReport {
            mechanism,
            claimed,
            observed,
            margin: claimed - observed,
            pass: observed <= claimed + tolerance,
            tolerance,
            probe_description: probes,
        }
    }
}

/// A release whose output is a vector of independent Laplace coordinates.
#[derive(Clone, Debug)]
pub struct LaplaceRelease {
    pub centers: Vec<f64>,
    pub scales: Vec<LaplaceScale>,
}

impl LaplaceRelease {
    pub fn log_density(&self, point: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(self.scales.iter())
            .zip(point.iter())
            .map(|((c, s), x)| laplace_log_density(x - c, *s))
            .sum()
    }
}

/// The pre-division releases that admit exact density-ratio audits.
#[derive(Clone, Debug)]
pub enum AuditTarget {
    LinearQuery {
        query: QueryFunction,
        alpha: PrivacyMapping,
    },
    Count {
        alpha: PrivacyMapping,
    },
    /// Numerator and denominator of the mean, before division.
    MeanParts {
        lo: f64,
        hi: f64,
        alpha1: PrivacyMapping,
        alpha2: PrivacyMapping,
    },
    /// Per-bin counts plus the size estimate, before division.
    FrequencyVector {
        k: u32,
        alpha1: PrivacyMapping,
        alpha2: PrivacyMapping,
    },
    /// All entries of the perturbed normal equations, before solving.
    RegressionEntries {
        alpha: PrivacyMapping,
        dim: usize,
    },
}

impl AuditTarget {
    /// Maps user-facing mechanism names to targets; names of post-processed
    /// outputs are rejected with a pointer to the right pre-division audit.
    pub fn check_name(name: &str) -> Result<(), AuditError> {
        match name {
            "linear-query" | "sum" | "count" | "mean-parts" | "frequency-vector"
            | "regression-entries" => Ok(()),
            "mean" | "freq" | "regress" => Err(AuditError::NoAnalyticDensity(format!(
                "the divided/solved output of {name:?}"
            ))),
            other => Err(AuditError::NoAnalyticDensity(format!(
                "unknown mechanism {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AuditTarget::LinearQuery { .. } => "linear-query",
            AuditTarget::Count { .. } => "count",
            AuditTarget::MeanParts { .. } => "mean-parts",
            AuditTarget::FrequencyVector { .. } => "frequency-vector",
            AuditTarget::RegressionEntries { .. } => "regression-entries",
        }
    }

    /// The mapping whose weighted distance bounds this release's ratio.
    pub fn total_alpha(&self) -> PrivacyMapping {
        match self {
            AuditTarget::LinearQuery { alpha, .. }
            | AuditTarget::Count { alpha }
            | AuditTarget::RegressionEntries { alpha, .. } => alpha.clone(),
            AuditTarget::MeanParts { alpha1, alpha2, .. }
            | AuditTarget::FrequencyVector { alpha1, alpha2, .. } => {
                compose(alpha1.clone(), alpha2.clone())
            }
        }
    }

    pub fn release(&self, d: &Dataset) -> Result<LaplaceRelease, AuditError> {
        let mut throwaway = StreamRng::new(0);
        match self {
            AuditTarget::LinearQuery { query, alpha } => {
                let rep = linear_query(d, query, alpha, NoiseMode::Suppressed, &mut throwaway)?;
                Ok(LaplaceRelease {
                    centers: vec![rep.output.scalar()],
                    scales: vec![LaplaceScale::new(query.hi() - query.lo())?],
                })
            }
            AuditTarget::Count { alpha } => {
                let rep = crate::mechanisms::count_estimate(
                    d,
                    alpha,
                    NoiseMode::Suppressed,
                    &mut throwaway,
                )?;
                Ok(LaplaceRelease {
                    centers: vec![rep.output.scalar()],
                    scales: vec![LaplaceScale::new(1.0)?],
                })
            }
            AuditTarget::MeanParts {
                lo,
                hi,
                alpha1,
                alpha2,
            } => {
                let (num, den) = mean_centers(d, *lo, *hi, alpha1, alpha2)?;
                Ok(LaplaceRelease {
                    centers: vec![num, den],
                    scales: vec![LaplaceScale::new(hi - lo)?, LaplaceScale::new(1.0)?],
                })
            }
            AuditTarget::FrequencyVector { k, alpha1, alpha2 } => {
                let (mut bins, size) = frequency_centers(d, *k, alpha1, alpha2)?;
                bins.push(size);
                let unit = LaplaceScale::new(1.0)?;
                let n = bins.len();
                Ok(LaplaceRelease {
                    centers: bins,
                    scales: vec![unit; n],
                })
            }
            AuditTarget::RegressionEntries { alpha, dim } => {
                let m = regression_moments(d, alpha, Some(*dim))?;
                let mut centers: Vec<f64> = m.gram.iter().copied().collect();
                centers.extend(m.moment.iter().copied());
                let scale = LaplaceScale::new((dim * dim + dim) as f64)?;
                let n = centers.len();
                Ok(LaplaceRelease {
                    centers,
                    scales: vec![scale; n],
                })
            }
        }
    }
}

const GRID_POINTS: usize = 64;
const GRID_SPAN_SCALES: f64 = 5.0;

/// Worst |log density ratio| of one Laplace coordinate over a grid spanning
/// both centers plus/minus five noise scales, both centers themselves, and
/// extra random probes. The ratio is piecewise linear in the point and
/// saturates beyond the centers, so the grid extremes reach the true max.
fn coordinate_observed(
    c1: f64,
    c2: f64,
    scale: LaplaceScale,
    probes: usize,
    rng: &mut StreamRng,
) -> f64 {
    let lo = c1.min(c2) - GRID_SPAN_SCALES * scale.lambda();
    let hi = c1.max(c2) + GRID_SPAN_SCALES * scale.lambda();
    let mut worst: f64 = 0.0;
    let mut check = |x: f64| {
        let delta =
            (laplace_log_density(x - c1, scale) - laplace_log_density(x - c2, scale)).abs();
        worst = worst.max(delta);
    };
    for i in 0..GRID_POINTS {
        check(lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64);
    }
    check(c1);
    check(c2);
    for _ in 0..probes {
        check(lo + (hi - lo) * rng.uniform_open());
    }
    worst
}

/// Maximizes the joint |log density ratio| between the releases on D and D2
/// and compares it to the weighted distance claimed by the mapping. Vector
/// releases use the sum of per-coordinate maxima: coordinates are
/// independent and each coordinate's extremes are attainable with a common
/// sign.
pub fn density_ratio_audit(
    target: &AuditTarget,
    d: &Dataset,
    d2: &Dataset,
    probes: usize,
    rng: &mut StreamRng,
) -> Result<AuditReport, AuditError> {
    let r1 = target.release(d)?;
    let r2 = target.release(d2)?;
    if r1.centers.len() != r2.centers.len() {
        return Err(AuditError::ShapeMismatch(r1.centers.len(), r2.centers.len()));
    }
    let mut observed = 0.0;
    for i in 0..r1.centers.len() {
        observed +=
            coordinate_observed(r1.centers[i], r2.centers[i], r1.scales[i], probes, rng);
    }
    let claimed = weighted_distance(&target.total_alpha(), d, d2);
    Ok(AuditReport::new(
        target.name().to_string(),
        claimed,
        observed,
        1e-9,
        format!(
            "{} coords x ({} grid + 2 centers + {probes} random)",
            r1.centers.len(),
            GRID_POINTS
        ),
    ))
}

/// Audits the joint density of two independent runs against the summed
/// mapping: the product of the per-run ratios must respect the composition
/// distance.
pub fn composition_audit(
    first: &AuditTarget,
    second: &AuditTarget,
    d: &Dataset,
    d2: &Dataset,
    probes: usize,
    rng: &mut StreamRng,
) -> Result<AuditReport, AuditError> {
    let a = density_ratio_audit(first, d, d2, probes, rng)?;
    let b = density_ratio_audit(second, d, d2, probes, rng)?;
    let observed = a.observed + b.observed;
    let claimed = weighted_distance(
        &compose(first.total_alpha(), second.total_alpha()),
        d,
        d2,
    );
    Ok(AuditReport::new(
        format!("{}+{}", a.mechanism, b.mechanism),
        claimed,
        observed,
        1e-9,
        format!("joint of [{}] and [{}]", a.probe_description, b.probe_description),
    ))
}

/// Worst |log probability ratio| of an interval-clipped scalar Laplace
/// release: interior points keep their density ratio, and the boundary
/// atoms compare accumulated tail masses.
pub fn clipped_release_observed(
    c1: f64,
    c2: f64,
    scale: LaplaceScale,
    clip_lo: f64,
    clip_hi: f64,
    probes: usize,
    rng: &mut StreamRng,
) -> f64 {
    let mut worst: f64 = 0.0;
    // Interior grid restricted to the clip window.
    let lo = clip_lo.max(c1.min(c2) - GRID_SPAN_SCALES * scale.lambda());
    let hi = clip_hi.min(c1.max(c2) + GRID_SPAN_SCALES * scale.lambda());
    if hi > lo {
        for i in 0..GRID_POINTS {
            let x = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
            worst = worst.max(
                (laplace_log_density(x - c1, scale) - laplace_log_density(x - c2, scale)).abs(),
            );
        }
        for _ in 0..probes {
            let x = lo + (hi - lo) * rng.uniform_open();
            worst = worst.max(
                (laplace_log_density(x - c1, scale) - laplace_log_density(x - c2, scale)).abs(),
            );
        }
    }
    // Boundary atoms.
    let low_atom =
        (laplace_cdf(clip_lo - c1, scale).ln() - laplace_cdf(clip_lo - c2, scale).ln()).abs();
    let hi_atom = ((1.0 - laplace_cdf(clip_hi - c1, scale)).ln()
        - (1.0 - laplace_cdf(clip_hi - c2, scale)).ln())
    .abs();
    worst.max(low_atom).max(hi_atom)
}

const BRUTE_FORCE_LIMIT: u64 = 12;

fn stage_scale(stage: &SecondStage, t: f64) -> Result<Option<LaplaceScale>, AuditError> {
    match stage {
        SecondStage::Sum { lo, hi } => {
            let sens = lo.abs().max(hi.abs());
            if sens == 0.0 {
                Ok(None)
            } else {
                Ok(Some(LaplaceScale::new(sens / t)?))
            }
        }
        SecondStage::Count => Ok(Some(LaplaceScale::new(1.0 / t)?)),
        _ => Err(AuditError::UnsupportedStage),
    }
}

fn stage_center(stage: &SecondStage, units: &[Record], mask: u64) -> f64 {
    match stage {
        SecondStage::Sum { .. } => units
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, r)| r.value.as_scalar().unwrap_or(0.0))
            .sum(),
        SecondStage::Count => (mask.count_ones()) as f64,
        _ => unreachable!("filtered by stage_scale"),
    }
}

/// Exact output density of the subsample-then-run mechanism at `point`:
/// a mixture over all inclusion patterns of the units.
fn mixture_log_density(
    units: &[Record],
    keep: &[f64],
    stage: &SecondStage,
    scale: Option<LaplaceScale>,
    point: f64,
) -> f64 {
    let n = units.len();
    let mut total = 0.0;
    for mask in 0..(1u64 << n) {
        let mut w = 1.0;
        for (i, p) in keep.iter().enumerate() {
            w *= if mask >> i & 1 == 1 { *p } else { 1.0 - *p };
        }
        if w == 0.0 {
            continue;
        }
        let center = stage_center(stage, units, mask);
        match scale {
            Some(s) => total += w * (laplace_log_density(point - center, s)).exp(),
            None => {
                if point == center {
                    total += w;
                }
            }
        }
    }
    total.ln()
}

/// Enumerates all 2^n inclusion patterns to compute the exact output
/// mixture for D and each add-one neighbor, then checks the density ratio
/// against e^{±min(alpha, t)} at every grid point. One report per distinct
/// appended record.
pub fn sample_mechanism_brute_force(
    d: &Dataset,
    alpha: &PrivacyMapping,
    t: f64,
    stage: &SecondStage,
    grid: &[f64],
) -> Result<Vec<AuditReport>, AuditError> {
    if d.size() + 1 > BRUTE_FORCE_LIMIT {
        return Err(AuditError::TooLarge(d.size() + 1, BRUTE_FORCE_LIMIT));
    }
    let scale = stage_scale(stage, t)?;
    let base_units = d.units();
    let base_keep: Vec<f64> = base_units
        .iter()
        .map(|r| keep_probability(alpha, r, t))
        .collect();

    let mut reports = Vec::new();
    let neighbors: Vec<Record> = {
        let mut seen = std::collections::BTreeSet::new();
        d.iter().map(|(r, _)| r.clone()).filter(|r| seen.insert(r.clone())).collect()
    };
    for r in neighbors {
        let claimed = alpha.weight(&r).min(t);
        let mut units = base_units.clone();
        units.push(r.clone());
        let mut keep = base_keep.clone();
        keep.push(keep_probability(alpha, &r, t));

        let mut observed: f64 = 0.0;
        for &g in grid {
            let base = mixture_log_density(&base_units, &base_keep, stage, scale, g);
            let with = mixture_log_density(&units, &keep, stage, scale, g);
            if base.is_finite() || with.is_finite() {
                observed = observed.max((base - with).abs());
            }
        }
        reports.push(AuditReport::new(
            format!("sample-mechanism+({}, {})", r.value, r.epsilon),
            claimed,
            observed,
            1e-6,
            format!("{} grid points, {} patterns", grid.len(), 1u64 << units.len()),
        ));
    }
    Ok(reports)
}

/// Posterior-to-prior odds audit for appending one record: by Bayes' rule
/// the prior cancels, so the worst log odds ratio equals the worst log
/// density ratio and must stay within the record's weight.
pub fn posterior_odds_audit(
    target: &AuditTarget,
    d_o: &Dataset,
    r: &Record,
    prior_odds: f64,
    probes: usize,
    rng: &mut StreamRng,
) -> Result<AuditReport, AuditError> {
    if !(prior_odds > 0.0) {
        return Err(AuditError::InvalidPriorOdds(prior_odds));
    }
    let with = d_o.with_record(r.clone())?;
    let inner = density_ratio_audit(target, d_o, &with, probes, rng)?;
    Ok(AuditReport::new(
        format!("posterior-odds[{}] prior {prior_odds}", inner.mechanism),
        inner.claimed,
        inner.observed,
        1e-9,
        inner.probe_description,
    ))
}

/// Demonstration that swap-style heterogeneous privacy breaks under
/// data-privacy correlation. Values couple as (1, 0) or (0, eps_large):
/// the mechanism clips a demand-weighted average plus Laplace(1 / total
/// demand) to [-1, 3]. The all-(1,0) dataset has zero total demand, so its
/// output degenerates to a fair coin on the clip boundaries and a threshold
/// classifier separates it from any dataset containing a low-privacy record.
/// Returns the classifier's balanced success rate.
pub fn hdp_pitfall_demo(
    n: u64,
    eps_large: f64,
    trials: u64,
    rng: &mut StreamRng,
) -> Result<f64, AuditError> {
    if n < 1 {
        return Err(AuditError::EmptyDemo);
    }
    // (value, demand) per record; dataset A is all (1, 0), dataset B swaps
    // one record to (0, eps_large).
    let simulate = |values: &[(f64, f64)], rng: &mut StreamRng| -> f64 {
        let total: f64 = values.iter().map(|(_, e)| e).sum();
        if total == 0.0 {
            // Infinite-scale noise clipped to [-1, 3]: a fair coin on the
            // boundaries.
            if rng.uniform_open() < 0.5 {
                -1.0
            } else {
                3.0
            }
        } else {
            let avg: f64 = values.iter().map(|(x, e)| x * e).sum::<f64>() / total;
            let noise = crate::noise::laplace_sample(
                rng,
                LaplaceScale::new(1.0 / total).expect("positive total demand"),
            );
            (avg + noise).clamp(-1.0, 3.0)
        }
    };
    let a: Vec<(f64, f64)> = vec![(1.0, 0.0); n as usize];
    let mut b = a.clone();
    b[0] = (0.0, eps_large);

    // Guess "all-private" when the output sits closer to the boundary pair
    // {-1, 3} than to dataset B's center 0.
    let is_a = |out: f64| (out + 1.0).abs().min((out - 3.0).abs()) < out.abs();

    let half = trials / 2;
    let mut correct = 0u64;
    for _ in 0..half {
        if is_a(simulate(&a, rng)) {
            correct += 1;
        }
    }
    for _ in half..trials {
        if !is_a(simulate(&b, rng)) {
            correct += 1;
        }
    }
    Ok(correct as f64 / trials as f64)
}
