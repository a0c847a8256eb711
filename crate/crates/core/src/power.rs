//! Adversarial power: how well a worst-case classifier can identify the
//! underlying dataset (or its data projection) from a mechanism's output.
//!
//! Closed-form bounds cover four threat settings (known-domain swap,
//! add-remove with one or unboundedly many appended records, heterogeneous
//! domains, and the single known-record pair). The bound-achieving
//! exponential-weights mechanisms are realized on finite hypothesis sets so
//! exact power can be computed by enumeration and cross-checked against the
//! formulas.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{CorrelationDomain, DataValue, Dataset, Projection, Record};
use crate::noise::StreamRng;
use crate::privacy::{weighted_distance, PrivacyMapping};

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("swap bound needs a domain of at least 2 values, got {0}")]
    DomainTooSmall(u32),
    #[error("epsilon must be non-negative and not NaN, got {0}")]
    InvalidEpsilon(f64),
    #[error("unbounded-append bound diverges at epsilon = 0; use the degenerate-aware heterogeneous bound")]
    ZeroEpsilonUnbounded,
    #[error("correlation domain is empty")]
    EmptyDomain,
    #[error("threat model needs at least one hypothesis")]
    NoHypotheses,
    #[error("hypotheses must have distinct labels under the chosen target")]
    DuplicateLabels,
    #[error("identity classifier needs label-valued outputs; this mechanism emits {0}")]
    NonLabelOutput(String),
    #[error("mechanism produced an all-zero weight vector; no output can be sampled")]
    DegenerateDistribution,
    #[error("this distance requires exact-dataset labels, not projections")]
    NeedsExactTarget,
    #[error("linear program for the optimal classifier did not converge")]
    ClassifierLpFailed,
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Which horizon of appended records the adversary considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    /// At most one appended record.
    One,
    /// Any finite number of appended records (analytic limit).
    Infinity,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PowerResult {
    pub upper: f64,
    pub lower: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    pub trivial_floor: f64,
    /// Set when a zero privacy demand forces the unbounded-append power to
    /// exactly 0: one fully-protected value makes every hypothesis set
    /// unidentifiable in the limit.
    pub degenerate: bool,
}

impl PowerResult {
    fn tight(p: f64, floor: f64) -> PowerResult {
        PowerResult {
            upper: p,
            lower: p,
            exact: None,
            trivial_floor: floor,
            degenerate: false,
        }
    }
}

/// Keep one pair per distinct data value, carrying its minimal demand.
/// The adversary's power against a heterogeneous domain is governed by this
/// reduction: the least-protected demand per value is the binding one.
pub fn reduce_domain(w: &CorrelationDomain) -> Result<CorrelationDomain, PowerError> {
    if w.is_empty() {
        return Err(PowerError::EmptyDomain);
    }
    let mut min_eps: BTreeMap<DataValue, crate::dataset::PrivacyLevel> = BTreeMap::new();
    for r in w.iter() {
        min_eps
            .entry(r.value.clone())
            .and_modify(|e| *e = (*e).min(r.epsilon))
            .or_insert(r.epsilon);
    }
    Ok(CorrelationDomain::new(
        min_eps.into_iter().map(|(v, e)| Record::new(v, e)),
    ))
}

fn check_eps(eps: f64) -> Result<(), PowerError> {
    if eps.is_nan() || eps < 0.0 {
        return Err(PowerError::InvalidEpsilon(eps));
    }
    Ok(())
}

/// Swap neighborhood over a known k-value domain: power is exactly
/// 1/(1 + (k-1) e^{-eps}), achieved by randomized response.
pub fn power_bound_swap(k: u32, eps: f64) -> Result<PowerResult, PowerError> {
    if k < 2 {
        return Err(PowerError::DomainTooSmall(k));
    }
    check_eps(eps)?;
    let p = 1.0 / (1.0 + (k as f64 - 1.0) * (-eps).exp());
    Ok(PowerResult::tight(p, 1.0 / k as f64))
}

/// Add-remove neighborhood, homogeneous demand eps, k candidate values.
/// One appended record: tight at 1/(1 + k e^{-eps}). Unbounded appends:
/// upper (1-e^{-eps})^k, lower ((1-e^{-eps})/(1+e^{-eps}))^k.
pub fn power_bound_addremove(
    k: u32,
    eps: f64,
    horizon: Horizon,
) -> Result<PowerResult, PowerError> {
    if k < 1 {
        return Err(PowerError::DomainTooSmall(k));
    }
    check_eps(eps)?;
    match horizon {
        Horizon::One => {
            let p = 1.0 / (1.0 + k as f64 * (-eps).exp());
            Ok(PowerResult::tight(p, 1.0 / (k as f64 + 1.0)))
        }
        Horizon::Infinity => {
            if eps == 0.0 {
                return Err(PowerError::ZeroEpsilonUnbounded);
            }
            let e = (-eps).exp();
            Ok(PowerResult {
                upper: (1.0 - e).powi(k as i32),
                lower: ((1.0 - e) / (1.0 + e)).powi(k as i32),
                exact: None,
                trivial_floor: 0.0,
                degenerate: false,
            })
        }
    }
}

/// Heterogeneous domain: bounds over the reduced domain's per-value minimal
/// demands. A zero demand under the unbounded horizon collapses the upper
/// bound to exactly 0 and is reported as degenerate, not an error.
pub fn power_bound_ahdp(
    w: &CorrelationDomain,
    horizon: Horizon,
) -> Result<PowerResult, PowerError> {
    let wo = reduce_domain(w)?;
    let eps: Vec<f64> = wo.iter().map(|r| r.epsilon.value()).collect();
    match horizon {
        Horizon::One => {
            let s: f64 = eps.iter().map(|e| (-e).exp()).sum();
            Ok(PowerResult::tight(
                1.0 / (1.0 + s),
                1.0 / (1.0 + wo.len() as f64),
            ))
        }
        Horizon::Infinity => {
            let mut upper = 1.0;
            let mut lower = 1.0;
            for e in &eps {
                let x = (-e).exp();
                upper *= 1.0 - x;
                lower *= (1.0 - x) / (1.0 + x);
            }
            Ok(PowerResult {
                upper,
                lower,
                exact: None,
                trivial_floor: 0.0,
                degenerate: eps.contains(&0.0),
            })
        }
    }
}

/// One known record appended or not: power is exactly 1/(1 + e^{-eps}).
/// An infinite demand (no privacy requested) gives power 1.
pub fn power_bound_pair(eps: f64) -> Result<PowerResult, PowerError> {
    check_eps(eps)?;
    let p = 1.0 / (1.0 + (-eps).exp());
    Ok(PowerResult::tight(p, 0.5))
}

/// true iff (type-I error, type-II error, distance) is achievable:
/// e1 + e^d * e2 >= 1 within tolerance. Any hypothesis test against an
/// honest mechanism must land on or above this frontier.
pub fn hypothesis_frontier_check(d: f64, e1: f64, e2: f64) -> bool {
    e1 + d.exp() * e2 >= 1.0 - 1e-12
}

/// What the classifier must recover.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    ExactDataset,
    DataProjection,
}

/// Canonical classification label: the dataset itself or its data
/// projection, in a totally ordered encoding so ties break
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    Full(Vec<(Record, u32)>),
    Projected(Vec<(DataValue, u64)>),
}

#[derive(Clone, Debug)]
pub struct ThreatModel {
    hypotheses: Vec<Dataset>,
    target: Target,
}

impl ThreatModel {
    pub fn new(hypotheses: Vec<Dataset>, target: Target) -> Result<Self, PowerError> {
        if hypotheses.is_empty() {
            return Err(PowerError::NoHypotheses);
        }
        let model = ThreatModel { hypotheses, target };
        let labels: BTreeSet<Label> = model.hypotheses.iter().map(|d| model.label(d)).collect();
        if labels.len() != model.hypotheses.len() {
            return Err(PowerError::DuplicateLabels);
        }
        Ok(model)
    }

    /// The known prefix plus one specific record, appended or not.
    pub fn pair(d_o: &Dataset, r: Record) -> Result<Self, PowerError> {
        let with = d_o.with_record(r)?;
        ThreatModel::new(vec![d_o.clone(), with], Target::ExactDataset)
    }

    /// The known prefix plus at most one record drawn from `options`.
    pub fn append_one_of(d_o: &Dataset, options: &[Record]) -> Result<Self, PowerError> {
        let mut hs = vec![d_o.clone()];
        for r in options {
            hs.push(d_o.with_record(r.clone())?);
        }
        ThreatModel::new(hs, Target::ExactDataset)
    }

    /// The known prefix plus any multiset of at most `t` records from the
    /// domain; the finite stand-in for the unbounded-append horizon.
    pub fn append_up_to(
        d_o: &Dataset,
        w: &CorrelationDomain,
        t: u32,
    ) -> Result<Self, PowerError> {
        if w.is_empty() {
            return Err(PowerError::EmptyDomain);
        }
        let records: Vec<Record> = w.iter().cloned().collect();
        let mut hs = Vec::new();
        let mut counts = vec![0u32; records.len()];
        enumerate_multisets(d_o, &records, t, 0, &mut counts, &mut hs)?;
        ThreatModel::new(hs, Target::ExactDataset)
    }

    /// Pathological side-information case: the adversary knows exactly one
    /// record was appended, so all hypotheses share a size and add-remove
    /// reasoning built on size uncertainty gives no protection.
    pub fn exact_size_side_information(
        d_o: &Dataset,
        options: &[Record],
    ) -> Result<Self, PowerError> {
        let mut hs = Vec::new();
        for r in options {
            hs.push(d_o.with_record(r.clone())?);
        }
        ThreatModel::new(hs, Target::ExactDataset)
    }

    pub fn with_target(mut self, target: Target) -> Result<Self, PowerError> {
        self.target = target;
        ThreatModel::new(self.hypotheses, target)
    }

    pub fn hypotheses(&self) -> &[Dataset] {
        &self.hypotheses
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn label(&self, d: &Dataset) -> Label {
        match self.target {
            Target::ExactDataset => Label::Full(d.iter().map(|(r, c)| (r.clone(), c)).collect()),
            Target::DataProjection => Label::Projected(
                d.project_data()
                    .iter()
                    .map(|(v, c)| (v.clone(), c))
                    .collect(),
            ),
        }
    }

    /// Distinct labels in canonical order.
    pub fn labels(&self) -> Vec<Label> {
        let set: BTreeSet<Label> = self.hypotheses.iter().map(|d| self.label(d)).collect();
        set.into_iter().collect()
    }
}

fn enumerate_multisets(
    d_o: &Dataset,
    records: &[Record],
    budget: u32,
    idx: usize,
    counts: &mut Vec<u32>,
    out: &mut Vec<Dataset>,
) -> Result<(), PowerError> {
    if idx == records.len() {
        let mut d = d_o.clone();
        for (r, &c) in records.iter().zip(counts.iter()) {
            for _ in 0..c {
                d = d.with_record(r.clone())?;
            }
        }
        out.push(d);
        return Ok(());
    }
    for c in 0..=budget {
        counts[idx] = c;
        enumerate_multisets(d_o, records, budget - c, idx + 1, counts, out)?;
    }
    counts[idx] = 0;
    Ok(())
}

/// An output of a finite-output mechanism under power analysis: either a
/// label guess or a leaked dataset size.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Observation {
    Guess(Label),
    Size(u64),
}

pub trait DiscreteMechanism {
    /// Full output distribution on input `d`, over a finite observation
    /// space shared by all hypotheses of the model.
    fn distribution(
        &self,
        d: &Dataset,
        model: &ThreatModel,
    ) -> Result<Vec<(Observation, f64)>, PowerError>;
}

/// The bound-achieving constructions: sample a label with probability
/// proportional to e^{-distance(input, label)}.
#[derive(Clone, Debug)]
pub enum ExponentialMechanism {
    /// Swap setting: distance 0 to the input's own label, eps to others
    /// (randomized response).
    SwapRr { eps: f64 },
    /// Add-remove setting: the weighted add-remove distance between full
    /// datasets under a privacy mapping.
    AddRemoveAlpha { alpha: PrivacyMapping },
    /// Projection setting: distance between data projections, each
    /// differing count paying the value's minimal demand in the domain.
    ProjectedMin { domain: CorrelationDomain },
}

fn projection_distance(
    a: &Projection,
    b: &Projection,
    min_eps: &BTreeMap<DataValue, f64>,
) -> f64 {
    let mut values: BTreeSet<&DataValue> = a.iter().map(|(v, _)| v).collect();
    values.extend(b.iter().map(|(v, _)| v));
    let mut d = 0.0;
    for v in values {
        let diff = (a.count(v) as f64 - b.count(v) as f64).abs();
        if diff > 0.0 {
            d += diff * min_eps.get(v).copied().unwrap_or(f64::INFINITY);
        }
    }
    d
}

impl ExponentialMechanism {
    fn weights(&self, d: &Dataset, model: &ThreatModel) -> Result<Vec<(Label, f64)>, PowerError> {
        let labels = model.labels();
        match self {
            ExponentialMechanism::SwapRr { eps } => {
                check_eps(*eps)?;
                let own = model.label(d);
                Ok(labels
                    .into_iter()
                    .map(|l| {
                        let w = if l == own { 1.0 } else { (-eps).exp() };
                        (l, w)
                    })
                    .collect())
            }
            ExponentialMechanism::AddRemoveAlpha { alpha } => {
                if model.target() != Target::ExactDataset {
                    return Err(PowerError::NeedsExactTarget);
                }
                Ok(model
                    .hypotheses()
                    .iter()
                    .map(|h| {
                        let dist = weighted_distance(alpha, d, h);
                        (model.label(h), (-dist).exp())
                    })
                    .collect())
            }
            ExponentialMechanism::ProjectedMin { domain } => {
                let wo = reduce_domain(domain)?;
                let min_eps: BTreeMap<DataValue, f64> = wo
                    .iter()
                    .map(|r| (r.value.clone(), r.epsilon.value()))
                    .collect();
                let own = d.project_data();
                let mut seen = BTreeMap::new();
                for h in model.hypotheses() {
                    seen.entry(model.label(h)).or_insert_with(|| h.project_data());
                }
                Ok(seen
                    .into_iter()
                    .map(|(l, p)| {
                        let dist = projection_distance(&own, &p, &min_eps);
                        (l, (-dist).exp())
                    })
                    .collect())
            }
        }
    }

    /// Sample one label; ties and ordering are fixed by the canonical label
    /// order, so runs are reproducible.
    pub fn sample(
        &self,
        d: &Dataset,
        model: &ThreatModel,
        rng: &mut StreamRng,
    ) -> Result<Label, PowerError> {
        let dist = self.distribution(d, model)?;
        let u = rng.uniform_open();
        let mut acc = 0.0;
        for (obs, p) in &dist {
            acc += p;
            if u <= acc {
                if let Observation::Guess(l) = obs {
                    return Ok(l.clone());
                }
            }
        }
        match dist.into_iter().next_back() {
            Some((Observation::Guess(l), _)) => Ok(l),
            _ => Err(PowerError::DegenerateDistribution),
        }
    }
}

impl DiscreteMechanism for ExponentialMechanism {
    fn distribution(
        &self,
        d: &Dataset,
        model: &ThreatModel,
    ) -> Result<Vec<(Observation, f64)>, PowerError> {
        let weights = self.weights(d, model)?;
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(PowerError::DegenerateDistribution);
        }
        Ok(weights
            .into_iter()
            .map(|(l, w)| (Observation::Guess(l), w / total))
            .collect())
    }
}

/// The cautionary non-example: releases the dataset size exactly. Private
/// under swap neighborhoods of equal size, yet an adversary reading the size
/// identifies add-one hypotheses with certainty.
#[derive(Clone, Copy, Debug)]
pub struct LeakLength;

impl DiscreteMechanism for LeakLength {
    fn distribution(
        &self,
        d: &Dataset,
        _model: &ThreatModel,
    ) -> Result<Vec<(Observation, f64)>, PowerError> {
        Ok(vec![(Observation::Size(d.size()), 1.0)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classifier {
    /// Read the mechanism's label output as the guess.
    Identity,
    /// Best randomized classifier: the minimax value over all classifiers,
    /// computed by linear programming on the full probability table.
    BayesOptimal,
}

/// Exact min-over-hypotheses success probability of the classifier on the
/// mechanism's full output table.
pub fn exact_power<M: DiscreteMechanism>(
    mech: &M,
    model: &ThreatModel,
    classifier: Classifier,
) -> Result<PowerResult, PowerError> {
    let labels = model.labels();
    let floor = 1.0 / labels.len() as f64;
    let own_labels: Vec<Label> = model.hypotheses().iter().map(|h| model.label(h)).collect();
    let rows: Vec<Vec<(Observation, f64)>> = model
        .hypotheses()
        .iter()
        .map(|h| mech.distribution(h, model))
        .collect::<Result<_, _>>()?;

    let exact = match classifier {
        Classifier::Identity => {
            let mut worst = f64::INFINITY;
            for (row, own) in rows.iter().zip(own_labels.iter()) {
                let mut success = 0.0;
                for (obs, p) in row {
                    match obs {
                        Observation::Guess(l) if l == own => success += p,
                        Observation::Guess(_) => {}
                        other => {
                            return Err(PowerError::NonLabelOutput(format!("{other:?}")));
                        }
                    }
                }
                worst = worst.min(success);
            }
            worst
        }
        Classifier::BayesOptimal => best_classifier_power(&rows, &own_labels, &labels)?,
    };

    Ok(PowerResult {
        upper: exact,
        lower: exact,
        exact: Some(exact),
        trivial_floor: floor,
        degenerate: false,
    })
}

/// max over randomized classifiers q of min over hypotheses i of
/// sum_y P_i(y) q(correct label | y), as a linear program.
fn best_classifier_power(
    rows: &[Vec<(Observation, f64)>],
    own_labels: &[Label],
    labels: &[Label],
) -> Result<f64, PowerError> {
    let mut outputs: BTreeSet<Observation> = BTreeSet::new();
    for row in rows {
        outputs.extend(row.iter().map(|(o, _)| o.clone()));
    }
    let outputs: Vec<Observation> = outputs.into_iter().collect();
    let out_idx: BTreeMap<&Observation, usize> =
        outputs.iter().enumerate().map(|(i, o)| (o, i)).collect();
    let lab_idx: BTreeMap<&Label, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let m = outputs.len();
    let nl = labels.len();
    let nh = rows.len();

    // Dense probability table P[i][y].
    let mut p = vec![vec![0.0; m]; nh];
    for (i, row) in rows.iter().enumerate() {
        for (obs, prob) in row {
            p[i][out_idx[obs]] += prob;
        }
    }

    // Variables: q_{y,l} (y*nl + l), v, one surplus per hypothesis.
    // Constraints: sum_y P_i(y) q_{y, own_i} - v - s_i = 0 for each i;
    //              sum_l q_{y,l} = 1 for each y.  Minimize -v.
    let nq = m * nl;
    let v_col = nq;
    let n_vars = nq + 1 + nh;
    let mut a = Vec::with_capacity(nh + m);
    let mut b = Vec::with_capacity(nh + m);
    for i in 0..nh {
        let mut row = vec![0.0; n_vars];
        let l = lab_idx[&own_labels[i]];
        for y in 0..m {
            row[y * nl + l] = p[i][y];
        }
        row[v_col] = -1.0;
        row[nq + 1 + i] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    for y in 0..m {
        let mut row = vec![0.0; n_vars];
        for l in 0..nl {
            row[y * nl + l] = 1.0;
        }
        a.push(row);
        b.push(1.0);
    }
    let mut c = vec![0.0; n_vars];
    c[v_col] = -1.0;

    let (obj, _x) = simplex_min(a, b, c).ok_or(PowerError::ClassifierLpFailed)?;
    Ok((-obj).clamp(0.0, 1.0))
}

/// Two-phase dense simplex for min c'x s.t. Ax = b, x >= 0, with Bland's
/// rule. Only exercised on small classifier programs, so simplicity and
/// guaranteed termination beat speed.
fn simplex_min(
    mut a: Vec<Vec<f64>>,
    mut b: Vec<f64>,
    c: Vec<f64>,
) -> Option<(f64, Vec<f64>)> {
    let m = a.len();
    let n = c.len();
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for x in a[i].iter_mut() {
                *x = -*x;
            }
        }
    }
    // Tableau with one artificial per row.
    let total = n + m;
    let mut t = vec![vec![0.0; total + 1]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][total] = b[i];
    }
    let mut basis: Vec<usize> = (n..total).collect();

    let phase1: Vec<f64> = (0..total).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    run_simplex(&mut t, &mut basis, &phase1, total)?;
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= n)
        .map(|(i, _)| t[i][total])
        .sum();
    if infeas > 1e-8 {
        return None;
    }
    // Pivot lingering zero-valued artificials out where possible.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }

    let mut phase2 = vec![0.0; total];
    phase2[..n].copy_from_slice(&c);
    run_simplex(&mut t, &mut basis, &phase2, n)?;

    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][total];
        }
    }
    let obj = c.iter().zip(x.iter()).map(|(ci, xi)| ci * xi).sum();
    Some((obj, x))
}

/// Bland's rule iterations; columns >= `enterable` may not enter the basis.
fn run_simplex(
    t: &mut Vec<Vec<f64>>,
    basis: &mut Vec<usize>,
    cost: &[f64],
    enterable: usize,
) -> Option<()> {
    let m = t.len();
    let width = t[0].len();
    let rhs = width - 1;
    for _ in 0..100_000 {
        // Reduced costs r_j = c_j - c_B' B^{-1} A_j read off the tableau.
        let mut entering = None;
        for j in 0..enterable {
            if basis.contains(&j) {
                continue;
            }
            let r = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            if r < -1e-9 {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else { return Some(()) };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][j] > 1e-9 {
                let ratio = t[i][rhs] / t[i][j];
                if ratio < best - 1e-12
                    || (ratio < best + 1e-12 && leave.is_some_and(|l| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let i = leave?; // unbounded if None
        pivot(t, basis, i, j);
    }
    None
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let width = t[row].len();
    let p = t[row][col];
    for x in t[row].iter_mut() {
        *x /= p;
    }
    for i in 0..t.len() {
        if i != row && t[i][col].abs() > 0.0 {
            let factor = t[i][col];
            for j in 0..width {
                t[i][j] -= factor * t[row][j];
            }
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(pairs: &[(f64, f64)]) -> CorrelationDomain {
        CorrelationDomain::new(pairs.iter().map(|&(x, e)| Record::scalar(x, e)))
    }

    #[test]
    fn reduce_domain_examples() {
        let w = dom(&[(0.0, 0.0), (0.0, 2.0), (1.0, 1.0)]);
        let wo = reduce_domain(&w).unwrap();
        assert_eq!(wo, dom(&[(0.0, 0.0), (1.0, 1.0)]));
        let single = dom(&[(3.0, 1.5)]);
        assert_eq!(reduce_domain(&single).unwrap(), single);
        let distinct = dom(&[(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)]);
        assert_eq!(reduce_domain(&distinct).unwrap(), distinct);
        assert!(reduce_domain(&CorrelationDomain::default()).is_err());
    }

    #[test]
    fn swap_bound_values() {
        assert_eq!(power_bound_swap(2, 0.0).unwrap().upper, 0.5);
        let p = power_bound_swap(2, 0.5).unwrap();
        assert!((p.upper - 0.6224593312018546).abs() < 1e-15);
        assert_eq!(p.upper, p.lower);
        let p = power_bound_swap(101, 0.0).unwrap();
        assert!((p.upper - 1.0 / 101.0).abs() < 1e-15);
        assert_eq!(p.trivial_floor, 1.0 / 101.0);
        assert!(power_bound_swap(1, 1.0).is_err());
        assert!(power_bound_swap(2, -0.5).is_err());
    }

    #[test]
    fn addremove_bound_values() {
        let p = power_bound_addremove(1, std::f64::consts::LN_2, Horizon::Infinity).unwrap();
        assert!((p.upper - 0.5).abs() < 1e-15);
        assert!((p.lower - 1.0 / 3.0).abs() < 1e-15);
        let p = power_bound_addremove(2, 0.5, Horizon::One).unwrap();
        assert!((p.upper - 0.45186276187760605).abs() < 1e-15);
        let p = power_bound_addremove(3, 50.0, Horizon::Infinity).unwrap();
        assert!(p.upper > 1.0 - 1e-12 && p.lower > 1.0 - 1e-12);
        assert!(power_bound_addremove(2, 0.0, Horizon::Infinity).is_err());
        assert!(power_bound_addremove(0, 1.0, Horizon::One).is_err());
    }

    #[test]
    fn ahdp_bound_values() {
        let w = dom(&[(0.0, 1.0), (1.0, 2.0)]);
        let p = power_bound_ahdp(&w, Horizon::One).unwrap();
        assert!((p.upper - 0.6652409557748218).abs() < 1e-15);

        let z = dom(&[(0.0, 0.0), (1.0, 1.0)]);
        let p = power_bound_ahdp(&z, Horizon::Infinity).unwrap();
        assert_eq!(p.upper, 0.0);
        assert!(p.degenerate);
    }

    #[test]
    fn ahdp_homogeneous_matches_addremove() {
        for k in 1..=5u32 {
            for eps in [0.25, 1.0, 3.0] {
                let w =
                    CorrelationDomain::new((0..k).map(|i| Record::scalar(i as f64, eps)));
                for horizon in [Horizon::One, Horizon::Infinity] {
                    let a = power_bound_ahdp(&w, horizon).unwrap();
                    let b = power_bound_addremove(k, eps, horizon).unwrap();
                    assert!((a.upper - b.upper).abs() < 1e-12, "k={k} eps={eps}");
                    assert!((a.lower - b.lower).abs() < 1e-12, "k={k} eps={eps}");
                }
            }
        }
    }

    #[test]
    fn pair_bound_values() {
        assert_eq!(power_bound_pair(0.0).unwrap().upper, 0.5);
        assert_eq!(power_bound_pair(f64::INFINITY).unwrap().upper, 1.0);
        let p = power_bound_pair(1.0).unwrap();
        assert!((p.upper - 0.7310585786300049).abs() < 1e-15);
    }

    #[test]
    fn bounds_sanity_sweep() {
        for k in 1..=10u32 {
            for eps in [0.05, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
                for horizon in [Horizon::One, Horizon::Infinity] {
                    let p = power_bound_addremove(k, eps, horizon).unwrap();
                    assert!(p.trivial_floor <= p.lower + 1e-12);
                    assert!(p.lower <= p.upper + 1e-12);
                    assert!((0.0..=1.0).contains(&p.upper));
                    assert!((0.0..=1.0).contains(&p.lower));
                }
            }
        }
    }

    #[test]
    fn frontier_check_examples() {
        assert!(hypothesis_frontier_check(0.0, 0.5, 0.5));
        assert!(!hypothesis_frontier_check(0.0, 0.2, 0.2));
        assert!(hypothesis_frontier_check(std::f64::consts::LN_2, 0.0, 0.5));
    }

    fn swap_model(k: u32) -> ThreatModel {
        let hs = (0..k)
            .map(|i| Dataset::from_records([Record::scalar(i as f64, 1.0)]).unwrap())
            .collect();
        ThreatModel::new(hs, Target::ExactDataset).unwrap()
    }

    #[test]
    fn randomized_response_exact_power() {
        for k in 2..=6u32 {
            for eps in [0.1, 0.5, 1.0, 2.0] {
                let model = swap_model(k);
                let mech = ExponentialMechanism::SwapRr { eps };
                let expect = 1.0 / (1.0 + (k as f64 - 1.0) * (-eps).exp());
                let id = exact_power(&mech, &model, Classifier::Identity).unwrap();
                assert!((id.exact.unwrap() - expect).abs() < 1e-12, "k={k} eps={eps}");
                let bayes = exact_power(&mech, &model, Classifier::BayesOptimal).unwrap();
                assert!(
                    (bayes.exact.unwrap() - expect).abs() < 1e-12,
                    "bayes k={k} eps={eps}: {} vs {expect}",
                    bayes.exact.unwrap()
                );
            }
        }
    }

    #[test]
    fn zero_eps_gives_trivial_floor() {
        for k in [2u32, 4] {
            let model = swap_model(k);
            let mech = ExponentialMechanism::SwapRr { eps: 0.0 };
            for cls in [Classifier::Identity, Classifier::BayesOptimal] {
                let p = exact_power(&mech, &model, cls).unwrap();
                assert!(
                    (p.exact.unwrap() - p.trivial_floor).abs() < 1e-12,
                    "{cls:?} k={k}"
                );
            }
        }
    }

    #[test]
    fn append_one_exponential_matches_formula() {
        let d_o = Dataset::from_counts([(Record::scalar(9.0, 1.0), 3)]).unwrap();
        for k in 1..=4usize {
            for eps in [0.5, 1.0, 2.0] {
                let options: Vec<Record> =
                    (0..k).map(|i| Record::scalar(i as f64, eps)).collect();
                let model = ThreatModel::append_one_of(&d_o, &options).unwrap();
                let mech = ExponentialMechanism::AddRemoveAlpha {
                    alpha: PrivacyMapping::Epsilon,
                };
                let p = exact_power(&mech, &model, Classifier::Identity).unwrap();
                let expect = 1.0 / (1.0 + k as f64 * (-eps).exp());
                assert!(
                    (p.exact.unwrap() - expect).abs() < 1e-12,
                    "k={k} eps={eps}: {} vs {expect}",
                    p.exact.unwrap()
                );
            }
        }
    }

    #[test]
    fn projected_pair_achieves_pair_bound() {
        let d_o = Dataset::from_counts([(Record::scalar(5.0, 2.0), 2)]).unwrap();
        for eps in [0.3, 1.0, 2.5] {
            let r = Record::scalar(7.0, eps);
            let domain = CorrelationDomain::new([r.clone()]);
            let model = ThreatModel::pair(&d_o, r)
                .unwrap()
                .with_target(Target::DataProjection)
                .unwrap();
            let mech = ExponentialMechanism::ProjectedMin { domain };
            let p = exact_power(&mech, &model, Classifier::Identity).unwrap();
            let expect = 1.0 / (1.0 + (-eps).exp());
            assert!((p.exact.unwrap() - expect).abs() < 1e-12, "eps={eps}");
        }
    }

    #[test]
    fn truncated_append_power_trend() {
        // Power on the append-up-to-t model: non-increasing in t, never
        // below the analytic unbounded-horizon lower bound.
        for k in 1..=3u32 {
            let eps = 1.0;
            let d_o = Dataset::new();
            let w = CorrelationDomain::new((0..k).map(|i| Record::scalar(i as f64, eps)));
            let mech = ExponentialMechanism::AddRemoveAlpha {
                alpha: PrivacyMapping::Epsilon,
            };
            let limit = power_bound_addremove(k, eps, Horizon::Infinity)
                .unwrap()
                .lower;
            let mut last = f64::INFINITY;
            let t_max = if k == 3 { 4 } else { 6 };
            for t in 1..=t_max {
                let model = ThreatModel::append_up_to(&d_o, &w, t).unwrap();
                let p = exact_power(&mech, &model, Classifier::Identity)
                    .unwrap()
                    .exact
                    .unwrap();
                assert!(p <= last + 1e-12, "k={k} t={t}: {p} vs {last}");
                assert!(p >= limit - 1e-12, "k={k} t={t}: {p} vs limit {limit}");
                last = p;
            }
        }
    }

    #[test]
    fn leak_length_defeats_zero_eps_pair() {
        let d_o = Dataset::from_counts([(Record::scalar(1.0, 0.0), 5)]).unwrap();
        let model = ThreatModel::pair(&d_o, Record::scalar(1.0, 0.0)).unwrap();
        let p = exact_power(&LeakLength, &model, Classifier::BayesOptimal).unwrap();
        assert!((p.exact.unwrap() - 1.0).abs() < 1e-12);
        // Identity cannot read a size as a label.
        assert!(matches!(
            exact_power(&LeakLength, &model, Classifier::Identity),
            Err(PowerError::NonLabelOutput(_))
        ));
        // The honest bound at eps = 0 says a compliant mechanism caps out
        // at a coin flip.
        assert_eq!(power_bound_pair(0.0).unwrap().upper, 0.5);
    }

    #[test]
    fn exact_size_side_information_demo() {
        // With the size known exactly, size-based reasoning offers nothing:
        // the leak-length output is constant over the hypotheses and the
        // best classifier is reduced to the trivial floor.
        let d_o = Dataset::from_counts([(Record::scalar(0.0, 1.0), 4)]).unwrap();
        let options = [Record::scalar(1.0, 1.0), Record::scalar(2.0, 1.0)];
        let model = ThreatModel::exact_size_side_information(&d_o, &options).unwrap();
        let p = exact_power(&LeakLength, &model, Classifier::BayesOptimal).unwrap();
        assert!((p.exact.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threat_model_rejects_duplicates() {
        let d = Dataset::from_records([Record::scalar(1.0, 1.0)]).unwrap();
        assert!(matches!(
            ThreatModel::new(vec![d.clone(), d.clone()], Target::ExactDataset),
            Err(PowerError::DuplicateLabels)
        ));
        // Distinct datasets, same projection: fine as exact targets, a
        // duplicate under projection.
        let a = Dataset::from_records([Record::scalar(1.0, 1.0)]).unwrap();
        let b = Dataset::from_records([Record::scalar(1.0, 2.0)]).unwrap();
        let m = ThreatModel::new(vec![a, b], Target::ExactDataset).unwrap();
        assert!(matches!(
            m.with_target(Target::DataProjection),
            Err(PowerError::DuplicateLabels)
        ));
    }

    #[test]
    fn exponential_sampling_matches_distribution() {
        let model = swap_model(3);
        let mech = ExponentialMechanism::SwapRr { eps: 1.0 };
        let d = &model.hypotheses()[0].clone();
        let own = model.label(d);
        let expect = 1.0 / (1.0 + 2.0 * (-1.0f64).exp());
        let mut rng = StreamRng::new(17);
        let trials = 200_000;
        let mut hits = 0u32;
        for _ in 0..trials {
            if mech.sample(d, &model, &mut rng).unwrap() == own {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((rate - expect).abs() < 4.0 * sigma, "{rate} vs {expect}");
    }

    #[test]
    fn simplex_solves_known_program() {
        // min -x - y  s.t. x + y + s = 1  => objective -1 on the segment.
        let a = vec![vec![1.0, 1.0, 1.0]];
        let b = vec![1.0];
        let c = vec![-1.0, -1.0, 0.0];
        let (obj, x) = simplex_min(a, b, c).unwrap();
        assert!((obj + 1.0).abs() < 1e-12);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
    }
}
