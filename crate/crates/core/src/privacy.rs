//! Privacy mappings and the domain certificate.
//!
//! A `PrivacyMapping` turns a (data, privacy-demand) tuple into the privacy
//! actually spent on that record. A mapping is certified against a finite
//! correlation domain W by checking alpha(x, eps) <= eps pointwise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::dataset::{
    weighted_distance_by, CorrelationDomain, DataValue, Dataset, PrivacyLevel, Record,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("unknown privacy mapping {0:?}")]
    UnknownMapping(String),
    #[error("invalid mapping parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrivacyMapping {
    /// alpha(x, eps) = eps. Infinite demand evaluates to infinity; mechanisms
    /// reject non-finite weights at their input boundary.
    Epsilon,
    /// alpha(x, eps) = 1 - e^{-eps}, bounded by 1.
    OneMinusExp,
    /// alpha(x, eps) = eps / (1 + eps), bounded by 1.
    Ratio,
    /// alpha(x, eps) = min(eps, t).
    Capped(f64),
    Scaled(Box<PrivacyMapping>, f64),
    Sum(Vec<PrivacyMapping>),
    Constant(f64),
    /// Table lookup by data value; expresses alpha(x, eps) = eps_l(x).
    /// Values absent from the table evaluate to infinity so they surface as
    /// rejected inputs instead of silently spending nothing.
    PerValueMin(BTreeMap<DataValue, f64>),
    /// Pointwise cap of an arbitrary base mapping, min(base, t); the spent
    /// mapping of the subsample-then-run construction.
    Min(Box<PrivacyMapping>, f64),
}

impl PrivacyMapping {
    pub fn evaluate(&self, value: &DataValue, epsilon: PrivacyLevel) -> f64 {
        let e = epsilon.value();
        match self {
            PrivacyMapping::Epsilon => e,
            PrivacyMapping::OneMinusExp => 1.0 - (-e).exp(),
            PrivacyMapping::Ratio => {
                if e.is_finite() {
                    e / (1.0 + e)
                } else {
                    1.0
                }
            }
            PrivacyMapping::Capped(t) => e.min(*t),
            PrivacyMapping::Scaled(base, factor) => factor * base.evaluate(value, epsilon),
            PrivacyMapping::Sum(parts) => parts.iter().map(|p| p.evaluate(value, epsilon)).sum(),
            PrivacyMapping::Constant(c) => *c,
            PrivacyMapping::PerValueMin(table) => {
                table.get(value).copied().unwrap_or(f64::INFINITY)
            }
            PrivacyMapping::Min(base, t) => base.evaluate(value, epsilon).min(*t),
        }
    }

    pub fn weight(&self, record: &Record) -> f64 {
        self.evaluate(&record.value, record.epsilon)
    }

    /// Halves the budget, the convention for two-part mechanisms.
    pub fn halved(&self) -> PrivacyMapping {
        PrivacyMapping::Scaled(Box::new(self.clone()), 0.5)
    }
}

/// Sequential-composition bookkeeping: the composed run spends the pointwise
/// sum of its parts.
pub fn compose(a1: PrivacyMapping, a2: PrivacyMapping) -> PrivacyMapping {
    PrivacyMapping::Sum(vec![a1, a2])
}

#[derive(Clone, Debug)]
pub struct PrivacyCertificate {
    pub mapping: PrivacyMapping,
    pub domain: CorrelationDomain,
    pub is_w_ahdp: bool,
    /// Tuples where the mapping exceeds the demanded epsilon.
    pub witnesses: Vec<Record>,
}

/// Exhaustively checks alpha(x, eps) <= eps over the finite domain.
pub fn certify(mapping: &PrivacyMapping, domain: &CorrelationDomain) -> PrivacyCertificate {
    let mut witnesses = Vec::new();
    for r in domain.iter() {
        if mapping.weight(r) > r.epsilon.value() {
            witnesses.push(r.clone());
        }
    }
    PrivacyCertificate {
        mapping: mapping.clone(),
        domain: domain.clone(),
        is_w_ahdp: witnesses.is_empty(),
        witnesses,
    }
}

/// The alpha-weighted add-remove distance between two datasets.
pub fn weighted_distance(alpha: &PrivacyMapping, a: &Dataset, b: &Dataset) -> f64 {
    weighted_distance_by(|r| alpha.weight(r), a, b)
}

impl fmt::Display for PrivacyMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrivacyMapping::Epsilon => write!(f, "epsilon"),
            PrivacyMapping::OneMinusExp => write!(f, "one-minus-exp"),
            PrivacyMapping::Ratio => write!(f, "ratio"),
            PrivacyMapping::Capped(t) => write!(f, "capped:{t}"),
            PrivacyMapping::Scaled(base, factor) => write!(f, "scaled:{base}:{factor}"),
            PrivacyMapping::Sum(parts) => {
                let names: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "sum({})", names.join("+"))
            }
            PrivacyMapping::Constant(c) => write!(f, "constant:{c}"),
            PrivacyMapping::PerValueMin(table) => write!(f, "per-value-min[{} values]", table.len()),
            PrivacyMapping::Min(base, t) => write!(f, "min:{base}:{t}"),
        }
    }
}

impl FromStr for PrivacyMapping {
    type Err = PrivacyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t {
            "epsilon" => return Ok(PrivacyMapping::Epsilon),
            "one-minus-exp" => return Ok(PrivacyMapping::OneMinusExp),
            "ratio" => return Ok(PrivacyMapping::Ratio),
            _ => {}
        }
        if let Some(arg) = t.strip_prefix("capped:") {
            let v: f64 = arg
                .parse()
                .map_err(|_| PrivacyError::InvalidParameter(arg.into()))?;
            if v < 0.0 {
                return Err(PrivacyError::InvalidParameter(arg.into()));
            }
            return Ok(PrivacyMapping::Capped(v));
        }
        if let Some(arg) = t.strip_prefix("constant:") {
            let v: f64 = arg
                .parse()
                .map_err(|_| PrivacyError::InvalidParameter(arg.into()))?;
            if v < 0.0 {
                return Err(PrivacyError::InvalidParameter(arg.into()));
            }
            return Ok(PrivacyMapping::Constant(v));
        }
        if let Some(arg) = t.strip_prefix("scaled:") {
            // Factor is the suffix after the last colon; the base name may
            // itself contain colons (e.g. scaled:capped:2:0.5).
            let (name, factor) = arg
                .rsplit_once(':')
                .ok_or_else(|| PrivacyError::InvalidParameter(arg.into()))?;
            let factor: f64 = factor
                .parse()
                .map_err(|_| PrivacyError::InvalidParameter(arg.into()))?;
            if factor < 0.0 {
                return Err(PrivacyError::InvalidParameter(arg.into()));
            }
            let base = name.parse::<PrivacyMapping>()?;
            return Ok(PrivacyMapping::Scaled(Box::new(base), factor));
        }
        Err(PrivacyError::UnknownMapping(t.into()))
    }
}
