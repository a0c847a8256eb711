//! Multiset datasets over (data value, privacy demand) tuples.
//!
//! A dataset is a count function over records. All mechanisms in this crate
//! operate on these multisets, so equality is order-free and counts are the
//! only state. Records compare and hash by the exact bit pattern of their
//! floating-point components; CSV ingestion quantizes scalars to a declared
//! decimal precision so that grouping is well-defined.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record count overflow")]
    CountOverflow,
    #[error("privacy level must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("scalar value {value} outside declared interval [{lo}, {hi}]")]
    ScalarOutOfBounds { value: f64, lo: f64, hi: f64 },
    #[error("categorical label {label} outside 1..={k}")]
    LabelOutOfRange { label: u32, k: u32 },
    #[error("regression component {value} outside [-1, 1]")]
    RegressionOutOfBounds { value: f64 },
    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One user's data value: a bounded scalar, a categorical label, or a
/// covariate/target pair for regression.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DataValue {
    Scalar(f64),
    Categorical(u32),
    Regression { x: Vec<f64>, y: f64 },
}

impl DataValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            DataValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_categorical(&self) -> Option<u32> {
        match self {
            DataValue::Categorical(v) => Some(*v),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            DataValue::Scalar(_) => 0,
            DataValue::Categorical(_) => 1,
            DataValue::Regression { .. } => 2,
        }
    }
}

// Bit-pattern equality with a total order; NaN never enters via the public
// constructors but total_cmp keeps the order well-defined regardless.
impl PartialEq for DataValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for DataValue {}

impl Ord for DataValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (DataValue::Scalar(a), DataValue::Scalar(b)) => a.total_cmp(b),
            (DataValue::Categorical(a), DataValue::Categorical(b)) => a.cmp(b),
            (DataValue::Regression { x: xa, y: ya }, DataValue::Regression { x: xb, y: yb }) => {
                let by_x = xa
                    .iter()
                    .zip(xb.iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or_else(|| xa.len().cmp(&xb.len()));
                by_x.then_with(|| ya.total_cmp(yb))
            }
            _ => self.rank().cmp(&other.rank()),
        }
    }
}
impl PartialOrd for DataValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::hash::Hash for DataValue {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            DataValue::Scalar(v) => v.to_bits().hash(state),
            DataValue::Categorical(v) => v.hash(state),
            DataValue::Regression { x, y } => {
                for c in x {
                    c.to_bits().hash(state);
                }
                y.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for DataValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataValue::Scalar(v) => write!(f, "{v}"),
            DataValue::Categorical(v) => write!(f, "{v}"),
            DataValue::Regression { x, y } => {
                let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                write!(f, "({};{y})", xs.join(","))
            }
        }
    }
}

/// A privacy demand: a non-negative epsilon, where positive infinity is an
/// explicit, fully supported state meaning "no privacy requested".
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PrivacyLevel(f64);

impl PrivacyLevel {
    pub const INFINITE: PrivacyLevel = PrivacyLevel(f64::INFINITY);

    pub fn new(epsilon: f64) -> Result<Self, DatasetError> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(DatasetError::NegativeEpsilon(epsilon));
        }
        Ok(PrivacyLevel(epsilon))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl PartialEq for PrivacyLevel {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for PrivacyLevel {}
impl Ord for PrivacyLevel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl PartialOrd for PrivacyLevel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl std::hash::Hash for PrivacyLevel {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl FromStr for PrivacyLevel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(PrivacyLevel::INFINITE);
        }
        let v: f64 = t.parse().map_err(|_| DatasetError::Parse {
            line: 0,
            msg: format!("invalid epsilon {t:?}"),
        })?;
        PrivacyLevel::new(v)
    }
}

impl fmt::Display for PrivacyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// One user's (data value, privacy demand) tuple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Record {
    pub value: DataValue,
    pub epsilon: PrivacyLevel,
}

impl Record {
    pub fn new(value: DataValue, epsilon: PrivacyLevel) -> Self {
        Record { value, epsilon }
    }

    pub fn scalar(value: f64, epsilon: f64) -> Self {
        Record {
            value: DataValue::Scalar(value),
            epsilon: PrivacyLevel::new(epsilon).expect("non-negative epsilon"),
        }
    }

    pub fn categorical(label: u32, epsilon: f64) -> Self {
        Record {
            value: DataValue::Categorical(label),
            epsilon: PrivacyLevel::new(epsilon).expect("non-negative epsilon"),
        }
    }

    pub fn regression(x: Vec<f64>, y: f64, epsilon: f64) -> Self {
        Record {
            value: DataValue::Regression { x, y },
            epsilon: PrivacyLevel::new(epsilon).expect("non-negative epsilon"),
        }
    }
}

/// Multiset of records with an explicit count function. Immutable once built;
/// `add`/`subtract` return new datasets.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dataset {
    counts: BTreeMap<Record, u32>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn from_counts<I: IntoIterator<Item = (Record, u32)>>(
        iter: I,
    ) -> Result<Self, DatasetError> {
        let mut d = Dataset::new();
        for (r, c) in iter {
            d.insert(r, c)?;
        }
        Ok(d)
    }

    pub fn from_records<I: IntoIterator<Item = Record>>(iter: I) -> Result<Self, DatasetError> {
        Dataset::from_counts(iter.into_iter().map(|r| (r, 1)))
    }

    fn insert(&mut self, record: Record, count: u32) -> Result<(), DatasetError> {
        if count == 0 {
            return Ok(());
        }
        let slot = self.counts.entry(record).or_insert(0);
        *slot = slot.checked_add(count).ok_or(DatasetError::CountOverflow)?;
        Ok(())
    }

    pub fn count(&self, record: &Record) -> u32 {
        self.counts.get(record).copied().unwrap_or(0)
    }

    pub fn size(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Support T(D): records with positive count, in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (&Record, u32)> {
        self.counts.iter().map(|(r, &c)| (r, c))
    }

    /// Expands the multiset into one entry per unit of count.
    pub fn units(&self) -> Vec<Record> {
        let mut out = Vec::with_capacity(self.size() as usize);
        for (r, c) in self.iter() {
            for _ in 0..c {
                out.push(r.clone());
            }
        }
        out
    }

    /// Pointwise count sum.
    pub fn add(&self, other: &Dataset) -> Result<Dataset, DatasetError> {
        let mut out = self.clone();
        for (r, c) in other.iter() {
            out.insert(r.clone(), c)?;
        }
        Ok(out)
    }

    /// Pointwise truncated difference: counts never go below zero.
    pub fn subtract(&self, other: &Dataset) -> Dataset {
        let mut out = Dataset::new();
        for (r, &c) in &self.counts {
            let rem = c.saturating_sub(other.count(r));
            if rem > 0 {
                out.counts.insert(r.clone(), rem);
            }
        }
        out
    }

    pub fn with_record(&self, record: Record) -> Result<Dataset, DatasetError> {
        let mut out = self.clone();
        out.insert(record, 1)?;
        Ok(out)
    }

    /// Marginal onto data space: counts summed across privacy demands.
    pub fn project_data(&self) -> Projection {
        let mut counts: BTreeMap<DataValue, u64> = BTreeMap::new();
        for (r, c) in self.iter() {
            *counts.entry(r.value.clone()).or_insert(0) += c as u64;
        }
        Projection { counts }
    }
}

/// Multiset over data values only, the image of a dataset under the
/// data-space projection.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Projection {
    counts: BTreeMap<DataValue, u64>,
}

impl Projection {
    pub fn size(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, value: &DataValue) -> u64 {
        self.counts.get(value).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DataValue, u64)> {
        self.counts.iter().map(|(v, &c)| (v, c))
    }

    pub fn add(&self, other: &Projection) -> Projection {
        let mut out = self.clone();
        for (v, c) in other.iter() {
            *out.counts.entry(v.clone()).or_insert(0) += c;
        }
        out
    }
}

/// The finite domain W of admissible (data, privacy) tuples; the model of
/// data-privacy correlation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorrelationDomain {
    records: BTreeSet<Record>,
}

impl CorrelationDomain {
    pub fn new<I: IntoIterator<Item = Record>>(records: I) -> Self {
        CorrelationDomain {
            records: records.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, record: &Record) -> bool {
        self.records.contains(record)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    /// Distinct data values of the domain, in canonical order.
    pub fn values(&self) -> Vec<DataValue> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            seen.insert(r.value.clone());
        }
        seen.into_iter().collect()
    }
}

/// Weighted add-remove distance between two datasets under a per-record
/// weight function. An infinite weight on a differing record yields an
/// infinite distance.
pub fn weighted_distance_by<F: Fn(&Record) -> f64>(weight: F, a: &Dataset, b: &Dataset) -> f64 {
    let mut support: BTreeSet<&Record> = a.iter().map(|(r, _)| r).collect();
    support.extend(b.iter().map(|(r, _)| r));
    let mut total = 0.0;
    for r in support {
        let diff = (a.count(r) as f64 - b.count(r) as f64).abs();
        if diff > 0.0 {
            total += weight(r) * diff;
        }
    }
    total
}

/// Rounds a scalar to `decimals` decimal places so values group as multiset
/// keys after CSV ingestion.
pub fn quantize(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

pub mod io {
    //! CSV ingestion and emission.
    //!
    //! One record per row; blank lines and `#` comment lines are skipped.
    //! Scalar tasks use header `value,epsilon`; categorical `label,epsilon`;
    //! regression `x1,...,xd,y,epsilon`. The `epsilon` column accepts decimal
    //! literals and the token `inf`.

    use super::*;
    use std::io::{Read, Write};

    pub const DEFAULT_PRECISION: u32 = 2;

    fn reader<R: Read>(input: R) -> csv::Reader<R> {
        csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(input)
    }

    fn parse_f64(field: &str, line: usize) -> Result<f64, DatasetError> {
        let t = field.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(f64::INFINITY);
        }
        t.parse().map_err(|_| DatasetError::Parse {
            line,
            msg: format!("invalid number {t:?}"),
        })
    }

    pub fn read_scalar<R: Read>(input: R, decimals: u32) -> Result<Dataset, DatasetError> {
        let mut rdr = reader(input);
        let mut d = Dataset::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            if row.len() != 2 {
                return Err(DatasetError::Parse {
                    line,
                    msg: format!("expected 2 fields, got {}", row.len()),
                });
            }
            let value = quantize(parse_f64(&row[0], line)?, decimals);
            let epsilon = PrivacyLevel::new(parse_f64(&row[1], line)?)?;
            d.insert(Record::new(DataValue::Scalar(value), epsilon), 1)?;
        }
        Ok(d)
    }

    pub fn read_categorical<R: Read>(input: R) -> Result<Dataset, DatasetError> {
        let mut rdr = reader(input);
        let mut d = Dataset::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            if row.len() != 2 {
                return Err(DatasetError::Parse {
                    line,
                    msg: format!("expected 2 fields, got {}", row.len()),
                });
            }
            let label: u32 = row[0].trim().parse().map_err(|_| DatasetError::Parse {
                line,
                msg: format!("invalid label {:?}", &row[0]),
            })?;
            if label == 0 {
                return Err(DatasetError::Parse {
                    line,
                    msg: "labels are positive integers".into(),
                });
            }
            let epsilon = PrivacyLevel::new(parse_f64(&row[1], line)?)?;
            d.insert(Record::new(DataValue::Categorical(label), epsilon), 1)?;
        }
        Ok(d)
    }

    pub fn read_regression<R: Read>(input: R, decimals: u32) -> Result<Dataset, DatasetError> {
        let mut rdr = reader(input);
        let mut d = Dataset::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            if row.len() < 3 {
                return Err(DatasetError::Parse {
                    line,
                    msg: "regression rows need x1..xd,y,epsilon".into(),
                });
            }
            let dim = row.len() - 2;
            let mut x = Vec::with_capacity(dim);
            for j in 0..dim {
                x.push(quantize(parse_f64(&row[j], line)?, decimals));
            }
            let y = quantize(parse_f64(&row[dim], line)?, decimals);
            let epsilon = PrivacyLevel::new(parse_f64(&row[dim + 1], line)?)?;
            d.insert(Record::new(DataValue::Regression { x, y }, epsilon), 1)?;
        }
        Ok(d)
    }

    /// Writes a dataset back out in the matching CSV schema, one unit of
    /// count per row.
    pub fn write<W: Write>(output: &mut W, d: &Dataset) -> Result<(), DatasetError> {
        let header = match d.iter().next() {
            None | Some((
                Record {
                    value: DataValue::Scalar(_),
                    ..
                },
                _,
            )) => "value,epsilon".to_string(),
            Some((
                Record {
                    value: DataValue::Categorical(_),
                    ..
                },
                _,
            )) => "label,epsilon".to_string(),
            Some((
                Record {
                    value: DataValue::Regression { x, .. },
                    ..
                },
                _,
            )) => {
                let mut cols: Vec<String> = (1..=x.len()).map(|i| format!("x{i}")).collect();
                cols.push("y".into());
                cols.push("epsilon".into());
                cols.join(",")
            }
        };
        writeln!(output, "{header}")?;
        for (r, c) in d.iter() {
            let row = match &r.value {
                DataValue::Scalar(v) => format!("{v},{}", r.epsilon),
                DataValue::Categorical(v) => format!("{v},{}", r.epsilon),
                DataValue::Regression { x, y } => {
                    let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                    format!("{},{y},{}", xs.join(","), r.epsilon)
                }
            };
            for _ in 0..c {
                writeln!(output, "{row}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(pairs: &[((f64, f64), u32)]) -> Dataset {
        Dataset::from_counts(
            pairs
                .iter()
                .map(|((v, e), c)| (Record::scalar(*v, *e), *c)),
        )
        .unwrap()
    }

    #[test]
    fn add_empty_identity() {
        let empty = Dataset::new();
        assert_eq!(empty.add(&empty).unwrap(), empty);
        let d = ds(&[((1.0, 1.0), 2)]);
        assert_eq!(d.add(&empty).unwrap(), d);
    }

    #[test]
    fn add_pointwise() {
        let a = ds(&[((1.0, 1.0), 2)]);
        let b = ds(&[((1.0, 1.0), 1), ((0.0, 0.0), 1)]);
        let sum = a.add(&b).unwrap();
        assert_eq!(sum, ds(&[((1.0, 1.0), 3), ((0.0, 0.0), 1)]));
        assert_eq!(sum.size(), a.size() + b.size());
    }

    #[test]
    fn subtract_truncates() {
        let a = ds(&[((1.0, 1.0), 3)]);
        assert_eq!(a.subtract(&ds(&[((1.0, 1.0), 1)])), ds(&[((1.0, 1.0), 2)]));
        assert_eq!(
            ds(&[((1.0, 1.0), 1)]).subtract(&ds(&[((1.0, 1.0), 5)])),
            Dataset::new()
        );
        assert_eq!(a.subtract(&Dataset::new()), a);
    }

    #[test]
    fn count_overflow_is_error() {
        let r = Record::scalar(1.0, 1.0);
        let a = Dataset::from_counts([(r.clone(), u32::MAX)]).unwrap();
        let b = Dataset::from_counts([(r, 1)]).unwrap();
        assert!(matches!(a.add(&b), Err(DatasetError::CountOverflow)));
    }

    #[test]
    fn projection_sums_across_eps() {
        let d = ds(&[((1.0, 0.5), 2), ((1.0, 2.0), 3)]);
        let p = d.project_data();
        assert_eq!(p.count(&DataValue::Scalar(1.0)), 5);
        assert_eq!(p.size(), 5);
        assert_eq!(Dataset::new().project_data().size(), 0);

        let d = Dataset::from_counts([
            (Record::scalar(0.0, 0.0), 10),
            (Record::scalar(1.0, 1.0), 10),
            (
                Record::new(DataValue::Scalar(2.0), PrivacyLevel::INFINITE),
                10,
            ),
        ])
        .unwrap();
        let p = d.project_data();
        for v in [0.0, 1.0, 2.0] {
            assert_eq!(p.count(&DataValue::Scalar(v)), 10);
        }
    }

    #[test]
    fn weighted_distance_examples() {
        let eps_weight = |r: &Record| r.epsilon.value();
        let d = ds(&[((0.0, 0.0), 10), ((1.0, 1.0), 10)]);
        assert_eq!(weighted_distance_by(eps_weight, &d, &d), 0.0);

        let d2 = ds(&[((0.0, 0.0), 9), ((1.0, 1.0), 12)]);
        assert_eq!(weighted_distance_by(eps_weight, &d, &d2), 2.0);

        let d3 = d.with_record(Record::scalar(1.0, 1.0)).unwrap();
        assert_eq!(weighted_distance_by(eps_weight, &d, &d3), 1.0);
    }

    #[test]
    fn infinite_weight_on_difference() {
        let d = ds(&[((0.0, 1.0), 1)]);
        let d2 = Dataset::new();
        assert_eq!(
            weighted_distance_by(|_| f64::INFINITY, &d, &d2),
            f64::INFINITY
        );
    }

    #[test]
    fn privacy_level_parsing() {
        assert_eq!(
            "inf".parse::<PrivacyLevel>().unwrap(),
            PrivacyLevel::INFINITE
        );
        assert_eq!("0.5".parse::<PrivacyLevel>().unwrap().value(), 0.5);
        assert!("-1".parse::<PrivacyLevel>().is_err());
    }

    #[test]
    fn csv_scalar_roundtrip() {
        let input = "value,epsilon\n# a comment\n70.25,1.5\n\n70.25,1.5\n80.001,inf\n";
        let d = io::read_scalar(input.as_bytes(), 2).unwrap();
        assert_eq!(d.count(&Record::scalar(70.25, 1.5)), 2);
        assert_eq!(
            d.count(&Record::new(
                DataValue::Scalar(80.0),
                PrivacyLevel::INFINITE
            )),
            1
        );
        let mut buf = Vec::new();
        io::write(&mut buf, &d).unwrap();
        let d2 = io::read_scalar(buf.as_slice(), 2).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn csv_categorical_and_regression() {
        let d = io::read_categorical("label,epsilon\n3,0.5\n3,0.5\n1,5\n".as_bytes()).unwrap();
        assert_eq!(d.count(&Record::categorical(3, 0.5)), 2);
        assert!(io::read_categorical("label,epsilon\n0,1\n".as_bytes()).is_err());

        let d = io::read_regression("x1,x2,y,epsilon\n0.5,-0.25,1,0.1\n".as_bytes(), 2).unwrap();
        assert_eq!(d.size(), 1);
        let (r, _) = d.iter().next().unwrap();
        assert_eq!(
            r.value,
            DataValue::Regression {
                x: vec![0.5, -0.25],
                y: 1.0
            }
        );
    }
}
