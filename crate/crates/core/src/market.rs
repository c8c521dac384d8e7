//! Market instances: agent types with Poisson arrival and departure rates,
//! and symmetric match values over unordered type pairs.
//!
//! Instances are read from TOML documents of the form
//!
//! ```toml
//! values = [["a", "b", 1.0], ["a", "a", 0.5]]
//!
//! [[types]]
//! label = "a"
//! arrival_rate = 1.0
//! departure_rate = 1.0
//!
//! [[types]]
//! label = "b"
//! arrival_rate = 2.0
//! departure_rate = "inf"
//! ```
//!
//! Pairs missing from `values` are worth 0. Unknown fields are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-agent departure rate of a type. `Infinite` marks an impatient type
/// whose agents leave at the instant they arrive unless matched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepartureRate {
    Finite(f64),
    Infinite,
}

impl DepartureRate {
    pub fn is_infinite(self) -> bool {
        matches!(self, DepartureRate::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            DepartureRate::Finite(mu) => Some(mu),
            DepartureRate::Infinite => None,
        }
    }
}

impl fmt::Display for DepartureRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepartureRate::Finite(mu) => write!(f, "{mu}"),
            DepartureRate::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentType {
    pub id: usize,
    pub label: String,
    pub arrival_rate: f64,
    pub departure_rate: DepartureRate,
}

/// Match values on unordered type pairs, self-pairs included.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchValueMatrix {
    n: usize,
    // upper triangle, row-major: (x, y) with x <= y
    upper: Vec<f64>,
}

impl MatchValueMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * (n + 1) / 2],
        }
    }

    fn slot(&self, x: usize, y: usize) -> usize {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        // rows 0..a hold n, n-1, ..., n-a+1 entries
        a * self.n - a * (a.saturating_sub(1)) / 2 + (b - a)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.upper[self.slot(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let s = self.slot(x, y);
        self.upper[s] = value;
    }

    /// Unordered pairs `(x, y)` with `x <= y` and their values.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |x| (x..self.n).map(move |y| (x, y, self.get(x, y))))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|v| v * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub type_id: usize,
    pub serial: u64,
}

impl AgentId {
    pub fn new(type_id: usize, serial: u64) -> Self {
        Self { type_id, serial }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.type_id, self.serial)
    }
}

impl std::str::FromStr for AgentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Trace(format!("malformed agent id `{s}`"));
        let (t, n) = s.split_once(':').ok_or_else(bad)?;
        Ok(AgentId {
            type_id: t.parse().map_err(|_| bad())?,
            serial: n.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    pub types: Vec<AgentType>,
    pub values: MatchValueMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &'static str, message: String) {
        self.violations.push(Violation { code, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<_> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.code, v.message))
            .collect();
        f.write_str(&msgs.join("; "))
    }
}

impl MarketInstance {
    /// Builds an instance from `(label, λ, μ)` triples and `(x, y, v)` value entries
    /// given by type index. No validation happens here.
    pub fn new(
        types: impl IntoIterator<Item = (String, f64, DepartureRate)>,
        values: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let types: Vec<AgentType> = types
            .into_iter()
            .enumerate()
            .map(|(id, (label, arrival_rate, departure_rate))| AgentType {
                id,
                label,
                arrival_rate,
                departure_rate,
            })
            .collect();
        let mut matrix = MatchValueMatrix::zeros(types.len());
        for (x, y, v) in values {
            matrix.set(x, y, v);
        }
        Self {
            types,
            values: matrix,
        }
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn arrival_rate(&self, x: usize) -> f64 {
        self.types[x].arrival_rate
    }

    pub fn departure_rate(&self, x: usize) -> DepartureRate {
        self.types[x].departure_rate
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.types.iter().map(|t| t.arrival_rate).sum()
    }

    pub fn label(&self, x: usize) -> &str {
        &self.types[x].label
    }

    pub fn type_index(&self, label: &str) -> Option<usize> {
        self.types.iter().position(|t| t.label == label)
    }

    /// λ_x / μ_x, the constraint-(1) cap on every α_{x·}; exactly 0 for impatient types.
    pub fn pressure(&self, x: usize) -> Result<f64> {
        let t = self.types.get(x).ok_or(Error::TypeIndexOutOfRange {
            index: x,
            count: self.types.len(),
        })?;
        Ok(match t.departure_rate {
            DepartureRate::Finite(mu) => t.arrival_rate / mu,
            DepartureRate::Infinite => 0.0,
        })
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.types.is_empty() {
            report.push("no_types", "instance must have at least one type".into());
        }
        for (i, t) in self.types.iter().enumerate() {
            if t.id != i {
                report.push(
                    "type_id_mismatch",
                    format!("type `{}` has id {} at position {i}", t.label, t.id),
                );
            }
            if !(t.arrival_rate > 0.0 && t.arrival_rate.is_finite()) {
                report.push(
                    "arrival_rate_nonpositive",
                    format!(
                        "type `{}`: arrival_rate must be positive, got {}",
                        t.label, t.arrival_rate
                    ),
                );
            }
            if let DepartureRate::Finite(mu) = t.departure_rate {
                if !(mu > 0.0 && mu.is_finite()) {
                    report.push(
                        "departure_rate_nonpositive",
                        format!(
                            "type `{}`: departure_rate must be positive or inf, got {mu}",
                            t.label
                        ),
                    );
                }
            }
            if self.types[..i].iter().any(|o| o.label == t.label) {
                report.push("duplicate_label", format!("label `{}` used twice", t.label));
            }
        }
        if self.values.len() != self.types.len() {
            report.push(
                "value_matrix_size",
                format!(
                    "value matrix covers {} types, instance has {}",
                    self.values.len(),
                    self.types.len()
                ),
            );
        } else {
            for (x, y, v) in self.values.pairs() {
                if !(v >= 0.0 && v.is_finite()) {
                    report.push(
                        "match_value_negative",
                        format!(
                            "pair ({}, {}): match value must be nonnegative, got {v}",
                            self.types[x].label, self.types[y].label
                        ),
                    );
                }
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(report))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: InstanceDoc = toml::from_str(text).map_err(|e| Error::InstanceParse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        doc.into_instance()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let doc = InstanceDoc {
            values: self
                .values
                .pairs()
                .filter(|&(_, _, v)| v != 0.0)
                .map(|(x, y, v)| {
                    (
                        self.types[x].label.clone(),
                        self.types[y].label.clone(),
                        v,
                    )
                })
                .collect(),
            types: self
                .types
                .iter()
                .map(|t| TypeDoc {
                    label: t.label.clone(),
                    arrival_rate: t.arrival_rate,
                    departure_rate: match t.departure_rate {
                        DepartureRate::Finite(mu) => RateDoc::Number(mu),
                        DepartureRate::Infinite => RateDoc::Text("inf".into()),
                    },
                })
                .collect(),
        };
        toml::to_string(&doc).expect("instance document is always serializable")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    #[serde(default)]
    values: Vec<(String, String, f64)>,
    types: Vec<TypeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeDoc {
    label: String,
    arrival_rate: f64,
    departure_rate: RateDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RateDoc {
    Number(f64),
    Text(String),
}

impl InstanceDoc {
    fn into_instance(self) -> Result<MarketInstance> {
        let parse_err = |message: String| Error::InstanceParse {
            line: None,
            message,
        };
        let mut types = Vec::with_capacity(self.types.len());
        for t in self.types {
            let departure_rate = match t.departure_rate {
                RateDoc::Number(mu) => DepartureRate::Finite(mu),
                RateDoc::Text(s) if s.eq_ignore_ascii_case("inf") => DepartureRate::Infinite,
                RateDoc::Text(s) => {
                    return Err(parse_err(format!(
                        "type `{}`: departure_rate must be a number or \"inf\", got \"{s}\"",
                        t.label
                    )))
                }
            };
            types.push((t.label, t.arrival_rate, departure_rate));
        }
        let mut instance = MarketInstance::new(types, []);
        let mut seen = std::collections::HashSet::new();
        for (a, b, v) in self.values {
            let x = instance
                .type_index(&a)
                .ok_or_else(|| parse_err(format!("values: unknown type label `{a}`")))?;
            let y = instance
                .type_index(&b)
                .ok_or_else(|| parse_err(format!("values: unknown type label `{b}`")))?;
            if !seen.insert((x.min(y), x.max(y))) {
                return Err(parse_err(format!("values: pair ({a}, {b}) given twice")));
            }
            instance.values.set(x, y, v);
        }
        Ok(instance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_type(lambda: f64, mu: DepartureRate, v: f64) -> MarketInstance {
        MarketInstance::new([("x".to_string(), lambda, mu)], [(0, 0, v)])
    }

    #[test]
    fn valid_single_type_has_empty_report() {
        let inst = one_type(1.0, DepartureRate::Finite(1.0), 1.0);
        assert!(inst.validate().is_valid());
    }

    #[test]
    fn zero_arrival_rate_is_reported() {
        let report = one_type(0.0, DepartureRate::Finite(1.0), 1.0).validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, "arrival_rate_nonpositive");
        assert!(report.violations[0]
            .message
            .contains("arrival_rate must be positive"));
    }

    #[test]
    fn negative_value_is_reported() {
        let report = one_type(1.0, DepartureRate::Finite(1.0), -0.5).validate();
        assert_eq!(report.violations[0].code, "match_value_negative");
        assert!(report.violations[0]
            .message
            .contains("match value must be nonnegative"));
    }

    #[test]
    fn empty_instance_is_reported() {
        let inst = MarketInstance::new(Vec::<(String, f64, DepartureRate)>::new(), []);
        assert_eq!(inst.validate().violations[0].code, "no_types");
    }

    #[test]
    fn pressure_examples() {
        let inst = MarketInstance::new(
            [
                ("a".to_string(), 2.0, DepartureRate::Finite(4.0)),
                ("b".to_string(), 1.0, DepartureRate::Infinite),
                ("c".to_string(), 3.0, DepartureRate::Finite(1.0)),
            ],
            [],
        );
        assert_eq!(inst.pressure(0).unwrap(), 0.5);
        assert_eq!(inst.pressure(1).unwrap(), 0.0);
        assert_eq!(inst.pressure(2).unwrap(), 3.0);
        assert!(matches!(
            inst.pressure(3),
            Err(Error::TypeIndexOutOfRange { index: 3, count: 3 })
        ));
    }

    #[test]
    fn value_matrix_is_symmetric() {
        let mut m = MatchValueMatrix::zeros(4);
        m.set(3, 1, 2.5);
        m.set(2, 2, 1.0);
        assert_eq!(m.get(1, 3), 2.5);
        assert_eq!(m.get(3, 1), 2.5);
        assert_eq!(m.get(2, 2), 1.0);
        assert_eq!(m.get(0, 3), 0.0);
        assert_eq!(m.pairs().count(), 10);
    }

    #[test]
    fn parses_documented_format() {
        let text = r#"
values = [["a", "b", 1.0], ["a", "a", 0.5]]

[[types]]
label = "a"
arrival_rate = 1.0
departure_rate = 1.0

[[types]]
label = "b"
arrival_rate = 2.0
departure_rate = "inf"
"#;
        let inst = MarketInstance::from_toml_str(text).unwrap();
        assert_eq!(inst.num_types(), 2);
        assert_eq!(inst.departure_rate(1), DepartureRate::Infinite);
        assert_eq!(inst.values.get(1, 0), 1.0);
        assert_eq!(inst.values.get(0, 0), 0.5);
        assert_eq!(inst.values.get(1, 1), 0.0);
    }

    #[test]
    fn rejects_unknown_fields_with_line() {
        let text = "[[types]]\nlabel = \"a\"\narrival_rate = 1.0\ndeparture_rate = 1.0\npatience = 3\n";
        match MarketInstance::from_toml_str(text) {
            Err(Error::InstanceParse { line, message }) => {
                assert!(message.contains("patience"), "{message}");
                assert!(line.is_some());
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_label_and_duplicates() {
        let base = "[[types]]\nlabel = \"a\"\narrival_rate = 1.0\ndeparture_rate = 1.0\n";
        let unknown = format!("values = [[\"a\", \"z\", 1.0]]\n{base}");
        assert!(MarketInstance::from_toml_str(&unknown).is_err());
        let dup = format!("values = [[\"a\", \"a\", 1.0], [\"a\", \"a\", 2.0]]\n{base}");
        assert!(MarketInstance::from_toml_str(&dup).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = MarketInstance> {
        (1usize..5).prop_flat_map(|n| {
            let rate = prop_oneof![
                4 => (0.01f64..100.0).prop_map(DepartureRate::Finite),
                1 => Just(DepartureRate::Infinite),
            ];
            (
                proptest::collection::vec((0.01f64..100.0, rate), n),
                proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], n * (n + 1) / 2),
            )
                .prop_map(move |(types, vals)| {
                    let mut k = 0;
                    let mut entries = Vec::new();
                    for x in 0..n {
                        for y in x..n {
                            entries.push((x, y, vals[k]));
                            k += 1;
                        }
                    }
                    MarketInstance::new(
                        types
                            .into_iter()
                            .enumerate()
                            .map(|(i, (l, m))| (format!("t{i}"), l, m)),
                        entries,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn toml_round_trip(inst in arb_instance()) {
            let text = inst.to_toml_string();
            let back = MarketInstance::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, inst);
        }

        #[test]
        fn pressure_zero_iff_impatient(inst in arb_instance()) {
            for x in 0..inst.num_types() {
                let p = inst.pressure(x).unwrap();
                match inst.departure_rate(x) {
                    DepartureRate::Infinite => prop_assert_eq!(p, 0.0),
                    DepartureRate::Finite(mu) => {
                        prop_assert_eq!(p, inst.arrival_rate(x) / mu);
                        prop_assert!(p > 0.0);
                    }
                }
            }
        }
    }
}
