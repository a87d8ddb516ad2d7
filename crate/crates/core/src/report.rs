//! Report building blocks shared by the checking modules.

use serde::{Deserialize, Serialize};

/// A nonnegative value that may be infinite. Serializes as a JSON number or
/// the string "inf" so reports never contain null.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtReal(pub f64);

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal(v)
    }
}

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal(v)),
            Raw::Text(t) if t == "inf" => Ok(ExtReal(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// One verified numerical statement, kept with the two sides that were
/// compared so a report is auditable after the fact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedCheck {
    pub name: String,
    pub lhs: ExtReal,
    pub rhs: ExtReal,
    pub holds: bool,
}

impl NamedCheck {
    /// lhs <= rhs up to an absolute tolerance.
    pub fn le(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        NamedCheck { name: name.into(), lhs: lhs.into(), rhs: rhs.into(), holds: lhs <= rhs + tol }
    }

    /// lhs > rhs strictly.
    pub fn gt(name: &str, lhs: f64, rhs: f64) -> Self {
        NamedCheck { name: name.into(), lhs: lhs.into(), rhs: rhs.into(), holds: lhs > rhs }
    }

    /// |lhs - rhs| <= tol.
    pub fn eq(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        NamedCheck {
            name: name.into(),
            lhs: lhs.into(),
            rhs: rhs.into(),
            holds: (lhs - rhs).abs() <= tol,
        }
    }

    pub fn stating(name: &str, lhs: f64, rhs: f64, holds: bool) -> Self {
        NamedCheck { name: name.into(), lhs: lhs.into(), rhs: rhs.into(), holds }
    }
}

/// A bundle of named checks under one heading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checks: Vec<NamedCheck>,
    pub holds: bool,
}

impl CheckReport {
    pub fn new(name: &str, checks: Vec<NamedCheck>) -> Self {
        let holds = checks.iter().all(|c| c.holds);
        CheckReport { name: name.into(), checks, holds }
    }

    pub fn check(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Passed,
    Failed,
    NotEvaluated,
}

/// One stage of a staged pipeline: its verdict plus the checks behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub status: StageStatus,
    pub checks: Vec<NamedCheck>,
}

impl StageReport {
    pub fn from_checks(name: &str, checks: Vec<NamedCheck>) -> Self {
        let status = if checks.iter().all(|c| c.holds) {
            StageStatus::Passed
        } else {
            StageStatus::Failed
        };
        StageReport { name: name.into(), status, checks }
    }

    pub fn not_evaluated(name: &str, note: NamedCheck) -> Self {
        StageReport { name: name.into(), status: StageStatus::NotEvaluated, checks: vec![note] }
    }

    pub fn passed(&self) -> bool {
        self.status == StageStatus::Passed
    }
}
