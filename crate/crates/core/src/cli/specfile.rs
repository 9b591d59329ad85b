//! TOML process-spec files.
//!
//! ```toml
//! schema_version = 1
//! d0 = 1
//! x0 = [2.0]
//! x0_types = ["integer"]
//!
//! [[steps]]
//! dim = 1
//! value_types = ["integer"]
//! innovation = { kind = "constant", params = [0.0] }
//!
//! [[steps.contributions]]
//! from_step = 0
//! from_coord = 0
//! kind = "iid-sum"
//! unit = { kind = "poisson", params = [1.5] }
//! ```
//!
//! Diagnostics name the offending field (`steps[1].innovation`), plus the
//! line and column for syntax and type errors.

use serde::{Deserialize, Serialize};

use crate::cgf::CgfSpec;
use crate::model::{Contribution, ContributionKind, ProcessSpec, StepSpec, ValueType};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub schema_version: u32,
    /// Dimension of `x0`; optional on input, always written.
    #[serde(default)]
    pub d0: Option<usize>,
    pub x0: Vec<f64>,
    pub x0_types: Vec<ValueType>,
    pub steps: Vec<StepEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub dim: usize,
    pub value_types: Vec<ValueType>,
    pub innovation: CgfSpec,
    #[serde(default)]
    pub contributions: Vec<ContributionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContributionEntry {
    pub from_step: usize,
    /// 0-based coordinate of the source step.
    pub from_coord: usize,
    pub kind: ContributionKind,
    pub unit: CgfSpec,
}

/// A spec file that failed to parse or to build a valid process.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct SpecError {
    /// Field path, prefixed with `line L, column C` when known.
    pub location: String,
    pub message: String,
}

impl SpecError {
    fn at(location: impl Into<String>, message: impl ToString) -> Self {
        SpecError {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn first_line(s: &str) -> String {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or(s).trim().to_string()
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let de = toml::Deserializer::parse(text).map_err(|e| {
            let loc = e.span().map_or("document".to_string(), |sp| {
                let (l, c) = line_col(text, sp.start);
                format!("line {l}, column {c}")
            });
            SpecError::at(loc, e.message())
        })?;
        serde_path_to_error::deserialize::<_, SpecFile>(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner();
            let field = if path == "." { "document".to_string() } else { path };
            let loc = match inner.span() {
                Some(sp) => {
                    let (l, c) = line_col(text, sp.start);
                    format!("{field} (line {l}, column {c})")
                }
                None => field,
            };
            SpecError::at(loc, first_line(inner.message()))
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec files always serialize")
    }

    /// Builds and validates the process.
    pub fn to_process(&self) -> Result<ProcessSpec, SpecError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SpecError::at(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if let Some(d0) = self.d0 {
            if d0 != self.x0.len() {
                return Err(SpecError::at(
                    "d0",
                    format!("{d0} does not match x0 of length {}", self.x0.len()),
                ));
            }
        }
        let mut steps = Vec::with_capacity(self.steps.len());
        for (k, s) in self.steps.iter().enumerate() {
            let innovation = s
                .innovation
                .build()
                .map_err(|e| SpecError::at(format!("steps[{k}].innovation"), e))?;
            let contributions = s
                .contributions
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    Ok(Contribution {
                        source_step: c.from_step,
                        source_coord: c.from_coord,
                        kind: c.kind,
                        unit: c
                            .unit
                            .build()
                            .map_err(|e| SpecError::at(format!("steps[{k}].contributions[{j}].unit"), e))?,
                    })
                })
                .collect::<Result<Vec<_>, SpecError>>()?;
            steps.push(StepSpec {
                dim: s.dim,
                innovation,
                contributions,
                value_types: s.value_types.clone(),
            });
        }
        ProcessSpec::new(self.x0.clone(), self.x0_types.clone(), steps).map_err(|e| SpecError::at("process", e))
    }

    /// Spec file of a process whose CGFs all carry a description.
    pub fn from_process(process: &ProcessSpec) -> Result<Self, SpecError> {
        let spec_of = |loc: String, c: &crate::cgf::CgfExpr| {
            c.spec()
                .ok_or_else(|| SpecError::at(loc, "CGF has no serializable description"))
        };
        let steps = process
            .steps()
            .iter()
            .enumerate()
            .map(|(k, s)| {
                Ok(StepEntry {
                    dim: s.dim,
                    value_types: s.value_types.clone(),
                    innovation: spec_of(format!("steps[{k}].innovation"), &s.innovation)?,
                    contributions: s
                        .contributions
                        .iter()
                        .enumerate()
                        .map(|(j, c)| {
                            Ok(ContributionEntry {
                                from_step: c.source_step,
                                from_coord: c.source_coord,
                                kind: c.kind,
                                unit: spec_of(format!("steps[{k}].contributions[{j}].unit"), &c.unit)?,
                            })
                        })
                        .collect::<Result<Vec<_>, SpecError>>()?,
                })
            })
            .collect::<Result<Vec<_>, SpecError>>()?;
        Ok(SpecFile {
            schema_version: SCHEMA_VERSION,
            d0: Some(process.x0().len()),
            x0: process.x0().to_vec(),
            x0_types: process.x0_types().to_vec(),
            steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::standard_zoo;

    const GW: &str = r#"
schema_version = 1
x0 = [2.0]
x0_types = ["integer"]

[[steps]]
dim = 1
value_types = ["integer"]
innovation = { kind = "constant", params = [0.0] }

[[steps.contributions]]
from_step = 0
from_coord = 0
kind = "iid-sum"
unit = { kind = "poisson", params = [1.5] }
"#;

    #[test]
    fn parses_and_builds() {
        let f = SpecFile::parse(GW).unwrap();
        let p = f.to_process().unwrap();
        assert_eq!(p.n_steps(), 1);
        assert_eq!(p.x0(), &[2.0]);
    }

    #[test]
    fn zoo_round_trips() {
        for m in standard_zoo() {
            let f = SpecFile::from_process(&m.process).unwrap();
            let text = f.to_toml();
            let back = SpecFile::parse(&text).unwrap();
            assert_eq!(back, f, "{}", m.name);
            let again = SpecFile::from_process(&back.to_process().unwrap()).unwrap();
            assert_eq!(again, f, "{}", m.name);
        }
    }

    #[test]
    fn type_error_names_field_and_line() {
        let bad = GW.replace("params = [1.5]", "params = [\"x\"]");
        let e = SpecFile::parse(&bad).unwrap_err();
        assert!(e.location.contains("steps[0].contributions[0].unit.params[0]"), "{e}");
        assert!(e.location.contains("line 15"), "{e}");
    }

    #[test]
    fn missing_field_is_reported() {
        let bad = GW.replace("dim = 1\n", "");
        let e = SpecFile::parse(&bad).unwrap_err();
        assert!(e.to_string().contains("dim"), "{e}");
    }

    #[test]
    fn bad_parameter_names_field() {
        let bad = GW.replace("params = [1.5]", "params = [-1.5]");
        let e = SpecFile::parse(&bad).unwrap().to_process().unwrap_err();
        assert_eq!(e.location, "steps[0].contributions[0].unit");
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = GW.replace("dim = 1\n", "dim = 1\ncolour = 3\n");
        assert!(SpecFile::parse(&bad).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let bad = GW.replace("schema_version = 1", "schema_version = 9");
        let e = SpecFile::parse(&bad).unwrap().to_process().unwrap_err();
        assert_eq!(e.location, "schema_version");
    }
}
