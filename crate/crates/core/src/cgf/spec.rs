use serde::{Deserialize, Serialize};

use super::{cgf_scale, cgf_sum, compound, compound_poisson, independent, make_builtin, CgfExpr};
use crate::error::{Error, Result};

/// Serializable description of a CGF: a builtin leaf or a composition.
///
/// Composite kinds are `sum`, `independent`, `scaled` (params `[t]`, one
/// part), `compound-poisson` (params `[rate]`, one jump part) and `compound`
/// (parts `[count, jump]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgfSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<CgfSpec>,
}

impl CgfSpec {
    pub fn leaf(kind: &str, params: Vec<f64>) -> Self {
        CgfSpec {
            kind: kind.to_string(),
            params,
            parts: Vec::new(),
        }
    }

    pub fn composite(kind: &str, params: Vec<f64>, parts: Vec<CgfSpec>) -> Self {
        CgfSpec {
            kind: kind.to_string(),
            params,
            parts,
        }
    }

    pub fn build(&self) -> Result<CgfExpr> {
        let kind = self.kind.as_str();
        let parts = || self.parts.iter().map(CgfSpec::build).collect::<Result<Vec<_>>>();
        let one_part = || -> Result<CgfExpr> {
            match self.parts.as_slice() {
                [p] => p.build(),
                _ => Err(Error::param(
                    kind,
                    format!("expected one part, got {}", self.parts.len()),
                )),
            }
        };
        let one_param = || -> Result<f64> {
            match self.params.as_slice() {
                [t] if t.is_finite() => Ok(*t),
                _ => Err(Error::param(kind, "expected one finite parameter")),
            }
        };
        match kind {
            "sum" => {
                let parts = parts()?;
                let dim = parts
                    .first()
                    .map(CgfExpr::dim)
                    .ok_or_else(|| Error::param(kind, "needs at least one part"))?;
                cgf_sum(dim, parts)
            }
            "independent" => {
                let parts = parts()?;
                if parts.is_empty() {
                    return Err(Error::param(kind, "needs at least one part"));
                }
                Ok(independent(parts))
            }
            "scaled" => {
                let t = one_param()?;
                Ok(cgf_scale(&one_part()?, t))
            }
            "compound-poisson" => compound_poisson(one_param()?, &one_part()?),
            "compound" => match self.parts.as_slice() {
                [count, jump] => compound(&count.build()?, &jump.build()?),
                _ => Err(Error::param(kind, "expected parts [count, jump]")),
            },
            _ => {
                if !self.parts.is_empty() {
                    return Err(Error::param(kind, "builtin kinds take no parts"));
                }
                make_builtin(kind, &self.params)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositions_round_trip() {
        let spec = CgfSpec::composite(
            "sum",
            vec![],
            vec![
                CgfSpec::leaf("poisson", vec![1.0]),
                CgfSpec::composite(
                    "compound-poisson",
                    vec![0.6],
                    vec![CgfSpec::leaf("gamma", vec![2.0, 2.0])],
                ),
                CgfSpec::composite("scaled", vec![2.0], vec![CgfSpec::leaf("bernoulli", vec![0.3])]),
            ],
        );
        let built = spec.build().unwrap();
        assert_eq!(built.spec().unwrap(), spec);
        let mean = built.mean().unwrap()[0];
        assert!((mean - (1.0 + 0.6 + 0.6)).abs() < 1e-14);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(CgfSpec::leaf("cauchy", vec![0.0, 1.0]).build().is_err());
        assert!(CgfSpec::composite("scaled", vec![1.0], vec![]).build().is_err());
    }
}
