//! Reference models used by the batch verifier and the tests.

use crate::cgf::{compound_poisson, constant, independent, make_builtin, CgfExpr};
use crate::error::Result;
use crate::model::{Contribution, ContributionKind, ProcessSpec, StepSpec, ValueType};

#[derive(Debug, Clone)]
pub struct ZooModel {
    pub name: String,
    pub process: ProcessSpec,
}

impl ZooModel {
    pub fn new(name: &str, process: ProcessSpec) -> Self {
        ZooModel {
            name: name.to_string(),
            process,
        }
    }
}

fn builtin(kind: &str, params: &[f64]) -> CgfExpr {
    make_builtin(kind, params).expect("zoo parameters are valid")
}

fn contribution(source_step: usize, source_coord: usize, kind: ContributionKind, unit: CgfExpr) -> Contribution {
    Contribution {
        source_step,
        source_coord,
        kind,
        unit,
    }
}

/// Galton–Watson process: `X_n` is the sum of `X_{n−1}` iid offspring counts.
pub fn galton_watson(offspring: &CgfExpr, x0: u64, n: usize) -> Result<ProcessSpec> {
    let steps = (1..=n)
        .map(|k| StepSpec {
            dim: 1,
            innovation: CgfExpr::zero(1),
            contributions: vec![contribution(k - 1, 0, ContributionKind::IidSum, offspring.clone())],
            value_types: vec![ValueType::Integer],
        })
        .collect();
    ProcessSpec::new(vec![x0 as f64], vec![ValueType::Integer], steps)
}

/// INAR(p) by binomial thinning: `X_n = Σ_j α_j ∘ X_{n−j} + ε_n`.
///
/// `initial` holds the `p` values before step 1, most recent first, and
/// becomes `x_0`. Lags reaching before step 1 read from it.
pub fn inar(alphas: &[f64], innovation: &CgfExpr, initial: &[f64], n: usize) -> Result<ProcessSpec> {
    let p = alphas.len();
    let d0 = initial.len().max(1);
    let mut x0 = initial.to_vec();
    if x0.is_empty() {
        x0.push(0.0);
    }
    let units = alphas
        .iter()
        .map(|&a| make_builtin("bernoulli", &[a]))
        .collect::<Result<Vec<_>>>()?;
    let steps = (1..=n)
        .map(|k| {
            let contributions = (1..=p)
                .filter_map(|j| {
                    let (step, coord) = if j < k { (k - j, 0) } else { (0, j - k) };
                    (step > 0 || coord < d0)
                        .then(|| contribution(step, coord, ContributionKind::IidSum, units[j - 1].clone()))
                })
                .collect();
            StepSpec {
                dim: 1,
                innovation: innovation.clone(),
                contributions,
                value_types: vec![ValueType::Integer],
            }
        })
        .collect();
    ProcessSpec::new(x0, vec![ValueType::Integer; d0], steps)
}

/// Two-type branching with immigration. A type-0 individual has
/// Poisson(0.8) type-0 and Poisson(0.4) type-1 children; a type-1
/// individual has Binomial(2, 0.3) type-0 and Poisson(0.5) type-1 children.
/// Immigration adds Poisson(0.5) and Poisson(0.3).
pub fn two_type(x0: [u64; 2], n: usize) -> Result<ProcessSpec> {
    let from0 = independent(vec![builtin("poisson", &[0.8]), builtin("poisson", &[0.4])]);
    let from1 = independent(vec![builtin("binomial", &[2.0, 0.3]), builtin("poisson", &[0.5])]);
    let immigration = independent(vec![builtin("poisson", &[0.5]), builtin("poisson", &[0.3])]);
    let steps = (1..=n)
        .map(|k| StepSpec {
            dim: 2,
            innovation: immigration.clone(),
            contributions: vec![
                contribution(k - 1, 0, ContributionKind::IidSum, from0.clone()),
                contribution(k - 1, 1, ContributionKind::IidSum, from1.clone()),
            ],
            value_types: vec![ValueType::Integer; 2],
        })
        .collect();
    ProcessSpec::new(vec![x0[0] as f64, x0[1] as f64], vec![ValueType::Integer; 2], steps)
}

/// Nonnegative real-valued process mixing Lévy and linear terms:
/// Gamma(2, 1) innovation, a compound-Poisson(0.6, Gamma(2, 2)) increment
/// over time `X_{n−1}`, the linear term `0.3·X_{n−1}`, and a Gamma(0.4, 1)
/// subordinator increment over time `X_{n−2}`.
pub fn levy_mixed(x0: f64, n: usize) -> Result<ProcessSpec> {
    let jump = compound_poisson(0.6, &builtin("gamma", &[2.0, 2.0]))?;
    let subordinator = builtin("gamma", &[0.4, 1.0]);
    let steps = (1..=n)
        .map(|k| {
            let mut contributions = vec![
                contribution(k - 1, 0, ContributionKind::Levy, jump.clone()),
                contribution(k - 1, 0, ContributionKind::Linear, constant(vec![0.3])),
            ];
            if k >= 2 {
                contributions.push(contribution(k - 2, 0, ContributionKind::Levy, subordinator.clone()));
            }
            StepSpec {
                dim: 1,
                innovation: builtin("gamma", &[2.0, 1.0]),
                contributions,
                value_types: vec![ValueType::NonnegativeReal],
            }
        })
        .collect();
    ProcessSpec::new(vec![x0], vec![ValueType::NonnegativeReal], steps)
}

/// Gaussian AR(2): `X_n = 0.6 X_{n−1} − 0.2 X_{n−2} + N(0.5, 1.2)`.
pub fn gaussian_ar(x0: f64, n: usize) -> Result<ProcessSpec> {
    let steps = (1..=n)
        .map(|k| {
            let mut contributions = vec![contribution(k - 1, 0, ContributionKind::Linear, constant(vec![0.6]))];
            if k >= 2 {
                contributions.push(contribution(k - 2, 0, ContributionKind::Linear, constant(vec![-0.2])));
            }
            StepSpec {
                dim: 1,
                innovation: builtin("gaussian", &[0.5, 1.2]),
                contributions,
                value_types: vec![ValueType::Real],
            }
        })
        .collect();
    ProcessSpec::new(vec![x0], vec![ValueType::Real], steps)
}

/// Poisson(2) first step followed by a step that is the constant 1.
pub fn zero_variance() -> Result<ProcessSpec> {
    let steps = vec![
        StepSpec {
            dim: 1,
            innovation: builtin("poisson", &[2.0]),
            contributions: vec![],
            value_types: vec![ValueType::Integer],
        },
        StepSpec {
            dim: 1,
            innovation: constant(vec![1.0]),
            contributions: vec![],
            value_types: vec![ValueType::Integer],
        },
    ];
    ProcessSpec::new(vec![1.0], vec![ValueType::Integer], steps)
}

/// The models the factorization check runs over by default.
pub fn standard_zoo() -> Vec<ZooModel> {
    let poisson2 = builtin("poisson", &[2.0]);
    let build = || -> Result<Vec<ZooModel>> {
        Ok(vec![
            ZooModel::new("gw-poisson", galton_watson(&builtin("poisson", &[1.5]), 2, 5)?),
            ZooModel::new("gw-binomial", galton_watson(&builtin("binomial", &[3.0, 0.45]), 2, 5)?),
            ZooModel::new("gw-geometric", galton_watson(&builtin("geometric", &[0.45]), 3, 5)?),
            ZooModel::new("inar1", inar(&[0.5], &poisson2, &[3.0], 6)?),
            ZooModel::new("inar2", inar(&[0.3, 0.2], &poisson2, &[3.0, 2.0], 6)?),
            ZooModel::new("inar3", inar(&[0.25, 0.2, 0.15], &poisson2, &[3.0, 2.0, 4.0], 6)?),
            ZooModel::new("two-type", two_type([3, 2], 4)?),
            ZooModel::new("levy-mixed", levy_mixed(1.5, 5)?),
        ])
    };
    build().expect("zoo models are valid")
}

/// The standard zoo plus the Gaussian and zero-variance models.
pub fn extended_zoo() -> Vec<ZooModel> {
    let mut zoo = standard_zoo();
    zoo.push(ZooModel::new("gaussian-ar", gaussian_ar(0.3, 5).expect("valid")));
    zoo.push(ZooModel::new("zero-variance", zero_variance().expect("valid")));
    zoo
}
