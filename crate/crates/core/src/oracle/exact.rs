//! Exact conditional pmfs by convolution, for lattice-valued steps.

use crate::error::{Error, Result};
use crate::model::{HistoryMode, ProcessSpec, SamplePath};
use crate::pmf::PmfTable;

/// Exact pmf of step `n` given an integer history, truncated with certified
/// leftover mass at most `max_leftover`.
///
/// Works whenever the step CGF is assembled from lattice laws: iid sums of
/// lattice units, Lévy increments of lattice families over integer times, and
/// linear terms with integer coefficients.
pub fn exact_step_pmf(process: &ProcessSpec, n: usize, history: &[Vec<f64>], max_leftover: f64) -> Result<PmfTable> {
    if let Some((m, x)) = history
        .iter()
        .enumerate()
        .find(|(_, x)| x.iter().any(|v| v.fract() != 0.0))
    {
        return Err(Error::InvalidHistory(format!(
            "history entry {m} = {x:?} is not integer"
        )));
    }
    let k = process.step_cgf(n, history, HistoryMode::Strict)?;
    match k.lattice_pmf(max_leftover) {
        Some(t) => t,
        None => Err(Error::Unsupported(format!("step {n} is not a lattice law"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactLogPmf {
    /// `Σ_n log P(X_n = x_n | history)`; `−∞` for an impossible path.
    pub log_pmf: f64,
    pub zero_probability: bool,
    /// Sum of the per-step truncation bounds.
    pub leftover: f64,
}

/// Exact log-probability of an integer path, step by step.
pub fn exact_path_logpmf(process: &ProcessSpec, path: &SamplePath, max_leftover: f64) -> Result<ExactLogPmf> {
    let full = process.full_path(path)?;
    let mut log_pmf = 0.0;
    let mut leftover = 0.0;
    for n in 1..=process.n_steps() {
        let x = &full[n];
        if x.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::InvalidHistory(format!("x_{n} = {x:?} is not integer")));
        }
        let table = exact_step_pmf(process, n, &full[..n], max_leftover)?;
        leftover += table.leftover();
        let at: Vec<i64> = x.iter().map(|&v| v as i64).collect();
        let p = table.prob(&at);
        if p == 0.0 {
            let beyond = table.iter().all(|(k, _)| k.iter().zip(&at).any(|(a, b)| b > a));
            if table.leftover() > 0.0 && beyond {
                return Err(Error::Truncation(format!(
                    "x_{n} = {x:?} lies in the truncated tail; lower the truncation bound"
                )));
            }
            return Ok(ExactLogPmf {
                log_pmf: f64::NEG_INFINITY,
                zero_probability: true,
                leftover,
            });
        }
        log_pmf += p.ln();
    }
    Ok(ExactLogPmf {
        log_pmf,
        zero_probability: false,
        leftover,
    })
}
