//! INAR(p) parameter fitting with the saddlepoint likelihood.
//!
//! The conditional law of each observation given the previous `p` is a sum
//! of binomial thinnings and an innovation, and its SPA serves as the
//! likelihood contribution. An observation of 0 sits on the edge of the
//! support where no saddlepoint exists; there the exact mass `P(Q_n = 0)`,
//! the limit of `K(s)` as `s → −∞`, is used instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::zoo::inar;
use crate::cgf::{make_builtin, CgfExpr};
use crate::error::{Error, Result};
use crate::model::{HistoryMode, ProcessSpec, SamplePath};
use crate::solver::{solve_saddlepoint, spa_joint, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnovationFamily {
    Poisson,
    Geometric,
    NegativeBinomial,
}

impl InnovationFamily {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "poisson" => Ok(InnovationFamily::Poisson),
            "geometric" => Ok(InnovationFamily::Geometric),
            "negative-binomial" => Ok(InnovationFamily::NegativeBinomial),
            other => Err(Error::param(
                other,
                "innovation family must be poisson, geometric or negative-binomial",
            )),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InnovationFamily::Poisson => "poisson",
            InnovationFamily::Geometric => "geometric",
            InnovationFamily::NegativeBinomial => "negative-binomial",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            InnovationFamily::Poisson => &["rate"],
            InnovationFamily::Geometric => &["p"],
            InnovationFamily::NegativeBinomial => &["r", "p"],
        }
    }

    fn bounds(self) -> Vec<(f64, f64)> {
        let prob = (1e-6, 1.0 - 1e-6);
        let positive = (1e-6, 1e6);
        match self {
            InnovationFamily::Poisson => vec![positive],
            InnovationFamily::Geometric => vec![prob],
            InnovationFamily::NegativeBinomial => vec![positive, prob],
        }
    }

    pub fn build(self, params: &[f64]) -> Result<CgfExpr> {
        make_builtin(self.name(), params)
    }

    /// Parameters whose innovation mean is `m`.
    fn params_for_mean(self, m: f64) -> Vec<f64> {
        let m = m.max(0.05);
        match self {
            InnovationFamily::Poisson => vec![m],
            InnovationFamily::Geometric => vec![1.0 / (1.0 + m)],
            InnovationFamily::NegativeBinomial => vec![1.0, 1.0 / (1.0 + m)],
        }
    }
}

/// Which side of the factorization the likelihood is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodRoute {
    /// Product of per-step SPAs.
    Stepwise,
    /// Joint SPA over each maximal run of nonzero observations, conditioned
    /// on the `p` values before the run.
    Joint,
}

fn check_series(series: &[f64], p: usize) -> Result<()> {
    if series.len() <= p {
        return Err(Error::InvalidHistory(format!(
            "series of length {} is too short for order {p}",
            series.len()
        )));
    }
    if let Some((i, v)) = series
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.fract() == 0.0))
    {
        return Err(Error::InvalidHistory(format!(
            "entry {i} = {v} is not a nonnegative integer"
        )));
    }
    Ok(())
}

/// The `p` values before index `t`, most recent first.
fn lags(series: &[f64], t: usize, p: usize) -> Vec<f64> {
    (1..=p).map(|j| series[t - j]).collect()
}

fn model_for(series: &[f64], start: usize, len: usize, alphas: &[f64], innovation: &CgfExpr) -> Result<ProcessSpec> {
    inar(alphas, innovation, &lags(series, start, alphas.len()), len)
}

/// SPA log-likelihood of `series[p..]` given the first `p` values.
pub fn inar_log_likelihood(
    series: &[f64],
    alphas: &[f64],
    family: InnovationFamily,
    params: &[f64],
    route: LikelihoodRoute,
    cfg: &SolverConfig,
) -> Result<f64> {
    let p = alphas.len();
    check_series(series, p)?;
    let innovation = family.build(params)?;
    let n = series.len() - p;
    let process = model_for(series, p, n, alphas, &innovation)?;
    let full: Vec<Vec<f64>> = std::iter::once(process.x0().to_vec())
        .chain(series[p..].iter().map(|&v| vec![v]))
        .collect();
    let zero_mass = |k: usize| -> Result<f64> {
        process
            .step_cgf(k, &full[..k], HistoryMode::Extension)?
            .log_mass_at_zero()
            .ok_or_else(|| Error::Unsupported("innovation without a mass at zero".into()))
    };
    let mut ll = 0.0;
    match route {
        LikelihoodRoute::Stepwise => {
            for k in 1..=n {
                let x = full[k][0];
                if x == 0.0 {
                    ll += zero_mass(k)?;
                    continue;
                }
                let cgf = process.step_cgf(k, &full[..k], HistoryMode::Extension)?;
                match solve_saddlepoint(&cgf, &[x], cfg)?.log_spa {
                    Some(l) => ll += l,
                    None => return Ok(f64::NEG_INFINITY),
                }
            }
        }
        LikelihoodRoute::Joint => {
            let mut k = 1;
            while k <= n {
                if full[k][0] == 0.0 {
                    ll += zero_mass(k)?;
                    k += 1;
                    continue;
                }
                let end = (k..=n).find(|&j| full[j][0] == 0.0).unwrap_or(n + 1);
                let start = p + k - 1;
                let run = model_for(series, start, end - k, alphas, &innovation)?;
                let path = SamplePath::scalar(&series[start..start + end - k]);
                match spa_joint(&run, &path, cfg)?.log_spa {
                    Some(l) => ll += l,
                    None => return Ok(f64::NEG_INFINITY),
                }
                k = end;
            }
        }
    }
    Ok(ll)
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Stop when the simplex values agree within `ftol · (1 + |best|)` ...
    pub ftol: f64,
    /// ... and its vertices lie within `xtol` of the best one.
    pub xtol: f64,
    pub solver: SolverConfig,
    /// Starting parameters `(α_1, …, α_p, innovation…)`.
    pub initial: Option<Vec<f64>>,
    /// Seeds a small random displacement of the starting point.
    pub jitter_seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 2000,
            ftol: 1e-11,
            xtol: 1e-7,
            solver: SolverConfig::default(),
            initial: None,
            jitter_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub alphas: Vec<f64>,
    pub innovation: Vec<f64>,
    pub family: InnovationFamily,
    pub log_likelihood: f64,
    /// Best log-likelihood after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Names of parameters that ended within 1e-3 of a box bound.
    pub at_bounds: Vec<String>,
    /// Whether the last 50 iterations improved the log-likelihood by less
    /// than 1e-8 in total while the simplex stayed wide.
    pub flat: bool,
}

impl FitResult {
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.alphas.len()).map(|j| format!("alpha_{j}")).collect();
        names.extend(self.family.param_names().iter().map(|s| s.to_string()));
        names
    }
}

/// Maximizes the stepwise SPA log-likelihood by Nelder–Mead over the box
/// `α_j ∈ [0, 1]` and the innovation parameter ranges.
pub fn fit_inar(series: &[f64], p: usize, family: InnovationFamily, cfg: &FitConfig) -> Result<FitResult> {
    check_series(series, p)?;
    let mut bounds = vec![(0.0, 1.0); p];
    bounds.extend(family.bounds());
    let dim = bounds.len();

    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let mut x0 = match &cfg.initial {
        Some(v) if v.len() == dim => v.clone(),
        Some(v) => return Err(Error::dims("initial fit parameters", dim, v.len())),
        None => {
            let a = if p == 0 { 0.0 } else { 0.2 / p as f64 };
            let mut v = vec![a; p];
            v.extend(family.params_for_mean(mean * (1.0 - a * p as f64)));
            v
        }
    };
    if let Some(seed) = cfg.jitter_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut x0 {
            *v *= 1.0 + rng.random_range(-0.05..0.05);
        }
    }
    let clamp = |x: &mut Vec<f64>| {
        for (v, (lo, hi)) in x.iter_mut().zip(&bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    clamp(&mut x0);

    let objective = |x: &[f64]| -> f64 {
        match inar_log_likelihood(series, &x[..p], family, &x[p..], LikelihoodRoute::Stepwise, &cfg.solver) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };

    // initial simplex
    let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
    for i in 0..dim {
        let mut v = x0.clone();
        let (lo, hi) = bounds[i];
        let step = if i < p { 0.1 } else { 0.2 * v[i].abs().max(0.05) };
        v[i] = if v[i] + step <= hi {
            v[i] + step
        } else {
            (v[i] - step).max(lo)
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(v)).collect();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(Error::Optimizer(
            "no finite log-likelihood at the starting simplex".into(),
        ));
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(-values[0]);

        let spread = values[dim] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread.is_finite() && spread <= cfg.ftol * (1.0 + values[0].abs()) && size <= cfg.xtol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp(&mut x);
            x
        };
        let xr = toward(-1.0);
        let fr = objective(&xr);
        if fr < values[0] {
            let xe = toward(-2.0);
            let fe = objective(&xe);
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[dim] {
            let x = toward(-0.5);
            let f = objective(&x);
            (x, f)
        } else {
            let x = toward(0.5);
            let f = objective(&x);
            (x, f)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = xc;
            values[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=dim {
            let mut x: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            clamp(&mut x);
            values[i] = objective(&x);
            simplex[i] = x;
        }
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let x = simplex[best].clone();
    let log_likelihood = -values[best];
    if !log_likelihood.is_finite() {
        return Err(Error::Optimizer(
            "log-likelihood is not finite at the end of the search".into(),
        ));
    }
    let mut names: Vec<String> = (1..=p).map(|j| format!("alpha_{j}")).collect();
    names.extend(family.param_names().iter().map(|s| s.to_string()));
    let at_bounds = names
        .iter()
        .zip(&x)
        .zip(&bounds)
        .filter(|((_, v), (lo, hi))| (**v - lo).abs() < 1e-3 || (hi - **v).abs() < 1e-3)
        .map(|((n, _), _)| n.clone())
        .collect();
    let flat = trace.len() > 50
        && {
            let tail = &trace[trace.len() - 50..];
            tail[tail.len() - 1] - tail[0] < 1e-8
        }
        && !converged;
    Ok(FitResult {
        alphas: x[..p].to_vec(),
        innovation: x[p..].to_vec(),
        family,
        log_likelihood,
        trace,
        iterations,
        converged,
        at_bounds,
        flat,
    })
}
