//! Saddlepoint equations and saddlepoint approximations.
//!
//! The saddlepoint `ŝ` for a target `x` minimizes the convex function
//! `K(s) − s·x`; the density (or pmf) approximation is
//!
//! ```text
//! f̂(x) = exp(K(ŝ) − ŝ·x) / √det(2π K″(ŝ))
//! ```
//!
//! [`spa_joint`] applies this to the joint conditional CGF of a process,
//! [`spa_stepwise`] to each conditional step CGF separately.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::cgf::{CgfExpr, CgfValue};
use crate::error::{Error, Result};
use crate::model::{HistoryMode, ProcessSpec, SamplePath};

/// Below this ratio of smallest to largest Hessian eigenvalue the Hessian is
/// treated as singular.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Iterates with `|s|∞` beyond this are taken as escaping to infinity.
const ESCAPE_RADIUS: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Convergence when `|K′(s) − x|∞ ≤ grad_tol · (1 + |x|∞)`.
    pub grad_tol: f64,
    /// Step shrink factor of the backtracking line search, in `(0, 1)`.
    pub backtrack: f64,
    /// Starting tilt; zero when `None`.
    pub initial: Option<Vec<f64>>,
    /// Fraction of the distance to a finite domain face a single step may cover.
    pub domain_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            grad_tol: 1e-10,
            backtrack: 0.5,
            initial: None,
            domain_shrink: 0.9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.grad_tol > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.domain_shrink > 0.0
            && self.domain_shrink <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::param("solver config", format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaStatus {
    Converged,
    DegenerateHessian,
    NoSolution,
    DomainLimited,
}

impl SpaStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaStatus::Converged => "converged",
            SpaStatus::DegenerateHessian => "degenerate-hessian",
            SpaStatus::NoSolution => "no-solution",
            SpaStatus::DomainLimited => "domain-limited",
        }
    }

    pub fn is_converged(self) -> bool {
        self == SpaStatus::Converged
    }
}

impl std::fmt::Display for SpaStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddlepointResult {
    pub shat: Vec<f64>,
    /// `K(ŝ) − ŝ·x`.
    pub objective: f64,
    /// `|K′(ŝ) − x|∞`.
    pub grad_residual: f64,
    pub hessian: DMatrix<f64>,
    /// `log det(2π K″(ŝ))`, when the Hessian is positive definite.
    pub log_det: Option<f64>,
    pub log_spa: Option<f64>,
    pub spa: Option<f64>,
    pub status: SpaStatus,
    pub iterations: usize,
    /// Objective at every accepted iterate, starting point included.
    pub objective_trace: Vec<f64>,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Objective and gradient of `K(s) − s·x` from a CGF evaluation.
fn objective(v: &CgfValue, s: &[f64], x: &[f64]) -> (f64, DVector<f64>) {
    let sx: f64 = s.iter().zip(x).map(|(a, b)| a * b).sum();
    let g = &v.grad - DVector::from_column_slice(x);
    (v.value - sx, g)
}

/// `log det(2πH)` if `H` is positive definite and not numerically singular.
pub fn log_det_2pi(h: &DMatrix<f64>) -> Option<f64> {
    if h.nrows() == 0 {
        return Some(0.0);
    }
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) || max <= 0.0 || min <= DEGENERACY_THRESHOLD * max {
        return None;
    }
    let chol = h.clone().cholesky()?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Some(h.nrows() as f64 * (2.0 * PI).ln() + log_det)
}

/// Newton direction `−H⁻¹g`, regularized when `H` is not safely positive
/// definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if log_det_2pi(h).is_some() {
        if let Some(chol) = h.clone().cholesky() {
            return -chol.solve(g);
        }
    }
    let d = h.nrows();
    let scale = h.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    let mut mu = 1e-10 * scale;
    loop {
        let reg = h + DMatrix::identity(d, d) * mu;
        if let Some(chol) = reg.cholesky() {
            return -chol.solve(g);
        }
        mu *= 10.0;
    }
}

/// Status of an iterate where the gradient vanishes.
///
/// A Hessian singular relative to its own scale (including identically zero)
/// is a degenerate law. A Hessian that is not singular in relative terms but
/// has vanishing curvature in absolute terms marks a target on the edge of
/// the support: the iterate has run off toward infinity until `K′` rounded
/// onto the target.
fn classify(h: &DMatrix<f64>, x: &[f64]) -> SpaStatus {
    if log_det_2pi(h).is_none() {
        return SpaStatus::DegenerateHessian;
    }
    let min = SymmetricEigen::new(h.clone()).eigenvalues.min();
    if min <= DEGENERACY_THRESHOLD * (1.0 + sup_norm(x)) {
        SpaStatus::NoSolution
    } else {
        SpaStatus::Converged
    }
}

/// One full Newton step from a converged iterate, kept only if it lowers the
/// gradient residual without raising the objective beyond rounding.
#[allow(clippy::too_many_arguments)]
fn polish(
    k: &CgfExpr,
    x: &[f64],
    s: &mut Vec<f64>,
    v: &mut CgfValue,
    f: &mut f64,
    g: &mut DVector<f64>,
    dir: &DVector<f64>,
    trace: &mut Vec<f64>,
) {
    if dir.iter().all(|d| *d == 0.0) {
        return;
    }
    let trial: Vec<f64> = s.iter().zip(dir.iter()).map(|(a, b)| a + b).collect();
    if let Ok(tv) = k.eval(&trial) {
        let (tf, tg) = objective(&tv, &trial, x);
        if sup_norm(tg.as_slice()) < sup_norm(g.as_slice()) && tf <= *f + 1e-13 * (1.0 + f.abs()) {
            *s = trial;
            *v = tv;
            *f = tf;
            *g = tg;
            trace.push(tf);
        }
    }
}

/// Solves `K′(ŝ) = x` by damped Newton iteration on `K(s) − s·x`.
///
/// Steps are backtracked until they stay inside the domain and do not
/// increase the objective. Failure to converge is reported through
/// [`SaddlepointResult::status`]; an `Err` is only returned for malformed
/// input or an unevaluable starting point.
pub fn solve_saddlepoint(k: &CgfExpr, x: &[f64], cfg: &SolverConfig) -> Result<SaddlepointResult> {
    cfg.validate()?;
    let d = k.dim();
    if x.len() != d {
        return Err(Error::dims("saddlepoint target", d, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("saddlepoint target", "must be finite"));
    }
    let mut s = cfg.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    if s.len() != d {
        return Err(Error::dims("initial tilt", d, s.len()));
    }
    let domain = k.domain();
    let tol = cfg.grad_tol * (1.0 + sup_norm(x));

    let mut v = k.eval(&s)?;
    let (mut f, mut g) = objective(&v, &s, x);
    let mut trace = vec![f];
    let mut status = SpaStatus::NoSolution;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let residual = sup_norm(g.as_slice());
        let dir = newton_direction(&v.hess, &g);
        // A small gradient alone is not enough: along an escape direction the
        // gradient decays while Newton steps stay long.
        if residual <= tol && sup_norm(dir.as_slice()) <= 1e-6 * (1.0 + sup_norm(&s)) {
            polish(k, x, &mut s, &mut v, &mut f, &mut g, &dir, &mut trace);
            status = classify(&v.hess, x);
            break;
        }
        iterations += 1;
        let slope = g.dot(&dir);
        let mut t = 1.0f64.min(cfg.domain_shrink * domain.max_step(&s, dir.as_slice()));
        let mut accepted = None;
        let mut hit_domain = false;
        for _ in 0..80 {
            let trial: Vec<f64> = s.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            match k.eval(&trial) {
                Ok(tv) => {
                    let (tf, tg) = objective(&tv, &trial, x);
                    let armijo = tf <= f + 1e-4 * t * slope;
                    // Near the optimum the decrease drops below rounding in f;
                    // accept then on a smaller gradient instead.
                    let flat = slope.abs() <= 1e-13 * (1.0 + f.abs())
                        && tf <= f + 1e-13 * (1.0 + f.abs())
                        && sup_norm(tg.as_slice()) < residual;
                    if armijo || flat {
                        accepted = Some((trial, tv, tf, tg));
                        break;
                    }
                }
                Err(_) => hit_domain = true,
            }
            t *= cfg.backtrack;
        }
        match accepted {
            Some((ns, nv, nf, ng)) => {
                s = ns;
                v = nv;
                f = nf;
                g = ng;
                trace.push(f);
                if !f.is_finite() || sup_norm(&s) > ESCAPE_RADIUS {
                    status = SpaStatus::NoSolution;
                    break;
                }
            }
            None => {
                status = if hit_domain || domain.relative_gap_to_boundary(&s) < 1e-8 {
                    SpaStatus::DomainLimited
                } else {
                    SpaStatus::NoSolution
                };
                break;
            }
        }
    }
    let grad_residual = sup_norm(g.as_slice());
    let log_det = if status == SpaStatus::Converged {
        log_det_2pi(&v.hess)
    } else {
        None
    };
    let log_spa = log_det.map(|ld| f - 0.5 * ld);
    Ok(SaddlepointResult {
        shat: s,
        objective: f,
        grad_residual,
        hessian: v.hess,
        log_det,
        log_spa,
        spa: log_spa.map(f64::exp),
        status,
        iterations,
        objective_trace: trace,
    })
}

/// Multivariate SPA of the whole path on the joint conditional CGF.
pub fn spa_joint(process: &ProcessSpec, path: &SamplePath, cfg: &SolverConfig) -> Result<SaddlepointResult> {
    process.check_path(path)?;
    solve_saddlepoint(&process.joint_cgf(), &path.flatten(), cfg)
}

/// Product of per-step SPAs of the conditional step laws.
#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseResult {
    pub steps: Vec<SaddlepointResult>,
    /// `Σ_n log f̂_n`, defined when every step converged.
    pub log_spa: Option<f64>,
    pub spa: Option<f64>,
    /// Converged if all steps converged; otherwise the status of the first
    /// failing step, preferring a missing solution over a degenerate Hessian.
    pub status: SpaStatus,
}

pub fn spa_stepwise(
    process: &ProcessSpec,
    path: &SamplePath,
    cfg: &SolverConfig,
    mode: HistoryMode,
) -> Result<StepwiseResult> {
    let cgfs = process.step_cgfs(path, mode)?;
    let steps = cgfs
        .iter()
        .zip(&path.values)
        .enumerate()
        .map(|(k, (c, x))| solve_saddlepoint(c, x, cfg).map_err(|e| e.at_step(k + 1)))
        .collect::<Result<Vec<_>>>()?;
    let log_spa = steps.iter().map(|r| r.log_spa).sum::<Option<f64>>();
    let status = aggregate_status(steps.iter().map(|r| r.status));
    Ok(StepwiseResult {
        spa: log_spa.map(f64::exp),
        log_spa,
        status,
        steps,
    })
}

fn aggregate_status(statuses: impl Iterator<Item = SpaStatus>) -> SpaStatus {
    let all: Vec<SpaStatus> = statuses.collect();
    all.iter()
        .copied()
        .find(|s| matches!(s, SpaStatus::NoSolution | SpaStatus::DomainLimited))
        .or_else(|| all.iter().copied().find(|s| !s.is_converged()))
        .unwrap_or(SpaStatus::Converged)
}

/// Both routes of a path, solved independently, compared at their critical
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceReport {
    /// `T(ŝ)` for the joint saddlepoint `ŝ`.
    pub tau_from_joint: Vec<f64>,
    /// Per-step saddlepoints, concatenated.
    pub tau_stepwise: Vec<f64>,
    /// `|T(ŝ) − τ̂|∞`.
    pub gap: f64,
    pub joint_numerator: f64,
    pub stepwise_numerator: f64,
    pub joint_log_det: f64,
    pub stepwise_log_det: f64,
    pub matched: bool,
}

/// Tolerance on `|T(ŝ) − τ̂|∞` for [`CorrespondenceReport::matched`].
pub const CORRESPONDENCE_TOL: f64 = 1e-8;

pub fn saddle_correspondence(
    process: &ProcessSpec,
    path: &SamplePath,
    cfg: &SolverConfig,
) -> Result<CorrespondenceReport> {
    let joint = spa_joint(process, path, cfg)?;
    let steps = spa_stepwise(process, path, cfg, HistoryMode::Extension)?;
    correspondence_from(process, &joint, &steps)
}

/// Builds the correspondence report from already solved routes.
pub fn correspondence_from(
    process: &ProcessSpec,
    joint: &SaddlepointResult,
    steps: &StepwiseResult,
) -> Result<CorrespondenceReport> {
    if !joint.status.is_converged() || !steps.status.is_converged() {
        return Err(Error::Inconsistent(format!(
            "correspondence needs two converged solves (joint {}, stepwise {})",
            joint.status, steps.status
        )));
    }
    let tau_from_joint = process.t_map(&joint.shat)?;
    let tau_stepwise: Vec<f64> = steps.steps.iter().flat_map(|r| r.shat.iter().copied()).collect();
    let gap = tau_from_joint
        .iter()
        .zip(&tau_stepwise)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    Ok(CorrespondenceReport {
        gap,
        matched: gap <= CORRESPONDENCE_TOL,
        joint_numerator: joint.objective,
        stepwise_numerator: steps.steps.iter().map(|r| r.objective).sum(),
        joint_log_det: joint.log_det.unwrap_or(f64::NAN),
        stepwise_log_det: steps.steps.iter().filter_map(|r| r.log_det).sum(),
        tau_from_joint,
        tau_stepwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::make_builtin;

    fn solve(kind: &str, params: &[f64], x: f64) -> SaddlepointResult {
        let k = make_builtin(kind, params).unwrap();
        solve_saddlepoint(&k, &[x], &SolverConfig::default()).unwrap()
    }

    #[test]
    fn gaussian_is_exact() {
        let r = solve("gaussian", &[0.0, 1.0], 1.7);
        assert_eq!(r.status, SpaStatus::Converged);
        assert!((r.shat[0] - 1.7).abs() < 1e-12);
        let exact = (-1.445f64).exp() / (2.0 * PI).sqrt();
        assert!((r.spa.unwrap() / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_closed_form() {
        let r = solve("poisson", &[2.0], 3.0);
        assert!((r.shat[0] - 1.5f64.ln()).abs() < 1e-12);
        let expected = 1.0 - 3.0 * 1.5f64.ln() - 0.5 * (6.0 * PI).ln();
        assert!((r.log_spa.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn poisson_at_zero_has_no_saddlepoint() {
        let r = solve("poisson", &[2.0], 0.0);
        assert!(matches!(r.status, SpaStatus::NoSolution | SpaStatus::DomainLimited));
        assert!(r.spa.is_none());
    }

    #[test]
    fn objective_never_increases() {
        for (kind, params, x) in [
            ("geometric", vec![0.3], 40.0),
            ("gamma", vec![2.0, 1.0], 0.01),
            ("binomial", vec![10.0, 0.2], 9.5),
            ("negative-binomial", vec![3.0, 0.5], 0.2),
        ] {
            let r = solve(kind, &params, x);
            assert_eq!(r.status, SpaStatus::Converged, "{kind}");
            for w in r.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{kind}: {w:?}");
            }
        }
    }

    #[test]
    fn support_edge_has_no_saddlepoint() {
        // K′ of binomial(3, 0.45) rounds onto 3 long before s is infinite
        let r = solve("binomial", &[3.0, 0.45], 3.0);
        assert_eq!(r.status, SpaStatus::NoSolution);
        let r = solve("binomial", &[3.0, 0.45], 0.0);
        assert_eq!(r.status, SpaStatus::NoSolution);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let r = solve("constant", &[2.0], 2.0);
        assert_eq!(r.status, SpaStatus::DegenerateHessian);
        let r = solve("constant", &[2.0], 3.0);
        assert_eq!(r.status, SpaStatus::NoSolution);
    }

    #[test]
    fn bounded_domain_stays_inside() {
        // gamma(2, 1) at a large target pushes ŝ toward the face at s = 1
        let r = solve("gamma", &[2.0, 1.0], 1e6);
        assert_eq!(r.status, SpaStatus::Converged);
        assert!(r.shat[0] < 1.0);
        assert!((r.shat[0] - (1.0 - 2e-6)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig {
            backtrack: 1.5,
            ..SolverConfig::default()
        };
        let k = make_builtin("poisson", &[1.0]).unwrap();
        assert!(solve_saddlepoint(&k, &[1.0], &cfg).is_err());
    }
}
