//! Exponential tilting of distributions and of whole processes.
//!
//! Tilting a law with CGF `K` by `s` reweights it by `e^{s·x}/M(s)`. The
//! tilted CGF is `σ ↦ K(s + σ) − K(s)`, its mean `K′(s)`, its covariance
//! `K″(s)`, and its relative entropy to the base law is `s·K′(s) − K(s)`.
//! At the saddlepoint the SPA can be written as
//! `exp(−H) / √det(2π Var)` in terms of the tilted law alone.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cgf::{cgf_scale, cgf_sum, cgf_tilt, CgfExpr};
use crate::error::{Error, Result};
use crate::model::{Contribution, HistoryMode, ProcessSpec, SamplePath, StepSpec};
use crate::pmf::{dot_lattice, PmfTable};
use crate::solver::{log_det_2pi, solve_saddlepoint, spa_joint, SaddlepointResult, SolverConfig};

/// Seed of the pseudo-random probe points used by the CGF equality checks.
pub const PROBE_SEED: u64 = 0x7117_5eed;
pub const PROBE_COUNT: usize = 16;

/// The law of `X^{(s)}`, represented through its CGF.
#[derive(Debug, Clone)]
pub struct TiltedView {
    pub base: CgfExpr,
    pub s: Vec<f64>,
    /// `σ ↦ K(s + σ) − K(s)`.
    pub cgf: CgfExpr,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// `s·K′(s) − K(s)`.
    pub relent: f64,
}

pub fn tilt(base: &CgfExpr, s: &[f64]) -> Result<TiltedView> {
    let v = base.eval(s)?;
    let mean: Vec<f64> = v.grad.iter().copied().collect();
    let relent = dot(s, &mean) - v.value;
    Ok(TiltedView {
        base: base.clone(),
        s: s.to_vec(),
        cgf: cgf_tilt(base, s)?,
        mean,
        covariance: v.hess,
        relent,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative entropy of the `s`-tilt of a finite pmf table to the table itself,
/// summed term by term: `Σ w_k log(w_k / p_k)` with `w_k = p_k e^{s·k} / M(s)`.
pub fn relent_direct(table: &PmfTable, s: &[f64]) -> Result<f64> {
    table.validate(1e-12)?;
    if s.len() != table.dim() {
        return Err(Error::dims("tilt", table.dim(), s.len()));
    }
    let log_m = table.cgf(s);
    let mut h = 0.0;
    for (k, p) in table.iter() {
        if p == 0.0 {
            continue;
        }
        let log_ratio = dot_lattice(s, k) - log_m;
        let w = p * log_ratio.exp();
        h += w * log_ratio;
    }
    Ok(h)
}

/// SPA at `x` computed from the tilted law at the saddlepoint:
/// `log f̂ = −H(X^{(ŝ)} ‖ X) − ½ log det(2π Var X^{(ŝ)})`.
pub fn spa_via_tilting(k: &CgfExpr, x: &[f64], cfg: &SolverConfig) -> Result<SaddlepointResult> {
    let mut r = solve_saddlepoint(k, x, cfg)?;
    if !r.status.is_converged() {
        return Ok(r);
    }
    let view = tilt(k, &r.shat)?;
    let log_det = log_det_2pi(&view.covariance);
    r.log_det = log_det;
    r.log_spa = log_det.map(|ld| -view.relent - 0.5 * ld);
    r.spa = r.log_spa.map(f64::exp);
    Ok(r)
}

/// Deterministic probe points `σ` in a box of half-width `radius`.
pub fn probe_points(dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    (0..PROBE_COUNT)
        .map(|_| (0..dim).map(|_| rng.random_range(-radius..radius)).collect())
        .collect()
}

/// Largest `|a(σ) − b(σ)|` over the probe points, shrinking a probe toward 0
/// until both CGFs evaluate. Probes that never evaluate are skipped.
pub fn max_probe_gap(a: &CgfExpr, b: &CgfExpr, radius: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dims("probe comparison", a.dim(), b.dim()));
    }
    let mut gap = 0.0f64;
    for mut p in probe_points(a.dim(), radius) {
        for _ in 0..40 {
            if let (Ok(va), Ok(vb)) = (a.value(&p), b.value(&p)) {
                gap = gap.max((va - vb).abs());
                break;
            }
            p.iter_mut().for_each(|v| *v *= 0.5);
        }
    }
    Ok(gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanTiltReport {
    pub mean_gap: f64,
    pub means_equal: bool,
    /// Largest CGF gap between the two tilted laws on the probes.
    pub probe_gap: f64,
    /// Means equal implies tilted CGFs equal (within 1e-10).
    pub implication_holds: bool,
    /// Whether `σ ↦ (s̃ − s)·K′(s + σ(s̃ − s))` increases strictly on `(0, 1)`;
    /// `None` when the direction is degenerate (zero variance along it).
    pub strictly_monotone: Option<bool>,
}

/// Checks that two tilts with the same mean give the same law, and the
/// monotonicity behind it.
pub fn mean_determines_tilt_check(base: &CgfExpr, s: &[f64], s_tilde: &[f64]) -> Result<MeanTiltReport> {
    let a = tilt(base, s)?;
    let b = tilt(base, s_tilde)?;
    let mean_gap = a
        .mean
        .iter()
        .zip(&b.mean)
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let means_equal = mean_gap <= 1e-12 * (1.0 + a.mean.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let probe_gap = max_probe_gap(&a.cgf, &b.cgf, 0.25)?;
    let implication_holds = !means_equal || probe_gap <= 1e-10;

    let dir: Vec<f64> = s_tilde.iter().zip(s).map(|(p, q)| p - q).collect();
    let curvature = |t: f64| -> Result<f64> {
        let at: Vec<f64> = s.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
        let v = base.eval(&at)?;
        let hd = &v.hess * nalgebra::DVector::from_column_slice(&dir);
        Ok(dot(&dir, hd.as_slice()))
    };
    let strictly_monotone = if dir.iter().all(|d| *d == 0.0) || curvature(0.5)? <= 0.0 {
        None
    } else {
        let grid = 32;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for j in 1..grid {
            let t = j as f64 / grid as f64;
            let at: Vec<f64> = s.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let phi = dot(&dir, base.eval(&at)?.grad.as_slice());
            ok &= phi > prev;
            prev = phi;
        }
        Some(ok)
    };
    Ok(MeanTiltReport {
        mean_gap,
        means_equal,
        probe_gap,
        implication_holds,
        strictly_monotone,
    })
}

/// Tilt of one step of a process by `s_n`.
#[derive(Debug, Clone)]
pub struct TiltedStep {
    pub n: usize,
    pub s: Vec<f64>,
    /// The step law given the history, tilted as a whole.
    pub view: TiltedView,
    pub innovation: TiltedView,
    /// Tilted unit laws, in the step's contribution order. Their CGFs are
    /// `σ ↦ g(s + σ) − g(s)` entry by entry.
    pub units: Vec<TiltedView>,
    /// `H(ξ^{(s)}) + Σ [s·g′(s) − g(s)]·x_{m,i}`.
    pub relent: f64,
    /// `E ξ^{(s)} + Σ E Z(1)^{(s)}·x_{m,i}`.
    pub mean: Vec<f64>,
    history: Vec<Vec<f64>>,
    contributions: Vec<Contribution>,
}

impl TiltedStep {
    /// CGF of the step assembled from the tilted parts: the tilted innovation
    /// plus the tilted units compounded over the history.
    pub fn compounded_cgf(&self) -> Result<CgfExpr> {
        let mut parts = vec![self.innovation.cgf.clone()];
        for (c, u) in self.contributions.iter().zip(&self.units) {
            parts.push(cgf_scale(&u.cgf, self.history[c.source_step][c.source_coord]));
        }
        cgf_sum(self.s.len(), parts)
    }

    /// `g̃_{n,m}(σ) = g_{n,m}(s + σ) − g_{n,m}(s)`.
    pub fn g_tilde(&self, m: usize, sigma: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.history[m].len()];
        for (c, u) in self.contributions.iter().zip(&self.units) {
            if c.source_step == m {
                out[c.source_coord] += u.cgf.value(sigma)?;
            }
        }
        Ok(out)
    }
}

/// Tilts step `n` with history `[x_0, …, x_{n−1}]` (any reals) by `s_n`.
pub fn tilt_step(process: &ProcessSpec, n: usize, history: &[Vec<f64>], s_n: &[f64]) -> Result<TiltedStep> {
    let step_cgf = process.step_cgf(n, history, HistoryMode::Extension)?;
    let view = tilt(&step_cgf, s_n)?;
    let step = process.step(n);
    let innovation = tilt(&step.innovation, s_n)?;
    let units = step
        .contributions
        .iter()
        .map(|c| tilt(&c.unit, s_n))
        .collect::<Result<Vec<_>>>()?;
    let mut relent = innovation.relent;
    let mut mean = innovation.mean.clone();
    for (c, u) in step.contributions.iter().zip(&units) {
        let x = history[c.source_step][c.source_coord];
        relent += u.relent * x;
        for (m, um) in mean.iter_mut().zip(&u.mean) {
            *m += um * x;
        }
    }
    Ok(TiltedStep {
        n,
        s: s_n.to_vec(),
        view,
        innovation,
        units,
        relent,
        mean,
        history: history.to_vec(),
        contributions: step.contributions.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct TiltedProcessReport {
    pub s: Vec<f64>,
    /// `τ_1, …, τ_N`.
    pub tau: Vec<Vec<f64>>,
    /// Step `n` of the tilted process: innovation and units tilted by `τ_n`.
    pub tilted_process: ProcessSpec,
    pub innovations: Vec<TiltedView>,
    pub units: Vec<Vec<TiltedView>>,
    /// `x̃_0 = x_0, x̃_1, …, x̃_N`, the means of the tilted process.
    pub tilted_means: Vec<Vec<f64>>,
    /// Relative entropy of each tilted step law evaluated at the tilted means.
    pub step_relents: Vec<f64>,
    pub total_relent_decomposed: f64,
    /// `s·K′(s) − K(s)` on the joint CGF.
    pub total_relent_joint: f64,
    /// `|x̃ − K′(s)|∞` over steps `1..N`.
    pub mean_gap: f64,
    /// Largest gap between the tilted process's joint CGF and the tilted
    /// joint CGF on the probes.
    pub probe_gap: f64,
}

impl TiltedProcessReport {
    pub fn relent_gap(&self) -> f64 {
        (self.total_relent_decomposed - self.total_relent_joint).abs()
    }
}

/// Tilts a whole process by the joint tilt `s`.
///
/// The tilted process keeps `x_0` and the step structure, with step `n`'s
/// innovation and units tilted by `τ_n(s)`. Its joint CGF is compared with
/// the directly tilted joint CGF, and the joint relative entropy is computed
/// both directly and as the sum of step relative entropies at the tilted
/// means.
pub fn tilt_process(process: &ProcessSpec, s: &[f64]) -> Result<TiltedProcessReport> {
    let tau_all = process.tau_map(s)?;
    let tau: Vec<Vec<f64>> = tau_all[1..].to_vec();
    let joint = process.joint_cgf();
    let at = joint.eval(s)?;

    let mut steps = Vec::with_capacity(process.n_steps());
    let mut innovations = Vec::with_capacity(process.n_steps());
    let mut units = Vec::with_capacity(process.n_steps());
    for (k, step) in process.steps().iter().enumerate() {
        let t = &tau[k];
        let innov = tilt(&step.innovation, t).map_err(|e| e.at_step(k + 1))?;
        let us = step
            .contributions
            .iter()
            .map(|c| tilt(&c.unit, t))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_step(k + 1))?;
        steps.push(StepSpec {
            dim: step.dim,
            innovation: innov.cgf.clone(),
            contributions: step
                .contributions
                .iter()
                .zip(&us)
                .map(|(c, u)| Contribution {
                    unit: u.cgf.clone(),
                    ..c.clone()
                })
                .collect(),
            value_types: step.value_types.clone(),
        });
        innovations.push(innov);
        units.push(us);
    }
    let tilted_process = ProcessSpec::new(process.x0().to_vec(), process.x0_types().to_vec(), steps)?;

    let mut tilted_means = vec![process.x0().to_vec()];
    let mut step_relents = Vec::with_capacity(process.n_steps());
    for (k, step) in process.steps().iter().enumerate() {
        let mut mean = innovations[k].mean.clone();
        let mut relent = innovations[k].relent;
        for (c, u) in step.contributions.iter().zip(&units[k]) {
            let x = tilted_means[c.source_step][c.source_coord];
            relent += u.relent * x;
            for (m, um) in mean.iter_mut().zip(&u.mean) {
                *m += um * x;
            }
        }
        tilted_means.push(mean);
        step_relents.push(relent);
    }
    let flat_means: Vec<f64> = tilted_means[1..].iter().flatten().copied().collect();
    let mean_gap = flat_means
        .iter()
        .zip(at.grad.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let total_relent_joint = dot(s, at.grad.as_slice()) - at.value;
    let probe_gap = max_probe_gap(&tilted_process.joint_cgf(), &cgf_tilt(&joint, s)?, 0.25)?;

    Ok(TiltedProcessReport {
        s: s.to_vec(),
        tau,
        tilted_process,
        innovations,
        units,
        total_relent_decomposed: step_relents.iter().sum(),
        tilted_means,
        step_relents,
        total_relent_joint,
        mean_gap,
        probe_gap,
    })
}

/// Covariance factorization of a two-step path at its joint saddlepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceWitness {
    /// `det K″_X(ŝ)`.
    pub det_joint: f64,
    /// `det K″_{Q_1}(τ̂_1) · det K″_{Q_2}(τ̂_2)`.
    pub det_blocks: f64,
    /// Relative Frobenius distance between `L·diag·Lᵀ` and `K″_X(ŝ)`.
    pub factorization_residual: f64,
}

impl VarianceWitness {
    pub fn det_relative_gap(&self) -> f64 {
        (self.det_joint - self.det_blocks).abs() / self.det_joint.abs().max(self.det_blocks.abs())
    }
}

/// For `N = 2`, writes the tilted joint covariance at the saddlepoint as
///
/// ```text
/// [[I, 0], [A, I]] · diag(K″_{Q_1}(τ̂_1), K″_{Q_2}(τ̂_2)) · [[I, Aᵀ], [0, I]]
/// ```
///
/// with column `i` of `A` equal to `∇g_{2,1,i}(τ̂_2)`, and compares
/// determinants.
pub fn variance_factorization_witness(
    process: &ProcessSpec,
    path: &SamplePath,
    cfg: &SolverConfig,
) -> Result<VarianceWitness> {
    if process.n_steps() != 2 {
        return Err(Error::Unsupported(
            "the variance witness is built for two-step processes".into(),
        ));
    }
    let joint = spa_joint(process, path, cfg)?;
    if !joint.status.is_converged() {
        return Err(Error::Inconsistent(format!("joint saddlepoint: {}", joint.status)));
    }
    let tau = process.tau_map(&joint.shat)?;
    let steps = process.step_cgfs(path, HistoryMode::Extension)?;
    let h1 = steps[0].eval(&tau[1])?.hess;
    let h2 = steps[1].eval(&tau[2])?.hess;
    let (d1, d2) = (process.dim(1), process.dim(2));

    let seeds = crate::taylor::TaylorScalar::seeds(&tau[2]);
    let g = process.g_map_taylor(2, 1, &seeds)?;
    let mut a = DMatrix::zeros(d2, d1);
    for (i, gi) in g.iter().enumerate() {
        a.set_column(i, &gi.grad);
    }
    let d = d1 + d2;
    let mut l = DMatrix::identity(d, d);
    l.view_mut((d1, 0), (d2, d1)).copy_from(&a);
    let mut mid = DMatrix::zeros(d, d);
    mid.view_mut((0, 0), (d1, d1)).copy_from(&h1);
    mid.view_mut((d1, d1), (d2, d2)).copy_from(&h2);
    let rebuilt = &l * mid * l.transpose();
    let residual = (&rebuilt - &joint.hessian).norm() / joint.hessian.norm();

    Ok(VarianceWitness {
        det_joint: joint.hessian.determinant(),
        det_blocks: h1.determinant() * h2.determinant(),
        factorization_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::make_builtin;

    #[test]
    fn poisson_tilt_closed_form() {
        let v = tilt(&make_builtin("poisson", &[2.0]).unwrap(), &[3f64.ln()]).unwrap();
        assert!((v.mean[0] - 6.0).abs() < 1e-13);
        assert!((v.covariance[(0, 0)] - 6.0).abs() < 1e-13);
        assert!((v.relent - (6.0 * 3f64.ln() - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian_relent() {
        let v = tilt(&make_builtin("gaussian", &[0.0, 1.0]).unwrap(), &[1.2]).unwrap();
        assert!((v.relent - 0.72).abs() < 1e-15);
    }

    #[test]
    fn zero_tilt_is_identity() {
        let base = make_builtin("geometric", &[0.4]).unwrap();
        let v = tilt(&base, &[0.0]).unwrap();
        assert_eq!(v.relent, 0.0);
        assert!(max_probe_gap(&v.cgf, &base, 0.2).unwrap() < 1e-15);
    }

    #[test]
    fn relent_direct_examples() {
        let fair = PmfTable::scalar([(0, 0.5), (1, 0.5)], 0.0);
        assert_eq!(relent_direct(&fair, &[0.0]).unwrap(), 0.0);
        let point = PmfTable::point(vec![3]);
        assert!(relent_direct(&point, &[1.7]).unwrap().abs() < 1e-15);
        let bad = PmfTable::scalar([(0, 0.5), (1, 0.4)], 0.0);
        assert!(relent_direct(&bad, &[0.1]).is_err());
    }

    #[test]
    fn at_the_mean_only_the_determinant_remains() {
        let k = make_builtin("poisson", &[2.0]).unwrap();
        let r = spa_via_tilting(&k, &[2.0], &SolverConfig::default()).unwrap();
        assert!((r.log_spa.unwrap() + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn distinct_poisson_tilts_have_distinct_means() {
        let k = make_builtin("poisson", &[1.3]).unwrap();
        let r = mean_determines_tilt_check(&k, &[0.1], &[0.4]).unwrap();
        assert!(!r.means_equal);
        assert_eq!(r.strictly_monotone, Some(true));
        let same = mean_determines_tilt_check(&k, &[0.3], &[0.3]).unwrap();
        assert!(same.means_equal && same.implication_holds);
        assert_eq!(same.strictly_monotone, None);
    }

    #[test]
    fn constant_law_ignores_tilt() {
        let k = make_builtin("constant", &[2.5]).unwrap();
        let r = mean_determines_tilt_check(&k, &[-1.0], &[3.0]).unwrap();
        assert!(r.means_equal && r.implication_holds);
        assert!(r.probe_gap < 1e-14);
        assert_eq!(r.strictly_monotone, None);
    }
}
