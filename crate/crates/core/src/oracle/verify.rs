//! Batch check that the joint and stepwise SPAs of a path agree.

use rand::Rng;
use rayon::prelude::*;

use super::exact::exact_path_logpmf;
use super::simulate::{path_rng, simulate_with};
use super::zoo::ZooModel;
use crate::error::Result;
use crate::model::{ContributionKind, HistoryMode, ProcessSpec, SamplePath, ValueType};
use crate::solver::{
    correspondence_from, log_det_2pi, spa_joint, spa_stepwise, SolverConfig, SpaStatus, CORRESPONDENCE_TOL,
};

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub paths_per_model: usize,
    pub seed: u64,
    /// Bound on `|lhs − rhs| / (1 + |rhs|)` for the log SPAs.
    pub tol: f64,
    pub solver: SolverConfig,
    pub mode: HistoryMode,
    /// Also compute the exact log-pmf where the model allows it.
    pub exact_oracle: bool,
    /// Test hook: multiplies the (0, 0) entry of the joint Hessian by
    /// `1 + ε` before the joint log SPA is formed.
    pub perturb_hessian: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            paths_per_model: 50,
            seed: 7,
            tol: 1e-10,
            solver: SolverConfig::default(),
            mode: HistoryMode::Extension,
            exact_oracle: false,
            perturb_hessian: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    pub model: String,
    pub path_index: usize,
    pub path: SamplePath,
    /// Joint log SPA.
    pub lhs_log: Option<f64>,
    /// Sum of stepwise log SPAs.
    pub rhs_log: Option<f64>,
    pub rel_gap: Option<f64>,
    pub status_lhs: SpaStatus,
    pub status_rhs: SpaStatus,
    /// `|T(ŝ) − τ̂|∞` when both sides converged.
    pub corr_gap: Option<f64>,
    pub exact_log: Option<f64>,
    /// Set when a side could not be evaluated at all.
    pub error: Option<String>,
}

impl VerificationRecord {
    pub fn status_parity(&self) -> bool {
        self.status_lhs.is_converged() == self.status_rhs.is_converged()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationSummary {
    pub records: Vec<VerificationRecord>,
    pub max_rel_gap: f64,
    pub max_corr_gap: f64,
    pub converged_pairs: usize,
    pub status_disagreements: usize,
    pub gap_violations: usize,
    pub tol: f64,
}

impl VerificationSummary {
    pub fn passed(&self) -> bool {
        self.status_disagreements == 0
            && self.gap_violations == 0
            && self.max_corr_gap <= CORRESPONDENCE_TOL
            && self.records.iter().all(|r| r.error.is_none())
    }

    pub fn summary_line(&self) -> String {
        format!(
            "records={} converged={} max_rel_gap={:.3e} max_corr_gap={:.3e} status_disagreements={} gap_violations={} result={}",
            self.records.len(),
            self.converged_pairs,
            self.max_rel_gap,
            self.max_corr_gap,
            self.status_disagreements,
            self.gap_violations,
            if self.passed() { "pass" } else { "fail" }
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,path,lhs_log,rhs_log,rel_gap,status_lhs,status_rhs,corr_gap\n");
        for r in &self.records {
            let path: Vec<String> = r.path.flatten().iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.model,
                path.join(" "),
                fmt_opt(r.lhs_log),
                fmt_opt(r.rhs_log),
                fmt_opt(r.rel_gap),
                r.status_lhs,
                r.status_rhs,
                fmt_opt(r.corr_gap)
            ));
        }
        out
    }
}

/// 17 significant digits, or `NaN` when missing.
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => "NaN".to_string(),
    }
}

/// Builds a path whose every step sits three conditional standard deviations
/// away from its conditional mean, with a random sign per coordinate.
pub fn tail_path(process: &ProcessSpec, rng: &mut impl Rng) -> Result<SamplePath> {
    let mut full = vec![process.x0().to_vec()];
    for n in 1..=process.n_steps() {
        let k = process.step_cgf(n, &full, HistoryMode::Extension)?;
        let mean = k.mean()?;
        let cov = k.covariance()?;
        let types = process.value_types(n);
        // linear terms are a hard floor under nonnegative real coordinates
        let mut floor = vec![0.0; mean.len()];
        for c in process
            .step(n)
            .contributions
            .iter()
            .filter(|c| c.kind == ContributionKind::Linear)
        {
            for (f, m) in floor.iter_mut().zip(c.unit.mean()?) {
                *f += m * full[c.source_step][c.source_coord];
            }
        }
        let x = (0..mean.len())
            .map(|i| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let raw = mean[i] + sign * 3.0 * cov[(i, i)].max(0.0).sqrt();
                match types[i] {
                    ValueType::Integer => raw.round().max(if mean[i] >= 1.0 { 1.0 } else { 0.0 }),
                    ValueType::NonnegativeReal => raw.max(floor[i] + 0.05 * (mean[i] - floor[i])),
                    ValueType::Real => raw,
                }
            })
            .collect();
        full.push(x);
    }
    full.remove(0);
    Ok(SamplePath::new(full))
}

/// Paths used for one model: about two thirds simulated, the rest tail paths.
pub fn select_paths(process: &ProcessSpec, model_index: usize, count: usize, seed: u64) -> Result<Vec<SamplePath>> {
    let n_sim = (2 * count).div_ceil(3);
    (0..count)
        .map(|j| {
            let stream = ((model_index as u64) << 32) | j as u64;
            let mut rng = path_rng(seed, stream);
            if j < n_sim {
                simulate_with(process, &mut rng)
            } else {
                tail_path(process, &mut rng)
            }
        })
        .collect()
}

/// Both routes for one path.
pub fn verify_path(
    model: &str,
    process: &ProcessSpec,
    path_index: usize,
    path: &SamplePath,
    cfg: &VerifyConfig,
) -> VerificationRecord {
    let mut record = VerificationRecord {
        model: model.to_string(),
        path_index,
        path: path.clone(),
        lhs_log: None,
        rhs_log: None,
        rel_gap: None,
        status_lhs: SpaStatus::NoSolution,
        status_rhs: SpaStatus::NoSolution,
        corr_gap: None,
        exact_log: None,
        error: None,
    };
    let joint = match spa_joint(process, path, &cfg.solver) {
        Ok(j) => j,
        Err(e) => {
            record.error = Some(format!("joint: {e}"));
            return record;
        }
    };
    let steps = match spa_stepwise(process, path, &cfg.solver, cfg.mode) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(format!("stepwise: {e}"));
            return record;
        }
    };
    record.status_lhs = joint.status;
    record.status_rhs = steps.status;
    record.lhs_log = match cfg.perturb_hessian {
        Some(eps) if joint.status.is_converged() => {
            let mut h = joint.hessian.clone();
            h[(0, 0)] *= 1.0 + eps;
            log_det_2pi(&h).map(|ld| joint.objective - 0.5 * ld)
        }
        _ => joint.log_spa,
    };
    record.rhs_log = steps.log_spa;
    if let (Some(l), Some(r)) = (record.lhs_log, record.rhs_log) {
        record.rel_gap = Some((l - r).abs() / (1.0 + r.abs()));
    }
    if joint.status.is_converged() && steps.status.is_converged() {
        match correspondence_from(process, &joint, &steps) {
            Ok(c) => record.corr_gap = Some(c.gap),
            Err(e) => record.error = Some(format!("correspondence: {e}")),
        }
    }
    if cfg.exact_oracle {
        record.exact_log = exact_path_logpmf(process, path, 1e-13).ok().map(|e| e.log_pmf);
    }
    record
}

/// Runs both routes over `paths_per_model` paths of every model. Paths are
/// evaluated in parallel; records come back in model-then-path order.
pub fn verify_factorization(zoo: &[ZooModel], cfg: &VerifyConfig) -> Result<VerificationSummary> {
    let mut jobs = Vec::new();
    for (mi, model) in zoo.iter().enumerate() {
        for (j, path) in select_paths(&model.process, mi, cfg.paths_per_model, cfg.seed)?
            .into_iter()
            .enumerate()
        {
            jobs.push((mi, j, path));
        }
    }
    let records: Vec<VerificationRecord> = jobs
        .par_iter()
        .map(|(mi, j, path)| verify_path(&zoo[*mi].name, &zoo[*mi].process, *j, path, cfg))
        .collect();
    Ok(summarize(records, cfg.tol))
}

pub fn summarize(records: Vec<VerificationRecord>, tol: f64) -> VerificationSummary {
    let max_rel_gap = records.iter().filter_map(|r| r.rel_gap).fold(0.0, f64::max);
    let max_corr_gap = records.iter().filter_map(|r| r.corr_gap).fold(0.0, f64::max);
    let converged_pairs = records
        .iter()
        .filter(|r| r.status_lhs.is_converged() && r.status_rhs.is_converged())
        .count();
    let status_disagreements = records.iter().filter(|r| !r.status_parity()).count();
    let gap_violations = records.iter().filter(|r| r.rel_gap.is_some_and(|g| g > tol)).count();
    VerificationSummary {
        records,
        max_rel_gap,
        max_corr_gap,
        converged_pairs,
        status_disagreements,
        gap_violations,
        tol,
    }
}
