//! Recursively compounded processes.
//!
//! Step `n` of a process is
//!
//! ```text
//! Q_n(x_0, …, x_{n−1}) = ξ_n + Σ_{m<n} Σ_i Z_{n,m,i}(x_{m,i})
//! ```
//!
//! where each contribution `Z_{n,m,i}` is an iid sum, a Lévy increment or a
//! linear term driven by coordinate `i` of an earlier step. Steps are indexed
//! `1..=N`; step `0` is the fixed initial state `x_0`. Coordinates inside a
//! step are 0-based.
//!
//! Given the history, the step CGF is affine in it:
//! `K_{Q_n}(s) = K_{ξ_n}(s) + Σ_m g_{n,m}(s)·x_m` with `g_{n,m,i}` the unit CGF
//! of the contribution from `(m, i)`. The joint conditional CGF of
//! `(X_1, …, X_N)` given `X_0 = x_0` is obtained from the back-to-front
//! recursion
//!
//! ```text
//! τ_N = s_N,   τ_m = s_m + Σ_{n>m} g_{n,m}(τ_n),   (s_0 = 0)
//! K(s) = τ_0·x_0 + Σ_n K_{ξ_n}(τ_n)
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cgf::{cgf_scale, cgf_sum, Cgf, CgfExpr, CgfValue, Domain};
use crate::error::{Error, Result};
use crate::taylor::TaylorScalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueType {
    /// Nonnegative integers.
    Integer,
    NonnegativeReal,
    Real,
}

impl ValueType {
    pub fn admits(self, x: f64) -> bool {
        match self {
            ValueType::Integer => x >= 0.0 && x.fract() == 0.0,
            ValueType::NonnegativeReal => x >= 0.0 && x.is_finite(),
            ValueType::Real => x.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContributionKind {
    /// Sum of `x` iid copies of the unit.
    IidSum,
    /// Lévy process increment over time `x`.
    Levy,
    /// Deterministic `x·c`.
    Linear,
}

/// One term `Z_{n,m,i}` of a step, driven by coordinate `source_coord` of
/// step `source_step`. `unit` is the CGF of `Z(1)`; for linear terms it is the
/// CGF of the constant `c`.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub source_step: usize,
    pub source_coord: usize,
    pub kind: ContributionKind,
    pub unit: CgfExpr,
}

#[derive(Debug, Clone)]
pub struct StepSpec {
    pub dim: usize,
    pub innovation: CgfExpr,
    pub contributions: Vec<Contribution>,
    pub value_types: Vec<ValueType>,
}

/// Whether step CGFs accept history values outside a contribution's natural
/// range (negative or fractional counts). Extension applies the affine
/// formula verbatim, which the tilted-mean computations rely on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum HistoryMode {
    #[default]
    Extension,
    Strict,
}

#[derive(Debug, Clone)]
pub struct ProcessSpec {
    x0: Vec<f64>,
    x0_types: Vec<ValueType>,
    steps: Vec<StepSpec>,
    offsets: Vec<usize>,
}

/// Observed values `x_1, …, x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub values: Vec<Vec<f64>>,
}

impl SamplePath {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        SamplePath { values }
    }

    /// Scalar path: one coordinate per step.
    pub fn scalar(values: &[f64]) -> Self {
        SamplePath {
            values: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl ProcessSpec {
    pub fn new(x0: Vec<f64>, x0_types: Vec<ValueType>, steps: Vec<StepSpec>) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::InvalidModel("x0 must have at least one coordinate".into()));
        }
        if x0_types.len() != x0.len() {
            return Err(Error::dims("x0 value types", x0.len(), x0_types.len()));
        }
        if let Some(i) = (0..x0.len()).find(|&i| !x0_types[i].admits(x0[i])) {
            return Err(Error::InvalidModel(format!(
                "x0[{i}] = {} is not a valid {:?} value",
                x0[i], x0_types[i]
            )));
        }
        if steps.is_empty() {
            return Err(Error::InvalidModel("a process needs at least one step".into()));
        }
        let mut dims = vec![x0.len()];
        let mut types = vec![x0_types.clone()];
        for (k, step) in steps.iter().enumerate() {
            let n = k + 1;
            if step.dim == 0 {
                return Err(Error::InvalidModel(format!("step {n} has dimension 0")));
            }
            if step.innovation.dim() != step.dim {
                return Err(Error::dims(
                    &format!("step {n} innovation"),
                    step.dim,
                    step.innovation.dim(),
                ));
            }
            if step.value_types.len() != step.dim {
                return Err(Error::dims(
                    &format!("step {n} value types"),
                    step.dim,
                    step.value_types.len(),
                ));
            }
            for (j, c) in step.contributions.iter().enumerate() {
                let at = format!("step {n} contribution {j}");
                if c.source_step >= n {
                    return Err(Error::InvalidModel(format!(
                        "{at}: source step {} is not earlier than {n}",
                        c.source_step
                    )));
                }
                if c.source_coord >= dims[c.source_step] {
                    return Err(Error::InvalidModel(format!(
                        "{at}: source coordinate {} out of range for step {} of dimension {}",
                        c.source_coord, c.source_step, dims[c.source_step]
                    )));
                }
                if c.unit.dim() != step.dim {
                    return Err(Error::dims(&format!("{at} unit"), step.dim, c.unit.dim()));
                }
                let source = types[c.source_step][c.source_coord];
                let ok = match c.kind {
                    ContributionKind::IidSum => source == ValueType::Integer,
                    ContributionKind::Levy => source != ValueType::Real,
                    ContributionKind::Linear => true,
                };
                if !ok {
                    return Err(Error::InvalidModel(format!(
                        "{at}: {:?} contribution needs a {} source, but ({}, {}) is {:?}",
                        c.kind,
                        if c.kind == ContributionKind::IidSum {
                            "integer"
                        } else {
                            "nonnegative"
                        },
                        c.source_step,
                        c.source_coord,
                        source
                    )));
                }
                if c.kind == ContributionKind::Linear {
                    let var = c.unit.covariance()?;
                    if var.iter().any(|&v| v != 0.0) {
                        return Err(Error::InvalidModel(format!("{at}: linear unit must be a constant")));
                    }
                }
            }
            dims.push(step.dim);
            types.push(step.value_types.clone());
        }
        let mut offsets = Vec::with_capacity(steps.len() + 1);
        let mut off = 0;
        for s in &steps {
            offsets.push(off);
            off += s.dim;
        }
        offsets.push(off);
        Ok(ProcessSpec {
            x0,
            x0_types,
            steps,
            offsets,
        })
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn x0_types(&self) -> &[ValueType] {
        &self.x0_types
    }

    pub fn steps(&self) -> &[StepSpec] {
        &self.steps
    }

    /// Step `n` for `n` in `1..=N`.
    pub fn step(&self, n: usize) -> &StepSpec {
        &self.steps[n - 1]
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// `d_n`, with `d_0 = len(x_0)`.
    pub fn dim(&self, n: usize) -> usize {
        if n == 0 {
            self.x0.len()
        } else {
            self.steps[n - 1].dim
        }
    }

    /// Joint tilt dimension `D = d_1 + … + d_N`.
    pub fn total_dim(&self) -> usize {
        self.offsets[self.steps.len()]
    }

    pub fn value_types(&self, n: usize) -> &[ValueType] {
        if n == 0 {
            &self.x0_types
        } else {
            &self.steps[n - 1].value_types
        }
    }

    /// Range of block `n` (1-based) inside a joint vector.
    pub fn block_range(&self, n: usize) -> std::ops::Range<usize> {
        self.offsets[n - 1]..self.offsets[n]
    }

    pub fn block<'a, T>(&self, v: &'a [T], n: usize) -> &'a [T] {
        &v[self.block_range(n)]
    }

    /// Splits a joint vector into blocks `1..=N`.
    pub fn split(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (1..=self.n_steps()).map(|n| self.block(v, n).to_vec()).collect()
    }

    pub fn path_from_flat(&self, flat: &[f64]) -> Result<SamplePath> {
        if flat.len() != self.total_dim() {
            return Err(Error::dims("flattened path", self.total_dim(), flat.len()));
        }
        Ok(SamplePath::new(self.split(flat)))
    }

    pub fn check_path(&self, path: &SamplePath) -> Result<()> {
        if path.len() != self.n_steps() {
            return Err(Error::dims("path length", self.n_steps(), path.len()));
        }
        for (k, x) in path.values.iter().enumerate() {
            if x.len() != self.dim(k + 1) {
                return Err(Error::dims(&format!("path step {}", k + 1), self.dim(k + 1), x.len()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidHistory(format!("non-finite value at step {}", k + 1)));
            }
        }
        Ok(())
    }

    /// `[x_0, x_1, …, x_N]`, so that `&full[..n]` is the history of step `n`.
    pub fn full_path(&self, path: &SamplePath) -> Result<Vec<Vec<f64>>> {
        self.check_path(path)?;
        let mut full = Vec::with_capacity(path.len() + 1);
        full.push(self.x0.clone());
        full.extend(path.values.iter().cloned());
        Ok(full)
    }

    /// Unit CGFs of step `n` evaluated at the Taylor tilt `s_n`, added into
    /// `out[m][i]` for every contribution from `(m, i)`.
    fn add_g_taylor(&self, n: usize, s_n: &[TaylorScalar], out: &mut [Vec<TaylorScalar>]) -> Result<()> {
        for c in &self.step(n).contributions {
            let g = c.unit.taylor(s_n).map_err(|e| e.at_step(n))?;
            let slot = &mut out[c.source_step][c.source_coord];
            *slot = &*slot + &g;
        }
        Ok(())
    }

    /// `g_{n,m}(s_n)` as Taylor scalars with respect to the seeds' variables.
    pub fn g_map_taylor(&self, n: usize, m: usize, s_n: &[TaylorScalar]) -> Result<Vec<TaylorScalar>> {
        self.check_step_index(n)?;
        if m >= n {
            return Err(Error::InvalidModel(format!("g_{{{n},{m}}} needs m < n")));
        }
        if s_n.len() != self.dim(n) {
            return Err(Error::dims("g tilt", self.dim(n), s_n.len()));
        }
        let nv = s_n[0].nvars();
        let mut out: Vec<Vec<TaylorScalar>> = (0..n)
            .map(|k| vec![TaylorScalar::constant(0.0, nv); self.dim(k)])
            .collect();
        self.add_g_taylor(n, s_n, &mut out)?;
        Ok(out.swap_remove(m))
    }

    /// `g_{n,m}(s_n)`: row vector of length `d_m`.
    pub fn g_map(&self, n: usize, m: usize, s_n: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .g_map_taylor(n, m, &TaylorScalar::plain(s_n))?
            .iter()
            .map(|t| t.value)
            .collect())
    }

    fn check_step_index(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_steps() {
            return Err(Error::InvalidModel(format!(
                "step index {n} outside 1..={}",
                self.n_steps()
            )));
        }
        Ok(())
    }

    /// Conditional CGF of `X_n` given `history = [x_0, …, x_{n−1}]`.
    pub fn step_cgf(&self, n: usize, history: &[Vec<f64>], mode: HistoryMode) -> Result<CgfExpr> {
        self.check_step_index(n)?;
        if history.len() != n {
            return Err(Error::dims(&format!("step {n} history length"), n, history.len()));
        }
        for (m, x) in history.iter().enumerate() {
            if x.len() != self.dim(m) {
                return Err(Error::dims(
                    &format!("step {n} history entry {m}"),
                    self.dim(m),
                    x.len(),
                ));
            }
        }
        let step = self.step(n);
        let mut parts = vec![step.innovation.clone()];
        for c in &step.contributions {
            let x = history[c.source_step][c.source_coord];
            if !x.is_finite() {
                return Err(Error::InvalidHistory(format!(
                    "non-finite history value x[{}][{}]",
                    c.source_step, c.source_coord
                )));
            }
            if mode == HistoryMode::Strict {
                let ok = match c.kind {
                    ContributionKind::IidSum => x >= 0.0 && x.fract() == 0.0,
                    ContributionKind::Levy => x >= 0.0,
                    ContributionKind::Linear => true,
                };
                if !ok {
                    return Err(Error::InvalidHistory(format!(
                        "step {n}: {:?} contribution from x[{}][{}] = {x}",
                        c.kind, c.source_step, c.source_coord
                    )));
                }
            }
            parts.push(cgf_scale(&c.unit, x));
        }
        cgf_sum(step.dim, parts)
    }

    /// Step CGFs along an observed path.
    pub fn step_cgfs(&self, path: &SamplePath, mode: HistoryMode) -> Result<Vec<CgfExpr>> {
        let full = self.full_path(path)?;
        (1..=self.n_steps())
            .map(|n| self.step_cgf(n, &full[..n], mode))
            .collect()
    }

    /// Innovation of step `n` with the contributions from the fixed `x_0`
    /// folded in: `ξ̃_n = ξ_n + Σ_i Z_{n,0,i}(x_{0,i})`.
    pub fn merged_innovation(&self, n: usize) -> Result<CgfExpr> {
        self.check_step_index(n)?;
        let step = self.step(n);
        let mut parts = vec![step.innovation.clone()];
        for c in step.contributions.iter().filter(|c| c.source_step == 0) {
            parts.push(cgf_scale(&c.unit, self.x0[c.source_coord]));
        }
        cgf_sum(step.dim, parts)
    }

    /// Runs the τ recursion on Taylor seeds for the joint tilt (length `D`).
    /// Returns blocks `τ_0, τ_1, …, τ_N`.
    pub fn tau_map_taylor(&self, s: &[TaylorScalar]) -> Result<Vec<Vec<TaylorScalar>>> {
        if s.len() != self.total_dim() {
            return Err(Error::dims("joint tilt", self.total_dim(), s.len()));
        }
        let nv = s[0].nvars();
        let mut tau: Vec<Vec<TaylorScalar>> = Vec::with_capacity(self.n_steps() + 1);
        tau.push(vec![TaylorScalar::constant(0.0, nv); self.dim(0)]);
        for n in 1..=self.n_steps() {
            tau.push(self.block(s, n).to_vec());
        }
        for n in (1..=self.n_steps()).rev() {
            let (lower, upper) = tau.split_at_mut(n);
            self.add_g_taylor(n, &upper[0], lower)?;
        }
        Ok(tau)
    }

    /// `τ_0, τ_1, …, τ_N` at the joint tilt `s`.
    pub fn tau_map(&self, s: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .tau_map_taylor(&TaylorScalar::plain(s))?
            .iter()
            .map(|b| b.iter().map(|t| t.value).collect())
            .collect())
    }

    /// `T(s) = (τ_1, …, τ_N)` flattened.
    pub fn t_map(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.tau_map(s)?.into_iter().skip(1).flatten().collect())
    }

    /// Jacobian of `T` with rows indexed by the tilt coordinate and columns
    /// by the output coordinate, `T′[a][b] = ∂τ_b/∂s_a`. In this layout it is
    /// unit lower block-triangular.
    pub fn tau_jacobian(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        let tau = self.tau_map_taylor(&TaylorScalar::seeds(s))?;
        let d = self.total_dim();
        let mut jac = DMatrix::zeros(d, d);
        for (b, t) in tau.iter().skip(1).flatten().enumerate() {
            jac.set_column(b, &t.grad);
        }
        Ok(jac)
    }

    /// `G(τ)` flattened: block `m` is `Σ_{n>m} g_{n,m}(τ_n)`; block `N` is 0.
    pub fn g_big_map(&self, tau: &[f64]) -> Result<Vec<f64>> {
        if tau.len() != self.total_dim() {
            return Err(Error::dims("τ vector", self.total_dim(), tau.len()));
        }
        let mut out: Vec<Vec<TaylorScalar>> = (0..=self.n_steps())
            .map(|k| vec![TaylorScalar::constant(0.0, 0); self.dim(k)])
            .collect();
        for n in 1..=self.n_steps() {
            let tn = TaylorScalar::plain(self.block(tau, n));
            self.add_g_taylor(n, &tn, &mut out)?;
        }
        Ok(out.into_iter().skip(1).flatten().map(|t| t.value).collect())
    }

    /// `T⁻¹(τ) = τ − G(τ)`.
    pub fn t_inverse(&self, tau: &[f64]) -> Result<Vec<f64>> {
        let g = self.g_big_map(tau)?;
        Ok(tau.iter().zip(&g).map(|(t, g)| t - g).collect())
    }

    /// Value, gradient and Hessian of the joint conditional CGF.
    pub fn joint_cgf_at(&self, s: &[f64]) -> Result<CgfValue> {
        let seeds = TaylorScalar::seeds(s);
        let t = self.joint_taylor(&seeds)?;
        Ok(CgfValue {
            value: t.value,
            grad: t.grad,
            hess: t.hess,
        })
    }

    fn joint_taylor(&self, seeds: &[TaylorScalar]) -> Result<TaylorScalar> {
        let tau = self.tau_map_taylor(seeds)?;
        let nv = seeds[0].nvars();
        let mut acc = TaylorScalar::constant(0.0, nv);
        for (t, &x) in tau[0].iter().zip(&self.x0) {
            acc.axpy(x, t);
        }
        for (n, t) in tau.iter().enumerate().skip(1) {
            let k = self.step(n).innovation.taylor(t).map_err(|e| e.at_step(n))?;
            acc = &acc + &k;
        }
        Ok(acc)
    }

    /// The joint conditional CGF of `(X_1, …, X_N)` given `X_0 = x_0`, as a
    /// [`CgfExpr`] on `ℝ^D`. Its domain is discovered by evaluation.
    pub fn joint_cgf(&self) -> CgfExpr {
        CgfExpr::new(JointCgf { process: self.clone() })
    }

    /// `Σ_n K_{Q_n}(s_n)` with each step conditioned on the observed history.
    pub fn product_cgf(&self, path: &SamplePath, mode: HistoryMode) -> Result<CgfExpr> {
        Ok(CgfExpr::new(StepProduct {
            steps: self.step_cgfs(path, mode)?,
        }))
    }
}

#[derive(Debug)]
struct JointCgf {
    process: ProcessSpec,
}

impl Cgf for JointCgf {
    fn dim(&self) -> usize {
        self.process.total_dim()
    }

    fn domain(&self) -> Domain {
        Domain::unbounded(self.dim())
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        self.process.joint_cgf_at(s)
    }
}

/// Independent product of step CGFs; domain errors carry the step index.
#[derive(Debug)]
struct StepProduct {
    steps: Vec<CgfExpr>,
}

impl Cgf for StepProduct {
    fn dim(&self) -> usize {
        self.steps.iter().map(CgfExpr::dim).sum()
    }

    fn domain(&self) -> Domain {
        Domain {
            bounds: self.steps.iter().flat_map(|p| p.domain().bounds).collect(),
        }
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        let mut acc = CgfValue::zero(self.dim());
        let mut off = 0;
        for (k, p) in self.steps.iter().enumerate() {
            let d = p.dim();
            let v = p.eval(&s[off..off + d]).map_err(|e| e.at_step(k + 1))?;
            acc.value += v.value;
            acc.grad.rows_mut(off, d).copy_from(&v.grad);
            acc.hess.view_mut((off, off), (d, d)).copy_from(&v.hess);
            off += d;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::{constant, make_builtin};

    fn gw(rate: f64, x0: f64, n: usize) -> ProcessSpec {
        let steps = (1..=n)
            .map(|k| StepSpec {
                dim: 1,
                innovation: CgfExpr::zero(1),
                contributions: vec![Contribution {
                    source_step: k - 1,
                    source_coord: 0,
                    kind: ContributionKind::IidSum,
                    unit: make_builtin("poisson", &[rate]).unwrap(),
                }],
                value_types: vec![ValueType::Integer],
            })
            .collect();
        ProcessSpec::new(vec![x0], vec![ValueType::Integer], steps).unwrap()
    }

    #[test]
    fn g_examples() {
        let p = gw(1.5, 1.0, 2);
        assert_eq!(p.g_map(2, 1, &[0.0]).unwrap(), vec![0.0]);
        assert!((p.g_map(2, 1, &[2f64.ln()]).unwrap()[0] - 1.5).abs() < 1e-15);
        // no declared contribution from step 0 into step 2
        assert_eq!(p.g_map(2, 0, &[0.7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn step_cgf_examples() {
        let p = gw(1.5, 1.0, 2);
        let k = p.step_cgf(2, &[vec![1.0], vec![2.0]], HistoryMode::Strict).unwrap();
        assert!((k.value(&[0.4]).unwrap() - 3.0 * 0.4f64.exp_m1()).abs() < 1e-14);
        let z = p.step_cgf(2, &[vec![1.0], vec![0.0]], HistoryMode::Strict).unwrap();
        assert_eq!(z.value(&[0.4]).unwrap(), 0.0);
        assert!(p.step_cgf(2, &[vec![1.0], vec![1.5]], HistoryMode::Strict).is_err());
        assert!(p.step_cgf(2, &[vec![1.0], vec![1.5]], HistoryMode::Extension).is_ok());
    }

    #[test]
    fn tau_matches_nested_form() {
        let p = gw(1.5, 1.0, 2);
        let (s1, s2) = (0.2, -0.3);
        let tau = p.tau_map(&[s1, s2]).unwrap();
        assert_eq!(tau[2], vec![s2]);
        assert!((tau[1][0] - (s1 + 1.5 * s2.exp_m1())).abs() < 1e-15);
        assert!((tau[0][0] - 1.5 * tau[1][0].exp_m1()).abs() < 1e-15);
    }

    #[test]
    fn joint_mean_is_branching_mean() {
        let p = gw(1.5, 2.0, 3);
        let m = p.joint_cgf().mean().unwrap();
        for (k, v) in m.iter().enumerate() {
            assert!((v - 2.0 * 1.5f64.powi(k as i32 + 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_t_inverse() {
        let p = gw(0.8, 1.0, 4);
        let s = [0.1, -0.2, 0.3, -0.05];
        let tau = p.t_map(&s).unwrap();
        let back = p.t_inverse(&tau).unwrap();
        for (a, b) in s.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = p.g_big_map(&tau).unwrap();
        assert_eq!(g[3], 0.0);
    }

    #[test]
    fn validation_errors() {
        let bad_source = StepSpec {
            dim: 1,
            innovation: CgfExpr::zero(1),
            contributions: vec![Contribution {
                source_step: 1,
                source_coord: 0,
                kind: ContributionKind::IidSum,
                unit: make_builtin("poisson", &[1.0]).unwrap(),
            }],
            value_types: vec![ValueType::Integer],
        };
        assert!(ProcessSpec::new(vec![1.0], vec![ValueType::Integer], vec![bad_source]).is_err());

        let real_iid = StepSpec {
            dim: 1,
            innovation: CgfExpr::zero(1),
            contributions: vec![Contribution {
                source_step: 0,
                source_coord: 0,
                kind: ContributionKind::IidSum,
                unit: make_builtin("poisson", &[1.0]).unwrap(),
            }],
            value_types: vec![ValueType::Integer],
        };
        assert!(ProcessSpec::new(vec![1.0], vec![ValueType::Real], vec![real_iid]).is_err());

        let random_linear = StepSpec {
            dim: 1,
            innovation: CgfExpr::zero(1),
            contributions: vec![Contribution {
                source_step: 0,
                source_coord: 0,
                kind: ContributionKind::Linear,
                unit: make_builtin("poisson", &[1.0]).unwrap(),
            }],
            value_types: vec![ValueType::Real],
        };
        assert!(ProcessSpec::new(vec![1.0], vec![ValueType::Real], vec![random_linear]).is_err());

        assert!(ProcessSpec::new(vec![1.5], vec![ValueType::Integer], vec![]).is_err());
    }

    #[test]
    fn linear_contribution_g_is_cs() {
        let step = StepSpec {
            dim: 1,
            innovation: make_builtin("gaussian", &[0.0, 1.0]).unwrap(),
            contributions: vec![Contribution {
                source_step: 0,
                source_coord: 0,
                kind: ContributionKind::Linear,
                unit: constant(vec![3.0]),
            }],
            value_types: vec![ValueType::Real],
        };
        let p = ProcessSpec::new(vec![-1.0], vec![ValueType::Real], vec![step]).unwrap();
        assert!((p.g_map(1, 0, &[0.25]).unwrap()[0] - 0.75).abs() < 1e-15);
    }
}
