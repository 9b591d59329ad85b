//! Cumulant generating functions with exact first and second derivatives.
//!
//! Every CGF is a [`CgfExpr`]: an immutable, cheaply clonable handle around an
//! evaluator implementing [`Cgf`]. Builtin families have closed-form
//! derivatives; compositions (sums, scaling, tilting, compounding, independent
//! blocks) propagate value, gradient and Hessian by the chain rule.
//!
//! Tilt vectors are plain `&[f64]` slices (row vectors in the usual
//! convention); gradients are column vectors.

mod builtin;
mod spec;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::pmf::PmfTable;
use crate::taylor::TaylorScalar;

pub use builtin::{compound_poisson, constant, make_builtin, Builtin, BUILTIN_KINDS};
pub use spec::CgfSpec;

/// Value, gradient and Hessian of a CGF at one tilt.
#[derive(Debug, Clone, PartialEq)]
pub struct CgfValue {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl CgfValue {
    pub fn zero(dim: usize) -> Self {
        CgfValue {
            value: 0.0,
            grad: DVector::zeros(dim),
            hess: DMatrix::zeros(dim, dim),
        }
    }

    pub fn scalar(k: f64, k1: f64, k2: f64) -> Self {
        CgfValue {
            value: k,
            grad: DVector::from_element(1, k1),
            hess: DMatrix::from_element(1, 1, k2),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|v| v.is_finite()) && self.hess.iter().all(|v| v.is_finite())
    }
}

/// Open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn below(hi: f64) -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x > self.lo && x < self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }
}

/// Coordinate box enclosing the domain of a CGF.
///
/// For builtins the box is the exact domain. For nested compositions the true
/// domain can be a smaller, non-box set; points inside the box but outside the
/// domain are rejected at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub bounds: Vec<Interval>,
}

impl Domain {
    pub fn unbounded(dim: usize) -> Self {
        Domain {
            bounds: vec![Interval::REAL; dim],
        }
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.len() == self.bounds.len() && self.bounds.iter().zip(s).all(|(b, &x)| b.contains(x))
    }

    pub fn intersect(&self, other: &Domain) -> Domain {
        Domain {
            bounds: self
                .bounds
                .iter()
                .zip(&other.bounds)
                .map(|(a, b)| a.intersect(b))
                .collect(),
        }
    }

    /// Largest `t ≥ 0` (possibly infinite) such that `s + t·dir` stays inside
    /// the closure of the box.
    pub fn max_step(&self, s: &[f64], dir: &[f64]) -> f64 {
        let mut t = f64::INFINITY;
        for ((b, &x), &d) in self.bounds.iter().zip(s).zip(dir) {
            if d > 0.0 && b.hi.is_finite() {
                t = t.min((b.hi - x) / d);
            } else if d < 0.0 && b.lo.is_finite() {
                t = t.min((b.lo - x) / d);
            }
        }
        t.max(0.0)
    }

    /// Smallest distance from `s` to a finite face of the box, scaled by
    /// `1 + |face|`.
    pub fn relative_gap_to_boundary(&self, s: &[f64]) -> f64 {
        let mut g = f64::INFINITY;
        for (b, &x) in self.bounds.iter().zip(s) {
            if b.hi.is_finite() {
                g = g.min((b.hi - x) / (1.0 + b.hi.abs()));
            }
            if b.lo.is_finite() {
                g = g.min((x - b.lo) / (1.0 + b.lo.abs()));
            }
        }
        g
    }
}

/// A CGF evaluator. Implementations may assume `s` lies in [`Cgf::domain`]
/// and has length [`Cgf::dim`]; [`CgfExpr::eval`] checks both and rejects
/// non-finite results.
pub trait Cgf: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn domain(&self) -> Domain;

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue>;

    /// Serializable description, when the evaluator is built from named parts.
    fn spec(&self) -> Option<CgfSpec> {
        None
    }

    /// Exact lattice pmf truncated with leftover mass at most `max_leftover`,
    /// for distributions supported on the integer lattice.
    fn lattice_pmf(&self, _max_leftover: f64) -> Option<Result<PmfTable>> {
        None
    }

    /// `lim_{s→−∞} K(s)` for nonnegative lattice laws, i.e. `log P(X = 0)`.
    fn log_mass_at_zero(&self) -> Option<f64> {
        None
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Err(Error::Unsupported(format!("no sampler for {self:?}")))
    }

    /// Draws from the law whose CGF is `t·K`: a Lévy increment over time `t`,
    /// or a sum of `t` independent copies when `t` is an integer.
    fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let count = integer_count(t)?;
        let mut acc = vec![0.0; self.dim()];
        for _ in 0..count {
            for (a, v) in acc.iter_mut().zip(self.sample(rng)?) {
                *a += v;
            }
        }
        Ok(acc)
    }
}

pub(crate) fn integer_count(t: f64) -> Result<u64> {
    if t >= 0.0 && t.fract() == 0.0 && t < u64::MAX as f64 {
        Ok(t as u64)
    } else {
        Err(Error::Unsupported(format!(
            "non-integer multiplier {t} needs an infinitely divisible family"
        )))
    }
}

/// Shared handle to an immutable CGF evaluator.
#[derive(Clone)]
pub struct CgfExpr(Arc<dyn Cgf>);

impl fmt::Debug for CgfExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl CgfExpr {
    pub fn new<C: Cgf + 'static>(inner: C) -> Self {
        CgfExpr(Arc::new(inner))
    }

    /// Identically zero CGF of the given dimension.
    pub fn zero(dim: usize) -> Self {
        constant(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn domain(&self) -> Domain {
        self.0.domain()
    }

    pub fn inner(&self) -> &dyn Cgf {
        self.0.as_ref()
    }

    /// `K(s)`, `K′(s)`, `K″(s)`.
    pub fn eval(&self, s: &[f64]) -> Result<CgfValue> {
        if s.len() != self.dim() {
            return Err(Error::dims("cgf argument", self.dim(), s.len()));
        }
        if !self.0.domain().contains(s) {
            return Err(Error::domain(format!("{s:?} outside {:?}", self.0.domain().bounds)));
        }
        let v = self.0.evaluate(s)?;
        if !v.is_finite() {
            return Err(Error::domain(format!("non-finite cgf value at {s:?}")));
        }
        Ok(v)
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        self.eval(s).map(|v| v.value)
    }

    /// Whether `s` is in the (exact) domain.
    pub fn contains(&self, s: &[f64]) -> bool {
        self.eval(s).is_ok()
    }

    /// `K′(0)`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        Ok(self.eval(&vec![0.0; self.dim()])?.grad.iter().copied().collect())
    }

    /// `K″(0)`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self.eval(&vec![0.0; self.dim()])?.hess)
    }

    /// Evaluates `K` at the seed values and carries the derivatives through to
    /// the seeds' outer variables.
    pub fn taylor(&self, seeds: &[TaylorScalar]) -> Result<TaylorScalar> {
        let s: Vec<f64> = seeds.iter().map(|t| t.value).collect();
        let v = self.eval(&s)?;
        Ok(TaylorScalar::compose_multi(seeds, v.value, &v.grad, &v.hess))
    }

    pub fn spec(&self) -> Option<CgfSpec> {
        self.0.spec()
    }

    pub fn lattice_pmf(&self, max_leftover: f64) -> Option<Result<PmfTable>> {
        self.0.lattice_pmf(max_leftover)
    }

    pub fn log_mass_at_zero(&self) -> Option<f64> {
        self.0.log_mass_at_zero()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.0.sample(rng)
    }

    pub fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if t == 0.0 {
            return Ok(vec![0.0; self.dim()]);
        }
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Unsupported(format!("sampling with multiplier {t}")));
        }
        self.0.sample_scaled(t, rng)
    }
}

/// Second-order forward propagation of `expr` through `seeds`.
pub fn taylor_eval(expr: &CgfExpr, seeds: &[TaylorScalar]) -> Result<TaylorScalar> {
    expr.taylor(seeds)
}

/// `Σ K_i` for independent parts sharing the tilt dimension `dim`. The empty
/// sum is the zero CGF.
pub fn cgf_sum(dim: usize, parts: Vec<CgfExpr>) -> Result<CgfExpr> {
    if let Some(p) = parts.iter().find(|p| p.dim() != dim) {
        return Err(Error::dims("cgf_sum part", dim, p.dim()));
    }
    if parts.is_empty() {
        return Ok(CgfExpr::zero(dim));
    }
    Ok(CgfExpr::new(Sum { dim, parts }))
}

/// `t·K`. Nonnegative `t` gives the CGF of a Lévy increment or an iid sum;
/// other real multipliers are accepted as a formal extension.
pub fn cgf_scale(base: &CgfExpr, t: f64) -> CgfExpr {
    CgfExpr::new(Scaled { base: base.clone(), t })
}

/// Independent blocks with concatenated coordinates.
pub fn independent(parts: Vec<CgfExpr>) -> CgfExpr {
    CgfExpr::new(Independent { parts })
}

/// Random sum `Σ_{j ≤ N} J_j`: `K_N(K_J(s))`, with scalar count law `N`.
pub fn compound(count: &CgfExpr, jump: &CgfExpr) -> Result<CgfExpr> {
    if count.dim() != 1 {
        return Err(Error::dims("compound count", 1, count.dim()));
    }
    Ok(CgfExpr::new(Compound {
        count: count.clone(),
        jump: jump.clone(),
    }))
}

/// Tilted CGF `σ ↦ K(s + σ) − K(s)`.
pub fn cgf_tilt(base: &CgfExpr, s: &[f64]) -> Result<CgfExpr> {
    let at = base.eval(s)?;
    Ok(CgfExpr::new(Shifted {
        base: base.clone(),
        at: s.to_vec(),
        base_value: at.value,
    }))
}

#[derive(Debug)]
struct Sum {
    dim: usize,
    parts: Vec<CgfExpr>,
}

impl Cgf for Sum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> Domain {
        self.parts
            .iter()
            .fold(Domain::unbounded(self.dim), |d, p| d.intersect(&p.domain()))
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        let mut acc = CgfValue::zero(self.dim);
        for p in &self.parts {
            let v = p.eval(s)?;
            acc.value += v.value;
            acc.grad += v.grad;
            acc.hess += v.hess;
        }
        Ok(acc)
    }

    fn spec(&self) -> Option<CgfSpec> {
        let parts = self.parts.iter().map(CgfExpr::spec).collect::<Option<Vec<_>>>()?;
        Some(CgfSpec::composite("sum", vec![], parts))
    }

    fn lattice_pmf(&self, max_leftover: f64) -> Option<Result<PmfTable>> {
        let share = max_leftover / self.parts.len() as f64;
        let mut acc = PmfTable::point(vec![0; self.dim]);
        for p in &self.parts {
            match p.lattice_pmf(share)? {
                Ok(t) => acc = acc.convolve(&t),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(acc))
    }

    fn log_mass_at_zero(&self) -> Option<f64> {
        self.parts.iter().map(CgfExpr::log_mass_at_zero).sum()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        for p in &self.parts {
            for (a, v) in acc.iter_mut().zip(p.sample(rng)?) {
                *a += v;
            }
        }
        Ok(acc)
    }

    fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        for p in &self.parts {
            for (a, v) in acc.iter_mut().zip(p.sample_scaled(t, rng)?) {
                *a += v;
            }
        }
        Ok(acc)
    }
}

#[derive(Debug)]
struct Scaled {
    base: CgfExpr,
    t: f64,
}

impl Cgf for Scaled {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn domain(&self) -> Domain {
        if self.t == 0.0 {
            Domain::unbounded(self.dim())
        } else {
            self.base.domain()
        }
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        if self.t == 0.0 {
            return Ok(CgfValue::zero(self.dim()));
        }
        let v = self.base.eval(s)?;
        Ok(CgfValue {
            value: self.t * v.value,
            grad: v.grad * self.t,
            hess: v.hess * self.t,
        })
    }

    fn spec(&self) -> Option<CgfSpec> {
        Some(CgfSpec::composite("scaled", vec![self.t], vec![self.base.spec()?]))
    }

    fn lattice_pmf(&self, max_leftover: f64) -> Option<Result<PmfTable>> {
        let k = integer_count(self.t).ok()?;
        if k == 0 {
            return Some(Ok(PmfTable::point(vec![0; self.dim()])));
        }
        match self.base.lattice_pmf(max_leftover / k as f64)? {
            Ok(t) => Some(Ok(t.convolve_power(k))),
            Err(e) => Some(Err(e)),
        }
    }

    fn log_mass_at_zero(&self) -> Option<f64> {
        if self.t == 0.0 {
            return Some(0.0);
        }
        self.base.log_mass_at_zero().map(|v| self.t * v)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.base.sample_scaled(self.t, rng)
    }

    fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.base.sample_scaled(self.t * t, rng)
    }
}

#[derive(Debug)]
struct Independent {
    parts: Vec<CgfExpr>,
}

impl Independent {
    fn split<'a>(&self, s: &'a [f64]) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.parts.len());
        let mut off = 0;
        for p in &self.parts {
            out.push(&s[off..off + p.dim()]);
            off += p.dim();
        }
        out
    }
}

impl Cgf for Independent {
    fn dim(&self) -> usize {
        self.parts.iter().map(CgfExpr::dim).sum()
    }

    fn domain(&self) -> Domain {
        Domain {
            bounds: self.parts.iter().flat_map(|p| p.domain().bounds).collect(),
        }
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        let mut acc = CgfValue::zero(self.dim());
        let mut off = 0;
        for (p, block) in self.parts.iter().zip(self.split(s)) {
            let v = p.eval(block)?;
            let d = p.dim();
            acc.value += v.value;
            acc.grad.rows_mut(off, d).copy_from(&v.grad);
            acc.hess.view_mut((off, off), (d, d)).copy_from(&v.hess);
            off += d;
        }
        Ok(acc)
    }

    fn spec(&self) -> Option<CgfSpec> {
        let parts = self.parts.iter().map(CgfExpr::spec).collect::<Option<Vec<_>>>()?;
        Some(CgfSpec::composite("independent", vec![], parts))
    }

    fn lattice_pmf(&self, max_leftover: f64) -> Option<Result<PmfTable>> {
        let share = max_leftover / self.parts.len() as f64;
        let mut tables = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            match p.lattice_pmf(share)? {
                Ok(t) => tables.push(t),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(PmfTable::product(&tables)))
    }

    fn log_mass_at_zero(&self) -> Option<f64> {
        self.parts.iter().map(CgfExpr::log_mass_at_zero).sum()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for p in &self.parts {
            out.extend(p.sample(rng)?);
        }
        Ok(out)
    }

    fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for p in &self.parts {
            out.extend(p.sample_scaled(t, rng)?);
        }
        Ok(out)
    }
}

#[derive(Debug)]
struct Compound {
    count: CgfExpr,
    jump: CgfExpr,
}

impl Cgf for Compound {
    fn dim(&self) -> usize {
        self.jump.dim()
    }

    fn domain(&self) -> Domain {
        self.jump.domain()
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        let j = self.jump.eval(s)?;
        let n = self.count.eval(&[j.value])?;
        let (k1, k2) = (n.grad[0], n.hess[(0, 0)]);
        let mut hess = j.hess * k1;
        hess.ger(k2, &j.grad, &j.grad, 1.0);
        Ok(CgfValue {
            value: n.value,
            grad: j.grad * k1,
            hess,
        })
    }

    fn spec(&self) -> Option<CgfSpec> {
        let jump = self.jump.spec()?;
        let count = self.count.spec()?;
        if count.kind == "poisson" {
            Some(CgfSpec::composite("compound-poisson", count.params, vec![jump]))
        } else {
            Some(CgfSpec::composite("compound", vec![], vec![count, jump]))
        }
    }

    fn log_mass_at_zero(&self) -> Option<f64> {
        let lj = self.jump.log_mass_at_zero()?;
        if lj.is_finite() {
            self.count.value(&[lj]).ok()
        } else {
            self.count.log_mass_at_zero()
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let n = self.count.sample(rng)?[0];
        self.jump.sample_scaled(n, rng)
    }

    fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let n = self.count.sample_scaled(t, rng)?[0];
        self.jump.sample_scaled(n, rng)
    }
}

#[derive(Debug)]
struct Shifted {
    base: CgfExpr,
    at: Vec<f64>,
    base_value: f64,
}

impl Cgf for Shifted {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn domain(&self) -> Domain {
        let d = self.base.domain();
        Domain {
            bounds: d
                .bounds
                .iter()
                .zip(&self.at)
                .map(|(b, &a)| Interval {
                    lo: b.lo - a,
                    hi: b.hi - a,
                })
                .collect(),
        }
    }

    fn evaluate(&self, sigma: &[f64]) -> Result<CgfValue> {
        let s: Vec<f64> = self.at.iter().zip(sigma).map(|(a, b)| a + b).collect();
        let mut v = self.base.eval(&s)?;
        v.value -= self.base_value;
        Ok(v)
    }
}
