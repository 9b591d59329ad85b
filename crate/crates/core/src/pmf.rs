//! Finite probability tables on the integer lattice, with an explicit bound on
//! the probability mass left out by truncation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PmfTable {
    dim: usize,
    entries: BTreeMap<Vec<i64>, f64>,
    /// Upper bound on the probability of outcomes missing from `entries`.
    leftover: f64,
}

impl PmfTable {
    pub fn new(dim: usize) -> Self {
        PmfTable {
            dim,
            entries: BTreeMap::new(),
            leftover: 0.0,
        }
    }

    /// Point mass at `at`.
    pub fn point(at: Vec<i64>) -> Self {
        let mut t = PmfTable::new(at.len());
        t.entries.insert(at, 1.0);
        t
    }

    /// Scalar table from `(value, probability)` pairs.
    pub fn scalar<I: IntoIterator<Item = (i64, f64)>>(pairs: I, leftover: f64) -> Self {
        let mut t = PmfTable::new(1);
        for (k, p) in pairs {
            t.add(vec![k], p);
        }
        t.leftover = leftover;
        t
    }

    pub fn from_entries(dim: usize, entries: BTreeMap<Vec<i64>, f64>, leftover: f64) -> Result<Self> {
        if let Some(k) = entries.keys().find(|k| k.len() != dim) {
            return Err(Error::dims("pmf support point", dim, k.len()));
        }
        let t = PmfTable { dim, entries, leftover };
        t.validate(1e-12)?;
        Ok(t)
    }

    pub fn add(&mut self, at: Vec<i64>, p: f64) {
        debug_assert_eq!(at.len(), self.dim);
        *self.entries.entry(at).or_insert(0.0) += p;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leftover(&self) -> f64 {
        self.leftover
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, f64)> {
        self.entries.iter().map(|(k, &p)| (k, p))
    }

    pub fn prob(&self, at: &[i64]) -> f64 {
        self.entries.get(at).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Checks nonnegativity and that the listed mass plus the truncation bound
    /// accounts for one unit of probability within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if let Some((k, p)) = self.entries.iter().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidPmf(format!("probability {p} at {k:?}")));
        }
        let total = self.total_mass();
        if total > 1.0 + tol || total + self.leftover < 1.0 - tol {
            return Err(Error::InvalidPmf(format!(
                "mass {total} with truncation bound {} does not sum to 1",
                self.leftover
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (k, p) in self.iter() {
            for (mi, &ki) in m.iter_mut().zip(k) {
                *mi += p * ki as f64;
            }
        }
        m
    }

    /// Covariance matrix in row-major order.
    pub fn covariance(&self) -> Vec<f64> {
        let m = self.mean();
        let d = self.dim;
        let mut c = vec![0.0; d * d];
        for (k, p) in self.iter() {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += p * (k[i] as f64 - m[i]) * (k[j] as f64 - m[j]);
                }
            }
        }
        c
    }

    /// Distribution of the sum of independent draws from `self` and `other`.
    pub fn convolve(&self, other: &PmfTable) -> PmfTable {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = PmfTable::new(self.dim);
        for (a, pa) in self.iter() {
            for (b, pb) in other.iter() {
                let at = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add(at, pa * pb);
            }
        }
        out.leftover = (self.leftover + other.leftover).min(1.0);
        out
    }

    /// `k`-fold convolution (sum of `k` independent copies).
    pub fn convolve_power(&self, k: u64) -> PmfTable {
        let mut result = PmfTable::point(vec![0; self.dim]);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.convolve(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.convolve(&base);
            }
        }
        result
    }

    /// Independent product of tables, coordinates concatenated.
    pub fn product(parts: &[PmfTable]) -> PmfTable {
        let dim = parts.iter().map(|p| p.dim).sum();
        let mut out = PmfTable::point(Vec::new());
        out.dim = 0;
        for part in parts {
            let mut next = PmfTable::new(out.dim + part.dim);
            for (a, pa) in out.iter() {
                for (b, pb) in part.iter() {
                    let mut at = a.clone();
                    at.extend_from_slice(b);
                    next.add(at, pa * pb);
                }
            }
            next.leftover = (out.leftover + part.leftover).min(1.0);
            out = next;
        }
        debug_assert_eq!(out.dim, dim);
        out
    }

    /// Log-sum-exp CGF of the listed (truncated) mass: `log Σ p e^{s·k}`.
    pub fn cgf(&self, s: &[f64]) -> f64 {
        let exps: Vec<(f64, f64)> = self
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(k, p)| (p.ln() + dot_lattice(s, k), p))
            .collect();
        let max = exps.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        max + exps.iter().map(|e| (e.0 - max).exp()).sum::<f64>().ln()
    }
}

pub(crate) fn dot_lattice(s: &[f64], k: &[i64]) -> f64 {
    s.iter().zip(k).map(|(a, &b)| a * b as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bernoullis_convolve_to_binomial() {
        let b = PmfTable::scalar([(0, 0.5), (1, 0.5)], 0.0);
        let t = b.convolve_power(2);
        assert_eq!(t.prob(&[0]), 0.25);
        assert_eq!(t.prob(&[1]), 0.5);
        assert_eq!(t.prob(&[2]), 0.25);
    }

    #[test]
    fn zero_power_is_point_mass() {
        let b = PmfTable::scalar([(0, 0.3), (2, 0.7)], 0.0);
        let t = b.convolve_power(0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.prob(&[0]), 1.0);
    }

    #[test]
    fn invalid_mass_rejected() {
        let mut m = BTreeMap::new();
        m.insert(vec![0], 0.5);
        m.insert(vec![1], 0.4);
        assert!(matches!(PmfTable::from_entries(1, m, 0.0), Err(Error::InvalidPmf(_))));
    }

    #[test]
    fn product_moments() {
        let a = PmfTable::scalar([(0, 0.5), (1, 0.5)], 0.0);
        let b = PmfTable::scalar([(1, 0.25), (3, 0.75)], 0.0);
        let t = PmfTable::product(&[a, b]);
        assert_eq!(t.dim(), 2);
        let m = t.mean();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 2.5).abs() < 1e-15);
        let c = t.covariance();
        assert!(c[1].abs() < 1e-15);
    }
}
