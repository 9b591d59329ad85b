//! Second-order forward propagation of a scalar with respect to a fixed set of
//! outer variables.
//!
//! A [`TaylorScalar`] carries a value together with its gradient and Hessian
//! with respect to `n` outer variables. Composition through a function whose
//! own value, gradient and Hessian are known is the multivariate chain rule
//!
//! ```text
//! ∇F(u(s))  = Σ_j ∂_j F · ∇u_j
//! ∇²F(u(s)) = Σ_j ∂_j F · ∇²u_j + J (∇²F) Jᵀ,   J = [∇u_1 … ∇u_k]
//! ```
//!
//! which is all the nested CGF evaluation needs. With `n = 0` the type
//! degenerates to a plain value, which is how the value-only code paths reuse
//! the same machinery.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorScalar {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl TaylorScalar {
    pub fn constant(value: f64, n: usize) -> Self {
        TaylorScalar {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    /// The `index`-th outer variable itself, with value `value`.
    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut t = Self::constant(value, n);
        t.grad[index] = 1.0;
        t
    }

    /// Identity seeds: one variable per coordinate of `point`.
    pub fn seeds(point: &[f64]) -> Vec<TaylorScalar> {
        let n = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Self::variable(v, i, n))
            .collect()
    }

    /// Constant seeds with zero outer variables (value-only propagation).
    pub fn plain(point: &[f64]) -> Vec<TaylorScalar> {
        point.iter().map(|&v| Self::constant(v, 0)).collect()
    }

    pub fn nvars(&self) -> usize {
        self.grad.len()
    }

    pub fn scale(&self, c: f64) -> Self {
        TaylorScalar {
            value: c * self.value,
            grad: &self.grad * c,
            hess: &self.hess * c,
        }
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        let mut t = self.clone();
        t.value += c;
        t
    }

    /// In-place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &TaylorScalar) {
        self.value += c * other.value;
        self.grad.axpy(c, &other.grad, 1.0);
        self.hess += &other.hess * c;
    }

    /// Applies a univariate function given its value and first two derivatives
    /// at `self.value`.
    pub fn compose(&self, f: f64, df: f64, d2f: f64) -> Self {
        let mut hess = &self.hess * df;
        hess.ger(d2f, &self.grad, &self.grad, 1.0);
        TaylorScalar {
            value: f,
            grad: &self.grad * df,
            hess,
        }
    }

    /// Applies a function of several inner quantities `inputs` whose value,
    /// gradient and Hessian (with respect to those inner quantities) are given.
    pub fn compose_multi(inputs: &[TaylorScalar], value: f64, grad: &DVector<f64>, hess: &DMatrix<f64>) -> Self {
        let n = inputs.first().map_or(0, TaylorScalar::nvars);
        let mut out = TaylorScalar::constant(value, n);
        if n == 0 {
            return out;
        }
        let k = inputs.len();
        let mut jac = DMatrix::zeros(n, k);
        for (j, u) in inputs.iter().enumerate() {
            jac.set_column(j, &u.grad);
            if grad[j] != 0.0 {
                out.grad.axpy(grad[j], &u.grad, 1.0);
                out.hess += &u.hess * grad[j];
            }
        }
        out.hess += &jac * hess * jac.transpose();
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    pub fn ln(&self) -> Self {
        let x = self.value;
        self.compose(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
}

impl Add for &TaylorScalar {
    type Output = TaylorScalar;
    fn add(self, rhs: &TaylorScalar) -> TaylorScalar {
        TaylorScalar {
            value: self.value + rhs.value,
            grad: &self.grad + &rhs.grad,
            hess: &self.hess + &rhs.hess,
        }
    }
}

impl Sub for &TaylorScalar {
    type Output = TaylorScalar;
    fn sub(self, rhs: &TaylorScalar) -> TaylorScalar {
        TaylorScalar {
            value: self.value - rhs.value,
            grad: &self.grad - &rhs.grad,
            hess: &self.hess - &rhs.hess,
        }
    }
}

impl Mul for &TaylorScalar {
    type Output = TaylorScalar;
    fn mul(self, rhs: &TaylorScalar) -> TaylorScalar {
        let mut hess = &self.hess * rhs.value + &rhs.hess * self.value;
        hess.ger(1.0, &self.grad, &rhs.grad, 1.0);
        hess.ger(1.0, &rhs.grad, &self.grad, 1.0);
        TaylorScalar {
            value: self.value * rhs.value,
            grad: &self.grad * rhs.value + &rhs.grad * self.value,
            hess,
        }
    }
}

impl Neg for &TaylorScalar {
    type Output = TaylorScalar;
    fn neg(self) -> TaylorScalar {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64]) -> f64, t: &TaylorScalar, at: &[f64]) {
        let h = 1e-5;
        let n = at.len();
        for i in 0..n {
            let mut p = at.to_vec();
            let mut m = at.to_vec();
            p[i] += h;
            m[i] -= h;
            let g = (f(&p) - f(&m)) / (2.0 * h);
            assert!((g - t.grad[i]).abs() <= 1e-6 * (1.0 + g.abs()), "grad {i}");
            for j in 0..n {
                let mut pp = at.to_vec();
                let mut pm = at.to_vec();
                let mut mp = at.to_vec();
                let mut mm = at.to_vec();
                pp[i] += h;
                pp[j] += h;
                pm[i] += h;
                pm[j] -= h;
                mp[i] -= h;
                mp[j] += h;
                mm[i] -= h;
                mm[j] -= h;
                let hij = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h);
                assert!(
                    (hij - t.hess[(i, j)]).abs() <= 1e-5 * (1.0 + hij.abs()),
                    "hess {i},{j}: {hij} vs {}",
                    t.hess[(i, j)]
                );
            }
        }
    }

    #[test]
    fn product_exp_log_chain() {
        let at = [0.3, -0.7];
        let s = TaylorScalar::seeds(&at);
        // f(a, b) = exp(a * b) + ln(2 + a) * b
        let t = &(&s[0] * &s[1]).exp() + &(&s[0].add_scalar(2.0).ln() * &s[1]);
        let f = |p: &[f64]| (p[0] * p[1]).exp() + (2.0 + p[0]).ln() * p[1];
        assert!((t.value - f(&at)).abs() < 1e-15);
        fd_check(f, &t, &at);
    }

    #[test]
    fn compose_multi_matches_direct() {
        let at = [0.2, 0.5, -0.1];
        let s = TaylorScalar::seeds(&at);
        let u = vec![&s[0] * &s[1], (&s[2] - &s[0]).exp()];
        // F(u1, u2) = u1^2 u2
        let (u1, u2) = (u[0].value, u[1].value);
        let g = DVector::from_vec(vec![2.0 * u1 * u2, u1 * u1]);
        let h = DMatrix::from_row_slice(2, 2, &[2.0 * u2, 2.0 * u1, 2.0 * u1, 0.0]);
        let t = TaylorScalar::compose_multi(&u, u1 * u1 * u2, &g, &h);
        let f = |p: &[f64]| (p[0] * p[1]).powi(2) * (p[2] - p[0]).exp();
        fd_check(f, &t, &at);
    }

    #[test]
    fn zero_variable_propagation_is_value_only() {
        let s = TaylorScalar::plain(&[1.5]);
        let t = s[0].exp().ln();
        assert_eq!(t.nvars(), 0);
        assert!((t.value - 1.5).abs() < 1e-15);
    }
}
