use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Normal, Poisson};

use super::{compound, integer_count, Cgf, CgfExpr, CgfSpec, CgfValue, Domain, Interval};
use crate::error::{Error, Result};
use crate::pmf::PmfTable;

/// Kind names accepted by [`make_builtin`].
pub const BUILTIN_KINDS: &[&str] = &[
    "constant",
    "gaussian",
    "poisson",
    "bernoulli",
    "binomial",
    "geometric",
    "negative-binomial",
    "gamma",
    "zero-inflated-poisson",
];

const MAX_TABLE_LEN: usize = 1 << 20;

/// Scalar distribution families with closed-form CGFs.
///
/// `Geometric` counts failures before the first success, so its support is
/// `{0, 1, …}` and its CGF domain is `s < −log(1 − p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Gaussian { mean: f64, var: f64 },
    Poisson { rate: f64 },
    Bernoulli { p: f64 },
    Binomial { n: u64, p: f64 },
    Geometric { p: f64 },
    NegativeBinomial { r: f64, p: f64 },
    Gamma { shape: f64, rate: f64 },
    ZeroInflatedPoisson { zero: f64, rate: f64 },
}

/// Point mass (scalar or vector): `K(s) = s·c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    c: Vec<f64>,
}

pub fn constant(c: Vec<f64>) -> CgfExpr {
    CgfExpr::new(Constant { c })
}

/// Compound Poisson: `λ(M_J(s) − 1)`.
pub fn compound_poisson(rate: f64, jump: &CgfExpr) -> Result<CgfExpr> {
    let count = make_builtin("poisson", &[rate])?;
    compound(&count, jump)
}

/// Builds a builtin CGF from a kind name and its parameters.
///
/// | kind | params |
/// |---|---|
/// | `constant` | `c_1, …, c_d` |
/// | `gaussian` | mean, variance |
/// | `poisson` | rate |
/// | `bernoulli` | p |
/// | `binomial` | n, p |
/// | `geometric` | p |
/// | `negative-binomial` | r, p |
/// | `gamma` | shape, rate |
/// | `zero-inflated-poisson` | zero probability, rate |
pub fn make_builtin(kind: &str, params: &[f64]) -> Result<CgfExpr> {
    if kind == "constant" {
        if params.is_empty() || params.iter().any(|c| !c.is_finite()) {
            return Err(Error::param(kind, "needs one or more finite values"));
        }
        return Ok(constant(params.to_vec()));
    }
    let b = Builtin::new(kind, params)?;
    Ok(CgfExpr::new(b))
}

fn arity(kind: &str, params: &[f64], n: usize) -> Result<()> {
    if params.len() != n {
        return Err(Error::param(
            kind,
            format!("expected {n} parameters, got {}", params.len()),
        ));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::param(kind, "parameters must be finite"));
    }
    Ok(())
}

fn check(kind: &str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::param(kind, reason))
    }
}

impl Builtin {
    pub fn new(kind: &str, params: &[f64]) -> Result<Self> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        match kind {
            "gaussian" => {
                arity(kind, params, 2)?;
                check(kind, params[1] >= 0.0, "variance must be ≥ 0")?;
                Ok(Builtin::Gaussian {
                    mean: params[0],
                    var: params[1],
                })
            }
            "poisson" => {
                arity(kind, params, 1)?;
                check(kind, params[0] > 0.0, "rate must be > 0")?;
                Ok(Builtin::Poisson { rate: params[0] })
            }
            "bernoulli" => {
                arity(kind, params, 1)?;
                check(kind, unit(params[0]), "p must lie in [0, 1]")?;
                Ok(Builtin::Bernoulli { p: params[0] })
            }
            "binomial" => {
                arity(kind, params, 2)?;
                check(
                    kind,
                    params[0] >= 0.0 && params[0].fract() == 0.0,
                    "n must be a nonnegative integer",
                )?;
                check(kind, unit(params[1]), "p must lie in [0, 1]")?;
                Ok(Builtin::Binomial {
                    n: params[0] as u64,
                    p: params[1],
                })
            }
            "geometric" => {
                arity(kind, params, 1)?;
                check(kind, params[0] > 0.0 && params[0] <= 1.0, "p must lie in (0, 1]")?;
                Ok(Builtin::Geometric { p: params[0] })
            }
            "negative-binomial" => {
                arity(kind, params, 2)?;
                check(kind, params[0] > 0.0, "r must be > 0")?;
                check(kind, params[1] > 0.0 && params[1] <= 1.0, "p must lie in (0, 1]")?;
                Ok(Builtin::NegativeBinomial {
                    r: params[0],
                    p: params[1],
                })
            }
            "gamma" => {
                arity(kind, params, 2)?;
                check(kind, params[0] > 0.0, "shape must be > 0")?;
                check(kind, params[1] > 0.0, "rate must be > 0")?;
                Ok(Builtin::Gamma {
                    shape: params[0],
                    rate: params[1],
                })
            }
            "zero-inflated-poisson" => {
                arity(kind, params, 2)?;
                check(
                    kind,
                    params[0] >= 0.0 && params[0] < 1.0,
                    "zero probability must lie in [0, 1)",
                )?;
                check(kind, params[1] > 0.0, "rate must be > 0")?;
                Ok(Builtin::ZeroInflatedPoisson {
                    zero: params[0],
                    rate: params[1],
                })
            }
            other => Err(Error::param(other, "unknown distribution kind")),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Builtin::Gaussian { .. } => "gaussian",
            Builtin::Poisson { .. } => "poisson",
            Builtin::Bernoulli { .. } => "bernoulli",
            Builtin::Binomial { .. } => "binomial",
            Builtin::Geometric { .. } => "geometric",
            Builtin::NegativeBinomial { .. } => "negative-binomial",
            Builtin::Gamma { .. } => "gamma",
            Builtin::ZeroInflatedPoisson { .. } => "zero-inflated-poisson",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Builtin::Gaussian { mean, var } => vec![mean, var],
            Builtin::Poisson { rate } => vec![rate],
            Builtin::Bernoulli { p } => vec![p],
            Builtin::Binomial { n, p } => vec![n as f64, p],
            Builtin::Geometric { p } => vec![p],
            Builtin::NegativeBinomial { r, p } => vec![r, p],
            Builtin::Gamma { shape, rate } => vec![shape, rate],
            Builtin::ZeroInflatedPoisson { zero, rate } => vec![zero, rate],
        }
    }

    fn interval(&self) -> Interval {
        match *self {
            Builtin::Geometric { p } | Builtin::NegativeBinomial { p, .. } => Interval::below(-(-p).ln_1p()),
            Builtin::Gamma { rate, .. } => Interval::below(rate),
            _ => Interval::REAL,
        }
    }

    /// `(K, K′, K″)` at scalar `s` inside the domain.
    fn scalar(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Builtin::Gaussian { mean, var } => (mean * s + 0.5 * var * s * s, mean + var * s, var),
            Builtin::Poisson { rate } => {
                let e = s.exp();
                (rate * s.exp_m1(), rate * e, rate * e)
            }
            Builtin::Bernoulli { p } => bernoulli(p, s),
            Builtin::Binomial { n, p } => {
                let (k, k1, k2) = bernoulli(p, s);
                let n = n as f64;
                (n * k, n * k1, n * k2)
            }
            Builtin::Geometric { p } => geometric(p, s),
            Builtin::NegativeBinomial { r, p } => {
                let (k, k1, k2) = geometric(p, s);
                (r * k, r * k1, r * k2)
            }
            Builtin::Gamma { shape, rate } => {
                let d = rate - s;
                (-shape * (-s / rate).ln_1p(), shape / d, shape / (d * d))
            }
            Builtin::ZeroInflatedPoisson { zero, rate } => {
                let pois = rate * s.exp_m1();
                let mu = rate * s.exp();
                if zero == 0.0 {
                    return (pois, mu, mu);
                }
                let a = zero.ln();
                let b = (-zero).ln_1p() + pois;
                let k = log_add_exp(a, b);
                let w = (b - k).exp();
                let one_minus_w = (a - k).exp();
                (k, w * mu, w * mu + w * one_minus_w * mu * mu)
            }
        }
    }

    fn table(&self, max_leftover: f64) -> Result<PmfTable> {
        match *self {
            Builtin::Gaussian { .. } | Builtin::Gamma { .. } => {
                Err(Error::Unsupported(format!("{} is not a lattice law", self.kind())))
            }
            Builtin::Poisson { rate } => poisson_table(rate, max_leftover),
            Builtin::Bernoulli { p } => Ok(binomial_table(1, p)),
            Builtin::Binomial { n, p } => Ok(binomial_table(n, p)),
            Builtin::Geometric { p } => negative_binomial_table(1.0, p, max_leftover),
            Builtin::NegativeBinomial { r, p } => negative_binomial_table(r, p, max_leftover),
            Builtin::ZeroInflatedPoisson { zero, rate } => {
                let base = poisson_table(rate, max_leftover)?;
                let mut t = PmfTable::scalar(
                    base.iter().map(|(k, p)| (k[0], (1.0 - zero) * p)),
                    (1.0 - zero) * base.leftover(),
                );
                t.add(vec![0], zero);
                Ok(t)
            }
        }
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Result<f64> {
        let bad = |e: &dyn std::fmt::Display| Error::Unsupported(format!("sampler: {e}"));
        Ok(match *self {
            Builtin::Gaussian { mean, var } => Normal::new(mean, var.sqrt()).map_err(|e| bad(&e))?.sample(rng),
            Builtin::Poisson { rate } => draw_poisson(rate, rng)?,
            Builtin::Bernoulli { p } => (rng.random::<f64>() < p) as u8 as f64,
            Builtin::Binomial { n, p } => Binomial::new(n, p).map_err(|e| bad(&e))?.sample(rng) as f64,
            Builtin::Geometric { p } => Geometric::new(p).map_err(|e| bad(&e))?.sample(rng) as f64,
            Builtin::NegativeBinomial { r, p } => draw_negative_binomial(r, p, rng)?,
            Builtin::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate).map_err(|e| bad(&e))?.sample(rng),
            Builtin::ZeroInflatedPoisson { zero, rate } => {
                if rng.random::<f64>() < zero {
                    0.0
                } else {
                    draw_poisson(rate, rng)?
                }
            }
        })
    }

    fn draw_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<f64> {
        match *self {
            Builtin::Gaussian { mean, var } => Builtin::Gaussian {
                mean: t * mean,
                var: t * var,
            }
            .draw(rng),
            Builtin::Poisson { rate } => draw_poisson(t * rate, rng),
            Builtin::Gamma { shape, rate } => Builtin::Gamma { shape: t * shape, rate }.draw(rng),
            Builtin::NegativeBinomial { r, p } => draw_negative_binomial(t * r, p, rng),
            Builtin::Bernoulli { p } => Builtin::Binomial {
                n: integer_count(t)?,
                p,
            }
            .draw(rng),
            Builtin::Binomial { n, p } => Builtin::Binomial {
                n: n * integer_count(t)?,
                p,
            }
            .draw(rng),
            Builtin::Geometric { p } => draw_negative_binomial(integer_count(t)? as f64, p, rng),
            Builtin::ZeroInflatedPoisson { .. } => {
                let mut acc = 0.0;
                for _ in 0..integer_count(t)? {
                    acc += self.draw(rng)?;
                }
                Ok(acc)
            }
        }
    }
}

impl Cgf for Builtin {
    fn dim(&self) -> usize {
        1
    }

    fn domain(&self) -> Domain {
        Domain {
            bounds: vec![self.interval()],
        }
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        let (k, k1, k2) = self.scalar(s[0]);
        Ok(CgfValue::scalar(k, k1, k2))
    }

    fn spec(&self) -> Option<CgfSpec> {
        Some(CgfSpec::leaf(self.kind(), self.params()))
    }

    fn lattice_pmf(&self, max_leftover: f64) -> Option<Result<PmfTable>> {
        match self {
            Builtin::Gaussian { .. } | Builtin::Gamma { .. } => None,
            _ => Some(self.table(max_leftover)),
        }
    }

    fn log_mass_at_zero(&self) -> Option<f64> {
        match *self {
            Builtin::Gaussian { .. } | Builtin::Gamma { .. } => None,
            Builtin::Poisson { rate } => Some(-rate),
            Builtin::Bernoulli { p } => Some((-p).ln_1p()),
            Builtin::Binomial { n, p } => Some(n as f64 * (-p).ln_1p()),
            Builtin::Geometric { p } => Some(p.ln()),
            Builtin::NegativeBinomial { r, p } => Some(r * p.ln()),
            Builtin::ZeroInflatedPoisson { zero, rate } => Some((zero + (1.0 - zero) * (-rate).exp()).ln()),
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(vec![self.draw(rng)?])
    }

    fn sample_scaled(&self, t: f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(vec![self.draw_scaled(t, rng)?])
    }
}

impl Cgf for Constant {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn domain(&self) -> Domain {
        Domain::unbounded(self.c.len())
    }

    fn evaluate(&self, s: &[f64]) -> Result<CgfValue> {
        let d = self.c.len();
        let mut v = CgfValue::zero(d);
        v.value = s.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        v.grad.copy_from_slice(&self.c);
        Ok(v)
    }

    fn spec(&self) -> Option<CgfSpec> {
        Some(CgfSpec::leaf("constant", self.c.clone()))
    }

    fn lattice_pmf(&self, _max_leftover: f64) -> Option<Result<PmfTable>> {
        if self.c.iter().all(|c| c.fract() == 0.0) {
            Some(Ok(PmfTable::point(self.c.iter().map(|&c| c as i64).collect())))
        } else {
            None
        }
    }

    fn log_mass_at_zero(&self) -> Option<f64> {
        if self.c.iter().all(|&c| c == 0.0) {
            Some(0.0)
        } else if self.c.iter().all(|&c| c >= 0.0 && c.fract() == 0.0) {
            Some(f64::NEG_INFINITY)
        } else {
            None
        }
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.c.clone())
    }

    fn sample_scaled(&self, t: f64, _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.c.iter().map(|c| t * c).collect())
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 − p + p e^s)` and derivatives, stable for large `|s|`.
fn bernoulli(p: f64, s: f64) -> (f64, f64, f64) {
    if p == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if p == 1.0 {
        return (s, 1.0, 0.0);
    }
    let z = s + p.ln() - (-p).ln_1p();
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    let q = sigmoid(z);
    ((-p).ln_1p() + softplus, q, q * sigmoid(-z))
}

/// `log p − log(1 − (1 − p)e^s)` and derivatives.
fn geometric(p: f64, s: f64) -> (f64, f64, f64) {
    if p == 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = s + (-p).ln_1p();
    let r = u.exp();
    let one_minus_r = -u.exp_m1();
    let k1 = r / one_minus_r;
    (p.ln() - one_minus_r.ln(), k1, k1 / one_minus_r)
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

fn poisson_table(rate: f64, max_leftover: f64) -> Result<PmfTable> {
    let ln_rate = rate.ln();
    let mut lp = -rate;
    let mut pairs = Vec::new();
    let mut k: u64 = 0;
    loop {
        pairs.push((k as i64, lp.exp()));
        let next = lp + ln_rate - ((k + 1) as f64).ln();
        // Σ_{j>k} p_j ≤ p_{k+1} / (1 − λ/(k+2)) once k + 2 > λ.
        let ratio = rate / (k + 2) as f64;
        if ratio < 1.0 {
            let bound = next.exp() / (1.0 - ratio);
            if bound <= max_leftover {
                return Ok(PmfTable::scalar(pairs, bound));
            }
        }
        if pairs.len() > MAX_TABLE_LEN {
            return Err(Error::Truncation(format!(
                "poisson({rate}) needs more than {MAX_TABLE_LEN} terms"
            )));
        }
        lp = next;
        k += 1;
    }
}

fn binomial_table(n: u64, p: f64) -> PmfTable {
    if p == 0.0 {
        return PmfTable::point(vec![0]);
    }
    if p == 1.0 {
        return PmfTable::point(vec![n as i64]);
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let ln_n = ln_factorial(n);
    let mut ln_k = 0.0;
    let mut pairs = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        if k > 0 {
            ln_k += (k as f64).ln();
        }
        let ln_nk = ln_factorial(n - k);
        pairs.push((
            k as i64,
            (ln_n - ln_k - ln_nk + k as f64 * lp + (n - k) as f64 * lq).exp(),
        ));
    }
    PmfTable::scalar(pairs, 0.0)
}

fn negative_binomial_table(r: f64, p: f64, max_leftover: f64) -> Result<PmfTable> {
    if p == 1.0 {
        return Ok(PmfTable::point(vec![0]));
    }
    let lq = (-p).ln_1p();
    let q = 1.0 - p;
    let mut lp = r * p.ln();
    let mut pairs = Vec::new();
    let mut k: u64 = 0;
    loop {
        pairs.push((k as i64, lp.exp()));
        let kf = k as f64;
        let next = lp + ((kf + r) / (kf + 1.0)).ln() + lq;
        // successive ratios beyond k+1 never exceed max(ratio_{k+1}, 1 − p)
        let rho = (((kf + 1.0 + r) / (kf + 2.0)) * q).max(q);
        if rho < 1.0 {
            let bound = next.exp() / (1.0 - rho);
            if bound <= max_leftover {
                return Ok(PmfTable::scalar(pairs, bound));
            }
        }
        if pairs.len() > MAX_TABLE_LEN {
            return Err(Error::Truncation(format!(
                "negative-binomial({r}, {p}) needs more than {MAX_TABLE_LEN} terms"
            )));
        }
        lp = next;
        k += 1;
    }
}

fn draw_poisson(rate: f64, rng: &mut dyn RngCore) -> Result<f64> {
    if rate == 0.0 {
        return Ok(0.0);
    }
    Poisson::new(rate)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Unsupported(format!("poisson sampler: {e}")))
}

fn draw_negative_binomial(r: f64, p: f64, rng: &mut dyn RngCore) -> Result<f64> {
    if r == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let g = Gamma::new(r, (1.0 - p) / p)
        .map_err(|e| Error::Unsupported(format!("gamma sampler: {e}")))?
        .sample(rng);
    draw_poisson(g, rng)
}
