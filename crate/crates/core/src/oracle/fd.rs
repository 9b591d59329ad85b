//! Central finite differences, used only as an independent check on the
//! analytic derivatives.

use crate::cgf::CgfExpr;
use crate::error::Result;

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let fp = f(&p)?;
        p[i] = x[i] - h;
        let fm = f(&p)?;
        p[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference Jacobian of a vector function, `J[i][j] = ∂f_i/∂x_j`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let mut cols = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for j in 0..x.len() {
        p[j] = x[j] + h;
        let fp = f(&p)?;
        p[j] = x[j] - h;
        let fm = f(&p)?;
        p[j] = x[j];
        cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let rows = cols.first().map_or(0, Vec::len);
    Ok((0..rows).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

/// Worst discrepancies between analytic and finite-difference derivatives of
/// a CGF at one point, each measured as `|a − b| / (1 + |b|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdDiscrepancy {
    pub grad: f64,
    pub hess: f64,
}

impl FdDiscrepancy {
    pub fn max(&self) -> f64 {
        self.grad.max(self.hess)
    }
}

/// Per-coordinate step `h / max(1, r_i)` where `r_i` is the larger of the
/// logarithmic rates `|∂_i K| / |K|` and `|∂_ii K| / |∂_i K|`. Keeps the
/// truncation error small where the CGF grows steeply, as deep in the tail of
/// a nested branching CGF.
fn scaled_steps(k: &CgfExpr, s: &[f64], h: f64) -> Result<Vec<f64>> {
    let v = k.eval(s)?;
    Ok((0..s.len())
        .map(|i| {
            let g = v.grad[i].abs();
            let r1 = g / (v.value.abs() + f64::MIN_POSITIVE);
            let r2 = v.hess[(i, i)].abs() / (g + f64::MIN_POSITIVE);
            let r = if v.value == 0.0 { r2 } else { r1.max(r2) };
            h / r.clamp(1.0, 1e6)
        })
        .collect())
}

fn along(s: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut p = s.to_vec();
    p[i] += d;
    p
}

/// Compares `K′` with differences of `K`, and `K″` with differences of the
/// analytic `K′`. Central differences at steps `hᵢ` and `hᵢ/2` are
/// Richardson-extrapolated, with `hᵢ` from `h` scaled to the local rate of
/// change of `K` along coordinate `i`.
pub fn cgf_fd_discrepancy(k: &CgfExpr, s: &[f64], h: f64) -> Result<FdDiscrepancy> {
    let at = k.eval(s)?;
    let steps = scaled_steps(k, s, h)?;
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    let (mut grad, mut hess) = (0.0f64, 0.0f64);
    for (i, &hi) in steps.iter().enumerate() {
        let diff = |d: f64| -> Result<(f64, Vec<f64>)> {
            let p = k.eval(&along(s, i, d))?;
            let m = k.eval(&along(s, i, -d))?;
            let dv = (p.value - m.value) / (2.0 * d);
            let dg = p
                .grad
                .iter()
                .zip(m.grad.iter())
                .map(|(a, b)| (a - b) / (2.0 * d))
                .collect();
            Ok((dv, dg))
        };
        let (v1, g1) = diff(hi)?;
        let (v2, g2) = diff(0.5 * hi)?;
        grad = grad.max(rel(at.grad[i], (4.0 * v2 - v1) / 3.0));
        for j in 0..s.len() {
            hess = hess.max(rel(at.hess[(j, i)], (4.0 * g2[j] - g1[j]) / 3.0));
        }
    }
    Ok(FdDiscrepancy { grad, hess })
}
