//! Principal eigenpairs of `A − diag(c)` and the anti-maximum diagnostic.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::bernstein::v_profile;
use crate::error::{Error, Result};
use crate::operator::{row_sum_norm, OperatorMatrix};

#[derive(Clone, Debug, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive, with `‖φ‖∞ = 1`.
    pub phi: Vec<f64>,
    /// `‖Mφ − λφ‖∞`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Residual target relative to `‖M‖∞`.
    pub rel_tol: f64,
    /// Change in λ between sweeps, relative to `max(1, |λ|)`.
    pub lambda_tol: f64,
    pub max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            lambda_tol: 1e-12,
            max_iterations: 10_000,
        }
    }
}

/// `A − diag(c)`; an empty `c` means zero.
pub fn shifted_matrix(a: &OperatorMatrix, c: &[f64]) -> Result<DMatrix<f64>> {
    let mut m = a.matrix().clone();
    if !c.is_empty() {
        a.check_len(c.len())?;
        for (i, &ci) in c.iter().enumerate() {
            if !ci.is_finite() {
                return Err(Error::config(format!(
                    "potential c is not finite at node {i}"
                )));
            }
            m[(i, i)] -= ci;
        }
    }
    Ok(m)
}

/// Smallest eigenvalue of `A − diag(c)` and its positive eigenvector.
pub fn principal_eigenpair(a: &OperatorMatrix, c: &[f64], opts: EigenOptions) -> Result<EigenPair> {
    let m = shifted_matrix(a, c)?;
    min_eigenpair(&m, &[], opts)
}

/// Second-smallest eigenvalue of `A − diag(c)`, by deflating the principal one.
pub fn second_eigenvalue(a: &OperatorMatrix, c: &[f64], opts: EigenOptions) -> Result<EigenPair> {
    let m = shifted_matrix(a, c)?;
    let first = min_eigenpair(&m, &[], opts)?;
    min_eigenpair(&m, &[first.phi], opts)
}

fn gershgorin_lower(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| {
            let off: f64 = (0..m.ncols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)].abs())
                .sum();
            m[(i, i)] - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// Shifted inverse iteration for a symmetric `m`, orthogonal to `deflate`.
pub(crate) fn min_eigenpair(
    m: &DMatrix<f64>,
    deflate: &[Vec<f64>],
    opts: EigenOptions,
) -> Result<EigenPair> {
    let n = m.nrows();
    let norm = row_sum_norm(m);
    let shift = gershgorin_lower(m) - 1e-6 * norm.max(1.0);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let chol = Cholesky::new(shifted)
        .ok_or_else(|| Error::Numeric("shifted matrix is not positive definite".into()))?;
    let basis: Vec<DVector<f64>> = deflate
        .iter()
        .map(|v| {
            let v = DVector::from_column_slice(v);
            let nv = v.norm();
            v / nv
        })
        .collect();
    let project = |v: &mut DVector<f64>| {
        for b in &basis {
            let d = b.dot(v);
            v.axpy(-d, b, 1.0);
        }
    };
    // A positive start overlaps the principal mode; a sign-alternating one any other.
    let mut v = if basis.is_empty() {
        DVector::from_element(n, 1.0)
    } else {
        DVector::from_fn(n, |i, _| {
            1.0 + ((i * 7919) % 13) as f64 / 13.0 - 0.5 - (i as f64 / n as f64)
        })
    };
    project(&mut v);
    v /= v.norm();
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let tol = opts.rel_tol * norm;
    for it in 1..=opts.max_iterations {
        let mut w = chol.solve(&v);
        project(&mut w);
        let nw = w.norm();
        if !(nw > 0.0 && nw.is_finite()) {
            return Err(Error::Numeric("inverse iteration collapsed".into()));
        }
        v = w / nw;
        let mv = m * &v;
        let new_lambda = v.dot(&mv);
        let sup = v.amax();
        residual = (&mv - &v * new_lambda).amax() / sup;
        let change = (new_lambda - lambda).abs();
        lambda = new_lambda;
        if residual <= tol && change <= opts.lambda_tol * lambda.abs().max(1.0) {
            let scale = if basis.is_empty() {
                v.amax() * v.sum().signum()
            } else {
                v[v.iamax()]
            };
            let phi: Vec<f64> = v.iter().map(|&x| x / scale).collect();
            return Ok(EigenPair {
                lambda,
                phi,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        residual,
    })
}

impl EigenPair {
    pub fn write_csv<W: Write>(&self, x: &[f64], mut w: W) -> std::io::Result<()> {
        writeln!(w, "node,x,phi")?;
        for (i, (&xi, &p)) in x.iter().zip(&self.phi).enumerate() {
            writeln!(w, "{i},{xi:e},{p:e}")?;
        }
        Ok(())
    }
}

/// Solution of `(A − diag(c) − λ) u = −f` with its boundary-weighted ratio.
#[derive(Clone, Debug, Serialize)]
pub struct AntiMaxProfile {
    pub lambda: f64,
    pub u: Vec<f64>,
    /// `u_i / V̂(δ_D(x_i))`.
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio < 0`.
    pub strictly_negative: bool,
    /// `min_ratio > 0`.
    pub strictly_positive: bool,
}

/// Smallest spectral distance tolerated by [`antimaximum_profile`].
pub const PROXIMITY_TOL: f64 = 1e-8;

pub fn antimaximum_profile(
    a: &OperatorMatrix,
    c: &[f64],
    f: &[f64],
    lambda: f64,
) -> Result<AntiMaxProfile> {
    a.check_len(f.len())?;
    if f.iter().any(|&x| x > 0.0) || f.iter().all(|&x| x == 0.0) {
        return Err(Error::config("forcing f must satisfy f <= 0 and f != 0"));
    }
    if !lambda.is_finite() {
        return Err(Error::config("lambda must be finite"));
    }
    let mut m = shifted_matrix(a, c)?;
    for i in 0..a.n() {
        m[(i, i)] -= lambda;
    }
    let rhs = DVector::from_iterator(f.len(), f.iter().map(|&x| -x));
    let u = m.lu().solve(&rhs).ok_or(Error::SpectralProximity {
        lambda,
        distance: 0.0,
    })?;
    // For symmetric M − λ, dist(λ, spectrum) ≤ ‖rhs‖₂ / ‖u‖₂.
    let distance = rhs.norm() / u.norm();
    if !(distance >= PROXIMITY_TOL) {
        return Err(Error::SpectralProximity { lambda, distance });
    }
    let u: Vec<f64> = u.iter().copied().collect();
    let symbol = *a.symbol();
    let ratio: Vec<f64> = u
        .iter()
        .zip(&a.grid.delta)
        .map(|(&ui, &d)| ui / v_profile(&symbol, d))
        .collect();
    let max_ratio = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = ratio.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AntiMaxProfile {
        lambda,
        u,
        ratio,
        max_ratio,
        min_ratio,
        strictly_negative: max_ratio < 0.0,
        strictly_positive: min_ratio > 0.0,
    })
}

/// Measured anti-maximum window above `λ(c)`.
#[derive(Clone, Debug, Serialize)]
pub struct AntiMaxWindow {
    pub lambda1: f64,
    /// `(λ, max ratio)` for each scanned value, in increasing λ.
    pub samples: Vec<(f64, f64)>,
    /// Largest scanned λ such that every scanned value in `(λ(c), λ]` has a negative profile.
    pub upper: Option<f64>,
}

/// Scans `λ = λ(c)(1 + ε)` for `ε` log-spaced on `[eps_min, eps_max]`.
pub fn antimaximum_window(
    a: &OperatorMatrix,
    c: &[f64],
    f: &[f64],
    lambda1: f64,
    eps_min: f64,
    eps_max: f64,
    steps: usize,
) -> Result<AntiMaxWindow> {
    if !(eps_min > 0.0 && eps_max > eps_min && steps >= 2) {
        return Err(Error::config(
            "window scan needs 0 < eps_min < eps_max and at least 2 steps",
        ));
    }
    let mut samples = Vec::with_capacity(steps);
    let mut upper = None;
    let mut open = true;
    for k in 0..steps {
        let eps = eps_min * (eps_max / eps_min).powf(k as f64 / (steps - 1) as f64);
        let lambda = lambda1 * (1.0 + eps);
        let p = antimaximum_profile(a, c, f, lambda)?;
        samples.push((lambda, p.max_ratio));
        if open && p.strictly_negative {
            upper = Some(lambda);
        } else {
            open = false;
        }
    }
    Ok(AntiMaxWindow {
        lambda1,
        samples,
        upper,
    })
}
