//! Bernstein symbols Ψ, their one-dimensional Lévy kernels and the boundary
//! profile `V̂(r) = Ψ(r⁻²)^{-1/2}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadOptions};

/// A complete Bernstein function from the standard catalog.
///
/// Parameters are the operator orders: `Fractional { alpha }` is
/// `Ψ(x) = x^{α/2}`, so `Ψ(−Δ)` is the fractional Laplacian of order `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymbolSpec", into = "SymbolSpec")]
pub enum BernsteinSymbol {
    /// `x^{α/2}`, `α ∈ (0, 2]`.
    Fractional { alpha: f64 },
    /// `(x + m^{2/α})^{α/2} − m`, `α ∈ (0, 2)`, `m > 0`.
    Relativistic { alpha: f64, m: f64 },
    /// `x^{α/2} + x^{β/2}`, `α, β ∈ (0, 2]`.
    SumFractional { alpha: f64, beta: f64 },
    /// `x^{α/2} log(1 + x)^{−β/2}`, `α ∈ (0, 2]`, `β ∈ [0, α)`.
    LogDamped { alpha: f64, beta: f64 },
    /// `x^{α/2} log(1 + x)^{β/2}`, `α ∈ (0, 2)`, `β ∈ (0, 2 − α)`.
    LogBoosted { alpha: f64, beta: f64 },
}

fn check(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(format!("parameter out of range: {what}")))
    }
}

impl BernsteinSymbol {
    pub fn fractional(alpha: f64) -> Result<Self> {
        let s = Self::Fractional { alpha };
        s.validate().map(|_| s)
    }

    pub fn relativistic(alpha: f64, m: f64) -> Result<Self> {
        let s = Self::Relativistic { alpha, m };
        s.validate().map(|_| s)
    }

    pub fn sum_fractional(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self::SumFractional { alpha, beta };
        s.validate().map(|_| s)
    }

    pub fn log_damped(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self::LogDamped { alpha, beta };
        s.validate().map(|_| s)
    }

    pub fn log_boosted(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self::LogBoosted { alpha, beta };
        s.validate().map(|_| s)
    }

    /// Checks the catalog parameter ranges, naming the violated one.
    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64| x.is_finite();
        match *self {
            Self::Fractional { alpha } => check(
                finite(alpha) && alpha > 0.0 && alpha <= 2.0,
                "fractional: alpha in (0, 2]",
            ),
            Self::Relativistic { alpha, m } => {
                check(
                    finite(alpha) && alpha > 0.0 && alpha < 2.0,
                    "relativistic: alpha in (0, 2)",
                )?;
                check(finite(m) && m > 0.0, "relativistic: m > 0")
            }
            Self::SumFractional { alpha, beta } => {
                check(
                    finite(alpha) && alpha > 0.0 && alpha <= 2.0,
                    "sum_fractional: alpha in (0, 2]",
                )?;
                check(
                    finite(beta) && beta > 0.0 && beta <= 2.0,
                    "sum_fractional: beta in (0, 2]",
                )
            }
            Self::LogDamped { alpha, beta } => {
                check(
                    finite(alpha) && alpha > 0.0 && alpha <= 2.0,
                    "log_damped: alpha in (0, 2]",
                )?;
                check(
                    finite(beta) && beta >= 0.0 && beta < alpha,
                    "log_damped: beta in [0, alpha)",
                )
            }
            Self::LogBoosted { alpha, beta } => {
                check(
                    finite(alpha) && alpha > 0.0 && alpha < 2.0,
                    "log_boosted: alpha in (0, 2)",
                )?;
                check(
                    finite(beta) && beta > 0.0 && beta < 2.0 - alpha,
                    "log_boosted: beta in (0, 2 - alpha)",
                )
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Fractional { .. } => "fractional",
            Self::Relativistic { .. } => "relativistic",
            Self::SumFractional { .. } => "sum_fractional",
            Self::LogDamped { .. } => "log_damped",
            Self::LogBoosted { .. } => "log_boosted",
        }
    }

    /// Ψ(x) for `x ≥ 0`. Assumes a validated symbol.
    pub fn psi(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Fractional { alpha } => x.powf(alpha / 2.0),
            Self::Relativistic { alpha, m } => {
                let mu = m.powf(2.0 / alpha);
                // (x + μ)^ρ − μ^ρ without cancellation for small x.
                let rho = alpha / 2.0;
                mu.powf(rho) * ((rho * (x / mu).ln_1p()).exp_m1())
            }
            Self::SumFractional { alpha, beta } => x.powf(alpha / 2.0) + x.powf(beta / 2.0),
            Self::LogDamped { alpha, beta } => x.powf(alpha / 2.0) * x.ln_1p().powf(-beta / 2.0),
            Self::LogBoosted { alpha, beta } => x.powf(alpha / 2.0) * x.ln_1p().powf(beta / 2.0),
        }
    }

    /// Ψ'(x) for `x > 0`.
    pub fn psi_derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Fractional { alpha } => alpha / 2.0 * x.powf(alpha / 2.0 - 1.0),
            Self::Relativistic { alpha, m } => {
                let mu = m.powf(2.0 / alpha);
                alpha / 2.0 * (x + mu).powf(alpha / 2.0 - 1.0)
            }
            Self::SumFractional { alpha, beta } => {
                alpha / 2.0 * x.powf(alpha / 2.0 - 1.0) + beta / 2.0 * x.powf(beta / 2.0 - 1.0)
            }
            Self::LogDamped { alpha, beta } => log_power_derivative(x, alpha / 2.0, -beta / 2.0),
            Self::LogBoosted { alpha, beta } => log_power_derivative(x, alpha / 2.0, beta / 2.0),
        }
    }

    /// Declared weak-scaling exponents `(κ₁, κ₂)`.
    pub fn scaling_exponents(&self) -> (f64, f64) {
        match *self {
            Self::Fractional { alpha } | Self::Relativistic { alpha, .. } => {
                (alpha / 2.0, alpha / 2.0)
            }
            Self::SumFractional { alpha, beta } => (alpha.min(beta) / 2.0, alpha.max(beta) / 2.0),
            Self::LogDamped { alpha, beta } => ((alpha - beta) / 2.0, alpha / 2.0),
            Self::LogBoosted { alpha, beta } => (alpha / 2.0, (alpha + beta) / 2.0),
        }
    }

    /// Declared scaling constant `b₁ ≥ 1`.
    pub fn scaling_constant(&self) -> f64 {
        match *self {
            Self::Relativistic { alpha, m } => {
                // Ψ(x)/x^ρ increases from (1+μ)^ρ − μ^ρ at x = 1 to 1 at infinity.
                let rho = alpha / 2.0;
                let mu = m.powf(2.0 / alpha);
                1.0 / ((1.0 + mu).powf(rho) - mu.powf(rho))
            }
            _ => 1.0,
        }
    }

    /// Leading non-analytic terms `c·|ξ|^e` of `Ψ(ξ²)` as `ξ → 0`.
    pub fn small_argument_powers(&self) -> Vec<(f64, f64)> {
        let mut terms = match *self {
            Self::Fractional { alpha } => vec![(1.0, alpha)],
            Self::Relativistic { .. } => Vec::new(),
            Self::SumFractional { alpha, beta } => vec![(1.0, alpha), (1.0, beta)],
            Self::LogDamped { alpha, beta } => vec![(1.0, alpha - beta)],
            Self::LogBoosted { alpha, beta } => vec![(1.0, alpha + beta)],
        };
        terms.retain(|&(_, e)| (e / 2.0 - (e / 2.0).round()).abs() > 1e-12);
        terms
    }
}

fn log_power_derivative(x: f64, rho: f64, gamma_exp: f64) -> f64 {
    let l = x.ln_1p();
    rho * x.powf(rho - 1.0) * l.powf(gamma_exp)
        + gamma_exp * x.powf(rho) * l.powf(gamma_exp - 1.0) / (1.0 + x)
}

/// Evaluates Ψ(x) after validating the symbol and the argument.
pub fn psi_eval(symbol: &BernsteinSymbol, x: f64) -> Result<f64> {
    symbol.validate()?;
    if !(x >= 0.0) {
        return Err(Error::config(format!("psi argument must be >= 0, got {x}")));
    }
    Ok(symbol.psi(x))
}

/// Boundary profile `V̂(r) = Ψ(r⁻²)^{-1/2}`, with `V̂(0) = 0`.
pub fn v_profile(symbol: &BernsteinSymbol, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    symbol.psi(1.0 / (r * r)).powf(-0.5)
}

/// Serialized form: `{ kind = "fractional", alpha = 1.0 }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

impl TryFrom<SymbolSpec> for BernsteinSymbol {
    type Error = Error;

    fn try_from(spec: SymbolSpec) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::config(format!("symbol kind '{}' requires '{name}'", spec.kind)))
        };
        let forbid = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(Error::config(format!(
                "symbol kind '{}' takes no '{name}'",
                spec.kind
            ))),
            None => Ok(()),
        };
        let symbol = match spec.kind.as_str() {
            "fractional" => {
                forbid(spec.beta, "beta")?;
                forbid(spec.m, "m")?;
                Self::Fractional {
                    alpha: need(spec.alpha, "alpha")?,
                }
            }
            "relativistic" => {
                forbid(spec.beta, "beta")?;
                Self::Relativistic {
                    alpha: need(spec.alpha, "alpha")?,
                    m: need(spec.m, "m")?,
                }
            }
            "sum_fractional" | "log_damped" | "log_boosted" => {
                forbid(spec.m, "m")?;
                let alpha = need(spec.alpha, "alpha")?;
                let beta = need(spec.beta, "beta")?;
                match spec.kind.as_str() {
                    "sum_fractional" => Self::SumFractional { alpha, beta },
                    "log_damped" => Self::LogDamped { alpha, beta },
                    _ => Self::LogBoosted { alpha, beta },
                }
            }
            other => return Err(Error::config(format!("unknown symbol kind '{other}'"))),
        };
        symbol.validate()?;
        Ok(symbol)
    }
}

impl From<BernsteinSymbol> for SymbolSpec {
    fn from(s: BernsteinSymbol) -> Self {
        let kind = s.kind().to_string();
        match s {
            BernsteinSymbol::Fractional { alpha } => SymbolSpec {
                kind,
                alpha: Some(alpha),
                beta: None,
                m: None,
            },
            BernsteinSymbol::Relativistic { alpha, m } => SymbolSpec {
                kind,
                alpha: Some(alpha),
                beta: None,
                m: Some(m),
            },
            BernsteinSymbol::SumFractional { alpha, beta }
            | BernsteinSymbol::LogDamped { alpha, beta }
            | BernsteinSymbol::LogBoosted { alpha, beta } => SymbolSpec {
                kind,
                alpha: Some(alpha),
                beta: Some(beta),
                m: None,
            },
        }
    }
}

/// Result of the weak-scaling check on a sample grid.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub kappa1_declared: f64,
    pub kappa2_declared: f64,
    pub b1_declared: f64,
    pub kappa1_empirical: f64,
    pub kappa2_empirical: f64,
    /// Smallest `b` with `(1/b)(R/r)^{κ₁} ≤ Ψ(R)/Ψ(r) ≤ b(R/r)^{κ₂}` over the grid.
    pub b1_empirical: f64,
    pub pass: bool,
}

/// Empirical weak-scaling exponents from all pairwise log-ratios on `r_grid`.
pub fn check_scaling(symbol: &BernsteinSymbol, r_grid: &[f64]) -> Result<ScalingReport> {
    symbol.validate()?;
    if r_grid.len() < 10 {
        return Err(Error::config("scaling check needs at least 10 grid points"));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid[0] < 1.0 || *r_grid.last().unwrap() > 1e6
    {
        return Err(Error::config(
            "scaling grid must be increasing within [1, 1e6]",
        ));
    }
    let (k1, k2) = symbol.scaling_exponents();
    let b1 = symbol.scaling_constant();
    let psi: Vec<f64> = r_grid.iter().map(|&r| symbol.psi(r)).collect();
    let mut e_min = f64::INFINITY;
    let mut e_max = f64::NEG_INFINITY;
    let mut b_emp: f64 = 1.0;
    for i in 0..r_grid.len() {
        for j in i + 1..r_grid.len() {
            let ratio = psi[j] / psi[i];
            let scale = r_grid[j] / r_grid[i];
            let e = ratio.ln() / scale.ln();
            e_min = e_min.min(e);
            e_max = e_max.max(e);
            b_emp = b_emp
                .max(scale.powf(k1) / ratio)
                .max(ratio / scale.powf(k2));
        }
    }
    let slack = 1e-12;
    Ok(ScalingReport {
        kappa1_declared: k1,
        kappa2_declared: k2,
        b1_declared: b1,
        kappa1_empirical: e_min,
        kappa2_empirical: e_max,
        b1_empirical: b_emp,
        pass: b_emp <= b1 * (1.0 + slack),
    })
}

/// Normalization of the one-dimensional fractional kernel `c(1,α) r^{−1−α}`.
pub fn fractional_constant(alpha: f64) -> f64 {
    alpha * 2f64.powf(alpha - 1.0) * gamma((1.0 + alpha) / 2.0)
        / (PI.sqrt() * gamma(1.0 - alpha / 2.0))
}

/// Modified Bessel function of the second kind `K_ν(z)`, `z > 0`, from
/// `∫₀^∞ exp(−z cosh t) cosh(νt) dt`.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Numeric(format!("bessel_k needs z > 0, got {z}")));
    }
    // exp(−z(cosh t − 1)) falls below e^{-745} past t_max; cosh t − 1 = 2 sinh²(t/2).
    let t_max = (1.0 + 745.0 / z).acosh() + nu.abs().max(1.0);
    let r = quadrature::integrate(
        |t| {
            (-2.0 * z * (0.5 * t).sinh().powi(2) + nu * t).exp()
                * 0.5
                * (1.0 + (-2.0 * nu * t).exp())
        },
        0.0,
        t_max,
        QuadOptions {
            rel_tol: 1e-12,
            ..QuadOptions::default()
        },
    )?;
    Ok(r.value * (-z).exp())
}

/// Which formula backs `j(r)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Closed-form density (fractional, sum of fractional, relativistic).
    Exact,
    /// `normalization · Ψ(r⁻²)/r`, comparable to the true kernel.
    ScaledProfile,
}

/// Radial Lévy density `j(r)` of the subordinate Brownian motion in `d = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevyKernel {
    pub symbol: BernsteinSymbol,
    pub mode: KernelMode,
    pub normalization: f64,
}

/// Moments of `j` on the pieces used by the operator definition.
#[derive(Clone, Debug, Serialize)]
pub struct KernelMoments {
    /// `∫_{|y|<h} y² j(|y|) dy`.
    pub sigma2_local: f64,
    /// Two-sided masses of the cells `h + k h ≤ |y| < h + (k+1) h`, truncated at `R`.
    pub mass_mid: Vec<f64>,
    /// `∫_{|y|>R} j(|y|) dy`.
    pub tail_mass: f64,
}

impl LevyKernel {
    /// Builds a kernel in the requested mode.
    pub fn new(symbol: BernsteinSymbol, mode: KernelMode) -> Result<Self> {
        symbol.validate()?;
        let kernel = match mode {
            KernelMode::Exact => {
                let ok = match symbol {
                    BernsteinSymbol::Fractional { alpha } => alpha < 2.0,
                    BernsteinSymbol::SumFractional { alpha, beta } => alpha < 2.0 && beta < 2.0,
                    BernsteinSymbol::Relativistic { .. } => true,
                    _ => {
                        return Err(Error::UnsupportedKernel(format!(
                            "no closed-form kernel for '{}'; use scaled_profile",
                            symbol.kind()
                        )))
                    }
                };
                if !ok {
                    return Err(Error::UnsupportedKernel(
                        "order 2 component is local and has no jump kernel".into(),
                    ));
                }
                Self {
                    symbol,
                    mode,
                    normalization: 1.0,
                }
            }
            KernelMode::ScaledProfile => {
                let (_, k2) = symbol.scaling_exponents();
                if k2 >= 1.0 {
                    return Err(Error::UnsupportedKernel(
                        "scaled profile with upper exponent 1 is not integrable against y^2".into(),
                    ));
                }
                Self {
                    symbol,
                    mode,
                    normalization: 1.0,
                }
            }
        };
        Ok(kernel)
    }

    /// Exact mode where a closed form exists, otherwise the scaled profile.
    pub fn preferred(symbol: BernsteinSymbol) -> Result<Self> {
        match Self::new(symbol, KernelMode::Exact) {
            Ok(k) => Ok(k),
            Err(Error::UnsupportedKernel(_)) => Self::new(symbol, KernelMode::ScaledProfile),
            Err(e) => Err(e),
        }
    }

    /// `j = Σ coef · r^{−1−order}` when the kernel is a finite sum of powers.
    pub(crate) fn power_terms(&self) -> Option<Vec<(f64, f64)>> {
        let c = self.normalization;
        match (self.mode, self.symbol) {
            (KernelMode::Exact, BernsteinSymbol::Fractional { alpha }) => {
                Some(vec![(fractional_constant(alpha), alpha)])
            }
            (KernelMode::Exact, BernsteinSymbol::SumFractional { alpha, beta }) => Some(vec![
                (fractional_constant(alpha), alpha),
                (fractional_constant(beta), beta),
            ]),
            (KernelMode::ScaledProfile, BernsteinSymbol::Fractional { alpha }) => {
                Some(vec![(c, alpha)])
            }
            (KernelMode::ScaledProfile, BernsteinSymbol::SumFractional { alpha, beta }) => {
                Some(vec![(c, alpha), (c, beta)])
            }
            _ => None,
        }
    }

    /// `j(r)` for `r > 0`.
    pub fn density(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::config(format!("kernel radius must be > 0, got {r}")));
        }
        if let Some(terms) = self.power_terms() {
            return Ok(terms.iter().map(|&(c, a)| c * r.powf(-1.0 - a)).sum());
        }
        match (self.mode, self.symbol) {
            (KernelMode::Exact, BernsteinSymbol::Relativistic { alpha, m }) => {
                let rho = alpha / 2.0;
                let sqrt_mu = m.powf(1.0 / alpha);
                let nu = (1.0 + alpha) / 2.0;
                let z = sqrt_mu * r;
                if z < 1e-6 {
                    // z^ν K_ν(z) → 2^{ν−1} Γ(ν); the relative corrections are below 1e-12.
                    return Ok(fractional_constant(alpha) * r.powf(-1.0 - alpha));
                }
                let k = bessel_k(nu, z)?;
                Ok(rho / (gamma(1.0 - rho) * PI.sqrt()) * (2.0 * sqrt_mu / r).powf(nu) * k)
            }
            (KernelMode::ScaledProfile, s) => Ok(self.normalization * s.psi(1.0 / (r * r)) / r),
            _ => Err(Error::Internal("exact kernel without closed form".into())),
        }
    }

    fn density_unchecked(&self, r: f64) -> f64 {
        self.density(r).unwrap_or(f64::NAN)
    }

    fn quad_one_sided<F: Fn(f64) -> f64>(&self, weight: F, lo: f64, hi: f64) -> Result<f64> {
        let opts = QuadOptions {
            rel_tol: 1e-12,
            ..QuadOptions::default()
        };
        Ok(quadrature::integrate(|y| weight(y) * self.density_unchecked(y), lo, hi, opts)?.value)
    }

    /// One-sided `∫_0^{ε} y² j(y) dy`.
    pub(crate) fn second_moment_near(&self, eps: f64) -> Result<f64> {
        if let Some(terms) = self.power_terms() {
            return Ok(terms
                .iter()
                .map(|&(c, a)| c * eps.powf(2.0 - a) / (2.0 - a))
                .sum());
        }
        self.quad_one_sided(|y| y * y, 0.0, eps)
    }

    /// One-sided `∫_R^∞ j(y) dy`.
    pub fn tail_one_sided(&self, r: f64) -> Result<f64> {
        if let Some(terms) = self.power_terms() {
            return Ok(terms.iter().map(|&(c, a)| c * r.powf(-a) / a).sum());
        }
        let opts = QuadOptions {
            rel_tol: 1e-12,
            ..QuadOptions::default()
        };
        Ok(quadrature::integrate_to_infinity(|y| self.density_unchecked(y), r, opts)?.value)
    }

    /// One-sided mass `∫_lo^hi j(y) dy`.
    pub fn mass_one_sided(&self, lo: f64, hi: f64) -> Result<f64> {
        if let Some(terms) = self.power_terms() {
            return Ok(terms
                .iter()
                .map(|&(c, a)| c * power_integral(-a, lo, hi))
                .sum());
        }
        self.quad_one_sided(|_| 1.0, lo, hi)
    }

    /// `[∫ j, ∫ (y−c) j, ∫ (y−c)² j]` over `[lo, hi]`, where `c` is the cell centre.
    pub(crate) fn cell_moments(&self, lo: f64, hi: f64) -> Result<[f64; 3]> {
        let c = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        if let Some(terms) = self.power_terms() {
            let m0 = terms
                .iter()
                .map(|&(k, a)| k * power_integral(-a, lo, hi))
                .sum();
            if c / half < 16.0 {
                // Adjacent cells: raw moments in closed form, no cancellation at this ratio.
                let raw = |n: f64| -> f64 {
                    terms
                        .iter()
                        .map(|&(k, a)| k * power_integral(n - a, lo, hi))
                        .sum()
                };
                let (p1, p2) = (raw(1.0), raw(2.0));
                return Ok([m0, p1 - c * m0, p2 - 2.0 * c * p1 + c * c * m0]);
            }
            let [_, m1, m2] = kronrod_moments(
                |y| terms.iter().map(|&(k, a)| k * y.powf(-1.0 - a)).sum(),
                lo,
                hi,
            );
            return Ok([m0, m1, m2]);
        }
        Ok([
            self.quad_one_sided(|_| 1.0, lo, hi)?,
            self.quad_one_sided(|y| y - c, lo, hi)?,
            self.quad_one_sided(|y| (y - c) * (y - c), lo, hi)?,
        ])
    }

    /// Local second moment, cell masses and tail mass (all two-sided).
    pub fn moments(&self, h: f64, far: f64) -> Result<KernelMoments> {
        if !(h > 0.0 && far > h) {
            return Err(Error::config(format!(
                "kernel moments need 0 < h < R, got h={h}, R={far}"
            )));
        }
        let sigma2_local = 2.0 * self.second_moment_near(h)?;
        let mut mass_mid = Vec::new();
        let mut lo = h;
        while lo < far {
            let hi = (lo + h).min(far);
            mass_mid.push(2.0 * self.mass_one_sided(lo, hi)?);
            lo = hi;
        }
        let tail_mass = 2.0 * self.tail_one_sided(far)?;
        Ok(KernelMoments {
            sigma2_local,
            mass_mid,
            tail_mass,
        })
    }

    /// `∫ min(y², 1) j(|y|) dy`, which must be finite.
    pub fn integrability(&self) -> Result<f64> {
        Ok(2.0 * (self.second_moment_near(1.0)? + self.tail_one_sided(1.0)?))
    }

    /// Empirical `b₂ = max j(r)/j(r+1)` over `r_samples` points on `[1, r_max]`.
    pub fn jump_ratio_constant(&self, r_max: f64, r_samples: usize) -> Result<f64> {
        let n = r_samples.max(2);
        let mut b2: f64 = 0.0;
        for i in 0..n {
            let r = 1.0 + (r_max - 1.0) * i as f64 / (n - 1) as f64;
            b2 = b2.max(self.density(r)? / self.density(r + 1.0)?);
        }
        Ok(b2)
    }
}

/// `∫_lo^hi y^{e−1} dy`, stable as `e → 0`.
fn power_integral(e: f64, lo: f64, hi: f64) -> f64 {
    let ll = (hi / lo).ln();
    if (e * ll).abs() < 1e-8 {
        lo.powf(e) * ll * (1.0 + 0.5 * e * ll)
    } else {
        lo.powf(e) * (e * ll).exp_m1() / e
    }
}

/// Single 15-point Kronrod pass for centred moments of a smooth integrand.
fn kronrod_moments<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> [f64; 3] {
    const X: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const W: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    let c = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut out = [0.0; 3];
    for (&x, &w) in X.iter().zip(&W) {
        let nodes: &[f64] = if x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in nodes {
            let t = s * x * half;
            let v = f(c + t) * w * half;
            out[0] += v;
            out[1] += v * t;
            out[2] += v * t * t;
        }
    }
    out
}
