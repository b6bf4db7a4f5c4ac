//! Steady states of `Ψ(−Δ)u = a u − f(x,u) − c h(x,u)`: monotone iteration,
//! the logistic solution `v_a`, harvesting branches and the critical harvest.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::v_profile;
use crate::error::{Error, Result};
use crate::operator::OperatorMatrix;
use crate::spectral::{principal_eigenpair, EigenOptions, EigenPair};

/// Crowding term `f(x, s) = b(x) sᵖ` for `s ≥ 0`, extended by zero for `s < 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crowding {
    pub b: Vec<f64>,
    pub p: f64,
}

/// Harvest term `h(x, s)`, extended linearly for `s < 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Harvest {
    /// `h₀(x)`.
    ConstantYield { h0: Vec<f64> },
    /// `h₀(x) (κ + s)/(1 + s)`.
    Saturating { h0: Vec<f64>, kappa: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReactionSpec {
    pub a: f64,
    pub c: f64,
    pub f: Crowding,
    pub h: Harvest,
}

/// Outcome of the structure checks on `f` and `h`.
#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub f_vanishes_at_zero: bool,
    pub fs_vanishes_at_zero: bool,
    pub ratio_increasing: bool,
    pub ratio_unbounded: bool,
    pub h_bounded: bool,
    pub h_positive_somewhere: bool,
}

impl StructureReport {
    pub fn crowding_ok(&self) -> bool {
        self.f_vanishes_at_zero
            && self.fs_vanishes_at_zero
            && self.ratio_increasing
            && self.ratio_unbounded
    }
}

impl Harvest {
    pub fn profile(&self) -> &[f64] {
        match self {
            Harvest::ConstantYield { h0 } | Harvest::Saturating { h0, .. } => h0,
        }
    }

    fn sigma(&self, s: f64) -> (f64, f64) {
        match *self {
            Harvest::ConstantYield { .. } => (1.0, 0.0),
            Harvest::Saturating { kappa, .. } => {
                let ds0 = 1.0 - kappa;
                if s < 0.0 {
                    (kappa + ds0 * s, ds0)
                } else {
                    ((kappa + s) / (1.0 + s), ds0 / ((1.0 + s) * (1.0 + s)))
                }
            }
        }
    }

    /// `sup_s |h(·, s)|` over `s ≥ 0`, as a multiple of each node's `h₀`.
    fn sup_factor(&self) -> f64 {
        match *self {
            Harvest::ConstantYield { .. } => 1.0,
            Harvest::Saturating { kappa, .. } => kappa.max(1.0),
        }
    }

    fn slope_sup_factor(&self) -> f64 {
        match *self {
            Harvest::ConstantYield { .. } => 0.0,
            Harvest::Saturating { kappa, .. } => (1.0 - kappa).abs(),
        }
    }
}

impl ReactionSpec {
    /// `f = s²` with unit coefficient, no harvesting.
    pub fn logistic(n: usize, a: f64) -> Self {
        Self {
            a,
            c: 0.0,
            f: Crowding {
                b: vec![1.0; n],
                p: 2.0,
            },
            h: Harvest::ConstantYield { h0: vec![1.0; n] },
        }
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    pub fn with_a(&self, a: f64) -> Self {
        Self { a, ..self.clone() }
    }

    pub fn n(&self) -> usize {
        self.f.b.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::config("growth rate a must be finite"));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::config("harvest intensity c must be finite and >= 0"));
        }
        if !(self.f.p.is_finite() && self.f.p > 1.0) {
            return Err(Error::config("crowding exponent p must be > 1"));
        }
        for (name, len) in [("f.b", self.f.b.len()), ("h.h0", self.h.profile().len())] {
            if len != n {
                return Err(Error::config(format!(
                    "{name} has {len} values for {n} nodes"
                )));
            }
        }
        if self.f.b.iter().any(|&b| !(b.is_finite() && b > 0.0)) {
            return Err(Error::config("crowding coefficient b must be positive"));
        }
        if self
            .h
            .profile()
            .iter()
            .any(|&h| !(h.is_finite() && h >= 0.0))
        {
            return Err(Error::config("harvest profile h0 must be >= 0"));
        }
        if let Harvest::Saturating { kappa, .. } = self.h {
            if !(kappa.is_finite() && kappa >= 0.0) {
                return Err(Error::config("saturating harvest needs kappa >= 0"));
            }
        }
        Ok(())
    }

    pub fn f(&self, i: usize, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.f.b[i] * s.powf(self.f.p)
        }
    }

    pub fn f_s(&self, i: usize, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.f.p * self.f.b[i] * s.powf(self.f.p - 1.0)
        }
    }

    pub fn h(&self, i: usize, s: f64) -> f64 {
        self.h.profile()[i] * self.h.sigma(s).0
    }

    pub fn h_s(&self, i: usize, s: f64) -> f64 {
        self.h.profile()[i] * self.h.sigma(s).1
    }

    /// `F(u) = a u − f(·,u) − c h(·,u)`.
    pub fn rhs(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &s)| self.a * s - self.f(i, s) - self.c * self.h(i, s))
            .collect()
    }

    /// `∂F/∂s = a − f_s(·,u) − c h_s(·,u)`.
    pub fn linearization(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &s)| self.a - self.f_s(i, s) - self.c * self.h_s(i, s))
            .collect()
    }

    /// `K` with `min_x f(x, K)/K = a`; every nonnegative solution satisfies `u ≤ K`.
    pub fn apriori_bound(&self) -> f64 {
        let b_min = self.f.b.iter().copied().fold(f64::INFINITY, f64::min);
        (self.a.max(0.0) / b_min).powf(1.0 / (self.f.p - 1.0))
    }

    /// `sup |h|` over the domain and `s ≥ 0`.
    pub fn h_sup(&self) -> f64 {
        self.h.profile().iter().copied().fold(0.0, f64::max) * self.h.sup_factor()
    }

    /// Shift `θ = 1.1 (a + max |∂_s(f + c h)|)` over `s ∈ [0, s_max]`.
    pub fn theta(&self, s_max: f64) -> f64 {
        let fs = (0..self.n())
            .map(|i| self.f_s(i, s_max.max(0.0)))
            .fold(0.0, f64::max);
        let hs = self.c
            * self.h.profile().iter().copied().fold(0.0, f64::max)
            * self.h.slope_sup_factor();
        1.1 * (self.a.abs() + fs + hs)
    }

    /// Sampled structure checks on `f` and `h`.
    pub fn check_structure(&self) -> StructureReport {
        let n = self.n();
        let s_grid: Vec<f64> = (0..60)
            .map(|k| 1e-3 * 10f64.powf(6.0 * k as f64 / 59.0))
            .collect();
        let mut ratio_increasing = true;
        for i in 0..n {
            let ratios: Vec<f64> = s_grid.iter().map(|&s| self.f(i, s) / s).collect();
            if ratios.windows(2).any(|w| !(w[1] > w[0])) {
                ratio_increasing = false;
            }
        }
        StructureReport {
            f_vanishes_at_zero: (0..n).all(|i| self.f(i, 0.0) == 0.0),
            fs_vanishes_at_zero: (0..n).all(|i| self.f_s(i, 0.0) == 0.0),
            ratio_increasing,
            ratio_unbounded: (0..n).all(|i| self.f(i, 1e3) / 1e3 > self.a),
            h_bounded: self.h_sup().is_finite(),
            h_positive_somewhere: (0..n).any(|i| self.h(i, 0.0) > 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Logistic,
    Maximal,
    Small,
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    pub u: Vec<f64>,
    /// `‖A u − F(u)‖∞`.
    pub residual: f64,
    pub branch: Branch,
    pub iterations: usize,
    /// `(iteration, ‖u^{k+1} − u^k‖∞)` at powers of two and at the last iteration.
    pub log: Vec<(usize, f64)>,
}

impl SteadyState {
    fn none(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            residual: 0.0,
            branch: Branch::None,
            iterations: 0,
            log: Vec::new(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        sup(&self.u)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Fixed shift for the monotone solvers; `None` uses [`ReactionSpec::theta`].
    pub theta: Option<f64>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 1_000_000,
            theta: None,
        }
    }
}

impl SteadyOptions {
    fn shift(&self, spec: &ReactionSpec, s_max: f64) -> Result<f64> {
        match self.theta {
            None => Ok(spec.theta(s_max)),
            Some(t) => {
                let needed = spec.theta(s_max) / 1.1;
                if t >= needed {
                    Ok(t)
                } else {
                    Err(Error::config(format!(
                        "theta {t} below the Lipschitz bound {needed}"
                    )))
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Start at `u_hi`; iterates decrease.
    FromAbove,
    /// Start at `u_lo`; iterates increase.
    FromBelow,
}

pub(crate) fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `‖A u − F(u)‖∞`.
pub fn residual(op: &OperatorMatrix, spec: &ReactionSpec, u: &[f64]) -> Result<f64> {
    let au = op.apply(u)?;
    Ok(sup_diff(&au, &spec.rhs(u)))
}

/// Largest violation of `A u ≤ F(u)` (`sub = true`) or `A u ≥ F(u)`.
fn order_violation(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    u: &[f64],
    sub: bool,
) -> Result<(usize, f64)> {
    let au = op.apply(u)?;
    let f = spec.rhs(u);
    let mut worst = (0, f64::NEG_INFINITY);
    for i in 0..u.len() {
        let v = if sub { au[i] - f[i] } else { f[i] - au[i] };
        if v > worst.1 {
            worst = (i, v);
        }
    }
    Ok(worst)
}

fn slack(op: &OperatorMatrix, u: &[f64]) -> f64 {
    1e-9 * (1.0 + op.norm_inf() * sup(u))
}

enum Outcome {
    Converged(SteadyState),
    /// Some node became nonpositive at the given iteration.
    Collapsed,
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    start: &[f64],
    lo: Option<&[f64]>,
    hi: Option<&[f64]>,
    theta: f64,
    direction: Direction,
    opts: SteadyOptions,
    stop_on_nonpositive: bool,
) -> Result<Outcome> {
    let n = op.n();
    let mut b = op.matrix().clone();
    for i in 0..n {
        b[(i, i)] += theta;
    }
    let chol =
        Cholesky::new(b).ok_or_else(|| Error::Numeric("A + θI is not positive definite".into()))?;
    let scale = 1e-12 * (1.0 + sup(start));
    let mut u = start.to_vec();
    let mut prev_step = f64::NAN;
    let mut log = Vec::new();
    for it in 1..=opts.max_iterations {
        let f = spec.rhs(&u);
        let rhs = DVector::from_iterator(n, f.iter().zip(&u).map(|(fi, ui)| fi + theta * ui));
        let next = chol.solve(&rhs);
        let next: Vec<f64> = next.iter().copied().collect();
        for i in 0..n {
            let d = next[i] - u[i];
            let wrong = match direction {
                Direction::FromAbove => d > scale,
                Direction::FromBelow => d < -scale,
            };
            let out = lo.is_some_and(|l| next[i] < l[i] - scale)
                || hi.is_some_and(|h| next[i] > h[i] + scale);
            if wrong || out {
                return Err(Error::Monotonicity {
                    iteration: it,
                    node: i,
                });
            }
        }
        let step = sup_diff(&next, &u);
        u = next;
        if it.is_power_of_two() {
            log.push((it, step));
        }
        if stop_on_nonpositive && u.iter().any(|&x| x <= 0.0) {
            return Ok(Outcome::Collapsed);
        }
        // Stop once the geometric tail bound ρ/(1−ρ)·step falls below tol.
        let rho = if prev_step > 0.0 {
            (step / prev_step).min(1.0 - 1e-12)
        } else {
            0.0
        };
        if step == 0.0 || (it > 1 && step * rho / (1.0 - rho) <= opts.tol && step <= opts.tol) {
            if log.last().map(|l| l.0) != Some(it) {
                log.push((it, step));
            }
            let res = residual(op, spec, &u)?;
            return Ok(Outcome::Converged(SteadyState {
                u,
                residual: res,
                branch: Branch::None,
                iterations: it,
                log,
            }));
        }
        prev_step = step;
    }
    let res = residual(op, spec, &u)?;
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        residual: res,
    })
}

/// Monotone iteration `u^{k+1} = (A + θI)⁻¹(F(u^k) + θu^k)` between an ordered
/// sub/supersolution pair.
pub fn monotone_iterate(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    u_lo: &[f64],
    u_hi: &[f64],
    theta: f64,
    direction: Direction,
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let n = op.n();
    op.check_len(u_lo.len())?;
    op.check_len(u_hi.len())?;
    spec.validate(n)?;
    if let Some(i) = (0..n).find(|&i| u_lo[i] > u_hi[i]) {
        return Err(Error::config(format!("u_lo > u_hi at node {i}")));
    }
    let (i, v) = order_violation(op, spec, u_lo, true)?;
    if v > slack(op, u_lo) {
        return Err(Error::Construction(format!(
            "u_lo is not a subsolution at node {i} (excess {v:e})"
        )));
    }
    let (i, v) = order_violation(op, spec, u_hi, false)?;
    if v > slack(op, u_hi) {
        return Err(Error::Construction(format!(
            "u_hi is not a supersolution at node {i} (deficit {v:e})"
        )));
    }
    let s_max = sup(u_hi).max(sup(u_lo));
    let needed = spec.theta(s_max) / 1.1;
    if !(theta >= needed) {
        return Err(Error::config(format!(
            "theta {theta} below the Lipschitz bound {needed}"
        )));
    }
    let start = match direction {
        Direction::FromAbove => u_hi,
        Direction::FromBelow => u_lo,
    };
    match iterate(
        op,
        spec,
        start,
        Some(u_lo),
        Some(u_hi),
        theta,
        direction,
        opts,
        false,
    )? {
        Outcome::Converged(mut s) => {
            s.branch = if s.u.iter().all(|&x| x > 0.0) {
                Branch::Logistic
            } else {
                Branch::None
            };
            Ok(s)
        }
        Outcome::Collapsed => Err(Error::Internal("collapse in bracketed iteration".into())),
    }
}

/// Relative margin above `λ₁` below which no positive logistic solution is sought.
pub const EXISTENCE_MARGIN: f64 = 1e-9;

/// Unique positive solution `v_a` of the logistic problem, or branch `None` for `a ≤ λ₁`.
pub fn solve_logistic(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let eig = principal_eigenpair(op, &[], EigenOptions::default())?;
    solve_logistic_with(op, spec, &eig, opts)
}

pub fn solve_logistic_with(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    eig: &EigenPair,
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let n = op.n();
    spec.validate(n)?;
    if spec.c != 0.0 {
        return Err(Error::config("logistic solve requires c = 0"));
    }
    let lambda1 = eig.lambda;
    if spec.a <= lambda1 * (1.0 + EXISTENCE_MARGIN) {
        return Ok(SteadyState::none(n));
    }
    let big_m = spec.apriori_bound();
    let u_hi = vec![big_m; n];
    // k φ₁ is a subsolution when f(kφ₁)/(kφ₁) ≤ a − λ₁; halve k until it verifies.
    let b_max = spec.f.b.iter().copied().fold(0.0, f64::max);
    let mut k = 0.5 * ((spec.a - lambda1) / b_max).powf(1.0 / (spec.f.p - 1.0));
    let mut u_lo = None;
    for _ in 0..60 {
        let cand: Vec<f64> = eig.phi.iter().map(|&p| k * p).collect();
        let (_, v) = order_violation(op, spec, &cand, true)?;
        if v <= slack(op, &cand) && cand.iter().zip(&u_hi).all(|(l, h)| l <= h) {
            u_lo = Some(cand);
            break;
        }
        k *= 0.5;
    }
    let u_lo = u_lo.ok_or_else(|| {
        Error::Construction(format!(
            "no k with f(kφ₁)/(kφ₁) < a − λ₁ = {:e} on the grid",
            spec.a - lambda1
        ))
    })?;
    let theta = opts.shift(spec, big_m)?;
    let mut s = monotone_iterate(op, spec, &u_lo, &u_hi, theta, Direction::FromAbove, opts)?;
    if s.branch != Branch::Logistic {
        s.branch = Branch::None;
    }
    Ok(s)
}

/// Maximal harvesting solution, iterating down from `v_a`.
pub fn maximal_harvest(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let v_a = solve_logistic(op, &spec.with_c(0.0), opts)?;
    if v_a.branch == Branch::None {
        return Ok(SteadyState::none(op.n()));
    }
    maximal_harvest_from(op, spec, &v_a.u, opts)
}

/// As [`maximal_harvest`] with a precomputed `v_a`.
pub fn maximal_harvest_from(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    v_a: &[f64],
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let n = op.n();
    op.check_len(v_a.len())?;
    spec.validate(n)?;
    let theta = opts.shift(spec, sup(v_a))?;
    match iterate(
        op,
        spec,
        v_a,
        None,
        Some(v_a),
        theta,
        Direction::FromAbove,
        opts,
        true,
    )? {
        Outcome::Converged(mut s) => {
            s.branch = if s.u.iter().all(|&x| x > 0.0) {
                Branch::Maximal
            } else {
                Branch::None
            };
            Ok(s)
        }
        Outcome::Collapsed => Ok(SteadyState::none(n)),
    }
}

/// Explicit harvesting subsolution `φ = m(φ₁ − εv)` with `v = 𝒢𝟙`.
#[derive(Clone, Debug, Serialize)]
pub struct HarvestSubsolution {
    pub beta: f64,
    pub m: f64,
    pub epsilon: f64,
    /// `max v/V̂(δ_D)`.
    pub eta1: f64,
    /// `min φ₁/V̂(δ_D)`.
    pub eta2: f64,
    /// `m ε / sup|h|`; `φ` is a subsolution for every `c ≤ c1`.
    pub c1: f64,
    pub phi: Vec<f64>,
    /// `m β φ₁`.
    pub lower: Vec<f64>,
}

pub fn harvest_subsolution(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    eig: &EigenPair,
) -> Result<HarvestSubsolution> {
    let n = op.n();
    spec.validate(n)?;
    let lambda1 = eig.lambda;
    if spec.a <= lambda1 {
        return Err(Error::Construction(format!("needs a > λ₁ = {lambda1}")));
    }
    let v = op.green_solve(&vec![1.0; n])?;
    let symbol = *op.symbol();
    let vhat: Vec<f64> = op
        .grid
        .delta
        .iter()
        .map(|&d| v_profile(&symbol, d))
        .collect();
    let eta1 = v.iter().zip(&vhat).map(|(x, w)| x / w).fold(0.0, f64::max);
    let eta2 = eig
        .phi
        .iter()
        .zip(&vhat)
        .map(|(x, w)| x / w)
        .fold(f64::INFINITY, f64::min);
    let beta = 0.5 * (1.0 + lambda1 / spec.a);
    let epsilon = (1.0 - beta) * eta2 / eta1;
    let psi: Vec<f64> = eig
        .phi
        .iter()
        .zip(&v)
        .map(|(p, w)| p - epsilon * w)
        .collect();
    if psi
        .iter()
        .zip(&eig.phi)
        .any(|(s, p)| *s < beta * p * (1.0 - 1e-12))
    {
        return Err(Error::Construction("φ₁ − εv fell below βφ₁".into()));
    }
    let margin = spec.a - lambda1 / beta;
    let ok = |m: f64| (0..n).all(|i| spec.f(i, m * psi[i]) <= margin * m * psi[i]);
    let mut hi = 1.0;
    while ok(hi) {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Construction(
                "crowding ratio bounded; m cannot be fixed".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = lo;
    if m <= 0.0 {
        return Err(Error::Construction(format!(
            "no m > 0 with f(φ)/φ ≤ a − λ₁/β = {margin:e}"
        )));
    }
    let h_sup = spec.h_sup();
    let c1 = if h_sup > 0.0 {
        m * epsilon / h_sup
    } else {
        f64::INFINITY
    };
    let phi: Vec<f64> = psi.iter().map(|s| m * s).collect();
    let lower: Vec<f64> = eig.phi.iter().map(|p| m * beta * p).collect();
    Ok(HarvestSubsolution {
        beta,
        m,
        epsilon,
        eta1,
        eta2,
        c1,
        phi,
        lower,
    })
}

impl HarvestSubsolution {
    /// Largest violation of `A φ ≤ F_c(φ)` at harvest level `c`.
    pub fn subsolution_defect(
        &self,
        op: &OperatorMatrix,
        spec: &ReactionSpec,
        c: f64,
    ) -> Result<f64> {
        Ok(order_violation(op, &spec.with_c(c), &self.phi, true)?.1)
    }
}

fn newton_tolerance(u: &[f64]) -> f64 {
    1e-13 * sup(u).max(1e-300)
}

/// Newton solve of `𝒢(a u − f(u) − c h(u)) − u = 0` from `u0`, optionally damped.
fn newton(
    op: &OperatorMatrix,
    green: &DMatrix<f64>,
    spec: &ReactionSpec,
    u0: &[f64],
    damped: bool,
    max_iterations: usize,
) -> Result<Vec<f64>> {
    let n = op.n();
    let map = |u: &[f64]| -> DVector<f64> {
        let r = DVector::from_vec(spec.rhs(u));
        green * r - DVector::from_column_slice(u)
    };
    let mut u = u0.to_vec();
    let mut fu = map(&u);
    for _ in 0..max_iterations {
        let d = spec.linearization(&u);
        let mut jac = green.clone();
        for (j, &dj) in d.iter().enumerate() {
            jac.column_mut(j).scale_mut(dj);
        }
        for i in 0..n {
            jac[(i, i)] -= 1.0;
        }
        let delta = jac.lu().solve(&(-&fu)).ok_or_else(|| Error::Continuation {
            c: spec.c,
            reason: "Jacobian is singular".into(),
        })?;
        let mut t = 1.0;
        let f_norm = fu.amax();
        loop {
            let cand: Vec<f64> = u
                .iter()
                .zip(delta.iter())
                .map(|(x, dx)| x + t * dx)
                .collect();
            let fc = map(&cand);
            if !damped || fc.amax() <= (1.0 - 0.25 * t) * f_norm || t < 1.0 / 1024.0 {
                u = cand;
                fu = fc;
                break;
            }
            t *= 0.5;
        }
        if !u.iter().all(|x| x.is_finite()) {
            break;
        }
        if t * delta.amax() <= newton_tolerance(&u) {
            return Ok(u);
        }
    }
    Err(Error::Continuation {
        c: spec.c,
        reason: "Newton iteration did not converge".into(),
    })
}

/// Small branch `u₂(c)` by Newton continuation in `c` from `(0, 0)`.
pub fn small_branch(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    opts: SteadyOptions,
) -> Result<SteadyState> {
    let path = small_branch_path(op, spec, &[spec.c], opts)?;
    Ok(path.into_iter().next().expect("one target"))
}

/// Continues the small branch through increasing `targets`, returning a state at each.
pub fn small_branch_path(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    targets: &[f64],
    opts: SteadyOptions,
) -> Result<Vec<SteadyState>> {
    let (states, err) = continue_small_branch(op, spec, targets, opts)?;
    match err {
        Some(e) => Err(e),
        None => Ok(states),
    }
}

/// States reached before the first continuation failure, and that failure.
fn continue_small_branch(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    targets: &[f64],
    opts: SteadyOptions,
) -> Result<(Vec<SteadyState>, Option<Error>)> {
    let n = op.n();
    spec.validate(n)?;
    if targets.windows(2).any(|w| w[1] < w[0]) || targets.iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::config(
            "continuation targets must be nonnegative and increasing",
        ));
    }
    let green = op.green_matrix()?;
    let base = (targets.last().copied().unwrap_or(0.0) / 20.0).max(f64::MIN_POSITIVE);
    let mut u = vec![0.0; n];
    let mut c_cur = 0.0;
    let mut dc = base;
    let mut out = Vec::with_capacity(targets.len());
    for &target in targets {
        let mut steps = 0;
        while c_cur < target {
            let c_next = (c_cur + dc).min(target);
            match newton(op, &green, &spec.with_c(c_next), &u, false, 50) {
                Ok(v) => {
                    u = v;
                    c_cur = c_next;
                    dc = (2.0 * dc).min(base);
                }
                Err(e) => {
                    dc *= 0.5;
                    if dc < base * 2f64.powi(-30) {
                        return Ok((out, Some(e)));
                    }
                }
            }
            steps += 1;
        }
        let s = spec.with_c(target);
        let res = residual(op, &s, &u)?;
        if res > opts.tol {
            let e = Error::Continuation {
                c: target,
                reason: format!("residual {res:e} above tolerance"),
            };
            return Ok((out, Some(e)));
        }
        let positive = target > 0.0 && u.iter().all(|&x| x > 0.0);
        out.push(SteadyState {
            u: u.clone(),
            residual: res,
            branch: if positive {
                Branch::Small
            } else {
                Branch::None
            },
            iterations: steps,
            log: Vec::new(),
        });
    }
    Ok((out, None))
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityIndex {
    pub lambda_star: f64,
    pub stable: bool,
}

/// Principal eigenvalue of the linearization `A − diag(a − f_s(u) − c h_s(u))`.
pub fn stability_index(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    u: &[f64],
) -> Result<StabilityIndex> {
    op.check_len(u.len())?;
    let e = principal_eigenpair(op, &spec.linearization(u), EigenOptions::default())?;
    Ok(StabilityIndex {
        lambda_star: e.lambda,
        stable: e.lambda > 0.0,
    })
}

/// `λ₁ u_i ≥ c h(x_i, u_i)` at every node.
pub fn check_c11(u: &[f64], spec: &ReactionSpec, lambda1: f64) -> bool {
    u.iter()
        .enumerate()
        .all(|(i, &s)| lambda1 * s >= spec.c * spec.h(i, s))
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanSample {
    pub c: f64,
    pub exists: bool,
    pub u1_sup: f64,
    /// Filled by [`attach_small_branch`].
    pub u2_sup: Option<f64>,
    pub lambda_star: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub c_star: f64,
    pub c_exist: f64,
    pub c_fail: f64,
    /// Every evaluated harvest level, sorted by `c`.
    pub samples: Vec<ScanSample>,
}

fn scan_point(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    v_a: &[f64],
    c: f64,
    opts: SteadyOptions,
) -> Result<ScanSample> {
    let s = spec.with_c(c);
    let state = maximal_harvest_from(op, &s, v_a, opts)?;
    let exists = state.branch == Branch::Maximal;
    let lambda_star = if exists {
        Some(stability_index(op, &s, &state.u)?.lambda_star)
    } else {
        None
    };
    Ok(ScanSample {
        c,
        exists,
        u1_sup: state.sup_norm(),
        u2_sup: None,
        lambda_star,
        iterations: state.iterations,
    })
}

/// Brackets the critical harvest: a coarse scan of `coarse + 1` levels on
/// `[0, c_max]`, then bisection until `c_fail − c_exist ≤ rel_tol · c_exist`.
pub fn scan_cstar(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    v_a: &[f64],
    c_max: f64,
    rel_tol: f64,
    coarse: usize,
    opts: SteadyOptions,
) -> Result<ScanResult> {
    spec.validate(op.n())?;
    if !(c_max > 0.0 && rel_tol > 0.0 && coarse >= 2) {
        return Err(Error::config(
            "scan needs c_max > 0, rel_tol > 0 and at least 2 coarse levels",
        ));
    }
    let levels: Vec<f64> = (0..=coarse)
        .map(|k| c_max * k as f64 / coarse as f64)
        .collect();
    let mut samples: Vec<ScanSample> = levels
        .par_iter()
        .map(|&c| scan_point(op, spec, v_a, c, opts))
        .collect::<Result<_>>()?;
    if !samples[0].exists {
        return Err(Error::config(
            "no positive solution at c = 0; scan needs a > λ₁",
        ));
    }
    let first_fail = samples
        .iter()
        .position(|s| !s.exists)
        .ok_or_else(|| Error::config(format!("solution still exists at c_max = {c_max}")))?;
    if let Some(k) = samples[first_fail..].iter().position(|s| s.exists) {
        let j = first_fail + k;
        return Err(Error::ScanNotMonotone(
            samples[first_fail - 1].c,
            samples[first_fail].c,
            samples[j].c,
        ));
    }
    let mut c_exist = samples[first_fail - 1].c;
    let mut c_fail = samples[first_fail].c;
    while c_fail - c_exist > rel_tol * c_exist || c_exist == 0.0 {
        let mid = 0.5 * (c_exist + c_fail);
        let s = scan_point(op, spec, v_a, mid, opts)?;
        if s.exists {
            c_exist = mid;
        } else {
            c_fail = mid;
        }
        samples.push(s);
        if samples.len() > 10_000 {
            return Err(Error::Internal("bisection did not terminate".into()));
        }
    }
    samples.sort_by(|x, y| x.c.total_cmp(&y.c));
    // The sorted samples must switch from existence to nonexistence exactly once.
    if let Some(k) = samples.windows(2).position(|w| !w[0].exists && w[1].exists) {
        return Err(Error::ScanNotMonotone(
            samples[k].c,
            samples[k + 1].c,
            c_fail,
        ));
    }
    Ok(ScanResult {
        c_star: 0.5 * (c_exist + c_fail),
        c_exist,
        c_fail,
        samples,
    })
}

/// Continues the small branch through the existing samples below `c_limit`,
/// recording `‖u₂‖∞` where continuation succeeds.
pub fn attach_small_branch(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    scan: &mut ScanResult,
    c_limit: f64,
    opts: SteadyOptions,
) -> Result<()> {
    let idx: Vec<usize> = (0..scan.samples.len())
        .filter(|&i| scan.samples[i].exists && scan.samples[i].c <= c_limit)
        .collect();
    let targets: Vec<f64> = idx.iter().map(|&i| scan.samples[i].c).collect();
    let (states, _) = continue_small_branch(op, spec, &targets, opts)?;
    for (k, st) in states.iter().enumerate() {
        scan.samples[idx[k]].u2_sup = Some(st.sup_norm());
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct MultistartReport {
    pub starts: usize,
    pub converged: usize,
    pub near_maximal: usize,
    pub near_small: usize,
    /// Converged points that match neither branch.
    pub other: usize,
    /// Largest distance from a converged point to the closer branch.
    pub max_distance: f64,
}

/// Damped Newton from `starts` random admissible fields `0 ≤ u₀ ≤ v_a`.
#[allow(clippy::too_many_arguments)]
pub fn multistart(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    v_a: &[f64],
    u1: &[f64],
    u2: &[f64],
    starts: usize,
    seed: u64,
    opts: SteadyOptions,
) -> Result<MultistartReport> {
    let n = op.n();
    spec.validate(n)?;
    let green = op.green_matrix()?;
    let found: Vec<Option<Vec<f64>>> = (0..starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let level: f64 = rng.random();
            let spread: f64 = 0.5 * rng.random::<f64>();
            let u0: Vec<f64> = v_a
                .iter()
                .map(|&v| v * (level + spread * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0))
                .collect();
            match newton(op, &green, spec, &u0, true, 200) {
                Ok(u)
                    if residual(op, spec, &u)
                        .map(|r| r <= opts.tol)
                        .unwrap_or(false) =>
                {
                    Some(u)
                }
                _ => None,
            }
        })
        .collect();
    let mut report = MultistartReport {
        starts,
        converged: 0,
        near_maximal: 0,
        near_small: 0,
        other: 0,
        max_distance: 0.0,
    };
    let band = 10.0 * opts.tol;
    for u in found.into_iter().flatten() {
        report.converged += 1;
        let d1 = sup_diff(&u, u1);
        let d2 = sup_diff(&u, u2);
        report.max_distance = report.max_distance.max(d1.min(d2));
        if d1 <= band {
            report.near_maximal += 1;
        } else if d2 <= band {
            report.near_small += 1;
        } else {
            report.other += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::{BernsteinSymbol, KernelMode, LevyKernel};
    use crate::grid::build_grid;
    use crate::operator::assemble;

    fn cauchy(n: usize) -> OperatorMatrix {
        let g = build_grid(-1.0, 1.0, n).unwrap();
        let k =
            LevyKernel::new(BernsteinSymbol::fractional(1.0).unwrap(), KernelMode::Exact).unwrap();
        assemble(&g, &k, 4.0).unwrap()
    }

    #[test]
    fn zero_reaction_fixed_point() {
        let op = cauchy(19);
        let spec = ReactionSpec::logistic(19, 0.0);
        let z = vec![0.0; 19];
        let s = monotone_iterate(
            &op,
            &spec,
            &z,
            &z,
            1.0,
            Direction::FromAbove,
            SteadyOptions::default(),
        )
        .unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn structure_checks() {
        let spec = ReactionSpec::logistic(5, 2.0);
        let r = spec.check_structure();
        assert!(r.crowding_ok() && r.h_bounded && r.h_positive_somewhere);
        let sat = ReactionSpec {
            h: Harvest::Saturating {
                h0: vec![1.0; 5],
                kappa: 0.5,
            },
            ..spec.clone()
        };
        assert_eq!(sat.h(0, 0.0), 0.5);
        assert!((sat.h_s(0, 1.0) - 0.125).abs() < 1e-15);
        // Linear extension below zero keeps h continuously differentiable.
        assert!((sat.h(0, -0.1) - (0.5 - 0.05)).abs() < 1e-15);
        assert!(spec.with_c(-1.0).validate(5).is_err());
    }

    #[test]
    fn linearization_shift_is_exact() {
        let op = cauchy(49);
        let e = principal_eigenpair(&op, &[], EigenOptions::default()).unwrap();
        let spec = ReactionSpec::logistic(49, 2.0 * e.lambda);
        let zero = stability_index(&op, &spec, &vec![0.0; 49]).unwrap();
        assert!((zero.lambda_star - (e.lambda - spec.a)).abs() < 1e-9);
        assert!(!zero.stable);
    }

    #[test]
    fn c11_predicate() {
        let spec = ReactionSpec::logistic(3, 1.0);
        assert!(check_c11(&[0.0, 1.0, 0.0], &spec, 1.0));
        let harvested = spec.with_c(0.5);
        assert!(!check_c11(&[0.1, 1.0, 1.0], &harvested, 1.0));
    }
}
