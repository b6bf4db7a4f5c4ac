//! Subordinate Brownian motion killed on leaving the domain, and Monte Carlo
//! estimators built on it.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinSymbol;
use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Paths per random stream; path `k` always uses stream `k / CHUNK`.
pub const CHUNK: usize = 1024;
/// Rejections allowed per tempered draw.
pub const REJECTION_CAP: usize = 1_000_000;
/// Paths written by the trace dump at most.
pub const TRACE_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SamplerMethod {
    /// One-sided stable law of the given index, `E e^{−x S_t} = e^{−t x^index}`.
    Stable {
        index: f64,
    },
    StableSum {
        first: f64,
        second: f64,
    },
    /// Stable draw tilted by `e^{−μ S}` and accepted with that probability.
    TemperedStable {
        index: f64,
        mu: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubordinatorSampler {
    pub symbol: BernsteinSymbol,
    pub method: SamplerMethod,
}

/// Kanter's representation of a standard one-sided stable variable of index `b ∈ (0, 1)`.
fn kanter<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() * PI;
    let e: f64 = rng.sample(Exp1);
    let a = (b * u).sin() / u.sin().powf(1.0 / b) * ((1.0 - b) * u).sin().powf((1.0 - b) / b);
    a / e.powf((1.0 - b) / b)
}

fn stable<R: Rng + ?Sized>(rng: &mut R, index: f64, dt: f64) -> f64 {
    if index == 1.0 {
        return dt;
    }
    loop {
        let s = kanter(rng, index);
        // u ∈ {0, π} is possible at the ends of the unit interval.
        if s.is_finite() {
            return dt.powf(1.0 / index) * s;
        }
    }
}

impl SubordinatorSampler {
    pub fn new(symbol: BernsteinSymbol) -> Result<Self> {
        symbol.validate()?;
        let method = match symbol {
            BernsteinSymbol::Fractional { alpha } => SamplerMethod::Stable { index: alpha / 2.0 },
            BernsteinSymbol::SumFractional { alpha, beta } => SamplerMethod::StableSum {
                first: alpha / 2.0,
                second: beta / 2.0,
            },
            BernsteinSymbol::Relativistic { alpha, m } => SamplerMethod::TemperedStable {
                index: alpha / 2.0,
                mu: m.powf(2.0 / alpha),
            },
            other => {
                return Err(Error::UnsupportedSampler(format!(
                    "no subordinator sampler for {}; use the deterministic solvers",
                    other.kind()
                )))
            }
        };
        Ok(Self { symbol, method })
    }

    /// A draw of `S_dt`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64) -> Result<f64> {
        match self.method {
            SamplerMethod::Stable { index } => Ok(stable(rng, index, dt)),
            SamplerMethod::StableSum { first, second } => {
                Ok(stable(rng, first, dt) + stable(rng, second, dt))
            }
            SamplerMethod::TemperedStable { index, mu } => {
                for _ in 0..REJECTION_CAP {
                    let s = stable(rng, index, dt);
                    if rng.random::<f64>() < (-mu * s).exp() {
                        return Ok(s);
                    }
                }
                Err(Error::Numeric(format!(
                    "tempered draw rejected {REJECTION_CAP} times at dt = {dt}"
                )))
            }
        }
    }

    /// Position increment `√(2 S_dt) N(0, 1)`.
    pub fn jump<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64) -> Result<f64> {
        let s = self.sample(rng, dt)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok((2.0 * s).sqrt() * z)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KilledPath {
    pub x0: f64,
    pub dt_path: f64,
    /// Positions at grid times before the exit, starting with `x0` when it lies inside.
    pub positions: Vec<f64>,
    /// First grid time with the position outside the domain.
    pub exit_time: Option<f64>,
    pub exit_position: Option<f64>,
}

impl KilledPath {
    pub fn exited(&self) -> bool {
        self.exit_time.is_some()
    }
}

pub fn simulate_killed_path<R: Rng + ?Sized>(
    sampler: &SubordinatorSampler,
    rng: &mut R,
    x0: f64,
    dt_path: f64,
    horizon: f64,
    domain: &Grid1D,
) -> Result<KilledPath> {
    if !(dt_path > 0.0) {
        return Err(Error::config("dt_path must be > 0"));
    }
    let steps = (horizon / dt_path).round() as usize;
    let mut path = KilledPath {
        x0,
        dt_path,
        positions: Vec::new(),
        exit_time: None,
        exit_position: None,
    };
    let mut x = x0;
    for k in 0..=steps {
        if k > 0 {
            x += sampler.jump(rng, dt_path)?;
        }
        if !domain.contains(x) {
            path.exit_time = Some(k as f64 * dt_path);
            path.exit_position = Some(x);
            break;
        }
        path.positions.push(x);
    }
    Ok(path)
}

/// Monte Carlo settings shared by the estimators.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt_path: f64,
    pub seed: u64,
    /// Paths still alive at this time abort occupation estimates.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
}

fn default_max_time() -> f64 {
    1e4
}

impl McConfig {
    pub fn new(n_paths: usize, dt_path: f64, seed: u64) -> Self {
        Self {
            n_paths,
            dt_path,
            seed,
            max_time: default_max_time(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::config(format!(
                "n_paths = {} is below 100",
                self.n_paths
            )));
        }
        if !(self.dt_path > 0.0 && self.dt_path.is_finite()) {
            return Err(Error::config("dt_path must be finite and > 0"));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::config("max_time must be > 0"));
        }
        Ok(())
    }

    pub fn with_dt(self, dt_path: f64) -> Self {
        Self { dt_path, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub dt_path: f64,
}

/// Count, mean and centred sum of squares of one chunk.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `per_path` over `n_paths` paths in fixed chunks and merges in chunk order,
/// so the result does not depend on the number of worker threads.
fn estimate<F>(cfg: &McConfig, per_path: F) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let chunks = cfg.n_paths.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(cfg.seed, c);
            let count = CHUNK.min(cfg.n_paths - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..count {
                m.push(per_path(&mut rng)?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let var = if total.n > 1.0 {
        total.m2 / (total.n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        value: total.mean,
        std_error: (var / total.n).sqrt(),
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        dt_path: cfg.dt_path,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LaplacePoint {
    pub x: f64,
    /// Sample mean of `e^{−x S_dt}`.
    pub estimate: f64,
    pub std_error: f64,
    /// `e^{−dt Ψ(x)}`.
    pub exact: f64,
}

/// Empirical Laplace transform of `S_dt` from `cfg.n_paths` draws, the same draws at every `x`.
pub fn laplace_transform(
    sampler: &SubordinatorSampler,
    points: &[f64],
    dt: f64,
    cfg: &McConfig,
) -> Result<Vec<LaplacePoint>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("laplace transform needs dt > 0"));
    }
    points
        .iter()
        .map(|&x| {
            if !(x >= 0.0) {
                return Err(Error::config(format!("laplace argument {x} must be >= 0")));
            }
            let e = estimate(cfg, |rng| Ok((-x * sampler.sample(rng, dt)?).exp()))?;
            Ok(LaplacePoint {
                x,
                estimate: e.value,
                std_error: e.std_error,
                exact: (-dt * sampler.symbol.psi(x)).exp(),
            })
        })
        .collect()
}

fn check_sampler_start(x0: f64) -> Result<()> {
    if !x0.is_finite() {
        return Err(Error::config("starting point must be finite"));
    }
    Ok(())
}

/// Monte Carlo value of the killed Feynman–Kac functional
/// `e^{∫₀^{H∧τ} V} g(X_{H∧τ}) + ∫₀^{H∧τ} e^{∫₀^s V} ℓ(X_s, t+s) ds` with `H = T − t`.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac<G, L, V>(
    sampler: &SubordinatorSampler,
    domain: &Grid1D,
    g: G,
    ell: L,
    vpot: V,
    t: f64,
    big_t: f64,
    x0: f64,
    cfg: &McConfig,
) -> Result<McEstimate>
where
    G: Fn(f64) -> f64 + Sync,
    L: Fn(f64, f64) -> f64 + Sync,
    V: Fn(f64, f64) -> f64 + Sync,
{
    check_sampler_start(x0)?;
    if !(t < big_t) {
        return Err(Error::config("feynman_kac needs t < T"));
    }
    let dt = cfg.dt_path;
    let steps = ((big_t - t) / dt).round() as usize;
    estimate(cfg, |rng| {
        let mut x = x0;
        let mut log_weight = 0.0f64;
        let mut source = 0.0;
        for k in 0..=steps {
            if k > 0 {
                x += sampler.jump(rng, dt)?;
            }
            if !domain.contains(x) {
                return Ok(source);
            }
            if k == steps {
                return Ok(source + log_weight.exp() * g(x));
            }
            let s = t + k as f64 * dt;
            source += log_weight.exp() * ell(x, s) * dt;
            log_weight += vpot(x, s) * dt;
        }
        unreachable!("loop returns at k = steps")
    })
}

/// Occupation estimate `E_x ∫₀^τ f(X_s) ds` of the Green operator.
pub fn mc_green<F>(
    sampler: &SubordinatorSampler,
    domain: &Grid1D,
    f: F,
    x0: f64,
    cfg: &McConfig,
) -> Result<McEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    check_sampler_start(x0)?;
    let dt = cfg.dt_path;
    let max_steps = (cfg.max_time / dt).ceil() as usize;
    estimate(cfg, |rng| {
        let mut x = x0;
        let mut acc = 0.0;
        for _ in 0..max_steps {
            if !domain.contains(x) {
                return Ok(acc);
            }
            acc += f(x) * dt;
            x += sampler.jump(rng, dt)?;
        }
        Err(Error::StatisticalPower(format!(
            "a path survived past max_time = {}",
            cfg.max_time
        )))
    })
}

/// Exit time `τ̂` of each path, capped at `horizon` (`None` if still alive).
fn exit_times(
    sampler: &SubordinatorSampler,
    domain: &Grid1D,
    x0: f64,
    horizon: f64,
    cfg: &McConfig,
) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    let chunks = cfg.n_paths.div_ceil(CHUNK);
    let parts: Vec<Vec<Option<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(cfg.seed, c);
            let count = CHUNK.min(cfg.n_paths - c * CHUNK);
            (0..count)
                .map(|_| {
                    simulate_killed_path(sampler, &mut rng, x0, cfg.dt_path, horizon, domain)
                        .map(|p| p.exit_time)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct SurvivalFit {
    pub lambda1_hat: f64,
    /// `(t, P̂(τ̂ > t))` on the input grid.
    pub survival: Vec<(f64, f64)>,
    /// Number of grid points in the fitted tail.
    pub fit_points: usize,
    /// RMS residual of the tail fit of `log P̂`.
    pub fit_rms: f64,
    pub survivors_at_end: usize,
}

/// Minimum number of paths alive at the last grid time.
pub const MIN_SURVIVORS: usize = 50;

/// Decay rate of the empirical survival `P̂_{x0}(τ̂ > t)`, fitted over the second
/// half of `t_grid`.
pub fn survival_lambda1(
    sampler: &SubordinatorSampler,
    domain: &Grid1D,
    x0: f64,
    t_grid: &[f64],
    cfg: &McConfig,
) -> Result<SurvivalFit> {
    check_sampler_start(x0)?;
    if t_grid.len() < 4 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < 0.0 {
        return Err(Error::config(
            "t_grid must hold at least 4 increasing times >= 0",
        ));
    }
    let horizon = *t_grid.last().expect("nonempty");
    let taus = exit_times(sampler, domain, x0, horizon, cfg)?;
    let n = taus.len() as f64;
    let survival: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| {
            let alive = taus
                .iter()
                .filter(|tau| tau.is_none_or(|e| e > t + 1e-9 * cfg.dt_path))
                .count();
            (t, alive as f64 / n)
        })
        .collect();
    let survivors_at_end = taus.iter().filter(|t| t.is_none()).count();
    if survivors_at_end < MIN_SURVIVORS {
        return Err(Error::StatisticalPower(format!(
            "{survivors_at_end} paths alive at t = {horizon}, need {MIN_SURVIVORS}"
        )));
    }
    let tail: Vec<(f64, f64)> = survival[t_grid.len() / 2..]
        .iter()
        .map(|&(t, p)| (t, -p.ln()))
        .collect();
    let k = tail.len() as f64;
    let (mt, ml) = tail
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, l)| (a + t / k, b + l / k));
    let (num, den) = tail.iter().fold((0.0, 0.0), |(nu, de), (t, l)| {
        (nu + (t - mt) * (l - ml), de + (t - mt) * (t - mt))
    });
    let slope = num / den;
    let rms = (tail
        .iter()
        .map(|(t, l)| (l - ml - slope * (t - mt)).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(SurvivalFit {
        lambda1_hat: slope,
        survival,
        fit_points: tail.len(),
        fit_rms: rms,
        survivors_at_end,
    })
}

/// Up to [`TRACE_CAP`] killed paths from stream 0 of `seed`, for inspection.
pub fn trace_paths(
    sampler: &SubordinatorSampler,
    domain: &Grid1D,
    x0: f64,
    horizon: f64,
    count: usize,
    cfg: &McConfig,
) -> Result<Vec<KilledPath>> {
    let mut rng = chunk_rng(cfg.seed, 0);
    (0..count.min(TRACE_CAP))
        .map(|_| simulate_killed_path(sampler, &mut rng, x0, cfg.dt_path, horizon, domain))
        .collect()
}

/// Rows `path,step,t,x`; the exit position, when present, is the last row of its path.
pub fn write_trace_csv<W: Write>(paths: &[KilledPath], mut w: W) -> std::io::Result<()> {
    writeln!(w, "path,step,t,x")?;
    for (p, path) in paths.iter().enumerate() {
        for (k, x) in path.positions.iter().enumerate() {
            writeln!(w, "{p},{k},{:e},{x:e}", k as f64 * path.dt_path)?;
        }
        if let (Some(t), Some(x)) = (path.exit_time, path.exit_position) {
            writeln!(w, "{p},{},{t:e},{x:e}", path.positions.len())?;
        }
    }
    Ok(())
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    // The alternating series converges slowly near zero, where Q(λ) = 1 to 1e-15.
    if lambda < 0.15 {
        return (d, 1.0);
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}
