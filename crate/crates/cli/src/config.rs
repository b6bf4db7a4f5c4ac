//! Run configuration, read from TOML or JSON and validated before any work starts.

use std::path::{Path, PathBuf};

use nonlocal_core::stochastic::McConfig;
use nonlocal_core::{
    build_grid, v_profile, BernsteinSymbol, Crowding, DomainSpec, Grid1D, Harvest, KernelMode,
    LevyKernel, ReactionSpec, SteadyOptions, SubordinatorSampler,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub symbol: BernsteinSymbol,
    /// Defaults to the exact kernel when one exists.
    #[serde(default)]
    pub kernel_mode: Option<KernelMode>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub problem: Problem,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub bifurcate: Bifurcate,
    #[serde(default)]
    pub parabolic: Parabolic,
    #[serde(default)]
    pub stochastic: Stochastic,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub debug: Debug,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    /// Defaults to twice the diameter.
    pub far_cutoff: Option<f64>,
}

/// Growth rate, either absolute or as a multiple of `λ₁`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub a: Option<f64>,
    pub a_over_lambda1: Option<f64>,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub f: CrowdingSpec,
    #[serde(default)]
    pub h: HarvestSpec,
}

impl Default for Problem {
    fn default() -> Self {
        Self {
            a: None,
            a_over_lambda1: Some(2.0),
            c: 0.0,
            f: CrowdingSpec::default(),
            h: HarvestSpec::default(),
        }
    }
}

/// `f(x, s) = b(x) s^p`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrowdingSpec {
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "two")]
    pub p: f64,
    /// Relative variation of `b` across the domain, `b(x) = b (1 + b_variation cos(π(x − mid)/diam))`.
    #[serde(default)]
    pub b_variation: f64,
}

impl Default for CrowdingSpec {
    fn default() -> Self {
        Self {
            b: 1.0,
            p: 2.0,
            b_variation: 0.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestProfile {
    #[default]
    Uniform,
    /// `V̂(δ_D)/max V̂(δ_D)`.
    Boundary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestKind {
    #[default]
    ConstantYield,
    Saturating,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestSpec {
    #[serde(default)]
    pub kind: HarvestKind,
    #[serde(default)]
    pub profile: HarvestProfile,
    #[serde(default = "one")]
    pub scale: f64,
    /// `σ(0)` for the saturating kind.
    pub kappa: Option<f64>,
}

impl Default for HarvestSpec {
    fn default() -> Self {
        Self {
            kind: HarvestKind::ConstantYield,
            profile: HarvestProfile::Uniform,
            scale: 1.0,
            kappa: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    #[serde(default = "solver_tol")]
    pub tol: f64,
    #[serde(default = "max_iterations")]
    pub max_iterations: usize,
    /// Monotone-iteration shift; omitted means the automatic Lipschitz bound.
    pub theta: Option<f64>,
}

fn solver_tol() -> f64 {
    1e-10
}

fn max_iterations() -> usize {
    1_000_000
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            tol: solver_tol(),
            max_iterations: max_iterations(),
            theta: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bifurcate {
    /// Upper end of the coarse scan; defaults to just above the nonexistence bound.
    pub c_max: Option<f64>,
    #[serde(default = "rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "coarse")]
    pub coarse: usize,
    /// Random starts at `c = c_star/4`; zero disables the sweep.
    #[serde(default)]
    pub multistart: usize,
    #[serde(default)]
    pub seed: u64,
}

fn rel_tol() -> f64 {
    1e-3
}

fn coarse() -> usize {
    8
}

impl Default for Bifurcate {
    fn default() -> Self {
        Self {
            c_max: None,
            rel_tol: rel_tol(),
            coarse: coarse(),
            multistart: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    Zero,
    /// `scale · φ₁`.
    Phi1 {
        scale: f64,
    },
    /// `scale · v_a`.
    Logistic {
        scale: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parabolic {
    /// Defaults to half the positivity limit.
    pub dt: Option<f64>,
    #[serde(default = "s_max")]
    pub s_max: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default = "default_u0")]
    pub u0: InitialField,
    /// Long-time tolerance on the sup distance.
    #[serde(default = "longtime_tol")]
    pub tol: f64,
}

fn s_max() -> f64 {
    10.0
}

fn default_u0() -> InitialField {
    InitialField::Phi1 { scale: 0.01 }
}

fn longtime_tol() -> f64 {
    1e-4
}

impl Default for Parabolic {
    fn default() -> Self {
        Self {
            dt: None,
            s_max: s_max(),
            snapshots: Vec::new(),
            u0: default_u0(),
            tol: longtime_tol(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stochastic {
    #[serde(default = "n_paths")]
    pub n_paths: usize,
    #[serde(default = "dt_path")]
    pub dt_path: f64,
    #[serde(default)]
    pub seed: u64,
    /// Probe points for the Green comparison; defaults to evenly spread interior points.
    #[serde(default)]
    pub probes: Option<Vec<f64>>,
    /// Arguments of the Laplace-transform check.
    #[serde(default = "laplace_points")]
    pub laplace_points: Vec<f64>,
    /// Subordinator time used by the Laplace-transform check.
    #[serde(default = "one")]
    pub laplace_dt: f64,
}

fn n_paths() -> usize {
    10_000
}

fn dt_path() -> f64 {
    0.01
}

fn laplace_points() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl Default for Stochastic {
    fn default() -> Self {
        Self {
            n_paths: n_paths(),
            dt_path: dt_path(),
            seed: 0,
            probes: None,
            laplace_points: laplace_points(),
            laplace_dt: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    /// A gnuplot script next to the CSV files.
    Gnuplot,
}

/// `summary.json` and `manifest.json` are always written.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "out_dir")]
    pub directory: PathBuf,
    #[serde(default = "formats")]
    pub formats: Vec<Format>,
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn formats() -> Vec<Format> {
    vec![Format::Csv, Format::Gnuplot]
}

impl Default for Output {
    fn default() -> Self {
        Self {
            directory: out_dir(),
            formats: formats(),
        }
    }
}

impl Output {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn gnuplot(&self) -> bool {
        self.formats.contains(&Format::Gnuplot)
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Debug {
    /// Write the assembled matrix as `row,col,value`.
    #[serde(default)]
    pub audit_matrix: bool,
    /// Number of killed paths to dump in `mc-check`, at most 1000.
    #[serde(default)]
    pub trace_paths: usize,
}

/// Parses TOML, falling back to JSON for `.json` files or when TOML parsing fails
/// on text that starts with `{`.
pub fn parse(text: &str, path: &Path) -> Result<RunConfig, CliError> {
    let json_like =
        path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let cfg: RunConfig = if json_like {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text, path)
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.symbol.validate()?;
        self.kernel()?;
        let grid = self.grid()?;
        if let Some(r) = self.discretization.far_cutoff {
            if !(r >= 2.0 * grid.diameter()) {
                return Err(CliError::Config(format!(
                    "far_cutoff must be >= {}",
                    2.0 * grid.diameter()
                )));
            }
        }
        let p = &self.problem;
        match (p.a, p.a_over_lambda1) {
            (Some(a), None) if a.is_finite() => {}
            (None, Some(k)) if k.is_finite() => {}
            _ => {
                return Err(CliError::Config(
                    "problem needs exactly one of a, a_over_lambda1".into(),
                ))
            }
        }
        if !(p.c >= 0.0 && p.c.is_finite()) {
            return Err(CliError::Config("problem.c must be finite and >= 0".into()));
        }
        positive("problem.f.b", p.f.b)?;
        if !(p.f.p > 1.0 && p.f.p.is_finite()) {
            return Err(CliError::Config("problem.f.p must be > 1".into()));
        }
        if !(p.f.b_variation.abs() < 1.0) {
            return Err(CliError::Config(
                "problem.f.b_variation must lie in (-1, 1)".into(),
            ));
        }
        if !(p.h.scale >= 0.0 && p.h.scale.is_finite()) {
            return Err(CliError::Config(
                "problem.h.scale must be finite and >= 0".into(),
            ));
        }
        match (p.h.kind, p.h.kappa) {
            (HarvestKind::Saturating, Some(k)) if k >= 0.0 && k.is_finite() => {}
            (HarvestKind::Saturating, _) => {
                return Err(CliError::Config(
                    "saturating harvest needs kappa >= 0".into(),
                ))
            }
            (HarvestKind::ConstantYield, Some(_)) => {
                return Err(CliError::Config(
                    "kappa only applies to the saturating harvest".into(),
                ))
            }
            _ => {}
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iterations == 0 {
            return Err(CliError::Config("solver.max_iterations must be > 0".into()));
        }
        if let Some(t) = self.solver.theta {
            positive("solver.theta", t)?;
        }
        let b = &self.bifurcate;
        if let Some(c) = b.c_max {
            positive("bifurcate.c_max", c)?;
        }
        positive("bifurcate.rel_tol", b.rel_tol)?;
        if b.coarse < 2 {
            return Err(CliError::Config("bifurcate.coarse must be >= 2".into()));
        }
        let par = &self.parabolic;
        if let Some(dt) = par.dt {
            positive("parabolic.dt", dt)?;
        }
        positive("parabolic.s_max", par.s_max)?;
        positive("parabolic.tol", par.tol)?;
        if par.snapshots.iter().any(|&s| !(s >= 0.0 && s <= par.s_max)) {
            return Err(CliError::Config(
                "parabolic.snapshots must lie in [0, s_max]".into(),
            ));
        }
        match par.u0 {
            InitialField::Phi1 { scale } | InitialField::Logistic { scale }
                if !(scale >= 0.0 && scale.is_finite()) =>
            {
                return Err(CliError::Config("parabolic.u0.scale must be >= 0".into()))
            }
            InitialField::Constant { value } if !(value >= 0.0 && value.is_finite()) => {
                return Err(CliError::Config("parabolic.u0.value must be >= 0".into()))
            }
            _ => {}
        }
        self.mc_config().validate()?;
        for x in self.probes() {
            if !grid.contains(x) {
                return Err(CliError::Config(format!(
                    "probe {x} lies outside the domain"
                )));
            }
        }
        positive("stochastic.laplace_dt", self.stochastic.laplace_dt)?;
        if self
            .stochastic
            .laplace_points
            .iter()
            .any(|&x| !(x >= 0.0 && x.is_finite()))
        {
            return Err(CliError::Config("laplace_points must be >= 0".into()));
        }
        if self.output.gnuplot() && !self.output.csv() {
            return Err(CliError::Config("output format gnuplot needs csv".into()));
        }
        if self.debug.trace_paths > nonlocal_core::stochastic::TRACE_CAP {
            return Err(CliError::Config(format!(
                "debug.trace_paths is capped at {}",
                nonlocal_core::stochastic::TRACE_CAP
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        Ok(build_grid(
            self.domain.left,
            self.domain.right,
            self.domain.n,
        )?)
    }

    pub fn kernel(&self) -> Result<LevyKernel, CliError> {
        Ok(match self.kernel_mode {
            Some(mode) => LevyKernel::new(self.symbol, mode)?,
            None => LevyKernel::preferred(self.symbol)?,
        })
    }

    pub fn far_cutoff(&self, grid: &Grid1D) -> f64 {
        self.discretization
            .far_cutoff
            .unwrap_or(2.0 * grid.diameter())
    }

    /// Growth rate for a given `λ₁`.
    pub fn growth_rate(&self, lambda1: f64) -> f64 {
        match (self.problem.a, self.problem.a_over_lambda1) {
            (Some(a), _) => a,
            (None, Some(k)) => k * lambda1,
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn reaction(&self, grid: &Grid1D, lambda1: f64) -> ReactionSpec {
        let p = &self.problem;
        let mid = grid.midpoint();
        let diam = grid.diameter();
        let b = grid.sample(|x| {
            p.f.b * (1.0 + p.f.b_variation * (std::f64::consts::PI * (x - mid) / diam).cos())
        });
        let h0: Vec<f64> = match p.h.profile {
            HarvestProfile::Uniform => vec![p.h.scale; grid.len()],
            HarvestProfile::Boundary => {
                let v: Vec<f64> = grid
                    .delta
                    .iter()
                    .map(|&d| v_profile(&self.symbol, d))
                    .collect();
                let vmax = v.iter().copied().fold(0.0, f64::max);
                v.iter().map(|x| p.h.scale * x / vmax).collect()
            }
        };
        let h = match p.h.kind {
            HarvestKind::ConstantYield => Harvest::ConstantYield { h0 },
            HarvestKind::Saturating => Harvest::Saturating {
                h0,
                kappa: p.h.kappa.unwrap_or(1.0),
            },
        };
        ReactionSpec {
            a: self.growth_rate(lambda1),
            c: p.c,
            f: Crowding { b, p: p.f.p },
            h,
        }
    }

    pub fn steady_options(&self) -> SteadyOptions {
        SteadyOptions {
            tol: self.solver.tol,
            max_iterations: self.solver.max_iterations,
            theta: self.solver.theta,
        }
    }

    pub fn probes(&self) -> Vec<f64> {
        match &self.stochastic.probes {
            Some(p) => p.clone(),
            None => {
                let (l, r) = (self.domain.left, self.domain.right);
                [0.1, 0.3, 0.5, 0.7, 0.9]
                    .iter()
                    .map(|t| l + t * (r - l))
                    .collect()
            }
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig::new(
            self.stochastic.n_paths,
            self.stochastic.dt_path,
            self.stochastic.seed,
        )
    }

    pub fn sampler(&self) -> Result<SubordinatorSampler, CliError> {
        Ok(SubordinatorSampler::new(self.symbol)?)
    }
}
