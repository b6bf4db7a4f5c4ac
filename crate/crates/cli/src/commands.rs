//! One function per subcommand. Each fills an [`Artifacts`] buffer and returns
//! the seeds it used.

use std::collections::BTreeMap;
use std::io::Write;

use nonlocal_core::boundary::BURN_IN;
use nonlocal_core::spectral::{antimaximum_window, second_eigenvalue};
use nonlocal_core::steady::harvest_subsolution;
use nonlocal_core::stochastic::{laplace_transform, trace_paths, write_trace_csv};
use nonlocal_core::{
    assemble, attach_small_branch, check_c11, check_scaling, feynman_kac, hopf_ratio,
    longtime_classify_with, maximal_harvest_from, mc_green, multistart, oracle_at_nodes,
    parabolic_boundary_bounds, principal_eigenpair, scan_cstar, small_branch, solve_logistic_with,
    stability_index, survival_lambda1, v_modulus, v_profile, Branch, EigenOptions, EigenPair,
    Grid1D, KernelMode, OperatorMatrix, ReactionSpec, SteadyOptions, SteadyState,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{InitialField, RunConfig};
use crate::error::CliError;
use crate::output::{gnuplot, Artifacts, SUMMARY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    ValidateKernel,
    Eigen,
    Steady,
    Bifurcate,
    Evolve,
    Longtime,
    McCheck,
    Diagnose,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::ValidateKernel => "validate-kernel",
            Subcommand::Eigen => "eigen",
            Subcommand::Steady => "steady",
            Subcommand::Bifurcate => "bifurcate",
            Subcommand::Evolve => "evolve",
            Subcommand::Longtime => "longtime",
            Subcommand::McCheck => "mc-check",
            Subcommand::Diagnose => "diagnose",
        }
    }

    pub const ALL: [Subcommand; 8] = [
        Subcommand::ValidateKernel,
        Subcommand::Eigen,
        Subcommand::Steady,
        Subcommand::Bifurcate,
        Subcommand::Evolve,
        Subcommand::Longtime,
        Subcommand::McCheck,
        Subcommand::Diagnose,
    ];
}

pub type Seeds = BTreeMap<String, u64>;

/// Operator, principal pair and reaction shared by the commands.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub grid: Grid1D,
    pub op: OperatorMatrix,
    pub eig: EigenPair,
    pub spec: ReactionSpec,
    pub opts: SteadyOptions,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let grid = cfg.grid()?;
        let kernel = cfg.kernel()?;
        let op = assemble(&grid, &kernel, cfg.far_cutoff(&grid))?;
        let eig = principal_eigenpair(&op, &[], eigen_options(cfg, &op))?;
        let spec = cfg.reaction(&grid, eig.lambda);
        spec.validate(grid.len())?;
        Ok(Self {
            cfg,
            grid,
            op,
            eig,
            spec,
            opts: cfg.steady_options(),
        })
    }

    fn logistic(&self) -> Result<SteadyState, CliError> {
        Ok(solve_logistic_with(
            &self.op,
            &self.spec.with_c(0.0),
            &self.eig,
            self.opts,
        )?)
    }

    fn v_a(&self) -> Result<Option<Vec<f64>>, CliError> {
        let s = self.logistic()?;
        Ok((s.branch == Branch::Logistic).then_some(s.u))
    }

    fn csv_enabled(&self) -> bool {
        self.cfg.output.csv()
    }

    fn plot(&self, art: &mut Artifacts, title: &str, plots: &[(&str, usize, usize, &str)]) {
        if self.cfg.output.gnuplot() {
            art.add(&format!("{title}.gp"), gnuplot(title, plots));
        }
    }
}

/// Absolute residual target `solver.tol` for the eigen solve.
fn eigen_options(cfg: &RunConfig, op: &OperatorMatrix) -> EigenOptions {
    let base = EigenOptions::default();
    EigenOptions {
        rel_tol: base.rel_tol.min(cfg.solver.tol / op.norm_inf().max(1.0)),
        ..base
    }
}

pub fn run(sub: Subcommand, cfg: &RunConfig, art: &mut Artifacts) -> Result<Seeds, CliError> {
    let ctx = Context::new(cfg)?;
    if cfg.debug.audit_matrix {
        art.csv("matrix.csv", |w| ctx.op.write_audit_csv(w))?;
    }
    let mut seeds = Seeds::new();
    let summary = match sub {
        Subcommand::ValidateKernel => validate_kernel(&ctx, art)?,
        Subcommand::Eigen => eigen(&ctx, art)?,
        Subcommand::Steady => steady(&ctx, art)?,
        Subcommand::Bifurcate => {
            seeds.insert("bifurcate.seed".into(), cfg.bifurcate.seed);
            bifurcate(&ctx, art)?
        }
        Subcommand::Evolve => evolve(&ctx, art)?,
        Subcommand::Longtime => longtime(&ctx, art)?,
        Subcommand::McCheck => {
            seeds.insert("stochastic.seed".into(), cfg.stochastic.seed);
            mc_check(&ctx, art)?
        }
        Subcommand::Diagnose => diagnose(&ctx, art)?,
    };
    let envelope = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "subcommand": sub.name(),
        "n": ctx.grid.len(),
        "lambda1": ctx.eig.lambda,
        "result": summary,
    });
    art.json(SUMMARY, &envelope)?;
    Ok(seeds)
}

fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn validate_kernel(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let k = &ctx.op.kernel;
    let g = &ctx.grid;
    let symbol = ctx.cfg.symbol;
    let scaling = check_scaling(&symbol, &log_grid(1.0, 1e6, 60))?;
    let moments = k.moments(g.h, ctx.op.far_cutoff)?;
    let m = ctx.op.matrix();
    let n = g.len();
    let mut symmetric = true;
    let mut off_diag_nonpositive = true;
    let mut min_row_sum = f64::INFINITY;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)];
            if j != i {
                symmetric &= m[(i, j)] == m[(j, i)];
                off_diag_nonpositive &= m[(i, j)] <= 0.0;
            }
        }
        min_row_sum = min_row_sum.min(row);
    }
    // Whole-line oracle for a narrow bump; meaningful for exact kernels only.
    let oracle_mismatch = if k.mode == KernelMode::Exact {
        let width = g.diameter() / 20.0;
        let mid = g.midpoint();
        let bump = |x: f64| (-(x - mid).powi(2) / (2.0 * width * width)).exp();
        let au = ctx.op.apply(&g.sample(bump))?;
        let oracle = oracle_at_nodes(&symbol, g, bump, 4, 512.0 * g.diameter())?;
        let num: f64 = au.iter().zip(&oracle).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = oracle.iter().map(|y| y * y).sum();
        Some((num / den).sqrt())
    } else {
        None
    };
    if ctx.csv_enabled() {
        art.csv("kernel.csv", |w| {
            writeln!(w, "r,density,psi_inv_r2,v_profile")?;
            for r in log_grid(g.h, ctx.op.far_cutoff, 200) {
                let d = k.density(r).map_err(std::io::Error::other)?;
                writeln!(
                    w,
                    "{r:e},{d:e},{:e},{:e}",
                    symbol.psi(1.0 / (r * r)),
                    v_profile(&symbol, r)
                )?;
            }
            Ok(())
        })?;
        ctx.plot(art, "kernel", &[("kernel.csv", 1, 2, "lines")]);
    }
    Ok(json!({
        "symbol": symbol,
        "kernel_mode": k.mode,
        "normalization": k.normalization,
        "scheme": ctx.op.scheme,
        "far_cutoff": ctx.op.far_cutoff,
        "scaling": scaling,
        "integrability": k.integrability()?,
        "sigma2_local": moments.sigma2_local,
        "tail_mass": moments.tail_mass,
        "norm_inf": ctx.op.norm_inf(),
        "symmetric": symmetric,
        "off_diagonal_nonpositive": off_diag_nonpositive,
        "min_row_sum": min_row_sum,
        "oracle_relative_l2": oracle_mismatch,
    }))
}

fn eigen(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let second = second_eigenvalue(&ctx.op, &[], eigen_options(ctx.cfg, &ctx.op))?;
    if ctx.csv_enabled() {
        art.csv("eigen.csv", |w| ctx.eig.write_csv(&ctx.grid.nodes, w))?;
        ctx.plot(art, "eigen", &[("eigen.csv", 2, 3, "lines")]);
    }
    Ok(json!({
        "lambda1": ctx.eig.lambda,
        "residual": ctx.eig.residual,
        "iterations": ctx.eig.iterations,
        "tol": ctx.cfg.solver.tol,
        "lambda2": second.lambda,
        "gap": second.lambda - ctx.eig.lambda,
    }))
}

#[derive(Serialize)]
struct BranchSummary {
    branch: Branch,
    sup_norm: f64,
    residual: f64,
    iterations: usize,
    lambda_star: Option<f64>,
    ratio_min: Option<f64>,
}

fn branch_summary(
    ctx: &Context,
    spec: &ReactionSpec,
    s: &SteadyState,
) -> Result<BranchSummary, CliError> {
    let positive = s.branch != Branch::None;
    Ok(BranchSummary {
        branch: s.branch,
        sup_norm: s.sup_norm(),
        residual: s.residual,
        iterations: s.iterations,
        lambda_star: if positive {
            Some(stability_index(&ctx.op, spec, &s.u)?.lambda_star)
        } else {
            None
        },
        ratio_min: if positive {
            Some(hopf_ratio(&s.u, &ctx.grid, &ctx.cfg.symbol)?.min)
        } else {
            None
        },
    })
}

fn steady(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let v_a = ctx.logistic()?;
    let logistic_spec = ctx.spec.with_c(0.0);
    let mut out = serde_json::Map::new();
    out.insert("a".into(), json!(ctx.spec.a));
    out.insert("c".into(), json!(ctx.spec.c));
    out.insert(
        "logistic".into(),
        serde_json::to_value(branch_summary(ctx, &logistic_spec, &v_a)?)?,
    );
    let mut u1: Option<SteadyState> = None;
    let mut u2: Option<SteadyState> = None;
    if ctx.spec.c > 0.0 && v_a.branch == Branch::Logistic {
        let m = maximal_harvest_from(&ctx.op, &ctx.spec, &v_a.u, ctx.opts)?;
        out.insert(
            "maximal".into(),
            serde_json::to_value(branch_summary(ctx, &ctx.spec, &m)?)?,
        );
        if m.branch == Branch::Maximal {
            out.insert(
                "c11".into(),
                json!(check_c11(&m.u, &ctx.spec, ctx.eig.lambda)),
            );
            match small_branch(&ctx.op, &ctx.spec, ctx.opts) {
                Ok(s) => {
                    out.insert(
                        "small".into(),
                        serde_json::to_value(branch_summary(ctx, &ctx.spec, &s)?)?,
                    );
                    out.insert("branch_gap".into(), json!(sup_diff(&m.u, &s.u)));
                    u2 = Some(s);
                }
                Err(e) => {
                    out.insert("small_error".into(), json!(e.to_string()));
                }
            }
        }
        match harvest_subsolution(&ctx.op, &ctx.spec, &ctx.eig) {
            Ok(h) => {
                out.insert(
                    "subsolution".into(),
                    json!({"beta": h.beta, "m": h.m, "epsilon": h.epsilon, "c1": h.c1, "eta1": h.eta1, "eta2": h.eta2}),
                );
            }
            Err(e) => {
                out.insert("subsolution_error".into(), json!(e.to_string()));
            }
        }
        u1 = Some(m);
    }
    if ctx.csv_enabled() {
        let main = u1.as_ref().unwrap_or(&v_a);
        art.csv("steady.csv", |w| {
            writeln!(w, "node,x,v_a,u1,u2")?;
            for i in 0..ctx.grid.len() {
                let pick = |s: &Option<SteadyState>| s.as_ref().map(|s| s.u[i]);
                writeln!(
                    w,
                    "{i},{:e},{:e},{},{}",
                    ctx.grid.nodes[i],
                    v_a.u[i],
                    opt(pick(&u1)),
                    opt(pick(&u2))
                )?;
            }
            Ok(())
        })?;
        art.csv("convergence.csv", |w| {
            writeln!(w, "iteration,step")?;
            for (k, d) in &main.log {
                writeln!(w, "{k},{d:e}")?;
            }
            Ok(())
        })?;
        ctx.plot(
            art,
            "steady",
            &[
                ("steady.csv", 2, 3, "lines"),
                ("steady.csv", 2, 4, "lines"),
                ("steady.csv", 2, 5, "lines"),
            ],
        );
    }
    Ok(Value::Object(out))
}

/// `max_{i, 0<s≤M} (a s − f(x_i, s)) / h(x_i, s)`: above it, no node can carry the maximum
/// of a positive solution.
fn nonexistence_bound(spec: &ReactionSpec) -> Result<f64, CliError> {
    let big_m = spec.apriori_bound();
    let mut best = 0.0f64;
    for i in 0..spec.n() {
        for k in 1..=400 {
            let s = big_m * k as f64 / 400.0;
            let gain = spec.a * s - spec.f(i, s);
            if gain <= 0.0 {
                continue;
            }
            let h = spec.h(i, s);
            if !(h > 0.0) {
                return Err(CliError::Config(
                    "harvest vanishes somewhere; set bifurcate.c_max".into(),
                ));
            }
            best = best.max(gain / h);
        }
    }
    Ok(best)
}

fn bifurcate(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let b = &ctx.cfg.bifurcate;
    let v_a = ctx.v_a()?.ok_or_else(|| {
        CliError::Config(format!("bifurcate needs a > lambda1 = {}", ctx.eig.lambda))
    })?;
    let c_max = match b.c_max {
        Some(c) => c,
        None => 1.05 * nonexistence_bound(&ctx.spec)?,
    };
    let mut result = scan_cstar(
        &ctx.op, &ctx.spec, &v_a, c_max, b.rel_tol, b.coarse, ctx.opts,
    )?;
    let c_hat = 0.5 * result.c_star;
    attach_small_branch(&ctx.op, &ctx.spec, &mut result, c_hat, ctx.opts)?;
    let multi = if b.multistart > 0 {
        let c = 0.5 * c_hat;
        let spec = ctx.spec.with_c(c);
        let u1 = maximal_harvest_from(&ctx.op, &spec, &v_a, ctx.opts)?;
        let u2 = small_branch(&ctx.op, &spec, ctx.opts)?;
        let report = multistart(
            &ctx.op,
            &spec,
            &v_a,
            &u1.u,
            &u2.u,
            b.multistart,
            b.seed,
            ctx.opts,
        )?;
        Some(json!({"c": c, "report": report, "branch_gap": sup_diff(&u1.u, &u2.u)}))
    } else {
        None
    };
    if ctx.csv_enabled() {
        art.csv("bifurcation.csv", |w| {
            writeln!(w, "c,exists,u1_sup,u2_sup,lambda_star,iterations")?;
            for s in &result.samples {
                writeln!(
                    w,
                    "{:e},{},{:e},{},{},{}",
                    s.c,
                    s.exists as u8,
                    s.u1_sup,
                    opt(s.u2_sup),
                    opt(s.lambda_star),
                    s.iterations
                )?;
            }
            Ok(())
        })?;
        ctx.plot(
            art,
            "bifurcation",
            &[
                ("bifurcation.csv", 1, 3, "linespoints"),
                ("bifurcation.csv", 1, 4, "linespoints"),
            ],
        );
    }
    Ok(json!({
        "a": ctx.spec.a,
        "c_max": c_max,
        "c_star": result.c_star,
        "c_exist": result.c_exist,
        "c_fail": result.c_fail,
        "relative_width": (result.c_fail - result.c_exist) / result.c_exist,
        "samples": result.samples.len(),
        "c_hat": c_hat,
        "multistart": multi,
    }))
}

fn initial_field(ctx: &Context, v_a: Option<&[f64]>) -> Result<Vec<f64>, CliError> {
    Ok(match ctx.cfg.parabolic.u0 {
        InitialField::Zero => vec![0.0; ctx.grid.len()],
        InitialField::Phi1 { scale } => ctx.eig.phi.iter().map(|p| scale * p).collect(),
        InitialField::Constant { value } => vec![value; ctx.grid.len()],
        InitialField::Logistic { scale } => {
            let v =
                v_a.ok_or_else(|| CliError::Config("u0 kind logistic needs a > lambda1".into()))?;
            v.iter().map(|x| scale * x).collect()
        }
    })
}

fn time_step(ctx: &Context, u0: &[f64]) -> f64 {
    ctx.cfg
        .parabolic
        .dt
        .unwrap_or_else(|| 0.5 * nonlocal_core::parabolic::dt_max(&ctx.spec, u0))
}

fn evolve(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let p = &ctx.cfg.parabolic;
    let v_a = if matches!(p.u0, InitialField::Logistic { .. }) {
        ctx.v_a()?
    } else {
        None
    };
    let u0 = initial_field(ctx, v_a.as_deref())?;
    let dt = time_step(ctx, &u0);
    let run = nonlocal_core::evolve(&ctx.op, &ctx.spec, &u0, dt, p.s_max, &p.snapshots)?;
    let mut bounds = Vec::new();
    let mut snaps = Vec::new();
    for snap in &run.snapshots {
        snaps.push(json!({"s": snap.s, "sup_norm": sup(&snap.u)}));
        if snap.s >= BURN_IN && sup(&snap.u) > 0.0 {
            bounds.push(parabolic_boundary_bounds(
                &run,
                snap.s,
                &ctx.grid,
                &ctx.cfg.symbol,
            )?);
        }
    }
    if ctx.csv_enabled() {
        art.csv("evolve.csv", |w| run.write_csv(w))?;
        ctx.plot(art, "evolve", &[("evolve.csv", 2, 3, "points")]);
    }
    Ok(json!({
        "dt": run.dt,
        "steps": run.steps,
        "horizon": run.horizon,
        "final_sup_norm": sup(&run.final_state),
        "snapshots": snaps,
        "boundary_bounds": bounds,
    }))
}

fn longtime(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let p = &ctx.cfg.parabolic;
    let v_a = ctx.v_a()?;
    let u0 = initial_field(ctx, v_a.as_deref())?;
    let dt = time_step(ctx, &u0);
    let res = longtime_classify_with(&ctx.op, &ctx.spec, &u0, dt, p.s_max, p.tol, v_a.as_deref())?;
    if ctx.csv_enabled() {
        art.csv("longtime.csv", |w| {
            writeln!(w, "s,sup_norm,distance")?;
            for c in &res.curve {
                writeln!(w, "{:e},{:e},{}", c.s, c.sup_norm, opt(c.distance))?;
            }
            Ok(())
        })?;
        ctx.plot(
            art,
            "longtime",
            &[
                ("longtime.csv", 1, 2, "lines"),
                ("longtime.csv", 1, 3, "lines"),
            ],
        );
    }
    Ok(json!({
        "a": ctx.spec.a,
        "dt": dt,
        "verdict": res.verdict,
        "s_reached": res.s_reached,
        "final_distance": res.final_distance,
        "decay_slope": res.decay_slope,
        "linear_rate": ctx.eig.lambda - ctx.spec.a,
    }))
}

fn mc_check(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let st = &ctx.cfg.stochastic;
    let cfg = ctx.cfg.mc_config();
    let sampler = ctx.cfg.sampler()?;
    let g = &ctx.grid;
    let laplace = laplace_transform(&sampler, &st.laplace_points, st.laplace_dt, &cfg)?;

    let discrete = ctx.op.green_solve(&vec![1.0; g.len()])?;
    let mut green = Vec::new();
    for x in ctx.cfg.probes() {
        let e = mc_green(&sampler, g, |_| 1.0, x, &cfg)?;
        green.push((x, e, g.interpolate(&discrete, x)));
    }

    let lambda1 = ctx.eig.lambda;
    let horizon = 4.6 / lambda1;
    let t_grid: Vec<f64> = (0..=40).map(|k| horizon * k as f64 / 40.0).collect();
    let survival = survival_lambda1(&sampler, g, g.midpoint(), &t_grid, &cfg)?;

    // e^{∫V} φ₁ with V = λ₁/2 decays like e^{−λ₁ T/2} φ₁.
    let phi = |x: f64| g.interpolate(&ctx.eig.phi, x);
    let big_t = 1.0;
    let fk = feynman_kac(
        &sampler,
        g,
        phi,
        |_, _| 0.0,
        |_, _| 0.5 * lambda1,
        0.0,
        big_t,
        g.midpoint(),
        &cfg,
    )?;
    let fk_exact = (-0.5 * lambda1 * big_t).exp() * phi(g.midpoint());

    if ctx.csv_enabled() {
        art.csv("laplace.csv", |w| {
            writeln!(w, "x,estimate,std_error,exact")?;
            for p in &laplace {
                writeln!(
                    w,
                    "{:e},{:e},{:e},{:e}",
                    p.x, p.estimate, p.std_error, p.exact
                )?;
            }
            Ok(())
        })?;
        art.csv("green.csv", |w| {
            writeln!(w, "x,mc,std_error,discrete")?;
            for (x, e, d) in &green {
                writeln!(w, "{x:e},{:e},{:e},{d:e}", e.value, e.std_error)?;
            }
            Ok(())
        })?;
        art.csv("survival.csv", |w| {
            writeln!(w, "t,survival")?;
            for (t, p) in &survival.survival {
                writeln!(w, "{t:e},{p:e}")?;
            }
            Ok(())
        })?;
        ctx.plot(
            art,
            "green",
            &[("green.csv", 1, 2, "points"), ("green.csv", 1, 4, "lines")],
        );
        ctx.plot(art, "survival", &[("survival.csv", 1, 2, "linespoints")]);
    }
    if ctx.cfg.debug.trace_paths > 0 {
        let paths = trace_paths(
            &sampler,
            g,
            g.midpoint(),
            horizon,
            ctx.cfg.debug.trace_paths,
            &cfg,
        )?;
        art.csv("trace.csv", |w| write_trace_csv(&paths, w))?;
    }
    Ok(json!({
        "n_paths": cfg.n_paths,
        "dt_path": cfg.dt_path,
        "seed": cfg.seed,
        "laplace": laplace
            .iter()
            .map(|p| json!({"x": p.x, "estimate": p.estimate, "std_error": p.std_error, "exact": p.exact,
                "within_3se": (p.estimate - p.exact).abs() <= 3.0 * p.std_error}))
            .collect::<Vec<_>>(),
        "green": green
            .iter()
            .map(|(x, e, d)| json!({"x": x, "estimate": e.value, "std_error": e.std_error, "discrete": d}))
            .collect::<Vec<_>>(),
        "survival": {
            "lambda1_hat": survival.lambda1_hat,
            "lambda1": lambda1,
            "relative_error": (survival.lambda1_hat - lambda1).abs() / lambda1,
            "survivors_at_end": survival.survivors_at_end,
            "fit_rms": survival.fit_rms,
        },
        "feynman_kac": {"estimate": fk.value, "std_error": fk.std_error, "spectral": fk_exact, "horizon": big_t},
    }))
}

fn diagnose(ctx: &Context, art: &mut Artifacts) -> Result<Value, CliError> {
    let symbol = ctx.cfg.symbol;
    let g = &ctx.grid;
    let mut fields: Vec<(&str, Vec<f64>)> = vec![("phi1", ctx.eig.phi.clone())];
    if let Some(v) = ctx.v_a()? {
        if ctx.spec.c > 0.0 {
            let m = maximal_harvest_from(&ctx.op, &ctx.spec, &v, ctx.opts)?;
            if m.branch == Branch::Maximal {
                fields.push(("u1", m.u));
            }
        }
        fields.insert(1, ("v_a", v));
    }
    let mut ratios = serde_json::Map::new();
    for (name, u) in &fields {
        let r = hopf_ratio(u, g, &symbol)?;
        let modulus = v_modulus(u, g, &symbol)?;
        ratios.insert(
            name.to_string(),
            json!({"min": r.min, "max": r.max, "band_min": r.band_min, "band_max": r.band_max,
                "band_nodes": r.band_nodes, "v_modulus": modulus}),
        );
        if ctx.csv_enabled() {
            art.csv(&format!("ratio_{name}.csv"), |w| r.write_csv(g, u, w))?;
        }
    }
    let forcing = vec![-1.0; g.len()];
    let window = antimaximum_window(&ctx.op, &[], &forcing, ctx.eig.lambda, 1e-3, 2.0, 40)?;
    let below = nonlocal_core::antimaximum_profile(&ctx.op, &[], &forcing, 0.5 * ctx.eig.lambda)?;
    if ctx.csv_enabled() {
        art.csv("antimax.csv", |w| {
            writeln!(w, "lambda,max_ratio")?;
            for (l, r) in &window.samples {
                writeln!(w, "{l:e},{r:e}")?;
            }
            Ok(())
        })?;
        ctx.plot(art, "ratio", &[("ratio_phi1.csv", 2, 4, "points")]);
        ctx.plot(art, "antimax", &[("antimax.csv", 1, 2, "linespoints")]);
    }
    Ok(json!({
        "ratios": ratios,
        "antimax_upper": window.upper,
        "below_spectrum_positive": below.strictly_positive,
    }))
}
