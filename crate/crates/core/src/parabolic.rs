//! Forward-time evolution `∂_s w = −Ψ(−Δ)w + a w − f(x, w)` with zero exterior data.
//!
//! The terminal-value problem in `t ∈ [0, T]` maps to this one under `s = T − t`:
//! the terminal datum becomes the initial field `w(·, 0)`, and `w(·, s)` is the
//! terminal-problem solution at time `t = T − s`.

use std::io::Write;

use nalgebra::{Cholesky, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::OperatorMatrix;
use crate::spectral::{principal_eigenpair, EigenOptions};
use crate::steady::{solve_logistic_with, sup, Branch, ReactionSpec, SteadyOptions};

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub s: f64,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParabolicRun {
    pub dt: f64,
    pub horizon: f64,
    pub steps: usize,
    pub u0: Vec<f64>,
    /// Sorted by `s`; the initial field is always included at `s = 0`.
    pub snapshots: Vec<Snapshot>,
    pub final_state: Vec<f64>,
}

impl ParabolicRun {
    /// Snapshot whose time lies within half a step of `s`.
    pub fn snapshot(&self, s: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|snap| (snap.s - s).abs() <= 0.5 * self.dt)
            .ok_or(Error::MissingSnapshot(s))
    }

    /// Rows `s,node,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,node,value")?;
        for snap in &self.snapshots {
            for (i, v) in snap.u.iter().enumerate() {
                writeln!(w, "{:e},{i},{v:e}", snap.s)?;
            }
        }
        Ok(())
    }
}

/// Largest stable step `1/(|a| + L_f)` with `L_f = sup f_s` on `[0, max(‖u0‖∞, K)]`.
pub fn dt_max(spec: &ReactionSpec, u0: &[f64]) -> f64 {
    let s_max = sup(u0).max(spec.apriori_bound());
    let lf = (0..spec.n())
        .map(|i| spec.f_s(i, s_max))
        .fold(0.0, f64::max);
    1.0 / (spec.a.abs() + lf)
}

struct Stepper {
    chol: Cholesky<f64, Dyn>,
    dt: f64,
}

impl Stepper {
    fn new(op: &OperatorMatrix, dt: f64) -> Result<Self> {
        let n = op.n();
        let mut m = op.matrix() * dt;
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::Numeric("I + dt·A is not positive definite".into()))?;
        Ok(Self { chol, dt })
    }

    /// `(I + dt A)⁻¹ (w + dt r(w))`.
    fn step(&self, w: &[f64], reaction: &[f64]) -> Result<Vec<f64>> {
        let rhs = DVector::from_iterator(
            w.len(),
            w.iter().zip(reaction).map(|(x, r)| x + self.dt * r),
        );
        let next = self.chol.solve(&rhs);
        let floor = -1e-13 * sup(w).max(f64::MIN_POSITIVE);
        let mut out = Vec::with_capacity(w.len());
        for (i, &v) in next.iter().enumerate() {
            if v < floor || !v.is_finite() {
                return Err(Error::Internal(format!(
                    "negative or non-finite value {v:e} at node {i}"
                )));
            }
            // Roundoff below the floor of a nonnegative resolvent.
            out.push(v.max(0.0));
        }
        Ok(out)
    }
}

fn check_input(
    op: &OperatorMatrix,
    u0: &[f64],
    dt: f64,
    horizon: f64,
    times: &[f64],
) -> Result<()> {
    op.check_len(u0.len())?;
    if u0.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::config("initial field must be finite and >= 0"));
    }
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::config("dt must be > 0 and the horizon >= 0"));
    }
    if times
        .iter()
        .any(|&s| !(s >= 0.0 && s <= horizon + 0.5 * dt))
    {
        return Err(Error::config("snapshot times must lie in [0, horizon]"));
    }
    Ok(())
}

fn run<R: Fn(&[f64]) -> Vec<f64>>(
    op: &OperatorMatrix,
    u0: &[f64],
    dt: f64,
    horizon: f64,
    times: &[f64],
    reaction: R,
) -> Result<ParabolicRun> {
    let stepper = Stepper::new(op, dt)?;
    let steps = (horizon / dt).round() as usize;
    let mut marks: Vec<usize> = times.iter().map(|&s| (s / dt).round() as usize).collect();
    marks.push(0);
    marks.sort_unstable();
    marks.dedup();
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut next_mark = marks.iter().peekable();
    let mut w = u0.to_vec();
    for m in 0..=steps {
        if m > 0 {
            let r = reaction(&w);
            w = stepper.step(&w, &r)?;
        }
        while next_mark.peek().is_some_and(|&&k| k == m) {
            snapshots.push(Snapshot {
                s: m as f64 * dt,
                u: w.clone(),
            });
            next_mark.next();
        }
    }
    Ok(ParabolicRun {
        dt,
        horizon: steps as f64 * dt,
        steps,
        u0: u0.to_vec(),
        snapshots,
        final_state: w,
    })
}

/// IMEX steps `w^{m+1} = (I + dt A)⁻¹(w^m + dt (a w^m − f(·, w^m)))` up to `s = horizon`.
pub fn evolve(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    u0: &[f64],
    dt: f64,
    horizon: f64,
    snapshot_times: &[f64],
) -> Result<ParabolicRun> {
    spec.validate(op.n())?;
    if spec.c != 0.0 {
        return Err(Error::config(
            "parabolic evolution is implemented for c = 0 only",
        ));
    }
    check_input(op, u0, dt, horizon, snapshot_times)?;
    let limit = dt_max(spec, u0);
    if dt > limit {
        return Err(Error::config(format!(
            "dt = {dt} exceeds the positivity limit {limit}"
        )));
    }
    run(op, u0, dt, horizon, snapshot_times, |w| spec.rhs(w))
}

/// Linear evolution `∂_s w = −A w + V w` with a nodal potential `V`.
pub fn evolve_linear(
    op: &OperatorMatrix,
    potential: &[f64],
    u0: &[f64],
    dt: f64,
    horizon: f64,
    snapshot_times: &[f64],
) -> Result<ParabolicRun> {
    op.check_len(potential.len())?;
    check_input(op, u0, dt, horizon, snapshot_times)?;
    let vmax = sup(potential);
    if dt * vmax > 1.0 {
        return Err(Error::config(format!(
            "dt = {dt} exceeds the positivity limit {}",
            1.0 / vmax
        )));
    }
    run(op, u0, dt, horizon, snapshot_times, |w| {
        w.iter().zip(potential).map(|(x, v)| v * x).collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ToPositiveSteady,
    ToZero,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvePoint {
    pub s: f64,
    pub sup_norm: f64,
    /// `‖w − v_a‖∞`, present when `a > λ₁`.
    pub distance: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LongtimeResult {
    pub verdict: Verdict,
    pub s_reached: f64,
    pub final_distance: f64,
    /// Least-squares slope of `log ‖w‖∞` over the second half of the run.
    pub decay_slope: Option<f64>,
    pub curve: Vec<CurvePoint>,
}

/// Evolves until `‖w − v_a‖∞ ≤ tol`, `‖w‖∞ ≤ tol`, or `s = s_max`.
pub fn longtime_classify(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    u0: &[f64],
    dt: f64,
    s_max: f64,
    tol: f64,
) -> Result<LongtimeResult> {
    spec.validate(op.n())?;
    let eig = principal_eigenpair(op, &[], EigenOptions::default())?;
    let steady_tol = (1e-3 * tol).min(1e-10);
    let steady = solve_logistic_with(
        op,
        &spec.with_c(0.0),
        &eig,
        SteadyOptions {
            tol: steady_tol,
            ..SteadyOptions::default()
        },
    )?;
    let v_a = (steady.branch == Branch::Logistic).then_some(steady.u);
    longtime_classify_with(op, spec, u0, dt, s_max, tol, v_a.as_deref())
}

/// As [`longtime_classify`] with a precomputed `v_a` (`None` when `a ≤ λ₁`).
pub fn longtime_classify_with(
    op: &OperatorMatrix,
    spec: &ReactionSpec,
    u0: &[f64],
    dt: f64,
    s_max: f64,
    tol: f64,
    v_a: Option<&[f64]>,
) -> Result<LongtimeResult> {
    spec.validate(op.n())?;
    if spec.c != 0.0 {
        return Err(Error::config(
            "long-time classification is implemented for c = 0 only",
        ));
    }
    check_input(op, u0, dt, s_max, &[])?;
    if let Some(v) = v_a {
        op.check_len(v.len())?;
    }
    let limit = dt_max(spec, u0);
    if dt > limit {
        return Err(Error::config(format!(
            "dt = {dt} exceeds the positivity limit {limit}"
        )));
    }
    let stepper = Stepper::new(op, dt)?;
    let steps = (s_max / dt).round() as usize;
    let mut w = u0.to_vec();
    let mut curve = Vec::new();
    let mut verdict = Verdict::Undecided;
    for m in 0..=steps {
        if m > 0 {
            let r = spec.rhs(&w);
            w = stepper.step(&w, &r)?;
        }
        let sup_norm = sup(&w);
        let distance = v_a.map(|v| {
            w.iter()
                .zip(v)
                .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
        });
        curve.push(CurvePoint {
            s: m as f64 * dt,
            sup_norm,
            distance,
        });
        if distance.is_some_and(|d| d <= tol) {
            verdict = Verdict::ToPositiveSteady;
            break;
        }
        if sup_norm <= tol {
            verdict = Verdict::ToZero;
            break;
        }
    }
    let last = curve.last().expect("at least the initial point");
    let s_reached = last.s;
    let final_distance = match verdict {
        Verdict::ToZero => last.sup_norm,
        _ => last.distance.unwrap_or(last.sup_norm),
    };
    Ok(LongtimeResult {
        verdict,
        s_reached,
        final_distance,
        decay_slope: decay_slope(&curve),
        curve,
    })
}

fn decay_slope(curve: &[CurvePoint]) -> Option<f64> {
    let s_end = curve.last()?.s;
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|p| p.s >= 0.5 * s_end && p.sup_norm > 0.0)
        .map(|p| (p.s, p.sup_norm.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let (ms, ml) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, l)| (a + s / k, b + l / k));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (s, l)| {
        (n + (s - ms) * (l - ml), d + (s - ms) * (s - ms))
    });
    Some(num / den)
}
