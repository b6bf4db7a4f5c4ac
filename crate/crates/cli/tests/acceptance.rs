//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nonlocal_core::spectral::antimaximum_window;
use nonlocal_core::steady::{harvest_subsolution, residual};
use nonlocal_core::stochastic::laplace_transform;
use nonlocal_core::*;

type Outcome = std::result::Result<String, String>;

const N: usize = 199;
const FAR: f64 = 4.0;

fn cauchy() -> BernsteinSymbol {
    BernsteinSymbol::fractional(1.0).unwrap()
}

fn operator(symbol: BernsteinSymbol, n: usize) -> OperatorMatrix {
    let g = build_grid(-1.0, 1.0, n).unwrap();
    let k = LevyKernel::new(symbol, KernelMode::Exact).unwrap();
    assemble(&g, &k, FAR).unwrap()
}

fn eigen(op: &OperatorMatrix) -> EigenPair {
    principal_eigenpair(op, &[], EigenOptions::default()).unwrap()
}

fn sup(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

fn leq(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).all(|(a, b)| a <= b)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn opts() -> SteadyOptions {
    SteadyOptions::default()
}

fn operator_correctness() -> Outcome {
    let width = 0.1;
    let bump = move |x: f64| (-x * x / (2.0 * width * width)).exp();
    let mut lines = Vec::new();
    let mut ok = true;
    for s in [
        BernsteinSymbol::fractional(0.5).unwrap(),
        cauchy(),
        BernsteinSymbol::fractional(1.5).unwrap(),
        BernsteinSymbol::sum_fractional(1.0, 1.5).unwrap(),
    ] {
        let errs: Vec<f64> = [199, 399, 799]
            .iter()
            .map(|&n| {
                let op = operator(s, n);
                let au = op.apply(&op.grid.sample(bump)).unwrap();
                let oracle = oracle_at_nodes(&s, &op.grid, bump, 4, 1024.0).unwrap();
                let num: f64 = au.iter().zip(&oracle).map(|(x, y)| (x - y).powi(2)).sum();
                let den: f64 = oracle.iter().map(|y| y * y).sum();
                (num / den).sqrt()
            })
            .collect();
        ok &= errs[0] <= 0.02 && errs[1] < errs[0] && errs[2] < errs[1];
        lines.push(format!(
            "{} {:.2e}/{:.2e}/{:.2e}",
            s.kind(),
            errs[0],
            errs[1],
            errs[2]
        ));
    }
    check(ok, lines.join("; "))
}

fn logistic_suite() -> Outcome {
    let op = operator(cauchy(), N);
    let eig = eigen(&op);
    let l1 = eig.lambda;
    let mut ok = true;
    let mut notes = Vec::new();
    for fac in [0.5, 1.0] {
        let s =
            solve_logistic_with(&op, &ReactionSpec::logistic(N, fac * l1), &eig, opts()).unwrap();
        ok &= s.branch == Branch::None;
        notes.push(format!("{fac}l1 {:?}", s.branch));
    }
    let mut prev: Option<Vec<f64>> = None;
    for fac in [1.5, 2.0, 3.0] {
        let spec = ReactionSpec::logistic(N, fac * l1);
        let s = solve_logistic_with(&op, &spec, &eig, opts()).unwrap();
        let res = residual(&op, &spec, &s.u).unwrap();
        let stab = stability_index(&op, &spec, &s.u).unwrap().lambda_star;
        let positive = s.branch == Branch::Logistic && s.u.iter().all(|&x| x > 0.0);
        let increasing = prev
            .as_ref()
            .is_none_or(|p| s.u.iter().zip(p).all(|(x, y)| x > y));
        ok &= positive && res <= 1e-8 && increasing && stab > 0.0;
        notes.push(format!(
            "{fac}l1 res {res:.1e} stab {stab:.3} incr {increasing}"
        ));
        prev = Some(s.u);
    }
    check(ok, notes.join("; "))
}

fn harvesting_suite() -> Outcome {
    let op = operator(cauchy(), N);
    let eig = eigen(&op);
    let spec = ReactionSpec::logistic(N, 1.05 * eig.lambda);
    let tol = opts().tol;
    let v_a = solve_logistic_with(&op, &spec, &eig, opts()).unwrap().u;
    let sub = harvest_subsolution(&op, &spec, &eig).unwrap();
    let mut notes = vec![format!(
        "c1 {:.3e} m {:.3} beta {:.3}",
        sub.c1, sub.m, sub.beta
    )];
    let mut ok = true;
    for c in [sub.c1, 0.5 * sub.c1, 0.25 * sub.c1] {
        let u1 = maximal_harvest_from(&op, &spec.with_c(c), &v_a, opts()).unwrap();
        ok &= u1.branch == Branch::Maximal && leq(&sub.lower, &u1.u) && leq(&u1.u, &v_a);
    }
    notes.push(format!("maximal sandwich {ok}"));

    let t = Instant::now();
    let mut scan = scan_cstar(&op, &spec, &v_a, eig.lambda, 1e-3, 8, opts()).unwrap();
    let width = scan.c_fail - scan.c_exist;
    let at = |c: f64| scan.samples.iter().find(|s| s.c == c).map(|s| s.exists);
    let bracket = width <= 1e-3 * scan.c_star
        && at(scan.c_exist) == Some(true)
        && at(scan.c_fail) == Some(false);
    ok &= bracket;
    notes.push(format!(
        "c* {:.5e} width/c* {:.2e}",
        scan.c_star,
        width / scan.c_star
    ));

    let c_hat = 0.5 * scan.c_star;
    attach_small_branch(&op, &spec, &mut scan, c_hat, opts()).unwrap();
    let targets: Vec<f64> = (0..6).rev().map(|k| c_hat / 2f64.powi(k)).collect();
    let path = small_branch_path(&op, &spec, &targets, opts()).unwrap();
    let sups: Vec<f64> = path.iter().map(|s| s.sup_norm()).collect();
    let shrinking = sups.windows(2).all(|w| w[0] < w[1]) && sups[0] <= 0.1 * sups[5];
    let mut ordered = true;
    for (c, u2) in targets.iter().zip(&path) {
        let u1 = maximal_harvest_from(&op, &spec.with_c(*c), &v_a, opts()).unwrap();
        ordered &= leq(&u2.u, &u1.u) && sup_diff(&u1.u, &u2.u) > 10.0 * tol;
    }
    ok &= shrinking && ordered;
    notes.push(format!(
        "|u2| {:.2e}..{:.2e} ordered {ordered}",
        sups[0], sups[5]
    ));

    let c = 0.5 * c_hat;
    let s = spec.with_c(c);
    let u1 = maximal_harvest_from(&op, &s, &v_a, opts()).unwrap();
    let u2 = small_branch(&op, &s, opts()).unwrap();
    let r = multistart(&op, &s, &v_a, &u1.u, &u2.u, 50, 2024, opts()).unwrap();
    let two = r.converged > 0 && r.other == 0 && r.near_maximal > 0 && r.near_small > 0;
    ok &= two;
    notes.push(format!(
        "multistart {}/{} -> {}+{} other {} dmax {:.1e} ({:.1}s)",
        r.converged,
        r.starts,
        r.near_maximal,
        r.near_small,
        r.other,
        r.max_distance,
        t.elapsed().as_secs_f64()
    ));
    check(ok, notes.join("; "))
}

fn c11_certificate() -> Outcome {
    let op = operator(cauchy(), N);
    let eig = eigen(&op);
    let base = ReactionSpec::logistic(N, 3.0 * eig.lambda);
    let v_a = solve_logistic_with(&op, &base, &eig, opts()).unwrap().u;
    let symbol = cauchy();
    let vhat: Vec<f64> = op
        .grid
        .delta
        .iter()
        .map(|&d| v_profile(&symbol, d))
        .collect();
    let vmax = sup(&vhat);
    let profiles = [
        (
            "boundary",
            vhat.iter().map(|v| v / vmax).collect::<Vec<_>>(),
        ),
        ("uniform", vec![1.0; N]),
    ];
    let mut notes = Vec::new();
    let mut verdict = false;
    for (name, h0) in profiles {
        let spec = ReactionSpec {
            h: Harvest::ConstantYield { h0 },
            ..base.clone()
        };
        let scan = scan_cstar(&op, &spec, &v_a, 3.0 * eig.lambda, 1e-2, 8, opts()).unwrap();
        let c = scan
            .samples
            .iter()
            .map(|s| s.c)
            .filter(|&c| c > 0.0)
            .fold(f64::INFINITY, f64::min);
        let s = spec.with_c(c);
        let u1 = maximal_harvest_from(&op, &s, &v_a, opts()).unwrap();
        let pass = u1.branch == Branch::Maximal && check_c11(&u1.u, &s, eig.lambda);
        if name == "boundary" {
            verdict = pass;
        }
        notes.push(format!(
            "h0 {name}: c {c:.4e} (c* {:.4e}) certificate {pass}",
            scan.c_star
        ));
    }
    check(verdict, notes.join("; "))
}

fn antimaximum() -> Outcome {
    let op = operator(cauchy(), N);
    let eig = eigen(&op);
    let f = vec![-1.0; N];
    let w = antimaximum_window(&op, &[], &f, eig.lambda, 1e-3, 1.0, 30).unwrap();
    let below: Vec<bool> = [0.5, 0.9, 0.99]
        .iter()
        .map(|k| {
            antimaximum_profile(&op, &[], &f, k * eig.lambda)
                .unwrap()
                .strictly_positive
        })
        .collect();
    let ok = w.upper.is_some_and(|u| u > eig.lambda) && below.iter().all(|&b| b);
    check(
        ok,
        format!(
            "window (l1, {:?}]; positive below l1 {below:?}",
            w.upper.map(|u| u / eig.lambda)
        ),
    )
}

fn dichotomy() -> Outcome {
    let op = operator(cauchy(), N);
    let eig = eigen(&op);
    let l1 = eig.lambda;
    let mut ok = true;
    let mut notes = Vec::new();
    for fac in [1.5, 2.0] {
        let spec = ReactionSpec::logistic(N, fac * l1);
        let v_a = solve_logistic_with(
            &op,
            &spec,
            &eig,
            SteadyOptions {
                tol: 1e-12,
                ..opts()
            },
        )
        .unwrap()
        .u;
        let small: Vec<f64> = eig.phi.iter().map(|p| 0.01 * p).collect();
        let big: Vec<f64> = v_a.iter().map(|v| 10.0 * v).collect();
        for (name, u0) in [("0.01phi1", small), ("10v_a", big)] {
            let dt = 0.5 * parabolic::dt_max(&spec, &u0);
            let r = parabolic::longtime_classify_with(&op, &spec, &u0, dt, 200.0, 1e-4, Some(&v_a))
                .unwrap();
            ok &= r.verdict == Verdict::ToPositiveSteady && r.final_distance <= 1e-4;
            notes.push(format!(
                "{fac}l1 {name} {:?} d {:.1e} s {:.1}",
                r.verdict, r.final_distance, r.s_reached
            ));
        }
    }
    for fac in [0.5, 0.99] {
        let spec = ReactionSpec::logistic(N, fac * l1);
        let r = longtime_classify(&op, &spec, &eig.phi, 0.01, 2000.0, 1e-4).unwrap();
        let want = l1 - spec.a;
        let slope = r.decay_slope.map(|s| -s);
        let close = slope.is_some_and(|s| (s - want).abs() <= 0.1 * want);
        ok &= r.verdict == Verdict::ToZero && close;
        notes.push(format!(
            "{fac}l1 {:?} rate {:.4?} vs {want:.4}",
            r.verdict, slope
        ));
    }
    let spec = ReactionSpec::logistic(N, 2.0 * l1);
    let v_a = solve_logistic_with(&op, &spec, &eig, opts()).unwrap().u;
    let lo: Vec<f64> = eig.phi.iter().map(|p| 0.01 * p).collect();
    let hi: Vec<f64> = v_a.iter().map(|v| 3.0 * v).collect();
    let dt = 0.5 * parabolic::dt_max(&spec, &hi);
    let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.5).collect();
    let a = evolve(&op, &spec, &lo, dt, 10.0, &times).unwrap();
    let b = evolve(&op, &spec, &hi, dt, 10.0, &times).unwrap();
    let ordered = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .all(|(x, y)| leq(&x.u, &y.u));
    ok &= ordered && a.snapshots.len() == times.len() + 1;
    notes.push(format!(
        "comparison on {} snapshots {ordered}",
        a.snapshots.len()
    ));
    check(ok, notes.join("; "))
}

fn stochastic_cross_validation() -> Outcome {
    let op = operator(cauchy(), N);
    let eig = eigen(&op);
    let g = &op.grid;
    let sampler = SubordinatorSampler::new(cauchy()).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();

    let pts = laplace_transform(
        &sampler,
        &[0.5, 1.0, 2.0],
        1.0,
        &McConfig::new(100_000, 0.01, 1),
    )
    .unwrap();
    let worst = pts
        .iter()
        .map(|p| (p.estimate - p.exact).abs() / p.std_error)
        .fold(0.0, f64::max);
    ok &= worst <= 3.0;
    notes.push(format!("laplace max z {worst:.2}"));

    let (dt, dt2) = (0.01, 0.005);
    let green = op.green_solve(&vec![1.0; N]).unwrap();
    let (mut bias, mut bias2) = (0.0, 0.0);
    let mut green_ok = true;
    let probes = [-0.8, -0.4, 0.0, 0.4, 0.8];
    for &x in &probes {
        let exact = g.interpolate(&green, x);
        let coarse = mc_green(&sampler, g, |_| 1.0, x, &McConfig::new(100_000, dt, 11)).unwrap();
        let fine = mc_green(&sampler, g, |_| 1.0, x, &McConfig::new(100_000, dt2, 12)).unwrap();
        let allowance = 3.0 * fine.std_error + 2.5 * (coarse.value - fine.value).abs();
        green_ok &= (fine.value - exact).abs() <= allowance;
        bias += (coarse.value - exact).abs() / probes.len() as f64;
        bias2 += (fine.value - exact).abs() / probes.len() as f64;
    }
    ok &= green_ok && bias2 < bias;
    notes.push(format!(
        "green within allowance {green_ok}, mean bias {bias:.4} -> {bias2:.4}"
    ));

    let phi = |x: f64| g.interpolate(&eig.phi, x);
    let v = 1.5;
    let fk = |dt: f64, seed: u64| {
        feynman_kac(
            &sampler,
            g,
            phi,
            |_, _| 0.0,
            |_, _| v,
            0.0,
            1.0,
            0.0,
            &McConfig::new(100_000, dt, seed),
        )
        .unwrap()
    };
    let (coarse, fine) = (fk(dt, 21), fk(dt2, 22));
    let want = (v - eig.lambda).exp() * phi(0.0);
    let allowance = 3.0 * fine.std_error + 2.5 * (coarse.value - fine.value).abs();
    ok &= (fine.value - want).abs() <= allowance;
    notes.push(format!(
        "fk {:.4} vs {want:.4} (allowance {allowance:.4})",
        fine.value
    ));

    let t_grid: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
    let fit = survival_lambda1(&sampler, g, 0.0, &t_grid, &McConfig::new(100_000, dt, 9)).unwrap();
    let rel = (fit.lambda1_hat - eig.lambda).abs() / eig.lambda;
    ok &= rel <= 0.1;
    notes.push(format!(
        "survival l1 {:.4} vs {:.4} ({:.1}%)",
        fit.lambda1_hat,
        eig.lambda,
        100.0 * rel
    ));
    check(ok, notes.join("; "))
}

fn boundary_diagnostics() -> Outcome {
    let symbol = cauchy();
    let op = operator(symbol, N);
    let eig = eigen(&op);
    let g = &op.grid;
    let spec = ReactionSpec::logistic(N, 2.0 * eig.lambda);
    let v_a = solve_logistic_with(&op, &spec, &eig, opts()).unwrap().u;
    let sub = harvest_subsolution(&op, &spec, &eig).unwrap();
    let u1 = maximal_harvest_from(&op, &spec.with_c(0.5 * sub.c1), &v_a, opts())
        .unwrap()
        .u;
    let times = [0.5, 1.0];
    let u0: Vec<f64> = eig.phi.iter().map(|p| 0.01 * p).collect();
    let run = evolve(&op, &spec, &u0, 0.01, 1.0, &times).unwrap();
    let mut fields = vec![("phi1", eig.phi.clone()), ("v_a", v_a), ("u1", u1)];
    for &s in &times {
        fields.push(("w", run.snapshot(s).unwrap().u.clone()));
    }
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, u) in &fields {
        let r = hopf_ratio(u, g, &symbol).unwrap();
        let m = v_modulus(u, g, &symbol).unwrap();
        ok &= r.min > 0.0 && m.is_finite();
        notes.push(format!("{name} min {:.3}", r.min));
    }
    for &s in &times {
        let b = parabolic_boundary_bounds(&run, s, g, &symbol).unwrap();
        ok &= b.pass;
        notes.push(format!(
            "s={s} C {:.2}",
            b.upper_ratio_max.max(1.0 / b.lower_ratio_min)
        ));
    }
    let fine = operator(symbol, 2 * N + 1);
    let finer = operator(symbol, 4 * N + 3);
    let m1 = v_modulus(&eigen(&fine).phi, &fine.grid, &symbol).unwrap();
    let m2 = v_modulus(&eigen(&finer).phi, &finer.grid, &symbol).unwrap();
    let drift = (m2 - m1).abs() / m1;
    ok &= drift <= 0.2;
    notes.push(format!("phi1 modulus 399->799 {m1:.4}->{m2:.4}"));
    check(ok, notes.join("; "))
}

const REPRO_CONFIG: &str = r#"
schema_version = 1
symbol = { kind = "fractional", alpha = 1.0 }
domain = { left = -1.0, right = 1.0, n = 79 }
discretization = { far_cutoff = 4.0 }

[problem]
a_over_lambda1 = 2.0
c = 0.0

[bifurcate]
rel_tol = 1e-2
multistart = 6
seed = 3

[parabolic]
dt = 0.02
s_max = 2.0
snapshots = [0.5, 1.0]

[stochastic]
n_paths = 10000
dt_path = 0.02
seed = 17

[debug]
trace_paths = 5
"#;

fn run_cli(
    sub: &str,
    config: &Path,
    out: &Path,
    workers: usize,
) -> std::result::Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_nonlocal"))
        .arg(sub)
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .arg("--workers")
        .arg(workers.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{sub} failed: {}",
            String::from_utf8_lossy(&status.stderr).trim()
        ))
    }
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("repro.toml");
    std::fs::write(&config, REPRO_CONFIG).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for sub in [
        "validate-kernel",
        "eigen",
        "steady",
        "bifurcate",
        "evolve",
        "longtime",
        "mc-check",
        "diagnose",
    ] {
        let runs: Vec<_> = [(1, "a"), (1, "b"), (3, "c")]
            .iter()
            .map(|&(w, tag)| {
                let out = tmp.path().join(format!("{sub}-{tag}"));
                run_cli(sub, &config, &out, w).map(|_| data_files(&out))
            })
            .collect::<std::result::Result<_, _>>()?;
        let same = runs.windows(2).all(|w| w[0] == w[1]) && !runs[0].is_empty();
        ok &= same;
        notes.push(format!(
            "{sub} {}",
            if same {
                runs[0].len().to_string()
            } else {
                "differs".into()
            }
        ));
    }
    check(ok, notes.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("operator correctness", operator_correctness),
        ("logistic suite", logistic_suite),
        ("harvesting suite", harvesting_suite),
        ("certificate", c11_certificate),
        ("anti-maximum", antimaximum),
        ("dichotomy", dichotomy),
        ("stochastic cross-validation", stochastic_cross_validation),
        ("boundary diagnostics", boundary_diagnostics),
        ("reproducibility", reproducibility),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
