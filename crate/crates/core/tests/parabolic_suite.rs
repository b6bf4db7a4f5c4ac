use nonlocal_core::parabolic::{dt_max, longtime_classify_with};
use nonlocal_core::*;
use std::sync::OnceLock;

const N: usize = 99;

struct Fixture {
    op: OperatorMatrix,
    eig: EigenPair,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let g = build_grid(-1.0, 1.0, N).unwrap();
        let k =
            LevyKernel::new(BernsteinSymbol::fractional(1.0).unwrap(), KernelMode::Exact).unwrap();
        let op = assemble(&g, &k, 4.0).unwrap();
        let eig = principal_eigenpair(&op, &[], EigenOptions::default()).unwrap();
        Fixture { op, eig }
    })
}

fn sup_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

fn tight() -> SteadyOptions {
    SteadyOptions {
        tol: 1e-12,
        ..SteadyOptions::default()
    }
}

#[test]
fn steady_state_is_stationary() {
    let fx = fixture();
    let spec = ReactionSpec::logistic(N, 2.0 * fx.eig.lambda);
    let va = solve_logistic(&fx.op, &spec, tight()).unwrap();
    let run = evolve(&fx.op, &spec, &va.u, 0.05, 5.0, &[1.0, 2.5, 5.0]).unwrap();
    for snap in &run.snapshots {
        let d = sup_dist(&snap.u, &va.u);
        assert!(d <= 10.0 * tight().tol, "{d:e}");
    }
}

#[test]
fn ordered_data_stay_ordered() {
    let fx = fixture();
    let spec = ReactionSpec::logistic(N, 2.0 * fx.eig.lambda);
    let lo: Vec<f64> = fx.eig.phi.iter().map(|p| 0.1 * p).collect();
    let hi: Vec<f64> = fx.eig.phi.iter().map(|p| 0.1 * p + 0.3 * p * p).collect();
    let times: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    let dt = 0.5 * dt_max(&spec, &hi).min(dt_max(&spec, &lo));
    let dt = 10.0 / (10.0 / dt).ceil();
    let a = evolve(&fx.op, &spec, &lo, dt, 10.0, &times).unwrap();
    let b = evolve(&fx.op, &spec, &hi, dt, 10.0, &times).unwrap();
    let bound = spec.apriori_bound().max(0.4);
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        assert_eq!(sa.s, sb.s);
        assert!(sa.u.iter().zip(&sb.u).all(|(x, y)| x <= y));
        assert!(sa.u.iter().chain(&sb.u).all(|&x| x >= 0.0 && x <= bound));
    }
}

#[test]
fn time_shift_order_preservation() {
    // Starting below v_a the solution increases: w(s) ≤ w(s + Δ) for all s.
    let fx = fixture();
    let spec = ReactionSpec::logistic(N, 1.5 * fx.eig.lambda);
    let u0: Vec<f64> = fx.eig.phi.iter().map(|p| 0.01 * p).collect();
    let dt = 0.05;
    let times: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
    let run = evolve(&fx.op, &spec, &u0, dt, 10.0, &times).unwrap();
    for w in run.snapshots.windows(2) {
        assert!(
            w[0].u.iter().zip(&w[1].u).all(|(x, y)| x <= y),
            "s = {}",
            w[0].s
        );
    }
}

#[test]
fn first_order_in_dt() {
    let fx = fixture();
    let spec = ReactionSpec::logistic(N, 2.0 * fx.eig.lambda);
    let u0: Vec<f64> = fx.eig.phi.iter().map(|p| 0.5 * p).collect();
    let finals: Vec<Vec<f64>> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            evolve(&fx.op, &spec, &u0, dt, 2.0, &[])
                .unwrap()
                .final_state
        })
        .collect();
    let d: Vec<f64> = finals.windows(2).map(|w| sup_dist(&w[0], &w[1])).collect();
    for r in d.windows(2).map(|w| w[0] / w[1]) {
        assert!((1.7..2.3).contains(&r), "{d:?}");
    }
}

#[test]
fn bitwise_reproducible() {
    let fx = fixture();
    let spec = ReactionSpec::logistic(N, 2.0 * fx.eig.lambda);
    let run = || evolve(&fx.op, &spec, &fx.eig.phi, 0.02, 1.0, &[0.5, 1.0]).unwrap();
    let (a, b) = (run(), run());
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 1 + 3 * N);
}

#[test]
fn classification_examples() {
    let fx = fixture();
    let spec = ReactionSpec::logistic(N, 2.0 * fx.eig.lambda);
    let u0: Vec<f64> = fx.eig.phi.iter().map(|p| 0.01 * p).collect();
    let r = longtime_classify(&fx.op, &spec, &u0, 0.05, 100.0, 1e-4).unwrap();
    assert_eq!(r.verdict, Verdict::ToPositiveSteady);
    let low = ReactionSpec::logistic(N, 0.5 * fx.eig.lambda);
    let r = longtime_classify_with(&fx.op, &low, &fx.eig.phi, 0.01, 100.0, 1e-4, None).unwrap();
    assert_eq!(r.verdict, Verdict::ToZero);
    let want = low.a - fx.eig.lambda;
    assert!((r.decay_slope.unwrap() - want).abs() <= 0.1 * want.abs());
    let r = longtime_classify_with(&fx.op, &low, &fx.eig.phi, 0.01, 0.5, 1e-4, None).unwrap();
    assert_eq!(r.verdict, Verdict::Undecided);
}

#[test]
fn linear_evolution_follows_eigenmode() {
    let fx = fixture();
    let a = 0.7;
    let run = evolve_linear(&fx.op, &vec![a; N], &fx.eig.phi, 0.001, 1.0, &[1.0]).unwrap();
    let want = ((a - fx.eig.lambda) * 1.0).exp();
    let got = run.snapshot(1.0).unwrap().u[N / 2];
    assert!((got - want).abs() < 2e-3 * want, "{got} vs {want}");
}
