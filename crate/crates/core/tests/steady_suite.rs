use nonlocal_core::steady::{harvest_subsolution, residual, solve_logistic_with};
use nonlocal_core::*;
use std::sync::OnceLock;

const N: usize = 199;

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

fn opts() -> SteadyOptions {
    SteadyOptions {
        tol: 1e-10,
        ..SteadyOptions::default()
    }
}

fn logistic(fac: f64) -> ReactionSpec {
    ReactionSpec::logistic(N, fac * fixture().eig.lambda)
}

fn sup_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

#[test]
fn no_positive_solution_up_to_lambda1() {
    let fx = fixture();
    for fac in [0.5, 1.0] {
        let s = solve_logistic(&fx.op, &logistic(fac), opts()).unwrap();
        assert_eq!(s.branch, Branch::None);
        assert!(s.u.iter().all(|&x| x == 0.0));
        assert_eq!(s.iterations, 0);
    }
    assert!(solve_logistic(&fx.op, &logistic(2.0).with_c(0.1), opts()).is_err());
}

#[test]
fn logistic_from_constant_supersolution() {
    let fx = fixture();
    let spec = logistic(2.0);
    let s = solve_logistic(&fx.op, &spec, opts()).unwrap();
    assert_eq!(s.branch, Branch::Logistic);
    assert!(s.u.iter().all(|&x| x > 0.0 && x <= spec.a));
    assert!(s.residual <= 1e-8);
    assert!(s.log.windows(2).all(|w| w[1].1 <= w[0].1 * 1.5));
}

#[test]
fn monotone_iteration_from_above_stays_bracketed() {
    let fx = fixture();
    let spec = logistic(2.0);
    let hi = vec![spec.a; N];
    let lo = vec![0.0; N];
    let s = monotone_iterate(
        &fx.op,
        &spec,
        &lo,
        &hi,
        spec.theta(spec.a),
        Direction::FromAbove,
        opts(),
    )
    .unwrap();
    assert!(s.u.iter().all(|&x| x >= 0.0 && x <= spec.a));
    assert!(s.residual <= 1e-8);
    // θ below the Lipschitz bound is refused, as is a nonsubsolution lower bound.
    assert!(monotone_iterate(&fx.op, &spec, &lo, &hi, 0.1, Direction::FromAbove, opts()).is_err());
    let bad_lo = vec![spec.a * 0.999; N];
    assert!(matches!(
        monotone_iterate(
            &fx.op,
            &spec,
            &bad_lo,
            &hi,
            spec.theta(spec.a),
            Direction::FromAbove,
            opts()
        ),
        Err(Error::Construction(_))
    ));
}

#[test]
fn logistic_increasing_in_a_and_stable() {
    let fx = fixture();
    let mut prev: Option<Vec<f64>> = None;
    for fac in [1.5, 2.0, 3.0] {
        let spec = logistic(fac);
        let s = solve_logistic(&fx.op, &spec, opts()).unwrap();
        assert!(s.u.iter().all(|&x| x > 0.0));
        assert!(s.sup_norm() <= spec.apriori_bound());
        let st = stability_index(&fx.op, &spec, &s.u).unwrap();
        assert!(st.stable && st.lambda_star > 0.0);
        if let Some(p) = prev {
            assert!(p.iter().zip(&s.u).all(|(a, b)| a <= b));
        }
        prev = Some(s.u);
    }
}

#[test]
fn stability_index_shifts() {
    let fx = fixture();
    let spec = logistic(3.0);
    let at_zero = stability_index(&fx.op, &spec, &vec![0.0; N]).unwrap();
    assert!((at_zero.lambda_star - (fx.eig.lambda - spec.a)).abs() < 1e-9);
    // b = γ/2 and f = b s² make f_s = γ at s = 1.
    let gamma = 0.8;
    let mut flat = spec.clone();
    flat.f.b = vec![gamma / 2.0; N];
    let st = stability_index(&fx.op, &flat, &vec![1.0; N]).unwrap();
    assert!((st.lambda_star - (fx.eig.lambda - spec.a + gamma)).abs() < 1e-9);
}

#[test]
fn maximal_branch_in_the_subsolution_regime() {
    let fx = fixture();
    let spec = logistic(1.05);
    let va = solve_logistic(&fx.op, &spec, opts()).unwrap();
    let sub = harvest_subsolution(&fx.op, &spec, &fx.eig).unwrap();
    assert!(sub.beta > fx.eig.lambda / spec.a && sub.beta < 1.0);
    assert!(sub.c1 > 0.0);
    assert!(sub.subsolution_defect(&fx.op, &spec, sub.c1).unwrap() <= 1e-12);
    let same = maximal_harvest_from(&fx.op, &spec, &va.u, opts()).unwrap();
    assert!(sup_dist(&same.u, &va.u) <= opts().tol);
    let mut last = None;
    for frac in [0.5, 0.1, 0.05, 0.01] {
        let c = frac * sub.c1;
        let u1 = maximal_harvest_from(&fx.op, &spec.with_c(c), &va.u, opts()).unwrap();
        assert_eq!(u1.branch, Branch::Maximal);
        assert!(u1.residual <= 1e-8);
        for i in 0..N {
            assert!(
                u1.u[i] >= sub.lower[i] && u1.u[i] <= va.u[i],
                "c = {c}, node {i}"
            );
        }
        let d = sup_dist(&u1.u, &va.u);
        if let Some(prev) = last {
            assert!(d < prev);
        }
        last = Some(d);
    }
}

#[test]
fn small_branch_below_maximal_and_vanishing() {
    let fx = fixture();
    let spec = logistic(1.05);
    let va = solve_logistic(&fx.op, &spec, opts()).unwrap();
    let zero = small_branch(&fx.op, &spec.with_c(0.0), opts()).unwrap();
    assert!(zero.u.iter().all(|&x| x == 0.0));
    let cs = [1e-5, 2e-5, 5e-5, 1e-4, 2e-4];
    let path = small_branch_path(&fx.op, &spec, &cs, opts()).unwrap();
    let norms: Vec<f64> = path.iter().map(|s| s.sup_norm()).collect();
    assert!(norms.windows(2).all(|w| w[0] < w[1]), "{norms:?}");
    assert!(norms[0] < 0.02 * va.sup_norm());
    for (s, &c) in path.iter().zip(&cs) {
        assert_eq!(s.branch, Branch::Small);
        let u1 = maximal_harvest_from(&fx.op, &spec.with_c(c), &va.u, opts()).unwrap();
        assert!(s.u.iter().zip(&u1.u).all(|(a, b)| a <= b));
        assert!(sup_dist(&s.u, &u1.u) > 1e-3);
        assert!(residual(&fx.op, &spec.with_c(c), &s.u).unwrap() <= 1e-10);
    }
}

#[test]
fn comparison_between_reaction_data() {
    let fx = fixture();
    let spec = logistic(2.0);
    let va = solve_logistic(&fx.op, &spec, opts()).unwrap();
    let weak = maximal_harvest_from(&fx.op, &spec.with_c(0.05), &va.u, opts()).unwrap();
    let strong = maximal_harvest_from(&fx.op, &spec.with_c(0.1), &va.u, opts()).unwrap();
    assert!(strong.u.iter().zip(&weak.u).all(|(s, w)| s <= w));
    assert!(weak.u.iter().zip(&va.u).all(|(w, v)| *w > 0.0 && w <= v));
}

#[test]
fn scan_bracket_contract() {
    let fx = fixture();
    let spec = logistic(2.0);
    let va = solve_logistic(&fx.op, &spec, opts()).unwrap();
    let scan = scan_cstar(&fx.op, &spec, &va.u, 1.0, 1e-3, 8, opts()).unwrap();
    assert!(scan.c_fail - scan.c_exist <= 1e-3 * scan.c_exist);
    assert!(scan.samples.windows(2).all(|w| w[0].c < w[1].c));
    let first_none = scan.samples.iter().position(|s| !s.exists).unwrap();
    assert!(scan.samples[..first_none].iter().all(|s| s.exists));
    assert!(scan.samples[first_none..].iter().all(|s| !s.exists));
    let at = |c: f64| maximal_harvest_from(&fx.op, &spec.with_c(c), &va.u, opts()).unwrap();
    assert_eq!(at(scan.c_exist).branch, Branch::Maximal);
    assert_eq!(at(scan.c_fail).branch, Branch::None);
    assert_eq!(at(2.0 * scan.c_star).branch, Branch::None);
    for s in scan.samples.iter().filter(|s| s.exists) {
        assert!(s.u1_sup <= spec.apriori_bound());
    }
    assert!(scan_cstar(&fx.op, &spec, &va.u, 0.1, 1e-3, 8, opts()).is_err());
}

#[test]
fn c11_certificate() {
    let fx = fixture();
    let spec = logistic(3.0);
    let va = solve_logistic(&fx.op, &spec, opts()).unwrap();
    assert!(check_c11(&va.u, &spec, fx.eig.lambda));
    let mut dip = va.u.clone();
    dip[0] = 1e-6;
    assert!(!check_c11(&dip, &spec.with_c(1e-3), fx.eig.lambda));
}

#[test]
fn zero_extension_structure() {
    let spec = logistic(2.0);
    assert!(spec.check_structure().crowding_ok());
    assert_eq!(spec.f(0, -1.0), 0.0);
    assert!((spec.apriori_bound() - spec.a).abs() < 1e-14);
}

#[test]
fn random_starts_find_only_the_two_branches() {
    let fx = fixture();
    let spec = logistic(1.05);
    let va = solve_logistic(&fx.op, &spec, opts()).unwrap();
    let c = 2e-4;
    let u1 = maximal_harvest_from(&fx.op, &spec.with_c(c), &va.u, opts()).unwrap();
    let u2 = small_branch(&fx.op, &spec.with_c(c), opts()).unwrap();
    let r = multistart(&fx.op, &spec.with_c(c), &va.u, &u1.u, &u2.u, 12, 99, opts()).unwrap();
    assert!(r.converged > 0);
    assert_eq!(r.other, 0, "{r:?}");
    assert_eq!(r.near_maximal + r.near_small, r.converged);
}

#[test]
fn fixed_shift_policy() {
    let fx = fixture();
    let spec = logistic(2.0);
    let auto = solve_logistic_with(&fx.op, &spec, &fx.eig, opts()).unwrap();
    let wide = SteadyOptions {
        theta: Some(2.0 * spec.theta(spec.apriori_bound())),
        ..opts()
    };
    let fixed = solve_logistic_with(&fx.op, &spec, &fx.eig, wide).unwrap();
    let d = auto
        .u
        .iter()
        .zip(&fixed.u)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(d <= 10.0 * opts().tol, "{d}");
    assert!(fixed.iterations > auto.iterations);
    let narrow = SteadyOptions {
        theta: Some(0.1),
        ..opts()
    };
    assert!(matches!(
        solve_logistic_with(&fx.op, &spec, &fx.eig, narrow),
        Err(Error::Config(_))
    ));
}
