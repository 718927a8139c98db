use persist_core::certify::{
    certify_persistence, check_attractor_containment, check_positive_persistence, check_uniform_closeness,
    estimate_basin_radius, estimate_eps_hat, estimate_t_eta, BasinConfig, CertifyConfig, ClosenessConfig,
    PersistenceCertificate, PositivityConfig, Step, Verdict,
};
use persist_core::geom::distance;
use persist_core::models::BUILTIN_NAMES;
use persist_core::report::to_json;
use persist_core::sampling::SamplingConfig;
use persist_core::spectral::newton_equilibrium;
use persist_core::{builtin, IntegratorConfig};
use proptest::prelude::*;

fn certify(name: &str, eta: f64) -> PersistenceCertificate {
    certify_persistence(&builtin(name).unwrap(), eta, &CertifyConfig::default()).unwrap()
}

/// Checks every certificate invariant that can be read off the document.
fn assert_consistent(cert: &PersistenceCertificate) {
    if !cert.is_certified() {
        assert!(cert.eps_star.is_none() && cert.eps_hat.is_none() && cert.r0.is_none());
        assert!(cert.r_eps_table.is_empty());
        return;
    }
    let eps_star = cert.eps_star.unwrap();
    assert!(eps_star > 0.0);
    for bound in [cert.evidence.eps0, cert.eps1.unwrap(), cert.eps2.unwrap(), cert.eps3.unwrap(), cert.eps4.unwrap()] {
        assert!(eps_star <= bound);
    }
    assert!(cert.evidence.steps.iter().all(|s| s.passed));
    let x_star = cert.x_star.as_ref().unwrap();
    let r0 = cert.r0.unwrap();
    let branch = cert.branch.as_ref().unwrap();
    for node in cert.evidence.nodes.iter().filter(|n| n.eps.abs() <= eps_star) {
        // Containment chain: cloud in B(x*, r0), B(x*, r0) in B(x*(eps), r_eps).
        let attr = cert.attractors.iter().find(|a| a.eps == node.eps).unwrap();
        assert!(check_attractor_containment(attr, x_star, r0));
        assert!(node.shift + r0 <= node.basin.r_eps);
        assert!(node.attractor_in_eta_ball);
        // Final sweep against the spectral branch node.
        assert_eq!(branch.point(node.eps).unwrap().x_star, node.x_star);
        assert!(node.sweep_max_error.unwrap() <= cert.evidence.config.sweep_tolerance);
        assert!(node.absorption_t0.is_some());
    }
}

#[test]
fn logistic_certificate_matches_branch_closed_form() {
    let cert = certify("logistic", 0.2);
    assert!(cert.is_certified(), "{:?}", cert.verdict);
    assert_consistent(&cert);
    let t_eta = cert.t_eta.unwrap();
    assert!((t_eta - 81f64.ln()).abs() < 1e-3, "{t_eta}");
    let eps_star = cert.eps_star.unwrap();
    for node in cert.evidence.nodes.iter().filter(|n| n.eps.abs() <= eps_star) {
        assert!((node.x_star[0] - (1.0 - node.eps)).abs() < 1e-8);
    }
}

#[test]
fn linear1d_certificate_bounds() {
    let cert = certify("linear1d", 0.2);
    assert!(cert.is_certified());
    assert_consistent(&cert);
    let exact = 0.1 / (1.0 - (-(100f64.ln())).exp());
    let search = cert.evidence.eps_hat_search.as_ref().unwrap();
    assert!((cert.eps_hat.unwrap() - exact).abs() <= search.resolution);
    assert!(search.scan_monotone);
    // Linear fields: r_eps is the whole distance to the working-box boundary.
    for r in &cert.r_eps_table {
        assert!((r.r_eps - (10.0 - r.eps.abs())).abs() < 1e-12);
    }
}

#[test]
fn every_builtin_yields_a_consistent_document() {
    for name in BUILTIN_NAMES {
        let cert = certify(name, 0.2);
        assert_consistent(&cert);
        if name == "center" {
            assert!(matches!(cert.verdict, Verdict::Refused { step: Step::Hurwitz, .. }));
        }
        let text = to_json(&cert).unwrap();
        let back: PersistenceCertificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back.eps_star, cert.eps_star);
        assert_eq!(back.evidence, cert.evidence);
    }
}

#[test]
fn certificate_is_independent_of_scheduling() {
    let a = to_json(&certify("gradient2d", 0.2)).unwrap();
    let b = to_json(&certify("gradient2d", 0.2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eps_hat_is_monotone_in_eta() {
    let s = SamplingConfig::default();
    let integ = IntegratorConfig::default();
    for name in ["linear1d", "linear_nd", "logistic", "gradient2d", "chemostat"] {
        let sys = builtin(name).unwrap();
        let x_star = newton_equilibrium(&sys, 0.0, &sys.equilibrium_guess(), 1e-12, 50).unwrap().x;
        let mut prev = 0.0;
        for eta in [0.1, 0.2, 0.4] {
            let t = estimate_t_eta(&sys, &x_star, eta, 200.0, &s, &integ).unwrap();
            let hat = estimate_eps_hat(&sys, eta, t, &s, &integ, 1e-3).unwrap();
            assert!(hat.eps_hat >= prev, "{name}: eta {eta} gives {} < {prev}", hat.eps_hat);
            prev = hat.eps_hat;
        }
    }
}

#[test]
fn logistic_eps_hat_scan_is_monotone() {
    let sys = builtin("logistic").unwrap();
    let s = SamplingConfig::default();
    let integ = IntegratorConfig::default();
    let t = estimate_t_eta(&sys, &[1.0], 0.2, 200.0, &s, &integ).unwrap();
    let hat = estimate_eps_hat(&sys, 0.2, t, &s, &integ, 1e-3).unwrap();
    assert!(hat.eps_hat > 0.0);
    assert!(hat.scan_monotone, "{:?}", hat.scan);
    assert_eq!(hat.scan.len(), 10);
}

#[test]
fn logistic_closeness_is_stable_under_refinement() {
    let sys = builtin("logistic").unwrap();
    let coarse = check_uniform_closeness(&sys, 0.2, &[0.05], &ClosenessConfig::default()).unwrap();
    let fine = ClosenessConfig { time_grid_intervals: 4000, ..ClosenessConfig::default() };
    let fine = check_uniform_closeness(&sys, 0.2, &[0.05], &fine).unwrap();
    assert!(coarse.passed && fine.passed);
    assert!(coarse.dominance_holds && fine.dominance_holds);
    let (a, b) = (coarse.per_eps[0].sup.unwrap(), fine.per_eps[0].sup.unwrap());
    assert!(a < 0.2);
    assert!((a - b).abs() / b < 0.05, "{a} vs {b}");
}

#[test]
fn closeness_zero_eps_is_trivial() {
    let rep =
        check_uniform_closeness(&builtin("gradient2d").unwrap(), 0.3, &[0.0], &ClosenessConfig::default()).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.per_eps[0].sup, Some(0.0));
}

#[test]
fn chemostat_positivity_and_monod_break_even() {
    let sys = builtin("chemostat").unwrap();
    let rep = check_positive_persistence(&sys, 0.1, &PositivityConfig::default()).unwrap();
    assert!(rep.passed);
    // Break-even substrate: m s / (a + s) = D + eps, biomass s_in - s at eps = 0.
    let branch = rep.branch.as_ref().unwrap();
    let p0 = branch.at_zero();
    assert!(distance(&p0.x_star, &[1.0, 1.0]) < 1e-8);
    for p in &branch.points {
        let s = (1.0 + p.eps) / (2.0 - (1.0 + p.eps));
        assert!((p.x_star[0] - s).abs() < 1e-9, "{} {:?}", p.eps, p.x_star);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn basin_radius_never_exceeds_r_max(r_max in 0.05f64..3.0, eps in -0.4f64..0.4) {
        let sys = builtin("logistic").unwrap();
        let x = [1.0 - eps];
        let b = estimate_basin_radius(&sys, eps, &x, r_max, &BasinConfig::default(), &IntegratorConfig::default()).unwrap();
        prop_assert!(b.r_eps <= r_max);
        prop_assert!(b.r_eps <= b.r_max);
        prop_assert!(b.r_max <= sys.working().distance_to_boundary(&x) + 1e-15);
    }
}
