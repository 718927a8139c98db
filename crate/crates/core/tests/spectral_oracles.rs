use nalgebra::DMatrix;
use persist_core::builtin;
use persist_core::models::{BoxRegion, DomainSpec};
use persist_core::spectral::{
    classify, continue_equilibrium, eigenvalues, jacobian_growth_bound, newton_equilibrium, symmetric_grid,
    ContinuationConfig, Eigenvalue, SpectralError,
};
use persist_core::SystemDef;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Characteristic polynomial coefficients (leading 1) by Faddeev–LeVerrier.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * coeffs[k - 1];
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// All complex roots of a monic polynomial by Durand–Kerner iteration.
fn roots(coeffs: &[f64]) -> Vec<(f64, f64)> {
    type C = (f64, f64);
    let mul = |a: C, b: C| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let sub = |a: C, b: C| (a.0 - b.0, a.1 - b.1);
    let div = |a: C, b: C| {
        let d = b.0 * b.0 + b.1 * b.1;
        ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
    };
    let n = coeffs.len() - 1;
    let eval = |z: C| {
        coeffs.iter().fold((0.0, 0.0), |acc, &c| {
            let p = mul(acc, z);
            (p.0 + c, p.1)
        })
    };
    let mut z: Vec<C> = (0..n)
        .map(|k| {
            mul((1.0, 0.0), {
                let mut p = (1.0, 0.0);
                for _ in 0..k {
                    p = mul(p, (0.4, 0.9));
                }
                p
            })
        })
        .collect();
    for _ in 0..2000 {
        for i in 0..n {
            let mut den = (1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den = mul(den, sub(z[i], z[j]));
                }
            }
            z[i] = sub(z[i], div(eval(z[i]), den));
        }
    }
    // Polish each root with Newton on the polynomial.
    for zi in z.iter_mut() {
        for _ in 0..5 {
            let (mut p, mut dp) = ((0.0, 0.0), (0.0, 0.0));
            for &c in coeffs {
                dp = (mul(dp, *zi).0 + p.0, mul(dp, *zi).1 + p.1);
                p = (mul(p, *zi).0 + c, mul(p, *zi).1);
            }
            if dp.0 != 0.0 || dp.1 != 0.0 {
                *zi = sub(*zi, div(p, dp));
            }
        }
    }
    z.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    z
}

fn assert_matches(ev: &[Eigenvalue], oracle: &[(f64, f64)], tol: f64) {
    assert_eq!(ev.len(), oracle.len());
    // Match greedily: each oracle root to the nearest unused eigenvalue.
    let mut used = vec![false; ev.len()];
    for &(re, im) in oracle {
        let (k, d) = ev
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, e)| (k, ((e.re - re).powi(2) + (e.im - im).powi(2)).sqrt()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        used[k] = true;
        assert!(d < tol, "root ({re}, {im}) off by {d}: {ev:?}");
    }
}

#[test]
fn random_symmetric_matrices_match_characteristic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let b = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-2.0..2.0));
        let a = (&b + b.transpose()) * 0.5;
        let ev = eigenvalues(&a).unwrap();
        assert!(ev.iter().all(|e| e.im == 0.0));
        let oracle = roots(&char_poly(&a));
        assert_matches(&ev, &oracle, 1e-8);
    }
}

#[test]
fn random_general_matrices_match_characteristic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [3, 4, 5, 6] {
        for _ in 0..10 {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let ev = eigenvalues(&a).unwrap();
            // Conjugate pairs come out exactly conjugate.
            for e in ev.iter().filter(|e| e.im != 0.0) {
                assert!(ev.iter().any(|f| f.re == e.re && f.im == -e.im));
            }
            assert_matches(&ev, &roots(&char_poly(&a)), 1e-7);
            // Trace invariant.
            let tr: f64 = ev.iter().map(|e| e.re).sum();
            assert!((tr - a.trace()).abs() < 1e-10);
        }
    }
}

#[test]
fn classify_of_rotation_and_saddle() {
    let rot = DMatrix::from_row_slice(2, 2, &[-0.1, 1.0, -1.0, -0.1]);
    let s = classify(&rot, 1e-9).unwrap();
    assert!(s.hurwitz && s.hyperbolic);
    assert!((s.spectral_abscissa + 0.1).abs() < 1e-14);
    let saddle = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, -3.0]);
    let s = classify(&saddle, 1e-9).unwrap();
    assert_eq!(s.index, 2);
    assert!(s.hyperbolic && !s.hurwitz);
}

#[test]
fn linear_nd_branch_matches_closed_form() {
    let sys = builtin("linear_nd").unwrap();
    let branch = continue_equilibrium(&sys, 0.2, 21, &ContinuationConfig::default()).unwrap();
    assert_eq!(branch.points.len(), 21);
    for p in &branch.points {
        assert!((p.x_star[0] - p.eps).abs() < 1e-10 && (p.x_star[1] - p.eps / 2.0).abs() < 1e-10);
        assert_eq!(p.spectral.index, 2);
    }
    assert_eq!(branch.eps1(), 0.2);
    assert_eq!(branch.eps2(), 0.2);
    assert_eq!(jacobian_growth_bound(&branch), 0.0);
}

/// `x1 + x1^3 = eps` by bisection.
fn cubic_root(eps: f64) -> f64 {
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + mid.powi(3) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn gradient2d_branch_against_bisection_and_growth_bound_stability() {
    let sys = builtin("gradient2d").unwrap();
    let coarse = continue_equilibrium(&sys, 0.5, 21, &ContinuationConfig::default()).unwrap();
    for p in &coarse.points {
        let x1 = cubic_root(p.eps);
        assert!((p.x_star[0] - x1).abs() < 1e-10);
        assert!((p.x_star[1] - p.eps * x1 / 2.0).abs() < 1e-10);
    }
    let fine = continue_equilibrium(&sys, 0.5, 41, &ContinuationConfig::default()).unwrap();
    let (c1, c2) = (jacobian_growth_bound(&coarse), jacobian_growth_bound(&fine));
    assert!(c1 > 0.0);
    assert!((c1 - c2).abs() / c1 < 0.1, "{c1} vs {c2}");
}

#[test]
fn grid_is_symmetric_and_contains_zero() {
    for nodes in [3, 5, 21, 41] {
        let g = symmetric_grid(0.37, nodes);
        assert_eq!(g.len(), nodes);
        assert_eq!(g[nodes / 2], 0.0);
        assert_eq!(g[0], -0.37);
        assert_eq!(g[nodes - 1], 0.37);
        for k in 0..nodes {
            assert_eq!(g[k], -g[nodes - 1 - k]);
        }
    }
}

#[test]
fn continuation_stops_at_a_fold() {
    let b = BoxRegion::cube(1, -5.0, 5.0);
    let sys = SystemDef::from_sources(
        "fold",
        &["eps - x1^2 + 0.25"],
        0.5,
        DomainSpec::boxed(b.clone(), b),
        Default::default(),
        Some(vec![0.5]),
    )
    .unwrap();
    // Stable branch x = sqrt(0.25 + eps) folds at eps = -0.25.
    let branch = continue_equilibrium(&sys, 0.5, 21, &ContinuationConfig::default()).unwrap();
    assert!(branch.negative.stop.is_some());
    assert!(branch.eps1() <= 0.25 + 1e-12 && branch.eps1() >= 0.2 - 1e-12, "{}", branch.eps1());
    assert_eq!(branch.positive.reached, 0.5);
    for p in &branch.points {
        if p.eps == -0.25 {
            // Double root: Newton converges linearly and stops on the residual.
            assert!(p.newton_residual < 1e-10 && p.x_star[0].abs() < 1e-4);
        } else {
            assert!((p.x_star[0] - (0.25 + p.eps).sqrt()).abs() < 1e-9, "{}", p.eps);
        }
    }
}

#[test]
fn newton_refuses_singular_jacobian() {
    let b = BoxRegion::cube(1, -5.0, 5.0);
    let sys = SystemDef::from_sources(
        "cubic",
        &["-x1^3 + eps"],
        0.5,
        DomainSpec::boxed(b.clone(), b),
        Default::default(),
        None,
    )
    .unwrap();
    assert!(matches!(newton_equilibrium(&sys, 0.0, &[0.0], 1e-10, 50), Ok(_) | Err(SpectralError::Singular { .. })));
    let center = builtin("center").unwrap();
    assert!(matches!(
        continue_equilibrium(&center, 0.5, 21, &ContinuationConfig::default()),
        Err(SpectralError::NotHyperbolic { .. })
    ));
}
