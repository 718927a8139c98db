//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a summary.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use persist_core::certify::{
    certify_persistence, check_positive_persistence, check_uniform_closeness, CertifyConfig, ClosenessConfig,
    PositivityConfig, Step, Verdict,
};
use persist_core::expr::{BinOp, Func};
use persist_core::{builtin, differentiate, integrate, Ast, IntegratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn verdict(n: u32, what: &str, ok: bool, elapsed: Duration, limit: Option<Duration>, detail: &str) {
    let in_time = limit.is_none_or(|l| elapsed < l);
    let tag = if ok && in_time { "PASS" } else { "FAIL" };
    let budget = limit.map_or(String::new(), |l| format!(" (limit {:.0?})", l));
    println!("[{tag}] criterion {n}: {what}: {detail}; {:.3?}{budget}", elapsed);
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime limit: {elapsed:?}");
}

fn persist(args: &[&str]) -> (i32, Duration) {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_persist")).args(args).status().unwrap();
    (status.code().unwrap(), start.elapsed())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criterion_1_linear_nd_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, elapsed) = persist(&["continue", "--model", "builtin:linear_nd", "--eps-range", "0.2", "--out", out]);
    let rep = read_json(&dir.path().join("report.json"));
    let points = rep["branch"]["points"].as_array().unwrap();
    let mut max_err = 0.0f64;
    let mut index_ok = true;
    for p in points {
        let eps = p["eps"].as_f64().unwrap();
        let x: Vec<f64> = p["x_star"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        max_err = max_err.max((x[0] - eps).abs()).max((x[1] - eps / 2.0).abs());
        index_ok &= p["spectral"]["index"] == 2;
    }
    let ok = code == 0 && points.len() == 21 && max_err < 1e-10 && index_ok;
    verdict(
        1,
        "linear_nd continuation",
        ok,
        elapsed,
        Some(Duration::from_secs(1)),
        &format!("{} nodes, max error {max_err:.3e}, index 2 everywhere: {index_ok}", points.len()),
    );
}

#[test]
fn criterion_2_linear1d_certificate() {
    let start = Instant::now();
    let cert = certify_persistence(&builtin("linear1d").unwrap(), 0.2, &CertifyConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let t_eta = cert.t_eta.unwrap_or(f64::NAN);
    let t_exact = 100f64.ln();
    let hat = cert.eps_hat.unwrap_or(f64::NAN);
    let hat_exact = 0.1 / (1.0 - (-t_exact).exp());
    let resolution = cert.evidence.eps_hat_search.as_ref().map_or(0.0, |s| s.resolution);
    let eps_star = cert.eps_star.unwrap_or(0.0);
    let sweep = cert
        .evidence
        .nodes
        .iter()
        .filter(|n| n.eps.abs() <= eps_star)
        .map(|n| n.sweep_max_error.unwrap_or(f64::INFINITY).max((n.x_star[0] - n.eps).abs()))
        .fold(0.0, f64::max);
    let ok =
        cert.is_certified() && (t_eta - t_exact).abs() < 1e-3 && (hat - hat_exact).abs() <= resolution && sweep < 1e-6;
    verdict(
        2,
        "linear1d certificate",
        ok,
        elapsed,
        Some(Duration::from_secs(10)),
        &format!("T_eta {t_eta:.6}, eps_hat {hat:.6} (exact {hat_exact:.6}, resolution {resolution:.1e}), sweep error {sweep:.2e}"),
    );
}

#[test]
fn criterion_3_logistic_certificate() {
    let start = Instant::now();
    let cert = certify_persistence(&builtin("logistic").unwrap(), 0.2, &CertifyConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let eps_star = cert.eps_star.unwrap_or(0.0);
    let certified: Vec<_> = cert.evidence.nodes.iter().filter(|n| n.eps.abs() <= eps_star).collect();
    let max_err = certified.iter().map(|n| (n.x_star[0] - (1.0 - n.eps)).abs()).fold(0.0, f64::max);
    let contained = certified.iter().all(|n| n.attractor_in_eta_ball);
    let ok = cert.is_certified() && !certified.is_empty() && max_err < 1e-8 && contained;
    verdict(
        3,
        "logistic certificate",
        ok,
        elapsed,
        Some(Duration::from_secs(20)),
        &format!(
            "eps* {eps_star}, {} certified nodes, branch error {max_err:.2e}, attractors in eta-ball: {contained}",
            certified.len()
        ),
    );
}

#[test]
fn criterion_4_center_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, elapsed) = persist(&["certify", "--model", "builtin:center", "--eta", "0.2", "--out", out]);
    let rep = read_json(&dir.path().join("report.json"));
    let step_ok = rep["verdict"]["status"] == "refused" && rep["verdict"]["step"] == "hurwitz";
    let fields = ["x_star", "T_eta", "eps_hat", "eps1", "eps2", "eps3", "eps4", "eps_star", "r0"];
    let empty = fields.iter().all(|f| rep[*f].is_null()) && rep["r_eps_table"].as_array().is_some_and(|t| t.is_empty());
    let ok = code == 2 && step_ok && empty;
    verdict(
        4,
        "center refusal",
        ok,
        elapsed,
        Some(Duration::from_secs(1)),
        &format!("exit code {code}, verdict {}, certificate fields empty: {empty}", rep["verdict"]),
    );
}

#[test]
fn criterion_5_linear1d_closeness() {
    let start = Instant::now();
    let rep =
        check_uniform_closeness(&builtin("linear1d").unwrap(), 0.2, &[0.05], &ClosenessConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let sup = rep.per_eps[0].sup.unwrap_or(f64::NAN);
    let dominance = !rep.pairs.is_empty() && rep.pairs.iter().all(|p| p.dominance_holds) && rep.dominance_holds;
    let ok = rep.passed && (sup - 0.05).abs() < 1e-4 && dominance;
    verdict(
        5,
        "linear1d closeness",
        ok,
        elapsed,
        Some(Duration::from_secs(5)),
        &format!("sup {sup:.8} vs 0.05, dominance on {} pairs: {dominance}", rep.pairs.len()),
    );
}

#[test]
fn criterion_6_chemostat_positivity() {
    let start = Instant::now();
    let rep = check_positive_persistence(&builtin("chemostat").unwrap(), 0.1, &PositivityConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let zero = rep.per_eps.iter().find(|p| p.eps == 0.0).unwrap();
    let x = zero.x_star.as_deref().unwrap_or(&[f64::NAN, f64::NAN]);
    let err = ((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2)).sqrt();
    let positive = rep.per_eps.iter().all(|p| p.trajectories_positive && p.equilibrium_positive);
    let ok = rep.passed && err < 1e-8 && positive;
    verdict(
        6,
        "chemostat positivity",
        ok,
        elapsed,
        Some(Duration::from_secs(30)),
        &format!("x*(0) error {err:.2e}, {} grid eps all positive: {positive}", rep.per_eps.len()),
    );
}

#[test]
fn criterion_7_integrator_order() {
    let start = Instant::now();
    let sys = builtin("linear1d").unwrap();
    let hs = [0.1, 0.05, 0.025];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let traj = integrate(&sys, 0.3, &[2.0], 2.0, &IntegratorConfig::fixed(h)).unwrap();
            (traj.final_state()[0] - (0.3 + 1.7 * (-2.0f64).exp())).abs()
        })
        .collect();
    let slopes: Vec<f64> = (0..2).map(|k| (errs[k] / errs[k + 1]).ln() / 2f64.ln()).collect();
    let elapsed = start.elapsed();
    let ok = slopes.iter().all(|s| (4.5..=5.5).contains(s));
    verdict(7, "integrator order", ok, elapsed, Some(Duration::from_secs(1)), &format!("slopes {slopes:.3?}"));
}

/// Random expression that stays smooth on `[-1, 1]^3`.
fn random_ast(rng: &mut ChaCha8Rng, depth: u32) -> Ast {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..4) {
            0 => Ast::Const(rng.gen_range(1..20) as f64 / 4.0),
            k => Ast::Var(["x1", "x2", "eps"][k - 1].to_string()),
        };
    }
    let sub = |rng: &mut ChaCha8Rng| Box::new(random_ast(rng, depth - 1));
    let positive =
        |a: Box<Ast>| Box::new(Ast::Binary(BinOp::Add, Box::new(Ast::Const(1.5)), Box::new(Ast::Call(Func::Sin, a))));
    match rng.gen_range(0..9) {
        0 => Ast::Neg(sub(rng)),
        1 => Ast::Binary([BinOp::Add, BinOp::Sub, BinOp::Mul][rng.gen_range(0..3)], sub(rng), sub(rng)),
        2 => Ast::Binary(BinOp::Div, sub(rng), positive(sub(rng))),
        3 => Ast::Binary(BinOp::Pow, sub(rng), Box::new(Ast::Const(rng.gen_range(1..4) as f64))),
        4 => Ast::Binary(BinOp::Pow, positive(sub(rng)), Box::new(Ast::Call(Func::Sin, sub(rng)))),
        5 => Ast::Call(Func::Ln, positive(sub(rng))),
        6 => Ast::Call(Func::Sqrt, positive(sub(rng))),
        7 => Ast::Call([Func::Sin, Func::Cos, Func::Tanh][rng.gen_range(0..3)], sub(rng)),
        _ => Ast::Call(Func::Exp, Box::new(Ast::Call(Func::Sin, sub(rng)))),
    }
}

#[test]
fn criterion_8_symbolic_derivatives() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let names = ["x1", "x2", "eps"];
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..200 {
        let ast = random_ast(&mut rng, 4);
        let which = rng.gen_range(0..3);
        let p: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let at = |q: &[f64; 3]| ast.eval(&[("x1", q[0]), ("x2", q[1]), ("eps", q[2])]).unwrap();
        let exact = differentiate(&ast, names[which]).eval(&[("x1", p[0]), ("x2", p[1]), ("eps", p[2])]).unwrap();
        let h = f64::EPSILON.cbrt() * (p[which].abs() + 1.0);
        let (mut up, mut down) = (p, p);
        up[which] += h;
        down[which] -= h;
        let fd = (at(&up) - at(&down)) / (2.0 * h);
        let rel = (exact - fd).abs() / exact.abs().max(1.0);
        worst = worst.max(rel);
        if !(rel <= 1e-6) {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        8,
        "symbolic derivatives",
        failures == 0,
        elapsed,
        Some(Duration::from_secs(5)),
        &format!("200 random trees, {failures} failures, worst relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_9_certify_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let start = Instant::now();
    let (c1, _) =
        persist(&["certify", "--model", "builtin:logistic", "--eta", "0.2", "--out", a.path().to_str().unwrap()]);
    let (c2, _) =
        persist(&["certify", "--model", "builtin:logistic", "--eta", "0.2", "--out", b.path().to_str().unwrap()]);
    let elapsed = start.elapsed();
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    let ok = c1 == 0 && c2 == 0 && ra == rb;
    verdict(
        9,
        "certify determinism",
        ok,
        elapsed,
        None,
        &format!("exit codes {c1}/{c2}, {} bytes, identical: {}", ra.len(), ra == rb),
    );
}

#[test]
fn refusal_step_is_reported_in_library_form() {
    let cert = certify_persistence(&builtin("center").unwrap(), 0.2, &CertifyConfig::default()).unwrap();
    assert!(matches!(cert.verdict, Verdict::Refused { step: Step::Hurwitz, .. }));
}
