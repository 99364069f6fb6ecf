//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vng_core::certify::{
    check_equivalences, corrupt, extract_dual, supermartingale_check, verify_rapid, Corruption, DualPath, CERT_TOL,
};
use vng_core::generate::{binary, chain, kelly, random_problem, GeneratorLimits};
use vng_core::market::{c1_closed_form, h_closed_form, section_minimum, SectionMethod, SectionTarget};
use vng_core::objective::{check_psi_class, PenaltyNorm, TerminalObjective};
use vng_core::sampling::{random_pair, random_path};
use vng_core::solver::{kkt_report, solve_log_optimal, PathProblem, SolveOptions, Solution};
use vng_core::vecops::norm1;

type Outcome = Result<String, String>;

fn solved(p: &PathProblem) -> Result<(Solution, DualPath), String> {
    let s = solve_log_optimal(p, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let d = extract_dual(p, &s).map_err(|e| e.to_string())?;
    Ok((s, d))
}

fn random(seed: u64) -> Result<PathProblem, String> {
    random_problem(seed, &GeneratorLimits::default()).map_err(|e| format!("seed {seed}: {e}"))
}

fn random_instances() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let p = random(seed)?;
        let (s, d) = solved(&p).map_err(|e| format!("seed {seed}: {e}"))?;
        let kkt = kkt_report(&p, &s).map_err(|e| e.to_string())?;
        let cert = verify_rapid(&s.path, &d, &p.tree, &p.market, CERT_TOL).map_err(|e| e.to_string())?;
        let r = [
            kkt.primal,
            kkt.stationarity,
            kkt.complementarity,
            kkt.dual_sign,
            cert.max_feasibility(),
            cert.max_normalization(),
            cert.max_dual_cone(),
            cert.max_transition(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worst = worst.max(r);
        if !cert.certified() || r > 1e-6 {
            return Err(format!("seed {seed}: {:?}, largest residual {r:.2e}", cert.verdict));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs > 60.0 {
        return Err(format!("50 instances took {secs:.1} s"));
    }
    Ok(format!("50/50 certified, largest residual {worst:.2e}, {secs:.2} s"))
}

fn kelly_oracle() -> Outcome {
    let start = Instant::now();
    let p = kelly();
    let (s, _) = solved(&p)?;
    let secs = start.elapsed().as_secs_f64();
    let x = s.path[1].get(0);
    let f = x[1] / (x[0] + x[1]);
    let g = |f: f64| 0.5 * (1.0 + 0.4 * f).ln() + 0.5 * (1.0 - 0.3 * f).ln();
    let (arg, best) = (0..=200_000)
        .map(|k| k as f64 / 200_000.0)
        .map(|f| (f, g(f)))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let (df, dv) = ((f - arg).abs(), (s.objective - best).abs());
    let msg = format!("fraction {f:.6} (grid {arg:.6}), |ΔF| {dv:.1e}, {secs:.3} s");
    if df <= 1e-4 && dv <= 1e-6 && secs <= 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn normalization() -> Outcome {
    let mut worst = 0.0f64;
    let mut problems = vec![kelly(), chain(3, 2), binary(3, 2, 0.02, 1.6)];
    for seed in 0..10 {
        problems.push(random(seed)?);
    }
    for p in &problems {
        let (s, d) = solved(p)?;
        let cert = verify_rapid(&s.path, &d, &p.tree, &p.market, CERT_TOL).map_err(|e| e.to_string())?;
        worst = worst.max(cert.max_normalization());
    }
    let msg = format!("max |p_(t+1)·x_t − 1| = {worst:.2e} over {} problems", problems.len());
    if worst <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Runs `f` on the supermartingale report of 200 random competitors for a
/// few problems; returns the largest value it yields.
fn over_competitors(f: impl Fn(&vng_core::certify::SupermartingaleReport) -> f64) -> Result<f64, String> {
    let mut worst = f64::NEG_INFINITY;
    for (k, p) in [binary(3, 2, 0.02, 1.6), kelly(), random(21)?].iter().enumerate() {
        let (s, d) = solved(p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        for _ in 0..200 {
            let y = random_path(&mut rng, &p.tree, &p.market, &p.constants, &p.x0, Some(&s.path))
                .map_err(|e| e.to_string())?;
            let r = supermartingale_check(&d, &y, &p.tree).map_err(|e| e.to_string())?;
            worst = worst.max(f(&r));
        }
    }
    Ok(worst)
}

fn dominance() -> Outcome {
    let worst = over_competitors(|r| r.unconditional.iter().copied().fold(f64::NEG_INFINITY, f64::max))?;
    let msg = format!("max (E p_(t+1)y_t − E p_t y_(t−1)) = {worst:.2e} over 600 competitors");
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn supermartingale() -> Outcome {
    let worst = over_competitors(|r| r.conditional.max(r.tower))?;
    let mut own = 0.0f64;
    for p in [binary(3, 2, 0.02, 1.6), kelly(), chain(3, 2)] {
        let (s, d) = solved(&p)?;
        own = own.max(supermartingale_check(&d, &s.path, &p.tree).map_err(|e| e.to_string())?.max_abs);
    }
    let msg = format!("competitors {worst:.2e}, rapid path deviation {own:.2e}");
    if worst <= 1e-8 && own <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn equivalences() -> Outcome {
    let (mut runs, mut silent, mut missed) = (0, 0, 0);
    for seed in 0..20 {
        let p = random(seed)?;
        let (s, d) = solved(&p)?;
        for t in 1..=p.tree.horizon() {
            let eq = |dual: &DualPath, n: usize| {
                check_equivalences(&p.tree, &p.market, &p.constants, &s.path, dual, t, n, seed, CERT_TOL)
                    .map_err(|e| e.to_string())
            };
            let r = eq(&d, 200)?;
            runs += 1;
            if !r.agree || !r.nodewise.pass {
                silent += 1;
            }
            for mode in Corruption::ALL {
                let r = eq(&corrupt(&d, &p.tree, &s.path, t, mode), 200)?;
                runs += 1;
                if !r.agree {
                    silent += 1;
                }
                if r.nodewise.pass {
                    missed += 1;
                }
            }
        }
    }
    let msg = format!("{runs} runs, {silent} silent disagreements, {missed} undetected corruptions");
    if silent == 0 && missed == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn constants() -> Outcome {
    let mut worst = 0.0f64;
    for m in [2, 3] {
        for (mu, nu) in [(1.5, 1.27), (2.0, 1.0), (3.0, 2.0), (1.2, 1.1)] {
            let sec = |target| section_minimum(mu, m, target, SectionMethod::Grid).map_err(|e| e.to_string());
            let c1 = sec(SectionTarget::Growth { nu })?;
            let h = 1.0 / sec(SectionTarget::Sum)?;
            worst = worst
                .max((c1 - c1_closed_form(mu, nu, m)).abs())
                .max((h - h_closed_form(mu, m)).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut samples, mut bad, mut seed) = (0, 0, 0);
    while samples < 10_000 {
        let p = random(1000 + seed)?;
        seed += 1;
        for t in 1..=p.tree.horizon() {
            for _ in 0..20 {
                let (x, y) = random_pair(&mut rng, &p.tree, &p.market, &p.constants, t).map_err(|e| e.to_string())?;
                for (a, b) in x.rows().zip(y.rows()) {
                    samples += 1;
                    if norm1(b) > p.constants.k(t) * norm1(a) * (1.0 + 1e-12) {
                        bad += 1;
                    }
                }
            }
        }
    }
    let msg = format!("grid vs closed form {worst:.1e}; |b|₁ ≤ K|a|₁ on {samples} pairs, {bad} violations");
    if worst <= 1e-3 && bad == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn homogeneity() -> Outcome {
    let opts = SolveOptions {
        tol: 1e-11,
        ..SolveOptions::default()
    };
    let (mut path_err, mut log_err) = (0.0f64, 0.0f64);
    for base in [kelly(), binary(2, 2, 0.01, 1.5), random(4)?] {
        let s = solve_log_optimal(&base, &opts).map_err(|e| e.to_string())?;
        for c in [0.5, 2.0, 10.0] {
            let x0: Vec<f64> = base.x0.iter().map(|v| c * v).collect();
            let p = PathProblem::new(base.tree.clone(), base.market.clone(), base.objective.clone(), x0)
                .map_err(|e| e.to_string())?;
            let sc = solve_log_optimal(&p, &opts).map_err(|e| e.to_string())?;
            for (a, b) in s.path.iter().zip(&sc.path) {
                let scale = a.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
                path_err = path_err.max(a.scaled(c).max_abs_diff(b) / (c * scale));
            }
            log_err = log_err.max((sc.objective - s.objective - c.ln()).abs());
        }
    }
    let msg = format!("relative path error {path_err:.1e}, |ΔF − ln c| {log_err:.1e}");
    if path_err <= 1e-6 && log_err <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn axioms() -> Outcome {
    let p = binary(2, 2, 0.01, 1.5);
    let (tree, md) = (&p.tree, &p.market);
    let q = vec![vec![1.0, 1.0]; tree.count_at(tree.horizon())];
    let shipped = |norm| -> Result<TerminalObjective, String> {
        let cap = TerminalObjective::max_penalty(tree, md, &q, norm, 0.5).map_err(|e| e.to_string())?;
        let theta = cap.iter().map(|v| 0.5 * v).collect();
        TerminalObjective::norm_penalized(tree, md, q.clone(), theta, norm, 0.5).map_err(|e| e.to_string())
    };
    let objectives = [
        TerminalObjective::liquidation(md, &p.constants),
        TerminalObjective::linear_uniform(tree, md, vec![1.0, 1.005]).map_err(|e| e.to_string())?,
        shipped(PenaltyNorm::L1)?,
        shipped(PenaltyNorm::L2)?,
    ];
    let mut failed = Vec::new();
    for (k, obj) in objectives.iter().enumerate() {
        let rep = check_psi_class(obj, tree, md, 10_000, k as u64);
        if !rep.passed() {
            failed.push(format!("{}: {rep:?}", obj.name()));
        }
    }
    let bad = TerminalObjective::norm_penalized_unchecked(tree, md, q.clone(), vec![0.5; q.len()], PenaltyNorm::L1, 0.5)
        .map_err(|e| e.to_string())?;
    let rep = check_psi_class(&bad, tree, md, 10_000, 9);
    if rep.lower_bound == 0 {
        failed.push("oversized penalty not detected".into());
    }
    if failed.is_empty() {
        Ok(format!(
            "4 objectives × 10⁴ samples clean; oversized penalty flagged {} times",
            rep.lower_bound
        ))
    } else {
        Err(failed.join("; "))
    }
}

fn golden() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    for name in common::FIXTURES {
        common::against_golden(name, work.path())?;
    }
    Ok(format!("{} fixtures byte-identical", common::FIXTURES.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("random instances solve and certify", random_instances),
        ("kelly fraction against grid oracle", kelly_oracle),
        ("dual normalization", normalization),
        ("growth dominance in expectation", dominance),
        ("supermartingale and rapid martingale", supermartingale),
        ("equivalent forms agree under corruption", equivalences),
        ("section constants and bounded growth", constants),
        ("homogeneity in the initial endowment", homogeneity),
        ("objective axioms", axioms),
        ("cli golden outputs", golden),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.2} s]", k + 1),
            Err(msg) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
