use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vng_core::certify::{
    check_equivalences, corrupt, extract_dual, growth_dominance, reconstruct_dual, supermartingale_check, verify_rapid,
    Check, CertifyError, Corruption, DualPath, Verdict, CERT_TOL,
};
use vng_core::generate::{binary, chain, kelly, random_problem, single_asset, GeneratorLimits};
use vng_core::objective::TerminalObjective;
use vng_core::sampling::{buy_and_hold, random_path};
use vng_core::solver::{solve_log_optimal, PathProblem, SolveOptions, Solution, SolverError};
use vng_core::vecops::dot;
use vng_core::market::market_constants;
use vng_core::{AdaptedVector, MarketData};

fn solved(p: &PathProblem) -> (Solution, DualPath) {
    let s = solve_log_optimal(p, &SolveOptions::default()).unwrap();
    let d = extract_dual(p, &s).unwrap();
    (s, d)
}

#[test]
fn single_asset_root_price() {
    let p = single_asset();
    let (s, d) = solved(&p);
    let v = dot(d.p(1).get(0), &p.x0);
    assert!((v - 1.0).abs() < 1e-8, "{v}");
    let cert = verify_rapid(&s.path, &d, &p.tree, &p.market, CERT_TOL).unwrap();
    assert!(cert.certified(), "{cert:?}");
}

#[test]
fn linear_terminal_price() {
    let base = binary(2, 2, 0.01, 1.5);
    let q = vec![1.0, 1.005];
    let obj = TerminalObjective::linear_uniform(&base.tree, &base.market, q.clone()).unwrap();
    let p = PathProblem::new(base.tree.clone(), base.market.clone(), obj, base.x0.clone()).unwrap();
    let (s, d) = solved(&p);
    for leaf in p.tree.leaves() {
        let x = s.path[2].at(&p.tree, leaf);
        let want: Vec<f64> = q.iter().map(|v| v / dot(&q, x)).collect();
        let got = d.p(3).at(&p.tree, leaf);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn chain_normalization() {
    let p = chain(3, 2);
    let (s, d) = solved(&p);
    let cert = verify_rapid(&s.path, &d, &p.tree, &p.market, CERT_TOL).unwrap();
    assert!(cert.max_normalization() < 1e-8, "{:?}", cert.normalization);
    assert!(cert.certified());
}

#[test]
fn random_instances_certify() {
    for seed in 100..115 {
        let p = random_problem(seed, &GeneratorLimits::default()).unwrap();
        let (s, d) = solved(&p);
        let cert = verify_rapid(&s.path, &d, &p.tree, &p.market, CERT_TOL).unwrap();
        assert!(cert.certified(), "seed {seed}: {:?}", cert.verdict);
    }
}

#[test]
fn refutations() {
    let p = binary(2, 2, 0.01, 1.5);
    let (s, d) = solved(&p);
    let mut doubled = d.clone();
    doubled.p_mut(3).as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
    let cert = verify_rapid(&s.path, &doubled, &p.tree, &p.market, CERT_TOL).unwrap();
    assert!((cert.normalization[2] - 1.0).abs() < 1e-6);
    assert!(matches!(cert.verdict, Verdict::Refuted(ref w) if w.check == Check::Normalization && w.t == 2));

    let mut negated = d.clone();
    negated.p_mut(1).get_mut(1).iter_mut().for_each(|v| *v = -*v);
    let cert = verify_rapid(&s.path, &negated, &p.tree, &p.market, CERT_TOL).unwrap();
    assert!(cert.max_dual_cone() > 0.1);
    let Verdict::Refuted(w) = cert.verdict else { panic!() };
    assert_eq!(w.node, "rd");
}

#[test]
fn not_certified_when_unconverged() {
    let p = binary(2, 2, 0.01, 1.5);
    let opts = SolveOptions {
        max_iter: 3,
        ..SolveOptions::default()
    };
    let Err(SolverError::NonConvergence(s)) = solve_log_optimal(&p, &opts) else {
        panic!("three steps should not converge")
    };
    assert!(matches!(extract_dual(&p, &s), Err(CertifyError::NotCertified(_))));
}

#[test]
fn equivalences_agree() {
    for seed in [1u64, 6, 11] {
        let p = random_problem(seed, &GeneratorLimits::default()).unwrap();
        let (s, d) = solved(&p);
        for t in 1..=p.tree.horizon() {
            let r = check_equivalences(&p.tree, &p.market, &p.constants, &s.path, &d, t, 500, seed, CERT_TOL).unwrap();
            assert!(r.agree && r.ratio.pass && r.nodewise.pass, "seed {seed} t {t}: {r:?}");
            assert!(r.rapid_equality < 1e-7, "{r:?}");
            for mode in Corruption::ALL {
                let bad = corrupt(&d, &p.tree, &s.path, t, mode);
                let r = check_equivalences(&p.tree, &p.market, &p.constants, &s.path, &bad, t, 100, seed, CERT_TOL)
                    .unwrap();
                assert!(!r.nodewise.pass, "{mode:?} undetected by LP");
                assert!(r.agree, "seed {seed} t {t} {mode:?}: {r:?}");
            }
        }
    }
}

#[test]
fn supermartingale_and_growth() {
    let p = binary(3, 2, 0.02, 1.6);
    let (s, d) = solved(&p);
    let own = supermartingale_check(&d, &s.path, &p.tree).unwrap();
    assert!(own.max_abs < 1e-8, "{own:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let y = random_path(&mut rng, &p.tree, &p.market, &p.constants, &p.x0, Some(&s.path)).unwrap();
        let r = supermartingale_check(&d, &y, &p.tree).unwrap();
        assert!(r.conditional <= 1e-8 && r.tower <= 1e-8, "{r:?}");
        assert!(r.unconditional.iter().all(|v| *v <= 1e-8));
        let c = rng.gen_range(0.5..3.0);
        let yc: Vec<AdaptedVector> = y.iter().map(|v| v.scaled(c)).collect();
        let rc = supermartingale_check(&d, &yc, &p.tree).unwrap();
        assert!((rc.conditional - c * r.conditional).abs() < 1e-12 * (1.0 + c));

        let g = growth_dominance(&d, &s.path, &y, &p.tree).unwrap();
        assert!(g.rows.iter().all(|row| row.max <= 1.0 + 1e-8));
        let g2 = growth_dominance(&d, &s.path, &yc, &p.tree).unwrap();
        for (a, b) in g.entries.iter().flatten().zip(g2.entries.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let g = growth_dominance(&d, &s.path, &s.path, &p.tree).unwrap();
    assert!(g.entries.iter().flatten().all(|r| (r - 1.0).abs() < 1e-8));
}

#[test]
fn kelly_buy_and_hold() {
    let p = kelly();
    let (s, d) = solved(&p);
    let hold = buy_and_hold(&p.tree, &p.market, &p.x0).unwrap();
    let g = growth_dominance(&d, &s.path, &hold, &p.tree).unwrap();
    let all: Vec<f64> = g.entries.iter().flatten().copied().collect();
    assert!(all.iter().all(|r| *r <= 1.0 + 1e-8), "{all:?}");
    // Frictionless with an interior optimum: the wealth ratio against the
    // log-optimal path is a martingale, so every conditional entry is 1 ...
    assert!(all.iter().all(|r| (r - 1.0).abs() < 1e-6), "{all:?}");
    // ... while its logarithm drifts strictly down.
    let drift: f64 = p
        .tree
        .leaves()
        .map(|leaf| {
            let w = |y: &AdaptedVector| y.at(&p.tree, leaf).iter().sum::<f64>();
            p.tree.probability(leaf) * (w(&hold[2]) / w(&s.path[2])).ln()
        })
        .sum();
    assert!(drift < -1e-3, "{drift}");
}

#[test]
fn trading_against_shadow_prices_grows_strictly_slower() {
    // Kelly market with 1% costs: the optimum buys the risky asset at the ask.
    let k = kelly();
    let returns = (0..k.tree.len()).map(|n| k.market.returns(n).to_vec()).collect();
    let market = MarketData::with_uniform_costs(&k.tree, returns, 0.01, 0.01, vec![3.0; 3]).unwrap();
    let constants = market_constants(&market).unwrap();
    let obj = TerminalObjective::liquidation(&market, &constants);
    let p = PathProblem::new(k.tree.clone(), market, obj, k.x0.clone()).unwrap();
    let (s, d) = solved(&p);

    // Holding is free at any shadow price: every entry is exactly 1.
    let hold = buy_and_hold(&p.tree, &p.market, &p.x0).unwrap();
    let g = growth_dominance(&d, &s.path, &hold, &p.tree).unwrap();
    assert!(g.entries.iter().flatten().all(|r| (r - 1.0).abs() < 1e-6), "{g:?}");

    // Shorting the risky asset sells at the bid: strictly worse at t = 1.
    let node = p.tree.lookup("s").unwrap();
    let (mut lo, mut hi) = (1.0, 1.2);
    for _ in 0..100 {
        let c = 0.5 * (lo + hi);
        if p.market.self_financing_value(node, &p.x0, &[c, -0.2]).unwrap() >= 0.0 {
            lo = c;
        } else {
            hi = c;
        }
    }
    let mut short = hold.clone();
    short[1] = AdaptedVector::from_rows(&p.tree, 1, vec![vec![lo, -0.2]]).unwrap();
    short[2] = AdaptedVector::from_fn(&p.tree, 2, 2, |n| {
        let r = p.market.returns(n);
        vec![lo * r[0], -0.2 * r[1]]
    });
    let g = growth_dominance(&d, &s.path, &short, &p.tree).unwrap();
    assert!(g.entries[0][0] < 1.0 - 1e-3, "{g:?}");
    assert!(g.entries.iter().flatten().all(|r| *r <= 1.0 + 1e-8), "{g:?}");
}

#[test]
fn reconstruction() {
    let p = binary(2, 2, 0.01, 1.5);
    let (s, d) = solved(&p);
    let (same, cert) = reconstruct_dual(&d, &s.path, &p.tree, &p.market, CERT_TOL).unwrap();
    assert!(cert.certified());
    for (a, b) in same.prices.iter().zip(&d.prices) {
        assert!(a.max_abs_diff(b) < 1e-8);
    }
    let (again, _) = reconstruct_dual(&same, &s.path, &p.tree, &p.market, CERT_TOL).unwrap();
    for (a, b) in again.prices.iter().zip(&same.prices) {
        assert!(a.max_abs_diff(b) < 1e-12);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut l = d.clone();
    for layer in l.prices.iter_mut() {
        for k in 0..layer.len() {
            let f = rng.gen_range(0.1..10.0);
            layer.get_mut(k).iter_mut().for_each(|v| *v *= f);
        }
    }
    let (scaled, cert2) = reconstruct_dual(&l, &s.path, &p.tree, &p.market, CERT_TOL).unwrap();
    assert_eq!(cert2.certified(), cert.certified());
    for (a, b) in scaled.prices.iter().zip(&same.prices) {
        assert!(a.max_abs_diff(b) < 1e-12 * 10.0);
    }

    let mut bad = d.clone();
    let q = bad.p_mut(1).get_mut(0);
    q[1] = -0.5 * q[0];
    let (_, cert) = reconstruct_dual(&bad, &s.path, &p.tree, &p.market, CERT_TOL).unwrap();
    assert!(!cert.certified());
}

#[test]
fn tampered_path_is_refuted() {
    let p = kelly();
    let (s, d) = solved(&p);
    let mut path = s.path.clone();
    let su = p.tree.lookup("su").unwrap();
    path[2].at_mut(&p.tree, su)[0] *= 1.1;
    let cert = verify_rapid(&path, &d, &p.tree, &p.market, CERT_TOL).unwrap();
    let Verdict::Refuted(w) = &cert.verdict else { panic!("tampered path certified") };
    assert_eq!((w.check, w.t, w.node.as_str()), (Check::Feasibility, 2, "su"));
    assert!(cert.max_feasibility() > 0.01);
}
