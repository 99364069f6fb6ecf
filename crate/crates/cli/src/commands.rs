use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vng_core::certify::{
    certify_dual, extract_dual, extract_dual_unchecked, growth_dominance, Check, CertifyError, CertifyOptions,
    Verdict, CERT_TOL,
};
use vng_core::generate::ObjectiveKind;
use vng_core::io::{
    digest, read_bytes, read_json, write_atomic, write_json_atomic, CertificateFile, ProblemFile, SolutionFile,
    SCHEMA_VERSION, TOOL_VERSION,
};
use vng_core::market::slater_path_from;
use vng_core::sampling::{buy_and_hold, random_path};
use vng_core::solver::{kkt_report, solve_log_optimal, PathProblem, SolveOptions, Solution, SolverError};
use vng_core::AdaptedVector;

use crate::exit::{CliError, REFUTED};
use crate::{CertifyArgs, CompareArgs, SolveArgs, SolverFlags, ValidateArgs};

struct Loaded {
    bytes: Vec<u8>,
    file: ProblemFile,
    problem: PathProblem,
}

fn load(path: &Path, kind: Option<ObjectiveKind>) -> Result<Loaded> {
    let bytes = read_bytes(path)?;
    let file = ProblemFile::parse(&bytes, &path.display().to_string())?;
    let problem = file
        .build(kind)
        .with_context(|| format!("invalid problem {}", path.display()))?;
    Ok(Loaded { bytes, file, problem })
}

fn options(file: &ProblemFile, flags: &SolverFlags) -> SolveOptions {
    let base = file.solver.options();
    SolveOptions {
        tol: flags.tol.unwrap_or(base.tol),
        max_iter: flags.max_iter.unwrap_or(base.max_iter),
        seed: flags.seed.unwrap_or(base.seed),
    }
}

/// `dir/kelly.json` → `dir/kelly.<suffix>`, dropping a `.solution` infix.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("vng");
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let stem = stem.strip_suffix(".solution").unwrap_or(stem);
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_solution(path: &Path, bytes: &[u8]) -> Result<SolutionFile> {
    let sol: SolutionFile = read_json(path)?;
    let expected = digest(bytes, &sol.options, sol.objective_override);
    if expected != sol.digest {
        return Err(CliError::DigestMismatch {
            expected,
            found: sol.digest,
        }
        .into());
    }
    Ok(sol)
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), num)
}

pub fn validate(a: ValidateArgs) -> Result<u8> {
    let l = load(&a.problem.problem, a.problem.objective.map(Into::into))?;
    let p = &l.problem;
    let c = &p.constants;
    println!(
        "problem {}: horizon {}, {} assets, {} nodes, objective {}",
        l.file.name.as_deref().unwrap_or("(unnamed)"),
        p.tree.horizon(),
        p.market.assets(),
        p.tree.len(),
        p.objective.name()
    );
    println!(
        "{:>3} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "t", "mu", "nu", "slack", "C1", "C2", "K", "H", "R_min", "R_max"
    );
    for (tc, b) in c.per_time.iter().zip(&c.bounds) {
        println!(
            "{:>3} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            tc.t,
            num(tc.mu),
            num(tc.nu),
            num(tc.mu - tc.nu),
            num(tc.c1),
            opt(tc.c2),
            opt(tc.k),
            num(tc.h),
            opt(b.r_lo),
            opt(b.r_hi)
        );
    }
    let slater = slater_path_from(&p.tree, &p.market, c, &p.x0)?;
    let radius = slater.radii.iter().copied().fold(f64::INFINITY, f64::min);
    println!("slater path: ok, smallest interior radius {radius:.6e}");
    println!("validate: ok");
    Ok(0)
}

pub fn solve(a: SolveArgs) -> Result<u8> {
    let kind = a.problem.objective.map(Into::into);
    let l = load(&a.problem.problem, kind)?;
    let opts = options(&l.file, &a.solver);
    let out = a.out.unwrap_or_else(|| sibling(&a.problem.problem, "solution.json"));
    let (solution, converged) = match solve_log_optimal(&l.problem, &opts) {
        Ok(s) => (s, true),
        Err(SolverError::NonConvergence(s)) => (*s, false),
        Err(e) => return Err(e.into()),
    };
    let file = SolutionFile::new(&l.problem, digest(&l.bytes, &opts, kind), opts, kind, solution);
    write_json_atomic(&out, &file)?;
    let s = &file.solution;
    log::info!("wrote {} ({:.3} s)", out.display(), s.wall_time);
    println!(
        "solve: objective {}, F = {:.10}, iterations {}, {}",
        l.problem.objective.name(),
        s.objective,
        s.iterations,
        if converged { "converged" } else { "not converged" }
    );
    if !converged {
        return Err(CliError::NonConvergence {
            iterations: s.iterations,
            path: out.display().to_string(),
        }
        .into());
    }
    Ok(0)
}

fn check_name(c: Check) -> &'static str {
    match c {
        Check::Feasibility => "path feasibility",
        Check::Normalization => "normalization",
        Check::DualCone => "dual-cone membership",
        Check::Transition => "transition inequality",
        Check::Supermartingale => "supermartingale",
    }
}

pub fn certify(a: CertifyArgs) -> Result<u8> {
    let bytes = read_bytes(&a.problem)?;
    let file = ProblemFile::parse(&bytes, &a.problem.display().to_string())?;
    let sol = load_solution(&a.solution, &bytes)?;
    let problem = file.build(sol.objective_override)?;
    let opts = CertifyOptions {
        tol: a.tol.unwrap_or(CERT_TOL),
        sample_tol: 1e-8,
        competitors: a.competitors,
        seed: a.seed.unwrap_or(sol.options.seed),
    };
    let start = Instant::now();
    let kkt = kkt_report(&problem, &sol.solution).ok();
    let mut notes = Vec::new();
    let dual = match extract_dual(&problem, &sol.solution) {
        Ok(d) => d,
        Err(CertifyError::NotCertified(why)) => {
            log::warn!("{why}; extracting the dual without the KKT gate");
            notes.push(format!("KKT gate failed ({why}); dual extracted without it"));
            extract_dual_unchecked(&problem, &sol.solution)?
        }
        Err(e) => return Err(e.into()),
    };
    let mut cert = certify_dual(&problem, &sol.solution.path, &dual, &opts)?;
    cert.notes.extend(notes);
    let certified = cert.certified();
    let line = match &cert.verdict {
        Verdict::Certified => format!(
            "certify: certified at tol {:e} ({} sampled competitors)",
            opts.tol, opts.competitors
        ),
        Verdict::Refuted(w) => format!(
            "certify: refuted, {} fails at date {} node {:?} (residual {:.3e})",
            check_name(w.check),
            w.t,
            w.node,
            w.value
        ),
    };
    let out = a.out.unwrap_or_else(|| sibling(&a.solution, "certificate.json"));
    let record = CertificateFile {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_owned(),
        digest: sol.digest.clone(),
        wall_time: start.elapsed().as_secs_f64(),
        options: opts,
        kkt,
        path: sol.solution.path.clone(),
        dual,
        certificate: cert,
    };
    write_json_atomic(&out, &record)?;
    log::info!("wrote {}", out.display());
    println!("{line}");
    Ok(if certified { 0 } else { REFUTED })
}

fn strategy(spec: &str, p: &PathProblem, rapid: &Solution, seed: u64) -> Result<Vec<AdaptedVector>> {
    if spec == "rapid" {
        return Ok(rapid.path.clone());
    }
    if spec == "hold" {
        return Ok(buy_and_hold(&p.tree, &p.market, &p.x0)?);
    }
    let k: u64 = spec
        .strip_prefix("random:")
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| CliError::Strategy(spec.to_owned()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
    Ok(random_path(&mut rng, &p.tree, &p.market, &p.constants, &p.x0, None)?)
}

fn fixed(v: f64) -> String {
    format!("{v:.8}")
}

pub fn compare(a: CompareArgs) -> Result<u8> {
    let kind = a.problem.objective.map(Into::into);
    let l = load(&a.problem.problem, kind)?;
    let p = &l.problem;
    let opts = options(&l.file, &a.solver);
    let solution = match &a.solution {
        Some(path) => load_solution(path, &l.bytes)?.solution,
        None => solve_log_optimal(p, &opts)?,
    };
    let dual = extract_dual(p, &solution)?;
    let n = p.tree.horizon();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy_id", "t", "node_count", "max_conditional_growth", "mean_growth", "F_value"])?;
    for spec in a.strategies.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let y = strategy(spec, p, &solution, opts.seed)?;
        let f = fixed(p.objective.log_objective(&p.tree, &p.market, &y[n]));
        match growth_dominance(&dual, &solution.path, &y, &p.tree) {
            Ok(table) => {
                for row in &table.rows {
                    w.write_record([
                        spec,
                        &row.t.to_string(),
                        &row.node_count.to_string(),
                        &fixed(row.max),
                        &fixed(row.mean),
                        &f,
                    ])?;
                }
            }
            Err(CertifyError::NonpositiveDenominator { node, t, value }) => {
                log::warn!("{spec}: p_t·y_(t-1) = {value:e} at node {node:?} (date {t}); growth undefined");
                for t in 1..=n {
                    let count = p.tree.count_at(t).to_string();
                    w.write_record([spec, &t.to_string(), &count, "nonpositive", "nonpositive", &f])?;
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    match a.out {
        Some(path) => write_atomic(&path, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(0)
}
