#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub const FIXTURES: [&str; 3] = ["kelly", "costly_binary", "chain"];
pub const SEED: &str = "7";

pub fn dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    dir("fixtures").join(format!("{name}.json"))
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn vng(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_vng"))
        .args(args)
        .env("VNG_LOG", "error")
        .output()
        .expect("vng runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Summary lines of validate, solve, certify and the compare CSV for one
/// fixture, with exit codes, under the fixed seed.
pub fn transcript(name: &str, work: &Path) -> (String, String) {
    let problem = fixture(name);
    let p = problem.to_str().unwrap();
    let sol = work.join(format!("{name}.solution.json"));
    let cert = work.join(format!("{name}.certificate.json"));
    let csv = work.join(format!("{name}.csv"));
    let (s, c, v) = (sol.to_str().unwrap(), cert.to_str().unwrap(), csv.to_str().unwrap());
    let steps: [(&str, Vec<&str>); 4] = [
        ("validate", vec!["validate", p]),
        ("solve", vec!["solve", p, "--seed", SEED, "--out", s]),
        ("certify", vec!["certify", p, s, "--out", c]),
        ("compare", vec!["compare", p, "--solution", s, "--strategy", "rapid,hold,random:1", "--out", v]),
    ];
    let mut text = String::new();
    for (label, args) in steps {
        let r = vng(&args);
        text.push_str(&format!("$ vng {label} {name}.json\n{}[exit {}]\n", r.stdout, r.code));
    }
    (text, std::fs::read_to_string(&csv).unwrap_or_default())
}

/// Golden comparison; `VNG_BLESS=1` rewrites the golden files instead.
pub fn against_golden(name: &str, work: &Path) -> Result<(), String> {
    let (text, csv) = transcript(name, work);
    let g = dir("golden");
    let (gt, gc) = (g.join(format!("{name}.txt")), g.join(format!("{name}.csv")));
    if std::env::var_os("VNG_BLESS").is_some() {
        std::fs::write(&gt, &text).unwrap();
        std::fs::write(&gc, &csv).unwrap();
    }
    let want_text = std::fs::read_to_string(&gt).map_err(|e| format!("{}: {e}", gt.display()))?;
    let want_csv = std::fs::read_to_string(&gc).map_err(|e| format!("{}: {e}", gc.display()))?;
    if text != want_text {
        return Err(format!("{name}: transcript differs\n--- got\n{text}--- want\n{want_text}"));
    }
    if csv != want_csv {
        return Err(format!("{name}: CSV differs\n--- got\n{csv}--- want\n{want_csv}"));
    }
    Ok(())
}
