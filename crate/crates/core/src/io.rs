//! JSON problem, solution and certificate files.
//!
//! Numbers are written with shortest round-trip formatting, so a
//! write-then-read cycle is lossless. Writes go to a temporary file in the
//! target directory and are renamed into place.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certify::{certify_dual, CertifyError, CertifyOptions, DualPath, RapidityCertificate};
use crate::generate::ObjectiveKind;
use crate::market::{market_constants, returns_from_prices, MarketData, MarketError};
use crate::objective::{ObjectiveError, PenaltyNorm, TerminalObjective};
use crate::solver::{KktResiduals, PathProblem, SolveOptions, Solution, SolverError};
use crate::tree::{AdaptedVector, RawNode, ScenarioTree, TreeError};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema version {found}; this build reads version {SCHEMA_VERSION}")]
    Schema { found: u32 },
    #[error("{at}: {reason}")]
    Field { at: String, reason: String },
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("market: {0}")]
    Market(#[from] MarketError),
    #[error("objective: {0}")]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl FileError {
    fn field(at: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Field {
            at: at.into(),
            reason: reason.into(),
        }
    }

    /// The offending date when the problem fails on its margin requirements
    /// (`μ_t ≤ 1` or `μ_t ≤ ν_t`).
    pub fn margin_date(&self) -> Option<usize> {
        let market = match self {
            Self::Market(e) | Self::Objective(ObjectiveError::Market(e)) => e,
            Self::Solver(SolverError::MarginTooTight { t, .. }) => return Some(*t),
            Self::Solver(SolverError::Market(e)) => e,
            _ => return None,
        };
        match market {
            MarketError::BadMargin { t, .. } | MarketError::MarginTooTight { t, .. } => Some(*t),
            _ => None,
        }
    }
}

/// One value for every node, or a table keyed by node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Costs {
    Uniform(f64),
    PerNode(BTreeMap<String, Vec<f64>>),
}

/// One margin for every date, or one per date `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Margins {
    Uniform(f64),
    PerDate(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// Gross returns by node id; the root may be omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns: Option<BTreeMap<String, Vec<f64>>>,
    /// Prices by node id (every node), as an alternative to `returns`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<BTreeMap<String, Vec<f64>>>,
    pub lambda_plus: Costs,
    pub lambda_minus: Costs,
    pub mu: Margins,
}

/// Same vector at every leaf, or a table keyed by leaf id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafVectors {
    Uniform(Vec<f64>),
    PerLeaf(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafScalars {
    Uniform(f64),
    PerLeaf(BTreeMap<String, f64>),
}

/// Terminal valuation. `q` defaults to all ones; the penalty `theta`
/// defaults to half its admissible bound and `delta` to 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<LeafVectors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<LeafScalars>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SolverSection {
    pub fn options(&self) -> SolveOptions {
        let d = SolveOptions::default();
        SolveOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub tree: Vec<RawNode>,
    pub market: MarketSection,
    pub objective: ObjectiveSpec,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub solver: SolverSection,
}

/// Per-node rows from an id-keyed table, in tree order.
fn per_node(
    tree: &ScenarioTree,
    table: &BTreeMap<String, Vec<f64>>,
    at: &str,
    m: usize,
    root_default: Option<f64>,
) -> Result<Vec<Vec<f64>>, FileError> {
    if let Some(id) = table.keys().find(|id| tree.lookup(id).is_none()) {
        return Err(FileError::field(format!("{at}[{id:?}]"), "unknown node"));
    }
    tree.nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| match table.get(&node.id) {
            Some(row) if row.len() == m => Ok(row.clone()),
            Some(row) => Err(FileError::field(
                format!("{at}[{:?}]", node.id),
                format!("expected {m} entries, got {}", row.len()),
            )),
            None => match root_default {
                Some(v) if i == tree.root() => Ok(vec![v; m]),
                _ => Err(FileError::field(format!("{at}[{:?}]", node.id), "missing")),
            },
        })
        .collect()
}

fn costs(tree: &ScenarioTree, c: &Costs, at: &str, m: usize) -> Result<Vec<Vec<f64>>, FileError> {
    match c {
        Costs::Uniform(v) => Ok(vec![vec![*v; m]; tree.len()]),
        Costs::PerNode(table) => per_node(tree, table, at, m, None),
    }
}

fn leaf_vectors(tree: &ScenarioTree, q: Option<&LeafVectors>, m: usize) -> Result<Vec<Vec<f64>>, FileError> {
    let leaves = tree.count_at(tree.horizon());
    match q {
        None => Ok(vec![vec![1.0; m]; leaves]),
        Some(LeafVectors::Uniform(v)) => {
            if v.len() != m {
                return Err(FileError::field("objective.q", format!("expected {m} entries, got {}", v.len())));
            }
            Ok(vec![v.clone(); leaves])
        }
        Some(LeafVectors::PerLeaf(table)) => {
            if let Some(id) = table.keys().find(|id| tree.lookup(id).map_or(true, |i| !tree.is_leaf(i))) {
                return Err(FileError::field(format!("objective.q[{id:?}]"), "not a leaf"));
            }
            tree.leaves()
                .map(|leaf| {
                    let id = &tree.node(leaf).id;
                    match table.get(id) {
                        Some(v) if v.len() == m => Ok(v.clone()),
                        Some(v) => Err(FileError::field(
                            format!("objective.q[{id:?}]"),
                            format!("expected {m} entries, got {}", v.len()),
                        )),
                        None => Err(FileError::field(format!("objective.q[{id:?}]"), "missing")),
                    }
                })
                .collect()
        }
    }
}

impl ObjectiveSpec {
    pub fn liquidation() -> Self {
        Self {
            kind: ObjectiveKind::Liquidation,
            q: None,
            theta: None,
            delta: None,
        }
    }

    fn build(&self, tree: &ScenarioTree, market: &MarketData) -> Result<TerminalObjective, FileError> {
        let m = market.assets();
        let norm = match self.kind {
            ObjectiveKind::Liquidation => {
                let constants = market_constants(market)?;
                return Ok(TerminalObjective::liquidation(market, &constants));
            }
            ObjectiveKind::Linear => {
                let q = leaf_vectors(tree, self.q.as_ref(), m)?;
                return Ok(TerminalObjective::linear(tree, market, q)?);
            }
            ObjectiveKind::NormL1 => PenaltyNorm::L1,
            ObjectiveKind::NormL2 => PenaltyNorm::L2,
        };
        let q = leaf_vectors(tree, self.q.as_ref(), m)?;
        let delta = self.delta.unwrap_or(0.5);
        let theta = match &self.theta {
            None => TerminalObjective::max_penalty(tree, market, &q, norm, delta)?
                .into_iter()
                .map(|b| 0.5 * b)
                .collect(),
            Some(LeafScalars::Uniform(v)) => vec![*v; q.len()],
            Some(LeafScalars::PerLeaf(table)) => tree
                .leaves()
                .map(|leaf| {
                    let id = &tree.node(leaf).id;
                    table
                        .get(id)
                        .copied()
                        .ok_or_else(|| FileError::field(format!("objective.theta[{id:?}]"), "missing"))
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(TerminalObjective::norm_penalized(tree, market, q, theta, norm, delta)?)
    }
}

impl ProblemFile {
    pub fn parse(bytes: &[u8], origin: &str) -> Result<Self, FileError> {
        let file: Self = serde_json::from_slice(bytes).map_err(|source| FileError::Json {
            path: origin.to_owned(),
            source,
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(FileError::Schema {
                found: file.schema_version,
            });
        }
        Ok(file)
    }

    /// The problem with the file's own objective, or with `kind` swapped in
    /// (keeping any `q`, `theta`, `delta` given in the file).
    pub fn build(&self, kind: Option<ObjectiveKind>) -> Result<PathProblem, FileError> {
        let m = self.x0.len();
        if m == 0 {
            return Err(FileError::field("x0", "empty portfolio"));
        }
        let tree = ScenarioTree::build_uniform(&self.tree, m)?;
        let mk = &self.market;
        let returns = match (&mk.returns, &mk.prices) {
            (Some(r), None) => per_node(&tree, r, "market.returns", m, Some(1.0))?,
            (None, Some(p)) => returns_from_prices(&tree, &per_node(&tree, p, "market.prices", m, None)?)?,
            _ => return Err(FileError::field("market", "give exactly one of `returns` and `prices`")),
        };
        let lp = costs(&tree, &mk.lambda_plus, "market.lambda_plus", m)?;
        let lm = costs(&tree, &mk.lambda_minus, "market.lambda_minus", m)?;
        let mu = match &mk.mu {
            Margins::Uniform(v) => vec![*v; tree.horizon() + 1],
            Margins::PerDate(v) => v.clone(),
        };
        let market = MarketData::new(&tree, returns, lp, lm, mu)?;
        let mut spec = self.objective.clone();
        if let Some(kind) = kind {
            spec.kind = kind;
        }
        let objective = spec.build(&tree, &market)?;
        Ok(PathProblem::new(tree, market, objective, self.x0.clone())?)
    }
}

/// Hex SHA-256 of the problem bytes together with the effective options.
pub fn digest(problem_bytes: &[u8], options: &SolveOptions, objective: Option<ObjectiveKind>) -> String {
    #[derive(Serialize)]
    struct Effective<'a> {
        options: &'a SolveOptions,
        objective: Option<ObjectiveKind>,
    }
    let mut h = Sha256::new();
    h.update(problem_bytes);
    h.update(b"\0");
    h.update(serde_json::to_vec(&Effective { options, objective }).expect("options serialize"));
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub tool_version: String,
    /// [`digest`] of the problem file and the options below.
    pub digest: String,
    pub options: SolveOptions,
    /// Objective override in force, if any.
    pub objective_override: Option<ObjectiveKind>,
    pub objective_kind: String,
    /// Node ids in storage order, for readers of the raw arrays.
    pub node_ids: Vec<String>,
    pub solution: Solution,
}

impl SolutionFile {
    pub fn new(
        problem: &PathProblem,
        digest: String,
        options: SolveOptions,
        objective_override: Option<ObjectiveKind>,
        solution: Solution,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_owned(),
            digest,
            options,
            objective_override,
            objective_kind: problem.objective.name().to_owned(),
            node_ids: problem.tree.nodes().iter().map(|n| n.id.clone()).collect(),
            solution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub schema_version: u32,
    pub tool_version: String,
    /// Digest of the solution this certifies (same as the solution file's).
    pub digest: String,
    pub wall_time: f64,
    pub options: CertifyOptions,
    /// KKT residuals recomputed from the stored solution.
    pub kkt: Option<KktResiduals>,
    pub path: Vec<AdaptedVector>,
    pub dual: DualPath,
    pub certificate: RapidityCertificate,
}

impl CertificateFile {
    /// Re-runs every check on the stored path and dual.
    pub fn reverify(&self, problem: &PathProblem) -> Result<RapidityCertificate, CertifyError> {
        let mut cert = certify_dual(problem, &self.path, &self.dual, &self.options)?;
        cert.notes = self.certificate.notes.clone();
        Ok(cert)
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, FileError> {
    std::fs::read(path).map_err(|source| FileError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| FileError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `bytes` to a temporary sibling of `path` and renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    let err = |source| FileError::Write {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| FileError::Json {
        path: path.display().to_string(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
