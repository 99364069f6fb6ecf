//! Log-optimal investment paths in von Neumann–Gale market dynamics on
//! finite scenario trees, with dual price paths certifying rapidity.

pub mod certify;
pub mod generate;
pub mod io;
pub mod lp;
pub mod market;
pub mod objective;
pub mod sampling;
pub mod solver;
pub mod tree;
pub mod vecops;

pub use market::{MarketConstants, MarketData, MarketError};
pub use tree::{AdaptedVector, RawNode, ScenarioTree, TreeError};
