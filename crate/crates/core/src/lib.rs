//! Variance-rescaling attacks on least-squares continuous DAG learning.
//!
//! The crate bundles a linear NOTEARS solver ([`notears`]), a linear-Gaussian
//! SCM simulator ([`scm`]), varsortability and model-MSE metrics
//! ([`metrics`]), the attack engine ([`attack`]) and an exhaustive
//! DAG-scoring oracle ([`oracle`]).

// `!(x > 0.0)` rejects NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod notears;
pub mod oracle;
pub mod scm;

pub use attack::{AttackKind, AttackOutcome, AttackPlan, AttackStatus, Recipe};
pub use error::{Error, Result};
pub use graph::{DagStructure, StructureKind, WeightedDag};
pub use metrics::{fit_ols, mmse, structural_hamming_distance, varsortability, OlsFit, VarsortReport};
pub use notears::{solve, NotearsConfig, SolveResult};
pub use oracle::{best_dag, score_all_dags, OracleReport};
pub use scm::{DataMatrix, WeightedScm};
